//! The forward sampling map: weighted samples `ξ = (ω, x, z)` pushed through
//! optic programs with guided kernels.

use crate::error::{BffgError, Result};
use crate::kernel::{self, Kernel, KernelFamily};
use crate::optics::{self, BackwardPassState, Message, MessageTree, Optic, OpticProgram};
use crate::potential::HPotential;
use crate::space::Point;
use crate::stream::RandomStream;

/// Linear weights switch to log scale beyond these bounds.
pub const WEIGHT_OVERFLOW: f64 = 1e300;
pub const WEIGHT_UNDERFLOW: f64 = 1e-300;

/// Nonnegative importance weight, kept in linear space until it leaves
/// `[1e-300, 1e300]` and in log space from then on.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Weight {
    Linear(f64),
    Log(f64),
}

impl Weight {
    pub const ONE: Weight = Weight::Linear(1.0);

    pub fn log(self) -> f64 {
        match self {
            Weight::Linear(w) => w.ln(),
            Weight::Log(l) => l,
        }
    }

    /// The weight as a plain number (may under- or overflow once on log scale).
    pub fn value(self) -> f64 {
        match self {
            Weight::Linear(w) => w,
            Weight::Log(l) => l.exp(),
        }
    }

    pub fn is_log(self) -> bool {
        matches!(self, Weight::Log(_))
    }

    /// `self · exp(log_factor)`.
    pub fn mul_log(self, log_factor: f64) -> Weight {
        match self {
            Weight::Log(l) => Weight::Log(l + log_factor),
            Weight::Linear(w) if w == 0.0 || log_factor == f64::NEG_INFINITY => Weight::Linear(0.0),
            Weight::Linear(w) => {
                let p = w * log_factor.exp();
                if p.is_finite() && (WEIGHT_UNDERFLOW..=WEIGHT_OVERFLOW).contains(&p) {
                    Weight::Linear(p)
                } else {
                    Weight::Log(w.ln() + log_factor)
                }
            }
        }
    }
}

impl std::ops::Mul for Weight {
    type Output = Weight;

    fn mul(self, other: Weight) -> Weight {
        match other {
            Weight::Linear(0.0) => Weight::Linear(0.0),
            other => self.mul_log(other.log()),
        }
    }
}

/// The randomness `z` carried by a sample: one stream, or one per component
/// after duplication.
#[derive(Clone, Debug, PartialEq)]
pub enum Innovation {
    Single(RandomStream),
    Split(Vec<Innovation>),
}

impl Innovation {
    /// A single stream; split innovations are merged deterministically.
    pub fn into_stream(self) -> RandomStream {
        match self {
            Innovation::Single(s) => s,
            Innovation::Split(parts) => {
                RandomStream::join(&parts.into_iter().map(Innovation::into_stream).collect::<Vec<_>>())
            }
        }
    }

    /// `n` innovations for the components of a parallel program.
    fn into_parts(self, n: usize) -> Vec<Innovation> {
        match self {
            Innovation::Split(parts) if parts.len() == n => parts,
            other => {
                let mut s = other.into_stream();
                (0..n).map(|_| Innovation::Single(s.fork())).collect()
            }
        }
    }
}

/// `ξ = (ω, x, z)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GuidedSample {
    pub weight: Weight,
    pub point: Point,
    pub stream: Innovation,
}

impl GuidedSample {
    pub fn new(point: Point, stream: RandomStream) -> Self {
        Self {
            weight: Weight::ONE,
            point,
            stream: Innovation::Single(stream),
        }
    }
}

/// One step of `F◇`: `ω' = ω·w_κ(m, δ_x)`, `x'` drawn from the guided kernel at
/// `x` with the first split child of `z`, and `z'` the second child.
pub fn forward_sampling_map(o: &Optic, m: &Message, xi: GuidedSample) -> Result<GuidedSample> {
    let step = PrimStep::new(o, m)?;
    step.apply(xi)
}

/// `ω' = ω`, `x' = (x, x)`, `z' = (r₁(z), r₂(z))`.
pub fn forward_sampling_duplicate(xi: GuidedSample) -> GuidedSample {
    let (a, b) = xi.stream.into_stream().split();
    GuidedSample {
        weight: xi.weight,
        point: Point::pair(xi.point.clone(), xi.point),
        stream: Innovation::Split(vec![Innovation::Single(a), Innovation::Single(b)]),
    }
}

/// Samples produced while pushing `ξ` through a program: the output plus the
/// traces of the sub-programs, in program order.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleTrace {
    pub output: GuidedSample,
    pub steps: Vec<SampleTrace>,
}

/// Precomputed guided kernels and weight potentials for repeated sampling.
#[derive(Clone, Debug)]
pub struct SamplingPlan {
    root: PlanNode,
}

#[derive(Clone, Debug)]
#[allow(clippy::large_enum_variant)]
enum PlanNode {
    Prim(PrimStep),
    Duplicate,
    Seq(Vec<PlanNode>),
    Par(Vec<PlanNode>),
    Id,
}

#[derive(Clone, Debug)]
struct PrimStep {
    guided: Kernel,
    /// `κg`; zero at `x` means the guided row at `x` cannot be normalized.
    kg: HPotential,
    /// `κ̃g`, present only when it differs from `κg`.
    denominator: Option<HPotential>,
}

impl PrimStep {
    fn new(o: &Optic, m: &Message) -> Result<Self> {
        let guided = optics::guide(o.forward(), m.numerator(), false)?;
        let kg = if m.numerator().is_one() {
            HPotential::One
        } else {
            kernel::pullback(o.forward(), m.numerator())?
        };
        let denominator = if o.is_exact() {
            None
        } else {
            Some(m.denominator().clone())
        };
        Ok(Self {
            guided,
            kg,
            denominator,
        })
    }

    fn apply(&self, xi: GuidedSample) -> Result<GuidedSample> {
        let lk = self.kg.log_evaluate(&xi.point)?;
        if lk == f64::NEG_INFINITY {
            return Err(BffgError::InconsistentRow(xi.point.to_string()));
        }
        let log_w = match &self.denominator {
            None => 0.0,
            Some(d) => {
                let ld = d.log_evaluate(&xi.point)?;
                if ld == f64::NEG_INFINITY {
                    return Err(BffgError::ZeroDenominator(format!(
                        "message denominator vanishes at {}",
                        xi.point
                    )));
                }
                lk - ld
            }
        };
        let (mut r1, r2) = xi.stream.into_stream().split();
        let point = kernel::sample_kernel(&self.guided, &xi.point, &mut r1)?;
        Ok(GuidedSample {
            weight: if log_w == 0.0 {
                xi.weight
            } else {
                xi.weight.mul_log(log_w)
            },
            point,
            stream: Innovation::Single(r2),
        })
    }
}

impl SamplingPlan {
    pub fn new(p: &OpticProgram, s: &BackwardPassState) -> Result<Self> {
        Ok(Self {
            root: plan_node(p, &s.messages)?,
        })
    }

    pub fn run(&self, xi: GuidedSample) -> Result<SampleTrace> {
        run_node(&self.root, xi)
    }
}

fn plan_node(p: &OpticProgram, t: &MessageTree) -> Result<PlanNode> {
    match (p, t) {
        (OpticProgram::Prim(o), MessageTree::Prim(_))
            if o.is_exact() && matches!(o.forward().family(), KernelFamily::Duplicate) =>
        {
            Ok(PlanNode::Duplicate)
        }
        (OpticProgram::Prim(o), MessageTree::Prim(m)) => Ok(PlanNode::Prim(PrimStep::new(o, m)?)),
        (OpticProgram::Id(_), MessageTree::Id) => Ok(PlanNode::Id),
        (OpticProgram::Seq(ps), MessageTree::Seq(ss)) if ps.len() == ss.len() => Ok(PlanNode::Seq(
            ps.iter()
                .zip(ss)
                .map(|(q, s)| plan_node(q, &s.messages))
                .collect::<Result<_>>()?,
        )),
        (OpticProgram::Par(ps), MessageTree::Par(ss)) if ps.len() == ss.len() => Ok(PlanNode::Par(
            ps.iter()
                .zip(ss)
                .map(|(q, s)| plan_node(q, &s.messages))
                .collect::<Result<_>>()?,
        )),
        _ => Err(BffgError::InvalidKernel(
            "message tree does not match the program shape".into(),
        )),
    }
}

fn run_node(node: &PlanNode, xi: GuidedSample) -> Result<SampleTrace> {
    match node {
        PlanNode::Prim(step) => Ok(SampleTrace {
            output: step.apply(xi)?,
            steps: Vec::new(),
        }),
        PlanNode::Duplicate => Ok(SampleTrace {
            output: forward_sampling_duplicate(xi),
            steps: Vec::new(),
        }),
        PlanNode::Id => Ok(SampleTrace {
            output: xi,
            steps: Vec::new(),
        }),
        PlanNode::Seq(nodes) => {
            let mut steps = Vec::with_capacity(nodes.len());
            let mut cur = xi;
            for n in nodes {
                let t = run_node(n, cur)?;
                cur = t.output.clone();
                steps.push(t);
            }
            Ok(SampleTrace { output: cur, steps })
        }
        PlanNode::Par(nodes) => {
            let points = match xi.point {
                Point::Tuple(ps) if ps.len() == nodes.len() => ps,
                other => {
                    return Err(BffgError::ShapeMismatch(format!(
                        "{other} at a parallel node with {} components",
                        nodes.len()
                    )))
                }
            };
            let streams = xi.stream.into_parts(nodes.len());
            let mut steps = Vec::with_capacity(nodes.len());
            let mut weight = xi.weight;
            for ((n, p), z) in nodes.iter().zip(points).zip(streams) {
                let t = run_node(
                    n,
                    GuidedSample {
                        weight: Weight::ONE,
                        point: p,
                        stream: z,
                    },
                )?;
                weight = weight * t.output.weight;
                steps.push(t);
            }
            let output = GuidedSample {
                weight,
                point: Point::Tuple(steps.iter().map(|t| t.output.point.clone()).collect()),
                stream: Innovation::Split(steps.iter().map(|t| t.output.stream.clone()).collect()),
            };
            Ok(SampleTrace { output, steps })
        }
    }
}

/// Pushes `ξ` through `p` using the messages in `s`.
pub fn run_forward_sampling(p: &OpticProgram, s: &BackwardPassState, xi: GuidedSample) -> Result<SampleTrace> {
    SamplingPlan::new(p, s)?.run(xi)
}
