//! BFFG optics: a forward kernel κ paired with a backward kernel κ̃.
//!
//! The backward map pulls an h-potential back through κ̃ and records the
//! message `m(x, y) = g(y) / (κ̃g)(x)`; the forward map pushes a measure
//! through κ reweighted by that message. Programs compose optics in sequence
//! and in parallel.

use nalgebra::DVector;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{BffgError, Result};
use crate::kernel::{self, Kernel, KernelFamily};
use crate::measure::FiniteMeasure;
use crate::potential::HPotential;
use crate::space::{Point, Space};
use crate::stream::RandomStream;

/// `O(κ, κ̃)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Optic {
    forward: Kernel,
    backward: Kernel,
}

impl Optic {
    pub fn new(forward: Kernel, backward: Kernel) -> Result<Self> {
        if forward.source() != backward.source() || forward.target() != backward.target() {
            return Err(BffgError::SpaceMismatch(format!(
                "forward kernel {} -> {} but backward kernel {} -> {}",
                forward.source(),
                forward.target(),
                backward.source(),
                backward.target()
            )));
        }
        Ok(Self { forward, backward })
    }

    /// `O(κ, κ)`: backward filtering with the true kernel.
    pub fn exact(k: Kernel) -> Self {
        Self {
            backward: k.clone(),
            forward: k,
        }
    }

    pub fn identity(space: Space) -> Self {
        Self::exact(Kernel::identity(space))
    }

    pub fn duplicate(space: Space) -> Self {
        Self::exact(Kernel::duplicate(space))
    }

    pub fn forward(&self) -> &Kernel {
        &self.forward
    }

    pub fn backward(&self) -> &Kernel {
        &self.backward
    }

    pub fn source(&self) -> &Space {
        self.forward.source()
    }

    pub fn target(&self) -> &Space {
        self.forward.target()
    }

    pub fn is_exact(&self) -> bool {
        self.forward == self.backward
    }
}

/// `m(x, y) = numerator(y) / denominator(x)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Message {
    numerator: HPotential,
    denominator: HPotential,
    source: Space,
    target: Space,
}

impl Message {
    pub fn numerator(&self) -> &HPotential {
        &self.numerator
    }

    pub fn denominator(&self) -> &HPotential {
        &self.denominator
    }

    pub fn source(&self) -> &Space {
        &self.source
    }

    pub fn target(&self) -> &Space {
        &self.target
    }

    /// `m ≡ 1`.
    pub fn is_trivial(&self) -> bool {
        self.numerator.is_one() && self.denominator.is_one()
    }

    pub fn evaluate(&self, x: &Point, y: &Point) -> Result<f64> {
        Ok(self.log_evaluate(x, y)?.exp())
    }

    pub fn log_evaluate(&self, x: &Point, y: &Point) -> Result<f64> {
        self.source.check_point(x)?;
        self.target.check_point(y)?;
        let ld = self.denominator.log_evaluate(x)?;
        if ld == f64::NEG_INFINITY {
            return Err(BffgError::ZeroDenominator(format!(
                "message denominator vanishes at {x}"
            )));
        }
        Ok(self.numerator.log_evaluate(y)? - ld)
    }
}

/// `B(h) = (m, κ̃h)` with `m(x, y) = h(y) / (κ̃h)(x)`.
pub fn backward_map(o: &Optic, h: &HPotential) -> Result<(Message, HPotential)> {
    let pulled = kernel::pullback(&o.backward, h)?;
    let m = Message {
        numerator: h.clone(),
        denominator: pulled.clone(),
        source: o.source().clone(),
        target: o.target().clone(),
    };
    Ok((m, pulled))
}

/// `ν(dy) = ∫ m(x, y) μ(dx) κ(x, dy)`.
///
/// Evaluated as the guided kernel applied to `μ` reweighted by
/// `(κg)(x) / (κ̃g)(x)`.
pub fn forward_map(o: &Optic, m: &Message, mu: &FiniteMeasure) -> Result<FiniteMeasure> {
    let (reweighted, guided) = reweight_and_guide(o, m, mu)?;
    kernel::pushforward(&guided, &reweighted)
}

/// `w_κ(m, μ) = ∫ (κg)/(κ̃g) dμ / μ(X)`; zero for a null measure.
pub fn weight(o: &Optic, m: &Message, mu: &FiniteMeasure) -> Result<f64> {
    let total = mu.total_mass();
    if total == 0.0 {
        return Ok(0.0);
    }
    let (reweighted, _) = reweight_and_guide(o, m, mu)?;
    Ok(reweighted.total_mass() / total)
}

/// `(κg)(x) / (κ̃g)(x)`: the weight picked up by a sample at `x`.
pub fn weight_at(o: &Optic, m: &Message, x: &Point) -> Result<f64> {
    weight(o, m, &FiniteMeasure::dirac(x.clone(), 1.0)?)
}

/// `κ^m(x, dy) ∝ g(y) κ(x, dy)`; errors on a source point whose row cannot be
/// normalized.
pub fn guided_kernel(o: &Optic, m: &Message) -> Result<Kernel> {
    guide(&o.forward, &m.numerator, true)
}

/// Guided kernel of `k` towards `g`. With `strict` unset, rows with zero
/// normalizer keep the row of `k`; such rows only ever carry zero weight.
pub(crate) fn guide(k: &Kernel, g: &HPotential, strict: bool) -> Result<Kernel> {
    if g.is_one() {
        return Ok(k.clone());
    }
    match k.family() {
        KernelFamily::Identity | KernelFamily::Duplicate => return Ok(k.clone()),
        KernelFamily::Discrete(mat) => {
            let gt = g.to_table(k.target())?;
            let mut out = mat.clone();
            for i in 0..out.nrows() {
                let mut row = out.row_mut(i);
                row.component_mul_assign(&gt.transpose());
                let s = row.sum();
                if s > 0.0 {
                    row.scale_mut(1.0 / s);
                } else if strict {
                    return Err(BffgError::InconsistentRow(k.source().point_at(i)?.to_string()));
                } else {
                    row.copy_from(&mat.row(i));
                }
            }
            return Kernel::discrete_on(k.source().clone(), k.target().clone(), out);
        }
        KernelFamily::LinearGaussian(_) => {
            let a = k.affine().expect("linear-Gaussian kernels have an affine form");
            let gg = g.to_gaussian(k.target())?;
            let (b, beta, q) = kernel::affine_guided(&a, &gg)?;
            return Kernel::linear_gaussian_on(k.source().clone(), k.target().clone(), b, beta, q);
        }
        _ => {}
    }
    Err(BffgError::Unsupported(format!(
        "guided kernel of a {} kernel towards a {} potential",
        k.family_name(),
        g.family()
    )))
}

/// The measure `(κg)/(κ̃g) · μ` and the guided kernel.
fn reweight_and_guide(o: &Optic, m: &Message, mu: &FiniteMeasure) -> Result<(FiniteMeasure, Kernel)> {
    if m.is_trivial() {
        return Ok((mu.clone(), o.forward.clone()));
    }
    let space = o.source();
    let mu = flatten_measure(mu, space)?;
    check_support(&mu, &m.denominator, space)?;
    let guided = guide(&o.forward, &m.numerator, false)?;
    let reweighted = if o.is_exact() {
        mu
    } else {
        let num = kernel::pullback(&o.forward, &m.numerator)?;
        let ratio = num.divide(&m.denominator, space)?;
        mu.reweight(&ratio)?
    };
    Ok((reweighted, guided))
}

/// Product measures on a homogeneous product space become one table or one Gaussian.
fn flatten_measure(mu: &FiniteMeasure, space: &Space) -> Result<FiniteMeasure> {
    match mu {
        FiniteMeasure::Product(_) if space.is_finite() => {
            FiniteMeasure::discrete_on(space.clone(), mu.to_table(space)?.as_slice().to_vec())
        }
        FiniteMeasure::Product(_) if space.is_euclidean() => Ok(FiniteMeasure::Gaussian(mu.to_gaussian(space)?)),
        _ => Ok(mu.clone()),
    }
}

/// Errors when `μ` charges a point where the message denominator vanishes.
fn check_support(mu: &FiniteMeasure, den: &HPotential, space: &Space) -> Result<()> {
    match mu {
        FiniteMeasure::Dirac { point, mass } => {
            if *mass > 0.0 && den.log_evaluate(point)? == f64::NEG_INFINITY {
                return Err(BffgError::ZeroDenominator(format!(
                    "message denominator vanishes at {point}"
                )));
            }
        }
        FiniteMeasure::Discrete(_) => {
            let w = mu.to_table(space)?;
            let d = den.to_table(space)?;
            if let Some(i) = (0..w.len()).find(|&i| w[i] > 0.0 && d[i] == 0.0) {
                return Err(BffgError::ZeroDenominator(format!(
                    "message denominator vanishes at {}",
                    space.point_at(i)?
                )));
            }
        }
        _ => {}
    }
    Ok(())
}

/// Optics composed in sequence and in parallel.
#[derive(Clone, Debug, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum OpticProgram {
    Prim(Optic),
    Seq(Vec<OpticProgram>),
    Par(Vec<OpticProgram>),
    /// The identity optic on a space, without a kernel behind it.
    Id(Space),
}

impl OpticProgram {
    pub fn source(&self) -> Space {
        match self {
            OpticProgram::Prim(o) => o.source().clone(),
            OpticProgram::Seq(ps) => ps[0].source(),
            OpticProgram::Par(ps) => Space::Product(ps.iter().map(OpticProgram::source).collect()),
            OpticProgram::Id(s) => s.clone(),
        }
    }

    pub fn target(&self) -> Space {
        match self {
            OpticProgram::Prim(o) => o.target().clone(),
            OpticProgram::Seq(ps) => ps[ps.len() - 1].target(),
            OpticProgram::Par(ps) => Space::Product(ps.iter().map(OpticProgram::target).collect()),
            OpticProgram::Id(s) => s.clone(),
        }
    }

    /// Sequence of programs; adjacent spaces must chain. Nested sequences are flattened.
    pub fn seq(programs: Vec<OpticProgram>) -> Result<Self> {
        if programs.is_empty() {
            return Err(BffgError::InvalidKernel("empty sequence of optics".into()));
        }
        for w in programs.windows(2) {
            let (t, s) = (w[0].target(), w[1].source());
            if t != s {
                return Err(BffgError::SpaceMismatch(format!("{t} then {s}")));
            }
        }
        let mut flat = Vec::with_capacity(programs.len());
        for p in programs {
            match p {
                OpticProgram::Seq(inner) => flat.extend(inner),
                p => flat.push(p),
            }
        }
        if flat.len() == 1 {
            return Ok(flat.pop().unwrap());
        }
        Ok(OpticProgram::Seq(flat))
    }

    /// Parallel composition; needs at least two components.
    pub fn par(programs: Vec<OpticProgram>) -> Result<Self> {
        if programs.len() < 2 {
            return Err(BffgError::InvalidKernel(
                "a parallel node needs at least two components".into(),
            ));
        }
        Ok(OpticProgram::Par(programs))
    }

    /// Number of primitive optics.
    pub fn prim_count(&self) -> usize {
        match self {
            OpticProgram::Prim(_) => 1,
            OpticProgram::Seq(ps) | OpticProgram::Par(ps) => ps.iter().map(OpticProgram::prim_count).sum(),
            OpticProgram::Id(_) => 0,
        }
    }
}

pub fn seq_compose(p1: OpticProgram, p2: OpticProgram) -> Result<OpticProgram> {
    OpticProgram::seq(vec![p1, p2])
}

pub fn par_compose(p1: OpticProgram, p2: OpticProgram) -> OpticProgram {
    OpticProgram::Par(vec![p1, p2])
}

/// Result of a backward pass: the potential at the program's source and the
/// messages, in a tree shaped like the program.
#[derive(Clone, Debug, PartialEq)]
pub struct BackwardPassState {
    pub pulled_back: HPotential,
    pub messages: MessageTree,
}

#[derive(Clone, Debug, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum MessageTree {
    Prim(Message),
    Seq(Vec<BackwardPassState>),
    Par(Vec<BackwardPassState>),
    Id,
}

pub fn run_backward(p: &OpticProgram, h: &HPotential) -> Result<BackwardPassState> {
    match p {
        OpticProgram::Prim(o) => {
            let (m, pulled) = backward_map(o, h)?;
            Ok(BackwardPassState {
                pulled_back: pulled,
                messages: MessageTree::Prim(m),
            })
        }
        OpticProgram::Id(_) => Ok(BackwardPassState {
            pulled_back: h.clone(),
            messages: MessageTree::Id,
        }),
        OpticProgram::Seq(ps) => {
            let mut states = Vec::with_capacity(ps.len());
            let mut cur = h.clone();
            for q in ps.iter().rev() {
                let st = run_backward(q, &cur)?;
                cur = st.pulled_back.clone();
                states.push(st);
            }
            states.reverse();
            Ok(BackwardPassState {
                pulled_back: cur,
                messages: MessageTree::Seq(states),
            })
        }
        OpticProgram::Par(ps) => {
            let parts: Vec<HPotential> = match h {
                HPotential::One => vec![HPotential::One; ps.len()],
                HPotential::Product(hs) if hs.len() == ps.len() => hs.clone(),
                other => {
                    return Err(BffgError::InvalidPotential(format!(
                        "a parallel node with {} components needs a product potential, got {}",
                        ps.len(),
                        other.family()
                    )))
                }
            };
            let states = ps
                .iter()
                .zip(&parts)
                .map(|(q, h)| run_backward(q, h))
                .collect::<Result<Vec<_>>>()?;
            let pulled = if states.iter().all(|s| s.pulled_back.is_one()) {
                HPotential::One
            } else {
                HPotential::Product(states.iter().map(|s| s.pulled_back.clone()).collect())
            };
            Ok(BackwardPassState {
                pulled_back: pulled,
                messages: MessageTree::Par(states),
            })
        }
    }
}

pub fn run_forward_measure(p: &OpticProgram, s: &BackwardPassState, mu: &FiniteMeasure) -> Result<FiniteMeasure> {
    match (p, &s.messages) {
        (OpticProgram::Prim(o), MessageTree::Prim(m)) => forward_map(o, m, mu),
        (OpticProgram::Id(_), MessageTree::Id) => Ok(mu.clone()),
        (OpticProgram::Seq(ps), MessageTree::Seq(ss)) if ps.len() == ss.len() => ps
            .iter()
            .zip(ss)
            .try_fold(mu.clone(), |acc, (q, st)| run_forward_measure(q, st, &acc)),
        (OpticProgram::Par(ps), MessageTree::Par(ss)) if ps.len() == ss.len() => {
            let parts = kernel::split_product_measure(mu, ps.len())?;
            Ok(FiniteMeasure::Product(
                ps.iter()
                    .zip(ss)
                    .zip(&parts)
                    .map(|((q, st), m)| run_forward_measure(q, st, m))
                    .collect::<Result<_>>()?,
            ))
        }
        _ => Err(BffgError::InvalidKernel(
            "message tree does not match the program shape".into(),
        )),
    }
}

/// Outcome of an equivalence check between two constructions.
#[derive(Clone, Debug, PartialEq)]
pub struct EquivalenceReport {
    /// Largest absolute difference between the two output measures.
    pub max_abs_deviation: f64,
    /// Largest relative disagreement between the composed and the monolithic
    /// message at the probe points.
    pub message_error: f64,
    /// Largest relative spread of `m₀₁(x, z)·m₁₂(z, y)` over the probed `z`
    /// (sequential checks only).
    pub message_spread: f64,
    /// Number of probe evaluations that entered the message statistics.
    pub probes: usize,
    /// Largest absolute entry of the monolithic output measure.
    pub output_magnitude: f64,
}

impl EquivalenceReport {
    /// Output deviation relative to `max(1, output_magnitude)`.
    pub fn relative_deviation(&self) -> f64 {
        self.max_abs_deviation / self.output_magnitude.max(1.0)
    }
}

const DEFAULT_PROBE_SEED: u64 = 0x5EED_0F0B_71C5;
const PROBES: usize = 10;

/// Compares `O(κ₀₁κ₁₂, κ̃₀₁κ̃₁₂)` against `O(κ₀₁, κ̃₀₁) ; O(κ₁₂, κ̃₁₂)`.
pub fn check_sequential_equivalence(
    k01: &Kernel,
    kt01: &Kernel,
    k12: &Kernel,
    kt12: &Kernel,
    h: &HPotential,
    mu: &FiniteMeasure,
) -> Result<EquivalenceReport> {
    check_sequential_equivalence_seeded(k01, kt01, k12, kt12, h, mu, DEFAULT_PROBE_SEED)
}

pub fn check_sequential_equivalence_seeded(
    k01: &Kernel,
    kt01: &Kernel,
    k12: &Kernel,
    kt12: &Kernel,
    h: &HPotential,
    mu: &FiniteMeasure,
    probe_seed: u64,
) -> Result<EquivalenceReport> {
    let composed = Optic::new(kernel::compose_kernels(k01, k12)?, kernel::compose_kernels(kt01, kt12)?)?;
    let (m02, _) = backward_map(&composed, h)?;
    let nu1 = forward_map(&composed, &m02, mu)?;

    let o01 = Optic::new(k01.clone(), kt01.clone())?;
    let o12 = Optic::new(k12.clone(), kt12.clone())?;
    let prog = OpticProgram::seq(vec![OpticProgram::Prim(o01), OpticProgram::Prim(o12)])?;
    let state = run_backward(&prog, h)?;
    let nu2 = run_forward_measure(&prog, &state, mu)?;
    let max_abs_deviation = nu1.max_abs_deviation(&nu2, k12.target())?;
    let output_magnitude = nu1.magnitude(k12.target())?;

    let (m01, m12) = match &state.messages {
        MessageTree::Seq(ss) => match (&ss[0].messages, &ss[1].messages) {
            (MessageTree::Prim(a), MessageTree::Prim(b)) => (a, b),
            _ => unreachable!("two primitive optics"),
        },
        _ => unreachable!("sequence of two optics"),
    };

    let mut stream = RandomStream::new(probe_seed);
    let (mut spread, mut error, mut probes) = (0.0f64, 0.0f64, 0usize);
    for _ in 0..PROBES {
        let x = random_point(k01.source(), &mut stream);
        let y = random_point(k12.target(), &mut stream);
        let direct = match m02.log_evaluate(&x, &y) {
            Ok(v) => v,
            Err(BffgError::ZeroDenominator(_)) => continue,
            Err(e) => return Err(e),
        };
        let mut values = Vec::with_capacity(PROBES);
        for _ in 0..PROBES {
            let z = random_point(k01.target(), &mut stream);
            let v = match (m01.log_evaluate(&x, &z), m12.log_evaluate(&z, &y)) {
                (Ok(a), Ok(b)) => a + b,
                (Err(BffgError::ZeroDenominator(_)), _) | (_, Err(BffgError::ZeroDenominator(_))) => continue,
                (Err(e), _) | (_, Err(e)) => return Err(e),
            };
            error = error.max(log_relative_error(v, direct));
            values.push(v);
            probes += 1;
        }
        for a in &values {
            for b in &values {
                spread = spread.max(log_relative_error(*a, *b));
            }
        }
    }
    Ok(EquivalenceReport {
        max_abs_deviation,
        message_error: error,
        message_spread: spread,
        probes,
        output_magnitude,
    })
}

/// Compares `O(κ₁⊗κ₂, κ̃₁⊗κ̃₂)` against `O(κ₁, κ̃₁) ⊗ O(κ₂, κ̃₂)` on `μ₁⊗μ₂`.
#[allow(clippy::too_many_arguments)]
pub fn check_parallel_equivalence(
    k1: &Kernel,
    kt1: &Kernel,
    k2: &Kernel,
    kt2: &Kernel,
    g1: &HPotential,
    g2: &HPotential,
    mu1: &FiniteMeasure,
    mu2: &FiniteMeasure,
) -> Result<EquivalenceReport> {
    check_parallel_equivalence_seeded(k1, kt1, k2, kt2, g1, g2, mu1, mu2, DEFAULT_PROBE_SEED)
}

#[allow(clippy::too_many_arguments)]
pub fn check_parallel_equivalence_seeded(
    k1: &Kernel,
    kt1: &Kernel,
    k2: &Kernel,
    kt2: &Kernel,
    g1: &HPotential,
    g2: &HPotential,
    mu1: &FiniteMeasure,
    mu2: &FiniteMeasure,
    probe_seed: u64,
) -> Result<EquivalenceReport> {
    let h = HPotential::Product(vec![g1.clone(), g2.clone()]);
    let mu = FiniteMeasure::product(vec![mu1.clone(), mu2.clone()])?;

    let mono = Optic::new(kernel::tensor_kernels(k1, k2), kernel::tensor_kernels(kt1, kt2))?;
    let (m, _) = backward_map(&mono, &h)?;
    let nu1 = forward_map(&mono, &m, &mu)?;

    let prog = par_compose(
        OpticProgram::Prim(Optic::new(k1.clone(), kt1.clone())?),
        OpticProgram::Prim(Optic::new(k2.clone(), kt2.clone())?),
    );
    let state = run_backward(&prog, &h)?;
    let nu2 = run_forward_measure(&prog, &state, &mu)?;
    let max_abs_deviation = nu1.max_abs_deviation(&nu2, mono.target())?;
    let output_magnitude = nu1.magnitude(mono.target())?;

    let (ma, mb) = match &state.messages {
        MessageTree::Par(ss) => match (&ss[0].messages, &ss[1].messages) {
            (MessageTree::Prim(a), MessageTree::Prim(b)) => (a, b),
            _ => unreachable!("two primitive optics"),
        },
        _ => unreachable!("parallel pair"),
    };

    let mut stream = RandomStream::new(probe_seed);
    let (mut error, mut probes) = (0.0f64, 0usize);
    for _ in 0..PROBES * PROBES {
        let x = random_point(mono.source(), &mut stream);
        let y = random_point(mono.target(), &mut stream);
        let (xs, ys) = (x.components().unwrap(), y.components().unwrap());
        let whole = m.log_evaluate(&x, &y);
        let parts = ma
            .log_evaluate(&xs[0], &ys[0])
            .and_then(|a| Ok(a + mb.log_evaluate(&xs[1], &ys[1])?));
        match (whole, parts) {
            (Ok(a), Ok(b)) => {
                error = error.max(log_relative_error(a, b));
                probes += 1;
            }
            (Err(BffgError::ZeroDenominator(_)), Err(BffgError::ZeroDenominator(_))) => {}
            (Err(e), _) | (_, Err(e)) => return Err(e),
        }
    }
    Ok(EquivalenceReport {
        max_abs_deviation,
        message_error: error,
        message_spread: 0.0,
        probes,
        output_magnitude,
    })
}

/// `|a/b − 1|` for values given on log scale; 0 when both vanish.
fn log_relative_error(la: f64, lb: f64) -> f64 {
    if la == f64::NEG_INFINITY && lb == f64::NEG_INFINITY {
        return 0.0;
    }
    let d = la - lb;
    if d.is_nan() {
        return f64::INFINITY;
    }
    d.exp_m1().abs().max((-d).exp_m1().abs())
}

/// A probe point: uniform on finite factors, standard normal on Euclidean ones.
pub(crate) fn random_point(space: &Space, stream: &mut RandomStream) -> Point {
    match space {
        Space::Finite(n) => Point::Index(((stream.next_uniform() * *n as f64) as usize).min(n - 1)),
        Space::Euclidean(d) => Point::Real(DVector::from_fn(*d, |_, _| StandardNormal.sample(stream))),
        Space::Product(fs) => Point::Tuple(fs.iter().map(|f| random_point(f, stream)).collect()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn flip() -> Kernel {
        Kernel::discrete(vec![vec![0.9, 0.1], vec![0.1, 0.9]]).unwrap()
    }

    fn uniform() -> Kernel {
        Kernel::discrete(vec![vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap()
    }

    fn table(mu: &FiniteMeasure, n: usize) -> Vec<f64> {
        mu.to_table(&Space::Finite(n)).unwrap().as_slice().to_vec()
    }

    #[test]
    fn backward_map_examples() {
        let (m, pulled) = backward_map(&Optic::exact(flip()), &HPotential::One).unwrap();
        assert!(m.is_trivial() && pulled.is_one());

        let o = Optic::new(flip(), flip()).unwrap();
        let (m, pulled) = backward_map(&o, &HPotential::discrete(vec![1.0, 0.0]).unwrap()).unwrap();
        assert_eq!(table_of(&pulled), vec![0.9, 0.1]);
        let v = m.evaluate(&Point::Index(0), &Point::Index(0)).unwrap();
        assert!((v - 1.0 / 0.9).abs() < 1e-15);
    }

    fn table_of(h: &HPotential) -> Vec<f64> {
        h.to_table(&Space::Finite(2)).unwrap().as_slice().to_vec()
    }

    #[test]
    fn duplication_backward_is_pointwise_product() {
        let o = Optic::duplicate(Space::Finite(3));
        let g1 = HPotential::discrete(vec![0.5, 1.0, 0.25]).unwrap();
        let g2 = HPotential::discrete(vec![2.0, 0.0, 4.0]).unwrap();
        let (_, d) = backward_map(&o, &HPotential::tensor(g1, g2)).unwrap();
        let t = d.to_table(&Space::Finite(3)).unwrap();
        assert_eq!(t.as_slice(), &[1.0, 0.0, 1.0]);
    }

    #[test]
    fn forward_map_examples() {
        let mu = FiniteMeasure::discrete(vec![0.3, 0.7]).unwrap();
        let (m, _) = backward_map(&Optic::exact(flip()), &HPotential::One).unwrap();
        let nu = forward_map(&Optic::exact(flip()), &m, &mu).unwrap();
        assert_eq!(nu, kernel::pushforward(&flip(), &mu).unwrap());

        let g = HPotential::discrete(vec![1.0, 0.0]).unwrap();
        let delta0 = FiniteMeasure::dirac(Point::Index(0), 1.0).unwrap();
        let o = Optic::exact(uniform());
        let (m, _) = backward_map(&o, &g).unwrap();
        assert_eq!(table(&forward_map(&o, &m, &delta0).unwrap(), 2), vec![1.0, 0.0]);

        let o = Optic::new(flip(), uniform()).unwrap();
        let (m, _) = backward_map(&o, &g).unwrap();
        let nu = forward_map(&o, &m, &delta0).unwrap();
        assert!((nu.total_mass() - 1.8).abs() < 1e-15);
        assert!((weight(&o, &m, &delta0).unwrap() - 1.8).abs() < 1e-15);
    }

    #[test]
    fn zero_denominator_on_support_is_an_error() {
        let k = Kernel::discrete(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let o = Optic::exact(k);
        let (m, _) = backward_map(&o, &HPotential::discrete(vec![1.0, 0.0]).unwrap()).unwrap();
        let mu = FiniteMeasure::discrete(vec![0.5, 0.5]).unwrap();
        assert!(matches!(forward_map(&o, &m, &mu), Err(BffgError::ZeroDenominator(_))));
        let ok = FiniteMeasure::discrete(vec![1.0, 0.0]).unwrap();
        assert_eq!(table(&forward_map(&o, &m, &ok).unwrap(), 2), vec![1.0, 0.0]);
        assert!(matches!(guided_kernel(&o, &m), Err(BffgError::InconsistentRow(_))));
    }

    #[test]
    fn guided_kernel_examples() {
        let (m, _) = backward_map(&Optic::exact(flip()), &HPotential::One).unwrap();
        assert_eq!(guided_kernel(&Optic::exact(flip()), &m).unwrap(), flip());

        let o = Optic::exact(uniform());
        let (m, _) = backward_map(&o, &HPotential::discrete(vec![1.0, 0.0]).unwrap()).unwrap();
        let gk = guided_kernel(&o, &m).unwrap();
        assert_eq!(
            gk.matrix().unwrap(),
            &DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 0.0])
        );

        let k = Kernel::linear_gaussian_1d(1.0, 0.0, 1.0).unwrap();
        let o = Optic::exact(k);
        let g = HPotential::gaussian(0.0, vec![0.0], DMatrix::from_element(1, 1, 1.0)).unwrap();
        let (m, _) = backward_map(&o, &g).unwrap();
        let gk = guided_kernel(&o, &m).unwrap();
        let lg = gk.as_linear_gaussian().unwrap();
        assert!((lg.b()[(0, 0)] - 0.5).abs() < 1e-15);
        assert!(lg.beta()[0].abs() < 1e-15);
        assert!((lg.q()[(0, 0)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn exact_forward_preserves_probability() {
        let k = Kernel::discrete(vec![vec![0.2, 0.3, 0.5], vec![0.6, 0.4, 0.0], vec![0.1, 0.1, 0.8]]).unwrap();
        let o = Optic::exact(k);
        let (m, _) = backward_map(&o, &HPotential::discrete(vec![0.1, 2.0, 0.7]).unwrap()).unwrap();
        let nu = forward_map(&o, &m, &FiniteMeasure::discrete(vec![0.2, 0.3, 0.5]).unwrap()).unwrap();
        assert!((nu.total_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identity_programs() {
        let s = Space::Finite(2);
        let prog = OpticProgram::seq(vec![
            OpticProgram::Prim(Optic::identity(s.clone())),
            OpticProgram::Prim(Optic::identity(s.clone())),
            OpticProgram::Id(s.clone()),
        ])
        .unwrap();
        let h = HPotential::discrete(vec![0.25, 1.0]).unwrap();
        let st = run_backward(&prog, &h).unwrap();
        assert_eq!(st.pulled_back, h);
        let mu = FiniteMeasure::discrete(vec![0.4, 0.6]).unwrap();
        let nu = run_forward_measure(&prog, &st, &mu).unwrap();
        assert_eq!(table(&nu, 2), vec![0.4, 0.6]);
    }

    #[test]
    fn two_step_chain_matches_chapman_kolmogorov() {
        let k2 = Kernel::discrete(vec![vec![0.3, 0.7], vec![0.6, 0.4]]).unwrap();
        let prog = seq_compose(
            OpticProgram::Prim(Optic::exact(flip())),
            OpticProgram::Prim(Optic::exact(k2.clone())),
        )
        .unwrap();
        let h = HPotential::discrete(vec![0.2, 1.0]).unwrap();
        let st = run_backward(&prog, &h).unwrap();
        let direct = kernel::pullback(&kernel::compose_kernels(&flip(), &k2).unwrap(), &h).unwrap();
        let a = st.pulled_back.to_table(&Space::Finite(2)).unwrap();
        let b = direct.to_table(&Space::Finite(2)).unwrap();
        assert!((a - b).amax() < 1e-15);
    }

    #[test]
    fn sequential_equivalence_discrete_and_gaussian() {
        let h = HPotential::discrete(vec![0.3, 1.0]).unwrap();
        let mu = FiniteMeasure::discrete(vec![0.5, 0.5]).unwrap();
        let r = check_sequential_equivalence(&flip(), &uniform(), &uniform(), &flip(), &h, &mu).unwrap();
        assert!(r.max_abs_deviation <= 1e-12, "{r:?}");
        assert!(r.message_error <= 1e-10 && r.message_spread <= 1e-10, "{r:?}");
        assert!(r.probes > 0);

        let a = Kernel::linear_gaussian_1d(0.9, 0.1, 0.5).unwrap();
        let at = Kernel::linear_gaussian_1d(1.0, 0.0, 0.7).unwrap();
        let b = Kernel::linear_gaussian_1d(1.1, -0.2, 0.3).unwrap();
        let bt = Kernel::linear_gaussian_1d(1.0, 0.0, 0.4).unwrap();
        let g = HPotential::gaussian(-0.3, vec![0.4], DMatrix::from_element(1, 1, 2.0)).unwrap();
        let mu = FiniteMeasure::gaussian(1.0, vec![0.2], DMatrix::from_element(1, 1, 1.5)).unwrap();
        let r = check_sequential_equivalence(&a, &at, &b, &bt, &g, &mu).unwrap();
        assert!(r.max_abs_deviation <= 1e-10, "{r:?}");
        assert!(r.message_error <= 1e-10 && r.message_spread <= 1e-10, "{r:?}");
    }

    #[test]
    fn parallel_equivalence_discrete_and_gaussian() {
        let g1 = HPotential::discrete(vec![0.3, 1.0]).unwrap();
        let g2 = HPotential::discrete(vec![1.0, 0.5]).unwrap();
        let mu1 = FiniteMeasure::discrete(vec![0.5, 0.5]).unwrap();
        let mu2 = FiniteMeasure::dirac(Point::Index(1), 1.0).unwrap();
        let r = check_parallel_equivalence(&flip(), &uniform(), &uniform(), &flip(), &g1, &g2, &mu1, &mu2).unwrap();
        assert!(r.max_abs_deviation <= 1e-12 && r.message_error <= 1e-12, "{r:?}");

        let a = Kernel::linear_gaussian_1d(0.9, 0.1, 0.5).unwrap();
        let at = Kernel::linear_gaussian_1d(1.0, 0.0, 0.7).unwrap();
        let g1 = HPotential::gaussian(0.0, vec![0.4], DMatrix::from_element(1, 1, 2.0)).unwrap();
        let g2 = HPotential::gaussian(0.1, vec![-1.0], DMatrix::from_element(1, 1, 0.5)).unwrap();
        let mu1 = FiniteMeasure::gaussian(1.0, vec![0.2], DMatrix::from_element(1, 1, 1.5)).unwrap();
        let mu2 = FiniteMeasure::dirac(Point::real(&[0.3]), 1.0).unwrap();
        let r = check_parallel_equivalence(&a, &at, &at, &a, &g1, &g2, &mu1, &mu2).unwrap();
        assert!(r.max_abs_deviation <= 1e-10 && r.message_error <= 1e-12, "{r:?}");
    }

    #[test]
    fn par_needs_product_inputs() {
        let prog = par_compose(
            OpticProgram::Prim(Optic::exact(flip())),
            OpticProgram::Prim(Optic::exact(flip())),
        );
        assert!(run_backward(&prog, &HPotential::discrete(vec![1.0, 1.0]).unwrap()).is_err());
        let st = run_backward(&prog, &HPotential::One).unwrap();
        let s = Space::pair(Space::Finite(2), Space::Finite(2));
        let joint = FiniteMeasure::discrete_on(s, vec![0.5, 0.0, 0.0, 0.5]).unwrap();
        assert!(matches!(
            run_forward_measure(&prog, &st, &joint),
            Err(BffgError::NonProductMeasure)
        ));
        let dirac = FiniteMeasure::dirac(Point::pair(Point::Index(0), Point::Index(1)), 1.0).unwrap();
        assert!(run_forward_measure(&prog, &st, &dirac).is_ok());
    }
}
