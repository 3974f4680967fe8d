//! Directed-tree models, their compilation to optic programs, and the
//! end-to-end smoothing drivers.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;

use crate::error::{BffgError, Result};
use crate::kernel::{self, Kernel, ObservationModel};
use crate::measure::FiniteMeasure;
use crate::optics::{self, BackwardPassState, MessageTree, Optic, OpticProgram};
use crate::potential::HPotential;
use crate::sampling::{GuidedSample, SampleTrace, SamplingPlan, Weight};
use crate::space::{Point, Space};
use crate::stream::RandomStream;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeRole {
    Root,
    Latent,
    /// An observed leaf; its incoming edge is the observation kernel.
    Leaf,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Node {
    pub id: String,
    pub space: Space,
    pub role: NodeRole,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Edge {
    pub from: String,
    pub to: String,
    pub forward: Kernel,
    /// The backward kernel κ̃; `None` means κ̃ = κ.
    pub backward: Option<Kernel>,
}

impl Edge {
    pub fn backward_kernel(&self) -> &Kernel {
        self.backward.as_ref().unwrap_or(&self.forward)
    }

    pub fn label(&self) -> String {
        format!("edge {} -> {}", self.from, self.to)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TreeModel {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    root_value: Point,
    observations: BTreeMap<String, Point>,
    index: BTreeMap<String, usize>,
    children: Vec<Vec<usize>>,
}

impl TreeModel {
    pub fn new(
        nodes: Vec<Node>,
        edges: Vec<Edge>,
        root_value: Point,
        observations: Vec<(String, Point)>,
    ) -> Result<Self> {
        let invalid = |msg: String| Err(BffgError::InvalidTree(msg));
        let mut index = BTreeMap::new();
        for (i, n) in nodes.iter().enumerate() {
            n.space.validate().map_err(|e| e.at(format!("node {}", n.id)))?;
            if index.insert(n.id.clone(), i).is_some() {
                return invalid(format!("duplicate node id {}", n.id));
            }
        }
        let roots: Vec<&Node> = nodes.iter().filter(|n| n.role == NodeRole::Root).collect();
        if roots.len() != 1 {
            return invalid(format!("expected exactly one root, found {}", roots.len()));
        }
        let root = index[&roots[0].id];

        let mut parent: Vec<Option<usize>> = vec![None; nodes.len()];
        let mut children = vec![Vec::new(); nodes.len()];
        for (e_idx, e) in edges.iter().enumerate() {
            let (Some(&from), Some(&to)) = (index.get(&e.from), index.get(&e.to)) else {
                return invalid(format!("{} refers to an unknown node", e.label()));
            };
            if to == root {
                return invalid(format!("{} points into the root", e.label()));
            }
            if parent[to].replace(from).is_some() {
                return invalid(format!("node {} has more than one parent", e.to));
            }
            if nodes[from].role == NodeRole::Leaf {
                return invalid(format!("leaf {} has a child", e.from));
            }
            for (k, which) in [(&e.forward, "forward"), (e.backward_kernel(), "backward")] {
                if k.source() != &nodes[from].space || k.target() != &nodes[to].space {
                    return invalid(format!(
                        "{}: {which} kernel maps {} -> {}, nodes are {} -> {}",
                        e.label(),
                        k.source(),
                        k.target(),
                        nodes[from].space,
                        nodes[to].space
                    ));
                }
            }
            if nodes[to].role == NodeRole::Leaf && e.backward.as_ref().is_some_and(|b| *b != e.forward) {
                return invalid(format!(
                    "{}: observation edges must use the same backward kernel",
                    e.label()
                ));
            }
            children[from].push(e_idx);
        }
        for (i, n) in nodes.iter().enumerate() {
            if i != root && parent[i].is_none() {
                return invalid(format!("node {} has no parent", n.id));
            }
            if n.role != NodeRole::Leaf && children[i].is_empty() {
                return invalid(format!("{} node {} has no children", role_name(n.role), n.id));
            }
        }
        // every node reachable from the root means the parent links form a tree
        let mut seen = BTreeSet::from([root]);
        let mut stack = vec![root];
        while let Some(u) = stack.pop() {
            for &e in &children[u] {
                let c = index[&edges[e].to];
                if seen.insert(c) {
                    stack.push(c);
                }
            }
        }
        if seen.len() != nodes.len() {
            return invalid("the graph is not connected to the root or has a cycle".into());
        }

        nodes[root]
            .space
            .check_point(&root_value)
            .map_err(|e| e.at(format!("root value of node {}", nodes[root].id)))?;
        let mut obs = BTreeMap::new();
        for (leaf, value) in observations {
            let Some(&i) = index.get(&leaf) else {
                return invalid(format!("observation for unknown node {leaf}"));
            };
            if nodes[i].role != NodeRole::Leaf {
                return invalid(format!("observation for non-leaf node {leaf}"));
            }
            nodes[i]
                .space
                .check_point(&value)
                .map_err(|e| e.at(format!("observation at {leaf}")))?;
            if obs.insert(leaf.clone(), value).is_some() {
                return invalid(format!("two observations for leaf {leaf}"));
            }
        }
        if let Some(n) = nodes
            .iter()
            .find(|n| n.role == NodeRole::Leaf && !obs.contains_key(&n.id))
        {
            return invalid(format!("leaf {} has no observation", n.id));
        }
        Ok(Self {
            nodes,
            edges,
            root_value,
            observations: obs,
            index,
            children,
        })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn root_value(&self) -> &Point {
        &self.root_value
    }

    pub fn observations(&self) -> &BTreeMap<String, Point> {
        &self.observations
    }

    pub fn node(&self, id: &str) -> Option<&Node> {
        self.index.get(id).map(|&i| &self.nodes[i])
    }

    pub fn root(&self) -> &Node {
        self.nodes.iter().find(|n| n.role == NodeRole::Root).expect("validated")
    }

    /// Indices of the edges leaving `id`, in model order.
    pub fn child_edges(&self, id: &str) -> &[usize] {
        self.index.get(id).map(|&i| self.children[i].as_slice()).unwrap_or(&[])
    }

    /// Latent node ids in model order.
    pub fn latent_ids(&self) -> Vec<&str> {
        self.nodes
            .iter()
            .filter(|n| n.role == NodeRole::Latent)
            .map(|n| n.id.as_str())
            .collect()
    }

    /// Whether some edge has a backward kernel different from its forward kernel.
    pub fn has_approximate_edges(&self) -> bool {
        self.edges
            .iter()
            .any(|e| e.backward.as_ref().is_some_and(|b| *b != e.forward))
    }

    /// The same model with κ̃ = κ on every edge.
    pub fn with_exact_backward(&self) -> TreeModel {
        let mut t = self.clone();
        for e in &mut t.edges {
            e.backward = None;
        }
        t
    }
}

fn role_name(r: NodeRole) -> &'static str {
    match r {
        NodeRole::Root => "root",
        NodeRole::Latent => "latent",
        NodeRole::Leaf => "leaf",
    }
}

/// What each part of a compiled program stands for.
#[derive(Clone, Debug, PartialEq)]
pub enum ProgramLabel {
    /// The optic of edge `edges[i]`.
    Edge(usize),
    /// The duplication optic at a branch node.
    Duplicate(String),
    /// An observed leaf; its density enters the initial potential.
    Observation(String),
    Seq(Vec<ProgramLabel>),
    Par(Vec<ProgramLabel>),
}

/// An optic program for a tree together with its initial potential.
#[derive(Clone, Debug, PartialEq)]
pub struct CompiledTree {
    pub program: OpticProgram,
    /// Observation densities arranged to match the program's target space.
    pub initial: HPotential,
    pub labels: ProgramLabel,
    pub edge_optics: usize,
    pub duplications: usize,
}

/// Compiles `t` using each edge's backward kernel.
pub fn compile_tree(t: &TreeModel) -> Result<CompiledTree> {
    let mut c = Compiler {
        t,
        edge_optics: 0,
        duplications: 0,
    };
    let (program, initial, labels) = c.node(&t.root().id)?;
    Ok(CompiledTree {
        program,
        initial,
        labels,
        edge_optics: c.edge_optics,
        duplications: c.duplications,
    })
}

struct Compiler<'a> {
    t: &'a TreeModel,
    edge_optics: usize,
    duplications: usize,
}

impl Compiler<'_> {
    fn node(&mut self, id: &str) -> Result<(OpticProgram, HPotential, ProgramLabel)> {
        let space = self.t.node(id).expect("validated").space.clone();
        let branches = self
            .t
            .child_edges(id)
            .iter()
            .map(|&e| self.branch(e))
            .collect::<Result<Vec<_>>>()?;
        self.cascade(&space, id, branches)
    }

    /// `◁ ; (b₁ ⊗ (◁ ; (b₂ ⊗ …)))` for two or more branches.
    fn cascade(
        &mut self,
        space: &Space,
        id: &str,
        mut branches: Vec<(OpticProgram, HPotential, ProgramLabel)>,
    ) -> Result<(OpticProgram, HPotential, ProgramLabel)> {
        if branches.len() == 1 {
            return Ok(branches.pop().unwrap());
        }
        let first = branches.remove(0);
        let rest = self.cascade(space, id, branches)?;
        self.duplications += 1;
        let program = OpticProgram::seq(vec![
            OpticProgram::Prim(Optic::duplicate(space.clone())),
            OpticProgram::par(vec![first.0, rest.0])?,
        ])?;
        let labels = ProgramLabel::Seq(vec![
            ProgramLabel::Duplicate(id.to_string()),
            ProgramLabel::Par(vec![first.2, rest.2]),
        ]);
        Ok((program, HPotential::Product(vec![first.1, rest.1]), labels))
    }

    fn branch(&mut self, e_idx: usize) -> Result<(OpticProgram, HPotential, ProgramLabel)> {
        let e = &self.t.edges[e_idx];
        let child = self.t.node(&e.to).expect("validated");
        if child.role == NodeRole::Leaf {
            let observed = self.t.observations[&child.id].clone();
            let om = ObservationModel::new(e.forward.clone(), observed).map_err(|err| err.at(e.label()))?;
            let g = kernel::observation_potential(&om).map_err(|err| err.at(e.label()))?;
            return Ok((
                OpticProgram::Id(e.forward.source().clone()),
                g,
                ProgramLabel::Observation(child.id.clone()),
            ));
        }
        let optic = Optic::new(e.forward.clone(), e.backward_kernel().clone()).map_err(|err| err.at(e.label()))?;
        self.edge_optics += 1;
        let (sub, g, sub_label) = self.node(&child.id)?;
        let program = OpticProgram::seq(vec![OpticProgram::Prim(optic), sub])?;
        let labels = match sub_label {
            ProgramLabel::Seq(mut inner) => {
                inner.insert(0, ProgramLabel::Edge(e_idx));
                ProgramLabel::Seq(inner)
            }
            other => ProgramLabel::Seq(vec![ProgramLabel::Edge(e_idx), other]),
        };
        Ok((program, g, labels))
    }
}

/// Backward pass whose errors name the edge or node where they happened.
pub fn run_backward_labeled(
    t: &TreeModel,
    p: &OpticProgram,
    labels: &ProgramLabel,
    h: &HPotential,
) -> Result<BackwardPassState> {
    match (p, labels) {
        (OpticProgram::Prim(o), ProgramLabel::Edge(e)) => {
            optics::run_backward(&OpticProgram::Prim(o.clone()), h).map_err(|err| err.at(t.edges[*e].label()))
        }
        (OpticProgram::Prim(o), ProgramLabel::Duplicate(id)) => {
            optics::run_backward(&OpticProgram::Prim(o.clone()), h).map_err(|err| err.at(format!("node {id}")))
        }
        (OpticProgram::Seq(ps), ProgramLabel::Seq(ls)) if ps.len() == ls.len() => {
            let mut states = Vec::with_capacity(ps.len());
            let mut cur = h.clone();
            for (q, l) in ps.iter().zip(ls).rev() {
                let st = run_backward_labeled(t, q, l, &cur)?;
                cur = st.pulled_back.clone();
                states.push(st);
            }
            states.reverse();
            Ok(BackwardPassState {
                pulled_back: cur,
                messages: MessageTree::Seq(states),
            })
        }
        (OpticProgram::Par(ps), ProgramLabel::Par(ls)) if ps.len() == ls.len() => {
            let parts = match h {
                HPotential::Product(hs) if hs.len() == ps.len() => hs.clone(),
                _ => return optics::run_backward(p, h),
            };
            let states = ps
                .par_iter()
                .zip(ls.par_iter())
                .zip(parts.par_iter())
                .map(|((q, l), h)| run_backward_labeled(t, q, l, h))
                .collect::<Result<Vec<_>>>()?;
            Ok(BackwardPassState {
                pulled_back: HPotential::Product(states.iter().map(|s| s.pulled_back.clone()).collect()),
                messages: MessageTree::Par(states),
            })
        }
        _ => optics::run_backward(p, h),
    }
}

/// Per-node smoothing marginals and the observation likelihood.
#[derive(Clone, Debug, PartialEq)]
pub struct ExactSmoothing {
    /// Normalized marginal of every latent node, in model order.
    pub marginals: Vec<(String, FiniteMeasure)>,
    pub evidence: f64,
    pub log_evidence: f64,
}

/// Exact smoothing: backward filtering with closed-form pullbacks, then the
/// forward map from `δ_root`, recording the marginal after every edge.
///
/// Marginals and evidence use the messages of the true kernels; when some
/// edge has a different backward kernel that kernel is still required to
/// support closed-form pullbacks.
pub fn run_bffg_exact(t: &TreeModel) -> Result<ExactSmoothing> {
    if t.has_approximate_edges() {
        let approx = compile_tree(t)?;
        run_backward_labeled(t, &approx.program, &approx.labels, &approx.initial)?;
    }
    let exact = t.with_exact_backward();
    let c = compile_tree(&exact)?;
    let state = run_backward_labeled(&exact, &c.program, &c.labels, &c.initial)?;
    let log_evidence = state
        .pulled_back
        .log_evaluate(t.root_value())
        .map_err(|e| e.at(format!("node {}", t.root().id)))?;
    if log_evidence == f64::NEG_INFINITY {
        return Err(
            BffgError::ZeroDenominator("the observations have zero likelihood".into())
                .at(format!("node {}", t.root().id)),
        );
    }
    let mut recorded = BTreeMap::new();
    let delta = FiniteMeasure::dirac(t.root_value().clone(), 1.0)?;
    forward_marginals(&exact, &c.program, &c.labels, &state, &delta, &mut recorded)?;
    let marginals = t
        .latent_ids()
        .into_iter()
        .map(|id| {
            recorded
                .remove(id)
                .map(|m| (id.to_string(), m))
                .ok_or_else(|| BffgError::InvalidTree(format!("node {id} was not visited")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExactSmoothing {
        marginals,
        evidence: log_evidence.exp(),
        log_evidence,
    })
}

/// Forward pass that splits measures into marginals at parallel nodes.
fn forward_marginals(
    t: &TreeModel,
    p: &OpticProgram,
    labels: &ProgramLabel,
    s: &BackwardPassState,
    mu: &FiniteMeasure,
    out: &mut BTreeMap<String, FiniteMeasure>,
) -> Result<FiniteMeasure> {
    match (p, labels, &s.messages) {
        (OpticProgram::Prim(o), label, MessageTree::Prim(m)) => {
            let loc = match label {
                ProgramLabel::Edge(e) => t.edges[*e].label(),
                ProgramLabel::Duplicate(id) => format!("node {id}"),
                _ => String::from("optic"),
            };
            let nu = optics::forward_map(o, m, mu).map_err(|e| e.at(loc.clone()))?;
            if let ProgramLabel::Edge(e) = label {
                out.insert(t.edges[*e].to.clone(), nu.normalized().map_err(|e| e.at(loc))?);
            }
            Ok(nu)
        }
        (OpticProgram::Id(_), _, MessageTree::Id) => Ok(mu.clone()),
        (OpticProgram::Seq(ps), ProgramLabel::Seq(ls), MessageTree::Seq(ss)) => {
            let mut cur = mu.clone();
            for ((q, l), st) in ps.iter().zip(ls).zip(ss) {
                cur = forward_marginals(t, q, l, st, &cur, out)?;
            }
            Ok(cur)
        }
        (OpticProgram::Par(ps), ProgramLabel::Par(ls), MessageTree::Par(ss)) => {
            let parts = mu.marginals(&p.source())?;
            let outs = ps
                .iter()
                .zip(ls)
                .zip(ss)
                .zip(&parts)
                .map(|(((q, l), st), m)| forward_marginals(t, q, l, st, m, out))
                .collect::<Result<Vec<_>>>()?;
            Ok(FiniteMeasure::Product(outs))
        }
        _ => Err(BffgError::InvalidKernel(
            "message tree does not match the program shape".into(),
        )),
    }
}

/// One weighted sample of all latent nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub weight: Weight,
    /// Sampled value of every latent node, in model order.
    pub points: Vec<(String, Point)>,
}

/// Self-normalized estimate of a node's posterior.
#[derive(Clone, Debug, PartialEq)]
pub enum NodeEstimate {
    /// Posterior probabilities of a finite node with delta-method standard errors.
    Probabilities { p: Vec<f64>, se: Vec<f64> },
    /// Posterior mean of a Euclidean node with delta-method standard errors.
    Mean { mean: Vec<f64>, se: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampledSmoothing {
    pub seed: u64,
    pub trajectories: Vec<Trajectory>,
    pub estimates: Vec<(String, NodeEstimate)>,
    /// Whether some weight left linear scale; weights are then reported as logs.
    pub log_weights: bool,
    pub effective_sample_size: f64,
    /// `(κ̃…g)(x_root) · mean weight`, an unbiased estimate of the evidence.
    pub evidence: f64,
    pub log_evidence: f64,
}

/// Number of worker threads from `BFFG_THREADS`, if set to a positive integer.
pub fn thread_limit() -> Result<Option<usize>> {
    match std::env::var("BFFG_THREADS") {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(BffgError::Format(format!(
                "BFFG_THREADS must be a positive integer, got {v:?}"
            ))),
        },
    }
}

/// Guided forward sampling: `num_replicates` weighted trajectories, replicate
/// `i` driven by the stream for `(seed, i)`.
pub fn run_bffg_sampling(t: &TreeModel, num_replicates: usize, seed: u64) -> Result<SampledSmoothing> {
    if num_replicates == 0 {
        return Err(BffgError::Format("the number of replicates must be positive".into()));
    }
    let c = compile_tree(t)?;
    let state = run_backward_labeled(t, &c.program, &c.labels, &c.initial)?;
    let log_h0 = state
        .pulled_back
        .log_evaluate(t.root_value())
        .map_err(|e| e.at(format!("node {}", t.root().id)))?;
    let plan = SamplingPlan::new(&c.program, &state)?;
    let latent = t.latent_ids();

    let one = |i: usize| -> Result<Trajectory> {
        let xi = GuidedSample::new(t.root_value().clone(), RandomStream::for_replicate(seed, i as u64));
        let trace = plan.run(xi).map_err(|e| e.at(format!("replicate {i}")))?;
        let mut found = BTreeMap::new();
        collect_points(t, &trace, &c.labels, &mut found);
        Ok(Trajectory {
            weight: trace.output.weight,
            points: latent
                .iter()
                .map(|id| (id.to_string(), found.remove(*id).expect("every latent node is sampled")))
                .collect(),
        })
    };
    let run = || (0..num_replicates).into_par_iter().map(one).collect::<Result<Vec<_>>>();
    let trajectories = match thread_limit()? {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| BffgError::Numerical(format!("thread pool: {e}")))?
            .install(run)?,
        None => run()?,
    };

    let log_w: Vec<f64> = trajectories.iter().map(|tr| tr.weight.log()).collect();
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(BffgError::Numerical("all sampled weights are zero".into()));
    }
    let w: Vec<f64> = log_w.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = w.iter().sum();
    let sum_sq: f64 = w.iter().map(|x| x * x).sum();
    let log_mean = max + (sum / num_replicates as f64).ln();

    let estimates = latent
        .iter()
        .enumerate()
        .filter_map(|(k, id)| {
            let space = &t.node(id).expect("validated").space;
            estimate_node(space, &trajectories, k, &w, sum).map(|e| (id.to_string(), e))
        })
        .collect();

    Ok(SampledSmoothing {
        seed,
        log_weights: trajectories.iter().any(|tr| tr.weight.is_log()),
        trajectories,
        estimates,
        effective_sample_size: sum * sum / sum_sq,
        evidence: (log_h0 + log_mean).exp(),
        log_evidence: log_h0 + log_mean,
    })
}

fn collect_points(t: &TreeModel, trace: &SampleTrace, labels: &ProgramLabel, out: &mut BTreeMap<String, Point>) {
    match labels {
        ProgramLabel::Edge(e) => {
            out.insert(t.edges[*e].to.clone(), trace.output.point.clone());
        }
        ProgramLabel::Seq(ls) | ProgramLabel::Par(ls) => {
            for (l, s) in ls.iter().zip(&trace.steps) {
                collect_points(t, s, l, out);
            }
        }
        ProgramLabel::Duplicate(_) | ProgramLabel::Observation(_) => {}
    }
}

/// Self-normalized estimate `Σ wᵢ f(xᵢ) / Σ wᵢ` with standard error
/// `sqrt(Σ wᵢ² (f(xᵢ) − est)²) / Σ wᵢ`.
fn estimate_node(space: &Space, trajs: &[Trajectory], k: usize, w: &[f64], sum: f64) -> Option<NodeEstimate> {
    let values: Vec<Vec<f64>> = if let Some(n) = space.cardinality() {
        trajs
            .iter()
            .map(|tr| {
                let mut v = vec![0.0; n];
                v[space.flat_index(&tr.points[k].1).ok()?] = 1.0;
                Some(v)
            })
            .collect::<Option<_>>()?
    } else if space.is_euclidean() {
        trajs
            .iter()
            .map(|tr| space.flat_vector(&tr.points[k].1).ok().map(|v| v.as_slice().to_vec()))
            .collect::<Option<_>>()?
    } else {
        return None;
    };
    let dim = values[0].len();
    let mut est = vec![0.0; dim];
    for (v, wi) in values.iter().zip(w) {
        for j in 0..dim {
            est[j] += wi * v[j];
        }
    }
    est.iter_mut().for_each(|e| *e /= sum);
    let mut var = vec![0.0; dim];
    for (v, wi) in values.iter().zip(w) {
        for j in 0..dim {
            var[j] += (wi * (v[j] - est[j])).powi(2);
        }
    }
    let se = var.iter().map(|v| v.sqrt() / sum).collect();
    Some(if space.is_finite() {
        NodeEstimate::Probabilities { p: est, se }
    } else {
        NodeEstimate::Mean { mean: est, se }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn node(id: &str, n: usize, role: NodeRole) -> Node {
        Node {
            id: id.into(),
            space: Space::Finite(n),
            role,
        }
    }

    fn edge(from: &str, to: &str, k: Kernel) -> Edge {
        Edge {
            from: from.into(),
            to: to.into(),
            forward: k,
            backward: None,
        }
    }

    fn flip() -> Kernel {
        Kernel::discrete(vec![vec![0.9, 0.1], vec![0.1, 0.9]]).unwrap()
    }

    fn chain() -> TreeModel {
        TreeModel::new(
            vec![
                node("r", 2, NodeRole::Root),
                node("a", 2, NodeRole::Latent),
                node("y", 2, NodeRole::Leaf),
            ],
            vec![edge("r", "a", flip()), edge("a", "y", flip())],
            Point::Index(0),
            vec![("y".into(), Point::Index(1))],
        )
        .unwrap()
    }

    #[test]
    fn validation() {
        let base = || {
            (
                vec![
                    node("r", 2, NodeRole::Root),
                    node("a", 2, NodeRole::Latent),
                    node("y", 2, NodeRole::Leaf),
                ],
                vec![edge("r", "a", flip()), edge("a", "y", flip())],
            )
        };
        let obs = || vec![("y".to_string(), Point::Index(1))];
        let (n, e) = base();
        assert!(TreeModel::new(n, e, Point::Index(0), vec![]).is_err());
        let (n, mut e) = base();
        e.push(edge("r", "y", flip()));
        assert!(TreeModel::new(n, e, Point::Index(0), obs()).is_err());
        let (n, e) = base();
        assert!(TreeModel::new(n, e, Point::Index(2), obs()).is_err());
        let (mut n, e) = base();
        n[1].role = NodeRole::Leaf;
        assert!(TreeModel::new(n, e, Point::Index(0), obs()).is_err());
        let (n, mut e) = base();
        e[1].backward = Some(Kernel::discrete(vec![vec![0.5, 0.5]; 2]).unwrap());
        assert!(TreeModel::new(n, e, Point::Index(0), obs()).is_err());
        let (n, mut e) = base();
        e[0].forward = Kernel::discrete(vec![vec![1.0 / 3.0; 3]; 2]).unwrap();
        assert!(TreeModel::new(n, e, Point::Index(0), obs()).is_err());
    }

    #[test]
    fn single_edge_compiles_to_one_optic() {
        let t = chain();
        let c = compile_tree(&t).unwrap();
        assert_eq!((c.edge_optics, c.duplications), (1, 0));
        match &c.program {
            OpticProgram::Seq(ps) => {
                assert!(matches!(ps[0], OpticProgram::Prim(_)));
                assert!(matches!(ps[1], OpticProgram::Id(_)));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn exact_chain_by_hand() {
        let r = run_bffg_exact(&chain()).unwrap();
        // p(a) = [0.9, 0.1], p(y=1 | a) = [0.1, 0.9]
        let ev = 0.9 * 0.1 + 0.1 * 0.9;
        assert!((r.evidence - ev).abs() < 1e-15);
        let m = r.marginals[0].1.to_table(&Space::Finite(2)).unwrap();
        assert!((m[0] - 0.09 / ev).abs() < 1e-15 && (m[1] - 0.09 / ev).abs() < 1e-15);
    }

    #[test]
    fn branching_node_with_three_children() {
        let t = TreeModel::new(
            vec![
                node("r", 2, NodeRole::Root),
                node("a", 2, NodeRole::Latent),
                node("y1", 2, NodeRole::Leaf),
                node("y2", 2, NodeRole::Leaf),
                node("y3", 2, NodeRole::Leaf),
            ],
            vec![
                edge("r", "a", flip()),
                edge("a", "y1", flip()),
                edge("a", "y2", flip()),
                edge("a", "y3", flip()),
            ],
            Point::Index(0),
            vec![
                ("y1".into(), Point::Index(1)),
                ("y2".into(), Point::Index(1)),
                ("y3".into(), Point::Index(0)),
            ],
        )
        .unwrap();
        let c = compile_tree(&t).unwrap();
        assert_eq!((c.edge_optics, c.duplications), (1, 2));
        let r = run_bffg_exact(&t).unwrap();
        let like = |a: usize| {
            let p = if a == 1 { [0.1, 0.9] } else { [0.9, 0.1] };
            p[1] * p[1] * p[0]
        };
        let ev = 0.9 * like(0) + 0.1 * like(1);
        assert!((r.evidence - ev).abs() < 1e-15);
        let m = r.marginals[0].1.to_table(&Space::Finite(2)).unwrap();
        assert!((m[1] - 0.1 * like(1) / ev).abs() < 1e-14);
    }

    #[test]
    fn sampling_with_exact_backward_has_unit_weights() {
        let s = run_bffg_sampling(&chain(), 200, 5).unwrap();
        assert!(s.trajectories.iter().all(|t| t.weight == Weight::ONE));
        assert!((s.evidence - 0.18).abs() < 1e-12);
        let again = run_bffg_sampling(&chain(), 200, 5).unwrap();
        assert_eq!(s, again);
    }
}
