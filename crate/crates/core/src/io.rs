//! JSON model and result files.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{BffgError, Result};
use crate::kernel::{Kernel, KernelFamily};
use crate::linalg;
use crate::measure::FiniteMeasure;
use crate::sampling::Weight;
use crate::space::{Point, Space};
use crate::tree::{Edge, ExactSmoothing, Node, NodeEstimate, NodeRole, SampledSmoothing, TreeModel};

pub const MODEL_VERSION: &str = "bffg-model-v1";
pub const RESULT_FORMAT: &str = "bffg-result-v1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub version: String,
    pub nodes: Vec<NodeJson>,
    pub edges: Vec<EdgeJson>,
    pub root_value: Value,
    #[serde(default)]
    pub observations: Vec<ObservationJson>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeJson {
    pub id: String,
    pub space: SpaceJson,
    pub role: RoleJson,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum SpaceJson {
    Finite(usize),
    Euclidean(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RoleJson {
    Root,
    Latent,
    Leaf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeJson {
    pub from: String,
    pub to: String,
    pub kernel: KernelJson,
    #[serde(default)]
    pub backward: BackwardJson,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelJson {
    Discrete {
        matrix: Vec<Vec<f64>>,
    },
    LinearGaussian {
        b: Vec<Vec<f64>>,
        beta: Vec<f64>,
        q: Vec<Vec<f64>>,
    },
    Identity,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BackwardJson {
    #[default]
    #[serde(skip_deserializing)]
    Default,
    Same(SameKeyword),
    Kernel(KernelJson),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SameKeyword {
    Same,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationJson {
    pub leaf: String,
    pub value: Value,
}

impl From<SpaceJson> for Space {
    fn from(s: SpaceJson) -> Space {
        match s {
            SpaceJson::Finite(n) => Space::Finite(n),
            SpaceJson::Euclidean(d) => Space::Euclidean(d),
        }
    }
}

fn space_json(s: &Space) -> Result<SpaceJson> {
    match s {
        Space::Finite(n) => Ok(SpaceJson::Finite(*n)),
        Space::Euclidean(d) => Ok(SpaceJson::Euclidean(*d)),
        Space::Product(_) => Err(BffgError::Format(format!(
            "product space {s} has no file representation"
        ))),
    }
}

/// A point of a finite space is an integer, a point of `R^d` an array of `d` numbers.
pub fn point_from_json(v: &Value, space: &Space) -> Result<Point> {
    let p = match space {
        Space::Finite(_) => v
            .as_u64()
            .map(|i| Point::Index(i as usize))
            .ok_or_else(|| BffgError::Format(format!("expected a state index, got {v}")))?,
        Space::Euclidean(_) => {
            let coords = v
                .as_array()
                .and_then(|a| a.iter().map(Value::as_f64).collect::<Option<Vec<f64>>>())
                .ok_or_else(|| BffgError::Format(format!("expected an array of numbers, got {v}")))?;
            Point::real(&coords)
        }
        Space::Product(_) => {
            return Err(BffgError::Format(format!(
                "product space {space} has no file representation"
            )))
        }
    };
    space.check_point(&p).map_err(|e| BffgError::Format(e.to_string()))?;
    Ok(p)
}

pub fn point_to_json(p: &Point) -> Value {
    match p {
        Point::Index(i) => Value::from(*i),
        Point::Real(v) => Value::from(v.as_slice().to_vec()),
        Point::Tuple(ps) => Value::from(ps.iter().map(point_to_json).collect::<Vec<_>>()),
    }
}

fn kernel_from_json(k: &KernelJson, source: &Space, target: &Space) -> Result<Kernel> {
    match k {
        KernelJson::Discrete { matrix } => {
            let m = linalg::from_rows(matrix).map_err(|e| BffgError::Format(e.to_string()))?;
            Kernel::discrete_on(source.clone(), target.clone(), m)
        }
        KernelJson::LinearGaussian { b, beta, q } => Kernel::linear_gaussian_on(
            source.clone(),
            target.clone(),
            linalg::from_rows(b).map_err(|e| BffgError::Format(e.to_string()))?,
            nalgebra::DVector::from_column_slice(beta),
            linalg::from_rows(q).map_err(|e| BffgError::Format(e.to_string()))?,
        ),
        KernelJson::Identity => {
            if source != target {
                return Err(BffgError::InvalidKernel(format!(
                    "identity kernel from {source} to {target}"
                )));
            }
            Ok(Kernel::identity(source.clone()))
        }
    }
}

fn kernel_to_json(k: &Kernel) -> Result<KernelJson> {
    match k.family() {
        KernelFamily::Discrete(m) => Ok(KernelJson::Discrete {
            matrix: linalg::to_rows(m),
        }),
        KernelFamily::LinearGaussian(lg) => Ok(KernelJson::LinearGaussian {
            b: linalg::to_rows(lg.b()),
            beta: lg.beta().as_slice().to_vec(),
            q: linalg::to_rows(lg.q()),
        }),
        KernelFamily::Identity => Ok(KernelJson::Identity),
        _ => Err(BffgError::Format(format!(
            "{} kernels have no file representation",
            k.family_name()
        ))),
    }
}

impl ModelFile {
    pub fn parse(text: &str) -> Result<Self> {
        let m: ModelFile = serde_json::from_str(text).map_err(|e| BffgError::Format(e.to_string()))?;
        if m.version != MODEL_VERSION {
            return Err(BffgError::Format(format!(
                "unsupported model version {:?}, expected {MODEL_VERSION:?}",
                m.version
            )));
        }
        Ok(m)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BffgError::Format(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_tree(&self) -> Result<TreeModel> {
        let nodes: Vec<Node> = self
            .nodes
            .iter()
            .map(|n| Node {
                id: n.id.clone(),
                space: n.space.into(),
                role: match n.role {
                    RoleJson::Root => NodeRole::Root,
                    RoleJson::Latent => NodeRole::Latent,
                    RoleJson::Leaf => NodeRole::Leaf,
                },
            })
            .collect();
        let space_of = |id: &str| {
            nodes
                .iter()
                .find(|n| n.id == id)
                .map(|n| n.space.clone())
                .ok_or_else(|| BffgError::InvalidTree(format!("unknown node {id}")))
        };
        let mut edges = Vec::with_capacity(self.edges.len());
        for e in &self.edges {
            let label = format!("edge {} -> {}", e.from, e.to);
            let (s, t) = (space_of(&e.from)?, space_of(&e.to)?);
            let forward = kernel_from_json(&e.kernel, &s, &t).map_err(|err| err.at(label.clone()))?;
            let backward = match &e.backward {
                BackwardJson::Default | BackwardJson::Same(_) => None,
                BackwardJson::Kernel(k) => Some(kernel_from_json(k, &s, &t).map_err(|err| err.at(label.clone()))?),
            };
            edges.push(Edge {
                from: e.from.clone(),
                to: e.to.clone(),
                forward,
                backward,
            });
        }
        let root = nodes
            .iter()
            .find(|n| n.role == NodeRole::Root)
            .ok_or_else(|| BffgError::InvalidTree("no root node".into()))?;
        let root_value = point_from_json(&self.root_value, &root.space).map_err(|e| e.at("root_value"))?;
        let observations = self
            .observations
            .iter()
            .map(|o| {
                let space = space_of(&o.leaf)?;
                Ok((
                    o.leaf.clone(),
                    point_from_json(&o.value, &space).map_err(|e| e.at(format!("observation at {}", o.leaf)))?,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        TreeModel::new(nodes, edges, root_value, observations)
    }

    pub fn from_tree(t: &TreeModel) -> Result<Self> {
        Ok(ModelFile {
            version: MODEL_VERSION.into(),
            nodes: t
                .nodes()
                .iter()
                .map(|n| {
                    Ok(NodeJson {
                        id: n.id.clone(),
                        space: space_json(&n.space)?,
                        role: match n.role {
                            NodeRole::Root => RoleJson::Root,
                            NodeRole::Latent => RoleJson::Latent,
                            NodeRole::Leaf => RoleJson::Leaf,
                        },
                    })
                })
                .collect::<Result<_>>()?,
            edges: t
                .edges()
                .iter()
                .map(|e| {
                    Ok(EdgeJson {
                        from: e.from.clone(),
                        to: e.to.clone(),
                        kernel: kernel_to_json(&e.forward)?,
                        backward: match &e.backward {
                            None => BackwardJson::Same(SameKeyword::Same),
                            Some(k) => BackwardJson::Kernel(kernel_to_json(k)?),
                        },
                    })
                })
                .collect::<Result<_>>()?,
            root_value: point_to_json(t.root_value()),
            observations: t
                .observations()
                .iter()
                .map(|(leaf, v)| ObservationJson {
                    leaf: leaf.clone(),
                    value: point_to_json(v),
                })
                .collect(),
        })
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("model files serialize")
    }
}

/// Reads and validates a model file.
pub fn read_model(path: &Path) -> Result<TreeModel> {
    ModelFile::read(path)?.to_tree()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultFile {
    pub format: String,
    pub mode: ModeJson,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub marginals: Option<Vec<MarginalJson>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectories: Option<TrajectoriesJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimates: Option<Vec<EstimateJson>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub effective_sample_size: Option<f64>,
    pub evidence: f64,
    pub log_evidence: f64,
    pub seed: Option<u64>,
    pub stream_algorithm: String,
    /// Elapsed time of the computation; the only field that differs between identical runs.
    pub wall_clock_seconds: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeJson {
    Exact,
    Sampling,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarginalJson {
    pub node: String,
    pub space: SpaceJson,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probabilities: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cov: Option<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoriesJson {
    /// Node ids, in the order of each row of `points`.
    pub nodes: Vec<String>,
    /// Linear weights; absent when some weight left linear scale.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    /// Natural logarithms of the weights; `null` for a zero weight.
    pub log_weights: Vec<Option<f64>>,
    pub points: Vec<Vec<Value>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateJson {
    pub node: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probabilities: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean: Option<Vec<f64>>,
    pub standard_errors: Vec<f64>,
}

fn finite_or_null(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

impl ResultFile {
    pub fn from_exact(t: &TreeModel, r: &ExactSmoothing, wall_clock_seconds: f64) -> Result<Self> {
        let marginals = r
            .marginals
            .iter()
            .map(|(id, m)| {
                let space = &t.node(id).expect("latent node").space;
                let mut out = MarginalJson {
                    node: id.clone(),
                    space: space_json(space)?,
                    probabilities: None,
                    mean: None,
                    cov: None,
                };
                if space.is_finite() {
                    out.probabilities = Some(m.to_table(space)?.as_slice().to_vec());
                } else {
                    let g = m.to_gaussian(space)?;
                    out.mean = Some(g.mean().as_slice().to_vec());
                    out.cov = Some(linalg::to_rows(g.cov()));
                }
                Ok(out)
            })
            .collect::<Result<_>>()?;
        Ok(ResultFile {
            format: RESULT_FORMAT.into(),
            mode: ModeJson::Exact,
            marginals: Some(marginals),
            trajectories: None,
            estimates: None,
            effective_sample_size: None,
            evidence: r.evidence,
            log_evidence: r.log_evidence,
            seed: None,
            stream_algorithm: crate::stream::STREAM_ALGORITHM.into(),
            wall_clock_seconds,
        })
    }

    pub fn from_sampling(r: &SampledSmoothing, wall_clock_seconds: f64) -> Self {
        let nodes = r
            .trajectories
            .first()
            .map(|t| t.points.iter().map(|(id, _)| id.clone()).collect())
            .unwrap_or_default();
        let weights = (!r.log_weights).then(|| r.trajectories.iter().map(|t| t.weight.value()).collect());
        let trajectories = TrajectoriesJson {
            nodes,
            weights,
            log_weights: r.trajectories.iter().map(|t| finite_or_null(t.weight.log())).collect(),
            points: r
                .trajectories
                .iter()
                .map(|t| t.points.iter().map(|(_, p)| point_to_json(p)).collect())
                .collect(),
        };
        let estimates = r
            .estimates
            .iter()
            .map(|(id, e)| match e {
                NodeEstimate::Probabilities { p, se } => EstimateJson {
                    node: id.clone(),
                    probabilities: Some(p.clone()),
                    mean: None,
                    standard_errors: se.clone(),
                },
                NodeEstimate::Mean { mean, se } => EstimateJson {
                    node: id.clone(),
                    probabilities: None,
                    mean: Some(mean.clone()),
                    standard_errors: se.clone(),
                },
            })
            .collect();
        ResultFile {
            format: RESULT_FORMAT.into(),
            mode: ModeJson::Sampling,
            marginals: None,
            trajectories: Some(trajectories),
            estimates: Some(estimates),
            effective_sample_size: Some(r.effective_sample_size),
            evidence: r.evidence,
            log_evidence: r.log_evidence,
            seed: Some(r.seed),
            stream_algorithm: crate::stream::STREAM_ALGORITHM.into(),
            wall_clock_seconds,
        }
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("result files serialize")
    }

    pub fn parse(text: &str) -> Result<Self> {
        let r: ResultFile = serde_json::from_str(text).map_err(|e| BffgError::Format(e.to_string()))?;
        r.validate()?;
        Ok(r)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BffgError::Format(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Checks internal consistency: normalized marginals, valid covariances,
    /// nonnegative weights, rows matching the node list.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(BffgError::Format(m));
        if self.format != RESULT_FORMAT {
            return bad(format!("unknown result format {:?}", self.format));
        }
        if self.evidence.is_nan() || self.evidence < 0.0 || self.log_evidence.is_nan() {
            return bad("evidence must be nonnegative".into());
        }
        match self.mode {
            ModeJson::Exact => {
                let Some(ms) = &self.marginals else {
                    return bad("exact results need marginals".into());
                };
                for m in ms {
                    match (m.space, &m.probabilities, &m.mean, &m.cov) {
                        (SpaceJson::Finite(n), Some(p), None, None) => {
                            let measure =
                                FiniteMeasure::discrete(p.clone()).map_err(|e| e.at(format!("node {}", m.node)))?;
                            if p.len() != n || (measure.total_mass() - 1.0).abs() > 1e-10 {
                                return bad(format!("marginal of {} is not a distribution on {n} states", m.node));
                            }
                        }
                        (SpaceJson::Euclidean(d), None, Some(mean), Some(cov)) => {
                            let c = linalg::from_rows(cov).map_err(|e| BffgError::Format(e.to_string()))?;
                            if mean.len() != d || c.shape() != (d, d) {
                                return bad(format!("marginal of {} has wrong dimensions", m.node));
                            }
                            FiniteMeasure::gaussian(1.0, mean.clone(), c)
                                .map_err(|e| e.at(format!("node {}", m.node)))?;
                        }
                        _ => return bad(format!("marginal of {} does not match its space", m.node)),
                    }
                }
            }
            ModeJson::Sampling => {
                let Some(t) = &self.trajectories else {
                    return bad("sampling results need trajectories".into());
                };
                if self.seed.is_none() {
                    return bad("sampling results need a seed".into());
                }
                if t.points.len() != t.log_weights.len() || t.points.iter().any(|row| row.len() != t.nodes.len()) {
                    return bad("trajectory arrays have inconsistent lengths".into());
                }
                if let Some(w) = &t.weights {
                    if w.len() != t.log_weights.len() || w.iter().any(|x| !x.is_finite() || *x < 0.0) {
                        return bad("weights must be finite and nonnegative".into());
                    }
                }
            }
        }
        Ok(())
    }

    /// The marginal of `node` as a measure, if present.
    pub fn marginal(&self, node: &str) -> Option<Result<FiniteMeasure>> {
        let m = self.marginals.as_ref()?.iter().find(|m| m.node == node)?;
        Some(match (&m.probabilities, &m.mean, &m.cov) {
            (Some(p), _, _) => FiniteMeasure::discrete(p.clone()),
            (None, Some(mean), Some(cov)) => {
                linalg::from_rows(cov).and_then(|c| FiniteMeasure::gaussian(1.0, mean.clone(), c))
            }
            _ => Err(BffgError::Format(format!("marginal of {node} is incomplete"))),
        })
    }

    /// Weight of trajectory `i` as recorded.
    pub fn trajectory_weight(&self, i: usize) -> Option<Weight> {
        let t = self.trajectories.as_ref()?;
        match &t.weights {
            Some(w) => w.get(i).copied().map(Weight::Linear),
            None => t.log_weights.get(i).map(|l| l.map_or(Weight::Linear(0.0), Weight::Log)),
        }
    }
}
