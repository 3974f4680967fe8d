//! Reference implementations used to validate the optic computations:
//! exhaustive enumeration for finite trees, the Kalman filter with
//! Rauch–Tung–Striebel smoothing for linear-Gaussian chains, and adaptive
//! quadrature for one-dimensional Gaussian pullbacks.
//!
//! None of this goes through pullbacks, messages or optics.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{BffgError, Result};
use crate::kernel::LinearGaussian;
use crate::potential::GaussianPotential;
use crate::tree::{NodeRole, TreeModel};

/// Enumeration refuses trees with more latent assignments than this.
pub const MAX_PATHS: u64 = 10_000_000;
/// The joint table is kept only up to this many assignments.
pub const MAX_STORED_JOINT: u64 = 1_000_000;

#[derive(Clone, Debug, PartialEq)]
pub struct EnumeratedPosterior {
    /// Latent node ids; the order of the digits in a joint index.
    pub latent: Vec<String>,
    pub cardinalities: Vec<usize>,
    /// Posterior probability of each latent assignment (row-major mixed radix),
    /// if small enough to keep.
    pub joint: Option<Vec<f64>>,
    pub marginals: BTreeMap<String, Vec<f64>>,
    /// `Σ_paths p(path) Π_leaves p(observation | parent)`.
    pub evidence: f64,
}

/// Enumerates every latent assignment of a finite tree.
pub fn brute_force_smoother(t: &TreeModel) -> Result<EnumeratedPosterior> {
    let latent: Vec<String> = t.latent_ids().into_iter().map(String::from).collect();
    let mut cards = Vec::with_capacity(latent.len());
    for id in &latent {
        let n = t.node(id).expect("latent id").space.cardinality().ok_or_else(|| {
            BffgError::Unsupported(format!("enumeration needs finite spaces; node {id} is not finite"))
        })?;
        cards.push(n);
    }
    let total = cards.iter().try_fold(1u64, |acc, &c| acc.checked_mul(c as u64));
    let total = match total {
        Some(n) if n <= MAX_PATHS => n as usize,
        _ => return Err(BffgError::TooLarge(format!("more than {MAX_PATHS} latent assignments"))),
    };
    let position: BTreeMap<&str, usize> = latent.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let root = t.root();
    let root_state = root.space.flat_index(t.root_value())?;

    struct Factor {
        parent: Option<usize>,
        child: Option<usize>,
        table: DMatrix<f64>,
        observed: usize,
    }
    let mut factors = Vec::new();
    for e in t.edges() {
        let table = e
            .forward
            .matrix()
            .ok_or_else(|| BffgError::Unsupported(format!("{} is not a finite kernel", e.label())))?
            .clone();
        let parent = position.get(e.from.as_str()).copied();
        let child_node = t.node(&e.to).expect("edge target");
        let (child, observed) = if child_node.role == NodeRole::Leaf {
            (None, child_node.space.flat_index(&t.observations()[&e.to])?)
        } else {
            (Some(position[e.to.as_str()]), 0)
        };
        factors.push(Factor {
            parent,
            child,
            table,
            observed,
        });
    }

    let mut weights = vec![0.0; total];
    let mut digits = vec![0usize; cards.len()];
    for (idx, w) in weights.iter_mut().enumerate() {
        let mut rest = idx;
        for k in (0..cards.len()).rev() {
            digits[k] = rest % cards[k];
            rest /= cards[k];
        }
        let mut p = 1.0;
        for f in &factors {
            let i = f.parent.map_or(root_state, |k| digits[k]);
            let j = f.child.map_or(f.observed, |k| digits[k]);
            p *= f.table[(i, j)];
            if p == 0.0 {
                break;
            }
        }
        *w = p;
    }
    let evidence: f64 = weights.iter().sum();
    if evidence.is_nan() || evidence <= 0.0 {
        return Err(BffgError::ZeroDenominator(
            "the observations have zero likelihood".into(),
        ));
    }
    let mut marginals: Vec<Vec<f64>> = cards.iter().map(|&c| vec![0.0; c]).collect();
    for (idx, w) in weights.iter_mut().enumerate() {
        *w /= evidence;
        let mut rest = idx;
        for k in (0..cards.len()).rev() {
            marginals[k][rest % cards[k]] += *w;
            rest /= cards[k];
        }
    }
    Ok(EnumeratedPosterior {
        marginals: latent.iter().cloned().zip(marginals).collect(),
        joint: (total as u64 <= MAX_STORED_JOINT).then_some(weights),
        latent,
        cardinalities: cards,
        evidence,
    })
}

/// Smoothed moments of one chain node.
#[derive(Clone, Debug, PartialEq)]
pub struct SmoothedMoments {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// Kalman filter and RTS smoother for `x₀ = root`, `x_{i+1} | x_i ~ transitions[i]`,
/// with `observations[i]` (if any) observing `x_{i+1}`. Returns the smoothed
/// moments of `x₁ … x_n`.
pub fn rts_smoother(
    transitions: &[LinearGaussian],
    observations: &[Option<(LinearGaussian, DVector<f64>)>],
    root: &DVector<f64>,
) -> Result<Vec<SmoothedMoments>> {
    if transitions.len() != observations.len() {
        return Err(BffgError::ShapeMismatch("one observation slot per transition".into()));
    }
    let n = transitions.len();
    let mut pred_mean = Vec::with_capacity(n);
    let mut pred_cov = Vec::with_capacity(n);
    let mut filt_mean = Vec::with_capacity(n);
    let mut filt_cov: Vec<DMatrix<f64>> = Vec::with_capacity(n);
    let mut m = root.clone();
    let mut p = DMatrix::zeros(root.len(), root.len());
    for (tr, obs) in transitions.iter().zip(observations) {
        let mp = tr.b() * &m + tr.beta();
        let pp = tr.b() * &p * tr.b().transpose() + tr.q();
        pred_mean.push(mp.clone());
        pred_cov.push(pp.clone());
        (m, p) = match obs {
            None => (mp, pp),
            Some((o, v)) => {
                let h = o.b();
                let s = h * &pp * h.transpose() + o.q();
                let s_chol = s
                    .clone()
                    .cholesky()
                    .ok_or_else(|| BffgError::NotPositiveDefinite("innovation covariance".into()))?;
                let gain = s_chol.solve(&(h * &pp)).transpose();
                let resid = v - h * &mp - o.beta();
                let i_kh = DMatrix::identity(pp.nrows(), pp.nrows()) - &gain * h;
                // Joseph form keeps the update symmetric and semidefinite
                let pu = &i_kh * &pp * i_kh.transpose() + &gain * o.q() * gain.transpose();
                (mp + &gain * resid, (&pu + pu.transpose()) * 0.5)
            }
        };
        filt_mean.push(m.clone());
        filt_cov.push(p.clone());
    }
    let mut out = vec![
        SmoothedMoments {
            mean: DVector::zeros(0),
            cov: DMatrix::zeros(0, 0),
        };
        n
    ];
    if n == 0 {
        return Ok(out);
    }
    out[n - 1] = SmoothedMoments {
        mean: filt_mean[n - 1].clone(),
        cov: filt_cov[n - 1].clone(),
    };
    for i in (0..n - 1).rev() {
        let b_next = transitions[i + 1].b();
        let pp_chol = pred_cov[i + 1]
            .clone()
            .cholesky()
            .ok_or_else(|| BffgError::NotPositiveDefinite("predicted covariance".into()))?;
        // G = P_i Bᵀ (P⁻_{i+1})⁻¹
        let g = pp_chol.solve(&(b_next * &filt_cov[i])).transpose();
        let mean = &filt_mean[i] + &g * (&out[i + 1].mean - &pred_mean[i + 1]);
        let cov = &filt_cov[i] + &g * (&out[i + 1].cov - &pred_cov[i + 1]) * g.transpose();
        out[i] = SmoothedMoments {
            mean,
            cov: (&cov + cov.transpose()) * 0.5,
        };
    }
    Ok(out)
}

/// `∫ h(y) N(y; Bx + β, Q) dy` for one-dimensional `k` and `h`, by adaptive
/// Gauss–Kronrod quadrature on `Bx + β ± 12√Q`, widened until the tails
/// contribute nothing.
pub fn quadrature_pullback_1d(k: &LinearGaussian, h: &GaussianPotential, x: f64) -> Result<f64> {
    if k.source_dim() != 1 || k.target_dim() != 1 || h.f().len() != 1 {
        return Err(BffgError::Unsupported("quadrature pullback is one-dimensional".into()));
    }
    let (b, beta, q) = (k.b()[(0, 0)], k.beta()[0], k.q()[(0, 0)]);
    let (logc, f, hh) = (h.logc(), h.f()[0], h.h()[(0, 0)]);
    let center = b * x + beta;
    let sd = q.sqrt();
    let log_norm = -0.5 * (2.0 * std::f64::consts::PI * q).ln();
    let integrand = |y: f64| (f * y - 0.5 * hh * y * y - 0.5 * (y - center).powi(2) / q + log_norm).exp();

    let (mut lo, mut hi) = (center - 12.0 * sd, center + 12.0 * sd);
    let mut total = adaptive_gk(&integrand, lo, hi, 0)?;
    for _ in 0..200 {
        let width = 12.0 * sd;
        let left = adaptive_gk(&integrand, lo - width, lo, 0)?;
        let right = adaptive_gk(&integrand, hi, hi + width, 0)?;
        total += left + right;
        lo -= width;
        hi += width;
        if !total.is_finite() {
            return Err(BffgError::Numerical("divergent integrand".into()));
        }
        if left + right <= 1e-17 * total {
            return Ok(total * logc.exp());
        }
    }
    Err(BffgError::Numerical("quadrature tails did not vanish".into()))
}

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const KRONROD_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728,
];
/// Gauss weights for the odd-indexed Kronrod nodes (and the centre).
const GAUSS_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// G7–K15 estimate and error on `[a, b]`.
fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let r = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = KRONROD_WEIGHTS[7] * fc;
    let mut gauss = GAUSS_WEIGHTS[3] * fc;
    for i in 0..7 {
        let s = f(c - r * GK_NODES[i]) + f(c + r * GK_NODES[i]);
        kronrod += KRONROD_WEIGHTS[i] * s;
        if i % 2 == 1 {
            gauss += GAUSS_WEIGHTS[i / 2] * s;
        }
    }
    (kronrod * r, ((kronrod - gauss) * r).abs())
}

fn adaptive_gk(f: &impl Fn(f64) -> f64, a: f64, b: f64, depth: u32) -> Result<f64> {
    let (est, err) = gk15(f, a, b);
    if !est.is_finite() {
        return Err(BffgError::Numerical("divergent integrand".into()));
    }
    if err <= 1e-13 + 1e-13 * est.abs() {
        return Ok(est);
    }
    if depth >= 40 {
        return Err(BffgError::Numerical("quadrature did not converge".into()));
    }
    let m = 0.5 * (a + b);
    Ok(adaptive_gk(f, a, m, depth + 1)? + adaptive_gk(f, m, b, depth + 1)?)
}
