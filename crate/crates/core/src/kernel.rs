//! Markov kernels in closed-form families.
//!
//! Finite kernels are row-stochastic matrices, linear-Gaussian kernels are
//! `y | x ~ Normal(Bx + β, Q)`. Identity and duplication are handled
//! structurally; anything else composes into sampling-only sequence or tensor
//! kernels.

use std::borrow::Cow;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{BffgError, Result};
use crate::linalg;
use crate::measure::FiniteMeasure;
use crate::potential::{GaussianPotential, HPotential};
use crate::space::{Point, Space};
use crate::stream::RandomStream;

/// Row sums may deviate from 1 by this much and are accepted as is.
pub const ROW_SUM_TOL: f64 = 1e-10;
/// Row sums within this deviation are renormalized; beyond it they are rejected.
pub const ROW_RENORMALIZE_TOL: f64 = 1e-8;

/// `y | x ~ Normal(Bx + β, Q)` with the Cholesky factor of `Q` cached.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearGaussian {
    b: DMatrix<f64>,
    beta: DVector<f64>,
    q: DMatrix<f64>,
    q_chol: DMatrix<f64>,
    q_logdet: f64,
}

impl LinearGaussian {
    pub fn new(b: DMatrix<f64>, beta: DVector<f64>, q: DMatrix<f64>) -> Result<Self> {
        let dt = b.nrows();
        if dt == 0 || b.ncols() == 0 {
            return Err(BffgError::InvalidKernel("B must be non-empty".into()));
        }
        if beta.len() != dt || q.nrows() != dt || q.ncols() != dt {
            return Err(BffgError::InvalidKernel(format!(
                "beta/Q do not match the {dt} rows of B"
            )));
        }
        if b.iter().chain(beta.iter()).any(|v| !v.is_finite()) {
            return Err(BffgError::InvalidKernel("B and beta must be finite".into()));
        }
        let q = linalg::symmetrize(&q, "Q").map_err(|e| BffgError::InvalidKernel(e.to_string()))?;
        let chol = linalg::cholesky(&q, "Q")?;
        let q_logdet = linalg::chol_logdet(&chol);
        Ok(Self {
            b,
            beta,
            q_chol: chol.l(),
            q,
            q_logdet,
        })
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn beta(&self) -> &DVector<f64> {
        &self.beta
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn source_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn target_dim(&self) -> usize {
        self.b.nrows()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum KernelFamily {
    /// Row-stochastic matrix indexed by flattened source/target points.
    Discrete(DMatrix<f64>),
    LinearGaussian(LinearGaussian),
    Identity,
    /// `x ↦ δ_(x, x)`.
    Duplicate,
    /// Sampling-only chain of kernels whose closed forms do not compose.
    Sequence(Vec<Kernel>),
    /// Sampling-only product of kernels from different families.
    Tensor(Vec<Kernel>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Kernel {
    source: Space,
    target: Space,
    family: KernelFamily,
}

/// `x ↦ Normal(Bx + β, LLᵀ)` with possibly singular `L`; the common form of
/// linear-Gaussian, identity and duplication kernels on Euclidean spaces.
pub(crate) struct Affine<'a> {
    pub b: Cow<'a, DMatrix<f64>>,
    pub beta: Cow<'a, DVector<f64>>,
    pub l: Cow<'a, DMatrix<f64>>,
}

impl Kernel {
    /// Finite kernel from matrix rows, on `Finite(rows) → Finite(cols)`.
    pub fn discrete(rows: Vec<Vec<f64>>) -> Result<Self> {
        let m = linalg::from_rows(&rows).map_err(|e| BffgError::InvalidKernel(e.to_string()))?;
        let source = Space::finite(m.nrows()).map_err(|e| BffgError::InvalidKernel(e.to_string()))?;
        let target = Space::finite(m.ncols()).map_err(|e| BffgError::InvalidKernel(e.to_string()))?;
        Self::discrete_on(source, target, m)
    }

    /// Finite kernel between finite (possibly product) spaces.
    pub fn discrete_on(source: Space, target: Space, mut matrix: DMatrix<f64>) -> Result<Self> {
        let (rows, cols) = match (source.cardinality(), target.cardinality()) {
            (Some(r), Some(c)) => (r, c),
            _ => return Err(BffgError::InvalidKernel("discrete kernels need finite spaces".into())),
        };
        if matrix.nrows() != rows || matrix.ncols() != cols {
            return Err(BffgError::InvalidKernel(format!(
                "matrix is {}x{}, spaces need {rows}x{cols}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if matrix.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(BffgError::InvalidKernel(
                "entries must be finite and nonnegative".into(),
            ));
        }
        for i in 0..rows {
            let s = matrix.row(i).sum();
            let dev = (s - 1.0).abs();
            if dev > ROW_RENORMALIZE_TOL {
                return Err(BffgError::InvalidKernel(format!("row {i} sums to {s}")));
            }
            if dev > ROW_SUM_TOL {
                matrix.row_mut(i).scale_mut(1.0 / s);
            }
        }
        Ok(Self {
            source,
            target,
            family: KernelFamily::Discrete(matrix),
        })
    }

    /// `y | x ~ Normal(Bx + β, Q)` on `R^cols(B) → R^rows(B)`.
    pub fn linear_gaussian(b: DMatrix<f64>, beta: Vec<f64>, q: DMatrix<f64>) -> Result<Self> {
        let source = Space::euclidean(b.ncols()).map_err(|e| BffgError::InvalidKernel(e.to_string()))?;
        let target = Space::euclidean(b.nrows()).map_err(|e| BffgError::InvalidKernel(e.to_string()))?;
        Self::linear_gaussian_on(source, target, b, DVector::from_vec(beta), q)
    }

    pub fn linear_gaussian_on(
        source: Space,
        target: Space,
        b: DMatrix<f64>,
        beta: DVector<f64>,
        q: DMatrix<f64>,
    ) -> Result<Self> {
        let lg = LinearGaussian::new(b, beta, q)?;
        if source.flat_dim() != Some(lg.source_dim()) || target.flat_dim() != Some(lg.target_dim()) {
            return Err(BffgError::InvalidKernel(format!(
                "B is {}x{}, spaces are {source} -> {target}",
                lg.target_dim(),
                lg.source_dim()
            )));
        }
        Ok(Self {
            source,
            target,
            family: KernelFamily::LinearGaussian(lg),
        })
    }

    /// 1D convenience: `y | x ~ Normal(b·x + beta, q)`.
    pub fn linear_gaussian_1d(b: f64, beta: f64, q: f64) -> Result<Self> {
        Self::linear_gaussian(
            DMatrix::from_element(1, 1, b),
            vec![beta],
            DMatrix::from_element(1, 1, q),
        )
    }

    pub fn identity(space: Space) -> Self {
        Self {
            source: space.clone(),
            target: space,
            family: KernelFamily::Identity,
        }
    }

    pub fn duplicate(space: Space) -> Self {
        Self {
            target: Space::pair(space.clone(), space.clone()),
            source: space,
            family: KernelFamily::Duplicate,
        }
    }

    /// Chain of kernels kept unevaluated; adjacent spaces must match.
    pub fn sequence(kernels: Vec<Kernel>) -> Result<Self> {
        if kernels.is_empty() {
            return Err(BffgError::InvalidKernel("empty sequence".into()));
        }
        for w in kernels.windows(2) {
            if w[0].target != w[1].source {
                return Err(BffgError::SpaceMismatch(format!(
                    "{} then {}",
                    w[0].target, w[1].source
                )));
            }
        }
        let mut flat = Vec::with_capacity(kernels.len());
        for k in kernels {
            match k.family {
                KernelFamily::Sequence(inner) => flat.extend(inner),
                _ => flat.push(k),
            }
        }
        if flat.len() == 1 {
            return Ok(flat.pop().unwrap());
        }
        Ok(Self {
            source: flat[0].source.clone(),
            target: flat[flat.len() - 1].target.clone(),
            family: KernelFamily::Sequence(flat),
        })
    }

    pub fn source(&self) -> &Space {
        &self.source
    }

    pub fn target(&self) -> &Space {
        &self.target
    }

    pub fn family(&self) -> &KernelFamily {
        &self.family
    }

    pub fn matrix(&self) -> Option<&DMatrix<f64>> {
        match &self.family {
            KernelFamily::Discrete(m) => Some(m),
            _ => None,
        }
    }

    pub fn as_linear_gaussian(&self) -> Option<&LinearGaussian> {
        match &self.family {
            KernelFamily::LinearGaussian(lg) => Some(lg),
            _ => None,
        }
    }

    pub(crate) fn family_name(&self) -> &'static str {
        match self.family {
            KernelFamily::Discrete(_) => "discrete",
            KernelFamily::LinearGaussian(_) => "linear_gaussian",
            KernelFamily::Identity => "identity",
            KernelFamily::Duplicate => "duplicate",
            KernelFamily::Sequence(_) => "sequence",
            KernelFamily::Tensor(_) => "tensor",
        }
    }

    /// Transition matrix when both spaces are finite and the family has one.
    pub(crate) fn stochastic_matrix(&self) -> Option<Cow<'_, DMatrix<f64>>> {
        let n = self.source.cardinality()?;
        match &self.family {
            KernelFamily::Discrete(m) => Some(Cow::Borrowed(m)),
            KernelFamily::Identity => Some(Cow::Owned(DMatrix::identity(n, n))),
            KernelFamily::Duplicate => {
                let mut m = DMatrix::zeros(n, n * n);
                for i in 0..n {
                    m[(i, i * n + i)] = 1.0;
                }
                Some(Cow::Owned(m))
            }
            _ => None,
        }
    }

    /// Affine-Gaussian form when both spaces are Euclidean.
    pub(crate) fn affine(&self) -> Option<Affine<'_>> {
        let d = self.source.flat_dim()?;
        match &self.family {
            KernelFamily::LinearGaussian(lg) => Some(Affine {
                b: Cow::Borrowed(&lg.b),
                beta: Cow::Borrowed(&lg.beta),
                l: Cow::Borrowed(&lg.q_chol),
            }),
            KernelFamily::Identity => Some(Affine {
                b: Cow::Owned(DMatrix::identity(d, d)),
                beta: Cow::Owned(DVector::zeros(d)),
                l: Cow::Owned(DMatrix::zeros(d, d)),
            }),
            KernelFamily::Duplicate => {
                let mut b = DMatrix::zeros(2 * d, d);
                b.view_mut((0, 0), (d, d)).fill_with_identity();
                b.view_mut((d, 0), (d, d)).fill_with_identity();
                Some(Affine {
                    b: Cow::Owned(b),
                    beta: Cow::Owned(DVector::zeros(2 * d)),
                    l: Cow::Owned(DMatrix::zeros(2 * d, 2 * d)),
                })
            }
            _ => None,
        }
    }
}

/// Chapman–Kolmogorov composition `k1 k2` (first `k1`, then `k2`).
pub fn compose_kernels(k1: &Kernel, k2: &Kernel) -> Result<Kernel> {
    if k1.target != k2.source {
        return Err(BffgError::SpaceMismatch(format!(
            "cannot compose {} -> {} with {} -> {}",
            k1.source, k1.target, k2.source, k2.target
        )));
    }
    match (&k1.family, &k2.family) {
        (KernelFamily::Identity, _) => Ok(k2.clone()),
        (_, KernelFamily::Identity) => Ok(k1.clone()),
        (KernelFamily::Discrete(a), KernelFamily::Discrete(b)) => {
            Kernel::discrete_on(k1.source.clone(), k2.target.clone(), a * b)
        }
        (KernelFamily::LinearGaussian(a), KernelFamily::LinearGaussian(b)) => {
            let q = &b.b * &a.q * b.b.transpose() + &b.q;
            Kernel::linear_gaussian_on(
                k1.source.clone(),
                k2.target.clone(),
                &b.b * &a.b,
                &b.b * &a.beta + &b.beta,
                linalg::sym(&q),
            )
        }
        _ => Kernel::sequence(vec![k1.clone(), k2.clone()]),
    }
}

/// Product kernel `k1 ⊗ k2` on `source₁ × source₂ → target₁ × target₂`.
pub fn tensor_kernels(k1: &Kernel, k2: &Kernel) -> Kernel {
    let source = Space::pair(k1.source.clone(), k2.source.clone());
    let target = Space::pair(k1.target.clone(), k2.target.clone());
    if let (KernelFamily::Identity, KernelFamily::Identity) = (&k1.family, &k2.family) {
        return Kernel::identity(source);
    }
    if let (KernelFamily::LinearGaussian(a), KernelFamily::LinearGaussian(b)) = (&k1.family, &k2.family) {
        let lg = LinearGaussian {
            b: linalg::block_diag(&[&a.b, &b.b]),
            beta: linalg::concat(&[&a.beta, &b.beta]),
            q: linalg::block_diag(&[&a.q, &b.q]),
            q_chol: linalg::block_diag(&[&a.q_chol, &b.q_chol]),
            q_logdet: a.q_logdet + b.q_logdet,
        };
        return Kernel {
            source,
            target,
            family: KernelFamily::LinearGaussian(lg),
        };
    }
    let both_finite_closed = matches!(k1.family, KernelFamily::Discrete(_) | KernelFamily::Identity)
        && matches!(k2.family, KernelFamily::Discrete(_) | KernelFamily::Identity);
    if both_finite_closed {
        if let (Some(a), Some(b)) = (k1.stochastic_matrix(), k2.stochastic_matrix()) {
            return Kernel {
                source,
                target,
                family: KernelFamily::Discrete(linalg::kron(&a, &b)),
            };
        }
    }
    Kernel {
        source,
        target,
        family: KernelFamily::Tensor(vec![k1.clone(), k2.clone()]),
    }
}

/// Pushforward `μκ`: the law of the next state when the current one has law `μ`.
pub fn pushforward(k: &Kernel, mu: &FiniteMeasure) -> Result<FiniteMeasure> {
    match &k.family {
        KernelFamily::Identity => return Ok(mu.clone()),
        KernelFamily::Sequence(ks) => {
            return ks.iter().try_fold(mu.clone(), |m, k| pushforward(k, &m));
        }
        KernelFamily::Tensor(ks) => {
            let parts = split_product_measure(mu, ks.len())?;
            return Ok(FiniteMeasure::Product(
                ks.iter()
                    .zip(&parts)
                    .map(|(k, m)| pushforward(k, m))
                    .collect::<Result<_>>()?,
            ));
        }
        KernelFamily::Duplicate => {
            if let FiniteMeasure::Dirac { point, mass } = mu {
                k.source.check_point(point)?;
                return FiniteMeasure::dirac(Point::pair(point.clone(), point.clone()), *mass);
            }
        }
        _ => {}
    }
    if let Some(m) = k.stochastic_matrix() {
        let w = mu.to_table(&k.source)?;
        let out = m.tr_mul(&w);
        return FiniteMeasure::discrete_on(k.target.clone(), out.as_slice().to_vec());
    }
    if let Some(a) = k.affine() {
        let g = mu.to_gaussian(&k.source)?;
        let mean = a.b.as_ref() * g.mean() + a.beta.as_ref();
        let cov = a.b.as_ref() * g.cov() * a.b.transpose() + a.l.as_ref() * a.l.transpose();
        return Ok(FiniteMeasure::Gaussian(crate::measure::GaussianMeasure::from_parts(
            k.target.clone(),
            g.mass(),
            mean,
            cov,
        )));
    }
    Err(BffgError::Unsupported(format!(
        "pushforward of a measure through a {} kernel on {}",
        k.family_name(),
        k.source
    )))
}

/// Splits a product measure, or a Dirac mass at a tuple, into `n` factors.
pub(crate) fn split_product_measure(mu: &FiniteMeasure, n: usize) -> Result<Vec<FiniteMeasure>> {
    match mu {
        FiniteMeasure::Product(ms) if ms.len() == n => Ok(ms.clone()),
        FiniteMeasure::Dirac {
            point: Point::Tuple(ps),
            mass,
        } if ps.len() == n => Ok(ps
            .iter()
            .enumerate()
            .map(|(i, p)| FiniteMeasure::Dirac {
                point: p.clone(),
                mass: if i == 0 { *mass } else { 1.0 },
            })
            .collect()),
        _ => Err(BffgError::NonProductMeasure),
    }
}

/// Pullback `(κh)(x) = ∫ h(y) κ(x, dy)`.
pub fn pullback(k: &Kernel, h: &HPotential) -> Result<HPotential> {
    if h.is_one() {
        return Ok(HPotential::One);
    }
    match &k.family {
        KernelFamily::Identity => return Ok(h.clone()),
        KernelFamily::Sequence(ks) => {
            return ks.iter().rev().try_fold(h.clone(), |acc, k| pullback(k, &acc));
        }
        KernelFamily::Tensor(ks) => {
            return match h {
                HPotential::Product(hs) if hs.len() == ks.len() => Ok(HPotential::Product(
                    ks.iter().zip(hs).map(|(k, h)| pullback(k, h)).collect::<Result<_>>()?,
                )),
                _ => Err(BffgError::Unsupported(format!(
                    "pullback of a {} potential through a tensor kernel",
                    h.family()
                ))),
            };
        }
        KernelFamily::Duplicate => {
            if let HPotential::Product(hs) = h {
                if hs.len() == 2 {
                    return hs[0].multiply(&hs[1], &k.source);
                }
            }
        }
        _ => {}
    }
    if let Some(m) = k.stochastic_matrix() {
        let v = m.as_ref() * h.to_table(&k.target)?;
        if v.iter().all(|x| *x == 0.0) {
            return Err(BffgError::ZeroDenominator("pullback vanishes everywhere".into()));
        }
        return HPotential::discrete_on(k.source.clone(), v.as_slice().to_vec());
    }
    if let Some(a) = k.affine() {
        let g = h.to_gaussian(&k.target)?;
        return Ok(HPotential::Gaussian(affine_pullback(&a, &g, &k.source)?));
    }
    Err(BffgError::Unsupported(format!(
        "pullback of a {} potential through a {} kernel",
        h.family(),
        k.family_name()
    )))
}

/// Backward information filter step: `∫ h(y) N(y; Bx + β, LLᵀ) dy` as an
/// exponential-quadratic in `x`. With `S = I + LᵀHL`,
/// `Ĥ = H − HL S⁻¹ LᵀH` and `F̂ = F − HL S⁻¹ LᵀF`:
/// `H' = BᵀĤB`, `F' = Bᵀ(F̂ − Ĥβ)`,
/// `c' = c + ½ FᵀL S⁻¹ LᵀF − ½ log det S + F̂ᵀβ − ½ βᵀĤβ`.
pub(crate) fn affine_pullback(a: &Affine<'_>, h: &GaussianPotential, source: &Space) -> Result<GaussianPotential> {
    let l = a.l.as_ref();
    let dt = l.nrows();
    let u = l.tr_mul(h.h());
    let s = DMatrix::<f64>::identity(dt, dt) + &u * l;
    let chol = linalg::cholesky(&linalg::sym(&s), "H + Q⁻¹")?;
    let lf = l.tr_mul(h.f());
    let s_inv_u = chol.solve(&u);
    let s_inv_lf = chol.solve(&lf);
    let h_hat = linalg::sym(&(h.h() - u.tr_mul(&s_inv_u)));
    let f_hat = h.f() - u.tr_mul(&s_inv_lf);
    let beta = a.beta.as_ref();
    let b = a.b.as_ref();
    let h_beta = &h_hat * beta;
    let logc = h.logc() + 0.5 * lf.dot(&s_inv_lf) - 0.5 * linalg::chol_logdet(&chol) + f_hat.dot(beta)
        - 0.5 * beta.dot(&h_beta);
    let new_h = linalg::sym(&(b.tr_mul(&h_hat) * b));
    let new_f = b.tr_mul(&(f_hat - h_beta));
    GaussianPotential::new_indefinite(source.clone(), logc, new_f, new_h)
}

/// Guided linear-Gaussian parameters: `y | x` under `g(y)·N(y; Bx + β, LLᵀ)`
/// normalized, i.e. `Normal(B'x + β', W)` with `W = L S⁻¹ Lᵀ`,
/// `B' = (I − WH)B` and `β' = (I − WH)β + WF`.
pub(crate) fn affine_guided(
    a: &Affine<'_>,
    g: &GaussianPotential,
) -> Result<(DMatrix<f64>, DVector<f64>, DMatrix<f64>)> {
    let l = a.l.as_ref();
    let dt = l.nrows();
    let s = DMatrix::<f64>::identity(dt, dt) + l.tr_mul(g.h()) * l;
    let chol = linalg::cholesky(&linalg::sym(&s), "H + Q⁻¹")?;
    let w = linalg::sym(&(l * chol.solve(&l.transpose())));
    let m = DMatrix::<f64>::identity(dt, dt) - &w * g.h();
    Ok((&m * a.b.as_ref(), &m * a.beta.as_ref() + &w * g.f(), w))
}

/// An observation `y` of a latent point through `kernel`.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationModel {
    kernel: Kernel,
    observed: Point,
}

impl ObservationModel {
    pub fn new(kernel: Kernel, observed: Point) -> Result<Self> {
        kernel.target.check_point(&observed)?;
        match kernel.family {
            KernelFamily::Discrete(_) | KernelFamily::LinearGaussian(_) => Ok(Self { kernel, observed }),
            _ => Err(BffgError::Unsupported(format!(
                "{} kernels have no observation density",
                kernel.family_name()
            ))),
        }
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn observed(&self) -> &Point {
        &self.observed
    }
}

/// `x ↦ p(x, observed)`: the observation density as a potential on the latent space.
pub fn observation_potential(om: &ObservationModel) -> Result<HPotential> {
    let k = &om.kernel;
    match &k.family {
        KernelFamily::Discrete(m) => {
            let j = k.target.flat_index(&om.observed)?;
            let col: Vec<f64> = m.column(j).iter().copied().collect();
            HPotential::discrete_on(k.source.clone(), col).map_err(|_| {
                BffgError::ZeroDenominator(format!("observation {} is impossible from every state", om.observed))
            })
        }
        KernelFamily::LinearGaussian(lg) => {
            let v = k.target.flat_vector(&om.observed)?;
            let l = &lg.q_chol;
            let a = l
                .solve_lower_triangular(&lg.b)
                .ok_or_else(|| BffgError::Numerical("triangular solve".into()))?;
            let r = l
                .solve_lower_triangular(&(v - &lg.beta))
                .ok_or_else(|| BffgError::Numerical("triangular solve".into()))?;
            let dt = lg.target_dim() as f64;
            let logc = -0.5 * r.dot(&r) - 0.5 * (dt * (2.0 * std::f64::consts::PI).ln() + lg.q_logdet);
            HPotential::gaussian_on(k.source.clone(), logc, a.tr_mul(&r), a.tr_mul(&a))
        }
        _ => Err(BffgError::Unsupported(format!(
            "{} kernels have no observation density",
            k.family_name()
        ))),
    }
}

/// Draws from `κ(x, ·)` using `stream`. Deterministic given the stream state.
pub fn sample_kernel(k: &Kernel, x: &Point, stream: &mut RandomStream) -> Result<Point> {
    k.source.check_point(x)?;
    match &k.family {
        KernelFamily::Identity => Ok(x.clone()),
        KernelFamily::Duplicate => Ok(Point::pair(x.clone(), x.clone())),
        KernelFamily::Discrete(m) => {
            let i = k.source.flat_index(x)?;
            let row: Vec<f64> = m.row(i).iter().copied().collect();
            let j =
                inverse_cdf(&row, stream.next_uniform()).ok_or_else(|| BffgError::InconsistentRow(x.to_string()))?;
            k.target.point_at(j)
        }
        KernelFamily::LinearGaussian(lg) => {
            let xv = k.source.flat_vector(x)?;
            let z = DVector::from_fn(lg.target_dim(), |_, _| StandardNormal.sample(stream));
            let y = &lg.b * xv + &lg.beta + &lg.q_chol * z;
            k.target.point_from_vector(&y)
        }
        KernelFamily::Sequence(ks) => {
            let mut cur = x.clone();
            for k in ks {
                let mut child = stream.fork();
                cur = sample_kernel(k, &cur, &mut child)?;
            }
            Ok(cur)
        }
        KernelFamily::Tensor(ks) => match x {
            Point::Tuple(ps) if ps.len() == ks.len() => Ok(Point::Tuple(
                ks.iter()
                    .zip(ps)
                    .map(|(k, p)| {
                        let mut child = stream.fork();
                        sample_kernel(k, p, &mut child)
                    })
                    .collect::<Result<_>>()?,
            )),
            _ => Err(BffgError::ShapeMismatch(format!("{x} for a tensor kernel"))),
        },
    }
}

/// Inverse-CDF draw from unnormalized nonnegative weights, accumulating left to right.
pub(crate) fn inverse_cdf(weights: &[f64], u: f64) -> Option<usize> {
    let total: f64 = weights.iter().sum();
    if !total.is_finite() || total <= 0.0 {
        return None;
    }
    let target = u * total;
    let mut acc = 0.0;
    let mut last_positive = None;
    for (j, w) in weights.iter().enumerate() {
        if *w > 0.0 {
            last_positive = Some(j);
            acc += w;
            if target < acc {
                return Some(j);
            }
        }
    }
    last_positive
}

#[cfg(test)]
mod tests {
    use super::*;

    fn k_flip() -> Kernel {
        Kernel::discrete(vec![vec![0.9, 0.1], vec![0.1, 0.9]]).unwrap()
    }

    #[test]
    fn discrete_row_checks() {
        assert!(Kernel::discrete(vec![vec![0.5, 0.6]]).is_err());
        assert!(Kernel::discrete(vec![vec![-0.1, 1.1]]).is_err());
        let k = Kernel::discrete(vec![vec![0.5, 0.5 + 5e-9]]).unwrap();
        assert!((k.matrix().unwrap().row(0).sum() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn singular_q_rejected() {
        assert!(Kernel::linear_gaussian_1d(1.0, 0.0, 0.0).is_err());
        let q = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(Kernel::linear_gaussian(DMatrix::identity(2, 2), vec![0.0, 0.0], q).is_err());
    }

    #[test]
    fn compose_discrete() {
        let k = compose_kernels(&k_flip(), &k_flip()).unwrap();
        let m = k.matrix().unwrap();
        let expected = [[0.82, 0.18], [0.18, 0.82]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((m[(i, j)] - expected[i][j]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn compose_identity_is_unit() {
        let id = Kernel::identity(Space::Finite(2));
        assert_eq!(compose_kernels(&id, &k_flip()).unwrap(), k_flip());
        assert_eq!(compose_kernels(&k_flip(), &id).unwrap(), k_flip());
    }

    #[test]
    fn compose_linear_gaussian() {
        let k1 = Kernel::linear_gaussian_1d(2.0, 0.0, 1.0).unwrap();
        let k2 = Kernel::linear_gaussian_1d(1.0, 1.0, 1.0).unwrap();
        let k = compose_kernels(&k1, &k2).unwrap();
        let lg = k.as_linear_gaussian().unwrap();
        assert_eq!(lg.b()[(0, 0)], 2.0);
        assert_eq!(lg.beta()[0], 1.0);
        assert_eq!(lg.q()[(0, 0)], 2.0);
        // the other order: LG(B=1, β=1, Q=1) then LG(B=2, β=0, Q=1) = LG(2, 2, 5)
        let k = compose_kernels(&k2, &k1).unwrap();
        let lg = k.as_linear_gaussian().unwrap();
        assert_eq!((lg.b()[(0, 0)], lg.beta()[0], lg.q()[(0, 0)]), (2.0, 2.0, 5.0));
    }

    #[test]
    fn heterogeneous_composition_is_sequence() {
        let d = Kernel::duplicate(Space::Finite(2));
        let t = tensor_kernels(&k_flip(), &k_flip());
        let k = compose_kernels(&d, &t).unwrap();
        assert!(matches!(k.family(), KernelFamily::Sequence(_)));
        assert!(compose_kernels(&k_flip(), &Kernel::linear_gaussian_1d(1.0, 0.0, 1.0).unwrap()).is_err());
    }

    #[test]
    fn tensor_kronecker() {
        let a = Kernel::discrete(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let b = Kernel::discrete(vec![vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        let t = tensor_kernels(&a, &b);
        let m = t.matrix().unwrap();
        assert_eq!(m.shape(), (4, 4));
        for i in 0..4 {
            for j in 0..4 {
                let e = if i / 2 == j / 2 { 0.5 } else { 0.0 };
                assert_eq!(m[(i, j)], e);
            }
            assert!((m.row(i).sum() - 1.0).abs() < 1e-15);
        }
        let id = Kernel::identity(Space::Finite(2));
        assert!(matches!(tensor_kernels(&id, &id).family(), KernelFamily::Identity));
    }

    #[test]
    fn pushforward_examples() {
        let mu = FiniteMeasure::discrete(vec![1.0, 0.0]).unwrap();
        assert_eq!(pushforward(&Kernel::identity(Space::Finite(2)), &mu).unwrap(), mu);
        let nu = pushforward(&k_flip(), &mu).unwrap();
        assert_eq!(nu.to_table(&Space::Finite(2)).unwrap().as_slice(), &[0.9, 0.1]);

        let g = FiniteMeasure::gaussian(1.0, vec![0.0], DMatrix::from_element(1, 1, 1.0)).unwrap();
        let k = Kernel::linear_gaussian_1d(1.0, 0.0, 1.0).unwrap();
        match pushforward(&k, &g).unwrap() {
            FiniteMeasure::Gaussian(n) => {
                assert_eq!(n.mass(), 1.0);
                assert_eq!(n.mean()[0], 0.0);
                assert_eq!(n.cov()[(0, 0)], 2.0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn pullback_examples() {
        let h = HPotential::discrete(vec![1.0, 0.0]).unwrap();
        assert_eq!(pullback(&Kernel::identity(Space::Finite(2)), &h).unwrap(), h);
        let p = pullback(&k_flip(), &h).unwrap();
        assert_eq!(p.to_table(&Space::Finite(2)).unwrap().as_slice(), &[0.9, 0.1]);

        let k = Kernel::linear_gaussian_1d(1.0, 0.0, 1.0).unwrap();
        let g = HPotential::gaussian(0.0, vec![0.0], DMatrix::from_element(1, 1, 1.0)).unwrap();
        let p = pullback(&k, &g).unwrap();
        assert!((p.evaluate(&Point::real(&[0.0])).unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-14);
    }

    #[test]
    fn pullback_of_one_is_one() {
        assert_eq!(pullback(&k_flip(), &HPotential::One).unwrap(), HPotential::One);
        let h = HPotential::discrete(vec![1.0, 1.0]).unwrap();
        let p = pullback(&k_flip(), &h).unwrap();
        assert_eq!(p.to_table(&Space::Finite(2)).unwrap().as_slice(), &[1.0, 1.0]);
    }

    #[test]
    fn duplicate_pullback_is_pointwise_product() {
        let g1 = HPotential::discrete(vec![0.2, 0.5, 1.0]).unwrap();
        let g2 = HPotential::discrete(vec![3.0, 0.0, 2.0]).unwrap();
        let dup = Kernel::duplicate(Space::Finite(3));
        let p = pullback(&dup, &HPotential::tensor(g1.clone(), g2.clone())).unwrap();
        let t = p.to_table(&Space::Finite(3)).unwrap();
        for (a, b) in t.iter().zip([0.6, 0.0, 2.0]) {
            assert!((a - b).abs() < 1e-15);
        }
        // flattened route agrees with the factorwise route
        let flat = HPotential::discrete_on(
            Space::pair(Space::Finite(3), Space::Finite(3)),
            HPotential::tensor(g1, g2)
                .to_table(&Space::pair(Space::Finite(3), Space::Finite(3)))
                .unwrap()
                .as_slice()
                .to_vec(),
        )
        .unwrap();
        let p2 = pullback(&dup, &flat).unwrap();
        assert!((p2.to_table(&Space::Finite(3)).unwrap() - t).amax() < 1e-15);
    }

    #[test]
    fn observation_potentials() {
        let k = Kernel::discrete(vec![vec![0.7, 0.3], vec![0.2, 0.8]]).unwrap();
        let om = ObservationModel::new(k, Point::Index(0)).unwrap();
        let h = observation_potential(&om).unwrap();
        assert_eq!(h.to_table(&Space::Finite(2)).unwrap().as_slice(), &[0.7, 0.2]);

        let k = Kernel::linear_gaussian_1d(1.0, 0.0, 1.0).unwrap();
        let om = ObservationModel::new(k, Point::real(&[0.0])).unwrap();
        match observation_potential(&om).unwrap() {
            HPotential::Gaussian(g) => {
                assert!((g.logc() + 0.5 * (2.0 * std::f64::consts::PI).ln()).abs() < 1e-15);
                assert_eq!(g.f()[0], 0.0);
                assert_eq!(g.h()[(0, 0)], 1.0);
            }
            other => panic!("{other:?}"),
        }
        assert!(ObservationModel::new(Kernel::identity(Space::Finite(2)), Point::Index(0)).is_err());
        assert!(ObservationModel::new(
            Kernel::duplicate(Space::Finite(2)),
            Point::pair(Point::Index(0), Point::Index(0))
        )
        .is_err());
    }

    #[test]
    fn structural_sampling() {
        let mut s = RandomStream::new(0);
        let x = Point::Index(1);
        assert_eq!(
            sample_kernel(&Kernel::identity(Space::Finite(2)), &x, &mut s).unwrap(),
            x
        );
        let before = s.clone();
        let y = sample_kernel(&Kernel::duplicate(Space::Finite(2)), &x, &mut s).unwrap();
        assert_eq!(y, Point::pair(x.clone(), x));
        assert_eq!(s, before, "duplication consumes no randomness");
    }

    #[test]
    fn discrete_sampling_frequencies() {
        let k = Kernel::discrete(vec![vec![0.3, 0.7]]).unwrap();
        let mut s = RandomStream::new(42);
        let n = 100_000;
        let zeros = (0..n)
            .filter(|_| sample_kernel(&k, &Point::Index(0), &mut s).unwrap() == Point::Index(0))
            .count();
        let p = zeros as f64 / n as f64;
        let sd = (0.3f64 * 0.7 / n as f64).sqrt();
        assert!((p - 0.3).abs() < 4.0 * sd, "frequency {p}");
    }

    #[test]
    fn inverse_cdf_skips_zero_weights() {
        assert_eq!(inverse_cdf(&[0.0, 1.0, 0.0], 0.999_999), Some(1));
        assert_eq!(inverse_cdf(&[0.0, 0.0], 0.5), None);
        assert_eq!(inverse_cdf(&[0.5, 0.5], 0.0), Some(0));
    }
}
