//! Finite measures and the pairing `∫ h dμ`.

use nalgebra::{DMatrix, DVector};

use crate::error::{BffgError, Result};
use crate::linalg;
use crate::potential::{GaussianPotential, HPotential};
use crate::space::{Point, Space};

/// Probability measures must have total mass 1 within this tolerance.
pub const PROBABILITY_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteMeasure {
    space: Space,
    weights: DVector<f64>,
}

impl DiscreteMeasure {
    pub fn new(space: Space, weights: DVector<f64>) -> Result<Self> {
        space.validate()?;
        let card = space
            .cardinality()
            .ok_or_else(|| BffgError::InvalidMeasure(format!("{space} is not finite")))?;
        if weights.len() != card {
            return Err(BffgError::InvalidMeasure(format!(
                "{} weights for a space of cardinality {card}",
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(BffgError::InvalidMeasure(
                "weights must be finite and nonnegative".into(),
            ));
        }
        Ok(Self { space, weights })
    }

    pub fn space(&self) -> &Space {
        &self.space
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }
}

/// `mass · Normal(mean, cov)`; `cov` may be singular.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianMeasure {
    space: Space,
    mass: f64,
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

impl GaussianMeasure {
    pub fn new(space: Space, mass: f64, mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        space.validate()?;
        let d = space
            .flat_dim()
            .ok_or_else(|| BffgError::InvalidMeasure(format!("{space} is not Euclidean")))?;
        if mean.len() != d || cov.nrows() != d || cov.ncols() != d {
            return Err(BffgError::InvalidMeasure(format!(
                "mean/cov shapes do not match dimension {d}"
            )));
        }
        if !mass.is_finite() || mass < 0.0 || mean.iter().any(|v| !v.is_finite()) {
            return Err(BffgError::InvalidMeasure(
                "mass must be finite and nonnegative, mean finite".into(),
            ));
        }
        let cov = linalg::symmetrize(&cov, "cov").map_err(|e| BffgError::InvalidMeasure(e.to_string()))?;
        if !linalg::is_psd(&cov) {
            return Err(BffgError::InvalidMeasure("cov must be positive semidefinite".into()));
        }
        Ok(Self { space, mass, mean, cov })
    }

    pub(crate) fn from_parts(space: Space, mass: f64, mean: DVector<f64>, cov: DMatrix<f64>) -> Self {
        Self {
            space,
            mass,
            mean,
            cov: linalg::sym(&cov),
        }
    }

    pub fn space(&self) -> &Space {
        &self.space
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// `log ∫ h dμ` together with the reweighted measure `h·μ`.
    ///
    /// Written in terms of `S = I + H·C` so that singular covariances (Dirac
    /// limits) need no inversion; requires `det S > 0` and a semidefinite
    /// result, which is `C⁻¹ + H ≻ 0` when `C` is invertible.
    pub(crate) fn reweight_log(&self, h: &GaussianPotential) -> Result<(f64, GaussianMeasure)> {
        let d = self.mean.len();
        let m = &self.mean;
        let c = &self.cov;
        let hh = h.h();
        let s = DMatrix::<f64>::identity(d, d) + hh * c;
        let det = s.clone().lu().determinant();
        if !det.is_finite() || det <= 0.0 {
            return Err(BffgError::NotPositiveDefinite("cov⁻¹ + H".into()));
        }
        let post_cov = linalg::sym(&linalg::right_solve(c, &s)?);
        if !linalg::is_psd(&post_cov) {
            return Err(BffgError::NotPositiveDefinite("cov⁻¹ + H".into()));
        }
        let r = h.f() - hh * m;
        let post_mean = m + &post_cov * &r;
        let log_int = h.log_eval_vec(m) + 0.5 * r.dot(&(&post_cov * &r)) - 0.5 * det.ln();
        let log_total = self.mass.ln() + log_int;
        let mass = if self.mass == 0.0 { 0.0 } else { log_total.exp() };
        if !mass.is_finite() {
            return Err(BffgError::Numerical("reweighted Gaussian mass overflows".into()));
        }
        Ok((
            log_total,
            GaussianMeasure {
                space: self.space.clone(),
                mass,
                mean: post_mean,
                cov: post_cov,
            },
        ))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum FiniteMeasure {
    Discrete(DiscreteMeasure),
    Gaussian(GaussianMeasure),
    Dirac { point: Point, mass: f64 },
    Product(Vec<FiniteMeasure>),
}

impl FiniteMeasure {
    /// Discrete measure on `Finite(weights.len())`.
    pub fn discrete(weights: Vec<f64>) -> Result<Self> {
        let space =
            Space::finite(weights.len()).map_err(|_| BffgError::InvalidMeasure("empty weight vector".into()))?;
        Self::discrete_on(space, weights)
    }

    pub fn discrete_on(space: Space, weights: Vec<f64>) -> Result<Self> {
        Ok(FiniteMeasure::Discrete(DiscreteMeasure::new(
            space,
            DVector::from_vec(weights),
        )?))
    }

    /// `mass · Normal(mean, cov)` on `R^d`.
    pub fn gaussian(mass: f64, mean: Vec<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let space = Space::euclidean(mean.len()).map_err(|_| BffgError::InvalidMeasure("empty mean".into()))?;
        Self::gaussian_on(space, mass, DVector::from_vec(mean), cov)
    }

    pub fn gaussian_on(space: Space, mass: f64, mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        Ok(FiniteMeasure::Gaussian(GaussianMeasure::new(space, mass, mean, cov)?))
    }

    pub fn dirac(point: Point, mass: f64) -> Result<Self> {
        if !mass.is_finite() || mass < 0.0 {
            return Err(BffgError::InvalidMeasure("mass must be finite and nonnegative".into()));
        }
        Ok(FiniteMeasure::Dirac { point, mass })
    }

    /// `μ₁ ⊗ μ₂ ⊗ …`.
    pub fn product(factors: Vec<FiniteMeasure>) -> Result<Self> {
        if factors.len() < 2 {
            return Err(BffgError::InvalidMeasure("a product needs at least two factors".into()));
        }
        Ok(FiniteMeasure::Product(factors))
    }

    pub fn total_mass(&self) -> f64 {
        match self {
            FiniteMeasure::Discrete(d) => d.weights.sum(),
            FiniteMeasure::Gaussian(g) => g.mass,
            FiniteMeasure::Dirac { mass, .. } => *mass,
            FiniteMeasure::Product(fs) => fs.iter().map(FiniteMeasure::total_mass).product(),
        }
    }

    pub fn is_probability(&self) -> bool {
        (self.total_mass() - 1.0).abs() <= PROBABILITY_TOL
    }

    pub fn scale(&self, c: f64) -> FiniteMeasure {
        match self {
            FiniteMeasure::Discrete(d) => FiniteMeasure::Discrete(DiscreteMeasure {
                space: d.space.clone(),
                weights: &d.weights * c,
            }),
            FiniteMeasure::Gaussian(g) => FiniteMeasure::Gaussian(GaussianMeasure {
                mass: g.mass * c,
                ..g.clone()
            }),
            FiniteMeasure::Dirac { point, mass } => FiniteMeasure::Dirac {
                point: point.clone(),
                mass: mass * c,
            },
            FiniteMeasure::Product(fs) => {
                let mut fs = fs.clone();
                fs[0] = fs[0].scale(c);
                FiniteMeasure::Product(fs)
            }
        }
    }

    /// Rescaled to total mass 1; errors on a null measure.
    pub fn normalized(&self) -> Result<FiniteMeasure> {
        let m = self.total_mass();
        if !m.is_finite() || m <= 0.0 {
            return Err(BffgError::Numerical(format!("cannot normalize measure of mass {m}")));
        }
        Ok(match self {
            FiniteMeasure::Product(fs) => {
                FiniteMeasure::Product(fs.iter().map(FiniteMeasure::normalized).collect::<Result<_>>()?)
            }
            other => other.scale(1.0 / m),
        })
    }

    /// `∫ h dμ`.
    pub fn integrate(&self, h: &HPotential) -> Result<f64> {
        Ok(self.log_integrate(h)?.exp())
    }

    /// `log ∫ h dμ`, computed without leaving log scale in the Gaussian case.
    pub fn log_integrate(&self, h: &HPotential) -> Result<f64> {
        if let HPotential::One = h {
            return Ok(self.total_mass().ln());
        }
        match (self, h) {
            (FiniteMeasure::Dirac { point, mass }, h) => Ok(mass.ln() + h.log_evaluate(point)?),
            (FiniteMeasure::Product(ms), HPotential::Product(hs)) if ms.len() == hs.len() => {
                ms.iter().zip(hs).map(|(m, h)| m.log_integrate(h)).sum()
            }
            (FiniteMeasure::Product(ms), h) => {
                let space = Space::Product(ms.iter().map(FiniteMeasure::space_hint).collect::<Result<_>>()?);
                if space.is_finite() {
                    FiniteMeasure::Discrete(DiscreteMeasure::new(space.clone(), self.to_table(&space)?)?)
                        .log_integrate(h)
                } else if space.is_euclidean() {
                    FiniteMeasure::Gaussian(self.to_gaussian(&space)?).log_integrate(h)
                } else {
                    Err(BffgError::Unsupported(format!("integral of {} on {space}", h.family())))
                }
            }
            (FiniteMeasure::Discrete(d), h) => {
                let t = h.to_table(&d.space)?;
                Ok(d.weights.dot(&t).ln())
            }
            (FiniteMeasure::Gaussian(g), h) => {
                let hg = h.to_gaussian(&g.space)?;
                Ok(g.reweight_log(&hg)?.0)
            }
        }
    }

    /// The measure `h·μ`, i.e. `A ↦ ∫_A h dμ`.
    pub fn reweight(&self, h: &HPotential) -> Result<FiniteMeasure> {
        if h.is_one() {
            return Ok(self.clone());
        }
        match (self, h) {
            (FiniteMeasure::Dirac { point, mass }, h) => FiniteMeasure::dirac(point.clone(), mass * h.evaluate(point)?),
            (FiniteMeasure::Product(ms), HPotential::Product(hs)) if ms.len() == hs.len() => Ok(
                FiniteMeasure::Product(ms.iter().zip(hs).map(|(m, h)| m.reweight(h)).collect::<Result<_>>()?),
            ),
            (FiniteMeasure::Discrete(d), h) => Ok(FiniteMeasure::Discrete(DiscreteMeasure::new(
                d.space.clone(),
                d.weights.component_mul(&h.to_table(&d.space)?),
            )?)),
            (FiniteMeasure::Gaussian(g), h) => {
                let hg = h.to_gaussian(&g.space)?;
                Ok(FiniteMeasure::Gaussian(g.reweight_log(&hg)?.1))
            }
            (FiniteMeasure::Product(_), h) => Err(BffgError::Unsupported(format!(
                "reweighting a product measure by a {} potential",
                h.family()
            ))),
        }
    }

    /// Weights of the measure as a table over a finite `space`.
    pub fn to_table(&self, space: &Space) -> Result<DVector<f64>> {
        let card = space
            .cardinality()
            .ok_or_else(|| BffgError::Unsupported(format!("{space} is not finite")))?;
        match self {
            FiniteMeasure::Discrete(d) if d.space == *space => Ok(d.weights.clone()),
            FiniteMeasure::Dirac { point, mass } => {
                let mut v = DVector::zeros(card);
                v[space.flat_index(point)?] = *mass;
                Ok(v)
            }
            FiniteMeasure::Product(ms) => match space {
                Space::Product(ss) if ss.len() == ms.len() => {
                    let mut acc = DVector::from_element(1, 1.0);
                    for (m, s) in ms.iter().zip(ss) {
                        acc = linalg::kron_vec(&acc, &m.to_table(s)?);
                    }
                    Ok(acc)
                }
                _ => Err(BffgError::SpaceMismatch(format!("product measure on {space}"))),
            },
            _ => Err(BffgError::SpaceMismatch(format!("measure is not tabulable on {space}"))),
        }
    }

    /// The measure as a single (possibly degenerate) Gaussian over a Euclidean `space`.
    pub fn to_gaussian(&self, space: &Space) -> Result<GaussianMeasure> {
        let d = space
            .flat_dim()
            .ok_or_else(|| BffgError::Unsupported(format!("{space} is not Euclidean")))?;
        match self {
            FiniteMeasure::Gaussian(g) if g.mean.len() == d => Ok(GaussianMeasure {
                space: space.clone(),
                ..g.clone()
            }),
            FiniteMeasure::Dirac { point, mass } => Ok(GaussianMeasure {
                space: space.clone(),
                mass: *mass,
                mean: space.flat_vector(point)?,
                cov: DMatrix::zeros(d, d),
            }),
            FiniteMeasure::Product(ms) => match space {
                Space::Product(ss) if ss.len() == ms.len() => {
                    let parts = ms
                        .iter()
                        .zip(ss)
                        .map(|(m, s)| m.to_gaussian(s))
                        .collect::<Result<Vec<_>>>()?;
                    Ok(GaussianMeasure {
                        space: space.clone(),
                        mass: parts.iter().map(|p| p.mass).product(),
                        mean: linalg::concat(&parts.iter().map(|p| &p.mean).collect::<Vec<_>>()),
                        cov: linalg::block_diag(&parts.iter().map(|p| &p.cov).collect::<Vec<_>>()),
                    })
                }
                _ => Err(BffgError::SpaceMismatch(format!("product measure on {space}"))),
            },
            _ => Err(BffgError::SpaceMismatch(format!(
                "measure is not Gaussian-representable on {space}"
            ))),
        }
    }

    /// The space the measure lives on, when it can be read off the measure itself.
    pub fn space_hint(&self) -> Result<Space> {
        match self {
            FiniteMeasure::Discrete(d) => Ok(d.space.clone()),
            FiniteMeasure::Gaussian(g) => Ok(g.space.clone()),
            FiniteMeasure::Product(ms) => Ok(Space::Product(
                ms.iter().map(FiniteMeasure::space_hint).collect::<Result<_>>()?,
            )),
            FiniteMeasure::Dirac { .. } => Err(BffgError::Unsupported(
                "a Dirac mass does not determine its space".into(),
            )),
        }
    }

    /// Marginals on the factors of a product `space`, each carrying the full mass.
    pub fn marginals(&self, space: &Space) -> Result<Vec<FiniteMeasure>> {
        let fs = space
            .factors()
            .ok_or_else(|| BffgError::SpaceMismatch(format!("{space} is not a product space")))?;
        let total = self.total_mass();
        match self {
            FiniteMeasure::Product(ms) if ms.len() == fs.len() => Ok(ms
                .iter()
                .map(|m| {
                    let own = m.total_mass();
                    if own > 0.0 {
                        m.scale(total / own)
                    } else {
                        m.clone()
                    }
                })
                .collect()),
            FiniteMeasure::Dirac {
                point: Point::Tuple(ps),
                mass,
            } if ps.len() == fs.len() => Ok(ps
                .iter()
                .map(|p| FiniteMeasure::Dirac {
                    point: p.clone(),
                    mass: *mass,
                })
                .collect()),
            _ if space.is_finite() => {
                let w = self.to_table(space)?;
                let cards: Vec<usize> = fs.iter().map(|f| f.cardinality().unwrap_or(0)).collect();
                let mut out: Vec<DVector<f64>> = cards.iter().map(|&c| DVector::zeros(c)).collect();
                for (i, wi) in w.iter().enumerate() {
                    let mut rest = i;
                    for k in (0..cards.len()).rev() {
                        out[k][rest % cards[k]] += wi;
                        rest /= cards[k];
                    }
                }
                out.into_iter()
                    .zip(fs)
                    .map(|(v, f)| Ok(FiniteMeasure::Discrete(DiscreteMeasure::new(f.clone(), v)?)))
                    .collect()
            }
            _ if space.is_euclidean() => {
                let g = self.to_gaussian(space)?;
                let mut off = 0;
                Ok(fs
                    .iter()
                    .map(|f| {
                        let d = f.flat_dim().unwrap_or(0);
                        let m = GaussianMeasure {
                            space: f.clone(),
                            mass: g.mass,
                            mean: g.mean.rows(off, d).into_owned(),
                            cov: g.cov.view((off, off), (d, d)).into_owned(),
                        };
                        off += d;
                        FiniteMeasure::Gaussian(m)
                    })
                    .collect())
            }
            _ => Err(BffgError::Unsupported(format!("marginals of a measure on {space}"))),
        }
    }

    /// Largest absolute entry among the quantities compared by
    /// [`FiniteMeasure::max_abs_deviation`].
    pub fn magnitude(&self, space: &Space) -> Result<f64> {
        if space.is_finite() {
            Ok(self.to_table(space)?.amax())
        } else if space.is_euclidean() {
            let g = self.to_gaussian(space)?;
            Ok(g.mass.abs().max(g.mean.amax()).max(g.cov.amax()))
        } else {
            match (self, space) {
                (FiniteMeasure::Product(fs), Space::Product(ss)) if fs.len() == ss.len() => {
                    let mut m = 0.0f64;
                    for (f, s) in fs.iter().zip(ss) {
                        m = m.max(f.magnitude(s)?);
                    }
                    Ok(m)
                }
                _ => Err(BffgError::Unsupported(format!("magnitude of a measure on {space}"))),
            }
        }
    }

    /// Maximum absolute difference between two measures on `space`, comparing
    /// weight tables for finite spaces and (mass, mean, covariance) for
    /// Euclidean ones.
    pub fn max_abs_deviation(&self, other: &FiniteMeasure, space: &Space) -> Result<f64> {
        if space.is_finite() {
            Ok((self.to_table(space)? - other.to_table(space)?).amax())
        } else if space.is_euclidean() {
            let a = self.to_gaussian(space)?;
            let b = other.to_gaussian(space)?;
            Ok((a.mass - b.mass)
                .abs()
                .max((&a.mean - &b.mean).amax())
                .max((&a.cov - &b.cov).amax()))
        } else {
            match (self, other, space) {
                (FiniteMeasure::Product(a), FiniteMeasure::Product(b), Space::Product(ss))
                    if a.len() == b.len() && b.len() == ss.len() =>
                {
                    let mut dev = 0.0f64;
                    for ((x, y), s) in a.iter().zip(b).zip(ss) {
                        dev = dev.max(x.max_abs_deviation(y, s)?);
                    }
                    Ok(dev)
                }
                _ => Err(BffgError::Unsupported(format!("comparing measures on {space}"))),
            }
        }
    }
}
