//! Nonnegative potentials `h`, the objects transported by the backward filter.

use nalgebra::{DMatrix, DVector};

use crate::error::{BffgError, Result};
use crate::linalg;
use crate::space::{Point, Space};

/// A tabulated potential on a finite (possibly product) space.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscretePotential {
    space: Space,
    values: DVector<f64>,
}

impl DiscretePotential {
    pub fn new(space: Space, values: DVector<f64>) -> Result<Self> {
        space.validate()?;
        let card = space
            .cardinality()
            .ok_or_else(|| BffgError::InvalidPotential(format!("{space} is not finite")))?;
        if values.len() != card {
            return Err(BffgError::InvalidPotential(format!(
                "{} values for a space of cardinality {card}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(BffgError::InvalidPotential(
                "entries must be finite and nonnegative".into(),
            ));
        }
        if values.iter().all(|v| *v == 0.0) {
            return Err(BffgError::InvalidPotential("all entries are zero".into()));
        }
        Ok(Self { space, values })
    }

    pub fn space(&self) -> &Space {
        &self.space
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }
}

/// `h(x) = exp(logc + Fᵀx − ½ xᵀHx)` on a Euclidean (possibly product) space.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianPotential {
    space: Space,
    logc: f64,
    f: DVector<f64>,
    h: DMatrix<f64>,
}

impl GaussianPotential {
    /// Checked constructor: `H` is symmetrized and must be positive semidefinite.
    pub fn new(space: Space, logc: f64, f: DVector<f64>, h: DMatrix<f64>) -> Result<Self> {
        let g = Self::new_indefinite(space, logc, f, h)?;
        if !linalg::is_psd(&g.h) {
            return Err(BffgError::InvalidPotential("H must be positive semidefinite".into()));
        }
        Ok(g)
    }

    /// Like [`GaussianPotential::new`] but without the semidefiniteness check.
    /// Ratios of potentials, which only appear as intermediate reweighting
    /// factors, are built this way.
    pub(crate) fn new_indefinite(space: Space, logc: f64, f: DVector<f64>, h: DMatrix<f64>) -> Result<Self> {
        space.validate()?;
        let d = space
            .flat_dim()
            .ok_or_else(|| BffgError::InvalidPotential(format!("{space} is not Euclidean")))?;
        if f.len() != d || h.nrows() != d || h.ncols() != d {
            return Err(BffgError::InvalidPotential(format!(
                "F/H shapes do not match dimension {d}"
            )));
        }
        if !logc.is_finite() || f.iter().any(|v| !v.is_finite()) {
            return Err(BffgError::InvalidPotential("logc and F must be finite".into()));
        }
        let h = linalg::symmetrize(&h, "H")?;
        Ok(Self { space, logc, f, h })
    }

    /// The constant function 1 written in exponential-quadratic form.
    pub fn unit(space: Space) -> Result<Self> {
        let d = space
            .flat_dim()
            .ok_or_else(|| BffgError::InvalidPotential(format!("{space} is not Euclidean")))?;
        Ok(Self {
            space,
            logc: 0.0,
            f: DVector::zeros(d),
            h: DMatrix::zeros(d, d),
        })
    }

    pub fn space(&self) -> &Space {
        &self.space
    }

    pub fn logc(&self) -> f64 {
        self.logc
    }

    pub fn f(&self) -> &DVector<f64> {
        &self.f
    }

    pub fn h(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn log_eval_vec(&self, x: &DVector<f64>) -> f64 {
        self.logc + self.f.dot(x) - 0.5 * x.dot(&(&self.h * x))
    }

    pub(crate) fn with_space(mut self, space: Space) -> Self {
        debug_assert_eq!(space.flat_dim(), self.space.flat_dim());
        self.space = space;
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum HPotential {
    Discrete(DiscretePotential),
    Gaussian(GaussianPotential),
    One,
    /// `g₁ ⊙ g₂ ⊙ …`, evaluated factorwise on tuple points.
    Product(Vec<HPotential>),
}

impl HPotential {
    /// Tabulated potential on `Finite(values.len())`.
    pub fn discrete(values: Vec<f64>) -> Result<Self> {
        let space = Space::finite(values.len()).map_err(|_| BffgError::InvalidPotential("empty value table".into()))?;
        Self::discrete_on(space, values)
    }

    pub fn discrete_on(space: Space, values: Vec<f64>) -> Result<Self> {
        Ok(HPotential::Discrete(DiscretePotential::new(
            space,
            DVector::from_vec(values),
        )?))
    }

    /// Exponential-quadratic potential on `R^d` with `d = f.len()`.
    pub fn gaussian(logc: f64, f: Vec<f64>, h: DMatrix<f64>) -> Result<Self> {
        let space = Space::euclidean(f.len()).map_err(|_| BffgError::InvalidPotential("empty F".into()))?;
        Self::gaussian_on(space, logc, DVector::from_vec(f), h)
    }

    pub fn gaussian_on(space: Space, logc: f64, f: DVector<f64>, h: DMatrix<f64>) -> Result<Self> {
        Ok(HPotential::Gaussian(GaussianPotential::new(space, logc, f, h)?))
    }

    /// `g1 ⊙ g2`: evaluates to `g1(x₁)·g2(x₂)` at `(x₁, x₂)`.
    pub fn tensor(g1: HPotential, g2: HPotential) -> HPotential {
        match (g1, g2) {
            (HPotential::One, HPotential::One) => HPotential::One,
            (a, b) => HPotential::Product(vec![a, b]),
        }
    }

    pub fn is_one(&self) -> bool {
        match self {
            HPotential::One => true,
            HPotential::Product(fs) => fs.iter().all(HPotential::is_one),
            _ => false,
        }
    }

    pub fn evaluate(&self, x: &Point) -> Result<f64> {
        Ok(self.log_evaluate(x)?.exp())
    }

    /// `log h(x)`; `-inf` where the potential vanishes.
    pub fn log_evaluate(&self, x: &Point) -> Result<f64> {
        match self {
            HPotential::One => Ok(0.0),
            HPotential::Discrete(d) => {
                let i = d.space.flat_index(x)?;
                Ok(d.values[i].ln())
            }
            HPotential::Gaussian(g) => {
                let v = g.space.flat_vector(x)?;
                Ok(g.log_eval_vec(&v))
            }
            HPotential::Product(fs) => match x {
                Point::Tuple(ps) if ps.len() == fs.len() => fs.iter().zip(ps).map(|(f, p)| f.log_evaluate(p)).sum(),
                _ => Err(BffgError::ShapeMismatch(format!(
                    "product potential with {} factors evaluated at {x}",
                    fs.len()
                ))),
            },
        }
    }

    /// The potential as a value table over a finite `space` (row-major for products).
    pub fn to_table(&self, space: &Space) -> Result<DVector<f64>> {
        let card = space
            .cardinality()
            .ok_or_else(|| BffgError::Unsupported(format!("{space} is not finite")))?;
        match self {
            HPotential::One => Ok(DVector::from_element(card, 1.0)),
            HPotential::Discrete(d) if d.space.cardinality() == Some(card) && same_layout(&d.space, space) => {
                Ok(d.values.clone())
            }
            HPotential::Product(fs) => match space {
                Space::Product(ss) if ss.len() == fs.len() => {
                    let mut acc = DVector::from_element(1, 1.0);
                    for (f, s) in fs.iter().zip(ss) {
                        acc = linalg::kron_vec(&acc, &f.to_table(s)?);
                    }
                    Ok(acc)
                }
                _ => Err(BffgError::SpaceMismatch(format!(
                    "product potential on non-product space {space}"
                ))),
            },
            other => Err(BffgError::Unsupported(format!(
                "cannot tabulate {} on {space}",
                other.family()
            ))),
        }
    }

    /// The potential as a single exponential-quadratic form over a Euclidean `space`.
    pub fn to_gaussian(&self, space: &Space) -> Result<GaussianPotential> {
        match self {
            HPotential::One => GaussianPotential::unit(space.clone()),
            HPotential::Gaussian(g) if g.space.flat_dim() == space.flat_dim() && same_layout(&g.space, space) => {
                Ok(g.clone().with_space(space.clone()))
            }
            HPotential::Product(fs) => match space {
                Space::Product(ss) if ss.len() == fs.len() => {
                    let parts = fs
                        .iter()
                        .zip(ss)
                        .map(|(f, s)| f.to_gaussian(s))
                        .collect::<Result<Vec<_>>>()?;
                    Ok(GaussianPotential {
                        space: space.clone(),
                        logc: parts.iter().map(|p| p.logc).sum(),
                        f: linalg::concat(&parts.iter().map(|p| &p.f).collect::<Vec<_>>()),
                        h: linalg::block_diag(&parts.iter().map(|p| &p.h).collect::<Vec<_>>()),
                    })
                }
                _ => Err(BffgError::SpaceMismatch(format!(
                    "product potential on non-product space {space}"
                ))),
            },
            other => Err(BffgError::Unsupported(format!(
                "{} potential on Euclidean space {space}",
                other.family()
            ))),
        }
    }

    /// Pointwise product `x ↦ self(x)·other(x)` of two potentials on `space`.
    pub fn multiply(&self, other: &HPotential, space: &Space) -> Result<HPotential> {
        match (self, other) {
            (HPotential::One, g) | (g, HPotential::One) => Ok(g.clone()),
            (HPotential::Product(a), HPotential::Product(b)) if a.len() == b.len() => {
                let ss = space
                    .factors()
                    .filter(|ss| ss.len() == a.len())
                    .ok_or_else(|| BffgError::SpaceMismatch(format!("product potentials on {space}")))?;
                Ok(HPotential::Product(
                    a.iter()
                        .zip(b)
                        .zip(ss)
                        .map(|((x, y), s)| x.multiply(y, s))
                        .collect::<Result<_>>()?,
                ))
            }
            _ if space.is_finite() => {
                let v = self.to_table(space)?.component_mul(&other.to_table(space)?);
                Ok(HPotential::Discrete(DiscretePotential::new(space.clone(), v).map_err(
                    |_| BffgError::ZeroDenominator("product of potentials vanishes everywhere".into()),
                )?))
            }
            _ if space.is_euclidean() => {
                let a = self.to_gaussian(space)?;
                let b = other.to_gaussian(space)?;
                Ok(HPotential::Gaussian(GaussianPotential {
                    space: space.clone(),
                    logc: a.logc + b.logc,
                    f: a.f + b.f,
                    h: a.h + b.h,
                }))
            }
            _ => Err(BffgError::Unsupported(format!(
                "pointwise product of {} and {} on {space}",
                self.family(),
                other.family()
            ))),
        }
    }

    /// Pointwise ratio `self / other`, with `0/0 = 0`. The result may have an
    /// indefinite quadratic part and is only meant as a reweighting factor.
    pub(crate) fn divide(&self, other: &HPotential, space: &Space) -> Result<HPotential> {
        if other.is_one() {
            return Ok(self.clone());
        }
        if let (HPotential::Product(a), HPotential::Product(b)) = (self, other) {
            if let Some(ss) = space.factors().filter(|ss| ss.len() == a.len() && a.len() == b.len()) {
                return Ok(HPotential::Product(
                    a.iter()
                        .zip(b)
                        .zip(ss)
                        .map(|((x, y), s)| x.divide(y, s))
                        .collect::<Result<_>>()?,
                ));
            }
        }
        if space.is_finite() {
            let num = self.to_table(space)?;
            let den = other.to_table(space)?;
            let mut out = DVector::zeros(num.len());
            for i in 0..num.len() {
                out[i] = match (num[i], den[i]) {
                    (0.0, _) => 0.0,
                    (_, 0.0) => {
                        return Err(BffgError::ZeroDenominator(format!(
                            "ratio of potentials at {}",
                            space.point_at(i)?
                        )))
                    }
                    (n, d) => n / d,
                };
            }
            if out.iter().all(|v| *v == 0.0) {
                // everywhere-zero ratio: bypass the not-all-zero check
                return Ok(HPotential::Discrete(DiscretePotential {
                    space: space.clone(),
                    values: out,
                }));
            }
            Ok(HPotential::Discrete(DiscretePotential::new(space.clone(), out)?))
        } else if space.is_euclidean() {
            let a = self.to_gaussian(space)?;
            let b = other.to_gaussian(space)?;
            Ok(HPotential::Gaussian(GaussianPotential::new_indefinite(
                space.clone(),
                a.logc - b.logc,
                a.f - b.f,
                a.h - b.h,
            )?))
        } else {
            Err(BffgError::Unsupported(format!("ratio of potentials on {space}")))
        }
    }

    pub(crate) fn family(&self) -> &'static str {
        match self {
            HPotential::Discrete(_) => "discrete",
            HPotential::Gaussian(_) => "gaussian",
            HPotential::One => "one",
            HPotential::Product(_) => "product",
        }
    }
}

/// Two spaces index their flattened coordinates identically.
fn same_layout(a: &Space, b: &Space) -> bool {
    fn leaves(s: &Space, out: &mut Vec<(bool, usize)>) {
        match s {
            Space::Finite(n) => out.push((true, *n)),
            Space::Euclidean(d) => out.push((false, *d)),
            Space::Product(fs) => fs.iter().for_each(|f| leaves(f, out)),
        }
    }
    let (mut la, mut lb) = (Vec::new(), Vec::new());
    leaves(a, &mut la);
    leaves(b, &mut lb);
    if a.is_euclidean() && b.is_euclidean() {
        return a.flat_dim() == b.flat_dim();
    }
    la == lb
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_is_one_everywhere() {
        assert_eq!(HPotential::One.evaluate(&Point::Index(3)).unwrap(), 1.0);
        assert_eq!(HPotential::One.evaluate(&Point::real(&[1.0, -2.0])).unwrap(), 1.0);
    }

    #[test]
    fn discrete_lookup() {
        let h = HPotential::discrete(vec![0.2, 0.8]).unwrap();
        assert_eq!(h.evaluate(&Point::Index(1)).unwrap(), 0.8);
        assert!(h.evaluate(&Point::Index(2)).is_err());
        assert!(h.evaluate(&Point::real(&[0.0])).is_err());
    }

    #[test]
    fn discrete_rejects_bad_tables() {
        assert!(HPotential::discrete(vec![0.0, 0.0]).is_err());
        assert!(HPotential::discrete(vec![-0.1, 1.0]).is_err());
        assert!(HPotential::discrete(vec![]).is_err());
    }

    #[test]
    fn gaussian_value() {
        let h = HPotential::gaussian(0.0, vec![0.0], DMatrix::from_element(1, 1, 1.0)).unwrap();
        let v = h.evaluate(&Point::real(&[2.0])).unwrap();
        assert!((v - (-2.0f64).exp()).abs() < 1e-15);
        assert!((v - 0.135335283236613).abs() < 1e-12);
    }

    #[test]
    fn gaussian_rejects_indefinite_and_asymmetric() {
        let indefinite = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(HPotential::gaussian(0.0, vec![0.0, 0.0], indefinite).is_err());
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        assert!(HPotential::gaussian(0.0, vec![0.0, 0.0], asym).is_err());
        assert!(HPotential::gaussian(f64::NAN, vec![0.0], DMatrix::identity(1, 1)).is_err());
        // rank-deficient is fine
        let psd = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(HPotential::gaussian(0.0, vec![0.0, 0.0], psd).is_ok());
    }

    #[test]
    fn tensor_examples() {
        assert_eq!(HPotential::tensor(HPotential::One, HPotential::One), HPotential::One);
        let g = HPotential::tensor(
            HPotential::discrete(vec![1.0, 0.0]).unwrap(),
            HPotential::discrete(vec![0.5, 0.5]).unwrap(),
        );
        let x = Point::pair(Point::Index(0), Point::Index(1));
        assert_eq!(g.evaluate(&x).unwrap(), 0.5);
        let g = HPotential::tensor(
            HPotential::discrete(vec![2.0, 1.0]).unwrap(),
            HPotential::discrete(vec![1.0, 3.0]).unwrap(),
        );
        assert_eq!(g.evaluate(&x).unwrap(), 6.0);
    }

    #[test]
    fn tables_of_products_are_kronecker() {
        let g = HPotential::tensor(
            HPotential::discrete(vec![1.0, 2.0]).unwrap(),
            HPotential::discrete(vec![3.0, 4.0, 5.0]).unwrap(),
        );
        let s = Space::pair(Space::Finite(2), Space::Finite(3));
        let t = g.to_table(&s).unwrap();
        for i in 0..6 {
            let v = g.evaluate(&s.point_at(i).unwrap()).unwrap();
            assert!((t[i] - v).abs() <= 1e-14 * v, "{} vs {v}", t[i]);
        }
    }

    #[test]
    fn gaussian_flattening_matches_evaluation() {
        let g1 = HPotential::gaussian(0.3, vec![1.0], DMatrix::from_element(1, 1, 2.0)).unwrap();
        let g2 = HPotential::gaussian(-0.1, vec![0.5, -0.5], DMatrix::identity(2, 2)).unwrap();
        let s = Space::pair(Space::Euclidean(1), Space::Euclidean(2));
        let joint = HPotential::Gaussian(HPotential::tensor(g1.clone(), g2.clone()).to_gaussian(&s).unwrap());
        let x = Point::pair(Point::real(&[0.7]), Point::real(&[-1.0, 2.0]));
        let a = joint.evaluate(&x).unwrap();
        let b = HPotential::tensor(g1, g2).evaluate(&x).unwrap();
        assert!((a - b).abs() < 1e-14 * b.abs());
    }

    #[test]
    fn multiply_and_divide_are_pointwise() {
        let s = Space::Finite(3);
        let a = HPotential::discrete(vec![1.0, 2.0, 0.0]).unwrap();
        let b = HPotential::discrete(vec![0.5, 0.0, 3.0]).unwrap();
        let p = a.multiply(&b, &s).unwrap();
        assert_eq!(p.to_table(&s).unwrap().as_slice(), &[0.5, 0.0, 0.0]);
        let q = p.divide(&a, &s).unwrap();
        assert_eq!(q.to_table(&s).unwrap().as_slice(), &[0.5, 0.0, 0.0]);
        assert!(a.divide(&b, &s).is_err());
    }
}
