//! Measurable spaces and their points.
//!
//! Only three shapes exist: finite sets, Euclidean spaces and finite products
//! of those. A product whose factors are all finite behaves like one big finite
//! set (indexed row-major); a product of Euclidean factors behaves like the
//! concatenated Euclidean space. The closed-form families lean on this
//! flattening to act on product spaces.

use std::fmt;

use nalgebra::DVector;

use crate::error::{BffgError, Result};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Space {
    Finite(usize),
    Euclidean(usize),
    Product(Vec<Space>),
}

impl Space {
    pub fn finite(cardinality: usize) -> Result<Self> {
        let s = Space::Finite(cardinality);
        s.validate()?;
        Ok(s)
    }

    pub fn euclidean(dimension: usize) -> Result<Self> {
        let s = Space::Euclidean(dimension);
        s.validate()?;
        Ok(s)
    }

    pub fn product(factors: Vec<Space>) -> Result<Self> {
        let s = Space::Product(factors);
        s.validate()?;
        Ok(s)
    }

    /// The binary product `a × b`.
    pub fn pair(a: Space, b: Space) -> Self {
        Space::Product(vec![a, b])
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Space::Finite(0) => Err(BffgError::InvalidSpace("cardinality must be at least 1".into())),
            Space::Euclidean(0) => Err(BffgError::InvalidSpace("dimension must be at least 1".into())),
            Space::Product(fs) if fs.len() < 2 => Err(BffgError::InvalidSpace(
                "a product space needs at least two factors".into(),
            )),
            Space::Product(fs) => fs.iter().try_for_each(Space::validate),
            _ => Ok(()),
        }
    }

    /// Number of points when every factor is finite.
    pub fn cardinality(&self) -> Option<usize> {
        match self {
            Space::Finite(n) => Some(*n),
            Space::Euclidean(_) => None,
            Space::Product(fs) => fs.iter().map(Space::cardinality).product(),
        }
    }

    /// Total dimension when every factor is Euclidean.
    pub fn flat_dim(&self) -> Option<usize> {
        match self {
            Space::Finite(_) => None,
            Space::Euclidean(d) => Some(*d),
            Space::Product(fs) => fs.iter().map(Space::flat_dim).sum(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.cardinality().is_some()
    }

    pub fn is_euclidean(&self) -> bool {
        self.flat_dim().is_some()
    }

    pub fn factors(&self) -> Option<&[Space]> {
        match self {
            Space::Product(fs) => Some(fs),
            _ => None,
        }
    }

    pub fn check_point(&self, x: &Point) -> Result<()> {
        match (self, x) {
            (Space::Finite(n), Point::Index(i)) if i < n => Ok(()),
            (Space::Euclidean(d), Point::Real(v)) if v.len() == *d => {
                if v.iter().all(|c| c.is_finite()) {
                    Ok(())
                } else {
                    Err(BffgError::ShapeMismatch("non-finite coordinate".into()))
                }
            }
            (Space::Product(fs), Point::Tuple(ps)) if fs.len() == ps.len() => {
                fs.iter().zip(ps).try_for_each(|(f, p)| f.check_point(p))
            }
            _ => Err(BffgError::ShapeMismatch(format!("{x} is not a point of {self}"))),
        }
    }

    /// Row-major index of `x` in a finite (possibly product) space.
    pub fn flat_index(&self, x: &Point) -> Result<usize> {
        match (self, x) {
            (Space::Finite(n), Point::Index(i)) if i < n => Ok(*i),
            (Space::Product(fs), Point::Tuple(ps)) if fs.len() == ps.len() => {
                let mut idx = 0usize;
                for (f, p) in fs.iter().zip(ps) {
                    let card = f
                        .cardinality()
                        .ok_or_else(|| BffgError::ShapeMismatch(format!("{self} is not a finite space")))?;
                    idx = idx * card + f.flat_index(p)?;
                }
                Ok(idx)
            }
            _ => Err(BffgError::ShapeMismatch(format!("{x} is not a point of {self}"))),
        }
    }

    /// Inverse of [`Space::flat_index`].
    pub fn point_at(&self, mut idx: usize) -> Result<Point> {
        match self {
            Space::Finite(n) if idx < *n => Ok(Point::Index(idx)),
            Space::Product(fs) => {
                let cards: Vec<usize> = fs
                    .iter()
                    .map(|f| f.cardinality())
                    .collect::<Option<_>>()
                    .ok_or_else(|| BffgError::ShapeMismatch(format!("{self} is not finite")))?;
                let mut parts = vec![Point::Index(0); fs.len()];
                for k in (0..fs.len()).rev() {
                    parts[k] = fs[k].point_at(idx % cards[k])?;
                    idx /= cards[k];
                }
                Ok(Point::Tuple(parts))
            }
            _ => Err(BffgError::ShapeMismatch(format!("index {idx} outside {self}"))),
        }
    }

    /// Concatenated coordinates of `x` in a Euclidean (possibly product) space.
    pub fn flat_vector(&self, x: &Point) -> Result<DVector<f64>> {
        match (self, x) {
            (Space::Euclidean(d), Point::Real(v)) if v.len() == *d => Ok(v.clone()),
            (Space::Product(fs), Point::Tuple(ps)) if fs.len() == ps.len() => {
                let parts = fs
                    .iter()
                    .zip(ps)
                    .map(|(f, p)| f.flat_vector(p))
                    .collect::<Result<Vec<_>>>()?;
                Ok(DVector::from_iterator(
                    parts.iter().map(|p| p.len()).sum(),
                    parts.iter().flat_map(|p| p.iter().copied()),
                ))
            }
            _ => Err(BffgError::ShapeMismatch(format!("{x} is not a point of {self}"))),
        }
    }

    /// Inverse of [`Space::flat_vector`].
    pub fn point_from_vector(&self, v: &DVector<f64>) -> Result<Point> {
        let dim = self
            .flat_dim()
            .ok_or_else(|| BffgError::ShapeMismatch(format!("{self} is not Euclidean")))?;
        if v.len() != dim {
            return Err(BffgError::ShapeMismatch(format!(
                "vector of length {} for {self}",
                v.len()
            )));
        }
        Ok(self.unflatten(v.as_slice()))
    }

    fn unflatten(&self, v: &[f64]) -> Point {
        match self {
            Space::Euclidean(_) => Point::Real(DVector::from_column_slice(v)),
            Space::Product(fs) => {
                let mut off = 0;
                Point::Tuple(
                    fs.iter()
                        .map(|f| {
                            let d = f.flat_dim().unwrap_or(0);
                            let p = f.unflatten(&v[off..off + d]);
                            off += d;
                            p
                        })
                        .collect(),
                )
            }
            Space::Finite(_) => unreachable!("unflatten on a finite space"),
        }
    }
}

impl fmt::Display for Space {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Space::Finite(n) => write!(f, "Finite({n})"),
            Space::Euclidean(d) => write!(f, "R^{d}"),
            Space::Product(fs) => {
                write!(f, "(")?;
                for (i, s) in fs.iter().enumerate() {
                    if i > 0 {
                        write!(f, " x ")?;
                    }
                    write!(f, "{s}")?;
                }
                write!(f, ")")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Point {
    Index(usize),
    Real(DVector<f64>),
    Tuple(Vec<Point>),
}

impl Point {
    pub fn real(coords: &[f64]) -> Self {
        Point::Real(DVector::from_column_slice(coords))
    }

    pub fn pair(a: Point, b: Point) -> Self {
        Point::Tuple(vec![a, b])
    }

    pub fn as_index(&self) -> Option<usize> {
        match self {
            Point::Index(i) => Some(*i),
            _ => None,
        }
    }

    pub fn as_real(&self) -> Option<&DVector<f64>> {
        match self {
            Point::Real(v) => Some(v),
            _ => None,
        }
    }

    pub fn components(&self) -> Option<&[Point]> {
        match self {
            Point::Tuple(ps) => Some(ps),
            _ => None,
        }
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Point::Index(i) => write!(f, "{i}"),
            Point::Real(v) => {
                write!(f, "[")?;
                for (i, c) in v.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{c}")?;
                }
                write!(f, "]")
            }
            Point::Tuple(ps) => {
                write!(f, "(")?;
                for (i, p) in ps.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{p}")?;
                }
                write!(f, ")")
            }
        }
    }
}
