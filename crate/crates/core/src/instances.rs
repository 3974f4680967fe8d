//! Random kernels, potentials and measures for randomized checks.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::kernel::Kernel;
use crate::measure::FiniteMeasure;
use crate::potential::HPotential;
use crate::space::Space;
use crate::stream::RandomStream;

fn normal(s: &mut RandomStream) -> f64 {
    StandardNormal.sample(s)
}

fn normal_matrix(r: usize, c: usize, scale: f64, s: &mut RandomStream) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| scale * normal(s))
}

fn normal_vector(d: usize, scale: f64, s: &mut RandomStream) -> DVector<f64> {
    DVector::from_fn(d, |_, _| scale * normal(s))
}

/// `AAᵀ/d + floor·I`.
pub fn spd(d: usize, floor: f64, s: &mut RandomStream) -> DMatrix<f64> {
    let a = normal_matrix(d, d, 1.0, s);
    (&a * a.transpose()) / d as f64 + DMatrix::identity(d, d) * floor
}

/// Uniform integer in `lo..=hi`.
pub fn size(lo: usize, hi: usize, s: &mut RandomStream) -> usize {
    s.random_range(lo..=hi)
}

/// Row-stochastic `rows × cols` matrix with entries bounded away from zero.
pub fn stochastic_matrix(rows: usize, cols: usize, s: &mut RandomStream) -> DMatrix<f64> {
    let mut m = DMatrix::from_fn(rows, cols, |_, _| s.random_range(0.05..1.0));
    for mut row in m.row_iter_mut() {
        let total = row.sum();
        row /= total;
    }
    m
}

pub fn discrete_kernel(rows: usize, cols: usize, s: &mut RandomStream) -> Kernel {
    Kernel::discrete_on(
        Space::Finite(rows),
        Space::Finite(cols),
        stochastic_matrix(rows, cols, s),
    )
    .expect("random stochastic matrix")
}

pub fn discrete_potential(n: usize, s: &mut RandomStream) -> HPotential {
    HPotential::discrete((0..n).map(|_| s.random_range(0.1..2.0)).collect()).expect("positive values")
}

/// Unnormalized weights on `n` states.
pub fn discrete_measure(n: usize, s: &mut RandomStream) -> FiniteMeasure {
    FiniteMeasure::discrete((0..n).map(|_| s.random_range(0.05..1.0)).collect()).expect("positive weights")
}

pub fn probability_vector(n: usize, s: &mut RandomStream) -> Vec<f64> {
    stochastic_matrix(1, n, s).row(0).iter().copied().collect()
}

/// Linear-Gaussian kernel `R^p → R^q` with moderate coefficients.
pub fn linear_gaussian_kernel(p: usize, q: usize, s: &mut RandomStream) -> Kernel {
    let b = normal_matrix(q, p, 0.6, s);
    let beta = normal_vector(q, 0.5, s);
    let cov = spd(q, 0.3, s);
    Kernel::linear_gaussian_on(Space::Euclidean(p), Space::Euclidean(q), b, beta, cov).expect("valid kernel")
}

/// Gaussian potential with positive definite precision.
pub fn gaussian_potential(d: usize, s: &mut RandomStream) -> HPotential {
    let h = spd(d, 0.1, s);
    let f = normal_vector(d, 1.0, s);
    let logc = 0.5 * normal(s);
    HPotential::gaussian_on(Space::Euclidean(d), logc, f, h).expect("valid potential")
}

pub fn gaussian_measure(d: usize, s: &mut RandomStream) -> FiniteMeasure {
    let mass = s.random_range(0.5..2.0);
    let mean = normal_vector(d, 1.0, s);
    FiniteMeasure::gaussian_on(Space::Euclidean(d), mass, mean, spd(d, 0.2, s)).expect("valid measure")
}

/// An approximation of a linear-Gaussian kernel: same `B`, shifted `β`, extra noise.
///
/// Extra noise keeps the weight `(κg)/(κ̃g)` integrable against Gaussian measures.
pub fn inflated_kernel(k: &Kernel, s: &mut RandomStream) -> Kernel {
    let lg = k.as_linear_gaussian().expect("linear-Gaussian kernel");
    let q = lg.target_dim();
    let beta = lg.beta() + normal_vector(q, 0.3, s);
    let cov = lg.q() + spd(q, 0.05, s);
    Kernel::linear_gaussian_on(k.source().clone(), k.target().clone(), lg.b().clone(), beta, cov).expect("valid kernel")
}
