//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{BffgError, Result};

/// Asymmetry above this is rejected rather than symmetrized away.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Returns `(A + Aᵀ) / 2`, rejecting matrices whose asymmetry exceeds [`SYMMETRY_TOL`].
pub fn symmetrize(a: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    if a.nrows() != a.ncols() {
        return Err(BffgError::InvalidPotential(format!(
            "{what} must be square, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let scale = a.amax().max(1.0);
    let asym = (a - a.transpose()).amax();
    if asym > SYMMETRY_TOL * scale {
        return Err(BffgError::InvalidPotential(format!(
            "{what} is not symmetric (max asymmetry {asym:e})"
        )));
    }
    Ok((a + a.transpose()) * 0.5)
}

/// Symmetrizes without checking; for matrices that are symmetric up to rounding by construction.
pub fn sym(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

pub fn cholesky(a: &DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    if a.iter().any(|v| !v.is_finite()) {
        return Err(BffgError::NotPositiveDefinite(format!("{what} has non-finite entries")));
    }
    Cholesky::new(a.clone()).ok_or_else(|| BffgError::NotPositiveDefinite(what.to_string()))
}

pub fn chol_logdet(c: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * c.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

/// Smallest eigenvalue of a symmetric matrix (0 for the empty matrix).
pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    a.clone().symmetric_eigenvalues().min()
}

/// Positive semidefinite up to a tolerance scaled by the matrix magnitude.
pub fn is_psd(a: &DMatrix<f64>) -> bool {
    let scale = a.amax().max(1.0);
    min_eigenvalue(a) >= -1e-9 * scale
}

pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

pub fn kron_vec(a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(a.len() * b.len());
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i * b.len() + j] = x * y;
        }
    }
    out
}

pub fn block_diag(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), (b.nrows(), b.ncols())).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

pub fn concat(parts: &[&DVector<f64>]) -> DVector<f64> {
    DVector::from_iterator(
        parts.iter().map(|p| p.len()).sum(),
        parts.iter().flat_map(|p| p.iter().copied()),
    )
}

/// Dense matrix from nested rows; every row must have the same length.
pub fn from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(BffgError::Format("ragged matrix rows".into()));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// Solves `X · S = C` for `X`, i.e. returns `C S⁻¹`, via an LU factorization of `Sᵀ`.
pub fn right_solve(c: &DMatrix<f64>, s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let lu = s.transpose().lu();
    lu.solve(&c.transpose())
        .map(|x| x.transpose())
        .ok_or_else(|| BffgError::Numerical("singular matrix in solve".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetrize_rejects_asymmetric() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(symmetrize(&a, "H").is_err());
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5 + 1e-13, 1.0]);
        let s = symmetrize(&b, "H").unwrap();
        assert_eq!(s[(0, 1)], s[(1, 0)]);
    }

    #[test]
    fn kron_vec_matches_matrix_kron() {
        let a = DVector::from_vec(vec![1.0, 2.0]);
        let b = DVector::from_vec(vec![3.0, 4.0, 5.0]);
        let m = kron(
            &DMatrix::from_column_slice(2, 1, a.as_slice()),
            &DMatrix::from_column_slice(3, 1, b.as_slice()),
        );
        assert_eq!(kron_vec(&a, &b).as_slice(), m.as_slice());
    }

    #[test]
    fn right_solve_inverts() {
        let s = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 3.0]);
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let x = right_solve(&c, &s).unwrap();
        assert!((x * s - c).amax() < 1e-14);
    }
}
