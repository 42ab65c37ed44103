//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{NirvarError, Result};

/// Matrices up to this order get an exact eigensolve for the spectral radius.
pub const EXACT_RADIUS_MAX_ORDER: usize = 512;

const POWER_TOL: f64 = 1e-10;
const POWER_MAX_ITER: usize = 10_000;

/// Spectral radius `max |λ|` of a square matrix.
pub fn spectral_radius(m: &DMatrix<f64>) -> Result<f64> {
    if !m.is_square() {
        return Err(NirvarError::Dimension(format!("spectral radius of a {}x{} matrix", m.nrows(), m.ncols())));
    }
    if m.nrows() == 0 {
        return Ok(0.0);
    }
    if m.nrows() <= EXACT_RADIUS_MAX_ORDER {
        let eig = m.clone().complex_eigenvalues();
        return Ok(eig.iter().map(|z| z.norm()).fold(0.0, f64::max));
    }
    power_iteration_radius(m)
}

/// Spectral radius by power iteration. Converges for matrices whose dominant
/// eigenvalue is simple in modulus (e.g. irreducible non-negative matrices).
pub fn power_iteration_radius(m: &DMatrix<f64>) -> Result<f64> {
    let n = m.nrows();
    let mut x = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut prev = f64::NAN;
    for _ in 0..POWER_MAX_ITER {
        // two steps per round so that a ±λ pair does not oscillate
        let y = m * (m * &x);
        let norm = y.norm();
        if norm == 0.0 {
            return Ok(0.0);
        }
        let est = norm.sqrt();
        x = y / norm;
        if (est - prev).abs() <= POWER_TOL * est {
            return Ok(est);
        }
        prev = est;
    }
    Err(NirvarError::Numerical(format!("power iteration did not converge within {POWER_MAX_ITER} iterations")))
}

/// Symmetric eigendecomposition with eigenvalues sorted in decreasing order.
pub fn sym_eigen_desc(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Symmetric eigenvalues in decreasing order.
pub fn sym_eigenvalues_desc(m: &DMatrix<f64>) -> Vec<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let mut v: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

/// Inverse of a symmetric positive definite matrix via Cholesky.
pub fn spd_inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let chol = m.clone().cholesky().ok_or_else(|| NirvarError::Singular(format!("{what} is not positive definite")))?;
    Ok(chol.inverse())
}

/// Solve `m x = b` for symmetric positive definite `m`.
pub fn spd_solve(m: &DMatrix<f64>, b: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let chol = m.clone().cholesky().ok_or_else(|| NirvarError::Singular(format!("{what} is not positive definite")))?;
    Ok(chol.solve(b))
}

/// Largest principal angle (radians) between the column spaces of two
/// matrices with orthonormal columns.
pub fn max_principal_angle(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    // sin θ_max = ‖(I - AA')B‖_2; avoids acos precision loss near zero angles.
    let resid = b - a * (a.transpose() * b);
    let sin_max = resid.singular_values().iter().copied().fold(0.0, f64::max);
    sin_max.min(1.0).asin()
}

/// Horizontal concatenation `(m_1 | ... | m_k)` of equally tall blocks.
pub fn hcat(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let rows = blocks.first().map_or(0, |b| b.nrows());
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut c = 0;
    for b in blocks {
        out.view_mut((0, c), (rows, b.ncols())).copy_from(b);
        c += b.ncols();
    }
    out
}

/// Vertical concatenation `(m_1; ...; m_k)` of equally wide blocks.
pub fn vcat(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let cols = blocks.first().map_or(0, |b| b.ncols());
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut r = 0;
    for b in blocks {
        out.view_mut((r, 0), (b.nrows(), cols)).copy_from(b);
        r += b.nrows();
    }
    out
}
