//! Least squares for a VAR(1) whose coefficients are restricted to the
//! support of a binary matrix, plus the finite-sample bias matrix, the
//! asymptotic covariance and the variance inflation of superfluous
//! parameters.
//!
//! Vectorisation is column-major throughout: entry `(i, c)` of an `N x NQ`
//! coefficient matrix sits at position `c N + i` of its `vec`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dgp::{lyapunov_covariance, CoefficientStack, NoiseSpec, PanelTensor};
use crate::error::{NirvarError, Result};
use crate::graph::{from_rows, rows_of, AdjacencyStack};
use crate::linalg::{spd_inverse, spd_solve, sym_eigenvalues_desc};

/// Largest `NQ` for which the dense GLS normal equations are formed.
pub const GLS_MAX_ORDER: usize = 512;
/// Largest number of free parameters for the dense GLS normal equations.
pub const GLS_MAX_PARAMS: usize = 8192;

/// Support of `vec(Â)` and the induced selection matrix `R(Â)`, held as the
/// sorted list of selected `vec` positions; column `j` of `R` is the unit
/// vector at `positions[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RestrictionSet {
    a_hat: AdjacencyStack,
    positions: Vec<usize>,
    row_support: Vec<Vec<usize>>,
}

/// Selection matrix of the ones of `A` in column-major order.
pub fn restriction_matrix(a: &AdjacencyStack) -> RestrictionSet {
    let n = a.n();
    let cols = n * a.q();
    let mut positions = Vec::with_capacity(a.nnz());
    let mut row_support = vec![Vec::new(); n];
    for c in 0..cols {
        for (i, support) in row_support.iter_mut().enumerate() {
            if a.get(i, c) == 1 {
                positions.push(c * n + i);
                support.push(c);
            }
        }
    }
    RestrictionSet { a_hat: a.clone(), positions, row_support }
}

impl RestrictionSet {
    pub fn adjacency(&self) -> &AdjacencyStack {
        &self.a_hat
    }

    pub fn n(&self) -> usize {
        self.a_hat.n()
    }

    pub fn q(&self) -> usize {
        self.a_hat.q()
    }

    /// Number of free parameters `M̂ = |Â|_0`.
    pub fn m(&self) -> usize {
        self.positions.len()
    }

    /// Selected positions of `vec(Â)`, ascending.
    pub fn positions(&self) -> &[usize] {
        &self.positions
    }

    /// Predictor columns allowed in row `i`.
    pub fn row_support(&self, i: usize) -> &[usize] {
        &self.row_support[i]
    }

    /// `(row, column)` of the coefficient carried by parameter `j`.
    pub fn entry(&self, j: usize) -> (usize, usize) {
        let p = self.positions[j];
        (p % self.n(), p / self.n())
    }

    /// Dense `N²Q x M̂` selection matrix; for checks on small instances.
    pub fn dense_r(&self) -> DMatrix<f64> {
        let rows = self.n() * self.n() * self.q();
        let mut r = DMatrix::zeros(rows, self.m());
        for (j, &p) in self.positions.iter().enumerate() {
            r[(p, j)] = 1.0;
        }
        r
    }

    /// `Φ` with `vec(Φ) = R γ`.
    pub fn phi_from_gamma(&self, gamma: &DVector<f64>) -> Result<DMatrix<f64>> {
        if gamma.len() != self.m() {
            return Err(NirvarError::Dimension(format!("γ has {} entries, expected {}", gamma.len(), self.m())));
        }
        let mut phi = DMatrix::zeros(self.n(), self.n() * self.q());
        for (j, &g) in gamma.iter().enumerate() {
            let (i, c) = self.entry(j);
            phi[(i, c)] = g;
        }
        Ok(phi)
    }

    /// `R' vec(Φ)`: the entries of `Φ` on the support.
    pub fn gamma_from_phi(&self, phi: &DMatrix<f64>) -> Result<DVector<f64>> {
        if phi.shape() != (self.n(), self.n() * self.q()) {
            return Err(NirvarError::Dimension("Φ does not match the restriction shape".into()));
        }
        Ok(DVector::from_iterator(self.m(), (0..self.m()).map(|j| phi[self.entry(j)])))
    }

    /// Whether `colsp R(self) ⊆ colsp R(other)`, i.e. the support is contained.
    pub fn is_nested_in(&self, other: &RestrictionSet) -> bool {
        self.missing_from(other) == 0
    }

    fn missing_from(&self, other: &RestrictionSet) -> usize {
        self.positions.iter().filter(|p| other.positions.binary_search(p).is_err()).count()
    }

    fn check_shape(&self, other: &RestrictionSet) -> Result<()> {
        if self.n() != other.n() || self.q() != other.q() {
            return Err(NirvarError::Dimension("restriction sets have different N or Q".into()));
        }
        Ok(())
    }
}

/// `vec` of a matrix in column-major order.
pub fn vec_of(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimationMethod {
    /// Row-by-row least squares, exact for `Σ = σ² I`.
    Ols,
    /// Full generalised least squares with a given `Σ`.
    Gls,
}

/// Lagged design of response feature `q`: predictors `X` (`NQ x (T-1)`) and
/// responses `Y` (`N x (T-1)`).
pub fn design(panel: &PanelTensor, q: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let t = panel.t();
    if q >= panel.q() {
        return Err(NirvarError::Config(format!("target feature {} out of 1..={}", q + 1, panel.q())));
    }
    if t < 2 {
        return Err(NirvarError::Config("need at least two time points to regress on lags".into()));
    }
    let x = panel.stacked().columns(0, t - 1).into_owned();
    let y = panel.feature(q).columns(1, t - 1).into_owned();
    Ok((x, y))
}

/// Fitted restricted VAR for one response feature.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateResult {
    pub q: usize,
    pub method: EstimationMethod,
    pub gamma: DVector<f64>,
    pub phi: DMatrix<f64>,
    /// Pooled residual variance.
    pub sigma2: f64,
    /// Residual covariance `E E' / (T - 1)`.
    pub residual_cov: DMatrix<f64>,
    pub restrictions: RestrictionSet,
}

impl EstimateResult {
    /// `β̂ = R γ̂ = vec(Φ̂)`.
    pub fn beta(&self) -> DVector<f64> {
        vec_of(&self.phi)
    }

    /// One-step prediction `Φ̂ x` from a stacked lagged observation.
    pub fn predict(&self, x_prev: &DVector<f64>) -> DVector<f64> {
        &self.phi * x_prev
    }
}

/// Least squares on the support of `restrictions`. With no noise spec or an
/// isotropic one the problem splits into `N` independent row regressions;
/// a full `Σ` solves the joint GLS normal equations.
pub fn estimate(
    panel: &PanelTensor,
    q: usize,
    restrictions: &RestrictionSet,
    noise: Option<&NoiseSpec>,
) -> Result<EstimateResult> {
    let (x, y) = design(panel, q)?;
    estimate_from_design(&x, &y, q, restrictions, noise)
}

/// [`estimate`] on a prebuilt design.
pub fn estimate_from_design(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    q: usize,
    restrictions: &RestrictionSet,
    noise: Option<&NoiseSpec>,
) -> Result<EstimateResult> {
    let n = restrictions.n();
    if x.nrows() != n * restrictions.q() || y.nrows() != n || x.ncols() != y.ncols() {
        return Err(NirvarError::Dimension(format!(
            "design is {}x{} / {}x{}, restrictions expect N = {n}, Q = {}",
            x.nrows(),
            x.ncols(),
            y.nrows(),
            y.ncols(),
            restrictions.q()
        )));
    }
    let xxt = x * x.transpose();
    let (gamma, method) = match noise {
        Some(ns) if !ns.is_isotropic() => (gls(&xxt, x, y, restrictions, &ns.inverse(n)?)?, EstimationMethod::Gls),
        _ => (row_ols(&xxt, x, y, restrictions)?, EstimationMethod::Ols),
    };
    let phi = restrictions.phi_from_gamma(&gamma)?;
    let resid = y - &phi * x;
    let t_eff = y.ncols() as f64;
    let dof = (n as f64 * t_eff - restrictions.m() as f64).max(1.0);
    let sigma2 = resid.norm_squared() / dof;
    let residual_cov = &resid * resid.transpose() / t_eff;
    Ok(EstimateResult { q, method, gamma, phi, sigma2, residual_cov, restrictions: restrictions.clone() })
}

fn row_ols(
    xxt: &DMatrix<f64>,
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    restrictions: &RestrictionSet,
) -> Result<DVector<f64>> {
    let xyt = x * y.transpose();
    let n = restrictions.n();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let s = restrictions.row_support(i);
            if s.is_empty() {
                return Ok(Vec::new());
            }
            let g = DMatrix::from_fn(s.len(), s.len(), |a, b| xxt[(s[a], s[b])]);
            let rhs = DMatrix::from_fn(s.len(), 1, |a, _| xyt[(s[a], i)]);
            let sol = spd_solve(&g, &rhs, &format!("restricted Gram matrix of row {}", i + 1))?;
            Ok(sol.column(0).iter().copied().collect())
        })
        .collect::<Result<_>>()?;
    // reorder from row-wise to column-major parameter order
    let mut next = vec![0usize; n];
    let gamma = (0..restrictions.m()).map(|j| {
        let (i, _) = restrictions.entry(j);
        let v = rows[i][next[i]];
        next[i] += 1;
        v
    });
    Ok(DVector::from_iterator(restrictions.m(), gamma))
}

fn gls(
    xxt: &DMatrix<f64>,
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    restrictions: &RestrictionSet,
    sigma_inv: &DMatrix<f64>,
) -> Result<DVector<f64>> {
    let nq = restrictions.n() * restrictions.q();
    if nq > GLS_MAX_ORDER || restrictions.m() > GLS_MAX_PARAMS {
        return Err(NirvarError::Config(format!(
            "full-covariance GLS is limited to NQ <= {GLS_MAX_ORDER} and at most {GLS_MAX_PARAMS} parameters \
             (NQ = {nq}, M = {})",
            restrictions.m()
        )));
    }
    let info = restricted_information(restrictions, restrictions, xxt, sigma_inv);
    // R'(X ⊗ Σ^{-1}) vec(Y) = R' vec(Σ^{-1} Y X')
    let rhs_mat = sigma_inv * y * x.transpose();
    let rhs = DMatrix::from_fn(restrictions.m(), 1, |j, _| rhs_mat[restrictions.entry(j)]);
    let sol = spd_solve(&info, &rhs, "restricted GLS information matrix")?;
    Ok(sol.column(0).into_owned())
}

/// `R_a' (G ⊗ Σ^{-1}) R_b` without forming the Kronecker product.
fn restricted_information(
    a: &RestrictionSet,
    b: &RestrictionSet,
    gram: &DMatrix<f64>,
    sigma_inv: &DMatrix<f64>,
) -> DMatrix<f64> {
    let ea: Vec<(usize, usize)> = (0..a.m()).map(|j| a.entry(j)).collect();
    let eb: Vec<(usize, usize)> = (0..b.m()).map(|j| b.entry(j)).collect();
    DMatrix::from_fn(a.m(), b.m(), |r, s| {
        let ((i, c), (i2, c2)) = (ea[r], eb[s]);
        gram[(c, c2)] * sigma_inv[(i, i2)]
    })
}

fn check_gram(r: &RestrictionSet, gram: &DMatrix<f64>, sigma: &DMatrix<f64>) -> Result<()> {
    let nq = r.n() * r.q();
    if gram.shape() != (nq, nq) || sigma.shape() != (r.n(), r.n()) {
        return Err(NirvarError::Dimension(format!(
            "second-moment matrix must be {nq}x{nq} and Σ {}x{}",
            r.n(),
            r.n()
        )));
    }
    Ok(())
}

/// Origin of a second-moment matrix `Γ` of the stacked process.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaSource {
    /// `XX' / (T - 1)` over the lagged design.
    PlugIn,
    /// Stationary covariance of known coefficients.
    Lyapunov,
}

/// `Γ` together with where it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct SecondMoment {
    pub source: GammaSource,
    pub gamma: DMatrix<f64>,
}

impl SecondMoment {
    pub fn plug_in(panel: &PanelTensor) -> Result<Self> {
        let (x, _) = design(panel, 0)?;
        let gamma = &x * x.transpose() / x.ncols() as f64;
        Ok(Self { source: GammaSource::PlugIn, gamma })
    }

    pub fn lyapunov(coeffs: &CoefficientStack, noise: &NoiseSpec, tol: f64) -> Result<Self> {
        Ok(Self { source: GammaSource::Lyapunov, gamma: lyapunov_covariance(coeffs, noise, tol)? })
    }
}

/// Bias matrix `C = {R̂'(G ⊗ Σ^{-1})R̂}^{-1} R̂'(G ⊗ Σ^{-1})R` (`M̂ x M`), with
/// `G = XX'` for the finite-sample version or `G = Γ` for its limit.
pub fn bias_matrix(
    r_true: &RestrictionSet,
    r_est: &RestrictionSet,
    gram: &DMatrix<f64>,
    sigma: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    r_true.check_shape(r_est)?;
    check_gram(r_est, gram, sigma)?;
    let sigma_inv = spd_inverse(sigma, "noise covariance")?;
    let info = restricted_information(r_est, r_est, gram, &sigma_inv);
    let cross = restricted_information(r_est, r_true, gram, &sigma_inv);
    spd_solve(&info, &cross, "restricted information matrix")
}

/// Asymptotic covariance `{R̂'(Γ ⊗ Σ^{-1})R̂}^{-1}` of `√T γ̂`.
pub fn asymptotic_covariance(
    r_est: &RestrictionSet,
    gamma: &DMatrix<f64>,
    sigma: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    check_gram(r_est, gamma, sigma)?;
    let sigma_inv = spd_inverse(sigma, "noise covariance")?;
    let info = restricted_information(r_est, r_est, gamma, &sigma_inv);
    let v = spd_inverse(&info, "restricted information matrix")?;
    Ok((&v + v.transpose()) * 0.5)
}

fn require_nested(r_true: &RestrictionSet, r_est: &RestrictionSet) -> Result<()> {
    r_true.check_shape(r_est)?;
    let missing = r_true.missing_from(r_est);
    if missing > 0 {
        return Err(NirvarError::Config(format!(
            "restrictions are not nested: {missing} of {} true coefficients lie outside the estimated support",
            r_true.m()
        )));
    }
    Ok(())
}

/// `var β̂(Â) - var β̂(A)` on the estimated support (`M̂ x M̂`); positive
/// semi-definite whenever the true support is contained in the estimated one.
pub fn variance_difference(
    r_true: &RestrictionSet,
    r_est: &RestrictionSet,
    gamma: &DMatrix<f64>,
    sigma: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    require_nested(r_true, r_est)?;
    let v_est = asymptotic_covariance(r_est, gamma, sigma)?;
    let v_true = asymptotic_covariance(r_true, gamma, sigma)?;
    let slot: Vec<usize> =
        r_true.positions().iter().map(|p| r_est.positions().binary_search(p).expect("nested")).collect();
    let mut diff = v_est;
    for (a, &sa) in slot.iter().enumerate() {
        for (b, &sb) in slot.iter().enumerate() {
            diff[(sa, sb)] -= v_true[(a, b)];
        }
    }
    Ok(diff)
}

/// `α_V = tr var β̂(Â) / tr var β̂(A)`; since `R'R = I` the traces equal those
/// of the `γ` covariances.
pub fn variance_inflation(
    r_true: &RestrictionSet,
    r_est: &RestrictionSet,
    gamma: &DMatrix<f64>,
    sigma: &DMatrix<f64>,
) -> Result<f64> {
    require_nested(r_true, r_est)?;
    let est = asymptotic_covariance(r_est, gamma, sigma)?.trace();
    let tru = asymptotic_covariance(r_true, gamma, sigma)?.trace();
    Ok(est / tru)
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues_desc(m).last().copied().unwrap_or(0.0)
}

/// Model export; matrices row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "Q")]
    pub q_features: usize,
    /// Response feature, 1-based.
    pub q: usize,
    pub method: EstimationMethod,
    #[serde(rename = "A_hat")]
    pub a_hat: Vec<Vec<u8>>,
    pub gamma: Vec<f64>,
    #[serde(rename = "Phi_hat")]
    pub phi_hat: Vec<Vec<f64>>,
    pub sigma2: f64,
}

impl ModelFile {
    pub fn from_estimate(e: &EstimateResult) -> Self {
        Self {
            n: e.restrictions.n(),
            q_features: e.restrictions.q(),
            q: e.q + 1,
            method: e.method,
            a_hat: rows_of(&e.restrictions.adjacency().dense()),
            gamma: e.gamma.iter().copied().collect(),
            phi_hat: rows_of(&e.phi),
            sigma2: e.sigma2,
        }
    }

    /// `Φ̂` as an `N x NQ` matrix.
    pub fn phi(&self) -> Result<DMatrix<f64>> {
        let phi = from_rows(&self.phi_hat)?;
        if phi.shape() != (self.n, self.n * self.q_features) {
            return Err(NirvarError::Parse(format!("Phi_hat is {:?}, expected N x NQ", phi.shape())));
        }
        Ok(phi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dgp::{lyapunov_covariance, simulate, CoefficientStack};
    use crate::rng::SeedStream;
    use rand::Rng as _;
    use rand_distr::StandardNormal;

    fn stack(rows: &[&[u8]], q: usize) -> AdjacencyStack {
        let n = rows.len();
        let m = DMatrix::from_fn(n, n * q, |i, j| rows[i][j]);
        AdjacencyStack::from_dense(&m, q).unwrap()
    }

    #[test]
    fn selection_matrix_examples() {
        let r = restriction_matrix(&stack(&[&[1, 0], &[0, 1]], 1));
        assert_eq!(r.positions(), &[0, 3]);
        let r = restriction_matrix(&stack(&[&[1, 1], &[0, 1]], 1));
        assert_eq!(r.positions(), &[0, 2, 3]);
        let rd = r.dense_r();
        assert_eq!((rd[(0, 0)], rd[(2, 1)], rd[(3, 2)]), (1.0, 1.0, 1.0));
        assert_eq!(rd.sum(), 3.0);
        let r = restriction_matrix(&AdjacencyStack::ones(3, 2));
        assert_eq!(r.dense_r(), DMatrix::identity(18, 18));
    }

    #[test]
    fn selection_columns_are_orthonormal_and_round_trip() {
        let r = restriction_matrix(&stack(&[&[1, 0, 1, 1], &[1, 1, 0, 1]], 2));
        let rd = r.dense_r();
        assert_eq!(rd.transpose() * &rd, DMatrix::identity(r.m(), r.m()));
        let gamma = DVector::from_fn(r.m(), |j, _| j as f64 + 0.5);
        let phi = r.phi_from_gamma(&gamma).unwrap();
        assert_eq!(vec_of(&phi), &rd * &gamma);
        assert_eq!(r.gamma_from_phi(&phi).unwrap(), gamma);
    }

    #[test]
    fn scalar_ar1() {
        let x: Vec<f64> = vec![1.0, 0.4, -0.3, 0.8, 0.2, -0.5];
        let p = PanelTensor::new(vec![DMatrix::from_row_slice(1, 6, &x)]).unwrap();
        let e = estimate(&p, 0, &restriction_matrix(&AdjacencyStack::ones(1, 1)), None).unwrap();
        let num: f64 = (1..6).map(|t| x[t - 1] * x[t]).sum();
        let den: f64 = (0..5).map(|t| x[t] * x[t]).sum();
        assert!((e.gamma[0] - num / den).abs() < 1e-15);
    }

    /// `{R'(XX' ⊗ Σ^{-1})R}^{-1} R'(X ⊗ Σ^{-1}) vec(Y)` with every Kronecker
    /// product formed explicitly.
    fn kronecker_oracle(
        x: &DMatrix<f64>,
        y: &DMatrix<f64>,
        r: &DMatrix<f64>,
        sigma_inv: &DMatrix<f64>,
    ) -> DVector<f64> {
        let xxt = x * x.transpose();
        let lhs = r.transpose() * xxt.kronecker(sigma_inv) * r;
        let rhs = r.transpose() * x.kronecker(sigma_inv) * vec_of(y);
        lhs.lu().solve(&rhs).unwrap()
    }

    fn random_case(seed: u64) -> (PanelTensor, AdjacencyStack, DMatrix<f64>) {
        let mut rng = SeedStream::new(seed).stream("case", 0);
        let n = rng.random_range(1..=5);
        let q = rng.random_range(1..=2);
        let t = rng.random_range(n * q + 8..=50);
        let mut a = DMatrix::from_fn(n, n * q, |_, _| u8::from(rng.random::<f64>() < 0.6));
        for i in 0..n {
            a[(i, i)] = 1;
        }
        let panel = PanelTensor::new(
            (0..q).map(|_| DMatrix::from_fn(n, t, |_, _| rng.sample::<f64, _>(StandardNormal))).collect(),
        )
        .unwrap();
        let l = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                1.0 + rng.random::<f64>()
            } else if i > j {
                0.3 * rng.random::<f64>()
            } else {
                0.0
            }
        });
        (panel, AdjacencyStack::from_dense(&a, q).unwrap(), &l * l.transpose())
    }

    #[test]
    fn row_ols_matches_kronecker_form() {
        for seed in 0..40 {
            let (panel, a, _) = random_case(seed);
            let r = restriction_matrix(&a);
            for q in 0..panel.q() {
                let e = estimate(&panel, q, &r, None).unwrap();
                let (x, y) = design(&panel, q).unwrap();
                let oracle = kronecker_oracle(&x, &y, &r.dense_r(), &DMatrix::identity(panel.n(), panel.n()));
                assert!((&e.gamma - oracle).amax() < 1e-10, "seed {seed}");
            }
        }
    }

    #[test]
    fn gls_matches_kronecker_form() {
        for seed in 100..120 {
            let (panel, a, sigma) = random_case(seed);
            let r = restriction_matrix(&a);
            let noise = NoiseSpec::full(sigma.clone()).unwrap();
            let e = estimate(&panel, 0, &r, Some(&noise)).unwrap();
            assert_eq!(e.method, EstimationMethod::Gls);
            let (x, y) = design(&panel, 0).unwrap();
            let oracle = kronecker_oracle(&x, &y, &r.dense_r(), &sigma.clone().try_inverse().unwrap());
            assert!((&e.gamma - oracle).amax() < 1e-10, "seed {seed}");
        }
    }

    #[test]
    fn estimate_vanishes_off_support_and_reports_singular_rows() {
        let (panel, a, _) = random_case(7);
        let e = estimate(&panel, 0, &restriction_matrix(&a), None).unwrap();
        let dense = a.dense();
        assert!(e.phi.iter().zip(dense.iter()).all(|(v, m)| *m == 1 || *v == 0.0));
        let zero = PanelTensor::new(vec![DMatrix::zeros(2, 10)]).unwrap();
        let err = estimate(&zero, 0, &restriction_matrix(&AdjacencyStack::ones(2, 1)), None).unwrap_err();
        assert!(err.to_string().contains("row 1"), "{err}");
    }

    #[test]
    fn consistency_at_long_horizon() {
        let a = stack(&[&[1, 1, 0, 0], &[1, 1, 0, 0], &[0, 0, 1, 1], &[0, 0, 1, 1]], 1);
        let phi = DMatrix::from_fn(4, 4, |i, j| if a.get(i, j) == 1 { 0.2 + 0.05 * (i + j) as f64 } else { 0.0 });
        let c = CoefficientStack::from_rows(vec![phi.clone()]).unwrap();
        let mut rng = SeedStream::new(3).stream("long", 0);
        let p = simulate(&c, &NoiseSpec::isotropic(1.0).unwrap(), 100_000, 200, &mut rng).unwrap();
        let e = estimate(&p, 0, &restriction_matrix(&a), None).unwrap();
        assert!((&e.phi - &phi).norm() / phi.norm() < 0.02);
        assert!((e.sigma2 - 1.0).abs() < 0.02);
    }

    fn random_nested(seed: u64) -> (RestrictionSet, RestrictionSet, DMatrix<f64>, DMatrix<f64>) {
        let mut rng = SeedStream::new(seed).stream("nested", 0);
        let n = rng.random_range(2..=6);
        let mut est = DMatrix::from_fn(n, n, |_, _| u8::from(rng.random::<f64>() < 0.7));
        let mut tru = DMatrix::zeros(n, n);
        for i in 0..n {
            est[(i, i)] = 1;
            for j in 0..n {
                if est[(i, j)] == 1 && (i == j || rng.random::<f64>() < 0.5) {
                    tru[(i, j)] = 1;
                }
            }
        }
        let phi = DMatrix::from_fn(n, n, |i, j| if tru[(i, j)] == 1 { rng.random::<f64>() } else { 0.0 });
        let rho = crate::linalg::spectral_radius(&phi).unwrap();
        let c = CoefficientStack::from_rows(vec![phi * (0.8 / rho)]).unwrap();
        let sigma = DMatrix::identity(n, n);
        let gamma = lyapunov_covariance(&c, &NoiseSpec::isotropic(1.0).unwrap(), 1e-13).unwrap();
        (
            restriction_matrix(&AdjacencyStack::from_dense(&tru, 1).unwrap()),
            restriction_matrix(&AdjacencyStack::from_dense(&est, 1).unwrap()),
            gamma,
            sigma,
        )
    }

    #[test]
    fn bias_is_identity_when_supports_agree() {
        let (rt, _, g, s) = random_nested(1);
        let c = bias_matrix(&rt, &rt, &g, &s).unwrap();
        assert!((c - DMatrix::identity(rt.m(), rt.m())).amax() < 1e-10);
    }

    #[test]
    fn nested_supports_are_unbiased_and_missing_edges_are_not() {
        let (rt, re, g, s) = random_nested(2);
        let c = bias_matrix(&rt, &re, &g, &s).unwrap();
        let gamma = DVector::from_fn(rt.m(), |j, _| 0.1 * j as f64 - 0.2);
        let lhs = re.dense_r() * (&c * &gamma);
        assert!((lhs - rt.dense_r() * &gamma).norm() < 1e-10);
        // estimated support misses the true edge (1, 2)
        let tru = restriction_matrix(&stack(&[&[1, 1], &[0, 1]], 1));
        let short = restriction_matrix(&AdjacencyStack::identity(2, 1));
        let phi = DMatrix::from_row_slice(2, 2, &[0.5, 0.3, 0.0, 0.4]);
        let c = CoefficientStack::from_rows(vec![phi.clone()]).unwrap();
        let g = lyapunov_covariance(&c, &NoiseSpec::isotropic(1.0).unwrap(), 1e-14).unwrap();
        let cm = bias_matrix(&tru, &short, &g, &DMatrix::identity(2, 2)).unwrap();
        let gamma = tru.gamma_from_phi(&phi).unwrap();
        assert!((short.dense_r() * (&cm * &gamma) - tru.dense_r() * &gamma).norm() > 1e-2);
    }

    #[test]
    fn asymptotic_variance_of_scalar_ar1() {
        let r = restriction_matrix(&AdjacencyStack::ones(1, 1));
        let (phi, s2) = (0.6, 2.0);
        let gamma = DMatrix::from_element(1, 1, s2 / (1.0 - phi * phi));
        let v = asymptotic_covariance(&r, &gamma, &DMatrix::from_element(1, 1, s2)).unwrap();
        assert!((v[(0, 0)] - (1.0 - phi * phi)).abs() < 1e-14);
    }

    #[test]
    fn unrestricted_covariance_is_kronecker_inverse() {
        let (_, _, g, s) = random_nested(3);
        let n = s.nrows();
        let r = restriction_matrix(&AdjacencyStack::ones(n, 1));
        let v = asymptotic_covariance(&r, &g, &s).unwrap();
        let oracle = g.kronecker(&s.clone().try_inverse().unwrap()).try_inverse().unwrap();
        assert!((v - oracle).amax() < 1e-10);
    }

    #[test]
    fn inflation_is_at_least_one_when_nested() {
        for seed in 10..30 {
            let (rt, re, g, s) = random_nested(seed);
            assert!(variance_inflation(&rt, &re, &g, &s).unwrap() >= 1.0 - 1e-10);
            assert!(min_eigenvalue(&variance_difference(&rt, &re, &g, &s).unwrap()) >= -1e-8);
            assert!((variance_inflation(&rt, &rt, &g, &s).unwrap() - 1.0).abs() < 1e-12);
        }
        let (rt, re, g, s) = random_nested(4);
        if re.m() > rt.m() {
            assert!(variance_inflation(&re, &rt, &g, &s).unwrap_err().is_config());
        }
    }

    #[test]
    fn model_file_round_trip() {
        let (panel, a, _) = random_case(9);
        let e = estimate(&panel, 0, &restriction_matrix(&a), None).unwrap();
        let file = ModelFile::from_estimate(&e);
        let text = serde_json::to_string(&file).unwrap();
        assert!(text.contains("\"Phi_hat\"") && text.contains("\"A_hat\""));
        let back: ModelFile = serde_json::from_str(&text).unwrap();
        assert_eq!(back.phi().unwrap(), e.phi);
    }

    #[test]
    fn plug_in_moment_approaches_lyapunov() {
        let seeds = crate::rng::SeedStream::new(6);
        let phi = DMatrix::from_fn(4, 4, |i, j| if i == j { 0.5 } else if j == (i + 1) % 4 { 0.2 } else { 0.0 });
        let c = CoefficientStack::from_rows(vec![phi]).unwrap();
        let noise = NoiseSpec::isotropic(1.0).unwrap();
        let exact = SecondMoment::lyapunov(&c, &noise, 1e-12).unwrap();
        let panel = simulate(&c, &noise, 40_000, 200, &mut seeds.stream("noise", 0)).unwrap();
        let plug = SecondMoment::plug_in(&panel).unwrap();
        assert_eq!((plug.source, exact.source), (GammaSource::PlugIn, GammaSource::Lyapunov));
        let rel = (&plug.gamma - &exact.gamma).amax() / exact.gamma.amax();
        assert!(rel < 0.05, "relative gap {rel}");
    }
}
