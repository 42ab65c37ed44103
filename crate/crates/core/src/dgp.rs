//! Data generating process: NIRVAR(Φ) panels, coefficient construction with a
//! target spectral radius, and the exact stationary covariance.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::error::{NirvarError, Result};
use crate::graph::AdjacencyStack;
use crate::linalg::{hcat, spectral_radius, vcat};
use crate::rng::Rng;

pub const DEFAULT_BURN_IN: usize = 200;
const LYAPUNOV_MAX_ITER: usize = 100_000;

/// Observed or simulated panel: `Q` features, `N` series, `T` time points.
/// Feature `q` is stored as an `N x T` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelTensor {
    data: Vec<DMatrix<f64>>,
}

impl PanelTensor {
    pub fn new(data: Vec<DMatrix<f64>>) -> Result<Self> {
        let first = data.first().ok_or_else(|| NirvarError::Dimension("panel needs at least one feature".into()))?;
        let (n, t) = first.shape();
        if n == 0 || t == 0 {
            return Err(NirvarError::Dimension("panel has no series or no time points".into()));
        }
        for (q, m) in data.iter().enumerate() {
            if m.shape() != (n, t) {
                return Err(NirvarError::Dimension(format!("feature {q} is {:?}, expected {:?}", m.shape(), (n, t))));
            }
            if m.iter().any(|v| !v.is_finite()) {
                return Err(NirvarError::Config(format!("feature {q} has non-finite values")));
            }
        }
        Ok(Self { data })
    }

    pub fn n(&self) -> usize {
        self.data[0].nrows()
    }

    pub fn q(&self) -> usize {
        self.data.len()
    }

    pub fn t(&self) -> usize {
        self.data[0].ncols()
    }

    pub fn feature(&self, q: usize) -> &DMatrix<f64> {
        &self.data[q]
    }

    pub fn features(&self) -> &[DMatrix<f64>] {
        &self.data
    }

    /// `X_t = (X_t^(1)', ..., X_t^(Q)')'` for all t, as an `NQ x T` matrix.
    pub fn stacked(&self) -> DMatrix<f64> {
        vcat(&self.data)
    }

    /// Stacked observation at time `t`.
    pub fn observation(&self, t: usize) -> DVector<f64> {
        DVector::from_iterator(
            self.n() * self.q(),
            self.data.iter().flat_map(|m| m.column(t).iter().copied().collect::<Vec<_>>()),
        )
    }

    /// Time points `start..start+len`.
    pub fn window(&self, start: usize, len: usize) -> Result<Self> {
        if start + len > self.t() || len == 0 {
            return Err(NirvarError::Dimension(format!("window {start}..{} outside 0..{}", start + len, self.t())));
        }
        Self::new(self.data.iter().map(|m| m.columns(start, len).into_owned()).collect())
    }

    /// Per-series means as a stacked `NQ` vector.
    pub fn means(&self) -> DVector<f64> {
        let t = self.t() as f64;
        DVector::from_iterator(
            self.n() * self.q(),
            self.data.iter().flat_map(|m| m.row_iter().map(|r| r.sum() / t).collect::<Vec<_>>()),
        )
    }

    /// Panel with every series demeaned, together with the removed means.
    pub fn demeaned(&self) -> (Self, DVector<f64>) {
        let means = self.means();
        let n = self.n();
        let data = self
            .data
            .iter()
            .enumerate()
            .map(|(q, m)| {
                let mut out = m.clone();
                for i in 0..n {
                    let mu = means[q * n + i];
                    out.row_mut(i).add_scalar_mut(-mu);
                }
                out
            })
            .collect();
        (Self { data }, means)
    }

    /// Write as CSV with header `t,f1_s1,...,f1_sN,f2_s1,...,fQ_sN`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["t".to_string()];
        for q in 0..self.q() {
            for i in 0..self.n() {
                header.push(format!("f{}_s{}", q + 1, i + 1));
            }
        }
        w.write_record(&header).map_err(csv_err)?;
        for t in 0..self.t() {
            let mut rec = Vec::with_capacity(header.len());
            rec.push((t + 1).to_string());
            for m in &self.data {
                rec.extend(m.column(t).iter().map(|v| v.to_string()));
            }
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Read the CSV layout written by [`PanelTensor::write_csv`]. A header
    /// whose columns do not follow the `fQ_sN` pattern is read as a single
    /// feature with one series per column.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let header: Vec<String> = r.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
        if header.len() < 2 {
            return Err(NirvarError::Parse("panel CSV needs a time column and series".into()));
        }
        let cols = header.len() - 1;
        let parsed: Option<Vec<(usize, usize)>> = header[1..].iter().map(|h| parse_column(h)).collect();
        let (q, n) = match parsed {
            Some(ids) => {
                let q = ids.iter().map(|p| p.0).max().unwrap_or(0);
                let n = ids.iter().map(|p| p.1).max().unwrap_or(0);
                let expected: Vec<(usize, usize)> = (1..=q).flat_map(|f| (1..=n).map(move |s| (f, s))).collect();
                if ids != expected {
                    return Err(NirvarError::Parse("panel columns must be ordered f1_s1..f1_sN, f2_s1..fQ_sN".into()));
                }
                (q, n)
            }
            None => (1, cols),
        };
        let mut columns: Vec<Vec<f64>> = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec.map_err(csv_err)?;
            if rec.len() != cols + 1 {
                return Err(NirvarError::Parse(format!("row {} has {} fields", line + 2, rec.len())));
            }
            let row = rec
                .iter()
                .skip(1)
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|e| NirvarError::Parse(format!("row {}: '{v}' is not a number ({e})", line + 2)))
                })
                .collect::<Result<Vec<f64>>>()?;
            columns.push(row);
        }
        let t = columns.len();
        if t == 0 {
            return Err(NirvarError::Parse("panel CSV has no data rows".into()));
        }
        let data = (0..q).map(|f| DMatrix::from_fn(n, t, |i, s| columns[s][f * n + i])).collect();
        Self::new(data)
    }
}

fn parse_column(h: &str) -> Option<(usize, usize)> {
    let rest = h.trim().strip_prefix('f')?;
    let (f, s) = rest.split_once("_s")?;
    Some((f.parse().ok()?, s.parse().ok()?))
}

fn csv_err(e: csv::Error) -> NirvarError {
    NirvarError::Parse(e.to_string())
}

/// Innovation covariance: `σ² I_N` or a full SPD matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    sigma2: f64,
    full: Option<DMatrix<f64>>,
}

impl NoiseSpec {
    pub fn isotropic(sigma2: f64) -> Result<Self> {
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(NirvarError::Config(format!("noise variance must be positive, got {sigma2}")));
        }
        Ok(Self { sigma2, full: None })
    }

    pub fn full(sigma: DMatrix<f64>) -> Result<Self> {
        if !sigma.is_square() || (&sigma - sigma.transpose()).amax() > 1e-12 {
            return Err(NirvarError::Config("noise covariance must be symmetric".into()));
        }
        if sigma.clone().cholesky().is_none() {
            return Err(NirvarError::Config("noise covariance must be positive definite".into()));
        }
        let sigma2 = sigma.diagonal().mean();
        Ok(Self { sigma2, full: Some(sigma) })
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn is_isotropic(&self) -> bool {
        self.full.is_none()
    }

    /// `Σ` as an `n x n` matrix.
    pub fn matrix(&self, n: usize) -> Result<DMatrix<f64>> {
        match &self.full {
            None => Ok(DMatrix::identity(n, n) * self.sigma2),
            Some(s) if s.nrows() == n => Ok(s.clone()),
            Some(s) => Err(NirvarError::Dimension(format!(
                "noise covariance is {}x{}, panel has N = {n}",
                s.nrows(),
                s.ncols()
            ))),
        }
    }

    /// `Σ^{-1}` as an `n x n` matrix.
    pub fn inverse(&self, n: usize) -> Result<DMatrix<f64>> {
        match &self.full {
            None => Ok(DMatrix::identity(n, n) / self.sigma2),
            Some(_) => crate::linalg::spd_inverse(&self.matrix(n)?, "noise covariance"),
        }
    }

    fn cholesky_factor(&self, n: usize) -> Result<Option<DMatrix<f64>>> {
        match &self.full {
            None => Ok(None),
            Some(_) => {
                let chol = self
                    .matrix(n)?
                    .cholesky()
                    .ok_or_else(|| NirvarError::Config("noise covariance must be positive definite".into()))?;
                Ok(Some(chol.l()))
            }
        }
    }
}

/// How the entries of `Φ̃` are chosen before rescaling.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightRule {
    /// Independent Uniform(0, 1) weights.
    Uniform01,
    /// All weights equal to the constant.
    Constant(f64),
    /// Explicit `N x NQ` weight matrix per response feature.
    Explicit(Vec<DMatrix<f64>>),
}

/// Which matrix the target spectral radius refers to.
#[derive(Debug, Clone, PartialEq)]
pub enum RadiusScaling {
    /// Scale the realised `Ξ` exactly to the target.
    Realized,
    /// Scale so that `E(A) ⊙ Φ̃` has the target radius; `E(A)` is given per
    /// response feature as an `N x NQ` matrix. The realised radius may exceed 1.
    Expected(Vec<DMatrix<f64>>),
}

/// VAR coefficients `Φ_q = (A_q^(1) ⊙ Φ̃_q^(1) | ... )` for every response `q`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientStack {
    rows: Vec<DMatrix<f64>>,
    weights: Vec<DMatrix<f64>>,
    radius: f64,
    expected_radius: Option<f64>,
}

impl CoefficientStack {
    /// From explicit `N x NQ` coefficient rows, one per response feature.
    pub fn from_rows(rows: Vec<DMatrix<f64>>) -> Result<Self> {
        let q = rows.len();
        let n = rows.first().map_or(0, |r| r.nrows());
        if q == 0 || rows.iter().any(|r| r.shape() != (n, n * q)) {
            return Err(NirvarError::Dimension("coefficient rows must all be N x NQ with Q rows".into()));
        }
        let radius = spectral_radius(&vcat(&rows))?;
        Ok(Self { weights: rows.clone(), rows, radius, expected_radius: None })
    }

    pub fn n(&self) -> usize {
        self.rows[0].nrows()
    }

    pub fn q(&self) -> usize {
        self.rows.len()
    }

    /// `Φ_q`, the `N x NQ` coefficient matrix for response feature `q`.
    pub fn row(&self, q: usize) -> &DMatrix<f64> {
        &self.rows[q]
    }

    /// Rescaled weights `Φ̃_q` (before masking by the adjacency).
    pub fn weights(&self, q: usize) -> &DMatrix<f64> {
        &self.weights[q]
    }

    /// Companion matrix `Ξ = (Φ_1; ...; Φ_Q)`.
    pub fn xi(&self) -> DMatrix<f64> {
        vcat(&self.rows)
    }

    /// `ρ(Ξ)` of the realised coefficients.
    pub fn spectral_radius(&self) -> f64 {
        self.radius
    }

    /// Radius of the expected coefficients when scaled in expectation.
    pub fn expected_radius(&self) -> Option<f64> {
        self.expected_radius
    }

    pub fn is_stationary(&self) -> bool {
        self.radius < 1.0
    }
}

/// Build `Φ = A ⊙ Φ̃`, rescaled to spectral radius `target_rho`.
pub fn build_coefficients(
    adjacency: &[AdjacencyStack],
    rule: &WeightRule,
    target_rho: f64,
    scaling: &RadiusScaling,
    rng: &mut Rng,
) -> Result<CoefficientStack> {
    if !(target_rho > 0.0 && target_rho < 1.0) {
        return Err(NirvarError::Config(format!("target spectral radius {target_rho} not in (0, 1)")));
    }
    let q = adjacency.len();
    let n = adjacency.first().map_or(0, AdjacencyStack::n);
    if q == 0 || adjacency.iter().any(|a| a.n() != n || a.q() != q) {
        return Err(NirvarError::Dimension("need one N x NQ adjacency stack per response feature".into()));
    }
    let weights: Vec<DMatrix<f64>> = match rule {
        WeightRule::Uniform01 => (0..q)
            .map(|_| {
                // row-major draw order
                let mut w = DMatrix::zeros(n, n * q);
                for i in 0..n {
                    for c in 0..n * q {
                        w[(i, c)] = rng.random::<f64>();
                    }
                }
                w
            })
            .collect(),
        WeightRule::Constant(c) => vec![DMatrix::from_element(n, n * q, *c); q],
        WeightRule::Explicit(w) => {
            if w.len() != q || w.iter().any(|m| m.shape() != (n, n * q)) {
                return Err(NirvarError::Dimension("explicit weights must be Q matrices of N x NQ".into()));
            }
            w.clone()
        }
    };
    let masked: Vec<DMatrix<f64>> =
        adjacency.iter().zip(&weights).map(|(a, w)| hcat(&a.as_f64()).component_mul(w)).collect();
    let realized = spectral_radius(&vcat(&masked))?;
    let reference = match scaling {
        RadiusScaling::Realized => realized,
        RadiusScaling::Expected(expected) => {
            if expected.len() != q || expected.iter().any(|m| m.shape() != (n, n * q)) {
                return Err(NirvarError::Dimension("expected adjacency must be Q matrices of N x NQ".into()));
            }
            let exp_rows: Vec<DMatrix<f64>> = expected.iter().zip(&weights).map(|(e, w)| e.component_mul(w)).collect();
            spectral_radius(&vcat(&exp_rows))?
        }
    };
    if !(reference > 0.0) {
        return Err(NirvarError::Config("coefficient matrix has spectral radius 0 and cannot be scaled".into()));
    }
    let factor = target_rho / reference;
    let rows: Vec<DMatrix<f64>> = masked.into_iter().map(|m| m * factor).collect();
    let weights: Vec<DMatrix<f64>> = weights.into_iter().map(|w| w * factor).collect();
    let (radius, expected_radius) = match scaling {
        RadiusScaling::Realized => (spectral_radius(&vcat(&rows))?, None),
        RadiusScaling::Expected(_) => {
            let r = realized * factor;
            if r >= 1.0 {
                log::warn!("realised spectral radius {r:.4} is not below 1");
            }
            (r, Some(target_rho))
        }
    };
    Ok(CoefficientStack { rows, weights, radius, expected_radius })
}

/// Simulate `T` observations of the joint VAR(1) `X_t = Ξ X_{t-1} + ε_t` from
/// a zero initial state, discarding the first `burn_in` draws.
pub fn simulate(
    coeffs: &CoefficientStack,
    noise: &NoiseSpec,
    t: usize,
    burn_in: usize,
    rng: &mut Rng,
) -> Result<PanelTensor> {
    if t == 0 {
        return Err(NirvarError::Config("need at least one time point".into()));
    }
    if !coeffs.is_stationary() {
        return Err(NirvarError::Config(format!(
            "spectral radius {:.6} is not below 1; refusing to simulate",
            coeffs.spectral_radius()
        )));
    }
    let (n, q) = (coeffs.n(), coeffs.q());
    let xi = coeffs.xi();
    let chol = noise.cholesky_factor(n)?;
    let scale = noise.sigma2().sqrt();
    let mut x = DVector::zeros(n * q);
    let mut out = vec![DMatrix::zeros(n, t); q];
    let mut z = DVector::zeros(n);
    for step in 0..burn_in + t {
        let mut next = &xi * &x;
        for f in 0..q {
            for v in z.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
            let eps = match &chol {
                Some(l) => l * &z,
                None => &z * scale,
            };
            let mut block = next.rows_mut(f * n, n);
            block += eps;
        }
        x = next;
        if step >= burn_in {
            let col = step - burn_in;
            for (f, m) in out.iter_mut().enumerate() {
                m.set_column(col, &x.rows(f * n, n));
            }
        }
    }
    PanelTensor::new(out)
}

/// Stationary covariance of the joint process, `Σ_k Ξ^k (I_Q ⊗ Σ) (Ξ')^k`,
/// summed until the Frobenius norm of the next term drops below `tol`.
pub fn lyapunov_covariance(coeffs: &CoefficientStack, noise: &NoiseSpec, tol: f64) -> Result<DMatrix<f64>> {
    let (n, q) = (coeffs.n(), coeffs.q());
    let sigma = noise.matrix(n)?;
    let mut full = DMatrix::zeros(n * q, n * q);
    for f in 0..q {
        full.view_mut((f * n, f * n), (n, n)).copy_from(&sigma);
    }
    lyapunov_series(&coeffs.xi(), &full, tol)
}

/// Solution `Γ` of `Γ - Φ Γ Φ' = Σ` by the series `Σ_k Φ^k Σ (Φ')^k`.
pub fn lyapunov_series(phi: &DMatrix<f64>, sigma: &DMatrix<f64>, tol: f64) -> Result<DMatrix<f64>> {
    if !phi.is_square() || phi.shape() != sigma.shape() {
        return Err(NirvarError::Dimension("Φ and Σ must be square of equal size".into()));
    }
    let mut gamma = sigma.clone();
    let mut term = sigma.clone();
    let phi_t = phi.transpose();
    for _ in 0..LYAPUNOV_MAX_ITER {
        term = phi * term * &phi_t;
        gamma += &term;
        let size = term.norm();
        if !size.is_finite() {
            return Err(NirvarError::Numerical("Lyapunov series diverged".into()));
        }
        if size < tol {
            return Ok(gamma);
        }
    }
    Err(NirvarError::Numerical(format!(
        "Lyapunov series did not reach tolerance {tol:e} within {LYAPUNOV_MAX_ITER} terms"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{sample_adjacency, BlockModel, CommunityAssignment};
    use crate::rng::SeedStream;

    fn rng(name: &str) -> Rng {
        SeedStream::new(11).stream(name, 0)
    }

    #[test]
    fn identity_adjacency_constant_weights() {
        let a = AdjacencyStack::identity(3, 1);
        let c =
            build_coefficients(&[a], &WeightRule::Constant(1.0), 0.5, &RadiusScaling::Realized, &mut rng("w")).unwrap();
        assert!((c.row(0) - DMatrix::identity(3, 3) * 0.5).amax() < 1e-15);
    }

    #[test]
    fn uniform_weights_hit_target_radius() {
        let model = BlockModel::planted(10, 1.0, 0.0).unwrap();
        let z = CommunityAssignment::contiguous(100, 10).unwrap();
        let a = AdjacencyStack::new(vec![sample_adjacency(&model, &z, &mut rng("g")).unwrap()]).unwrap();
        let c = build_coefficients(&[a.clone()], &WeightRule::Uniform01, 0.9, &RadiusScaling::Realized, &mut rng("w"))
            .unwrap();
        let rho = spectral_radius(c.row(0)).unwrap();
        assert!((rho - 0.9).abs() < 1e-8, "{rho}");
        // support is contained in the adjacency
        let dense = a.dense();
        assert!(c.row(0).iter().zip(dense.iter()).all(|(v, m)| *m == 1 || *v == 0.0));
    }

    #[test]
    fn zero_adjacency_and_bad_target_rejected() {
        let a = AdjacencyStack::new(vec![DMatrix::zeros(3, 3)]).unwrap();
        let r = build_coefficients(&[a], &WeightRule::Uniform01, 0.5, &RadiusScaling::Realized, &mut rng("w"));
        assert!(r.is_err());
        let a = AdjacencyStack::identity(3, 1);
        for bad in [0.0, 1.0, 1.2] {
            assert!(build_coefficients(
                &[a.clone()],
                &WeightRule::Uniform01,
                bad,
                &RadiusScaling::Realized,
                &mut rng("w")
            )
            .is_err());
        }
    }

    #[test]
    fn white_noise_covariance() {
        let c = CoefficientStack::from_rows(vec![DMatrix::zeros(3, 3)]).unwrap();
        let p = simulate(&c, &NoiseSpec::isotropic(1.0).unwrap(), 5000, 200, &mut rng("n")).unwrap();
        let s = p.feature(0) * p.feature(0).transpose() / 5000.0;
        for i in 0..3 {
            assert!((s[(i, i)] - 1.0).abs() < 0.1);
        }
    }

    #[test]
    fn scalar_ar1_variance() {
        let c = CoefficientStack::from_rows(vec![DMatrix::from_element(1, 1, 0.5)]).unwrap();
        let p = simulate(&c, &NoiseSpec::isotropic(1.0).unwrap(), 50_000, 200, &mut rng("ar")).unwrap();
        let x = p.feature(0);
        let var = x.iter().map(|v| v * v).sum::<f64>() / 50_000.0;
        assert!((var - 4.0 / 3.0).abs() < 0.05, "{var}");
    }

    #[test]
    fn simulation_is_deterministic_and_refuses_explosive() {
        let c = CoefficientStack::from_rows(vec![DMatrix::from_element(2, 2, 0.3)]).unwrap();
        let noise = NoiseSpec::isotropic(1.0).unwrap();
        let a = simulate(&c, &noise, 50, 10, &mut rng("d")).unwrap();
        let b = simulate(&c, &noise, 50, 10, &mut rng("d")).unwrap();
        assert_eq!(a, b);
        let bad = CoefficientStack::from_rows(vec![DMatrix::from_element(2, 2, 0.6)]).unwrap();
        assert!(simulate(&bad, &noise, 10, 0, &mut rng("d")).is_err());
    }

    #[test]
    fn lyapunov_closed_forms() {
        let c = CoefficientStack::from_rows(vec![DMatrix::identity(2, 2) * 0.5]).unwrap();
        let g = lyapunov_covariance(&c, &NoiseSpec::isotropic(1.0).unwrap(), 1e-14).unwrap();
        assert!((g - DMatrix::identity(2, 2) * (4.0 / 3.0)).amax() < 1e-12);
        let z = CoefficientStack::from_rows(vec![DMatrix::zeros(2, 2)]).unwrap();
        let sigma = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let g = lyapunov_covariance(&z, &NoiseSpec::full(sigma.clone()).unwrap(), 1e-14).unwrap();
        assert!((g - sigma).amax() < 1e-15);
    }

    #[test]
    fn lyapunov_residual_for_symmetric_phi() {
        let mut r = rng("sym");
        let m = DMatrix::from_fn(8, 8, |_, _| r.random::<f64>() - 0.5);
        let sym = &m + m.transpose();
        let rho = spectral_radius(&sym).unwrap();
        let phi = sym * (0.8 / rho);
        let sigma = DMatrix::identity(8, 8);
        let g = lyapunov_series(&phi, &sigma, 1e-13).unwrap();
        let resid = &g - &phi * &g * phi.transpose() - &sigma;
        assert!(resid.norm() < 1e-6);
    }

    #[test]
    fn non_convergent_series_errors() {
        let phi = DMatrix::identity(2, 2);
        assert!(lyapunov_series(&phi, &DMatrix::identity(2, 2), 1e-10).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let c = CoefficientStack::from_rows(vec![DMatrix::from_element(3, 6, 0.1), DMatrix::from_element(3, 6, 0.05)])
            .unwrap();
        let p = simulate(&c, &NoiseSpec::isotropic(1.0).unwrap(), 20, 5, &mut rng("csv")).unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,f1_s1,f1_s2,f1_s3,f2_s1,f2_s2,f2_s3\n"));
        let back = PanelTensor::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn generic_header_reads_as_single_feature() {
        let text = "date,a,b\n1,0.5,1.0\n2,-0.5,2.0\n";
        let p = PanelTensor::read_csv(text.as_bytes()).unwrap();
        assert_eq!((p.q(), p.n(), p.t()), (1, 2, 2));
        assert_eq!(p.feature(0)[(1, 1)], 2.0);
        assert!(PanelTensor::read_csv("t,a\n1,x\n".as_bytes()).is_err());
    }

    #[test]
    fn noise_spec_validation() {
        assert!(NoiseSpec::isotropic(0.0).is_err());
        assert!(NoiseSpec::full(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0])).is_err());
        let ok = NoiseSpec::full(DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0])).unwrap();
        assert!((ok.inverse(2).unwrap() * ok.matrix(2).unwrap() - DMatrix::identity(2, 2)).amax() < 1e-12);
    }
}
