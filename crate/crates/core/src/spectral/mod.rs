//! Sample covariance and precision stacks, the unfolded spectral embedding,
//! and Marčenko-Pastur rank selection.

pub mod mp;

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dgp::PanelTensor;
use crate::error::{NirvarError, Result};
use crate::linalg::{hcat, spd_inverse, sym_eigenvalues_desc};
pub use mp::{fit_mp_scale, imp_cdf, imp_density, mp_cdf, mp_density, mp_upper_edge, MpFit, MpParams};

/// Singular values below this are treated as numerically zero.
pub const SINGULAR_FLOOR: f64 = 1e-12;

/// Matrix whose spectrum is embedded.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovarianceMode {
    #[default]
    Covariance,
    Precision,
    Correlation,
}

/// Per-feature `N x N` blocks `S^(q) = X^(q) X^(q)' / T`, or their inverses
/// or correlation versions.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceStack {
    blocks: Vec<DMatrix<f64>>,
    mode: CovarianceMode,
    t: usize,
}

impl CovarianceStack {
    pub fn blocks(&self) -> &[DMatrix<f64>] {
        &self.blocks
    }

    pub fn mode(&self) -> CovarianceMode {
        self.mode
    }

    pub fn n(&self) -> usize {
        self.blocks[0].nrows()
    }

    pub fn q(&self) -> usize {
        self.blocks.len()
    }

    pub fn t(&self) -> usize {
        self.t
    }

    /// Aspect ratio `N / T`.
    pub fn eta(&self) -> f64 {
        self.n() as f64 / self.t as f64
    }

    /// `(S^(1) | ... | S^(Q))`.
    pub fn unfolded(&self) -> DMatrix<f64> {
        hcat(&self.blocks)
    }
}

/// Build the per-feature stack. The panel is used as given; callers demean.
pub fn covariance_stack(panel: &PanelTensor, mode: CovarianceMode) -> Result<CovarianceStack> {
    let (n, t) = (panel.n(), panel.t());
    if mode == CovarianceMode::Precision && t <= n {
        return Err(NirvarError::Config(format!(
            "precision mode needs more time points than series (T = {t}, N = {n}); the sample covariance is not invertible"
        )));
    }
    let blocks = panel
        .features()
        .par_iter()
        .enumerate()
        .map(|(q, x)| {
            let s = x * x.transpose() / t as f64;
            let s = (&s + s.transpose()) * 0.5;
            match mode {
                CovarianceMode::Covariance => Ok(s),
                CovarianceMode::Precision => {
                    let omega = spd_inverse(&s, &format!("sample covariance of feature {}", q + 1))?;
                    Ok((&omega + omega.transpose()) * 0.5)
                }
                CovarianceMode::Correlation => {
                    let d = s.diagonal();
                    if let Some(i) = d.iter().position(|&v| v <= 0.0) {
                        return Err(NirvarError::Config(format!(
                            "series {} of feature {} has zero variance; correlation undefined",
                            i + 1,
                            q + 1
                        )));
                    }
                    let inv_sd = d.map(|v| 1.0 / v.sqrt());
                    let mut c = DMatrix::from_fn(n, n, |i, j| s[(i, j)] * inv_sd[i] * inv_sd[j]);
                    c.fill_diagonal(1.0);
                    Ok(c)
                }
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CovarianceStack { blocks, mode, t })
}

/// How embedded coordinates are scaled before clustering.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingScale {
    /// `V D^{1/2}`.
    #[default]
    Sqrt,
    /// `V Λ_Φ^{1/2}` with `λ_Φ = √(1 - σ²/λ)`, the autoregressive spectrum
    /// implied by a covariance eigenvalue `λ`.
    Rescaled,
}

/// Truncated SVD `S ≈ U D V'` of the unfolded stack.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingResult {
    u: DMatrix<f64>,
    v: DMatrix<f64>,
    singular_values: Vec<f64>,
    n: usize,
    scaled_values: Option<Vec<f64>>,
}

impl EmbeddingResult {
    pub fn d_hat(&self) -> usize {
        self.singular_values.len()
    }

    pub fn q(&self) -> usize {
        self.v.nrows() / self.n
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    /// Left singular vectors `U` (`N x d`).
    pub fn u(&self) -> &DMatrix<f64> {
        &self.u
    }

    /// Right singular vectors `V` (`NQ x d`).
    pub fn v(&self) -> &DMatrix<f64> {
        &self.v
    }

    /// Left embedding `U D^{1/2}`.
    pub fn left(&self) -> DMatrix<f64> {
        &self.u * self.sqrt_d()
    }

    /// Right embedding block `Ψ̂^(q)`, rows `ψ̂_i^(q)` of `V D^{1/2}`.
    pub fn psi(&self, q: usize) -> DMatrix<f64> {
        self.v.rows(q * self.n, self.n) * self.sqrt_d()
    }

    /// All right embedding blocks.
    pub fn psi_per_feature(&self) -> Vec<DMatrix<f64>> {
        (0..self.q()).map(|q| self.psi(q)).collect()
    }

    /// Rescaled spectrum `λ_Φ`, if computed.
    pub fn scaled_values(&self) -> Option<&[f64]> {
        self.scaled_values.as_deref()
    }

    /// Replace the scale `D^{1/2}` by `Λ_Φ^{1/2}` computed from the singular
    /// values divided by the noise scale `sigma2`.
    pub fn with_rescaled_spectrum(mut self, sigma2: f64) -> Self {
        let normalised: Vec<f64> = self.singular_values.iter().map(|s| s / sigma2).collect();
        self.scaled_values = Some(scale_spectrum(&normalised));
        self
    }

    /// Clustering coordinates per feature under the requested scaling; the
    /// rescaled variant needs [`EmbeddingResult::with_rescaled_spectrum`].
    pub fn coordinates(&self, scale: EmbeddingScale) -> Vec<DMatrix<f64>> {
        match (scale, &self.scaled_values) {
            (EmbeddingScale::Rescaled, Some(lp)) => {
                let root = DMatrix::from_diagonal(&DVector::from_iterator(lp.len(), lp.iter().map(|v| v.sqrt())));
                (0..self.q()).map(|q| self.v.rows(q * self.n, self.n) * &root).collect()
            }
            _ => self.psi_per_feature(),
        }
    }

    fn sqrt_d(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_iterator(
            self.singular_values.len(),
            self.singular_values.iter().map(|s| s.sqrt()),
        ))
    }
}

/// Unfolded adjacency spectral embedding of rank `d`.
pub fn uase(stack: &CovarianceStack, d: usize) -> Result<EmbeddingResult> {
    let n = stack.n();
    if d == 0 || d > n {
        return Err(NirvarError::Config(format!("embedding dimension {d} not in 1..={n}")));
    }
    let svd = stack.unfolded().svd(true, false);
    let u = svd.u.ok_or_else(|| NirvarError::Numerical("SVD did not return singular vectors".into()))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let kept: Vec<usize> = order.into_iter().take(d).filter(|&i| svd.singular_values[i] > SINGULAR_FLOOR).collect();
    if kept.len() < d {
        log::warn!("requested rank {d} exceeds numerical rank {}; dropping tiny singular values", kept.len());
    }
    if kept.is_empty() {
        return Err(NirvarError::Numerical("stack has no singular values above the floor".into()));
    }
    let u_d = DMatrix::from_fn(n, kept.len(), |i, j| u[(i, kept[j])]);
    let values: Vec<f64> = kept.iter().map(|&i| svd.singular_values[i]).collect();
    // V = S' U D^{-1}, block by block, so identical layers embed identically
    let inv_d = DMatrix::from_diagonal(&DVector::from_iterator(values.len(), values.iter().map(|s| 1.0 / s)));
    let u_scaled = &u_d * inv_d;
    let v_blocks: Vec<DMatrix<f64>> = stack.blocks().iter().map(|s| s.transpose() * &u_scaled).collect();
    Ok(EmbeddingResult { u: u_d, v: crate::linalg::vcat(&v_blocks), singular_values: values, n, scaled_values: None })
}

/// `λ_Φ = √(1 - 1/λ_Γ)` for `λ_Γ > 1`, and 0 otherwise.
pub fn scale_spectrum(lambda_gamma: &[f64]) -> Vec<f64> {
    lambda_gamma.iter().map(|&l| if l > 1.0 { (1.0 - 1.0 / l).sqrt() } else { 0.0 }).collect()
}

/// Number of covariance eigenvalues above the MP upper edge, at least 1.
pub fn select_rank_cov(eigenvalues: &[f64], eta: f64, sigma2: f64) -> usize {
    let x_plus = mp_upper_edge(eta, sigma2);
    with_fallback(eigenvalues.iter().filter(|&&l| l > x_plus).count())
}

/// Number of precision eigenvalues below the inverse-MP lower edge, at least 1.
pub fn select_rank_prec(eigenvalues: &[f64], eta: f64, sigma2: f64) -> Result<usize> {
    let y_minus = MpParams::new(eta, sigma2)?.y_minus;
    Ok(with_fallback(eigenvalues.iter().filter(|&&z| z < y_minus).count()))
}

fn with_fallback(count: usize) -> usize {
    if count == 0 {
        log::warn!("no eigenvalue separates from the noise bulk; using rank 1");
        1
    } else {
        count
    }
}

/// Where the MP scale came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleSource {
    KsFit,
    MeanEigenvalue,
    Fixed,
}

/// Rank selection summary for one feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenReport {
    pub feature: usize,
    pub mode: CovarianceMode,
    pub eta: f64,
    pub sigma2: f64,
    pub sigma2_source: ScaleSource,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ks: Option<f64>,
    pub x_plus: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y_minus: Option<f64>,
    pub exceedances: usize,
    pub d_hat: usize,
    pub eigenvalues: Vec<f64>,
}

/// Fit the MP scale and select the rank of every feature of the stack.
pub fn rank_reports(stack: &CovarianceStack) -> Result<Vec<EigenReport>> {
    let eta = stack.eta();
    stack
        .blocks()
        .par_iter()
        .enumerate()
        .map(|(q, block)| {
            let eigenvalues = sym_eigenvalues_desc(block);
            // the MP law describes covariance eigenvalues; precision
            // eigenvalues are their reciprocals
            let cov_eigs: Vec<f64> = match stack.mode() {
                CovarianceMode::Precision => eigenvalues.iter().map(|z| 1.0 / z).collect(),
                _ => eigenvalues.clone(),
            };
            let (sigma2, source, ks) = match stack.mode() {
                CovarianceMode::Correlation => (1.0, ScaleSource::Fixed, None),
                _ if eta < 1.0 && cov_eigs.len() >= mp::MIN_FIT_EIGENVALUES => {
                    let fit = fit_mp_scale(&cov_eigs, eta)?;
                    (fit.sigma2, ScaleSource::KsFit, Some(fit.ks))
                }
                _ => {
                    log::warn!(
                        "feature {}: Marčenko-Pastur scale fit needs N < T and N >= {}; using the mean eigenvalue",
                        q + 1,
                        mp::MIN_FIT_EIGENVALUES
                    );
                    let mean = cov_eigs.iter().sum::<f64>() / cov_eigs.len() as f64;
                    if !(mean > 0.0) {
                        return Err(NirvarError::Numerical(format!("feature {} has a zero spectrum", q + 1)));
                    }
                    (mean, ScaleSource::MeanEigenvalue, None)
                }
            };
            let x_plus = mp_upper_edge(eta, sigma2);
            let (exceedances, y_minus) = match stack.mode() {
                CovarianceMode::Precision => {
                    let y_minus = MpParams::new(eta, sigma2)?.y_minus;
                    (eigenvalues.iter().filter(|&&z| z < y_minus).count(), Some(y_minus))
                }
                _ => (eigenvalues.iter().filter(|&&l| l > x_plus).count(), None),
            };
            Ok(EigenReport {
                feature: q + 1,
                mode: stack.mode(),
                eta,
                sigma2,
                sigma2_source: source,
                ks,
                x_plus,
                y_minus,
                exceedances,
                d_hat: with_fallback(exceedances),
                eigenvalues,
            })
        })
        .collect()
}

/// Embedding export with header `series,feature,dim1..dimd`.
pub fn write_embedding_csv<W: Write>(coords: &[DMatrix<f64>], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let d = coords.first().map_or(0, |c| c.ncols());
    let mut header = vec!["series".to_string(), "feature".to_string()];
    header.extend((1..=d).map(|k| format!("dim{k}")));
    w.write_record(&header).map_err(|e| NirvarError::Parse(e.to_string()))?;
    for (q, c) in coords.iter().enumerate() {
        for i in 0..c.nrows() {
            let mut rec = vec![(i + 1).to_string(), (q + 1).to_string()];
            rec.extend(c.row(i).iter().map(|v| v.to_string()));
            w.write_record(&rec).map_err(|e| NirvarError::Parse(e.to_string()))?;
        }
    }
    w.flush()?;
    Ok(())
}
