//! End-to-end NIRVAR fit: demean, covariance stack, rank selection,
//! embedding, mixture clustering, clique restrictions, restricted least
//! squares.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::cluster::{build_restrictions, gmm_fit, hard_assign, GmmConfig, GmmModel};
use crate::dgp::{NoiseSpec, PanelTensor};
use crate::error::{NirvarError, Result};
use crate::graph::CommunityAssignment;
use crate::restricted_var::{estimate, restriction_matrix, EstimateResult, RestrictionSet};
use crate::rng::SeedStream;
use crate::spectral::{
    covariance_stack, rank_reports, uase, CovarianceMode, EigenReport, EmbeddingResult, EmbeddingScale,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub mode: CovarianceMode,
    /// Clustering coordinates; by default rescaled for a single feature in
    /// covariance mode and `V D^{1/2}` otherwise.
    pub scale: Option<EmbeddingScale>,
    /// Fixed embedding rank instead of the MP selection.
    pub d: Option<usize>,
    /// Number of clusters; defaults to the embedding rank.
    pub k: Option<usize>,
    pub demean: bool,
    pub gmm: GmmConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            mode: CovarianceMode::Covariance,
            scale: None,
            d: None,
            k: None,
            demean: true,
            gmm: GmmConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn resolved_scale(&self, q: usize) -> EmbeddingScale {
        match self.scale {
            Some(EmbeddingScale::Rescaled) if self.mode == CovarianceMode::Precision => {
                log::warn!("rescaled coordinates are defined for covariance spectra; using V D^1/2");
                EmbeddingScale::Sqrt
            }
            Some(s) => s,
            None if q == 1 && self.mode == CovarianceMode::Covariance => EmbeddingScale::Rescaled,
            None => EmbeddingScale::Sqrt,
        }
    }
}

/// Output of the structure-learning half of the pipeline.
#[derive(Debug, Clone)]
pub struct StructureFit {
    pub reports: Vec<EigenReport>,
    pub d: usize,
    pub k: usize,
    pub scale: EmbeddingScale,
    pub embedding: EmbeddingResult,
    pub coordinates: Vec<DMatrix<f64>>,
    pub mixtures: Vec<GmmModel>,
    pub assignments: Vec<CommunityAssignment>,
    pub restrictions: RestrictionSet,
}

/// Embed and cluster a (demeaned) panel and build the clique restrictions.
pub fn fit_structure(panel: &PanelTensor, config: &PipelineConfig, seeds: &SeedStream) -> Result<StructureFit> {
    let n = panel.n();
    let stack = covariance_stack(panel, config.mode)?;
    let reports = rank_reports(&stack)?;
    let d = match config.d {
        Some(d) => d,
        None => {
            let d = reports.iter().map(|r| r.d_hat).max().unwrap_or(1);
            if panel.q() > 1 {
                log::info!(
                    "per-feature ranks {:?}; using their maximum {d}",
                    reports.iter().map(|r| r.d_hat).collect::<Vec<_>>()
                );
            }
            d
        }
    };
    if d == 0 || d > n {
        return Err(NirvarError::Config(format!("embedding rank {d} not in 1..={n}")));
    }
    let scale = config.resolved_scale(panel.q());
    let mut embedding = uase(&stack, d)?;
    if scale == EmbeddingScale::Rescaled {
        let sigma2 = reports[0].sigma2;
        embedding = embedding.with_rescaled_spectrum(sigma2);
    }
    let coordinates = embedding.coordinates(scale);
    let k = config.k.unwrap_or(embedding.d_hat());
    if k == 0 || k > n {
        return Err(NirvarError::Config(format!("number of clusters {k} not in 1..={n}")));
    }
    let mut mixtures = Vec::with_capacity(panel.q());
    let mut assignments = Vec::with_capacity(panel.q());
    for (q, coords) in coordinates.iter().enumerate() {
        let model = gmm_fit(coords, k, &mut seeds.stream("gmm", q as u64), &config.gmm)?;
        assignments.push(hard_assign(&model));
        mixtures.push(model);
    }
    let restrictions = restriction_matrix(&build_restrictions(&assignments)?);
    Ok(StructureFit { reports, d, k, scale, embedding, coordinates, mixtures, assignments, restrictions })
}

/// Full fit for one response feature.
#[derive(Debug, Clone)]
pub struct NirvarFit {
    /// Per-series means removed before fitting (zeros when not demeaned).
    pub means: DVector<f64>,
    pub structure: StructureFit,
    pub estimate: EstimateResult,
}

impl NirvarFit {
    /// One-step forecast of the response feature from the raw stacked
    /// observation `x_prev`: `μ_q + Φ̂ (x_prev - μ)`.
    pub fn forecast(&self, x_prev: &DVector<f64>) -> DVector<f64> {
        let n = self.estimate.phi.nrows();
        let q = self.estimate.q;
        let centred = x_prev - &self.means;
        self.means.rows(q * n, n) + self.estimate.predict(&centred)
    }
}

/// Demean (optionally), learn the restrictions and estimate feature `q`.
pub fn fit(panel: &PanelTensor, q: usize, config: &PipelineConfig, seeds: &SeedStream) -> Result<NirvarFit> {
    let (work, means) = centred(panel, config.demean);
    let structure = fit_structure(&work, config, seeds)?;
    let estimate = estimate(&work, q, &structure.restrictions, None)?;
    Ok(NirvarFit { means, structure, estimate })
}

/// Re-estimate with given restrictions (no re-clustering).
pub fn refit(
    panel: &PanelTensor,
    q: usize,
    restrictions: &RestrictionSet,
    demean: bool,
    noise: Option<&NoiseSpec>,
) -> Result<(DVector<f64>, EstimateResult)> {
    let (work, means) = centred(panel, demean);
    Ok((means, estimate(&work, q, restrictions, noise)?))
}

fn centred(panel: &PanelTensor, demean: bool) -> (PanelTensor, DVector<f64>) {
    if demean {
        panel.demeaned()
    } else {
        (panel.clone(), DVector::zeros(panel.n() * panel.q()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dgp::{build_coefficients, simulate, RadiusScaling, WeightRule};
    use crate::graph::{clique_stack, AdjacencyStack};

    #[test]
    fn recovers_planted_blocks() {
        let seeds = SeedStream::new(21);
        let z = CommunityAssignment::contiguous(60, 3).unwrap();
        let a = clique_stack(&[z.clone()]).unwrap();
        let c = build_coefficients(
            &[a.clone()],
            &WeightRule::Uniform01,
            0.95,
            &RadiusScaling::Realized,
            &mut seeds.stream("w", 0),
        )
        .unwrap();
        let p = simulate(&c, &NoiseSpec::isotropic(1.0).unwrap(), 2000, 200, &mut seeds.stream("noise", 0)).unwrap();
        let f = fit(&p, 0, &PipelineConfig::default(), &seeds).unwrap();
        assert_eq!(f.structure.k, 3);
        assert_eq!(f.structure.restrictions.adjacency(), &a);
        let x_prev = p.observation(p.t() - 1);
        assert_eq!(f.forecast(&x_prev).len(), 60);
    }

    #[test]
    fn scale_defaults() {
        let cfg = PipelineConfig::default();
        assert_eq!(cfg.resolved_scale(1), EmbeddingScale::Rescaled);
        assert_eq!(cfg.resolved_scale(2), EmbeddingScale::Sqrt);
        let prec = PipelineConfig { mode: CovarianceMode::Precision, scale: Some(EmbeddingScale::Rescaled), ..cfg };
        assert_eq!(prec.resolved_scale(1), EmbeddingScale::Sqrt);
    }

    #[test]
    fn overrides_are_validated() {
        let seeds = SeedStream::new(1);
        let p = PanelTensor::new(vec![DMatrix::from_fn(5, 40, |i, t| ((i * 7 + t * 3) % 11) as f64)]).unwrap();
        let cfg = PipelineConfig { k: Some(9), ..PipelineConfig::default() };
        assert!(fit(&p, 0, &cfg, &seeds).unwrap_err().is_config());
        let cfg = PipelineConfig { d: Some(2), k: Some(1), ..PipelineConfig::default() };
        let f = fit(&p, 0, &cfg, &seeds).unwrap();
        assert_eq!(f.structure.restrictions.adjacency(), &AdjacencyStack::ones(5, 1));
    }
}
