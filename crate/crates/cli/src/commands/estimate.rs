use std::path::PathBuf;

use nalgebra::DMatrix;
use nirvar::cluster::{write_clusters_csv, GmmSummary};
use nirvar::evalbench::ari_assignments;
use nirvar::graph::GroundTruth;
use nirvar::pipeline::{fit, PipelineConfig};
use nirvar::restricted_var::{asymptotic_covariance, GammaSource, ModelFile, SecondMoment, GLS_MAX_PARAMS};
use nirvar::rng::SeedStream;
use nirvar::spectral::{write_embedding_csv, EigenReport, EmbeddingScale};
use nirvar::{NirvarError, Result};
use serde::{Deserialize, Serialize};

use crate::config::{default_out, resolve, run_config, CommonArgs};
use crate::io::{create, feature_index, read_json, read_panel, write_json};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimateConfig {
    pub input: Option<PathBuf>,
    /// Response feature, 1-based.
    pub target: usize,
    pub pipeline: PipelineConfig,
    /// Ground-truth JSON from `simulate`; adds `recovery.json`.
    pub truth: Option<PathBuf>,
    /// Write asymptotic standard errors of the free coefficients.
    pub standard_errors: bool,
    pub seed: u64,
    pub out: PathBuf,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        Self { input: None, target: 1, pipeline: PipelineConfig::default(), truth: None,
            standard_errors: false,
            seed: 0, out: default_out() }
    }
}

run_config!(EstimateConfig, input);

#[derive(Serialize)]
struct StructureReport<'a> {
    d: usize,
    /// How per-feature ranks were combined; absent when `d` was fixed.
    #[serde(skip_serializing_if = "Option::is_none")]
    rank_rule: Option<&'static str>,
    k: usize,
    scale: EmbeddingScale,
    singular_values: &'a [f64],
    features: &'a [EigenReport],
    mixtures: Vec<GmmSummary>,
    /// Pairwise ARI of the per-feature labels (several features only).
    #[serde(skip_serializing_if = "Option::is_none")]
    cross_feature_ari: Option<Vec<Vec<f64>>>,
}

#[derive(Serialize)]
struct StandardErrors {
    gamma_source: GammaSource,
    /// Noise covariance used: `sigma2 I` with the pooled residual variance.
    sigma2: f64,
    effective_t: usize,
    gamma: Vec<f64>,
    se: Vec<f64>,
}

pub fn run(args: &CommonArgs) -> Result<()> {
    let cfg: EstimateConfig = resolve(args)?;
    let panel = read_panel(cfg.input.as_deref())?;
    let q = feature_index(cfg.target, panel.q())?;
    let truth: Option<GroundTruth> = cfg.truth.as_deref().map(read_json).transpose()?;
    let seeds = SeedStream::new(cfg.seed);
    let fitted = fit(&panel, q, &cfg.pipeline, &seeds)?;
    let s = &fitted.structure;

    write_json(&cfg.out, "model.json", &ModelFile::from_estimate(&fitted.estimate))?;
    write_clusters_csv(&s.assignments, create(&cfg.out, "clusters.csv")?)?;
    write_embedding_csv(&s.coordinates, create(&cfg.out, "embedding.csv")?)?;
    let report = StructureReport {
        d: s.d,
        rank_rule: (cfg.pipeline.d.is_none() && panel.q() > 1).then_some("max"),
        k: s.k,
        scale: s.scale,
        singular_values: s.embedding.singular_values(),
        features: &s.reports,
        mixtures: s.mixtures.iter().enumerate().map(|(f, m)| GmmSummary::new(f + 1, m)).collect(),
        cross_feature_ari: if s.assignments.len() > 1 {
            Some(
                s.assignments
                    .iter()
                    .map(|a| s.assignments.iter().map(|b| ari_assignments(a, b)).collect::<Result<Vec<_>>>())
                    .collect::<Result<Vec<_>>>()?,
            )
        } else {
            None
        },
    };
    write_json(&cfg.out, "eigen_report.json", &report)?;
    println!("d = {}, K = {}, M = {}, sigma2 = {:.6}", s.d, s.k, s.restrictions.m(), fitted.estimate.sigma2);

    if cfg.standard_errors {
        let e = &fitted.estimate;
        if e.restrictions.m() > GLS_MAX_PARAMS {
            return Err(NirvarError::Config(format!(
                "{} free coefficients; standard errors are limited to {GLS_MAX_PARAMS}",
                e.restrictions.m()
            )));
        }
        let work = if cfg.pipeline.demean { panel.demeaned().0 } else { panel.clone() };
        let moment = SecondMoment::plug_in(&work)?;
        let sigma = DMatrix::identity(panel.n(), panel.n()) * e.sigma2;
        let v = asymptotic_covariance(&e.restrictions, &moment.gamma, &sigma)?;
        let effective_t = panel.t() - 1;
        let se = v.diagonal().iter().map(|x| (x.max(0.0) / effective_t as f64).sqrt()).collect();
        let report = StandardErrors {
            gamma_source: moment.source,
            sigma2: e.sigma2,
            effective_t,
            gamma: e.gamma.iter().copied().collect(),
            se,
        };
        write_json(&cfg.out, "standard_errors.json", &report)?;
    }

    if let Some(truth) = truth {
        let rec = super::recovery(&truth, q, s.restrictions.adjacency(), &fitted.estimate.phi, Some(&s.assignments))?;
        write_json(&cfg.out, "recovery.json", &rec)?;
        if let Some(ari) = &rec.ari {
            println!("ARI {ari:?}, restriction error {:.3}%", rec.restriction_error_pct);
        }
    }
    Ok(())
}
