use std::path::PathBuf;

use nalgebra::DMatrix;
use nirvar::dgp::{simulate, CoefficientStack, NoiseSpec};
use nirvar::rng::SeedStream;
use nirvar::spectral::mp::{fit_mp_scale, mp_upper_edge};
use nirvar::spectral::{covariance_stack, rank_reports, CovarianceMode, EigenReport};
use nirvar::{NirvarError, Result};
use serde::{Deserialize, Serialize};

use crate::config::{default_out, resolve, run_config, CommonArgs};
use crate::io::{open, read_panel, write_json};

/// White-noise panel whose covariance spectrum is MP(`N/T`, `sigma2`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Synthetic {
    pub n: usize,
    pub t: usize,
    pub sigma2: f64,
}

impl Default for Synthetic {
    fn default() -> Self {
        Self { n: 100, t: 1000, sigma2: 2.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MpfitConfig {
    /// Panel CSV whose per-feature spectra are fitted.
    pub input: Option<PathBuf>,
    pub mode: CovarianceMode,
    pub demean: bool,
    /// Plain list of covariance eigenvalues (whitespace or comma separated).
    pub eigenvalues: Option<PathBuf>,
    /// `N / T` for an eigenvalue list.
    pub eta: Option<f64>,
    pub synthetic: Option<Synthetic>,
    pub seed: u64,
    pub out: PathBuf,
}

impl Default for MpfitConfig {
    fn default() -> Self {
        Self {
            input: None,
            mode: CovarianceMode::Covariance,
            demean: true,
            eigenvalues: None,
            eta: None,
            synthetic: None,
            seed: 0,
            out: default_out(),
        }
    }
}

run_config!(MpfitConfig, input);

#[derive(Serialize)]
struct ListFit {
    eta: f64,
    sigma2: f64,
    ks: f64,
    x_plus: f64,
    exceedances: usize,
}

#[derive(Serialize)]
struct SyntheticFit<'a> {
    sigma2_true: f64,
    relative_error: f64,
    features: &'a [EigenReport],
}

pub fn run(args: &CommonArgs) -> Result<()> {
    let cfg: MpfitConfig = resolve(args)?;
    let sources = [cfg.input.is_some(), cfg.eigenvalues.is_some(), cfg.synthetic.is_some()];
    if sources.iter().filter(|&&s| s).count() != 1 {
        return Err(NirvarError::Config("give exactly one of input, eigenvalues or synthetic".into()));
    }
    if let Some(path) = &cfg.eigenvalues {
        let eta = cfg.eta.ok_or_else(|| NirvarError::Config("an eigenvalue list needs eta = N/T".into()))?;
        let eigenvalues = read_eigenvalues(path)?;
        let fit = fit_mp_scale(&eigenvalues, eta)?;
        let x_plus = mp_upper_edge(eta, fit.sigma2);
        let exceedances = eigenvalues.iter().filter(|&&l| l > x_plus).count();
        write_json(&cfg.out, "mpfit.json", &ListFit { eta, sigma2: fit.sigma2, ks: fit.ks, x_plus, exceedances })?;
        println!("sigma2 {:.6}, ks {:.4}, {exceedances} above the edge", fit.sigma2, fit.ks);
        return Ok(());
    }
    let panel = match &cfg.synthetic {
        Some(s) => {
            let zero = CoefficientStack::from_rows(vec![DMatrix::zeros(s.n, s.n)])?;
            simulate(
                &zero,
                &NoiseSpec::isotropic(s.sigma2)?,
                s.t,
                0,
                &mut SeedStream::new(cfg.seed).stream("noise", 0),
            )?
        }
        None => read_panel(cfg.input.as_deref())?,
    };
    let panel = if cfg.demean { panel.demeaned().0 } else { panel };
    let reports = rank_reports(&covariance_stack(&panel, cfg.mode)?)?;
    for r in &reports {
        println!("feature {}: sigma2 {:.6}, d {}", r.feature, r.sigma2, r.d_hat);
    }
    match &cfg.synthetic {
        Some(s) => {
            let relative_error = (reports[0].sigma2 - s.sigma2).abs() / s.sigma2;
            write_json(
                &cfg.out,
                "mpfit.json",
                &SyntheticFit { sigma2_true: s.sigma2, relative_error, features: &reports },
            )
        }
        None => write_json(&cfg.out, "mpfit.json", &reports),
    }
}

fn read_eigenvalues(path: &std::path::Path) -> Result<Vec<f64>> {
    let mut text = String::new();
    std::io::Read::read_to_string(&mut open(path)?, &mut text)?;
    text.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|e| NirvarError::Parse(format!("eigenvalue {s:?}: {e}"))))
        .collect()
}
