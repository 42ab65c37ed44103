//! Gaussian mixture clustering of embedded points and the clique restriction
//! stack built from the resulting labels.

use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng as _, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{NirvarError, Result};
use crate::graph::{clique_stack, AdjacencyStack, CommunityAssignment};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GmmConfig {
    pub restarts: usize,
    pub max_iter: usize,
    /// Stop once the objective improves by less than this.
    pub tol: f64,
    /// Ridge added to every covariance estimate.
    pub reg: f64,
}

impl Default for GmmConfig {
    fn default() -> Self {
        Self { restarts: 10, max_iter: 500, tol: 1e-7, reg: 1e-6 }
    }
}

/// Fitted K-component mixture with full covariances.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmModel {
    pub means: DMatrix<f64>,
    pub covariances: Vec<DMatrix<f64>>,
    pub weights: Vec<f64>,
    /// Final value of the EM objective.
    pub log_likelihood: f64,
    pub responsibilities: DMatrix<f64>,
    /// Objective after every E-step of the selected run.
    pub trace: Vec<f64>,
    pub converged: bool,
}

impl GmmModel {
    pub fn k(&self) -> usize {
        self.weights.len()
    }
}

/// Best of `config.restarts` EM runs by final objective. Each run starts
/// from distance-weighted seeding of the means and the pooled covariance.
///
/// The covariance update `S_k + reg I` is the exact M-step for the mixture
/// whose component densities carry the factor `exp(-reg tr(Σ_k^{-1}) / 2)`;
/// that penalised log-likelihood is what the trace records, so it is
/// nondecreasing.
pub fn gmm_fit(points: &DMatrix<f64>, k: usize, rng: &mut Rng, config: &GmmConfig) -> Result<GmmModel> {
    let (n, d) = points.shape();
    if k == 0 || d == 0 {
        return Err(NirvarError::Config("mixture needs K >= 1 and d >= 1".into()));
    }
    if n < k {
        return Err(NirvarError::Config(format!("cannot fit {k} components to {n} points")));
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(NirvarError::Numerical("embedding contains non-finite coordinates".into()));
    }
    let restarts = config.restarts.max(1);
    let seeds: Vec<u64> = (0..restarts).map(|_| rng.random()).collect();
    let runs: Vec<Result<GmmModel>> =
        seeds.par_iter().map(|&s| em_run(points, k, &mut Rng::seed_from_u64(s), config)).collect();
    let mut best: Option<GmmModel> = None;
    let mut last_err = None;
    for run in runs {
        match run {
            Ok(m) => {
                if best.as_ref().is_none_or(|b| m.log_likelihood > b.log_likelihood) {
                    best = Some(m);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    best.ok_or_else(|| last_err.expect("at least one restart"))
}

fn em_run(x: &DMatrix<f64>, k: usize, rng: &mut Rng, config: &GmmConfig) -> Result<GmmModel> {
    let (n, d) = x.shape();
    let pooled = pooled_covariance(x) + DMatrix::identity(d, d) * config.reg;
    let mut means = seed_means(x, k, rng);
    let mut covs = vec![pooled.clone(); k];
    let mut weights = vec![1.0 / k as f64; k];
    let mut trace = Vec::new();
    let mut resp = DMatrix::zeros(n, k);
    let mut converged = false;
    for _ in 0..config.max_iter {
        let ll = e_step(x, &means, &covs, &weights, config.reg, &mut resp)?;
        let gain = trace.last().map(|prev| ll - prev);
        trace.push(ll);
        if gain.is_some_and(|g: f64| g < config.tol) {
            converged = true;
            break;
        }
        // M-step
        for c in 0..k {
            let r = resp.column(c);
            let nk: f64 = r.sum();
            weights[c] = nk / n as f64;
            if nk <= 1e-12 {
                covs[c] = pooled.clone();
                continue;
            }
            let mean = x.transpose() * r / nk;
            let mut cov = DMatrix::zeros(d, d);
            for i in 0..n {
                let diff = x.row(i).transpose() - &mean;
                cov += &diff * diff.transpose() * r[i];
            }
            cov /= nk;
            cov += DMatrix::identity(d, d) * config.reg;
            means.set_row(c, &mean.transpose());
            covs[c] = cov;
        }
    }
    let ll = e_step(x, &means, &covs, &weights, config.reg, &mut resp)?;
    trace.push(ll);
    Ok(GmmModel { means, covariances: covs, weights, log_likelihood: ll, responsibilities: resp, trace, converged })
}

/// Fills responsibilities and returns the penalised log-likelihood.
fn e_step(
    x: &DMatrix<f64>,
    means: &DMatrix<f64>,
    covs: &[DMatrix<f64>],
    weights: &[f64],
    reg: f64,
    resp: &mut DMatrix<f64>,
) -> Result<f64> {
    let (n, d) = x.shape();
    let k = weights.len();
    let log_2pi = (2.0 * std::f64::consts::PI).ln();
    let mut consts = Vec::with_capacity(k);
    let mut chols: Vec<Cholesky<f64, Dyn>> = Vec::with_capacity(k);
    for cov in covs {
        let chol = cov
            .clone()
            .cholesky()
            .ok_or_else(|| NirvarError::Numerical("mixture covariance lost positive definiteness".into()))?;
        let log_det: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let penalty = 0.5 * reg * chol.inverse().trace();
        consts.push(-0.5 * (d as f64 * log_2pi + log_det) - penalty);
        chols.push(chol);
    }
    let mut total = 0.0;
    let mut logp = vec![0.0; k];
    for i in 0..n {
        for c in 0..k {
            let diff: DVector<f64> = x.row(i).transpose() - means.row(c).transpose();
            let y = chols[c]
                .l_dirty()
                .solve_lower_triangular(&diff)
                .ok_or_else(|| NirvarError::Numerical("triangular solve failed".into()))?;
            logp[c] = weights[c].ln() + consts[c] - 0.5 * y.norm_squared();
        }
        let m = logp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + logp.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        for c in 0..k {
            resp[(i, c)] = (logp[c] - lse).exp();
        }
        total += lse;
    }
    if !total.is_finite() {
        return Err(NirvarError::Numerical("mixture log-likelihood is not finite".into()));
    }
    Ok(total)
}

fn pooled_covariance(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows() as f64;
    let mean = x.row_mean();
    let mut centred = x.clone();
    for mut row in centred.row_iter_mut() {
        row -= &mean;
    }
    centred.transpose() * centred / n
}

/// First mean uniform over the points, each further one drawn with
/// probability proportional to the squared distance to the nearest mean.
fn seed_means(x: &DMatrix<f64>, k: usize, rng: &mut Rng) -> DMatrix<f64> {
    let n = x.nrows();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut dist: Vec<f64> = (0..n).map(|i| (x.row(i) - x.row(chosen[0])).norm_squared()).collect();
    while chosen.len() < k {
        let total: f64 = dist.iter().sum();
        let next = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in dist.iter().enumerate() {
                if u < w {
                    pick = i;
                    break;
                }
                u -= w;
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        chosen.push(next);
        for (i, di) in dist.iter_mut().enumerate() {
            *di = di.min((x.row(i) - x.row(next)).norm_squared());
        }
    }
    DMatrix::from_fn(k, x.ncols(), |c, j| x[(chosen[c], j)])
}

/// `argmax_k` responsibility per point, ties to the lowest component.
pub fn hard_assign(model: &GmmModel) -> CommunityAssignment {
    let labels = model
        .responsibilities
        .row_iter()
        .map(|r| {
            let mut best = 0;
            for c in 1..r.len() {
                if r[c] > r[best] {
                    best = c;
                }
            }
            best
        })
        .collect();
    CommunityAssignment::new(labels, model.k()).expect("labels below K by construction")
}

/// Clique restrictions `Â_ij^(q) = 1{ẑ_i^(q) = ẑ_j^(q)}`.
pub fn build_restrictions(assignments: &[CommunityAssignment]) -> Result<AdjacencyStack> {
    clique_stack(assignments)
}

/// Cluster export with header `series,feature,label` (labels 1-based).
pub fn write_clusters_csv<W: Write>(assignments: &[CommunityAssignment], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["series", "feature", "label"]).map_err(|e| NirvarError::Parse(e.to_string()))?;
    for (q, z) in assignments.iter().enumerate() {
        for (i, l) in z.labels().iter().enumerate() {
            w.write_record([(i + 1).to_string(), (q + 1).to_string(), (l + 1).to_string()])
                .map_err(|e| NirvarError::Parse(e.to_string()))?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Read back the `series,feature,label` layout; one assignment per feature.
pub fn read_clusters_csv<R: std::io::Read>(reader: R) -> Result<Vec<CommunityAssignment>> {
    let mut r = csv::Reader::from_reader(reader);
    let mut table: BTreeMap<usize, BTreeMap<usize, usize>> = BTreeMap::new();
    for rec in r.deserialize() {
        let (series, feature, label): (usize, usize, usize) = rec?;
        if series == 0 || feature == 0 || label == 0 {
            return Err(NirvarError::Parse("cluster indices are 1-based".into()));
        }
        if table.entry(feature).or_default().insert(series, label).is_some() {
            return Err(NirvarError::Parse(format!("duplicate entry series={series} feature={feature}")));
        }
    }
    if table.is_empty() || table.keys().copied().ne(1..=table.len()) {
        return Err(NirvarError::Parse("clusters file must list features 1..=Q".into()));
    }
    table
        .into_values()
        .map(|rows| {
            if rows.keys().copied().ne(1..=rows.len()) {
                return Err(NirvarError::Parse("clusters file must list series 1..=N".into()));
            }
            let labels: Vec<usize> = rows.into_values().collect();
            let k = labels.iter().copied().max().unwrap_or(1);
            CommunityAssignment::from_one_based(&labels, k)
        })
        .collect()
}

/// Mixture summary for export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmSummary {
    pub feature: usize,
    pub k: usize,
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl GmmSummary {
    pub fn new(feature: usize, model: &GmmModel) -> Self {
        Self {
            feature,
            k: model.k(),
            weights: model.weights.clone(),
            means: model.means.row_iter().map(|r| r.iter().copied().collect()).collect(),
            log_likelihood: model.log_likelihood,
            iterations: model.trace.len(),
            converged: model.converged,
        }
    }
}
