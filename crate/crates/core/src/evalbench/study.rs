//! Simulation-study drivers: NRMSE/ARI over a grid, restriction error
//! against between-block density, large-sample normality of `γ̂`, latent
//! position recovery and variance inflation.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{ari_assignments, nrmse, procrustes_align, restriction_error_pct};
use crate::dgp::{
    build_coefficients, lyapunov_covariance, simulate, CoefficientStack, NoiseSpec, RadiusScaling, WeightRule,
    DEFAULT_BURN_IN,
};
use crate::error::{NirvarError, Result};
use crate::graph::{
    clique_stack, expected_adjacency, sample_adjacency, sample_symmetric_adjacency, AdjacencyStack, BlockModel,
    CommunityAssignment,
};
use crate::pipeline::{fit, refit, PipelineConfig};
use crate::restricted_var::{asymptotic_covariance, bias_matrix, restriction_matrix, variance_inflation};
use crate::rng::SeedStream;
use crate::spectral::{covariance_stack, scale_spectrum, uase, CovarianceMode};
use crate::stats::{ks_statistic, mean, median, normal_cdf, sample_variance};

const LYAPUNOV_TOL: f64 = 1e-12;

/// A planted single-feature NIRVAR model with balanced contiguous blocks.
#[derive(Debug, Clone)]
pub struct Planted {
    pub model: BlockModel,
    pub z: CommunityAssignment,
    pub adjacency: AdjacencyStack,
    pub coeffs: CoefficientStack,
}

/// SBM with `B = p_in` on and `p_out` off the diagonal, Uniform(0, 1)
/// weights, realised `ρ(Φ)` scaled to `rho`.
pub fn planted_nirvar(n: usize, k: usize, p_in: f64, p_out: f64, rho: f64, seeds: &SeedStream) -> Result<Planted> {
    let model = BlockModel::planted(k, p_in, p_out)?;
    let z = CommunityAssignment::contiguous(n, k)?;
    let a = AdjacencyStack::new(vec![sample_adjacency(&model, &z, &mut seeds.stream("graph", 0))?])?;
    let coeffs = build_coefficients(
        std::slice::from_ref(&a),
        &WeightRule::Uniform01,
        rho,
        &RadiusScaling::Realized,
        &mut seeds.stream("weights", 0),
    )?;
    Ok(Planted { model, z, adjacency: a, coeffs })
}

/// Pipeline settings of one study cell.
fn study_pipeline(base: &PipelineConfig, k: usize, known_k: bool) -> PipelineConfig {
    if known_k {
        PipelineConfig { d: Some(k), k: Some(k), ..base.clone() }
    } else {
        base.clone()
    }
}

fn unit_noise() -> NoiseSpec {
    NoiseSpec::isotropic(1.0).expect("unit variance is valid")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub n: usize,
    pub rhos: Vec<f64>,
    pub ts: Vec<usize>,
    pub ks: Vec<usize>,
    pub replicas: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub burn_in: usize,
    /// Fix the embedding rank and cluster count at the true `K`.
    pub known_k: bool,
    pub pipeline: PipelineConfig,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            n: 100,
            rhos: vec![0.5, 0.7, 0.9],
            ts: vec![250, 1000],
            ks: vec![2, 10],
            replicas: 5,
            p_in: 1.0,
            p_out: 0.0,
            burn_in: DEFAULT_BURN_IN,
            known_k: true,
            pipeline: PipelineConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub k: usize,
    pub rho: f64,
    pub t: usize,
    pub replica: usize,
    pub d_hat: usize,
    pub m_hat: usize,
    pub nrmse: f64,
    pub ari: f64,
}

/// NRMSE and ARI for every `(K, ρ, T, replica)`. Each `(K, ρ, replica)`
/// draws one model and one long path; shorter `T` use its prefix.
pub fn spectral_radius_grid(cfg: &GridConfig, seeds: &SeedStream) -> Result<Vec<GridRow>> {
    let t_max = cfg.ts.iter().copied().max().ok_or_else(|| NirvarError::Config("empty T grid".into()))?;
    if cfg.rhos.is_empty() || cfg.ks.is_empty() || cfg.replicas == 0 {
        return Err(NirvarError::Config("grid needs at least one ρ, K and replica".into()));
    }
    let cells: Vec<(usize, usize, usize)> = (0..cfg.ks.len())
        .flat_map(|ki| (0..cfg.rhos.len()).flat_map(move |ri| (0..cfg.replicas).map(move |r| (ki, ri, r))))
        .collect();
    let per_cell: Vec<Vec<GridRow>> = cells
        .par_iter()
        .enumerate()
        .map(|(idx, &(ki, ri, rep))| {
            let (k, rho) = (cfg.ks[ki], cfg.rhos[ri]);
            let cell = seeds.child("grid", idx as u64);
            let p = planted_nirvar(cfg.n, k, cfg.p_in, cfg.p_out, rho, &cell)?;
            let path = simulate(&p.coeffs, &unit_noise(), t_max, cfg.burn_in, &mut cell.stream("noise", 0))?;
            cfg.ts
                .iter()
                .map(|&t| {
                    let panel = path.window(0, t)?;
                    let f =
                        fit(&panel, 0, &study_pipeline(&cfg.pipeline, k, cfg.known_k), &cell.child("fit", t as u64))?;
                    let m_hat = f.estimate.restrictions.m();
                    Ok(GridRow {
                        k,
                        rho,
                        t,
                        replica: rep,
                        d_hat: f.structure.d,
                        m_hat,
                        nrmse: nrmse(&f.estimate.phi, p.coeffs.row(0), m_hat)?,
                        ari: ari_assignments(&f.structure.assignments[0], &p.z)?,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let mut rows: Vec<GridRow> = per_cell.into_iter().flatten().collect();
    rows.sort_by(|a, b| (a.k, a.rho, a.t, a.replica).partial_cmp(&(b.k, b.rho, b.t, b.replica)).expect("finite ρ"));
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSummary {
    pub k: usize,
    pub rho: f64,
    pub t: usize,
    pub replicas: usize,
    pub mean_nrmse: f64,
    pub se_nrmse: f64,
    pub mean_ari: f64,
    pub se_ari: f64,
}

fn mean_se(x: &[f64]) -> (f64, f64) {
    let se = if x.len() > 1 { (sample_variance(x) / x.len() as f64).sqrt() } else { 0.0 };
    (mean(x), se)
}

/// Replica means and standard errors per `(K, ρ, T)`, in grid order.
pub fn summarize_grid(rows: &[GridRow]) -> Vec<GridSummary> {
    let mut out: Vec<GridSummary> = Vec::new();
    for chunk in rows.chunk_by(|a, b| (a.k, a.rho, a.t) == (b.k, b.rho, b.t)) {
        let nr: Vec<f64> = chunk.iter().map(|r| r.nrmse).collect();
        let ar: Vec<f64> = chunk.iter().map(|r| r.ari).collect();
        let (mean_nrmse, se_nrmse) = mean_se(&nr);
        let (mean_ari, se_ari) = mean_se(&ar);
        out.push(GridSummary {
            k: chunk[0].k,
            rho: chunk[0].rho,
            t: chunk[0].t,
            replicas: chunk.len(),
            mean_nrmse,
            se_nrmse,
            mean_ari,
            se_ari,
        });
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub n: usize,
    pub t: usize,
    pub k: usize,
    pub rho: f64,
    pub p_in: f64,
    pub p_outs: Vec<f64>,
    pub replicas: usize,
    pub burn_in: usize,
    /// Fix the embedding rank and cluster count at the true `K`.
    pub known_k: bool,
    pub pipeline: PipelineConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            n: 100,
            t: 1000,
            k: 10,
            rho: 0.9,
            p_in: 1.0,
            p_outs: vec![0.0, 0.05, 0.1],
            replicas: 5,
            burn_in: DEFAULT_BURN_IN,
            known_k: true,
            pipeline: PipelineConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub p_out: f64,
    pub replica: usize,
    pub error_pct: f64,
    pub ari: f64,
}

/// Percentage of wrong entries of `Â` for each between-block probability.
pub fn between_block_sweep(cfg: &SweepConfig, seeds: &SeedStream) -> Result<Vec<SweepRow>> {
    let jobs: Vec<(usize, usize)> =
        (0..cfg.p_outs.len()).flat_map(|pi| (0..cfg.replicas).map(move |r| (pi, r))).collect();
    jobs.par_iter()
        .enumerate()
        .map(|(idx, &(pi, rep))| {
            let p_out = cfg.p_outs[pi];
            let cell = seeds.child("sweep", idx as u64);
            let p = planted_nirvar(cfg.n, cfg.k, cfg.p_in, p_out, cfg.rho, &cell)?;
            let panel = simulate(&p.coeffs, &unit_noise(), cfg.t, cfg.burn_in, &mut cell.stream("noise", 0))?;
            let f = fit(&panel, 0, &study_pipeline(&cfg.pipeline, cfg.k, cfg.known_k), &cell.child("fit", 0))?;
            Ok(SweepRow {
                p_out,
                replica: rep,
                error_pct: restriction_error_pct(f.structure.restrictions.adjacency(), &p.adjacency)?,
                ari: ari_assignments(&f.structure.assignments[0], &p.z)?,
            })
        })
        .collect()
}

/// Where the common restriction set of the normality study comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RestrictionSource {
    /// Learned once from an independent pilot path of the same length.
    Pilot,
    /// The most frequent per-replica estimate; other replicas are dropped.
    Modal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NormalityConfig {
    pub n: usize,
    pub k: usize,
    pub t: usize,
    pub rho: f64,
    pub p_in: f64,
    pub p_out: f64,
    pub replicas: usize,
    pub burn_in: usize,
    /// Fix the embedding rank and cluster count at the true `K`.
    pub known_k: bool,
    pub restrictions: RestrictionSource,
    pub pipeline: PipelineConfig,
}

impl Default for NormalityConfig {
    fn default() -> Self {
        Self {
            n: 20,
            k: 4,
            t: 2000,
            rho: 0.9,
            p_in: 0.75,
            p_out: 0.2,
            replicas: 1000,
            burn_in: DEFAULT_BURN_IN,
            known_k: true,
            restrictions: RestrictionSource::Pilot,
            pipeline: PipelineConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalityReport {
    pub replicas: usize,
    pub source: RestrictionSource,
    /// Replicas entering the KS comparison.
    pub kept: usize,
    /// Share of replicas whose own estimated restrictions equal the common ones.
    pub agreement: f64,
    /// ARI of the common clusters against the planted blocks.
    pub ari: f64,
    pub m_hat: usize,
    /// KS distance of `√T γ̂_i` from its limiting normal law, per coefficient.
    pub ks: Vec<f64>,
    pub median_ks: f64,
    pub max_ks: f64,
}

/// Fixed `Φ`, independent noise paths; compares the replica distribution of
/// `√T γ̂(Â)_i` with `N(√T (C_∞ γ)_i, V_ii)` for a common `Â`.
pub fn normality_study(cfg: &NormalityConfig, seeds: &SeedStream) -> Result<NormalityReport> {
    if cfg.replicas < 2 {
        return Err(NirvarError::Config("normality study needs at least two replicas".into()));
    }
    let p = planted_nirvar(cfg.n, cfg.k, cfg.p_in, cfg.p_out, cfg.rho, &seeds.child("dgp", 0))?;
    let noise = unit_noise();
    let pipeline = study_pipeline(&cfg.pipeline, cfg.k, cfg.known_k);
    let pilot = match cfg.restrictions {
        RestrictionSource::Pilot => {
            let s = seeds.child("pilot", 0);
            let panel = simulate(&p.coeffs, &noise, cfg.t, cfg.burn_in, &mut s.stream("noise", 0))?;
            let f = fit(&panel, 0, &pipeline, &s.child("fit", 0))?;
            Some((f.estimate.restrictions, f.structure.assignments[0].clone()))
        }
        RestrictionSource::Modal => None,
    };

    // per replica: own restrictions and clusters, and γ̂ under the common set
    type Fitted = (AdjacencyStack, CommunityAssignment, Vec<f64>);
    let fits: Vec<Fitted> = (0..cfg.replicas)
        .into_par_iter()
        .map(|r| {
            let rep = seeds.child("replica", r as u64);
            let panel = simulate(&p.coeffs, &noise, cfg.t, cfg.burn_in, &mut rep.stream("noise", 0))?;
            let f = fit(&panel, 0, &pipeline, &rep.child("fit", 0))?;
            let gamma = match &pilot {
                Some((r_pilot, _)) => refit(&panel, 0, r_pilot, pipeline.demean, None)?.1.gamma,
                None => f.estimate.gamma,
            };
            Ok((
                f.estimate.restrictions.adjacency().clone(),
                f.structure.assignments[0].clone(),
                gamma.iter().copied().collect(),
            ))
        })
        .collect::<Result<_>>()?;

    let (r_hat, z_hat) = match pilot {
        Some(rz) => rz,
        None => {
            // most frequent support; ties go to the earliest replica
            let mut modal = 0;
            let mut best = 0;
            for (i, (a, _, _)) in fits.iter().enumerate() {
                let c = fits.iter().filter(|(b, _, _)| b == a).count();
                if c > best {
                    best = c;
                    modal = i;
                }
                if best * 2 > fits.len() {
                    break;
                }
            }
            (restriction_matrix(&fits[modal].0), fits[modal].1.clone())
        }
    };
    let a_hat = r_hat.adjacency();
    let agreeing = fits.iter().filter(|(a, _, _)| a == a_hat).count();
    let kept: Vec<&Vec<f64>> = match cfg.restrictions {
        RestrictionSource::Pilot => fits.iter().map(|(_, _, g)| g).collect(),
        RestrictionSource::Modal => fits.iter().filter(|(a, _, _)| a == a_hat).map(|(_, _, g)| g).collect(),
    };
    if kept.len() < 2 {
        return Err(NirvarError::Numerical("fewer than two replicas share the estimated restrictions".into()));
    }

    let r_true = restriction_matrix(&p.adjacency);
    let gamma_mat = lyapunov_covariance(&p.coeffs, &noise, LYAPUNOV_TOL)?;
    let sigma = DMatrix::identity(cfg.n, cfg.n);
    let c_inf = bias_matrix(&r_true, &r_hat, &gamma_mat, &sigma)?;
    let centre = c_inf * r_true.gamma_from_phi(p.coeffs.row(0))?;
    let v = asymptotic_covariance(&r_hat, &gamma_mat, &sigma)?;
    let root_t = (cfg.t as f64).sqrt();
    let ks: Vec<f64> = (0..r_hat.m())
        .map(|i| {
            let sample: Vec<f64> = kept.iter().map(|g| root_t * g[i]).collect();
            ks_statistic(&sample, normal_cdf(root_t * centre[i], v[(i, i)])?)
        })
        .collect::<Result<_>>()?;
    let median_ks = median(&ks)?;
    let max_ks = ks.iter().copied().fold(0.0, f64::max);
    Ok(NormalityReport {
        replicas: cfg.replicas,
        source: cfg.restrictions,
        kept: kept.len(),
        agreement: agreeing as f64 / cfg.replicas as f64,
        ari: ari_assignments(&z_hat, &p.z)?,
        m_hat: r_hat.m(),
        ks,
        median_ks,
        max_ks,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LatentConfig {
    pub n: usize,
    pub t: usize,
    /// Latent position of each block (rows of `ν`).
    pub theta: Vec<Vec<f64>>,
    pub rho: f64,
    /// Redraws allowed when the realised `ρ(Φ)` is not below 1.
    pub max_attempts: usize,
    pub burn_in: usize,
}

impl Default for LatentConfig {
    fn default() -> Self {
        Self {
            n: 150,
            t: 2000,
            theta: vec![vec![0.05, 0.95], vec![0.95, 0.05]],
            rho: 0.9,
            max_attempts: 100,
            burn_in: DEFAULT_BURN_IN,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentReport {
    /// Graph draws until a stationary `Φ` was found.
    pub attempts: usize,
    pub rho_phi: f64,
    /// Constant edge weight `ρ / ρ(E A)`.
    pub weight: f64,
    /// Aligned embedded points, one row per node.
    pub points: Vec<Vec<f64>>,
    pub block_means: Vec<Vec<f64>>,
    /// Distance of each block mean from its true latent position.
    pub distances: Vec<f64>,
    /// KS distance from N(0, 1) of the within-block standardised
    /// coordinates, pooled over blocks, one per dimension.
    pub ks: Vec<f64>,
    pub procrustes_residual: f64,
}

/// Recover the SBM latent positions from the covariance spectrum of a NIRVAR
/// path with constant weights: `Ψ̂ = U (λ_Φ / w)^{1/2}` aligned to `Θ`.
pub fn latent_recovery(cfg: &LatentConfig, seeds: &SeedStream) -> Result<LatentReport> {
    let k = cfg.theta.len();
    let d = cfg.theta.first().map_or(0, Vec::len);
    if k == 0 || d == 0 || cfg.theta.iter().any(|r| r.len() != d) {
        return Err(NirvarError::Config("latent positions must be a non-empty K x d table".into()));
    }
    let nu = DMatrix::from_fn(k, d, |i, j| cfg.theta[i][j]);
    let model = BlockModel::from_latent(nu.clone(), vec![1.0 / k as f64; k])?;
    let z = CommunityAssignment::contiguous(cfg.n, k)?;
    let expected = expected_adjacency(&model, &z);
    let labels = z.labels();
    let theta_nodes = DMatrix::from_fn(cfg.n, d, |i, j| nu[(labels[i], j)]);

    let mut graph_rng = seeds.stream("graph", 0);
    let mut weight_rng = seeds.stream("weights", 0);
    let mut found = None;
    for attempt in 1..=cfg.max_attempts {
        let a = AdjacencyStack::new(vec![sample_symmetric_adjacency(&model, &z, &mut graph_rng)?])?;
        let coeffs = build_coefficients(
            &[a],
            &WeightRule::Constant(1.0),
            cfg.rho,
            &RadiusScaling::Expected(vec![expected.clone()]),
            &mut weight_rng,
        )?;
        if coeffs.is_stationary() {
            found = Some((attempt, coeffs));
            break;
        }
    }
    let (attempts, coeffs) =
        found.ok_or_else(|| NirvarError::Numerical(format!("no stationary draw in {} attempts", cfg.max_attempts)))?;
    let weight = coeffs.weights(0)[(0, 0)];

    let panel = simulate(&coeffs, &unit_noise(), cfg.t, cfg.burn_in, &mut seeds.stream("noise", 0))?;
    let stack = covariance_stack(&panel.demeaned().0, CovarianceMode::Covariance)?;
    let emb = uase(&stack, d)?;
    // unit noise variance, so the singular values are the λ_Γ directly
    let lambda_phi = scale_spectrum(emb.singular_values());
    let scale = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        lambda_phi.len(),
        lambda_phi.iter().map(|l| (l / weight).sqrt()),
    ));
    let psi = emb.u() * scale;
    if psi.ncols() != d {
        return Err(NirvarError::Numerical(format!("embedding has rank {} < {d}", psi.ncols())));
    }
    let (w, residual) = procrustes_align(&psi, &theta_nodes)?;
    let aligned = psi * w;

    let mut block_means = Vec::with_capacity(k);
    let mut distances = Vec::with_capacity(k);
    let mut standardised: Vec<Vec<f64>> = vec![Vec::with_capacity(cfg.n); d];
    for b in 0..k {
        let members: Vec<usize> = (0..cfg.n).filter(|&i| labels[i] == b).collect();
        let mut centre = Vec::with_capacity(d);
        for (j, pooled) in standardised.iter_mut().enumerate() {
            let col: Vec<f64> = members.iter().map(|&i| aligned[(i, j)]).collect();
            let (m, s) = (mean(&col), sample_variance(&col).sqrt());
            if !(s > 0.0) {
                return Err(NirvarError::Numerical(format!("block {} has no spread in dimension {}", b + 1, j + 1)));
            }
            pooled.extend(col.iter().map(|x| (x - m) / s));
            centre.push(m);
        }
        distances.push(centre.iter().zip(nu.row(b).iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt());
        block_means.push(centre);
    }
    let std_normal = normal_cdf(0.0, 1.0)?;
    let ks = standardised.iter().map(|s| ks_statistic(s, &std_normal)).collect::<Result<_>>()?;
    Ok(LatentReport {
        attempts,
        rho_phi: coeffs.spectral_radius(),
        weight,
        points: (0..cfg.n).map(|i| aligned.row(i).iter().copied().collect()).collect(),
        block_means,
        distances,
        ks,
        procrustes_residual: residual,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InflationConfig {
    pub n: usize,
    pub k: usize,
    pub rho: f64,
    /// Within-block edge probability of the sparse ground truth.
    pub p_in: f64,
    pub replicas: usize,
}

impl Default for InflationConfig {
    fn default() -> Self {
        Self { n: 50, k: 5, rho: 0.9, p_in: 0.5, replicas: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InflationReport {
    pub alpha_v: Vec<f64>,
    pub mean_alpha_v: f64,
    pub se_alpha_v: f64,
}

/// `α_V` of the clique restrictions of the true blocks against the sparse
/// true support (within-block density `p_in`, no between-block edges), with
/// `Γ` from the Lyapunov equation and unit noise.
pub fn variance_inflation_study(cfg: &InflationConfig, seeds: &SeedStream) -> Result<InflationReport> {
    if cfg.replicas == 0 {
        return Err(NirvarError::Config("need at least one replica".into()));
    }
    let alpha_v: Vec<f64> = (0..cfg.replicas)
        .into_par_iter()
        .map(|r| {
            let rep = seeds.child("alpha", r as u64);
            let p = planted_nirvar(cfg.n, cfg.k, cfg.p_in, 0.0, cfg.rho, &rep)?;
            let gamma = lyapunov_covariance(&p.coeffs, &unit_noise(), LYAPUNOV_TOL)?;
            let r_est = restriction_matrix(&clique_stack(std::slice::from_ref(&p.z))?);
            let r_true = restriction_matrix(&p.adjacency);
            variance_inflation(&r_true, &r_est, &gamma, &DMatrix::identity(cfg.n, cfg.n))
        })
        .collect::<Result<_>>()?;
    let (mean_alpha_v, se_alpha_v) = mean_se(&alpha_v);
    Ok(InflationReport { alpha_v, mean_alpha_v, se_alpha_v })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_rows_cover_every_cell() {
        let cfg = GridConfig {
            n: 20,
            rhos: vec![0.6, 0.9],
            ts: vec![100, 300],
            ks: vec![2],
            replicas: 2,
            ..GridConfig::default()
        };
        let rows = spectral_radius_grid(&cfg, &SeedStream::new(1)).unwrap();
        assert_eq!(rows.len(), 8);
        let summary = summarize_grid(&rows);
        assert_eq!(summary.len(), 4);
        assert!(summary.iter().all(|s| s.replicas == 2 && s.mean_nrmse > 0.0));
        assert_eq!(rows, spectral_radius_grid(&cfg, &SeedStream::new(1)).unwrap());
    }

    #[test]
    fn sweep_without_cross_edges_is_exact_at_high_signal() {
        let cfg = SweepConfig { n: 30, t: 2000, k: 3, p_outs: vec![0.0], replicas: 2, ..SweepConfig::default() };
        let rows = between_block_sweep(&cfg, &SeedStream::new(3)).unwrap();
        assert!(rows.iter().all(|r| r.error_pct == 0.0 && r.ari == 1.0), "{rows:?}");
    }

    #[test]
    fn inflation_is_at_least_one() {
        let cfg = InflationConfig { n: 20, k: 4, replicas: 3, ..InflationConfig::default() };
        let rep = variance_inflation_study(&cfg, &SeedStream::new(2)).unwrap();
        assert!(rep.alpha_v.iter().all(|a| *a >= 1.0));
        let dense = InflationConfig { p_in: 1.0, ..cfg };
        let rep = variance_inflation_study(&dense, &SeedStream::new(2)).unwrap();
        assert!(rep.alpha_v.iter().all(|a| (a - 1.0).abs() < 1e-9));
    }

    #[test]
    fn normality_small_run() {
        let cfg =
            NormalityConfig { n: 8, k: 2, t: 500, replicas: 40, p_in: 1.0, p_out: 0.0, ..NormalityConfig::default() };
        let rep = normality_study(&cfg, &SeedStream::new(4)).unwrap();
        assert!(rep.kept == 40 && rep.ks.len() == rep.m_hat);
        let modal = NormalityConfig { restrictions: RestrictionSource::Modal, ..cfg };
        let rep = normality_study(&modal, &SeedStream::new(4)).unwrap();
        assert_eq!(rep.kept as f64, rep.agreement * 40.0);
        assert!(rep.ks.iter().all(|k| (0.0..=1.0).contains(k)));
    }

    #[test]
    fn latent_config_validation() {
        let cfg = LatentConfig { theta: vec![vec![0.5], vec![0.1, 0.2]], ..LatentConfig::default() };
        assert!(latent_recovery(&cfg, &SeedStream::new(0)).unwrap_err().is_config());
    }
}
