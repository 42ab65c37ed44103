//! Forecast, trading, clustering and estimation metrics.

use std::collections::HashMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{NirvarError, Result};
use crate::graph::{AdjacencyStack, CommunityAssignment};
use crate::linalg::spectral_radius;
use crate::stats::{mean, sample_variance};

pub use crate::stats::ks_statistic;

/// Trading days per year.
pub const DAILY_ANNUALISATION: f64 = 252.0;

/// Sign with `sign(0) = +1`.
pub fn position(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

fn check_same_shape(pred: &DMatrix<f64>, real: &DMatrix<f64>) -> Result<()> {
    if pred.shape() != real.shape() {
        return Err(NirvarError::Dimension(format!(
            "predictions {:?} and realised values {:?} differ in shape",
            pred.shape(),
            real.shape()
        )));
    }
    if pred.is_empty() {
        return Err(NirvarError::Metric("no predictions".into()));
    }
    Ok(())
}

/// `PnL_t = Σ_i sign(ŝ_i^(t)) s_i^(t)`; rows are time steps.
pub fn pnl_series(pred: &DMatrix<f64>, real: &DMatrix<f64>) -> Result<Vec<f64>> {
    check_same_shape(pred, real)?;
    Ok((0..pred.nrows())
        .map(|t| pred.row(t).iter().zip(real.row(t).iter()).map(|(p, r)| position(*p) * r).sum())
        .collect())
}

/// Flat cost per position flip, charged on the step where the sign changes.
pub fn flip_costs(pred: &DMatrix<f64>, cost: f64) -> Vec<f64> {
    (0..pred.nrows())
        .map(|t| {
            if t == 0 {
                return 0.0;
            }
            let flips =
                pred.row(t).iter().zip(pred.row(t - 1).iter()).filter(|(a, b)| position(**a) != position(**b)).count();
            cost * flips as f64
        })
        .collect()
}

/// Annualised Sharpe ratio `√a · mean / sd` with the sample standard deviation.
pub fn sharpe(pnl: &[f64], annualisation: f64) -> Result<f64> {
    if pnl.len() < 2 {
        return Err(NirvarError::Metric("Sharpe ratio needs at least two returns".into()));
    }
    let sd = sample_variance(pnl).sqrt();
    if sd == 0.0 {
        return Err(NirvarError::Metric("Sharpe ratio of a constant series".into()));
    }
    Ok(annualisation.sqrt() * mean(pnl) / sd)
}

/// Annualised Sortino ratio: mean over the sample standard deviation of the
/// negative returns.
pub fn sortino(pnl: &[f64], annualisation: f64) -> Result<f64> {
    let neg: Vec<f64> = pnl.iter().copied().filter(|v| *v < 0.0).collect();
    if neg.len() < 2 {
        return Err(NirvarError::Metric(format!(
            "Sortino ratio needs at least two negative returns, found {}",
            neg.len()
        )));
    }
    let sd = sample_variance(&neg).sqrt();
    if sd == 0.0 {
        return Err(NirvarError::Metric("negative returns have zero spread".into()));
    }
    Ok(annualisation.sqrt() * mean(pnl) / sd)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Drawdown {
    /// `max_{t<s} (C_t - C_s) / C_t` over pairs with `C_t > 0`; `None` when
    /// no such pair exists.
    pub ratio: Option<f64>,
    /// `max_{t<s} (C_t - C_s)`.
    pub absolute: f64,
}

/// Maximum drawdown of the cumulative PnL `C_t`.
pub fn max_drawdown(pnl: &[f64]) -> Result<Drawdown> {
    if pnl.len() < 2 {
        return Err(NirvarError::Metric("drawdown needs at least two returns".into()));
    }
    let mut cum = 0.0;
    let mut peak = f64::NEG_INFINITY;
    let mut max_pos: Option<f64> = None;
    let mut min_pos: Option<f64> = None;
    let mut absolute = f64::NEG_INFINITY;
    let mut ratio: Option<f64> = None;
    for (s, p) in pnl.iter().enumerate() {
        cum += p;
        if s > 0 {
            absolute = absolute.max(peak - cum);
            // 1 - C_s / C_t is largest at the largest C_t when C_s >= 0 and
            // at the smallest positive C_t when C_s < 0
            let best_t = if cum >= 0.0 { max_pos } else { min_pos };
            if let Some(ct) = best_t {
                let r = (ct - cum) / ct;
                ratio = Some(ratio.map_or(r, |x: f64| x.max(r)));
            }
        }
        peak = peak.max(cum);
        if cum > 0.0 {
            max_pos = Some(max_pos.map_or(cum, |m: f64| m.max(cum)));
            min_pos = Some(min_pos.map_or(cum, |m: f64| m.min(cum)));
        }
    }
    Ok(Drawdown { ratio, absolute })
}

/// Mean percentage of correctly signed predictions and of long positions.
pub fn hit_long_ratios(pred: &DMatrix<f64>, real: &DMatrix<f64>) -> Result<(f64, f64)> {
    check_same_shape(pred, real)?;
    let n = pred.ncols() as f64;
    let (mut hit, mut long) = (0.0, 0.0);
    for t in 0..pred.nrows() {
        let (p, r) = (pred.row(t), real.row(t));
        hit += p.iter().zip(r.iter()).filter(|(a, b)| position(**a) == position(**b)).count() as f64 / n;
        long += p.iter().filter(|a| position(**a) > 0.0).count() as f64 / n;
    }
    let w = pred.nrows() as f64;
    Ok((100.0 * hit / w, 100.0 * long / w))
}

/// Mean absolute error and root mean squared error over all entries.
pub fn mae_rmse(pred: &DMatrix<f64>, real: &DMatrix<f64>) -> Result<(f64, f64)> {
    check_same_shape(pred, real)?;
    let diff = pred - real;
    let count = diff.len() as f64;
    Ok((diff.iter().map(|v| v.abs()).sum::<f64>() / count, (diff.norm_squared() / count).sqrt()))
}

/// Mean squared error of every time step (row).
pub fn mse_by_step(pred: &DMatrix<f64>, real: &DMatrix<f64>) -> Result<Vec<f64>> {
    check_same_shape(pred, real)?;
    let n = pred.ncols() as f64;
    Ok((0..pred.nrows()).map(|t| (pred.row(t) - real.row(t)).norm_squared() / n).collect())
}

/// `Δ_t = Σ_{s<=t} a_s / Σ_{s<=t} b_s`.
pub fn cumulative_mse_ratio(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return Err(NirvarError::Dimension(format!("MSE series of length {} and {}", a.len(), b.len())));
    }
    let (mut sa, mut sb) = (0.0, 0.0);
    a.iter()
        .zip(b)
        .enumerate()
        .map(|(t, (x, y))| {
            sa += x;
            sb += y;
            if sb == 0.0 {
                Err(NirvarError::Metric(format!("cumulative reference MSE is zero at step {}", t + 1)))
            } else {
                Ok(sa / sb)
            }
        })
        .collect()
}

/// `F̃_ij = (F_ij - F_ji) / (F_ij + F_ji)`, defined as 0 when both are 0.
pub fn flow_imbalance(f: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !f.is_square() {
        return Err(NirvarError::Dimension("flow matrix must be square".into()));
    }
    Ok(DMatrix::from_fn(f.nrows(), f.ncols(), |i, j| {
        let s = f[(i, j)] + f[(j, i)];
        if s == 0.0 {
            0.0
        } else {
            (f[(i, j)] - f[(j, i)]) / s
        }
    }))
}

/// `‖Φ̂ - Φ‖_F / (M̂ ρ(Φ))`.
pub fn nrmse(phi_hat: &DMatrix<f64>, phi: &DMatrix<f64>, m_hat: usize) -> Result<f64> {
    if phi_hat.shape() != phi.shape() {
        return Err(NirvarError::Dimension("Φ̂ and Φ differ in shape".into()));
    }
    let rho = spectral_radius(phi)?;
    if rho == 0.0 || m_hat == 0 {
        return Err(NirvarError::Metric("NRMSE undefined for ρ(Φ) = 0 or no parameters".into()));
    }
    Ok((phi_hat - phi).norm() / (m_hat as f64 * rho))
}

fn choose2(x: f64) -> f64 {
    x * (x - 1.0) / 2.0
}

/// Adjusted Rand index of two partitions of the same items.
pub fn ari(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(NirvarError::Dimension("partitions must be non-empty and of equal length".into()));
    }
    let mut table: HashMap<(usize, usize), f64> = HashMap::new();
    let mut rows: HashMap<usize, f64> = HashMap::new();
    let mut cols: HashMap<usize, f64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1.0;
        *rows.entry(x).or_default() += 1.0;
        *cols.entry(y).or_default() += 1.0;
    }
    let index: f64 = table.values().map(|&v| choose2(v)).sum();
    let sa: f64 = rows.values().map(|&v| choose2(v)).sum();
    let sb: f64 = cols.values().map(|&v| choose2(v)).sum();
    let expected = sa * sb / choose2(a.len() as f64);
    let max = 0.5 * (sa + sb);
    if max == expected {
        // both partitions trivial (one block, or all singletons)
        return Ok(if table.len() == rows.len() && table.len() == cols.len() { 1.0 } else { 0.0 });
    }
    Ok((index - expected) / (max - expected))
}

/// [`ari`] on community assignments.
pub fn ari_assignments(a: &CommunityAssignment, b: &CommunityAssignment) -> Result<f64> {
    ari(a.labels(), b.labels())
}

/// Percentage of entries on which two binary stacks disagree.
pub fn restriction_error_pct(a_hat: &AdjacencyStack, a_true: &AdjacencyStack) -> Result<f64> {
    if a_hat.n() != a_true.n() || a_hat.q() != a_true.q() {
        return Err(NirvarError::Dimension("adjacency stacks differ in shape".into()));
    }
    let (x, y) = (a_hat.dense(), a_true.dense());
    let wrong = x.iter().zip(y.iter()).filter(|(u, v)| u != v).count();
    Ok(100.0 * wrong as f64 / x.len() as f64)
}

/// Orthogonal `W` minimising `‖source W - target‖_F`, and that minimum.
pub fn procrustes_align(source: &DMatrix<f64>, target: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    if source.shape() != target.shape() {
        return Err(NirvarError::Dimension("Procrustes inputs differ in shape".into()));
    }
    let svd = (source.transpose() * target).svd(true, true);
    let (u, vt) = match (svd.u, svd.v_t) {
        (Some(u), Some(vt)) => (u, vt),
        _ => return Err(NirvarError::Numerical("SVD failed in Procrustes alignment".into())),
    };
    let w = u * vt;
    let residual = (source * &w - target).norm();
    Ok((w, residual))
}
