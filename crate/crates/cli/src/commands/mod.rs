pub mod backtest;
pub mod estimate;
pub mod eval;
pub mod mpfit;
pub mod simulate;

use nalgebra::DMatrix;
use nirvar::evalbench::{ari_assignments, nrmse, restriction_error_pct};
use nirvar::graph::{AdjacencyStack, CommunityAssignment, GroundTruth};
use nirvar::{NirvarError, Result};
use serde::Serialize;

/// Recovery of a fitted model against the simulated truth.
#[derive(Debug, Serialize)]
pub struct Recovery {
    /// Response feature, 1-based.
    pub target: usize,
    pub m_hat: usize,
    pub restriction_error_pct: f64,
    /// ARI of each feature's clusters against the true communities.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ari: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nrmse: Option<f64>,
}

pub fn recovery(
    truth: &GroundTruth,
    q: usize,
    a_hat: &AdjacencyStack,
    phi_hat: &DMatrix<f64>,
    clusters: Option<&[CommunityAssignment]>,
) -> Result<Recovery> {
    if truth.N != a_hat.n() || truth.Q != a_hat.q() {
        return Err(NirvarError::Dimension(format!(
            "truth has N = {}, Q = {} but the model has N = {}, Q = {}",
            truth.N,
            truth.Q,
            a_hat.n(),
            a_hat.q()
        )));
    }
    let m_hat = a_hat.nnz();
    let error = restriction_error_pct(a_hat, &truth.adjacency(q)?)?;
    let ari = match clusters {
        Some(zs) => {
            let z = truth.assignment()?;
            Some(zs.iter().map(|zq| ari_assignments(zq, &z)).collect::<Result<Vec<_>>>()?)
        }
        None => None,
    };
    let nrmse = match truth.phi_row(q)? {
        Some(phi) if phi.is_square() => Some(nrmse(phi_hat, &phi, m_hat)?),
        // for several features the radius of the joint companion is used
        Some(phi) => truth.rho.map(|rho| (phi_hat - phi).norm() / (m_hat as f64 * rho)),
        None => None,
    };
    Ok(Recovery { target: q + 1, m_hat, restriction_error_pct: error, ari, nrmse })
}
