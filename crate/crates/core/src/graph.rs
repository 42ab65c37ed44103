//! Directed random dot product graphs with self-loops and K-block stochastic
//! block models, one graph per feature.
//!
//! Community labels are stored 0-based internally and exported 1-based.

use log::warn;
use nalgebra::DMatrix;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{NirvarError, Result};
use crate::rng::Rng;

const SIMPLEX_TOL: f64 = 1e-12;
const LATENT_TOL: f64 = 1e-12;
const PSD_TOL: f64 = -1e-10;

/// Parameters of a K-block SBM: block probabilities `B`, prior `pi` and
/// optionally the community latent positions `nu` with `B = nu nu'`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockModel {
    b: DMatrix<f64>,
    pi: Vec<f64>,
    nu: Option<DMatrix<f64>>,
    assortative: bool,
}

impl BlockModel {
    pub fn new(b: DMatrix<f64>, pi: Vec<f64>) -> Result<Self> {
        let model = Self { b, pi, nu: None, assortative: false };
        model.validate()?;
        Ok(model)
    }

    /// `B_kk = p_in`, `B_kl = p_out` with a uniform prior.
    pub fn planted(k: usize, p_in: f64, p_out: f64) -> Result<Self> {
        if k == 0 {
            return Err(NirvarError::Config("K must be at least 1".into()));
        }
        let b = DMatrix::from_fn(k, k, |i, j| if i == j { p_in } else { p_out });
        Self::new(b, vec![1.0 / k as f64; k])
    }

    /// Build `B = nu nu'` from community latent positions (rows of `nu`).
    pub fn from_latent(nu: DMatrix<f64>, pi: Vec<f64>) -> Result<Self> {
        let b = &nu * nu.transpose();
        let model = Self { b, pi, nu: Some(nu), assortative: false };
        model.validate()?;
        Ok(model)
    }

    /// Flag the model as assortative; requires `B` symmetric PSD.
    pub fn assortative(mut self) -> Result<Self> {
        self.assortative = true;
        self.validate()?;
        Ok(self)
    }

    pub fn k(&self) -> usize {
        self.b.nrows()
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    pub fn nu(&self) -> Option<&DMatrix<f64>> {
        self.nu.as_ref()
    }

    fn validate(&self) -> Result<()> {
        let k = self.b.nrows();
        if k == 0 || !self.b.is_square() {
            return Err(NirvarError::Config(format!(
                "B must be a non-empty square matrix, got {}x{}",
                self.b.nrows(),
                self.b.ncols()
            )));
        }
        if self.b.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(NirvarError::Config("entries of B must lie in [0, 1]".into()));
        }
        validate_simplex(&self.pi, k)?;
        if let Some(nu) = &self.nu {
            if nu.nrows() != k {
                return Err(NirvarError::Config(format!("nu has {} rows but K = {k}", nu.nrows())));
            }
            let implied = nu * nu.transpose();
            if (&implied - &self.b).amax() > LATENT_TOL {
                return Err(NirvarError::Config("B differs from nu nu'".into()));
            }
        }
        if self.assortative {
            if (&self.b - self.b.transpose()).amax() > 0.0 {
                return Err(NirvarError::Config("assortative B must be symmetric".into()));
            }
            let min_eig = self.b.symmetric_eigenvalues().min();
            if min_eig < PSD_TOL {
                return Err(NirvarError::Config(format!("assortative B must be PSD, smallest eigenvalue {min_eig:e}")));
            }
        }
        Ok(())
    }
}

fn validate_simplex(pi: &[f64], k: usize) -> Result<()> {
    if pi.len() != k {
        return Err(NirvarError::Config(format!("pi has length {} but K = {k}", pi.len())));
    }
    if pi.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(NirvarError::Config("pi entries must be non-negative".into()));
    }
    let total: f64 = pi.iter().sum();
    if (total - 1.0).abs() > SIMPLEX_TOL {
        return Err(NirvarError::Config(format!("pi sums to {total}, expected 1")));
    }
    Ok(())
}

/// Block labels `z` of N nodes, each in `0..k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommunityAssignment {
    labels: Vec<usize>,
    k: usize,
}

impl CommunityAssignment {
    pub fn new(labels: Vec<usize>, k: usize) -> Result<Self> {
        if let Some(bad) = labels.iter().find(|&&z| z >= k) {
            return Err(NirvarError::Config(format!("label {bad} out of range for K = {k}")));
        }
        Ok(Self { labels, k })
    }

    /// From 1-based labels as found in exported files.
    pub fn from_one_based(labels: &[usize], k: usize) -> Result<Self> {
        if labels.iter().any(|&z| z == 0) {
            return Err(NirvarError::Config("1-based labels must be positive".into()));
        }
        Self::new(labels.iter().map(|z| z - 1).collect(), k)
    }

    /// Consecutive equal-sized blocks, `z_i = floor(i k / n)`.
    pub fn contiguous(n: usize, k: usize) -> Result<Self> {
        if k == 0 || n < k {
            return Err(NirvarError::Config(format!("cannot split {n} nodes into {k} blocks")));
        }
        Self::new((0..n).map(|i| i * k / n).collect(), k)
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn one_based(&self) -> Vec<usize> {
        self.labels.iter().map(|z| z + 1).collect()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    /// Members per block, including empty blocks.
    pub fn block_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &z in &self.labels {
            sizes[z] += 1;
        }
        sizes
    }
}

/// Binary `N x NQ` adjacency `(A^(1) | ... | A^(Q))` stored block-wise.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdjacencyStack {
    n: usize,
    blocks: Vec<DMatrix<u8>>,
}

impl AdjacencyStack {
    pub fn new(blocks: Vec<DMatrix<u8>>) -> Result<Self> {
        let n = blocks
            .first()
            .map(|b| b.nrows())
            .ok_or_else(|| NirvarError::Dimension("adjacency stack needs at least one block".into()))?;
        for (q, b) in blocks.iter().enumerate() {
            if b.nrows() != n || b.ncols() != n {
                return Err(NirvarError::Dimension(format!(
                    "block {q} is {}x{}, expected {n}x{n}",
                    b.nrows(),
                    b.ncols()
                )));
            }
            if b.iter().any(|&v| v > 1) {
                return Err(NirvarError::Config(format!("block {q} is not binary")));
            }
        }
        Ok(Self { n, blocks })
    }

    /// Dense `N x NQ` 0/1 matrix split into `q` square blocks.
    pub fn from_dense(a: &DMatrix<u8>, q: usize) -> Result<Self> {
        let n = a.nrows();
        if q == 0 || a.ncols() != n * q {
            return Err(NirvarError::Dimension(format!("expected an {n}x{} matrix, got {n}x{}", n * q, a.ncols())));
        }
        Self::new((0..q).map(|r| a.columns(r * n, n).into_owned()).collect())
    }

    pub fn ones(n: usize, q: usize) -> Self {
        Self { n, blocks: vec![DMatrix::from_element(n, n, 1); q] }
    }

    pub fn identity(n: usize, q: usize) -> Self {
        Self { n, blocks: vec![DMatrix::identity(n, n); q] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn q(&self) -> usize {
        self.blocks.len()
    }

    pub fn blocks(&self) -> &[DMatrix<u8>] {
        &self.blocks
    }

    /// Entry `(i, c)` of the unfolded `N x NQ` matrix.
    pub fn get(&self, i: usize, c: usize) -> u8 {
        self.blocks[c / self.n][(i, c % self.n)]
    }

    /// Unfolded `N x NQ` matrix.
    pub fn dense(&self) -> DMatrix<u8> {
        let q = self.q();
        DMatrix::from_fn(self.n, self.n * q, |i, c| self.get(i, c))
    }

    /// `|A|_0`, the number of ones.
    pub fn nnz(&self) -> usize {
        self.blocks.iter().map(|b| b.iter().filter(|&&v| v == 1).count()).sum()
    }

    pub fn has_unit_diagonal(&self) -> bool {
        self.blocks.iter().all(|b| (0..self.n).all(|i| b[(i, i)] == 1))
    }

    pub fn as_f64(&self) -> Vec<DMatrix<f64>> {
        self.blocks.iter().map(|b| b.map(f64::from)).collect()
    }
}

/// Draw `n` labels independently from `Categorical(pi)`.
pub fn sample_communities(model: &BlockModel, n: usize, rng: &mut Rng) -> Result<CommunityAssignment> {
    if n == 0 {
        return Err(NirvarError::Config("need at least one node".into()));
    }
    validate_simplex(&model.pi, model.k())?;
    let dist = WeightedIndex::new(&model.pi).map_err(|e| NirvarError::Config(format!("invalid prior: {e}")))?;
    let labels: Vec<usize> = (0..n).map(|_| dist.sample(rng)).collect();
    let z = CommunityAssignment::new(labels, model.k())?;
    let empty = z.block_sizes().iter().filter(|&&s| s == 0).count();
    if empty > 0 {
        warn!("{empty} of {} blocks are empty after sampling {n} labels", model.k());
    }
    Ok(z)
}

/// Directed adjacency with self-loops: `A_ii = 1`, `A_ij ~ Bernoulli(B_{z_i z_j})`.
pub fn sample_adjacency(model: &BlockModel, z: &CommunityAssignment, rng: &mut Rng) -> Result<DMatrix<u8>> {
    if z.k() > model.k() {
        return Err(NirvarError::Config(format!("assignment uses K = {} but model has K = {}", z.k(), model.k())));
    }
    let n = z.n();
    let labels = z.labels();
    let mut a = DMatrix::zeros(n, n);
    // row-major draw order so results do not depend on storage layout
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] = if i == j {
                1
            } else {
                let p = model.b[(labels[i], labels[j])];
                u8::from(rng.random::<f64>() < p)
            };
        }
    }
    Ok(a)
}

/// Undirected variant of [`sample_adjacency`]: the upper triangle is drawn
/// row-major and mirrored.
pub fn sample_symmetric_adjacency(model: &BlockModel, z: &CommunityAssignment, rng: &mut Rng) -> Result<DMatrix<u8>> {
    if z.k() > model.k() {
        return Err(NirvarError::Config(format!("assignment uses K = {} but model has K = {}", z.k(), model.k())));
    }
    let n = z.n();
    let labels = z.labels();
    let mut a = DMatrix::identity(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let e = u8::from(rng.random::<f64>() < model.b[(labels[i], labels[j])]);
            a[(i, j)] = e;
            a[(j, i)] = e;
        }
    }
    Ok(a)
}

/// `E(A)` off the diagonal, i.e. `P_ij = B_{z_i z_j}` (the matrix `ΘΘ'`).
pub fn expected_adjacency(model: &BlockModel, z: &CommunityAssignment) -> DMatrix<f64> {
    let labels = z.labels();
    DMatrix::from_fn(z.n(), z.n(), |i, j| model.b[(labels[i], labels[j])])
}

/// Graph with one clique per label: `A_ij^(q) = 1{z_i^(q) = z_j^(q)}`.
pub fn clique_stack(z_per_feature: &[CommunityAssignment]) -> Result<AdjacencyStack> {
    let n = z_per_feature
        .first()
        .map(CommunityAssignment::n)
        .ok_or_else(|| NirvarError::Dimension("no assignments given".into()))?;
    let blocks = z_per_feature
        .iter()
        .map(|z| {
            if z.n() != n {
                return Err(NirvarError::Dimension(format!("assignment of length {} differs from {n}", z.n())));
            }
            let l = z.labels();
            Ok(DMatrix::from_fn(n, n, |i, j| u8::from(l[i] == l[j])))
        })
        .collect::<Result<Vec<_>>>()?;
    AdjacencyStack::new(blocks)
}

pub(crate) fn rows_of<T: Copy + nalgebra::Scalar>(m: &DMatrix<T>) -> Vec<Vec<T>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub(crate) fn from_rows<T: Copy + nalgebra::Scalar>(rows: &[Vec<T>]) -> Result<DMatrix<T>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(NirvarError::Parse("ragged matrix rows".into()));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

/// Ground-truth export of a simulated network.
///
/// `A_blocks` and `Phi_blocks` hold the `Q*Q` blocks `(response q, regressor r)`
/// in order `q*Q + r`, each an `N x N` row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct GroundTruth {
    pub N: usize,
    pub Q: usize,
    pub K: usize,
    pub z: Vec<usize>,
    pub B: Vec<Vec<f64>>,
    pub A_blocks: Vec<Vec<Vec<u8>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub Phi_blocks: Option<Vec<Vec<Vec<f64>>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
}

impl GroundTruth {
    pub fn new(model: &BlockModel, z: &CommunityAssignment, adjacency: &[AdjacencyStack]) -> Self {
        let q = adjacency.len();
        Self {
            N: z.n(),
            Q: q,
            K: model.k(),
            z: z.one_based(),
            B: rows_of(&model.b),
            A_blocks: adjacency.iter().flat_map(|a| a.blocks().iter().map(rows_of)).collect(),
            Phi_blocks: None,
            rho: None,
        }
    }

    pub fn assignment(&self) -> Result<CommunityAssignment> {
        CommunityAssignment::from_one_based(&self.z, self.K)
    }

    /// Adjacency stack of response feature `q`.
    pub fn adjacency(&self, q: usize) -> Result<AdjacencyStack> {
        self.check_blocks(self.A_blocks.len())?;
        let blocks = (0..self.Q).map(|r| from_rows(&self.A_blocks[q * self.Q + r])).collect::<Result<Vec<_>>>()?;
        AdjacencyStack::new(blocks)
    }

    /// Coefficient row `Φ_q = (Φ_q^(1) | ... | Φ_q^(Q))`, if exported.
    pub fn phi_row(&self, q: usize) -> Result<Option<DMatrix<f64>>> {
        let Some(phi) = &self.Phi_blocks else { return Ok(None) };
        self.check_blocks(phi.len())?;
        let blocks = (0..self.Q).map(|r| from_rows(&phi[q * self.Q + r])).collect::<Result<Vec<_>>>()?;
        Ok(Some(crate::linalg::hcat(&blocks)))
    }

    /// Attach the coefficient rows (`N x NQ` per response) and their radius.
    pub fn with_coefficients(mut self, rows: &[DMatrix<f64>], rho: f64) -> Self {
        let n = self.N;
        self.Phi_blocks = Some(
            rows.iter()
                .flat_map(|row| (0..self.Q).map(move |r| rows_of(&row.columns(r * n, n).into_owned())))
                .collect(),
        );
        self.rho = Some(rho);
        self
    }

    fn check_blocks(&self, len: usize) -> Result<()> {
        if len != self.Q * self.Q {
            return Err(NirvarError::Parse(format!(
                "expected {} blocks for Q = {}, found {len}",
                self.Q * self.Q,
                self.Q
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedStream;

    fn rng(seed: u64) -> Rng {
        SeedStream::new(seed).stream("graph", 0)
    }

    #[test]
    fn degenerate_simplex_gives_single_label() {
        let m = BlockModel::new(DMatrix::from_element(2, 2, 0.5), vec![1.0, 0.0]).unwrap();
        let z = sample_communities(&m, 3, &mut rng(1)).unwrap();
        assert_eq!(z.one_based(), vec![1, 1, 1]);
        let m1 = BlockModel::planted(1, 0.3, 0.0).unwrap();
        let z1 = sample_communities(&m1, 5, &mut rng(2)).unwrap();
        assert!(z1.labels().iter().all(|&l| l == 0));
    }

    #[test]
    fn balanced_prior_frequencies() {
        let m = BlockModel::planted(2, 0.5, 0.5).unwrap();
        let z = sample_communities(&m, 10_000, &mut rng(3)).unwrap();
        let frac = z.block_sizes()[0] as f64 / 10_000.0;
        assert!((frac - 0.5).abs() < 0.02, "{frac}");
    }

    #[test]
    fn invalid_simplex_is_rejected() {
        assert!(BlockModel::new(DMatrix::from_element(2, 2, 0.5), vec![0.6, 0.6]).is_err());
        assert!(BlockModel::new(DMatrix::from_element(2, 2, 0.5), vec![-0.5, 1.5]).is_err());
        assert!(BlockModel::new(DMatrix::from_element(2, 2, 1.5), vec![0.5, 0.5]).is_err());
    }

    #[test]
    fn latent_model_and_assortativity() {
        let nu = DMatrix::from_row_slice(2, 2, &[0.05, 0.95, 0.95, 0.05]);
        let m = BlockModel::from_latent(nu, vec![0.5, 0.5]).unwrap().assortative().unwrap();
        assert!((m.b()[(0, 0)] - 0.905).abs() < 1e-15);
        assert!((m.b()[(0, 1)] - 0.095).abs() < 1e-15);
        let indefinite = BlockModel::new(DMatrix::from_row_slice(2, 2, &[0.1, 0.9, 0.9, 0.1]), vec![0.5, 0.5]).unwrap();
        assert!(indefinite.assortative().is_err());
    }

    #[test]
    fn extreme_probabilities() {
        let z = CommunityAssignment::contiguous(6, 2).unwrap();
        let ones = BlockModel::planted(2, 1.0, 1.0).unwrap();
        let a = sample_adjacency(&ones, &z, &mut rng(4)).unwrap();
        assert!(a.iter().all(|&v| v == 1));
        let zeros = BlockModel::planted(2, 0.0, 0.0).unwrap();
        let a = sample_adjacency(&zeros, &z, &mut rng(5)).unwrap();
        assert_eq!(a, DMatrix::identity(6, 6));
    }

    fn block_densities(a: &DMatrix<u8>, z: &CommunityAssignment) -> (f64, f64) {
        let (mut win, mut nin, mut wout, mut nout) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..z.n() {
            for j in 0..z.n() {
                if i == j {
                    continue;
                }
                if z.labels()[i] == z.labels()[j] {
                    win += f64::from(a[(i, j)]);
                    nin += 1.0;
                } else {
                    wout += f64::from(a[(i, j)]);
                    nout += 1.0;
                }
            }
        }
        (win / nin, wout / nout)
    }

    #[test]
    fn empirical_block_densities() {
        let m = BlockModel::new(DMatrix::from_row_slice(2, 2, &[0.8, 0.05, 0.05, 0.8]), vec![0.5, 0.5]).unwrap();
        let z = CommunityAssignment::contiguous(200, 2).unwrap();
        let a = sample_adjacency(&m, &z, &mut rng(6)).unwrap();
        let (din, dout) = block_densities(&a, &z);
        assert!((0.75..=0.85).contains(&din), "{din}");
        assert!((0.02..=0.08).contains(&dout), "{dout}");

        let z = CommunityAssignment::contiguous(500, 2).unwrap();
        let a = sample_adjacency(&m, &z, &mut rng(7)).unwrap();
        let (din, dout) = block_densities(&a, &z);
        assert!((din - 0.8).abs() < 0.03 && (dout - 0.05).abs() < 0.03);
        assert!((0..500).all(|i| a[(i, i)] == 1));
    }

    #[test]
    fn clique_examples() {
        let z = CommunityAssignment::from_one_based(&[1, 1, 2], 2).unwrap();
        let a = clique_stack(&[z]).unwrap();
        assert_eq!(a.blocks()[0], DMatrix::from_row_slice(3, 3, &[1, 1, 0, 1, 1, 0, 0, 0, 1]));
        let same = CommunityAssignment::new(vec![0; 4], 1).unwrap();
        assert_eq!(clique_stack(&[same]).unwrap(), AdjacencyStack::ones(4, 1));
        let distinct = CommunityAssignment::new((0..4).collect(), 4).unwrap();
        assert_eq!(clique_stack(&[distinct]).unwrap(), AdjacencyStack::identity(4, 1));
    }

    #[test]
    fn clique_length_mismatch() {
        let a = CommunityAssignment::new(vec![0, 1], 2).unwrap();
        let b = CommunityAssignment::new(vec![0, 1, 1], 2).unwrap();
        assert!(clique_stack(&[a, b]).is_err());
    }

    #[test]
    fn ground_truth_round_trip() {
        let m = BlockModel::planted(2, 0.9, 0.1).unwrap();
        let z = CommunityAssignment::contiguous(4, 2).unwrap();
        let a = clique_stack(&[z.clone()]).unwrap();
        let gt = GroundTruth::new(&m, &z, &[a.clone()]);
        let json = serde_json::to_string(&gt).unwrap();
        assert!(json.contains("\"A_blocks\""));
        let back: GroundTruth = serde_json::from_str(&json).unwrap();
        assert_eq!(back.adjacency(0).unwrap(), a);
        assert_eq!(back.assignment().unwrap(), z);
        let phi = DMatrix::from_fn(4, 4, |i, j| (i * 4 + j) as f64);
        let with_phi = back.with_coefficients(&[phi.clone()], 0.5);
        assert_eq!(with_phi.phi_row(0).unwrap(), Some(phi));
        assert_eq!(with_phi.rho, Some(0.5));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn clique_stack_is_symmetric_and_relabel_invariant(
                labels in proptest::collection::vec(0usize..4, 1..25),
                shift in 1usize..4,
            ) {
                let z = CommunityAssignment::new(labels.clone(), 4).unwrap();
                let relabeled = CommunityAssignment::new(
                    labels.iter().map(|l| (l + shift) % 4).collect(), 4).unwrap();
                let a = clique_stack(&[z]).unwrap();
                let b = clique_stack(&[relabeled]).unwrap();
                prop_assert_eq!(&a, &b);
                let blk = &a.blocks()[0];
                prop_assert_eq!(blk, &blk.transpose());
                prop_assert!(a.has_unit_diagonal());
            }
        }
    }

    #[test]
    fn symmetric_sampler_is_symmetric() {
        let m = BlockModel::planted(2, 0.6, 0.1).unwrap();
        let z = CommunityAssignment::contiguous(40, 2).unwrap();
        let a = sample_symmetric_adjacency(&m, &z, &mut rng(3)).unwrap();
        assert_eq!(a, a.transpose());
        assert!((0..40).all(|i| a[(i, i)] == 1));
        let within =
            (0..20).flat_map(|i| (0..20).map(move |j| (i, j))).filter(|&(i, j)| i != j && a[(i, j)] == 1).count();
        assert!((within as f64 / 380.0 - 0.6).abs() < 0.1);
    }
}
