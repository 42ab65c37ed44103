use std::path::PathBuf;

use nirvar::dgp::{build_coefficients, simulate, NoiseSpec, RadiusScaling, WeightRule, DEFAULT_BURN_IN};
use nirvar::graph::{
    expected_adjacency, sample_adjacency, sample_communities, sample_symmetric_adjacency, AdjacencyStack, BlockModel,
    CommunityAssignment, GroundTruth,
};
use nirvar::linalg::hcat;
use nirvar::rng::SeedStream;
use nirvar::Result;
use serde::{Deserialize, Serialize};

use crate::config::{default_out, resolve, run_config, CommonArgs};
use crate::io::{create, write_json};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weights {
    /// Uniform(0, 1) before rescaling.
    Uniform,
    Constant(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Radius {
    /// The realised companion matrix has radius `rho`.
    Realized,
    /// `E(A) ⊙ Φ̃` has radius `rho`.
    Expected,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    pub n: usize,
    pub q: usize,
    pub k: usize,
    pub t: usize,
    pub burn_in: usize,
    pub rho: f64,
    pub p_in: f64,
    pub p_out: f64,
    /// Community prior; balanced contiguous blocks when absent.
    pub pi: Option<Vec<f64>>,
    pub symmetric: bool,
    pub weights: Weights,
    pub radius: Radius,
    pub sigma2: f64,
    pub seed: u64,
    pub out: PathBuf,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            n: 20,
            q: 1,
            k: 2,
            t: 500,
            burn_in: DEFAULT_BURN_IN,
            rho: 0.9,
            p_in: 1.0,
            p_out: 0.0,
            pi: None,
            symmetric: false,
            weights: Weights::Uniform,
            radius: Radius::Realized,
            sigma2: 1.0,
            seed: 0,
            out: default_out(),
        }
    }
}

run_config!(SimulateConfig);

pub fn run(args: &CommonArgs) -> Result<()> {
    let cfg: SimulateConfig = resolve(args)?;
    let seeds = SeedStream::new(cfg.seed);
    let planted = BlockModel::planted(cfg.k, cfg.p_in, cfg.p_out)?;
    let (model, z) = match &cfg.pi {
        None => (planted, CommunityAssignment::contiguous(cfg.n, cfg.k)?),
        Some(pi) => {
            let model = BlockModel::new(planted.b().clone(), pi.clone())?;
            let z = sample_communities(&model, cfg.n, &mut seeds.stream("communities", 0))?;
            (model, z)
        }
    };
    // one graph per regressor feature, shared by every response
    let blocks = (0..cfg.q)
        .map(|r| {
            let mut rng = seeds.stream("graph", r as u64);
            if cfg.symmetric {
                sample_symmetric_adjacency(&model, &z, &mut rng)
            } else {
                sample_adjacency(&model, &z, &mut rng)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let stacks = vec![AdjacencyStack::new(blocks)?; cfg.q];
    let rule = match cfg.weights {
        Weights::Uniform => WeightRule::Uniform01,
        Weights::Constant(c) => WeightRule::Constant(c),
    };
    let scaling = match cfg.radius {
        Radius::Realized => RadiusScaling::Realized,
        Radius::Expected => RadiusScaling::Expected(vec![hcat(&vec![expected_adjacency(&model, &z); cfg.q]); cfg.q]),
    };
    let coeffs = build_coefficients(&stacks, &rule, cfg.rho, &scaling, &mut seeds.stream("weights", 0))?;
    let noise = NoiseSpec::isotropic(cfg.sigma2)?;
    let panel = simulate(&coeffs, &noise, cfg.t, cfg.burn_in, &mut seeds.stream("noise", 0))?;

    let rows: Vec<_> = (0..cfg.q).map(|q| coeffs.row(q).clone()).collect();
    let truth = GroundTruth::new(&model, &z, &stacks).with_coefficients(&rows, coeffs.spectral_radius());
    panel.write_csv(create(&cfg.out, "panel.csv")?)?;
    write_json(&cfg.out, "truth.json", &truth)?;
    println!("realized spectral radius {:.6}", coeffs.spectral_radius());
    Ok(())
}
