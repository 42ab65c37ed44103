use std::fs::File;

use nirvar::dgp::{build_coefficients, simulate, NoiseSpec, PanelTensor, RadiusScaling, WeightRule};
use nirvar::evalbench::{ari_assignments, restriction_error_pct};
use nirvar::graph::{clique_stack, BlockModel, CommunityAssignment, GroundTruth};
use nirvar::pipeline::{fit, PipelineConfig};
use nirvar::restricted_var::ModelFile;
use nirvar::rng::SeedStream;

#[test]
fn simulate_persist_fit_and_export() {
    let seeds = SeedStream::new(8);
    let z = CommunityAssignment::contiguous(30, 3).unwrap();
    let a = clique_stack(&[z.clone()]).unwrap();
    let coeffs = build_coefficients(
        &[a.clone()],
        &WeightRule::Uniform01,
        0.9,
        &RadiusScaling::Realized,
        &mut seeds.stream("w", 0),
    )
    .unwrap();
    let panel =
        simulate(&coeffs, &NoiseSpec::isotropic(1.0).unwrap(), 1500, 200, &mut seeds.stream("noise", 0)).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("panel.csv");
    panel.write_csv(File::create(&path).unwrap()).unwrap();
    let back = PanelTensor::read_csv(File::open(&path).unwrap()).unwrap();
    assert_eq!(back, panel);

    let truth = GroundTruth::new(&BlockModel::planted(3, 1.0, 0.0).unwrap(), &z, &[a.clone()])
        .with_coefficients(&[coeffs.row(0).clone()], coeffs.spectral_radius());
    let truth_path = dir.path().join("truth.json");
    serde_json::to_writer(File::create(&truth_path).unwrap(), &truth).unwrap();
    let truth: GroundTruth = serde_json::from_reader(File::open(&truth_path).unwrap()).unwrap();

    let fitted = fit(&back, 0, &PipelineConfig::default(), &seeds).unwrap();
    let s = &fitted.structure;
    assert_eq!(s.d, 3);
    assert_eq!(ari_assignments(&s.assignments[0], &truth.assignment().unwrap()).unwrap(), 1.0);
    assert_eq!(restriction_error_pct(s.restrictions.adjacency(), &truth.adjacency(0).unwrap()).unwrap(), 0.0);

    let model = ModelFile::from_estimate(&fitted.estimate);
    let json = serde_json::to_string(&model).unwrap();
    let model: ModelFile = serde_json::from_str(&json).unwrap();
    let phi_hat = model.phi().unwrap();
    assert_eq!(phi_hat, fitted.estimate.phi);
    let phi = truth.phi_row(0).unwrap().unwrap();
    let err = (&phi_hat - &phi).amax();
    assert!(err < 0.15, "max coefficient error {err}");
}
