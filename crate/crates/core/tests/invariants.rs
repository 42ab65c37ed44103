use nalgebra::{DMatrix, DVector};
use nirvar::dgp::PanelTensor;
use nirvar::evalbench::{
    ari, cumulative_mse_ratio, flip_costs, flow_imbalance, max_drawdown, pnl_series, position, procrustes_align, sharpe,
};
use nirvar::graph::AdjacencyStack;
use nirvar::restricted_var::restriction_matrix;
use nirvar::rng::SeedStream;
use nirvar::spectral::mp_cdf;
use proptest::prelude::*;
use rand::Rng as _;

fn stack(n: usize, q: usize, bits: &[bool]) -> AdjacencyStack {
    let blocks = (0..q).map(|c| DMatrix::from_fn(n, n, |i, j| u8::from(i == j || bits[(c * n + i) * n + j]))).collect();
    AdjacencyStack::new(blocks).unwrap()
}

fn matrix(rows: usize, cols: usize, vals: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |i, j| vals[i * cols + j])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn restriction_columns_are_orthonormal(
        n in 1usize..6,
        q in 1usize..3,
        bits in proptest::collection::vec(any::<bool>(), 72),
    ) {
        let a = stack(n, q, &bits);
        let r = restriction_matrix(&a);
        prop_assert_eq!(r.m(), a.nnz());
        let dense = r.dense_r();
        prop_assert_eq!(dense.shape(), (n * n * q, r.m()));
        prop_assert_eq!(dense.transpose() * &dense, DMatrix::identity(r.m(), r.m()));
        // every column has its single unit on a permitted entry
        for j in 0..r.m() {
            let (i, c) = r.entry(j);
            prop_assert_eq!(a.get(i, c), 1);
        }
    }

    #[test]
    fn gamma_phi_round_trip(
        n in 1usize..5,
        bits in proptest::collection::vec(any::<bool>(), 25),
        vals in proptest::collection::vec(-1.0f64..1.0, 25),
    ) {
        let a = stack(n, 1, &bits);
        let r = restriction_matrix(&a);
        let gamma = DVector::from_iterator(r.m(), vals.iter().copied().take(r.m()));
        let phi = r.phi_from_gamma(&gamma).unwrap();
        for i in 0..n {
            for j in 0..n {
                if a.get(i, j) == 0 {
                    prop_assert_eq!(phi[(i, j)], 0.0);
                }
            }
        }
        prop_assert_eq!(r.gamma_from_phi(&phi).unwrap(), gamma);
    }

    #[test]
    fn ari_is_bounded_symmetric_and_label_free(
        a in proptest::collection::vec(0usize..4, 2..30),
        seed in any::<u64>(),
        shift in 1usize..5,
    ) {
        let mut rng = SeedStream::new(seed).stream("labels", 0);
        let b: Vec<usize> = a.iter().map(|_| rng.random_range(0..3)).collect();
        let v = ari(&a, &b).unwrap();
        prop_assert!((-1.0..=1.0).contains(&v), "ari {}", v);
        prop_assert!((v - ari(&b, &a).unwrap()).abs() < 1e-12);
        let relabeled: Vec<usize> = a.iter().map(|l| (l + shift) * 7).collect();
        prop_assert!((v - ari(&relabeled, &b).unwrap()).abs() < 1e-12);
        prop_assert_eq!(ari(&a, &relabeled).unwrap(), 1.0);
    }

    #[test]
    fn pnl_reconstructs_from_positions(
        steps in 1usize..12,
        cols in 1usize..5,
        p in proptest::collection::vec(-2.0f64..2.0, 60),
        r in proptest::collection::vec(-2.0f64..2.0, 60),
        cost in 0.0f64..0.1,
    ) {
        let pred = matrix(steps, cols, &p);
        let real = matrix(steps, cols, &r);
        let pnl = pnl_series(&pred, &real).unwrap();
        prop_assert_eq!(pnl.len(), steps);
        let total: f64 = pnl.iter().sum();
        let direct: f64 = pred.iter().zip(real.iter()).map(|(a, b)| position(*a) * b).sum();
        prop_assert!((total - direct).abs() < 1e-9);
        // a sign-perfect forecast earns the absolute returns
        let perfect = pnl_series(&real, &real).unwrap();
        for (t, v) in perfect.iter().enumerate() {
            prop_assert!((v - real.row(t).abs().sum()).abs() < 1e-12);
        }
        let costs = flip_costs(&pred, cost);
        prop_assert_eq!(costs[0], 0.0);
        prop_assert!(costs.iter().all(|c| *c >= 0.0 && *c <= cost * cols as f64 + 1e-15));
    }

    #[test]
    fn sharpe_is_scale_free(
        pnl in proptest::collection::vec(-1.0f64..1.0, 3..40),
        scale in 0.1f64..10.0,
    ) {
        prop_assume!(pnl.iter().any(|x| (x - pnl[0]).abs() > 1e-6));
        let a = sharpe(&pnl, 252.0).unwrap();
        let scaled: Vec<f64> = pnl.iter().map(|x| x * scale).collect();
        prop_assert!((a - sharpe(&scaled, 252.0).unwrap()).abs() < 1e-9 * a.abs().max(1.0));
    }

    #[test]
    fn drawdown_matches_pairwise_definition(pnl in proptest::collection::vec(-1.0f64..1.0, 2..30)) {
        let dd = max_drawdown(&pnl).unwrap();
        let cum: Vec<f64> = pnl.iter().scan(0.0, |c, x| { *c += x; Some(*c) }).collect();
        let mut absolute = f64::NEG_INFINITY;
        let mut ratio: Option<f64> = None;
        for s in 1..cum.len() {
            for t in 0..s {
                absolute = absolute.max(cum[t] - cum[s]);
                if cum[t] > 0.0 {
                    let r = (cum[t] - cum[s]) / cum[t];
                    ratio = Some(ratio.map_or(r, |m: f64| m.max(r)));
                }
            }
        }
        prop_assert!((dd.absolute - absolute).abs() < 1e-12);
        match (dd.ratio, ratio) {
            (Some(x), Some(y)) => prop_assert!((x - y).abs() < 1e-9 * y.abs().max(1.0)),
            (x, y) => prop_assert_eq!(x, y),
        }
    }

    #[test]
    fn cumulative_ratio_of_itself_is_one(mse in proptest::collection::vec(0.01f64..5.0, 1..30)) {
        prop_assert!(cumulative_mse_ratio(&mse, &mse).unwrap().iter().all(|d| *d == 1.0));
    }

    #[test]
    fn flow_imbalance_is_antisymmetric(n in 1usize..6, vals in proptest::collection::vec(0u8..4, 36)) {
        let f = DMatrix::from_fn(n, n, |i, j| f64::from(vals[i * 6 + j]));
        let g = flow_imbalance(&f).unwrap();
        prop_assert_eq!(&g, &(-g.transpose()));
        prop_assert!(g.iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn panel_csv_round_trip(
        n in 1usize..5,
        q in 1usize..3,
        t in 1usize..8,
        vals in proptest::collection::vec(-1e6f64..1e6, 80),
    ) {
        let feats = (0..q)
            .map(|c| DMatrix::from_fn(n, t, |i, s| vals[(c * n + i) * 8 + s] / 7.0))
            .collect();
        let panel = PanelTensor::new(feats).unwrap();
        let mut buf = Vec::new();
        panel.write_csv(&mut buf).unwrap();
        prop_assert_eq!(PanelTensor::read_csv(buf.as_slice()).unwrap(), panel);
    }

    #[test]
    fn mp_cdf_is_monotone(eta in 0.05f64..0.95, sigma2 in 0.2f64..3.0) {
        let hi = sigma2 * (1.0 + eta.sqrt()).powi(2) * 1.1;
        let mut prev = 0.0;
        for k in 0..=40 {
            let c = mp_cdf(hi * k as f64 / 40.0, eta, sigma2).unwrap();
            prop_assert!(c >= prev - 1e-10 && c <= 1.0 + 1e-10, "cdf {} after {}", c, prev);
            prev = c;
        }
        prop_assert!((prev - 1.0).abs() < 1e-8);
    }
}

#[test]
fn procrustes_undoes_a_rotation() {
    let mut rng = SeedStream::new(3).stream("points", 0);
    let x = DMatrix::from_fn(30, 3, |_, _| rng.random::<f64>() - 0.5);
    let m = DMatrix::from_fn(3, 3, |_, _| rng.random::<f64>());
    let w = m.svd(true, true);
    let rotation = w.u.unwrap() * w.v_t.unwrap();
    let (aligned, residual) = procrustes_align(&(&x * rotation.transpose()), &x).unwrap();
    assert!(residual < 1e-10, "residual {residual}");
    assert!((aligned - rotation).amax() < 1e-10);
}

#[test]
fn seed_streams_are_reproducible_and_distinct() {
    let s = SeedStream::new(42);
    let draw = |mut r: nirvar::rng::Rng| (0..4).map(|_| r.random::<u64>()).collect::<Vec<_>>();
    assert_eq!(draw(s.stream("noise", 0)), draw(s.stream("noise", 0)));
    assert_ne!(draw(s.stream("noise", 0)), draw(s.stream("noise", 1)));
    assert_ne!(draw(s.stream("noise", 0)), draw(s.stream("graph", 0)));
    assert_ne!(s.child("grid", 0).seed(), s.child("grid", 1).seed());
    assert_eq!(s.child("grid", 3).seed(), SeedStream::new(42).child("grid", 3).seed());
}
