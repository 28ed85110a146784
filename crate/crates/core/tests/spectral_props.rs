mod common;

use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use noisytrack::spectral::{
    certify, gain_bound_fixed, gain_bound_switching, lyapunov_block, min_symmetric_eigenvalue, solve_lyapunov,
    symmetric_eigenvalues, verify_q_positive_definite, CertificateInput, GainParameters,
};
use noisytrack::topology::{build_coupling, is_globally_reachable, DirectedTopology};

fn to_dmatrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), rows.len(), |i, j| rows[i][j])
}

/// A dense random matrix shifted right past its Gershgorin discs.
fn random_positive_stable(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec<f64>> {
    let mut h: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let radius = h.iter().map(|r| r.iter().map(|v: &f64| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    let shift = radius + rng.random_range(0.05..1.0);
    for (i, row) in h.iter_mut().enumerate() {
        row[i] += shift;
    }
    h
}

#[test]
fn lyapunov_residual_on_random_matrices() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..100 {
        let n = 1 + case % 10;
        let rows = random_positive_stable(&mut rng, n);
        let h = to_dmatrix(&rows);
        let p = solve_lyapunov(&h).unwrap();
        let residual = h.transpose() * &p + &p * &h - DMatrix::identity(n, n);
        assert!(residual.amax() <= 1e-10, "case {case}: residual {}", residual.amax());
        assert!(symmetric_eigenvalues(&p)[0] > 0.0);

        let oracle = common::lyapunov_oracle(&rows);
        for i in 0..n {
            for j in 0..n {
                assert!((p[(i, j)] - oracle[i][j]).abs() <= 1e-9 * (1.0 + oracle[i][j].abs()));
            }
        }
    }
}

#[test]
fn fixed_bound_for_second_example_topology() {
    let [_, (adj, b)] = common::paper_topologies();
    let rows = common::coupling_rows(&adj, &b);
    let oracle_p = common::lyapunov_oracle(&rows);
    let expected = [[0.5, 0.5, 0.0], [0.5, 1.0, 0.0], [0.0, 0.0, 0.5]];
    for i in 0..3 {
        for j in 0..3 {
            assert!((oracle_p[i][j] - expected[i][j]).abs() < 1e-12);
        }
    }
    let lam = common::sym3_eigenvalues(&oracle_p);
    let gamma: f64 = 0.8;
    let k_min_oracle = lam[2] / (2.0 * gamma * (1.0 - gamma * gamma));

    let p = solve_lyapunov(&to_dmatrix(&rows)).unwrap();
    let k_min = gain_bound_fixed(&p, gamma).unwrap();
    assert!((k_min - k_min_oracle).abs() < 1e-9);
    assert!((k_min - 2.2726).abs() < 1e-4);
}

#[test]
fn switching_bound_for_example_topologies() {
    let couplings: Vec<Vec<Vec<f64>>> =
        common::paper_topologies().iter().map(|(a, b)| common::coupling_rows(a, b)).collect();
    let lambda_oracle = couplings
        .iter()
        .map(|h| {
            let s: Vec<Vec<f64>> = (0..3).map(|i| (0..3).map(|j| h[i][j] + h[j][i]).collect()).collect();
            common::sym3_eigenvalues(&s)[0]
        })
        .fold(f64::INFINITY, f64::min);
    let mats: Vec<DMatrix<f64>> = couplings.iter().map(|h| to_dmatrix(h)).collect();
    let lambda = min_symmetric_eigenvalue(&mats).unwrap();
    assert!((lambda - lambda_oracle).abs() < 1e-12);
    assert!((lambda - 0.3187).abs() < 5e-4);

    let k_min = gain_bound_switching(lambda, 0.8).unwrap();
    assert!((k_min - 1.0 / (2.0 * 0.8 * 0.36 * lambda_oracle)).abs() < 1e-9);
}

fn reachable_topology(max_n: usize) -> impl Strategy<Value = DirectedTopology> {
    (1..=max_n)
        .prop_flat_map(|n| (prop::collection::vec(any::<bool>(), n * n), prop::collection::vec(any::<bool>(), n)))
        .prop_filter_map("leader not globally reachable", |(arcs, links)| {
            let n = links.len();
            let adjacency =
                (0..n).map(|i| (0..n).map(|j| u8::from(i != j && arcs[i * n + j])).collect()).collect();
            let t = DirectedTopology::new(adjacency, links.into_iter().map(u8::from).collect()).ok()?;
            is_globally_reachable(&t).then_some(t)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fixed_certificate_flips_at_the_bound(
        t in reachable_topology(5),
        gamma in 0.05f64..0.95,
        above in 1e-6f64..5.0,
        below in 1e-6f64..1.0,
    ) {
        let h = build_coupling(&t).coupling;
        let p = solve_lyapunov(&h).unwrap();
        let k_min = gain_bound_fixed(&p, gamma).unwrap();
        let at = |k: f64| {
            let params = GainParameters::new(gamma, k).unwrap();
            verify_q_positive_definite(&params, CertificateInput::Fixed { p_bar: &p }).unwrap().valid
        };
        prop_assert!(at(k_min + above));
        let k_low = (k_min - below * k_min).max(1e-9).min(k_min - 1e-6);
        prop_assert!(!at(k_low));
    }

    #[test]
    fn switching_certificate_flips_at_the_bound(
        picks in prop::collection::vec(reachable_topology(4), 2..4),
        gamma in 0.05f64..0.95,
        above in 1e-6f64..5.0,
        below in 1e-6f64..1.0,
    ) {
        let n = picks[0].n();
        prop_assume!(picks.iter().all(|t| t.n() == n));
        let hs: Vec<DMatrix<f64>> = picks.iter().map(|t| build_coupling(t).coupling).collect();
        let lambda = min_symmetric_eigenvalue(&hs).unwrap();
        prop_assume!(lambda > 1e-3);
        let k_min = gain_bound_switching(lambda, gamma).unwrap();
        let at = |k: f64| certify(&GainParameters::new(gamma, k).unwrap(), &hs).unwrap().valid;
        prop_assert!(at(k_min + above));
        let k_low = (k_min - below * k_min).max(1e-9).min(k_min - 1e-6);
        prop_assert!(!at(k_low));
    }

    #[test]
    fn lyapunov_block_spectrum(seed in any::<u64>(), n in 1usize..7, gamma in 0.01f64..0.99) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = to_dmatrix(&random_positive_stable(&mut rng, n));
        let p = solve_lyapunov(&h).unwrap();
        let lam = symmetric_eigenvalues(&p);
        let mut expected: Vec<f64> = lam.iter().flat_map(|l| [(1.0 - gamma) * l, (1.0 + gamma) * l]).collect();
        expected.sort_by(f64::total_cmp);
        let got = symmetric_eigenvalues(&lyapunov_block(&p, gamma));
        for (g, e) in got.iter().zip(&expected) {
            prop_assert!((g - e).abs() <= 1e-9 * (1.0 + e.abs()), "{got:?} vs {expected:?}");
        }
        prop_assert!(got[0] > 0.0);
    }
}
