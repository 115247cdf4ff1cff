use proemb_core::estimators::{fit_tlearner, predict_ite, BaseLearnerSpec, BoostParams};
use proemb_core::experiment::{generate_panel, ExperimentConfig};
use proemb_core::graphgen::{gen_dyads, gen_homophily_ba};
use proemb_core::numerics::{sample_gaussian, solve_least_squares, Mat, RngStream, SparseRows};
use proemb_core::proemb::Standardizer;
use proemb_core::simdata::{
    gen_confounders, gen_outcomes, h_max, h_mean, neighbor_mean, OutcomeCoeffs,
};
use proptest::prelude::*;

fn gaussian_mat(rows: usize, cols: usize, rng: &mut RngStream) -> Mat {
    Mat::from_fn(rows, cols, |_, _| sample_gaussian(rng, 0.0, 1.0).unwrap())
}

fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, p);
        b.swap(c, p);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            for k in c..n {
                a[r][k] -= f * a[c][k];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn homophily_ba_graph_invariants(n in 4usize..120, m0 in 2usize..6, m in 1usize..5, seed in any::<u64>()) {
        prop_assume!(m0 <= n && m <= m0);
        let u = gen_confounders(n, 4, &mut RngStream::new(seed, 0)).unwrap().u;
        let g = gen_homophily_ba(&u, m0, m, &mut RngStream::new(seed, 1)).unwrap();
        prop_assert_eq!(g.edge_count(), m0 * (m0 - 1) / 2 + (n - m0) * m);
        for i in 0..n {
            let nb = g.neighbors(i);
            prop_assert!(!nb.contains(&i));
            prop_assert!(nb.windows(2).all(|w| w[0] < w[1]));
            for &j in nb {
                prop_assert!(g.has_edge(j, i));
            }
            if i >= m0 {
                prop_assert!(g.degree(i) >= m);
            }
        }
    }

    #[test]
    fn dyads_are_perfect_matchings(half in 1usize..80, seed in any::<u64>()) {
        let n = 2 * half;
        let u = gen_confounders(n, 3, &mut RngStream::new(seed, 0)).unwrap().u;
        let g = gen_dyads(&u, &mut RngStream::new(seed, 1)).unwrap();
        prop_assert_eq!(g.edge_count(), half);
        prop_assert!((0..n).all(|i| g.degree(i) == 1));
    }

    #[test]
    fn max_aggregation_dominates_mean(v in proptest::collection::vec(0u8..2, 1..40)) {
        prop_assert!(h_max(&v).unwrap() >= h_mean(&v).unwrap());
    }

    #[test]
    fn neighbor_mean_matches_direct_average(n in 4usize..40, seed in any::<u64>()) {
        let u = gen_confounders(n, 3, &mut RngStream::new(seed, 0)).unwrap().u;
        let g = gen_homophily_ba(&u, 3.min(n), 2, &mut RngStream::new(seed, 1)).unwrap();
        let z = gaussian_mat(n, 5, &mut RngStream::new(seed, 2));
        let zngb = neighbor_mean(&z, &g).unwrap();
        for i in 0..n {
            let nb = g.neighbors(i);
            for j in 0..5 {
                let want = nb.iter().map(|&k| z.get(k, j)).sum::<f64>() / nb.len() as f64;
                prop_assert!((zngb.get(i, j) - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn least_squares_matches_normal_equations(rows in 8usize..40, cols in 1usize..6, seed in any::<u64>()) {
        let mut rng = RngStream::new(seed, 0);
        let x = gaussian_mat(rows, cols, &mut rng);
        let y: Vec<f64> = (0..rows).map(|_| sample_gaussian(&mut rng, 0.0, 1.0).unwrap()).collect();
        let xtx: Vec<Vec<f64>> = (0..cols)
            .map(|a| (0..cols).map(|b| (0..rows).map(|i| x.get(i, a) * x.get(i, b)).sum()).collect())
            .collect();
        let xty: Vec<f64> = (0..cols).map(|a| (0..rows).map(|i| x.get(i, a) * y[i]).sum()).collect();
        let want = solve_dense(xtx, xty);
        let got = solve_least_squares(&x, &y, 0.0).unwrap();
        for (g, w) in got.iter().zip(&want) {
            prop_assert!((g - w).abs() <= 1e-8 * (1.0 + w.abs()));
        }
    }

    #[test]
    fn outcomes_share_noise(tau in -3.0f64..3.0, seed in any::<u64>()) {
        let n = 60;
        let conf = gen_confounders(n, 4, &mut RngStream::new(seed, 0)).unwrap();
        let t: Vec<u8> = (0..n).map(|i| (i % 3 != 0) as u8).collect();
        let yp: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
        let coeffs = OutcomeCoeffs { alpha_u: vec![0.0; 4], beta_u: vec![1.5, -2.0, 0.5, 3.0], beta_y: 0.2 };
        let p = gen_outcomes(&conf, &yp, &t, &coeffs, tau, 1.0, &mut RngStream::new(seed, 1)).unwrap();
        for i in 0..n {
            let sign = if t[i] == 1 { 1.0 } else { -1.0 };
            let scale = p.y_fact[i].abs().max(p.y_cf[i].abs()).max(1.0);
            prop_assert!((p.y_fact[i] - p.y_cf[i] - sign * tau).abs() <= 4.0 * f64::EPSILON * scale);
        }
    }

    #[test]
    fn swapping_arms_negates_effects(seed in any::<u64>()) {
        let mut rng = RngStream::new(seed, 0);
        let x = gaussian_mat(60, 3, &mut rng);
        let t: Vec<u8> = (0..60).map(|i| (x.get(i, 0) + 0.3 * (i % 5) as f64 > 0.4) as u8).collect();
        prop_assume!(t.iter().any(|&v| v == 0) && t.iter().any(|&v| v == 1));
        let y: Vec<f64> = (0..60).map(|i| x.get(i, 1) + t[i] as f64 + sample_gaussian(&mut rng, 0.0, 0.5).unwrap()).collect();
        let flipped: Vec<u8> = t.iter().map(|&v| 1 - v).collect();
        let specs = [
            BaseLearnerSpec::LinearRidge { ridge: 0.0 },
            BaseLearnerSpec::GradBoost(BoostParams { trees: 10, depth: 2, shrinkage: 0.3 }),
        ];
        for spec in specs {
            let seeded = RngStream::new(seed, 1);
            let a = predict_ite(&fit_tlearner(&x, &t, &y, &spec, &seeded).unwrap(), &x).unwrap();
            let b = predict_ite(&fit_tlearner(&x, &flipped, &y, &spec, &seeded).unwrap(), &x).unwrap();
            for (p, q) in a.iter().zip(&b) {
                prop_assert!((p + q).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn linear_tlearner_is_affine_invariant(seed in any::<u64>(), scale in 0.1f64..10.0, shift in -5.0f64..5.0) {
        let mut rng = RngStream::new(seed, 0);
        let x = gaussian_mat(80, 3, &mut rng);
        let t: Vec<u8> = (0..80).map(|i| (i % 2) as u8).collect();
        let y: Vec<f64> = (0..80).map(|i| 2.0 * x.get(i, 2) - x.get(i, 0) + 0.5 * t[i] as f64).collect();
        let moved = x.map(|v| scale * v + shift);
        let spec = BaseLearnerSpec::LinearRidge { ridge: 0.0 };
        let rng = RngStream::new(seed, 1);
        let a = predict_ite(&fit_tlearner(&x, &t, &y, &spec, &rng).unwrap(), &x).unwrap();
        let b = predict_ite(&fit_tlearner(&moved, &t, &y, &spec, &rng).unwrap(), &moved).unwrap();
        for (p, q) in a.iter().zip(&b) {
            prop_assert!((p - q).abs() < 1e-8);
        }
    }

    #[test]
    fn standardized_columns_have_unit_scale(seed in any::<u64>()) {
        let mut rng = RngStream::new(seed, 0);
        let raw = Mat::from_fn(30, 6, |_, j| if j == 5 { 2.0 } else { (rng.uniform() * 4.0).floor() });
        let sparse = SparseRows::from_dense(&raw);
        let x = Standardizer::fit(&sparse).apply(&sparse).unwrap().to_dense();
        for j in 0..6 {
            let col: Vec<f64> = (0..30).map(|i| x.get(i, j)).collect();
            let mean = col.iter().sum::<f64>() / 30.0;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 30.0;
            prop_assert!(mean.abs() < 1e-12);
            let constant = (0..30).all(|i| raw.get(i, j) == raw.get(0, j));
            if constant {
                prop_assert!(col.iter().all(|&v| v == 0.0));
            } else {
                prop_assert!((var - 1.0).abs() < 1e-10);
            }
        }
    }
}

#[test]
fn panels_are_reproducible_and_runs_differ() {
    let config = ExperimentConfig {
        n: 120,
        d: 4,
        vocab: 60,
        doc_len: 20,
        ..ExperimentConfig::default()
    };
    let a = generate_panel(&config, 0).unwrap();
    let b = generate_panel(&config, 0).unwrap();
    let c = generate_panel(&config, 1).unwrap();
    assert_eq!(a.digest(), b.digest());
    assert_ne!(a.digest(), c.digest());
    let reseeded = ExperimentConfig { seed: 9, ..config };
    assert_ne!(a.digest(), generate_panel(&reseeded, 0).unwrap().digest());
}
