mod common;

use common::*;
use vinestress::bicop::{CopulaFamily, Rotation};
use vinestress::dvine::{fit_order, forward_select, SelectionConfig};
use vinestress::marginals::kendall_tau;

fn corr3() -> Vec<Vec<f64>> {
    // rho12 = 0.5, rho23 = 0.3, partial rho13;2 = 0.4
    let (a, b, p): (f64, f64, f64) = (0.5, 0.3, 0.4);
    let r13 = p * ((1.0 - a * a) * (1.0 - b * b)).sqrt() + a * b;
    vec![vec![1.0, a, r13], vec![a, 1.0, b], vec![r13, b, 1.0]]
}

fn corr4() -> Vec<Vec<f64>> {
    vec![
        vec![1.0, 0.6, 0.3, -0.2],
        vec![0.6, 1.0, 0.4, 0.1],
        vec![0.3, 0.4, 1.0, 0.5],
        vec![-0.2, 0.1, 0.5, 1.0],
    ]
}

#[test]
fn partials_of_three_variable_matrix() {
    let p = dvine_partials(&corr3());
    assert!((p[0][0] - 0.5).abs() < 1e-14);
    assert!((p[0][1] - 0.3).abs() < 1e-14);
    assert!((p[1][0] - 0.4).abs() < 1e-14);
}

#[test]
fn gaussian_vine_collapses_to_gaussian_copula() {
    for r in [corr3(), corr4()] {
        let vine = gaussian_vine(&r);
        let mut rng = TestRng(11);
        for _ in 0..100 {
            let row: Vec<f64> = (0..r.len()).map(|_| rng.uniform(0.001, 0.999)).collect();
            let got = vine.loglik(std::slice::from_ref(&row)).unwrap();
            let want = gaussian_copula_log_density(&r, &row);
            assert!((got - want).abs() < 1e-6, "{got} vs {want} at {row:?}");
        }
    }
}

#[test]
fn three_variable_decomposition() {
    let vine = vine_from(vec![
        vec![
            (CopulaFamily::Clayton, Rotation::R0, 2.0),
            (CopulaFamily::Gumbel, Rotation::R270, 1.5),
        ],
        vec![(CopulaFamily::Frank, Rotation::R0, -2.5)],
    ]);
    let c12 = vine.pair(1, 0).copula;
    let c23 = vine.pair(1, 1).copula;
    let c13 = vine.pair(2, 0).copula;
    let mut rng = TestRng(5);
    for _ in 0..100 {
        let (u1, u2, u3) = (rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0));
        let want = c12.log_pdf(u1, u2)
            + c23.log_pdf(u2, u3)
            + c13.log_pdf(c12.h1(u1, u2), c23.h2(u2, u3));
        let got = vine.loglik(&[vec![u1, u2, u3]]).unwrap();
        assert!((got - want).abs() < 1e-12);
    }
}

#[test]
fn conditional_cdf_matches_normal_conditional() {
    let r = corr4();
    let vine = gaussian_vine(&r);
    let mut rng = TestRng(21);
    for _ in 0..200 {
        let u: Vec<f64> = (0..3).map(|_| rng.uniform(0.01, 0.99)).collect();
        let v = rng.uniform(0.01, 0.99);
        let z: Vec<f64> = u.iter().map(|&p| phi_inv(p)).collect();
        let (mu, sd) = mvn_conditional(&r, &z);
        let want = phi((phi_inv(v) - mu) / sd);
        let got = vine.conditional_cdf(v, &u).unwrap();
        assert!((got - want).abs() < 1e-6, "{got} vs {want}");
    }
}

#[test]
fn conditional_quantile_matches_normal_conditional() {
    let r = corr3();
    let vine = gaussian_vine(&r);
    let mut rng = TestRng(8);
    for _ in 0..200 {
        let u: Vec<f64> = (0..2).map(|_| rng.uniform(0.01, 0.99)).collect();
        let a = rng.uniform(0.01, 0.99);
        let z: Vec<f64> = u.iter().map(|&p| phi_inv(p)).collect();
        let (mu, sd) = mvn_conditional(&r, &z);
        let want = phi(mu + sd * phi_inv(a));
        let got = vine.conditional_quantile(a, &u).unwrap();
        assert!((got - want).abs() < 1e-8, "{got} vs {want}");
    }
}

#[test]
fn single_gaussian_pair_quantile_closed_form() {
    let rho: f64 = 0.7;
    let vine = vine_from(vec![vec![(CopulaFamily::Gaussian, Rotation::R0, rho)]]);
    for &u in &[0.05, 0.3, 0.5, 0.9] {
        for &a in &[0.025, 0.5, 0.975] {
            let want = phi(rho * phi_inv(u) + (1.0 - rho * rho).sqrt() * phi_inv(a));
            let got = vine.conditional_quantile(a, &[u]).unwrap();
            assert!((got - want).abs() < 1e-10);
            let numeric = bisect(|x| vine.conditional_cdf(x, &[u]).unwrap(), a, 0.0, 1.0, 1e-13);
            assert!((got - numeric).abs() < 1e-9);
        }
    }
}

#[test]
fn quantile_inverts_cdf_on_mixed_vine() {
    let vine = mixed_vine();
    let mut rng = TestRng(3);
    for _ in 0..1000 {
        let u: Vec<f64> = (0..3).map(|_| rng.uniform(0.0, 1.0)).collect();
        let a = rng.uniform(0.001, 0.999);
        let q = vine.conditional_quantile(a, &u).unwrap();
        let back = vine.conditional_cdf(q, &u).unwrap();
        assert!((back - a).abs() < 1e-8, "alpha {a} q {q} back {back} u {u:?}");
    }
}

#[test]
fn quantiles_never_cross() {
    let vine = mixed_vine();
    let alphas: Vec<f64> = (0..11).map(|i| 0.01 + 0.098 * i as f64).collect();
    let mut rng = TestRng(99);
    for _ in 0..300 {
        let u: Vec<f64> = (0..3).map(|_| rng.uniform(0.0, 1.0)).collect();
        let q = vine.conditional_quantiles(&alphas, &u).unwrap();
        assert!(q.windows(2).all(|w| w[0] <= w[1]), "{q:?}");
    }
}

#[test]
fn independence_simulation_has_no_dependence() {
    let vine = vinestress::dvine::DVineModel::<f64>::independence(vec!["a".into(), "b".into(), "c".into()]).unwrap();
    let cols = columns(&vine.simulate(5000, 1).unwrap());
    for i in 0..3 {
        for j in i + 1..3 {
            assert!(kendall_tau(&cols[i], &cols[j]).unwrap().abs() < 0.05);
        }
    }
}

#[test]
fn gaussian_pair_simulation_matches_tau() {
    let vine = vine_from(vec![vec![(CopulaFamily::Gaussian, Rotation::R0, 0.6)]]);
    let cols = columns(&vine.simulate(5000, 2).unwrap());
    let want = 2.0 / std::f64::consts::PI * 0.6f64.asin();
    assert!((kendall_tau(&cols[0], &cols[1]).unwrap() - want).abs() < 0.03);
}

#[test]
fn simulation_is_seeded() {
    let vine = mixed_vine();
    assert_eq!(vine.simulate(50, 7).unwrap(), vine.simulate(50, 7).unwrap());
    assert_ne!(vine.simulate(50, 7).unwrap(), vine.simulate(50, 8).unwrap());
}

#[test]
fn refit_recovers_pair_taus() {
    let truth = mixed_vine();
    let cols = columns(&truth.simulate(5000, 42).unwrap());
    let names = ["v0", "v1", "v2", "v3"];
    let covs: Vec<(&str, &[f64])> = (1..4).map(|j| (names[j], cols[j].as_slice())).collect();
    let fit = fit_order((names[0], &cols[0]), &covs, &SelectionConfig::default()).unwrap();
    for t in 1..=3 {
        for e in 0..=3 - t {
            let a = truth.pair(t, e).copula.tau();
            let b = fit.pair(t, e).copula.tau();
            assert!((a - b).abs() < 0.05, "tree {t} edge {e}: {a} vs {b}");
        }
    }
}

fn signal_data(seed: u64, n: usize) -> Vec<Vec<f64>> {
    // response depends on v1 only; v2, v3 are independent noise
    let vine = vine_from(vec![
        vec![
            (CopulaFamily::Gaussian, Rotation::R0, 0.5),
            (CopulaFamily::Independence, Rotation::R0, 0.0),
            (CopulaFamily::Independence, Rotation::R0, 0.0),
        ],
        vec![
            (CopulaFamily::Independence, Rotation::R0, 0.0),
            (CopulaFamily::Independence, Rotation::R0, 0.0),
        ],
        vec![(CopulaFamily::Independence, Rotation::R0, 0.0)],
    ]);
    columns(&vine.simulate(n, seed).unwrap())
}

#[test]
fn signal_covariate_selected_first() {
    let mut hits = 0;
    for seed in 0..30 {
        let cols = signal_data(seed, 500);
        // list the signal last so order of evaluation cannot favor it
        let cands = [("B", cols[2].as_slice()), ("C", cols[3].as_slice()), ("A", cols[1].as_slice())];
        let m = forward_select(("Y", &cols[0]), &cands, &SelectionConfig::default()).unwrap();
        if m.trace().steps.first().map(|s| s.candidate.as_str()) == Some("A") {
            hits += 1;
        }
        let lls: Vec<f64> = m.trace().steps.iter().map(|s| s.conditional_loglik).collect();
        assert!(lls.windows(2).all(|w| w[0] <= w[1]));
        assert!((m.conditional_loglik() - lls.last().copied().unwrap_or(0.0)).abs() < 1e-9);
    }
    assert!(hits >= 27, "{hits}/30");
}

#[test]
fn noise_candidates_rarely_selected() {
    let mut ok = 0;
    for seed in 0..30 {
        let cols = signal_data(1000 + seed, 500);
        // drop the signal: response against pure noise
        let cands = [("B", cols[2].as_slice()), ("C", cols[3].as_slice())];
        let m = forward_select(("Y", &cols[0]), &cands, &SelectionConfig::default()).unwrap();
        if m.n_covariates() <= 1 {
            ok += 1;
        }
        assert_eq!(m.trace().marginal_only, m.n_covariates() == 0);
    }
    assert!(ok >= 24, "{ok}/30");
}

#[test]
fn strong_single_candidate_is_selected() {
    let th = vinestress::bicop::tau_to_param(CopulaFamily::Gumbel, Rotation::R0, 0.6).unwrap();
    let vine = vine_from(vec![vec![(CopulaFamily::Gumbel, Rotation::R0, th)]]);
    for seed in 0..5 {
        let cols = columns(&vine.simulate(500, seed).unwrap());
        let m = forward_select(("Y", &cols[0]), &[("A", cols[1].as_slice())], &SelectionConfig::default()).unwrap();
        assert_eq!(m.covariates(), ["A".to_string()]);
    }
}

#[test]
fn selection_searches_insertion_positions() {
    // Y - A strong, A - B strong, Y independent of B given A: best order puts
    // A between Y and B, which an append-only search cannot reach once B is in.
    let vine = vine_from(vec![
        vec![
            (CopulaFamily::Gaussian, Rotation::R0, 0.3),
            (CopulaFamily::Gaussian, Rotation::R0, 0.8),
        ],
        vec![(CopulaFamily::Gaussian, Rotation::R0, 0.6)],
    ]);
    let cols = columns(&vine.simulate(1000, 5).unwrap());
    let cands = [("A", cols[1].as_slice()), ("B", cols[2].as_slice())];
    let m = forward_select(("Y", &cols[0]), &cands, &SelectionConfig::default()).unwrap();
    assert_eq!(m.n_covariates(), 2);
    // the fitted path must reach a likelihood at least that of the true order
    let fixed = fit_order(("Y", &cols[0]), &cands, &SelectionConfig::default()).unwrap();
    assert!(m.conditional_loglik() >= fixed.conditional_loglik() - 1e-9);
}

#[test]
fn forced_covariate_always_enters() {
    let cols = signal_data(3, 300);
    let cfg = SelectionConfig {
        forced: vec!["C".into()],
        ..SelectionConfig::default()
    };
    let cands = [("A", cols[1].as_slice()), ("C", cols[3].as_slice())];
    let m = forward_select(("Y", &cols[0]), &cands, &cfg).unwrap();
    assert_eq!(m.trace().steps[0].candidate, "C");
    assert!(m.covariates().contains(&"A".to_string()));
}
