use proptest::prelude::*;

use vinestress::baselines::{count_crossings, fit_linear_quantile, pinball_objective};
use vinestress::bicop::{tau_to_param, BivariateCopula, CopulaFamily, FittedCopula, Rotation};
use vinestress::dvine::DVineModel;
use vinestress::marginals::{kendall_tau, rank_transform, MarginalEcdf};

const FAMILIES: [CopulaFamily; 5] = [
    CopulaFamily::Gaussian,
    CopulaFamily::Clayton,
    CopulaFamily::Gumbel,
    CopulaFamily::Frank,
    CopulaFamily::Joe,
];

/// A copula with the given Kendall's tau, rotated as needed for its sign.
fn copula(fam: usize, tau: f64, alt_rotation: bool) -> BivariateCopula<f64> {
    let family = FAMILIES[fam];
    let rotation = match (family.rotatable(), tau > 0.0, alt_rotation) {
        (false, _, _) => Rotation::R0,
        (true, true, false) => Rotation::R0,
        (true, true, true) => Rotation::R180,
        (true, false, false) => Rotation::R90,
        (true, false, true) => Rotation::R270,
    };
    let theta = tau_to_param(family, rotation, tau).unwrap();
    BivariateCopula::new(family, rotation, theta).unwrap()
}

fn signed_tau() -> impl Strategy<Value = f64> {
    (0.05f64..0.8, any::<bool>()).prop_map(|(t, neg)| if neg { -t } else { t })
}

fn arb_copula() -> impl Strategy<Value = BivariateCopula<f64>> {
    (0..FAMILIES.len(), signed_tau(), any::<bool>()).prop_map(|(f, t, r)| copula(f, t, r))
}

fn arb_vine(d: usize) -> impl Strategy<Value = DVineModel<f64>> {
    let edges = d * (d - 1) / 2;
    prop::collection::vec(arb_copula(), edges).prop_map(move |cs| {
        let mut it = cs.into_iter();
        let pairs = (1..d)
            .map(|t| {
                (0..d - t)
                    .map(|_| FittedCopula {
                        copula: it.next().unwrap(),
                        loglik: 0.0,
                        n: 0,
                    })
                    .collect()
            })
            .collect();
        DVineModel::new((0..d).map(|i| format!("v{i}")).collect(), pairs).unwrap()
    })
}

fn unit() -> impl Strategy<Value = f64> {
    0.001f64..0.999
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn h_functions_are_conditional_cdfs(c in arb_copula(), u in unit(), v in unit(), du in 0.0f64..0.2) {
        let a = c.h1(u, v);
        let b = c.h1((u + du).min(0.999), v);
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert!(b >= a - 1e-12);
        let h = c.h2(u, v);
        prop_assert!((0.0..=1.0).contains(&h));
    }

    #[test]
    fn hinv_round_trips(c in arb_copula(), p in unit(), given in unit()) {
        let u = c.hinv1(p, given).unwrap();
        prop_assert!((c.h1(u, given) - p).abs() < 1e-8, "{} {p} {given}", c.label());
        let v = c.hinv2(p, given).unwrap();
        prop_assert!((c.h2(given, v) - p).abs() < 1e-8, "{} {p} {given}", c.label());
    }

    #[test]
    fn copula_tau_matches_requested(f in 0..FAMILIES.len(), t in signed_tau(), r in any::<bool>()) {
        let c = copula(f, t, r);
        prop_assert!((c.tau() - t).abs() < 1e-6, "{} {} vs {t}", c.label(), c.tau());
    }

    #[test]
    fn vine_quantiles_never_cross(v in arb_vine(4), u in prop::collection::vec(unit(), 3)) {
        let alphas: Vec<f64> = (1..=11).map(|i| i as f64 / 12.0).collect();
        let q = v.conditional_quantiles(&alphas, &u).unwrap();
        prop_assert!(q.windows(2).all(|w| w[0] <= w[1]), "{q:?}");
        // round trip holds while the h-function chain stays clear of the
        // 1e-10 clamp applied to copula-scale arguments
        let w = v.covariate_conditionals(&u).unwrap();
        let inner = |x: f64| (1e-8..=1.0 - 1e-8).contains(&x);
        if w.iter().all(|&x| inner(x)) {
            for (a, x) in alphas.iter().zip(&q) {
                if inner(*x) {
                    prop_assert!((v.conditional_cdf(*x, &u).unwrap() - a).abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn vine_model_json_round_trips(v in arb_vine(3)) {
        let s = serde_json::to_string(&v).unwrap();
        let back: DVineModel<f64> = serde_json::from_str(&s).unwrap();
        prop_assert_eq!(back, v);
    }

    #[test]
    fn ecdf_is_monotone_and_inside_unit_interval(
        xs in prop::collection::vec(-5.0f64..5.0, 2..60),
        probes in prop::collection::vec(-10.0f64..10.0, 1..20),
    ) {
        let e = MarginalEcdf::from_sample(&xs).unwrap();
        let mut sorted = probes.clone();
        sorted.sort_by(f64::total_cmp);
        let vals: Vec<f64> = sorted.iter().map(|&x| e.cdf(x)).collect();
        prop_assert!(vals.iter().all(|&u| u > 0.0 && u < 1.0));
        prop_assert!(vals.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn ranks_are_plotting_positions(xs in prop::collection::hash_set(-1000i32..1000, 2..80)) {
        let x: Vec<f64> = xs.into_iter().map(f64::from).collect();
        let n = x.len();
        let mut r = rank_transform(&x).unwrap();
        r.sort_by(f64::total_cmp);
        for (k, u) in r.iter().enumerate() {
            prop_assert!((u - (k + 1) as f64 / (n + 1) as f64).abs() < 1e-15);
        }
    }

    #[test]
    fn kendall_tau_is_symmetric_and_bounded(
        pairs in prop::collection::vec((-50i32..50, -50i32..50), 3..80)
    ) {
        let x: Vec<f64> = pairs.iter().map(|p| f64::from(p.0)).collect();
        let y: Vec<f64> = pairs.iter().map(|p| f64::from(p.1)).collect();
        if let (Ok(a), Ok(b)) = (kendall_tau(&x, &y), kendall_tau(&y, &x)) {
            prop_assert!((a - b).abs() < 1e-15);
            prop_assert!((-1.0..=1.0).contains(&a));
        }
    }

    #[test]
    fn quantile_fit_beats_perturbations(
        pts in prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 8..40),
        alpha in 0.05f64..0.95,
        d0 in -0.5f64..0.5,
        d1 in -0.5f64..0.5,
    ) {
        let x: Vec<Vec<f64>> = pts.iter().map(|p| vec![p.0]).collect();
        let y: Vec<f64> = pts.iter().map(|p| p.1 + 0.5 * p.0).collect();
        let fit = match fit_linear_quantile(&x, &y, alpha) {
            Ok(f) => f,
            Err(_) => return Ok(()),
        };
        let other = [fit.intercept + d0, fit.slopes[0] + d1];
        prop_assert!(fit.objective <= pinball_objective(&x, &y, alpha, &other) + 1e-9);
    }

    #[test]
    fn sorted_predictions_have_no_crossings(mut rows in prop::collection::vec(prop::collection::vec(-1e3f64..1e3, 5), 1..30)) {
        for r in &mut rows {
            r.sort_by(f64::total_cmp);
        }
        prop_assert_eq!(count_crossings(&rows).total, 0);
    }
}
