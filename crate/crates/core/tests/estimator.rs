use std::sync::Arc;

use kmed::data::{Dataset, Observation};
use kmed::estimator::{confidence_interval, standard_error};
use kmed::nuisance::{fit_alpha, fit_lambda, ConstantOutcome, Marginals, NuisanceConfig, NuisanceFit, Pattern};
use kmed::{
    estimate_psi, estimate_psi_plugin, estimate_psi_with_plan, moment_function, solve_fold_psi,
    theoretical_bias_variance, smoothing_bias, BandwidthRule, CrossFit, DgpSpec, EstimatorConfig, FoldPlan,
    KernelFamily, KernelSpec, Nuisance, TreatmentPair,
};
use proptest::prelude::*;

fn reference(n: usize, seed: u64) -> Dataset {
    DgpSpec::reference().generate_with_seed(n, seed).unwrap()
}

fn pair() -> TreatmentPair {
    TreatmentPair::scalar(1.0, 0.0)
}

fn fitted(n: usize, seed: u64) -> NuisanceFit {
    NuisanceFit::fit(&reference(n, seed), &NuisanceConfig::default()).unwrap()
}

fn obs<'a>(a: &'a [f64], m: f64, x: &'a [f64], y: f64) -> Observation<'a> {
    Observation { a, m, x, y }
}

#[test]
fn far_treatment_leaves_only_eta() {
    let fit = fitted(300, 1);
    let k = KernelSpec::default();
    let (a, x) = ([10.0], [0.3]);
    let eta = fit.eta(&[1.0], &[0.0], &x).unwrap();
    let m = moment_function(&obs(&a, 0.7, &x, 123.0), &fit, &pair(), 0.25, &k, 0.5).unwrap();
    assert_eq!(m, eta - 0.25);
    let zero = moment_function(&obs(&a, 0.7, &x, -9.0), &fit, &pair(), eta, &k, 0.5).unwrap();
    assert_eq!(zero, 0.0);
}

#[test]
fn vanishing_residuals_give_zero_moment() {
    let train = reference(300, 2);
    let config = NuisanceConfig::default();
    let fit = NuisanceFit::from_parts(
        Arc::new(ConstantOutcome(2.5)),
        fit_alpha(&train, &config).unwrap(),
        fit_lambda(&train, &config).unwrap(),
        Marginals::fit(&train).unwrap(),
        &config,
    )
    .unwrap();
    let k = KernelSpec::default();
    for a in [-3.0, 0.0, 0.05, 0.9, 1.0, 1.2] {
        let m = moment_function(&obs(&[a], 0.4, &[0.1], 2.5), &fit, &pair(), 2.5, &k, 0.5).unwrap();
        assert!(m.abs() < 1e-12, "a = {a}: {m}");
    }
}

#[test]
fn moment_function_checks_dimensions() {
    let fit = fitted(200, 3);
    let k = KernelSpec::default();
    assert!(moment_function(&obs(&[1.0, 2.0], 0.0, &[0.0], 0.0), &fit, &pair(), 0.0, &k, 0.5).is_err());
    assert!(moment_function(&obs(&[1.0], 0.0, &[0.0], 0.0), &fit, &pair(), 0.0, &k, 0.0).is_err());
}

#[test]
fn outside_both_windows_contributes_eta_minus_psi() {
    let data = reference(400, 4);
    let fit = NuisanceFit::fit(&data, &NuisanceConfig::default()).unwrap();
    let (k, h, psi) = (KernelSpec::default(), 0.3, 1.7);
    let p = pair();
    let mut n_outside = 0;
    for o in data.rows() {
        if (o.a[0] - 1.0).abs() > h && o.a[0].abs() > h {
            n_outside += 1;
            let m = moment_function(&o, &fit, &p, psi, &k, h).unwrap();
            assert_eq!(m, fit.eta(&p.a, &p.a_prime, o.x).unwrap() - psi);
        }
    }
    assert!(n_outside > 100);
}

#[test]
fn single_row_fold_outside_windows_returns_eta() {
    let data = reference(50, 5);
    let fit = NuisanceFit::fit(&data, &NuisanceConfig::default()).unwrap();
    let row = (0..data.len()).find(|&i| {
        let a = data.row(i).a[0];
        (a - 1.0).abs() > 0.5 && a.abs() > 0.5
    });
    let row = row.expect("some row outside both windows");
    let fold = data.select(&[row]);
    let psi = solve_fold_psi(&fold, &fit, &pair(), &KernelSpec::default(), 0.5).unwrap();
    assert_eq!(psi, fit.eta(&[1.0], &[0.0], data.row(row).x).unwrap());
    assert!(solve_fold_psi(&data.select(&[]), &fit, &pair(), &KernelSpec::default(), 0.5).is_err());
}

#[test]
fn fold_root_zeroes_the_fold_average() {
    let data = reference(500, 6);
    let fit = NuisanceFit::fit(&data, &NuisanceConfig::default()).unwrap();
    let (k, h) = (KernelSpec::default(), 0.4);
    let psi = solve_fold_psi(&data, &fit, &pair(), &k, h).unwrap();
    let avg: f64 = data
        .rows()
        .map(|o| moment_function(&o, &fit, &pair(), psi, &k, h).unwrap())
        .sum::<f64>()
        / data.len() as f64;
    assert!(avg.abs() < 1e-10);
}

#[test]
fn one_fold_is_the_full_sample_estimator() {
    let data = reference(800, 7);
    let config = EstimatorConfig {
        folds: 1,
        ..EstimatorConfig::default()
    };
    let est = estimate_psi(&data, &pair(), &config).unwrap();
    let fit = NuisanceFit::fit(&data, &config.nuisance).unwrap();
    let direct = solve_fold_psi(&data, &fit, &pair(), &config.kernel, est.h_used).unwrap();
    assert!((est.psi_hat - direct).abs() < 1e-12);
    assert_eq!(est.per_fold.len(), 1);
}

#[test]
fn constant_outcome_gives_constant_fold_estimates() {
    let dgp = DgpSpec {
        y0: 4.0,
        y_a: 0.0,
        y_m: 0.0,
        y_x: 0.0,
        sd_y: 0.0,
        ..DgpSpec::reference()
    };
    let data = dgp.generate_with_seed(300, 8).unwrap();
    let config = EstimatorConfig {
        folds: 2,
        ..EstimatorConfig::default()
    };
    let est = estimate_psi(&data, &pair(), &config).unwrap();
    for f in &est.per_fold {
        assert!((f - 4.0).abs() < 1e-9);
    }
    assert!((est.psi_hat - 4.0).abs() < 1e-9);
    assert!(est.se < 1e-9);
}

#[test]
fn result_invariants() {
    let data = reference(1000, 9);
    let est = estimate_psi(&data, &pair(), &EstimatorConfig::default()).unwrap();
    assert_eq!(est.per_fold.len(), 5);
    assert_eq!(est.n, 1000);
    let mean = est.per_fold.iter().sum::<f64>() / 5.0;
    assert!((est.psi_hat - mean).abs() < 1e-15);
    assert!(est.se > 0.0);
    assert!(est.ci_lower <= est.psi_hat && est.psi_hat <= est.ci_upper);
    let (lo, hi) = confidence_interval(est.psi_hat, est.se, 0.95).unwrap();
    assert_eq!((lo, hi), (est.ci_lower, est.ci_upper));
    let json = serde_json::to_string(&est).unwrap();
    let keys = ["pair", "psi_hat", "per_fold", "se", "ci_lower", "ci_upper", "ci_level", "h_used", "n"];
    let positions: Vec<usize> = keys.iter().map(|k| json.find(&format!("\"{k}\"")).unwrap()).collect();
    assert!(positions.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn same_seed_same_estimate() {
    let data = reference(600, 10);
    let c = EstimatorConfig::default();
    assert_eq!(estimate_psi(&data, &pair(), &c).unwrap(), estimate_psi(&data, &pair(), &c).unwrap());
}

#[test]
fn permuting_rows_with_the_stored_assignment_preserves_the_estimate() {
    let data = reference(700, 11);
    let config = EstimatorConfig::default();
    let plan = FoldPlan::new(data.len(), config.folds, config.seed).unwrap();
    let base = estimate_psi_with_plan(&data, &pair(), &config, plan.clone()).unwrap();
    let perm: Vec<usize> = (0..data.len()).map(|i| (i * 337 + 101) % data.len()).collect();
    let permuted = data.select(&perm);
    let moved = estimate_psi_with_plan(&permuted, &pair(), &config, plan.permuted(&perm)).unwrap();
    // Row order changes only the floating-point summation order.
    assert!((base.psi_hat - moved.psi_hat).abs() < 1e-10);
    assert!((base.se - moved.se).abs() < 1e-10);
}

#[test]
fn estimates_cover_the_oracle() {
    let dgp = DgpSpec::reference();
    let truth = dgp.oracle_psi(1.0, 0.0);
    let data = dgp.generate_with_seed(4000, 12).unwrap();
    let undersmoothed = |folds| EstimatorConfig {
        folds,
        kernel: KernelSpec::new(KernelFamily::Epanechnikov, 0.5, 1).unwrap(),
        ..EstimatorConfig::default()
    };
    for folds in [1, 5] {
        let est = estimate_psi(&data, &pair(), &undersmoothed(folds)).unwrap();
        assert!((est.psi_hat - truth).abs() < 3.0 * est.se, "L={folds}: {est:?}");
    }
}

#[test]
fn plugin_estimator() {
    let constant = DgpSpec {
        y0: -1.5,
        y_a: 0.0,
        y_m: 0.0,
        y_x: 0.0,
        sd_y: 0.0,
        ..DgpSpec::reference()
    };
    let data = constant.generate_with_seed(200, 13).unwrap();
    let c = EstimatorConfig::default();
    assert!((estimate_psi_plugin(&data, &pair(), &c).unwrap() + 1.5).abs() < 1e-9);

    let dgp = DgpSpec::reference();
    let truth = dgp.oracle_psi(1.0, 0.0);
    let data = dgp.generate_with_seed(4000, 14).unwrap();
    assert!((estimate_psi_plugin(&data, &pair(), &c).unwrap() - truth).abs() < 0.1);

    let wrong = EstimatorConfig {
        misspecification: Pattern::only(Nuisance::Gamma),
        ..c
    };
    let plugin = estimate_psi_plugin(&data, &pair(), &wrong).unwrap();
    // Intercept-only γ turns the plug-in into the outcome mean, E[Y] = y0 when
    // E[A] = E[X] = 0 and m0 = 0.
    let mean_y = data.outcomes().iter().sum::<f64>() / data.len() as f64;
    assert!((plugin - mean_y).abs() < 1e-9);
    let mc_se = 3.0 * (data.outcomes().iter().map(|y| (y - mean_y).powi(2)).sum::<f64>() / data.len() as f64).sqrt()
        / (data.len() as f64).sqrt();
    assert!((truth - dgp.y0).abs() == 2.0);
    assert!((plugin - truth).abs() > 3.0 * mc_se);
}

#[test]
fn standard_error_formula() {
    let m = [0.5, -1.5, 2.0, 1.0, -2.0];
    let mean = 0.0;
    let s = (m.iter().map(|v: &f64| (v - mean).powi(2)).sum::<f64>() / 5.0).sqrt();
    assert!((standard_error(&m) - s / 5f64.sqrt()).abs() < 1e-12);
    assert_eq!(standard_error(&[3.0; 7]), 0.0);
}

#[test]
fn fixed_bandwidth_is_used_verbatim() {
    let data = reference(500, 15);
    let config = EstimatorConfig {
        bandwidth: BandwidthRule::Fixed { h: 0.37 },
        ..EstimatorConfig::default()
    };
    assert_eq!(estimate_psi(&data, &pair(), &config).unwrap().h_used, 0.37);
    let cf = CrossFit::fit(&data, &config).unwrap();
    assert_eq!(cf.bandwidth(), 0.37);
    assert_eq!(cf.fits().len(), 5);
}

#[test]
fn invalid_configs_are_rejected() {
    let data = reference(100, 16);
    for bad in [
        EstimatorConfig {
            folds: 0,
            ..EstimatorConfig::default()
        },
        EstimatorConfig {
            ci_level: 1.0,
            ..EstimatorConfig::default()
        },
        EstimatorConfig {
            bandwidth: BandwidthRule::Fixed { h: -1.0 },
            ..EstimatorConfig::default()
        },
        EstimatorConfig {
            folds: 60,
            ..EstimatorConfig::default()
        },
    ] {
        assert!(estimate_psi(&data, &pair(), &bad).is_err());
    }
}

/// Leading bias for the linear law without interaction, reduced by hand:
/// `B / (h² μ2) = y_a [(a_x E[X] - a) / σ_A² + m_a² (a' - a) / σ_M²]
///               - y_m m_a (a' - a_x E[X]) / σ_A²`.
fn hand_reduced_bias(d: &DgpSpec, a: f64, ap: f64, mu2: f64, h: f64) -> f64 {
    let (va, vm) = (d.sd_a * d.sd_a, d.sd_m * d.sd_m);
    let inner = d.y_a * ((d.a_x * d.x_mean - a) / va + d.m_a * d.m_a * (ap - a) / vm)
        - d.y_m * d.m_a * (ap - d.a_x * d.x_mean) / va;
    h * h * mu2 * inner
}

#[test]
fn leading_bias_matches_hand_reduction() {
    let designs = [
        DgpSpec::reference(),
        DgpSpec {
            x_mean: 0.4,
            a_x: 0.8,
            sd_a: 1.3,
            m_a: -0.6,
            sd_m: 0.9,
            y_a: 1.5,
            y_m: -2.0,
            ..DgpSpec::reference()
        },
    ];
    for d in &designs {
        for kernel in [KernelSpec::default(), KernelSpec::new(KernelFamily::Gaussian, 1.0, 1).unwrap()] {
            for (a, ap) in [(1.0, 0.0), (0.5, 0.5), (-0.3, 0.8)] {
                let h = 0.2;
                let t = theoretical_bias_variance(d, &TreatmentPair::scalar(a, ap), &kernel, h).unwrap();
                let oracle = hand_reduced_bias(d, a, ap, kernel.kernel_moments().second_moment, h);
                assert!((t.bias - oracle).abs() < 1e-3 * h * h, "{a},{ap}: {} vs {oracle}", t.bias);
            }
        }
    }
}

#[test]
fn bias_is_quadratic_in_bandwidth() {
    let d = DgpSpec::reference();
    let k = KernelSpec::default();
    let b1 = theoretical_bias_variance(&d, &pair(), &k, 0.2).unwrap().bias;
    let b2 = theoretical_bias_variance(&d, &pair(), &k, 0.1).unwrap().bias;
    assert!((b1 / b2 - 4.0).abs() < 0.4);
    let e1 = smoothing_bias(&d, &pair(), &k, 0.2).unwrap();
    let e2 = smoothing_bias(&d, &pair(), &k, 0.1).unwrap();
    assert!((e1 / e2 - 4.0).abs() < 0.4);
    // The exact smoothing bias approaches the leading term as h shrinks.
    assert!((e2 - b2).abs() < 0.01 * b2.abs());
}

#[test]
fn variance_constant_grows_with_outcome_noise() {
    let k = KernelSpec::default();
    let quiet = theoretical_bias_variance(&DgpSpec { sd_y: 0.5, ..DgpSpec::reference() }, &pair(), &k, 0.1).unwrap();
    let loud = theoretical_bias_variance(&DgpSpec { sd_y: 2.0, ..DgpSpec::reference() }, &pair(), &k, 0.1).unwrap();
    assert!(loud.e1 > quiet.e1);
    assert!((loud.variance_leading / loud.e1 - 0.6).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn moment_is_affine_in_psi(
        a in -3.0f64..3.0, m in -3.0f64..3.0, x in -2.0f64..2.0, y in -5.0f64..5.0,
        p1 in -10.0f64..10.0, p2 in -10.0f64..10.0, h in 0.05f64..1.5,
    ) {
        let fit = fitted(200, 17);
        let k = KernelSpec::default();
        let (av, xv) = ([a], [x]);
        let o = obs(&av, m, &xv, y);
        let m1 = moment_function(&o, &fit, &pair(), p1, &k, h).unwrap();
        let m2 = moment_function(&o, &fit, &pair(), p2, &k, h).unwrap();
        let scale = m1.abs().max(m2.abs()).max(1.0);
        prop_assert!(((m1 - m2) - (p2 - p1)).abs() <= 1e-12 * scale);
    }

    #[test]
    fn fold_plans_partition_rows(n in 10usize..400, folds in 1usize..6, seed in any::<u64>()) {
        let plan = FoldPlan::new(n, folds, seed).unwrap();
        let sizes = plan.sizes();
        prop_assert_eq!(sizes.iter().sum::<usize>(), n);
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        for l in 0..folds {
            let mut both: Vec<usize> = plan.indices(l).into_iter().chain(plan.complement(l)).collect();
            both.sort_unstable();
            prop_assert_eq!(both, (0..n).collect::<Vec<_>>());
        }
        prop_assert_eq!(plan, FoldPlan::new(n, folds, seed).unwrap());
    }
}
