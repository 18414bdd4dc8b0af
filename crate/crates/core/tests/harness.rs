use kmed::harness::{normality_check, CellReport, EstimatorKind, CSV_HEADER};
use kmed::{run_experiment, DgpSpec, EstimatorConfig, Execution, ExperimentSpec, KernelFamily, KernelSpec, Nuisance, Pattern, TreatmentPair};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};

fn spec(n_grid: Vec<usize>, reps: usize) -> ExperimentSpec {
    ExperimentSpec {
        dgp: DgpSpec::reference(),
        estimator: EstimatorConfig::default(),
        n_grid,
        pairs: vec![TreatmentPair::scalar(1.0, 0.0)],
        reps,
        estimators: vec![EstimatorKind::Tr],
        patterns: vec![Pattern::NONE],
        base_seed: 2024,
        record_timing: false,
    }
}

fn only_cell(spec: &ExperimentSpec) -> CellReport {
    let report = run_experiment(spec, Execution::Sequential).unwrap();
    assert_eq!(report.cells.len(), 1);
    report.cells.into_iter().next().unwrap()
}

#[test]
fn single_replication_summary() {
    let s = spec(vec![300], 1);
    let cell = only_cell(&s);
    assert_eq!(cell.reps_completed, 1);
    assert_eq!(cell.sd, 0.0);
    assert!((cell.bias - (cell.estimates[0] - cell.truth)).abs() < 1e-15);
    assert!((cell.rmse - cell.bias.abs()).abs() < 1e-15);
    assert!(cell.skew.is_none());
}

#[test]
fn rmse_decomposes_into_bias_and_sd() {
    let cell = only_cell(&spec(vec![300], 40));
    assert!((cell.rmse.powi(2) - (cell.bias.powi(2) + cell.sd.powi(2))).abs() < 1e-10);
    let cov = cell.coverage.unwrap();
    assert!((0.0..=1.0).contains(&cov));
    assert_eq!(cell.estimates.len(), 40);
}

#[test]
fn noiseless_outcome_reduces_to_the_plug_in() {
    let mut s = spec(vec![400], 10);
    s.dgp = DgpSpec {
        y_a: 0.0,
        y_m: 0.0,
        sd_y: 1e-9,
        ..DgpSpec::reference()
    };
    s.estimators = vec![EstimatorKind::Tr, EstimatorKind::Plugin];
    let report = run_experiment(&s, Execution::Sequential).unwrap();
    let (tr, plugin) = (&report.cells[0], &report.cells[1]);
    // Y = y0 + y_x X is fitted exactly, so both residual terms vanish and
    // only covariate sampling error y_x (mean X - E[X]) remains.
    for (t, p) in tr.estimates.iter().zip(&plugin.estimates) {
        assert!((t - p).abs() < 1e-6, "{t} vs {p}");
    }
    assert!(tr.sd < 4.0 * s.dgp.y_x / 20.0);
}

#[test]
fn reports_do_not_depend_on_worker_count() {
    let mut s = spec(vec![200, 400], 6);
    s.estimators = vec![EstimatorKind::Tr, EstimatorKind::Plugin];
    s.patterns = vec![Pattern::NONE, Pattern::only(Nuisance::Alpha)];
    let seq = run_experiment(&s, Execution::Sequential).unwrap();
    for exec in [Execution::Parallel, Execution::with_workers(3)] {
        let par = run_experiment(&s, exec).unwrap();
        assert_eq!(par.to_csv_string().unwrap(), seq.to_csv_string().unwrap());
        assert_eq!(par.to_json_pretty().unwrap(), seq.to_json_pretty().unwrap());
    }
    assert_eq!(seq.cells.len(), 2 * 2 * 2);
}

#[test]
fn csv_has_the_fixed_header_and_one_row_per_cell() {
    let mut s = spec(vec![200], 3);
    s.estimators = vec![EstimatorKind::Tr, EstimatorKind::Plugin];
    let csv = run_experiment(&s, Execution::Sequential).unwrap().to_csv_string().unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], CSV_HEADER.join(","));
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("tr,200,1,0,none,"));
    // The plug-in has no standard error, so mean_se and coverage are empty.
    let plugin: Vec<&str> = lines[2].split(',').collect();
    assert_eq!((plugin[0], plugin[8], plugin[9]), ("plugin", "", ""));
    assert_eq!(plugin[13], "0");
}

#[test]
fn failed_replications_are_recorded_with_their_seed() {
    let mut s = spec(vec![200], 3);
    s.dgp = DgpSpec {
        sd_m: 0.0,
        m_a: 0.0,
        m_x: 0.0,
        ..DgpSpec::reference()
    };
    let cell = only_cell(&s);
    assert_eq!(cell.reps_completed, 0);
    assert!(!cell.is_complete());
    assert_eq!(cell.failures.len(), 3);
    for (rep, f) in cell.failures.iter().enumerate() {
        assert_eq!(f.rep, rep);
        assert_eq!(f.seed, s.replication_seed(200, rep));
        assert!(!f.message.is_empty());
    }
    assert!(cell.bias.is_nan());
}

#[test]
fn replication_seeds_are_distinct() {
    let s = spec(vec![100], 1);
    let mut seeds: Vec<u64> = (0..1000).flat_map(|r| [s.replication_seed(100, r), s.replication_seed(200, r)]).collect();
    seeds.sort_unstable();
    seeds.dedup();
    assert_eq!(seeds.len(), 2000);
}

#[test]
fn invalid_specs_are_rejected() {
    let mut s = spec(vec![100], 0);
    assert!(run_experiment(&s, Execution::Sequential).is_err());
    s.reps = 1;
    s.n_grid = vec![6];
    assert!(run_experiment(&s, Execution::Sequential).is_err());
    s.n_grid = vec![];
    assert!(run_experiment(&s, Execution::Sequential).is_err());
}

#[test]
fn normality_check_separates_normal_from_skewed() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let normal: Vec<f64> = Normal::new(3.0, 2.0).unwrap().sample_iter(&mut rng).take(300).collect();
    let check = normality_check(&normal).unwrap();
    assert!(check.pass, "{check:?}");
    let skewed: Vec<f64> = Exp::new(1.0).unwrap().sample_iter(&mut rng).take(300).collect();
    let check = normality_check(&skewed).unwrap();
    assert!(!check.pass);
    assert!((check.skew - 2.0).abs() < 0.6, "{check:?}");
    assert!(normality_check(&normal[..50]).is_err());
    assert!(normality_check(&[1.0; 200]).is_err());
}

#[test]
fn standard_errors_track_the_sampling_spread() {
    let mut s = spec(vec![600], 400);
    s.estimator.kernel = KernelSpec::new(KernelFamily::Epanechnikov, 0.5, 1).unwrap();
    let cell = only_cell(&s);
    let ratio = cell.sd / cell.mean_se.unwrap();
    assert!((0.8..=1.25).contains(&ratio), "sd / mean se = {ratio}");
}

#[test]
fn misspecifying_two_nuisances_biases_the_estimate() {
    let mut s = spec(vec![1000], 40);
    s.patterns = vec![Pattern::NONE, Pattern::only(Nuisance::Gamma).with(Nuisance::Alpha)];
    let report = run_experiment(&s, Execution::Parallel).unwrap();
    let good = report.find(EstimatorKind::Tr, 1000, 1.0, 0.0, Pattern::NONE).unwrap();
    let bad = report.find(EstimatorKind::Tr, 1000, 1.0, 0.0, s.patterns[1]).unwrap();
    assert!(bad.bias.abs() > 5.0 * bad.mc_se());
    assert!(bad.bias.abs() > good.bias.abs());
}

#[test]
fn timing_is_opt_in() {
    let mut s = spec(vec![200], 2);
    assert_eq!(only_cell(&s).wall_ms, 0.0);
    s.record_timing = true;
    assert!(only_cell(&s).wall_ms > 0.0);
}
