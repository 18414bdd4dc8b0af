use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use kmed::io::write_dataset;
use kmed::DgpSpec;

const CONFIG: &str = r#"
[dgp]
a_x = 0.25
m_a = 1.0
m_x = 0.5
sd_m = 1.5
y0 = 1.0
y_a = 2.0
y_m = 1.0
y_x = 0.5

[estimator]
seed = 3

[estimator.kernel]
bandwidth_constant = 0.5

[experiment]
n_grid = [200, 300]
pairs = [{ a = 1.0, a_prime = 0.0 }]
reps = 2
estimators = ["tr", "plugin"]
patterns = ["none", "gamma+alpha"]
base_seed = 42

[estimate]
pairs = [{ a = 1.0, a_prime = 0.0 }, { a = 0.5, a_prime = -0.5 }]
decompose = true

[oracle]
pairs = [{ a = 1.0, a_prime = 0.0 }, { a = 0.5, a_prime = 0.5 }]
"#;

fn kmed(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kmed")).args(args).output().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.toml");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn oracle_prints_closed_form_truths() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), CONFIG);
    let out = kmed(&["--mode", "oracle", "--config", &config]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert_eq!(stdout(&out), "a,a_prime,psi0,nde,nie,ace\n1,0,3,2,1,3\n0.5,0.5,2.5,0,0,0\n");
}

#[test]
fn oracle_follows_the_intercept() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &CONFIG.replace("y0 = 1.0", "y0 = 3.0"));
    let out = kmed(&["--mode", "oracle", "--config", &config, "--format", "json"]);
    let rows: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(rows[0]["psi0"], 5.0);
    assert_eq!(rows[1]["psi0"], 4.5);
}

#[test]
fn simulate_writes_one_row_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), CONFIG);
    let path = dir.path().join("report.csv");
    let out = kmed(&["--mode", "simulate", "--config", &config, "--output", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let csv = fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(
        lines[0],
        "estimator,n,a,a_prime,pattern,bias,sd,rmse,mean_se,coverage,skew,kurtosis,reps_completed,wall_ms"
    );
    // 2 sample sizes x 2 patterns x 2 estimators.
    assert_eq!(lines.len(), 1 + 8);
    assert!(lines.iter().skip(1).all(|l| l.split(',').nth(12) == Some("2")));
}

#[test]
fn simulate_is_reproducible_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), CONFIG);
    for format in ["csv", "json"] {
        let run = |workers: &str| {
            let out = kmed(&["--mode", "simulate", "--config", &config, "--format", format, "--workers", workers]);
            assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
            out.stdout
        };
        let one = run("1");
        assert_eq!(one, run("1"));
        assert_eq!(one, run("4"));
    }
    let a = kmed(&["--mode", "simulate", "--config", &config, "--seed", "7"]);
    let b = kmed(&["--mode", "simulate", "--config", &config]);
    assert_ne!(a.stdout, b.stdout);
}

#[test]
fn estimate_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), CONFIG);
    let data_path = dir.path().join("data.csv");
    let data = DgpSpec::reference().generate_with_seed(2000, 11).unwrap();
    write_dataset(&data, fs::File::create(&data_path).unwrap()).unwrap();
    let input = data_path.to_str().unwrap();

    let out = kmed(&["--mode", "estimate", "--config", &config, "--input", input]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "kind,a,a_prime,estimate,se,ci_lower,ci_upper");
    let kinds: Vec<&str> = lines[1..].iter().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(kinds, ["psi", "psi", "nde", "nie", "ace", "nde", "nie", "ace"]);
    let psi: Vec<f64> = lines[1].split(',').skip(3).map(|v| v.parse().unwrap()).collect();
    assert!((psi[0] - 3.0).abs() < 4.0 * psi[1], "{psi:?}");

    let out = kmed(&["--mode", "estimate", "--config", &config, "--input", input, "--format", "json"]);
    let json: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(json["estimates"].as_array().unwrap().len(), 2);
    assert!(json["decompositions"][0]["nde"]["estimate"].as_f64().unwrap().is_finite());
    assert_eq!(json["estimates"][0]["per_fold"].as_array().unwrap().len(), 5);
}

#[test]
fn usage_and_config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), CONFIG);
    assert_eq!(kmed(&["--mode", "oracle"]).status.code(), Some(2));
    assert_eq!(kmed(&["--mode", "guess", "--config", &config]).status.code(), Some(2));
    let missing = dir.path().join("absent.toml");
    let out = kmed(&["--mode", "oracle", "--config", missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("absent.toml"));
    let bad = write_config(dir.path(), "[dgp]\nunknown_key = 1\n");
    assert_eq!(kmed(&["--mode", "oracle", "--config", &bad]).status.code(), Some(2));
    let bad = write_config(dir.path(), &CONFIG.replace("reps = 2", "reps = 0"));
    assert_eq!(kmed(&["--mode", "simulate", "--config", &bad]).status.code(), Some(2));
}

#[test]
fn input_errors_exit_with_two_and_name_the_problem() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), CONFIG);
    let out = kmed(&["--mode", "estimate", "--config", &config]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("--input"));

    let absent = dir.path().join("none.csv");
    let out = kmed(&["--mode", "estimate", "--config", &config, "--input", absent.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));

    let nan = dir.path().join("nan.csv");
    fs::write(&nan, "A1,M,X1,Y\n0.1,0.2,0.3,0.4\n0.5,NaN,0.1,0.2\n").unwrap();
    let out = kmed(&["--mode", "estimate", "--config", &config, "--input", nan.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let message = stderr(&out);
    assert!(message.contains("row 2") && message.contains("`M`"), "{message}");

    let out = kmed(&[
        "--mode",
        "oracle",
        "--config",
        &config,
        "--output",
        dir.path().join("no/such/dir/out.csv").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn estimation_failures_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), CONFIG);
    let flat = dir.path().join("flat.csv");
    let mut csv = String::from("A1,M,X1,Y\n");
    for i in 0..40 {
        csv.push_str(&format!("{},1,{},{}\n", i as f64 / 10.0, (i % 7) as f64, i % 3));
    }
    fs::write(&flat, csv).unwrap();
    let out = kmed(&["--mode", "estimate", "--config", &config, "--input", flat.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
}

#[test]
fn library_entry_point_matches_the_binary() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), CONFIG);
    let path = dir.path().join("oracle.csv");
    let code = kmed_cli::run(["kmed", "--mode", "oracle", "--config", &config, "--output", path.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert_eq!(fs::read_to_string(path).unwrap(), stdout(&kmed(&["--mode", "oracle", "--config", &config])));
}
