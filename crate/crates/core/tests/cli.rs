use std::path::Path;
use std::process::{Command, Output};

use clusteq::boundaries::{beta_star_equal, BoundaryRow};
use clusteq::cli::{read_matrix, read_vector, DEFAULT_SEED, SEED_ENV};
use clusteq::estimate::SpectralEstimator;
use clusteq::model::{gen_label_config, gen_paired_sample, Calibration, ModelParams};
use clusteq::sim::{phase_sweep, GridRow, MethodProcedure};
use clusteq::stats::survival_rs;
use clusteq::testing::{run_test, Method, TestOptions, TestReport};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn clusteq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_clusteq"))
        .args(args)
        .env_remove(SEED_ENV)
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = clusteq(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn status(args: &[&str]) -> (i32, String) {
    let out = clusteq(args);
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn boundary_table() {
    let csv = ok(&["boundary", "--r", "0.1:2:100", "--s", "0"]);
    let mut rdr = csv::Reader::from_reader(csv.as_bytes());
    assert_eq!(
        rdr.headers().unwrap().iter().collect::<Vec<_>>(),
        ["r", "s", "region", "beta_idj", "beta_bar", "beta_star", "t_star", "detectable"]
    );
    let rows: Vec<BoundaryRow> = rdr.deserialize().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 100);
    for row in &rows {
        assert!((row.beta_star - beta_star_equal(row.r).unwrap()).abs() < 1e-12, "{row:?}");
        assert_eq!(row.s, 0.0);
    }
    assert_eq!(rows[0].r, 0.1);
    assert_eq!(rows[99].r, 2.0);
}

#[test]
fn gen_then_test_matches_in_process() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("data");
    ok(&[
        "gen", "--n", "800", "--r", "0.6", "--s", "0.2", "--beta", "0.4", "--p", "3", "--q", "2", "--alternative",
        "--seed", "17", "--out", p(&out),
    ]);
    let (x, y, th, et) = (out.join("x.csv"), out.join("y.csv"), out.join("theta.csv"), out.join("eta.csv"));

    // the same pipeline in process
    let cal = Calibration::new(800, 0.6, 0.2, 0.4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let params = ModelParams::from_calibration(&cal, 3, 2, &mut rng).unwrap();
    let labels = gen_label_config(800, cal.alternative_flips(), &mut rng).unwrap();
    let sample = gen_paired_sample(&params, &labels, &mut rng);
    assert_eq!(read_matrix(&x).unwrap(), sample.x);
    assert_eq!(read_matrix(&y).unwrap(), sample.y);
    assert_eq!(read_vector(&th).unwrap(), params.theta);
    assert_eq!(read_vector(&et).unwrap(), params.eta);

    let general = ["test", "--x", p(&x), "--y", p(&y), "--theta", p(&th), "--eta", p(&et), "--method", "general", "--seed", "5"];
    let first = ok(&general);
    assert_eq!(first, ok(&general));
    let report: TestReport = serde_json::from_str(&first).unwrap();
    let est = SpectralEstimator::default();
    let want = run_test(
        Method::General,
        &sample,
        Some(&params),
        &est,
        &TestOptions::default(),
        &mut ChaCha8Rng::seed_from_u64(5),
    )
    .unwrap();
    assert_eq!(report, want);

    let ada = ok(&["test", "--x", p(&x), "--y", p(&y), "--adaptive", "--method", "ada-hc", "--seed", "5"]);
    let report: TestReport = serde_json::from_str(&ada).unwrap();
    let want = run_test(Method::AdaHc, &sample, None, &est, &TestOptions::default(), &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    assert_eq!(report, want);

    let est_json = ok(&["estimate", "--x", p(&x)]);
    let v: serde_json::Value = serde_json::from_str(&est_json).unwrap();
    assert_eq!(v["theta_hat"].as_array().unwrap().len(), 3);
    for key in ["lambda1", "iterations", "residual"] {
        assert!(v[key].is_number(), "{key}");
    }
}

#[test]
fn seed_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, env: Option<&str>, seed: Option<&str>| {
        let out = dir.path().join(name);
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_clusteq"));
        cmd.args(["gen", "--n", "50", "--r", "0.5", "--out", p(&out)]).env_remove(SEED_ENV);
        if let Some(e) = env {
            cmd.env(SEED_ENV, e);
        }
        if let Some(s) = seed {
            cmd.args(["--seed", s]);
        }
        assert!(cmd.output().unwrap().status.success());
        std::fs::read_to_string(out.join("x.csv")).unwrap()
    };
    let default = run("a", None, None);
    assert_eq!(default, run("b", None, Some(&DEFAULT_SEED.to_string())));
    let from_env = run("c", Some("99"), None);
    assert_ne!(default, from_env);
    assert_eq!(from_env, run("d", None, Some("99")));
    assert_eq!(run("e", Some("99"), Some("1")), run("f", None, Some("1")));
}

#[test]
fn survival_table() {
    let csv = ok(&["survival", "--r", "0.3", "--s", "0.2", "--n", "10000", "--t", "-0.5", "--t", "0", "--t", "0.4"]);
    let mut rdr = csv::Reader::from_reader(csv.as_bytes());
    assert_eq!(rdr.headers().unwrap().iter().collect::<Vec<_>>(), ["t", "S", "log_S"]);
    let rows: Vec<(f64, f64, f64)> = rdr.deserialize().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 3);
    for (t, s, ls) in rows {
        assert_eq!(s, survival_rs(0.3, 0.2, 10_000, t).unwrap());
        assert!((ls - s.ln()).abs() < 1e-12);
    }
}

#[test]
fn sweep_csv_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("grid.csv");
    let args = [
        "sweep", "--s", "0.1", "--n", "300", "--r", "0.5:1:2", "--beta", "0.5:0.8:2", "--method", "bonferroni", "--reps", "4",
        "--seed", "3", "--out", p(&out),
    ];
    ok(&args);
    let rows: Vec<GridRow> = csv::Reader::from_path(&out).unwrap().deserialize().map(Result::unwrap).collect();
    let grid = phase_sweep(0.1, 300, &[0.5, 1.0], &[0.5, 0.8], (2, 2), &MethodProcedure::new(Method::Bonferroni), 4, 3).unwrap();
    assert_eq!(rows, grid.rows());
    let mut threaded: Vec<&str> = args.to_vec();
    let out2 = dir.path().join("grid2.csv");
    let last = threaded.len() - 1;
    threaded[last] = p(&out2);
    threaded.extend(["--threads", "3"]);
    ok(&threaded);
    assert_eq!(std::fs::read(&out).unwrap(), std::fs::read(&out2).unwrap());
}

#[test]
fn validation_errors() {
    let (code, err) = status(&["test", "--method", "ada-hc"]);
    assert_eq!(code, 2);
    assert!(err.contains("--x"), "{err}");

    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d");
    ok(&["gen", "--n", "60", "--r", "0.5", "--out", p(&data)]);
    let (x, y) = (data.join("x.csv"), data.join("y.csv"));
    let (code, err) = status(&["test", "--x", p(&x), "--y", p(&y), "--method", "general"]);
    assert_eq!(code, 2);
    assert!(err.contains("--theta"), "{err}");
    let (code, err) = status(&["test", "--x", p(&x), "--y", p(&y), "--adaptive", "--method", "bonferroni"]);
    assert_eq!(code, 2);
    assert!(err.contains("--adaptive"), "{err}");
    let (code, err) = status(&["test", "--x", "/nonexistent.csv", "--y", p(&y), "--method", "ada-bonf"]);
    assert_eq!(code, 2);
    assert!(err.contains("--x"), "{err}");

    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "x1,x2\n1,2\n3,oops\n").unwrap();
    let (code, err) = status(&["estimate", "--x", p(&bad)]);
    assert_eq!(code, 2);
    assert!(err.contains("--x") && err.contains("oops"), "{err}");

    let (code, err) = status(&["boundary", "--r", "1:2"]);
    assert_eq!(code, 2);
    assert!(err.contains("--r"), "{err}");
    assert_eq!(status(&["boundary", "--r", "-1"]).0, 2);
    assert_eq!(status(&["survival", "--r", "0.5", "--n", "100"]).0, 2);
    assert_eq!(status(&["test", "--method", "nope"]).0, 2);
    assert_eq!(status(&["frobnicate"]).0, 2);
    assert_eq!(status(&["--help"]).0, 0);
}
