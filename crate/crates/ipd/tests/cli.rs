use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn ipd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ipd")).args(args).env_remove("IPD_THREADS").output().expect("binary runs")
}

fn ok(args: &[&str]) -> Vec<u8> {
    let out = ipd(args);
    assert_eq!(out.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out.stdout
}

fn schema_check(schema_file: &str, doc: &[u8]) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("schemas").join(schema_file);
    let schema: Value = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    let doc: Value = serde_json::from_slice(doc).expect("json output");
    let v = jsonschema::validator_for(&schema).unwrap();
    let errors: Vec<String> = v.iter_errors(&doc).map(|e| format!("{}: {e}", e.instance_path)).collect();
    assert!(errors.is_empty(), "{schema_file}: {errors:?}");
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).display().to_string()
}

fn simulated(dir: &Path, rule: &str, seed: &str) -> String {
    let f = p(dir, &format!("sim_{}_{seed}.csv", rule.replace(':', "_")));
    ok(&["simulate", "--dgp", "linear", "--n", "1000", "--p", "10", "--rule", rule, "--seed", seed, "--out", &f]);
    f
}

fn scenario_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/figure3.json")
}

#[test]
fn fit_json_has_estimate_and_lambda() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulated(dir.path(), "attenuated:0.8:1-2", "4");
    let before = fs::read(&data).unwrap();
    let out = ok(&[
        "fit",
        "--data",
        &data,
        "--outcome",
        "y",
        "--pred",
        "y_hat",
        "--covars",
        "z1,z2",
        "--target",
        "ols",
        "--method",
        "ppi++",
    ]);
    schema_check("fit_output.schema.json", &out);
    let v: Value = serde_json::from_slice(&out).unwrap();
    assert_eq!(v["theta_hat"].as_array().unwrap().len(), 3);
    assert_eq!(v["coefficient_names"][2], "z2");
    let lambda = v["lambda"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&lambda));
    assert!(v["ci_lower"][1].as_f64().unwrap() < v["ci_upper"][1].as_f64().unwrap());
    assert_eq!(fs::read(&data).unwrap(), before, "input file must not change");
}

#[test]
fn classical_without_unlabeled_rows() {
    let dir = tempfile::tempdir().unwrap();
    let data = p(dir.path(), "all.csv");
    fs::write(&data, "y,yhat\n1,1.1\n2,1.9\n4,3.5\n").unwrap();
    let out = ok(&["fit", "--data", &data, "--outcome", "y", "--pred", "yhat", "--method", "classical"]);
    let v: Value = serde_json::from_slice(&out).unwrap();
    assert!((v["theta_hat"][0].as_f64().unwrap() - 7.0 / 3.0).abs() < 1e-12);
    assert_eq!(v["n_unlabeled"], 0);
}

#[test]
fn unknown_method_is_a_usage_error() {
    let out = ipd(&["fit", "--data", "x.csv", "--outcome", "y", "--pred", "yhat", "--method", "magic"]);
    assert_eq!(out.status.code(), Some(64));
    let err = String::from_utf8_lossy(&out.stderr);
    for m in ["naive", "classical", "oracle", "ppi", "ppi++", "pspa"] {
        assert!(err.contains(m), "{err}");
    }
    assert_eq!(ipd(&["fit", "--bogus-flag"]).status.code(), Some(64));
    assert_eq!(ipd(&["--help"]).status.code(), Some(0));
}

#[test]
fn numerical_failure_prints_error_json() {
    let dir = tempfile::tempdir().unwrap();
    let data = p(dir.path(), "rank.csv");
    fs::write(&data, "y,yhat,x\n1,1,2\n2,2,2\n3,2,2\n,1,2\n").unwrap();
    let out = ipd(&[
        "fit",
        "--data",
        &data,
        "--outcome",
        "y",
        "--pred",
        "yhat",
        "--covars",
        "x",
        "--target",
        "ols",
        "--method",
        "classical",
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["error"]["kind"].is_string());
}

#[test]
fn bad_input_and_bad_output_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out =
        ipd(&["fit", "--data", &p(dir.path(), "missing.csv"), "--outcome", "y", "--pred", "yhat", "--method", "ppi"]);
    assert_eq!(out.status.code(), Some(65));
    let data = p(dir.path(), "d.csv");
    fs::write(&data, "y,x\n1,2\n").unwrap();
    let out = ipd(&["fit", "--data", &data, "--outcome", "y", "--pred", "yhat", "--method", "ppi"]);
    assert_eq!(out.status.code(), Some(65));
    assert!(String::from_utf8_lossy(&out.stderr).contains("yhat"));
    fs::write(&data, "y,yhat\n1,2\n,3\n").unwrap();
    let unwritable = p(&dir.path().join("no/such/dir"), "o.json");
    let out =
        ipd(&["fit", "--data", &data, "--outcome", "y", "--pred", "yhat", "--method", "ppi", "--out", &unwritable]);
    assert_eq!(out.status.code(), Some(74));
}

#[test]
fn simulate_setting_c_has_null_naive_slope() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulated(dir.path(), "attenuated:1.0:2-10", "1");
    let fit = |method: &str| -> Value {
        serde_json::from_slice(&ok(&[
            "fit",
            "--data",
            &data,
            "--outcome",
            "y",
            "--pred",
            "y_hat",
            "--covars",
            "z1",
            "--target",
            "ols",
            "--method",
            method,
        ]))
        .unwrap()
    };
    // Without z1 in the rule the predictions carry no information about it.
    let naive = fit("naive");
    assert!(naive["theta_hat"][1].as_f64().unwrap().abs() < 0.1, "{}", naive["theta_hat"]);
    let ppi = fit("ppi");
    assert!((ppi["theta_hat"][1].as_f64().unwrap() - 1.0).abs() < 0.3, "{}", ppi["theta_hat"]);
}

#[test]
fn simulate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = fs::read(simulated(dir.path(), "trees:10:4:1-10", "9")).unwrap();
    let b = ok(&["simulate", "--dgp", "linear", "--n", "1000", "--rule", "trees:10:4:1-10", "--seed", "9"]);
    assert_eq!(a, b);
    let c = ok(&["simulate", "--dgp", "linear", "--n", "1000", "--rule", "trees:10:4:1-10", "--seed", "10"]);
    assert_ne!(a, c);
}

#[test]
fn diagnose_with_perfect_predictions_has_zero_deltas() {
    let dir = tempfile::tempdir().unwrap();
    let data = p(dir.path(), "perfect.csv");
    let mut text = String::from("y,yhat,x,g\n");
    for i in 0..60 {
        let x = (i as f64 * 0.37).sin();
        let y = 1.0 + 2.0 * x + (i as f64 * 1.3).cos();
        let label = if i % 10 == 0 { String::new() } else { format!("{y}") };
        text.push_str(&format!("{label},{y},{x},{}\n", ["a", "b"][i % 2]));
    }
    fs::write(&data, text).unwrap();
    let out = ok(&["diagnose", "--data", &data, "--outcome", "y", "--pred", "yhat", "--covars", "x", "--groups", "g"]);
    schema_check("diagnose_output.schema.json", &out);
    let v: Value = serde_json::from_slice(&out).unwrap();
    for d in v["side_by_side"]["deltas"].as_array().unwrap() {
        assert!(d.as_f64().unwrap().abs() < 1e-10);
    }
    assert_eq!(v["side_by_side"]["structural_distortion"], false);
    assert_eq!(v["calibration"]["overall"]["mse"].as_f64().unwrap(), 0.0);
    assert_eq!(v["calibration"]["subgroups"].as_array().unwrap().len(), 2);
    let text =
        String::from_utf8(ok(&["diagnose", "--data", &data, "--outcome", "y", "--pred", "yhat", "--format", "text"]))
            .unwrap();
    assert!(text.contains("calibration"));
}

#[test]
fn mc_bench_is_reproducible_and_valid() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenario_path().display().to_string();
    let (a, b) = (p(dir.path(), "a.csv"), p(dir.path(), "b.csv"));
    ok(&["mc-bench", "--scenario", &sc, "--reps", "12", "--seed", "3", "--out", &a]);
    ok(&["mc-bench", "--scenario", &sc, "--reps", "12", "--seed", "3", "--threads", "3", "--out", &b]);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let csv = fs::read_to_string(&a).unwrap();
    // 4 settings x 2 targets; the ols target has two coordinates.
    assert_eq!(csv.lines().count(), 1 + 4 * 6 * 3);
    for s in ["A", "B", "C", "D"] {
        assert!(csv.contains(&format!("figure3,{s},ols(z1),")));
    }
    let json = ok(&["mc-bench", "--scenario", &sc, "--reps", "5", "--format", "json"]);
    schema_check("bench_output.schema.json", &json);
}

#[test]
fn mc_bench_thread_env_default() {
    let sc = scenario_path().display().to_string();
    let args = ["mc-bench", "--scenario", &sc, "--reps", "6"];
    let plain = ok(&args);
    let env = Command::new(env!("CARGO_BIN_EXE_ipd")).args(args).env("IPD_THREADS", "2").output().unwrap();
    assert_eq!(env.status.code(), Some(0));
    assert_eq!(plain, env.stdout);
}

#[test]
fn invalid_scenario_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(scenario_path()).unwrap().replace("\"n\": 1000", "\"n\": \"many\"");
    let bad = p(dir.path(), "bad.json");
    fs::write(&bad, text).unwrap();
    let out = ipd(&["mc-bench", "--scenario", &bad]);
    assert_eq!(out.status.code(), Some(65));
    assert!(String::from_utf8_lossy(&out.stderr).contains("'/n'"), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn group_rates_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let data = p(dir.path(), "cat.csv");
    ok(&[
        "simulate",
        "--dgp",
        "categorical",
        "--categories",
        "a,b,c",
        "--priors",
        "0.5,0.3,0.2",
        "--rates",
        "0.6,0.4,0.2",
        "--accuracy",
        "0.85",
        "--n",
        "4000",
        "--rho",
        "0.25",
        "--seed",
        "2",
        "--out",
        &data,
    ]);
    let base = [
        "group-rates",
        "--data",
        &data,
        "--group",
        "group",
        "--group-hat",
        "group_hat",
        "--outcome",
        "outcome",
        "--categories",
        "a,b,c",
    ];
    let mut args = base.to_vec();
    args.extend(["--true-group", "group_true", "--format", "json"]);
    let out = ok(&args);
    schema_check("group_rates_output.schema.json", &out);
    let v: Value = serde_json::from_slice(&out).unwrap();
    assert_eq!(v["corrected"]["method"], "ppi");
    assert_eq!(v["corrected"]["groups"].as_array().unwrap().len(), 3);
    let text = String::from_utf8(ok(&base)).unwrap();
    assert!(text.lines().next().unwrap().contains("naive vs ppi"));
    assert_eq!(text.lines().count(), 3 + 3);
}

#[test]
fn config_file_supplies_flags() {
    let dir = tempfile::tempdir().unwrap();
    let data = p(dir.path(), "d.csv");
    fs::write(&data, "y,yhat\n1,1.5\n3,2.5\n,4\n,6\n").unwrap();
    let cfg = p(dir.path(), "cfg.json");
    let body = serde_json::json!({ "command": "fit", "data": data, "outcome": "y", "pred": "yhat", "method": "naive" });
    fs::write(&cfg, body.to_string()).unwrap();
    let v: Value = serde_json::from_slice(&ok(&["--config", &cfg])).unwrap();
    assert_eq!(v["method"], "naive");
    assert!((v["theta_hat"][0].as_f64().unwrap() - 3.5).abs() < 1e-12);
    // Explicit flags override the file.
    let v: Value = serde_json::from_slice(&ok(&["--config", &cfg, "fit", "--method", "ppi"])).unwrap();
    assert_eq!(v["method"], "ppi");
    assert!((v["theta_hat"][0].as_f64().unwrap() - 5.0).abs() < 1e-12);
}

#[test]
fn simulate_matches_first_mc_replication() {
    use ipd_core::simulation::{replicate, McConfig, McSetup};
    use ipd_core::Method;

    let dir = tempfile::tempdir().unwrap();
    let data = simulated(dir.path(), "attenuated:0.8:1-2", "7");
    let fit: Value = serde_json::from_slice(&ok(&[
        "fit",
        "--data",
        &data,
        "--outcome",
        "y",
        "--pred",
        "y_hat",
        "--covars",
        "z1",
        "--target",
        "ols",
        "--method",
        "ppi",
    ]))
    .unwrap();
    let cfg = McConfig::slope_study("attenuated:0.8:1-2".parse().unwrap(), vec![Method::Ppi], 1, 7);
    let rec = replicate(&McSetup::new(cfg).unwrap(), 0);
    let theta = &rec.outcomes[0].as_ref().unwrap().theta;
    for (j, t) in theta.iter().enumerate() {
        assert!((fit["theta_hat"][j].as_f64().unwrap() - t).abs() < 1e-10);
    }
}
