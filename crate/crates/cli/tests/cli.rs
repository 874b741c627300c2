use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_weyl-lab");

fn weyl_lab(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, json: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, json).unwrap();
    path.to_str().unwrap().to_string()
}

fn run(config: &str, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["run", "--config", config, "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    weyl_lab(&args)
}

fn summary(out: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap()
}

const HARMONIC: &str = r#"{
    "experiment": "spectrum",
    "symbol": {"family": "radial", "coeffs": [0.0, 1.0]},
    "basis_size": 300,
    "lambda_grid": [201.0, 401.0]
}"#;

#[test]
fn harmonic_spectrum_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "h.json", HARMONIC);
    let out = dir.path().join("out");
    let res = run(&cfg, &out, &[]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));

    let csv = fs::read_to_string(out.join("spectrum.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("j,lambda,trusted"));
    for (j, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        let lambda: f64 = fields[1].parse().unwrap();
        assert!((lambda - (2 * j + 1) as f64).abs() < 1e-8);
        // 17 significant digits in scientific notation
        assert_eq!(fields[1].split('e').next().unwrap().len(), 18);
    }

    let s = summary(&out);
    assert_eq!(s["experiment"], "spectrum");
    assert_eq!(s["pass"], true);
    let c = &s["constants"]["weyl_constant"];
    assert!((c["predicted"].as_f64().unwrap() - 0.5).abs() < 1e-12);
    assert!((c["ratio"].as_f64().unwrap() - 1.0).abs() < 0.005);
    assert_eq!(s["inputs"]["tolerances"]["weyl_ratio"], 0.005);
    assert!(fs::read_to_string(out.join("weyl.csv"))
        .unwrap()
        .starts_with("lambda,N,sigma,ratio,predicted_constant\n"));
}

#[test]
fn failed_check_exits_one_and_still_writes_summary() {
    let dir = tempfile::tempdir().unwrap();
    let strict = HARMONIC.replace(
        r#""lambda_grid""#,
        r#""tolerances": {"weyl_ratio": 1e-6}, "lambda_grid""#,
    );
    let cfg = write_config(dir.path(), "strict.json", &strict);
    let out = dir.path().join("out");
    let res = run(&cfg, &out, &[]);
    assert_eq!(res.status.code(), Some(1));
    let s = summary(&out);
    assert_eq!(s["pass"], false);
    assert!(s["checks"].as_array().unwrap().iter().any(|c| c["pass"] == false));
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    for (i, text) in [
        "{ not json",
        r#"{"experiment": "spectrum"}"#,
        r#"{"experiment": "spectrum", "symbol": {"family": "radial", "coeffs": [0, 1]}, "typo": 3}"#,
    ]
    .iter()
    .enumerate()
    {
        let cfg = write_config(dir.path(), &format!("bad{i}.json"), text);
        assert_eq!(run(&cfg, &dir.path().join("out"), &[]).status.code(), Some(2), "{text}");
        assert_eq!(weyl_lab(&["validate", "--config", &cfg]).status.code(), Some(2));
    }
    let missing = dir.path().join("missing.json");
    assert_eq!(
        weyl_lab(&["validate", "--config", missing.to_str().unwrap()]).status.code(),
        Some(2)
    );
}

#[test]
fn module_errors_exit_three_with_message() {
    let dir = tempfile::tempdir().unwrap();
    // the fit range needs more eigenvalues than the basis provides
    let cfg = write_config(
        dir.path(),
        "short.json",
        r#"{"experiment": "weyl_check", "symbol": {"family": "exp_gevrey", "h": 1.0, "s": 2.0},
            "basis_size": 100, "fit_range": [50, 300]}"#,
    );
    let out = dir.path().join("out");
    let res = run(&cfg, &out, &[]);
    assert_eq!(res.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&res.stderr).contains("under-resolved"));
    let s = summary(&out);
    assert_eq!(s["pass"], false);
    assert!(s["error"].as_str().unwrap().contains("fit range"));
}

#[test]
fn thread_count_does_not_change_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "heat.json",
        r#"{"experiment": "heat_check", "symbol": {"family": "radial", "coeffs": [0.0, 1.0]},
            "basis_size": 600, "t_grid": [0.4, 0.2, 0.1]}"#,
    );
    let mut csvs = Vec::new();
    for (k, extra) in [vec![], vec!["--threads", "1"], vec!["--threads", "3"]].iter().enumerate() {
        let out = dir.path().join(format!("out{k}"));
        assert_eq!(run(&cfg, &out, extra).status.code(), Some(0));
        csvs.push(fs::read(out.join("heat.csv")).unwrap());
    }
    assert_eq!(csvs[0], csvs[1]);
    assert_eq!(csvs[1], csvs[2]);
}

#[test]
fn prefix_names_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "m.json",
        r#"{"experiment": "mehler_check", "output_prefix": "mehler_run"}"#,
    );
    let out = dir.path().join("out");
    assert_eq!(run(&cfg, &out, &[]).status.code(), Some(0));
    assert!(out.join("mehler_run_mehler.csv").exists());
    assert!(out.join("mehler_run_summary.json").exists());
}

#[test]
fn star_and_parametrix_checks_pass() {
    let dir = tempfile::tempdir().unwrap();
    let star = write_config(
        dir.path(),
        "star.json",
        r#"{"experiment": "star_check", "symbol": {"family": "radial", "coeffs": [0.0, 1.0]},
            "product": {"family": "radial", "coeffs": [-1.0, 0.0, 1.0]}, "basis_size": 120}"#,
    );
    let par = write_config(
        dir.path(),
        "par.json",
        r#"{"experiment": "parametrix_check", "symbol": {"family": "radial", "coeffs": [2.0, 1.0]}}"#,
    );
    for cfg in [star, par] {
        let out = dir.path().join("out");
        let res = run(&cfg, &out, &[]);
        assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stdout));
    }
}

#[test]
fn list_and_validate() {
    let res = weyl_lab(&["list-experiments"]);
    assert_eq!(res.status.code(), Some(0));
    let text = String::from_utf8_lossy(&res.stdout);
    for name in [
        "spectrum",
        "weyl_check",
        "heat_check",
        "tauberian",
        "star_check",
        "parametrix_check",
        "mehler_check",
    ] {
        assert!(text.contains(name), "{name}");
    }
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "h.json", HARMONIC);
    assert_eq!(weyl_lab(&["validate", "--config", &cfg]).status.code(), Some(0));
}

#[test]
fn shipped_configs_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "json") {
            let res = weyl_lab(&["validate", "--config", path.to_str().unwrap()]);
            assert_eq!(res.status.code(), Some(0), "{}", path.display());
            seen += 1;
        }
    }
    assert!(seen >= 7);
}
