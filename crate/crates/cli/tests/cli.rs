use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn timo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_timo"))
        .args(args)
        .env("TIMO_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn timo_in(dir: &Path, args: &[&str]) -> Output {
    let mut all: Vec<&str> = args.to_vec();
    all.extend(["--out-dir", dir.to_str().unwrap()]);
    timo(&all)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_json(path: PathBuf) -> Value {
    serde_json::from_str(&fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))).unwrap()
}

fn preset_json(name: &str) -> Value {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join(format!("../core/presets/{name}.json"));
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn write_config(dir: &Path, name: &str, v: &Value) -> String {
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string_pretty(v).unwrap()).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn simulate_mu_zero_preset() {
    let tmp = tempfile::tempdir().unwrap();
    let o = timo_in(tmp.path(), &["simulate", "--preset", "mu_zero_linear"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let s = read_json(tmp.path().join("mu_zero_linear_summary.json"));
    assert!(s["mu"].as_f64().unwrap().abs() < 1e-12);
    assert_eq!(s["monotonicity_violations"], 0);
    assert!(s["final_energy"].as_f64().unwrap() < s["initial_energy"].as_f64().unwrap());
    assert_eq!(s["config"]["grid"]["N"], 128);
    let csv = fs::read_to_string(tmp.path().join("mu_zero_linear.csv")).unwrap();
    assert!(csv.starts_with("t,E,E2,diss_measured,diss_predicted,K,K1,K2,K3,K4\n"));
}

#[test]
fn zero_horizon_gives_single_row() {
    let tmp = tempfile::tempdir().unwrap();
    let mut v = preset_json("mu_zero_linear");
    v["time"]["T"] = 0.0.into();
    v["experiment"] = "simulate".into();
    let cfg = write_config(tmp.path(), "c.json", &v);
    let o = timo_in(tmp.path(), &["simulate", "--config", &cfg]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(tmp.path().join("mu_zero_linear.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
}

#[test]
fn negative_density_is_validation_error() {
    let tmp = tempfile::tempdir().unwrap();
    let mut v = preset_json("mu_zero_linear");
    v["params"]["rho1"] = (-1.0).into();
    let cfg = write_config(tmp.path(), "c.json", &v);
    let o = timo_in(tmp.path(), &["simulate", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("params.rho1"), "{}", stderr(&o));
}

#[test]
fn unknown_key_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let mut v = preset_json("mu_zero_linear");
    v["time"]["dtt"] = 0.1.into();
    let cfg = write_config(tmp.path(), "c.json", &v);
    let o = timo_in(tmp.path(), &["simulate", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("dtt"), "{}", stderr(&o));
}

#[test]
fn missing_config_is_io_error() {
    let o = timo(&["simulate", "--config", "/nonexistent/c.json"]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("/nonexistent/c.json"));
}

#[test]
fn unwritable_output_is_io_error() {
    let tmp = tempfile::tempdir().unwrap();
    let blocker = tmp.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let out = blocker.join("sub");
    let o = timo_in(&out, &["simulate", "--preset", "mu_zero_linear"]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains(out.to_str().unwrap()), "{}", stderr(&o));
}

#[test]
fn config_and_preset_conflict() {
    let o = timo(&["simulate", "--preset", "mu_zero_linear", "--config", "x.json"]);
    assert_eq!(o.status.code(), Some(2));
    let o = timo(&["simulate"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unknown_preset() {
    let o = timo(&["simulate", "--preset", "nope"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("mu_zero_linear"));
}

#[test]
fn outputs_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        let o = timo_in(d.path(), &["simulate", "--preset", "mu_zero_power_p1", "--seed", "11"]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for f in ["mu_zero_power_p1.csv", "mu_zero_power_p1_summary.json", "mu_zero_power_p1_fit.json"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn embedded_config_reproduces_outputs() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let o = timo_in(a.path(), &["simulate", "--preset", "mu_nonzero_ones"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let summary = read_json(a.path().join("mu_nonzero_ones_summary.json"));
    let cfg = write_config(b.path(), "resolved.json", &summary["config"]);
    let o = timo_in(b.path(), &["simulate", "--config", &cfg]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["mu_nonzero_ones.csv", "mu_nonzero_ones_summary.json", "mu_nonzero_ones_fit.json"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn random_initial_data_seeded() {
    let tmp = tempfile::tempdir().unwrap();
    let mut v = preset_json("mu_zero_linear");
    v["ic"] = serde_json::json!({"kind": "random", "modes": 6, "amplitude": 0.5});
    v["time"]["T"] = 1.0.into();
    v["experiment"] = "simulate".into();
    let cfg = write_config(tmp.path(), "c.json", &v);
    let run = |seed: &str, sub: &str| {
        let d = tmp.path().join(sub);
        let o = timo_in(&d, &["simulate", "--config", &cfg, "--seed", seed]);
        assert!(o.status.success(), "{}", stderr(&o));
        fs::read(d.join("mu_zero_linear.csv")).unwrap()
    };
    assert_eq!(run("3", "a"), run("3", "b"));
    assert_ne!(run("3", "c"), run("4", "d"));
}

#[test]
fn fit_mu_zero_p1() {
    let tmp = tempfile::tempdir().unwrap();
    let o = timo_in(tmp.path(), &["simulate", "--preset", "mu_zero_power_p1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let series = tmp.path().join("mu_zero_power_p1.csv");
    let out = tmp.path().join("refit");
    let o = timo_in(&out, &["fit", "--preset", "mu_zero_power_p1", "--series", series.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let f = read_json(out.join("mu_zero_power_p1_fit.json"));
    assert_eq!(f["family"], "mu_zero");
    assert!(f["report"]["domination_ratio"].as_f64().unwrap() <= 1.0);
    assert!(f["report"]["tail_slope"].as_f64().unwrap() < 0.0);
    let env = f["envelope"].as_array().unwrap();
    assert!(!env.is_empty());
    // the refit matches the fit written during the simulation
    let first = read_json(tmp.path().join("mu_zero_power_p1_fit.json"));
    assert_eq!(first["report"], f["report"]);
}

#[test]
fn fit_selects_nonzero_family() {
    let tmp = tempfile::tempdir().unwrap();
    let o = timo_in(tmp.path(), &["simulate", "--preset", "mu_nonzero_ones"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let f = read_json(tmp.path().join("mu_nonzero_ones_fit.json"));
    assert_eq!(f["family"], "mu_nonzero");
    assert!((f["mu"].as_f64().unwrap() + 1.0).abs() < 1e-12);
}

#[test]
fn fit_short_series_is_insufficient() {
    let tmp = tempfile::tempdir().unwrap();
    let o = timo_in(tmp.path(), &["simulate", "--preset", "mu_zero_power_p1"]);
    assert!(o.status.success());
    let csv = fs::read_to_string(tmp.path().join("mu_zero_power_p1.csv")).unwrap();
    let short: String = csv.lines().take(6).map(|l| format!("{l}\n")).collect();
    let path = tmp.path().join("short.csv");
    fs::write(&path, short).unwrap();
    let o = timo_in(tmp.path(), &["fit", "--preset", "mu_zero_power_p1", "--series", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("insufficient data"), "{}", stderr(&o));
}

#[test]
fn malformed_csv_reports_line() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.csv");
    let row = "0.0,1.0,1.0,NaN,-0.1,1.0,0.0,0.0,0.0,0.0";
    fs::write(&path, format!("t,E,E2,diss_measured,diss_predicted,K,K1,K2,K3,K4\n{row}\n0.1,oops,1,1,1,1,1,1,1,1\n")).unwrap();
    let o = timo_in(tmp.path(), &["fit", "--preset", "mu_zero_power_p1", "--series", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bad.csv:3:"), "{}", stderr(&o));

    fs::write(&path, format!("t,E,E2,diss_measured,diss_predicted,K,K1,K2,K3,K4\n{row}\n{row}\n0.1,1\n")).unwrap();
    let o = timo_in(tmp.path(), &["fit", "--preset", "mu_zero_power_p1", "--series", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bad.csv:4:"), "{}", stderr(&o));

    fs::write(&path, "time,E\n0,1\n").unwrap();
    let o = timo_in(tmp.path(), &["fit", "--preset", "mu_zero_power_p1", "--series", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bad.csv:1:"), "{}", stderr(&o));
}

#[test]
fn sweep_over_p_orders_tail_slopes() {
    let tmp = tempfile::tempdir().unwrap();
    let o = timo_in(tmp.path(), &["sweep", "--preset", "sweep_p"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let agg = read_json(tmp.path().join("sweep_p_sweep.json"));
    let points = agg["points"].as_object().unwrap();
    assert_eq!(points.len(), 3);
    let slopes: Vec<f64> = ["p=1", "p=3", "p=5"]
        .iter()
        .map(|k| {
            assert!(points[*k]["mu"].as_f64().unwrap().abs() < 1e-12);
            points[*k]["fit"]["tail_slope"].as_f64().unwrap()
        })
        .collect();
    assert!(slopes[0] < slopes[1] && slopes[1] < slopes[2], "{slopes:?}");
    for p in ["p_1", "p_3", "p_5"] {
        assert!(tmp.path().join(format!("sweep_p_{p}.csv")).exists());
    }
}

#[test]
fn sweep_empty_axis_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let mut v = preset_json("sweep_p");
    v["sweep"]["axes"]["p"] = serde_json::json!([]);
    let cfg = write_config(tmp.path(), "c.json", &v);
    let o = timo_in(tmp.path(), &["sweep", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("sweep.axes.p"), "{}", stderr(&o));
}

#[test]
fn sweep_records_failures_and_continues() {
    let tmp = tempfile::tempdir().unwrap();
    let mut v = preset_json("sweep_p");
    v["time"]["T"] = 10.0.into();
    v["fit"] = serde_json::json!({"t0": 1.0});
    v["sweep"]["axes"] = serde_json::json!({"rho1": [1.0, -1.0]});
    let cfg = write_config(tmp.path(), "c.json", &v);
    let o = timo_in(tmp.path(), &["sweep", "--config", &cfg]);
    assert!(o.status.success(), "{}", stderr(&o));
    let agg = read_json(tmp.path().join("sweep_p_sweep.json"));
    let bad = &agg["points"]["rho1=-1"];
    assert!(bad["error"].as_str().unwrap().contains("params.rho1"));
    assert!(agg["points"]["rho1=1"]["fit"].is_object());
}

#[test]
fn sweep_over_grid_converges_dissipation_residual() {
    let tmp = tempfile::tempdir().unwrap();
    let mut v = preset_json("mu_zero_linear");
    v["experiment"] = "sweep".into();
    v["grid"]["N"] = 32.into();
    v["time"]["dt"] = 0.008.into();
    v["time"]["T"] = 10.0.into();
    v["time"]["stride"] = 1.into();
    v["fit"] = serde_json::json!({"t0": 1.0});
    v["sweep"] = serde_json::json!({"axes": {"N": [32.0, 64.0, 128.0]}, "workers": 2});
    let cfg = write_config(tmp.path(), "c.json", &v);
    let o = timo_in(tmp.path(), &["sweep", "--config", &cfg]);
    assert!(o.status.success(), "{}", stderr(&o));
    let agg = read_json(tmp.path().join("mu_zero_linear_sweep.json"));
    let r: Vec<f64> = ["N=32", "N=64", "N=128"]
        .iter()
        .map(|k| agg["points"][*k]["max_dissipation_residual"].as_f64().unwrap())
        .collect();
    assert!(r[0] / r[1] > 3.5 && r[1] / r[2] > 3.5, "{r:?}");
}

#[test]
fn resolvent_check_preset() {
    let tmp = tempfile::tempdir().unwrap();
    let o = timo_in(tmp.path(), &["resolvent-check", "--preset", "resolvent_default"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = read_json(tmp.path().join("resolvent_default_resolvent.json"));
    let rep = &r["report"];
    assert!(rep["convergence_order"].as_f64().unwrap() >= 1.9);
    assert!(rep["residual"].as_f64().unwrap() <= 1e-8);
    assert!(rep["coercivity"].as_f64().unwrap() > 0.0);
    assert_eq!(rep["grids"].as_array().unwrap().len(), 3);
}

#[test]
fn numeric_blowup_exit_code() {
    let tmp = tempfile::tempdir().unwrap();
    let mut v = preset_json("mu_zero_linear");
    v["experiment"] = "simulate".into();
    v["grid"]["N"] = 16.into();
    v["time"] = serde_json::json!({"kind": "imex_midpoint", "dt": 0.05, "T": 5.0});
    v["damping"]["alpha"]["a"] = 1e12.into();
    let cfg = write_config(tmp.path(), "c.json", &v);
    let o = timo_in(tmp.path(), &["simulate", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let s = read_json(tmp.path().join("mu_zero_linear_summary.json"));
    assert!(s["aborted_at"].as_f64().is_some());
}
