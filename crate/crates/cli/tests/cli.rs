use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bundled_data() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/synthetic.csv").canonicalize().unwrap()
}

fn wfbt(args: &[&str], config: &str, dir: &Path) -> Output {
    let cfg = dir.join("run.toml");
    std::fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_wfbt"))
        .args(args)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .env_remove("WFBT_CONFIG")
        .env_remove("WFBT_THREADS")
        .output()
        .unwrap()
}

fn data_section() -> String {
    format!("[data]\npath = {:?}\n", bundled_data().to_str().unwrap())
}

fn json(path: PathBuf) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn missing_data_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = wfbt(&["backtest"], "[data]\npath = \"nowhere.csv\"\n", dir.path());
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn invalid_parameter_exits_1_and_names_field() {
    let dir = tempfile::tempdir().unwrap();
    let out = wfbt(&["backtest"], &format!("{}[signal]\nlambda_ema = 1.5\n", data_section()), dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("signal.lambda_ema"));
}

#[test]
fn single_config_spa_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        "{}[spa]\nlambda_ema = [0.94]\nmomentum_window = [50]\nactivation_threshold = [0.52]\n",
        data_section()
    );
    let out = wfbt(&["spa"], &text, dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn env_override_reaches_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, data_section()).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_wfbt"))
        .args(["backtest", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("out"))
        .env("WFBT_SIGNAL__LAMBDA_EMA", "2")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn backtest_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = wfbt(&["backtest"], &data_section(), dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let o = dir.path().join("out");
    for f in ["report.json", "ledger.csv", "equity.csv", "manifest.json"] {
        assert!(o.join(f).is_file(), "{f} missing");
    }
    let report = json(o.join("report.json"));
    assert_eq!(report["schema_version"], 1);
    assert_eq!(report["stitched"], true);
    let bootstrap = &report["bootstrap"];
    assert_eq!(bootstrap["resamples"], 1000);
    assert_eq!(bootstrap["block_length"], 20);
    let ledger_rows = std::fs::read_to_string(o.join("ledger.csv")).unwrap().lines().count() - 1;
    assert_eq!(ledger_rows as u64, report["oos_days"].as_u64().unwrap());
    let manifest = json(o.join("manifest.json"));
    assert_eq!(manifest["data_sha256"], report["data"]["sha256"]);
}

#[test]
fn capacity_curve_starts_at_origin() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{}[capacity]\nmu_u = 1e-4\nsigma_u = 5.7e-4\n", data_section());
    let out = wfbt(&["capacity"], &text, dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let curve = std::fs::read_to_string(dir.path().join("out/capacity_curve.csv")).unwrap();
    let mut lines = curve.lines();
    assert_eq!(lines.next(), Some("participation,growth"));
    assert_eq!(lines.next(), Some("0,0"));
    let cap = json(dir.path().join("out/capacity.json"));
    let l_max = cap["l_max"].as_f64().unwrap();
    assert!((l_max - 2.25e-6).abs() < 5e-9, "{l_max}");
}

#[test]
fn stress_grid_has_all_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = wfbt(&["stress"], &data_section(), dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("out/stress.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 48 + 4);
}

#[test]
fn spa_runs_full_grid_deterministically() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let out = wfbt(&["spa", "--seed", "11"], &data_section(), d.path());
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let ra = json(a.path().join("out/spa.json"));
    let rb = json(b.path().join("out/spa.json"));
    assert_eq!(ra["result"]["num_configs"], 64);
    assert_eq!(ra["result"]["resamples"], 800);
    assert_eq!(ra["result"]["seed"], 11);
    assert_eq!(ra["result"]["p_value"], rb["result"]["p_value"]);
}

#[test]
fn gen_data_matches_bundled_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = wfbt(&["gen-data"], "", dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let fresh = std::fs::read(dir.path().join("out/synthetic.csv")).unwrap();
    assert_eq!(fresh, std::fs::read(bundled_data()).unwrap());
}

#[test]
fn shipped_config_spells_out_defaults() {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..");
    let text = std::fs::read_to_string(root.join("configs/default.toml")).unwrap();
    let mut cfg = wfbt_cli::config::RunConfig::from_toml_str(&text, Vec::new()).unwrap();
    let mut defaults = wfbt_cli::config::RunConfig::default();
    assert_eq!(cfg.data.path, PathBuf::from("../data/synthetic.csv"));
    cfg.data.path = defaults.data.path.clone();
    defaults.output_dir = PathBuf::from("../out");
    assert_eq!(cfg, defaults);
}
