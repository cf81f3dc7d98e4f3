use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ctexp::aircraft;
use ctexp::design::DesignResult;
use ctexp::filtered::FilteredDataset;
use ctexp::lti::{simulate_sampled, SampledDataset};
use ctexp::sysid::IdentificationResult;
use serde_json::{json, Value};
use tempfile::TempDir;

fn ctexp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ctexp"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn write_config(dir: &Path, name: &str, cfg: &Value) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    path
}

fn run_in(dir: &TempDir, cfg: &Path, args: &[&str]) -> Output {
    let mut full = args.to_vec();
    full.extend(["--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    ctexp(&full)
}

fn read<T: serde::de::DeserializeOwned>(path: PathBuf) -> T {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn aircraft_cfg(family: &str, rho: f64) -> Value {
    json!({ "system": { "preset": "aircraft" }, "filter": { "family": family, "rho": rho } })
}

fn integrator_cfg() -> Value {
    json!({ "system": { "a": [[0.0]], "b": [[1.0]], "x0": [0.0] }, "period": 1.0 })
}

fn rotation_cfg() -> Value {
    let w = 2.0 * std::f64::consts::PI / 0.1;
    json!({ "system": { "a": [[0.0, w], [-w, 0.0]], "b": [[0.0], [1.0]], "x0": [1.0, 0.0] }, "period": 0.1 })
}

fn max_diff(a: &ctexp::Matrix, b: &ctexp::Matrix) -> f64 {
    (a - b).amax()
}

#[test]
fn simulate_reproduces_aircraft_samples() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "cfg.json", &aircraft_cfg("lowpass", 1.0));
    let o = run_in(&dir, &cfg, &["simulate"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let sd: SampledDataset = read(dir.path().join("sampled.json"));
    let chi = sd.chi_with_terminal().unwrap();
    assert!(max_diff(&chi, &aircraft::reference_chi()) <= 5e-4);

    let mut r = csv::Reader::from_path(dir.path().join("trajectory.csv")).unwrap();
    let header: Vec<String> = r.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header, ["time", "x1", "x2", "x3", "x4"]);
    let rows: Vec<Vec<f64>> = r
        .records()
        .map(|rec| rec.unwrap().iter().map(|s| s.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 60);
    assert_eq!(rows[0][1..], [2.0, -1.0, 1.0, 0.5]);
    assert_eq!(rows[10][0], 0.1);
    // Dense evaluation and the discrete recursion take different paths.
    for (i, v) in rows[10][1..].iter().enumerate() {
        assert!((v - sd.chi[(i, 1)]).abs() <= 1e-12);
    }
}

#[test]
fn simulate_zero_experiment_writes_zeros() {
    let dir = TempDir::new().unwrap();
    let mut cfg = json!({ "system": { "a": [[-1.0, 2.0], [0.0, -3.0]], "b": [[1.0], [1.0]], "x0": [0.0, 0.0] }, "period": 0.5 });
    cfg["input"] = json!([[0.0, 0.0, 0.0]]);
    let cfg = write_config(dir.path(), "cfg.json", &cfg);
    assert_eq!(code(&run_in(&dir, &cfg, &["simulate", "--points", "4"])), 0);
    let sd: SampledDataset = read(dir.path().join("sampled.json"));
    assert!(sd.chi.iter().all(|&v| v == 0.0));
    let text = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    for line in text.lines().skip(1) {
        assert!(line.split(',').skip(1).all(|v| v.parse::<f64>().unwrap() == 0.0));
    }
}

#[test]
fn invalid_configs_exit_with_two() {
    let dir = TempDir::new().unwrap();
    let mut cfg = integrator_cfg();
    cfg["period"] = json!(0.0);
    cfg["input"] = json!([[1.0]]);
    let cfg = write_config(dir.path(), "bad.json", &cfg);
    assert_eq!(code(&run_in(&dir, &cfg, &["simulate"])), 2);

    let garbage = dir.path().join("garbage.json");
    std::fs::write(&garbage, "{ not json").unwrap();
    assert_eq!(code(&run_in(&dir, &garbage, &["design"])), 2);
    assert_eq!(code(&ctexp(&["no-such-command"])), 2);
    assert_eq!(code(&ctexp(&["design"])), 2);
}

#[test]
fn design_aircraft_and_integrator() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "cfg.json", &aircraft_cfg("poly_test", 1.0));
    assert_eq!(code(&run_in(&dir, &cfg, &["design"])), 0);
    let res: DesignResult = read(dir.path().join("design.json"));
    assert_eq!(res.dataset.len(), 6);
    assert_eq!(res.rank.rank, 6);
    assert_eq!(res.ranks(), vec![1, 2, 3, 4, 5, 6]);

    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "cfg.json", &integrator_cfg());
    assert_eq!(code(&run_in(&dir, &cfg, &["design"])), 0);
    let res: DesignResult = read(dir.path().join("design.json"));
    assert_eq!(res.dataset.len(), 2);
    assert_eq!(res.rank.rank, 2);
}

#[test]
fn pathological_design_reports_failure() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "cfg.json", &rotation_cfg());
    let o = run_in(&dir, &cfg, &["design"]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("design failed"));
    let diag: Value = read(dir.path().join("design_failure.json"));
    assert_eq!(diag["ranks"], json!([1, 2]));
    assert!(!dir.path().join("design.json").exists());
}

#[test]
fn filter_reproduces_aircraft_tables() {
    for family in [ctexp::filters::FilterFamily::PolyTest, ctexp::filters::FilterFamily::Lowpass] {
        let reference = aircraft::reference_filtered(family).unwrap();
        let dir = TempDir::new().unwrap();
        let cfg = write_config(dir.path(), "cfg.json", &aircraft_cfg(family.name(), reference.rho));
        let o = run_in(&dir, &cfg, &["filter"]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let fd: FilteredDataset = read(dir.path().join("filtered.json"));
        assert!(max_diff(&fd.x_f, &reference.x_f) <= 5e-4);
        assert!(max_diff(&fd.u_f, &reference.u_f) <= 5e-4);
        assert!(max_diff(&fd.x_df, &reference.x_df) <= 5e-4);
        assert!(fd.quadrature_report.is_some());
    }
}

#[test]
fn filter_zero_trajectory_and_too_many_filters() {
    let dir = TempDir::new().unwrap();
    let mut cfg = integrator_cfg();
    cfg["input"] = json!([[0.0, 0.0, 0.0]]);
    cfg["filter"] = json!({ "family": "bump_test", "rho": 1.0 });
    let path = write_config(dir.path(), "cfg.json", &cfg);
    assert_eq!(code(&run_in(&dir, &path, &["filter"])), 0);
    let fd: FilteredDataset = read(dir.path().join("filtered.json"));
    assert!(fd.x_f.iter().chain(fd.u_f.iter()).chain(fd.x_df.iter()).all(|&v| v == 0.0));

    cfg["filter"]["count"] = json!(4);
    let path = write_config(dir.path(), "cfg.json", &cfg);
    assert_eq!(code(&run_in(&dir, &path, &["filter"])), 2);
}

#[test]
fn filter_uses_a_design_file() {
    let dir = TempDir::new().unwrap();
    let mut cfg = integrator_cfg();
    cfg["filter"] = json!({ "family": "laguerre", "rho": 1.0 });
    let cfg = write_config(dir.path(), "cfg.json", &cfg);
    assert_eq!(code(&run_in(&dir, &cfg, &["design"])), 0);
    let design = dir.path().join("design.json");
    assert_eq!(code(&run_in(&dir, &cfg, &["filter", "--dataset", design.to_str().unwrap()])), 0);
    let fd: FilteredDataset = read(dir.path().join("filtered.json"));
    assert_eq!(fd.count, 2);
}

#[test]
fn identify_pipelines() {
    for family in [ctexp::filters::FilterFamily::PolyTest, ctexp::filters::FilterFamily::Lowpass] {
        let rho = aircraft::reference_filtered(family).unwrap().rho;
        let dir = TempDir::new().unwrap();
        let cfg = write_config(dir.path(), "cfg.json", &aircraft_cfg(family.name(), rho));
        assert_eq!(code(&run_in(&dir, &cfg, &["filter"])), 0);
        let o = run_in(&dir, &cfg, &["identify", "--truth"]);
        assert_eq!(code(&o), 0);
        let stdout = String::from_utf8_lossy(&o.stdout);
        assert!(stdout.contains("rank 6 (informative)"), "{stdout}");
        let res: IdentificationResult = read(dir.path().join("identification.json"));
        assert!(res.frobenius_error.unwrap() <= 1e-5);
        assert!(res.informative);
    }
}

#[test]
fn identify_flags_rank_deficient_data() {
    let dir = TempDir::new().unwrap();
    let fd = json!({
        "x_f": [[1.0, 1.0, 1.0]], "u_f": [[2.0, 2.0, 2.0]], "x_df": [[0.5, 0.5, 0.5]],
        "family": "poly_test", "rho": 1.0, "T": 0.1, "M": 3
    });
    let path = write_config(dir.path(), "filtered.json", &fd);
    let o = ctexp(&["identify", "--filtered", path.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("NOT informative"));
    let res: Value = read(dir.path().join("identification.json"));
    assert_eq!(res["informative"], json!(false));
    assert_eq!(res["rank"]["rank"], json!(1));
    assert!(res.get("frobenius_error").is_none());
}

#[test]
fn verify_passes_and_detects_corruption() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "cfg.json", &aircraft_cfg("laguerre", 1.0));
    let o = run_in(&dir, &cfg, &["verify"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let table = std::fs::read_to_string(dir.path().join("verify.csv")).unwrap();
    assert_eq!(table.lines().count(), 5);
    assert!(table.lines().skip(1).all(|l| l.contains(",pass,")), "{table}");

    assert_eq!(code(&run_in(&dir, &cfg, &["filter"])), 0);
    let path = dir.path().join("filtered.json");
    let mut fd: FilteredDataset = read(path.clone());
    fd.x_df[(2, 3)] += 1.0;
    std::fs::write(&path, serde_json::to_string(&fd).unwrap()).unwrap();
    let o = run_in(&dir, &cfg, &["verify", "--filtered", path.to_str().unwrap()]);
    assert_eq!(code(&o), 4);
    assert!(String::from_utf8_lossy(&o.stderr).contains("algebraic_relation"));
}

#[test]
fn verify_marks_nondecomposable_checks() {
    let dir = TempDir::new().unwrap();
    let mut cfg = aircraft_cfg("lowpass", 1.0);
    cfg["filter"]["count"] = json!(8);
    let cfg = write_config(dir.path(), "cfg.json", &cfg);
    let o = run_in(&dir, &cfg, &["verify"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let table = std::fs::read_to_string(dir.path().join("verify.csv")).unwrap();
    assert!(table.contains("rank_ladder,not applicable"));
    assert!(table.contains("factorization,not applicable"));
}

#[test]
fn demo_aircraft_passes() {
    let dir = TempDir::new().unwrap();
    let o = ctexp(&["demo-aircraft", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let mut r = csv::Reader::from_path(dir.path().join("demo_aircraft.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = r.records().map(|x| x.unwrap()).collect();
    assert!(rows.iter().all(|rec| &rec[6] == "true"));
    assert!(rows.iter().any(|rec| &rec[0] == "poly_test_frobenius_error"));
}

#[test]
fn plot_data_writes_filter_samples() {
    let dir = TempDir::new().unwrap();
    let o = ctexp(&[
        "filters", "plot-data", "--family", "lowpass", "--count", "2", "--points", "4", "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let text = std::fs::read_to_string(dir.path().join("filters_lowpass.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "t,g1,g2");
    assert_eq!(lines.len(), 1 + 8);
    let first: Vec<f64> = lines[1].split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(first, vec![0.0, (-1.0f64).exp(), (-2.0f64).exp()]);
    assert_eq!(code(&ctexp(&["filters", "plot-data", "--family", "sinc"])), 2);
}

#[test]
fn artifacts_round_trip_exactly() {
    let dir = TempDir::new().unwrap();
    let o = ctexp(&["demo-aircraft", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let sd: SampledDataset = read(dir.path().join("sampled.json"));
    let direct = simulate_sampled(&aircraft::system(), &aircraft::input().unwrap()).unwrap();
    assert_eq!(sd, direct);
    for name in [
        "sampled.json",
        "design.json",
        "filtered_lowpass.json",
        "filtered_poly_test.json",
        "identification_lowpass.json",
    ] {
        let text = std::fs::read_to_string(dir.path().join(name)).unwrap();
        let again = match name {
            "sampled.json" => serde_json::to_string_pretty(&serde_json::from_str::<SampledDataset>(&text).unwrap()),
            "design.json" => serde_json::to_string_pretty(&serde_json::from_str::<DesignResult>(&text).unwrap()),
            n if n.starts_with("filtered") => {
                serde_json::to_string_pretty(&serde_json::from_str::<FilteredDataset>(&text).unwrap())
            }
            _ => serde_json::to_string_pretty(&serde_json::from_str::<IdentificationResult>(&text).unwrap()),
        }
        .unwrap();
        assert_eq!(text.trim_end(), again, "{name}");
    }
}

#[test]
fn runs_are_deterministic() {
    let cfg_dir = TempDir::new().unwrap();
    let cfg = write_config(cfg_dir.path(), "cfg.json", &aircraft_cfg("bump_test", 2.0));
    let mut outputs = Vec::new();
    for _ in 0..2 {
        let dir = TempDir::new().unwrap();
        for args in [&["design", "--seed", "11"][..], &["filter"][..], &["verify", "--seed", "3"][..]] {
            let o = run_in(&dir, &cfg, args);
            assert_eq!(code(&o), 0, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        }
        let files: Vec<Vec<u8>> = ["design.json", "filtered.json", "verify.csv"]
            .iter()
            .map(|f| std::fs::read(dir.path().join(f)).unwrap())
            .collect();
        outputs.push(files);
    }
    assert_eq!(outputs[0], outputs[1]);
    let design: DesignResult = read_str(&outputs[0][0]);
    assert_eq!(design.rank.rank, 6);
}

fn read_str<T: serde::de::DeserializeOwned>(bytes: &[u8]) -> T {
    serde_json::from_slice(bytes).unwrap()
}
