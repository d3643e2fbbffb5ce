use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ksme_core::csvio::{read_loss, read_matrix};
use ksme_core::fixtures;
use ksme_core::Mdp;
use tempfile::TempDir;

fn ksme(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ksme")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn write_mdp(dir: &Path, name: &str, mdp: &Mdp) -> PathBuf {
    let path = dir.join(name);
    mdp.write_json(&path).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn solve_self_loop() {
    let dir = TempDir::new().unwrap();
    let mdp = write_mdp(dir.path(), "loop.json", &fixtures::self_loop(0.0, 1.0, 0.9));
    let out = dir.path().join("out");
    let run = ksme(&["solve", "--mdp", s(&mdp), "--out", s(&out)]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    let d = read_matrix(fs::File::open(out.join("ksme.csv")).unwrap()).unwrap();
    assert!((d[(0, 1)] - 10.0).abs() < 1e-8, "{}", d[(0, 1)]);
    for kind in ["bisim", "pi_bisim", "mico", "reduced_mico", "values"] {
        assert!(out.join(format!("{kind}.csv")).exists(), "{kind}");
    }
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["metrics"]["ksme"]["converged"], true);
    assert!(out.join("resolved_config.json").exists());
}

#[test]
fn solve_with_no_metrics_writes_values_only() {
    let dir = TempDir::new().unwrap();
    let mdp = write_mdp(dir.path(), "loop.json", &fixtures::self_loop(0.0, 1.0, 0.9));
    let out = dir.path().join("out");
    assert_eq!(code(&ksme(&["solve", "--mdp", s(&mdp), "--out", s(&out), "--which", ""])), 0);
    let mut csvs: Vec<String> = fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.ends_with(".csv"))
        .collect();
    csvs.sort();
    assert_eq!(csvs, vec!["values.csv".to_string()]);
    let values = fs::read_to_string(out.join("values.csv")).unwrap();
    assert!(values.starts_with("# ksme-values v1\nstate,v_pi,v_star\n"));
}

#[test]
fn solve_input_errors() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{not json").unwrap();
    let out = dir.path().join("out");
    assert_eq!(code(&ksme(&["solve", "--mdp", s(&bad), "--out", s(&out)])), 2);
    let missing = dir.path().join("missing.json");
    assert_eq!(code(&ksme(&["solve", "--mdp", s(&missing), "--out", s(&out)])), 2);
    let mdp = write_mdp(dir.path(), "loop.json", &fixtures::self_loop(0.0, 1.0, 0.9));
    assert_eq!(code(&ksme(&["solve", "--mdp", s(&mdp), "--out", s(&out), "--which", "ksme,nope"])), 2);
    assert_eq!(code(&ksme(&["solve", "--mdp", s(&mdp), "--out", s(&out), "--policy", "greedy"])), 2);
}

#[test]
fn iteration_cap_is_non_convergence() {
    let dir = TempDir::new().unwrap();
    let mdp = write_mdp(dir.path(), "g.json", &fixtures::garnet(6, 2, 3, 1.0, 0.9, 1));
    let out = dir.path().join("out");
    let run = ksme(&["solve", "--mdp", s(&mdp), "--out", s(&out), "--which", "ksme", "--max-iter", "3"]);
    assert_eq!(code(&run), 3, "{}", String::from_utf8_lossy(&run.stderr));
}

fn small_sweep_config(dir: &Path, sigmas: &str) -> PathBuf {
    let path = dir.join("sweep.json");
    let text = format!(
        r#"{{"sigma_grid": {sigmas}, "n_mdps_per_sigma": 3, "n_states": [4, 8],
            "n_actions": [1, 3], "branching": [2, 3], "gamma": 0.9, "seed": 5}}"#
    );
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn sweep_zero_dispersion_has_no_undercut() {
    let dir = TempDir::new().unwrap();
    let cfg = small_sweep_config(dir.path(), "[0.0]");
    let csv = dir.path().join("sweep.csv");
    assert_eq!(code(&ksme(&["sweep", "--config", s(&cfg), "--out", s(&csv)])), 0);
    let rows = ksme_cli::sweep::read_sweep_csv(&fs::read_to_string(&csv).unwrap()).unwrap();
    assert_eq!(rows.len(), 3);
    for row in rows {
        assert!(row.flag.is_none());
        assert!(row.gaps[0].min_gap >= -1e-8);
    }
    assert!(dir.path().join("sweep.csv.config.json").exists());
}

#[test]
fn sweep_output_ignores_worker_count() {
    let dir = TempDir::new().unwrap();
    let cfg = small_sweep_config(dir.path(), "[0.0, 0.5, 1.0]");
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    assert_eq!(code(&ksme(&["sweep", "--config", s(&cfg), "--out", s(&a), "--workers", "1"])), 0);
    assert_eq!(code(&ksme(&["sweep", "--config", s(&cfg), "--out", s(&b), "--workers", "8"])), 0);
    let text = fs::read_to_string(&a).unwrap();
    assert_eq!(text, fs::read_to_string(&b).unwrap());
    assert!(text.starts_with("# ksme-sweep v1\n"));
    assert_eq!(text.lines().filter(|l| l.starts_with("# summary,")).count(), 4);
}

#[test]
fn sweep_rejects_bad_config() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"sigma_grid": [0.1], "n_mdp": 3}"#).unwrap();
    let csv = dir.path().join("x.csv");
    assert_eq!(code(&ksme(&["sweep", "--config", s(&cfg), "--out", s(&csv)])), 2);
    fs::write(&cfg, r#"{"sigma_grid": [-0.1]}"#).unwrap();
    assert_eq!(code(&ksme(&["sweep", "--config", s(&cfg), "--out", s(&csv)])), 2);
}

#[test]
fn plot_from_sweep() {
    let dir = TempDir::new().unwrap();
    let cfg = small_sweep_config(dir.path(), "[0.0, 0.5, 1.0]");
    let csv = dir.path().join("sweep.csv");
    assert_eq!(code(&ksme(&["sweep", "--config", s(&cfg), "--out", s(&csv)])), 0);
    let (a, b) = (dir.path().join("a.svg"), dir.path().join("b.svg"));
    assert_eq!(code(&ksme(&["plot", "--input", s(&csv), "--out", s(&a)])), 0);
    assert_eq!(code(&ksme(&["plot", "--input", s(&csv), "--out", s(&b)])), 0);
    let svg = fs::read_to_string(&a).unwrap();
    assert_eq!(svg, fs::read_to_string(&b).unwrap());
    assert_eq!(svg.matches("<polyline").count(), 6);
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));

    let empty = dir.path().join("empty.csv");
    fs::write(&empty, format!("# ksme-sweep v1\n{}\n", ksme_cli::sweep::SWEEP_COLUMNS.join(","))).unwrap();
    assert_eq!(code(&ksme(&["plot", "--input", s(&empty), "--out", s(&a)])), 2);
    let future = dir.path().join("future.csv");
    fs::write(&future, fs::read_to_string(&csv).unwrap().replacen("v1", "v2", 1)).unwrap();
    assert_eq!(code(&ksme(&["plot", "--input", s(&future), "--out", s(&a)])), 2);
}

#[test]
fn embed_reports_projection_dimension() {
    let dir = TempDir::new().unwrap();
    let mdp = write_mdp(dir.path(), "g.json", &fixtures::garnet(16, 2, 3, 1.0, 0.9, 0));
    let out = dir.path().join("emb");
    let run = ksme(&["embed", "--mdp", s(&mdp), "--out", s(&out), "--seeds", "5"]);
    assert!(matches!(code(&run), 0 | 1));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("embed_report.json")).unwrap()).unwrap();
    assert_eq!(report["n_classes"], 16);
    assert_eq!(report["m"], 89);
    assert!(out.join("jl").join("seed_4.csv").exists());
    let distortion = fs::read_to_string(out.join("distortion.csv")).unwrap();
    assert_eq!(distortion.lines().count(), 2 + 5);
}

#[test]
fn embed_single_class_and_bad_epsilon() {
    let dir = TempDir::new().unwrap();
    let mdp = write_mdp(dir.path(), "same.json", &fixtures::identical_states(4, 0.9));
    let out = dir.path().join("emb");
    assert_eq!(code(&ksme(&["embed", "--mdp", s(&mdp), "--out", s(&out), "--seeds", "3"])), 0);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("embed_report.json")).unwrap()).unwrap();
    assert_eq!(report["n_classes"], 1);
    assert_eq!(report["pass"], true);
    assert_eq!(code(&ksme(&["embed", "--mdp", s(&mdp), "--out", s(&out), "--epsilon", "1.5"])), 2);
}

#[test]
fn learn_outputs_and_failures() {
    let dir = TempDir::new().unwrap();
    let mdp = write_mdp(dir.path(), "g.json", &fixtures::garnet(5, 2, 3, 1.0, 0.9, 0));
    let cfg = dir.path().join("train.json");
    fs::write(&cfg, r#"{"m": 5, "learning_rate": 0.0, "total_steps": 200}"#).unwrap();
    let out = dir.path().join("learn");
    let run = ksme(&["learn", "--mdp", s(&mdp), "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    for file in ["loss.csv", "embedding.csv", "comparison.csv", "resolved_config.json"] {
        assert!(out.join(file).exists(), "{file}");
    }
    // A zero step size leaves the parameters at their initial values, so the
    // embedding does not depend on the number of steps.
    let losses = read_loss(fs::File::open(out.join("loss.csv")).unwrap()).unwrap();
    assert_eq!(losses.len(), 200);
    let snapshot = fs::read_to_string(out.join("embedding.csv")).unwrap();
    fs::write(&cfg, r#"{"m": 5, "learning_rate": 0.0, "total_steps": 50}"#).unwrap();
    assert_eq!(code(&ksme(&["learn", "--mdp", s(&mdp), "--config", s(&cfg), "--out", s(&out)])), 0);
    assert_eq!(snapshot, fs::read_to_string(out.join("embedding.csv")).unwrap());

    let missing = dir.path().join("nope.json");
    assert_eq!(code(&ksme(&["learn", "--mdp", s(&mdp), "--config", s(&missing), "--out", s(&out)])), 2);
    fs::write(&cfg, r#"{"m": 3, "learning_rate": 1e6, "total_steps": 1000}"#).unwrap();
    let run = ksme(&["learn", "--mdp", s(&mdp), "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(code(&run), 4);
    assert!(String::from_utf8_lossy(&run.stderr).contains("step"));
}

#[test]
fn check_is_deterministic() {
    let a = ksme(&["check", "--scale", "small", "--seed", "3"]);
    let b = ksme(&["check", "--scale", "small", "--seed", "3"]);
    assert_eq!(code(&a), 0, "{}", String::from_utf8_lossy(&a.stdout));
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(code(&ksme(&["check", "--scale", "huge"])), 2);
}
