//! Drives the built binary: exit codes, report contents, and reproducibility.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ctrlplace")).args(args).output().unwrap()
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.display().to_string()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

const SHORT_SIM: &str = "schema_version = 1\npartitions = 8\n[simulation]\nduration_s = 3.0\npacket_in_rate = 20000.0\n";

#[test]
fn config_errors_exit_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out").display().to_string();
    let unknown = write(dir.path(), "u.toml", "schema_version = 1\n[placement]\nserverz = 3\n");
    let version = write(dir.path(), "v.toml", "schema_version = 9\n");
    let bad_p = write(dir.path(), "p.toml", "schema_version = 1\n[convergence]\npartition_counts = [1, 3]\n");
    for args in [
        vec!["profile", "--config", &unknown, "--out", &out],
        vec!["profile", "--config", &version, "--out", &out],
        vec!["sweep-convergence", "--config", &bad_p, "--out", &out],
        vec!["profile", "--config", "/nonexistent/c.toml", "--out", &out],
        vec!["compare", "--config", &version, "--out", &out],
        vec!["place", "--jobs", "0", "--out", &out],
    ] {
        let o = bin(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn infeasible_placement_exits_with_code_3_and_still_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "schema_version = 1\npartitions = 8\n[placement]\nservers = 2\n");
    let out = dir.path().join("out");
    let o = bin(&["place", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    let report = json(&out.join("placement.json"));
    assert_eq!(report["feasibility"]["cpu_ok"], false);
}

#[test]
fn refused_simulation_exits_with_code_3() {
    let dir = tempfile::tempdir().unwrap();
    // 100 heart-beats per second next to route recomputation overflows one server
    let cfg = write(
        dir.path(),
        "c.toml",
        "schema_version = 1\npartitions = 16\n[profile]\nheartbeat_rate = 100.0\n[simulation]\nlayout = \"topological\"\n",
    );
    let o = bin(&["simulate", "--config", &cfg, "--out", dir.path().join("out").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn unwritable_output_is_an_internal_error() {
    let dir = tempfile::tempdir().unwrap();
    let file = write(dir.path(), "occupied", "");
    let o = bin(&["profile", "--out", &file]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn sweep_reports_embed_the_manifest_and_choice() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = configs_dir().join("reference.toml");
    let o = bin(&["sweep-convergence", "--config", cfg.to_str().unwrap(), "--seed", "5", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = json(&out.join("convergence.json"));
    assert_eq!(report["chosen_partitions"], 8);
    assert_eq!(report["manifest"]["seed"], 5);
    assert_eq!(report["manifest"]["subcommand"], "sweep-convergence");
    assert_eq!(report["manifest"]["config_path"][0], cfg.to_str().unwrap());
    assert_eq!(report["manifest"]["tool_version"], env!("CARGO_PKG_VERSION"));
    let samples = fs::read_to_string(out.join("convergence_samples.csv")).unwrap();
    assert_eq!(samples.lines().count(), 601);
    assert!(samples.starts_with("P,failure_kind,total_time_s,compute_time_s,comm_time_s\n"));
}

#[test]
fn single_partition_count_is_chosen() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.toml",
        "schema_version = 1\n[convergence]\npartition_counts = [4]\nfailures_per_count = 10\ncompute_coeff = 0.0004\nadvert_latency = 0.2\n",
    );
    let out = dir.path().join("out");
    assert!(bin(&["sweep-convergence", "--config", &cfg, "--out", out.to_str().unwrap()]).status.success());
    assert_eq!(json(&out.join("convergence.json"))["chosen_partitions"], 4);
}

#[test]
fn sweep_output_does_not_depend_on_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = out.to_str().unwrap();
    assert!(bin(&["sweep-convergence", "--jobs", "1", "--out", o]).status.success());
    let one = fs::read(out.join("convergence_samples.csv")).unwrap();
    assert!(bin(&["sweep-convergence", "--jobs", "4", "--out", o]).status.success());
    assert_eq!(one, fs::read(out.join("convergence_samples.csv")).unwrap());
}

#[test]
fn small_placement_reports_the_oracle_gap() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = configs_dir().join("small.toml");
    let o = bin(&["place", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = json(&out.join("placement.json"));
    let oracle = &report["oracle"];
    assert_eq!(oracle["gap"], 0.0);
    assert_eq!(report["objective"], oracle["objective"]);
    assert_eq!(report["feasibility"]["isolation_ok"], true);

    let capped = bin(&["place", "--config", cfg.to_str().unwrap(), "--exact-ceiling", "3", "--out", out.to_str().unwrap()]);
    assert!(capped.status.success());
    let report = json(&out.join("placement.json"));
    assert!(report["oracle"].is_null());
    assert!(report["oracle_skipped"].as_str().unwrap().contains("ceiling of 3"));
}

#[test]
fn one_slice_one_server_places_trivially() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "g.toml", "[[slices]]\napp = \"A\"\npartition = 0\ncpu = 0.5\nmem_bytes = 1\n");
    let cfg = write(dir.path(), "c.toml", "schema_version = 1\n[placement]\nservers = 1\ngraph = \"g.toml\"\n");
    let out = dir.path().join("out");
    assert!(bin(&["place", "--config", &cfg, "--out", out.to_str().unwrap()]).status.success());
    let report = json(&out.join("placement.json"));
    assert_eq!(report["objective"], 0.0);
    assert_eq!(report["slices"][0]["server"], 0);
    assert!(report["partitions"].is_null());
}

#[test]
fn comparing_a_config_with_itself_gives_zero_deltas() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", SHORT_SIM);
    let out = dir.path().join("out");
    let o = bin(&["compare", "--config", &cfg, "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = json(&out.join("compare.json"));
    for row in report["deltas"].as_array().unwrap() {
        assert!(row["delta"].is_null() || row["delta"] == 0.0, "{row}");
        assert!(row["winner"] == "tie" || row["winner"] == "", "{row}");
    }
    let csv = fs::read_to_string(out.join("compare.csv")).unwrap();
    assert!(csv.starts_with("metric,a,b,delta,better,winner\n"));
}

#[test]
fn simulate_writes_metrics_and_samples() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", SHORT_SIM);
    let out = dir.path().join("out");
    assert!(bin(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap()]).status.success());
    let report = json(&out.join("metrics.json"));
    assert_eq!(report["layout"], "hybrid");
    assert_eq!(report["partitions"], 8);
    assert_eq!(report["prioritization"], true);
    assert!(report["metrics"]["throughput"].as_f64().unwrap() > 19_000.0);
    let samples = fs::read_to_string(out.join("latency_samples.csv")).unwrap();
    let heartbeat_rows = samples.lines().filter(|l| l.starts_with("heartbeat,")).count() as u64;
    assert_eq!(heartbeat_rows, report["metrics"]["latency_ms"]["heartbeat"]["count"].as_u64().unwrap());
    assert!(!out.join("saturation.csv").exists());
}

#[test]
fn profile_reports_demands() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "schema_version = 1\npartitions = 4\n");
    let out = dir.path().join("out");
    assert!(bin(&["profile", "--config", &cfg, "--out", out.to_str().unwrap()]).status.success());
    let report = json(&out.join("profile.json"));
    // the calibration makes DJ at four partitions a quarter of a server
    let dj = report["demands"]["apps"]["DJ"]["cpu"].as_f64().unwrap();
    assert!((dj - 0.25).abs() < 1e-9, "{dj}");
    assert!((report["total_cpu"].as_f64().unwrap() - 0.95).abs() < 1e-9);
    let csv = fs::read_to_string(out.join("profile.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("app,cpu,mem_bytes"));
    assert_eq!(csv.lines().count(), 6);
}

#[test]
fn shipped_configs_parse() {
    for entry in fs::read_dir(configs_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.file_name().unwrap() == "small_graph.toml" {
            continue;
        }
        ctrlplace_cli::Config::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    }
}
