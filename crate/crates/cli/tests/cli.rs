use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn phca(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_phca")).args(args).output().unwrap()
}

fn run_into(out: &Path, extra: &[&str]) -> Output {
    let manifest = data("run.toml");
    let mut args = vec!["run", "--manifest", manifest.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    phca(&args)
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap()
}

fn json(dir: &Path, name: &str) -> serde_json::Value {
    serde_json::from_str(&read(dir, name)).unwrap()
}

const OUTPUTS: [&str; 6] = ["batch.json", "report.tsv", "report.json", "census.tsv", "summary.json", "stamp.json"];

#[test]
fn toy_run_writes_consistent_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_into(dir.path(), &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in OUTPUTS {
        assert!(dir.path().join(f).is_file(), "{f} missing");
    }
    let summary = json(dir.path(), "summary.json");
    assert_eq!(summary["instances"], 48);
    let c = &summary["counters"];
    let solves = c["qp_solves"].as_u64().unwrap();
    let reuses = c["region_reuses"].as_u64().unwrap();
    assert_eq!(solves + reuses, 48);
    assert_eq!(
        solves,
        c["regions_discovered"].as_u64().unwrap() + c["degenerate"].as_u64().unwrap() + c["failures"].as_u64().unwrap()
    );
    assert_eq!(c["peak_live_regions"], 1);
    let census: u64 = read(dir.path(), "census.tsv")
        .lines()
        .skip(1)
        .map(|l| l.split('\t').nth(1).unwrap().parse::<u64>().unwrap())
        .sum();
    assert_eq!(census + summary["direct_only"].as_u64().unwrap(), 48);
    let stamp = json(dir.path(), "stamp.json");
    assert_eq!(stamp["seed"], 3);
    assert_eq!(stamp["instances"], 48);
    assert!(stamp["scaling"]["cost"].as_f64().unwrap() > 0.0);
}

#[test]
fn same_manifest_gives_identical_files() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert!(run_into(a.path(), &[]).status.success());
    assert!(run_into(b.path(), &["--width", "1"]).status.success());
    for f in OUTPUTS {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn validation_fraction_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_into(dir.path(), &["--validate", "0.05"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = &json(dir.path(), "summary.json")["validation"];
    assert_eq!(v["checked"], 3);
    assert!(v["max_x_deviation"].as_f64().unwrap() <= 1e-6);
    assert_eq!(v["mismatches"].as_array().unwrap().len(), 0);
    assert!(dir.path().join("validation.json").is_file());
}

#[test]
fn flags_override_the_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_into(
        dir.path(),
        &["--penetrations", "0.25:0.25:1.0", "--scalings", "1", "--oversize", "1.0,1.1", "--sampling", "sequential", "--early-stop", "1", "--seed", "9"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stamp = json(dir.path(), "stamp.json");
    assert_eq!(stamp["instances"], 24 * 4 * 2);
    assert_eq!(stamp["sampling"], "sequential");
    assert_eq!(stamp["early_stop"], 1);
    assert_eq!(stamp["grid"]["penetrations"], serde_json::json!([0.25, 0.5, 0.75, 1.0]));
    assert_eq!(json(dir.path(), "summary.json")["counters"]["regions_discovered"], 1);
}

#[test]
fn stats_reaggregates_to_the_same_report() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run_into(dir.path(), &[]).status.success());
    let again = tempfile::tempdir().unwrap();
    let manifest = data("run.toml");
    let batch = dir.path().join("batch.json");
    let out = phca(&[
        "stats",
        "--manifest",
        manifest.to_str().unwrap(),
        "--batch",
        batch.to_str().unwrap(),
        "--out",
        again.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(read(dir.path(), "report.tsv"), read(again.path(), "report.tsv"));
    assert_eq!(read(dir.path(), "report.json"), read(again.path(), "report.json"));

    let hours = phca(&[
        "stats",
        "--manifest",
        manifest.to_str().unwrap(),
        "--batch",
        batch.to_str().unwrap(),
        "--out",
        again.path().to_str().unwrap(),
        "--hours",
        "10:15",
    ]);
    assert!(hours.status.success());
    let rep = json(again.path(), "report.json");
    assert!(rep["groups"].as_array().unwrap().iter().all(|g| g["instances"] == 6));
}

#[test]
fn missing_scenario_file_is_a_schema_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_into(dir.path(), &["--load", "/nonexistent/load.csv"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("SchemaError:"), "{err}");
}

#[test]
fn bad_grid_flag_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_into(dir.path(), &["--penetrations", "0.5:0:1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("ConfigError:"));
    let out = run_into(dir.path(), &["--penetrations", "1.5"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("SchemaError:"));
}

#[test]
fn validate_prints_error_orders() {
    let feeder = data("toy.toml");
    let load = data("load.csv");
    let solar = data("solar.csv");
    let out = phca(&[
        "validate",
        "--feeder",
        feeder.to_str().unwrap(),
        "--load",
        load.to_str().unwrap(),
        "--solar",
        solar.to_str().unwrap(),
        "--hour",
        "12",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split('\t').collect()).collect();
    assert_eq!(rows.len(), 3);
    let vo: f64 = rows[0][3].parse().unwrap();
    let lo: f64 = rows[0][4].parse().unwrap();
    assert!((1.8..=2.2).contains(&vo), "{vo}");
    assert!((2.7..=3.3).contains(&lo), "{lo}");
    assert_eq!(rows[2][3], "-");
}

#[test]
fn dump_problem_lists_labeled_rows() {
    let feeder = data("toy.toml");
    let out = phca(&["dump-problem", "--feeder", feeder.to_str().unwrap()]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("voltage-hi"));
    assert!(text.contains("remote-reg"));
    let bad = phca(&["dump-problem", "--feeder", "/nonexistent.toml"]);
    assert_eq!(bad.status.code(), Some(2));
}
