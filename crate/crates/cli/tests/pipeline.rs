//! End-to-end runs of the `pfs` binary on the shipped config.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use pfs_cli::manifest;
use pfs_cli::table::Table;

fn config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("config/pipeline.toml")
}

fn pfs(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pfs"))
        .args(args)
        .arg("--config")
        .arg(config())
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

const STAGES: [&str; 6] = ["synth", "ingest", "estimate", "calibrate", "dynamics", "report"];

fn run_pipeline(out: &Path) {
    for s in STAGES {
        let o = pfs(out, &[s]);
        assert!(o.status.success(), "{s} failed: {}", String::from_utf8_lossy(&o.stderr));
    }
}

fn shared() -> &'static Path {
    static DIR: OnceLock<tempfile::TempDir> = OnceLock::new();
    DIR.get_or_init(|| {
        let d = tempfile::tempdir().unwrap();
        run_pipeline(d.path());
        d
    })
    .path()
}

#[test]
fn fixture_run_emits_every_table_and_figure() {
    let report = shared().join("report");
    for t in ["table1", "table2", "table3", "table4a", "table4b", "table5", "table6", "table_b1", "table_b2", "table_b3", "table_b4"] {
        assert!(report.join(format!("{t}.csv")).is_file(), "{t}");
    }
    for f in ["figure1", "figure3", "figure4", "figure5", "figure6", "figure_a2"] {
        assert!(report.join(format!("{f}.svg")).is_file(), "{f}");
        assert!(report.join(format!("{f}.csv")).is_file(), "{f}");
    }
}

#[test]
fn manifest_lists_every_file_with_matching_digest() {
    let out = shared();
    let m = manifest::read(out).unwrap().expect("manifest written");
    assert_eq!(manifest::verify(out, &m).unwrap(), Vec::<String>::new());
    for s in STAGES {
        assert!(m.stages.contains_key(s), "{s} metadata");
    }
    assert!(m.files.contains_key("report/figure1.svg"));
    assert!(!m.files.contains_key(manifest::MANIFEST));
    assert_eq!(m.config["synth"]["n_persons"], 600);
    assert!(m.config.get("out_dir").is_none());
}

fn svgs(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "svg"))
        .collect();
    v.sort();
    v
}

#[test]
fn figures_are_well_formed_and_match_their_csv() {
    let report = shared().join("report");
    let files = svgs(&report);
    assert!(files.len() >= 6, "{files:?}");
    for path in files {
        let text = std::fs::read_to_string(&path).unwrap();
        let doc = roxmltree::Document::parse(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        let table = Table::read_csv("fig", &path.with_extension("csv")).unwrap();
        let mut marks = 0;
        for n in doc.descendants().filter(|n| n.has_attribute("data-series")) {
            let (series, x, y) = (n.attribute("data-series").unwrap(), n.attribute("data-x").unwrap(), n.attribute("data-y").unwrap());
            let xi = table.column(&table.columns[0]).unwrap();
            let yi = table.column(series).unwrap_or_else(|| panic!("{}: series {series}", path.display()));
            let row = table.rows.iter().find(|r| r[xi] == x).unwrap_or_else(|| panic!("{}: x {x}", path.display()));
            assert_eq!(row[yi], y, "{} {series} at {x}", path.display());
            marks += 1;
        }
        for n in doc.descendants().filter(|n| n.has_attribute("data-median")) {
            let li = table.column("group").unwrap();
            let row = table.rows.iter().find(|r| r[li] == n.attribute("data-label").unwrap()).unwrap();
            for c in ["whisker_low", "q1", "median", "q3", "whisker_high"] {
                assert_eq!(row[table.column(c).unwrap()], n.attribute(format!("data-{c}").as_str()).unwrap());
            }
            marks += 1;
        }
        assert!(marks > 0, "{} has no data marks", path.display());
    }
}

#[test]
fn box_whiskers_stay_within_group_range() {
    let t = Table::read_csv("figure4", &shared().join("report/figure4.csv")).unwrap();
    assert!(!t.rows.is_empty());
    let get = |r: &Vec<String>, c: &str| r[t.column(c).unwrap()].parse::<f64>().unwrap();
    for r in &t.rows {
        assert!(get(r, "min") <= get(r, "whisker_low"), "{r:?}");
        assert!(get(r, "whisker_low") <= get(r, "q1"));
        assert!(get(r, "q1") <= get(r, "median") && get(r, "median") <= get(r, "q3"));
        assert!(get(r, "q3") <= get(r, "whisker_high"));
        assert!(get(r, "whisker_high") <= get(r, "max"), "{r:?}");
    }
}

#[test]
fn validate_passes_on_the_fixture_run() {
    let dir = tempfile::tempdir().unwrap();
    // validate writes into the output directory, so run it on a copy
    copy_dir(shared(), dir.path());
    let o = pfs(dir.path(), &["validate"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let t = Table::read_csv("validation", &dir.path().join("validate/validation.csv")).unwrap();
    let names: Vec<&str> = t.rows.iter().map(|r| r[0].as_str()).collect();
    for c in ["gamma_quadrature", "gamma_monte_carlo", "qmle_search_oracle", "dynamics_enumeration", "calibration_bound", "truth_recovery", "manifest"] {
        assert!(names.contains(&c), "{c} in {names:?}");
    }
}

#[test]
fn validate_fails_with_exit_4_on_a_tampered_output() {
    let dir = tempfile::tempdir().unwrap();
    copy_dir(shared(), dir.path());
    std::fs::write(dir.path().join("report/table1.csv"), "tampered\n").unwrap();
    let o = pfs(dir.path(), &["validate"]);
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).contains("manifest"));
}

fn copy_dir(from: &Path, to: &Path) {
    for e in std::fs::read_dir(from).unwrap() {
        let p = e.unwrap().path();
        let dest = to.join(p.file_name().unwrap());
        if p.is_dir() {
            std::fs::create_dir_all(&dest).unwrap();
            copy_dir(&p, &dest);
        } else {
            std::fs::copy(&p, &dest).unwrap();
        }
    }
}

#[test]
fn report_before_estimate_names_the_missing_stage() {
    let dir = tempfile::tempdir().unwrap();
    for s in ["synth", "ingest"] {
        assert!(pfs(dir.path(), &[s]).status.success());
    }
    let o = pfs(dir.path(), &["report"]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("pfs estimate"), "{err}");
    assert!(err.contains("pfs.csv"), "{err}");
}

#[test]
fn ingest_without_synth_or_inputs_is_a_dependency_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = pfs(dir.path(), &["ingest"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("pfs synth"));
}

#[test]
fn json_format_writes_json_tables() {
    let dir = tempfile::tempdir().unwrap();
    copy_dir(shared(), dir.path());
    let o = pfs(dir.path(), &["report", "--format", "json"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("report/table5.json")).unwrap()).unwrap();
    assert_eq!(v["name"], "table5");
    assert!(v["rows"].as_array().is_some_and(|r| !r.is_empty()));
    // figure data stays CSV
    assert!(dir.path().join("report/figure1.csv").is_file());
}

#[test]
fn bad_arguments_exit_with_usage_code() {
    let dir = tempfile::tempdir().unwrap();
    let o = pfs(dir.path(), &["calibrate", "--threshold-mode", "p50"]);
    assert_eq!(o.status.code(), Some(1));
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "colour = 3\n").unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_pfs")).args(["synth", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("colour"));
}

#[test]
fn anchored_mode_without_targets_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    copy_dir(shared(), dir.path());
    std::fs::remove_file(dir.path().join("synth/targets.csv")).unwrap();
    let o = pfs(dir.path(), &["calibrate"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("targets"));
    let o = pfs(dir.path(), &["calibrate", "--threshold-mode", "p20"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}
