use pfs_cli::config::{Format, Overrides, PipelineConfig};
use pfs_cli::manifest;
use pfs_cli::table::Table;
use pfs_core::threshold::ThresholdMode;

#[test]
fn empty_config_takes_defaults() {
    let c = PipelineConfig::from_toml("").unwrap();
    assert_eq!(c, PipelineConfig::default());
    assert_eq!(c.threshold_mode, ThresholdMode::Anchored);
    assert_eq!((c.window.start, c.window.end), (1977, 2019));
    assert_eq!(c.dynamics.periods.len(), 4);
    c.validate().unwrap();
}

#[test]
fn unknown_keys_are_rejected() {
    assert!(PipelineConfig::from_toml("[window]\nfirst = 1980\n").is_err());
    assert!(PipelineConfig::from_toml("[synth]\npersons = 10\n").is_err());
}

#[test]
fn overrides_win_and_seed_reaches_the_generator() {
    let mut c = PipelineConfig::from_toml("seed = 3\nformat = \"csv\"\n").unwrap();
    c.apply(&Overrides::default());
    assert_eq!(c.synth.seed, 3);
    c.apply(&Overrides {
        seed: Some(9),
        threshold_mode: Some(ThresholdMode::P20),
        format: Some(Format::Json),
        out: Some("elsewhere".into()),
    });
    assert_eq!(c.synth.seed, 9);
    assert_eq!(c.threshold_mode, ThresholdMode::P20);
    assert_eq!(c.format, Format::Json);
    assert_eq!(c.out_dir(), std::path::PathBuf::from("elsewhere"));
}

#[test]
fn invalid_windows_and_periods_fail_validation() {
    for text in [
        "[window]\nstart = 2000\nend = 1990\n",
        "[window]\nstart = 1999\n",
        "[dynamics]\nperiods = [[1990, 1981]]\n",
        "[dynamics]\nperiods = [[1981, 1990], [1990, 2000]]\n",
    ] {
        let c = PipelineConfig::from_toml(text).unwrap();
        assert!(c.validate().is_err(), "{text}");
    }
}

#[test]
fn relative_inputs_resolve_against_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.toml");
    std::fs::write(&path, "[inputs]\npanel = \"data/panel.csv\"\ncpi = \"/abs/cpi.csv\"\n").unwrap();
    let c = PipelineConfig::load(&path).unwrap();
    assert_eq!(c.inputs.panel.unwrap(), dir.path().join("data/panel.csv"));
    assert_eq!(c.inputs.cpi.unwrap(), std::path::PathBuf::from("/abs/cpi.csv"));
}

#[test]
fn shipped_config_parses_and_validates() {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("config/pipeline.toml");
    let c = PipelineConfig::load(&path).unwrap();
    c.validate().unwrap();
    assert_eq!(c.seed, Some(7));
}

#[test]
fn json_tables_type_their_cells() {
    let mut t = Table::new("t", &["a", "b", "c"]);
    t.push(vec!["3".into(), "0.250000".into(), "".into()]);
    t.push(vec!["x".into(), "-1e-3".into(), "(1)".into()]);
    let v = t.json_value();
    assert_eq!(v["rows"][0], serde_json::json!([3, 0.25, null]));
    assert_eq!(v["rows"][1], serde_json::json!(["x", -0.001, "(1)"]));
}

#[test]
fn manifest_detects_changed_added_and_removed_files() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    std::fs::create_dir_all(root.join("s")).unwrap();
    std::fs::write(root.join("s/a.csv"), "x\n1\n2\n").unwrap();
    std::fs::write(root.join("b.json"), "{}").unwrap();
    let m = manifest::update(root, serde_json::json!({}), "s", serde_json::json!({ "rows": 2 })).unwrap();
    assert_eq!(m.files["s/a.csv"].rows, Some(2));
    assert_eq!(m.files["b.json"].rows, None);
    assert!(manifest::verify(root, &m).unwrap().is_empty());

    std::fs::write(root.join("s/a.csv"), "x\n1\n").unwrap();
    std::fs::write(root.join("c.txt"), "new").unwrap();
    std::fs::remove_file(root.join("b.json")).unwrap();
    let mut problems = manifest::verify(root, &m).unwrap();
    problems.sort();
    assert_eq!(problems, ["b.json: listed but missing", "c.txt: not in manifest", "s/a.csv: digest mismatch"]);
}

#[test]
fn digest_is_standard_sha256() {
    assert_eq!(manifest::sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}
