use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use ttns_sketch::experiment::{run_experiment, ExperimentConfig, CONFIG_VERSION, MANIFEST_VERSION};
use ttns_sketch::{preset_model, DiscreteSamples, Error, PresetParams, RankSpec, RootedTree, Ttns};

fn ttns(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ttns")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = ttns(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn samples_round_trip_text_and_binary() {
    let dir = tempfile::tempdir().unwrap();
    let s = preset_model("nonlocal-clock-d8", &PresetParams::default()).unwrap().mrf.sample(300, 1).unwrap();
    let text = dir.path().join("s.txt");
    let bin = dir.path().join("s.bin");
    s.save_text(&text).unwrap();
    s.save_binary(&bin).unwrap();
    assert_eq!(DiscreteSamples::load_text(&text).unwrap(), s);
    assert_eq!(DiscreteSamples::load_binary(&bin).unwrap(), s);
    assert_eq!(DiscreteSamples::load_auto(&bin).unwrap(), s);
    assert_eq!(DiscreteSamples::load_auto(&text).unwrap(), s);
}

#[test]
fn out_of_range_state_is_reported_with_its_row() {
    let bad = "ttns-samples v1 d=2 n=2,3\n1 3\n2 4\n";
    match DiscreteSamples::read_text(bad.as_bytes()) {
        Err(Error::StateOutOfRange { row, node, value, n }) => assert_eq!((row, node, value, n), (2, 2, 4, 3)),
        other => panic!("{other:?}"),
    }
    assert!(DiscreteSamples::read_text("ttns-samples v1 d=2 n=2,3\n0 1\n".as_bytes()).is_err());
    assert!(DiscreteSamples::read_text("ttns-samples v1 d=2 n=2,3\n1\n".as_bytes()).is_err());
    assert!(matches!(DiscreteSamples::read_text("ttns-samples v9 d=2 n=2,3\n".as_bytes()), Err(Error::VersionMismatch { .. })));
    assert!(matches!(DiscreteSamples::read_text("2 3\n1 1\n".as_bytes()), Err(Error::MalformedHeader(_))));
    assert!(DiscreteSamples::read_text("".as_bytes()).is_err());
}

#[test]
fn ttns_files_round_trip_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let tree = RootedTree::from_edges(5, &[(1, 2), (2, 3), (2, 4), (4, 5)], 2).unwrap();
    let m = Ttns::random(tree, &[2, 3, 2, 4, 2], |k, _| 1 + k % 3, -1.0, 1.0, 7).unwrap();
    let path = dir.path().join("m.json");
    m.save(&path).unwrap();
    let back = Ttns::load(&path).unwrap();
    assert_eq!(back.tree(), m.tree());
    for (a, b) in m.cores().iter().zip(back.cores()) {
        assert_eq!(a.shape(), b.shape());
        assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
    fs::write(&path, "{\"format\": \"ttns-model\", \"version\": 999}").unwrap();
    assert!(Ttns::load(&path).is_err());
}

#[test]
fn config_template_validates_and_round_trips() {
    let cfg = ExperimentConfig::template();
    cfg.validate().unwrap();
    let back = ExperimentConfig::from_json(&cfg.to_json()).unwrap();
    assert_eq!(back.to_json(), cfg.to_json());
    assert_eq!(cfg.version, CONFIG_VERSION);
    let mut bad: serde_json::Value = serde_json::from_str(&cfg.to_json()).unwrap();
    bad["surprise"] = serde_json::json!(1);
    assert!(ExperimentConfig::from_json(&bad.to_string()).is_err());
    let cli = ok(&["config-template"]);
    ExperimentConfig::from_json(&cli).unwrap();
}

#[test]
fn experiments_are_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::template();
    cfg.n_list = vec![512, 2048];
    cfg.seeds = vec![0, 1, 2];
    cfg.ranks = RankSpec::Fixed(2);
    cfg.emit_mi = true;
    let mut outputs = vec![];
    for run in ["a", "b"] {
        cfg.out = dir.path().join(run);
        run_experiment(&cfg).unwrap();
        let files: Vec<Vec<u8>> = ["metrics.csv", "aggregate.csv", "slope.csv", "manifest.json"]
            .iter()
            .map(|f| fs::read(cfg.out.join(f)).unwrap())
            .collect();
        outputs.push(files);
    }
    assert_eq!(outputs[0][..3], outputs[1][..3]);
    let manifest: serde_json::Value = serde_json::from_slice(&outputs[0][3]).unwrap();
    assert_eq!(manifest["version"], serde_json::json!(MANIFEST_VERSION));
    assert_eq!(manifest["config"]["n_list"], serde_json::json!([512, 2048]));
    let metrics = String::from_utf8(outputs[0][0].clone()).unwrap();
    assert!(metrics.lines().next().unwrap().starts_with("name,value,method"));
    assert!(metrics.contains("rel_l2_error"));
}

#[test]
fn command_line_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let samples = d.join("s.txt");
    let tree = d.join("tree.json");
    let model = d.join("m.json");
    let drawn = d.join("drawn.bin");
    ok(&["gen-samples", "--preset", "trident10", "--n", "2^13", "--seed", "3", "--out", p(&samples)]);
    assert_eq!(DiscreteSamples::load_text(&samples).unwrap().len(), 1 << 13);
    ok(&["chow-liu", "--samples", p(&samples), "--out", p(&tree), "--emit-mi", p(&d.join("mi.csv"))]);
    assert_eq!(fs::read_to_string(d.join("mi.csv")).unwrap().lines().count(), 10);
    let diag = ok(&["fit", "--samples", p(&samples), "--tree", p(&tree), "--rank", "2", "--out", p(&model)]);
    let diag: serde_json::Value = serde_json::from_str(&diag).unwrap();
    assert_eq!(diag["sample_count"], serde_json::json!(1 << 13));
    let eval = ok(&["eval", "--model", p(&model), "--samples", p(&samples), "--preset", "trident10"]);
    assert!(eval.contains("nll") && eval.contains("rel_l2_error"), "{eval}");
    ok(&["sample", "--model", p(&model), "--n", "1000", "--seed", "1", "--out", p(&drawn), "--binary"]);
    assert_eq!(DiscreteSamples::load_auto(&drawn).unwrap().len(), 1000);
    ok(&["fit", "--samples", p(&samples), "--preset", "trident10", "--sketch", "perturbative", "--eps", "0.05", "--l", "8", "--rank", "2", "--out", p(&model)]);
    let clock = d.join("clock.bin");
    ok(&["gen-samples", "--preset", "nonlocal-clock-d8", "--n", "4096", "--out", p(&clock), "--binary"]);
    let args = ["fit", "--samples", p(&clock), "--preset", "nonlocal-clock-d8", "--sketch", "perturbative", "--l", "20", "--out", p(&model)];
    // a leaf with 4 states carries at most rank 4
    let fixed = ttns(&[&args[..], &["--rank", "8"]].concat());
    assert_eq!(fixed.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&fixed.stderr).contains("singular"));
    ok(&[&args[..], &["--max-rank", "8"]].concat());
}

#[test]
fn command_line_errors_exit_with_status_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = ttns(&["gen-samples", "--preset", "no-such", "--n", "10", "--out", p(&dir.path().join("x"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no-such"));
    let out = ttns(&["fit", "--samples", p(&dir.path().join("missing.txt")), "--out", p(&dir.path().join("m"))]);
    assert_eq!(out.status.code(), Some(2));
}
