use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sha2::{Digest, Sha256};
use tempfile::TempDir;
use uvlc_core::config::ExperimentConfig;
use uvlc_core::eval::{generate_dataset, Split};
use uvlc_core::io;
use uvlc_core::lamp::infer;
use uvlc_core::sensing::build_observation_matrix;

const SMALL: &str = r#"
seed = 5

[channel]
pilots = 24
s_max = 3.0
paths = 3
coherence = 5e-3

[train]
train_size = 40
test_size = 10
epochs_per_layer = 4
batch_size = 10
max_layers = 3
"#;

fn uvlc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_uvlc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = uvlc(args);
    assert!(
        out.status.success(),
        "uvlc {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn sha(p: &Path) -> Vec<u8> {
    Sha256::digest(fs::read(p).unwrap()).to_vec()
}

struct Work {
    dir: TempDir,
}

impl Work {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("small.toml"), SMALL).unwrap();
        Self { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn config(&self) -> String {
        s(&self.path("small.toml")).to_string()
    }

    fn gen(&self, name: &str, split: &str) -> PathBuf {
        let out = self.path(name);
        ok(&["gen", "--config", &self.config(), "--split", split, "--out", s(&out)]);
        out
    }
}

#[test]
fn gen_round_trips_and_is_deterministic() {
    let w = Work::new();
    let a = w.gen("a.json", "train");
    let b = w.gen("b.json", "train");
    assert_eq!(sha(&a), sha(&b));

    let loaded = io::load_dataset(&a).unwrap();
    let cfg = ExperimentConfig::from_toml(SMALL).unwrap();
    let expected = generate_dataset(&cfg.setup().unwrap().dataset_spec(5), Split::Train, 40).unwrap();
    assert_eq!(loaded, expected);
    assert_eq!(io::dataset_to_json(&loaded), fs::read_to_string(&a).unwrap());

    let other = w.path("c.json");
    ok(&["gen", "--config", &w.config(), "--seed", "6", "--out", s(&other)]);
    assert_ne!(sha(&a), sha(&other));
}

#[test]
fn gen_to_unwritable_path_fails() {
    let w = Work::new();
    let out = uvlc(&["gen", "--config", &w.config(), "--out", "/nonexistent-dir/x.json"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn bad_config_fails() {
    let w = Work::new();
    let bad = w.path("bad.toml");
    fs::write(&bad, "[channel]\npilots = 1\n").unwrap();
    let out = uvlc(&["gen", "--config", s(&bad), "--out", s(&w.path("x.json"))]);
    assert!(!out.status.success());
    assert!(!w.path("x.json").exists());
}

#[test]
fn train_single_layer_and_rerun_is_identical() {
    let w = Work::new();
    let train = w.gen("train.json", "train");
    let test = w.gen("test.json", "test");
    let ck = w.path("ck.json");
    let log = w.path("log.csv");
    ok(&[
        "train", "--config", &w.config(), "--train", s(&train), "--test", s(&test),
        "--checkpoint", s(&ck), "--log", s(&log), "--max-layers", "1",
    ]);
    let ckpt = io::load_checkpoint(&ck).unwrap();
    assert_eq!(ckpt.params.depth(), 1);
    let log_text = fs::read_to_string(&log).unwrap();
    assert!(log_text.starts_with("layer,epoch,train_loss,test_loss,test_nmse\n"));
    assert_eq!(log_text.lines().count(), 1 + 5);

    let ck2 = w.path("ck2.json");
    ok(&[
        "train", "--config", &w.config(), "--train", s(&train), "--test", s(&test),
        "--checkpoint", s(&ck2), "--max-layers", "1",
    ]);
    assert_eq!(io::load_checkpoint(&ck2).unwrap().loss_history, ckpt.loss_history);
    assert_eq!(sha(&ck), sha(&ck2));
}

#[test]
fn train_rejects_mismatched_provenance() {
    let w = Work::new();
    let train = w.gen("train.json", "train");
    let other_cfg = w.path("other.toml");
    fs::write(&other_cfg, SMALL.replace("pilots = 24", "pilots = 25")).unwrap();
    let test = w.path("test.json");
    ok(&["gen", "--config", s(&other_cfg), "--split", "test", "--out", s(&test)]);
    let out = uvlc(&[
        "train", "--train", s(&train), "--test", s(&test), "--checkpoint", s(&w.path("ck.json")),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("provenance mismatch"));
    assert!(!w.path("ck.json").exists());
}

fn zero_measurements(src: &Path, dst: &Path) {
    let text = fs::read_to_string(src).unwrap();
    let mut out = String::new();
    for line in text.lines() {
        if line.starts_with('#') || line.starts_with("sample,") {
            out.push_str(line);
        } else {
            let (head, _) = line.rsplit_once(',').unwrap();
            out.push_str(head);
            out.push_str(",0");
        }
        out.push('\n');
    }
    fs::write(dst, out).unwrap();
}

#[test]
fn zero_measurement_gives_zero_estimate_and_no_paths() {
    let w = Work::new();
    let m = w.gen("m.csv", "test");
    let zero = w.path("zero.csv");
    zero_measurements(&m, &zero);
    for scheme in ["ls", "omp", "amp"] {
        let out = w.path(&format!("est-{scheme}.csv"));
        ok(&["estimate", "--config", &w.config(), "--input", s(&zero), "--scheme", scheme, "--out", s(&out)]);
        let est = io::load_estimates(&out).unwrap();
        assert_eq!(est.scheme, scheme);
        assert_eq!(est.estimates.len(), 10);
        assert!(est.estimates.iter().all(|x| x.iter().all(|v| *v == 0.0)));
        assert!(est.paths.iter().all(|p| p.is_empty()));
    }
}

#[test]
fn omp_estimate_needs_no_checkpoint_and_respects_k() {
    let w = Work::new();
    let m = w.gen("m.csv", "test");
    let out = w.path("omp.csv");
    ok(&["estimate", "--input", s(&m), "--scheme", "omp", "--k", "2", "--out", s(&out)]);
    let est = io::load_estimates(&out).unwrap();
    for x in &est.estimates {
        assert!(x.iter().filter(|v| **v != 0.0).count() <= 2);
    }
}

#[test]
fn sl_uvce_estimate_matches_library_inference() {
    let w = Work::new();
    let train = w.gen("train.json", "train");
    let test = w.gen("test.json", "test");
    let ck = w.path("ck.json");
    ok(&["train", "--config", &w.config(), "--train", s(&train), "--test", s(&test), "--checkpoint", s(&ck)]);
    let out = w.path("est.csv");
    ok(&["estimate", "--input", s(&test), "--checkpoint", s(&ck), "--out", s(&out)]);

    let est = io::load_estimates(&out).unwrap();
    let data = io::load_dataset(&test).unwrap();
    let params = io::load_checkpoint(&ck).unwrap().params;
    let p = &data.provenance.measurement;
    let phi = build_observation_matrix(&p.pilots, &p.distances, &p.attenuation).unwrap();
    assert_eq!(est.scheme, "sl-uvce");
    for (sample, got) in data.samples.iter().zip(&est.estimates) {
        let want = infer(&sample.y, &phi, &params).unwrap();
        assert_eq!(got, want.as_vector());
    }
}

#[test]
fn sl_uvce_needs_checkpoint() {
    let w = Work::new();
    let m = w.gen("m.csv", "test");
    let out = uvlc(&["estimate", "--input", s(&m), "--scheme", "sl-uvce", "--out", s(&w.path("e.csv"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--checkpoint"));
}

#[test]
fn estimate_rejects_checkpoint_for_other_matrix() {
    let w = Work::new();
    let train = w.gen("train.json", "train");
    let test = w.gen("test.json", "test");
    let ck = w.path("ck.json");
    ok(&["train", "--config", &w.config(), "--train", s(&train), "--test", s(&test),
        "--checkpoint", s(&ck), "--max-layers", "1"]);
    let m = w.path("default.csv");
    ok(&["gen", "--split", "test", "--size", "2", "--out", s(&m)]);
    let out = uvlc(&["estimate", "--input", s(&m), "--checkpoint", s(&ck), "--out", s(&w.path("e.csv"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("provenance mismatch"));
}

#[test]
fn sweep_single_point_and_determinism() {
    let w = Work::new();
    let one = w.path("one.csv");
    ok(&["sweep", "--config", &w.config(), "--values", "20", "--scheme", "ls", "--out", s(&one)]);
    let text = fs::read_to_string(&one).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], "scheme,sweep_variable,sweep_value,nmse,seconds,seed");
    assert!(lines[1].starts_with("ls,pilots,20,"));
    assert!(lines[1].ends_with(",5"));

    let a = w.path("a.csv");
    let b = w.path("b.csv");
    for out in [&a, &b] {
        ok(&["sweep", "--config", &w.config(), "--variable", "paths", "--values", "1,2", "--out", s(out)]);
    }
    assert_eq!(sha(&a), sha(&b));
    assert_eq!(fs::read_to_string(&a).unwrap().lines().count(), 1 + 2 * 4);
}

fn diagnose_value(stdout: &[u8], key: &str) -> f64 {
    let text = String::from_utf8_lossy(stdout);
    let prefix = format!("{key}=");
    text.lines()
        .find_map(|l| l.strip_prefix(&prefix))
        .unwrap_or_else(|| panic!("no {key} in {text}"))
        .parse()
        .unwrap()
}

#[test]
fn diagnose_orthogonal_fixture() {
    let w = Work::new();
    let fixture = w.path("eye.csv");
    fs::write(&fixture, "# identity\n1,0,0\n0,1,0\n0,0,1\n0,0,0\n").unwrap();
    let out = ok(&["diagnose", "--matrix", s(&fixture)]);
    assert_eq!(diagnose_value(&out.stdout, "mu"), 0.0);
    assert_eq!(diagnose_value(&out.stdout, "rows"), 4.0);
    assert_eq!(diagnose_value(&out.stdout, "cols"), 3.0);
    assert_eq!(diagnose_value(&out.stdout, "cond"), 1.0);
}

#[test]
fn diagnose_default_is_highly_coherent() {
    let out = ok(&["diagnose"]);
    assert!(diagnose_value(&out.stdout, "mu") > 0.9);
    assert_eq!(diagnose_value(&out.stdout, "rows"), 64.0);
    assert_eq!(diagnose_value(&out.stdout, "cols"), 120.0);
}

#[test]
fn diagnose_flat_attenuation_has_identical_columns() {
    let w = Work::new();
    let cfg = w.path("flat.toml");
    fs::write(&cfg, "[channel]\nc1 = 0.0\n").unwrap();
    let export = w.path("phi.csv");
    let out = ok(&["diagnose", "--config", s(&cfg), "--export-matrix", s(&export)]);
    assert_eq!(diagnose_value(&out.stdout, "mu"), 1.0);
    assert_eq!(diagnose_value(&out.stdout, "rank"), 1.0);
    let phi = io::load_matrix_csv(&export).unwrap();
    assert!(phi.iter().all(|v| *v == 1.0));
}
