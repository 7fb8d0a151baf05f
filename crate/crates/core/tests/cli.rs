use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use stmforge::cli::{EXIT_CONFIG, EXIT_DATA, EXIT_OK};
use stmforge::io::load_archive;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stmforge"))
        .current_dir(dir)
        .args(args)
        .env_remove("STMFORGE_THREADS")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = run(dir, args);
    assert_eq!(
        out.status.code(),
        Some(EXIT_OK),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn count_ext(dir: &Path, ext: &str) -> usize {
    fs::read_dir(dir)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == ext))
        .count()
}

#[test]
fn simulate_writes_one_image_per_request() {
    let tmp = tempfile::tempdir().unwrap();
    ok(tmp.path(), &["--out", "o", "simulate", "--lattice", "hex1", "--count", "3"]);
    let images = tmp.path().join("o/images");
    assert_eq!(count_ext(&images, "pgm"), 3);
    assert_eq!(count_ext(&images, "json"), 3);
    assert!(images.join("hex1_002.pgm").is_file());
    assert!(tmp.path().join("o/simulate.manifest.json").is_file());
}

#[test]
fn simulate_all_covers_every_lattice() {
    let tmp = tempfile::tempdir().unwrap();
    ok(tmp.path(), &["--out", "o", "simulate", "--count", "1"]);
    let images = tmp.path().join("o/images");
    assert_eq!(count_ext(&images, "pgm"), 5);
    for name in ["simple-cubic", "bcc", "fcc", "hex1", "hex2"] {
        assert!(images.join(format!("{name}_000.pgm")).is_file(), "{name}");
    }
}

#[test]
fn dataset_cuts_every_patch_by_default() {
    let tmp = tempfile::tempdir().unwrap();
    ok(tmp.path(), &["--out", "o", "simulate", "--lattice", "fcc"]);
    ok(tmp.path(), &["--out", "o", "dataset"]);
    let archive = load_archive(&tmp.path().join("o/patches.stmp")).unwrap();
    assert_eq!(archive.patches.len(), 3600);
    assert_eq!(archive.manifest.patch_size, 17);
    assert_eq!(archive.manifest.stride, 4);
}

#[test]
fn cae_b_rejects_a_17_pixel_archive() {
    let tmp = tempfile::tempdir().unwrap();
    ok(tmp.path(), &["--out", "o", "simulate", "--lattice", "bcc"]);
    ok(tmp.path(), &["--out", "o", "dataset", "--subsample", "50"]);
    let out = run(tmp.path(), &["--out", "o", "train", "--arch", "cae-b", "--epochs", "1"]);
    assert_eq!(out.status.code(), Some(EXIT_DATA));
    assert!(!tmp.path().join("o/model.stmw").exists());
}

#[test]
fn list_configs_prints_the_presets() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ok(tmp.path(), &["train", "--list-configs"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 7);
    assert!(text.contains("batch=256"));
    assert!(text.contains("patches_per_image=4900"));
    assert!(text.contains("lr=0.002 batch=2048"));
}

#[test]
fn empty_input_directory_is_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    fs::create_dir(tmp.path().join("empty")).unwrap();
    let out = run(tmp.path(), &["--out", "o", "dataset", "--input", "empty"]);
    assert_eq!(out.status.code(), Some(EXIT_DATA));
}

#[test]
fn invalid_options_are_config_errors() {
    let tmp = tempfile::tempdir().unwrap();
    for args in [
        &["simulate", "--count", "0"][..],
        &["simulate", "--lattice", "diamond"],
        &["simulate", "--gaussian", "-1"],
        &["train", "--epochs", "0"],
        &["--config", "no-such-preset", "train"],
        &["bogus"],
    ] {
        let out = run(tmp.path(), args);
        assert_eq!(out.status.code(), Some(EXIT_CONFIG), "{args:?}");
    }
}

#[test]
fn constant_images_are_skipped() {
    let tmp = tempfile::tempdir().unwrap();
    ok(tmp.path(), &["--out", "o", "simulate", "--lattice", "hex2"]);
    let pgms = tmp.path().join("pgms");
    fs::create_dir(&pgms).unwrap();
    fs::copy(tmp.path().join("o/images/hex2_000.pgm"), pgms.join("a.pgm")).unwrap();
    let mut flat = b"P5\n256 256\n255\n".to_vec();
    flat.extend(std::iter::repeat_n(128u8, 256 * 256));
    fs::write(pgms.join("b.pgm"), flat).unwrap();

    let out = ok(tmp.path(), &["--out", "d", "dataset", "--input", "pgms"]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("skipping"));
    let archive = load_archive(&tmp.path().join("d/patches.stmp")).unwrap();
    assert_eq!(archive.patches.len(), 3600);

    fs::remove_file(pgms.join("a.pgm")).unwrap();
    let out = run(tmp.path(), &["--out", "e", "dataset", "--input", "pgms"]);
    assert_eq!(out.status.code(), Some(EXIT_DATA));
}

#[test]
fn flags_override_the_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(
        tmp.path().join("run.toml"),
        "seed = 5\nout = \"cfg\"\n\n[simulate]\nlattice = \"hex1\"\ncount = 2\n",
    )
    .unwrap();
    ok(tmp.path(), &["--config", "run.toml", "simulate", "--count", "1"]);
    let images = tmp.path().join("cfg/images");
    assert_eq!(count_ext(&images, "pgm"), 1);
    assert!(images.join("hex1_000.pgm").is_file());

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("cfg/simulate.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["seed"], 5);
    assert_eq!(manifest["config"]["simulate"]["count"], 1);
}

#[test]
fn unknown_config_keys_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("bad.toml"), "[simulate]\nlatice = \"hex1\"\n").unwrap();
    let out = run(tmp.path(), &["--config", "bad.toml", "simulate"]);
    assert_eq!(out.status.code(), Some(EXIT_CONFIG));
}

#[test]
fn manifest_hashes_match_the_artifacts() {
    use sha2::{Digest, Sha256};

    let tmp = tempfile::tempdir().unwrap();
    ok(tmp.path(), &["--out", "o", "--seed", "3", "simulate", "--lattice", "hex1"]);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("o/simulate.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "simulate");
    assert_eq!(manifest["seeds"]["root"], 3);
    let artifacts = manifest["artifacts"].as_array().unwrap();
    assert_eq!(artifacts.len(), 3);
    for a in artifacts {
        let bytes = fs::read(tmp.path().join("o").join(a["path"].as_str().unwrap())).unwrap();
        assert_eq!(a["bytes"], bytes.len());
        assert_eq!(a["sha256"], hex::encode(Sha256::digest(&bytes)));
    }
}

#[test]
fn seeds_change_images_and_repeat_exactly() {
    let tmp = tempfile::tempdir().unwrap();
    for (out, seed) in [("a", "1"), ("b", "1"), ("c", "2")] {
        ok(tmp.path(), &["--out", out, "--seed", seed, "--threads", "1", "simulate", "--lattice", "fcc"]);
    }
    let read = |d: &str| fs::read(tmp.path().join(d).join("images/fcc_000.f32")).unwrap();
    assert_eq!(read("a"), read("b"));
    assert_ne!(read("a"), read("c"));
}
