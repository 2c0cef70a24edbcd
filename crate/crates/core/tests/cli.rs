use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ndarray::Array2;
use tempfile::TempDir;

use kwmlp::dsp::{encode_wav_pcm16, AudioBuffer};
use kwmlp::emb::{read_any, write_csv, write_emb1};

fn kwmlp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kwmlp")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

struct Fixture {
    dir: TempDir,
    weights: PathBuf,
    wav: PathBuf,
}

fn fixture(depth: &str) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let weights = dir.path().join("model.kwm");
    let out = kwmlp(&["init", "--out", p(&weights), "--depth", depth, "--seed", "3"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let wav = dir.path().join("tone.wav");
    let tone = (0..16_000).map(|i| 0.4 * (i as f64 * 0.2).sin()).collect();
    std::fs::write(&wav, encode_wav_pcm16(&AudioBuffer::new(tone, 16_000))).unwrap();
    Fixture { dir, weights, wav }
}

#[test]
fn embed_writes_timestamp_and_scene_matrices() {
    let f = fixture("12");
    let before = std::fs::read(&f.weights).unwrap();
    let csv = f.dir.path().join("ts.csv");
    let out =
        kwmlp(&["embed", "--weights", p(&f.weights), "--input", p(&f.wav), "--mode", "timestamp", "--output", p(&csv)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(String::from_utf8_lossy(&out.stdout).contains("98 x 64"));
    assert_eq!(read_any(&std::fs::read(&csv).unwrap()).unwrap().dim(), (98, 64));

    for alg in ["iterative", "single", "mean"] {
        let bin = f.dir.path().join(format!("{alg}.emb"));
        let out = kwmlp(&[
            "embed",
            "--weights",
            p(&f.weights),
            "--input",
            p(&f.wav),
            "--mode",
            "scene",
            "--scene-alg",
            alg,
            "--depth",
            "4",
            "--format",
            "bin",
            "--output",
            p(&bin),
        ]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        let bytes = std::fs::read(&bin).unwrap();
        assert_eq!(&bytes[..4], b"EMB1");
        assert_eq!(read_any(&bytes).unwrap().dim(), (1, 1024));
    }
    assert_eq!(std::fs::read(&f.weights).unwrap(), before, "weights file was modified");
}

#[test]
fn embed_exit_codes() {
    let f = fixture("2");
    let out_path = f.dir.path().join("never.csv");
    let o = p(&out_path);

    let out = kwmlp(&["embed", "--weights", p(&f.weights), "--input", p(&f.wav), "--depth", "3", "--output", o]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("1..=2"), "{}", stderr(&out));

    let junk = f.dir.path().join("junk.kwm");
    std::fs::write(&junk, b"not a weight file").unwrap();
    assert_eq!(code(&kwmlp(&["embed", "--weights", p(&junk), "--input", p(&f.wav), "--output", o])), 2);
    assert_eq!(code(&kwmlp(&["embed", "--weights", "/no/such.kwm", "--input", p(&f.wav), "--output", o])), 2);

    let bad_wav = f.dir.path().join("bad.wav");
    std::fs::write(&bad_wav, b"RIFF....WAVEjunk").unwrap();
    assert_eq!(code(&kwmlp(&["embed", "--weights", p(&f.weights), "--input", p(&bad_wav), "--output", o])), 3);

    assert_eq!(code(&kwmlp(&["embed", "--weights", p(&f.weights), "--input", p(&f.wav), "--output", o, "--bogus"])), 1);
    assert_eq!(
        code(&kwmlp(&["embed", "--weights", p(&f.weights), "--input", p(&f.wav), "--output", o, "--mode", "clip"])),
        1
    );
    assert!(!out_path.exists(), "failed runs must not write output");

    assert_eq!(code(&kwmlp(&["--help"])), 0);
    assert_eq!(code(&kwmlp(&[])), 1);
}

#[test]
fn train_writes_all_artifacts_reproducibly() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let out = kwmlp(&["synth", "--out", p(&data), "--per-class", "2", "--seed", "1"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let manifest = data.join("manifest.tsv");

    let run = |name: &str| {
        let w = dir.path().join(name);
        let out = kwmlp(&[
            "train",
            "--manifest",
            p(&manifest),
            "--out",
            p(&w),
            "--depth",
            "8",
            "--dim",
            "8",
            "--proj-dim",
            "16",
            "--classes",
            "2",
            "--epochs",
            "3",
            "--warmup",
            "1",
            "--batch-size",
            "2",
            "--seed",
            "5",
        ]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        w
    };
    let a = run("a.kwm");
    let b = run("b.kwm");
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(&std::fs::read(a.with_extension("opt1")).unwrap()[..4], b"OPT1");
    let log = std::fs::read_to_string(a.with_extension("csv")).unwrap();
    assert_eq!(log, std::fs::read_to_string(b.with_extension("csv")).unwrap());
    assert_eq!(log.lines().count(), 1 + 3 * 2);
    let weights = kwmlp::encoder::load_weights(&std::fs::read(&a).unwrap()).unwrap();
    assert_eq!(weights.blocks.len(), 8);
}

#[test]
fn train_manifest_errors_exit_4() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.tsv");
    std::fs::write(&empty, "").unwrap();
    let w = dir.path().join("w.kwm");
    assert_eq!(code(&kwmlp(&["train", "--manifest", p(&empty), "--out", p(&w)])), 4);
    let broken = dir.path().join("broken.tsv");
    std::fs::write(&broken, "clip.wav zero\n").unwrap();
    assert_eq!(code(&kwmlp(&["train", "--manifest", p(&broken), "--out", p(&w)])), 4);
    assert_eq!(code(&kwmlp(&["train", "--manifest", "/no/such.tsv", "--out", p(&w)])), 4);
    assert!(!w.exists());
}

fn labelled(dir: &Path, rows: usize) -> (PathBuf, PathBuf) {
    let x = Array2::from_shape_fn((rows, 3), |(i, j)| if i % 2 == 0 { j as f64 } else { 10.0 - j as f64 });
    let emb = dir.join("x.emb");
    std::fs::write(&emb, write_emb1(&x)).unwrap();
    let manifest = dir.join("labels.tsv");
    let lines: String = (0..rows).map(|i| format!("clip{i}.wav\t{}\n", i % 2)).collect();
    std::fs::write(&manifest, lines).unwrap();
    (emb, manifest)
}

#[test]
fn probe_prints_a_json_line() {
    let dir = tempfile::tempdir().unwrap();
    let (emb, manifest) = labelled(dir.path(), 10);
    let out = kwmlp(&["probe", "--embeddings", p(&emb), "--manifest", p(&manifest), "--task", "toy", "--depth", "4"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let line: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(line["task"], "toy");
    assert_eq!(line["depth"], 4);
    assert_eq!(line["accuracy"], 1.0);

    let csv = dir.path().join("x.csv");
    std::fs::write(&csv, write_csv(&read_any(&std::fs::read(&emb).unwrap()).unwrap())).unwrap();
    let out = kwmlp(&["probe", "--embeddings", p(&csv), "--manifest", p(&manifest), "--hidden", "4"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
}

#[test]
fn probe_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let (emb, _) = labelled(dir.path(), 10);
    let short = dir.path().join("short.tsv");
    std::fs::write(&short, "a.wav\t0\nb.wav\t1\n").unwrap();
    assert_eq!(code(&kwmlp(&["probe", "--embeddings", p(&emb), "--manifest", p(&short)])), 5);
    let one_class = dir.path().join("one.tsv");
    std::fs::write(&one_class, "a.wav\t0\n".repeat(10)).unwrap();
    assert_eq!(code(&kwmlp(&["probe", "--embeddings", p(&emb), "--manifest", p(&one_class)])), 5);
    assert_eq!(code(&kwmlp(&["probe", "--embeddings", "/no/such.emb", "--manifest", p(&short)])), 3);
}

#[test]
fn inspect_exports_every_block() {
    let f = fixture("3");
    let out_dir = f.dir.path().join("inspect");
    let out = kwmlp(&["inspect", "--weights", p(&f.weights), "--out", p(&out_dir)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    for i in 1..=3 {
        let g = read_any(&std::fs::read(out_dir.join(format!("block_{i:02}_G.csv"))).unwrap()).unwrap();
        assert_eq!(g.dim(), (98, 98));
    }
    let json: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out_dir.join("toeplitz.json")).unwrap()).unwrap();
    let blocks = json["blocks"].as_array().unwrap();
    assert_eq!(blocks.len(), 3);
    assert!(blocks.iter().all(|b| b["toeplitzness"] == 1.0));
    assert_eq!(code(&kwmlp(&["inspect", "--weights", p(&f.wav), "--out", p(&out_dir)])), 2);
}

#[test]
fn interp_demo_identity_and_validation() {
    let dir = tempfile::tempdir().unwrap();
    let pgm = dir.path().join("same.pgm");
    let out = kwmlp(&["interp-demo", "--size", "64", "--target", "64", "--mode", "direct", "--out", p(&pgm)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let bytes = std::fs::read(&pgm).unwrap();
    assert!(bytes.starts_with(b"P5\n64 64\n255\n"));
    let circle = kwmlp::cli::demo::circle_image(64);
    let on = circle.iter().filter(|&&v| v > 0.0).count();
    assert_eq!(bytes.iter().rev().take(64 * 64).filter(|&&b| b == 255).count(), on);
    assert_eq!(code(&kwmlp(&["interp-demo", "--size", "16", "--target", "32", "--out", p(&pgm)])), 1);
}

#[test]
fn thread_override_is_validated() {
    let dir = tempfile::tempdir().unwrap();
    let w = dir.path().join("w.kwm");
    let run = |threads: &str| {
        Command::new(env!("CARGO_BIN_EXE_kwmlp"))
            .args(["init", "--depth", "1", "--out", p(&w)])
            .env("KWMLP_THREADS", threads)
            .output()
            .unwrap()
    };
    assert_eq!(code(&run("2")), 0);
    assert_eq!(code(&run("many")), 1);
}
