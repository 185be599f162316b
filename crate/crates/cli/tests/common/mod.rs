#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_fusedstyle")
}

pub fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().expect("spawn fusedstyle")
}

pub fn run_ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed with {:?}\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// A tiny trained pipeline shared by the tests of one binary.
pub struct Pipeline {
    _dir: tempfile::TempDir,
    pub root: PathBuf,
}

impl Pipeline {
    pub fn path(&self, name: &str) -> String {
        self.root.join(name).to_string_lossy().into_owned()
    }
}

fn build(root: &Path) {
    let p = |n: &str| root.join(n).to_string_lossy().into_owned();
    run_ok(&[
        "synth-data",
        "--out-dir",
        &p(""),
        "--pairs",
        "400",
        "--style",
        "200",
        "--test-contexts",
        "30",
        "--seed",
        "3",
    ]);
    run_ok(&[
        "train",
        "--variant",
        "style_fusion",
        "--conv",
        &p("conv.tsv"),
        "--style",
        &p("style.txt"),
        "--vocab",
        &p("vocab.txt"),
        "--out",
        &p("model.ckpt"),
        "--latent-dim",
        "8",
        "--lr",
        "0.003",
        "--pretrain-epochs",
        "1",
        "--max-epochs",
        "1",
        "--seed",
        "3",
    ]);
    run_ok(&[
        "train-classifiers",
        "--conv",
        &p("conv.tsv"),
        "--style",
        &p("style.txt"),
        "--vocab",
        &p("vocab.txt"),
        "--out",
        &p("scorer.ckpt"),
        "--keywords-out",
        &p("keywords.tsv"),
        "--keyword-threshold",
        "5",
        "--neural-epochs",
        "1",
        "--seed",
        "3",
    ]);
    run_ok(&[
        "build-testset",
        "--conv",
        &p("test_conv.tsv"),
        "--vocab",
        &p("vocab.txt"),
        "--scorer",
        &p("scorer.ckpt"),
        "--out",
        &p("test.jsonl"),
        "--min-refs",
        "1",
        "--threshold",
        "0.1",
    ]);
}

pub fn pipeline() -> &'static Pipeline {
    static P: OnceLock<Pipeline> = OnceLock::new();
    P.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        build(&root);
        Pipeline { _dir: dir, root }
    })
}
