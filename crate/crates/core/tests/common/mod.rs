//! Helpers shared by the integration suites.
#![allow(dead_code)]

use std::path::PathBuf;

use swuc::linker::LinkedImage;
use swuc::pipeline::build;
use swuc::sim::{run, Mode, RunResult, SimConfig, Status};

/// Programs whose CPE threads never touch the same memory.
pub const RACE_FREE: &[(&str, &[&str])] = &[
    ("fig1_migration.swc", &["1000"]),
    ("vector_add.swc", &["1000"]),
    ("cpe_lambda.swc", &["17"]),
    ("partition_chunked.swc", &["777"]),
    ("partition_strided.swc", &["777"]),
    ("reduction.swc", &["4999"]),
    ("stencil_records.swc", &["37", "29"]),
];

pub fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("corpus")
}

pub fn corpus(name: &str) -> String {
    let path = corpus_dir().join(name);
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

/// Every corpus file that builds on its own.
pub fn buildable_corpus() -> Vec<String> {
    let mut names: Vec<String> = std::fs::read_dir(corpus_dir())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".swc") && !n.starts_with("split_"))
        .collect();
    names.sort();
    names
}

/// Builds a program that must compile without any diagnostic.
pub fn image(src: &str) -> LinkedImage {
    match build(src) {
        Ok((img, warnings)) => {
            assert!(warnings.is_empty(), "unexpected warnings: {warnings:?}");
            img
        }
        Err(d) => panic!("build failed: {d:?}"),
    }
}

pub fn config(n_cpes: u32, mode: Mode, seed: u64) -> SimConfig {
    SimConfig {
        n_cpes,
        mode,
        seed,
        ..SimConfig::default()
    }
}

pub fn exec(img: &LinkedImage, cfg: &SimConfig, args: &[&str]) -> RunResult {
    let argv: Vec<String> = args.iter().map(|s| s.to_string()).collect();
    run(img, cfg, &argv).expect("simulator rejected the run")
}

/// Runs sequentially and returns stdout, requiring exit status 0.
pub fn stdout(img: &LinkedImage, n_cpes: u32, args: &[&str]) -> String {
    let r = exec(img, &config(n_cpes, Mode::Sequential, 0), args);
    match &r.status {
        Status::Exited(0) => r.stdout,
        other => panic!("unexpected status {other:?}\n{}", r.stdout),
    }
}

pub fn swucc() -> std::process::Command {
    std::process::Command::new(env!("CARGO_BIN_EXE_swucc"))
}
