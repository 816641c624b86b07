use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use coulomb_lab::cli::ExperimentConfig;
use coulomb_lab::sampler::Chain;

const SMALL: &str = r#"
seed = 11
[gibbs]
kernel = { case = "log1" }
a = 0.5
n = 8
[sampler]
chains = 2
sweeps = 2000
thin = 5
"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_coulomb-lab"))
}

fn run(args: &[&str], dir: &Path) -> i32 {
    bin().args(args).current_dir(dir).output().expect("binary runs").status.code().unwrap_or(-1)
}

fn only(dir: &Path, prefix: &str) -> PathBuf {
    let mut hits: Vec<PathBuf> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap().to_string_lossy().starts_with(prefix))
        .collect();
    assert_eq!(hits.len(), 1, "{prefix}: {hits:?}");
    hits.pop().unwrap()
}

#[test]
fn sample_writes_complete_manifest_and_reruns_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::write(d.join("small.toml"), SMALL).unwrap();
    assert_eq!(run(&["sample", "--config", "small.toml", "--out", "a"], d), 0);
    let manifest = only(&d.join("a"), "sample_manifest");
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(&manifest).unwrap()).unwrap();
    assert_eq!(m["status"], "complete");
    assert_eq!(m["config"]["seed"], 11);
    assert!(m["files"].as_array().unwrap().len() >= 4);
    let rerun = manifest.to_string_lossy().to_string();
    assert_eq!(run(&["sample", "--config", &rerun, "--out", "b"], d), 0);
    let a = fs::read(only(&d.join("a"), "sample_configs")).unwrap();
    let b = fs::read(only(&d.join("b"), "sample_configs")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn resumed_chain_continues_bit_exactly() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::write(d.join("small.toml"), SMALL).unwrap();
    assert_eq!(run(&["sample", "--config", "small.toml", "--out", "full"], d), 0);

    let cfg = ExperimentConfig::from_toml(SMALL).unwrap();
    let mut chain = Chain::new(cfg.params().unwrap(), cfg.sampler.schedule(), cfg.seed, 0).unwrap();
    chain.run_until(900, |_| {});
    fs::write(d.join("cp.json"), serde_json::to_string(&chain.checkpoint()).unwrap()).unwrap();
    assert_eq!(run(&["sample", "--resume", "cp.json", "--out", "resumed"], d), 0);

    let full = fs::read_to_string(only(&d.join("full"), "sample_configs")).unwrap();
    let resumed = fs::read_to_string(only(&d.join("resumed"), "sample_configs")).unwrap();
    let tail: Vec<&str> = full
        .lines()
        .skip(1)
        .filter(|l| {
            let f: Vec<&str> = l.split(',').collect();
            f[0] == "0" && f[1].parse::<usize>().unwrap() > 900
        })
        .collect();
    let got: Vec<&str> = resumed.lines().skip(1).collect();
    assert!(!got.is_empty());
    assert_eq!(got, tail);
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::write(d.join("bad.toml"), "[sampler]\nsweeps = 10\nwhatever = 1\n").unwrap();
    assert_eq!(run(&["sample", "--config", "bad.toml", "--out", "o"], d), 2);
    fs::write(d.join("bad_kernel.toml"), "[gibbs]\nkernel = { case = \"coul\", d = 2 }\n").unwrap();
    assert_eq!(run(&["sample", "--config", "bad_kernel.toml", "--out", "o"], d), 2);
    let strict = format!("{SMALL}[logz]\ntarget_beta = 3.0\nti_ns = [8]\ntol = 1e-9\n");
    fs::write(d.join("strict.toml"), strict).unwrap();
    assert_eq!(run(&["logz", "--config", "strict.toml", "--out", "t"], d), 3);
    let m = fs::read_to_string(only(&d.join("t"), "logz_manifest")).unwrap();
    assert!(m.contains("INCOMPLETE"));
    assert_eq!(run(&["verify", "--criterion", "9", "--out", "v"], d), 0);
}
