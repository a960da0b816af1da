//! Shared helpers for the CLI tests: the bundled synthetic SUT, a tiny
//! text-substitution mutant generator for it, and a runner for the binary.

#![allow(dead_code)]

use std::fs;
use std::os::unix::fs::PermissionsExt;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub const HOOK: &str = "SYNTH_COV={covdir}/{case_id}.cov ./synth.sh {argv} >/dev/null";

/// Operator substitutions tried at every site, in order.
const OPERATORS: [(&str, &str); 8] = [
    (" -gt ", " -ge "),
    (" -lt ", " -le "),
    (" -eq ", " -ne "),
    (" + ", " - "),
    (" - ", " + "),
    (" * ", " + "),
    (" % ", " / "),
    ("result", "resul"),
];

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/synth")
}

pub fn synth_model() -> PathBuf {
    fixture_dir().join("model.json")
}

/// Every single-site mutant of the lines between the `mutable-begin` and
/// `mutable-end` markers, skipping coverage bookkeeping lines.
pub fn all_mutants(script: &str) -> Vec<String> {
    let lines: Vec<&str> = script.lines().collect();
    let begin = lines
        .iter()
        .position(|l| l.contains("mutable-begin"))
        .expect("begin marker");
    let end = lines
        .iter()
        .position(|l| l.contains("mutable-end"))
        .expect("end marker");
    let mut out = Vec::new();
    for (i, line) in lines.iter().enumerate().take(end).skip(begin + 1) {
        if line.trim_start().starts_with("cov") {
            continue;
        }
        for (from, to) in OPERATORS {
            for (at, _) in line.match_indices(from) {
                let mutated = format!("{}{}{}", &line[..at], to, &line[at + from.len()..]);
                let mut copy: Vec<String> = lines.iter().map(|l| l.to_string()).collect();
                copy[i] = mutated;
                out.push(copy.join("\n") + "\n");
            }
        }
    }
    out
}

/// Picks `count` mutants spread evenly over all sites, writes them as
/// executables into `dir` and returns the path of a mutant file.
pub fn write_mutants(dir: &Path, count: usize) -> PathBuf {
    let script = fs::read_to_string(fixture_dir().join("synth.sh")).unwrap();
    let all = all_mutants(&script);
    assert!(all.len() >= count, "only {} mutation sites", all.len());
    let mut entries = Vec::new();
    for k in 0..count {
        let text = &all[k * all.len() / count];
        let path = dir.join(format!("mutant{k:02}.sh"));
        fs::write(&path, text).unwrap();
        fs::set_permissions(&path, fs::Permissions::from_mode(0o755)).unwrap();
        entries.push(serde_json::json!({"id": format!("m{k:02}"), "command": path}));
    }
    let file = dir.join("mutants.json");
    fs::write(&file, serde_json::json!({ "mutants": entries }).to_string()).unwrap();
    file
}

pub fn cctg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cctg"))
        .args(args)
        .output()
        .expect("binary runs")
}

/// Runs the binary and panics with its stderr unless it exits 0.
pub fn cctg_ok(args: &[&str]) -> Output {
    let out = cctg(args);
    assert!(
        out.status.success(),
        "cctg {args:?} failed ({:?}): {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn s(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// probe -> coverage -> weights for the synthetic SUT; returns the weights path.
pub fn synth_weights(dir: &Path, seed: u64) -> PathBuf {
    let model = synth_model();
    let probe = dir.join("probe.jsonl");
    let covdir = dir.join("cov");
    let weights = dir.join("weights.json");
    let seed = seed.to_string();
    cctg_ok(&[
        "--model",
        s(&model),
        "--seed",
        &seed,
        "--out",
        s(&probe),
        "probe",
        "--test-depth",
        "3",
    ]);
    cctg_ok(&[
        "--model",
        s(&model),
        "--out",
        s(&dir.join("coverage.jsonl")),
        "run",
        "--suite",
        s(&probe),
        "--coverage-hook",
        HOOK,
        "--coverage-dir",
        s(&covdir),
    ]);
    cctg_ok(&[
        "--model",
        s(&model),
        "--out",
        s(&weights),
        "weights",
        "--suite",
        s(&probe),
        "--coverage-dir",
        s(&covdir),
    ]);
    weights
}
