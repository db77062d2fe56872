//! Runs the `irf` binary: every README example, exit codes, and
//! thread-count independence of the output.

use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn irf(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_irf"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("irf runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn readme_examples() -> Vec<Vec<String>> {
    let text = include_str!("../../../README.md");
    let mut in_block = false;
    let mut examples = Vec::new();
    for line in text.lines() {
        if line.starts_with("```") {
            in_block = !in_block;
            continue;
        }
        if in_block {
            if let Some(rest) = line.strip_prefix("irf ") {
                examples.push(rest.split_whitespace().map(String::from).collect());
            }
        }
    }
    examples
}

#[test]
fn readme_examples_succeed() {
    let examples = readme_examples();
    assert!(examples.len() >= 10, "found only {} examples", examples.len());
    let dir = TempDir::new().unwrap();
    for args in &examples {
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        let out = irf(dir.path(), &args);
        assert_eq!(code(&out), 0, "irf {}: {}", args.join(" "), String::from_utf8_lossy(&out.stderr));
        let written = args.iter().position(|a| *a == "--out").map(|i| dir.path().join(args[i + 1]));
        match written {
            Some(path) => assert!(std::fs::metadata(path).unwrap().len() > 0),
            None => assert!(!out.stdout.is_empty(), "irf {} printed nothing", args.join(" ")),
        }
    }
    let events = std::fs::read_to_string(dir.path().join("events.csv")).unwrap();
    assert!(events.starts_with("trajectory,t,x,s_x\n"));
}

#[test]
fn output_does_not_depend_on_threads() {
    let dir = TempDir::new().unwrap();
    let runs: &[&[&str]] = &[
        &["simulate", "--model", "asep", "--q", "0.6", "--alpha", "2", "--t", "3", "--trajectories", "40", "--seed", "5"],
        &["simulate", "--model", "dyn6v", "--preset", "dyn6v-positive", "--N", "5", "--xs", "5,3,1", "--trajectories", "40"],
        &["observables", "--model", "ssep", "--xs", "2,0", "--t", "1.5", "--compare", "exact,mc", "--samples", "3000"],
        &["verify", "--suite", "oracle", "--draws", "20"],
    ];
    for args in runs {
        let outputs: Vec<Vec<u8>> = ["1", "4", "1"]
            .iter()
            .map(|t| {
                let mut full = args.to_vec();
                full.extend(["--threads", t]);
                let out = irf(dir.path(), &full);
                assert_eq!(code(&out), 0, "{full:?}");
                out.stdout
            })
            .collect();
        assert_eq!(outputs[0], outputs[1], "{args:?}");
        assert_eq!(outputs[0], outputs[2], "{args:?}");
    }
}

#[test]
fn failing_checks_exit_one_and_are_named() {
    let dir = TempDir::new().unwrap();
    let out = irf(dir.path(), &["verify", "--suite", "symmetrization", "--tolerance", "1e-30"]);
    assert_eq!(code(&out), 1);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("FAILED symmetrization/"), "{stderr}");
    // the reports are still printed, with the overridden tolerance recorded
    let reports: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(reports[0]["tolerance"], 1e-30);

    let out = irf(dir.path(), &["verify", "--suite", "stochasticity", "--draws", "50"]);
    assert_eq!(code(&out), 1);
    assert_eq!(String::from_utf8_lossy(&out.stderr).trim(), "FAILED stochasticity/elliptic");
}

#[test]
fn usage_and_config_errors_exit_two() {
    let dir = TempDir::new().unwrap();
    std::fs::write(dir.path().join("broken.json"), "{\"eta\": ").unwrap();
    let cases: &[&[&str]] = &[
        &["verify", "--suite", "nonexistent"],
        &["verify", "--bogus-flag"],
        &["verify", "--suite", "oracle", "--preset", "no-such-preset"],
        &["verify", "--suite", "oracle", "--config", "broken.json"],
        &["verify", "--suite", "oracle", "--config", "missing.json"],
        &["verify", "--suite", "oracle", "--preset", "trig-admissible", "--config", "broken.json"],
        &["observables", "--model", "ssep", "--xs", "0,1", "--t", "1"],
        &["simulate", "--model", "ssep", "--lambda-bar", "-1"],
        &["simulate", "--samples", "0"],
    ];
    for args in cases {
        let out = irf(dir.path(), args);
        assert_eq!(code(&out), 2, "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn config_file_matches_the_preset() {
    let dir = TempDir::new().unwrap();
    let params = irf_core::params::preset("dyn6v-positive").unwrap();
    std::fs::write(dir.path().join("pack.json"), params.to_json_string()).unwrap();
    let common = ["observables", "--model", "dyn6v", "--xs", "3,1", "--N", "3", "--compare", "exact,enum"];
    let mut with_preset = common.to_vec();
    with_preset.extend(["--preset", "dyn6v-positive"]);
    let mut with_config = common.to_vec();
    with_config.extend(["--config", "pack.json"]);
    let a = irf(dir.path(), &with_preset);
    let b = irf(dir.path(), &with_config);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
}
