//! Command-level behavior: exit codes, offline operation, output shapes.

use std::path::Path;
use std::process::{Command, Output};

use txlens_core::samples;

fn txlens(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_txlens"))
        .args(args)
        .current_dir(cwd)
        .env_remove(txlens_core::ingest::ENDPOINT_ENV)
        .output()
        .expect("binary runs")
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).to_string()
}

struct Sandbox {
    dir: tempfile::TempDir,
    corpus: samples::SampleCorpus,
}

fn sandbox() -> Sandbox {
    let dir = tempfile::tempdir().unwrap();
    let corpus = samples::write_sample_corpus(dir.path()).unwrap();
    Sandbox { dir, corpus }
}

#[test]
fn parse_renders_indented_tree() {
    let sb = sandbox();
    let out = txlens(
        &["parse", sb.corpus.fixtures[0].to_str().unwrap()],
        sb.dir.path(),
    );
    assert!(out.status.success(), "{out:?}");
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("root 0x02"), "{text}");
    // The vault calls the token: one indented child line.
    assert!(lines.iter().any(|l| l.starts_with("  call 0x03")), "{text}");
    assert!(lines[0].contains("exit=stop"));
}

#[test]
fn parse_decode_substitutes_function_names_and_paths() {
    let sb = sandbox();
    let out = txlens(
        &[
            "parse",
            sb.corpus.fixtures[0].to_str().unwrap(),
            "--decode",
            "--config-dir",
            sb.corpus.config_dir.to_str().unwrap(),
        ],
        sb.dir.path(),
    );
    assert!(out.status.success(), "{out:?}");
    let text = stdout(&out);
    assert!(text.contains("deposit("), "{text}");
    assert!(text.contains("transferFrom("), "{text}");
    assert!(text.contains("balances["), "{text}");
    assert!(text.contains("totalDeposits"), "{text}");
}

#[test]
fn parse_empty_trace_fixture_is_single_root_line() {
    let dir = tempfile::tempdir().unwrap();
    let fixture = dir.path().join("transfer.json");
    let meta = txlens_core::oracle::meta_for(
        9,
        txlens_core::primitives::Address::repeat_byte(0xee),
        Some(txlens_core::primitives::Address::repeat_byte(0x99)),
        vec![],
        21_000,
    );
    let trace = txlens_core::ingest::RawTrace {
        entries: vec![],
        failed: false,
        return_value: vec![],
    };
    txlens_core::ingest::store_fixture(&fixture, &meta, &trace).unwrap();
    let out = txlens(&["parse", fixture.to_str().unwrap()], dir.path());
    assert!(out.status.success());
    assert_eq!(stdout(&out).lines().count(), 1);
}

#[test]
fn missing_fixture_exits_1_with_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = txlens(&["translate", "nowhere/missing.json"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("missing.json"), "{err}");
}

#[test]
fn empty_txlist_is_usage_error_2() {
    let dir = tempfile::tempdir().unwrap();
    let list = dir.path().join("empty.txt");
    std::fs::write(&list, "# nothing here\n").unwrap();
    let out = txlens(
        &[
            "infer",
            "0x0202020202020202020202020202020202020202",
            list.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2), "{out:?}");
}

#[test]
fn translate_is_deterministic_and_counts_lines() {
    let sb = sandbox();
    let out_path1 = sb.dir.path().join("facts1.txt");
    let out_path2 = sb.dir.path().join("facts2.txt");
    let fixture = sb.corpus.fixtures[0].to_str().unwrap().to_string();
    for path in [&out_path1, &out_path2] {
        let out = txlens(
            &["translate", &fixture, "--out", path.to_str().unwrap()],
            sb.dir.path(),
        );
        assert!(out.status.success());
    }
    let a = std::fs::read(&out_path1).unwrap();
    let b = std::fs::read(&out_path2).unwrap();
    assert_eq!(a, b, "byte-identical on repeat runs");

    let text = String::from_utf8(a).unwrap();
    let (meta, trace) = txlens_core::ingest::load_fixture(&sb.corpus.fixtures[0]).unwrap();
    let _ = meta;
    let fact_lines = text.lines().filter(|l| !l.starts_with('#')).count();
    assert_eq!(fact_lines, trace.entries.len());
    assert_eq!(text.lines().filter(|l| l.starts_with('#')).count(), 4);
}

#[test]
fn extract_empty_sources_and_nonmatching_sink() {
    let sb = sandbox();
    let fixture = sb.corpus.fixtures[0].to_str().unwrap().to_string();
    // No sources: no facts.
    let out = txlens(&["extract", &fixture], sb.dir.path());
    assert!(out.status.success());
    assert!(stdout(&out).is_empty());

    // Root calldata source: the vault stores tainted amounts.
    let out = txlens(
        &["extract", &fixture, "--source", "calldata:root:4:32"],
        sb.dir.path(),
    );
    assert!(out.status.success());
    let lines = stdout(&out);
    assert!(!lines.is_empty());
    for line in lines.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v.get("sink_opcode").is_some());
        assert!(v.get("value_hex").is_some());
    }

    // A sink filter that matches nothing.
    let out = txlens(
        &[
            "extract",
            &fixture,
            "--source",
            "calldata:root:4:32",
            "--sink",
            "selfdestruct",
        ],
        sb.dir.path(),
    );
    assert!(out.status.success());
    assert!(stdout(&out).is_empty());
}

#[test]
fn malformed_source_spec_is_usage_error() {
    let sb = sandbox();
    let fixture = sb.corpus.fixtures[0].to_str().unwrap().to_string();
    let out = txlens(
        &["extract", &fixture, "--source", "calldata:bogus"],
        sb.dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn offline_infer_then_check_end_to_end() {
    let sb = sandbox();
    let store = sb.dir.path().join("invariants.json");
    let report = sb.dir.path().join("report.json");

    let out = txlens(
        &[
            "infer",
            &format!("{:?}", sb.corpus.vault),
            sb.corpus.txlist.to_str().unwrap(),
            "--out",
            store.to_str().unwrap(),
            "--config-dir",
            sb.corpus.config_dir.to_str().unwrap(),
            "--jobs",
            "2",
        ],
        sb.dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let text = stdout(&out);
    assert!(text.contains("PriceRatioRange"), "{text}");
    assert!(text.contains("not applicable"), "{text}");

    // The store holds a GasStartUpperBound with the max training gas.
    let stored: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&store).unwrap()).unwrap();
    let gas = stored
        .as_array()
        .unwrap()
        .iter()
        .find(|i| i["template_id"] == "GasStartUpperBound")
        .expect("gas bound in store");
    assert_eq!(gas["parameters"]["upper_bound"], "0xdac0"); // 56000

    let out = txlens(
        &[
            "check",
            store.to_str().unwrap(),
            sb.corpus.checklist.to_str().unwrap(),
            "--out",
            report.to_str().unwrap(),
            "--config-dir",
            sb.corpus.config_dir.to_str().unwrap(),
        ],
        sb.dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{out:?}");

    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(report["txs_checked"], 4);
    // The exploit violates the gas bound with its gas value as witness.
    let per = report["per_invariant"].as_array().unwrap();
    let gas_report = per
        .iter()
        .find(|i| i["template_id"] == "GasStartUpperBound")
        .unwrap();
    let violations = gas_report["violations"].as_array().unwrap();
    assert!(
        violations
            .iter()
            .any(|v| v["witness"] == "150000"),
        "{gas_report}"
    );
}

#[test]
fn check_with_empty_store_reports_and_exits_0() {
    let sb = sandbox();
    let store = sb.dir.path().join("empty.json");
    std::fs::write(&store, "[]").unwrap();
    let out = txlens(
        &[
            "check",
            store.to_str().unwrap(),
            sb.corpus.checklist.to_str().unwrap(),
            "--config-dir",
            sb.corpus.config_dir.to_str().unwrap(),
        ],
        sb.dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["invariants_inferred"], 0);
    assert_eq!(report["violations"], 0);
}
