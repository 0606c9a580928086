//! End-to-end tests of the `sta` binary: exit codes, byte-exact artifacts on
//! stdout, and the run/replay identity.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn sta(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sta"))
        .args(args)
        .output()
        .expect("binary runs")
}

const DEFINES: &[&str] = &[
    "--define", "T=3",
    "--define", "N=2",
    "--define", "R=2",
    "--define", "S=3",
    "--define", "L=2",
];

fn with_defines(mut args: Vec<&str>) -> Vec<&str> {
    args.extend_from_slice(DEFINES);
    args
}

#[test]
fn check_accepts_the_example_program() {
    let file = fixture("refine_answer.sta");
    let out = sta(&with_defines(vec!["check", file.to_str().unwrap()]));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("3 prompt(s)"));
    assert!(stdout.contains("entry `initial`"));
}

#[test]
fn check_reports_unbound_macro_with_nonzero_exit() {
    let file = fixture("refine_answer.sta");
    // L is missing.
    let out = sta(&[
        "check", file.to_str().unwrap(),
        "--define", "T=3",
        "--define", "N=2",
        "--define", "R=2",
        "--define", "S=3",
    ]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("macro {L}"), "{stderr}");
    assert!(out.stdout.is_empty());
}

#[test]
fn check_reports_unknown_branch_target() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("bad.sta");
    std::fs::write(
        &file,
        "entry(p): x\nprompt(p): y\n> a(text): t\n__next(missing):\n",
    )
    .unwrap();
    let out = sta(&["check", file.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("unknown prompt `missing`"), "{stderr}");
}

#[test]
fn render_reproduces_the_reference_header_bytes() {
    let file = fixture("refine_answer.sta");
    let out = sta(&with_defines(vec![
        "render",
        file.to_str().unwrap(),
        "--prompt",
        "edit",
    ]));
    assert!(out.status.success());
    let expected = std::fs::read(fixture("gpt35_edit_header.txt")).unwrap();
    assert_eq!(out.stdout, expected, "stdout differs from reference header");
}

#[test]
fn render_initial_prompt_lists_ponder_mechanics() {
    let file = fixture("refine_answer.sta");
    let out = sta(&with_defines(vec![
        "render",
        file.to_str().unwrap(),
        "--prompt",
        "initial",
    ]));
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("\n> ponder[3](thought): you think about an answer\n"));
    assert!(stdout.contains("\nformulate your initial answer\n"));
}

#[test]
fn render_defaults_to_the_single_prompt() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("one.sta");
    std::fs::write(&file, "entry(p): x\nprompt(p): y\n> a(text): t\n__exit(a):\n").unwrap();
    let out = sta(&["render", file.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(String::from_utf8(out.stdout).unwrap().contains("> a(text): t"));
    // With several prompts the name is required.
    let multi = fixture("refine_answer.sta");
    let out = sta(&with_defines(vec!["render", multi.to_str().unwrap()]));
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn graph_exports_the_control_flow_edges() {
    let file = fixture("refine_answer.sta");
    let out = sta(&with_defines(vec!["graph", file.to_str().unwrap()]));
    assert!(out.status.success());
    let dot = String::from_utf8(out.stdout).unwrap();
    assert!(dot.contains("\"cfg_initial\" -> \"cfg_edit\""));
    assert!(dot.contains("\"cfg_edit\" -> \"cfg_edit\""));
    assert!(dot.contains("\"cfg_edit\" -> \"cfg_submit\""));
    assert!(dot.contains("subgraph cluster_pda_edit"));
    assert!(dot.contains("style=dotted"));
    assert!(dot.contains("color=green"));
    assert!(dot.contains("color=red"));
}

#[test]
fn run_produces_answer_json_and_replay_reproduces_it() {
    let dir = tempfile::tempdir().unwrap();
    let trace_path = dir.path().join("out.json");
    let file = fixture("refine_answer.sta");
    let backends = fixture("backends_gpt35.json");
    let out = sta(&with_defines(vec![
        "run",
        file.to_str().unwrap(),
        "--input",
        "question=Explain the different phases of a compiler",
        "--backends",
        backends.to_str().unwrap(),
        "--trace",
        trace_path.to_str().unwrap(),
    ]));
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8(out.stdout.clone()).unwrap();
    let outputs: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    let answer = outputs[0]["answer"][0].as_str().unwrap();
    assert!(answer.contains("A compiler translates source code into executable code"));

    // The trace replays to byte-identical outputs.
    let replay = sta(&[
        "replay",
        file.to_str().unwrap(),
        "--trace",
        trace_path.to_str().unwrap(),
    ]);
    assert!(
        replay.status.success(),
        "{}",
        String::from_utf8_lossy(&replay.stderr)
    );
    assert_eq!(replay.stdout, out.stdout);

    // Trace files carry the schema version and macro bindings.
    let trace_text = std::fs::read_to_string(&trace_path).unwrap();
    let trace: serde_json::Value = serde_json::from_str(&trace_text).unwrap();
    assert_eq!(trace["schema_version"], 1);
    assert_eq!(trace["macros"]["L"], 2);
    assert_eq!(trace["inputs"]["question"], "Explain the different phases of a compiler");
}

#[test]
fn run_without_required_input_exits_two() {
    let file = fixture("refine_answer.sta");
    let backends = fixture("backends_gpt35.json");
    let out = sta(&with_defines(vec![
        "run",
        file.to_str().unwrap(),
        "--backends",
        backends.to_str().unwrap(),
    ]));
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("missing input `question`"), "{stderr}");
}

#[test]
fn failed_run_still_flushes_a_partial_trace() {
    let dir = tempfile::tempdir().unwrap();
    let trace_path = dir.path().join("partial.json");
    let file = fixture("refine_answer.sta");
    // No transcript entries: the first completion fails.
    let backends = dir.path().join("backends.json");
    std::fs::write(
        &backends,
        r#"{"backends":{"m":{"kind":"scripted","spec":{"transcript":[]}}},
            "formats":{"text":{"backend":"m"}}}"#,
    )
    .unwrap();
    let out = sta(&with_defines(vec![
        "run",
        file.to_str().unwrap(),
        "--input",
        "question=q",
        "--backends",
        backends.to_str().unwrap(),
        "--trace",
        trace_path.to_str().unwrap(),
    ]));
    assert_eq!(out.status.code(), Some(2));
    let trace: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&trace_path).unwrap()).unwrap();
    assert_eq!(trace["events"][0]["type"], "prompt-entered");
}

#[test]
fn replay_of_a_tampered_trace_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let trace_path = dir.path().join("out.json");
    let file = fixture("refine_answer.sta");
    let backends = fixture("backends_gpt35.json");
    let out = sta(&with_defines(vec![
        "run",
        file.to_str().unwrap(),
        "--input",
        "question=Explain the different phases of a compiler",
        "--backends",
        backends.to_str().unwrap(),
        "--trace",
        trace_path.to_str().unwrap(),
    ]));
    assert!(out.status.success());
    let text = std::fs::read_to_string(&trace_path).unwrap();
    // Alter only the event copy (events precede stacks in the file), leaving
    // the recorded stacks untouched.
    let tampered = text.replacen("Omit nonessential details.", "Add many more details.", 1);
    assert_ne!(text, tampered);
    std::fs::write(&trace_path, tampered).unwrap();
    let replay = sta(&[
        "replay",
        file.to_str().unwrap(),
        "--trace",
        trace_path.to_str().unwrap(),
    ]);
    assert_eq!(replay.status.code(), Some(2));
    let stderr = String::from_utf8(replay.stderr).unwrap();
    assert!(stderr.contains("replay diverged"), "{stderr}");
}
