mod common;

use std::process::Command;

fn cli(dir: &std::path::Path) -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_modechoice"));
    let config = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../config/example.toml");
    cmd.arg("--config").arg(config).arg("--out").arg(dir.join("out"));
    cmd.env_remove("LLM_API_KEY");
    cmd
}

#[test]
fn dump_prompt_prints_the_full_prompt() {
    let dir = tempfile::tempdir().unwrap();
    let out = cli(dir.path()).args(["dump-prompt", "--index", "0"]).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("Your task is to predict"));
    assert!(text.contains("{Travel time: {Train: "));
    assert!(text.trim_end().ends_with("Reason: <your reasons>"));
}

#[test]
fn live_backend_without_cap_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let out = cli(dir.path()).args(["--backend", "http_chat", "predict-llm"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("max-samples"));

    let out = cli(dir.path())
        .args(["--backend", "http_chat", "--max-samples", "3", "predict-llm"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("LLM_API_KEY"));
}

#[test]
fn run_writes_report_and_models() {
    let dir = tempfile::tempdir().unwrap();
    let out = cli(dir.path()).args(["--max-samples", "40", "--seed", "3", "run"]).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.starts_with("Models"));
    for model in ["LLM", "MNL", "RF", "NN"] {
        assert!(stdout.contains(&format!("\n{model} ")), "{model} row missing");
    }
    for f in ["report/summary.json", "report/summary.txt", "report/cases.jsonl", "models/MNL.json", "models/RF.json", "models/NN.json"] {
        assert!(dir.path().join("out").join(f).exists(), "{f} missing");
    }

    let out = cli(dir.path())
        .args(["--max-samples", "40", "--seed", "3", "fit-bench", "--load-models"])
        .arg(dir.path().join("out/models"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8(out.stdout).unwrap().contains("MNL  accuracy"));
}
