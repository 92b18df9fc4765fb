use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use negotiator::domain::{parse_domain, parse_profile};
use negotiator::template::parse;

fn negotiate(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_negotiate"))
        .args(args)
        .current_dir(cwd)
        .env_remove("NEGOTIATOR_OUTPUT")
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

/// Small config: two tiny domains, short sessions, few training steps.
fn small_config(dir: &Path) -> PathBuf {
    let path = dir.join("small.json");
    let spec = |name: &str, seed: u64| {
        serde_json::json!({"generate": {
            "name": name, "value_counts": [3, 4, 3], "opposition": null,
            "reservation": 0.1, "discount": 1.0, "seed": seed
        }})
    };
    let config = serde_json::json!({
        "domains": [spec("small-a", 1), spec("small-b", 2)],
        "agents": ["boulware", "conceder", "hardliner"],
        "opponents": ["boulware", "linear", "hardliner"],
        "eval_sessions": 4,
        "tournament": {"rounds": 30},
        "record": {"sessions": 100, "rounds": 20},
        "sl": {"epochs": 2},
        "training": {"sessions": 5, "rounds": 20},
    });
    std::fs::write(&path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    path
}

#[test]
fn help_lists_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let text = ok(&negotiate(&["tournament", "--help"], dir.path()));
    assert!(text.contains("\"gamma\": 0.3"));
    assert!(text.contains("\"actor_warmup_sessions\": 300"));
    assert!(text.contains("NEGOTIATOR_OUTPUT"));
}

#[test]
fn bad_arguments_exit_with_usage() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        negotiate(&["tournament", "--bogus"], dir.path())
            .status
            .code(),
        Some(2)
    );
    assert_eq!(negotiate(&["teleport"], dir.path()).status.code(), Some(2));
    assert_eq!(
        negotiate(&["tournament", "--set", "agent.ddpg.gama=1"], dir.path())
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn runtime_failure_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = negotiate(
        &["render", "--checkpoint", "missing", "--out", "o"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("checkpoint"));
}

#[test]
fn gen_domain_writes_a_parseable_product_space() {
    let dir = tempfile::tempdir().unwrap();
    ok(&negotiate(
        &[
            "gen-domain",
            "--issues",
            "3",
            "--values",
            "5",
            "--name",
            "g",
            "--out",
            "gen",
        ],
        dir.path(),
    ));
    let domain = std::sync::Arc::new(parse_domain(dir.path().join("gen/g.domain.json")).unwrap());
    assert_eq!(domain.outcome_count(), 125);
    parse_profile(dir.path().join("gen/g.a.json"), domain.clone()).unwrap();
    parse_profile(dir.path().join("gen/g.b.json"), domain).unwrap();
}

#[test]
fn run_writes_a_transcript() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let text = ok(&negotiate(
        &[
            "run",
            "--config",
            config.to_str().unwrap(),
            "--agents",
            "linear",
            "conceder",
            "--out",
            "r",
        ],
        dir.path(),
    ));
    assert!(text.contains("linear vs conceder"));
    let transcript = std::fs::read_to_string(dir.path().join("r/session.csv")).unwrap();
    assert!(transcript.starts_with("t,actor,kind,bid"));
    assert!(dir.path().join("r/outcome.json").exists());
}

#[test]
fn tournament_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let c = config.to_str().unwrap();
    ok(&negotiate(
        &["tournament", "--config", c, "--seed", "7", "--out", "t1"],
        dir.path(),
    ));
    ok(&negotiate(
        &["tournament", "--config", c, "--seed", "7", "--out", "t2"],
        dir.path(),
    ));
    let a = std::fs::read(dir.path().join("t1/sessions.csv")).unwrap();
    let b = std::fs::read(dir.path().join("t2/sessions.csv")).unwrap();
    assert_eq!(a, b);
    // 3 agents, 2 domains, 1 repeat
    assert_eq!(String::from_utf8(a).unwrap().lines().count(), 1 + 12);
    assert!(dir.path().join("t1/metrics.json").exists());
}

#[test]
fn output_root_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_negotiate"))
        .args([
            "gen-domain",
            "--issues",
            "2",
            "--values",
            "2",
            "--name",
            "e",
        ])
        .current_dir(dir.path())
        .env("NEGOTIATOR_OUTPUT", "from-env")
        .status()
        .unwrap();
    assert!(status.success());
    assert!(dir.path().join("from-env/e.domain.json").exists());
}

#[test]
fn training_render_and_eval_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let c = config.to_str().unwrap();

    let sl = ok(&negotiate(
        &["train-sl", "--config", c, "--out", "sl"],
        dir.path(),
    ));
    assert!(sl.contains("threshold"));
    assert!(dir.path().join("sl/traces.jsonl").exists());
    assert!(dir.path().join("sl/checkpoint/agent.json").exists());

    ok(&negotiate(
        &[
            "train-rl",
            "--config",
            c,
            "--checkpoint",
            "sl/checkpoint",
            "--out",
            "rl",
        ],
        dir.path(),
    ));
    assert!(dir.path().join("rl/rl_summary.json").exists());

    let eval = ok(&negotiate(
        &[
            "eval",
            "--config",
            c,
            "--checkpoint",
            "rl/checkpoint",
            "--baselines",
            "--out",
            "ev",
        ],
        dir.path(),
    ));
    assert!(eval.contains("dlst"));
    let rows: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("ev/eval.json")).unwrap())
            .unwrap();
    assert_eq!(rows.as_array().unwrap().len(), 2 * 4);

    let tour = ok(&negotiate(
        &[
            "tournament",
            "--config",
            c,
            "--set",
            "agents=[\"dlst\",\"boulware\"]",
            "--set",
            "checkpoint=\"rl/checkpoint\"",
            "--out",
            "tr",
        ],
        dir.path(),
    ));
    assert!(tour.contains("dlst"));
}

#[test]
fn render_decodes_a_fresh_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let c = config.to_str().unwrap();
    ok(&negotiate(
        &[
            "train-rl",
            "--config",
            c,
            "--set",
            "training.sessions=0",
            "--out",
            "fresh",
        ],
        dir.path(),
    ));
    for exact in [false, true] {
        let mut args = vec![
            "render",
            "--config",
            c,
            "--checkpoint",
            "fresh/checkpoint",
            "--out",
            "fresh",
        ];
        if exact {
            args.push("--exact");
        }
        let text = ok(&negotiate(&args, dir.path()));
        let acceptance: String = text
            .lines()
            .filter(|l| l.contains("accept iff"))
            .map(|l| format!("{l}\n"))
            .collect();
        let bidding: String = text
            .lines()
            .filter(|l| l.contains("bid best of"))
            .map(|l| format!("{l}\n"))
            .collect();
        assert_eq!(
            acceptance.lines().count() + bidding.lines().count(),
            text.lines().count()
        );
        parse(&acceptance).unwrap();
        parse(&bidding).unwrap();
    }
}
