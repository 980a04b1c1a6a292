use std::process::Command;
use std::time::Duration;

use interop_core::scenario::{run_scenario, Attack, Environment, ScenarioSpec, STL_NETWORK, SWT_NETWORK};

fn spec(attack: Attack) -> ScenarioSpec {
    ScenarioSpec { attack, deadline: Duration::from_secs(2), ..ScenarioSpec::default() }
}

fn scenario() -> Command {
    Command::new(env!("CARGO_BIN_EXE_scenario"))
}

#[test]
fn setup_commits_seven_transactions() {
    let env = Environment::setup(ScenarioSpec::default()).unwrap();
    assert_eq!(env.setup_commits(), 7);
    assert!(env.stl().replicas_consistent() && env.swt().replicas_consistent());
    let commits = env.transcript().events.iter().filter(|e| e.verdict == "committed").count();
    assert_eq!(commits, 7);
}

#[test]
fn happy_path_adds_three_blocks_to_swt() {
    let mut env = Environment::setup(spec(Attack::None)).unwrap();
    let (stl_before, swt_before) = (env.stl().height(), env.swt().height());
    let transcript = env.run().unwrap();
    assert!(transcript.expected_reached);
    // IssueLC, UploadDispatchDocs and RequestPayment.
    assert_eq!(env.swt().height(), swt_before + 3);
    assert_eq!(env.stl().height(), stl_before + 2);
    assert_eq!(transcript.find("10", "compare-bill")[0].verdict, "identical");
    let summary = transcript.events.last().unwrap();
    assert_eq!(summary.detail["swt_height_delta"], "3");
    assert_eq!(summary.verdict, "expected");
}

#[test]
fn every_attack_reaches_its_verdicts() {
    for attack in Attack::ALL {
        let report = run_scenario(spec(attack)).unwrap();
        assert!(report.transcript.expected_reached, "{}", attack.as_str());
        assert!(report.stl_dump.ends_with("verify_chain true\n"));
        assert!(report.swt_dump.ends_with("verify_chain true\n"));
    }
}

#[test]
fn attack_transcripts_name_the_rejection() {
    let replay = run_scenario(spec(Attack::Replay)).unwrap().transcript;
    let checks = replay.find("10", "validate-proof");
    assert_eq!(checks.len(), 4);
    assert!(checks.iter().all(|e| e.verdict == "nonce-replayed"));
    assert_eq!(replay.find("9", "remote-query")[1].verdict, "digest-mismatch");

    let denied = run_scenario(spec(Attack::Unauthorized)).unwrap().transcript;
    assert_eq!(denied.find("9", "remote-query")[0].verdict, "denied:access");
    let access = denied.find("9", "check-access");
    assert_eq!(access.len(), 2);
    assert!(access.iter().all(|e| e.verdict.starts_with("check_access=deny")));

    let censor = run_scenario(spec(Attack::Censor)).unwrap().transcript;
    let queries = censor.find("9", "remote-query");
    let verdicts: Vec<_> = queries.iter().map(|e| e.verdict.as_str()).collect();
    assert_eq!(verdicts, ["error:timeout", "error:timeout", "ok"]);
}

#[test]
fn same_seed_same_everything() {
    let a = run_scenario(ScenarioSpec::default()).unwrap();
    let b = run_scenario(ScenarioSpec::default()).unwrap();
    assert_eq!(a.transcript, b.transcript);
    assert_eq!(a.transcript.to_jsonl(), b.transcript.to_jsonl());
    assert_eq!((a.stl_dump, a.swt_dump), (b.stl_dump, b.swt_dump));
    let c = run_scenario(ScenarioSpec { seed: 2, ..ScenarioSpec::default() }).unwrap();
    assert_ne!(a.transcript.to_jsonl(), c.transcript.to_jsonl());
}

#[test]
fn inspect_reports_both_networks() {
    let mut env = Environment::setup(spec(Attack::None)).unwrap();
    env.run().unwrap();
    let stl = env.inspect(STL_NETWORK).unwrap();
    assert!(stl.starts_with(&format!("network {STL_NETWORK} peer ")));
    assert!(env.inspect(SWT_NETWORK).unwrap().ends_with("verify_chain true\n"));
    assert!(env.inspect("nowhere").is_err());
}

#[test]
fn cli_exit_codes() {
    let run = scenario().args(["run", "--seed", "1"]).output().unwrap();
    assert!(run.status.success());
    let lines: Vec<serde_json::Value> = String::from_utf8(run.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.last().unwrap()["verdict"], "expected");
    assert!(lines.iter().enumerate().all(|(i, l)| l["seq"] == i));

    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t.jsonl");
    let tamper = scenario().args(["run", "--attack", "tamper", "--deadline-ms", "2000", "--transcript"]).arg(&out).output().unwrap();
    assert!(tamper.status.success());
    assert!(tamper.stdout.is_empty());
    assert!(std::fs::read_to_string(&out).unwrap().contains("proof-tamper"));

    let inspect = scenario().args(["inspect", "we-trade"]).output().unwrap();
    assert!(inspect.status.success());
    assert!(String::from_utf8(inspect.stdout).unwrap().ends_with("verify_chain true\n"));

    assert_eq!(scenario().arg("setup").output().unwrap().status.code(), Some(0));
    assert_eq!(scenario().args(["inspect", "nowhere"]).output().unwrap().status.code(), Some(2));
    assert!(!scenario().args(["run", "--attack", "bogus"]).output().unwrap().status.success());
}

#[test]
fn relays_as_processes() {
    let relay = std::path::PathBuf::from(env!("CARGO_BIN_EXE_relay"));
    let spec = ScenarioSpec { relay_binary: Some(relay.clone()), ..spec(Attack::None) };
    let multi = run_scenario(spec).unwrap();
    assert!(multi.transcript.expected_reached);
    let single = run_scenario(ScenarioSpec::default()).unwrap();
    assert_eq!(multi.swt_dump, single.swt_dump);

    let cli = scenario()
        .args(["run", "--multiprocess", "--attack", "censor", "--deadline-ms", "1500", "--relay-bin"])
        .arg(&relay)
        .output()
        .unwrap();
    assert!(cli.status.success(), "{}", String::from_utf8_lossy(&cli.stderr));
}
