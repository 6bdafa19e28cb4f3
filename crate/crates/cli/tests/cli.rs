use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use serde_json::Value;

fn hitl() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_hitl"));
    c.env_remove("HITL_PORT").env_remove("HITL_LOG");
    c
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn with_stdin(mut cmd: Command, input: &str) -> Output {
    let mut child = cmd
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(input.as_bytes()).unwrap();
    child.wait_with_output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn jsonl(path: &Path) -> Vec<Value> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn stats_kw_prints_h_df_p() {
    let mut cmd = hitl();
    cmd.args(["stats", "kw"]);
    let out = with_stdin(cmd, "1 2 3\n4 5 6\n");
    assert!(out.status.success());
    assert_eq!(stdout(&out), "H=3.8571 df=1 p=0.0495\n");
}

#[test]
fn stats_sw_reads_one_sample() {
    let mut cmd = hitl();
    cmd.args(["stats", "sw"]);
    let input: String = (1..=20).map(|i| format!("{i}\n")).collect();
    let out = with_stdin(cmd, &input);
    assert!(out.status.success());
    assert_eq!(stdout(&out), "W=0.9604 p=0.5514\n");
}

#[test]
fn stats_rejects_bad_input_with_validation_exit() {
    let mut cmd = hitl();
    cmd.args(["stats", "kw"]);
    let out = with_stdin(cmd, "1 2 x\n4 5\n");
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not a number"));

    let mut cmd = hitl();
    cmd.args(["stats", "kw"]);
    assert_eq!(with_stdin(cmd, "1 2 3\n").status.code(), Some(1));
}

/// Routed set computed straight from the fixture: median confidence below
/// tau, or no strict majority.
fn expected_routed(tau: f64) -> Vec<String> {
    let mut by_pair: BTreeMap<String, (Vec<f64>, i32)> = BTreeMap::new();
    for v in jsonl(&fixture("model_grid_verdicts.jsonl")) {
        let e = by_pair.entry(v["pair_id"].as_str().unwrap().to_string()).or_default();
        e.0.push(v["confidence"].as_f64().unwrap());
        e.1 += if v["decision"] == "match" { 1 } else { -1 };
    }
    by_pair
        .into_iter()
        .filter(|(_, (conf, votes))| {
            let mut c = conf.clone();
            c.sort_by(f64::total_cmp);
            let n = c.len();
            let median = if n % 2 == 1 { c[n / 2] } else { (c[n / 2 - 1] + c[n / 2]) / 2.0 };
            median < tau || *votes == 0
        })
        .map(|(id, _)| id)
        .collect()
}

#[test]
fn triage_routes_the_uncertain_pairs_of_the_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("triage.jsonl");
    let routed_manifest = dir.path().join("routed.jsonl");
    let status = hitl()
        .arg("triage")
        .arg("--manifest")
        .arg(fixture("model_grid_manifest.jsonl"))
        .arg("--verdicts")
        .arg(fixture("model_grid_verdicts.jsonl"))
        .args(["--policy", "uncertain_all", "--tau", "0.5", "--out"])
        .arg(&out)
        .arg("--routed-manifest")
        .arg(&routed_manifest)
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));

    let records = jsonl(&out);
    assert_eq!(records.len(), 80);
    let mut routed: Vec<String> = records
        .iter()
        .filter(|r| r["routed"] == true)
        .map(|r| r["pair_id"].as_str().unwrap().to_string())
        .collect();
    routed.sort();
    let expected = expected_routed(0.5);
    assert!(!expected.is_empty() && expected.len() < 80);
    assert_eq!(routed, expected);

    let mut manifest_ids: Vec<String> = jsonl(&routed_manifest)
        .iter()
        .map(|p| p["pair_id"].as_str().unwrap().to_string())
        .collect();
    manifest_ids.sort();
    assert_eq!(manifest_ids, expected);
}

#[test]
fn triage_policy_variants_and_balancing() {
    let dir = tempfile::tempdir().unwrap();
    let run = |extra: &[&str]| {
        let out = dir.path().join("t.jsonl");
        let o = hitl()
            .arg("triage")
            .arg("--manifest")
            .arg(fixture("model_grid_manifest.jsonl"))
            .arg("--verdicts")
            .arg(fixture("model_grid_verdicts.jsonl"))
            .arg("--out")
            .arg(&out)
            .args(extra)
            .output()
            .unwrap();
        (o.status.code(), jsonl(&out))
    };
    let (code, all_neg) = run(&["--policy", "all_negatives"]);
    assert_eq!(code, Some(0));
    for r in &all_neg {
        assert_eq!(r["routed"] == true, r["ensemble_decision"] != "match");
    }
    let (code, balanced) = run(&["--policy", "uncertain_positives:0.6", "--balance", "--seed", "3"]);
    assert_eq!(code, Some(0));
    assert_eq!(balanced.len(), 80, "equal strata balance to the identity");
}

#[test]
fn triage_reports_errors_with_exit_codes() {
    let o = hitl().args(["triage", "--no-such-flag"]).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(!o.stderr.is_empty());

    let o = hitl()
        .args(["triage", "--manifest", "missing.jsonl", "--verdicts", "missing.jsonl", "--out", "x"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let o = hitl()
        .arg("triage")
        .arg("--manifest")
        .arg(fixture("model_grid_manifest.jsonl"))
        .arg("--verdicts")
        .arg(fixture("model_grid_verdicts.jsonl"))
        .args(["--tau", "1.5", "--out"])
        .arg(dir.path().join("t"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
}

fn write_workers(dir: &Path, races: &[&str]) -> PathBuf {
    let path = dir.join("workers.jsonl");
    let body: String = races
        .iter()
        .enumerate()
        .map(|(i, r)| format!("{{\"worker_id\":\"w{i}\",\"self_identified_race\":\"{r}\"}}\n"))
        .collect();
    std::fs::write(&path, body).unwrap();
    path
}

#[test]
fn assign_same_race_only_uses_the_workers_race() {
    let dir = tempfile::tempdir().unwrap();
    let workers = write_workers(dir.path(), &["Asian", "Black", "white", "South Asian"]);
    let out = dir.path().join("assignments.jsonl");
    let o = hitl()
        .arg("assign")
        .arg("--manifest")
        .arg(fixture("model_grid_manifest.jsonl"))
        .arg("--workers")
        .arg(&workers)
        .args(["--policy", "same_race", "--quota", "8", "--gold-count", "2", "--seed", "5", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let races: BTreeMap<String, String> = jsonl(&fixture("model_grid_manifest.jsonl"))
        .into_iter()
        .map(|p| (p["pair_id"].as_str().unwrap().to_string(), p["race"].as_str().unwrap().to_string()))
        .collect();
    let expected = ["Asian", "African", "Caucasian", "Indian"];
    let assignments = jsonl(&out);
    assert_eq!(assignments.len(), 4);
    for (a, race) in assignments.iter().zip(expected) {
        let ids = a["pair_ids"].as_array().unwrap();
        assert_eq!(ids.len(), 10);
        assert_eq!(a["gold_pair_ids"].as_array().unwrap().len(), 2);
        for id in ids {
            assert_eq!(races[id.as_str().unwrap()], race);
        }
    }
}

#[test]
fn assign_control_is_balanced_and_unmapped_same_race_fails() {
    let dir = tempfile::tempdir().unwrap();
    let workers = write_workers(dir.path(), &["Asian", "Martian"]);
    let out = dir.path().join("a.jsonl");
    let run = |policy: &str| {
        hitl()
            .arg("assign")
            .arg("--manifest")
            .arg(fixture("model_grid_manifest.jsonl"))
            .arg("--workers")
            .arg(&workers)
            .args(["--policy", policy, "--quota", "8", "--out"])
            .arg(&out)
            .output()
            .unwrap()
    };
    let o = run("balanced_across_races");
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let races: BTreeMap<String, String> = jsonl(&fixture("model_grid_manifest.jsonl"))
        .into_iter()
        .map(|p| (p["pair_id"].as_str().unwrap().to_string(), p["race"].as_str().unwrap().to_string()))
        .collect();
    for a in jsonl(&out) {
        let gold: Vec<&Value> = a["gold_pair_ids"].as_array().unwrap().iter().collect();
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for id in a["pair_ids"].as_array().unwrap() {
            if !gold.contains(&id) {
                *counts.entry(races[id.as_str().unwrap()].as_str()).or_default() += 1;
            }
        }
        assert_eq!(counts.values().copied().collect::<Vec<_>>(), [2, 2, 2, 2]);
    }
    let o = run("same_race");
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no canonical race"));
}

const SMALL_SIM: &str = "\
# quick run
workers_per_race = 10
n_runs = 6
pairs_per_race = 200
seed = 99
";

#[test]
fn simulate_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("default.cfg");
    std::fs::write(&config, SMALL_SIM).unwrap();
    let run = |tag: &str, serial: bool| {
        let out = dir.path().join(format!("{tag}.txt"));
        let log = dir.path().join(format!("{tag}.jsonl"));
        let mut cmd = hitl();
        cmd.arg("simulate")
            .arg("--config")
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .arg("--run-log")
            .arg(&log);
        if serial {
            cmd.arg("--serial");
        }
        let o = cmd.output().unwrap();
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        (std::fs::read(out).unwrap(), std::fs::read(log).unwrap())
    };
    let a = run("a", false);
    let b = run("b", false);
    let c = run("c", true);
    assert_eq!(a, b);
    assert_eq!(a, c);
    let text = String::from_utf8(a.0).unwrap();
    assert!(text.contains("# summary (6 runs)"));
    assert_eq!(String::from_utf8(a.1).unwrap().lines().count(), 6);
}

#[test]
fn simulate_rejects_bad_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.cfg");
    std::fs::write(&config, "own_race_accuracy = 2\n").unwrap();
    let o = hitl()
        .arg("simulate")
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(dir.path().join("o"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    let o = hitl()
        .args(["simulate", "--config", "nope.cfg", "--out", "o"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

fn experiment_file(dir: &Path) -> PathBuf {
    let manifest = dir.join("pool.jsonl");
    hitl_core::simlab::synthetic_manifest(&hitl_core::LabelSet::default(), 60)
        .save(&manifest)
        .unwrap();
    let cfg = dir.join("experiment.cfg");
    std::fs::write(
        &cfg,
        format!(
            "experiment_id = exp-cli\nmanifest = {}\nstate_dir = {}\nquota = 8\ngold_count = 0\nseed = 3\n",
            manifest.display(),
            dir.join("state").display()
        ),
    )
    .unwrap();
    cfg
}

#[test]
fn report_rebuilds_from_the_event_log() {
    use hitl_core::gateway::{ExperimentConfig, Gateway, SystemClock, EVENTS_FILE};
    let dir = tempfile::tempdir().unwrap();
    let config = ExperimentConfig::load(&experiment_file(dir.path())).unwrap();
    let g = Gateway::open(config.clone(), std::sync::Arc::new(SystemClock)).unwrap();
    g.open_experiment().unwrap();
    let manifest = hitl_core::corpus::load_manifest(&config.manifest, &config.labels).unwrap();
    for race in ["African", "Asian", "Caucasian", "Indian"] {
        for k in 0..2 {
            let w = g.register_worker(race, false).unwrap();
            let claim = g.claim_assignment(&w.worker_id, "exp-cli").unwrap();
            for (i, id) in claim.assignment.pair_ids.iter().enumerate() {
                let truth = manifest.get(id).unwrap().truth;
                let decision = if (i + k) % 3 == 0 { truth.flipped() } else { truth };
                g.submit_verdict(&w.worker_id, id, decision, 500).unwrap();
            }
        }
    }
    let expected = g.fetch_report("exp-cli").unwrap().to_text();
    drop(g);

    let log = config.state_dir.join(EVENTS_FILE);
    let o = hitl().arg("report").arg("--log").arg(&log).output().unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o), expected);

    let o = hitl()
        .arg("report")
        .arg("--log")
        .arg(&log)
        .args(["--format", "json"])
        .output()
        .unwrap();
    let json: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(json["cells"].as_array().unwrap().len(), 8);

    let o = hitl().args(["report", "--log", "absent.jsonl"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

fn http_get(addr: &str, path: &str) -> String {
    let mut stream = std::net::TcpStream::connect(addr).unwrap();
    write!(stream, "GET {path} HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\n\r\n").unwrap();
    let mut response = String::new();
    stream.read_to_string(&mut response).unwrap();
    response
}

#[test]
fn serve_listens_on_the_port_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = experiment_file(dir.path());
    let port = std::net::TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port();
    let mut child = hitl()
        .arg("serve")
        .arg("--experiment")
        .arg(&cfg)
        .env("HITL_PORT", port.to_string())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut banner = String::new();
    BufReader::new(child.stderr.take().unwrap())
        .read_line(&mut banner)
        .unwrap();
    assert!(banner.contains(&format!("127.0.0.1:{port}")), "{banner}");

    let addr = format!("127.0.0.1:{port}");
    let progress = http_get(&addr, "/api/experiments/exp-cli");
    assert!(progress.starts_with("HTTP/1.1 200"), "{progress}");
    assert!(progress.contains("\"status\":\"open\""));
    let pair = http_get(&addr, "/api/pairs/asian-00001");
    assert!(pair.contains("\"image_a\""));
    assert!(!pair.contains("truth") && !pair.contains("race"));
    child.kill().unwrap();
    child.wait().unwrap();
}
