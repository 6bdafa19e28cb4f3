use std::io::Read;
use std::path::Path;
use std::sync::Arc;

use hitl_core::assignment::{self, BuildParams, RaceCodingTable, WorkerProfile};
use hitl_core::corpus::{self, LabelSet, PairManifest};
use hitl_core::gateway::{self, http, ExperimentConfig, Gateway, Status, SystemClock};
use hitl_core::simlab::{self, Execution, SimConfig};
use hitl_core::{records, stats, triage, AssignmentPolicy, RoutingPolicy};
use serde::Deserialize;

use crate::error::CliError;
use crate::{AssignArgs, ReportArgs, ReportFormat, ServeArgs, SimulateArgs, TriageArgs};

fn labels(given: Option<Vec<String>>) -> Result<LabelSet, CliError> {
    match given {
        Some(l) => Ok(LabelSet::new(l)?),
        None => Ok(LabelSet::default()),
    }
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn triage(a: TriageArgs) -> Result<(), CliError> {
    let labels = labels(a.labels)?;
    let policy = match a.tau {
        Some(tau) => RoutingPolicy::from_parts(&a.policy, Some(tau))?,
        None => a.policy.parse::<RoutingPolicy>()?,
    };
    let mut manifest = corpus::load_manifest(&a.manifest, &labels)?;
    if a.balance {
        manifest = corpus::balance_strata(&manifest, a.seed)?;
    }
    let index = manifest.index();
    let mut verdicts = triage::load_verdict_log(&a.verdicts)?;
    if a.balance {
        verdicts.retain(|v| index.contains_key(v.pair_id.as_str()));
    } else if let Some(v) = verdicts.iter().find(|v| !index.contains_key(v.pair_id.as_str())) {
        return Err(triage::TriageError::UnknownPair(v.pair_id.clone()).into());
    }
    let scores = triage::score_all(&verdicts)?;
    let outcome = triage::route(&scores, &policy)?;
    write(&a.out, &records::encode_all(triage::triage_records(&scores, &outcome)))?;
    if let Some(path) = &a.routed_manifest {
        let routed: Vec<_> = outcome
            .routed
            .iter()
            .map(|id| index[id.as_str()].clone())
            .collect();
        let routed = PairManifest::from_pairs(routed, labels.clone(), "routed")?;
        write(path, &routed.to_jsonl())?;
    }
    println!(
        "policy={policy} pairs={} auto_finalized={} routed={}",
        scores.len(),
        outcome.auto_finalized.len(),
        outcome.routed.len()
    );
    Ok(())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct WorkerRecord {
    worker_id: String,
    self_identified_race: String,
    #[serde(default)]
    prior_experience: bool,
}

pub fn assign(a: AssignArgs) -> Result<(), CliError> {
    let labels = labels(a.labels)?;
    let policy: AssignmentPolicy = a.policy.parse().map_err(CliError::Validation)?;
    let manifest = corpus::load_manifest(&a.manifest, &labels)?;
    let coding = match &a.coding_table {
        Some(path) => RaceCodingTable::load(path, &labels)?,
        None => RaceCodingTable::default(),
    };
    let mut registry = assignment::WorkerRegistry::new();
    for (line, text) in records::read_lines(&a.workers).map_err(|e| CliError::io(&a.workers, e))? {
        let r: WorkerRecord = records::decode(line, &text).map_err(|e| CliError::Validation(e.to_string()))?;
        registry.register(WorkerProfile {
            coded_race: assignment::code_race(&r.self_identified_race, &coding),
            worker_id: r.worker_id,
            self_identified_race: r.self_identified_race,
            prior_experience: r.prior_experience,
            condition: policy.condition(),
        })?;
    }
    let reserve = assignment::reserve_gold(&manifest, a.gold_count, a.seed)?;
    let params = BuildParams::new(a.quota, a.seed);
    let workers = registry.workers();
    let built = match policy {
        AssignmentPolicy::SameRace => assignment::build_same_race_assignments(workers, &reserve.routed, &params)?,
        AssignmentPolicy::BalancedAcrossRaces => {
            assignment::build_control_assignments(workers, &reserve.routed, &params)?
        }
    };
    let mut out = Vec::with_capacity(built.len());
    for (worker, base) in workers.iter().zip(built) {
        let gold = reserve.pool_for(worker);
        out.push(assignment::inject_gold(&base, &worker.coded_race, &gold, a.gold_count, a.seed)?);
    }
    write(&a.out, &assignment::assignments_to_jsonl(&out))?;
    println!("policy={policy} workers={} quota={} gold={}", out.len(), a.quota, a.gold_count);
    Ok(())
}

pub fn simulate(a: SimulateArgs) -> Result<(), CliError> {
    let config = SimConfig::from_key_values(&hitl_core::config::KeyValues::load(&a.config)?)?;
    let labels = LabelSet::default();
    let manifest = match &config.manifest {
        Some(path) => corpus::load_manifest(path, &labels)?,
        None => simlab::synthetic_manifest(&labels, config.pairs_per_race),
    };
    let execution = if a.serial { Execution::Serial } else { Execution::Parallel };
    let summary = simlab::monte_carlo_with(&config, &manifest, execution)?;
    write(&a.out, &summary.to_text())?;
    if let Some(path) = &a.run_log {
        write(path, &summary.run_log())?;
    }
    for r in &summary.races {
        println!(
            "{}\tip_beats_control={:.4}\tmean_diff={:+.4}",
            r.race, r.ip_beats_control, r.mean_difference
        );
    }
    Ok(())
}

pub fn report(a: ReportArgs) -> Result<(), CliError> {
    if !a.log.exists() {
        return Err(CliError::Io(format!("{}: no such file", a.log.display())));
    }
    let state = gateway::read_log(&a.log)?;
    let fingerprint = state
        .fingerprint
        .clone()
        .ok_or_else(|| CliError::Validation("log has no experiment_created event".into()))?;
    let labels = LabelSet::new(fingerprint.labels.clone())?;
    let manifest_path = a.manifest.unwrap_or_else(|| fingerprint.manifest.clone().into());
    let manifest = corpus::load_manifest(&manifest_path, &labels)?;
    let report = gateway::report_from_state(&state, &manifest)?;
    match a.format {
        ReportFormat::Text => print!("{}", report.to_text()),
        ReportFormat::Json => println!("{}", serde_json::to_string_pretty(&report).expect("report serializes")),
    }
    Ok(())
}

pub fn serve(a: ServeArgs) -> Result<(), CliError> {
    let config = ExperimentConfig::load(&a.experiment)?;
    let gateway = Gateway::open(config, Arc::new(SystemClock))?;
    if gateway.status() == Status::Draft {
        gateway.open_experiment()?;
    }
    let gateway = Arc::new(gateway);
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let addr = format!("{}:{}", a.bind, a.port);
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .map_err(|e| CliError::Io(format!("bind {addr}: {e}")))?;
        eprintln!(
            "hitl: serving experiment {} on http://{}",
            gateway.experiment_id(),
            listener.local_addr()?
        );
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        http::serve(listener, gateway, shutdown).await?;
        Ok(())
    })
}

fn parse_numbers(line: &str) -> Result<Vec<f64>, CliError> {
    line.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| CliError::Validation(format!("not a number: {t:?}")))
        })
        .collect()
}

fn stdin_text() -> Result<String, CliError> {
    let mut text = String::new();
    std::io::stdin().read_to_string(&mut text)?;
    Ok(text)
}

pub fn stats_kw() -> Result<(), CliError> {
    let groups = stdin_text()?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(parse_numbers)
        .collect::<Result<Vec<_>, _>>()?;
    let r = stats::kruskal_wallis(&groups)?;
    println!("H={:.4} df={} p={:.4}", r.h, r.df, r.p_value);
    Ok(())
}

pub fn stats_sw() -> Result<(), CliError> {
    let sample = parse_numbers(&stdin_text()?)?;
    let r = stats::shapiro_wilk(&sample)?;
    println!("W={:.4} p={:.4}", r.w, r.p_value);
    Ok(())
}
