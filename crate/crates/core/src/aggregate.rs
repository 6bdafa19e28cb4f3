//! Worker scoring, gold screening, panel majority votes and the
//! experiment report.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assignment::{Condition, TaskAssignment, WorkerProfile};
use crate::corpus::{GroundTruth, LabelSet, PairIndex, PairManifest, RaceLabel};
use crate::stats::{self, KwResult, SwResult};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AggregateError {
    #[error("submission incomplete, missing {0:?}")]
    IncompleteSubmission(Vec<String>),
    #[error("pair {0:?} is not in the manifest")]
    UnknownPair(String),
    #[error("pair {0:?} is not part of the assignment")]
    PairNotAssigned(String),
    #[error("verdict from worker {found:?} in submission of {expected:?}")]
    ForeignVerdict { expected: String, found: String },
    #[error("two verdicts for pair {0:?}")]
    DuplicateVerdict(String),
    #[error("worker {0:?} voted twice")]
    DuplicateWorker(String),
    #[error("no verdicts to aggregate")]
    EmptyPanel,
    #[error("verdicts refer to more than one pair")]
    MixedPairIds,
    #[error("assignment has no scored pairs")]
    NothingScored,
    #[error("baseline median must be positive")]
    ZeroBaseline,
    #[error("no passing worker in cell ({0}, {1})")]
    EmptyCell(Condition, String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HumanVerdict {
    pub worker_id: String,
    pub pair_id: String,
    pub decision: GroundTruth,
    pub elapsed_ms: u64,
    pub submitted_at: DateTime<Utc>,
}

/// Correct answers over scored (non-gold) pairs for one worker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerScore {
    pub worker_id: String,
    pub race: RaceLabel,
    pub condition: Condition,
    pub n_correct: usize,
    pub n_total: usize,
    pub accuracy: f64,
}

impl WorkerScore {
    pub fn new(
        worker_id: impl Into<String>,
        race: RaceLabel,
        condition: Condition,
        n_correct: usize,
        n_total: usize,
    ) -> Self {
        assert!(n_total > 0 && n_correct <= n_total, "invalid counts {n_correct}/{n_total}");
        WorkerScore {
            worker_id: worker_id.into(),
            race,
            condition,
            n_correct,
            n_total,
            accuracy: n_correct as f64 / n_total as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", content = "failed", rename_all = "snake_case")]
pub enum Screening {
    Pass,
    Fail(Vec<String>),
}

impl Screening {
    pub fn passed(&self) -> bool {
        matches!(self, Screening::Pass)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PanelOutcome {
    Match,
    NonMatch,
    Unresolved,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PanelDecision {
    pub pair_id: String,
    pub decision: PanelOutcome,
    pub votes_match: usize,
    pub votes_nonmatch: usize,
}

/// Decisions keyed by pair id, rejecting foreign and duplicate verdicts.
fn index_verdicts<'a>(
    verdicts: &'a [HumanVerdict],
    assignment: &TaskAssignment,
) -> Result<HashMap<&'a str, &'a HumanVerdict>, AggregateError> {
    let mut by_pair = HashMap::new();
    for v in verdicts {
        if v.worker_id != assignment.worker_id {
            return Err(AggregateError::ForeignVerdict {
                expected: assignment.worker_id.clone(),
                found: v.worker_id.clone(),
            });
        }
        if !assignment.contains(&v.pair_id) {
            return Err(AggregateError::PairNotAssigned(v.pair_id.clone()));
        }
        if by_pair.insert(v.pair_id.as_str(), v).is_some() {
            return Err(AggregateError::DuplicateVerdict(v.pair_id.clone()));
        }
    }
    Ok(by_pair)
}

fn missing<'a>(
    ids: impl Iterator<Item = &'a String>,
    by_pair: &HashMap<&str, &HumanVerdict>,
) -> Vec<String> {
    ids.filter(|id| !by_pair.contains_key(id.as_str()))
        .cloned()
        .collect()
}

/// Scores one worker's submission over the non-gold pairs of `assignment`.
pub fn score_worker(
    verdicts: &[HumanVerdict],
    assignment: &TaskAssignment,
    worker: &WorkerProfile,
    manifest: &PairManifest,
) -> Result<WorkerScore, AggregateError> {
    score_worker_indexed(verdicts, assignment, worker, &manifest.index())
}

/// [`score_worker`] against a prebuilt pair index.
pub fn score_worker_indexed(
    verdicts: &[HumanVerdict],
    assignment: &TaskAssignment,
    worker: &WorkerProfile,
    index: &PairIndex<'_>,
) -> Result<WorkerScore, AggregateError> {
    let by_pair = index_verdicts(verdicts, assignment)?;
    let absent = missing(assignment.pair_ids.iter(), &by_pair);
    if !absent.is_empty() {
        return Err(AggregateError::IncompleteSubmission(absent));
    }
    let (mut correct, mut total) = (0, 0);
    for id in assignment.scored_pair_ids() {
        let pair = index
            .get(id.as_str())
            .ok_or_else(|| AggregateError::UnknownPair(id.clone()))?;
        total += 1;
        if by_pair[id.as_str()].decision == pair.truth {
            correct += 1;
        }
    }
    if total == 0 {
        return Err(AggregateError::NothingScored);
    }
    Ok(WorkerScore::new(
        worker.worker_id.clone(),
        worker.coded_race.clone(),
        assignment.policy.condition(),
        correct,
        total,
    ))
}

/// Passes iff every gold pair was answered correctly.
pub fn screen_gold(
    verdicts: &[HumanVerdict],
    assignment: &TaskAssignment,
    manifest: &PairManifest,
) -> Result<Screening, AggregateError> {
    screen_gold_indexed(verdicts, assignment, &manifest.index())
}

pub fn screen_gold_indexed(
    verdicts: &[HumanVerdict],
    assignment: &TaskAssignment,
    index: &PairIndex<'_>,
) -> Result<Screening, AggregateError> {
    let by_pair = index_verdicts(verdicts, assignment)?;
    let absent = missing(assignment.gold_pair_ids.iter(), &by_pair);
    if !absent.is_empty() {
        return Err(AggregateError::IncompleteSubmission(absent));
    }
    let mut failed = Vec::new();
    for id in &assignment.gold_pair_ids {
        let pair = index
            .get(id.as_str())
            .ok_or_else(|| AggregateError::UnknownPair(id.clone()))?;
        if by_pair[id.as_str()].decision != pair.truth {
            failed.push(id.clone());
        }
    }
    Ok(if failed.is_empty() {
        Screening::Pass
    } else {
        Screening::Fail(failed)
    })
}

/// Majority vote over one pair's verdicts; even splits are unresolved.
pub fn majority_vote(verdicts: &[HumanVerdict]) -> Result<PanelDecision, AggregateError> {
    let first = verdicts.first().ok_or(AggregateError::EmptyPanel)?;
    let mut voters = HashSet::new();
    let (mut yes, mut no) = (0, 0);
    for v in verdicts {
        if v.pair_id != first.pair_id {
            return Err(AggregateError::MixedPairIds);
        }
        if !voters.insert(v.worker_id.as_str()) {
            return Err(AggregateError::DuplicateWorker(v.worker_id.clone()));
        }
        match v.decision {
            GroundTruth::Match => yes += 1,
            GroundTruth::NonMatch => no += 1,
        }
    }
    let decision = match yes.cmp(&no) {
        std::cmp::Ordering::Greater => PanelOutcome::Match,
        std::cmp::Ordering::Less => PanelOutcome::NonMatch,
        std::cmp::Ordering::Equal => PanelOutcome::Unresolved,
    };
    Ok(PanelDecision {
        pair_id: first.pair_id.clone(),
        decision,
        votes_match: yes,
        votes_nonmatch: no,
    })
}

/// Panel decisions for every pair that received verdicts, by pair id.
pub fn panel_decisions(verdicts: &[HumanVerdict]) -> Result<Vec<PanelDecision>, AggregateError> {
    let mut by_pair: BTreeMap<&str, Vec<HumanVerdict>> = BTreeMap::new();
    for v in verdicts {
        by_pair.entry(v.pair_id.as_str()).or_default().push(v.clone());
    }
    by_pair.values().map(|vs| majority_vote(vs)).collect()
}

/// Relative change of the IP median over the control median, in percent.
pub fn percentage_difference(control_median: f64, ip_median: f64) -> Result<f64, AggregateError> {
    if !control_median.is_finite() || control_median <= 0.0 {
        return Err(AggregateError::ZeroBaseline);
    }
    Ok((ip_median - control_median) / control_median * 100.0)
}

/// Rounds a fraction to a percentage with two decimals, as reports print it.
pub fn display_percent(fraction: f64) -> f64 {
    (fraction * 100.0 * 100.0).round() / 100.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub condition: Condition,
    pub race: String,
    pub n: usize,
    pub median: f64,
    /// Passing workers' accuracies, ascending.
    pub accuracies: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaceComparison {
    pub race: String,
    pub control_median: f64,
    pub ip_median: f64,
    /// Computed from the medians at display precision.
    pub percentage_difference: f64,
    pub kw: Option<KwResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionNormality {
    pub condition: Condition,
    pub n: usize,
    pub shapiro_wilk: Option<SwResult>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Exclusion {
    pub worker_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub cells: Vec<CellSummary>,
    pub comparisons: Vec<RaceComparison>,
    pub normality: Vec<ConditionNormality>,
    pub excluded_workers: Vec<Exclusion>,
}

impl ExperimentReport {
    pub fn cell(&self, condition: Condition, race: &str) -> Option<&CellSummary> {
        self.cells
            .iter()
            .find(|c| c.condition == condition && c.race == race)
    }

    pub fn comparison(&self, race: &str) -> Option<&RaceComparison> {
        self.comparisons.iter().find(|c| c.race == race)
    }

    /// Plain-text rendering; stable for identical reports.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("# cells\n");
        out.push_str("condition\trace\tn\tmedian_pct\taccuracies_pct\n");
        for c in &self.cells {
            let list: Vec<String> = c.accuracies.iter().map(|a| format!("{:.2}", a * 100.0)).collect();
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{:.2}\t{}",
                c.condition,
                c.race,
                c.n,
                display_percent(c.median),
                list.join(",")
            );
        }
        out.push_str("\n# comparisons\n");
        out.push_str("race\tcontrol_pct\tip_pct\tdifference_pct\tH\tdf\tp\n");
        for r in &self.comparisons {
            let (h, df, p) = match &r.kw {
                Some(kw) => (format!("{:.4}", kw.h), kw.df.to_string(), format!("{:.4}", kw.p_value)),
                None => ("-".into(), "-".into(), "-".into()),
            };
            let _ = writeln!(
                out,
                "{}\t{:.2}\t{:.2}\t{:+.2}\t{h}\t{df}\t{p}",
                r.race,
                display_percent(r.control_median),
                display_percent(r.ip_median),
                r.percentage_difference
            );
        }
        out.push_str("\n# normality\n");
        out.push_str("condition\tn\tW\tp\n");
        for c in &self.normality {
            match &c.shapiro_wilk {
                Some(sw) => {
                    let _ = writeln!(out, "{}\t{}\t{:.4}\t{:.4}", c.condition, c.n, sw.w, sw.p_value);
                }
                None => {
                    let _ = writeln!(out, "{}\t{}\t-\t-", c.condition, c.n);
                }
            }
        }
        out.push_str("\n# excluded\n");
        for e in &self.excluded_workers {
            let _ = writeln!(out, "{}\t{}", e.worker_id, e.reason);
        }
        out
    }
}

/// Assembles the report from worker scores and gold screenings.
///
/// Workers whose screening failed are excluded and listed; `extra_exclusions`
/// carries workers dropped earlier (for instance incomplete submissions).
/// Cells cover every condition present among the scores crossed with every
/// label. Per-race comparisons need both conditions.
pub fn build_report(
    scores: &[WorkerScore],
    screenings: &BTreeMap<String, Screening>,
    labels: &LabelSet,
    extra_exclusions: &[Exclusion],
) -> Result<ExperimentReport, AggregateError> {
    let mut excluded: Vec<Exclusion> = extra_exclusions.to_vec();
    let mut passing: Vec<&WorkerScore> = Vec::new();
    for score in scores {
        match screenings.get(&score.worker_id) {
            Some(Screening::Fail(ids)) => excluded.push(Exclusion {
                worker_id: score.worker_id.clone(),
                reason: format!("failed gold: {}", ids.join(",")),
            }),
            _ => passing.push(score),
        }
    }
    excluded.sort();

    let mut conditions: Vec<Condition> = scores.iter().map(|s| s.condition).collect();
    conditions.sort();
    conditions.dedup();

    let mut cells = Vec::new();
    for &condition in &conditions {
        for label in labels.labels() {
            let mut accuracies: Vec<f64> = passing
                .iter()
                .filter(|s| s.condition == condition && s.race.as_canonical() == Some(label))
                .map(|s| s.accuracy)
                .collect();
            if accuracies.is_empty() {
                return Err(AggregateError::EmptyCell(condition, label.clone()));
            }
            accuracies.sort_by(f64::total_cmp);
            let median = stats::median(&accuracies).expect("non-empty finite cell");
            cells.push(CellSummary {
                condition,
                race: label.clone(),
                n: accuracies.len(),
                median,
                accuracies,
            });
        }
    }

    let find = |cond: Condition, race: &str| {
        cells
            .iter()
            .find(|c: &&CellSummary| c.condition == cond && c.race == race)
    };
    let mut comparisons = Vec::new();
    if conditions.contains(&Condition::Control) && conditions.contains(&Condition::Ip) {
        for label in labels.labels() {
            let control = find(Condition::Control, label).expect("cell built above");
            let ip = find(Condition::Ip, label).expect("cell built above");
            let difference = percentage_difference(
                display_percent(control.median),
                display_percent(ip.median),
            )?;
            let kw = stats::kruskal_wallis(&[&control.accuracies[..], &ip.accuracies[..]]).ok();
            comparisons.push(RaceComparison {
                race: label.clone(),
                control_median: control.median,
                ip_median: ip.median,
                percentage_difference: difference,
                kw,
            });
        }
    }

    let normality = conditions
        .iter()
        .map(|&condition| {
            let pooled: Vec<f64> = cells
                .iter()
                .filter(|c| c.condition == condition)
                .flat_map(|c| c.accuracies.iter().copied())
                .collect();
            ConditionNormality {
                condition,
                n: pooled.len(),
                shapiro_wilk: stats::shapiro_wilk(&pooled).ok(),
            }
        })
        .collect();

    Ok(ExperimentReport {
        cells,
        comparisons,
        normality,
        excluded_workers: excluded,
    })
}
