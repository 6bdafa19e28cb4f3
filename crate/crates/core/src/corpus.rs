//! Race labels, verification-pair manifests and stratified balancing.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::Path;

use chrono::{DateTime, Utc};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::records;
use crate::seeding;

/// Labels used by the racial-faces-in-the-wild benchmark.
pub const DEFAULT_LABELS: [&str; 4] = ["African", "Asian", "Caucasian", "Indian"];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CorpusError {
    #[error("line {line}: {reason}")]
    ParseError { line: usize, reason: String },
    #[error("duplicate pair id {0:?}")]
    DuplicatePairId(String),
    #[error("unknown label {0:?}")]
    UnknownLabel(String),
    #[error("stratum {0} has no pairs")]
    EmptyStratum(String),
    #[error("invalid label set: {0}")]
    InvalidLabelSet(String),
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
}

impl CorpusError {
    pub(crate) fn io(path: &Path, err: std::io::Error) -> Self {
        CorpusError::Io {
            path: path.display().to_string(),
            message: err.to_string(),
        }
    }
}

/// A race label: either one of the configured canonical labels, or the
/// verbatim text of a self-identification that no coding rule matched.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RaceLabel {
    Canonical(String),
    Unmapped { unmapped: String },
}

impl RaceLabel {
    pub fn canonical(label: impl Into<String>) -> Self {
        RaceLabel::Canonical(label.into())
    }

    pub fn unmapped(text: impl Into<String>) -> Self {
        RaceLabel::Unmapped {
            unmapped: text.into(),
        }
    }

    pub fn is_canonical(&self) -> bool {
        matches!(self, RaceLabel::Canonical(_))
    }

    /// The canonical label text, if any.
    pub fn as_canonical(&self) -> Option<&str> {
        match self {
            RaceLabel::Canonical(label) => Some(label),
            RaceLabel::Unmapped { .. } => None,
        }
    }
}

impl fmt::Display for RaceLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RaceLabel::Canonical(label) => f.write_str(label),
            RaceLabel::Unmapped { unmapped } => write!(f, "unmapped({unmapped:?})"),
        }
    }
}

/// The configured, ordered set of canonical race labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct LabelSet(Vec<String>);

impl LabelSet {
    pub fn new<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Result<Self, CorpusError> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.is_empty() {
            return Err(CorpusError::InvalidLabelSet("label set is empty".into()));
        }
        let mut seen = HashSet::new();
        for label in &labels {
            if label.trim().is_empty() {
                return Err(CorpusError::InvalidLabelSet("blank label".into()));
            }
            if !seen.insert(label.as_str()) {
                return Err(CorpusError::InvalidLabelSet(format!("duplicate label {label:?}")));
            }
        }
        Ok(LabelSet(labels))
    }

    pub fn labels(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, label: &str) -> bool {
        self.0.iter().any(|l| l == label)
    }

    pub fn position(&self, label: &RaceLabel) -> Option<usize> {
        let text = label.as_canonical()?;
        self.0.iter().position(|l| l == text)
    }

    /// Parses exact canonical label text.
    pub fn parse(&self, text: &str) -> Result<RaceLabel, CorpusError> {
        if self.contains(text) {
            Ok(RaceLabel::canonical(text))
        } else {
            Err(CorpusError::UnknownLabel(text.to_string()))
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = RaceLabel> + '_ {
        self.0.iter().map(|l| RaceLabel::canonical(l.clone()))
    }
}

impl Default for LabelSet {
    fn default() -> Self {
        LabelSet(DEFAULT_LABELS.iter().map(|s| s.to_string()).collect())
    }
}

impl TryFrom<Vec<String>> for LabelSet {
    type Error = CorpusError;

    fn try_from(value: Vec<String>) -> Result<Self, Self::Error> {
        LabelSet::new(value)
    }
}

impl From<LabelSet> for Vec<String> {
    fn from(value: LabelSet) -> Self {
        value.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroundTruth {
    Match,
    NonMatch,
}

impl GroundTruth {
    pub fn flipped(self) -> Self {
        match self {
            GroundTruth::Match => GroundTruth::NonMatch,
            GroundTruth::NonMatch => GroundTruth::Match,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            GroundTruth::Match => "match",
            GroundTruth::NonMatch => "non_match",
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        match text {
            "match" => Some(GroundTruth::Match),
            "non_match" => Some(GroundTruth::NonMatch),
            _ => None,
        }
    }
}

impl fmt::Display for GroundTruth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One face-verification task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImagePair {
    pub pair_id: String,
    #[serde(rename = "image_a")]
    pub image_ref_a: String,
    #[serde(rename = "image_b")]
    pub image_ref_b: String,
    pub race: RaceLabel,
    pub truth: GroundTruth,
}

/// Wire form of a manifest line; the race is kept as text until it is
/// checked against the label set.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PairRecord {
    pair_id: String,
    image_a: String,
    image_b: String,
    race: String,
    truth: String,
}

/// Borrowed pair lookup by id.
pub type PairIndex<'a> = HashMap<&'a str, &'a ImagePair>;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairManifest {
    pub pairs: Vec<ImagePair>,
    pub labels: LabelSet,
    pub source_name: String,
    pub loaded_at: DateTime<Utc>,
}

/// Equality is over content: labels and pairs. `source_name` and
/// `loaded_at` are provenance only.
impl PartialEq for PairManifest {
    fn eq(&self, other: &Self) -> bool {
        self.labels == other.labels && self.pairs == other.pairs
    }
}

impl PairManifest {
    /// Validates pairs against `labels` and builds a manifest.
    pub fn from_pairs(
        pairs: Vec<ImagePair>,
        labels: LabelSet,
        source_name: impl Into<String>,
    ) -> Result<Self, CorpusError> {
        let mut seen = HashSet::new();
        for pair in &pairs {
            match &pair.race {
                RaceLabel::Canonical(l) if labels.contains(l) => {}
                RaceLabel::Canonical(l) => return Err(CorpusError::UnknownLabel(l.clone())),
                RaceLabel::Unmapped { unmapped } => {
                    return Err(CorpusError::UnknownLabel(unmapped.clone()))
                }
            }
            if !seen.insert(pair.pair_id.as_str()) {
                return Err(CorpusError::DuplicatePairId(pair.pair_id.clone()));
            }
        }
        Ok(PairManifest {
            pairs,
            labels,
            source_name: source_name.into(),
            loaded_at: Utc::now(),
        })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn get(&self, pair_id: &str) -> Option<&ImagePair> {
        self.pairs.iter().find(|p| p.pair_id == pair_id)
    }

    /// Id → pair lookup table.
    pub fn index(&self) -> PairIndex<'_> {
        self.pairs.iter().map(|p| (p.pair_id.as_str(), p)).collect()
    }

    /// Serialized manifest text, one record per line.
    pub fn to_jsonl(&self) -> String {
        records::encode_all(&self.pairs)
    }

    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        records::write_all(path, &self.pairs).map_err(|e| CorpusError::io(path, e))
    }

    pub fn stratum_sizes(&self) -> Vec<(RaceLabel, usize)> {
        self.labels
            .iter()
            .map(|label| {
                let n = self.pairs.iter().filter(|p| p.race == label).count();
                (label, n)
            })
            .collect()
    }
}

fn require_field(line: usize, name: &str, value: &str) -> Result<(), CorpusError> {
    if value.trim().is_empty() {
        Err(CorpusError::ParseError {
            line,
            reason: format!("field {name} is empty"),
        })
    } else {
        Ok(())
    }
}

/// Parses manifest text. `source_name` is recorded for provenance.
pub fn parse_manifest(
    text: &str,
    labels: &LabelSet,
    source_name: &str,
) -> Result<PairManifest, CorpusError> {
    let mut pairs = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        pairs.push(parse_record(idx + 1, line, labels)?);
    }
    PairManifest::from_pairs(pairs, labels.clone(), source_name)
}

fn parse_record(line_no: usize, line: &str, labels: &LabelSet) -> Result<ImagePair, CorpusError> {
    let record: PairRecord = records::decode(line_no, line).map_err(|e| CorpusError::ParseError {
        line: e.line,
        reason: e.reason,
    })?;
    require_field(line_no, "pair_id", &record.pair_id)?;
    require_field(line_no, "image_a", &record.image_a)?;
    require_field(line_no, "image_b", &record.image_b)?;
    let race = labels.parse(&record.race)?;
    let truth = GroundTruth::parse(&record.truth).ok_or(CorpusError::UnknownLabel(record.truth))?;
    Ok(ImagePair {
        pair_id: record.pair_id,
        image_ref_a: record.image_a,
        image_ref_b: record.image_b,
        race,
        truth,
    })
}

pub fn load_manifest(path: &Path, labels: &LabelSet) -> Result<PairManifest, CorpusError> {
    let text = std::fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?;
    parse_manifest(&text, labels, &path.display().to_string())
}

/// All pairs of `race`, in manifest order.
pub fn stratum<'a>(manifest: &'a PairManifest, race: &RaceLabel) -> Vec<&'a ImagePair> {
    manifest.pairs.iter().filter(|p| &p.race == race).collect()
}

/// Downsamples every stratum to the size of the smallest one.
///
/// Each stratum is shuffled with its own seeded stream and the prefix of
/// the target size is kept. Kept pairs are emitted in their original
/// manifest order, which makes the operation idempotent.
pub fn balance_strata(manifest: &PairManifest, seed: u64) -> Result<PairManifest, CorpusError> {
    let sizes = manifest.stratum_sizes();
    if let Some((label, _)) = sizes.iter().find(|(_, n)| *n == 0) {
        return Err(CorpusError::EmptyStratum(label.to_string()));
    }
    let target = sizes.iter().map(|(_, n)| *n).min().unwrap_or(0);

    let mut keep = vec![false; manifest.pairs.len()];
    for (stratum_idx, label) in manifest.labels.iter().enumerate() {
        let mut members: Vec<usize> = manifest
            .pairs
            .iter()
            .enumerate()
            .filter(|(_, p)| p.race == label)
            .map(|(i, _)| i)
            .collect();
        let mut rng = seeding::stream(seeding::derive(seed, &[stratum_idx as u64]));
        let (chosen, _) = members.partial_shuffle(&mut rng, target);
        for &i in chosen.iter() {
            keep[i] = true;
        }
    }

    let pairs = manifest
        .pairs
        .iter()
        .zip(&keep)
        .filter(|(_, k)| **k)
        .map(|(p, _)| p.clone())
        .collect();
    Ok(PairManifest {
        pairs,
        labels: manifest.labels.clone(),
        source_name: manifest.source_name.clone(),
        loaded_at: manifest.loaded_at,
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn pair(id: &str, race: &str, truth: GroundTruth) -> ImagePair {
        ImagePair {
            pair_id: id.to_string(),
            image_ref_a: format!("img/{id}_a.jpg"),
            image_ref_b: format!("img/{id}_b.jpg"),
            race: RaceLabel::canonical(race),
            truth,
        }
    }

    pub(crate) fn manifest_with_sizes(sizes: &[usize]) -> PairManifest {
        let labels = LabelSet::default();
        let mut pairs = Vec::new();
        for (label, &n) in labels.labels().iter().zip(sizes) {
            for i in 0..n {
                let truth = if i % 2 == 0 { GroundTruth::Match } else { GroundTruth::NonMatch };
                pairs.push(pair(&format!("{label}-{i}"), label, truth));
            }
        }
        PairManifest::from_pairs(pairs, labels, "test").unwrap()
    }

    fn line(id: &str, race: &str, truth: &str) -> String {
        format!(
            r#"{{"pair_id":"{id}","image_a":"a/{id}.jpg","image_b":"b/{id}.jpg","race":"{race}","truth":"{truth}"}}"#
        )
    }

    #[test]
    fn loads_one_pair_per_race() {
        let text = [
            line("p1", "African", "match"),
            line("p2", "Asian", "non_match"),
            line("p3", "Caucasian", "match"),
            line("p4", "Indian", "non_match"),
        ]
        .join("\n");
        let m = parse_manifest(&text, &LabelSet::default(), "t").unwrap();
        assert_eq!(m.len(), 4);
        assert_eq!(m.pairs[1].truth, GroundTruth::NonMatch);
        assert_eq!(m.pairs[3].race, RaceLabel::canonical("Indian"));
    }

    #[test]
    fn rejects_duplicate_ids() {
        let text = [line("p1", "African", "match"), line("p1", "Asian", "match")].join("\n");
        assert_eq!(
            parse_manifest(&text, &LabelSet::default(), "t").unwrap_err(),
            CorpusError::DuplicatePairId("p1".into())
        );
    }

    #[test]
    fn rejects_labels_outside_the_set() {
        let text = line("p1", "Latino", "match");
        assert_eq!(
            parse_manifest(&text, &LabelSet::default(), "t").unwrap_err(),
            CorpusError::UnknownLabel("Latino".into())
        );
        let text = line("p1", "Asian", "maybe");
        assert_eq!(
            parse_manifest(&text, &LabelSet::default(), "t").unwrap_err(),
            CorpusError::UnknownLabel("maybe".into())
        );
    }

    #[test]
    fn header_lines_and_missing_fields_are_parse_errors() {
        let text = format!("pair_id,image_a,image_b,race,truth\n{}", line("p1", "Asian", "match"));
        assert!(matches!(
            parse_manifest(&text, &LabelSet::default(), "t"),
            Err(CorpusError::ParseError { line: 1, .. })
        ));
        let text = format!("{}\n{{\"pair_id\":\"p2\"}}", line("p1", "Asian", "match"));
        assert!(matches!(
            parse_manifest(&text, &LabelSet::default(), "t"),
            Err(CorpusError::ParseError { line: 2, .. })
        ));
        let text = line("", "Asian", "match");
        assert!(matches!(
            parse_manifest(&text, &LabelSet::default(), "t"),
            Err(CorpusError::ParseError { line: 1, .. })
        ));
    }

    #[test]
    fn label_set_validation() {
        assert!(LabelSet::new(Vec::<String>::new()).is_err());
        assert!(LabelSet::new(["A", "A"]).is_err());
        assert_eq!(LabelSet::new(["X", "Y"]).unwrap().len(), 2);
    }

    #[test]
    fn stratum_queries() {
        let m = manifest_with_sizes(&[1, 1, 1, 1]);
        let asian = stratum(&m, &RaceLabel::canonical("Asian"));
        assert_eq!(asian.len(), 1);
        assert_eq!(asian[0].pair_id, "Asian-0");

        let empty = PairManifest::from_pairs(vec![], LabelSet::default(), "e").unwrap();
        assert!(stratum(&empty, &RaceLabel::canonical("Asian")).is_empty());

        let pairs = vec![
            pair("i1", "Indian", GroundTruth::Match),
            pair("a1", "Asian", GroundTruth::Match),
            pair("i2", "Indian", GroundTruth::Match),
            pair("c1", "Caucasian", GroundTruth::Match),
            pair("i3", "Indian", GroundTruth::NonMatch),
        ];
        let m = PairManifest::from_pairs(pairs, LabelSet::default(), "t").unwrap();
        let ids: Vec<_> = stratum(&m, &RaceLabel::canonical("Indian"))
            .iter()
            .map(|p| p.pair_id.as_str())
            .collect();
        assert_eq!(ids, ["i1", "i2", "i3"]);
    }

    #[test]
    fn balancing_equal_strata_is_identity() {
        let m = manifest_with_sizes(&[2000, 2000, 2000, 2000]);
        let out = balance_strata(&m, 11).unwrap();
        assert_eq!(out, m);
    }

    #[test]
    fn balancing_takes_the_minimum() {
        let m = manifest_with_sizes(&[1200, 900, 1500, 900]);
        let out = balance_strata(&m, 3).unwrap();
        let input: HashSet<_> = m.pairs.iter().map(|p| &p.pair_id).collect();
        for (label, n) in out.stratum_sizes() {
            assert_eq!(n, 900, "{label}");
        }
        assert!(out.pairs.iter().all(|p| input.contains(&p.pair_id)));
        assert_eq!(balance_strata(&m, 3).unwrap(), out);
        assert_ne!(balance_strata(&m, 4).unwrap(), out);
    }

    #[test]
    fn balancing_rejects_empty_strata() {
        let m = manifest_with_sizes(&[3, 0, 3, 3]);
        assert_eq!(
            balance_strata(&m, 0).unwrap_err(),
            CorpusError::EmptyStratum("Asian".into())
        );
    }

    #[test]
    fn race_label_serde_forms() {
        assert_eq!(serde_json::to_string(&RaceLabel::canonical("Asian")).unwrap(), "\"Asian\"");
        let u = RaceLabel::unmapped("Martian");
        let text = serde_json::to_string(&u).unwrap();
        assert_eq!(text, r#"{"unmapped":"Martian"}"#);
        assert_eq!(serde_json::from_str::<RaceLabel>(&text).unwrap(), u);
    }
}
