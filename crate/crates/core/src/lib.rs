//! Race-aware human-in-the-loop facial verification.
//!
//! Pairs flow from a labelled manifest through ensemble triage, into
//! same-race or balanced worker assignments, and back out as an
//! experiment report with Kruskal-Wallis and Shapiro-Wilk statistics.

pub mod aggregate;
pub mod assignment;
pub mod config;
pub mod corpus;
pub mod gateway;
pub mod records;
pub mod seeding;
pub mod simlab;
pub mod stats;
pub mod triage;

pub use aggregate::{ExperimentReport, HumanVerdict, Screening, WorkerScore};
pub use assignment::{AssignmentPolicy, Condition, TaskAssignment, WorkerProfile};
pub use corpus::{GroundTruth, ImagePair, LabelSet, PairManifest, RaceLabel};
pub use simlab::{SimConfig, SimSummary, WorkerModel};
pub use stats::{KwResult, SwResult};
pub use triage::{EnsembleDecision, EnsembleScore, ModelVerdict, RoutingPolicy, TriageOutcome};
