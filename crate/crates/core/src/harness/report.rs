//! Episode rows, aggregate metrics and their CSV forms.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::env::EpisodeStatus;

use super::HarnessError;

/// Evaluation or training mode label written to the logs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    Train,
    Ft,
    Rt,
    Fnt,
}

impl EvalMode {
    pub fn as_str(self) -> &'static str {
        match self {
            EvalMode::Train => "train",
            EvalMode::Ft => "ft",
            EvalMode::Rt => "rt",
            EvalMode::Fnt => "fnt",
        }
    }
}

impl std::str::FromStr for EvalMode {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "train" => Ok(EvalMode::Train),
            "ft" => Ok(EvalMode::Ft),
            "rt" => Ok(EvalMode::Rt),
            "fnt" => Ok(EvalMode::Fnt),
            other => Err(HarnessError::Usage(format!("unknown mode {other:?}, expected ft, rt or fnt"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRow {
    pub episode: u64,
    pub mode: EvalMode,
    pub outcome: String,
    pub steps: u32,
    #[serde(rename = "ER")]
    pub er: f64,
    pub danger_events: u64,
    pub warning_steps: u64,
    pub accepted_substeps: u64,
    /// Seed that replays this episode's world.
    pub seed: u64,
}

impl EpisodeRow {
    pub fn succeeded(&self) -> bool {
        self.outcome == EpisodeStatus::Success.as_str()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub attempts: usize,
    pub successes: usize,
    pub success_rate: f64,
    /// Success rate in percent, rounded to the nearest integer.
    pub success_percent: u32,
    pub average_er: f64,
    /// Mean steps over successful episodes only.
    pub average_completion_steps: Option<f64>,
}

impl Aggregates {
    pub fn from_rows(rows: &[EpisodeRow]) -> Self {
        let attempts = rows.len();
        let successes = rows.iter().filter(|r| r.succeeded()).count();
        let success_rate = if attempts == 0 { 0.0 } else { successes as f64 / attempts as f64 };
        let average_er = if attempts == 0 { 0.0 } else { rows.iter().map(|r| r.er).sum::<f64>() / attempts as f64 };
        let average_completion_steps = (successes > 0)
            .then(|| rows.iter().filter(|r| r.succeeded()).map(|r| r.steps as f64).sum::<f64>() / successes as f64);
        Self {
            attempts,
            successes,
            success_rate,
            success_percent: (success_rate * 100.0).round() as u32,
            average_er,
            average_completion_steps,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub mode: EvalMode,
    pub rows: Vec<EpisodeRow>,
    pub aggregates: Aggregates,
}

impl ExperimentReport {
    pub fn new(mode: EvalMode, rows: Vec<EpisodeRow>) -> Self {
        let aggregates = Aggregates::from_rows(&rows);
        Self { mode, rows, aggregates }
    }

    /// Fraction of accepted sub-steps classified as Warning over all episodes.
    pub fn warning_fraction(&self) -> f64 {
        let accepted: u64 = self.rows.iter().map(|r| r.accepted_substeps).sum();
        let warn: u64 = self.rows.iter().map(|r| r.warning_steps).sum();
        if accepted == 0 {
            0.0
        } else {
            warn as f64 / accepted as f64
        }
    }

    /// One line per aggregate column.
    pub fn summary(&self) -> String {
        let a = &self.aggregates;
        let steps = a.average_completion_steps.map_or("n/a".to_string(), |s| format!("{s:.1}"));
        format!(
            "mode {}\naverage ER {:.4}\nsuccess {}/{}\nsuccess rate {}%\naverage completion steps {}\n",
            self.mode.as_str(),
            a.average_er,
            a.successes,
            a.attempts,
            a.success_percent,
            steps
        )
    }
}

pub fn write_rows<W: Write>(w: W, rows: &[EpisodeRow]) -> Result<(), HarnessError> {
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    out.write_record(EPISODE_HEADER)?;
    for r in rows {
        out.serialize(r)?;
    }
    out.flush().map_err(|e| HarnessError::Io(e.to_string()))?;
    Ok(())
}

pub const EPISODE_HEADER: [&str; 9] =
    ["episode", "mode", "outcome", "steps", "ER", "danger_events", "warning_steps", "accepted_substeps", "seed"];

pub fn read_rows<R: Read>(r: R) -> Result<Vec<EpisodeRow>, HarnessError> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut rows = Vec::new();
    for rec in rdr.deserialize() {
        rows.push(rec?);
    }
    Ok(rows)
}
