use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ControlDecision, EpisodeConfig, Outcome, Scenario};
use crate::error::{Error, Result};
use crate::solver::SolverStatus;

/// Schema tag written to the first and last line of every episode log.
pub const LOG_SCHEMA: &str = "safenav-episode/1";

/// State of the world at one step and the decision taken from it. The final
/// record carries no decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub t: f64,
    pub robot: Vec<f64>,
    /// `[x, y, vx, vy]` per pedestrian.
    pub pedestrians: Vec<[f64; 4]>,
    pub decision: Option<ControlDecision>,
    pub status: Option<SolverStatus>,
    pub iterations: usize,
    /// Smallest zero-margin barrier value against any pedestrian.
    pub h_min: Option<f64>,
    pub slack: f64,
    pub solve_ms: f64,
    /// Wall time of the whole step (pedestrians, controller, integration).
    pub step_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeHeader {
    pub schema: String,
    pub seed: u64,
    pub scenario_fingerprint: String,
    pub scenario: Scenario,
    pub config: EpisodeConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrailer {
    pub schema: String,
    pub outcome: Outcome,
    /// Time at which the outcome was decided.
    pub navigation_time: f64,
    pub failure_count: usize,
    pub solver_calls: usize,
    pub total_solve_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub header: EpisodeHeader,
    pub records: Vec<StepRecord>,
    pub trailer: EpisodeTrailer,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum Line {
    Header(EpisodeHeader),
    Step(StepRecord),
    Trailer(EpisodeTrailer),
}

#[derive(Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum LineRef<'a> {
    Header(&'a EpisodeHeader),
    Step(&'a StepRecord),
    Trailer(&'a EpisodeTrailer),
}

impl EpisodeLog {
    pub fn outcome(&self) -> Outcome {
        self.trailer.outcome
    }

    /// One JSON object per line: header, steps, trailer.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let lines = std::iter::once(LineRef::Header(&self.header))
            .chain(self.records.iter().map(LineRef::Step))
            .chain(std::iter::once(LineRef::Trailer(&self.trailer)));
        for line in lines {
            out.push_str(&serde_json::to_string(&line).expect("log records serialize"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut header = None;
        let mut records = Vec::new();
        let mut trailer = None;
        for (n, raw) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            if trailer.is_some() {
                return Err(Error::Parse(format!("line {}: content after trailer", n + 1)));
            }
            let line: Line =
                serde_json::from_str(raw).map_err(|e| Error::Parse(format!("line {}: {e}", n + 1)))?;
            match line {
                Line::Header(h) if header.is_none() && n == 0 => header = Some(h),
                Line::Step(s) if header.is_some() => records.push(s),
                Line::Trailer(t) if header.is_some() => trailer = Some(t),
                _ => return Err(Error::Parse(format!("line {}: record out of order", n + 1))),
            }
        }
        let header = header.ok_or_else(|| Error::Parse("missing header".into()))?;
        let trailer = trailer.ok_or_else(|| Error::Parse("missing trailer".into()))?;
        for schema in [&header.schema, &trailer.schema] {
            if schema != LOG_SCHEMA {
                return Err(Error::Parse(format!("unsupported schema '{schema}'")));
            }
        }
        Ok(EpisodeLog {
            header,
            records,
            trailer,
        })
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(self.to_jsonl().as_bytes())
            .map_err(|e| Error::io(path, e))
    }

    pub fn read_jsonl(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_jsonl(&text)
    }
}
