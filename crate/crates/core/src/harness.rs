//! Monte Carlo batches, configuration files and every on-disk format.
//!
//! A batch runs `batch` independent sessions. Replicate `i` uses the seed
//! [`rng::replicate_seed`]`(base_seed, i)`, so any replicate can be rerun on
//! its own. Replicates are simulated in parallel and written in index order,
//! which keeps the output byte-identical regardless of thread count.
//!
//! Files written by [`run_batch`] into the output directory:
//!
//! | file | format |
//! |------|--------|
//! | `trials.jsonl` | one JSON object per event, tagged with `schema_version` and `replicate` |
//! | `traces/replicate_NNNNN.csv` | per-trial staircase trace with reversal markers |
//! | `jnd_matrix.csv` | conditions x replicates, JND in percent, `NA` if not converged |
//! | `summary.json` | [`BatchSummary`] |

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Violation};
use crate::observer::ObserverModel;
use crate::render::{ConditionMode, PlantParams};
use crate::rng;
use crate::session::{
    self, ConditionOutcome, ExperimentConfig, LogEvent, SessionConfig, SessionResult, TrialRecord,
};
use crate::staircase::{StaircaseConfig, StepPair};
use crate::stats;

/// Version stamped into every output file.
pub const SCHEMA_VERSION: u32 = 1;

/// Replicates simulated between writes.
const CHUNK: usize = 64;

pub const TRIALS_FILE: &str = "trials.jsonl";
pub const SUMMARY_FILE: &str = "summary.json";
pub const JND_MATRIX_FILE: &str = "jnd_matrix.csv";
pub const TRACES_DIR: &str = "traces";
pub const TRACE_FILE: &str = "trace.csv";
pub const SESSION_FILE: &str = "session.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarnessConfig {
    /// Monte Carlo replicates.
    pub batch: usize,
    pub base_seed: u64,
    pub output_dir: PathBuf,
    pub plant: PlantParams,
    pub staircase: StaircaseConfig,
    pub observer: ObserverModel,
    pub session: SessionConfig,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        Self {
            batch: 100,
            base_seed: 1,
            output_dir: PathBuf::from("out"),
            plant: PlantParams::default(),
            staircase: StaircaseConfig::default(),
            observer: ObserverModel::default(),
            session: SessionConfig::default(),
        }
    }
}

impl HarnessConfig {
    pub fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            plant: self.plant,
            staircase: self.staircase.clone(),
            observer: self.observer.clone(),
            session: self.session.clone(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            what: "config".into(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }
}

/// Every violated invariant in `config`, not just the first.
pub fn validate_config(config: &HarnessConfig) -> Vec<Violation> {
    let mut v = Vec::new();
    if config.batch == 0 {
        v.push(Violation::new("batch", "must be >= 1"));
    }
    v.extend(config.experiment().violations());
    v
}

/// One line of `trials.jsonl`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogLine {
    pub schema_version: u32,
    pub replicate: u64,
    #[serde(flatten)]
    pub event: LogEvent,
}

/// Serialized log lines for one session, newline terminated.
pub fn session_log_lines(replicate: u64, result: &SessionResult) -> String {
    let mut out = String::new();
    for event in &result.log {
        let line = LogLine {
            schema_version: SCHEMA_VERSION,
            replicate,
            event: event.clone(),
        };
        out.push_str(&serde_json::to_string(&line).expect("log events serialize"));
        out.push('\n');
    }
    out
}

pub fn read_log(path: &Path) -> Result<Vec<LogLine>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: LogLine = serde_json::from_str(&line).map_err(|e| Error::Parse {
            what: format!("{} line {}", path.display(), n + 1),
            message: e.to_string(),
        })?;
        if parsed.schema_version != SCHEMA_VERSION {
            return Err(Error::Parse {
                what: format!("{} line {}", path.display(), n + 1),
                message: format!("unsupported schema_version {}", parsed.schema_version),
            });
        }
        lines.push(parsed);
    }
    Ok(lines)
}

/// Staircase trace as CSV: one row per trial, scale in percent of the
/// reference, `reversal` = 1 on reversing trials. Conditions whose staircase
/// hit the trial guard are listed in the header comment.
pub fn trace_export<'a>(
    records: impl IntoIterator<Item = &'a TrialRecord>,
    non_converged: &[ConditionMode],
) -> String {
    let flagged: Vec<&str> = non_converged.iter().map(|c| c.as_str()).collect();
    let mut out = format!(
        "# schema_version={SCHEMA_VERSION} non_converged={}\ncondition,trial_index,scale_percent,reversal\n",
        flagged.join(";")
    );
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{:.4},{}",
            r.condition,
            r.trial_index,
            r.s_test * 100.0,
            u8::from(r.reversal)
        );
    }
    out
}

pub fn session_trace(result: &SessionResult) -> String {
    let non_converged: Vec<ConditionMode> = result
        .conditions
        .iter()
        .filter(|c| !c.outcome.is_converged())
        .map(|c| c.condition)
        .collect();
    trace_export(result.trial_records(), &non_converged)
}

/// Trace for one replicate of a parsed log; `None` takes every line.
pub fn trace_from_log(lines: &[LogLine], replicate: Option<u64>) -> String {
    let selected = lines
        .iter()
        .filter(|l| replicate.is_none_or(|r| l.replicate == r));
    let mut records = Vec::new();
    let mut non_converged = Vec::new();
    for line in selected {
        match &line.event {
            LogEvent::Trial(r) => records.push(r),
            LogEvent::ConditionEnd {
                condition,
                outcome: ConditionOutcome::NonConverged { .. },
                ..
            } => non_converged.push(*condition),
            _ => {}
        }
    }
    trace_export(records, &non_converged)
}

/// Conditions x replicates table of JND percentages.
pub fn jnd_matrix(sessions: &[SessionResult]) -> String {
    let rows: Vec<Vec<Option<f64>>> = ConditionMode::ALL
        .into_iter()
        .map(|c| sessions.iter().map(|s| condition_jnd(s, c)).collect())
        .collect();
    format_jnd_matrix(&rows, sessions.len())
}

fn condition_jnd(session: &SessionResult, condition: ConditionMode) -> Option<f64> {
    session
        .outcome(condition)
        .and_then(ConditionOutcome::jnd)
        .map(|j| j.jnd_percent)
}

/// `rows[k]` holds the replicate values for `ConditionMode::ALL[k]`.
fn format_jnd_matrix(rows: &[Vec<Option<f64>>], replicates: usize) -> String {
    let mut out = format!("# schema_version={SCHEMA_VERSION}\ncondition");
    for i in 0..replicates {
        let _ = write!(out, ",rep_{i:05}");
    }
    out.push('\n');
    for (condition, row) in ConditionMode::ALL.into_iter().zip(rows) {
        out.push_str(condition.as_str());
        for v in row {
            match v {
                Some(j) => {
                    let _ = write!(out, ",{j:.6}");
                }
                None => out.push_str(",NA"),
            }
        }
        out.push('\n');
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionSummary {
    pub condition: ConditionMode,
    pub converged: usize,
    pub non_converged: usize,
    pub jnd_mean: Option<f64>,
    pub jnd_median: Option<f64>,
    pub jnd_sd: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub schema_version: u32,
    pub batch: usize,
    pub base_seed: u64,
    /// Replicates in which all seven staircases terminated.
    pub converged_replicates: usize,
    pub non_converged_replicates: usize,
    pub conditions: Vec<ConditionSummary>,
    /// Trials between the first and last reversal of the JND window,
    /// inclusive, pooled over converged staircases.
    pub window_trials: usize,
    pub window_correct: usize,
    pub window_proportion_correct: Option<f64>,
    pub equilibrium_proportion: f64,
    /// `window_proportion_correct - equilibrium_proportion`
    pub equilibrium_gap: Option<f64>,
}

/// Running totals for [`BatchSummary`].
#[derive(Debug)]
pub struct SummaryBuilder {
    window: usize,
    batch: usize,
    converged_replicates: usize,
    jnds: Vec<Vec<f64>>,
    non_converged: Vec<usize>,
    window_trials: usize,
    window_correct: usize,
}

impl SummaryBuilder {
    pub fn new(config: &StaircaseConfig) -> Self {
        Self {
            window: config.jnd_window_reversals,
            batch: 0,
            converged_replicates: 0,
            jnds: vec![Vec::new(); ConditionMode::ALL.len()],
            non_converged: vec![0; ConditionMode::ALL.len()],
            window_trials: 0,
            window_correct: 0,
        }
    }

    pub fn add(&mut self, session: &SessionResult) {
        self.batch += 1;
        if session.all_converged() {
            self.converged_replicates += 1;
        }
        for (slot, condition) in ConditionMode::ALL.into_iter().enumerate() {
            match session.outcome(condition).and_then(ConditionOutcome::jnd) {
                Some(j) => {
                    self.jnds[slot].push(j.jnd_percent);
                    let records = session.records_for(condition);
                    let (n, k) = window_counts(&records, self.window);
                    self.window_trials += n;
                    self.window_correct += k;
                }
                None => self.non_converged[slot] += 1,
            }
        }
    }

    pub fn finish(self, base_seed: u64, config: &StaircaseConfig) -> BatchSummary {
        let conditions = ConditionMode::ALL
            .into_iter()
            .enumerate()
            .map(|(slot, condition)| {
                let xs = &self.jnds[slot];
                ConditionSummary {
                    condition,
                    converged: xs.len(),
                    non_converged: self.non_converged[slot],
                    jnd_mean: stats::mean(xs),
                    jnd_median: stats::median(xs),
                    jnd_sd: stats::std_dev(xs),
                }
            })
            .collect();
        let equilibrium = config.equilibrium_proportion(StepPair::Late);
        let window_p = (self.window_trials > 0)
            .then(|| self.window_correct as f64 / self.window_trials as f64);
        BatchSummary {
            schema_version: SCHEMA_VERSION,
            batch: self.batch,
            base_seed,
            converged_replicates: self.converged_replicates,
            non_converged_replicates: self.batch - self.converged_replicates,
            conditions,
            window_trials: self.window_trials,
            window_correct: self.window_correct,
            window_proportion_correct: window_p,
            equilibrium_proportion: equilibrium,
            equilibrium_gap: window_p.map(|p| p - equilibrium),
        }
    }
}

/// (trials, correct) from the first to the last reversal of the JND window.
fn window_counts(records: &[&TrialRecord], window: usize) -> (usize, usize) {
    let reversal_at: Vec<usize> = records
        .iter()
        .enumerate()
        .filter(|(_, r)| r.reversal)
        .map(|(i, _)| i)
        .collect();
    if reversal_at.len() < window || window == 0 {
        return (0, 0);
    }
    let first = reversal_at[reversal_at.len() - window];
    let last = *reversal_at.last().expect("non-empty");
    let slice = &records[first..=last];
    (slice.len(), slice.iter().filter(|r| r.correct).count())
}

/// Runs replicate `index` of a batch.
pub fn run_replicate(config: &ExperimentConfig, base_seed: u64, index: u64) -> Result<SessionResult> {
    let plan = session::plan_session(rng::replicate_seed(base_seed, index), config)?;
    session::run_session(&plan)
}

/// Simulates `batch` replicates without touching the filesystem.
pub fn simulate_batch(config: &HarnessConfig) -> Result<(BatchSummary, Vec<SessionResult>)> {
    check(config)?;
    let experiment = config.experiment();
    let sessions = (0..config.batch as u64)
        .into_par_iter()
        .map(|i| run_replicate(&experiment, config.base_seed, i))
        .collect::<Result<Vec<_>>>()?;
    let mut builder = SummaryBuilder::new(&config.staircase);
    sessions.iter().for_each(|s| builder.add(s));
    Ok((builder.finish(config.base_seed, &config.staircase), sessions))
}

fn check(config: &HarnessConfig) -> Result<()> {
    let v = validate_config(config);
    if v.is_empty() {
        Ok(())
    } else {
        Err(Error::Config(v))
    }
}

fn create_file(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn write_all(out: &mut impl Write, path: &Path, text: &str) -> Result<()> {
    out.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn prepare_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Files produced by a batch or single run.
#[derive(Clone, Debug, PartialEq)]
pub struct Artifacts {
    pub output_dir: PathBuf,
    pub files: Vec<PathBuf>,
}

/// Runs the batch described by `config` and writes every artifact under
/// `config.output_dir`. Output files are created before any simulation so a
/// bad path fails fast.
pub fn run_batch(config: &HarnessConfig) -> Result<(BatchSummary, Artifacts)> {
    check(config)?;
    let dir = &config.output_dir;
    let traces_dir = dir.join(TRACES_DIR);
    prepare_dir(dir)?;
    prepare_dir(&traces_dir)?;
    let trials_path = dir.join(TRIALS_FILE);
    let matrix_path = dir.join(JND_MATRIX_FILE);
    let summary_path = dir.join(SUMMARY_FILE);
    let mut trials = create_file(&trials_path)?;
    let mut matrix = create_file(&matrix_path)?;
    let mut summary_out = create_file(&summary_path)?;

    let experiment = config.experiment();
    let mut builder = SummaryBuilder::new(&config.staircase);
    let mut files = vec![trials_path.clone()];
    // JND matrix columns are replicates; keep only what the table needs.
    let mut outcomes: Vec<Vec<Option<f64>>> = (0..7).map(|_| Vec::with_capacity(config.batch)).collect();

    let indices: Vec<u64> = (0..config.batch as u64).collect();
    for chunk in indices.chunks(CHUNK) {
        let sessions = chunk
            .par_iter()
            .map(|&i| run_replicate(&experiment, config.base_seed, i))
            .collect::<Result<Vec<_>>>()?;
        for (&i, session) in chunk.iter().zip(&sessions) {
            write_all(&mut trials, &trials_path, &session_log_lines(i, session))?;
            let trace_path = traces_dir.join(format!("replicate_{i:05}.csv"));
            write_file(&trace_path, &session_trace(session))?;
            files.push(trace_path);
            builder.add(session);
            for (slot, condition) in ConditionMode::ALL.into_iter().enumerate() {
                outcomes[slot].push(condition_jnd(session, condition));
            }
        }
    }
    trials.flush().map_err(|e| Error::io(&trials_path, e))?;

    let table = format_jnd_matrix(&outcomes, config.batch);
    write_all(&mut matrix, &matrix_path, &table)?;
    matrix.flush().map_err(|e| Error::io(&matrix_path, e))?;

    let summary = builder.finish(config.base_seed, &config.staircase);
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n";
    write_all(&mut summary_out, &summary_path, &json)?;
    summary_out.flush().map_err(|e| Error::io(&summary_path, e))?;

    files.push(matrix_path);
    files.push(summary_path);
    Ok((
        summary,
        Artifacts {
            output_dir: dir.clone(),
            files,
        },
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionJnd {
    pub condition: ConditionMode,
    pub trials: usize,
    pub jnd_percent: Option<f64>,
}

/// `session.json` written by [`run_single`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub schema_version: u32,
    pub seed: u64,
    pub condition_order: Vec<ConditionMode>,
    pub conditions: Vec<ConditionJnd>,
    pub config: ExperimentConfig,
}

impl SessionSummary {
    pub fn from_result(result: &SessionResult) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            seed: result.seed,
            condition_order: result.condition_order.clone(),
            conditions: result
                .conditions
                .iter()
                .map(|c| ConditionJnd {
                    condition: c.condition,
                    trials: c.trials,
                    jnd_percent: c.outcome.jnd().map(|j| j.jnd_percent),
                })
                .collect(),
            config: result.config.clone(),
        }
    }
}

/// Runs a single session with `seed` and writes its log, trace and summary.
pub fn run_single(
    config: &HarnessConfig,
    seed: u64,
    dir: &Path,
) -> Result<(SessionResult, Artifacts)> {
    check(config)?;
    prepare_dir(dir)?;
    let trials_path = dir.join(TRIALS_FILE);
    let trace_path = dir.join(TRACE_FILE);
    let session_path = dir.join(SESSION_FILE);
    let mut trials = create_file(&trials_path)?;
    let mut trace = create_file(&trace_path)?;
    let mut summary = create_file(&session_path)?;

    let plan = session::plan_session(seed, &config.experiment())?;
    let result = session::run_session(&plan)?;

    write_all(&mut trials, &trials_path, &session_log_lines(0, &result))?;
    write_all(&mut trace, &trace_path, &session_trace(&result))?;
    let json = serde_json::to_string_pretty(&SessionSummary::from_result(&result))
        .expect("summary serializes")
        + "\n";
    write_all(&mut summary, &session_path, &json)?;
    for (w, p) in [
        (&mut trials, &trials_path),
        (&mut trace, &trace_path),
        (&mut summary, &session_path),
    ] {
        w.flush().map_err(|e| Error::io(p, e))?;
    }
    Ok((
        result,
        Artifacts {
            output_dir: dir.to_path_buf(),
            files: vec![trials_path, trace_path, session_path],
        },
    ))
}

/// Reruns the session that produced `replicate` in a log, from the seed and
/// configuration echoed in its `session_start` line.
pub fn replay(lines: &[LogLine], replicate: u64) -> Result<SessionResult> {
    let start = lines
        .iter()
        .find_map(|l| match &l.event {
            LogEvent::SessionStart { seed, config, .. } if l.replicate == replicate => {
                Some((*seed, config.clone()))
            }
            _ => None,
        })
        .ok_or_else(|| Error::InvalidInput(format!("no session_start for replicate {replicate}")))?;
    let plan = session::plan_session(start.0, &start.1)?;
    session::run_session(&plan)
}
