//! One simulated participant working through all seven conditions.
//!
//! A session is strictly sequential: plan the condition order, then run one
//! staircase per condition. Each trial places the test spring in a random
//! interval, asks the observer which interval felt stiffer and feeds the
//! verdict to the staircase. Audio cues and the between-condition break are
//! logged as events; nothing waits in real time.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Violation};
use crate::observer::{Interval, ObserverModel};
use crate::render::{ConditionMode, PlantParams, SpringParams, REFERENCE_KAPPA};
use crate::rng::{self, SimRng};
use crate::staircase::{JndEstimate, StaircaseConfig, StaircaseState, StepPair};

/// Minutes of rest logged between conditions.
pub const BREAK_MINUTES: u32 = 5;

/// How the L/R variants of modes 2-4 are placed in the plan.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantOrder {
    /// Modes are shuffled; the two variants of a mode run back to back in
    /// random internal order.
    #[default]
    Adjacent,
    /// All seven conditions shuffled freely.
    Shuffled,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    /// mNm/deg
    pub reference_kappa: f64,
    /// A staircase still running after this many trials is abandoned.
    pub max_trials: usize,
    pub variant_order: VariantOrder,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            reference_kappa: REFERENCE_KAPPA,
            max_trials: 400,
            variant_order: VariantOrder::Adjacent,
        }
    }
}

/// Everything needed to reproduce a session apart from its seed.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub plant: PlantParams,
    pub staircase: StaircaseConfig,
    pub observer: ObserverModel,
    pub session: SessionConfig,
}

impl ExperimentConfig {
    pub fn violations(&self) -> Vec<Violation> {
        let mut v = self.plant.violations("plant");
        v.extend(self.staircase.violations("staircase"));
        if self.staircase.floor_scale < 1.0 {
            v.push(Violation::new(
                "staircase.floor_scale",
                "must be >= 1 (the test spring is never softer than the reference)",
            ));
        }
        v.extend(self.observer.violations("observer"));
        if !(self.session.reference_kappa.is_finite() && self.session.reference_kappa > 0.0) {
            v.push(Violation::new("session.reference_kappa", "must be > 0"));
        }
        if self.session.max_trials == 0 {
            v.push(Violation::new("session.max_trials", "must be >= 1"));
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionPlan {
    pub seed: u64,
    /// Exploration modes (1-4) in presentation order.
    pub mode_order: Vec<u8>,
    pub condition_order: Vec<ConditionMode>,
    pub config: ExperimentConfig,
}

/// Draws the presentation order for `seed`.
pub fn plan_session(seed: u64, config: &ExperimentConfig) -> Result<SessionPlan> {
    config.validate()?;
    let mut rng = rng::stream(seed, rng::PLAN_STREAM);
    let mut mode_order = vec![1u8, 2, 3, 4];
    mode_order.shuffle(&mut rng);

    let condition_order = match config.session.variant_order {
        VariantOrder::Adjacent => {
            let mut order = Vec::with_capacity(7);
            for &mode in &mode_order {
                let mut variants = ConditionMode::variants_of(mode).to_vec();
                variants.shuffle(&mut rng);
                order.extend(variants);
            }
            order
        }
        VariantOrder::Shuffled => {
            let mut order = ConditionMode::ALL.to_vec();
            order.shuffle(&mut rng);
            mode_order.clear();
            for c in &order {
                if !mode_order.contains(&c.exploration_mode()) {
                    mode_order.push(c.exploration_mode());
                }
            }
            order
        }
    };

    Ok(SessionPlan {
        seed,
        mode_order,
        condition_order,
        config: config.clone(),
    })
}

/// One two-interval trial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub condition: ConditionMode,
    pub trial_index: usize,
    pub s_test: f64,
    pub test_interval: Interval,
    pub response: Interval,
    pub correct: bool,
    pub scale_after: f64,
    pub reversal: bool,
    pub step_pair_active: StepPair,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ConditionOutcome {
    Converged(JndEstimate),
    NonConverged { trials: usize, reversals: usize },
}

impl ConditionOutcome {
    pub fn jnd(&self) -> Option<&JndEstimate> {
        match self {
            ConditionOutcome::Converged(j) => Some(j),
            ConditionOutcome::NonConverged { .. } => None,
        }
    }

    pub fn is_converged(&self) -> bool {
        matches!(self, ConditionOutcome::Converged(_))
    }
}

/// Structured log line payload.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum LogEvent {
    SessionStart {
        seed: u64,
        condition_order: Vec<ConditionMode>,
        config: ExperimentConfig,
    },
    ConditionStart {
        condition: ConditionMode,
    },
    AudioCue {
        condition: ConditionMode,
        trial_index: usize,
        cue: String,
    },
    Trial(TrialRecord),
    ConditionEnd {
        condition: ConditionMode,
        trials: usize,
        outcome: ConditionOutcome,
    },
    Break {
        after: ConditionMode,
        minutes: u32,
    },
    SessionEnd {
        converged: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionResult {
    pub condition: ConditionMode,
    pub trials: usize,
    pub outcome: ConditionOutcome,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionResult {
    pub seed: u64,
    pub condition_order: Vec<ConditionMode>,
    pub config: ExperimentConfig,
    /// In presentation order.
    pub conditions: Vec<ConditionResult>,
    pub log: Vec<LogEvent>,
}

impl SessionResult {
    pub fn outcome(&self, condition: ConditionMode) -> Option<&ConditionOutcome> {
        self.conditions
            .iter()
            .find(|c| c.condition == condition)
            .map(|c| &c.outcome)
    }

    pub fn trial_records(&self) -> impl Iterator<Item = &TrialRecord> {
        self.log.iter().filter_map(|e| match e {
            LogEvent::Trial(r) => Some(r),
            _ => None,
        })
    }

    pub fn records_for(&self, condition: ConditionMode) -> Vec<&TrialRecord> {
        self.trial_records().filter(|r| r.condition == condition).collect()
    }

    pub fn all_converged(&self) -> bool {
        self.conditions.iter().all(|c| c.outcome.is_converged())
    }
}

/// Presents one reference/test pair and advances the staircase.
pub fn run_trial<R: Rng + ?Sized>(
    condition: ConditionMode,
    state: StaircaseState,
    observer: &ObserverModel,
    config: &ExperimentConfig,
    rng: &mut R,
) -> Result<(TrialRecord, StaircaseState)> {
    let staircase = &config.staircase;
    if state.is_terminated(staircase) {
        return Err(Error::Protocol(format!(
            "trial requested in {condition} after the staircase terminated"
        )));
    }
    let kappa = config.session.reference_kappa;
    let s_test = state.current_scale;
    let test = SpringParams::new(s_test, kappa)?;
    let reference = SpringParams::reference(kappa);

    let test_interval = Interval::random(rng);
    let response = observer.respond(condition, test, reference, test_interval, &config.plant, rng)?;
    let correct = response == test_interval;

    let trial_index = state.trial_count;
    let mut state = state;
    let step = state.step(correct, staircase)?;
    let record = TrialRecord {
        condition,
        trial_index,
        s_test,
        test_interval,
        response,
        correct,
        scale_after: state.current_scale,
        reversal: step.reversal,
        step_pair_active: step.step_pair,
    };
    Ok((record, state))
}

/// Runs one staircase to termination or to the trial guard.
pub fn run_condition<R: Rng + ?Sized>(
    condition: ConditionMode,
    config: &ExperimentConfig,
    rng: &mut R,
) -> Result<(ConditionOutcome, Vec<TrialRecord>)> {
    let mut state = StaircaseState::init(&config.staircase)?;
    let mut records = Vec::new();
    while !state.is_terminated(&config.staircase) && records.len() < config.session.max_trials {
        let (record, next) = run_trial(condition, state, &config.observer, config, rng)?;
        records.push(record);
        state = next;
    }
    let outcome = if state.is_terminated(&config.staircase) {
        ConditionOutcome::Converged(state.compute_jnd(&config.staircase)?)
    } else {
        ConditionOutcome::NonConverged {
            trials: records.len(),
            reversals: state.reversal_count(),
        }
    };
    Ok((outcome, records))
}

/// Runs every condition of `plan` in order.
pub fn run_session(plan: &SessionPlan) -> Result<SessionResult> {
    let config = &plan.config;
    config.validate()?;
    let mut rng: SimRng = rng::stream(plan.seed, rng::TRIAL_STREAM);

    let mut log = vec![LogEvent::SessionStart {
        seed: plan.seed,
        condition_order: plan.condition_order.clone(),
        config: config.clone(),
    }];
    let mut conditions = Vec::with_capacity(plan.condition_order.len());

    for (i, &condition) in plan.condition_order.iter().enumerate() {
        log.push(LogEvent::ConditionStart { condition });
        let (outcome, records) = run_condition(condition, config, &mut rng)?;
        let trials = records.len();
        for record in records {
            for cue in ["interval 1", "interval 2"] {
                log.push(LogEvent::AudioCue {
                    condition,
                    trial_index: record.trial_index,
                    cue: cue.to_string(),
                });
            }
            log.push(LogEvent::Trial(record));
        }
        log.push(LogEvent::ConditionEnd {
            condition,
            trials,
            outcome: outcome.clone(),
        });
        if i + 1 < plan.condition_order.len() {
            log.push(LogEvent::Break {
                after: condition,
                minutes: BREAK_MINUTES,
            });
        }
        conditions.push(ConditionResult {
            condition,
            trials,
            outcome,
        });
    }
    log.push(LogEvent::SessionEnd {
        converged: conditions.iter().filter(|c| c.outcome.is_converged()).count(),
    });

    Ok(SessionResult {
        seed: plan.seed,
        condition_order: plan.condition_order.clone(),
        config: config.clone(),
        conditions,
        log,
    })
}
