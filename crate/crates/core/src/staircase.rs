//! 1-up-3-down transformed weighted staircase with fixed additive steps.
//!
//! Three consecutive correct responses move the test spring down by the
//! active down step, any incorrect response moves it up by the active up
//! step. Steps are fractions of the reference stiffness added to the scale
//! factor. The step pair shrinks once the reversal count reaches
//! `step_change_after_reversals`; the run ends at `terminate_after_reversals`
//! reversals and the JND is read from the last `jnd_window_reversals` of them.
//!
//! The scale never drops below `floor_scale`. A step swallowed by the floor
//! still sets the direction, so a floor-pinned run keeps reversing normally.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Violation};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Up,
    Down,
}

impl Direction {
    pub fn opposite(self) -> Self {
        match self {
            Direction::Up => Direction::Down,
            Direction::Down => Direction::Up,
        }
    }
}

/// Which step pair a trial used.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepPair {
    Initial,
    Late,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StaircaseConfig {
    pub start_scale: f64,
    pub up_step_initial: f64,
    pub down_step_initial: f64,
    pub up_step_late: f64,
    pub down_step_late: f64,
    pub step_change_after_reversals: usize,
    pub terminate_after_reversals: usize,
    pub jnd_window_reversals: usize,
    pub floor_scale: f64,
}

impl Default for StaircaseConfig {
    fn default() -> Self {
        Self {
            start_scale: 1.50,
            up_step_initial: 0.10,
            down_step_initial: 0.0732,
            up_step_late: 0.05,
            down_step_late: 0.0366,
            step_change_after_reversals: 2,
            terminate_after_reversals: 10,
            jnd_window_reversals: 8,
            floor_scale: 1.0,
        }
    }
}

impl StaircaseConfig {
    /// `(up, down)` for the given phase.
    pub fn steps(&self, pair: StepPair) -> (f64, f64) {
        match pair {
            StepPair::Initial => (self.up_step_initial, self.down_step_initial),
            StepPair::Late => (self.up_step_late, self.down_step_late),
        }
    }

    /// Step pair in force when `reversals` reversals have been logged.
    pub fn step_pair_for(&self, reversals: usize) -> StepPair {
        if reversals >= self.step_change_after_reversals {
            StepPair::Late
        } else {
            StepPair::Initial
        }
    }

    /// Proportion correct at which the expected scale drift is zero for the
    /// given step pair. See [`equilibrium_proportion`].
    pub fn equilibrium_proportion(&self, pair: StepPair) -> f64 {
        let (up, down) = self.steps(pair);
        equilibrium_proportion(up, down)
    }

    pub fn violations(&self, prefix: &str) -> Vec<Violation> {
        let mut v = Vec::new();
        let steps = [
            ("up_step_initial", self.up_step_initial),
            ("down_step_initial", self.down_step_initial),
            ("up_step_late", self.up_step_late),
            ("down_step_late", self.down_step_late),
        ];
        for (name, step) in steps {
            if !(step.is_finite() && step > 0.0) {
                v.push(Violation::new(format!("{prefix}.{name}"), "must be > 0"));
            }
        }
        if !self.floor_scale.is_finite() {
            v.push(Violation::new(format!("{prefix}.floor_scale"), "must be finite"));
        }
        if !self.start_scale.is_finite() || self.start_scale < self.floor_scale {
            v.push(Violation::new(
                format!("{prefix}.start_scale"),
                "must be finite and >= floor_scale",
            ));
        }
        if self.terminate_after_reversals == 0 {
            v.push(Violation::new(
                format!("{prefix}.terminate_after_reversals"),
                "must be >= 1",
            ));
        }
        if self.jnd_window_reversals == 0 || self.jnd_window_reversals > self.terminate_after_reversals {
            v.push(Violation::new(
                format!("{prefix}.jnd_window_reversals"),
                "must be in 1..=terminate_after_reversals",
            ));
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations("staircase");
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v))
        }
    }
}

/// Proportion correct `p` with `p^3 = up / (up + down)`.
///
/// A down step needs three correct responses in a row (probability `p^3`)
/// and anything else ends in an up step, so the expected movement per
/// completed run is `-p^3 * down + (1 - p^3) * up`.
pub fn equilibrium_proportion(up_step: f64, down_step: f64) -> f64 {
    (up_step / (up_step + down_step)).cbrt()
}

/// A logged change of direction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reversal {
    /// Scale of the trial on which the direction changed.
    pub scale: f64,
    /// Direction taken at the reversal.
    pub direction: Direction,
    /// Zero-based trial index of the reversing trial.
    pub trial: usize,
}

/// What one response did to the staircase.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepEvent {
    pub moved: Option<Direction>,
    pub reversal: bool,
    pub step_pair: StepPair,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StaircaseState {
    pub current_scale: f64,
    /// Correct responses since the last step, 0..=2.
    pub consecutive_correct: u8,
    pub last_direction: Option<Direction>,
    pub reversals: Vec<Reversal>,
    pub trial_count: usize,
}

impl StaircaseState {
    pub fn init(config: &StaircaseConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            current_scale: config.start_scale,
            consecutive_correct: 0,
            last_direction: None,
            reversals: Vec::new(),
            trial_count: 0,
        })
    }

    pub fn reversal_count(&self) -> usize {
        self.reversals.len()
    }

    pub fn reversal_scales(&self) -> Vec<f64> {
        self.reversals.iter().map(|r| r.scale).collect()
    }

    pub fn active_step_pair(&self, config: &StaircaseConfig) -> StepPair {
        config.step_pair_for(self.reversals.len())
    }

    pub fn is_terminated(&self, config: &StaircaseConfig) -> bool {
        self.reversals.len() >= config.terminate_after_reversals
    }

    /// Applies one response and returns the next state.
    pub fn update(mut self, correct: bool, config: &StaircaseConfig) -> Result<Self> {
        self.step(correct, config)?;
        Ok(self)
    }

    /// In-place form of [`update`](Self::update) that also reports what
    /// happened.
    pub fn step(&mut self, correct: bool, config: &StaircaseConfig) -> Result<StepEvent> {
        if self.is_terminated(config) {
            return Err(Error::Protocol(format!(
                "staircase already terminated after {} reversals",
                self.reversals.len()
            )));
        }
        let step_pair = self.active_step_pair(config);
        let (up, down) = config.steps(step_pair);
        let trial = self.trial_count;
        self.trial_count += 1;

        let moved = if correct {
            if self.consecutive_correct < 2 {
                self.consecutive_correct += 1;
                return Ok(StepEvent {
                    moved: None,
                    reversal: false,
                    step_pair,
                });
            }
            Direction::Down
        } else {
            Direction::Up
        };

        let reversal = self.last_direction == Some(moved.opposite());
        if reversal {
            self.reversals.push(Reversal {
                scale: self.current_scale,
                direction: moved,
                trial,
            });
        }
        let raw = match moved {
            Direction::Up => self.current_scale + up,
            Direction::Down => self.current_scale - down,
        };
        self.current_scale = raw.max(config.floor_scale);
        self.consecutive_correct = 0;
        self.last_direction = Some(moved);

        Ok(StepEvent {
            moved: Some(moved),
            reversal,
            step_pair,
        })
    }

    /// Mean of the last `jnd_window_reversals` reversal scales, as percent
    /// above the reference.
    pub fn compute_jnd(&self, config: &StaircaseConfig) -> Result<JndEstimate> {
        if !self.is_terminated(config) {
            return Err(Error::Protocol(format!(
                "JND requested after {} of {} reversals",
                self.reversals.len(),
                config.terminate_after_reversals
            )));
        }
        let window = config.jnd_window_reversals;
        let used: Vec<f64> = self.reversals[self.reversals.len() - window..]
            .iter()
            .map(|r| r.scale)
            .collect();
        Ok(JndEstimate::from_reversal_scales(used))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JndEstimate {
    pub jnd_percent: f64,
    pub reversal_scales_used: Vec<f64>,
}

impl JndEstimate {
    pub fn from_reversal_scales(used: Vec<f64>) -> Self {
        let mean = used.iter().sum::<f64>() / used.len() as f64;
        Self {
            jnd_percent: (mean - 1.0) * 100.0,
            reversal_scales_used: used,
        }
    }

    /// Mean reversal scale the estimate was read from.
    pub fn mean_scale(&self) -> f64 {
        1.0 + self.jnd_percent / 100.0
    }
}
