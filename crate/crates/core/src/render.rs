//! Virtual torsion spring rendering.
//!
//! Each presentation condition maps the two wrist displacements to the two
//! motor torques. Torques are the literal signed form `s * kappa * theta`
//! (positive pronation in, positive torque out); which way a consumer pushes
//! back is its own concern.
//!
//! [`tick`] is one pass of the 1 kHz control loop: quantize both encoder
//! readings, evaluate the condition's spring law, clamp to the motor limit.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Violation};

/// Reference spring stiffness used throughout the protocol, mNm/deg.
pub const REFERENCE_KAPPA: f64 = 1.5;

/// Presentation condition. `L`/`R` variants mirror each other.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ConditionMode {
    /// Bimanual: both wrists explore and both feel `s*kappa*(theta_L + theta_R)`.
    C1,
    /// Unimanual left; the far end of the spring is grounded.
    C2L,
    C2R,
    /// Left wrist held at neutral, right explores; both feel the right displacement.
    C3L,
    C3R,
    /// Both explore; torque is withheld from the left wrist.
    C4L,
    C4R,
}

impl ConditionMode {
    /// All seven conditions in table order.
    pub const ALL: [ConditionMode; 7] = [
        ConditionMode::C1,
        ConditionMode::C2L,
        ConditionMode::C2R,
        ConditionMode::C3L,
        ConditionMode::C3R,
        ConditionMode::C4L,
        ConditionMode::C4R,
    ];

    /// Exploration mode, 1 through 4.
    pub fn exploration_mode(self) -> u8 {
        use ConditionMode::*;
        match self {
            C1 => 1,
            C2L | C2R => 2,
            C3L | C3R => 3,
            C4L | C4R => 4,
        }
    }

    /// The conditions belonging to exploration mode `mode` (1..=4).
    pub fn variants_of(mode: u8) -> &'static [ConditionMode] {
        use ConditionMode::*;
        match mode {
            1 => &[C1],
            2 => &[C2L, C2R],
            3 => &[C3L, C3R],
            4 => &[C4L, C4R],
            _ => &[],
        }
    }

    /// The L/R counterpart. `C1` is its own mirror.
    pub fn mirror(self) -> Self {
        use ConditionMode::*;
        match self {
            C1 => C1,
            C2L => C2R,
            C2R => C2L,
            C3L => C3R,
            C3R => C3L,
            C4L => C4R,
            C4R => C4L,
        }
    }

    pub fn as_str(self) -> &'static str {
        use ConditionMode::*;
        match self {
            C1 => "C1",
            C2L => "C2L",
            C2R => "C2R",
            C3L => "C3L",
            C3R => "C3R",
            C4L => "C4L",
            C4R => "C4R",
        }
    }

    /// Displacement that enters the spring law for this condition.
    pub fn rendered_displacement(self, wrists: WristState) -> f64 {
        use ConditionMode::*;
        match self {
            C1 | C4L | C4R => wrists.theta_l + wrists.theta_r,
            C2L | C3R => wrists.theta_l,
            C2R | C3L => wrists.theta_r,
        }
    }

    /// Which wrists (left, right) receive torque feedback.
    pub fn feedback_sides(self) -> (bool, bool) {
        use ConditionMode::*;
        match self {
            C1 | C3L | C3R => (true, true),
            C2L | C4R => (true, false),
            C2R | C4L => (false, true),
        }
    }

    /// Which wrists (left, right) move during exploration. A wrist that does
    /// not explore is held at neutral.
    pub fn exploring_wrists(self) -> (bool, bool) {
        use ConditionMode::*;
        match self {
            C1 | C4L | C4R => (true, true),
            C2L | C3R => (true, false),
            C2R | C3L => (false, true),
        }
    }
}

impl fmt::Display for ConditionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ConditionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ConditionMode::ALL
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidInput(format!("unknown condition {s:?}")))
    }
}

/// Spring presented in one interval: `scale_s` times the reference stiffness.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpringParams {
    pub scale_s: f64,
    /// mNm/deg
    pub kappa: f64,
}

impl SpringParams {
    pub fn new(scale_s: f64, kappa: f64) -> Result<Self> {
        let spring = Self { scale_s, kappa };
        spring.check()?;
        Ok(spring)
    }

    pub fn reference(kappa: f64) -> Self {
        Self { scale_s: 1.0, kappa }
    }

    /// Stiffness actually rendered, mNm/deg.
    pub fn stiffness(&self) -> f64 {
        self.scale_s * self.kappa
    }

    fn check(&self) -> Result<()> {
        if !(self.scale_s.is_finite() && self.scale_s >= 1.0) {
            return Err(Error::InvalidInput(format!(
                "spring scale must be >= 1, got {}",
                self.scale_s
            )));
        }
        if !(self.kappa.is_finite() && self.kappa > 0.0) {
            return Err(Error::InvalidInput(format!(
                "spring stiffness must be positive, got {}",
                self.kappa
            )));
        }
        Ok(())
    }
}

/// Wrist angles in degrees from neutral, positive in pronation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WristState {
    pub theta_l: f64,
    pub theta_r: f64,
}

impl WristState {
    pub const NEUTRAL: WristState = WristState {
        theta_l: 0.0,
        theta_r: 0.0,
    };

    pub fn new(theta_l: f64, theta_r: f64) -> Self {
        Self { theta_l, theta_r }
    }

    /// Left/right swapped.
    pub fn mirrored(self) -> Self {
        Self::new(self.theta_r, self.theta_l)
    }
}

/// Motor torques in mNm.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TorqueCommand {
    pub tau_l: f64,
    pub tau_r: f64,
}

impl TorqueCommand {
    pub fn new(tau_l: f64, tau_r: f64) -> Self {
        Self { tau_l, tau_r }
    }

    pub fn mirrored(self) -> Self {
        Self::new(self.tau_r, self.tau_l)
    }
}

/// Device model shared by both wrists.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantParams {
    /// Peak motor torque, mNm.
    pub tau_max: f64,
    /// 500 CPT with x4 quadrature decoding.
    pub encoder_counts_per_rev: u32,
    /// Control loop rate, Hz.
    pub tick_rate: f64,
}

impl Default for PlantParams {
    fn default() -> Self {
        Self {
            tau_max: 467.0,
            encoder_counts_per_rev: 2000,
            tick_rate: 1000.0,
        }
    }
}

impl PlantParams {
    /// Angle represented by one encoder count, degrees.
    pub fn quantum_deg(&self) -> f64 {
        360.0 / f64::from(self.encoder_counts_per_rev)
    }

    pub fn violations(&self, prefix: &str) -> Vec<Violation> {
        let mut v = Vec::new();
        if !(self.tau_max.is_finite() && self.tau_max > 0.0) {
            v.push(Violation::new(format!("{prefix}.tau_max"), "must be > 0"));
        }
        if self.encoder_counts_per_rev == 0 {
            v.push(Violation::new(
                format!("{prefix}.encoder_counts_per_rev"),
                "must be > 0",
            ));
        }
        if !(self.tick_rate.is_finite() && self.tick_rate > 0.0) {
            v.push(Violation::new(format!("{prefix}.tick_rate"), "must be > 0"));
        }
        v
    }
}

/// Unsaturated torques for `mode`.
pub fn render_torques(
    mode: ConditionMode,
    spring: SpringParams,
    wrists: WristState,
) -> Result<TorqueCommand> {
    if !(wrists.theta_l.is_finite() && wrists.theta_r.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "wrist angles must be finite, got ({}, {})",
            wrists.theta_l, wrists.theta_r
        )));
    }
    spring.check()?;

    let s = spring.scale_s;
    let k = spring.kappa;
    let (l, r) = (wrists.theta_l, wrists.theta_r);
    use ConditionMode::*;
    let torques = match mode {
        C1 => {
            let tau = s * k * (l + r);
            TorqueCommand::new(tau, tau)
        }
        C2L => TorqueCommand::new(s * k * l, 0.0),
        C2R => TorqueCommand::new(0.0, s * k * r),
        C3L => {
            let tau = s * k * r;
            TorqueCommand::new(tau, tau)
        }
        C3R => {
            let tau = s * k * l;
            TorqueCommand::new(tau, tau)
        }
        C4L => TorqueCommand::new(0.0, s * k * (l + r)),
        C4R => TorqueCommand::new(s * k * (l + r), 0.0),
    };
    Ok(torques)
}

/// Symmetric clamp of each component to `[-tau_max, tau_max]`.
pub fn saturate(raw: TorqueCommand, plant: &PlantParams) -> TorqueCommand {
    let lim = plant.tau_max;
    TorqueCommand::new(raw.tau_l.clamp(-lim, lim), raw.tau_r.clamp(-lim, lim))
}

/// Encoder reading for a true angle: whole counts, truncated toward zero.
///
/// Values within 1e-9 counts of a count boundary snap to that boundary so
/// that re-quantizing an already quantized angle is exact.
pub fn quantize_angle(theta: f64, plant: &PlantParams) -> f64 {
    let quantum = plant.quantum_deg();
    let counts = theta / quantum;
    let nearest = counts.round();
    let whole = if (counts - nearest).abs() < 1e-9 {
        nearest
    } else {
        counts.trunc()
    };
    // keeps -0.0 out of logs
    if whole == 0.0 {
        0.0
    } else {
        whole * quantum
    }
}

/// One control-loop tick: quantize, render, saturate.
pub fn tick(
    mode: ConditionMode,
    spring: SpringParams,
    wrists: WristState,
    plant: &PlantParams,
) -> Result<TorqueCommand> {
    if !(wrists.theta_l.is_finite() && wrists.theta_r.is_finite()) {
        return Err(Error::InvalidInput("wrist angles must be finite".into()));
    }
    let sensed = WristState::new(
        quantize_angle(wrists.theta_l, plant),
        quantize_angle(wrists.theta_r, plant),
    );
    Ok(saturate(render_torques(mode, spring, sensed)?, plant))
}
