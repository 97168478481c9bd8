//! Simulated participants for two-interval forced-choice trials.
//!
//! [`PsychometricObserver`] answers from a closed-form Weibull psychometric
//! function. [`EmbodiedObserver`] actually explores each spring through the
//! plant, tick by tick, and compares noisy stiffness estimates.
//! [`ObserverModel::ConstantP`] ignores the stimulus entirely and is meant
//! for calibrating the staircase itself.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Violation};
use crate::render::{self, ConditionMode, PlantParams, SpringParams, WristState};

/// Guess rate of a two-alternative task.
pub const GUESS_RATE: f64 = 0.5;
/// Largest lapse rate accepted by configuration checks.
pub const MAX_LAPSE: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interval {
    First,
    Second,
}

impl Interval {
    pub fn other(self) -> Self {
        match self {
            Interval::First => Interval::Second,
            Interval::Second => Interval::First,
        }
    }

    /// Fair coin.
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        if rng.random_bool(0.5) {
            Interval::First
        } else {
            Interval::Second
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PsychometricObserver {
    /// Threshold on `s - 1`.
    pub alpha: f64,
    pub beta: f64,
    pub lapse: f64,
}

impl Default for PsychometricObserver {
    fn default() -> Self {
        Self {
            alpha: 0.15,
            beta: 3.0,
            lapse: 0.02,
        }
    }
}

impl PsychometricObserver {
    /// `0.5 + (0.5 - lapse) * (1 - exp(-((s - 1) / alpha)^beta))`
    pub fn p_correct(&self, s: f64) -> Result<f64> {
        if s.is_nan() || s < 1.0 {
            return Err(Error::InvalidInput(format!("scale must be >= 1, got {s}")));
        }
        let x = (s - 1.0) / self.alpha;
        Ok(GUESS_RATE + (1.0 - GUESS_RATE - self.lapse) * (1.0 - (-x.powf(self.beta)).exp()))
    }

    /// Scale at which the observer is correct with probability `p`, or
    /// `None` if `p` lies outside `[0.5, 1 - lapse)`.
    pub fn scale_for_p(&self, p: f64) -> Option<f64> {
        let span = 1.0 - GUESS_RATE - self.lapse;
        let frac = (p - GUESS_RATE) / span;
        if !(0.0..1.0).contains(&frac) {
            return None;
        }
        Some(1.0 + self.alpha * (-(1.0 - frac).ln()).powf(1.0 / self.beta))
    }

    /// One Bernoulli draw: was the response correct?
    pub fn decide_trial<R: Rng + ?Sized>(&self, s_test: f64, rng: &mut R) -> Result<bool> {
        let p = self.p_correct(s_test)?;
        Ok(rng.random::<f64>() < p)
    }

    pub fn violations(&self, prefix: &str) -> Vec<Violation> {
        let mut v = Vec::new();
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            v.push(Violation::new(format!("{prefix}.alpha"), "must be > 0"));
        }
        if !(self.beta.is_finite() && self.beta > 0.0) {
            v.push(Violation::new(format!("{prefix}.beta"), "must be > 0"));
        }
        check_lapse(self.lapse, prefix, &mut v);
        v
    }
}

fn check_lapse(lapse: f64, prefix: &str, v: &mut Vec<Violation>) {
    if !(0.0..=MAX_LAPSE).contains(&lapse) {
        v.push(Violation::new(
            format!("{prefix}.lapse"),
            format!("must be in [0, {MAX_LAPSE}]"),
        ));
    }
}

/// Single pronate-and-return excursion built from two minimum-jerk
/// segments (out to `amplitude`, back to neutral) of equal length.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplorationTrajectory {
    /// Peak pronation, deg.
    pub amplitude: f64,
    /// Whole excursion, s.
    pub duration: f64,
}

impl Default for ExplorationTrajectory {
    fn default() -> Self {
        Self {
            amplitude: 40.0,
            duration: 2.0,
        }
    }
}

fn minimum_jerk(u: f64) -> f64 {
    let u3 = u * u * u;
    u3 * (10.0 - 15.0 * u + 6.0 * u * u)
}

impl ExplorationTrajectory {
    /// Angle at normalized time `t` in `[0, 1]`.
    pub fn angle_at(&self, t: f64) -> f64 {
        let u = 2.0 * t;
        if u <= 1.0 {
            self.amplitude * minimum_jerk(u)
        } else {
            self.amplitude * (1.0 - minimum_jerk(u - 1.0))
        }
    }

    /// One sample per control tick, both endpoints included.
    pub fn samples(&self, tick_rate: f64) -> Vec<f64> {
        let ticks = (self.duration * tick_rate).round().max(1.0) as usize;
        (0..=ticks)
            .map(|k| self.angle_at(k as f64 / ticks as f64))
            .collect()
    }

    pub fn violations(&self, prefix: &str) -> Vec<Violation> {
        let mut v = Vec::new();
        if !(self.amplitude.is_finite() && self.amplitude > 0.0) {
            v.push(Violation::new(format!("{prefix}.amplitude"), "must be > 0"));
        }
        if !(self.duration.is_finite() && self.duration > 0.0) {
            v.push(Violation::new(format!("{prefix}.duration"), "must be > 0"));
        }
        v
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbodiedObserver {
    pub weber_fraction: f64,
    pub lapse: f64,
    pub trajectory: ExplorationTrajectory,
    /// Multiplier on `weber_fraction` per condition; missing entries are 1.
    pub per_condition_noise_scale: BTreeMap<ConditionMode, f64>,
}

impl Default for EmbodiedObserver {
    fn default() -> Self {
        Self {
            weber_fraction: 0.15,
            lapse: 0.02,
            trajectory: ExplorationTrajectory::default(),
            per_condition_noise_scale: BTreeMap::new(),
        }
    }
}

impl EmbodiedObserver {
    /// Log-space standard deviation of the stiffness estimate in `mode`.
    pub fn noise_sigma(&self, mode: ConditionMode) -> f64 {
        self.weber_fraction * self.per_condition_noise_scale.get(&mode).copied().unwrap_or(1.0)
    }

    /// Noise-free stiffness the observer would read off one exploration:
    /// least-squares slope of felt torque on the rendered (encoder) displacement.
    ///
    /// Exploring wrists follow the trajectory, the others stay at neutral.
    /// Samples whose rendered displacement is within one encoder count of
    /// neutral are dropped.
    pub fn felt_stiffness(
        &self,
        mode: ConditionMode,
        spring: SpringParams,
        plant: &PlantParams,
    ) -> Result<f64> {
        let quantum = plant.quantum_deg();
        let (explore_l, explore_r) = mode.exploring_wrists();
        let (feel_l, _) = mode.feedback_sides();

        let (mut n, mut sx, mut sy, mut sxx, mut sxy) = (0usize, 0.0, 0.0, 0.0, 0.0);
        for theta in self.trajectory.samples(plant.tick_rate) {
            let wrists = WristState::new(
                if explore_l { theta } else { 0.0 },
                if explore_r { theta } else { 0.0 },
            );
            // same composition as render::tick, keeping the encoder reading
            let sensed = WristState::new(
                render::quantize_angle(wrists.theta_l, plant),
                render::quantize_angle(wrists.theta_r, plant),
            );
            let x = mode.rendered_displacement(sensed);
            if x.abs() <= quantum {
                continue;
            }
            let torque = render::saturate(render::render_torques(mode, spring, sensed)?, plant);
            let y = if feel_l { torque.tau_l } else { torque.tau_r };
            n += 1;
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
        }

        let nf = n as f64;
        let var = sxx - sx * sx / nf;
        if n < 2 || var.is_nan() || var <= 0.0 {
            return Err(Error::DegenerateExploration { quantum_deg: quantum });
        }
        Ok((sxy - sx * sy / nf) / var)
    }

    /// Felt stiffness times a lognormal factor `exp(sigma * z)`.
    pub fn explore_and_estimate<R: Rng + ?Sized>(
        &self,
        mode: ConditionMode,
        spring: SpringParams,
        plant: &PlantParams,
        rng: &mut R,
    ) -> Result<f64> {
        let slope = self.felt_stiffness(mode, spring, plant)?;
        let z: f64 = rng.sample(StandardNormal);
        Ok(slope * (self.noise_sigma(mode) * z).exp())
    }

    /// Which interval felt stiffer.
    pub fn decide_trial<R: Rng + ?Sized>(
        &self,
        mode: ConditionMode,
        first: SpringParams,
        second: SpringParams,
        plant: &PlantParams,
        rng: &mut R,
    ) -> Result<Interval> {
        let a = self.explore_and_estimate(mode, first, plant, rng)?;
        let b = self.explore_and_estimate(mode, second, plant, rng)?;
        if rng.random::<f64>() < self.lapse {
            return Ok(Interval::random(rng));
        }
        Ok(if a > b {
            Interval::First
        } else if b > a {
            Interval::Second
        } else {
            Interval::random(rng)
        })
    }

    pub fn violations(&self, prefix: &str) -> Vec<Violation> {
        let mut v = Vec::new();
        if !(self.weber_fraction.is_finite() && self.weber_fraction > 0.0) {
            v.push(Violation::new(format!("{prefix}.weber_fraction"), "must be > 0"));
        }
        check_lapse(self.lapse, prefix, &mut v);
        v.extend(self.trajectory.violations(&format!("{prefix}.trajectory")));
        for (mode, scale) in &self.per_condition_noise_scale {
            if !(scale.is_finite() && *scale > 0.0) {
                v.push(Violation::new(
                    format!("{prefix}.per_condition_noise_scale.{mode}"),
                    "must be > 0",
                ));
            }
        }
        v
    }
}

/// Any simulated participant the session can drive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObserverModel {
    Psychometric(PsychometricObserver),
    Embodied(EmbodiedObserver),
    /// Correct with fixed probability `p` regardless of the stimulus.
    ConstantP { p: f64 },
}

impl Default for ObserverModel {
    fn default() -> Self {
        ObserverModel::Psychometric(PsychometricObserver::default())
    }
}

impl ObserverModel {
    /// The observer's choice for one trial. `test_interval` says where the
    /// test spring was placed; the other interval holds the reference.
    pub fn respond<R: Rng + ?Sized>(
        &self,
        mode: ConditionMode,
        test: SpringParams,
        reference: SpringParams,
        test_interval: Interval,
        plant: &PlantParams,
        rng: &mut R,
    ) -> Result<Interval> {
        let pick = |correct: bool| {
            if correct {
                test_interval
            } else {
                test_interval.other()
            }
        };
        match self {
            ObserverModel::Psychometric(obs) => Ok(pick(obs.decide_trial(test.scale_s, rng)?)),
            ObserverModel::ConstantP { p } => Ok(pick(rng.random::<f64>() < *p)),
            ObserverModel::Embodied(obs) => {
                let (first, second) = match test_interval {
                    Interval::First => (test, reference),
                    Interval::Second => (reference, test),
                };
                obs.decide_trial(mode, first, second, plant, rng)
            }
        }
    }

    pub fn violations(&self, prefix: &str) -> Vec<Violation> {
        match self {
            ObserverModel::Psychometric(obs) => obs.violations(prefix),
            ObserverModel::Embodied(obs) => obs.violations(prefix),
            ObserverModel::ConstantP { p } => {
                if (0.0..=1.0).contains(p) {
                    Vec::new()
                } else {
                    vec![Violation::new(format!("{prefix}.p"), "must be in [0, 1]")]
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::render::REFERENCE_KAPPA;
    use crate::rng;
    use approx::assert_relative_eq;

    fn noiseless() -> EmbodiedObserver {
        EmbodiedObserver {
            weber_fraction: 1e-300,
            lapse: 0.0,
            ..Default::default()
        }
    }

    fn spring(s: f64) -> SpringParams {
        SpringParams::new(s, REFERENCE_KAPPA).unwrap()
    }

    #[test]
    fn psychometric_values() {
        let obs = PsychometricObserver { alpha: 0.15, beta: 2.0, lapse: 0.0 };
        assert_eq!(obs.p_correct(1.0).unwrap(), 0.5);
        let expected = 0.5 + 0.5 * (1.0 - (-1.0f64).exp());
        assert_relative_eq!(obs.p_correct(1.15).unwrap(), expected, epsilon = 1e-12);
        assert!((expected - 0.8161).abs() < 5e-5);

        let lapsing = PsychometricObserver { lapse: 0.02, ..obs };
        assert_relative_eq!(lapsing.p_correct(1e6).unwrap(), 0.98, epsilon = 1e-12);
        assert!(matches!(obs.p_correct(0.99), Err(Error::InvalidInput(_))));
        assert!(obs.p_correct(f64::NAN).is_err());
    }

    #[test]
    fn scale_for_p_inverts() {
        let obs = PsychometricObserver::default();
        for p in [0.6, 0.75, 0.8327, 0.95] {
            let s = obs.scale_for_p(p).unwrap();
            assert_relative_eq!(obs.p_correct(s).unwrap(), p, epsilon = 1e-12);
        }
        assert_eq!(obs.scale_for_p(0.99), None);
    }

    #[test]
    fn bernoulli_draws() {
        let sure = PsychometricObserver { alpha: 1e-9, beta: 2.0, lapse: 0.0 };
        let mut r = rng::stream(1, 0);
        assert!((0..1000).all(|_| sure.decide_trial(1.05, &mut r).unwrap()));

        let obs = PsychometricObserver::default();
        let mut r = rng::stream(2, 0);
        let hits = (0..10_000).filter(|_| obs.decide_trial(1.0, &mut r).unwrap()).count();
        assert!((hits as f64 / 10_000.0 - 0.5).abs() < 0.02);

        let draw = |seed| {
            let mut r = rng::stream(seed, 0);
            (0..200).map(|_| obs.decide_trial(1.1, &mut r).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(draw(9), draw(9));
    }

    #[test]
    fn trajectory_shape() {
        let tr = ExplorationTrajectory::default();
        let samples = tr.samples(1000.0);
        assert_eq!(samples.len(), 2001);
        assert_eq!(samples[0], 0.0);
        assert_eq!(*samples.last().unwrap(), 0.0);
        assert_eq!(samples[1000], 40.0);
        // single excursion: rises then falls
        assert!(samples[..=1000].windows(2).all(|w| w[1] >= w[0]));
        assert!(samples[1000..].windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn noiseless_slope_recovery() {
        let plant = PlantParams::default();
        let obs = noiseless();
        let mut r = rng::stream(3, 0);
        let est = obs.explore_and_estimate(ConditionMode::C1, spring(1.2), &plant, &mut r).unwrap();
        assert_relative_eq!(est, 1.8, epsilon = 1e-12);
        let est = obs.explore_and_estimate(ConditionMode::C2L, spring(1.0), &plant, &mut r).unwrap();
        assert_relative_eq!(est, 1.5, epsilon = 1e-12);
    }

    #[test]
    fn noiseless_estimate_same_in_every_condition() {
        let plant = PlantParams::default();
        let obs = noiseless();
        for s in [1.0, 1.13, 1.5, 2.2] {
            for mode in ConditionMode::ALL {
                let est = obs.felt_stiffness(mode, spring(s), &plant).unwrap();
                assert_relative_eq!(est, s * REFERENCE_KAPPA, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn sub_quantum_exploration_is_degenerate() {
        let plant = PlantParams::default();
        let obs = EmbodiedObserver {
            trajectory: ExplorationTrajectory { amplitude: 0.01, duration: 2.0 },
            ..noiseless()
        };
        let mut r = rng::stream(4, 0);
        let err = obs.explore_and_estimate(ConditionMode::C1, spring(1.2), &plant, &mut r);
        assert!(matches!(err, Err(Error::DegenerateExploration { .. })));
        let err = obs.decide_trial(ConditionMode::C3L, spring(1.2), spring(1.0), &plant, &mut r);
        assert!(matches!(err, Err(Error::DegenerateExploration { .. })));
    }

    #[test]
    fn ideal_embodied_observer_always_right() {
        let plant = PlantParams::default();
        let obs = noiseless();
        let mut r = rng::stream(5, 0);
        for _ in 0..20 {
            assert_eq!(
                obs.decide_trial(ConditionMode::C4R, spring(1.3), spring(1.0), &plant, &mut r).unwrap(),
                Interval::First
            );
            assert_eq!(
                obs.decide_trial(ConditionMode::C4R, spring(1.0), spring(1.3), &plant, &mut r).unwrap(),
                Interval::Second
            );
        }
    }

    #[test]
    fn noise_sigma_uses_condition_scale() {
        let mut obs = EmbodiedObserver::default();
        obs.per_condition_noise_scale.insert(ConditionMode::C4L, 1.5);
        assert_relative_eq!(obs.noise_sigma(ConditionMode::C4L), 0.225, epsilon = 1e-15);
        assert_eq!(obs.noise_sigma(ConditionMode::C3L), 0.15);
    }

    #[test]
    fn violations_reported() {
        assert!(ObserverModel::default().violations("observer").is_empty());
        let bad = ObserverModel::Psychometric(PsychometricObserver { lapse: 0.5, ..Default::default() });
        assert_eq!(bad.violations("observer")[0].field, "observer.lapse");
        let mut emb = EmbodiedObserver { weber_fraction: 0.0, ..Default::default() };
        emb.per_condition_noise_scale.insert(ConditionMode::C2R, -1.0);
        let fields: Vec<_> = ObserverModel::Embodied(emb)
            .violations("observer")
            .into_iter()
            .map(|v| v.field)
            .collect();
        assert_eq!(fields, ["observer.weber_fraction", "observer.per_condition_noise_scale.C2R"]);
        assert_eq!(ObserverModel::ConstantP { p: 1.5 }.violations("observer").len(), 1);
    }
}
