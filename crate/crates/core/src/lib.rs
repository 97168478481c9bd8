//! Simulation engine for bimanual stiffness discrimination experiments.
//!
//! The crate is split along the experiment's natural seams:
//!
//! * [`render`] evaluates the virtual torsion spring for each presentation
//!   condition, one 1 kHz tick at a time, through a simple device plant
//!   (encoder quantization and torque saturation).
//! * [`staircase`] is the 1-up-3-down transformed weighted staircase with its
//!   two-phase step schedule, reversal log and JND read-out.
//! * [`observer`] holds simulated participants for two-interval forced-choice
//!   trials.
//! * [`session`] runs the seven-condition protocol for one participant.
//! * [`harness`] wires sessions into reproducible Monte Carlo batches and
//!   owns every on-disk format.

pub mod error;
pub mod harness;
pub mod observer;
pub mod render;
pub mod rng;
pub mod session;
pub mod staircase;
mod stats;

pub use error::{Error, Result, Violation};
pub use harness::{BatchSummary, HarnessConfig};
pub use observer::{
    EmbodiedObserver, ExplorationTrajectory, Interval, ObserverModel, PsychometricObserver,
};
pub use render::{ConditionMode, PlantParams, SpringParams, TorqueCommand, WristState};
pub use rng::SimRng;
pub use session::{
    ConditionOutcome, ExperimentConfig, LogEvent, SessionConfig, SessionPlan, SessionResult,
    TrialRecord,
};
pub use staircase::{Direction, JndEstimate, StaircaseConfig, StaircaseState, StepPair};
