#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod channel;
pub mod error;
pub mod estimator;
pub mod geometry;
pub mod harness;

pub use bounds::{bounds, BoundReport, Fim};
pub use channel::{observe, Observation, RfConstants, RisPhaseProfile, Scenario, UeState, C64};
pub use error::{Error, Result};
pub use estimator::{
    find_pos_vel, find_pos_vel_with, ConvergenceConfig, EstimationResult, GridSearcher, GridSpec,
};
pub use geometry::{RisArray, Spherical, Vec3};
pub use harness::{
    run_sweep, run_trial, Experiment, ExperimentConfig, ScenarioParams, StageKind, SweepAxis,
    SweepResult,
};
