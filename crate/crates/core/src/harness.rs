//! Monte-Carlo experiment engine: seeded sweeps over distance, speed, Rician
//! factor or SNR offset, RMSE aggregation against the error bounds, and CSV
//! output.

use std::io::Write;
use std::time::Duration;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{bounds, BoundReport};
use crate::channel::{
    channel_gain, db_to_linear, dbm_to_watts, observe, RfConstants, RisPhaseProfile, Scenario,
    UeState, C64,
};
use crate::error::{Error, Result};
use crate::estimator::{
    alpha_hat, find_pos_vel_with, ref_pos_gain, ref_vel, refine_from_grid, ConvergenceConfig,
    GridSearcher, GridSpec, SearchRegion, Stage,
};
use crate::geometry::{build_upa, Vec3};

/// Header of every sweep CSV.
pub const CSV_HEADER: [&str; 13] = [
    "sweep_axis",
    "sweep_value",
    "stage",
    "rmse_pos_m",
    "rmse_vel_mps",
    "peb_m",
    "veb_mps",
    "mean_iters_outer",
    "mean_iters_grid",
    "mean_iters_descent",
    "failures",
    "trials",
    "seed",
];

/// Smallest RIS-UE distance accepted in a sweep (m).
pub const MIN_DISTANCE: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// RIS-UE distance ρ (m).
    Distance,
    /// UE speed (m/s).
    Speed,
    /// Rician factor of the multipath model.
    RicianK,
    /// Gain offset added to the path-loss SNR (dB).
    SnrOffset,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Distance => "distance",
            SweepAxis::Speed => "speed",
            SweepAxis::RicianK => "rician_k",
            SweepAxis::SnrOffset => "snr_offset",
        }
    }
}

/// Estimator stage evaluated per trial.
///
/// `Grid` is the initialization alone, `RefPos` refines it with the true
/// velocity, `RefVel` estimates the velocity from zero with the true
/// position, and `Full` runs the whole pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageKind {
    Grid,
    RefPos,
    RefVel,
    Full,
}

impl StageKind {
    pub fn name(self) -> &'static str {
        match self {
            StageKind::Grid => "grid",
            StageKind::RefPos => "ref_pos",
            StageKind::RefVel => "ref_vel",
            StageKind::Full => "full",
        }
    }

    fn needs_grid(self) -> bool {
        matches!(self, StageKind::Grid | StageKind::RefPos | StageKind::Full)
    }
}

/// Physical scenario in SI units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioParams {
    pub carrier_freq: f64,
    pub bandwidth: f64,
    /// Pilot spacing (s); `1/W` when absent.
    pub symbol_period: Option<f64>,
    /// Transmit power (W).
    pub tx_power: f64,
    /// Noise PSD (W/Hz).
    pub noise_psd: f64,
    /// Noise figure (linear).
    pub noise_figure: f64,
    pub tx_gain: f64,
    pub rx_gain: f64,
    pub global_phase: f64,
    pub ris_rows: usize,
    pub ris_cols: usize,
    /// Element spacing (m); `λ/2` when absent.
    pub element_spacing: Option<f64>,
    pub bs_position: [f64; 3],
    /// UE position and velocity direction; normalized on use.
    pub ue_direction: [f64; 3],
    pub rho: f64,
    pub speed: f64,
    pub num_pilots: usize,
    pub profile_seed: u64,
    /// Rician factor; `None` disables multipath.
    pub rician_k: Option<f64>,
    /// Gain offset relative to the path-loss model (dB).
    pub snr_offset_db: f64,
    pub noise: bool,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self {
            carrier_freq: 28e9,
            bandwidth: 1e6,
            symbol_period: None,
            tx_power: dbm_to_watts(20.0),
            noise_psd: dbm_to_watts(-174.0),
            noise_figure: db_to_linear(8.0),
            tx_gain: 1.0,
            rx_gain: 1.0,
            global_phase: 0.0,
            ris_rows: 32,
            ris_cols: 32,
            element_spacing: None,
            bs_position: [3.0, 3.0, 1.0],
            ue_direction: [-1.0, 2.0, 1.0],
            rho: 2.0,
            speed: 1.0,
            num_pilots: 40,
            profile_seed: 0,
            rician_k: None,
            snr_offset_db: 0.0,
            noise: true,
        }
    }
}

impl ScenarioParams {
    fn direction(&self) -> Result<Vec3> {
        let d = Vec3::from(self.ue_direction);
        let n = d.norm();
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::InvalidInput(
                "ue_direction must be a non-zero vector".into(),
            ));
        }
        Ok(d / n)
    }

    pub fn rf(&self) -> Result<RfConstants> {
        let mut rf = RfConstants::new(
            self.carrier_freq,
            self.bandwidth,
            self.tx_power,
            self.noise_psd,
            self.noise_figure,
        )?
        .with_antenna_gains(self.tx_gain, self.rx_gain)
        .with_global_phase(self.global_phase);
        if let Some(ts) = self.symbol_period {
            rf = rf.with_symbol_period(ts)?;
        }
        Ok(rf)
    }

    pub fn validate(&self) -> Result<()> {
        self.rf()?;
        if !(self.tx_gain > 0.0 && self.rx_gain > 0.0) {
            return Err(Error::InvalidInput("antenna gains must be positive".into()));
        }
        if self.ris_rows == 0 || self.ris_cols == 0 {
            return Err(Error::InvalidInput(
                "RIS must have at least one element".into(),
            ));
        }
        if let Some(s) = self.element_spacing {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "element_spacing must be positive, got {s}"
                )));
            }
        }
        if self.num_pilots < 3 {
            return Err(Error::InvalidInput(format!(
                "at least 3 pilots are required, got L = {}",
                self.num_pilots
            )));
        }
        self.direction()?;
        if !(self.rho >= MIN_DISTANCE && self.rho.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "rho must be at least {MIN_DISTANCE} m, got {}",
                self.rho
            )));
        }
        if !(self.speed >= 0.0 && self.speed.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "speed must be non-negative, got {}",
                self.speed
            )));
        }
        if let Some(k) = self.rician_k {
            if !(k > 0.0 && k.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "rician_k must be positive, got {k}"
                )));
            }
        }
        if !self.snr_offset_db.is_finite() || !self.global_phase.is_finite() {
            return Err(Error::InvalidInput(
                "snr_offset_db and global_phase must be finite".into(),
            ));
        }
        if self.bs_position.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput("bs_position must be finite".into()));
        }
        Ok(())
    }

    /// Scenario with the RIS profile drawn from `profile_seed`.
    pub fn build(&self) -> Result<Scenario> {
        self.build_with_profile_seed(self.profile_seed)
    }

    pub fn build_with_profile_seed(&self, profile_seed: u64) -> Result<Scenario> {
        self.validate()?;
        let rf = self.rf()?;
        let spacing = self.element_spacing.unwrap_or(rf.wavelength / 2.0);
        let ris = build_upa(self.ris_rows, self.ris_cols, spacing)?;
        let bs = Vec3::from(self.bs_position);
        let dir = self.direction()?;
        let position = dir * self.rho;
        let alpha = channel_gain(&position, &rf, ris.reference(), &bs)?
            * db_to_linear(self.snr_offset_db).sqrt();
        let profile = RisPhaseProfile::random(self.num_pilots, ris.element_count(), profile_seed)?;
        let ue = UeState {
            position,
            velocity: dir * self.speed,
            alpha,
        };
        let mut s = Scenario::new(rf, ris, bs, ue, profile)?.with_noise(self.noise);
        if let Some(k) = self.rician_k {
            s = s.with_multipath(k)?;
        }
        Ok(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub scenario: ScenarioParams,
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub stages: Vec<StageKind>,
    /// Draw a fresh RIS profile per trial instead of one per sweep.
    pub per_trial_profiles: bool,
    pub grid: GridSpec,
    pub convergence: ConvergenceConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioParams::default(),
            axis: SweepAxis::Distance,
            values: vec![1.0, 2.0, 4.0, 6.0, 8.0, 10.0],
            trials: 100,
            seed: 0,
            stages: vec![StageKind::Full],
            per_trial_profiles: false,
            grid: GridSpec::default(),
            convergence: ConvergenceConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.grid.validate()?;
        self.convergence.validate()?;
        if self.trials == 0 {
            return Err(Error::InvalidInput("trials must be at least 1".into()));
        }
        if self.values.is_empty() {
            return Err(Error::InvalidInput("sweep values must not be empty".into()));
        }
        if self.stages.is_empty() {
            return Err(Error::InvalidInput("at least one stage is required".into()));
        }
        for &v in &self.values {
            let ok = match self.axis {
                SweepAxis::Distance => v >= MIN_DISTANCE && v.is_finite(),
                SweepAxis::Speed => v >= 0.0 && v.is_finite(),
                SweepAxis::RicianK => v > 0.0 && v.is_finite(),
                SweepAxis::SnrOffset => v.is_finite(),
            };
            if !ok {
                return Err(Error::InvalidInput(format!(
                    "invalid {} sweep value {v}",
                    self.axis.name()
                )));
            }
        }
        Ok(())
    }

    /// Multipath-free scenario at sweep point `value`, derived from `base`
    /// so that the RIS weights stay shared.
    pub fn line_of_sight_at(&self, base: &Scenario, value: f64) -> Result<Scenario> {
        let p = &self.scenario;
        let dir = p.direction()?;
        let gain_at = |position: &Vec3, offset_db: f64| -> Result<C64> {
            Ok(channel_gain(
                position,
                base.rf(),
                base.ris().reference(),
                base.bs_position(),
            )? * db_to_linear(offset_db).sqrt())
        };
        let mut ue = *base.ue();
        match self.axis {
            SweepAxis::Distance => {
                ue.position = dir * value;
                ue.alpha = gain_at(&ue.position, p.snr_offset_db)?;
            }
            SweepAxis::Speed => ue.velocity = dir * value,
            SweepAxis::RicianK => {}
            SweepAxis::SnrOffset => ue.alpha = gain_at(&ue.position, value)?,
        }
        base.with_ue(ue)
    }

    /// Scenario at sweep point `value`, including multipath when configured.
    pub fn scenario_at(&self, base: &Scenario, value: f64) -> Result<Scenario> {
        let los = self.line_of_sight_at(base, value)?;
        let k = match self.axis {
            SweepAxis::RicianK => Some(value),
            _ => self.scenario.rician_k,
        };
        match k {
            Some(k) => los.with_multipath(k),
            None => Ok(los),
        }
    }
}

/// Sub-seed for one trial, a pure function of the master seed and indices.
pub fn trial_seed(master: u64, point: usize, trial: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(point as u64);
    rng.set_word_pos(2 * trial as u128);
    rng.next_u64()
}

/// Outcome of one stage on one trial.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageOutcome {
    pub stage: StageKind,
    pub position_error: Option<f64>,
    pub velocity_error: Option<f64>,
    pub outer_iterations: usize,
    pub grid_iterations: usize,
    pub descent_iterations: usize,
    pub error: Option<String>,
}

impl StageOutcome {
    fn failed(stage: StageKind, e: &Error) -> Self {
        Self {
            stage,
            position_error: None,
            velocity_error: None,
            outer_iterations: 0,
            grid_iterations: 0,
            descent_iterations: 0,
            error: Some(e.to_string()),
        }
    }
}

/// Wall-clock time spent per estimator stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct StageTiming {
    pub grid: Duration,
    pub ref_vel: Duration,
    pub ref_pos: Duration,
    pub outer: Duration,
    pub descent: Duration,
}

impl StageTiming {
    fn add(&mut self, other: &StageTiming) {
        self.grid += other.grid;
        self.ref_vel += other.ref_vel;
        self.ref_pos += other.ref_pos;
        self.outer += other.outer;
        self.descent += other.descent;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialResult {
    pub point: usize,
    pub trial: usize,
    pub seed: u64,
    pub outcomes: Vec<StageOutcome>,
    #[serde(skip)]
    pub timing: StageTiming,
}

impl TrialResult {
    pub fn outcome(&self, stage: StageKind) -> Option<&StageOutcome> {
        self.outcomes.iter().find(|o| o.stage == stage)
    }
}

/// Per-stage aggregate at one sweep point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageSummary {
    pub stage: StageKind,
    /// `NaN` when every trial failed.
    pub rmse_position: f64,
    pub rmse_velocity: f64,
    pub mean_iters_outer: f64,
    pub mean_iters_grid: f64,
    pub mean_iters_descent: f64,
    pub failures: usize,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointResult {
    pub value: f64,
    /// `None` when the FIM is not invertible at this point.
    pub bounds: Option<BoundReport>,
    pub stages: Vec<StageSummary>,
    #[serde(skip)]
    pub timing: StageTiming,
}

impl PointResult {
    pub fn stage(&self, stage: StageKind) -> Option<&StageSummary> {
        self.stages.iter().find(|s| s.stage == stage)
    }

    pub fn peb(&self) -> f64 {
        self.bounds.map_or(f64::NAN, |b| b.peb)
    }

    pub fn veb(&self) -> f64 {
        self.bounds.map_or(f64::NAN, |b| b.veb)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub axis: SweepAxis,
    pub seed: u64,
    pub points: Vec<PointResult>,
}

impl SweepResult {
    pub fn timing(&self) -> StageTiming {
        let mut t = StageTiming::default();
        for p in &self.points {
            t.add(&p.timing);
        }
        t
    }
}

/// Shared per-sweep state: the base scenario and a grid searcher built once
/// for its RIS configuration.
pub struct Experiment {
    config: ExperimentConfig,
    base: Scenario,
    searcher: Option<GridSearcher>,
}

impl Experiment {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let mut los = config.scenario.clone();
        los.rician_k = None;
        let base = los.build()?;
        let needs_grid = config.stages.iter().any(|s| s.needs_grid());
        let searcher = if needs_grid && !config.per_trial_profiles {
            Some(GridSearcher::new(&base, config.grid.clone())?)
        } else {
            None
        };
        Ok(Self {
            config,
            base,
            searcher,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn base(&self) -> &Scenario {
        &self.base
    }

    pub fn point_scenario(&self, point: usize) -> Result<Scenario> {
        let value = *self
            .config
            .values
            .get(point)
            .ok_or_else(|| Error::InvalidInput(format!("sweep point {point} out of range")))?;
        self.config.scenario_at(&self.base, value)
    }

    /// Runs every configured stage on one noise draw.
    pub fn run_trial(&self, point: usize, trial: usize) -> Result<TrialResult> {
        let seed = trial_seed(self.config.seed, point, trial);
        let mut scenario = self.point_scenario(point)?;
        let owned;
        let searcher = if self.config.per_trial_profiles {
            let profile =
                RisPhaseProfile::random(scenario.num_pilots(), scenario.num_elements(), seed)?;
            scenario = scenario.with_profile(profile)?;
            if self.config.stages.iter().any(|s| s.needs_grid()) {
                owned = GridSearcher::new(&scenario, self.config.grid.clone())?;
                Some(&owned)
            } else {
                None
            }
        } else {
            self.searcher.as_ref()
        };
        let obs = observe(&scenario, seed)?;
        let y = &obs.y;
        let ue = *scenario.ue();
        let conv = &self.config.convergence;
        let mut timing = StageTiming::default();

        let grid = searcher.map(|g| {
            let t = std::time::Instant::now();
            let out = g.search(y, conv);
            timing.grid = t.elapsed();
            (out, timing.grid)
        });
        let mut stages = self.config.stages.clone();
        stages.sort();
        stages.dedup();
        let mut outcomes = Vec::with_capacity(stages.len());
        for stage in stages {
            let outcome = match stage {
                StageKind::Grid => match grid.as_ref().map(|g| &g.0) {
                    Some(Ok(init)) => StageOutcome {
                        stage,
                        position_error: Some((init.position - ue.position).norm()),
                        velocity_error: Some(ue.velocity.norm()),
                        outer_iterations: 0,
                        grid_iterations: init.iterations,
                        descent_iterations: 0,
                        error: None,
                    },
                    Some(Err(e)) => StageOutcome::failed(stage, e),
                    None => unreachable!("grid searcher exists for grid stages"),
                },
                StageKind::RefPos => match grid.as_ref().map(|g| &g.0) {
                    Some(Ok(init)) => {
                        let t = std::time::Instant::now();
                        let out =
                            alpha_hat(&init.position, &ue.velocity, y, &scenario).and_then(|a0| {
                                ref_pos_gain(y, &ue.velocity, &init.position, a0, &scenario, conv)
                            });
                        timing.ref_pos += t.elapsed();
                        match out {
                            Ok(r) => StageOutcome {
                                stage,
                                position_error: Some((r.estimate - ue.position).norm()),
                                velocity_error: Some(0.0),
                                outer_iterations: 0,
                                grid_iterations: init.iterations,
                                descent_iterations: 0,
                                error: None,
                            },
                            Err(e) => StageOutcome::failed(stage, &e),
                        }
                    }
                    Some(Err(e)) => StageOutcome::failed(stage, e),
                    None => unreachable!("grid searcher exists for grid stages"),
                },
                StageKind::RefVel => {
                    let t = std::time::Instant::now();
                    let zero = Vec3::zeros();
                    let out = alpha_hat(&ue.position, &zero, y, &scenario)
                        .and_then(|a0| ref_vel(y, &zero, &ue.position, a0, &scenario, conv));
                    timing.ref_vel += t.elapsed();
                    match out {
                        Ok(r) => StageOutcome {
                            stage,
                            position_error: Some(0.0),
                            velocity_error: Some((r.estimate - ue.velocity).norm()),
                            outer_iterations: 0,
                            grid_iterations: 0,
                            descent_iterations: 0,
                            error: None,
                        },
                        Err(e) => StageOutcome::failed(stage, &e),
                    }
                }
                StageKind::Full => match grid.as_ref() {
                    Some((Ok(init), elapsed)) => {
                        let region = SearchRegion {
                            rho_max: self.config.grid.rho_max,
                        };
                        match refine_from_grid(init, *elapsed, y, &scenario, conv, region) {
                            Ok(r) => {
                                for rec in &r.stage_trace {
                                    match rec.stage {
                                        Stage::Grid => {}
                                        Stage::RefVel => timing.ref_vel += rec.elapsed,
                                        Stage::RefPos => timing.ref_pos += rec.elapsed,
                                        Stage::Outer => timing.outer += rec.elapsed,
                                        Stage::Descent => timing.descent += rec.elapsed,
                                    }
                                }
                                StageOutcome {
                                    stage,
                                    position_error: Some((r.position - ue.position).norm()),
                                    velocity_error: Some((r.velocity - ue.velocity).norm()),
                                    outer_iterations: r.counts.outer,
                                    grid_iterations: r.counts.grid,
                                    descent_iterations: r.counts.descent,
                                    error: None,
                                }
                            }
                            Err(e) => StageOutcome::failed(stage, &e),
                        }
                    }
                    Some((Err(e), _)) => StageOutcome::failed(stage, e),
                    None => unreachable!("grid searcher exists for grid stages"),
                },
            };
            outcomes.push(outcome);
        }
        Ok(TrialResult {
            point,
            trial,
            seed,
            outcomes,
            timing,
        })
    }

    /// Runs every trial of every point on the current rayon pool and
    /// aggregates in index order.
    pub fn run(&self) -> Result<SweepResult> {
        let n_points = self.config.values.len();
        let trials = self.config.trials;
        for (idx, value) in self.config.values.iter().enumerate() {
            for w in self.point_scenario(idx)?.validity_warnings() {
                log::warn!("{} = {value}: {w}", self.config.axis.name());
            }
        }
        let jobs: Vec<(usize, usize)> = (0..n_points)
            .flat_map(|p| (0..trials).map(move |t| (p, t)))
            .collect();
        let results: Vec<Result<TrialResult>> = jobs
            .par_iter()
            .map(|&(p, t)| self.run_trial(p, t))
            .collect();
        let mut per_point: Vec<Vec<TrialResult>> = vec![Vec::with_capacity(trials); n_points];
        for r in results {
            let r = r?;
            per_point[r.point].push(r);
        }
        let mut points = Vec::with_capacity(n_points);
        for (idx, trials) in per_point.into_iter().enumerate() {
            let bound_scenario = self
                .config
                .line_of_sight_at(&self.base, self.config.values[idx])?;
            let report = match bounds(&bound_scenario) {
                Ok(b) => Some(b),
                Err(Error::Unidentifiable(msg)) => {
                    log::warn!("point {idx}: bounds unavailable: {msg}");
                    None
                }
                Err(e) => return Err(e),
            };
            let mut timing = StageTiming::default();
            for t in &trials {
                timing.add(&t.timing);
            }
            let mut stages = self.config.stages.clone();
            stages.sort();
            stages.dedup();
            let summaries = stages
                .into_iter()
                .map(|stage| summarize(stage, &trials))
                .collect();
            points.push(PointResult {
                value: self.config.values[idx],
                bounds: report,
                stages: summaries,
                timing,
            });
        }
        Ok(SweepResult {
            axis: self.config.axis,
            seed: self.config.seed,
            points,
        })
    }
}

fn summarize(stage: StageKind, trials: &[TrialResult]) -> StageSummary {
    let outcomes: Vec<&StageOutcome> = trials.iter().filter_map(|t| t.outcome(stage)).collect();
    let ok: Vec<&StageOutcome> = outcomes
        .iter()
        .copied()
        .filter(|o| o.error.is_none())
        .collect();
    let rms = |f: &dyn Fn(&StageOutcome) -> Option<f64>| {
        let vals: Vec<f64> = ok.iter().filter_map(|o| f(o)).collect();
        if vals.is_empty() {
            f64::NAN
        } else {
            (vals.iter().map(|e| e * e).sum::<f64>() / vals.len() as f64).sqrt()
        }
    };
    let mean = |f: &dyn Fn(&StageOutcome) -> usize| {
        if ok.is_empty() {
            f64::NAN
        } else {
            ok.iter().map(|o| f(o) as f64).sum::<f64>() / ok.len() as f64
        }
    };
    StageSummary {
        stage,
        rmse_position: rms(&|o| o.position_error),
        rmse_velocity: rms(&|o| o.velocity_error),
        mean_iters_outer: mean(&|o| o.outer_iterations),
        mean_iters_grid: mean(&|o| o.grid_iterations),
        mean_iters_descent: mean(&|o| o.descent_iterations),
        failures: outcomes.len() - ok.len(),
        trials: outcomes.len(),
    }
}

/// One trial of `config` at sweep point `point`.
pub fn run_trial(config: &ExperimentConfig, point: usize, trial: usize) -> Result<TrialResult> {
    Experiment::new(config.clone())?.run_trial(point, trial)
}

/// Full sweep on a dedicated pool of `threads` workers (all available cores
/// when `None`). Results do not depend on the thread count.
pub fn run_sweep(config: &ExperimentConfig, threads: Option<usize>) -> Result<SweepResult> {
    let experiment = Experiment::new(config.clone())?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        if n == 0 {
            return Err(Error::InvalidInput(
                "thread count must be at least 1".into(),
            ));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::NumericalFailure(format!("cannot start worker pool: {e}")))?;
    pool.install(|| experiment.run())
}

/// Per-iteration objective of the initialization loop and of the outer
/// alternation for one trial.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceTrace {
    pub grid: Vec<f64>,
    pub outer: Vec<f64>,
    pub grid_iterations: usize,
    pub outer_iterations: usize,
}

/// Runs the full pipeline at the first sweep point, trial 0.
pub fn convergence_trace(config: &ExperimentConfig) -> Result<ConvergenceTrace> {
    let mut config = config.clone();
    config.trials = 1;
    config.per_trial_profiles = false;
    config.stages = vec![StageKind::Full];
    let experiment = Experiment::new(config)?;
    let scenario = experiment.point_scenario(0)?;
    let seed = trial_seed(experiment.config.seed, 0, 0);
    let obs = observe(&scenario, seed)?;
    let searcher = experiment
        .searcher
        .as_ref()
        .expect("full stage builds a grid searcher");
    let result = find_pos_vel_with(searcher, &obs.y, &scenario, &experiment.config.convergence)?;
    let trace = |stage: Stage| {
        result
            .stage(stage)
            .map(|r| r.objective.clone())
            .unwrap_or_default()
    };
    Ok(ConvergenceTrace {
        grid: trace(Stage::Grid),
        outer: trace(Stage::Outer),
        grid_iterations: result.counts.grid,
        outer_iterations: result.counts.outer,
    })
}

/// `√(mean ‖e‖²)`.
pub fn aggregate_rmse(errors: &[Vec3]) -> Result<f64> {
    if errors.is_empty() {
        return Err(Error::InvalidInput("no errors to aggregate".into()));
    }
    Ok((errors.iter().map(|e| e.norm_squared()).sum::<f64>() / errors.len() as f64).sqrt())
}

/// 17 significant digits.
pub fn format_float(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else if x.is_infinite() {
        if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{x:.16e}")
    }
}

/// Writes one row per (sweep value, stage).
pub fn write_sweep_csv<W: Write>(result: &SweepResult, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::NumericalFailure(format!("CSV write failed: {e}"));
    w.write_record(CSV_HEADER).map_err(io)?;
    for p in &result.points {
        for s in &p.stages {
            w.write_record([
                result.axis.name().to_string(),
                format_float(p.value),
                s.stage.name().to_string(),
                format_float(s.rmse_position),
                format_float(s.rmse_velocity),
                format_float(p.peb()),
                format_float(p.veb()),
                format_float(s.mean_iters_outer),
                format_float(s.mean_iters_grid),
                format_float(s.mean_iters_descent),
                s.failures.to_string(),
                s.trials.to_string(),
                result.seed.to_string(),
            ])
            .map_err(io)?;
        }
    }
    w.flush()
        .map_err(|e| Error::NumericalFailure(format!("CSV write failed: {e}")))?;
    Ok(())
}

pub fn sweep_csv_string(result: &SweepResult) -> Result<String> {
    let mut buf = Vec::new();
    write_sweep_csv(result, &mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::NumericalFailure(e.to_string()))
}

/// `loop,iteration,objective` rows for a convergence trace.
pub fn write_trace_csv<W: Write>(trace: &ConvergenceTrace, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::NumericalFailure(format!("CSV write failed: {e}"));
    w.write_record(["loop", "iteration", "objective"])
        .map_err(io)?;
    for (name, series) in [("grid", &trace.grid), ("outer", &trace.outer)] {
        for (i, v) in series.iter().enumerate() {
            w.write_record([name.to_string(), i.to_string(), format_float(*v)])
                .map_err(io)?;
        }
    }
    w.flush()
        .map_err(|e| Error::NumericalFailure(format!("CSV write failed: {e}")))?;
    Ok(())
}
