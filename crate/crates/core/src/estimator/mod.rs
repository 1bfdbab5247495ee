//! Snapshot 6D estimation: grid initialization, closed-form position and
//! velocity refinements, alternating outer loop and a final quasi-Newton
//! polish.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::channel::{Scenario, C64};
use crate::error::{Error, Result};
use crate::geometry::{Spherical, Vec3};

pub mod descent;
pub mod grid;
pub mod linear;
pub mod objective;
pub mod position;
pub mod velocity;

pub use descent::{gradient_descent_6d, gradient_descent_6d_within, Descent, SearchRegion};
pub use grid::{init_pos_gain, GridOutcome, GridSearcher};
pub use linear::Refinement;
pub use objective::{alpha_hat, concentrated_objective, static_objective, SteeringModel};
pub use position::{
    alpha_from_pd, build_linearized_model, grad_flm, grad_gamma, pd_hat, ref_pos_gain,
    LinearizedModel,
};
pub use velocity::{alpha_from_vd, build_velocity_model, ref_vel, vd_hat, VelocityLinearModel};

/// Grid sizes for the initialization search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    /// Azimuth points over `[0, 2π)`.
    pub n_theta: usize,
    /// Elevation points, inclusive of both ends: `[0, π/2]` for the
    /// far-field stage and `[0, π]` for the near-field stage.
    pub n_phi: usize,
    /// Range points `ρ_max·k/n_rho`, `k = 1..=n_rho`.
    pub n_rho: usize,
    pub rho_max: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            n_theta: 180,
            n_phi: 90,
            n_rho: 200,
            rho_max: 12.0,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_theta < 2 || self.n_phi < 2 || self.n_rho < 2 {
            return Err(Error::InvalidInput("grid sizes must be at least 2".into()));
        }
        if !(self.rho_max > 0.0 && self.rho_max.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "rho_max must be positive, got {}",
                self.rho_max
            )));
        }
        Ok(())
    }
}

/// Stopping rules shared by every iterative stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvergenceConfig {
    /// Loops stop once the cost changes by at most this amount, in the
    /// squared units of the observation (W). The descent applies it to its
    /// cost normalized by the starting value.
    pub objective_tolerance: f64,
    pub grid_max_iterations: usize,
    pub refinement_max_iterations: usize,
    pub outer_max_iterations: usize,
    pub descent_max_iterations: usize,
    /// Rebuild the linearization at every refinement step.
    pub relinearize: bool,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        Self {
            objective_tolerance: 1e-15,
            grid_max_iterations: 20,
            refinement_max_iterations: 100,
            outer_max_iterations: 50,
            descent_max_iterations: 500,
            relinearize: false,
        }
    }
}

impl ConvergenceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.objective_tolerance > 0.0 && self.objective_tolerance.is_finite()) {
            return Err(Error::InvalidInput(
                "objective_tolerance must be positive".into(),
            ));
        }
        for (name, n) in [
            ("grid_max_iterations", self.grid_max_iterations),
            ("refinement_max_iterations", self.refinement_max_iterations),
            ("outer_max_iterations", self.outer_max_iterations),
            ("descent_max_iterations", self.descent_max_iterations),
        ] {
            if n == 0 {
                return Err(Error::InvalidInput(format!("{name} must be at least 1")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Grid,
    RefVel,
    RefPos,
    Outer,
    Descent,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Grid => "grid",
            Stage::RefVel => "ref_vel",
            Stage::RefPos => "ref_pos",
            Stage::Outer => "outer",
            Stage::Descent => "descent",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageRecord {
    pub stage: Stage,
    /// Cost values in the stage's own units, starting value first.
    pub objective: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub elapsed: Duration,
}

/// Loop counters: `outer` (I₁), `grid` (I₂), summed inner counts of the
/// position (I₃) and velocity (I₄) refinements, and `descent` (I_GD).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IterationCounts {
    pub outer: usize,
    pub grid: usize,
    pub ref_pos: usize,
    pub ref_vel: usize,
    pub descent: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Flags {
    pub grid_converged: bool,
    pub outer_converged: bool,
    /// An outer iteration raised the cost and was discarded.
    pub outer_rejected: bool,
    /// A refinement hit a zero gain and kept its previous iterate.
    pub refinement_aborted: bool,
    pub descent_converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationResult {
    pub position: Vec3,
    pub velocity: Vec3,
    pub alpha: C64,
    pub grid_estimate: Spherical,
    /// Outer-loop output before the descent.
    pub outer_position: Vec3,
    pub outer_velocity: Vec3,
    /// Final concentrated cost.
    pub objective: f64,
    pub stage_trace: Vec<StageRecord>,
    pub counts: IterationCounts,
    pub flags: Flags,
}

impl EstimationResult {
    pub fn stage(&self, stage: Stage) -> Option<&StageRecord> {
        self.stage_trace.iter().find(|r| r.stage == stage)
    }
}

/// Full pipeline from scratch.
pub fn find_pos_vel(
    y: &[C64],
    scenario: &Scenario,
    grid: &GridSpec,
    conv: &ConvergenceConfig,
) -> Result<EstimationResult> {
    let searcher = GridSearcher::new(scenario, grid.clone())?;
    find_pos_vel_with(&searcher, y, scenario, conv)
}

/// Full pipeline reusing a cached grid searcher built for `scenario`.
pub fn find_pos_vel_with(
    searcher: &GridSearcher,
    y: &[C64],
    scenario: &Scenario,
    conv: &ConvergenceConfig,
) -> Result<EstimationResult> {
    let start = Instant::now();
    let init = searcher.search(y, conv)?;
    let region = SearchRegion {
        rho_max: searcher.spec().rho_max,
    };
    refine_from_grid(&init, start.elapsed(), y, scenario, conv, region)
}

/// Everything after the grid search: outer alternation, descent and the
/// final gain. Outer iterates and descent steps leaving `region` are
/// rejected.
pub fn refine_from_grid(
    init: &GridOutcome,
    grid_elapsed: Duration,
    y: &[C64],
    scenario: &Scenario,
    conv: &ConvergenceConfig,
    region: SearchRegion,
) -> Result<EstimationResult> {
    conv.validate()?;
    let mut stage_trace = vec![StageRecord {
        stage: Stage::Grid,
        objective: init.trace.clone(),
        iterations: init.iterations,
        converged: init.converged,
        elapsed: grid_elapsed,
    }];
    let mut counts = IterationCounts {
        grid: init.iterations,
        ..IterationCounts::default()
    };
    let mut flags = Flags {
        grid_converged: init.converged,
        ..Flags::default()
    };

    let mut p = init.position;
    let mut v = Vec3::zeros();
    let mut alpha = init.alpha;
    let mut cost = concentrated_objective(&p, &v, y, scenario)?;
    let mut outer_trace = vec![cost];
    let mut ref_vel_trace = Vec::new();
    let mut ref_pos_trace = Vec::new();
    let (mut vel_time, mut pos_time) = (Duration::ZERO, Duration::ZERO);
    let outer_start = Instant::now();
    for it in 1..=conv.outer_max_iterations {
        counts.outer = it;
        let t = Instant::now();
        let rv = ref_vel(y, &v, &p, alpha, scenario, conv)?;
        vel_time += t.elapsed();
        counts.ref_vel += rv.iterations;
        ref_vel_trace.extend_from_slice(&rv.trace);
        let t = Instant::now();
        let rp = ref_pos_gain(y, &rv.estimate, &p, rv.alpha, scenario, conv)?;
        pos_time += t.elapsed();
        counts.ref_pos += rp.iterations;
        ref_pos_trace.extend_from_slice(&rp.trace);
        flags.refinement_aborted |= rv.aborted || rp.aborted;

        let feasible = region.contains(&rp.estimate);
        let next = match concentrated_objective(&rp.estimate, &rv.estimate, y, scenario) {
            Ok(c) if feasible => c,
            Ok(_) => f64::INFINITY,
            Err(Error::DegenerateGeometry(_)) | Err(Error::DegenerateModel(_)) => f64::INFINITY,
            Err(e) => return Err(e),
        };
        if !(next <= cost) {
            flags.outer_rejected = true;
            break;
        }
        p = rp.estimate;
        v = rv.estimate;
        alpha = rp.alpha;
        outer_trace.push(next);
        let change = cost - next;
        cost = next;
        if change <= conv.objective_tolerance {
            flags.outer_converged = true;
            break;
        }
    }
    let outer_elapsed = outer_start.elapsed();
    stage_trace.push(StageRecord {
        stage: Stage::RefVel,
        objective: ref_vel_trace,
        iterations: counts.ref_vel,
        converged: true,
        elapsed: vel_time,
    });
    stage_trace.push(StageRecord {
        stage: Stage::RefPos,
        objective: ref_pos_trace,
        iterations: counts.ref_pos,
        converged: true,
        elapsed: pos_time,
    });
    stage_trace.push(StageRecord {
        stage: Stage::Outer,
        objective: outer_trace,
        iterations: counts.outer,
        converged: flags.outer_converged,
        elapsed: outer_elapsed,
    });

    let t = Instant::now();
    let polished = gradient_descent_6d_within(&p, &v, y, scenario, conv, region)?;
    counts.descent = polished.iterations;
    flags.descent_converged = polished.converged;
    let final_cost = polished.trace.last().copied().unwrap_or(cost);
    stage_trace.push(StageRecord {
        stage: Stage::Descent,
        objective: polished.trace.clone(),
        iterations: polished.iterations,
        converged: polished.converged,
        elapsed: t.elapsed(),
    });
    let alpha = alpha_hat(&polished.position, &polished.velocity, y, scenario).unwrap_or(alpha);
    Ok(EstimationResult {
        position: polished.position,
        velocity: polished.velocity,
        alpha,
        grid_estimate: init.spherical,
        outer_position: p,
        outer_velocity: v,
        objective: final_cost,
        stage_trace,
        counts,
        flags,
    })
}
