//! Closed-form velocity refinement with known position.

use nalgebra::Matrix3;

use super::linear::{refine, LinearModel, Refinement};
use super::ConvergenceConfig;
use crate::channel::{Scenario, C64};
use crate::error::{Error, Result};
use crate::geometry::Vec3;

/// `h(p, v₀ + v_δ) ≈ ν + j Mᵀ v_δ` around `v₀`.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityLinearModel {
    pub anchor: Vec3,
    pub position: Vec3,
    pub model: LinearModel,
}

impl VelocityLinearModel {
    /// `ν`.
    pub fn nu(&self) -> &[C64] {
        &self.model.base
    }

    /// Columns `μ_ℓ` of `M`.
    pub fn mu(&self) -> &[[C64; 3]] {
        &self.model.rows
    }

    /// `Re{M* Mᵀ}`.
    pub fn normal_matrix(&self) -> Matrix3<f64> {
        self.model.normal_matrix()
    }

    pub fn predict(&self, vd: &Vec3) -> Vec<C64> {
        self.model.predict(vd)
    }
}

/// `β_m = −k(‖p_m − p‖ − ‖p_r − p‖)`, `γ_m = −k u_m(p)`,
/// `ν_ℓ = Σ_m [w_ℓ]_m e^{jβ_m} e^{j v₀ᵀγ_m ℓTs}`, `μ_ℓ = Σ_m (same) γ_m ℓTs`.
pub fn build_velocity_model(
    p: &Vec3,
    v0: &Vec3,
    scenario: &Scenario,
) -> Result<VelocityLinearModel> {
    let ris = scenario.ris();
    let k = scenario.rf().wavenumber();
    let ts = scenario.rf().symbol_period;
    let dr = (ris.reference() - p).norm();
    let m_count = ris.element_count();
    let mut phasor = Vec::with_capacity(m_count);
    let mut step = Vec::with_capacity(m_count);
    let mut gamma = Vec::with_capacity(m_count);
    for m in 0..m_count {
        let delta = ris.element(m) - p;
        let dm = delta.norm();
        if dm == 0.0 {
            return Err(Error::DegenerateGeometry(format!(
                "position coincides with element {m}"
            )));
        }
        let g = k * delta / dm;
        phasor.push(C64::from_polar(1.0, -k * (dm - dr)));
        step.push(C64::from_polar(1.0, v0.dot(&g) * ts));
        gamma.push(g);
    }
    let weights = scenario.weights();
    let mut base = Vec::with_capacity(weights.num_pilots());
    let mut rows = Vec::with_capacity(weights.num_pilots());
    for row in 0..weights.num_pilots() {
        let scale = (row + 1) as f64 * ts;
        let mut nu = C64::new(0.0, 0.0);
        let mut mu = [C64::new(0.0, 0.0); 3];
        for m in 0..m_count {
            phasor[m] *= step[m];
            let t = weights.row(row)[m] * phasor[m];
            nu += t;
            for i in 0..3 {
                mu[i] += t * gamma[m][i];
            }
        }
        base.push(nu);
        rows.push(mu.map(|x| x * scale));
    }
    Ok(VelocityLinearModel {
        anchor: *v0,
        position: *p,
        model: LinearModel { base, rows },
    })
}

/// `v̂_δ = (1/|α̂|²) Re{M*Mᵀ}⁻¹ Im{M(|α̂|² ν* − α̂ y*)}`.
pub fn vd_hat(model: &VelocityLinearModel, alpha: C64, y: &[C64]) -> Result<Vec3> {
    model.model.solve_delta(alpha, y)
}

/// `(ν + jMᵀv_δ)ᴴ y / ‖ν + jMᵀv_δ‖²`.
pub fn alpha_from_vd(model: &VelocityLinearModel, vd: &Vec3, y: &[C64]) -> Result<C64> {
    model.model.solve_alpha(vd, y)
}

/// Alternates `vd_hat` and `alpha_from_vd` from `(v₀, α₀)` with the position
/// held at `p`.
pub fn ref_vel(
    y: &[C64],
    v0: &Vec3,
    p: &Vec3,
    alpha0: C64,
    scenario: &Scenario,
    conv: &ConvergenceConfig,
) -> Result<Refinement> {
    refine(
        |v| Ok(build_velocity_model(p, v, scenario)?.model),
        *v0,
        alpha0,
        y,
        conv.objective_tolerance,
        conv.refinement_max_iterations,
        conv.relinearize,
    )
}
