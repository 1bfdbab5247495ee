//! Concentrated maximum-likelihood costs.

use crate::channel::{
    dot_conj, dot_unconj, h_vector, norm_sqr, steering_ff, steering_static, Scenario, C64,
};
use crate::error::{Error, Result};
use crate::geometry::{spherical_to_cartesian, Spherical, Vec3};

/// Steering model used by the static grid costs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SteeringModel {
    FarField,
    NearField,
}

/// Least-squares gain `hᴴ y / ‖h‖²`.
pub fn gain_for(h: &[C64], y: &[C64]) -> Result<C64> {
    let nh = norm_sqr(h);
    if !(nh > 0.0) || !nh.is_finite() {
        return Err(Error::DegenerateModel("response vector is zero".into()));
    }
    Ok(dot_conj(h, y) / nh)
}

/// `‖y − α h‖²`.
pub fn residual(h: &[C64], y: &[C64], alpha: C64) -> f64 {
    h.iter()
        .zip(y)
        .map(|(hl, yl)| (yl - alpha * hl).norm_sqr())
        .sum()
}

/// `‖Π⊥_h y‖²` evaluated as the residual of the least-squares fit.
pub fn projected_residual(h: &[C64], y: &[C64]) -> Result<f64> {
    let alpha = gain_for(h, y)?;
    Ok(residual(h, y, alpha))
}

pub fn alpha_hat(p: &Vec3, v: &Vec3, y: &[C64], scenario: &Scenario) -> Result<C64> {
    gain_for(&h_vector(p, v, scenario)?, y)
}

pub fn concentrated_objective(p: &Vec3, v: &Vec3, y: &[C64], scenario: &Scenario) -> Result<f64> {
    projected_residual(&h_vector(p, v, scenario)?, y)
}

/// Static (`v = 0`) cost with either the far-field or near-field steering
/// vector; the far-field cost ignores `rho`.
pub fn static_objective(
    theta: f64,
    phi: f64,
    rho: Option<f64>,
    y: &[C64],
    scenario: &Scenario,
    model: SteeringModel,
) -> Result<f64> {
    let ris = scenario.ris();
    let lambda = scenario.rf().wavelength;
    let a = match model {
        SteeringModel::FarField => steering_ff(theta, phi, ris, lambda),
        SteeringModel::NearField => {
            let rho =
                rho.ok_or_else(|| Error::InvalidInput("near-field cost requires a range".into()))?;
            let p = spherical_to_cartesian(&Spherical { rho, theta, phi }) + ris.reference();
            steering_static(&p, ris, lambda)?
        }
    };
    let weights = scenario.weights();
    let h: Vec<C64> = (0..weights.num_pilots())
        .map(|r| dot_unconj(weights.row(r), &a))
        .collect();
    projected_residual(&h, y)
}
