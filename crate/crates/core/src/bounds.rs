//! Fisher information for `ζ = [p, v, α_r, α_i]` and the derived position
//! and velocity error bounds.

use nalgebra::{DMatrix, SMatrix};
use serde::Serialize;

use crate::channel::{h_vector, Scenario, C64};
use crate::error::{Error, Result};
use crate::estimator::grad_gamma;
use crate::geometry::Vec3;

pub type Matrix8 = SMatrix<f64, 8, 8>;

/// Parameters ordered `[p_x, p_y, p_z, v_x, v_y, v_z, α_r, α_i]`.
pub const PARAMETERS: usize = 8;

/// Largest equilibrated condition number accepted by [`peb_veb`].
pub const MAX_CONDITION: f64 = 1e14;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fim {
    pub matrix: Matrix8,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundReport {
    /// Position error bound (m).
    pub peb: f64,
    /// Velocity error bound (m/s).
    pub veb: f64,
    #[serde(skip)]
    pub fim: Fim,
    /// Condition number of the FIM after symmetric diagonal scaling.
    pub condition_number: f64,
}

/// Noise-free mean `μ_ℓ = α w_ℓᵀ a_ℓ(p, v)` at the parameter vector `ζ`.
pub fn mean_response(zeta: &[f64; PARAMETERS], scenario: &Scenario) -> Result<Vec<C64>> {
    let p = Vec3::new(zeta[0], zeta[1], zeta[2]);
    let v = Vec3::new(zeta[3], zeta[4], zeta[5]);
    let alpha = C64::new(zeta[6], zeta[7]);
    Ok(h_vector(&p, &v, scenario)?
        .into_iter()
        .map(|h| alpha * h)
        .collect())
}

/// `ζ` of the scenario's true UE state.
pub fn true_parameters(scenario: &Scenario) -> [f64; PARAMETERS] {
    let ue = scenario.ue();
    [
        ue.position.x,
        ue.position.y,
        ue.position.z,
        ue.velocity.x,
        ue.velocity.y,
        ue.velocity.z,
        ue.alpha.re,
        ue.alpha.im,
    ]
}

/// Analytic `∂μ/∂ζ` (L×8) at the true state.
pub fn mu_jacobian(scenario: &Scenario) -> Result<DMatrix<C64>> {
    let ris = scenario.ris();
    let k = scenario.rf().wavenumber();
    let ts = scenario.rf().symbol_period;
    let ue = scenario.ue();
    let (p, v, alpha) = (ue.position, ue.velocity, ue.alpha);
    let dr = (ris.reference() - p).norm();
    if dr == 0.0 {
        return Err(Error::DegenerateGeometry(
            "UE at the RIS reference point".into(),
        ));
    }
    let u_r = (p - ris.reference()) / dr;
    let m_count = ris.element_count();
    let mut phasor = Vec::with_capacity(m_count);
    let mut step = Vec::with_capacity(m_count);
    let mut static_grad = Vec::with_capacity(m_count);
    let mut mobile_grad = Vec::with_capacity(m_count);
    let mut unit = Vec::with_capacity(m_count);
    for m in 0..m_count {
        let delta = ris.element(m) - p;
        let dm = delta.norm();
        if dm == 0.0 {
            return Err(Error::DegenerateGeometry(format!(
                "UE coincides with element {m}"
            )));
        }
        let u_m = -delta / dm;
        phasor.push(C64::from_polar(1.0, -k * (dm - dr)));
        step.push(C64::from_polar(1.0, -k * u_m.dot(&v) * ts));
        static_grad.push(u_m - u_r);
        mobile_grad.push(grad_gamma(&delta, dm) * v * ts);
        unit.push(u_m);
    }
    let weights = scenario.weights();
    let l = weights.num_pilots();
    let scale = -C64::i() * k * alpha;
    let mut jac = DMatrix::from_element(l, PARAMETERS, C64::new(0.0, 0.0));
    for row in 0..l {
        let ell = (row + 1) as f64;
        let mut h = C64::new(0.0, 0.0);
        let mut dp = [C64::new(0.0, 0.0); 3];
        let mut dv = [C64::new(0.0, 0.0); 3];
        for m in 0..m_count {
            phasor[m] *= step[m];
            let t = weights.row(row)[m] * phasor[m];
            h += t;
            let g = static_grad[m] + mobile_grad[m] * ell;
            for i in 0..3 {
                dp[i] += t * g[i];
                dv[i] += t * unit[m][i];
            }
        }
        for i in 0..3 {
            jac[(row, i)] = scale * dp[i];
            jac[(row, 3 + i)] = scale * dv[i] * (ell * ts);
        }
        jac[(row, 6)] = h;
        jac[(row, 7)] = C64::i() * h;
    }
    Ok(jac)
}

/// Central-difference `∂μ/∂ζ` with per-parameter steps.
pub fn finite_difference_jacobian(
    scenario: &Scenario,
    steps: &[f64; PARAMETERS],
) -> Result<DMatrix<C64>> {
    let zeta = true_parameters(scenario);
    let l = scenario.num_pilots();
    let mut jac = DMatrix::from_element(l, PARAMETERS, C64::new(0.0, 0.0));
    for (i, h) in steps.iter().enumerate() {
        let mut plus = zeta;
        plus[i] += h;
        let mut minus = zeta;
        minus[i] -= h;
        let fp = mean_response(&plus, scenario)?;
        let fm = mean_response(&minus, scenario)?;
        for row in 0..l {
            jac[(row, i)] = (fp[row] - fm[row]) / (2.0 * h);
        }
    }
    Ok(jac)
}

/// `(2/σ²) Re{Jᴴ J}`.
pub fn fim_from_jacobian(jac: &DMatrix<C64>, noise_variance: f64) -> Result<Fim> {
    if !(noise_variance > 0.0 && noise_variance.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "noise variance must be positive, got {noise_variance}"
        )));
    }
    if jac.ncols() != PARAMETERS {
        return Err(Error::InvalidInput(format!(
            "Jacobian must have {PARAMETERS} columns, got {}",
            jac.ncols()
        )));
    }
    let gram = jac.adjoint() * jac;
    let mut matrix = Matrix8::zeros();
    for i in 0..PARAMETERS {
        for k in 0..PARAMETERS {
            matrix[(i, k)] = 2.0 / noise_variance * gram[(i, k)].re;
        }
    }
    Ok(Fim { matrix })
}

pub fn fim(scenario: &Scenario) -> Result<Fim> {
    fim_from_jacobian(&mu_jacobian(scenario)?, scenario.rf().noise_variance())
}

/// Relative Frobenius gap between the analytic FIM and one built from a
/// finite-difference Jacobian.
pub fn fim_discrepancy(scenario: &Scenario, steps: &[f64; PARAMETERS]) -> Result<f64> {
    let analytic = fim(scenario)?.matrix;
    let numeric = fim_from_jacobian(
        &finite_difference_jacobian(scenario, steps)?,
        scenario.rf().noise_variance(),
    )?
    .matrix;
    Ok((analytic - numeric).norm() / analytic.norm())
}

/// PEB and VEB from the inverse FIM, computed through a Jacobi-scaled
/// Cholesky factorization.
pub fn peb_veb(f: &Fim) -> Result<BoundReport> {
    let m = &f.matrix;
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::NumericalFailure("non-finite FIM entry".into()));
    }
    let diag = m.diagonal();
    if diag.iter().any(|d| !(*d > 0.0)) {
        return Err(Error::Unidentifiable(
            "FIM has a non-positive diagonal entry".into(),
        ));
    }
    let d = diag.map(|x| 1.0 / x.sqrt());
    let scaled = Matrix8::from_fn(|i, k| m[(i, k)] * d[i] * d[k]);
    let scaled = (scaled + scaled.transpose()) * 0.5;
    let eig = scaled.symmetric_eigenvalues();
    let (lo, hi) = (eig.min(), eig.max());
    let condition_number = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(condition_number < MAX_CONDITION) {
        return Err(Error::Unidentifiable(format!(
            "FIM condition number {condition_number:e} exceeds {MAX_CONDITION:e}"
        )));
    }
    let chol = scaled
        .cholesky()
        .ok_or_else(|| Error::Unidentifiable("FIM is not positive definite".into()))?;
    let inv_scaled = chol.inverse();
    let inv = Matrix8::from_fn(|i, k| inv_scaled[(i, k)] * d[i] * d[k]);
    let peb = (inv[(0, 0)] + inv[(1, 1)] + inv[(2, 2)]).sqrt();
    let veb = (inv[(3, 3)] + inv[(4, 4)] + inv[(5, 5)]).sqrt();
    if !(peb > 0.0 && peb.is_finite() && veb > 0.0 && veb.is_finite()) {
        return Err(Error::NumericalFailure("non-finite error bound".into()));
    }
    Ok(BoundReport {
        peb,
        veb,
        fim: *f,
        condition_number,
    })
}

/// PEB and VEB at the scenario's true state.
pub fn bounds(scenario: &Scenario) -> Result<BoundReport> {
    peb_veb(&fim(scenario)?)
}
