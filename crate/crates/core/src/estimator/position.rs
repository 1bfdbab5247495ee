//! Closed-form position refinement with known velocity.

use nalgebra::Matrix3;

use super::linear::{refine, LinearModel, Refinement};
use super::ConvergenceConfig;
use crate::channel::{Scenario, C64};
use crate::error::{Error, Result};
use crate::geometry::{RisArray, Vec3};

/// `h(p₀ + p_δ, v) ≈ η + j Ξᵀ p_δ` around the anchor `p₀`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearizedModel {
    pub anchor: Vec3,
    pub velocity: Vec3,
    pub model: LinearModel,
}

impl LinearizedModel {
    /// `η`.
    pub fn eta(&self) -> &[C64] {
        &self.model.base
    }

    /// Columns `ξ_ℓ` of `Ξ`.
    pub fn xi(&self) -> &[[C64; 3]] {
        &self.model.rows
    }

    /// `Re{Ξ* Ξᵀ}`.
    pub fn normal_matrix(&self) -> Matrix3<f64> {
        self.model.normal_matrix()
    }

    /// `η + j Ξᵀ p_δ`.
    pub fn predict(&self, pd: &Vec3) -> Vec<C64> {
        self.model.predict(pd)
    }
}

fn distances(p: &Vec3, m: usize, ris: &RisArray) -> Result<(Vec3, f64, f64)> {
    let delta = ris.element(m) - p;
    let dm = delta.norm();
    let dr = (ris.reference() - p).norm();
    if dm == 0.0 || dr == 0.0 {
        return Err(Error::DegenerateGeometry(format!(
            "position coincides with element {m} or the reference point"
        )));
    }
    Ok((delta, dm, dr))
}

/// Gradient of `f_{ℓ,m}` with respect to `p`:
/// `u_m − u_r + (d_m² I − δδᵀ)/d_m³ · v ℓ Ts`, `δ = p_m − p`.
pub fn grad_flm(
    p: &Vec3,
    v: &Vec3,
    pilot: usize,
    m: usize,
    ris: &RisArray,
    ts: f64,
) -> Result<Vec3> {
    let (delta, dm, dr) = distances(p, m, ris)?;
    let u_m = -delta / dm;
    let u_r = (p - ris.reference()) / dr;
    Ok(u_m - u_r + grad_gamma(&delta, dm) * v * (pilot as f64 * ts))
}

/// `∇_p (u_mᵀ v)` as a matrix acting on `v`.
pub fn grad_gamma(delta: &Vec3, dm: f64) -> Matrix3<f64> {
    (Matrix3::identity() * (dm * dm) - delta * delta.transpose()) / (dm * dm * dm)
}

/// Builds `η` and `Ξ` with `b_{ℓ,m} = −k f_{ℓ,m}(p₀, v)` and
/// `c_{ℓ,m} = −k ∇_p f_{ℓ,m}(p₀, v)`.
pub fn build_linearized_model(p0: &Vec3, v: &Vec3, scenario: &Scenario) -> Result<LinearizedModel> {
    let ris = scenario.ris();
    let k = scenario.rf().wavenumber();
    let ts = scenario.rf().symbol_period;
    let m_count = ris.element_count();
    let mut phasor = Vec::with_capacity(m_count);
    let mut step = Vec::with_capacity(m_count);
    let mut c0 = Vec::with_capacity(m_count);
    let mut c1 = Vec::with_capacity(m_count);
    for m in 0..m_count {
        let (delta, dm, dr) = distances(p0, m, ris)?;
        let u_m = -delta / dm;
        let u_r = (p0 - ris.reference()) / dr;
        phasor.push(C64::from_polar(1.0, -k * (dm - dr)));
        step.push(C64::from_polar(1.0, -k * u_m.dot(v) * ts));
        c0.push(-k * (u_m - u_r));
        c1.push(-k * ts * (grad_gamma(&delta, dm) * v));
    }
    let weights = scenario.weights();
    let mut base = Vec::with_capacity(weights.num_pilots());
    let mut rows = Vec::with_capacity(weights.num_pilots());
    for row in 0..weights.num_pilots() {
        let ell = (row + 1) as f64;
        let mut eta = C64::new(0.0, 0.0);
        let mut xi = [C64::new(0.0, 0.0); 3];
        for m in 0..m_count {
            phasor[m] *= step[m];
            let t = weights.row(row)[m] * phasor[m];
            eta += t;
            let c = c0[m] + c1[m] * ell;
            for i in 0..3 {
                xi[i] += t * c[i];
            }
        }
        base.push(eta);
        rows.push(xi);
    }
    Ok(LinearizedModel {
        anchor: *p0,
        velocity: *v,
        model: LinearModel { base, rows },
    })
}

/// `p̂_δ = (1/|α̂|²) Re{Ξ*Ξᵀ}⁻¹ Im{Ξ(|α̂|² η* − α̂ y*)}`.
pub fn pd_hat(model: &LinearizedModel, alpha: C64, y: &[C64]) -> Result<Vec3> {
    model.model.solve_delta(alpha, y)
}

/// `(η + jΞᵀp_δ)ᴴ y / ‖η + jΞᵀp_δ‖²`.
pub fn alpha_from_pd(model: &LinearizedModel, pd: &Vec3, y: &[C64]) -> Result<C64> {
    model.model.solve_alpha(pd, y)
}

/// Alternates `pd_hat` and `alpha_from_pd` from `(p₀, α₀)` with the velocity
/// held at `v`.
pub fn ref_pos_gain(
    y: &[C64],
    v: &Vec3,
    p0: &Vec3,
    alpha0: C64,
    scenario: &Scenario,
    conv: &ConvergenceConfig,
) -> Result<Refinement> {
    refine(
        |p| Ok(build_linearized_model(p, v, scenario)?.model),
        *p0,
        alpha0,
        y,
        conv.objective_tolerance,
        conv.refinement_max_iterations,
        conv.relinearize,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{
        default_direction, flm_approx, h_vector, norm_sqr, observe, RisPhaseProfile,
    };
    use crate::estimator::objective::alpha_hat;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn table_ris() -> RisArray {
        Scenario::standard(2.0, 0.0, 0).unwrap().ris().clone()
    }

    #[test]
    fn static_gradient_is_unit_vector_difference() {
        let ris = table_ris();
        let p = Vec3::new(0.4, 0.9, 1.7);
        let g = grad_flm(&p, &Vec3::zeros(), 12, 300, &ris, 1e-6).unwrap();
        let expected = (p - ris.element(300)).normalize() - p.normalize();
        assert!((g - expected).norm() < 1e-15);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let ris = table_ris();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let ts = 1e-3;
        for _ in 0..100 {
            let p = Vec3::new(
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(0.5..4.0),
            );
            let v = Vec3::new(
                rng.gen_range(-30.0..30.0),
                rng.gen_range(-30.0..30.0),
                rng.gen_range(-30.0..30.0),
            );
            let m = rng.gen_range(0..ris.element_count());
            let pilot = rng.gen_range(1..=40);
            let g = grad_flm(&p, &v, pilot, m, &ris, ts).unwrap();
            let h = 1e-6;
            let mut fd = Vec3::zeros();
            for i in 0..3 {
                let mut e = Vec3::zeros();
                e[i] = h;
                fd[i] = (flm_approx(&(p + e), &v, pilot, m, &ris, ts).unwrap()
                    - flm_approx(&(p - e), &v, pilot, m, &ris, ts).unwrap())
                    / (2.0 * h);
            }
            assert!((g - fd).norm() <= 1e-6 * g.norm().max(1e-3), "{g} vs {fd}");
        }
    }

    #[test]
    fn gamma_gradient_is_projector() {
        let delta = Vec3::new(0.3, -1.2, 2.0);
        let g = grad_gamma(&delta, delta.norm());
        assert!((g - g.transpose()).norm() < 1e-15);
        assert!((g * delta).norm() < 1e-15);
    }

    #[test]
    fn degenerate_gradient() {
        let ris = table_ris();
        let p = *ris.element(5);
        assert!(matches!(
            grad_flm(&p, &Vec3::zeros(), 1, 5, &ris, 1e-6),
            Err(Error::DegenerateGeometry(_))
        ));
    }

    #[test]
    fn model_reproduces_response_at_anchor() {
        let s = Scenario::standard(2.0, 3.0, 1).unwrap();
        let ue = s.ue();
        let model = build_linearized_model(&ue.position, &ue.velocity, &s).unwrap();
        let h = h_vector(&ue.position, &ue.velocity, &s).unwrap();
        for (a, b) in model.eta().iter().zip(&h) {
            assert!((a - b).norm() < 1e-12 * b.norm().max(1.0));
        }
    }

    #[test]
    fn model_first_order_accuracy() {
        let s = Scenario::standard(2.0, 1.0, 1).unwrap();
        let ue = s.ue();
        let model = build_linearized_model(&ue.position, &ue.velocity, &s).unwrap();
        let pd = Vec3::new(1.0, -2.0, 0.5).normalize() * 1e-3;
        let approx = model.predict(&pd);
        let exact = h_vector(&(ue.position + pd), &ue.velocity, &s).unwrap();
        let err: f64 = approx
            .iter()
            .zip(&exact)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum();
        assert!((err / norm_sqr(&exact)).sqrt() < 1e-3);
    }

    #[test]
    fn normal_matrix_positive_definite_with_three_pilots() {
        let base = Scenario::standard(2.0, 1.0, 0).unwrap();
        for seed in 0..5 {
            let profile = RisPhaseProfile::random(3, base.num_elements(), seed).unwrap();
            let s = base.with_profile(profile).unwrap();
            let model = build_linearized_model(&s.ue().position, &s.ue().velocity, &s).unwrap();
            let a = model.normal_matrix();
            assert!((a - a.transpose()).norm() <= 1e-12 * a.norm());
            assert!(a.symmetric_eigenvalues().min() > 0.0);
        }
    }

    #[test]
    fn pd_hat_matched_and_trivial() {
        let s = Scenario::standard(2.0, 1.0, 2).unwrap();
        let ue = s.ue();
        let model =
            build_linearized_model(&(ue.position + Vec3::new(1e-3, 0.0, 0.0)), &ue.velocity, &s)
                .unwrap();
        let alpha = ue.alpha;
        let truth = Vec3::new(2e-4, -1e-4, 3e-4);
        let y: Vec<C64> = model.predict(&truth).iter().map(|h| alpha * h).collect();
        let pd = pd_hat(&model, alpha, &y).unwrap();
        assert!((pd - truth).norm() < 1e-10);
        let y0: Vec<C64> = model.eta().iter().map(|h| alpha * h).collect();
        assert!(pd_hat(&model, alpha, &y0).unwrap().norm() < 1e-10);
        let a = alpha_from_pd(&model, &Vec3::zeros(), &y0).unwrap();
        assert!((a - alpha).norm() < 1e-12 * alpha.norm());
        let a_direct = alpha_hat(&model.anchor, &ue.velocity, &y, &s).unwrap();
        let a_model = alpha_from_pd(&model, &Vec3::zeros(), &y).unwrap();
        assert!((a_direct - a_model).norm() < 1e-9 * a_direct.norm());
        assert!(matches!(
            pd_hat(&model, C64::new(0.0, 0.0), &y),
            Err(Error::DegenerateModel(_))
        ));
    }

    fn tight() -> ConvergenceConfig {
        ConvergenceConfig {
            objective_tolerance: 1e-40,
            ..ConvergenceConfig::default()
        }
    }

    #[test]
    fn refinement_from_offset_anchor() {
        let s = Scenario::standard(2.0, 1.0, 3).unwrap().with_noise(false);
        let obs = observe(&s, 0).unwrap();
        let ue = s.ue();
        let p0 = ue.position + Vec3::new(3.0, -4.0, 0.0) * 1e-3;
        let a0 = alpha_hat(&p0, &ue.velocity, &obs.y, &s).unwrap();
        let out = ref_pos_gain(&obs.y, &ue.velocity, &p0, a0, &s, &tight()).unwrap();
        assert!(
            (out.estimate - ue.position).norm() < 1e-4,
            "{}",
            (out.estimate - ue.position).norm()
        );
        for w in out.trace.windows(2) {
            assert!(w[1] <= w[0]);
        }
        let exact =
            ref_pos_gain(&obs.y, &ue.velocity, &ue.position, ue.alpha, &s, &tight()).unwrap();
        assert!((exact.estimate - ue.position).norm() < 1e-9);
    }

    #[test]
    fn relinearized_variant_converges() {
        let s = Scenario::standard(2.0, 1.0, 3).unwrap().with_noise(false);
        let obs = observe(&s, 0).unwrap();
        let ue = s.ue();
        let p0 = ue.position + default_direction().cross(&Vec3::z()) * 5e-3;
        let a0 = alpha_hat(&p0, &ue.velocity, &obs.y, &s).unwrap();
        let conv = ConvergenceConfig {
            relinearize: true,
            ..tight()
        };
        let out = ref_pos_gain(&obs.y, &ue.velocity, &p0, a0, &s, &conv).unwrap();
        assert!((out.estimate - ue.position).norm() < 1e-6);
    }
}
