//! Six-dimensional quasi-Newton polish of the concentrated cost.

use nalgebra::{SMatrix, SVector};

use super::objective::concentrated_objective;
use super::ConvergenceConfig;
use crate::channel::{Scenario, C64};
use crate::error::{Error, Result};
use crate::geometry::Vec3;

type V6 = SVector<f64, 6>;
type M6 = SMatrix<f64, 6, 6>;

/// Central-difference steps: metres for position, metres per second for
/// velocity.
pub const FD_STEPS: [f64; 6] = [1e-6; 6];
pub const GRADIENT_TOLERANCE: f64 = 1e-10;
const MAX_HALVINGS: usize = 60;

#[derive(Debug, Clone, PartialEq)]
pub struct Descent {
    pub position: Vec3,
    pub velocity: Vec3,
    /// Concentrated cost, starting value first.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Admissible UE positions: the half-space in front of the surface,
/// within `rho_max` of the reference point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchRegion {
    pub rho_max: f64,
}

impl SearchRegion {
    pub fn contains(&self, p: &Vec3) -> bool {
        p.z >= 0.0 && p.norm() <= self.rho_max
    }
}

struct Problem<'a> {
    y: &'a [C64],
    scenario: &'a Scenario,
    scale: f64,
    region: Option<SearchRegion>,
}

impl Problem<'_> {
    fn value(&self, x: &V6) -> Result<f64> {
        let p = Vec3::new(x[0], x[1], x[2]);
        let v = Vec3::new(x[3], x[4], x[5]);
        let j = concentrated_objective(&p, &v, self.y, self.scenario)? / self.scale;
        if j.is_finite() {
            Ok(j)
        } else {
            Err(Error::NumericalFailure(
                "non-finite objective in descent".into(),
            ))
        }
    }

    /// Value at a trial point; geometric degeneracies and points outside the
    /// region count as rejections.
    fn trial(&self, x: &V6) -> Result<f64> {
        if let Some(region) = self.region {
            if !region.contains(&Vec3::new(x[0], x[1], x[2])) {
                return Ok(f64::INFINITY);
            }
        }
        match self.value(x) {
            Ok(v) => Ok(v),
            Err(Error::DegenerateGeometry(_)) | Err(Error::DegenerateModel(_)) => Ok(f64::INFINITY),
            Err(e) => Err(e),
        }
    }

    /// Central-difference gradient and diagonal curvature.
    fn derivatives(&self, x: &V6, f0: f64) -> Result<(V6, V6)> {
        let mut g = V6::zeros();
        let mut d2 = V6::zeros();
        for i in 0..6 {
            let h = FD_STEPS[i];
            let mut xp = *x;
            xp[i] += h;
            let mut xm = *x;
            xm[i] -= h;
            let fp = self.value(&xp)?;
            let fm = self.value(&xm)?;
            g[i] = (fp - fm) / (2.0 * h);
            d2[i] = (fp - 2.0 * f0 + fm) / (h * h);
        }
        Ok((g, d2))
    }
}

fn initial_inverse(d2: &V6) -> M6 {
    let mut h = M6::zeros();
    for block in [0..3, 3..6] {
        let positive: Vec<f64> = block.clone().map(|i| d2[i]).filter(|c| *c > 0.0).collect();
        let fallback = if positive.is_empty() {
            1.0
        } else {
            positive.len() as f64 / positive.iter().sum::<f64>()
        };
        for i in block {
            h[(i, i)] = if d2[i] > 0.0 { 1.0 / d2[i] } else { fallback };
        }
    }
    h
}

/// BFGS on `J(p, v)/J(p₀, v₀)` with finite-difference gradients and a
/// halving line search. The returned point never has a higher cost than the
/// start.
pub fn gradient_descent_6d(
    p_init: &Vec3,
    v_init: &Vec3,
    y: &[C64],
    scenario: &Scenario,
    conv: &ConvergenceConfig,
) -> Result<Descent> {
    descend(p_init, v_init, y, scenario, conv, None)
}

/// [`gradient_descent_6d`] with every accepted position kept inside `region`.
pub fn gradient_descent_6d_within(
    p_init: &Vec3,
    v_init: &Vec3,
    y: &[C64],
    scenario: &Scenario,
    conv: &ConvergenceConfig,
    region: SearchRegion,
) -> Result<Descent> {
    descend(p_init, v_init, y, scenario, conv, Some(region))
}

fn descend(
    p_init: &Vec3,
    v_init: &Vec3,
    y: &[C64],
    scenario: &Scenario,
    conv: &ConvergenceConfig,
    region: Option<SearchRegion>,
) -> Result<Descent> {
    let scale = concentrated_objective(p_init, v_init, y, scenario)?;
    if !scale.is_finite() {
        return Err(Error::NumericalFailure(
            "non-finite objective in descent".into(),
        ));
    }
    if scale <= f64::MIN_POSITIVE {
        return Ok(Descent {
            position: *p_init,
            velocity: *v_init,
            trace: vec![scale],
            iterations: 0,
            converged: true,
        });
    }
    let problem = Problem {
        y,
        scenario,
        scale,
        region,
    };
    let mut x = V6::new(p_init.x, p_init.y, p_init.z, v_init.x, v_init.y, v_init.z);
    let mut f = 1.0;
    let (mut g, d2) = problem.derivatives(&x, f)?;
    let mut h_inv = initial_inverse(&d2);
    let mut trace = vec![f];
    let mut iterations = 0;
    let mut converged = false;
    for it in 1..=conv.descent_max_iterations {
        iterations = it;
        if g.norm() < GRADIENT_TOLERANCE {
            converged = true;
            break;
        }
        let mut dir = -(h_inv * g);
        if dir.dot(&g) >= 0.0 {
            let (_, d2) = problem.derivatives(&x, f)?;
            h_inv = initial_inverse(&d2);
            dir = -(h_inv * g);
        }
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let xn = x + dir * t;
            let fn_ = problem.trial(&xn)?;
            if fn_ < f {
                accepted = Some((xn, fn_));
                break;
            }
            t *= 0.5;
        }
        let Some((xn, fn_)) = accepted else {
            converged = true;
            break;
        };
        let (gn, _) = problem.derivatives(&xn, fn_)?;
        let s = xn - x;
        let yk = gn - g;
        let sy = s.dot(&yk);
        if sy > 0.0 {
            let rho = 1.0 / sy;
            let left = M6::identity() - s * yk.transpose() * rho;
            h_inv = left * h_inv * left.transpose() + s * s.transpose() * rho;
        }
        let change = f - fn_;
        x = xn;
        f = fn_;
        g = gn;
        trace.push(f);
        if change < conv.objective_tolerance {
            converged = true;
            break;
        }
    }
    Ok(Descent {
        position: Vec3::new(x[0], x[1], x[2]),
        velocity: Vec3::new(x[3], x[4], x[5]),
        trace: trace.into_iter().map(|j| j * scale).collect(),
        iterations,
        converged,
    })
}
