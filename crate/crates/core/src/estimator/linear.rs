//! Shared machinery for the two closed-form refinements: a model of the form
//! `h(δ) ≈ base + j Jᵀ δ` with real `δ ∈ R³`, solved by alternating exact
//! minimization over `δ` and `α`.

use nalgebra::{Matrix3, Vector3};

use crate::channel::{dot_conj, norm_sqr, C64};
use crate::error::{Error, Result};

/// `base_ℓ + j rows_ℓᵀ δ` for every pilot.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub base: Vec<C64>,
    pub rows: Vec<[C64; 3]>,
}

impl LinearModel {
    pub fn predict(&self, delta: &Vector3<f64>) -> Vec<C64> {
        self.base
            .iter()
            .zip(&self.rows)
            .map(|(b, r)| {
                let lin = r[0] * delta[0] + r[1] * delta[1] + r[2] * delta[2];
                b + C64::i() * lin
            })
            .collect()
    }

    /// `Re{J* Jᵀ}`.
    pub fn normal_matrix(&self) -> Matrix3<f64> {
        let mut a = Matrix3::zeros();
        for r in &self.rows {
            for i in 0..3 {
                for k in 0..3 {
                    a[(i, k)] += (r[i].conj() * r[k]).re;
                }
            }
        }
        a
    }

    /// Exact minimizer over real `δ` of `‖y − α(base + j Jᵀ δ)‖²`:
    /// `δ = (1/|α|²) Re{J* Jᵀ}⁻¹ Im{J (|α|² base* − α y*)}`.
    pub fn solve_delta(&self, alpha: C64, y: &[C64]) -> Result<Vector3<f64>> {
        let a2 = alpha.norm_sqr();
        if a2 == 0.0 {
            return Err(Error::DegenerateModel("gain estimate is zero".into()));
        }
        let mut rhs = Vector3::zeros();
        for ((r, b), yl) in self.rows.iter().zip(&self.base).zip(y) {
            let s = b.conj() * a2 - alpha * yl.conj();
            for i in 0..3 {
                rhs[i] += (r[i] * s).im;
            }
        }
        let a = self.normal_matrix();
        let rank_deficient =
            || Error::RankDeficient("normal matrix is not positive definite".into());
        let chol = a.cholesky().ok_or_else(rank_deficient)?;
        let scale = a.diagonal().max();
        let pivot = chol.l_dirty().diagonal().map(|d| d * d).min();
        if !(pivot > 1e-13 * scale) {
            return Err(rank_deficient());
        }
        let delta = chol.solve(&rhs) / a2;
        if delta.iter().all(|d| d.is_finite()) {
            Ok(delta)
        } else {
            Err(Error::NumericalFailure("non-finite residual update".into()))
        }
    }

    /// `(base + j Jᵀ δ)ᴴ y / ‖base + j Jᵀ δ‖²`.
    pub fn solve_alpha(&self, delta: &Vector3<f64>, y: &[C64]) -> Result<C64> {
        let h = self.predict(delta);
        let nh = norm_sqr(&h);
        if !(nh > 0.0) {
            return Err(Error::DegenerateModel(
                "linearized response vanished".into(),
            ));
        }
        Ok(dot_conj(&h, y) / nh)
    }

    /// `‖y − α(base + j Jᵀ δ)‖²`.
    pub fn objective(&self, alpha: C64, delta: &Vector3<f64>, y: &[C64]) -> f64 {
        self.predict(delta)
            .iter()
            .zip(y)
            .map(|(h, yl)| (yl - alpha * h).norm_sqr())
            .sum()
    }
}

/// Outcome of an alternating refinement.
#[derive(Debug, Clone, PartialEq)]
pub struct Alternation {
    pub delta: Vector3<f64>,
    pub alpha: C64,
    /// Objective before the first update, then after each accepted update.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// A zero gain stopped the loop; the previous iterate was kept.
    pub aborted: bool,
}

/// Alternates `δ ← solve_delta(α)`, `α ← solve_alpha(δ)` on a fixed model.
pub fn alternate(
    model: &LinearModel,
    alpha0: C64,
    y: &[C64],
    tolerance: f64,
    max_iterations: usize,
) -> Result<Alternation> {
    let mut delta = Vector3::zeros();
    let mut alpha = alpha0;
    let mut last = model.objective(alpha, &delta, y);
    let mut out = Alternation {
        delta,
        alpha,
        trace: vec![last],
        iterations: 0,
        converged: false,
        aborted: false,
    };
    for it in 1..=max_iterations {
        out.iterations = it;
        let next_delta = match model.solve_delta(alpha, y) {
            Ok(d) => d,
            Err(Error::DegenerateModel(_)) => {
                out.aborted = true;
                break;
            }
            Err(e) => return Err(e),
        };
        let next_alpha = match model.solve_alpha(&next_delta, y) {
            Ok(a) => a,
            Err(Error::DegenerateModel(_)) => {
                out.aborted = true;
                break;
            }
            Err(e) => return Err(e),
        };
        let value = model.objective(next_alpha, &next_delta, y);
        if !value.is_finite() {
            return Err(Error::NumericalFailure(
                "non-finite refinement objective".into(),
            ));
        }
        if value > last {
            // Exact coordinate steps cannot increase the objective beyond
            // rounding, so this is the numerical floor.
            out.converged = true;
            break;
        }
        delta = next_delta;
        alpha = next_alpha;
        out.trace.push(value);
        let change = last - value;
        last = value;
        if change <= tolerance {
            out.converged = true;
            break;
        }
    }
    out.delta = delta;
    out.alpha = alpha;
    Ok(out)
}

/// Outcome of a closed-form refinement stage.
#[derive(Debug, Clone, PartialEq)]
pub struct Refinement {
    /// Refined parameter (anchor plus accumulated residual).
    pub estimate: Vector3<f64>,
    pub alpha: C64,
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub aborted: bool,
}

/// Runs the alternating refinement from `start`. With `relinearize` the
/// model is rebuilt around the running estimate before every update;
/// otherwise it is built once.
pub fn refine<F>(
    build: F,
    start: Vector3<f64>,
    alpha0: C64,
    y: &[C64],
    tolerance: f64,
    max_iterations: usize,
    relinearize: bool,
) -> Result<Refinement>
where
    F: Fn(&Vector3<f64>) -> Result<LinearModel>,
{
    if !relinearize {
        let model = build(&start)?;
        let alt = alternate(&model, alpha0, y, tolerance, max_iterations)?;
        return Ok(Refinement {
            estimate: start + alt.delta,
            alpha: alt.alpha,
            trace: alt.trace,
            iterations: alt.iterations,
            converged: alt.converged,
            aborted: alt.aborted,
        });
    }
    let mut out = Refinement {
        estimate: start,
        alpha: alpha0,
        trace: Vec::new(),
        iterations: 0,
        converged: false,
        aborted: false,
    };
    for it in 1..=max_iterations {
        out.iterations = it;
        let model = build(&out.estimate)?;
        let zero = Vector3::zeros();
        let before = model.objective(out.alpha, &zero, y);
        if out.trace.is_empty() {
            out.trace.push(before);
        }
        let step = match model.solve_delta(out.alpha, y) {
            Ok(d) => d,
            Err(Error::DegenerateModel(_)) => {
                out.aborted = true;
                break;
            }
            Err(e) => return Err(e),
        };
        let alpha = match model.solve_alpha(&step, y) {
            Ok(a) => a,
            Err(Error::DegenerateModel(_)) => {
                out.aborted = true;
                break;
            }
            Err(e) => return Err(e),
        };
        let value = model.objective(alpha, &step, y);
        if !value.is_finite() {
            return Err(Error::NumericalFailure(
                "non-finite refinement objective".into(),
            ));
        }
        let previous = *out.trace.last().expect("trace seeded above");
        out.estimate += step;
        out.alpha = alpha;
        out.trace.push(value);
        if (previous - value).abs() <= tolerance {
            out.converged = true;
            break;
        }
    }
    Ok(out)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_model(rng: &mut ChaCha8Rng, l: usize) -> LinearModel {
        let mut c = || C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        LinearModel {
            base: (0..l).map(|_| c()).collect(),
            rows: (0..l).map(|_| [c(), c(), c()]).collect(),
        }
    }

    #[test]
    fn matched_model_recovers_delta() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let model = random_model(&mut rng, 12);
        let truth = Vector3::new(0.3, -0.2, 0.05);
        let alpha = C64::new(0.7, -1.1);
        let y: Vec<C64> = model.predict(&truth).iter().map(|h| alpha * h).collect();
        let d = model.solve_delta(alpha, &y).unwrap();
        assert!((d - truth).norm() < 1e-12);
        let a = model.solve_alpha(&d, &y).unwrap();
        assert!((a - alpha).norm() < 1e-12);
    }

    #[test]
    fn zero_alpha_is_degenerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let model = random_model(&mut rng, 5);
        let y = model.base.clone();
        assert!(matches!(
            model.solve_delta(C64::new(0.0, 0.0), &y),
            Err(Error::DegenerateModel(_))
        ));
    }

    #[test]
    fn rank_deficient_with_one_pilot() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let model = random_model(&mut rng, 1);
        let y = model.base.clone();
        assert!(matches!(
            model.solve_delta(C64::new(1.0, 0.0), &y),
            Err(Error::RankDeficient(_))
        ));
    }

    #[test]
    fn alternation_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let model = random_model(&mut rng, 10);
            let y: Vec<C64> = (0..10)
                .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect();
            let out = alternate(&model, C64::new(1.0, 0.5), &y, 0.0, 100).unwrap();
            for w in out.trace.windows(2) {
                assert!(w[1] <= w[0]);
            }
        }
    }

    #[test]
    fn alternation_aborts_on_zero_gain() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let model = random_model(&mut rng, 6);
        let y = vec![C64::new(0.0, 0.0); 6];
        let out = alternate(&model, C64::new(1.0, 0.0), &y, 0.0, 10).unwrap();
        assert!(out.aborted || out.alpha == C64::new(0.0, 0.0));
        assert!(out.delta.iter().all(|d| d.is_finite()));
    }
}
