//! Coarse initialization: far-field 2D angle search, then alternating
//! near-field range and angle searches on a fixed grid.
//!
//! Every grid cost has the form `‖y‖² − |aᴴ W* y|² / ‖Wᵀ a‖²`. The
//! denominators depend only on the RIS configuration, so a [`GridSearcher`]
//! caches them and can be shared by every observation drawn from the same
//! scenario.

use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::sync::OnceLock;

use rayon::prelude::*;

use super::objective::{gain_for, projected_residual};
use super::{ConvergenceConfig, GridSpec};
use crate::channel::{norm_sqr, Scenario, C64};
use crate::error::{Error, Result};
use crate::geometry::{spherical_to_cartesian, Spherical, Vec3};

/// Result of the initialization search.
#[derive(Debug, Clone, PartialEq)]
pub struct GridOutcome {
    pub position: Vec3,
    /// Grid point relative to the RIS reference.
    pub spherical: Spherical,
    pub alpha: C64,
    /// Far-field angles that seeded the loop.
    pub far_field: (f64, f64),
    /// Static cost after each range/angle iteration.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Element offsets factored as `x_m`, `y_m` lookups when the array is planar.
#[derive(Debug, Clone)]
struct Lattice {
    xs: Vec<f64>,
    ys: Vec<f64>,
    xi: Vec<usize>,
    yi: Vec<usize>,
}

impl Lattice {
    fn new(offsets: &[Vec3]) -> Self {
        fn index(values: impl Iterator<Item = f64>) -> (Vec<f64>, Vec<usize>) {
            let mut seen: HashMap<u64, usize> = HashMap::new();
            let mut distinct = Vec::new();
            let idx = values
                .map(|v| {
                    *seen.entry(v.to_bits()).or_insert_with(|| {
                        distinct.push(v);
                        distinct.len() - 1
                    })
                })
                .collect();
            (distinct, idx)
        }
        let (xs, xi) = index(offsets.iter().map(|q| q.x));
        let (ys, yi) = index(offsets.iter().map(|q| q.y));
        Self { xs, ys, xi, yi }
    }
}

/// Cached grid search over a fixed RIS configuration.
#[derive(Debug)]
pub struct GridSearcher {
    spec: GridSpec,
    scenario: Scenario,
    offsets: Vec<Vec3>,
    offset_sq: Vec<f64>,
    lattice: Option<Lattice>,
    thetas: Vec<f64>,
    ff_phis: Vec<f64>,
    nf_phis: Vec<f64>,
    rhos: Vec<f64>,
    /// Number of near-field elevation rows that need evaluating; rows past it
    /// mirror earlier ones when the array is planar.
    nf_rows: usize,
    ff_norms: OnceLock<Vec<f64>>,
    nf_norms: Vec<OnceLock<Vec<f64>>>,
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

impl GridSearcher {
    pub fn new(scenario: &Scenario, spec: GridSpec) -> Result<Self> {
        spec.validate()?;
        let ris = scenario.ris();
        let offsets: Vec<Vec3> = ris.elements().iter().map(|e| e - ris.reference()).collect();
        let scale = offsets
            .iter()
            .map(|q| q.norm())
            .fold(0.0, f64::max)
            .max(1e-300);
        let planar = offsets.iter().all(|q| q.z.abs() <= 1e-15 * scale);
        let lattice = planar.then(|| Lattice::new(&offsets));
        let nf_phis = linspace(0.0, PI, spec.n_phi);
        let nf_rows = if planar {
            spec.n_phi - (spec.n_phi - 1) / 2
        } else {
            spec.n_phi
        };
        Ok(Self {
            thetas: (0..spec.n_theta)
                .map(|i| TAU * i as f64 / spec.n_theta as f64)
                .collect(),
            ff_phis: linspace(0.0, FRAC_PI_2, spec.n_phi),
            nf_phis,
            rhos: (0..spec.n_rho)
                .map(|k| spec.rho_max * (k + 1) as f64 / spec.n_rho as f64)
                .collect(),
            nf_rows,
            offset_sq: offsets.iter().map(|q| q.norm_squared()).collect(),
            offsets,
            lattice,
            ff_norms: OnceLock::new(),
            nf_norms: (0..spec.n_rho).map(|_| OnceLock::new()).collect(),
            spec,
            scenario: scenario.clone(),
        })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn thetas(&self) -> &[f64] {
        &self.thetas
    }

    pub fn far_field_phis(&self) -> &[f64] {
        &self.ff_phis
    }

    pub fn near_field_phis(&self) -> &[f64] {
        &self.nf_phis
    }

    pub fn rhos(&self) -> &[f64] {
        &self.rhos
    }

    /// True when `other` carries the same array and RIS weights, so cached
    /// tables apply to its observations.
    pub fn matches(&self, other: &Scenario) -> bool {
        self.scenario.shares_weights(other)
    }

    fn wavenumber(&self) -> f64 {
        self.scenario.rf().wavenumber()
    }

    fn far_field_steering(&self, theta: f64, phi: f64, out: &mut [C64]) {
        let k = self.wavenumber();
        let (st, ct) = theta.sin_cos();
        let (sp, cp) = phi.sin_cos();
        let dir = Vec3::new(sp * ct, sp * st, cp);
        match &self.lattice {
            Some(lat) => {
                let ex: Vec<C64> = lat
                    .xs
                    .iter()
                    .map(|x| C64::from_polar(1.0, k * x * dir.x))
                    .collect();
                let ey: Vec<C64> = lat
                    .ys
                    .iter()
                    .map(|y| C64::from_polar(1.0, k * y * dir.y))
                    .collect();
                for (m, a) in out.iter_mut().enumerate() {
                    *a = ex[lat.xi[m]] * ey[lat.yi[m]];
                }
            }
            None => {
                for (a, q) in out.iter_mut().zip(&self.offsets) {
                    *a = C64::from_polar(1.0, k * q.dot(&dir));
                }
            }
        }
    }

    fn near_field_steering(&self, rho: f64, theta: f64, phi: f64, out: &mut [C64]) {
        let k = self.wavenumber();
        let (st, ct) = theta.sin_cos();
        let (sp, cp) = phi.sin_cos();
        let dir = Vec3::new(sp * ct, sp * st, cp);
        for ((a, q), q2) in out.iter_mut().zip(&self.offsets).zip(&self.offset_sq) {
            // d_m − ρ with d_m² = ρ² + q² − 2ρ qᵀdir, written to avoid cancellation.
            let num = q2 - 2.0 * rho * q.dot(&dir);
            let dm = (rho * rho + num).sqrt();
            let diff = num / (dm + rho);
            let (s, c) = (-k * diff).sin_cos();
            *a = C64::new(c, s);
        }
    }

    fn projected_norm(&self, a: &[C64]) -> f64 {
        self.scenario.weights().project_norm_sqr(a)
    }

    fn ff_norm_table(&self) -> &[f64] {
        self.ff_norms.get_or_init(|| {
            let m = self.offsets.len();
            let n_phi = self.ff_phis.len();
            (0..self.thetas.len() * n_phi)
                .into_par_iter()
                .map_init(
                    || vec![C64::new(0.0, 0.0); m],
                    |a, idx| {
                        self.far_field_steering(
                            self.thetas[idx / n_phi],
                            self.ff_phis[idx % n_phi],
                            a,
                        );
                        self.projected_norm(a)
                    },
                )
                .collect()
        })
    }

    fn nf_norm_table(&self, k: usize) -> &[f64] {
        self.nf_norms[k].get_or_init(|| {
            let m = self.offsets.len();
            let rho = self.rhos[k];
            let rows = self.nf_rows;
            (0..self.thetas.len() * rows)
                .into_par_iter()
                .map_init(
                    || vec![C64::new(0.0, 0.0); m],
                    |a, idx| {
                        self.near_field_steering(
                            rho,
                            self.thetas[idx / rows],
                            self.nf_phis[idx % rows],
                            a,
                        );
                        self.projected_norm(a)
                    },
                )
                .collect()
        })
    }

    /// Scores `|aᴴz|² / ‖Wᵀa‖²` over a θ × φ table; the cost is `‖y‖²` minus
    /// the score.
    fn scan_angles<F>(
        &self,
        phis: &[f64],
        rows: usize,
        norms: &[f64],
        z: &[C64],
        steer: F,
    ) -> Vec<f64>
    where
        F: Fn(f64, f64, &mut [C64]) + Sync,
    {
        let m = self.offsets.len();
        (0..self.thetas.len() * rows)
            .into_par_iter()
            .map_init(
                || vec![C64::new(0.0, 0.0); m],
                |a, idx| {
                    steer(self.thetas[idx / rows], phis[idx % rows], a);
                    let c: C64 = a.iter().zip(z).map(|(x, zm)| x.conj() * zm).sum();
                    c.norm_sqr() / norms[idx]
                },
            )
            .collect()
    }

    /// Runs the full initialization on one observation.
    pub fn search(&self, y: &[C64], conv: &ConvergenceConfig) -> Result<GridOutcome> {
        let weights = self.scenario.weights();
        if y.len() != weights.num_pilots() {
            return Err(Error::InvalidInput(format!(
                "observation has {} samples, expected {}",
                y.len(),
                weights.num_pilots()
            )));
        }
        let energy = norm_sqr(y);
        if !energy.is_finite() {
            return Err(Error::NumericalFailure("observation is not finite".into()));
        }
        let tie = 1e-12 * energy;
        let z = weights.back_project(y);

        let ff_n = self.ff_phis.len();
        let ff_scores =
            self.scan_angles(&self.ff_phis, ff_n, self.ff_norm_table(), &z, |t, p, a| {
                self.far_field_steering(t, p, a)
            });
        let best = argmax(&ff_scores, tie)?;
        let far_field = (self.thetas[best / ff_n], self.ff_phis[best % ff_n]);
        let (mut theta, mut phi) = far_field;

        let mut trace = Vec::new();
        let mut rho_index: Option<usize> = None;
        let mut iterations = 0;
        let mut converged = false;
        let mut a = vec![C64::new(0.0, 0.0); self.offsets.len()];
        for it in 1..=conv.grid_max_iterations {
            iterations = it;
            let range_scores: Vec<f64> = self
                .rhos
                .iter()
                .map(|&rho| {
                    self.near_field_steering(rho, theta, phi, &mut a);
                    let c: C64 = a.iter().zip(&z).map(|(x, zm)| x.conj() * zm).sum();
                    c.norm_sqr() / self.projected_norm(&a)
                })
                .collect();
            let k = argmax(&range_scores, tie)?;
            if rho_index == Some(k) {
                // Same range bin: the angle search would repeat itself.
                converged = true;
                break;
            }
            rho_index = Some(k);
            let rows = self.nf_rows;
            let rho = self.rhos[k];
            let scores =
                self.scan_angles(&self.nf_phis, rows, self.nf_norm_table(k), &z, |t, p, a| {
                    self.near_field_steering(rho, t, p, a)
                });
            let best = argmax(&scores, tie)?;
            theta = self.thetas[best / rows];
            phi = self.nf_phis[best % rows];
            self.near_field_steering(rho, theta, phi, &mut a);
            let value = projected_residual(&weights.project(&a), y)?;
            let previous = trace.last().copied();
            trace.push(value);
            if let Some(prev) = previous {
                if (prev - value).abs() <= conv.objective_tolerance {
                    converged = true;
                    break;
                }
            }
        }
        let k = rho_index.expect("at least one grid iteration runs");
        let spherical = Spherical {
            rho: self.rhos[k],
            theta,
            phi,
        };
        let position = spherical_to_cartesian(&spherical) + self.scenario.ris().reference();
        self.near_field_steering(spherical.rho, theta, phi, &mut a);
        let h = weights.project(&a);
        let alpha = gain_for(&h, y)?;
        Ok(GridOutcome {
            position,
            spherical,
            alpha,
            far_field,
            trace,
            iterations,
            converged,
        })
    }
}

/// Index of the largest score; later entries must beat the incumbent by more
/// than `tie` so the lowest index wins near-ties.
fn argmax(scores: &[f64], tie: f64) -> Result<usize> {
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if !s.is_finite() {
            return Err(Error::NumericalFailure("non-finite grid cost".into()));
        }
        if *s > scores[best] + tie {
            best = i;
        }
    }
    Ok(best)
}

/// One-shot initialization; builds a fresh [`GridSearcher`].
pub fn init_pos_gain(
    y: &[C64],
    scenario: &Scenario,
    grid: &GridSpec,
    conv: &ConvergenceConfig,
) -> Result<GridOutcome> {
    GridSearcher::new(scenario, grid.clone())?.search(y, conv)
}
