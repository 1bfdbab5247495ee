//! Generative signal model: RIS response with mobility, complex gain, noise
//! and the Rician multipath variant.
//!
//! The element response at pilot `ℓ` is `exp(−j 2π/λ · f_{ℓ,m}(p, v))` with the
//! first-order mobility phase
//! `f_{ℓ,m} = d_m − d_r + u_m(p)ᵀ v ℓ Ts`, `u_m(p) = (p − p_m)/d_m`.
//! The stacked observation is `y = α h(p, v) + n` with
//! `h_ℓ = w_ℓᵀ a(p_ℓ)` and `w_ℓ = ω_ℓ ⊙ a(p_b)`.

use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{RisArray, Vec3};

pub type C64 = Complex64;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

// RNG stream ids; keep the profile, noise and multipath draws independent
// even when callers reuse the same seed value.
const NOISE_STREAM: u64 = 0;
const MULTIPATH_STREAM: u64 = 1;
const PROFILE_STREAM: u64 = 2;

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    db_to_linear(dbm) * 1e-3
}

/// Radio-frequency constants, all in SI units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RfConstants {
    /// Carrier frequency (Hz).
    pub carrier_freq: f64,
    /// Wavelength λ = c / f_c (m).
    pub wavelength: f64,
    /// Bandwidth W (Hz).
    pub bandwidth: f64,
    /// Pilot spacing Ts (s); 1/W unless overridden.
    pub symbol_period: f64,
    pub symbol_period_overridden: bool,
    /// Transmit power P (W).
    pub tx_power: f64,
    /// Noise power spectral density N0 (W/Hz).
    pub noise_psd: f64,
    /// Noise figure n_f (linear).
    pub noise_figure: f64,
    pub tx_gain: f64,
    pub rx_gain: f64,
    /// Global phase offset ψ (rad).
    pub global_phase: f64,
}

impl RfConstants {
    pub fn new(
        carrier_freq: f64,
        bandwidth: f64,
        tx_power: f64,
        noise_psd: f64,
        noise_figure: f64,
    ) -> Result<Self> {
        for (name, value) in [
            ("carrier_freq", carrier_freq),
            ("bandwidth", bandwidth),
            ("tx_power", tx_power),
            ("noise_figure", noise_figure),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "{name} must be positive, got {value}"
                )));
            }
        }
        if !(noise_psd >= 0.0 && noise_psd.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "noise_psd must be non-negative, got {noise_psd}"
            )));
        }
        Ok(Self {
            carrier_freq,
            wavelength: SPEED_OF_LIGHT / carrier_freq,
            bandwidth,
            symbol_period: 1.0 / bandwidth,
            symbol_period_overridden: false,
            tx_power,
            noise_psd,
            noise_figure,
            tx_gain: 1.0,
            rx_gain: 1.0,
            global_phase: 0.0,
        })
    }

    /// 28 GHz, 1 MHz, 20 dBm, −174 dBm/Hz, 8 dB noise figure, unit antenna
    /// gains and zero global phase.
    pub fn standard() -> Self {
        Self::new(
            28e9,
            1e6,
            dbm_to_watts(20.0),
            dbm_to_watts(-174.0),
            db_to_linear(8.0),
        )
        .expect("default RF constants are valid")
    }

    pub fn with_symbol_period(mut self, ts: f64) -> Result<Self> {
        if !(ts >= 0.0 && ts.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "symbol period must be >= 0, got {ts}"
            )));
        }
        self.symbol_period = ts;
        self.symbol_period_overridden = true;
        Ok(self)
    }

    pub fn with_antenna_gains(mut self, tx_gain: f64, rx_gain: f64) -> Self {
        self.tx_gain = tx_gain;
        self.rx_gain = rx_gain;
        self
    }

    pub fn with_global_phase(mut self, psi: f64) -> Self {
        self.global_phase = psi;
        self
    }

    /// Noise variance σ² = N0 · W · n_f (W).
    pub fn noise_variance(&self) -> f64 {
        self.noise_psd * self.bandwidth * self.noise_figure
    }

    /// Wavenumber 2π/λ.
    pub fn wavenumber(&self) -> f64 {
        TAU / self.wavelength
    }
}

/// True UE state: position, velocity and complex gain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UeState {
    pub position: Vec3,
    pub velocity: Vec3,
    pub alpha: C64,
}

/// RIS phase configuration over `L` pilots; row `ℓ` holds `arg ω_ℓ`.
#[derive(Debug, Clone, PartialEq)]
pub struct RisPhaseProfile {
    num_pilots: usize,
    num_elements: usize,
    phases: Vec<f64>,
}

impl RisPhaseProfile {
    pub fn from_phases(num_pilots: usize, num_elements: usize, phases: Vec<f64>) -> Result<Self> {
        if num_pilots == 0 || num_elements == 0 {
            return Err(Error::InvalidInput(
                "phase profile must be non-empty".into(),
            ));
        }
        if phases.len() != num_pilots * num_elements {
            return Err(Error::InvalidInput(format!(
                "expected {} phases, got {}",
                num_pilots * num_elements,
                phases.len()
            )));
        }
        if phases.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidInput("phases must be finite".into()));
        }
        Ok(Self {
            num_pilots,
            num_elements,
            phases,
        })
    }

    /// I.i.d. uniform phases on `[0, 2π)` drawn from a seeded stream.
    pub fn random(num_pilots: usize, num_elements: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(PROFILE_STREAM);
        let phases = (0..num_pilots * num_elements)
            .map(|_| rng.gen::<f64>() * TAU)
            .collect();
        Self::from_phases(num_pilots, num_elements, phases)
    }

    /// Every element of every pilot set to the same phase.
    pub fn constant(num_pilots: usize, num_elements: usize, phase: f64) -> Result<Self> {
        Self::from_phases(
            num_pilots,
            num_elements,
            vec![phase; num_pilots * num_elements],
        )
    }

    pub fn num_pilots(&self) -> usize {
        self.num_pilots
    }

    pub fn num_elements(&self) -> usize {
        self.num_elements
    }

    /// Phase of element `m` at pilot row `row` (0-based).
    pub fn phase(&self, row: usize, m: usize) -> f64 {
        self.phases[row * self.num_elements + m]
    }

    /// Unit-modulus reflection coefficient `[ω_ℓ]_m`.
    pub fn reflection(&self, row: usize, m: usize) -> C64 {
        C64::from_polar(1.0, self.phase(row, m))
    }

    /// Adds `offset` to every phase (a common unit-modulus factor).
    pub fn rotated(&self, offset: f64) -> Self {
        Self {
            phases: self.phases.iter().map(|p| p + offset).collect(),
            ..self.clone()
        }
    }

    /// Keeps the first `rows` pilots.
    pub fn truncated(&self, rows: usize) -> Result<Self> {
        if rows == 0 || rows > self.num_pilots {
            return Err(Error::InvalidInput(format!(
                "cannot truncate {} pilots to {rows}",
                self.num_pilots
            )));
        }
        Self::from_phases(
            rows,
            self.num_elements,
            self.phases[..rows * self.num_elements].to_vec(),
        )
    }
}

/// Rician multipath on the RIS-UE link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Multipath {
    pub rician_k: f64,
}

/// Combined weights `w_ℓ = ω_ℓ ⊙ a(p_b)`, stored pilot-major (`L × M`).
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    num_pilots: usize,
    num_elements: usize,
    data: Vec<C64>,
}

impl Weights {
    fn new(ris: &RisArray, bs: &Vec3, profile: &RisPhaseProfile, wavelength: f64) -> Result<Self> {
        let bs_steer = steering_static(bs, ris, wavelength)?;
        let (l, m) = (profile.num_pilots(), profile.num_elements());
        let mut data = Vec::with_capacity(l * m);
        for row in 0..l {
            for (e, a) in bs_steer.iter().enumerate() {
                data.push(profile.reflection(row, e) * a);
            }
        }
        Ok(Self {
            num_pilots: l,
            num_elements: m,
            data,
        })
    }

    /// `w_ℓ` for pilot row `row` (0-based).
    #[inline]
    pub fn row(&self, row: usize) -> &[C64] {
        &self.data[row * self.num_elements..(row + 1) * self.num_elements]
    }

    pub fn num_pilots(&self) -> usize {
        self.num_pilots
    }

    pub fn num_elements(&self) -> usize {
        self.num_elements
    }

    /// `Wᵀ a`: one inner product per pilot.
    pub fn project(&self, a: &[C64]) -> Vec<C64> {
        (0..self.num_pilots)
            .map(|r| dot_unconj(self.row(r), a))
            .collect()
    }

    /// `‖Wᵀ a‖²`.
    pub fn project_norm_sqr(&self, a: &[C64]) -> f64 {
        (0..self.num_pilots)
            .map(|r| dot_unconj(self.row(r), a).norm_sqr())
            .sum()
    }

    /// `z = W^* y`, so that `(Wᵀa)ᴴ y = aᴴ z`.
    pub fn back_project(&self, y: &[C64]) -> Vec<C64> {
        let mut z = vec![C64::new(0.0, 0.0); self.num_elements];
        for (r, yl) in y.iter().enumerate() {
            for (zm, w) in z.iter_mut().zip(self.row(r)) {
                *zm += w.conj() * yl;
            }
        }
        z
    }
}

/// `Σ_i a_i b_i` without conjugation.
#[inline]
pub(crate) fn dot_unconj(a: &[C64], b: &[C64]) -> C64 {
    let (mut re, mut im) = (0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        re += x.re * y.re - x.im * y.im;
        im += x.re * y.im + x.im * y.re;
    }
    C64::new(re, im)
}

/// `Σ_i conj(a_i) b_i`.
#[inline]
pub(crate) fn dot_conj(a: &[C64], b: &[C64]) -> C64 {
    let (mut re, mut im) = (0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        re += x.re * y.re + x.im * y.im;
        im += x.re * y.im - x.im * y.re;
    }
    C64::new(re, im)
}

pub(crate) fn norm_sqr(a: &[C64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum()
}

/// Complete static description of one experiment.
#[derive(Debug, Clone)]
pub struct Scenario {
    rf: RfConstants,
    ris: Arc<RisArray>,
    bs_position: Vec3,
    ue: UeState,
    profile: Arc<RisPhaseProfile>,
    multipath: Option<Multipath>,
    noise_enabled: bool,
    weights: Arc<Weights>,
}

impl Scenario {
    pub fn new(
        rf: RfConstants,
        ris: RisArray,
        bs_position: Vec3,
        ue: UeState,
        profile: RisPhaseProfile,
    ) -> Result<Self> {
        if profile.num_elements() != ris.element_count() {
            return Err(Error::InvalidInput(format!(
                "profile has {} elements but the RIS has {}",
                profile.num_elements(),
                ris.element_count()
            )));
        }
        if profile.num_pilots() < 3 {
            return Err(Error::InvalidInput(format!(
                "at least 3 pilots are required, got L = {}",
                profile.num_pilots()
            )));
        }
        let finite = |v: &Vec3| v.iter().all(|c| c.is_finite());
        if !(finite(&ue.position) && finite(&ue.velocity) && ue.alpha.is_finite()) {
            return Err(Error::InvalidInput("UE state must be finite".into()));
        }
        if ris.min_distance_to(&ue.position) <= 0.0 {
            return Err(Error::DegenerateGeometry(
                "UE position coincides with an RIS element".into(),
            ));
        }
        let weights = Weights::new(&ris, &bs_position, &profile, rf.wavelength)?;
        Ok(Self {
            rf,
            ris: Arc::new(ris),
            bs_position,
            ue,
            profile: Arc::new(profile),
            multipath: None,
            noise_enabled: true,
            weights: Arc::new(weights),
        })
    }

    /// Reference geometry: 32×32 half-wavelength UPA at the origin, BS at
    /// `[3, 3, 1]`, `L = 40`, UE at `rho · i` moving at `speed · i` with
    /// `i = [−1, 2, 1]/√6`, and gain from [`channel_gain`].
    pub fn standard(rho: f64, speed: f64, profile_seed: u64) -> Result<Self> {
        let rf = RfConstants::standard();
        let ris = crate::geometry::build_upa(32, 32, rf.wavelength / 2.0)?;
        let bs = Vec3::new(3.0, 3.0, 1.0);
        let dir = default_direction();
        let position = dir * rho;
        let alpha = channel_gain(&position, &rf, ris.reference(), &bs)?;
        let profile = RisPhaseProfile::random(40, ris.element_count(), profile_seed)?;
        Self::new(
            rf,
            ris,
            bs,
            UeState {
                position,
                velocity: dir * speed,
                alpha,
            },
            profile,
        )
    }

    pub fn with_ue(&self, ue: UeState) -> Result<Self> {
        if self.ris.min_distance_to(&ue.position) <= 0.0 {
            return Err(Error::DegenerateGeometry(
                "UE position coincides with an RIS element".into(),
            ));
        }
        Ok(Self { ue, ..self.clone() })
    }

    pub fn with_multipath(&self, rician_k: f64) -> Result<Self> {
        if !(rician_k > 0.0) {
            return Err(Error::InvalidInput(format!(
                "Rician K must be > 0, got {rician_k}"
            )));
        }
        Ok(Self {
            multipath: Some(Multipath { rician_k }),
            ..self.clone()
        })
    }

    pub fn with_noise(&self, enabled: bool) -> Self {
        Self {
            noise_enabled: enabled,
            ..self.clone()
        }
    }

    /// Replaces the RF constants; the weights depend on λ so they are rebuilt.
    pub fn with_rf(&self, rf: RfConstants) -> Result<Self> {
        let weights = Weights::new(&self.ris, &self.bs_position, &self.profile, rf.wavelength)?;
        Ok(Self {
            rf,
            weights: Arc::new(weights),
            ..self.clone()
        })
    }

    pub fn with_profile(&self, profile: RisPhaseProfile) -> Result<Self> {
        let mut s = Self::new(
            self.rf.clone(),
            (*self.ris).clone(),
            self.bs_position,
            self.ue,
            profile,
        )?;
        s.multipath = self.multipath;
        s.noise_enabled = self.noise_enabled;
        Ok(s)
    }

    pub fn rf(&self) -> &RfConstants {
        &self.rf
    }

    pub fn ris(&self) -> &RisArray {
        &self.ris
    }

    pub fn bs_position(&self) -> &Vec3 {
        &self.bs_position
    }

    pub fn ue(&self) -> &UeState {
        &self.ue
    }

    pub fn profile(&self) -> &RisPhaseProfile {
        &self.profile
    }

    pub fn multipath(&self) -> Option<Multipath> {
        self.multipath
    }

    pub fn noise_enabled(&self) -> bool {
        self.noise_enabled
    }

    pub fn weights(&self) -> &Weights {
        &self.weights
    }

    /// True when both scenarios use the same cached RIS weights.
    pub fn shares_weights(&self, other: &Scenario) -> bool {
        Arc::ptr_eq(&self.weights, &other.weights) && Arc::ptr_eq(&self.ris, &other.ris)
    }

    /// Number of pilots `L`.
    pub fn num_pilots(&self) -> usize {
        self.profile.num_pilots()
    }

    /// Number of RIS elements `M`.
    pub fn num_elements(&self) -> usize {
        self.ris.element_count()
    }

    /// Human-readable warnings for conditions under which the first-order
    /// mobility model degrades.
    pub fn validity_warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        let travel = self.ue.velocity.norm() * self.num_pilots() as f64 * self.rf.symbol_period;
        let min_dist = self.ris.min_distance_to(&self.ue.position);
        if travel >= 0.1 * min_dist {
            out.push(format!(
                "UE travel over the frame ({travel:.3e} m) is not small against the closest \
                 element distance ({min_dist:.3e} m); speed limit is {:.3e} m/s",
                velocity_limit(
                    &self.ris,
                    &self.ue.position,
                    self.num_pilots(),
                    self.rf.symbol_period
                )
            ));
        }
        out
    }
}

/// Unit direction `[−1, 2, 1]/√6` used by the reference scenarios.
pub fn default_direction() -> Vec3 {
    Vec3::new(-1.0, 2.0, 1.0).normalize()
}

fn element_distance(p: &Vec3, ris: &RisArray, m: usize) -> Result<f64> {
    let d = (ris.element(m) - p).norm();
    if d == 0.0 {
        return Err(Error::DegenerateGeometry(format!(
            "position coincides with RIS element {m}"
        )));
    }
    Ok(d)
}

/// Exact path-length difference `‖p_m − (p + v ℓ Ts)‖ − ‖p_r − p‖`.
///
/// `pilot` is the 1-based pilot number `ℓ` (it multiplies `Ts`), `m` the
/// 0-based element index.
pub fn flm_exact(
    p: &Vec3,
    v: &Vec3,
    pilot: usize,
    m: usize,
    ris: &RisArray,
    ts: f64,
) -> Result<f64> {
    element_distance(p, ris, m)?;
    let moved = p + v * (pilot as f64 * ts);
    Ok((ris.element(m) - moved).norm() - (ris.reference() - p).norm())
}

/// First-order mobility approximation `d_m − d_r + u_m(p)ᵀ v ℓ Ts`.
pub fn flm_approx(
    p: &Vec3,
    v: &Vec3,
    pilot: usize,
    m: usize,
    ris: &RisArray,
    ts: f64,
) -> Result<f64> {
    let dm = element_distance(p, ris, m)?;
    let dr = (ris.reference() - p).norm();
    let u = (p - ris.element(m)) / dm;
    Ok(dm - dr + u.dot(v) * pilot as f64 * ts)
}

/// Speed bound `min_m ‖p_m − p‖ / (L Ts)` below which the mobility
/// approximation holds.
pub fn velocity_limit(ris: &RisArray, p: &Vec3, num_pilots: usize, ts: f64) -> f64 {
    ris.min_distance_to(p) / (num_pilots as f64 * ts)
}

/// Static (v = 0) near-field steering vector `exp(−j 2π/λ (d_m − d_r))`.
pub fn steering_static(p: &Vec3, ris: &RisArray, wavelength: f64) -> Result<Vec<C64>> {
    let k = TAU / wavelength;
    let dr = (ris.reference() - p).norm();
    (0..ris.element_count())
        .map(|m| {
            let dm = element_distance(p, ris, m)?;
            Ok(C64::from_polar(1.0, -k * (dm - dr)))
        })
        .collect()
}

/// Near-field steering vector at pilot `ℓ` (1-based) using the first-order
/// mobility model.
pub fn steering_nf(p: &Vec3, v: &Vec3, pilot: usize, scenario: &Scenario) -> Result<Vec<C64>> {
    let ris = scenario.ris();
    let k = scenario.rf().wavenumber();
    let ts = scenario.rf().symbol_period;
    (0..ris.element_count())
        .map(|m| {
            Ok(C64::from_polar(
                1.0,
                -k * flm_approx(p, v, pilot, m, ris, ts)?,
            ))
        })
        .collect()
}

/// Far-field steering vector `exp(+j 2π/λ (p_m − p_r)ᵀ [sinφcosθ, sinφsinθ, cosφ])`.
pub fn steering_ff(theta: f64, phi: f64, ris: &RisArray, wavelength: f64) -> Vec<C64> {
    let k = TAU / wavelength;
    let dir = crate::geometry::direction(theta, phi);
    ris.elements()
        .iter()
        .map(|e| C64::from_polar(1.0, k * (e - ris.reference()).dot(&dir)))
        .collect()
}

/// Complex gain `λ² √(P Gt Gr) / ((4π)² ‖p_r − p‖ ‖p_r − p_b‖) · exp(jψ)`.
pub fn channel_gain(p: &Vec3, rf: &RfConstants, reference: &Vec3, bs: &Vec3) -> Result<C64> {
    let d_ue = (reference - p).norm();
    let d_bs = (reference - bs).norm();
    if d_ue == 0.0 || d_bs == 0.0 {
        return Err(Error::DegenerateGeometry(
            "UE or BS coincides with the RIS reference point".into(),
        ));
    }
    let magnitude = rf.wavelength.powi(2) * (rf.tx_power * rf.tx_gain * rf.rx_gain).sqrt()
        / ((4.0 * PI).powi(2) * d_ue * d_bs);
    Ok(C64::from_polar(magnitude, rf.global_phase))
}

/// `h(p, v) = [w_ℓᵀ a(p_ℓ)]_{ℓ=1..L}`.
pub fn h_vector(p: &Vec3, v: &Vec3, scenario: &Scenario) -> Result<Vec<C64>> {
    let ris = scenario.ris();
    let k = scenario.rf().wavenumber();
    let ts = scenario.rf().symbol_period;
    let m_count = ris.element_count();
    let dr = (ris.reference() - p).norm();
    // Per element: a_{ℓ,m} = exp(−jk(d_m − d_r)) · exp(−jk u_mᵀv Ts)^ℓ.
    let mut current = Vec::with_capacity(m_count);
    let mut step = Vec::with_capacity(m_count);
    for m in 0..m_count {
        let dm = element_distance(p, ris, m)?;
        let u = (p - ris.element(m)) / dm;
        current.push(C64::from_polar(1.0, -k * (dm - dr)));
        step.push(C64::from_polar(1.0, -k * u.dot(v) * ts));
    }
    let weights = scenario.weights();
    let mut h = Vec::with_capacity(weights.num_pilots());
    for row in 0..weights.num_pilots() {
        for (c, s) in current.iter_mut().zip(&step) {
            *c *= s;
        }
        h.push(dot_unconj(weights.row(row), &current));
    }
    Ok(h)
}

/// One noisy snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub y: Vec<C64>,
    /// Variance of the noise actually added (0 when noise is disabled).
    pub noise_variance: f64,
    pub seed: u64,
}

fn complex_normal<R: Rng>(rng: &mut R, variance: f64) -> C64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re * s, im * s)
}

/// Draws `y = α h(p, v) + n`, or the Rician mixture when multipath is enabled.
/// Deterministic in `(scenario, seed)`.
pub fn observe(scenario: &Scenario, seed: u64) -> Result<Observation> {
    let ue = scenario.ue();
    let h = h_vector(&ue.position, &ue.velocity, scenario)?;
    let mut y: Vec<C64> = match scenario.multipath() {
        None => h.iter().map(|hl| ue.alpha * hl).collect(),
        Some(Multipath { rician_k }) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(MULTIPATH_STREAM);
            let diffuse: Vec<C64> = (0..scenario.num_elements())
                .map(|_| complex_normal(&mut rng, 1.0))
                .collect();
            let los = (rician_k / (rician_k + 1.0)).sqrt();
            let nlos = (1.0 / (rician_k + 1.0)).sqrt();
            let scattered = scenario.weights().project(&diffuse);
            h.iter()
                .zip(&scattered)
                .map(|(hl, sl)| ue.alpha * (hl * los + sl * nlos))
                .collect()
        }
    };
    let noise_variance = if scenario.noise_enabled() {
        scenario.rf().noise_variance()
    } else {
        0.0
    };
    if noise_variance > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(NOISE_STREAM);
        for yl in y.iter_mut() {
            *yl += complex_normal(&mut rng, noise_variance);
        }
    }
    Ok(Observation {
        y,
        noise_variance,
        seed,
    })
}

/// `10 log10(|α|² / (N0 n_f W))`.
pub fn snr_db(alpha: C64, rf: &RfConstants) -> f64 {
    linear_to_db(alpha.norm_sqr() / rf.noise_variance())
}
