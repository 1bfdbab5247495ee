//! Coordinate systems, unit vectors and the RIS element layout.
//!
//! Conventions: azimuth `theta` is measured in the xy-plane from +x toward +y,
//! elevation `phi` from the +z axis. The RIS lies in the z = 0 plane.

use std::f64::consts::{PI, TAU};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cartesian 3-vector in meters (or m/s when it holds a velocity).
pub type Vec3 = Vector3<f64>;

/// Builds a [`Vec3`], rejecting non-finite components.
pub fn checked_vec3(x: f64, y: f64, z: f64) -> Result<Vec3> {
    if x.is_finite() && y.is_finite() && z.is_finite() {
        Ok(Vec3::new(x, y, z))
    } else {
        Err(Error::InvalidInput(format!(
            "vector components must be finite, got [{x}, {y}, {z}]"
        )))
    }
}

/// Spherical coordinates `(rho, theta, phi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spherical {
    pub rho: f64,
    pub theta: f64,
    pub phi: f64,
}

impl Spherical {
    /// Normalizes the angles: `theta` is wrapped into `[0, 2π)` and `phi`
    /// clamped to `[0, π]`.
    pub fn new(rho: f64, theta: f64, phi: f64) -> Result<Self> {
        if !(rho.is_finite() && theta.is_finite() && phi.is_finite()) {
            return Err(Error::InvalidInput(
                "spherical coordinates must be finite".into(),
            ));
        }
        if rho < 0.0 {
            return Err(Error::InvalidInput(format!(
                "rho must be non-negative, got {rho}"
            )));
        }
        let mut theta = theta.rem_euclid(TAU);
        if theta >= TAU {
            theta = 0.0;
        }
        Ok(Self {
            rho,
            theta,
            phi: phi.clamp(0.0, PI),
        })
    }

    /// Unit direction `[sinφ cosθ, sinφ sinθ, cosφ]`.
    pub fn direction(&self) -> Vec3 {
        direction(self.theta, self.phi)
    }
}

/// Unit vector for azimuth `theta` and elevation `phi`.
#[inline]
pub fn direction(theta: f64, phi: f64) -> Vec3 {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    Vec3::new(sp * ct, sp * st, cp)
}

pub fn spherical_to_cartesian(s: &Spherical) -> Vec3 {
    s.direction() * s.rho
}

/// Inverse of [`spherical_to_cartesian`]. The origin maps to `(0, 0, 0)`.
pub fn cartesian_to_spherical(p: &Vec3) -> Spherical {
    let rho = p.norm();
    if rho == 0.0 {
        return Spherical {
            rho: 0.0,
            theta: 0.0,
            phi: 0.0,
        };
    }
    let phi = (p.z / rho).clamp(-1.0, 1.0).acos();
    let theta = if p.x == 0.0 && p.y == 0.0 {
        0.0
    } else {
        let t = p.y.atan2(p.x).rem_euclid(TAU);
        if t >= TAU {
            0.0
        } else {
            t
        }
    };
    Spherical { rho, theta, phi }
}

/// Unit vector pointing from `from` toward `p`.
pub fn unit_vector_to(p: &Vec3, from: &Vec3) -> Result<Vec3> {
    let d = p - from;
    let n = d.norm();
    if n == 0.0 || !n.is_finite() {
        return Err(Error::DegenerateGeometry(format!(
            "cannot form a unit vector between coincident points {p:?}"
        )));
    }
    Ok(d / n)
}

/// Planar RIS: element positions plus the reference point `p_r`.
#[derive(Debug, Clone, PartialEq)]
pub struct RisArray {
    elements: Vec<Vec3>,
    reference: Vec3,
}

impl RisArray {
    /// Builds an array from explicit element positions; the reference is the
    /// centroid.
    pub fn from_elements(elements: Vec<Vec3>) -> Result<Self> {
        if elements.is_empty() {
            return Err(Error::InvalidInput(
                "an RIS needs at least one element".into(),
            ));
        }
        if elements.iter().any(|e| !e.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidInput(
                "element positions must be finite".into(),
            ));
        }
        let mut sorted: Vec<[f64; 3]> = elements.iter().map(|e| [e.x, e.y, e.z]).collect();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidInput(
                "RIS element positions must be distinct".into(),
            ));
        }
        let reference = elements.iter().sum::<Vec3>() / elements.len() as f64;
        Ok(Self {
            elements,
            reference,
        })
    }

    /// Same as [`RisArray::from_elements`] but with an explicit reference point.
    pub fn with_reference(elements: Vec<Vec3>, reference: Vec3) -> Result<Self> {
        let mut ris = Self::from_elements(elements)?;
        ris.reference = reference;
        Ok(ris)
    }

    pub fn elements(&self) -> &[Vec3] {
        &self.elements
    }

    pub fn element(&self, m: usize) -> &Vec3 {
        &self.elements[m]
    }

    pub fn reference(&self) -> &Vec3 {
        &self.reference
    }

    /// Number of elements `M`.
    pub fn element_count(&self) -> usize {
        self.elements.len()
    }

    /// `q_m = ‖p_m − p_r‖`.
    pub fn offset_norm(&self, m: usize) -> f64 {
        (self.elements[m] - self.reference).norm()
    }

    /// Largest `q_m` over the array.
    pub fn max_offset(&self) -> f64 {
        (0..self.element_count())
            .map(|m| self.offset_norm(m))
            .fold(0.0, f64::max)
    }

    /// In-plane azimuth `ψ_m` of element `m` relative to the reference.
    pub fn element_azimuth(&self, m: usize) -> f64 {
        let d = self.elements[m] - self.reference;
        d.y.atan2(d.x)
    }

    /// Smallest element-to-point distance `min_m ‖p_m − p‖`.
    pub fn min_distance_to(&self, p: &Vec3) -> f64 {
        self.elements
            .iter()
            .map(|e| (e - p).norm())
            .fold(f64::INFINITY, f64::min)
    }
}

/// Uniform planar array in the z = 0 plane, centered on the origin.
///
/// Elements are ordered row-major: rows run along x, columns along y, so
/// element `r * cols + c` sits at `x = (r - (rows-1)/2)·spacing`,
/// `y = (c - (cols-1)/2)·spacing`.
pub fn build_upa(rows: usize, cols: usize, spacing: f64) -> Result<RisArray> {
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidInput(format!(
            "UPA dimensions must be positive, got {rows}x{cols}"
        )));
    }
    if !(spacing > 0.0 && spacing.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "UPA spacing must be positive, got {spacing}"
        )));
    }
    let x0 = (rows as f64 - 1.0) / 2.0;
    let y0 = (cols as f64 - 1.0) / 2.0;
    let mut elements = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            elements.push(Vec3::new(
                (r as f64 - x0) * spacing,
                (c as f64 - y0) * spacing,
                0.0,
            ));
        }
    }
    // Symmetric layout: the centroid is the origin up to rounding, pin it exactly.
    RisArray::with_reference(elements, Vec3::zeros())
}
