//! Conversions between laser power, Rabi frequency, field amplitude,
//! Autler–Townes splitting and optical depth.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};

use crate::constants::{EA0, EPSILON_0, HBAR, SPEED_OF_LIGHT};
use crate::doppler::DopplerSpec;
use crate::error::{Error, Result};
use crate::model::AtomSystem;
use crate::observables::mean_absorption;

/// Gaussian beam: power (W) and 1/e² intensity radius (m).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamGeometry {
    pub power: f64,
    pub waist: f64,
}

impl BeamGeometry {
    pub fn new(power: f64, waist: f64) -> Result<Self> {
        let beam = Self { power, waist };
        beam.validate()?;
        Ok(beam)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.power >= 0.0 && self.power.is_finite()) {
            return Err(Error::InvalidInput(format!("beam power must be >= 0, got {}", self.power)));
        }
        if !(self.waist > 0.0 && self.waist.is_finite()) {
            return Err(Error::InvalidInput(format!("beam waist must be > 0, got {}", self.waist)));
        }
        Ok(())
    }

    /// Peak intensity 2P/(πw²), W/m².
    pub fn peak_intensity(&self) -> f64 {
        2.0 * self.power / (PI * self.waist * self.waist)
    }
}

fn check_dipole(dipole: f64) -> Result<()> {
    if !(dipole > 0.0 && dipole.is_finite()) {
        return Err(Error::InvalidInput(format!("dipole must be > 0, got {dipole}")));
    }
    Ok(())
}

/// Peak Rabi frequency sqrt(4P/(ε₀cπw²))·d/ħ in rad/s; `dipole` in e·a₀.
pub fn rabi_from_power(beam: &BeamGeometry, dipole: f64) -> Result<f64> {
    beam.validate()?;
    check_dipole(dipole)?;
    let field = (4.0 * beam.power / (EPSILON_0 * SPEED_OF_LIGHT * PI * beam.waist * beam.waist)).sqrt();
    Ok(field * dipole * EA0 / HBAR)
}

/// E = ħΩ/d in V/m.
pub fn field_from_rabi(rabi: f64, dipole: f64) -> Result<f64> {
    check_dipole(dipole)?;
    Ok(HBAR * rabi / (dipole * EA0))
}

/// Ω = dE/ħ in rad/s.
pub fn rabi_from_field(field: f64, dipole: f64) -> Result<f64> {
    check_dipole(dipole)?;
    Ok(field * dipole * EA0 / HBAR)
}

pub fn v_per_m_to_mv_per_cm(field: f64) -> f64 {
    field * 10.0
}

pub fn mv_per_cm_to_v_per_m(field: f64) -> f64 {
    field / 10.0
}

/// Result of a through-origin fit Δf = α√P.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ATCalibration {
    /// Hz per √mW.
    pub alpha: f64,
    /// Standard error of α, Hz per √mW (zero for two points or exact data).
    pub alpha_std_error: f64,
    /// Field amplitude per √mW, V/m.
    pub field_per_sqrt_mw: f64,
    pub field_std_error: f64,
    pub points: usize,
}

impl ATCalibration {
    /// Signal Rabi frequency (rad/s) at `power_mw`.
    pub fn rabi_at(&self, power_mw: f64) -> f64 {
        TAU * self.alpha * power_mw.sqrt()
    }

    /// Field amplitude (V/m) at `power_mw`.
    pub fn field_at(&self, power_mw: f64) -> f64 {
        self.field_per_sqrt_mw * power_mw.sqrt()
    }
}

/// Field per √mW for a splitting slope α (Hz/√mW): the AT splitting in Hz
/// is the microwave Rabi frequency over 2π.
pub fn field_per_sqrt_mw(alpha: f64, mw_dipole: f64) -> Result<f64> {
    field_from_rabi(TAU * alpha, mw_dipole)
}

/// Least-squares Δf = α√P through the origin. `data` holds (power in mW,
/// splitting in Hz).
pub fn fit_at_splitting(data: &[(f64, f64)], mw_dipole: f64) -> Result<ATCalibration> {
    if data.len() < 2 {
        return Err(Error::InsufficientData(format!("AT fit needs >= 2 points, got {}", data.len())));
    }
    if let Some(bad) = data.iter().find(|(p, f)| !(*p > 0.0 && p.is_finite() && f.is_finite())) {
        return Err(Error::InvalidInput(format!("bad AT data point {bad:?}")));
    }
    check_dipole(mw_dipole)?;
    // Sum in a canonical order so the result does not depend on input order.
    let mut sorted = data.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let sxx: f64 = sorted.iter().map(|(p, _)| p).sum();
    let sxy: f64 = sorted.iter().map(|(p, f)| p.sqrt() * f).sum();
    let alpha = sxy / sxx;
    if !(alpha > 0.0) {
        return Err(Error::InvalidInput(format!("fitted slope must be positive, got {alpha}")));
    }
    let rss: f64 = sorted.iter().map(|(p, f)| (f - alpha * p.sqrt()).powi(2)).sum();
    let n = sorted.len();
    let alpha_std_error = (rss / (n - 1) as f64 / sxx).sqrt();
    let field = field_per_sqrt_mw(alpha, mw_dipole)?;
    Ok(ATCalibration {
        alpha,
        alpha_std_error,
        field_per_sqrt_mw: field,
        field_std_error: field * alpha_std_error / alpha,
        points: n,
    })
}

/// Scale β such that the two-level (no coupling, no microwaves) Doppler
/// absorption at Δp = 0 equals `od`:
///
/// ```text
/// od = β ⟨Im(ρ₁₂/Ωp)⟩,  ρ₁₂/Ωp = (i/2)/(γ + Γ₂/2 + iΔp′)
/// ```
///
/// β carries units of rad/s, matching ρ₁₂/Ωp in s/rad.
pub fn beta_from_od(atom: &AtomSystem, spec: &DopplerSpec, od: f64) -> Result<f64> {
    if !(od > 0.0 && od.is_finite()) {
        return Err(Error::InvalidInput(format!("optical depth must be > 0, got {od}")));
    }
    let depth = mean_absorption(atom, Complex64::new(0.0, 0.0), spec, 0.0, 0.0)?;
    if !(depth > 0.0) {
        return Err(Error::InvalidInput("two-level absorption vanishes".into()));
    }
    Ok(od / depth)
}

/// β re-expressed with detunings in ordinary MHz instead of rad/s.
pub fn beta_in_mhz(beta: f64) -> f64 {
    beta / (TAU * 1e6)
}

/// |Δk·l| along the optical axis for the sideband at ωp ± δs, with the two
/// microwaves at `mw_angle` (rad) to the collinear optical beams.
///
/// The optical terms contribute ±δs/c; the microwave difference
/// wavevector (k_L − k_S) contributes ∓(δs/c)cos θ.
pub fn phase_mismatch(mw_angle: f64, delta_s: f64, cell_length: f64) -> Result<f64> {
    if !(cell_length >= 0.0 && cell_length.is_finite()) {
        return Err(Error::InvalidInput(format!("cell length must be >= 0, got {cell_length}")));
    }
    if !(mw_angle.is_finite() && delta_s.is_finite()) {
        return Err(Error::InvalidInput("angle and δs must be finite".into()));
    }
    let dk = delta_s.abs() / SPEED_OF_LIGHT * (1.0 - mw_angle.cos());
    // cos(0) = 1 exactly, so the collinear case is exactly zero.
    Ok(dk.abs() * cell_length)
}
