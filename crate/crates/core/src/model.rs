//! The reduced four-level ladder: domain types, complex relaxation rates,
//! the `G` denominator and the closed-form first-order harmonic coherences
//! of the six-wave-mixing response.
//!
//! Levels: |1⟩ ground, |2⟩ excited, |3⟩ and |4⟩ Rydberg states coupled by
//! the local and signal microwaves. Only the probe-driven coherences
//! X = (ρ₁₂, ρ₁₃, ρ₁₄) are modelled (weak probe, ρ₁₁ ≈ 1).

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::constants::RB87_MASS;
use crate::error::{Error, Result};
use crate::units::{khz, mhz};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Ratio |Ω_S|/|Ω_L| above which the first-order formulas are flagged.
pub const WEAK_SIGNAL_RATIO: f64 = 0.1;

/// Threshold on |G| relative to the magnitude of its terms.
const DEGENERATE_TOLERANCE: f64 = 1e-300;

/// Physical description of the four-level ladder. Rates are angular (rad/s),
/// dipoles in units of e·a₀, wavelengths in metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AtomSystem {
    /// Excited-state (|2⟩) decay Γ₂.
    pub gamma2: f64,
    /// Rydberg-state decay Γ_r.
    pub gamma_r: f64,
    /// Additional coherence dephasing γ (transit time, collisions).
    pub dephasing: f64,
    pub dipole_probe: f64,
    pub dipole_coupling: f64,
    pub dipole_mw: f64,
    pub lambda_probe: f64,
    pub lambda_coupling: f64,
    /// Atomic mass, kg.
    pub mass: f64,
    /// Vapour temperature, K.
    pub temperature: f64,
}

impl Default for AtomSystem {
    /// ⁸⁷Rb 5S₁/₂ → 5P₃/₂ → 51D₅/₂ → 52P₃/₂ in a room-temperature cell.
    fn default() -> Self {
        Self {
            gamma2: mhz(6.07),
            gamma_r: khz(2.4),
            dephasing: 0.0,
            dipole_probe: 2.44,
            dipole_coupling: 0.012,
            dipole_mw: 1640.184,
            lambda_probe: 780e-9,
            lambda_coupling: 480e-9,
            mass: RB87_MASS,
            temperature: 293.0,
        }
    }
}

impl AtomSystem {
    pub fn with_dephasing(mut self, dephasing: f64) -> Self {
        self.dephasing = dephasing;
        self
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    /// Checks that every quantity is strictly positive (dephasing may be zero).
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("gamma2", self.gamma2),
            ("gamma_r", self.gamma_r),
            ("dipole_probe", self.dipole_probe),
            ("dipole_coupling", self.dipole_coupling),
            ("dipole_mw", self.dipole_mw),
            ("lambda_probe", self.lambda_probe),
            ("lambda_coupling", self.lambda_coupling),
            ("mass", self.mass),
            ("temperature", self.temperature),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "atom.{name} must be finite and > 0, got {value}"
                )));
            }
        }
        if !(self.dephasing.is_finite() && self.dephasing >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "atom.dephasing must be finite and >= 0, got {}",
                self.dephasing
            )));
        }
        Ok(())
    }
}

/// Field configuration: complex Rabi frequencies and real detunings, all in
/// rad/s. `delta_s` is the beat detuning δs = ω_L − ω_S.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriveConfig {
    pub omega_p: Complex64,
    pub omega_c: Complex64,
    pub omega_l: Complex64,
    pub omega_s: Complex64,
    pub delta_p: f64,
    pub delta_c: f64,
    pub delta_l: f64,
    pub delta_s: f64,
}

impl DriveConfig {
    /// All fields resonant, real Rabi frequencies.
    pub fn resonant(omega_p: f64, omega_c: f64, omega_l: f64, omega_s: f64, delta_s: f64) -> Self {
        Self {
            omega_p: omega_p.into(),
            omega_c: omega_c.into(),
            omega_l: omega_l.into(),
            omega_s: omega_s.into(),
            delta_p: 0.0,
            delta_c: 0.0,
            delta_l: 0.0,
            delta_s,
        }
    }

    pub fn with_coupling(mut self, omega_c: f64) -> Self {
        self.omega_c = omega_c.into();
        self
    }

    pub fn with_local(mut self, omega_l: f64) -> Self {
        self.omega_l = omega_l.into();
        self
    }

    pub fn with_signal(mut self, omega_s: f64) -> Self {
        self.omega_s = omega_s.into();
        self
    }

    pub fn with_beat(mut self, delta_s: f64) -> Self {
        self.delta_s = delta_s;
        self
    }

    pub fn with_detunings(mut self, delta_p: f64, delta_c: f64, delta_l: f64) -> Self {
        self.delta_p = delta_p;
        self.delta_c = delta_c;
        self.delta_l = delta_l;
        self
    }

    /// Whether |Ω_S| ≤ 0.1·|Ω_L|, the regime the first-order formulas are
    /// documented for. Not enforced anywhere; callers may warn on it.
    pub fn is_weak_signal(&self) -> bool {
        self.omega_s.norm() <= WEAK_SIGNAL_RATIO * self.omega_l.norm()
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("omega_p", self.omega_p),
            ("omega_c", self.omega_c),
            ("omega_l", self.omega_l),
            ("omega_s", self.omega_s),
        ];
        for (name, value) in fields {
            if !(value.re.is_finite() && value.im.is_finite()) {
                return Err(Error::InvalidInput(format!("drive.{name} is not finite")));
            }
        }
        for (name, value) in [
            ("delta_p", self.delta_p),
            ("delta_c", self.delta_c),
            ("delta_l", self.delta_l),
            ("delta_s", self.delta_s),
        ] {
            if !value.is_finite() {
                return Err(Error::InvalidInput(format!("drive.{name} is not finite")));
            }
        }
        Ok(())
    }
}

/// Complex relaxation rates γ₁₂, γ₁₃, γ₁₄ (rad/s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexRates {
    pub g12: Complex64,
    pub g13: Complex64,
    pub g14: Complex64,
}

impl ComplexRates {
    /// Adds the same complex shift to all three rates, as in G(γ₁₂+s, γ₁₃+s, γ₁₄+s).
    #[inline]
    pub fn shifted(&self, shift: Complex64) -> Self {
        Self {
            g12: self.g12 + shift,
            g13: self.g13 + shift,
            g14: self.g14 + shift,
        }
    }
}

/// First-order harmonic coherences ρ₁₂⁰, ρ₁₂¹, ρ₁₂⁻¹ (dimensionless).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Harmonics1 {
    pub rho0: Complex64,
    pub rho_plus: Complex64,
    pub rho_minus: Complex64,
}

impl Harmonics1 {
    /// |ρ₁₂¹ − (ρ₁₂⁻¹)*|, the amplitude of Im(ρ¹e^{iδs t} + ρ⁻¹e^{−iδs t}).
    pub fn beat_amplitude(&self) -> f64 {
        (self.rho_plus - self.rho_minus.conj()).norm()
    }
}

pub fn complex_rates(atom: &AtomSystem, drive: &DriveConfig) -> ComplexRates {
    complex_rates_at(atom, drive.delta_p, drive.delta_c, drive.delta_l)
}

/// Rates for explicit (e.g. Doppler-shifted) probe and coupling detunings.
#[inline]
pub fn complex_rates_at(atom: &AtomSystem, delta_p: f64, delta_c: f64, delta_l: f64) -> ComplexRates {
    let rydberg = atom.dephasing + 0.5 * atom.gamma_r;
    ComplexRates {
        g12: Complex64::new(atom.dephasing + 0.5 * atom.gamma2, delta_p),
        g13: Complex64::new(rydberg, delta_p + delta_c),
        g14: Complex64::new(rydberg, delta_p + delta_c - delta_l),
    }
}

/// G(γ₁₂, γ₁₃, γ₁₄) = γ₁₄|Ω_c|² + γ₁₂(4γ₁₃γ₁₄ + |Ω_L|²).
#[inline]
pub fn g_denominator(rates: &ComplexRates, omega_c: Complex64, omega_l: Complex64) -> Complex64 {
    rates.g14 * omega_c.norm_sqr() + rates.g12 * (4.0 * rates.g13 * rates.g14 + omega_l.norm_sqr())
}

/// Term magnitude used to judge whether G vanished.
fn g_scale(rates: &ComplexRates, omega_c: Complex64, omega_l: Complex64) -> f64 {
    rates.g14.norm() * omega_c.norm_sqr()
        + rates.g12.norm() * (4.0 * rates.g13.norm() * rates.g14.norm() + omega_l.norm_sqr())
}

fn checked_g(rates: &ComplexRates, omega_c: Complex64, omega_l: Complex64) -> Result<Complex64> {
    let g = g_denominator(rates, omega_c, omega_l);
    let magnitude = g.norm();
    if magnitude.is_finite() && magnitude > DEGENERATE_TOLERANCE * g_scale(rates, omega_c, omega_l) {
        Ok(g)
    } else {
        Err(Error::DegenerateDenominator { magnitude })
    }
}

/// ρ₁₂⁰/Ω_p = (i/2)(4γ₁₃γ₁₄ + |Ω_L|²)/G, the linear probe response.
pub fn probe_response(rates: &ComplexRates, omega_c: Complex64, omega_l: Complex64) -> Result<Complex64> {
    let g0 = checked_g(rates, omega_c, omega_l)?;
    Ok(0.5 * I * (4.0 * rates.g13 * rates.g14 + omega_l.norm_sqr()) / g0)
}

pub fn harmonics_first_order(atom: &AtomSystem, drive: &DriveConfig) -> Result<Harmonics1> {
    harmonics_at(atom, drive, drive.delta_p, drive.delta_c)
}

/// First-order harmonics with the probe and coupling detunings overridden
/// (the Doppler integrand).
pub fn harmonics_at(atom: &AtomSystem, drive: &DriveConfig, delta_p: f64, delta_c: f64) -> Result<Harmonics1> {
    let rates = complex_rates_at(atom, delta_p, delta_c, drive.delta_l);
    let (oc, ol, os) = (drive.omega_c, drive.omega_l, drive.omega_s);
    let g0 = checked_g(&rates, oc, ol)?;
    let rho0 = 0.5 * I * drive.omega_p * (4.0 * rates.g13 * rates.g14 + ol.norm_sqr()) / g0;

    let mixing = drive.omega_p * oc.norm_sqr() / g0;
    let num_plus = rates.g14 * mixing * ol * os.conj();
    let num_minus = (rates.g14 - I * drive.delta_s) * mixing * ol.conj() * os;

    let shift = Complex64::new(0.0, drive.delta_s);
    let rho_plus = if num_plus == Complex64::new(0.0, 0.0) {
        num_plus
    } else {
        0.5 * I * num_plus / checked_g(&rates.shifted(shift), oc, ol)?
    };
    let rho_minus = if num_minus == Complex64::new(0.0, 0.0) {
        num_minus
    } else {
        0.5 * I * num_minus / checked_g(&rates.shifted(-shift), oc, ol)?
    };
    Ok(Harmonics1 { rho0, rho_plus, rho_minus })
}
