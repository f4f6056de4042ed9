//! Randomized cross-check of the three solvers: closed-form first order,
//! truncated harmonic balance and time-domain integration.
//!
//! Two bands are sampled over the same seeded drive points. In the
//! perturbative band (Ω_S/Ω_L ≤ 3e-6) the closed form is compared with the
//! order-1 truncation and all three solvers are compared pairwise. In the
//! weak-signal band (Ω_S/Ω_L up to 0.1) the closed form drops the
//! O(|Ω_S/Ω_L|²) back-action, so only the two all-order solvers are held to
//! the tolerance and the closed-form gap is reported.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::floquet::{solve_time_domain_with, solve_truncated, HarmonicSolution, TimeDomainOptions};
use crate::model::{harmonics_first_order, AtomSystem, DriveConfig, Harmonics1};
use crate::units::mhz;

pub const DEFAULT_POINTS: usize = 100;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;
/// Closed form against the order-1 truncation.
pub const CLOSED_FORM_TOLERANCE: f64 = 1e-9;
pub const PERTURBATIVE_RATIO: (f64, f64) = (1e-7, 3e-6);
pub const WEAK_RATIO: (f64, f64) = (1e-3, 0.1);
pub const TRIANGLE_ORDER: usize = 3;
pub const WEAK_ORDER: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub points: usize,
    pub seed: u64,
    pub tolerance: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self { points: DEFAULT_POINTS, seed: 0, tolerance: DEFAULT_TOLERANCE }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub points: usize,
    pub seed: u64,
    pub tolerance: f64,
    pub closed_vs_order1: f64,
    pub closed_vs_truncated: f64,
    pub closed_vs_time_domain: f64,
    pub truncated_vs_time_domain: f64,
    pub weak_truncated_vs_time_domain: f64,
    /// Informational: closed form against truncation in the weak band.
    pub weak_closed_vs_truncated: f64,
}

impl OracleReport {
    /// Largest deviation that is held to `tolerance`.
    pub fn max_deviation(&self) -> f64 {
        self.closed_vs_truncated
            .max(self.closed_vs_time_domain)
            .max(self.truncated_vs_time_domain)
            .max(self.weak_truncated_vs_time_domain)
    }

    pub fn passed(&self) -> bool {
        self.max_deviation() <= self.tolerance && self.closed_vs_order1 <= CLOSED_FORM_TOLERANCE.max(self.tolerance)
    }
}

/// One randomized drive point; `ratio` bounds Ω_S/Ω_L.
pub fn sample_point(rng: &mut ChaCha8Rng, ratio: (f64, f64)) -> (AtomSystem, DriveConfig) {
    let log_uniform = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| (rng.random_range(lo.ln()..hi.ln())).exp();
    let gamma = log_uniform(rng, 0.2, 4.0);
    let omega_p = rng.random_range(0.1..6.0);
    let omega_c = log_uniform(rng, 2.0, 40.0);
    let omega_l = log_uniform(rng, 0.5, 20.0);
    let delta_s = log_uniform(rng, 0.05, 20.0);
    let dp = rng.random_range(-5.0..5.0);
    let dc = rng.random_range(-5.0..5.0);
    let dl = rng.random_range(-2.0..2.0);
    let ratio = log_uniform(rng, ratio.0, ratio.1);
    let phase_l = rng.random_range(0.0..std::f64::consts::TAU);
    let phase_s = rng.random_range(0.0..std::f64::consts::TAU);
    let atom = AtomSystem::default().with_dephasing(mhz(gamma));
    let mut drive = DriveConfig::resonant(mhz(omega_p), mhz(omega_c), 0.0, 0.0, mhz(delta_s))
        .with_detunings(mhz(dp), mhz(dc), mhz(dl));
    drive.omega_l = num_complex::Complex64::from_polar(mhz(omega_l), phase_l);
    drive.omega_s = num_complex::Complex64::from_polar(mhz(ratio * omega_l), phase_s);
    (atom, drive)
}

fn rel(a: num_complex::Complex64, b: num_complex::Complex64) -> f64 {
    let scale = a.norm().max(b.norm());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).norm() / scale
    }
}

fn deviation(a: &Harmonics1, b: &Harmonics1) -> f64 {
    rel(a.rho0, b.rho0).max(rel(a.rho_plus, b.rho_plus)).max(rel(a.rho_minus, b.rho_minus))
}

fn time_domain(atom: &AtomSystem, drive: &DriveConfig) -> Result<HarmonicSolution> {
    solve_time_domain_with(atom, drive, &TimeDomainOptions::recommended(atom, drive))
}

/// Runs the triangle over `config.points` seeded points in each band.
pub fn run_oracle(config: &OracleConfig) -> Result<OracleReport> {
    if config.points == 0 {
        return Err(Error::InvalidInput("oracle check needs at least one point".into()));
    }
    if !(config.tolerance > 0.0) {
        return Err(Error::InvalidInput("oracle tolerance must be positive".into()));
    }
    let mut report = OracleReport {
        points: config.points,
        seed: config.seed,
        tolerance: config.tolerance,
        closed_vs_order1: 0.0,
        closed_vs_truncated: 0.0,
        closed_vs_time_domain: 0.0,
        truncated_vs_time_domain: 0.0,
        weak_truncated_vs_time_domain: 0.0,
        weak_closed_vs_truncated: 0.0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    for _ in 0..config.points {
        let (atom, drive) = sample_point(&mut rng, PERTURBATIVE_RATIO);
        let closed = harmonics_first_order(&atom, &drive)?;
        let order1 = solve_truncated(&atom, &drive, 1)?.to_harmonics1();
        let truncated = solve_truncated(&atom, &drive, TRIANGLE_ORDER)?.to_harmonics1();
        let td = time_domain(&atom, &drive)?.to_harmonics1();
        report.closed_vs_order1 = report.closed_vs_order1.max(deviation(&closed, &order1));
        report.closed_vs_truncated = report.closed_vs_truncated.max(deviation(&closed, &truncated));
        report.closed_vs_time_domain = report.closed_vs_time_domain.max(deviation(&closed, &td));
        report.truncated_vs_time_domain = report.truncated_vs_time_domain.max(deviation(&truncated, &td));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    for _ in 0..config.points {
        let (atom, drive) = sample_point(&mut rng, WEAK_RATIO);
        let closed = harmonics_first_order(&atom, &drive)?;
        let truncated = solve_truncated(&atom, &drive, WEAK_ORDER)?.to_harmonics1();
        let td = time_domain(&atom, &drive)?.to_harmonics1();
        report.weak_truncated_vs_time_domain = report.weak_truncated_vs_time_domain.max(deviation(&truncated, &td));
        report.weak_closed_vs_truncated = report.weak_closed_vs_truncated.max(deviation(&closed, &truncated));
    }
    Ok(report)
}
