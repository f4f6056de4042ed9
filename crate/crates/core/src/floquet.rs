//! Harmonic balance for the periodically driven coherence system
//!
//! ```text
//! dX/dt = (A + Ω_S* B₁ e^{iδs t} + Ω_S B₋₁ e^{−iδs t}) X + C
//! ```
//!
//! The stationary periodic solution X(t) = Σₙ Xₙ e^{inδs t} obeys the
//! three-term recursion
//!
//! ```text
//! (A − inδs I) Xₙ + Ω_S* B₁ Xₙ₋₁ + Ω_S B₋₁ Xₙ₊₁ + C δₙ₀ = 0
//! ```
//!
//! [`solve_truncated`] closes it with Xₙ = 0 for |n| > N and solves the
//! block-tridiagonal system directly. [`solve_time_domain`] integrates the
//! ODE itself with classical RK4 and projects the final period onto the
//! harmonics; it shares nothing with the recursion and serves as the
//! independent check.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::linalg::{vec_norm, vec_sub, Mat3, Vec3};
use crate::model::{complex_rates_at, AtomSystem, DriveConfig, Harmonics1};

const I: Complex64 = Complex64::new(0.0, 1.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Default number of harmonics extracted from the time-domain solution.
pub const DEFAULT_EXTRACTION_ORDER: usize = 2;
/// Default RK4 steps per beat period.
pub const DEFAULT_STEPS_PER_CYCLE: usize = 400;
/// Minimum number of integrated beat periods.
pub const MIN_CYCLES: usize = 50;
/// Largest relative change between the last two extracted periods.
pub const PERIOD_TOLERANCE: f64 = 1e-6;
/// Harmonics smaller than this fraction of |X₀| are compared absolutely.
const HARMONIC_FLOOR: f64 = 1e-9;
/// RK4 is stable for h·|λ| ≲ 2.8; reject steps beyond this.
const RK4_STABILITY_LIMIT: f64 = 2.5;
/// h·‖A‖ targeted by [`TimeDomainOptions::recommended`].
const RECOMMENDED_STEP_NORM: f64 = 0.1;
/// Transient e-foldings integrated by [`TimeDomainOptions::recommended`].
const RECOMMENDED_DECAY_TIMES: f64 = 45.0;

/// Harmonic coherence vectors Xₙ = (ρ₁₂ⁿ, ρ₁₃ⁿ, ρ₁₄ⁿ) for n ∈ [−N, N].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarmonicSolution {
    order: usize,
    harmonics: Vec<Vec3>,
}

impl HarmonicSolution {
    fn new(order: usize, harmonics: Vec<Vec3>) -> Self {
        debug_assert_eq!(harmonics.len(), 2 * order + 1);
        Self { order, harmonics }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Xₙ, or `None` outside [−N, N].
    pub fn get(&self, n: i64) -> Option<&Vec3> {
        if n.unsigned_abs() as usize > self.order {
            return None;
        }
        self.harmonics.get((n + self.order as i64) as usize)
    }

    /// ρ₁₂ⁿ (zero outside the truncation).
    pub fn rho12(&self, n: i64) -> Complex64 {
        self.get(n).map_or(ZERO, |x| x[0])
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, &Vec3)> {
        let order = self.order as i64;
        self.harmonics.iter().enumerate().map(move |(k, x)| (k as i64 - order, x))
    }

    pub fn len(&self) -> usize {
        self.harmonics.len()
    }

    pub fn is_empty(&self) -> bool {
        self.harmonics.is_empty()
    }

    /// The ρ₁₂ components at n = 0, ±1.
    pub fn to_harmonics1(&self) -> Harmonics1 {
        Harmonics1 {
            rho0: self.rho12(0),
            rho_plus: self.rho12(1),
            rho_minus: self.rho12(-1),
        }
    }
}

/// Matrices of the coherence ODE for given probe/coupling detunings.
#[derive(Debug, Clone, Copy)]
pub(crate) struct CoherenceSystem {
    pub a: Mat3,
    /// Ω_S*·B₁: the only entry is (row 3, col 2) = iΩ_S*/2.
    pub lower: Complex64,
    /// Ω_S·B₋₁: the only entry is (row 2, col 3) = iΩ_S/2.
    pub upper: Complex64,
    pub source: Complex64,
    pub delta_s: f64,
}

impl CoherenceSystem {
    pub fn new(atom: &AtomSystem, drive: &DriveConfig, delta_p: f64, delta_c: f64) -> Self {
        let r = complex_rates_at(atom, delta_p, delta_c, drive.delta_l);
        let half_i = 0.5 * I;
        let a = Mat3([
            [-r.g12, half_i * drive.omega_c.conj(), ZERO],
            [half_i * drive.omega_c, -r.g13, half_i * drive.omega_l],
            [ZERO, half_i * drive.omega_l.conj(), -r.g14],
        ]);
        Self {
            a,
            lower: half_i * drive.omega_s.conj(),
            upper: half_i * drive.omega_s,
            source: half_i * drive.omega_p,
            delta_s: drive.delta_s,
        }
    }

    fn lower_block(&self) -> Mat3 {
        let mut m = Mat3::zero();
        m.0[2][1] = self.lower;
        m
    }

    fn upper_block(&self) -> Mat3 {
        let mut m = Mat3::zero();
        m.0[1][2] = self.upper;
        m
    }

    fn diagonal_block(&self, n: i64) -> Mat3 {
        self.a - Mat3::identity().scale(Complex64::new(0.0, n as f64 * self.delta_s))
    }

    /// Right-hand side of the ODE at phase e^{iδs t} = `phase`.
    #[inline]
    fn rhs(&self, x: &Vec3, phase: Complex64) -> Vec3 {
        let mut f = self.a.mul_vec(x);
        f[0] += self.source;
        f[1] += self.upper * phase.conj() * x[2];
        f[2] += self.lower * phase * x[1];
        f
    }

    /// Bound on the spectral radius of the full (time-dependent) generator.
    fn rate_bound(&self) -> f64 {
        self.a.norm_inf() + self.lower.norm().max(self.upper.norm())
    }
}

/// Truncated harmonic balance at order N: one block-tridiagonal solve of
/// dimension 3(2N+1).
pub fn solve_truncated(atom: &AtomSystem, drive: &DriveConfig, order: usize) -> Result<HarmonicSolution> {
    solve_truncated_at(atom, drive, order, drive.delta_p, drive.delta_c)
}

/// [`solve_truncated`] with explicit probe/coupling detunings.
pub fn solve_truncated_at(
    atom: &AtomSystem,
    drive: &DriveConfig,
    order: usize,
    delta_p: f64,
    delta_c: f64,
) -> Result<HarmonicSolution> {
    if order < 1 {
        return Err(Error::InvalidInput("truncation order must be >= 1".into()));
    }
    let sys = CoherenceSystem::new(atom, drive, delta_p, delta_c);
    let lower = sys.lower_block();
    let upper = sys.upper_block();
    let blocks = 2 * order + 1;
    let centre = order;

    // Forward block elimination: D'_k = D_k − L D'_{k−1}⁻¹ U, r'_k = r_k − L D'_{k−1}⁻¹ r'_{k−1}.
    let mut factors = Vec::with_capacity(blocks);
    let mut rhs: Vec<Vec3> = vec![[ZERO; 3]; blocks];
    rhs[centre][0] = -sys.source;
    for k in 0..blocks {
        let n = k as i64 - order as i64;
        let mut diag = sys.diagonal_block(n);
        if k > 0 {
            let prev: &crate::linalg::Lu3 = &factors[k - 1];
            diag = diag - lower * prev.solve_mat(&upper);
            let carried = lower.mul_vec(&prev.solve(&rhs[k - 1]));
            rhs[k] = vec_sub(&rhs[k], &carried);
        }
        factors.push(diag.lu().ok_or(Error::SingularSystem { block: k })?);
    }

    // Back substitution.
    let mut x: Vec<Vec3> = vec![[ZERO; 3]; blocks];
    x[blocks - 1] = factors[blocks - 1].solve(&rhs[blocks - 1]);
    for k in (0..blocks - 1).rev() {
        let coupled = upper.mul_vec(&x[k + 1]);
        x[k] = factors[k].solve(&vec_sub(&rhs[k], &coupled));
    }
    Ok(HarmonicSolution::new(order, x))
}

/// Integration settings for [`solve_time_domain_with`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeDomainOptions {
    pub cycles: usize,
    pub steps_per_cycle: usize,
    pub extraction_order: usize,
}

impl TimeDomainOptions {
    /// Enough periods for ~45 e-foldings of the slowest bare decay rate and
    /// enough steps per period to keep h·‖A‖ ≤ 0.1.
    pub fn recommended(atom: &AtomSystem, drive: &DriveConfig) -> Self {
        let sys = CoherenceSystem::new(atom, drive, drive.delta_p, drive.delta_c);
        let period = TAU / drive.delta_s.abs();
        let r = complex_rates_at(atom, drive.delta_p, drive.delta_c, drive.delta_l);
        let slowest = r.g12.re.min(r.g13.re).min(r.g14.re).max(f64::MIN_POSITIVE);
        let cycles = ((RECOMMENDED_DECAY_TIMES / slowest) / period).ceil() as usize + 2;
        let steps = (period * sys.rate_bound() / RECOMMENDED_STEP_NORM).ceil() as usize;
        Self {
            cycles: cycles.max(MIN_CYCLES),
            steps_per_cycle: steps.max(DEFAULT_STEPS_PER_CYCLE),
            extraction_order: DEFAULT_EXTRACTION_ORDER,
        }
    }
}

/// Time-domain oracle: RK4 from X(0) = 0 over `cycles` beat periods, then
/// harmonic projection of the last period (orders up to 2).
pub fn solve_time_domain(
    atom: &AtomSystem,
    drive: &DriveConfig,
    cycles: usize,
    steps_per_cycle: usize,
) -> Result<HarmonicSolution> {
    solve_time_domain_with(
        atom,
        drive,
        &TimeDomainOptions {
            cycles,
            steps_per_cycle,
            extraction_order: DEFAULT_EXTRACTION_ORDER,
        },
    )
}

pub fn solve_time_domain_with(
    atom: &AtomSystem,
    drive: &DriveConfig,
    opts: &TimeDomainOptions,
) -> Result<HarmonicSolution> {
    if !(drive.delta_s > 0.0) {
        return Err(Error::InvalidInput("time-domain solver needs delta_s > 0".into()));
    }
    if opts.cycles < 2 || opts.steps_per_cycle < 4 {
        return Err(Error::InvalidInput(
            "time-domain solver needs cycles >= 2 and steps_per_cycle >= 4".into(),
        ));
    }
    let sys = CoherenceSystem::new(atom, drive, drive.delta_p, drive.delta_c);
    let steps = opts.steps_per_cycle;
    let h = TAU / drive.delta_s / steps as f64;
    if h * sys.rate_bound() > RK4_STABILITY_LIMIT {
        return Err(Error::InvalidInput(format!(
            "step h·‖A‖ = {:.3} exceeds the RK4 stability limit; raise steps_per_cycle",
            h * sys.rate_bound()
        )));
    }

    // e^{iδs t} sampled at every full and half step of one period.
    let phases: Vec<Complex64> = (0..=2 * steps)
        .map(|j| Complex64::from_polar(1.0, TAU * j as f64 / (2 * steps) as f64))
        .collect();
    let order = opts.extraction_order;

    let mut x: Vec3 = [ZERO; 3];
    let mut previous: Option<Vec<Vec3>> = None;
    let mut current: Vec<Vec3> = Vec::new();
    for cycle in 0..opts.cycles {
        let record = cycle + 2 >= opts.cycles;
        let mut acc: Vec<Vec3> = vec![[ZERO; 3]; 2 * order + 1];
        for j in 0..steps {
            if record {
                accumulate(&mut acc, &x, j, steps, order, &phases);
            }
            x = rk4_step(&sys, &x, h, phases[2 * j], phases[2 * j + 1], phases[2 * j + 2]);
        }
        if record {
            let norm = 1.0 / steps as f64;
            acc.iter_mut().flatten().for_each(|c| *c *= norm);
            previous = Some(std::mem::replace(&mut current, acc));
        }
    }
    let previous = previous.unwrap_or_default();

    let scale = vec_norm(&current[order]);
    let relative_change = current
        .iter()
        .zip(&previous)
        .map(|(now, before)| {
            vec_norm(&vec_sub(now, before)) / vec_norm(now).max(HARMONIC_FLOOR * scale).max(f64::MIN_POSITIVE)
        })
        .fold(0.0, f64::max);
    if !(relative_change <= PERIOD_TOLERANCE) {
        return Err(Error::NotConverged { relative_change });
    }
    Ok(HarmonicSolution::new(order, current))
}

#[inline]
fn accumulate(acc: &mut [Vec3], x: &Vec3, j: usize, steps: usize, order: usize, phases: &[Complex64]) {
    for (k, slot) in acc.iter_mut().enumerate() {
        let n = k as i64 - order as i64;
        // e^{−inδs t_j} with t_j = jT/steps; phases holds e^{iπ m/steps}.
        let idx = ((-n).rem_euclid(steps as i64) as usize * 2 * j) % (2 * steps);
        let w = phases[idx];
        for c in 0..3 {
            slot[c] += x[c] * w;
        }
    }
}

#[inline]
fn rk4_step(sys: &CoherenceSystem, x: &Vec3, h: f64, p0: Complex64, p_half: Complex64, p1: Complex64) -> Vec3 {
    let axpy = |a: &Vec3, s: f64, b: &Vec3| [a[0] + b[0] * s, a[1] + b[1] * s, a[2] + b[2] * s];
    let k1 = sys.rhs(x, p0);
    let k2 = sys.rhs(&axpy(x, 0.5 * h, &k1), p_half);
    let k3 = sys.rhs(&axpy(x, 0.5 * h, &k2), p_half);
    let k4 = sys.rhs(&axpy(x, h, &k3), p1);
    let w = h / 6.0;
    [
        x[0] + w * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        x[1] + w * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        x[2] + w * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2]),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::harmonics_first_order;
    use crate::units::mhz;

    fn rel(a: Complex64, b: Complex64) -> f64 {
        (a - b).norm() / b.norm()
    }

    fn point() -> (AtomSystem, DriveConfig) {
        (
            AtomSystem::default().with_dephasing(mhz(2.76)),
            DriveConfig::resonant(mhz(5.53), mhz(17.12), mhz(5.0), mhz(0.05), mhz(3.0)),
        )
    }

    #[test]
    fn no_signal_leaves_only_the_static_harmonic() {
        let (atom, drive) = point();
        let drive = drive.with_signal(0.0);
        let sol = solve_truncated(&atom, &drive, 3).unwrap();
        assert_eq!(sol.len(), 7);
        for (n, x) in sol.iter() {
            if n != 0 {
                assert!(x.iter().all(|c| *c == ZERO), "X_{n} = {x:?}");
            }
        }
        // X₀ = A⁻¹(−C) solved independently.
        let sys = CoherenceSystem::new(&atom, &drive, 0.0, 0.0);
        let x0 = sys.a.lu().unwrap().solve(&[-sys.source, ZERO, ZERO]);
        for c in 0..3 {
            assert!((sol.get(0).unwrap()[c] - x0[c]).norm() <= 1e-14 * x0[0].norm());
        }
    }

    #[test]
    fn order_one_reduces_to_closed_form_at_tiny_signal() {
        let (atom, drive) = point();
        // 10 Hz signal: the |Ω_S|² back-reaction is ~1e-13 relative.
        let drive = drive.with_signal(mhz(1e-5));
        let closed = harmonics_first_order(&atom, &drive).unwrap();
        let sol = solve_truncated(&atom, &drive, 1).unwrap().to_harmonics1();
        assert!(rel(sol.rho0, closed.rho0) < 1e-9);
        assert!(rel(sol.rho_plus, closed.rho_plus) < 1e-9);
        assert!(rel(sol.rho_minus, closed.rho_minus) < 1e-9);
    }

    #[test]
    fn closed_form_gap_is_second_order_in_signal() {
        let (atom, drive) = point();
        let gap = |os: f64| {
            let d = drive.with_signal(os);
            let closed = harmonics_first_order(&atom, &d).unwrap();
            let sol = solve_truncated(&atom, &d, 1).unwrap().to_harmonics1();
            rel(sol.rho_plus, closed.rho_plus)
        };
        let small = gap(mhz(0.01));
        let double = gap(mhz(0.02));
        assert!(small < 1e-5, "gap {small}");
        assert!((double / small - 4.0).abs() < 0.01, "ratio {}", double / small);
    }

    #[test]
    fn truncation_converges() {
        let (atom, drive) = point();
        let drive = drive.with_signal(mhz(1.0));
        let lo = solve_truncated(&atom, &drive, 4).unwrap();
        let hi = solve_truncated(&atom, &drive, 8).unwrap();
        for n in [-1, 1] {
            assert!(rel(lo.rho12(n), hi.rho12(n)) < 1e-6);
        }
    }

    #[test]
    fn strong_signal_is_sublinear() {
        let atom = AtomSystem::default().with_dephasing(mhz(1.0));
        for (oc, ol) in [(10.0, 2.0), (17.12, 5.0), (30.0, 12.0)] {
            let drive = DriveConfig::resonant(mhz(5.0), mhz(oc), mhz(ol), 0.0, mhz(0.5));
            for ratio in [0.1, 0.3, 0.6, 1.0] {
                let d = drive.with_signal(mhz(ratio * ol));
                let linear = harmonics_first_order(&atom, &d).unwrap().rho_plus.norm();
                let full = solve_truncated(&atom, &d, 6).unwrap().rho12(1).norm();
                assert!(full <= linear, "Ωc {oc} ratio {ratio}: {full} > {linear}");
            }
        }
    }

    #[test]
    fn order_zero_is_rejected() {
        let (atom, drive) = point();
        assert!(matches!(solve_truncated(&atom, &drive, 0), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn decay_free_system_is_singular() {
        let atom = AtomSystem { gamma_r: 0.0, ..AtomSystem::default() };
        let drive = DriveConfig::resonant(mhz(1.0), mhz(10.0), 0.0, 0.0, mhz(1.0));
        assert!(matches!(
            solve_truncated(&atom, &drive, 2),
            Err(Error::SingularSystem { .. })
        ));
    }

    #[test]
    fn time_domain_without_signal_is_static() {
        let (atom, drive) = point();
        let drive = drive.with_signal(0.0);
        let opts = TimeDomainOptions::recommended(&atom, &drive);
        let sol = solve_time_domain_with(&atom, &drive, &opts).unwrap();
        let exact = solve_truncated(&atom, &drive, 1).unwrap();
        assert!(rel(sol.rho12(0), exact.rho12(0)) < 1e-8);
        for n in [-2i64, -1, 1, 2] {
            assert!(vec_norm(sol.get(n).unwrap()) < 1e-10);
        }
    }

    #[test]
    fn time_domain_matches_recursion() {
        let (atom, drive) = point();
        let opts = TimeDomainOptions::recommended(&atom, &drive);
        let td = solve_time_domain_with(&atom, &drive, &opts).unwrap();
        let tr = solve_truncated(&atom, &drive, 3).unwrap();
        for n in -1..=1 {
            assert!(rel(td.rho12(n), tr.rho12(n)) < 1e-4, "n={n}: {}", rel(td.rho12(n), tr.rho12(n)));
        }
        let closed = harmonics_first_order(&atom, &drive).unwrap();
        assert!(rel(closed.rho_plus, td.rho12(1)) < 1e-4);
        assert!(rel(closed.rho_minus, td.rho12(-1)) < 1e-4);
    }

    #[test]
    fn time_domain_strong_coupling_high_beat() {
        let atom = AtomSystem::default().with_dephasing(mhz(2.0));
        let drive = DriveConfig::resonant(mhz(5.0), mhz(60.0), mhz(40.0), mhz(0.5), mhz(50.0));
        let opts = TimeDomainOptions::recommended(&atom, &drive);
        let td = solve_time_domain_with(&atom, &drive, &opts).unwrap();
        let tr = solve_truncated(&atom, &drive, 4).unwrap();
        for n in -1..=1 {
            assert!(rel(td.rho12(n), tr.rho12(n)) < 1e-4);
        }
    }

    #[test]
    fn too_few_cycles_is_reported() {
        let (atom, drive) = point();
        let err = solve_time_domain(&atom, &drive, 2, 2000).unwrap_err();
        assert!(matches!(err, Error::NotConverged { .. }));
    }

    #[test]
    fn unstable_step_is_rejected() {
        let (atom, drive) = point();
        let drive = drive.with_beat(mhz(0.01));
        assert!(matches!(
            solve_time_domain(&atom, &drive, 50, 400),
            Err(Error::InvalidInput(_))
        ));
        assert!(solve_time_domain(&atom, &drive.with_beat(0.0), 50, 400).is_err());
    }
}
