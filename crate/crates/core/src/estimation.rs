//! Parameter estimation and experiment-design procedures.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use crate::doppler::{average_truncated, DopplerSpec};
use crate::error::{Error, Result};
use crate::model::{AtomSystem, DriveConfig};
use crate::observables::{beat_amplitude, mean_absorption, response_curve, DetectorModel, ResponseCurve};
use crate::units::{khz, log_grid, mhz};

/// Fitting iteration cap.
pub const MAX_ITERATIONS: usize = 200;
/// Minimum number of spectrum samples.
pub const MIN_FIT_POINTS: usize = 10;
/// Ratio of fitted to peak coupling Rabi frequency used for default guesses.
pub const COUPLING_GUESS_RATIO: f64 = 0.7;

const FD_STEP: f64 = 1e-5;
const STEP_TOL: f64 = 1e-8;
const COST_TOL: f64 = 1e-12;
const LAMBDA_START: f64 = 1e-3;
const LAMBDA_MAX: f64 = 1e16;

/// Default dephasing guess, 2π·2 MHz.
pub fn default_gamma_guess() -> f64 {
    mhz(2.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitGuess {
    pub gamma: f64,
    pub omega_c: f64,
    /// Transmission scale β; derived by linear least squares when absent.
    pub scale: Option<f64>,
}

impl FitGuess {
    /// Default guess from the calculated peak coupling Rabi frequency.
    pub fn from_peak_rabi(peak_omega_c: f64) -> Self {
        Self {
            gamma: default_gamma_guess(),
            omega_c: COUPLING_GUESS_RATIO * peak_omega_c,
            scale: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub gamma: f64,
    pub omega_c: f64,
    pub scale: f64,
    /// sqrt(Σ residual²).
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Standard errors of (γ, Ωc, scale).
    pub std_errors: [f64; 3],
}

/// Model ln T(Δc) for dephasing γ, coupling Ωc and scale β, local MW off.
pub fn eit_model(
    atom: &AtomSystem,
    spec: &DopplerSpec,
    gamma: f64,
    omega_c: f64,
    scale: f64,
    delta_c: &[f64],
) -> Result<Vec<f64>> {
    let atom = atom.with_dephasing(gamma);
    let oc = Complex64::new(omega_c, 0.0);
    delta_c
        .iter()
        .map(|&dc| Ok(-scale * mean_absorption(&atom, oc, spec, 0.0, dc)?))
        .collect()
}

/// Damped least-squares fit of (γ, Ωc, β) to (Δc, ln T) samples.
///
/// Parameters are fitted as logarithms. Jacobian columns for γ and Ωc use
/// central differences; the β column is exact since the model is linear
/// in β. Damping follows Marquardt's diagonal scaling.
pub fn fit_eit(data: &[(f64, f64)], atom: &AtomSystem, spec: &DopplerSpec, guess: &FitGuess) -> Result<FitResult> {
    if data.len() < MIN_FIT_POINTS {
        return Err(Error::InsufficientData(format!(
            "EIT fit needs >= {MIN_FIT_POINTS} points, got {}",
            data.len()
        )));
    }
    if data.iter().any(|(x, y)| !(x.is_finite() && y.is_finite())) {
        return Err(Error::InvalidInput("EIT data must be finite".into()));
    }
    if !(guess.gamma > 0.0 && guess.omega_c > 0.0 && guess.scale.map_or(true, |s| s > 0.0)) {
        return Err(Error::BadGuess);
    }
    let x: Vec<f64> = data.iter().map(|d| d.0).collect();
    let y = DVector::from_iterator(data.len(), data.iter().map(|d| d.1));
    let y_norm2 = y.norm_squared();

    // Shape of the model at unit scale.
    let shape = |p: &Vector3<f64>| -> Result<DVector<f64>> {
        let m = eit_model(atom, spec, p[0].exp(), p[1].exp(), 1.0, &x)?;
        Ok(DVector::from_vec(m))
    };

    let scale0 = match guess.scale {
        Some(s) => s,
        None => {
            let m = shape(&Vector3::new(guess.gamma.ln(), guess.omega_c.ln(), 0.0))?;
            let s = m.dot(&y) / m.norm_squared();
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::BadGuess);
            }
            s
        }
    };
    let mut p = Vector3::new(guess.gamma.ln(), guess.omega_c.ln(), scale0.ln());
    let mut m = shape(&p)?;
    let mut r = &m * p[2].exp() - &y;
    let mut cost = 0.5 * r.norm_squared();
    if !cost.is_finite() {
        return Err(Error::BadGuess);
    }

    let mut lambda = LAMBDA_START;
    let mut converged = false;
    let mut iterations = 0;
    let mut jac = DMatrix::zeros(data.len(), 3);
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        jacobian(&shape, &p, &m, &mut jac)?;
        let jtj: Matrix3<f64> = (jac.transpose() * &jac).fixed_view::<3, 3>(0, 0).into_owned();
        let grad: Vector3<f64> = (jac.transpose() * &r).fixed_view::<3, 1>(0, 0).into_owned();

        let mut accepted = false;
        while lambda < LAMBDA_MAX {
            let mut damped = jtj;
            for k in 0..3 {
                damped[(k, k)] += lambda * jtj[(k, k)].max(f64::MIN_POSITIVE);
            }
            let Some(step) = damped.cholesky().map(|c| c.solve(&(-grad))) else {
                lambda *= 10.0;
                continue;
            };
            let trial = p + step;
            let trial_m = match shape(&trial) {
                Ok(v) if v.iter().all(|x| x.is_finite()) => v,
                _ => {
                    lambda *= 10.0;
                    continue;
                }
            };
            let trial_r = &trial_m * trial[2].exp() - &y;
            let trial_cost = 0.5 * trial_r.norm_squared();
            if trial_cost.is_finite() && trial_cost <= cost {
                let drop = cost - trial_cost;
                let rel_step = step.norm() / (p.norm() + f64::EPSILON);
                p = trial;
                m = trial_m;
                r = trial_r;
                cost = trial_cost;
                lambda = (lambda / 10.0).max(1e-12);
                accepted = true;
                if rel_step < STEP_TOL || drop <= COST_TOL * y_norm2 {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        // No downhill step at any damping: stationary to working precision.
        if !accepted {
            converged = true;
        }
        if converged {
            break;
        }
    }
    if !converged {
        return Err(Error::FitNotConverged {
            iterations,
            residual_norm: (2.0 * cost).sqrt(),
        });
    }

    jacobian(&shape, &p, &m, &mut jac)?;
    let dof = data.len().saturating_sub(3).max(1) as f64;
    let s2 = 2.0 * cost / dof;
    let values = [p[0].exp(), p[1].exp(), p[2].exp()];
    let cov = (jac.transpose() * &jac).try_inverse();
    let std_errors = match cov {
        Some(c) => std::array::from_fn(|k| values[k] * (s2 * c[(k, k)]).max(0.0).sqrt()),
        None => [f64::NAN; 3],
    };
    Ok(FitResult {
        gamma: values[0],
        omega_c: values[1],
        scale: values[2],
        residual_norm: (2.0 * cost).sqrt(),
        iterations,
        converged,
        std_errors,
    })
}

fn jacobian<F>(shape: &F, p: &Vector3<f64>, m: &DVector<f64>, jac: &mut DMatrix<f64>) -> Result<()>
where
    F: Fn(&Vector3<f64>) -> Result<DVector<f64>>,
{
    let scale = p[2].exp();
    for k in 0..2 {
        let mut up = *p;
        let mut down = *p;
        up[k] += FD_STEP;
        down[k] -= FD_STEP;
        let d = (shape(&up)? - shape(&down)?) * (scale / (2.0 * FD_STEP));
        jac.set_column(k, &d);
    }
    jac.set_column(2, &(m * scale));
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalOptimum {
    pub omega_l: f64,
    pub peak_amplitude: f64,
}

/// Points in the coarse scan of [`optimize_local_mw`].
pub const LOCAL_SCAN_POINTS: usize = 25;
/// Golden-section stop: bracket width in ln Ω_L.
pub const LOCAL_BRACKET_TOL: f64 = 1e-4;

/// Maximize an amplitude over ln Ω_L: coarse log scan, then golden section.
pub fn maximize_log<F>(bracket: (f64, f64), f: F) -> Result<(f64, f64)>
where
    F: Fn(f64) -> Result<f64> + Sync,
{
    let (lo, hi) = bracket;
    if !(lo > 0.0 && hi > lo && hi.is_finite()) {
        return Err(Error::InvalidInput(format!("bad bracket ({lo}, {hi})")));
    }
    if hi / lo < 100.0 {
        return Err(Error::InvalidInput("bracket must span at least two decades".into()));
    }
    let grid = log_grid(lo, hi, LOCAL_SCAN_POINTS);
    let values = grid.par_iter().map(|&x| f(x)).collect::<Result<Vec<_>>>()?;
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    if best == 0 {
        return Err(Error::NoInteriorMax("lower"));
    }
    if best == grid.len() - 1 {
        return Err(Error::NoInteriorMax("upper"));
    }

    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let g = |u: f64| f(u.exp());
    let (mut a, mut b) = (grid[best - 1].ln(), grid[best + 1].ln());
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (g(c)?, g(d)?);
    while b - a > LOCAL_BRACKET_TOL {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = g(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = g(d)?;
        }
    }
    let (u, v) = if fc >= fd { (c, fc) } else { (d, fd) };
    if v >= values[best] {
        Ok((u.exp(), v))
    } else {
        Ok((grid[best], values[best]))
    }
}

/// Local-MW Rabi frequency maximizing the beat amplitude at `delta_s`.
pub fn optimize_local_mw(
    atom: &AtomSystem,
    drive: &DriveConfig,
    spec: &DopplerSpec,
    delta_s: f64,
    bracket: (f64, f64),
) -> Result<LocalOptimum> {
    let template = drive.with_beat(delta_s);
    let (omega_l, peak_amplitude) = maximize_log(bracket, |ol| beat_amplitude(atom, &template.with_local(ol), spec))?;
    Ok(LocalOptimum { omega_l, peak_amplitude })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    /// Ω_L search bracket, rad/s.
    pub bracket: (f64, f64),
    /// δs at which Ω_L is optimized, rad/s.
    pub optimize_at: f64,
    pub grid: Vec<f64>,
    pub detector: Option<DetectorModel>,
    pub normalize_at: Option<f64>,
}

impl SweepOptions {
    pub fn new(grid: Vec<f64>) -> Self {
        Self {
            bracket: (khz(10.0), mhz(1000.0)),
            optimize_at: khz(100.0),
            grid,
            detector: None,
            normalize_at: Some(khz(100.0)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub gamma: f64,
    pub omega_c: f64,
    pub local: LocalOptimum,
    pub curve: ResponseCurve,
}

/// For each (γ, Ωc): optimize Ω_L, then compute the response curve.
/// Points run in parallel; the output keeps the input order.
pub fn sweep_response(
    atom: &AtomSystem,
    drive: &DriveConfig,
    spec: &DopplerSpec,
    sweep: &[(f64, f64)],
    options: &SweepOptions,
) -> Result<Vec<SweepPoint>> {
    sweep
        .par_iter()
        .map(|&(gamma, omega_c)| {
            let atom = atom.with_dephasing(gamma);
            let drive = drive.with_coupling(omega_c);
            let local = optimize_local_mw(&atom, &drive, spec, options.optimize_at, options.bracket)?;
            let curve = response_curve(
                &atom,
                &drive.with_local(local.omega_l),
                spec,
                &options.grid,
                options.detector,
                options.normalize_at,
            )?;
            Ok(SweepPoint { gamma, omega_c, local, curve })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityInput {
    /// Readout units per (V/m) at the normalization frequency.
    pub response_slope: f64,
    /// Readout units per √Hz.
    pub noise_density: f64,
    /// rad/s.
    pub delta_s: f64,
    pub response_curve: ResponseCurve,
}

/// Field giving SNR = 1 in a 1 Hz bandwidth at δs, V/m/√Hz:
/// noise / (slope × normalized response(δs)).
pub fn estimate_sensitivity(input: &SensitivityInput) -> Result<f64> {
    if input.response_curve.normalized_at.is_none() {
        return Err(Error::NotNormalized);
    }
    if !(input.noise_density >= 0.0 && input.noise_density.is_finite()) {
        return Err(Error::InvalidInput("noise density must be >= 0".into()));
    }
    if input.response_slope == 0.0 {
        return Err(Error::ZeroSlope);
    }
    if !(input.response_slope > 0.0 && input.response_slope.is_finite()) {
        return Err(Error::InvalidInput("response slope must be positive".into()));
    }
    let response = input.response_curve.interpolate(input.delta_s)?;
    if !(response > 0.0) {
        return Err(Error::ZeroSlope);
    }
    Ok(input.noise_density / (input.response_slope * response))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LinearitySolver {
    FirstOrder,
    Truncated(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearityResult {
    /// Least-squares slope of log readout against log power.
    pub slope: f64,
    /// (power in mW, readout = beat amplitude²).
    pub points: Vec<(f64, f64)>,
}

impl LinearityResult {
    /// Log-log slope between the two highest powers.
    pub fn top_slope(&self) -> f64 {
        let n = self.points.len();
        let (a, b) = (self.points[n - 2], self.points[n - 1]);
        (b.1.ln() - a.1.ln()) / (b.0.ln() - a.0.ln())
    }
}

/// Readout power against signal power (mW), with Ω_S = 2π·α·√P and α in
/// Hz/√mW.
pub fn linearity_check(
    atom: &AtomSystem,
    drive: &DriveConfig,
    spec: &DopplerSpec,
    powers_mw: &[f64],
    alpha: f64,
    solver: LinearitySolver,
) -> Result<LinearityResult> {
    if powers_mw.len() < 5 {
        return Err(Error::InsufficientData(format!("need >= 5 powers, got {}", powers_mw.len())));
    }
    if powers_mw.iter().any(|p| !(*p > 0.0 && p.is_finite())) || !(alpha > 0.0) {
        return Err(Error::InvalidInput("powers and alpha must be positive".into()));
    }
    let mut powers = powers_mw.to_vec();
    powers.sort_by(f64::total_cmp);
    if powers[powers.len() - 1] / powers[0] < 100.0 {
        return Err(Error::InsufficientData("powers must span at least 20 dB".into()));
    }
    let points = powers
        .par_iter()
        .map(|&p| {
            let d = drive.with_signal(TAU * alpha * p.sqrt());
            let s = match solver {
                LinearitySolver::FirstOrder => beat_amplitude(atom, &d, spec)?,
                LinearitySolver::Truncated(order) => average_truncated(atom, &d, spec, order)?.beat_amplitude(),
            };
            Ok((p, s * s))
        })
        .collect::<Result<Vec<_>>>()?;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    if ys.iter().any(|y| !y.is_finite()) {
        return Err(Error::InvalidInput("readout vanished at some power".into()));
    }
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    Ok(LinearityResult { slope: sxy / sxx, points })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::to_mhz;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn eit_data(atom: &AtomSystem, spec: &DopplerSpec, gamma: f64, oc: f64, scale: f64) -> Vec<(f64, f64)> {
        let grid: Vec<f64> = (-30..=30).map(|k| mhz(k as f64)).collect();
        let y = eit_model(atom, spec, gamma, oc, scale, &grid).unwrap();
        grid.into_iter().zip(y).collect()
    }

    #[test]
    fn noiseless_fit_recovers_parameters() {
        let atom = AtomSystem::default();
        let spec = DopplerSpec::for_atom(&atom).unwrap();
        let beta = 2.5e9;
        let data = eit_data(&atom, &spec, mhz(2.76), mhz(17.12), beta);
        let guess = FitGuess { gamma: mhz(2.0), omega_c: mhz(14.0), scale: None };
        let fit = fit_eit(&data, &atom, &spec, &guess).unwrap();
        assert!(fit.converged);
        assert!((fit.gamma / mhz(2.76) - 1.0).abs() < 1e-3, "{}", to_mhz(fit.gamma));
        assert!((fit.omega_c / mhz(17.12) - 1.0).abs() < 1e-3, "{}", to_mhz(fit.omega_c));
        assert!((fit.scale / beta - 1.0).abs() < 1e-3);
    }

    #[test]
    fn noisy_fit_within_five_percent() {
        let atom = AtomSystem::default();
        let spec = DopplerSpec::for_atom(&atom).unwrap();
        let mut data = eit_data(&atom, &spec, mhz(2.76), mhz(17.12), 2.5e9);
        let depth = data.iter().map(|d| d.1.abs()).fold(0.0, f64::max);
        let noise = Normal::new(0.0, 0.01 * depth).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for d in &mut data {
            d.1 += noise.sample(&mut rng);
        }
        let fit = fit_eit(&data, &atom, &spec, &FitGuess::from_peak_rabi(mhz(23.95))).unwrap();
        assert!((fit.gamma / mhz(2.76) - 1.0).abs() < 0.05);
        assert!((fit.omega_c / mhz(17.12) - 1.0).abs() < 0.05);
        assert!(fit.std_errors.iter().all(|e| e.is_finite() && *e > 0.0));
    }

    #[test]
    fn fit_input_errors() {
        let atom = AtomSystem::default();
        let spec = DopplerSpec::stationary();
        let few = vec![(0.0, -1.0); 5];
        assert!(matches!(
            fit_eit(&few, &atom, &spec, &FitGuess::from_peak_rabi(mhz(10.0))),
            Err(Error::InsufficientData(_))
        ));
        let data = eit_data(&atom, &spec, mhz(1.0), mhz(5.0), 1e8);
        let bad = FitGuess { gamma: -1.0, omega_c: mhz(5.0), scale: None };
        assert_eq!(fit_eit(&data, &atom, &spec, &bad).unwrap_err(), Error::BadGuess);
        let nan = FitGuess { gamma: mhz(1.0), omega_c: mhz(5.0), scale: Some(f64::INFINITY) };
        assert_eq!(fit_eit(&data, &atom, &spec, &nan).unwrap_err(), Error::BadGuess);
    }

    fn drive_at(oc: f64) -> DriveConfig {
        DriveConfig::resonant(mhz(5.53), oc, 0.0, mhz(1e-3), khz(100.0))
    }

    #[test]
    fn local_optimum_matches_dense_scan() {
        let atom = AtomSystem::default().with_dephasing(mhz(2.76));
        let spec = DopplerSpec::for_atom(&atom).unwrap();
        let drive = drive_at(mhz(17.12));
        let bracket = (khz(10.0), mhz(1000.0));
        let opt = optimize_local_mw(&atom, &drive, &spec, khz(100.0), bracket).unwrap();
        let grid = log_grid(bracket.0, bracket.1, 1000);
        let (arg, _) = grid
            .iter()
            .map(|&ol| (ol, beat_amplitude(&atom, &drive.with_local(ol), &spec).unwrap()))
            .fold((0.0, f64::MIN), |a, b| if b.1 > a.1 { b } else { a });
        assert!((opt.omega_l / arg - 1.0).abs() < 0.01, "{} vs {}", to_mhz(opt.omega_l), to_mhz(arg));
        // Narrower bracket around the same optimum gives the same answer.
        let narrow = optimize_local_mw(&atom, &drive, &spec, khz(100.0), (opt.omega_l / 30.0, opt.omega_l * 20.0)).unwrap();
        assert!((narrow.omega_l / opt.omega_l - 1.0).abs() < 1e-3);
    }

    #[test]
    fn stronger_coupling_has_higher_peak() {
        let spec_for = |a: &AtomSystem| DopplerSpec::for_atom(a).unwrap();
        let bracket = (khz(10.0), mhz(1000.0));
        let a = AtomSystem::default().with_dephasing(mhz(2.76));
        let e = AtomSystem::default().with_dephasing(mhz(1.31));
        let pa = optimize_local_mw(&a, &drive_at(mhz(17.12)), &spec_for(&a), khz(100.0), bracket).unwrap();
        let pe = optimize_local_mw(&e, &drive_at(mhz(4.15)), &spec_for(&e), khz(100.0), bracket).unwrap();
        assert!(pa.peak_amplitude > pe.peak_amplitude);
    }

    #[test]
    fn edge_maxima_are_reported() {
        assert_eq!(maximize_log((1.0, 1e3), |x| Ok(x)).unwrap_err(), Error::NoInteriorMax("upper"));
        assert_eq!(maximize_log((1.0, 1e3), |x| Ok(-x)).unwrap_err(), Error::NoInteriorMax("lower"));
        assert!(maximize_log((1.0, 10.0), |x| Ok(x)).is_err());
        let (x, _) = maximize_log((1.0, 1e4), |x: f64| Ok(-(x.ln() - 3.0).powi(2))).unwrap();
        assert!((x.ln() - 3.0).abs() < 1e-4);
    }

    #[test]
    fn single_point_sweep_is_direct_curve() {
        let atom = AtomSystem::default();
        let spec = DopplerSpec::for_atom(&atom).unwrap();
        let drive = drive_at(mhz(10.0));
        let options = SweepOptions::new(log_grid(khz(100.0), mhz(10.0), 9));
        let out = sweep_response(&atom, &drive, &spec, &[(mhz(1.5), mhz(10.0))], &options).unwrap();
        let a = atom.with_dephasing(mhz(1.5));
        let opt = optimize_local_mw(&a, &drive, &spec, khz(100.0), options.bracket).unwrap();
        let direct = response_curve(&a, &drive.with_local(opt.omega_l), &spec, &options.grid, None, Some(khz(100.0))).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].curve, direct);
    }

    fn flat_curve(level: f64) -> ResponseCurve {
        ResponseCurve {
            points: log_grid(khz(100.0), mhz(10.0), 5).into_iter().map(|d| (d, level)).collect(),
            normalized_at: Some(khz(100.0)),
            detector: None,
        }
    }

    #[test]
    fn sensitivity_basics() {
        let input = SensitivityInput {
            response_slope: 1.0,
            noise_density: 1.0,
            delta_s: mhz(2.0),
            response_curve: flat_curve(1.0),
        };
        assert_eq!(estimate_sensitivity(&input).unwrap(), 1.0);
        let half = SensitivityInput { response_curve: flat_curve(0.5), ..input.clone() };
        assert_eq!(estimate_sensitivity(&half).unwrap(), 2.0);
        let zero = SensitivityInput { response_slope: 0.0, ..input.clone() };
        assert_eq!(estimate_sensitivity(&zero).unwrap_err(), Error::ZeroSlope);
        let raw = SensitivityInput {
            response_curve: ResponseCurve { normalized_at: None, ..flat_curve(1.0) },
            ..input.clone()
        };
        assert_eq!(estimate_sensitivity(&raw).unwrap_err(), Error::NotNormalized);
        let outside = SensitivityInput { delta_s: mhz(50.0), ..input };
        assert!(matches!(estimate_sensitivity(&outside), Err(Error::OutOfRange(_))));
    }

    #[test]
    fn first_order_readout_is_linear() {
        let atom = AtomSystem::default().with_dephasing(mhz(2.76));
        let spec = DopplerSpec::for_atom(&atom).unwrap();
        let drive = drive_at(mhz(17.12)).with_local(mhz(5.0));
        let powers = log_grid(1e-9, 1e-6, 7);
        let lin = linearity_check(&atom, &drive, &spec, &powers, 13.22e6, LinearitySolver::FirstOrder).unwrap();
        assert!((lin.slope - 1.0).abs() < 1e-3, "{}", lin.slope);
        assert!(matches!(
            linearity_check(&atom, &drive, &spec, &powers[..1], 13.22e6, LinearitySolver::FirstOrder),
            Err(Error::InsufficientData(_))
        ));
        assert!(linearity_check(&atom, &drive, &spec, &log_grid(1e-9, 5e-9, 6), 13.22e6, LinearitySolver::FirstOrder).is_err());
    }

    #[test]
    fn truncated_readout_saturates() {
        let atom = AtomSystem::default().with_dephasing(mhz(2.76));
        let spec = DopplerSpec::for_atom(&atom).unwrap();
        let drive = drive_at(mhz(17.12)).with_local(mhz(5.0));
        // Ω_S from 0.05 to 1.6 Ω_L.
        let alpha = 13.22e6;
        let p_of = |ratio: f64| (ratio * 5.0e6 / alpha).powi(2);
        let powers = log_grid(p_of(0.05), p_of(1.6), 6);
        let lin = linearity_check(&atom, &drive, &spec, &powers, alpha, LinearitySolver::Truncated(4)).unwrap();
        assert!(lin.top_slope() < 1.0, "{}", lin.top_slope());
    }
}
