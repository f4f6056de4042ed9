//! Subcommand implementations. Each returns an [`Outcome`]; nothing is
//! written here.

use serde_json::{json, Value};
use std::path::Path;

use superhet::calibration::{beta_from_od, beta_in_mhz, field_from_rabi, fit_at_splitting, v_per_m_to_mv_per_cm};
use superhet::doppler::DopplerSpec;
use superhet::estimation::{
    estimate_sensitivity, fit_eit, optimize_local_mw, sweep_response, FitGuess, LocalOptimum, SensitivityInput,
    SweepOptions,
};
use superhet::observables::{
    bandwidth_minus3db, eit_spectrum, gain_peak, response_curve, response_peak, sideband_contributions, DetectorModel,
    ResponseCurve,
};
use superhet::oracle::{run_oracle, OracleConfig};
use superhet::units::{amplitude_db, mhz, to_hz, to_mhz};
use superhet::{AtomSystem, DriveConfig};

use crate::config::{GridDefault, RunConfig, EIT_GRID, RESPONSE_GRID};
use crate::error::CliError;
use crate::output::{Outcome, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::Subcommand)]
pub enum Command {
    /// Normalized beat response versus δs
    Response,
    /// −3 dB instantaneous bandwidth
    Bandwidth,
    /// |⟨ρ₁₂¹⟩| and |⟨ρ₁₂⁻¹⟩| versus δs
    Sidebands,
    /// EIT log-transmission versus coupling detuning
    Eit,
    /// Fit (γ, Ωc, β) to an EIT spectrum CSV
    FitEit,
    /// Local-MW Rabi frequency maximizing the beat amplitude
    OptimizeLocal,
    /// Response curves over a list of (γ, Ωc) pairs
    Sweep,
    /// Fit AT splitting against √P
    CalibrateAt,
    /// Rabi frequencies and fields from the drive section
    Rabi,
    /// Frequency-corrected field sensitivity
    Sensitivity,
    /// Randomized three-solver agreement check
    OracleCheck,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Response => "response",
            Command::Bandwidth => "bandwidth",
            Command::Sidebands => "sidebands",
            Command::Eit => "eit",
            Command::FitEit => "fit-eit",
            Command::OptimizeLocal => "optimize-local",
            Command::Sweep => "sweep",
            Command::CalibrateAt => "calibrate-at",
            Command::Rabi => "rabi",
            Command::Sensitivity => "sensitivity",
            Command::OracleCheck => "oracle-check",
        }
    }

    pub fn grid_default(self) -> GridDefault {
        match self {
            Command::Eit => EIT_GRID,
            _ => RESPONSE_GRID,
        }
    }

    pub fn execute(self, cfg: &RunConfig) -> Result<Outcome, CliError> {
        match self {
            Command::Response => response(cfg),
            Command::Bandwidth => bandwidth(cfg),
            Command::Sidebands => sidebands(cfg),
            Command::Eit => eit(cfg),
            Command::FitEit => fit(cfg),
            Command::OptimizeLocal => optimize_local(cfg),
            Command::Sweep => sweep(cfg),
            Command::CalibrateAt => calibrate_at(cfg),
            Command::Rabi => rabi(cfg),
            Command::Sensitivity => sensitivity(cfg),
            Command::OracleCheck => oracle_check(cfg),
        }
    }
}

struct Setup {
    atom: AtomSystem,
    drive: DriveConfig,
    spec: DopplerSpec,
}

fn setup(cfg: &RunConfig) -> Result<Setup, CliError> {
    Ok(Setup { atom: cfg.atom_system()?, drive: cfg.drive_config()?, spec: cfg.doppler_spec()? })
}

fn bracket(cfg: &RunConfig) -> (f64, f64) {
    (mhz(cfg.task.bracket[0]), mhz(cfg.task.bracket[1]))
}

/// Uses the configured local MW, or optimizes it at `task.optimize_at`.
fn with_local(cfg: &RunConfig, s: &Setup) -> Result<(DriveConfig, Option<LocalOptimum>), CliError> {
    match cfg.drive.local {
        Some(_) => Ok((s.drive, None)),
        None => {
            let opt = optimize_local_mw(&s.atom, &s.drive, &s.spec, mhz(cfg.task.optimize_at), bracket(cfg))?;
            Ok((s.drive.with_local(opt.omega_l), Some(opt)))
        }
    }
}

fn detector(cfg: &RunConfig) -> Result<Option<DetectorModel>, CliError> {
    cfg.task.detector.map(|f| DetectorModel::new(f * 1e6)).transpose().map_err(Into::into)
}

fn delta_s_grid(cfg: &RunConfig) -> Vec<f64> {
    cfg.task.grid.values().into_iter().map(mhz).collect()
}

fn local_summary(drive: &DriveConfig, opt: &Option<LocalOptimum>) -> Value {
    json!({
        "omega_l_MHz": to_mhz(drive.omega_l.norm()),
        "local_optimized": opt.is_some(),
        "peak_amplitude": opt.map(|o| o.peak_amplitude),
    })
}

fn curve_table(curve: &ResponseCurve) -> Table {
    let mut t = Table::new(&["frequency_Hz", "amplitude", "amplitude_dB"]);
    for &(ds, a) in &curve.points {
        t.push(vec![to_hz(ds), a, amplitude_db(a)]);
    }
    t
}

fn theory_curve(cfg: &RunConfig, s: &Setup) -> Result<(ResponseCurve, DriveConfig, Option<LocalOptimum>), CliError> {
    let (drive, opt) = with_local(cfg, s)?;
    let curve = response_curve(
        &s.atom,
        &drive,
        &s.spec,
        &delta_s_grid(cfg),
        detector(cfg)?,
        Some(mhz(cfg.task.normalize_at)),
    )?;
    Ok((curve, drive, opt))
}

fn response(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let s = setup(cfg)?;
    let (curve, drive, opt) = theory_curve(cfg, &s)?;
    let mut summary = local_summary(&drive, &opt);
    summary["normalized_at_Hz"] = json!(cfg.task.normalize_at * 1e6);
    summary["detector_f3db_Hz"] = json!(cfg.task.detector.map(|f| f * 1e6));
    summary["points"] = json!(curve.points.len());
    if curve.detector.is_none() {
        summary["gain_peak"] = json!(gain_peak(&curve).map(|(f, g)| json!({"frequency_Hz": f, "gain_dB": g})));
    }
    Ok(Outcome::new(curve_table(&curve), summary))
}

fn bandwidth(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let s = setup(cfg)?;
    let (curve, drive, opt) = theory_curve(cfg, &s)?;
    let det = curve.detector;
    let bw = bandwidth_minus3db(&curve, det.as_ref())?;
    let mut t = Table::new(&["bandwidth_Hz", "omega_l_MHz"]);
    if let Some(f) = bw {
        t.push(vec![f, to_mhz(drive.omega_l.norm())]);
    }
    let mut summary = local_summary(&drive, &opt);
    summary["bandwidth_Hz"] = json!(bw);
    summary["detector_compensated"] = json!(det.is_some());
    summary["response_peak"] = json!(response_peak(&curve).map(|(f, g)| json!({"frequency_Hz": f, "dB": g})));
    Ok(Outcome::new(t, summary))
}

fn sidebands(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let s = setup(cfg)?;
    let (drive, opt) = with_local(cfg, &s)?;
    let mut t = Table::new(&["frequency_Hz", "plus", "minus", "total"]);
    for ds in delta_s_grid(cfg) {
        let d = drive.with_beat(ds);
        let h = superhet::doppler::average_harmonics(&s.atom, &d, &s.spec)?;
        t.push(vec![to_hz(ds), h.rho_plus.norm(), h.rho_minus.norm(), h.beat_amplitude()]);
    }
    // Cross-check the shared routine on the first point.
    if let Some(first) = t.rows.first() {
        let (p, m) = sideband_contributions(&s.atom, &drive.with_beat(mhz(first[0] / 1e6)), &s.spec)?;
        debug_assert!((p - first[1]).abs() <= 1e-12 * p.max(1e-300) && (m - first[2]).abs() <= 1e-12 * m.max(1e-300));
    }
    Ok(Outcome::new(t, local_summary(&drive, &opt)))
}

const DEFAULT_OD: f64 = 1.16;

fn eit(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let s = setup(cfg)?;
    let drive = s.drive.with_local(0.0).with_signal(0.0);
    let beta = match (cfg.task.beta, cfg.task.od) {
        (Some(_), Some(_)) => return Err(CliError::config("give task.beta or task.od, not both")),
        (Some(b), None) => b,
        (None, od) => beta_from_od(&s.atom, &s.spec, od.unwrap_or(DEFAULT_OD))?,
    };
    let grid_mhz = cfg.task.grid.values();
    let grid: Vec<f64> = grid_mhz.iter().copied().map(mhz).collect();
    let spectrum = eit_spectrum(&s.atom, &drive, &s.spec, &grid, beta)?;
    let mut t = Table::new(&["delta_c_MHz", "ln_transmission", "transmission"]);
    for (&dc, &(_, ln_t)) in grid_mhz.iter().zip(&spectrum.points) {
        t.push(vec![dc, ln_t, ln_t.exp()]);
    }
    let summary = json!({
        "beta": spectrum.beta,
        "beta_MHz_units": beta_in_mhz(spectrum.beta),
        "od": spectrum.od,
        "omega_c_MHz": to_mhz(drive.omega_c.norm()),
    });
    Ok(Outcome::new(t, summary))
}

/// Two numeric columns from a CSV file; a non-numeric first line is a header.
pub fn read_pairs(path: &Path) -> Result<Vec<(f64, f64)>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed: Option<Vec<f64>> = fields.iter().map(|f| f.parse::<f64>().ok()).collect();
        match parsed {
            Some(v) if v.len() >= 2 => out.push((v[0], v[1])),
            None if i == 0 => continue,
            _ => return Err(CliError::config(format!("{}:{}: expected two numbers", path.display(), i + 1))),
        }
    }
    Ok(out)
}

fn fit(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let s = setup(cfg)?;
    let path = cfg.task.data.as_ref().ok_or_else(|| CliError::config("fit-eit needs task.data"))?;
    let data: Vec<(f64, f64)> = read_pairs(Path::new(path))?.into_iter().map(|(dc, y)| (mhz(dc), y)).collect();
    let omega_c = match cfg.task.omega_c_guess {
        Some(g) => mhz(g),
        None => FitGuess::from_peak_rabi(s.drive.omega_c.norm()).omega_c,
    };
    let guess = FitGuess { gamma: mhz(cfg.task.gamma_guess), omega_c, scale: cfg.task.beta };
    let r = fit_eit(&data, &s.atom, &s.spec, &guess)?;
    let mut t = Table::new(&[
        "gamma_MHz",
        "omega_c_MHz",
        "scale",
        "gamma_err_MHz",
        "omega_c_err_MHz",
        "scale_err",
        "residual_norm",
        "iterations",
    ]);
    t.push(vec![
        to_mhz(r.gamma),
        to_mhz(r.omega_c),
        r.scale,
        to_mhz(r.std_errors[0]),
        to_mhz(r.std_errors[1]),
        r.std_errors[2],
        r.residual_norm,
        r.iterations as f64,
    ]);
    let summary = json!({
        "gamma_MHz": to_mhz(r.gamma),
        "omega_c_MHz": to_mhz(r.omega_c),
        "scale": r.scale,
        "converged": r.converged,
        "iterations": r.iterations,
        "points": data.len(),
    });
    Ok(Outcome::new(t, summary))
}

fn optimize_local(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let s = setup(cfg)?;
    let at = mhz(cfg.task.optimize_at);
    let opt = optimize_local_mw(&s.atom, &s.drive, &s.spec, at, bracket(cfg))?;
    let mut t = Table::new(&["omega_l_MHz", "peak_amplitude", "delta_s_Hz"]);
    t.push(vec![to_mhz(opt.omega_l), opt.peak_amplitude, to_hz(at)]);
    let summary = json!({"omega_l_MHz": to_mhz(opt.omega_l), "peak_amplitude": opt.peak_amplitude});
    Ok(Outcome::new(t, summary))
}

fn sweep(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let s = setup(cfg)?;
    let points = cfg.task.sweep.as_ref().ok_or_else(|| CliError::config("sweep needs task.sweep = [[gamma, omega_c], ...]"))?;
    if points.is_empty() {
        return Err(CliError::config("task.sweep is empty"));
    }
    let pairs: Vec<(f64, f64)> = points.iter().map(|p| (mhz(p[0]), mhz(p[1]))).collect();
    let mut options = SweepOptions::new(delta_s_grid(cfg));
    options.bracket = bracket(cfg);
    options.optimize_at = mhz(cfg.task.optimize_at);
    options.detector = detector(cfg)?;
    options.normalize_at = Some(mhz(cfg.task.normalize_at));
    let out = sweep_response(&s.atom, &s.drive, &s.spec, &pairs, &options)?;
    let mut t = Table::new(&["gamma_MHz", "omega_c_MHz", "omega_l_MHz", "frequency_Hz", "amplitude", "amplitude_dB"]);
    let mut summary = Vec::new();
    for p in &out {
        let (g, oc, ol) = (to_mhz(p.gamma), to_mhz(p.omega_c), to_mhz(p.local.omega_l));
        for &(ds, a) in &p.curve.points {
            t.push(vec![g, oc, ol, to_hz(ds), a, amplitude_db(a)]);
        }
        summary.push(json!({
            "gamma_MHz": g,
            "omega_c_MHz": oc,
            "omega_l_MHz": ol,
            "bandwidth_Hz": bandwidth_minus3db(&p.curve, p.curve.detector.as_ref())?,
            "response_peak": response_peak(&p.curve).map(|(f, d)| json!({"frequency_Hz": f, "dB": d})),
        }));
    }
    Ok(Outcome::new(t, json!({ "points": summary })))
}

fn calibrate_at(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let raw: Vec<(f64, f64)> = match (&cfg.task.splittings, &cfg.task.data) {
        (Some(_), Some(_)) => return Err(CliError::config("give task.splittings or task.data, not both")),
        (Some(v), None) => v.iter().map(|p| (p[0], p[1])).collect(),
        (None, Some(path)) => read_pairs(Path::new(path))?,
        (None, None) => return Err(CliError::config("calibrate-at needs task.splittings or task.data")),
    };
    // Splittings are given in MHz; the fit works in Hz.
    let data: Vec<(f64, f64)> = raw.iter().map(|&(p, f)| (p, f * 1e6)).collect();
    let cal = fit_at_splitting(&data, cfg.atom.dipole_mw)?;
    let mut t = Table::new(&[
        "alpha_MHz_per_sqrt_mW",
        "alpha_err_MHz_per_sqrt_mW",
        "field_mV_per_cm_per_sqrt_mW",
        "field_err_mV_per_cm_per_sqrt_mW",
        "points",
    ]);
    t.push(vec![
        cal.alpha / 1e6,
        cal.alpha_std_error / 1e6,
        v_per_m_to_mv_per_cm(cal.field_per_sqrt_mw),
        v_per_m_to_mv_per_cm(cal.field_std_error),
        cal.points as f64,
    ]);
    let summary = json!({
        "alpha_MHz_per_sqrt_mW": cal.alpha / 1e6,
        "field_mV_per_cm_per_sqrt_mW": v_per_m_to_mv_per_cm(cal.field_per_sqrt_mw),
    });
    Ok(Outcome::new(t, summary))
}

fn rabi(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let probe = to_mhz(cfg.beam_rabi(cfg.drive.probe, cfg.atom.dipole_probe)?);
    let coupling = to_mhz(cfg.beam_rabi(cfg.drive.coupling, cfg.atom.dipole_coupling)?);
    let field = |nu: f64| -> Result<f64, CliError> { Ok(v_per_m_to_mv_per_cm(field_from_rabi(mhz(nu), cfg.atom.dipole_mw)?)) };
    let signal_field = field(cfg.drive.signal)?;
    let mut columns = vec!["probe_rabi_MHz", "coupling_rabi_MHz", "signal_field_mV_per_cm"];
    let mut row = vec![probe, coupling, signal_field];
    let mut summary = json!({
        "probe_rabi_MHz": probe,
        "coupling_rabi_MHz": coupling,
        "signal_field_mV_per_cm": signal_field,
    });
    if let Some(local) = cfg.drive.local {
        let f = field(local)?;
        columns.push("local_field_mV_per_cm");
        row.push(f);
        summary["local_field_mV_per_cm"] = json!(f);
    }
    let mut t = Table::new(&columns);
    t.push(row);
    Ok(Outcome::new(t, summary))
}

/// δs used by `sensitivity` when `task.delta_s` is absent, MHz.
const DEFAULT_SENSITIVITY_DELTA_S: f64 = 2.0;

fn sensitivity(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let noise = cfg.task.noise_density.ok_or_else(|| CliError::config("sensitivity needs task.noise_density"))?;
    let slope = cfg.task.response_slope.ok_or_else(|| CliError::config("sensitivity needs task.response_slope"))?;
    let at = mhz(cfg.task.delta_s.unwrap_or(DEFAULT_SENSITIVITY_DELTA_S));
    let s = setup(cfg)?;
    let (curve, drive, opt) = theory_curve(cfg, &s)?;
    let input = SensitivityInput { response_slope: slope, noise_density: noise, delta_s: at, response_curve: curve };
    let value = estimate_sensitivity(&input)?;
    let response = input.response_curve.interpolate(at)?;
    let mut t = Table::new(&[
        "delta_s_Hz",
        "normalized_response",
        "sensitivity_V_per_m_per_sqrt_Hz",
        "sensitivity_nV_per_cm_per_sqrt_Hz",
    ]);
    t.push(vec![to_hz(at), response, value, value * 1e7]);
    let mut summary = local_summary(&drive, &opt);
    summary["sensitivity_V_per_m_per_sqrt_Hz"] = json!(value);
    summary["normalized_response"] = json!(response);
    Ok(Outcome::new(t, summary))
}

fn oracle_check(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let config = OracleConfig { points: cfg.task.samples, seed: cfg.task.seed, tolerance: cfg.task.tolerance };
    let r = run_oracle(&config)?;
    let mut t = Table::new(&[
        "samples",
        "seed",
        "tolerance",
        "closed_vs_order1",
        "closed_vs_truncated",
        "closed_vs_time_domain",
        "truncated_vs_time_domain",
        "weak_truncated_vs_time_domain",
        "weak_closed_vs_truncated",
        "max_deviation",
        "passed",
    ]);
    t.push(vec![
        r.points as f64,
        r.seed as f64,
        r.tolerance,
        r.closed_vs_order1,
        r.closed_vs_truncated,
        r.closed_vs_time_domain,
        r.truncated_vs_time_domain,
        r.weak_truncated_vs_time_domain,
        r.weak_closed_vs_truncated,
        r.max_deviation(),
        if r.passed() { 1.0 } else { 0.0 },
    ]);
    let summary = serde_json::to_value(&r).expect("json");
    let mut outcome = Outcome::new(t, summary);
    if !r.passed() {
        outcome.failure = Some(format!(
            "oracle deviation {:.3e} exceeds tolerance {:.3e}",
            r.max_deviation(),
            r.tolerance
        ));
    }
    Ok(outcome)
}
