//! Readouts: beat amplitude, sidebands, normalized response curves,
//! detector model, bandwidth and gain-peak extraction, EIT spectra.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::doppler::{average_harmonics, average_with, DopplerSpec};
use crate::error::{Error, Result};
use crate::model::{complex_rates_at, probe_response, AtomSystem, DriveConfig};
use crate::units::{amplitude_db, khz, to_hz};

/// Default normalization point, 2π·100 kHz.
pub fn default_normalization() -> f64 {
    khz(100.0)
}

/// −3 dB in amplitude terms.
pub const MINUS_3DB: f64 = -3.0;

/// |⟨ρ₁₂¹⟩ − ⟨ρ₁₂⁻¹⟩*| with Doppler-averaged first-order harmonics.
pub fn beat_amplitude(atom: &AtomSystem, drive: &DriveConfig, spec: &DopplerSpec) -> Result<f64> {
    Ok(average_harmonics(atom, drive, spec)?.beat_amplitude())
}

/// (|⟨ρ₁₂¹⟩|, |⟨ρ₁₂⁻¹⟩|).
pub fn sideband_contributions(atom: &AtomSystem, drive: &DriveConfig, spec: &DopplerSpec) -> Result<(f64, f64)> {
    let h = average_harmonics(atom, drive, spec)?;
    Ok((h.rho_plus.norm(), h.rho_minus.norm()))
}

/// First-order low-pass photodetector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorModel {
    /// Corner frequency, Hz.
    pub f3db: f64,
}

impl DetectorModel {
    pub fn new(f3db: f64) -> Result<Self> {
        if !(f3db > 0.0 && f3db.is_finite()) {
            return Err(Error::InvalidInput(format!("detector corner must be positive, got {f3db}")));
        }
        Ok(Self { f3db })
    }

    /// |H(f)| = 1/sqrt(1 + (f/f3dB)²), f in Hz.
    pub fn magnitude(&self, f: f64) -> f64 {
        1.0 / (1.0 + (f / self.f3db).powi(2)).sqrt()
    }

    /// 20·log10 |H(f)| (≤ 0).
    pub fn attenuation_db(&self, f: f64) -> f64 {
        amplitude_db(self.magnitude(f))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseCurve {
    /// (δs in rad/s, relative amplitude).
    pub points: Vec<(f64, f64)>,
    pub normalized_at: Option<f64>,
    pub detector: Option<DetectorModel>,
}

impl ResponseCurve {
    pub fn frequencies_hz(&self) -> Vec<f64> {
        self.points.iter().map(|p| to_hz(p.0)).collect()
    }

    pub fn amplitudes(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.1).collect()
    }

    pub fn db(&self) -> Vec<f64> {
        self.points.iter().map(|p| amplitude_db(p.1)).collect()
    }

    /// Amplitude at δs by linear interpolation in (log δs, amplitude).
    pub fn interpolate(&self, delta_s: f64) -> Result<f64> {
        let pts = &self.points;
        let (first, last) = match (pts.first(), pts.last()) {
            (Some(f), Some(l)) => (f, l),
            _ => return Err(Error::EmptyGrid),
        };
        if delta_s < first.0 || delta_s > last.0 {
            return Err(Error::OutOfRange(delta_s));
        }
        let i = pts.partition_point(|p| p.0 < delta_s);
        if pts[i].0 == delta_s || i == 0 {
            return Ok(pts[i].1);
        }
        let (a, b) = (pts[i - 1], pts[i]);
        let t = (delta_s.ln() - a.0.ln()) / (b.0.ln() - a.0.ln());
        Ok(a.1 + t * (b.1 - a.1))
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.is_empty() {
            return Err(Error::EmptyGrid);
        }
        if self.points.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::InvalidInput("δs grid must be strictly increasing".into()));
        }
        if self.points.iter().any(|p| !(p.1 >= 0.0)) {
            return Err(Error::InvalidInput("amplitudes must be non-negative".into()));
        }
        Ok(())
    }
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    if grid.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
        return Err(Error::InvalidInput("δs grid must be positive and finite".into()));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidInput("δs grid must be strictly increasing".into()));
    }
    Ok(())
}

/// Response curve of an arbitrary amplitude function of δs.
///
/// Each point is multiplied by the detector magnitude, then divided by the
/// bare amplitude at `normalize_at` (which must lie inside the grid).
pub fn response_curve_with<F>(
    grid: &[f64],
    amplitude: F,
    detector: Option<DetectorModel>,
    normalize_at: Option<f64>,
) -> Result<ResponseCurve>
where
    F: Fn(f64) -> Result<f64> + Sync,
{
    check_grid(grid)?;
    let reference = match normalize_at {
        Some(at) => {
            if at < grid[0] || at > grid[grid.len() - 1] {
                return Err(Error::OutOfRange(at));
            }
            let r = amplitude(at)?;
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::InvalidInput(format!("amplitude at the normalization point is {r}")));
            }
            r
        }
        None => 1.0,
    };
    let points = grid
        .par_iter()
        .map(|&ds| {
            let a = amplitude(ds)?;
            let h = detector.map_or(1.0, |d| d.magnitude(to_hz(ds)));
            Ok((ds, a * h / reference))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ResponseCurve { points, normalized_at: normalize_at, detector })
}

/// Beat amplitude versus δs for a fixed drive template.
pub fn response_curve(
    atom: &AtomSystem,
    drive: &DriveConfig,
    spec: &DopplerSpec,
    grid: &[f64],
    detector: Option<DetectorModel>,
    normalize_at: Option<f64>,
) -> Result<ResponseCurve> {
    response_curve_with(
        grid,
        |ds| beat_amplitude(atom, &drive.with_beat(ds), spec),
        detector,
        normalize_at,
    )
}

/// Lowest frequency (Hz) at which the curve drops through −3 dB, or
/// through −3 dB plus the detector attenuation when `detector` is given.
/// Interpolated linearly in (log f, dB).
pub fn bandwidth_minus3db(curve: &ResponseCurve, detector: Option<&DetectorModel>) -> Result<Option<f64>> {
    if curve.normalized_at.is_none() {
        return Err(Error::NotNormalized);
    }
    curve.validate()?;
    let margin: Vec<(f64, f64)> = curve
        .points
        .iter()
        .map(|&(ds, a)| {
            let f = to_hz(ds);
            let line = MINUS_3DB + detector.map_or(0.0, |d| d.attenuation_db(f));
            (f.ln(), amplitude_db(a) - line)
        })
        .collect();
    if margin[0].1 < 0.0 {
        return Ok(Some(margin[0].0.exp()));
    }
    for w in margin.windows(2) {
        let ((x0, m0), (x1, m1)) = (w[0], w[1]);
        if m1 < 0.0 && m0 >= 0.0 {
            let t = if m0 == m1 { 0.0 } else { m0 / (m0 - m1) };
            return Ok(Some((x0 + t * (x1 - x0)).exp()));
        }
    }
    Ok(None)
}

/// Largest interior local maximum of the curve, as (Hz, dB), refined by a
/// parabola through the three neighbouring samples in (log f, dB).
pub fn response_peak(curve: &ResponseCurve) -> Option<(f64, f64)> {
    let xs: Vec<f64> = curve.frequencies_hz().iter().map(|f| f.ln()).collect();
    let ys = curve.db();
    let mut best: Option<(f64, f64)> = None;
    for i in 1..ys.len().saturating_sub(1) {
        if !(ys[i] > ys[i - 1] && ys[i] >= ys[i + 1]) {
            continue;
        }
        let refined = parabola_vertex((xs[i - 1], ys[i - 1]), (xs[i], ys[i]), (xs[i + 1], ys[i + 1]))
            .unwrap_or((xs[i], ys[i]));
        if best.map_or(true, |b| refined.1 > b.1) {
            best = Some(refined);
        }
    }
    best.map(|(x, y)| (x.exp(), y))
}

/// [`response_peak`] restricted to peaks above 0 dB.
pub fn gain_peak(curve: &ResponseCurve) -> Option<(f64, f64)> {
    response_peak(curve).filter(|p| p.1 > 0.0)
}

fn parabola_vertex(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> Option<(f64, f64)> {
    let d1 = (b.1 - a.1) / (b.0 - a.0);
    let d2 = (c.1 - b.1) / (c.0 - b.0);
    let curvature = (d2 - d1) / (c.0 - a.0);
    if !(curvature < 0.0) {
        return None;
    }
    // y = b.1 + s (x − b.0) + curvature (x − b.0)², s the slope at b.
    let s = d1 + curvature * (b.0 - a.0);
    let x = b.0 - s / (2.0 * curvature);
    if x < a.0 || x > c.0 {
        return None;
    }
    Some((x, b.1 - s * s / (4.0 * curvature)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EITSpectrum {
    /// (Δc in rad/s, ln(P_out/P_in)).
    pub points: Vec<(f64, f64)>,
    pub beta: f64,
    /// Optical depth implied by β at the template's probe detuning.
    pub od: f64,
}

/// Doppler-averaged ⟨Im(ρ₁₂⁰/Ωp)⟩ at the given detunings, local MW off.
pub fn mean_absorption(
    atom: &AtomSystem,
    omega_c: Complex64,
    spec: &DopplerSpec,
    delta_p: f64,
    delta_c: f64,
) -> Result<f64> {
    let zero = Complex64::new(0.0, 0.0);
    let [value] = average_with(spec, delta_p, delta_c, |dp, dc| {
        Ok([probe_response(&complex_rates_at(atom, dp, dc, 0.0), omega_c, zero)?])
    })?;
    Ok(value.im)
}

/// ln(P_out/P_in) = −β⟨Im(ρ₁₂⁰/Ωp)⟩ over a coupling-detuning grid.
pub fn eit_spectrum(
    atom: &AtomSystem,
    drive: &DriveConfig,
    spec: &DopplerSpec,
    grid: &[f64],
    beta: f64,
) -> Result<EITSpectrum> {
    if drive.omega_l.norm() != 0.0 || drive.omega_s.norm() != 0.0 {
        return Err(Error::InvalidInput("EIT spectrum needs both microwaves off".into()));
    }
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(Error::InvalidInput(format!("beta must be non-negative, got {beta}")));
    }
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let points = grid
        .par_iter()
        .map(|&dc| Ok((dc, -beta * mean_absorption(atom, drive.omega_c, spec, drive.delta_p, dc)?)))
        .collect::<Result<Vec<_>>>()?;
    let od = beta * mean_absorption(atom, Complex64::new(0.0, 0.0), spec, drive.delta_p, 0.0)?;
    Ok(EITSpectrum { points, beta, od })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::{log_grid, mhz};

    fn strong() -> (AtomSystem, DriveConfig) {
        (
            AtomSystem::default().with_dephasing(mhz(2.76)),
            DriveConfig::resonant(mhz(5.53), mhz(17.12), mhz(4.0), mhz(1e-3), khz(100.0)),
        )
    }

    #[test]
    fn no_signal_no_beat() {
        let (atom, drive) = strong();
        let spec = DopplerSpec::for_atom(&atom).unwrap();
        let d = drive.with_signal(0.0);
        assert_eq!(beat_amplitude(&atom, &d, &spec).unwrap(), 0.0);
        assert_eq!(sideband_contributions(&atom, &d, &spec).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn beat_doubles_with_signal() {
        let (atom, drive) = strong();
        let spec = DopplerSpec::for_atom(&atom).unwrap();
        let one = beat_amplitude(&atom, &drive, &spec).unwrap();
        let two = beat_amplitude(&atom, &drive.with_signal(mhz(2e-3)), &spec).unwrap();
        assert!((two / one - 2.0).abs() < 1e-9);
    }

    #[test]
    fn sidebands_match_at_low_beat() {
        let (atom, drive) = strong();
        let spec = DopplerSpec::for_atom(&atom).unwrap();
        let (plus, minus) = sideband_contributions(&atom, &drive.with_beat(khz(10.0)), &spec).unwrap();
        assert!((plus / minus - 1.0).abs() < 0.01, "{plus} {minus}");
    }

    #[test]
    fn flat_amplitude_through_detector_is_the_filter() {
        let det = DetectorModel::new(10e6).unwrap();
        let grid = log_grid(khz(10.0), mhz(100.0), 81);
        let curve = response_curve_with(&grid, |_| Ok(3.5), Some(det), Some(grid[0])).unwrap();
        for (ds, a) in &curve.points {
            assert!((a - det.magnitude(to_hz(*ds))).abs() < 1e-15);
        }
        let f = bandwidth_minus3db(&curve, None).unwrap().unwrap();
        assert!((f / 10e6 - 1.0).abs() < 0.01, "{f}");
        // Compensating for the very filter that shaped the curve: never crosses.
        assert_eq!(bandwidth_minus3db(&curve, Some(&det)).unwrap(), None);
    }

    #[test]
    fn normalization_point_reads_zero_db() {
        let grid = log_grid(khz(10.0), mhz(10.0), 31);
        let at = grid[7];
        let curve = response_curve_with(&grid, |ds| Ok(1.0 / (1.0 + ds / mhz(1.0))), None, Some(at)).unwrap();
        assert!((curve.points[7].1 - 1.0).abs() < 1e-15);
        assert!((curve.interpolate(at).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn curve_errors() {
        let f = |_: f64| Ok(1.0);
        assert_eq!(response_curve_with(&[], f, None, None).unwrap_err(), Error::EmptyGrid);
        assert!(response_curve_with(&[2.0, 1.0], f, None, None).is_err());
        assert!(matches!(
            response_curve_with(&[1.0, 2.0], f, None, Some(5.0)),
            Err(Error::OutOfRange(_))
        ));
        let raw = response_curve_with(&[1.0, 2.0], f, None, None).unwrap();
        assert_eq!(bandwidth_minus3db(&raw, None).unwrap_err(), Error::NotNormalized);
    }

    #[test]
    fn no_crossing_and_no_peak_on_monotone_curves() {
        let grid = log_grid(khz(10.0), mhz(1.0), 21);
        let curve = response_curve_with(&grid, |ds| Ok(1.0 / (1.0 + ds / mhz(100.0))), None, Some(grid[0])).unwrap();
        assert_eq!(bandwidth_minus3db(&curve, None).unwrap(), None);
        assert_eq!(gain_peak(&curve), None);
        assert_eq!(response_peak(&curve), None);
    }

    #[test]
    fn resonance_peak_is_refined() {
        // Second-order resonance; peak of |H| at f_r·sqrt(1 − 2ζ²).
        let (fr, zeta) = (5e6, 0.2);
        let h = |ds: f64| {
            let x = to_hz(ds) / fr;
            Ok(1.0 / ((1.0 - x * x).powi(2) + (2.0 * zeta * x).powi(2)).sqrt())
        };
        let grid = log_grid(khz(10.0), mhz(100.0), 400);
        let curve = response_curve_with(&grid, h, None, Some(grid[0])).unwrap();
        let (f, g) = gain_peak(&curve).unwrap();
        let f_exact = fr * (1.0 - 2.0 * zeta * zeta).sqrt();
        let g_exact = amplitude_db(1.0 / (2.0 * zeta * (1.0 - zeta * zeta).sqrt()));
        assert!((f / f_exact - 1.0).abs() < 1e-3, "{f} {f_exact}");
        assert!((g - g_exact).abs() < 1e-3, "{g} {g_exact}");
    }

    #[test]
    fn detector_composes_pointwise() {
        let (atom, drive) = strong();
        let spec = DopplerSpec::stationary();
        let det = DetectorModel::new(10e6).unwrap();
        let grid = log_grid(khz(100.0), mhz(20.0), 15);
        let bare = response_curve(&atom, &drive, &spec, &grid, None, Some(khz(100.0))).unwrap();
        let with = response_curve(&atom, &drive, &spec, &grid, Some(det), Some(khz(100.0))).unwrap();
        for (b, w) in bare.points.iter().zip(&with.points) {
            assert!((w.1 - b.1 * det.magnitude(to_hz(b.0))).abs() <= 1e-15 * b.1);
        }
    }

    #[test]
    fn strong_coupling_gain_before_rolloff() {
        // Well above the experimental coupling the curve rises over 0 dB.
        let atom = AtomSystem::default().with_dephasing(mhz(2.0));
        let drive = DriveConfig::resonant(mhz(5.53), mhz(40.0), mhz(12.0), mhz(1e-3), khz(100.0));
        let spec = DopplerSpec::for_atom(&atom).unwrap();
        let grid = log_grid(khz(100.0), mhz(60.0), 80);
        let curve = response_curve(&atom, &drive, &spec, &grid, None, None).unwrap();
        let curve = ResponseCurve {
            points: curve.points.iter().map(|p| (p.0, p.1 / curve.points[0].1)).collect(),
            normalized_at: Some(grid[0]),
            ..curve
        };
        let (f, g) = gain_peak(&curve).expect("gain peak");
        assert!(g > 0.0 && f > 1e6, "{f} {g}");
    }

    #[test]
    fn eit_requires_microwaves_off() {
        let (atom, drive) = strong();
        let spec = DopplerSpec::stationary();
        assert!(eit_spectrum(&atom, &drive, &spec, &[0.0], 1.0).is_err());
    }

    #[test]
    fn eit_window_and_passivity() {
        let atom = AtomSystem::default().with_dephasing(mhz(2.76));
        let drive = DriveConfig::resonant(mhz(5.53), mhz(17.12), 0.0, 0.0, 0.0);
        let spec = DopplerSpec::for_atom(&atom).unwrap();
        let grid: Vec<f64> = (-40..=40).map(|k| mhz(k as f64)).collect();
        let s = eit_spectrum(&atom, &drive, &spec, &grid, 1e9).unwrap();
        assert!(s.points.iter().all(|p| p.1 <= 0.0));
        let centre = s.points[40].1;
        let wing = s.points[0].1;
        assert!(centre > wing, "window {centre} wing {wing}");
        assert!(s.od > 0.0);
        // No coupling: centre becomes the two-level depth.
        let bare = eit_spectrum(&atom, &drive.with_coupling(0.0), &spec, &[0.0], 1e9).unwrap();
        assert!((bare.points[0].1 + bare.od).abs() < 1e-12 * bare.od);
    }
}
