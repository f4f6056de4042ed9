//! Unit conventions.
//!
//! Everything inside the crate is SI with frequencies as angular rates
//! (rad/s). User-facing frequencies are ordinary frequencies ν = Ω/2π,
//! usually quoted in MHz; the helpers here do the conversion.

use std::f64::consts::TAU;

/// ν in MHz → angular frequency in rad/s.
#[inline]
pub fn mhz(nu: f64) -> f64 {
    TAU * nu * 1e6
}

/// ν in kHz → angular frequency in rad/s.
#[inline]
pub fn khz(nu: f64) -> f64 {
    TAU * nu * 1e3
}

/// ν in Hz → angular frequency in rad/s.
#[inline]
pub fn hz(nu: f64) -> f64 {
    TAU * nu
}

/// Angular frequency (rad/s) → ν in MHz.
#[inline]
pub fn to_mhz(omega: f64) -> f64 {
    omega / (TAU * 1e6)
}

/// Angular frequency (rad/s) → ν in Hz.
#[inline]
pub fn to_hz(omega: f64) -> f64 {
    omega / TAU
}

/// Amplitude ratio → dB (20·log10).
#[inline]
pub fn amplitude_db(ratio: f64) -> f64 {
    20.0 * ratio.log10()
}

/// dB → amplitude ratio.
#[inline]
pub fn db_to_amplitude(db: f64) -> f64 {
    10f64.powf(db / 20.0)
}

/// `n` logarithmically spaced points from `start` to `stop` inclusive.
pub fn log_grid(start: f64, stop: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![start],
        _ => {
            let (a, b) = (start.ln(), stop.ln());
            (0..n)
                .map(|i| match i {
                    0 => start,
                    _ if i == n - 1 => stop,
                    _ => (a + (b - a) * i as f64 / (n - 1) as f64).exp(),
                })
                .collect()
        }
    }
}

/// `n` evenly spaced points from `start` to `stop` inclusive.
pub fn linear_grid(start: f64, stop: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![start],
        _ => (0..n)
            .map(|i| start + (stop - start) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}
