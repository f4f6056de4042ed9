//! Thermal velocity averaging.
//!
//! Every coherence is averaged over a one-dimensional Maxwell distribution
//! along the beam axis,
//!
//! ```text
//! ⟨f⟩ = 1/(√π v_p) ∫ e^{−v²/v_p²} f(Δp − k_p v, Δc ± k_c v) dv
//! ```
//!
//! with the plus sign for counter-propagating probe and coupling beams.
//! Microwave Doppler shifts are neglected.
//!
//! The default rule is globally adaptive Gauss–Kronrod (7/15) on x = v/v_p
//! over |x| ≤ 6. Room-temperature Doppler widths are a hundred times wider
//! than the sub-Doppler features of interest, which no fixed Gauss–Hermite
//! rule of modest size resolves. Gauss–Hermite remains available.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};

use crate::constants::BOLTZMANN;
use crate::error::{Error, Result};
use crate::floquet::{solve_truncated_at, HarmonicSolution};
use crate::model::{harmonics_at, AtomSystem, DriveConfig, Harmonics1};

/// Default initial panel (or node) count.
pub const DEFAULT_NODES: usize = 64;
/// Velocity cut-off in units of v_p; e^{−36} ≈ 2e-16.
pub const VELOCITY_CUTOFF: f64 = 6.0;
/// Per-component relative tolerance of the adaptive rule.
pub const ADAPTIVE_REL_TOL: f64 = 1e-10;
/// Components cancelling below this fraction of ∫|f| are held to an
/// absolute rather than relative tolerance.
pub const MAGNITUDE_FLOOR: f64 = 1e-3;
/// Hard cap on adaptive panels.
pub const MAX_PANELS: usize = 100_000;
/// Relative change allowed when doubling the node count.
pub const CONVERGENCE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Quadrature {
    #[default]
    GaussKronrod,
    GaussHermite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Propagation {
    #[default]
    Counter,
    Co,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DopplerSpec {
    /// Most probable speed, m/s.
    pub vp: f64,
    /// Probe wavenumber, rad/m.
    pub kp: f64,
    /// Coupling wavenumber, rad/m.
    pub kc: f64,
    pub nodes: usize,
    pub quadrature: Quadrature,
    pub propagation: Propagation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Quantity {
    Rho0,
    RhoPlus,
    RhoMinus,
}

/// sqrt(2 k_B T / m).
pub fn most_probable_speed(atom: &AtomSystem) -> f64 {
    (2.0 * BOLTZMANN * atom.temperature / atom.mass).sqrt()
}

/// (2π/λ_probe, 2π/λ_coupling).
pub fn wavenumbers(atom: &AtomSystem) -> (f64, f64) {
    (TAU / atom.lambda_probe, TAU / atom.lambda_coupling)
}

impl DopplerSpec {
    pub fn new(atom: &AtomSystem, nodes: usize) -> Result<Self> {
        atom.validate()?;
        let (kp, kc) = wavenumbers(atom);
        let spec = Self {
            vp: most_probable_speed(atom),
            kp,
            kc,
            nodes,
            quadrature: Quadrature::default(),
            propagation: Propagation::default(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn for_atom(atom: &AtomSystem) -> Result<Self> {
        Self::new(atom, DEFAULT_NODES)
    }

    /// Atoms at rest: averages reduce to the v = 0 value.
    pub fn stationary() -> Self {
        Self {
            vp: 0.0,
            kp: 0.0,
            kc: 0.0,
            nodes: DEFAULT_NODES,
            quadrature: Quadrature::default(),
            propagation: Propagation::default(),
        }
    }

    pub fn with_nodes(mut self, nodes: usize) -> Self {
        self.nodes = nodes;
        self
    }

    pub fn with_quadrature(mut self, quadrature: Quadrature) -> Self {
        self.quadrature = quadrature;
        self
    }

    pub fn with_propagation(mut self, propagation: Propagation) -> Self {
        self.propagation = propagation;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.nodes < 8 || self.nodes % 2 != 0 {
            return Err(Error::InvalidInput(format!("nodes must be even and >= 8, got {}", self.nodes)));
        }
        if !(self.vp >= 0.0 && self.vp.is_finite()) {
            return Err(Error::InvalidInput("vp must be finite and >= 0".into()));
        }
        if !(self.kp.is_finite() && self.kc.is_finite()) {
            return Err(Error::InvalidInput("wavenumbers must be finite".into()));
        }
        Ok(())
    }

    pub fn is_stationary(&self) -> bool {
        self.vp == 0.0
    }

    /// Shifted (Δp′, Δc′) for atoms at velocity v.
    pub fn shifted(&self, delta_p: f64, delta_c: f64, v: f64) -> (f64, f64) {
        let sign = match self.propagation {
            Propagation::Counter => 1.0,
            Propagation::Co => -1.0,
        };
        (delta_p - self.kp * v, delta_c + sign * self.kc * v)
    }
}

/// Velocity average of an N-component integrand f(Δp′, Δc′).
pub fn average_with<const N: usize, F>(
    spec: &DopplerSpec,
    delta_p: f64,
    delta_c: f64,
    f: F,
) -> Result<[Complex64; N]>
where
    F: Fn(f64, f64) -> Result<[Complex64; N]>,
{
    spec.validate()?;
    if spec.is_stationary() {
        return f(delta_p, delta_c);
    }
    let g = |x: f64| {
        let (dp, dc) = spec.shifted(delta_p, delta_c, x * spec.vp);
        f(dp, dc)
    };
    match spec.quadrature {
        Quadrature::GaussKronrod => adaptive_gauss_kronrod(&g, spec.nodes),
        Quadrature::GaussHermite => gauss_hermite(&g, spec.nodes),
    }
}

/// [`average_with`] plus a node-doubling check; fails with
/// [`Error::NonConvergent`] if any component moves by more than 1e-6
/// relative to the largest.
pub fn average_with_checked<const N: usize, F>(
    spec: &DopplerSpec,
    delta_p: f64,
    delta_c: f64,
    f: F,
) -> Result<[Complex64; N]>
where
    F: Fn(f64, f64) -> Result<[Complex64; N]>,
{
    let base = average_with(spec, delta_p, delta_c, &f)?;
    let fine = average_with(&spec.with_nodes(2 * spec.nodes), delta_p, delta_c, &f)?;
    let scale = fine.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let change = base.iter().zip(&fine).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    if change > CONVERGENCE_TOL * scale {
        return Err(Error::NonConvergent(format!(
            "doubling {} -> {} nodes changed the average by {:.3e} (relative)",
            spec.nodes,
            2 * spec.nodes,
            change / scale
        )));
    }
    Ok(fine)
}

/// Doppler-averaged first-order harmonics (all three in one pass).
pub fn average_harmonics(atom: &AtomSystem, drive: &DriveConfig, spec: &DopplerSpec) -> Result<Harmonics1> {
    let [rho0, rho_plus, rho_minus] = average_with(spec, drive.delta_p, drive.delta_c, |dp, dc| {
        let h = harmonics_at(atom, drive, dp, dc)?;
        Ok([h.rho0, h.rho_plus, h.rho_minus])
    })?;
    Ok(Harmonics1 { rho0, rho_plus, rho_minus })
}

/// Doppler average of one first-order harmonic of ρ₁₂.
pub fn doppler_average(atom: &AtomSystem, drive: &DriveConfig, spec: &DopplerSpec, quantity: Quantity) -> Result<Complex64> {
    let [value] = average_with(spec, drive.delta_p, drive.delta_c, |dp, dc| {
        Ok([select(&harmonics_at(atom, drive, dp, dc)?, quantity)])
    })?;
    Ok(value)
}

pub fn doppler_average_checked(
    atom: &AtomSystem,
    drive: &DriveConfig,
    spec: &DopplerSpec,
    quantity: Quantity,
) -> Result<Complex64> {
    let [value] = average_with_checked(spec, drive.delta_p, drive.delta_c, |dp, dc| {
        Ok([select(&harmonics_at(atom, drive, dp, dc)?, quantity)])
    })?;
    Ok(value)
}

/// Doppler-averaged ρ₁₂ harmonics n = −1, 0, 1 from the truncated solver.
pub fn average_truncated(
    atom: &AtomSystem,
    drive: &DriveConfig,
    spec: &DopplerSpec,
    order: usize,
) -> Result<Harmonics1> {
    let [rho0, rho_plus, rho_minus] = average_with(spec, drive.delta_p, drive.delta_c, |dp, dc| {
        let sol: HarmonicSolution = solve_truncated_at(atom, drive, order, dp, dc)?;
        Ok([sol.rho12(0), sol.rho12(1), sol.rho12(-1)])
    })?;
    Ok(Harmonics1 { rho0, rho_plus, rho_minus })
}

fn select(h: &Harmonics1, quantity: Quantity) -> Complex64 {
    match quantity {
        Quantity::Rho0 => h.rho0,
        Quantity::RhoPlus => h.rho_plus,
        Quantity::RhoMinus => h.rho_minus,
    }
}

// Kronrod 15-point abscissae (non-negative half) and weights, with the
// embedded 7-point Gauss weights at the odd positions.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.000_000_000_000_000_000_000_000_000_000_000,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

struct Panel<const N: usize> {
    a: f64,
    b: f64,
    value: [Complex64; N],
    error: [f64; N],
    /// ∫|f|w, for the absolute floor on cancelling components.
    magnitude: [f64; N],
}

fn gauss_weight(x: f64) -> f64 {
    (-x * x).exp() / PI.sqrt()
}

fn kronrod_panel<const N: usize, G>(g: &G, a: f64, b: f64) -> Result<Panel<N>>
where
    G: Fn(f64) -> Result<[Complex64; N]>,
{
    let centre = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let zero = Complex64::new(0.0, 0.0);
    let mut kronrod = [zero; N];
    let mut gauss = [zero; N];
    let mut magnitude = [0.0; N];
    for (j, (&x, &wk)) in XGK.iter().zip(&WGK).enumerate() {
        let nodes: &[f64] = if j == 7 { &[0.0] } else { &[-1.0, 1.0] };
        for &s in nodes {
            let t = centre + s * half * x;
            let w = gauss_weight(t);
            let f = g(t)?;
            for k in 0..N {
                let fw = f[k] * w;
                kronrod[k] += fw * wk;
                magnitude[k] += fw.norm() * wk;
                if j % 2 == 1 {
                    gauss[k] += fw * WG[j / 2];
                }
            }
        }
    }
    let mut value = [zero; N];
    let mut error = [0.0; N];
    for k in 0..N {
        value[k] = kronrod[k] * half;
        error[k] = ((kronrod[k] - gauss[k]) * half).norm();
        magnitude[k] *= half;
    }
    Ok(Panel { a, b, value, error, magnitude })
}

fn adaptive_gauss_kronrod<const N: usize, G>(g: &G, initial: usize) -> Result<[Complex64; N]>
where
    G: Fn(f64) -> Result<[Complex64; N]>,
{
    let width = 2.0 * VELOCITY_CUTOFF / initial as f64;
    let mut panels = (0..initial)
        .map(|i| {
            let a = -VELOCITY_CUTOFF + i as f64 * width;
            let b = if i + 1 == initial { VELOCITY_CUTOFF } else { a + width };
            kronrod_panel(g, a, b)
        })
        .collect::<Result<Vec<_>>>()?;

    loop {
        let mut total = [Complex64::new(0.0, 0.0); N];
        let mut error = [0.0; N];
        let mut magnitude = [0.0; N];
        for p in &panels {
            for k in 0..N {
                total[k] += p.value[k];
                error[k] += p.error[k];
                magnitude[k] += p.magnitude[k];
            }
        }
        let allowed: [f64; N] =
            std::array::from_fn(|k| ADAPTIVE_REL_TOL * total[k].norm().max(MAGNITUDE_FLOOR * magnitude[k]));
        if (0..N).all(|k| error[k] <= allowed[k]) {
            panels.sort_by(|p, q| p.a.total_cmp(&q.a));
            let mut sum = [Complex64::new(0.0, 0.0); N];
            for p in &panels {
                for k in 0..N {
                    sum[k] += p.value[k];
                }
            }
            return Ok(sum);
        }
        if panels.len() >= MAX_PANELS {
            return Err(Error::NonConvergent(format!(
                "adaptive quadrature exceeded {MAX_PANELS} panels"
            )));
        }
        // Bisect every panel carrying at least half the worst share of the
        // excess error.
        let shares: Vec<f64> = panels
            .iter()
            .map(|p| {
                (0..N)
                    .map(|k| if allowed[k] > 0.0 { p.error[k] / allowed[k] } else { p.error[k] })
                    .fold(0.0, f64::max)
            })
            .collect();
        let worst = shares.iter().cloned().fold(0.0, f64::max);
        let mut next = Vec::with_capacity(panels.len() * 2);
        for (p, share) in panels.into_iter().zip(shares) {
            if share >= 0.5 * worst {
                let mid = 0.5 * (p.a + p.b);
                next.push(kronrod_panel(g, p.a, mid)?);
                next.push(kronrod_panel(g, mid, p.b)?);
            } else {
                next.push(p);
            }
        }
        panels = next;
    }
}

/// Gauss–Hermite nodes and weights for ∫ e^{−x²} f(x) dx.
pub fn gauss_hermite_rule(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let pim4 = PI.powf(-0.25);
    let m = (n + 1) / 2;
    let nf = n as f64;
    let mut z = 0.0;
    for i in 0..m {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.855_75 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = pim4;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = (j + 1) as f64;
                p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let dz = p1 / pp;
            z -= dz;
            if dz.abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

fn gauss_hermite<const N: usize, G>(g: &G, n: usize) -> Result<[Complex64; N]>
where
    G: Fn(f64) -> Result<[Complex64; N]>,
{
    let (x, w) = gauss_hermite_rule(n);
    let mut sum = [Complex64::new(0.0, 0.0); N];
    let norm = 1.0 / PI.sqrt();
    for (&xi, &wi) in x.iter().zip(&w).rev() {
        let f = g(xi)?;
        for k in 0..N {
            sum[k] += f[k] * (wi * norm);
        }
    }
    Ok(sum)
}

#[cfg(test)]
mod tests {
    use super::*;
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
    fn room_temperature_speed_and_wavenumbers() {
        let atom = AtomSystem::default();
        assert!((most_probable_speed(&atom) - 236.8).abs() < 0.1);
        let (kp, kc) = wavenumbers(&atom);
        assert!((kp / 8.055e6 - 1.0).abs() < 1e-3);
        assert!((kc / 1.309e7 - 1.0).abs() < 1e-3);
        let same = AtomSystem { lambda_coupling: 780e-9, ..atom };
        let (kp, kc) = wavenumbers(&same);
        assert_eq!(kp, kc);
    }

    #[test]
    fn unit_integrand_averages_to_one() {
        let spec = DopplerSpec::for_atom(&AtomSystem::default()).unwrap();
        for quadrature in [Quadrature::GaussKronrod, Quadrature::GaussHermite] {
            for nodes in [8, 16, 64] {
                let s = spec.with_quadrature(quadrature).with_nodes(nodes);
                let [one] = average_with(&s, 0.0, 0.0, |_, _| Ok([Complex64::new(1.0, 0.0)])).unwrap();
                assert!((one.re - 1.0).abs() < 1e-13 && one.im == 0.0, "{quadrature:?} {nodes}: {one}");
            }
        }
    }

    #[test]
    fn hermite_rule_matches_moments() {
        let (x, w) = gauss_hermite_rule(20);
        let m0: f64 = w.iter().sum();
        let m2: f64 = x.iter().zip(&w).map(|(x, w)| x * x * w).sum();
        let m4: f64 = x.iter().zip(&w).map(|(x, w)| x.powi(4) * w).sum();
        assert!((m0 - PI.sqrt()).abs() < 1e-13);
        assert!((m2 - PI.sqrt() / 2.0).abs() < 1e-13);
        assert!((m4 - 3.0 * PI.sqrt() / 4.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_node_counts() {
        let spec = DopplerSpec::for_atom(&AtomSystem::default()).unwrap();
        assert!(spec.with_nodes(6).validate().is_err());
        assert!(spec.with_nodes(9).validate().is_err());
        assert!(DopplerSpec::new(&AtomSystem::default(), 10).is_ok());
    }

    #[test]
    fn cold_limit_is_the_integrand_at_rest() {
        let (atom, drive) = point();
        let at_rest = harmonics_at(&atom, &drive, 0.0, 0.0).unwrap();
        let still = average_harmonics(&atom, &drive, &DopplerSpec::stationary()).unwrap();
        assert_eq!(still, at_rest);
        let cold = DopplerSpec::for_atom(&atom.with_temperature(1e-9)).unwrap();
        let nearly = average_harmonics(&atom, &drive, &cold).unwrap();
        assert!(rel(nearly.rho_plus, at_rest.rho_plus) < 1e-6);
    }

    #[test]
    fn lorentzian_against_brute_force_simpson() {
        // Two-level case: ρ/Ωp = (i/2)/g12, smooth enough for a fine Simpson sum.
        let atom = AtomSystem::default().with_dephasing(mhz(1.0));
        let drive = DriveConfig::resonant(mhz(1.0), 0.0, 0.0, 0.0, mhz(1.0)).with_detunings(mhz(40.0), 0.0, 0.0);
        let spec = DopplerSpec::for_atom(&atom).unwrap();
        let got = doppler_average(&atom, &drive, &spec, Quantity::Rho0).unwrap();

        let n = 400_000;
        let (a, b) = (-VELOCITY_CUTOFF, VELOCITY_CUTOFF);
        let h = (b - a) / n as f64;
        let gamma = atom.gamma2 / 2.0 + atom.dephasing;
        let mut sum = Complex64::new(0.0, 0.0);
        for i in 0..=n {
            let x = a + i as f64 * h;
            let dp = drive.delta_p - spec.kp * x * spec.vp;
            let f = Complex64::new(0.0, 0.5 * mhz(1.0)) / Complex64::new(gamma, dp);
            let c = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            sum += f * (c * (-x * x).exp());
        }
        let expected = sum * (h / 3.0 / PI.sqrt());
        assert!(rel(got, expected) < 1e-8, "{got} vs {expected}");
    }

    #[test]
    fn node_doubling_converges() {
        let (atom, drive) = point();
        let spec = DopplerSpec::for_atom(&atom).unwrap();
        for q in [Quantity::Rho0, Quantity::RhoPlus, Quantity::RhoMinus] {
            let a = doppler_average(&atom, &drive, &spec, q).unwrap();
            let b = doppler_average(&atom, &drive, &spec.with_nodes(128), q).unwrap();
            assert!(rel(a, b) < 1e-6, "{q:?}: {}", rel(a, b));
            doppler_average_checked(&atom, &drive, &spec, q).unwrap();
        }
    }

    #[test]
    fn small_hermite_rule_fails_the_check() {
        let (atom, drive) = point();
        let spec = DopplerSpec::for_atom(&atom).unwrap().with_quadrature(Quadrature::GaussHermite);
        let err = doppler_average_checked(&atom, &drive, &spec, Quantity::RhoPlus).unwrap_err();
        assert!(matches!(err, Error::NonConvergent(_)));
    }

    #[test]
    fn averaging_is_linear_in_signal() {
        let (atom, drive) = point();
        let spec = DopplerSpec::for_atom(&atom).unwrap();
        let one = average_harmonics(&atom, &drive, &spec).unwrap();
        let two = average_harmonics(&atom, &drive.with_signal(2.0 * drive.omega_s.re), &spec).unwrap();
        assert!(rel(two.rho_plus, 2.0 * one.rho_plus) < 1e-9);
        assert!(rel(two.rho_minus, 2.0 * one.rho_minus) < 1e-9);
        assert!(rel(two.rho0, one.rho0) < 1e-12);
    }

    #[test]
    fn co_propagation_washes_out_transparency() {
        let atom = AtomSystem::default().with_dephasing(mhz(0.5));
        let drive = DriveConfig::resonant(mhz(5.53), mhz(17.12), 0.0, 0.0, mhz(1.0));
        let counter = DopplerSpec::for_atom(&atom).unwrap();
        let co = counter.with_propagation(Propagation::Co);
        let absorption = |spec: &DopplerSpec, dc: f64| {
            let d = drive.with_detunings(0.0, dc, 0.0);
            doppler_average(&atom, &d, spec, Quantity::Rho0).unwrap().im
        };
        // Depth of the transparency dip relative to the off-resonant wing.
        let contrast = |spec: &DopplerSpec| 1.0 - absorption(spec, 0.0) / absorption(spec, mhz(60.0));
        let (c_counter, c_co) = (contrast(&counter), contrast(&co));
        assert!(c_co < c_counter, "co {c_co} counter {c_counter}");
    }
}
