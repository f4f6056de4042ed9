//! Run configuration: TOML sections `[atom]`, `[drive]`, `[doppler]`,
//! `[task]`, `[output]`, with `--set key=value` overrides.
//!
//! Defaults are the strong-coupling experimental point: Ωp/2π = 5.53 MHz,
//! Ωc/2π = 17.12 MHz, γ/2π = 2.76 MHz, Ω_S/2π = 1 kHz, δs/2π = 100 kHz,
//! local MW optimized.

use serde::{Deserialize, Serialize};
use std::path::Path;

use superhet::calibration::{rabi_from_power, BeamGeometry};
use superhet::doppler::{DopplerSpec, Propagation, Quadrature};
use superhet::units::{linear_grid, log_grid, mhz};
use superhet::{AtomSystem, DriveConfig};

use crate::error::CliError;
use crate::units::{parse_in, Dim, Qty};

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RawConfig {
    pub atom: RawAtom,
    pub drive: RawDrive,
    pub doppler: RawDoppler,
    pub task: RawTask,
    pub output: RawOutput,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RawAtom {
    pub gamma2: Option<Qty>,
    pub gamma_r: Option<Qty>,
    pub dephasing: Option<Qty>,
    pub dipole_probe: Option<Qty>,
    pub dipole_coupling: Option<Qty>,
    pub dipole_mw: Option<Qty>,
    pub lambda_probe: Option<Qty>,
    pub lambda_coupling: Option<Qty>,
    pub mass: Option<Qty>,
    pub temperature: Option<Qty>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RawBeam {
    pub rabi: Option<Qty>,
    pub power: Option<Qty>,
    pub waist: Option<Qty>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RawDrive {
    pub probe: RawBeam,
    pub coupling: RawBeam,
    pub local: Option<Qty>,
    pub signal: Option<Qty>,
    pub delta_p: Option<Qty>,
    pub delta_c: Option<Qty>,
    pub delta_l: Option<Qty>,
    pub delta_s: Option<Qty>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RawDoppler {
    pub enabled: Option<bool>,
    pub nodes: Option<usize>,
    pub quadrature: Option<Quadrature>,
    pub propagation: Option<Propagation>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RawGrid {
    pub start: Option<Qty>,
    pub stop: Option<Qty>,
    pub points: Option<usize>,
    pub spacing: Option<Spacing>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RawTask {
    pub grid: Option<RawGrid>,
    pub detector: Option<Qty>,
    pub normalize_at: Option<Qty>,
    pub optimize_at: Option<Qty>,
    pub bracket: Option<Vec<Qty>>,
    pub od: Option<f64>,
    pub beta: Option<f64>,
    pub data: Option<String>,
    pub splittings: Option<Vec<[f64; 2]>>,
    pub gamma_guess: Option<Qty>,
    pub omega_c_guess: Option<Qty>,
    pub sweep: Option<Vec<[f64; 2]>>,
    pub noise_density: Option<f64>,
    pub response_slope: Option<f64>,
    pub delta_s: Option<Qty>,
    pub samples: Option<usize>,
    pub tolerance: Option<f64>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RawOutput {
    pub format: Option<Format>,
    pub path: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    Log,
    Linear,
}

/// Resolved configuration in the documented default units (MHz for
/// ν = Ω/2π, mW, μm, nm, K). Serializes back into loadable TOML.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub atom: AtomSection,
    pub drive: DriveSection,
    pub doppler: DopplerSection,
    pub task: TaskSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AtomSection {
    pub gamma2: f64,
    pub gamma_r: f64,
    pub dephasing: f64,
    pub dipole_probe: f64,
    pub dipole_coupling: f64,
    pub dipole_mw: f64,
    pub lambda_probe: f64,
    pub lambda_coupling: f64,
    pub mass: f64,
    pub temperature: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Beam {
    Rabi { rabi: f64 },
    Power { power: f64, waist: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriveSection {
    pub probe: Beam,
    pub coupling: Beam,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub local: Option<f64>,
    pub signal: f64,
    pub delta_p: f64,
    pub delta_c: f64,
    pub delta_l: f64,
    pub delta_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DopplerSection {
    pub enabled: bool,
    pub nodes: usize,
    pub quadrature: Quadrature,
    pub propagation: Propagation,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridSection {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
    pub spacing: Spacing,
}

impl GridSection {
    pub fn values(&self) -> Vec<f64> {
        match self.spacing {
            Spacing::Log => log_grid(self.start, self.stop, self.points),
            Spacing::Linear => linear_grid(self.start, self.stop, self.points),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaskSection {
    pub grid: GridSection,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detector: Option<f64>,
    pub normalize_at: f64,
    pub optimize_at: f64,
    pub bracket: [f64; 2],
    #[serde(skip_serializing_if = "Option::is_none")]
    pub od: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub splittings: Option<Vec<[f64; 2]>>,
    pub gamma_guess: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega_c_guess: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Vec<[f64; 2]>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_density: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub response_slope: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_s: Option<f64>,
    pub samples: usize,
    pub tolerance: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputSection {
    pub format: Format,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
}

/// Grid defaults differ per subcommand.
#[derive(Debug, Clone, Copy)]
pub struct GridDefault {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
    pub spacing: Spacing,
}

pub const RESPONSE_GRID: GridDefault = GridDefault { start: 0.1, stop: 60.0, points: 121, spacing: Spacing::Log };
pub const EIT_GRID: GridDefault = GridDefault { start: -40.0, stop: 40.0, points: 161, spacing: Spacing::Linear };

/// Reads the TOML file (if any) and applies `key=value` overrides.
pub fn load_tree(path: Option<&Path>, overrides: &[String]) -> Result<toml::Table, CliError> {
    let mut tree = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::config(format!("cannot read {}: {e}", p.display())))?;
            toml::from_str::<toml::Table>(&text).map_err(|e| CliError::config(format!("{}: {e}", p.display())))?
        }
        None => toml::Table::new(),
    };
    for item in overrides {
        apply_override(&mut tree, item)?;
    }
    Ok(tree)
}

/// `a.b.c=value`; the value is read as a TOML value, falling back to a string.
pub fn apply_override(tree: &mut toml::Table, item: &str) -> Result<(), CliError> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| CliError::config(format!("--set expects key=value, got {item:?}")))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(CliError::config(format!("--set: bad key {key:?}")));
    }
    let value = toml::from_str::<toml::Table>(&format!("v = {}", raw.trim()))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    let mut node = tree;
    for part in &parts[..parts.len() - 1] {
        let entry = node
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry
            .as_table_mut()
            .ok_or_else(|| CliError::config(format!("--set: {part} in {key} is not a table")))?;
    }
    node.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

fn qty(q: &Option<Qty>, dim: Dim, unit: &str, field: &str, default: f64) -> Result<f64, CliError> {
    q.as_ref().map_or(Ok(default), |q| parse_in(q, dim, unit, field))
}

fn opt_qty(q: &Option<Qty>, dim: Dim, unit: &str, field: &str) -> Result<Option<f64>, CliError> {
    q.as_ref().map(|q| parse_in(q, dim, unit, field)).transpose()
}

fn beam(raw: &RawBeam, field: &str, default_rabi: f64) -> Result<Beam, CliError> {
    let rabi = opt_qty(&raw.rabi, Dim::Frequency, "MHz", &format!("{field}.rabi"))?;
    let power = opt_qty(&raw.power, Dim::Power, "mW", &format!("{field}.power"))?;
    let waist = opt_qty(&raw.waist, Dim::Length, "um", &format!("{field}.waist"))?;
    match (rabi, power, waist) {
        (Some(rabi), None, None) => Ok(Beam::Rabi { rabi }),
        (None, Some(power), Some(waist)) => Ok(Beam::Power { power, waist }),
        (None, None, None) => Ok(Beam::Rabi { rabi: default_rabi }),
        (None, Some(_), None) | (None, None, Some(_)) => {
            Err(CliError::config(format!("{field}: power and waist must be given together")))
        }
        _ => Err(CliError::config(format!("{field}: give exactly one of rabi or power+waist"))),
    }
}

impl RunConfig {
    pub fn from_tree(tree: toml::Table, grid_default: GridDefault) -> Result<Self, CliError> {
        let raw: RawConfig = toml::Value::Table(tree)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::config(e.message().to_string()))?;
        Self::resolve(&raw, grid_default)
    }

    pub fn resolve(raw: &RawConfig, grid_default: GridDefault) -> Result<Self, CliError> {
        let a = &raw.atom;
        let d = AtomSystem::default();
        let atom = AtomSection {
            gamma2: qty(&a.gamma2, Dim::Frequency, "MHz", "atom.gamma2", d.gamma2 / mhz(1.0))?,
            gamma_r: qty(&a.gamma_r, Dim::Frequency, "MHz", "atom.gamma_r", d.gamma_r / mhz(1.0))?,
            dephasing: qty(&a.dephasing, Dim::Frequency, "MHz", "atom.dephasing", 2.76)?,
            dipole_probe: qty(&a.dipole_probe, Dim::Dimensionless, "", "atom.dipole_probe", d.dipole_probe)?,
            dipole_coupling: qty(&a.dipole_coupling, Dim::Dimensionless, "", "atom.dipole_coupling", d.dipole_coupling)?,
            dipole_mw: qty(&a.dipole_mw, Dim::Dimensionless, "", "atom.dipole_mw", d.dipole_mw)?,
            lambda_probe: qty(&a.lambda_probe, Dim::Length, "nm", "atom.lambda_probe", d.lambda_probe * 1e9)?,
            lambda_coupling: qty(&a.lambda_coupling, Dim::Length, "nm", "atom.lambda_coupling", d.lambda_coupling * 1e9)?,
            mass: qty(&a.mass, Dim::Mass, "kg", "atom.mass", d.mass)?,
            temperature: qty(&a.temperature, Dim::Temperature, "K", "atom.temperature", d.temperature)?,
        };

        let dr = &raw.drive;
        let drive = DriveSection {
            probe: beam(&dr.probe, "drive.probe", 5.53)?,
            coupling: beam(&dr.coupling, "drive.coupling", 17.12)?,
            local: opt_qty(&dr.local, Dim::Frequency, "MHz", "drive.local")?,
            signal: qty(&dr.signal, Dim::Frequency, "MHz", "drive.signal", 1e-3)?,
            delta_p: qty(&dr.delta_p, Dim::Frequency, "MHz", "drive.delta_p", 0.0)?,
            delta_c: qty(&dr.delta_c, Dim::Frequency, "MHz", "drive.delta_c", 0.0)?,
            delta_l: qty(&dr.delta_l, Dim::Frequency, "MHz", "drive.delta_l", 0.0)?,
            delta_s: qty(&dr.delta_s, Dim::Frequency, "MHz", "drive.delta_s", 0.1)?,
        };

        let dp = &raw.doppler;
        let doppler = DopplerSection {
            enabled: dp.enabled.unwrap_or(true),
            nodes: dp.nodes.unwrap_or(superhet::doppler::DEFAULT_NODES),
            quadrature: dp.quadrature.unwrap_or_default(),
            propagation: dp.propagation.unwrap_or_default(),
        };

        let t = &raw.task;
        let g = t.grid.clone().unwrap_or_default();
        let grid = GridSection {
            start: qty(&g.start, Dim::Frequency, "MHz", "task.grid.start", grid_default.start)?,
            stop: qty(&g.stop, Dim::Frequency, "MHz", "task.grid.stop", grid_default.stop)?,
            points: g.points.unwrap_or(grid_default.points),
            spacing: g.spacing.unwrap_or(grid_default.spacing),
        };
        let bracket = match &t.bracket {
            None => [0.01, 1000.0],
            Some(v) if v.len() == 2 => [
                parse_in(&v[0], Dim::Frequency, "MHz", "task.bracket[0]")?,
                parse_in(&v[1], Dim::Frequency, "MHz", "task.bracket[1]")?,
            ],
            Some(_) => return Err(CliError::config("task.bracket needs two values")),
        };
        let task = TaskSection {
            grid,
            detector: opt_qty(&t.detector, Dim::Frequency, "MHz", "task.detector")?,
            normalize_at: qty(&t.normalize_at, Dim::Frequency, "MHz", "task.normalize_at", 0.1)?,
            optimize_at: qty(&t.optimize_at, Dim::Frequency, "MHz", "task.optimize_at", 0.1)?,
            bracket,
            od: t.od,
            beta: t.beta,
            data: t.data.clone(),
            splittings: t.splittings.clone(),
            gamma_guess: qty(&t.gamma_guess, Dim::Frequency, "MHz", "task.gamma_guess", 2.0)?,
            omega_c_guess: opt_qty(&t.omega_c_guess, Dim::Frequency, "MHz", "task.omega_c_guess")?,
            sweep: t.sweep.clone(),
            noise_density: t.noise_density,
            response_slope: t.response_slope,
            delta_s: opt_qty(&t.delta_s, Dim::Frequency, "MHz", "task.delta_s")?,
            samples: t.samples.unwrap_or(superhet::oracle::DEFAULT_POINTS),
            tolerance: t.tolerance.unwrap_or(superhet::oracle::DEFAULT_TOLERANCE),
            seed: t.seed.unwrap_or(0),
        };
        let output = OutputSection {
            format: raw.output.format.unwrap_or_default(),
            path: raw.output.path.clone(),
        };
        let config = RunConfig { atom, drive, doppler, task, output };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.atom_system()?.validate()?;
        let g = &self.task.grid;
        if g.points < 1 {
            return Err(CliError::config("task.grid.points must be >= 1"));
        }
        if g.spacing == Spacing::Log && !(g.start > 0.0 && g.stop > g.start) {
            return Err(CliError::config("task.grid: log spacing needs 0 < start < stop"));
        }
        if g.spacing == Spacing::Linear && !(g.stop >= g.start) {
            return Err(CliError::config("task.grid: stop must be >= start"));
        }
        if let Some(f) = self.task.detector {
            if !(f > 0.0) {
                return Err(CliError::config("task.detector must be > 0"));
            }
        }
        self.doppler_spec()?;
        Ok(())
    }

    pub fn atom_system(&self) -> Result<AtomSystem, CliError> {
        let a = &self.atom;
        Ok(AtomSystem {
            gamma2: mhz(a.gamma2),
            gamma_r: mhz(a.gamma_r),
            dephasing: mhz(a.dephasing),
            dipole_probe: a.dipole_probe,
            dipole_coupling: a.dipole_coupling,
            dipole_mw: a.dipole_mw,
            lambda_probe: a.lambda_probe * 1e-9,
            lambda_coupling: a.lambda_coupling * 1e-9,
            mass: a.mass,
            temperature: a.temperature,
        })
    }

    /// Rabi frequency (rad/s) of an optical field.
    pub fn beam_rabi(&self, beam: Beam, dipole: f64) -> Result<f64, CliError> {
        match beam {
            Beam::Rabi { rabi } => Ok(mhz(rabi)),
            Beam::Power { power, waist } => {
                Ok(rabi_from_power(&BeamGeometry::new(power * 1e-3, waist * 1e-6)?, dipole)?)
            }
        }
    }

    /// Drive in rad/s; the local MW is zero when it is left to the optimizer.
    pub fn drive_config(&self) -> Result<DriveConfig, CliError> {
        let d = &self.drive;
        let op = self.beam_rabi(d.probe, self.atom.dipole_probe)?;
        let oc = self.beam_rabi(d.coupling, self.atom.dipole_coupling)?;
        let drive = DriveConfig::resonant(op, oc, mhz(d.local.unwrap_or(0.0)), mhz(d.signal), mhz(d.delta_s))
            .with_detunings(mhz(d.delta_p), mhz(d.delta_c), mhz(d.delta_l));
        drive.validate()?;
        Ok(drive)
    }

    pub fn doppler_spec(&self) -> Result<DopplerSpec, CliError> {
        let spec = if self.doppler.enabled {
            DopplerSpec::new(&self.atom_system()?, self.doppler.nodes)?
        } else {
            DopplerSpec::stationary().with_nodes(self.doppler.nodes)
        };
        let spec = spec.with_quadrature(self.doppler.quadrature).with_propagation(self.doppler.propagation);
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("resolved config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn resolve(text: &str, sets: &[&str]) -> Result<RunConfig, CliError> {
        let mut tree: toml::Table = toml::from_str(text).unwrap();
        for s in sets {
            apply_override(&mut tree, s)?;
        }
        RunConfig::from_tree(tree, RESPONSE_GRID)
    }

    #[test]
    fn defaults_resolve() {
        let c = resolve("", &[]).unwrap();
        assert_eq!(c.drive.coupling, Beam::Rabi { rabi: 17.12 });
        assert_eq!(c.atom.dephasing, 2.76);
        assert_eq!(c.task.grid.points, 121);
        assert!(c.drive.local.is_none());
    }

    #[test]
    fn overrides_and_units() {
        let c = resolve(
            "[drive.probe]\npower = \"404 nW\"\nwaist = 78.66\n",
            &["drive.delta_s=\"2 MHz\"", "task.grid.points=11", "task.bracket=[0.1, \"2 GHz\"]"],
        )
        .unwrap();
        assert_eq!(c.drive.delta_s, 2.0);
        assert_eq!(c.task.grid.points, 11);
        assert_eq!(c.task.bracket, [0.1, 2000.0]);
        let rabi = c.beam_rabi(c.drive.probe, c.atom.dipole_probe).unwrap();
        assert!((superhet::units::to_mhz(rabi) - 5.53).abs() < 0.01 * 5.53);
    }

    #[test]
    fn exactly_one_beam_description() {
        let both = resolve("[drive.coupling]\nrabi = 10\npower = 1\nwaist = 100\n", &[]).unwrap_err();
        assert_eq!(both.exit_code(), 2);
        let half = resolve("[drive.coupling]\npower = 1\n", &[]).unwrap_err();
        assert_eq!(half.exit_code(), 2);
    }

    #[test]
    fn unknown_keys_and_bad_units_rejected() {
        assert_eq!(resolve("[atom]\ngama2 = 6\n", &[]).unwrap_err().exit_code(), 2);
        assert_eq!(resolve("[drive]\nsignal = \"1 parsec\"\n", &[]).unwrap_err().exit_code(), 2);
        assert!(resolve("", &["novalue"]).is_err());
    }

    #[test]
    fn resolved_config_round_trips() {
        let c = resolve("[drive]\nlocal = 14\n", &["task.detector=10"]).unwrap();
        let again = resolve(&c.to_toml(), &[]).unwrap();
        assert_eq!(c, again);
    }
}
