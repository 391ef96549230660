//! Simulation scenarios: strain profile, electrical and thermal inputs,
//! initial condition and solver settings, read from TOML files whose keys
//! carry their units.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hybrid::{HybridModel, HybridState, Mode};
use crate::mas::{MasInit, MasOptions, MasState};
use crate::memory::BranchKind;
use crate::params::MaterialParams;
use crate::rosenbrock::Tolerance;
use crate::signal::{strain_waypoints, DriveInput, Interp, Signal};
use crate::solver::HybridOptions;

/// Largest admissible peak strain.
pub const MAX_STRAIN_LIMIT: f64 = 0.06;

/// Low-power quasi-plastic cycle at 4.5 % strain.
pub const FIG7_LOW_POWER: &str = include_str!("../data/scenarios/fig7_low_power.toml");
/// Pseudoelastic outer loop at 410 mW.
pub const PSEUDOELASTIC_OUTER: &str = include_str!("../data/scenarios/pseudoelastic_outer.toml");
/// Slow three-cycle run at 310 mW.
pub const SLOW_THREE_CYCLES: &str = include_str!("../data/scenarios/slow_three_cycles.toml");

/// Bundled scenarios by name.
pub fn bundled() -> Vec<(&'static str, &'static str)> {
    vec![
        ("fig7_low_power", FIG7_LOW_POWER),
        ("pseudoelastic_outer", PSEUDOELASTIC_OUTER),
        ("slow_three_cycles", SLOW_THREE_CYCLES),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ModelSelect {
    Hybrid,
    Mas,
    #[default]
    Both,
}

/// Strain history of the clamp.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Profile {
    /// Peak strain of a triangular profile.
    pub max_strain: Option<f64>,
    #[serde(default)]
    pub min_strain: f64,
    pub strain_rate_per_s: f64,
    #[serde(default = "one")]
    pub cycles: usize,
    /// Explicit turning points, used instead of the triangle when given.
    pub waypoints: Option<Vec<f64>>,
}

fn one() -> usize {
    1
}

/// Time-scheduled scalar input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedule {
    pub times_s: Vec<f64>,
    pub values: Vec<f64>,
    #[serde(default)]
    pub interp: Interp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thermal {
    #[serde(default)]
    pub power_w: f64,
    pub power_schedule_w: Option<Schedule>,
    #[serde(default = "room")]
    pub env_temperature_k: f64,
    pub env_temperature_schedule_k: Option<Schedule>,
}

fn room() -> f64 {
    298.0
}

impl Default for Thermal {
    fn default() -> Self {
        Self { power_w: 0.0, power_schedule_w: None, env_temperature_k: room(), env_temperature_schedule_k: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct Initial {
    /// Defaults to the first strain of the profile.
    pub strain: Option<f64>,
    /// Defaults to the steady temperature under the initial power.
    pub temperature_k: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSettings {
    #[serde(default = "rtol")]
    pub rtol: f64,
    #[serde(default = "atol")]
    pub atol: f64,
    #[serde(default = "sample")]
    pub sample_period_s: f64,
}

fn rtol() -> f64 {
    1e-6
}
fn atol() -> f64 {
    1e-9
}
fn sample() -> f64 {
    1e-3
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self { rtol: rtol(), atol: atol(), sample_period_s: sample() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct Output {
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub model: ModelSelect,
    /// Parameter file; the bundled identified set when absent.
    pub params_file: Option<PathBuf>,
    pub profile: Profile,
    #[serde(default)]
    pub thermal: Thermal,
    #[serde(default)]
    pub initial: Initial,
    #[serde(default)]
    pub solver: SolverSettings,
    #[serde(default)]
    pub output: Output,
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl Scenario {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let sc: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut sc = Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        // Parameter files are relative to the scenario file.
        if let (Some(file), Some(dir)) = (&sc.params_file, path.parent()) {
            sc.params_file = Some(dir.join(file));
        }
        Ok(sc)
    }

    pub fn bundled(name: &str) -> Result<Self> {
        let (_, text) = bundled()
            .into_iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| invalid(format!("no bundled scenario `{name}`")))?;
        Self::from_toml_str(text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let pr = &self.profile;
        if !(pr.strain_rate_per_s > 0.0) {
            return Err(invalid("profile.strain_rate_per_s must be > 0"));
        }
        if pr.cycles < 1 {
            return Err(invalid("profile.cycles must be >= 1"));
        }
        let points = self.waypoints()?;
        let peak = points.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(peak > 0.0 && peak <= MAX_STRAIN_LIMIT) {
            return Err(invalid(format!("peak strain {peak} outside (0, {MAX_STRAIN_LIMIT}]")));
        }
        if points.iter().any(|&e| e < 0.0) {
            return Err(invalid("strains must be >= 0"));
        }
        if let Some(t) = self.initial.temperature_k {
            if !(t > 0.0) {
                return Err(invalid("initial.temperature_k must be > 0"));
            }
        }
        let s = &self.solver;
        if !(s.rtol > 0.0 && s.atol > 0.0 && s.sample_period_s > 0.0) {
            return Err(invalid("solver tolerances and sample period must be > 0"));
        }
        Ok(())
    }

    /// Turning points of the strain history.
    pub fn waypoints(&self) -> Result<Vec<f64>> {
        let pr = &self.profile;
        match (&pr.waypoints, pr.max_strain) {
            (Some(w), _) => {
                if w.len() < 2 {
                    return Err(invalid("profile.waypoints needs at least two entries"));
                }
                Ok(w.clone())
            }
            (None, Some(max)) => {
                if !(max > pr.min_strain) {
                    return Err(invalid("profile.max_strain must exceed profile.min_strain"));
                }
                let mut w = vec![pr.min_strain];
                for _ in 0..pr.cycles {
                    w.push(max);
                    w.push(pr.min_strain);
                }
                Ok(w)
            }
            (None, None) => Err(invalid("profile needs max_strain or waypoints")),
        }
    }

    pub fn params(&self) -> Result<MaterialParams> {
        match &self.params_file {
            Some(path) => MaterialParams::load(path),
            None => Ok(MaterialParams::identified()),
        }
    }

    /// Drive inputs and duration.
    pub fn drive(&self, p: &MaterialParams) -> Result<(DriveInput, f64)> {
        let (v, t_end) = strain_waypoints(&self.waypoints()?, self.profile.strain_rate_per_s, p.l0)?;
        let th = &self.thermal;
        let sched = |s: &Option<Schedule>, c: f64| -> Result<Signal> {
            match s {
                Some(s) => Signal::new(s.times_s.clone(), s.values.clone(), s.interp),
                None => Ok(Signal::constant(c)),
            }
        };
        let drive = DriveInput::new(
            v,
            sched(&th.power_schedule_w, th.power_w)?,
            sched(&th.env_temperature_schedule_k, th.env_temperature_k)?,
        )?;
        Ok((drive, t_end))
    }

    pub fn initial_strain(&self) -> Result<f64> {
        Ok(self.initial.strain.unwrap_or(self.waypoints()?[0]))
    }

    pub fn initial_temperature(&self, p: &MaterialParams) -> Result<f64> {
        let (drive, _) = self.drive(p)?;
        let u = drive.at(0.0);
        Ok(self.initial.temperature_k.unwrap_or_else(|| p.steady_temperature(u.power, u.t_env)))
    }

    pub fn initial_hybrid(&self, p: &MaterialParams) -> Result<HybridState> {
        HybridState::initial(self.initial_strain()?, self.initial_temperature(p)?, p)
    }

    /// Baseline start sharing the hybrid's phase fraction and memory.
    pub fn initial_mas(&self, p: &MaterialParams) -> Result<MasInit> {
        let h = self.initial_hybrid(p)?;
        let x = HybridModel::new(p).zeta(&h.xc, &h.xd, &h.mem, None)?.x;
        let direction = match h.mode() {
            Mode::MA0 | Mode::MA1 => BranchKind::Unloading,
            _ => BranchKind::Loading,
        };
        Ok(MasInit {
            state: MasState { eps: h.xc.eps, x_m: x, temp: h.xc.temp },
            memory: h.mem,
            direction,
        })
    }

    pub fn tolerance(&self) -> Tolerance {
        Tolerance { rtol: self.solver.rtol, atol: self.solver.atol }
    }

    pub fn hybrid_options(&self) -> HybridOptions {
        HybridOptions { tol: self.tolerance(), sample_dt: self.solver.sample_period_s, ..Default::default() }
    }

    pub fn mas_options(&self) -> MasOptions {
        MasOptions { tol: self.tolerance(), sample_dt: self.solver.sample_period_s, ..Default::default() }
    }
}

/// Triangular scenario with constant inputs, as used in the experiment grid.
pub fn triangular(name: &str, max_strain: f64, rate: f64, cycles: usize, power_w: f64) -> Scenario {
    Scenario {
        name: name.to_string(),
        model: ModelSelect::Both,
        params_file: None,
        profile: Profile { max_strain: Some(max_strain), min_strain: 0.0, strain_rate_per_s: rate, cycles, waypoints: None },
        thermal: Thermal { power_w, ..Default::default() },
        initial: Initial::default(),
        solver: SolverSettings::default(),
        output: Output::default(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_scenarios_validate() {
        for (name, _) in bundled() {
            let sc = Scenario::bundled(name).unwrap();
            assert_eq!(sc.name, name);
        }
    }

    #[test]
    fn round_trip() {
        let sc = Scenario::bundled("fig7_low_power").unwrap();
        let back = Scenario::from_toml_str(&sc.to_toml_string().unwrap()).unwrap();
        assert_eq!(sc, back);
    }

    #[test]
    fn rejects_out_of_range_profiles() {
        let base = "name = \"x\"\n[profile]\nstrain_rate_per_s = 5e-4\n";
        assert!(Scenario::from_toml_str(&format!("{base}max_strain = 0.07\n")).is_err());
        assert!(Scenario::from_toml_str(&format!("{base}max_strain = 0.04\ncycles = 0\n")).is_err());
        assert!(Scenario::from_toml_str("name = \"x\"\n[profile]\nmax_strain = 0.04\nstrain_rate_per_s = 0.0\n").is_err());
        assert!(Scenario::from_toml_str(&format!("{base}max_strain = 0.04\nstrain_rate = 1\n")).is_err());
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = Scenario::from_toml_str("name = \"x\"\n[profile]\nmax_strain = = 1\n").unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }

    #[test]
    fn triangle_duration() {
        let p = MaterialParams::identified();
        let sc = triangular("t", 0.045, 5e-4, 3, 0.31);
        let (_, t_end) = sc.drive(&p).unwrap();
        assert!((t_end - 540.0).abs() < 1e-9);
        assert!((sc.initial_temperature(&p).unwrap() - p.steady_temperature(0.31, 298.0)).abs() < 1e-12);
    }
}
