//! Parameter calibration: a simplex search for the thermo-mechanical and
//! outer-loop constants on slow tests, a second simplex for the specific and
//! latent heat on fast tests, and linear least squares for the resistivities.

use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use argmin::core::observers::{Observe, ObserverMode};
use argmin::core::{CostFunction, Executor, State, TerminationReason, TerminationStatus, KV};
use argmin::solver::neldermead::NelderMead;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::constitutive::resistance_geometry;
use crate::error::{Error, Result};
use crate::hybrid::HybridState;
use crate::params::MaterialParams;
use crate::signal::{DriveInput, Signal};
use crate::solver::{integrate_hybrid, HybridOptions, HybridSample};

/// Constants known or set a priori; identification never touches them.
pub const FIXED: [&str; 8] = ["r0", "l0", "rho_V", "nu", "T0", "tau_x", "V_L", "k_B"];
/// Constants tuned on fast tests.
pub const THERMAL: [&str; 2] = ["c_V", "h_M"];
/// Constants fitted by linear least squares.
pub const ELECTRICAL: [&str; 4] = ["rho_eA0", "rho_eM0", "alpha_A", "alpha_M"];
/// Default free set of the slow-test simplex. The interpolator shape
/// constants `lambda_*` and `x0S*` stay frozen.
pub const MECHANICAL_DEFAULT: [&str; 16] = [
    "E_A", "E_M", "eps_T", "lambda_h", "E_AL", "E_AR", "E_AC", "sigma_AB", "E_ML", "E_MR", "E_MC", "sigma_MB",
    "E_SL", "E_SR", "E_SC", "sigma_SB",
];

/// Objective value charged when a candidate cannot be simulated.
const FAILED_OBJECTIVE: f64 = 200.0;

/// Accuracy index in percent: `100 (1 - |y - ŷ| / |y - ȳ|)`, floored at 0.
pub fn fit_index(measured: &[f64], simulated: &[f64]) -> Result<f64> {
    Ok(fit_index_raw(measured, simulated)?.max(0.0))
}

/// Unfloored accuracy index; negative when worse than the mean predictor.
pub fn fit_index_raw(measured: &[f64], simulated: &[f64]) -> Result<f64> {
    if measured.len() != simulated.len() || measured.len() < 2 {
        return Err(Error::Precondition(format!(
            "fit_index needs two series of equal length >= 2 (got {} and {})",
            measured.len(),
            simulated.len()
        )));
    }
    let mean = measured.iter().sum::<f64>() / measured.len() as f64;
    let spread = measured.iter().map(|y| (y - mean).powi(2)).sum::<f64>().sqrt();
    let scale = measured.iter().fold(0.0f64, |m, y| m.max(y.abs()));
    if !(spread > 1e-12 * scale) || spread == 0.0 {
        return Err(Error::DegenerateSignal("measured series is constant".into()));
    }
    let err = measured.iter().zip(simulated).map(|(y, s)| (y - s).powi(2)).sum::<f64>().sqrt();
    Ok(100.0 * (1.0 - err / spread))
}

/// Mutable access to a parameter by its file key.
pub fn param_mut<'a>(p: &'a mut MaterialParams, name: &str) -> Option<&'a mut f64> {
    let o = &mut p.outer;
    Some(match name {
        "r0" => &mut p.r0,
        "l0" => &mut p.l0,
        "E_A" => &mut p.e_a,
        "E_M" => &mut p.e_m,
        "eps_T" => &mut p.eps_t,
        "rho_V" => &mut p.rho_v,
        "c_V" => &mut p.c_v,
        "h_M" => &mut p.h_m,
        "lambda_h" => &mut p.lambda_h,
        "nu" => &mut p.nu,
        "T0" => &mut p.t0,
        "rho_eA0" => &mut p.rho_ea0,
        "rho_eM0" => &mut p.rho_em0,
        "alpha_A" => &mut p.alpha_a,
        "alpha_M" => &mut p.alpha_m,
        "tau_x" => &mut p.tau_x,
        "V_L" => &mut p.v_l,
        "k_B" => &mut p.k_b,
        "E_AL" => &mut o.e_al,
        "E_AR" => &mut o.e_ar,
        "E_AC" => &mut o.e_ac,
        "lambda_AL" => &mut o.lambda_al,
        "lambda_AR" => &mut o.lambda_ar,
        "sigma_AB" => &mut o.sigma_ab,
        "E_ML" => &mut o.e_ml,
        "E_MR" => &mut o.e_mr,
        "E_MC" => &mut o.e_mc,
        "lambda_ML" => &mut o.lambda_ml,
        "lambda_MR" => &mut o.lambda_mr,
        "sigma_MB" => &mut o.sigma_mb,
        "E_SL" => &mut o.e_sl,
        "E_SR" => &mut o.e_sr,
        "E_SC" => &mut o.e_sc,
        "lambda_SL" => &mut o.lambda_sl,
        "lambda_SR" => &mut o.lambda_sr,
        "x0SL" => &mut o.x0_sl,
        "x0SR" => &mut o.x0_sr,
        "sigma_SB" => &mut o.sigma_sb,
        _ => return None,
    })
}

pub fn param(p: &MaterialParams, name: &str) -> Option<f64> {
    let mut q = *p;
    param_mut(&mut q, name).map(|v| *v)
}

fn unknown(name: &str) -> Error {
    Error::Precondition(format!("unknown parameter `{name}`"))
}

/// One experiment: drive inputs, initial condition and measured outputs.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    pub drive: DriveInput,
    pub t_end: f64,
    pub initial_strain: f64,
    /// Steady temperature under the initial inputs when absent.
    pub initial_temperature: Option<f64>,
    pub times: Vec<f64>,
    pub sigma: Vec<f64>,
    /// Measured resistance; may be empty.
    pub resistance: Vec<f64>,
    pub weight: f64,
}

/// Hybrid-model outputs interpolated on a dataset's time stamps.
#[derive(Debug, Clone, Default)]
pub struct Simulated {
    pub eps: Vec<f64>,
    /// Wire strain; differs from `eps` while slack.
    pub eps_eff: Vec<f64>,
    pub x_m: Vec<f64>,
    pub temp: Vec<f64>,
    pub sigma: Vec<f64>,
    pub resistance: Vec<f64>,
}

fn lerp_samples(grid: &[&HybridSample], t: f64, get: impl Fn(&HybridSample) -> f64) -> f64 {
    let k = grid.partition_point(|s| s.t < t);
    if k == 0 {
        return get(grid[0]);
    }
    if k >= grid.len() {
        return get(grid[grid.len() - 1]);
    }
    let (a, b) = (grid[k - 1], grid[k]);
    if b.t - a.t <= 0.0 {
        return get(b);
    }
    let w = (t - a.t) / (b.t - a.t);
    get(a) + w * (get(b) - get(a))
}

impl Dataset {
    pub fn validate(&self) -> Result<()> {
        if self.times.len() < 2 || self.sigma.len() != self.times.len() {
            return Err(Error::Precondition(format!("dataset `{}`: need >= 2 stress samples", self.name)));
        }
        if !self.resistance.is_empty() && self.resistance.len() != self.times.len() {
            return Err(Error::Precondition(format!("dataset `{}`: resistance length mismatch", self.name)));
        }
        if self.times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Precondition(format!("dataset `{}`: times must increase", self.name)));
        }
        if !(self.weight > 0.0) {
            return Err(Error::Precondition(format!("dataset `{}`: weight must be > 0", self.name)));
        }
        Ok(())
    }

    pub fn initial_state(&self, p: &MaterialParams) -> Result<HybridState> {
        let u = self.drive.at(0.0);
        let temp = self.initial_temperature.unwrap_or_else(|| p.steady_temperature(u.power, u.t_env));
        HybridState::initial(self.initial_strain, temp, p)
    }

    /// Simulate the hybrid model with `p` and sample it at `self.times`.
    pub fn simulate(&self, p: &MaterialParams, opts: &HybridOptions) -> Result<Simulated> {
        let init = self.initial_state(p)?;
        let traj = integrate_hybrid(&init, &self.drive, p, self.t_end, opts)?;
        let grid: Vec<&HybridSample> = traj.grid_samples().collect();
        let at = |get: &dyn Fn(&HybridSample) -> f64| -> Vec<f64> {
            self.times.iter().map(|&t| lerp_samples(&grid, t, get)).collect()
        };
        Ok(Simulated {
            eps: at(&|s| s.eps),
            eps_eff: at(&|s| s.eps_eff),
            x_m: at(&|s| s.x_m),
            temp: at(&|s| s.temp),
            sigma: at(&|s| s.sigma),
            resistance: at(&|s| s.resistance),
        })
    }

    /// Replace the measurements by the model response under `p`.
    pub fn synthesize(&mut self, p: &MaterialParams, opts: &HybridOptions) -> Result<Simulated> {
        let sim = self.simulate(p, opts)?;
        self.sigma = sim.sigma.clone();
        self.resistance = sim.resistance.clone();
        Ok(sim)
    }
}

/// Settings of one simplex stage.
#[derive(Debug, Clone)]
pub struct FitConfig {
    /// Keys of the free parameters.
    pub free: Vec<String>,
    pub max_iters: u64,
    /// Initial simplex edge in log-scale units.
    pub initial_step: f64,
    /// Stop when the standard deviation of the simplex costs drops below this.
    pub sd_tolerance: f64,
    pub solver: HybridOptions,
    /// Simulate datasets on separate threads.
    pub parallel: bool,
}

impl FitConfig {
    pub fn mechanical() -> Self {
        Self {
            free: MECHANICAL_DEFAULT.iter().map(|s| s.to_string()).collect(),
            max_iters: 2000,
            initial_step: 0.1,
            sd_tolerance: 1e-6,
            solver: HybridOptions { sample_dt: 1e-2, ..Default::default() },
            parallel: true,
        }
    }

    pub fn thermal() -> Self {
        Self { free: THERMAL.iter().map(|s| s.to_string()).collect(), max_iters: 500, ..Self::mechanical() }
    }

    pub fn with_free(mut self, free: &[&str]) -> Self {
        self.free = free.iter().map(|s| s.to_string()).collect();
        self
    }
}

/// Outcome of one calibration stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub stage: String,
    pub names: Vec<String>,
    pub before: Vec<f64>,
    pub after: Vec<f64>,
    /// Stress FIT per dataset at the final parameters [%].
    pub fit_sigma: Vec<f64>,
    /// Resistance FIT per dataset, when measured [%].
    pub fit_resistance: Vec<Option<f64>>,
    /// Best objective after each simplex iteration.
    pub objective_trace: Vec<f64>,
    pub iterations: u64,
    pub converged: bool,
    pub warning: Option<String>,
}

impl FitReport {
    pub fn mean_fit_sigma(&self) -> f64 {
        self.fit_sigma.iter().sum::<f64>() / self.fit_sigma.len().max(1) as f64
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn write_trace_csv(&self, w: impl std::io::Write) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["iteration", "objective"]).map_err(csv_err)?;
        for (k, v) in self.objective_trace.iter().enumerate() {
            wr.write_record([k.to_string(), v.to_string()]).map_err(csv_err)?;
        }
        wr.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

struct Objective<'a> {
    datasets: &'a [Dataset],
    base: MaterialParams,
    names: &'a [String],
    origin: Vec<f64>,
    opts: HybridOptions,
    parallel: bool,
}

impl Objective<'_> {
    fn params(&self, z: &[f64]) -> MaterialParams {
        let mut p = self.base;
        for ((name, &v0), &zi) in self.names.iter().zip(&self.origin).zip(z) {
            // Names were checked when the objective was built.
            *param_mut(&mut p, name).unwrap() = v0 * zi.exp();
        }
        p
    }

    fn fits(&self, p: &MaterialParams) -> Vec<Result<(f64, Option<f64>)>> {
        let one = |d: &Dataset| -> Result<(f64, Option<f64>)> {
            let sim = d.simulate(p, &self.opts)?;
            let fs = fit_index(&d.sigma, &sim.sigma)?;
            let fr = if d.resistance.is_empty() { None } else { Some(fit_index(&d.resistance, &sim.resistance)?) };
            Ok((fs, fr))
        };
        if self.parallel && self.datasets.len() > 1 {
            std::thread::scope(|s| {
                let handles: Vec<_> = self.datasets.iter().map(|d| s.spawn(move || one(d))).collect();
                handles
                    .into_iter()
                    .map(|h| h.join().unwrap_or_else(|_| Err(Error::Precondition("worker panicked".into()))))
                    .collect()
            })
        } else {
            self.datasets.iter().map(one).collect()
        }
    }

    fn value(&self, p: &MaterialParams) -> f64 {
        if p.validate().is_err() {
            return FAILED_OBJECTIVE;
        }
        let total: f64 = self.datasets.iter().map(|d| d.weight).sum();
        let mut acc = 0.0;
        for (d, r) in self.datasets.iter().zip(self.fits(p)) {
            acc += d.weight * r.map(|(fs, _)| 100.0 - fs).unwrap_or(FAILED_OBJECTIVE);
        }
        acc / total
    }
}

impl CostFunction for Objective<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, z: &Vec<f64>) -> std::result::Result<f64, argmin::core::Error> {
        Ok(self.value(&self.params(z)))
    }
}

struct Trace(Arc<Mutex<Vec<f64>>>);

impl<I: State<Float = f64>> Observe<I> for Trace {
    fn observe_iter(&mut self, state: &I, _kv: &KV) -> std::result::Result<(), argmin::core::Error> {
        if let Ok(mut t) = self.0.lock() {
            t.push(state.get_best_cost());
        }
        Ok(())
    }
}

fn check_free(names: &[String], forbidden: &[&str], stage: &str) -> Result<()> {
    if names.is_empty() {
        return Err(Error::Precondition(format!("{stage}: no free parameters")));
    }
    for n in names {
        if FIXED.contains(&n.as_str()) || forbidden.contains(&n.as_str()) {
            return Err(Error::Precondition(format!("{stage}: `{n}` cannot be fitted in this stage")));
        }
        if param(&MaterialParams::identified(), n).is_none() {
            return Err(unknown(n));
        }
    }
    Ok(())
}

fn simplex_fit(stage: &str, datasets: &[Dataset], p0: &MaterialParams, config: &FitConfig) -> Result<(MaterialParams, FitReport)> {
    if datasets.is_empty() {
        return Err(Error::Precondition(format!("{stage}: empty dataset list")));
    }
    for d in datasets {
        d.validate()?;
    }
    p0.validate()?;
    let names = &config.free;
    let origin: Vec<f64> = names.iter().map(|n| param(p0, n).ok_or_else(|| unknown(n))).collect::<Result<_>>()?;
    if let Some((n, _)) = names.iter().zip(&origin).find(|(_, v)| **v == 0.0) {
        return Err(Error::Precondition(format!("{stage}: `{n}` is zero and cannot be scaled")));
    }
    let obj = Objective {
        datasets,
        base: *p0,
        names,
        origin: origin.clone(),
        opts: config.solver,
        parallel: config.parallel,
    };
    let n = names.len();
    let mut simplex = vec![vec![0.0; n]];
    for i in 0..n {
        let mut v = vec![0.0; n];
        v[i] = config.initial_step;
        simplex.push(v);
    }
    let solver = NelderMead::new(simplex)
        .with_sd_tolerance(config.sd_tolerance)
        .map_err(|e| Error::Precondition(e.to_string()))?;
    let trace = Arc::new(Mutex::new(Vec::new()));
    let res = Executor::new(obj, solver)
        .configure(|s| s.max_iters(config.max_iters))
        .add_observer(Trace(trace.clone()), ObserverMode::Always)
        .run()
        .map_err(|e| Error::SolverFailure { t: 0.0, reason: e.to_string() })?;
    let state = res.state();
    let best = state.get_best_param().cloned().unwrap_or_else(|| vec![0.0; n]);
    let iterations = state.get_iter();
    let converged = matches!(state.get_termination_status(), TerminationStatus::Terminated(TerminationReason::SolverConverged));
    let obj = &res.problem.problem.as_ref().expect("problem is returned by the executor");
    let p = obj.params(&best);
    let mut fit_sigma = Vec::new();
    let mut fit_resistance = Vec::new();
    for r in obj.fits(&p) {
        let (fs, fr) = r?;
        fit_sigma.push(fs);
        fit_resistance.push(fr);
    }
    let objective_trace = trace.lock().map(|t| t.clone()).unwrap_or_default();
    Ok((
        p,
        FitReport {
            stage: stage.to_string(),
            names: names.clone(),
            before: origin,
            after: names.iter().map(|nm| param(&p, nm).unwrap_or(f64::NAN)).collect(),
            fit_sigma,
            fit_resistance,
            objective_trace,
            iterations,
            converged,
            warning: (!converged).then(|| format!("{stage}: no convergence after {iterations} iterations; best-so-far returned")),
        },
    ))
}

/// Simplex fit of the thermo-mechanical and outer-loop constants on slow tests.
pub fn fit_mechanical(datasets: &[Dataset], p0: &MaterialParams, config: &FitConfig) -> Result<(MaterialParams, FitReport)> {
    let mut forbidden: Vec<&str> = THERMAL.to_vec();
    forbidden.extend(ELECTRICAL);
    check_free(&config.free, &forbidden, "mechanical")?;
    simplex_fit("mechanical", datasets, p0, config)
}

/// Simplex fit of `c_V` and `h_M` on fast tests.
pub fn fit_thermal_fast(datasets: &[Dataset], p: &MaterialParams, config: &FitConfig) -> Result<(MaterialParams, FitReport)> {
    if let Some(n) = config.free.iter().find(|n| !THERMAL.contains(&n.as_str())) {
        return Err(Error::Precondition(format!("thermal: `{n}` is not a thermal constant")));
    }
    check_free(&config.free, &[], "thermal")?;
    simplex_fit("thermal", datasets, p, config)
}

/// Known state trajectory with a measured resistance.
#[derive(Debug, Clone, Default)]
pub struct ElectricalData {
    /// Wire strain (the effective strain while slack).
    pub eps: Vec<f64>,
    pub x_m: Vec<f64>,
    pub temp: Vec<f64>,
    pub resistance: Vec<f64>,
}

impl From<(&Simulated, Vec<f64>)> for ElectricalData {
    fn from((s, r): (&Simulated, Vec<f64>)) -> Self {
        Self { eps: s.eps_eff.clone(), x_m: s.x_m.clone(), temp: s.temp.clone(), resistance: r }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElectricalFit {
    pub rho_ea0: f64,
    pub rho_em0: f64,
    pub alpha_a: f64,
    pub alpha_m: f64,
    /// RMS of the resistance residual [Ω].
    pub residual_rms: f64,
}

impl ElectricalFit {
    pub fn apply(&self, p: &MaterialParams) -> MaterialParams {
        MaterialParams {
            rho_ea0: self.rho_ea0,
            rho_em0: self.rho_em0,
            alpha_a: self.alpha_a,
            alpha_m: self.alpha_m,
            ..*p
        }
    }
}

/// Relative singular-value threshold below which a direction is unobservable.
const RANK_TOL: f64 = 1e-9;

/// Least-squares resistivities. Dividing the resistance by its geometric
/// factor leaves a model linear in `rho_A0`, `rho_M0`, `rho_A0 alpha_A` and
/// `rho_M0 alpha_M`.
pub fn fit_electrical(datasets: &[ElectricalData], p: &MaterialParams) -> Result<ElectricalFit> {
    let rows: usize = datasets.iter().map(|d| d.resistance.len()).sum();
    if rows == 0 {
        return Err(Error::Precondition("electrical: no samples".into()));
    }
    let mut a = DMatrix::zeros(rows, 4);
    let mut b = DVector::zeros(rows);
    let mut geo = Vec::with_capacity(rows);
    let mut i = 0;
    for d in datasets {
        let n = d.resistance.len();
        if d.eps.len() != n || d.x_m.len() != n || d.temp.len() != n {
            return Err(Error::Precondition("electrical: trajectory length mismatch".into()));
        }
        for k in 0..n {
            let g = resistance_geometry(d.eps[k], p)?;
            let (x, dt) = (d.x_m[k], d.temp[k] - p.t0);
            a[(i, 0)] = 1.0 - x;
            a[(i, 1)] = x;
            a[(i, 2)] = (1.0 - x) * dt;
            a[(i, 3)] = x * dt;
            b[i] = d.resistance[k] / g;
            geo.push(g);
            i += 1;
        }
    }
    // Scale columns so the rank test does not depend on units.
    let scales: Vec<f64> = (0..4).map(|j| a.column(j).norm()).collect();
    let smax = scales.iter().copied().fold(0.0, f64::max);
    let mut scaled = a.clone();
    for j in 0..4 {
        if scales[j] > 1e-300 * smax.max(1e-300) && scales[j] > 0.0 {
            scaled.column_mut(j).scale_mut(1.0 / scales[j]);
        }
    }
    let svd = scaled.clone().svd(true, true);
    let sv = &svd.singular_values;
    let top = sv.max();
    let rank = sv.iter().filter(|&&s| s > RANK_TOL * top).count();
    if rank < 4 || scales.iter().any(|&s| s == 0.0) {
        let reason = if scales[1] == 0.0 || scales[3] == 0.0 {
            "no martensite in the data".to_string()
        } else if scales[0] == 0.0 || scales[2] == 0.0 {
            "no austenite in the data".to_string()
        } else {
            "temperature and phase fraction are not independently excited".to_string()
        };
        return Err(Error::RankDeficient { rank: rank.min(scales.iter().filter(|&&s| s > 0.0).count()), cols: 4, reason });
    }
    let theta = svd.solve(&b, RANK_TOL * top).map_err(|e| Error::Precondition(e.to_string()))?;
    let theta: Vec<f64> = (0..4).map(|j| theta[j] / scales[j]).collect();
    let fitted = &a * DVector::from_column_slice(&theta);
    let residual_rms = ((0..rows).map(|k| ((fitted[k] - b[k]) * geo[k]).powi(2)).sum::<f64>() / rows as f64).sqrt();
    Ok(ElectricalFit {
        rho_ea0: theta[0],
        rho_em0: theta[1],
        alpha_a: theta[2] / theta[0],
        alpha_m: theta[3] / theta[1],
        residual_rms,
    })
}

/// One entry of a dataset manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub name: Option<String>,
    /// CSV with columns `t, strain, power_w, env_temperature_k`.
    pub drive: PathBuf,
    /// CSV with columns `t, sigma` and optionally `R`.
    pub measurement: PathBuf,
    #[serde(default = "unit")]
    pub weight: f64,
    /// `slow` entries feed the mechanical stage, `fast` ones the thermal stage.
    #[serde(default)]
    pub stage: StageTag,
    pub initial_temperature_k: Option<f64>,
}

fn unit() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StageTag {
    #[default]
    Slow,
    Fast,
}

/// List of experiments to calibrate against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    /// Starting parameter file; the bundled set when absent.
    pub params_file: Option<PathBuf>,
    /// Free parameters of the mechanical stage; the default mask when absent.
    pub free: Option<Vec<String>>,
    pub max_iters: Option<u64>,
    #[serde(rename = "dataset")]
    pub datasets: Vec<ManifestEntry>,
}

#[derive(Debug, Deserialize)]
struct DriveRow {
    t: f64,
    strain: f64,
    power_w: f64,
    env_temperature_k: f64,
}

#[derive(Debug, Deserialize)]
struct MeasRow {
    t: f64,
    sigma: f64,
    #[serde(rename = "R")]
    r: Option<f64>,
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    rd.deserialize()
        .enumerate()
        .map(|(k, r)| r.map_err(|e| Error::Config(format!("{} line {}: {e}", path.display(), k + 2))))
        .collect()
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let m: Self = toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if m.datasets.is_empty() {
            return Err(Error::Config(format!("{}: no [[dataset]] entries", path.display())));
        }
        Ok(m)
    }

    /// Read every dataset, resolving paths against `base`.
    pub fn datasets(&self, base: &Path, p: &MaterialParams) -> Result<Vec<(StageTag, Dataset)>> {
        self.datasets
            .iter()
            .enumerate()
            .map(|(k, e)| {
                let drive: Vec<DriveRow> = read_rows(&base.join(&e.drive))?;
                let meas: Vec<MeasRow> = read_rows(&base.join(&e.measurement))?;
                let name = e.name.clone().unwrap_or_else(|| format!("dataset{k}"));
                Ok((e.stage, dataset_from_rows(name, &drive, &meas, e, p)?))
            })
            .collect()
    }
}

fn dataset_from_rows(name: String, drive: &[DriveRow], meas: &[MeasRow], e: &ManifestEntry, p: &MaterialParams) -> Result<Dataset> {
    if drive.len() < 2 {
        return Err(Error::Config(format!("{name}: drive needs at least two rows")));
    }
    let times: Vec<f64> = drive.iter().map(|r| r.t).collect();
    if times[0] != 0.0 {
        return Err(Error::Config(format!("{name}: drive must start at t = 0")));
    }
    // Piecewise-linear strain gives a piecewise-constant clamp velocity.
    let mut vel: Vec<f64> = drive.windows(2).map(|w| p.l0 * (w[1].strain - w[0].strain) / (w[1].t - w[0].t)).collect();
    vel.push(*vel.last().unwrap_or(&0.0));
    let v = Signal::step(times.clone(), vel)?;
    let power = Signal::linear(times.clone(), drive.iter().map(|r| r.power_w).collect())?;
    let env = Signal::linear(times.clone(), drive.iter().map(|r| r.env_temperature_k).collect())?;
    let has_r = meas.iter().all(|m| m.r.is_some());
    let ds = Dataset {
        name,
        drive: DriveInput::new(v, power, env)?,
        t_end: times[times.len() - 1],
        initial_strain: drive[0].strain,
        initial_temperature: e.initial_temperature_k,
        times: meas.iter().map(|m| m.t).collect(),
        sigma: meas.iter().map(|m| m.sigma).collect(),
        resistance: if has_r { meas.iter().filter_map(|m| m.r).collect() } else { Vec::new() },
        weight: e.weight,
    };
    ds.validate()?;
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::Triangle;
    use approx::assert_relative_eq;

    fn dataset(p: &MaterialParams, power: f64, rate: f64) -> Dataset {
        let tri = Triangle { eps_min: 0.0, eps_max: 0.045, rate, cycles: 1 };
        let (v, t_end) = tri.velocity(p.l0).unwrap();
        let n = 200;
        let mut d = Dataset {
            name: "syn".into(),
            drive: DriveInput::new(v, Signal::constant(power), Signal::constant(298.0)).unwrap(),
            t_end,
            initial_strain: 0.0,
            initial_temperature: None,
            times: (0..=n).map(|k| t_end * k as f64 / n as f64).collect(),
            sigma: vec![],
            resistance: vec![],
            weight: 1.0,
        };
        d.synthesize(p, &FitConfig::mechanical().solver).unwrap();
        d
    }

    #[test]
    fn fit_index_examples() {
        let y = [1.0, 2.0, 4.0, 3.0];
        assert_eq!(fit_index(&y, &y).unwrap(), 100.0);
        let mean = [2.5; 4];
        assert!(fit_index(&y, &mean).unwrap().abs() < 1e-12);
        let bad = [10.0, -5.0, 0.0, 9.0];
        assert!(fit_index_raw(&y, &bad).unwrap() < 0.0);
        assert_eq!(fit_index(&y, &bad).unwrap(), 0.0);
        assert!(matches!(fit_index(&[1.0, 1.0], &[1.0, 2.0]), Err(Error::DegenerateSignal(_))));
        assert!(fit_index(&[1.0], &[1.0]).is_err());
        assert!(fit_index(&y, &y[..3]).is_err());
    }

    #[test]
    fn parameter_table_covers_file_keys() {
        let p = MaterialParams::identified();
        let text = p.to_toml_string();
        let table: toml::Table = toml::from_str(&text).unwrap();
        for (k, v) in table {
            assert_eq!(param(&p, &k), v.as_float(), "{k}");
        }
    }

    #[test]
    fn stage_guards() {
        let p = MaterialParams::identified();
        assert!(fit_mechanical(&[], &p, &FitConfig::mechanical()).is_err());
        assert!(fit_thermal_fast(&[], &p, &FitConfig::thermal()).is_err());
        let d = dataset(&p, 0.41, 5e-3);
        for bad in [&["l0"][..], &["c_V"], &["alpha_M"], &["nonsense"]] {
            assert!(fit_mechanical(std::slice::from_ref(&d), &p, &FitConfig::mechanical().with_free(bad)).is_err());
        }
        assert!(fit_thermal_fast(std::slice::from_ref(&d), &p, &FitConfig::thermal().with_free(&["E_A"])).is_err());
    }

    #[test]
    fn thermal_identity_on_own_data() {
        let p = MaterialParams::identified();
        let d = dataset(&p, 0.41, 5e-3);
        let cfg = FitConfig { max_iters: 30, ..FitConfig::thermal() };
        let (q, rep) = fit_thermal_fast(&[d], &p, &cfg).unwrap();
        assert!(rep.mean_fit_sigma() > 99.9);
        assert_relative_eq!(q.c_v, p.c_v, max_relative = 1e-2);
        assert!(rep.objective_trace.windows(2).all(|w| w[1] <= w[0]));
        for n in FIXED {
            assert_eq!(param(&q, n), param(&p, n));
        }
    }

    #[test]
    fn electrical_exact_and_rank_deficient() {
        let p = MaterialParams::identified();
        let n = 50;
        let mk = |xs: &dyn Fn(usize) -> f64| {
            let mut d = ElectricalData::default();
            for k in 0..n {
                let (e, x, t) = (0.01 * k as f64 / n as f64, xs(k), 300.0 + k as f64);
                d.eps.push(e);
                d.x_m.push(x);
                d.temp.push(t);
                d.resistance.push(crate::constitutive::resistance(e, x, t, &p).unwrap());
            }
            d
        };
        let mixed = mk(&|k| (k as f64 * 0.37).sin().abs());
        let fit = fit_electrical(&[mixed], &p).unwrap();
        assert_relative_eq!(fit.rho_ea0, p.rho_ea0, max_relative = 1e-9);
        assert_relative_eq!(fit.rho_em0, p.rho_em0, max_relative = 1e-9);
        assert_relative_eq!(fit.alpha_m, p.alpha_m, max_relative = 1e-7);
        assert!(fit.alpha_a.abs() < 1e-10);
        let austenite = mk(&|_| 0.0);
        assert!(matches!(fit_electrical(&[austenite], &p), Err(Error::RankDeficient { .. })));
    }
}
