//! Side-by-side runs of the hybrid model and the baseline on one scenario.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::identification::fit_index;
use crate::mas::{simulate_mas, MasTrajectory};
use crate::params::MaterialParams;
use crate::scenario::Scenario;
use crate::solver::{integrate_hybrid, HybridTrajectory};

#[derive(Debug, Clone, Serialize)]
pub struct CompareSummary {
    /// Stress FIT of the hybrid output against the baseline [%].
    pub fit_sigma: f64,
    /// Resistance FIT of the hybrid output against the baseline [%].
    pub fit_resistance: f64,
    pub wall_time_hybrid: f64,
    pub wall_time_mas: f64,
    /// Baseline over hybrid wall time.
    pub speedup: f64,
    pub final_strain_gap: f64,
    pub final_temperature_gap: f64,
    pub jumps: usize,
}

#[derive(Debug, Clone)]
pub struct CompareReport {
    pub summary: CompareSummary,
    pub hybrid: HybridTrajectory,
    pub mas: MasTrajectory,
}

/// Run both models on the scenario's drive and compare them on the common
/// output grid.
pub fn compare_models(scenario: &Scenario, p: &MaterialParams) -> Result<CompareReport> {
    let (drive, t_end) = scenario.drive(p)?;
    let hybrid = integrate_hybrid(&scenario.initial_hybrid(p)?, &drive, p, t_end, &scenario.hybrid_options())?;
    let mas = simulate_mas(&scenario.initial_mas(p)?, &drive, p, t_end, &scenario.mas_options())?;
    let summary = compare_trajectories(&hybrid, &mas)?;
    Ok(CompareReport { summary, hybrid, mas })
}

/// FIT of the hybrid outputs against the baseline ones, sample by sample.
pub fn compare_trajectories(hybrid: &HybridTrajectory, mas: &MasTrajectory) -> Result<CompareSummary> {
    let grid: Vec<_> = hybrid.grid_samples().collect();
    if grid.len() != mas.samples.len() {
        return Err(Error::Precondition(format!(
            "output grids differ ({} hybrid vs {} baseline samples)",
            grid.len(),
            mas.samples.len()
        )));
    }
    let ms: Vec<f64> = mas.samples.iter().map(|s| s.sigma).collect();
    let hs: Vec<f64> = grid.iter().map(|s| s.sigma).collect();
    let mr: Vec<f64> = mas.samples.iter().map(|s| s.resistance).collect();
    let hr: Vec<f64> = grid.iter().map(|s| s.resistance).collect();
    let hf = hybrid.final_state.xc;
    let mf = mas.final_state;
    Ok(CompareSummary {
        fit_sigma: fit_index(&ms, &hs)?,
        fit_resistance: fit_index(&mr, &hr)?,
        wall_time_hybrid: hybrid.wall_time,
        wall_time_mas: mas.wall_time,
        speedup: mas.wall_time / hybrid.wall_time.max(f64::MIN_POSITIVE),
        final_strain_gap: (hf.eps - mf.eps).abs(),
        final_temperature_gap: (hf.temp - mf.temp).abs(),
        jumps: hybrid.transitions.len(),
    })
}
