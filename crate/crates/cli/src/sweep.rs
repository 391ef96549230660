use std::io::Write;
use std::path::PathBuf;

use clap::Args;
use rayon::prelude::*;
use serde::Deserialize;
use sma_core::compare::compare_trajectories;
use sma_core::mas::simulate_mas;
use sma_core::scenario::{triangular, Scenario};
use sma_core::solver::integrate_hybrid;
use sma_core::{Error, MaterialParams};

use crate::Common;

/// Strains, rates and powers of the full experiment campaign.
pub const CAMPAIGN_STRAINS: [f64; 5] = [0.005, 0.015, 0.025, 0.035, 0.045];
pub const CAMPAIGN_RATES: [f64; 3] = [0.5e-3, 1e-3, 5e-3];
pub const CAMPAIGN_POWERS: [f64; 4] = [0.5e-3, 0.31, 0.36, 0.41];

const SWEEP_SAMPLE_PERIOD: f64 = 1e-2;

#[derive(Args, Debug)]
pub struct SweepArgs {
    /// Grid file with `max_strain`, `strain_rate_per_s`, `power_w` lists.
    #[arg(long)]
    pub grid: Option<PathBuf>,
    /// Use the 5 x 3 x 4 campaign grid.
    #[arg(long, conflicts_with = "grid")]
    pub campaign_grid: bool,
    /// Peak strains (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub max_strain: Vec<f64>,
    /// Strain rates [1/s] (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub strain_rate_per_s: Vec<f64>,
    /// Electrical powers [W] (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub power_w: Vec<f64>,
    #[arg(long, default_value_t = 3)]
    pub cycles: usize,
    /// Parameter file; the bundled identified set when absent.
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Worker threads (defaults to all cores).
    #[arg(short, long)]
    pub workers: Option<usize>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridFile {
    max_strain: Vec<f64>,
    strain_rate_per_s: Vec<f64>,
    power_w: Vec<f64>,
    cycles: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub max_strain: f64,
    pub power_w: f64,
    pub rate: f64,
    pub cycles: usize,
}

#[derive(Debug, Clone, Default)]
pub struct Row {
    pub time_hybrid: Option<f64>,
    pub time_mas: Option<f64>,
    pub fit_sigma: Option<f64>,
    pub fit_resistance: Option<f64>,
    pub note: String,
}

fn grid(args: &SweepArgs) -> Result<Vec<Cell>, Error> {
    let (strains, rates, powers, cycles) = if args.campaign_grid {
        (CAMPAIGN_STRAINS.to_vec(), CAMPAIGN_RATES.to_vec(), CAMPAIGN_POWERS.to_vec(), args.cycles)
    } else if let Some(path) = &args.grid {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let g: GridFile = toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        (g.max_strain, g.strain_rate_per_s, g.power_w, g.cycles.unwrap_or(args.cycles))
    } else {
        (args.max_strain.clone(), args.strain_rate_per_s.clone(), args.power_w.clone(), args.cycles)
    };
    if strains.is_empty() || rates.is_empty() || powers.is_empty() {
        return Err(Error::Config("empty grid: give --campaign-grid, --grid FILE or all three value lists".into()));
    }
    // Table order: strain, then power, then rate.
    let mut cells = Vec::new();
    for &max_strain in &strains {
        for &power_w in &powers {
            for &rate in &rates {
                cells.push(Cell { max_strain, power_w, rate, cycles });
            }
        }
    }
    Ok(cells)
}

fn scenario(cell: &Cell, common: &Common) -> Result<Scenario, Error> {
    let mut sc = triangular("cell", cell.max_strain, cell.rate, cell.cycles, cell.power_w);
    sc.solver.sample_period_s = SWEEP_SAMPLE_PERIOD;
    common.apply(&mut sc)?;
    Ok(sc)
}

/// Compare both models on one cell. Failures are reported in the row.
pub fn run_cell(cell: &Cell, p: &MaterialParams, common: &Common) -> Row {
    let mut row = Row::default();
    let sc = match scenario(cell, common) {
        Ok(sc) => sc,
        Err(e) => {
            row.note = format!("invalid: {e}");
            return row;
        }
    };
    let setup = sc.drive(p).and_then(|(d, t)| Ok((d, t, sc.initial_hybrid(p)?, sc.initial_mas(p)?)));
    let (drive, t_end, h0, m0) = match setup {
        Ok(s) => s,
        Err(e) => {
            row.note = format!("setup: {e}");
            return row;
        }
    };
    let hybrid = match integrate_hybrid(&h0, &drive, p, t_end, &sc.hybrid_options()) {
        Ok(h) => h,
        Err(e) => {
            row.note = format!("hybrid: {e}");
            return row;
        }
    };
    row.time_hybrid = Some(hybrid.wall_time);
    if hybrid.always_slack() {
        row.note = "always slack".into();
        return row;
    }
    let mas = match simulate_mas(&m0, &drive, p, t_end, &sc.mas_options()) {
        Ok(m) => m,
        Err(e) => {
            row.note = format!("mas: {e}");
            return row;
        }
    };
    row.time_mas = Some(mas.wall_time);
    match compare_trajectories(&hybrid, &mas) {
        Ok(s) => {
            row.fit_sigma = Some(s.fit_sigma);
            row.fit_resistance = Some(s.fit_resistance);
        }
        Err(e) => row.note = format!("compare: {e}"),
    }
    row
}

/// Fixed-point with trailing zeros removed.
fn num(x: f64) -> String {
    let s = format!("{x:.6}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn opt(v: Option<f64>, digits: usize) -> String {
    v.map(|x| format!("{x:.digits$}")).unwrap_or_default()
}

pub fn write_table(mut w: impl Write, cells: &[Cell], rows: &[Row]) -> std::io::Result<()> {
    writeln!(w, "max_strain_pct,power_mw,strain_rate_1e-3_per_s,time_hybrid_s,time_mas_s,fit_sigma_pct,fit_r_pct,note")?;
    for (c, r) in cells.iter().zip(rows) {
        let note = r.note.replace('"', "'");
        writeln!(
            w,
            "{},{},{},{},{},{},{},\"{}\"",
            num(c.max_strain * 100.0),
            num(c.power_w * 1e3),
            num(c.rate * 1e3),
            opt(r.time_hybrid, 4),
            opt(r.time_mas, 4),
            opt(r.fit_sigma, 2),
            opt(r.fit_resistance, 2),
            note
        )?;
    }
    Ok(())
}

pub fn sweep(args: &SweepArgs) -> Result<(), Error> {
    let cells = grid(args)?;
    let p = match &args.params {
        Some(path) => MaterialParams::load(path)?,
        None => MaterialParams::identified(),
    };
    // Reject bad overrides before spending time on the grid.
    scenario(&cells[0], &args.common)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = args.workers {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| Error::Config(e.to_string()))?;
    let rows: Vec<Row> = pool.install(|| cells.par_iter().map(|c| run_cell(c, &p, &args.common)).collect());
    let dir = args.common.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    let path = dir.join("sweep.csv");
    let mut buf = Vec::new();
    write_table(&mut buf, &cells, &rows)?;
    std::fs::write(&path, &buf).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    std::io::stdout().write_all(&buf)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::Parser;

    #[derive(Parser)]
    struct Wrap {
        #[command(flatten)]
        args: SweepArgs,
    }

    fn args(a: &[&str]) -> SweepArgs {
        Wrap::parse_from(std::iter::once("sweep").chain(a.iter().copied())).args
    }

    #[test]
    fn campaign_grid_has_sixty_cells() {
        let cells = grid(&args(&["--campaign-grid"])).unwrap();
        assert_eq!(cells.len(), 60);
        assert!(cells.iter().all(|c| c.cycles == 3));
        assert_eq!(cells[0], Cell { max_strain: 0.005, power_w: 0.5e-3, rate: 0.5e-3, cycles: 3 });
    }

    #[test]
    fn list_grid_and_guard() {
        let cells = grid(&args(&["--max-strain", "0.01,0.02", "--strain-rate-per-s", "1e-3", "--power-w", "0.3,0.4"])).unwrap();
        assert_eq!(cells.len(), 4);
        assert!(grid(&args(&["--max-strain", "0.01"])).is_err());
    }

    #[test]
    fn numbers_are_trimmed() {
        assert_eq!(num(0.035 * 100.0), "3.5");
        assert_eq!(num(410.0), "410");
        assert_eq!(num(0.5), "0.5");
    }

    #[test]
    fn empty_cells_render_blank() {
        let mut buf = Vec::new();
        let cell = Cell { max_strain: 0.005, power_w: 0.5e-3, rate: 5e-3, cycles: 1 };
        let row = Row { time_hybrid: Some(0.01), note: "always slack".into(), ..Row::default() };
        write_table(&mut buf, &[cell], &[row]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().nth(1).unwrap(), "0.5,0.5,5,0.0100,,,,\"always slack\"");
    }
}
