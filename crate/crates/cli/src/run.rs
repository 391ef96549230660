use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sma_core::compare::{compare_trajectories, CompareSummary};
use sma_core::mas::{simulate_mas, MasTrajectory};
use sma_core::scenario::{ModelSelect, Scenario};
use sma_core::solver::{integrate_hybrid, HybridTrajectory};
use sma_core::Error;

use crate::Common;

#[derive(Serialize)]
struct HybridSummary {
    wall_time_s: f64,
    steps: usize,
    rejected_steps: usize,
    jumps: usize,
    slack_segments: usize,
    flow_violations: usize,
    final_strain: f64,
    final_temperature_k: f64,
    final_mode: String,
}

#[derive(Serialize)]
struct MasSummary {
    wall_time_s: f64,
    steps: usize,
    rejected_steps: usize,
    memory_events: usize,
    final_strain: f64,
    final_temperature_k: f64,
}

#[derive(Serialize)]
struct RunSummary {
    name: String,
    duration_s: f64,
    hybrid: Option<HybridSummary>,
    mas: Option<MasSummary>,
    comparison: Option<CompareSummary>,
}

pub fn output_dir(sc: &Scenario, common: &Common) -> PathBuf {
    common.out.clone().or_else(|| sc.output.dir.clone()).unwrap_or_else(|| PathBuf::from("out"))
}

fn create(path: &Path) -> Result<BufWriter<File>, Error> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn hybrid_summary(h: &HybridTrajectory) -> HybridSummary {
    HybridSummary {
        wall_time_s: h.wall_time,
        steps: h.steps,
        rejected_steps: h.rejected,
        jumps: h.transitions.len(),
        slack_segments: h.slack_segments(),
        flow_violations: h.violations.len(),
        final_strain: h.final_state.xc.eps,
        final_temperature_k: h.final_state.xc.temp,
        final_mode: h.final_state.xd.to_string(),
    }
}

fn mas_summary(m: &MasTrajectory) -> MasSummary {
    MasSummary {
        wall_time_s: m.wall_time,
        steps: m.steps,
        rejected_steps: m.rejected,
        memory_events: m.events.len(),
        final_strain: m.final_state.eps,
        final_temperature_k: m.final_state.temp,
    }
}

/// Run the selected models and write `<name>_hybrid.csv`,
/// `<name>_transitions.csv`, `<name>_mas.csv` and `<name>_summary.toml`.
pub fn run(sc: &Scenario, common: &Common) -> Result<(), Error> {
    let p = sc.params()?;
    let (drive, t_end) = sc.drive(&p)?;
    let dir = output_dir(sc, common);
    std::fs::create_dir_all(&dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    let stem = |suffix: &str| dir.join(format!("{}_{suffix}", sc.name));

    let hybrid = match sc.model {
        ModelSelect::Hybrid | ModelSelect::Both => {
            let h = integrate_hybrid(&sc.initial_hybrid(&p)?, &drive, &p, t_end, &sc.hybrid_options())?;
            h.write_csv(create(&stem("hybrid.csv"))?)?;
            h.write_transitions(create(&stem("transitions.csv"))?)?;
            Some(h)
        }
        ModelSelect::Mas => None,
    };
    let mas = match sc.model {
        ModelSelect::Mas | ModelSelect::Both => {
            let m = simulate_mas(&sc.initial_mas(&p)?, &drive, &p, t_end, &sc.mas_options())?;
            m.write_csv(create(&stem("mas.csv"))?)?;
            Some(m)
        }
        ModelSelect::Hybrid => None,
    };
    let comparison = match (&hybrid, &mas) {
        (Some(h), Some(m)) => Some(compare_trajectories(h, m)?),
        _ => None,
    };
    let summary = RunSummary {
        name: sc.name.clone(),
        duration_s: t_end,
        hybrid: hybrid.as_ref().map(hybrid_summary),
        mas: mas.as_ref().map(mas_summary),
        comparison,
    };
    let text = toml::to_string(&summary).map_err(|e| Error::Io(e.to_string()))?;
    std::fs::write(stem("summary.toml"), &text)?;
    print!("{text}");
    Ok(())
}
