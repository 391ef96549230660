use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use serde::Serialize;
use sma_core::identification::{
    fit_electrical, fit_mechanical, fit_thermal_fast, Dataset, ElectricalData, ElectricalFit, FitConfig, FitReport,
    Manifest, StageTag,
};
use sma_core::{Error, MaterialParams};

#[derive(Serialize)]
struct Report {
    stages: Vec<FitReport>,
    electrical: Option<ElectricalFit>,
    skipped: Vec<String>,
}

fn stage<T>(name: &str, r: Result<T, Error>) -> Result<T, Error> {
    r.map_err(|e| {
        eprintln!("stage {name} failed");
        e
    })
}

fn write_trace(dir: &Path, rep: &FitReport) -> Result<(), Error> {
    let path = dir.join(format!("{}_trace.csv", rep.stage));
    let f = File::create(&path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    rep.write_trace_csv(BufWriter::new(f))
}

/// Slow-test simplex, fast-test thermal simplex, then electrical least squares.
pub fn identify(manifest_path: &Path, out: &Path, max_iters: Option<u64>) -> Result<(), Error> {
    let manifest = Manifest::load(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let p0 = match &manifest.params_file {
        Some(f) => MaterialParams::load(base.join(f))?,
        None => MaterialParams::identified(),
    };
    let all = manifest.datasets(base, &p0)?;
    let pick = |tag: StageTag| -> Vec<Dataset> { all.iter().filter(|(t, _)| *t == tag).map(|(_, d)| d.clone()).collect() };
    let (slow, fast) = (pick(StageTag::Slow), pick(StageTag::Fast));
    std::fs::create_dir_all(out).map_err(|e| Error::Io(format!("{}: {e}", out.display())))?;

    let mut report = Report { stages: Vec::new(), electrical: None, skipped: Vec::new() };
    let mut mech = FitConfig::mechanical();
    if let Some(free) = &manifest.free {
        mech.free = free.clone();
    }
    if let Some(n) = max_iters.or(manifest.max_iters) {
        mech.max_iters = n;
    }
    let (p1, r1) = stage("mechanical", fit_mechanical(&slow, &p0, &mech))?;
    report.stages.push(r1);

    let p2 = if fast.is_empty() {
        report.skipped.push("thermal: no fast datasets".into());
        p1
    } else {
        let mut cfg = FitConfig::thermal();
        if let Some(n) = max_iters.or(manifest.max_iters) {
            cfg.max_iters = n;
        }
        let (p2, r2) = stage("thermal", fit_thermal_fast(&fast, &p1, &cfg))?;
        report.stages.push(r2);
        p2
    };

    let with_r: Vec<&Dataset> = all.iter().map(|(_, d)| d).filter(|d| !d.resistance.is_empty()).collect();
    let p3 = if with_r.is_empty() {
        report.skipped.push("electrical: no resistance measurements".into());
        p2
    } else {
        let data = stage(
            "electrical",
            with_r
                .iter()
                .map(|d| d.simulate(&p2, &mech.solver).map(|s| ElectricalData::from((&s, d.resistance.clone()))))
                .collect::<Result<Vec<_>, Error>>(),
        )?;
        let fit = stage("electrical", fit_electrical(&data, &p2))?;
        report.electrical = Some(fit);
        fit.apply(&p2)
    };

    for rep in &report.stages {
        if let Some(w) = &rep.warning {
            eprintln!("warning: {w}");
        }
        write_trace(out, rep)?;
    }
    p3.save(out.join("identified_params.toml"))?;
    let text = toml::to_string(&report).map_err(|e| Error::Io(e.to_string()))?;
    std::fs::write(out.join("report.toml"), &text)?;
    for rep in &report.stages {
        println!("{}: mean stress FIT {:.3}% after {} iterations", rep.stage, rep.mean_fit_sigma(), rep.iterations);
    }
    if let Some(e) = &report.electrical {
        println!("electrical: residual {:.3e} ohm", e.residual_rms);
    }
    Ok(())
}
