use std::path::Path;
use std::process::{Command, Output};

use sma_core::identification::Manifest;
use sma_core::MaterialParams;

fn sma(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sma")).args(args).current_dir(dir).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn low_power_run_reports_slack() {
    let tmp = tempfile::tempdir().unwrap();
    let o = sma(&["run", "--bundled", "fig7_low_power", "--out", "res"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let res = tmp.path().join("res");
    let csv = std::fs::read_to_string(res.join("fig7_low_power_hybrid.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "t,j,eps,T,q,s,n_l,x_M,sigma,f,R,eps_eff");
    assert!(res.join("fig7_low_power_transitions.csv").exists());
    let summary: toml::Table = toml::from_str(&std::fs::read_to_string(res.join("fig7_low_power_summary.toml")).unwrap()).unwrap();
    assert!(summary["hybrid"]["slack_segments"].as_integer().unwrap() >= 1);
    // Slack rows carry zero force.
    for line in csv.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        if f[5] == "1" {
            assert_eq!(f[9].parse::<f64>().unwrap(), 0.0);
        }
    }
}

#[test]
fn malformed_scenario_exits_one_with_line() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("bad.toml"), "name = \"x\"\n[profile]\nmax_strain = = 1\n").unwrap();
    let o = sma(&["run", "bad.toml"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
    std::fs::write(tmp.path().join("range.toml"), "name = \"x\"\n[profile]\nmax_strain = 0.08\nstrain_rate_per_s = 1e-3\n").unwrap();
    let o = sma(&["validate", "range.toml"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn solver_failure_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    // The baseline has no slack dynamics and stalls on this slack cycle.
    let sc = "name = \"stall\"\nmodel = \"mas\"\n[profile]\nmax_strain = 0.045\nstrain_rate_per_s = 5e-4\n[thermal]\npower_w = 0.0005\n[solver]\nsample_period_s = 0.1\n";
    std::fs::write(tmp.path().join("stall.toml"), sc).unwrap();
    let o = sma(&["run", "stall.toml"], tmp.path());
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn both_models_write_two_trajectories_and_comparison() {
    let tmp = tempfile::tempdir().unwrap();
    let o = sma(&["run", "--bundled", "pseudoelastic_outer", "--sample-period-s", "0.05", "--out", "r"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let r = tmp.path().join("r");
    assert!(r.join("pseudoelastic_outer_hybrid.csv").exists());
    assert!(r.join("pseudoelastic_outer_mas.csv").exists());
    let summary: toml::Table = toml::from_str(&std::fs::read_to_string(r.join("pseudoelastic_outer_summary.toml")).unwrap()).unwrap();
    assert!(summary["comparison"]["fit_sigma"].as_float().unwrap() > 95.0);
}

#[test]
fn runs_are_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        assert!(sma(&["run", "--bundled", "slow_three_cycles", "--out", out], tmp.path()).status.success());
    }
    for f in ["slow_three_cycles_hybrid.csv", "slow_three_cycles_transitions.csv"] {
        let a = std::fs::read(tmp.path().join("a").join(f)).unwrap();
        let b = std::fs::read(tmp.path().join("b").join(f)).unwrap();
        assert!(a == b, "{f} differs");
    }
}

#[test]
fn mini_sweep_has_eight_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let o = sma(
        &[
            "sweep",
            "--max-strain",
            "0.005,0.045",
            "--strain-rate-per-s",
            "5e-3,1e-2",
            "--power-w",
            "0.0005,0.41",
            "--cycles",
            "1",
            "--workers",
            "2",
            "--out",
            "s",
        ],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let table = std::fs::read_to_string(tmp.path().join("s/sweep.csv")).unwrap();
    let rows: Vec<&str> = table.lines().collect();
    assert_eq!(rows.len(), 9);
    assert!(rows[0].starts_with("max_strain_pct,power_mw,strain_rate_1e-3_per_s,time_hybrid_s,time_mas_s,fit_sigma_pct,fit_r_pct"));
    // Small strain at low power never tensions the wire: empty cells.
    assert!(rows[1].starts_with("0.5,0.5,5,") && rows[1].contains(",,,,\"always slack\""), "{}", rows[1]);
    let o = sma(&["sweep", "--max-strain", "0.01"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
}

fn write_dataset(dir: &Path, name: &str, rate: f64, power: f64) {
    let t1 = 0.045 / rate;
    let drive = format!(
        "t,strain,power_w,env_temperature_k\n0,0,{power},298\n{t1},0.045,{power},298\n{},0,{power},298\n",
        2.0 * t1
    );
    std::fs::write(dir.join(format!("{name}_drive.csv")), drive).unwrap();
    let n = 120;
    let mut meas = String::from("t,sigma,R\n");
    for k in 0..=n {
        meas.push_str(&format!("{},1,1\n", 2.0 * t1 * k as f64 / n as f64));
    }
    std::fs::write(dir.join(format!("{name}_meas.csv")), meas).unwrap();
}

#[test]
fn identify_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    write_dataset(dir, "slow", 5e-3, 0.41);
    write_dataset(dir, "fast", 1e-2, 0.41);
    write_dataset(dir, "cold", 1e-2, 0.0005);
    let manifest = "free = [\"E_A\", \"eps_T\"]\nmax_iters = 15\n\
        [[dataset]]\ndrive = \"slow_drive.csv\"\nmeasurement = \"slow_meas.csv\"\n\
        [[dataset]]\ndrive = \"cold_drive.csv\"\nmeasurement = \"cold_meas.csv\"\n\
        [[dataset]]\ndrive = \"fast_drive.csv\"\nmeasurement = \"fast_meas.csv\"\nstage = \"fast\"\n";
    std::fs::write(dir.join("manifest.toml"), manifest).unwrap();

    // Replace the placeholder measurements by the bundled model's response.
    let p = MaterialParams::identified();
    let m = Manifest::load(&dir.join("manifest.toml")).unwrap();
    let opts = sma_core::identification::FitConfig::mechanical().solver;
    for ((_, mut d), entry) in m.datasets(dir, &p).unwrap().into_iter().zip(&m.datasets) {
        d.synthesize(&p, &opts).unwrap();
        let mut meas = String::from("t,sigma,R\n");
        for k in 0..d.times.len() {
            meas.push_str(&format!("{},{},{}\n", d.times[k], d.sigma[k], d.resistance[k]));
        }
        std::fs::write(dir.join(&entry.measurement), meas).unwrap();
    }

    let o = sma(&["identify", "manifest.toml", "--out", "fit"], dir);
    assert!(o.status.success(), "{}", stderr(&o));
    let fitted = MaterialParams::load(dir.join("fit/identified_params.toml")).unwrap();
    // Data generated by the bundled set is reproduced by it.
    assert!((fitted.e_a / p.e_a - 1.0).abs() < 1e-3, "{}", fitted.e_a);
    assert!((fitted.rho_em0 / p.rho_em0 - 1.0).abs() < 1e-3);
    assert_eq!(fitted.l0, p.l0);
    assert!(dir.join("fit/mechanical_trace.csv").exists());
    assert!(dir.join("fit/thermal_trace.csv").exists());
    assert!(dir.join("fit/report.toml").exists());

    // Without slow-rate data the first stage cannot run.
    std::fs::write(dir.join("fast_only.toml"), "[[dataset]]\ndrive = \"fast_drive.csv\"\nmeasurement = \"fast_meas.csv\"\nstage = \"fast\"\n").unwrap();
    let o = sma(&["identify", "fast_only.toml", "--out", "fit2"], dir);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("stage mechanical"), "{}", stderr(&o));
}
