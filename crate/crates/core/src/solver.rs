//! Integration of the hybrid model: explicit Runge–Kutta flow between jumps,
//! jump localization on the dense output and chained jump resolution.

use std::io::Write;
use std::time::Instant;

use crate::constitutive::{force_length, resistance};
use crate::error::{Error, Result};
use crate::hybrid::{
    in_flow_set, jump_check, jump_map, jump_trigger, Branch, ContinuousState, DiscreteState, Eval, HybridModel,
    HybridState, Transition,
};
use crate::mas::sample_grid;
use crate::params::MaterialParams;
use crate::rk::{self, Vec2};
use crate::rosenbrock::Tolerance;
use crate::signal::{DriveInput, InputSample};

/// Largest step in units of the thermal time constant; keeps the explicit
/// pair well inside its stability region on the relaxing temperature.
const THERMAL_STEP_FACTOR: f64 = 2.0;

/// Fractions of each accepted step at which the jump conditions are probed.
const PROBES: [f64; 4] = [0.25, 0.5, 0.75, 1.0];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HybridOptions {
    pub tol: Tolerance,
    /// Output sampling period [s].
    pub sample_dt: f64,
    pub h_max: f64,
    /// Width of the time bracket around a localized jump [s].
    pub event_tol: f64,
    /// Jumps allowed at one instant before reporting Zeno behaviour.
    pub max_chain: usize,
    pub max_steps: usize,
}

impl Default for HybridOptions {
    fn default() -> Self {
        Self {
            tol: Tolerance::default(),
            sample_dt: 1e-3,
            h_max: 1.0,
            event_tol: 1e-9,
            max_chain: 3,
            max_steps: 10_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HybridSample {
    pub t: f64,
    pub j: usize,
    pub eps: f64,
    pub temp: f64,
    pub q: Branch,
    pub s: bool,
    pub n_l: usize,
    pub x_m: f64,
    pub sigma: f64,
    pub force: f64,
    pub resistance: f64,
    pub eps_eff: f64,
    /// Taken just before or after a jump rather than on the output grid.
    pub at_jump: bool,
}

/// Point where the flow left its flow set without any jump being enabled.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowViolation {
    pub t: f64,
    pub j: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HybridTrajectory {
    pub samples: Vec<HybridSample>,
    pub transitions: Vec<Transition>,
    /// Flow-set violations remaining after a resolved jump chain.
    pub violations: Vec<FlowViolation>,
    pub wall_time: f64,
    pub steps: usize,
    pub rejected: usize,
    pub final_state: HybridState,
}

impl HybridTrajectory {
    /// Samples on the output grid only.
    pub fn grid_samples(&self) -> impl Iterator<Item = &HybridSample> {
        self.samples.iter().filter(|s| !s.at_jump)
    }

    /// Number of maximal time intervals spent in a slack mode.
    pub fn slack_segments(&self) -> usize {
        let start = usize::from(self.samples.first().is_some_and(|s| s.s));
        start + self.transitions.iter().filter(|tr| !tr.from.s && tr.to.s).count()
    }

    /// True when no grid sample has the wire under tension.
    pub fn always_slack(&self) -> bool {
        self.grid_samples().all(|s| s.s)
    }

    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "t,j,eps,T,q,s,n_l,x_M,sigma,f,R,eps_eff")?;
        for s in &self.samples {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                s.t,
                s.j,
                s.eps,
                s.temp,
                s.q.code(),
                s.s as u8,
                s.n_l,
                s.x_m,
                s.sigma,
                s.force,
                s.resistance,
                s.eps_eff
            )?;
        }
        Ok(())
    }

    pub fn write_transitions(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "t,j,from,to,index,trigger")?;
        for tr in &self.transitions {
            writeln!(w, "{},{},{},{},{},\"{}\"", tr.t, tr.j, tr.from, tr.to, tr.index, tr.trigger)?;
        }
        Ok(())
    }
}

fn make_sample(t: f64, j: usize, st: &HybridState, e: &Eval, p: &MaterialParams, at_jump: bool) -> Result<HybridSample> {
    sample_parts(t, j, &st.xc, &st.xd, e, p, at_jump)
}

fn sample_parts(
    t: f64,
    j: usize,
    xc: &ContinuousState,
    xd: &DiscreteState,
    e: &Eval,
    p: &MaterialParams,
    at_jump: bool,
) -> Result<HybridSample> {
    let sigma = e.output_stress();
    let (force, _) = force_length(xc.eps, sigma, p);
    Ok(HybridSample {
        t,
        j,
        eps: xc.eps,
        temp: xc.temp,
        q: xd.q,
        s: xd.s,
        n_l: xd.n_l,
        x_m: e.x,
        sigma,
        force,
        resistance: resistance(e.eps_eff, e.x, xc.temp, p)?,
        eps_eff: e.eps_eff,
        at_jump,
    })
}

struct Run<'a> {
    model: HybridModel<'a>,
    opts: HybridOptions,
    state: HybridState,
    j: usize,
    guess: f64,
    samples: Vec<HybridSample>,
    transitions: Vec<Transition>,
    violations: Vec<FlowViolation>,
    /// Times of recent jumps, for detecting accumulation.
    recent: Vec<f64>,
}

impl<'a> Run<'a> {
    fn eval_at(&self, y: &Vec2, input: &InputSample) -> Result<Eval> {
        let xc = ContinuousState { eps: y[0], temp: y[1] };
        self.model.eval_parts(&xc, &self.state.xd, &self.state.mem, input, Some(self.guess))
    }

    /// Apply enabled jumps at `t` until none remains.
    fn resolve(&mut self, t: f64, input: &InputSample) -> Result<()> {
        let p = self.model.p;
        let mut chain = 0;
        loop {
            let e = self.model.eval(&self.state, input, Some(self.guess))?;
            self.guess = e.x;
            let active = jump_check(&e, p);
            let Some(&index) = active.first() else {
                if chain > 0 {
                    if let Err(reason) = in_flow_set(&e, p) {
                        self.violations.push(FlowViolation { t, j: self.j, reason });
                    }
                    self.samples.push(make_sample(t, self.j, &self.state, &e, p, true)?);
                }
                return Ok(());
            };
            self.recent.retain(|&tr| t - tr < 1e-6);
            if chain >= self.opts.max_chain || self.recent.len() >= 10 * self.opts.max_chain {
                let log = self
                    .transitions
                    .iter()
                    .rev()
                    .take(chain.max(3))
                    .map(|tr| format!("{}->{} by {}", tr.from, tr.to, tr.index))
                    .collect::<Vec<_>>()
                    .join(", ");
                return Err(Error::Zeno { t, limit: self.opts.max_chain, log });
            }
            let next = jump_map(&self.state, index, &e)?;
            self.transitions.push(Transition {
                t,
                j: self.j,
                from: self.state.xd,
                to: next.xd,
                index,
                trigger: jump_trigger(index),
            });
            self.state = next;
            self.j += 1;
            self.recent.push(t);
            chain += 1;
        }
    }

    fn any_jump(&self, y: &Vec2, input: &InputSample) -> Result<bool> {
        let e = self.eval_at(y, input)?;
        Ok(!jump_check(&e, self.model.p).is_empty())
    }

    fn record_grid(&mut self, grid: &[f64], next: &mut usize, step: &rk::DpStep, upto: f64, input: impl Fn(f64) -> InputSample) -> Result<()> {
        let p = self.model.p;
        while *next < grid.len() && grid[*next] <= upto {
            let tg = grid[*next];
            let y = step.dense(tg);
            let e = self.eval_at(&y, &input(tg))?;
            let xc = ContinuousState { eps: y[0], temp: y[1] };
            self.samples.push(sample_parts(tg, self.j, &xc, &self.state.xd, &e, p, false)?);
            *next += 1;
        }
        Ok(())
    }
}

/// Integrate the hybrid model from `init` over `[0, t_end]`.
pub fn integrate_hybrid(
    init: &HybridState,
    drive: &DriveInput,
    p: &MaterialParams,
    t_end: f64,
    opts: &HybridOptions,
) -> Result<HybridTrajectory> {
    opts.tol.validate()?;
    if !(t_end >= 0.0) || !(opts.sample_dt > 0.0) || !(opts.event_tol > 0.0) {
        return Err(Error::Precondition("t_end >= 0, sample_dt > 0 and event_tol > 0 required".into()));
    }
    init.xd.check()?;
    let clock = Instant::now();
    let grid = sample_grid(t_end, opts.sample_dt);
    let mut run = Run {
        model: HybridModel::new(p),
        opts: *opts,
        state: init.clone(),
        j: 0,
        guess: 0.5,
        samples: Vec::with_capacity(grid.len() + 64),
        transitions: Vec::new(),
        violations: Vec::new(),
        recent: Vec::new(),
    };
    let mut next_sample = 1usize;
    let (mut steps, mut rejected) = (0usize, 0usize);
    let mut t = 0.0f64;
    let mut y: Vec2 = [init.xc.eps, init.xc.temp];
    let h_max = opts.h_max.min(THERMAL_STEP_FACTOR * p.heat_capacity() / p.conductance());
    let mut h = 1e-3f64.min(h_max);

    run.resolve(0.0, &drive.on_piece(0.0).at(0.0))?;
    {
        let e = run.model.eval(&run.state, &drive.at(0.0), None)?;
        run.samples.push(make_sample(0.0, run.j, &run.state, &e, p, false)?);
    }

    let mut cuts = drive.breakpoints_between(0.0, t_end);
    cuts.push(t_end);
    for &t_stop in &cuts {
        let piece = drive.on_piece(t);
        run.state.xc = ContinuousState { eps: y[0], temp: y[1] };
        run.resolve(t, &piece.at(t))?;
        let mut f0: Option<Vec2> = None;
        while t < t_stop {
            h = h.min(h_max).min(t_stop - t);
            if h <= 1e-14 * t.abs().max(1.0) {
                return Err(Error::SolverFailure { t, reason: format!("step size collapsed to {h:e}") });
            }
            let step = {
                let model = run.model;
                let xd = run.state.xd;
                let mem = &run.state.mem;
                let mut guess = run.guess;
                let mut rhs = |tt: f64, yy: &Vec2| -> Result<Vec2> {
                    let xc = ContinuousState { eps: yy[0], temp: yy[1] };
                    let e = model.eval_parts(&xc, &xd, mem, &piece.at(tt), Some(guess))?;
                    guess = e.x;
                    Ok([e.strain_rate, e.temp_rate(p)])
                };
                let fy = match f0 {
                    Some(v) => v,
                    None => rhs(t, &y)?,
                };
                f0 = Some(fy);
                rk::attempt(&mut rhs, t, &y, &fy, h, &opts.tol)?
            };
            if step.err > 1.0 {
                rejected += 1;
                h = rk::next_h(h, step.err, false);
                continue;
            }
            steps += 1;
            if steps > opts.max_steps {
                return Err(Error::SolverFailure { t, reason: "step limit exceeded".into() });
            }
            let t_new = if t_stop - step.t_end() < 1e-12 * t_stop.abs().max(1.0) { t_stop } else { step.t_end() };

            // Probe the jump conditions along the step.
            let mut hit: Option<(f64, f64)> = None;
            let mut t_prev = t;
            for &theta in &PROBES {
                let tp = if theta == 1.0 { t_new } else { t + theta * step.h };
                if run.any_jump(&step.dense(tp), &piece.at(tp))? {
                    hit = Some((t_prev, tp));
                    break;
                }
                t_prev = tp;
            }
            h = rk::next_h(step.h, step.err, true);
            match hit {
                None => {
                    run.record_grid(&grid, &mut next_sample, &step, t_new, |tt| piece.at(tt))?;
                    t = t_new;
                    y = step.y1;
                    f0 = Some(step.f1);
                    run.guess = run.eval_at(&y, &piece.at(t))?.x;
                }
                Some((mut lo, mut hi)) => {
                    while hi - lo > opts.event_tol {
                        let mid = 0.5 * (lo + hi);
                        if run.any_jump(&step.dense(mid), &piece.at(mid))? {
                            hi = mid;
                        } else {
                            lo = mid;
                        }
                    }
                    run.record_grid(&grid, &mut next_sample, &step, lo, |tt| piece.at(tt))?;
                    let y_lo = step.dense(lo);
                    let e_lo = run.eval_at(&y_lo, &piece.at(lo))?;
                    let xc_lo = ContinuousState { eps: y_lo[0], temp: y_lo[1] };
                    run.samples.push(sample_parts(lo, run.j, &xc_lo, &run.state.xd, &e_lo, p, true)?);
                    let y_hi = step.dense(hi);
                    run.state.xc = ContinuousState { eps: y_hi[0], temp: y_hi[1] };
                    run.resolve(hi, &piece.at(hi))?;
                    t = hi;
                    y = y_hi;
                    f0 = None;
                    h = h.min(step.h);
                }
            }
        }
        t = t_stop;
    }
    run.state.xc = ContinuousState { eps: y[0], temp: y[1] };
    while next_sample < grid.len() {
        // Only reachable when t_end coincides with the last grid point.
        let tg = grid[next_sample];
        let e = run.model.eval(&run.state, &drive.at(tg), None)?;
        run.samples.push(make_sample(tg, run.j, &run.state, &e, p, false)?);
        next_sample += 1;
    }
    Ok(HybridTrajectory {
        samples: run.samples,
        transitions: run.transitions,
        violations: run.violations,
        wall_time: clock.elapsed().as_secs_f64(),
        steps,
        rejected,
        final_state: run.state,
    })
}
