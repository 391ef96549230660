//! Stiff baseline: thermally activated phase kinetics with the energy balance,
//! integrated with a Rosenbrock method and branch-memory bookkeeping.

use std::io::Write;
use std::time::Instant;

use nalgebra::Vector3;

use crate::constitutive::{self, check_phase, stress_partials_unchecked, stress_unchecked};
use crate::error::{Error, Result};
use crate::memory::{BranchKind, BranchMemory, ReversalOutcome};
use crate::params::MaterialParams;
use crate::rosenbrock::{self, Tolerance};
use crate::signal::{DriveInput, InputSample};

/// Band on `dx_M/dt` below which the transformation counts as stopped.
pub const REVERSAL_BAND: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MasState {
    pub eps: f64,
    pub x_m: f64,
    pub temp: f64,
}

impl MasState {
    fn to_vec(self) -> Vector3<f64> {
        Vector3::new(self.eps, self.x_m, self.temp)
    }

    fn from_vec(y: &Vector3<f64>) -> Self {
        Self { eps: y[0], x_m: y[1].clamp(0.0, 1.0), temp: y[2] }
    }
}

/// Energy barrier density [J/m³] against a transformation in `direction`.
///
/// `Loading` is austenite to martensite, `Unloading` the reverse.
pub fn delta_g(sigma: f64, x_m: f64, temp: f64, mem: &BranchMemory, direction: BranchKind) -> f64 {
    let pair = mem.pair(x_m, temp);
    let eps_t = mem.params().eps_t;
    match direction {
        BranchKind::Loading => eps_t * (pair.a - sigma).max(0.0),
        BranchKind::Unloading => eps_t * (sigma - pair.m).max(0.0),
    }
}

/// Transition probabilities `(p_MA, p_AM)` [1/s].
pub fn transition_probs(
    sigma: f64,
    x_m: f64,
    temp: f64,
    mem: &BranchMemory,
    p: &MaterialParams,
) -> (f64, f64) {
    let rate = |dg: f64| (-p.v_l * dg / (p.k_b * temp)).exp() / p.tau_x;
    (
        rate(delta_g(sigma, x_m, temp, mem, BranchKind::Unloading)),
        rate(delta_g(sigma, x_m, temp, mem, BranchKind::Loading)),
    )
}

/// `Λ`, the temperature rate without latent heat.
#[inline]
pub fn thermal_rate(temp: f64, input: &InputSample, p: &MaterialParams) -> f64 {
    (input.power - p.conductance() * (temp - input.t_env)) / p.heat_capacity()
}

/// Right-hand side `(dε/dt, dx_M/dt, dT/dt)`.
pub fn mas_rhs(
    state: &MasState,
    input: &InputSample,
    p: &MaterialParams,
    mem: &BranchMemory,
) -> (f64, f64, f64) {
    let x = state.x_m.clamp(0.0, 1.0);
    let sigma = stress_unchecked(state.eps, x, p);
    let (p_ma, p_am) = transition_probs(sigma, x, state.temp, mem, p);
    let dx = -p_ma * x + p_am * (1.0 - x);
    let dt = thermal_rate(state.temp, input, p) + p.h_m * dx / p.c_v;
    (input.v / p.l0, dx, dt)
}

/// Rate of the gap between stress and the branches with the phase frozen.
fn frozen_gap_rate(state: &MasState, input: &InputSample, p: &MaterialParams, mem: &BranchMemory) -> f64 {
    let (s_eps, _) = stress_partials_unchecked(state.eps, state.x_m, p);
    let s_t = mem.pair(state.x_m, state.temp).d_dt;
    s_eps * input.v / p.l0 - s_t * thermal_rate(state.temp, input, p)
}

/// Initial condition of the baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct MasInit {
    pub state: MasState,
    pub memory: BranchMemory,
    /// Branch the phase fraction moves along next.
    pub direction: BranchKind,
}

impl MasInit {
    /// Fresh memory, ready to load.
    pub fn new(state: MasState, p: &MaterialParams) -> Self {
        Self { state, memory: BranchMemory::new(p), direction: BranchKind::Loading }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MasOptions {
    pub tol: Tolerance,
    /// Output sampling period [s].
    pub sample_dt: f64,
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for MasOptions {
    fn default() -> Self {
        Self { tol: Tolerance::default(), sample_dt: 1e-3, h_max: 0.5, max_steps: 20_000_000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MasSample {
    pub t: f64,
    pub eps: f64,
    pub x_m: f64,
    pub temp: f64,
    pub sigma: f64,
    pub force: f64,
    pub resistance: f64,
}

/// Memory event of the baseline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MemoryEvent {
    pub t: f64,
    pub x_m: f64,
    pub level_before: usize,
    pub level_after: usize,
    pub closure: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MasTrajectory {
    pub samples: Vec<MasSample>,
    pub events: Vec<MemoryEvent>,
    pub wall_time: f64,
    pub steps: usize,
    pub rejected: usize,
    pub final_state: MasState,
    pub final_level: usize,
}

impl MasTrajectory {
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "t,eps,x_M,T,sigma,f,R")?;
        for s in &self.samples {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                s.t, s.eps, s.x_m, s.temp, s.sigma, s.force, s.resistance
            )?;
        }
        Ok(())
    }
}

fn sample(t: f64, s: &MasState, p: &MaterialParams) -> Result<MasSample> {
    let x = check_phase(s.x_m)?;
    let sigma = stress_unchecked(s.eps, x, p);
    let (force, _) = constitutive::force_length(s.eps, sigma, p);
    Ok(MasSample {
        t,
        eps: s.eps,
        x_m: x,
        temp: s.temp,
        sigma,
        force,
        resistance: constitutive::resistance(s.eps, x, s.temp, p)?,
    })
}

/// Uniform output times on `[0, t_end]`, always ending at `t_end`.
pub fn sample_grid(t_end: f64, dt: f64) -> Vec<f64> {
    let n = (t_end / dt + 1e-9).floor() as usize;
    let mut g: Vec<f64> = (0..=n).map(|k| k as f64 * dt).collect();
    if t_end - g[n] > 1e-9 * dt {
        g.push(t_end);
    } else {
        g[n] = t_end;
    }
    g
}

/// Integrate the baseline from `init` over `[0, t_end]`.
pub fn simulate_mas(
    init: &MasInit,
    drive: &DriveInput,
    p: &MaterialParams,
    t_end: f64,
    opts: &MasOptions,
) -> Result<MasTrajectory> {
    opts.tol.validate()?;
    if !(t_end >= 0.0) || !(opts.sample_dt > 0.0) {
        return Err(Error::Precondition("t_end >= 0 and sample_dt > 0 required".into()));
    }
    let clock = Instant::now();
    let mut mem = init.memory.clone();
    let mut dir = init.direction;
    let mut y = init.state.to_vec();
    let mut t = 0.0;
    let scale = Vector3::new(1e-3, 1e-3, 1.0);

    let grid = sample_grid(t_end, opts.sample_dt);
    let mut samples = Vec::with_capacity(grid.len());
    let mut next_sample = 0usize;
    let mut events = Vec::new();
    let (mut steps, mut rejected) = (0usize, 0usize);
    let mut h = 1e-4f64.min(opts.h_max);

    let mut cuts = drive.breakpoints_between(0.0, t_end);
    cuts.push(t_end);
    for &t_stop in &cuts {
        let piece = drive.on_piece(t);
        let mut f0: Option<Vector3<f64>> = None;
        while t < t_stop {
            let rhs = |tt: f64, yy: &Vector3<f64>| {
                let (a, b, c) = mas_rhs(&MasState::from_vec(yy), &piece.at(tt), p, &mem);
                Vector3::new(a, b, c)
            };
            let fy = match f0 {
                Some(v) => v,
                None => rhs(t, &y),
            };
            h = h.min(opts.h_max).min(t_stop - t);
            if h <= 1e-14 * t.abs().max(1.0) {
                return Err(Error::SolverFailure { t, reason: format!("step size collapsed to {h:e}") });
            }
            let step = rosenbrock::attempt(&rhs, t, &y, &fy, h, &scale, &opts.tol)?;
            if step.err > 1.0 {
                rejected += 1;
                h = rosenbrock::next_h(h, step.err, false);
                f0 = Some(fy);
                continue;
            }
            steps += 1;
            if steps > opts.max_steps {
                return Err(Error::SolverFailure { t, reason: "step limit exceeded".into() });
            }
            let mut t_new = if t_stop - (t + h) < 1e-12 * t_stop.abs().max(1.0) { t_stop } else { t + h };
            let mut y_new = step.y1;
            let mut memory_changed = false;

            // Loop closure: the phase fraction left the current range on the
            // side where the current branch rejoins its grandparent.
            if mem.level() >= 3 {
                let (lo, hi) = mem.range();
                let kind = mem.top().kind;
                let crossed = match kind {
                    Some(BranchKind::Unloading) => y_new[1] < lo,
                    Some(BranchKind::Loading) => y_new[1] > hi,
                    None => false,
                };
                if crossed {
                    let bound = if kind == Some(BranchKind::Unloading) { lo } else { hi };
                    let side = |tt: f64| (step.dense(tt)[1] - bound).signum();
                    let s0 = side(t);
                    let (mut a, mut b) = (t, t + h);
                    for _ in 0..60 {
                        let m = 0.5 * (a + b);
                        if side(m) == s0 { a = m } else { b = m }
                    }
                    t_new = b;
                    y_new = step.dense(b);
                    let before = mem.level();
                    mem.pop_closure()?;
                    events.push(MemoryEvent { t: b, x_m: bound, level_before: before, level_after: mem.level(), closure: true });
                    memory_changed = true;
                }
            }

            while next_sample < grid.len() && grid[next_sample] <= t_new {
                let ts = grid[next_sample];
                let ys = if ts >= t_new { y_new } else { step.dense(ts) };
                samples.push(sample(ts, &MasState::from_vec(&ys), p)?);
                next_sample += 1;
            }

            t = t_new;
            y = y_new;
            y[1] = y[1].clamp(0.0, 1.0);
            let state = MasState::from_vec(&y);
            let input = piece.at(t);
            let dx = if memory_changed { 0.0 } else { step.f1[1] };
            if !memory_changed {
                let n = frozen_gap_rate(&state, &input, p, &mem);
                let reverse = match dir {
                    BranchKind::Loading => dx < REVERSAL_BAND && n < 0.0,
                    BranchKind::Unloading => dx > -REVERSAL_BAND && n > 0.0,
                };
                if reverse {
                    let before = mem.level();
                    let new_kind = dir.opposite();
                    let sigma = stress_unchecked(state.eps, state.x_m, p);
                    let eps_rev = constitutive::strain_at(sigma.max(0.0), state.x_m, p);
                    let outcome = mem.reverse(state.x_m, state.temp, new_kind, eps_rev)?;
                    dir = new_kind;
                    if outcome != ReversalOutcome::Ignored {
                        events.push(MemoryEvent { t, x_m: state.x_m, level_before: before, level_after: mem.level(), closure: false });
                        memory_changed = true;
                    }
                }
            }
            f0 = if memory_changed { None } else { Some(step.f1) };
            h = rosenbrock::next_h(h, step.err, true);
        }
    }
    // Samples past the last step (t_end = 0 or roundoff).
    for &ts in &grid[next_sample..] {
        samples.push(sample(ts, &MasState::from_vec(&y), p)?);
    }
    Ok(MasTrajectory {
        samples,
        events,
        wall_time: clock.elapsed().as_secs_f64(),
        steps,
        rejected,
        final_state: MasState::from_vec(&y),
        final_level: mem.level(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn p() -> MaterialParams {
        MaterialParams::identified()
    }

    #[test]
    fn barrier_vanishes_on_branch() {
        let p = p();
        let mem = BranchMemory::new(&p);
        let a = mem.pair(0.4, 320.0).a;
        assert_eq!(delta_g(a, 0.4, 320.0, &mem, BranchKind::Loading), 0.0);
        assert!(delta_g(a - 1e8, 0.4, 320.0, &mem, BranchKind::Loading) > 0.0);
        let (_, p_am) = transition_probs(a - 1e8, 0.4, 320.0, &mem, &p);
        assert!(p_am < 1e-300);
    }

    #[test]
    fn barrier_sharpness() {
        let p = p();
        let mem = BranchMemory::new(&p);
        let t = 298.0;
        let a = mem.pair(0.5, t).a;
        for deficit in [1e3, 1e6] {
            let (_, p_am) = transition_probs(a - deficit, 0.5, t, &mem, &p);
            let expected = -p.v_l * p.eps_t * deficit / (p.k_b * t);
            assert_relative_eq!((p_am * p.tau_x).ln(), expected, max_relative = 1e-9);
        }
        // A 1 kPa deficit already scales the rate by e^-0.495.
        let (_, p_am) = transition_probs(a - 1e3, 0.5, t, &mem, &p);
        assert!(((p_am * p.tau_x).ln() + 0.4948).abs() < 1e-3);
    }

    #[test]
    fn probabilities_are_bounded_and_monotone() {
        let p = p();
        let mem = BranchMemory::new(&p);
        let mut last = 0.0;
        for i in 0..200 {
            let sigma = -2e8 + 1e7 * i as f64;
            let (p_ma, p_am) = transition_probs(sigma, 0.3, 330.0, &mem, &p);
            assert!(p_ma > 0.0 || p_ma == 0.0);
            assert!(p_am <= 1.0 / p.tau_x && p_ma <= 1.0 / p.tau_x);
            assert!(p_am >= last);
            last = p_am;
        }
        let (p_ma, p_am) = transition_probs(mem.pair(0.3, 330.0).a, 0.3, 330.0, &mem, &p);
        assert_eq!(p_am, 100.0);
        assert!(p_ma < 1e-100);
    }

    #[test]
    fn rhs_examples() {
        let p = p();
        let mem = BranchMemory::new(&p);
        // Unstressed austenite at the reference temperature lies between the branches.
        let s = MasState { eps: 0.0, x_m: 0.0, temp: p.t0 };
        let input = InputSample { v: 0.0, power: 0.0, t_env: p.t0 };
        let (de, dx, dt) = mas_rhs(&s, &input, &p, &mem);
        assert_eq!(de, 0.0);
        assert!(dt.abs() < 1e-40);
        assert!(dx.abs() < 1e-40);
        let input = InputSample { v: 0.0, power: 0.41, t_env: p.t0 };
        let (_, _, dt) = mas_rhs(&s, &input, &p, &mem);
        assert!((dt - 317.3).abs() < 0.1, "{dt}");
    }

    #[test]
    fn equilibrium_stays_put() {
        let p = p();
        let init = MasInit::new(MasState { eps: 0.0, x_m: 0.0, temp: p.t0 }, &p);
        let drive = DriveInput::constant(0.0, 0.0, p.t0).unwrap();
        let opts = MasOptions { sample_dt: 0.5, ..Default::default() };
        let tr = simulate_mas(&init, &drive, &p, 10.0, &opts).unwrap();
        assert_eq!(tr.samples.len(), 21);
        for s in &tr.samples {
            assert_eq!(s.eps, 0.0);
            assert!(s.x_m < 1e-40);
            assert!((s.temp - p.t0).abs() < 1e-9);
        }
        assert!(tr.wall_time > 0.0);
    }
}
