//! Time-varying inputs of the wire: deformation rate, Joule power and
//! environment temperature.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Interpolation between breakpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Interp {
    #[default]
    Linear,
    /// Zero-order hold: the value of the last breakpoint at or before `t`.
    Step,
}

/// Scalar signal given by `(time, value)` breakpoints, constant beyond both ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Signal {
    times: Vec<f64>,
    values: Vec<f64>,
    #[serde(default)]
    interp: Interp,
}

impl Signal {
    pub fn new(times: Vec<f64>, values: Vec<f64>, interp: Interp) -> Result<Self> {
        if times.is_empty() || times.len() != values.len() {
            return Err(Error::Signal(format!(
                "need matching nonempty breakpoint lists, got {} times and {} values",
                times.len(),
                values.len()
            )));
        }
        if times.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(Error::Signal("breakpoints must be finite".into()));
        }
        if let Some(w) = times.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::Signal(format!(
                "breakpoint times must be strictly increasing, got {} then {}",
                w[0], w[1]
            )));
        }
        Ok(Self { times, values, interp })
    }

    pub fn constant(value: f64) -> Self {
        Self { times: vec![0.0], values: vec![value], interp: Interp::Linear }
    }

    pub fn linear(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        Self::new(times, values, Interp::Linear)
    }

    pub fn step(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        Self::new(times, values, Interp::Step)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn interp(&self) -> Interp {
        self.interp
    }

    /// Value at `t`.
    pub fn eval(&self, t: f64) -> f64 {
        let n = self.times.len();
        if t <= self.times[0] {
            return self.values[0];
        }
        if t >= self.times[n - 1] {
            return self.values[n - 1];
        }
        // times[i] <= t < times[i + 1]
        let i = self.times.partition_point(|&tb| tb <= t) - 1;
        self.eval_segment(i, t)
    }

    /// Value at `t` using the piece that starts at breakpoint `i`.
    ///
    /// Lets an integrator stay on one piece up to and including its right end.
    pub fn eval_segment(&self, i: usize, t: f64) -> f64 {
        let n = self.times.len();
        if i + 1 >= n {
            return self.values[n - 1];
        }
        match self.interp {
            Interp::Step => self.values[i],
            Interp::Linear => {
                let (t0, t1) = (self.times[i], self.times[i + 1]);
                let w = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
                self.values[i] + w * (self.values[i + 1] - self.values[i])
            }
        }
    }

    /// Index of the piece used at `t` when approached from the right.
    pub fn segment_at(&self, t: f64) -> usize {
        self.times.partition_point(|&tb| tb <= t).saturating_sub(1)
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Exact integral of the signal over `[a, b]`.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return -self.integral(b, a);
        }
        let mut cuts: Vec<f64> = vec![a];
        cuts.extend(self.times.iter().copied().filter(|&tb| tb > a && tb < b));
        cuts.push(b);
        cuts.windows(2)
            .map(|w| {
                let i = self.segment_at(w[0]);
                let (fa, fb) = if w[0] < self.times[0] {
                    (self.values[0], self.values[0])
                } else {
                    (self.eval_segment(i, w[0]), self.eval_segment(i, w[1]))
                };
                0.5 * (fa + fb) * (w[1] - w[0])
            })
            .sum()
    }
}

/// The three inputs of the wire model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriveInput {
    /// Deformation rate [m/s].
    pub v: Signal,
    /// Joule heating power [W].
    pub power: Signal,
    /// Environment temperature [K].
    pub t_env: Signal,
}

/// Input values at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InputSample {
    pub v: f64,
    pub power: f64,
    pub t_env: f64,
}

impl DriveInput {
    pub fn new(v: Signal, power: Signal, t_env: Signal) -> Result<Self> {
        if power.min_value() < 0.0 {
            return Err(Error::Signal("Joule power must be >= 0".into()));
        }
        if t_env.min_value() <= 0.0 {
            return Err(Error::Signal("environment temperature must be > 0".into()));
        }
        Ok(Self { v, power, t_env })
    }

    /// Constant inputs.
    pub fn constant(v: f64, power: f64, t_env: f64) -> Result<Self> {
        Self::new(Signal::constant(v), Signal::constant(power), Signal::constant(t_env))
    }

    pub fn at(&self, t: f64) -> InputSample {
        InputSample { v: self.v.eval(t), power: self.power.eval(t), t_env: self.t_env.eval(t) }
    }

    /// Sorted union of all breakpoints strictly inside `(t0, t1)`.
    pub fn breakpoints_between(&self, t0: f64, t1: f64) -> Vec<f64> {
        let mut out: Vec<f64> = [&self.v, &self.power, &self.t_env]
            .iter()
            .flat_map(|s| s.times().iter().copied())
            .filter(|&tb| tb > t0 && tb < t1)
            .collect();
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }

    /// Inputs on the piece `[a, b]` between consecutive breakpoints, evaluated
    /// so that `b` itself uses the left piece.
    pub fn on_piece(&self, a: f64) -> PieceInput<'_> {
        PieceInput {
            drive: self,
            iv: self.v.segment_at(a),
            ip: self.power.segment_at(a),
            it: self.t_env.segment_at(a),
        }
    }
}

/// Drive restricted to one breakpoint-free piece.
#[derive(Debug, Clone, Copy)]
pub struct PieceInput<'a> {
    drive: &'a DriveInput,
    iv: usize,
    ip: usize,
    it: usize,
}

impl PieceInput<'_> {
    pub fn at(&self, t: f64) -> InputSample {
        InputSample {
            v: piece_eval(&self.drive.v, self.iv, t),
            power: piece_eval(&self.drive.power, self.ip, t),
            t_env: piece_eval(&self.drive.t_env, self.it, t),
        }
    }
}

fn piece_eval(s: &Signal, i: usize, t: f64) -> f64 {
    if t < s.times()[0] {
        s.values()[0]
    } else {
        s.eval_segment(i, t)
    }
}

/// Triangular strain profile between `eps_min` and `eps_max`.
///
/// Returns the deformation rate as a step signal and the total duration. The
/// wire is loaded from `eps_start` up to `eps_max`, then cycled between
/// `eps_max` and `eps_min`, ending at `eps_min` after `cycles` unloadings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triangle {
    pub eps_min: f64,
    pub eps_max: f64,
    /// Strain rate magnitude [1/s].
    pub rate: f64,
    pub cycles: usize,
}

impl Triangle {
    pub fn waypoints(&self) -> Vec<f64> {
        let mut w = vec![self.eps_min];
        for _ in 0..self.cycles {
            w.push(self.eps_max);
            w.push(self.eps_min);
        }
        w
    }

    pub fn velocity(&self, l0: f64) -> Result<(Signal, f64)> {
        if !(self.eps_max > self.eps_min) || !(self.rate > 0.0) || self.cycles == 0 {
            return Err(Error::Signal(format!("invalid triangular profile {self:?}")));
        }
        strain_waypoints(&self.waypoints(), self.rate, l0)
    }
}

/// Deformation-rate signal that drives the strain through `waypoints` at a
/// constant strain rate magnitude. Returns the signal and the total duration.
pub fn strain_waypoints(waypoints: &[f64], rate: f64, l0: f64) -> Result<(Signal, f64)> {
    if waypoints.len() < 2 || !(rate > 0.0) || !(l0 > 0.0) {
        return Err(Error::Signal("need >= 2 waypoints and a positive rate".into()));
    }
    let mut times = Vec::with_capacity(waypoints.len());
    let mut values = Vec::with_capacity(waypoints.len());
    let mut t = 0.0;
    for w in waypoints.windows(2) {
        let d = w[1] - w[0];
        if d == 0.0 {
            return Err(Error::Signal("consecutive waypoints must differ".into()));
        }
        times.push(t);
        values.push(d.signum() * rate * l0);
        t += d.abs() / rate;
    }
    times.push(t);
    values.push(0.0);
    Ok((Signal::step(times, values)?, t))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_interpolation_and_extrapolation() {
        let s = Signal::linear(vec![0.0, 1.0, 3.0], vec![0.0, 2.0, -2.0]).unwrap();
        assert_eq!(s.eval(-1.0), 0.0);
        assert_eq!(s.eval(0.5), 1.0);
        assert_eq!(s.eval(2.0), 0.0);
        assert_eq!(s.eval(10.0), -2.0);
        assert_eq!(s.eval_segment(0, 1.0), 2.0);
    }

    #[test]
    fn step_holds_left_value() {
        let s = Signal::step(vec![0.0, 1.0], vec![3.0, 5.0]).unwrap();
        assert_eq!(s.eval(0.999), 3.0);
        assert_eq!(s.eval(1.0), 5.0);
        assert_eq!(s.eval_segment(0, 1.0), 3.0);
    }

    #[test]
    fn rejects_bad_breakpoints() {
        assert!(Signal::linear(vec![0.0, 0.0], vec![1.0, 2.0]).is_err());
        assert!(Signal::linear(vec![], vec![]).is_err());
        assert!(Signal::linear(vec![0.0], vec![1.0, 2.0]).is_err());
        assert!(DriveInput::constant(0.0, -1.0, 300.0).is_err());
        assert!(DriveInput::constant(0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn integral_is_exact() {
        let s = Signal::linear(vec![0.0, 1.0, 3.0], vec![0.0, 2.0, -2.0]).unwrap();
        assert!((s.integral(-1.0, 4.0) - (1.0 + 0.0 - 2.0)).abs() < 1e-12);
        let st = Signal::step(vec![0.0, 1.0], vec![3.0, 5.0]).unwrap();
        assert!((st.integral(0.0, 2.0) - 8.0).abs() < 1e-12);
    }

    #[test]
    fn triangle_reaches_waypoints() {
        let l0 = 0.1;
        let tri = Triangle { eps_min: 0.0, eps_max: 0.045, rate: 5e-4, cycles: 3 };
        let (v, t_end) = tri.velocity(l0).unwrap();
        assert!((t_end - 6.0 * 90.0).abs() < 1e-9);
        assert!((v.integral(0.0, 90.0) / l0 - 0.045).abs() < 1e-12);
        assert!(v.integral(0.0, t_end).abs() < 1e-12);
    }

    #[test]
    fn breakpoints_union() {
        let d = DriveInput::new(
            Signal::step(vec![0.0, 2.0], vec![1.0, 0.0]).unwrap(),
            Signal::linear(vec![1.0, 2.0], vec![0.0, 1.0]).unwrap(),
            Signal::constant(300.0),
        )
        .unwrap();
        assert_eq!(d.breakpoints_between(0.0, 5.0), vec![1.0, 2.0]);
    }
}
