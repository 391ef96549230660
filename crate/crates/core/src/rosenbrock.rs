//! Linearly implicit second-order Rosenbrock pair with third-order error
//! estimate (Shampine and Reichelt's modified Rosenbrock formula), for stiff
//! systems of three equations.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

const D: f64 = 0.292_893_218_813_452_5; // 1 / (2 + √2)
const E32: f64 = 7.414_213_562_373_095; // 6 + √2

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub rtol: f64,
    pub atol: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self { rtol: 1e-6, atol: 1e-9 }
    }
}

impl Tolerance {
    pub fn validate(&self) -> Result<()> {
        if !(self.rtol > 0.0 && self.atol > 0.0) {
            return Err(Error::Precondition(format!("tolerances must be > 0, got {self:?}")));
        }
        Ok(())
    }
}

/// One attempted step.
#[derive(Debug, Clone, Copy)]
pub struct RosStep {
    pub t: f64,
    pub h: f64,
    pub y0: Vector3<f64>,
    pub y1: Vector3<f64>,
    /// Right-hand side at the new point, reusable as the next `f0`.
    pub f1: Vector3<f64>,
    k1: Vector3<f64>,
    k2: Vector3<f64>,
    /// Weighted max-norm of the error estimate; accept when ≤ 1.
    pub err: f64,
}

impl RosStep {
    /// Continuous extension on `[t, t + h]`.
    pub fn dense(&self, t: f64) -> Vector3<f64> {
        let s = ((t - self.t) / self.h).clamp(0.0, 1.0);
        let c = 1.0 - 2.0 * D;
        self.y0 + self.h * ((s * (1.0 - s) / c) * self.k1 + (s * (s - 2.0 * D) / c) * self.k2)
    }
}

/// Typical magnitudes of the state components, used for difference quotients.
pub type Scale = Vector3<f64>;

fn jacobian<F>(f: &F, t: f64, y: &Vector3<f64>, f0: &Vector3<f64>, scale: &Scale) -> Matrix3<f64>
where
    F: Fn(f64, &Vector3<f64>) -> Vector3<f64>,
{
    let mut jac = Matrix3::zeros();
    for i in 0..3 {
        let del = 1e-7 * y[i].abs().max(scale[i]);
        let mut yp = *y;
        yp[i] += del;
        let col = (f(t, &yp) - f0) / (yp[i] - y[i]);
        jac.set_column(i, &col);
    }
    jac
}

/// Attempt one step of size `h` from `(t, y)` with `f0 = f(t, y)`.
pub fn attempt<F>(
    f: &F,
    t: f64,
    y: &Vector3<f64>,
    f0: &Vector3<f64>,
    h: f64,
    scale: &Scale,
    tol: &Tolerance,
) -> Result<RosStep>
where
    F: Fn(f64, &Vector3<f64>) -> Vector3<f64>,
{
    let jac = jacobian(f, t, y, f0, scale);
    let dt = 1e-7 * t.abs().max(h);
    let ft = (f(t + dt, y) - f0) / dt;
    let w = Matrix3::identity() - (h * D) * jac;
    let lu = w.lu();
    let solve = |rhs: Vector3<f64>| -> Result<Vector3<f64>> {
        lu.solve(&rhs).ok_or_else(|| Error::SolverFailure {
            t,
            reason: "singular iteration matrix".into(),
        })
    };
    let k1 = solve(f0 + (h * D) * ft)?;
    let f_mid = f(t + 0.5 * h, &(y + 0.5 * h * k1));
    let k2 = solve(f_mid - k1)? + k1;
    let y1 = y + h * k2;
    let f1 = f(t + h, &y1);
    let k3 = solve(f1 - E32 * (k2 - f_mid) - 2.0 * (k1 - f0) + (h * D) * ft)?;
    let e = (h / 6.0) * (k1 - 2.0 * k2 + k3);
    let mut err: f64 = 0.0;
    for i in 0..3 {
        let sc = tol.atol + tol.rtol * y[i].abs().max(y1[i].abs());
        err = err.max(e[i].abs() / sc);
    }
    if !err.is_finite() || !y1.iter().all(|v| v.is_finite()) {
        err = f64::INFINITY;
    }
    Ok(RosStep { t, h, y0: *y, y1, f1, k1, k2, err })
}

/// Next step size after an attempt with normalized error `err`.
pub fn next_h(h: f64, err: f64, accepted: bool) -> f64 {
    let fac = if err > 0.0 { 0.8 * err.powf(-1.0 / 3.0) } else { 5.0 };
    if accepted {
        h * fac.clamp(0.2, 5.0)
    } else {
        h * fac.clamp(0.1, 0.5)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn integrate<F>(f: F, y0: Vector3<f64>, t_end: f64, tol: Tolerance) -> Vector3<f64>
    where
        F: Fn(f64, &Vector3<f64>) -> Vector3<f64>,
    {
        let scale = Vector3::new(1.0, 1.0, 1.0);
        let (mut t, mut y, mut h) = (0.0f64, y0, 1e-4f64);
        let mut f0 = f(t, &y);
        while t < t_end {
            h = h.min(t_end - t);
            let s = attempt(&f, t, &y, &f0, h, &scale, &tol).unwrap();
            if s.err <= 1.0 {
                t += h;
                y = s.y1;
                f0 = s.f1;
            }
            h = next_h(h, s.err, s.err <= 1.0);
        }
        y
    }

    #[test]
    fn linear_decay_matches_exponential() {
        let tol = Tolerance { rtol: 1e-8, atol: 1e-12 };
        let y = integrate(|_, y| -y.component_mul(&Vector3::new(1.0, 2.0, 3.0)), Vector3::repeat(1.0), 1.0, tol);
        for (i, k) in [1.0f64, 2.0, 3.0].iter().enumerate() {
            assert!((y[i] - (-k).exp()).abs() < 1e-6, "{} vs {}", y[i], (-k).exp());
        }
    }

    #[test]
    fn stiff_system_is_stable() {
        // y' = -1e6 (y - cos t), solution hugs cos t.
        let tol = Tolerance::default();
        let y = integrate(
            |t, y| Vector3::new(-1e6 * (y[0] - t.cos()), -y[1], 0.0),
            Vector3::new(0.0, 1.0, 0.0),
            2.0,
            tol,
        );
        assert!((y[0] - 2f64.cos()).abs() < 1e-5);
        assert!((y[1] - (-2f64).exp()).abs() < 1e-4);
    }

    #[test]
    fn dense_output_hits_endpoints() {
        let f = |_: f64, y: &Vector3<f64>| -y;
        let y0 = Vector3::repeat(1.0);
        let s = attempt(&f, 0.0, &y0, &f(0.0, &y0), 0.1, &Vector3::repeat(1.0), &Tolerance::default()).unwrap();
        assert!((s.dense(0.0) - y0).norm() < 1e-15);
        assert!((s.dense(0.1) - s.y1).norm() < 1e-12);
    }
}
