//! Dormand–Prince 5(4) pair with Hairer's fourth-order continuous extension,
//! for two-component systems.

use crate::error::Result;
use crate::rosenbrock::Tolerance;

pub type Vec2 = [f64; 2];

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

fn axpy(y: &Vec2, h: f64, terms: &[(f64, &Vec2)]) -> Vec2 {
    let mut out = *y;
    for (c, k) in terms {
        out[0] += h * c * k[0];
        out[1] += h * c * k[1];
    }
    out
}

/// One attempted step with its dense-output coefficients.
#[derive(Debug, Clone, Copy)]
pub struct DpStep {
    pub t: f64,
    pub h: f64,
    pub y0: Vec2,
    pub y1: Vec2,
    /// Right-hand side at the new point (first stage of the next step).
    pub f1: Vec2,
    /// Weighted RMS norm of the error estimate; accept when ≤ 1.
    pub err: f64,
    rcont: [Vec2; 4],
}

impl DpStep {
    /// Continuous extension at `t ∈ [self.t, self.t + h]`.
    pub fn dense(&self, t: f64) -> Vec2 {
        let s = ((t - self.t) / self.h).clamp(0.0, 1.0);
        let s1 = 1.0 - s;
        let [r1, r2, r3, r4] = &self.rcont;
        let mut out = [0.0; 2];
        for i in 0..2 {
            out[i] = self.y0[i] + s * (r1[i] + s1 * (r2[i] + s * (r3[i] + s1 * r4[i])));
        }
        out
    }

    pub fn t_end(&self) -> f64 {
        self.t + self.h
    }
}

/// Attempt one step of size `h` from `(t, y)` with `f0 = f(t, y)`.
pub fn attempt<F>(f: &mut F, t: f64, y: &Vec2, f0: &Vec2, h: f64, tol: &Tolerance) -> Result<DpStep>
where
    F: FnMut(f64, &Vec2) -> Result<Vec2>,
{
    let k1 = *f0;
    let k2 = f(t + C2 * h, &axpy(y, h, &[(A21, &k1)]))?;
    let k3 = f(t + C3 * h, &axpy(y, h, &[(A31, &k1), (A32, &k2)]))?;
    let k4 = f(t + C4 * h, &axpy(y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]))?;
    let k5 = f(t + C5 * h, &axpy(y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]))?;
    let k6 = f(t + h, &axpy(y, h, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]))?;
    let y1 = axpy(y, h, &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
    let k7 = f(t + h, &y1)?;
    let mut err2 = 0.0;
    let mut rcont = [[0.0; 2]; 4];
    for i in 0..2 {
        let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        let sc = tol.atol + tol.rtol * y[i].abs().max(y1[i].abs());
        err2 += (e / sc).powi(2);
        let dy = y1[i] - y[i];
        let bspl = h * k1[i] - dy;
        rcont[0][i] = dy;
        rcont[1][i] = bspl;
        rcont[2][i] = dy - h * k7[i] - bspl;
        rcont[3][i] = h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
    }
    let mut err = (err2 / 2.0).sqrt();
    if !err.is_finite() || !y1.iter().all(|v| v.is_finite()) {
        err = f64::INFINITY;
    }
    Ok(DpStep { t, h, y0: *y, y1, f1: k7, err, rcont })
}

/// Next step size after an attempt with normalized error `err`.
pub fn next_h(h: f64, err: f64, accepted: bool) -> f64 {
    let fac = if err > 0.0 { 0.9 * err.powf(-0.2) } else { 5.0 };
    if accepted {
        h * fac.clamp(0.2, 5.0)
    } else {
        h * fac.clamp(0.1, 0.5)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_oscillator() {
        let tol = Tolerance { rtol: 1e-10, atol: 1e-12 };
        let mut f = |_: f64, y: &Vec2| Ok([y[1], -y[0]]);
        let (mut t, mut y, mut h) = (0.0f64, [1.0, 0.0], 1e-3f64);
        let mut f0 = f(t, &y).unwrap();
        let t_end = 6.0;
        while t < t_end {
            h = h.min(t_end - t);
            let s = attempt(&mut f, t, &y, &f0, h, &tol).unwrap();
            if s.err <= 1.0 {
                // Dense output at the midpoint stays accurate.
                let ym = s.dense(t + 0.5 * h);
                assert!((ym[0] - (t + 0.5 * h).cos()).abs() < 1e-7);
                t += h;
                y = s.y1;
                f0 = s.f1;
            }
            h = next_h(h, s.err, s.err <= 1.0);
        }
        assert!((y[0] - 6f64.cos()).abs() < 1e-8);
        assert!((y[1] + 6f64.sin()).abs() < 1e-8);
    }

    #[test]
    fn dense_output_hits_endpoints() {
        let mut f = |_: f64, y: &Vec2| Ok([-y[0], 2.0]);
        let y0 = [1.0, 0.0];
        let f0 = f(0.0, &y0).unwrap();
        let s = attempt(&mut f, 0.0, &y0, &f0, 0.1, &Tolerance::default()).unwrap();
        assert_eq!(s.dense(0.0), y0);
        let e = s.dense(0.1);
        assert!((e[0] - s.y1[0]).abs() < 1e-15 && (e[1] - 0.2).abs() < 1e-15);
    }
}
