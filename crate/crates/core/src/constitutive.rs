//! Constitutive laws of the wire: stress-strain relation, force and length,
//! outer-loop transformation stresses and electrical resistance.
//!
//! All functions are pure. Phase fractions within `PHASE_TOL` of [0, 1] are
//! clamped, anything further out is rejected.

use crate::error::{Error, Result};
use crate::params::MaterialParams;

/// Tolerance for phase fractions slightly outside [0, 1].
pub const PHASE_TOL: f64 = 1e-9;

/// Clamp `x_m` into [0, 1] when within tolerance, reject otherwise.
pub fn check_phase(x_m: f64) -> Result<f64> {
    if !x_m.is_finite() || !(-PHASE_TOL..=1.0 + PHASE_TOL).contains(&x_m) {
        return Err(Error::PhaseFraction(x_m));
    }
    Ok(x_m.clamp(0.0, 1.0))
}

/// Phase-weighted compliance `x/E_M + (1 - x)/E_A`.
#[inline]
pub fn compliance(x_m: f64, p: &MaterialParams) -> f64 {
    x_m / p.e_m + (1.0 - x_m) / p.e_a
}

#[inline]
pub(crate) fn stress_unchecked(eps: f64, x_m: f64, p: &MaterialParams) -> f64 {
    (eps - p.eps_t * x_m) / compliance(x_m, p)
}

/// `(∂σ/∂ε, ∂σ/∂x_M)` without the phase check.
#[inline]
pub(crate) fn stress_partials_unchecked(eps: f64, x_m: f64, p: &MaterialParams) -> (f64, f64) {
    let c = compliance(x_m, p);
    let dc = 1.0 / p.e_m - 1.0 / p.e_a;
    let sigma = (eps - p.eps_t * x_m) / c;
    (1.0 / c, -(p.eps_t + sigma * dc) / c)
}

/// Axial stress of the wire [Pa]. Negative values are returned as is.
pub fn stress(eps: f64, x_m: f64, p: &MaterialParams) -> Result<f64> {
    let x = check_phase(x_m)?;
    Ok(stress_unchecked(eps, x, p))
}

/// Closed-form `(∂σ/∂ε, ∂σ/∂x_M)`.
pub fn stress_partials(eps: f64, x_m: f64, p: &MaterialParams) -> Result<(f64, f64)> {
    let x = check_phase(x_m)?;
    Ok(stress_partials_unchecked(eps, x, p))
}

/// Strain at which the wire carries `sigma` with phase fraction `x_m`.
#[inline]
pub fn strain_at(sigma: f64, x_m: f64, p: &MaterialParams) -> f64 {
    compliance(x_m, p) * sigma + p.eps_t * x_m
}

/// Force [N] and length [m] from strain and stress.
pub fn force_length(eps: f64, sigma: f64, p: &MaterialParams) -> (f64, f64) {
    (p.cross_section() * sigma, p.l0 * (1.0 + eps))
}

/// Temperature-free parts of the outer-loop interpolators and their slopes.
///
/// Values are only meaningful on [0, 1]; callers validate the phase fraction.
#[derive(Debug, Clone, Copy)]
pub struct Outer<'a> {
    p: &'a MaterialParams,
}

impl<'a> Outer<'a> {
    pub fn new(p: &'a MaterialParams) -> Self {
        Self { p }
    }

    /// Loading branch at the reference temperature.
    #[inline]
    pub fn a0(&self, x: f64) -> f64 {
        let o = &self.p.outer;
        o.e_al * (o.lambda_al * x).ln_1p()
            + o.e_ar * (o.lambda_ar * (1.0 - x)).ln_1p()
            + o.e_ac * x
            + o.sigma_ab
    }

    #[inline]
    pub fn da0(&self, x: f64) -> f64 {
        let o = &self.p.outer;
        o.e_al * o.lambda_al / (1.0 + o.lambda_al * x)
            - o.e_ar * o.lambda_ar / (1.0 + o.lambda_ar * (1.0 - x))
            + o.e_ac
    }

    /// Unloading branch at the reference temperature.
    #[inline]
    pub fn m0(&self, x: f64) -> f64 {
        let o = &self.p.outer;
        o.e_ml * (o.lambda_ml * x).ln_1p()
            + o.e_mr * (o.lambda_mr * (1.0 - x)).ln_1p()
            + o.e_mc * x
            + o.sigma_mb
    }

    #[inline]
    pub fn dm0(&self, x: f64) -> f64 {
        let o = &self.p.outer;
        o.e_ml * o.lambda_ml / (1.0 + o.lambda_ml * x)
            - o.e_mr * o.lambda_mr / (1.0 + o.lambda_mr * (1.0 - x))
            + o.e_mc
    }

    /// Temperature sensitivity `σ_S(x)` [Pa/K].
    #[inline]
    pub fn s(&self, x: f64) -> f64 {
        let o = &self.p.outer;
        o.e_sl / (1.0 + (-o.lambda_sl * (x - o.x0_sl)).exp())
            + o.e_sr / (1.0 + (o.lambda_sr * (x - o.x0_sr)).exp())
            + o.e_sc * x
            + o.sigma_sb
    }

    #[inline]
    pub fn ds(&self, x: f64) -> f64 {
        let o = &self.p.outer;
        let el = (-o.lambda_sl * (x - o.x0_sl)).exp();
        let er = (o.lambda_sr * (x - o.x0_sr)).exp();
        o.e_sl * o.lambda_sl * el / ((1.0 + el) * (1.0 + el))
            - o.e_sr * o.lambda_sr * er / ((1.0 + er) * (1.0 + er))
            + o.e_sc
    }

    fn check_logs(&self, x: f64) -> Result<()> {
        let o = &self.p.outer;
        let args = [
            1.0 + o.lambda_al * x,
            1.0 + o.lambda_ar * (1.0 - x),
            1.0 + o.lambda_ml * x,
            1.0 + o.lambda_mr * (1.0 - x),
        ];
        match args.iter().find(|a| **a <= 0.0) {
            Some(a) => Err(Error::Domain(format!(
                "interpolator log argument {a} <= 0 at x_M = {x}"
            ))),
            None => Ok(()),
        }
    }
}

/// `σ_S(x_M)`, the common temperature slope of both outer branches.
pub fn sigma_s(x_m: f64, p: &MaterialParams) -> Result<f64> {
    let x = check_phase(x_m)?;
    Ok(Outer::new(p).s(x))
}

/// Outer loading branch `σ_A^(1)(x_M, T)`.
pub fn sigma_a_outer(x_m: f64, temp: f64, p: &MaterialParams) -> Result<f64> {
    let x = check_phase(x_m)?;
    let o = Outer::new(p);
    o.check_logs(x)?;
    Ok(o.a0(x) + o.s(x) * (temp - p.t0))
}

/// Outer unloading branch `σ_M^(1)(x_M, T)`.
pub fn sigma_m_outer(x_m: f64, temp: f64, p: &MaterialParams) -> Result<f64> {
    let x = check_phase(x_m)?;
    let o = Outer::new(p);
    o.check_logs(x)?;
    Ok(o.m0(x) + o.s(x) * (temp - p.t0))
}

/// Martensite resistivity at temperature `temp`.
pub fn resistivity_m(temp: f64, p: &MaterialParams) -> f64 {
    p.rho_em0 * (1.0 + p.alpha_m * (temp - p.t0))
}

/// Austenite resistivity at temperature `temp`.
pub fn resistivity_a(temp: f64, p: &MaterialParams) -> f64 {
    p.rho_ea0 * (1.0 + p.alpha_a * (temp - p.t0))
}

/// Geometric factor `l0 (1 + ε) / (π r0² (1 - ν ε))` of the resistance.
pub fn resistance_geometry(eps: f64, p: &MaterialParams) -> Result<f64> {
    let lateral = 1.0 - p.nu * eps;
    if lateral <= 0.0 {
        return Err(Error::Domain(format!("1 - nu*eps = {lateral} <= 0")));
    }
    Ok(p.l0 * (1.0 + eps) / (p.cross_section() * lateral))
}

/// Electrical resistance of the wire [Ω].
pub fn resistance(eps: f64, x_m: f64, temp: f64, p: &MaterialParams) -> Result<f64> {
    let x = check_phase(x_m)?;
    let g = resistance_geometry(eps, p)?;
    Ok(g * (resistivity_m(temp, p) * x + resistivity_a(temp, p) * (1.0 - x)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params() -> MaterialParams {
        MaterialParams::identified()
    }

    #[test]
    fn stress_examples() {
        let p = params();
        assert_eq!(stress(0.0, 0.0, &p).unwrap(), 0.0);
        assert_eq!(stress(p.eps_t, 1.0, &p).unwrap(), 0.0);
        assert_relative_eq!(stress(0.01, 0.0, &p).unwrap(), 5.0e8, max_relative = 1e-12);
    }

    #[test]
    fn stress_phase_domain() {
        let p = params();
        assert_eq!(stress(0.01, 1.0 + 5e-10, &p).unwrap(), stress(0.01, 1.0, &p).unwrap());
        assert!(matches!(stress(0.01, 1.0 + 1e-6, &p), Err(Error::PhaseFraction(_))));
        assert!(stress(0.01, -1e-3, &p).is_err());
        assert!(stress(0.01, f64::NAN, &p).is_err());
    }

    #[test]
    fn partials_at_pure_phases() {
        let p = params();
        for eps in [-0.01, 0.0, 0.02, 0.05] {
            assert_relative_eq!(stress_partials(eps, 0.0, &p).unwrap().0, p.e_a, max_relative = 1e-12);
            assert_relative_eq!(stress_partials(eps, 1.0, &p).unwrap().0, p.e_m, max_relative = 1e-12);
        }
    }

    #[test]
    fn partials_match_central_differences() {
        let p = params();
        let (eps, x, h) = (0.02, 0.5, 1e-8);
        let (d_eps, d_x) = stress_partials(eps, x, &p).unwrap();
        let fd_eps =
            (stress(eps + h, x, &p).unwrap() - stress(eps - h, x, &p).unwrap()) / (2.0 * h);
        let fd_x = (stress(eps, x + h, &p).unwrap() - stress(eps, x - h, &p).unwrap()) / (2.0 * h);
        assert_relative_eq!(d_eps, fd_eps, max_relative = 1e-6);
        assert_relative_eq!(d_x, fd_x, max_relative = 1e-6);
    }

    #[test]
    fn force_length_examples() {
        let p = params();
        assert_eq!(force_length(0.0, 0.0, &p), (0.0, p.l0));
        let (f, _) = force_length(0.0, 2e8, &p);
        assert_relative_eq!(f, 0.883_572_9, max_relative = 1e-6);
        let (_, l) = force_length(0.045, 0.0, &p);
        assert_relative_eq!(l, 0.1045, max_relative = 1e-12);
    }

    #[test]
    fn outer_interpolator_examples() {
        let p = params();
        let o = &p.outer;
        for x in [0.0, 0.3, 0.77, 1.0] {
            assert_eq!(sigma_a_outer(x, p.t0, &p).unwrap(), Outer::new(&p).a0(x));
        }
        let expected = o.e_ar * (1.0 + o.lambda_ar).ln() + o.sigma_ab;
        let a0 = sigma_a_outer(0.0, p.t0, &p).unwrap();
        assert_relative_eq!(a0, expected, max_relative = 1e-9);
        assert!((a0 - 3.3e5).abs() < 0.05e5, "σ_A0(0) = {a0}");
        for i in 0..=10 {
            let x = i as f64 / 10.0;
            assert!(sigma_a_outer(x, p.t0, &p).unwrap() >= sigma_m_outer(x, p.t0, &p).unwrap());
        }
    }

    #[test]
    fn outer_slopes_match_differences() {
        let p = params();
        let o = Outer::new(&p);
        let h = 1e-7;
        for x in [0.05, 0.3, 0.5, 0.9, 0.99] {
            assert_relative_eq!(o.da0(x), (o.a0(x + h) - o.a0(x - h)) / (2.0 * h), max_relative = 1e-5);
            assert_relative_eq!(o.dm0(x), (o.m0(x + h) - o.m0(x - h)) / (2.0 * h), max_relative = 1e-5);
            assert_relative_eq!(o.ds(x), (o.s(x + h) - o.s(x - h)) / (2.0 * h), max_relative = 1e-5, epsilon = 1.0);
        }
    }

    #[test]
    fn resistance_examples() {
        let p = params();
        let ra = resistance(0.0, 0.0, p.t0, &p).unwrap();
        assert_relative_eq!(ra, p.l0 * p.rho_ea0 / p.cross_section(), max_relative = 1e-12);
        assert!((ra - 18.4).abs() < 0.05);
        let rm = resistance(0.0, 1.0, p.t0, &p).unwrap();
        assert!((rm - 22.7).abs() < 0.05);
        assert_eq!(resistance(0.0, 0.0, p.t0 + 10.0, &p).unwrap(), ra);
    }

    #[test]
    fn resistance_rejects_lateral_collapse() {
        let p = params();
        assert!(matches!(resistance(1.0 / p.nu, 0.5, p.t0, &p), Err(Error::Domain(_))));
    }
}
