//! Material constants of the SMA wire and their flat key-value file format.
//!
//! Every constant is stored in SI units exactly as identified; the file keys
//! use the customary symbols (`E_A`, `eps_T`, `sigma_AB`, ...).

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bundled identified parameter set for a 75 µm quasi-plastic NiTi wire.
pub const IDENTIFIED_TOML: &str = include_str!("../data/identified_params.toml");

/// Coefficients of the outer-loop transformation-stress interpolators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OuterLoop {
    #[serde(rename = "E_AL")]
    pub e_al: f64,
    #[serde(rename = "E_AR")]
    pub e_ar: f64,
    #[serde(rename = "E_AC")]
    pub e_ac: f64,
    #[serde(rename = "lambda_AL")]
    pub lambda_al: f64,
    #[serde(rename = "lambda_AR")]
    pub lambda_ar: f64,
    #[serde(rename = "sigma_AB")]
    pub sigma_ab: f64,
    #[serde(rename = "E_ML")]
    pub e_ml: f64,
    #[serde(rename = "E_MR")]
    pub e_mr: f64,
    #[serde(rename = "E_MC")]
    pub e_mc: f64,
    #[serde(rename = "lambda_ML")]
    pub lambda_ml: f64,
    #[serde(rename = "lambda_MR")]
    pub lambda_mr: f64,
    #[serde(rename = "sigma_MB")]
    pub sigma_mb: f64,
    #[serde(rename = "E_SL")]
    pub e_sl: f64,
    #[serde(rename = "E_SR")]
    pub e_sr: f64,
    #[serde(rename = "E_SC")]
    pub e_sc: f64,
    #[serde(rename = "lambda_SL")]
    pub lambda_sl: f64,
    #[serde(rename = "lambda_SR")]
    pub lambda_sr: f64,
    #[serde(rename = "x0SL")]
    pub x0_sl: f64,
    #[serde(rename = "x0SR")]
    pub x0_sr: f64,
    #[serde(rename = "sigma_SB")]
    pub sigma_sb: f64,
}

/// Thermo-electro-mechanical constants of one wire.
///
/// Immutable once validated; share freely between simulations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialParams {
    /// Wire radius [m].
    pub r0: f64,
    /// Length of the undeformed, fully austenitic wire [m].
    pub l0: f64,
    /// Austenite Young's modulus [Pa].
    #[serde(rename = "E_A")]
    pub e_a: f64,
    /// Martensite Young's modulus [Pa].
    #[serde(rename = "E_M")]
    pub e_m: f64,
    /// Transformation strain [-].
    #[serde(rename = "eps_T")]
    pub eps_t: f64,
    /// Density [kg/m³].
    #[serde(rename = "rho_V")]
    pub rho_v: f64,
    /// Specific heat [J/(kg K)].
    #[serde(rename = "c_V")]
    pub c_v: f64,
    /// Specific latent heat [J/kg].
    #[serde(rename = "h_M")]
    pub h_m: f64,
    /// Convective cooling coefficient [W/(K m²)].
    pub lambda_h: f64,
    /// Poisson ratio [-].
    pub nu: f64,
    /// Reference temperature [K].
    #[serde(rename = "T0")]
    pub t0: f64,
    /// Austenite resistivity at `T0` [Ω m].
    #[serde(rename = "rho_eA0")]
    pub rho_ea0: f64,
    /// Martensite resistivity at `T0` [Ω m].
    #[serde(rename = "rho_eM0")]
    pub rho_em0: f64,
    /// Austenite resistivity temperature coefficient [1/K].
    #[serde(rename = "alpha_A")]
    pub alpha_a: f64,
    /// Martensite resistivity temperature coefficient [1/K].
    #[serde(rename = "alpha_M")]
    pub alpha_m: f64,
    /// Thermal activation time constant [s].
    pub tau_x: f64,
    /// Mesoscopic layer volume [m³].
    #[serde(rename = "V_L")]
    pub v_l: f64,
    /// Boltzmann constant [J/K].
    #[serde(rename = "k_B")]
    pub k_b: f64,
    #[serde(flatten)]
    pub outer: OuterLoop,
}

/// Smallest admitted value of the interpolator log arguments on [0, 1].
pub const LOG_ARG_FLOOR: f64 = 1e-9;

impl MaterialParams {
    /// The bundled identified parameter set.
    pub fn identified() -> Self {
        // The bundled file is part of the crate and validated by the test suite.
        Self::from_toml_str(IDENTIFIED_TOML).expect("bundled parameter file is valid")
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let p: MaterialParams =
            toml::from_str(text).map_err(|e| Error::Config(format!("parameter file: {e}")))?;
        p.validate()?;
        Ok(p)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| Error::Io(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("parameters serialize to TOML")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path.as_ref(), self.to_toml_string())?;
        Ok(())
    }

    /// Wire volume `π r0² l0` [m³].
    pub fn volume(&self) -> f64 {
        PI * self.r0 * self.r0 * self.l0
    }

    /// Lateral heat-exchange surface `2π r0 l0` [m²].
    pub fn surface(&self) -> f64 {
        2.0 * PI * self.r0 * self.l0
    }

    /// Cross-section `π r0²` [m²].
    pub fn cross_section(&self) -> f64 {
        PI * self.r0 * self.r0
    }

    /// Heat capacity of the whole wire `Ω ρ_V c_V` [J/K].
    pub fn heat_capacity(&self) -> f64 {
        self.volume() * self.rho_v * self.c_v
    }

    /// Convective conductance `λ A_S` [W/K].
    pub fn conductance(&self) -> f64 {
        self.lambda_h * self.surface()
    }

    /// Steady-state temperature under constant Joule power without transformation.
    pub fn steady_temperature(&self, power: f64, t_env: f64) -> f64 {
        t_env + power / self.conductance()
    }

    pub fn validate(&self) -> Result<()> {
        let positive: [(&'static str, f64); 12] = [
            ("r0", self.r0),
            ("l0", self.l0),
            ("E_A", self.e_a),
            ("E_M", self.e_m),
            ("eps_T", self.eps_t),
            ("rho_V", self.rho_v),
            ("c_V", self.c_v),
            ("lambda_h", self.lambda_h),
            ("tau_x", self.tau_x),
            ("V_L", self.v_l),
            ("k_B", self.k_b),
            ("T0", self.t0),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("must be finite and > 0, got {value}"),
                });
            }
        }
        let o = &self.outer;
        // log(1 + λ x) and log(1 + λ (1 - x)) must stay defined on [0, 1]; both are
        // affine in x so checking the end points suffices.
        let logs: [(&'static str, f64); 4] = [
            ("lambda_AL", o.lambda_al),
            ("lambda_AR", o.lambda_ar),
            ("lambda_ML", o.lambda_ml),
            ("lambda_MR", o.lambda_mr),
        ];
        for (name, lambda) in logs {
            if !lambda.is_finite() || 1.0 + lambda.min(0.0) < LOG_ARG_FLOOR {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("1 + {name}·x must stay positive on [0, 1], got {lambda}"),
                });
            }
        }
        let finite = [
            o.e_al, o.e_ar, o.e_ac, o.sigma_ab, o.e_ml, o.e_mr, o.e_mc, o.sigma_mb, o.e_sl,
            o.e_sr, o.e_sc, o.lambda_sl, o.lambda_sr, o.x0_sl, o.x0_sr, o.sigma_sb, self.h_m,
            self.nu, self.rho_ea0, self.rho_em0, self.alpha_a, self.alpha_m,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "outer",
                reason: "all coefficients must be finite".into(),
            });
        }
        if self.rho_ea0 <= 0.0 || self.rho_em0 <= 0.0 {
            return Err(Error::InvalidParameter {
                name: "rho_e",
                reason: "resistivities must be > 0".into(),
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_set_matches_identified_values() {
        let p = MaterialParams::identified();
        assert_eq!(p.r0, 37.5e-6);
        assert_eq!(p.l0, 100e-3);
        assert_eq!(p.e_a, 50e9);
        assert_eq!(p.e_m, 31e9);
        assert_eq!(p.eps_t, 4.07e-2);
        assert_eq!(p.lambda_h, 235.0);
        assert_eq!(p.c_v, 450.0);
        assert_eq!(p.h_m, 22e3);
        assert_eq!(p.rho_ea0, 8.11e-7);
        assert_eq!(p.rho_em0, 10.02e-7);
        assert_eq!(p.alpha_m, 1.4e-3);
        assert_eq!(p.outer.sigma_ab, 1.411e9);
        assert_eq!(p.outer.x0_sl, -1.0e-3);
        assert_eq!(p.outer.sigma_sb, 3.821e5);
    }

    #[test]
    fn derived_geometry() {
        let p = MaterialParams::identified();
        assert!((p.volume() - 4.4179e-10).abs() < 1e-14);
        assert!((p.conductance() - 5.537e-3).abs() < 1e-6);
        assert!((p.rho_v * p.c_v - 2.925e6).abs() < 1e-6);
    }

    #[test]
    fn toml_round_trip() {
        let p = MaterialParams::identified();
        let text = p.to_toml_string();
        assert!(text.contains("E_A = "));
        assert!(text.contains("sigma_SB = "));
        assert_eq!(MaterialParams::from_toml_str(&text).unwrap(), p);
    }

    #[test]
    fn rejects_invalid_values() {
        let mut p = MaterialParams::identified();
        p.tau_x = 0.0;
        assert!(matches!(p.validate(), Err(Error::InvalidParameter { name: "tau_x", .. })));
        let mut p = MaterialParams::identified();
        p.outer.lambda_ar = -1.5;
        assert!(p.validate().is_err());
    }

    #[test]
    fn missing_key_is_a_config_error() {
        let text = IDENTIFIED_TOML.replace("E_A = ", "E_Ax = ");
        assert!(matches!(MaterialParams::from_toml_str(&text), Err(Error::Config(_))));
    }
}
