//! Hybrid reformulation of the wire model: five operative modes, algebraic
//! phase-fraction recovery, flow and jump conditions and the sixteen jump maps.
//!
//! Modes are `AM0` (loading), `MA0` (unloading), `M` (full martensite) and
//! the slack duplicates `AM1`, `MA1`. Loading modes live on odd inner-loop
//! indices, unloading modes on even ones.

use std::fmt;

use serde::Serialize;

use crate::constitutive::{compliance, stress_partials_unchecked, stress_unchecked, Outer};
use crate::error::{Error, Result};
use crate::mas::thermal_rate;
use crate::memory::{BranchKind, BranchMemory, BranchPair, StrainBounds, MIN_LOOP_WIDTH, OUTER_RESET_TOL};
use crate::params::MaterialParams;
use crate::signal::InputSample;

/// Dead band on `dx_M/dt` [1/s] separating flow from branch reversal.
pub const RATE_BAND: f64 = 1e-9;
/// Slack on phase-fraction range conditions.
pub const POSITION_TOL: f64 = 1e-12;
/// Margin making strain-range and tension conditions strict.
pub const STRAIN_MARGIN: f64 = 1e-12;
/// Tolerance on the nonnegative-stress flow condition [Pa].
pub const STRESS_TOL: f64 = 1.0;
/// Smallest admissible denominator of the phase-rate formulas.
pub const DENOM_MIN: f64 = 1e-12;
/// Intervals of the bracketing sweep in [`zeta_xm`].
pub const SWEEP_INTERVALS: usize = 64;

/// Branch type `q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Branch {
    AM,
    MA,
    M,
}

impl Branch {
    /// Numeric code: AM = 1, MA = -1, M = 0.
    pub fn code(self) -> i8 {
        match self {
            Self::AM => 1,
            Self::MA => -1,
            Self::M => 0,
        }
    }

    pub fn from_code(code: i8) -> Option<Self> {
        match code {
            1 => Some(Self::AM),
            -1 => Some(Self::MA),
            0 => Some(Self::M),
            _ => None,
        }
    }
}

/// Jumping part of the state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DiscreteState {
    pub q: Branch,
    pub s: bool,
    pub n_l: usize,
}

impl DiscreteState {
    pub fn mode(&self) -> Mode {
        match (self.q, self.s) {
            (Branch::AM, false) => Mode::AM0,
            (Branch::MA, false) => Mode::MA0,
            (Branch::M, _) => Mode::M,
            (Branch::MA, true) => Mode::MA1,
            (Branch::AM, true) => Mode::AM1,
        }
    }

    /// Parity and slack invariants of the discrete state.
    pub fn check(&self) -> Result<()> {
        let ok = match self.q {
            Branch::M => !self.s && self.n_l == 1,
            Branch::AM => self.n_l % 2 == 1,
            Branch::MA => self.n_l >= 2 && self.n_l % 2 == 0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InconsistentJump(format!("invalid discrete state {self:?}")))
        }
    }
}

impl fmt::Display for DiscreteState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}[{}]", self.mode(), self.n_l)
    }
}

/// Operative modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Mode {
    AM0,
    MA0,
    M,
    MA1,
    AM1,
}

impl Mode {
    pub fn is_slack(self) -> bool {
        matches!(self, Self::AM1 | Self::MA1)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::AM0 => "AM0",
            Self::MA0 => "MA0",
            Self::M => "M",
            Self::MA1 => "MA1",
            Self::AM1 => "AM1",
        };
        f.write_str(s)
    }
}

/// Flowing part of the state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ContinuousState {
    pub eps: f64,
    pub temp: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HybridState {
    pub xc: ContinuousState,
    pub xd: DiscreteState,
    pub mem: BranchMemory,
}

impl HybridState {
    /// Unstressed-history start at strain `eps` and temperature `temp`.
    ///
    /// Picks `M` above the martensite threshold, the slack loading mode when
    /// the strain is below the zero-stress residual strain, `AM0` otherwise.
    pub fn initial(eps: f64, temp: f64, p: &MaterialParams) -> Result<Self> {
        if !(temp > 0.0) || !eps.is_finite() {
            return Err(Error::Precondition(format!("invalid initial state eps={eps}, T={temp}")));
        }
        let model = HybridModel::new(p);
        let mem = BranchMemory::new(p);
        let xc = ContinuousState { eps, temp };
        let xd = if eps >= model.threshold(temp) && model.sigma_bar(temp) > 0.0 {
            DiscreteState { q: Branch::M, s: false, n_l: 1 }
        } else {
            let slack = DiscreteState { q: Branch::AM, s: true, n_l: 1 };
            let z = model.zeta(&xc, &slack, &mem, None)?;
            DiscreteState { q: Branch::AM, s: eps < z.x * p.eps_t, n_l: 1 }
        };
        Ok(Self { xc, xd, mem })
    }

    pub fn mode(&self) -> Mode {
        self.xd.mode()
    }
}

/// Where the recovered phase fraction sits relative to the admissible range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Saturation {
    Interior,
    Lower,
    Upper,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Zeta {
    pub x: f64,
    pub sat: Saturation,
}

/// Everything the flow and jump conditions need at one `(state, input)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Eval {
    pub mode: Mode,
    pub x: f64,
    pub sat: Saturation,
    /// Saturated at pure austenite or pure martensite.
    pub outer_sat: bool,
    /// Phase rate from the mode formula at `x`.
    pub phi_raw: f64,
    /// Phase rate used by the flow (zero when saturated).
    pub phi: f64,
    pub lambda: f64,
    /// `σ(ε, x)` before the slack override.
    pub sigma: f64,
    pub sigma_rate: f64,
    pub eps_eff: f64,
    pub eps_eff_rate: f64,
    pub threshold: f64,
    /// `E_M⁻¹ σ̄_S Λ`, rate of the threshold in mode M.
    pub threshold_rate: f64,
    pub sigma_bar: f64,
    pub strain_rate: f64,
    pub range: (f64, f64),
    pub bounds: StrainBounds,
    pub eps: f64,
    pub temp: f64,
    pub n_l: usize,
}

impl Eval {
    /// Temperature rate of the flow.
    pub fn temp_rate(&self, p: &MaterialParams) -> f64 {
        self.lambda + p.h_m / p.c_v * self.phi
    }

    /// Reported stress: zero in slack.
    pub fn output_stress(&self) -> f64 {
        if self.mode.is_slack() {
            0.0
        } else {
            self.sigma
        }
    }
}

/// Jump indices in application priority: slack transitions, then mode
/// changes and reversals, then loop closures.
pub const JUMP_PRIORITY: [u8; 16] = [3, 6, 9, 11, 14, 1, 2, 5, 8, 12, 15, 16, 4, 7, 10, 13];

/// Short description of the condition behind each jump.
pub fn jump_trigger(index: u8) -> &'static str {
    match index {
        1 => "phi_xM < 0, eps <= threshold",
        2 => "eps >= threshold, strain rate >= threshold rate",
        3 => "sigma <= 0, dsigma/dt <= 0",
        4 => "loading branch range limit",
        5 => "phi_xM > 0",
        6 => "sigma <= 0, dsigma/dt <= 0",
        7 => "unloading branch range limit",
        8 => "eps <= threshold, strain rate <= threshold rate",
        9 => "eps <= threshold, strain rate <= threshold rate, sigma_bar <= 0",
        10 => "unloading branch range limit",
        11 => "eps >= eps_eff, strain rate >= eps_eff rate",
        12 => "phi_xM > 0",
        13 => "loading branch range limit",
        14 => "eps >= eps_eff, strain rate >= eps_eff rate",
        15 => "eps >= threshold, strain rate >= threshold rate",
        16 => "phi_xM < 0, eps <= threshold",
        _ => "unknown",
    }
}

/// Parameter-dependent constants of the hybrid model.
#[derive(Debug, Clone, Copy)]
pub struct HybridModel<'a> {
    pub p: &'a MaterialParams,
    sigma_bar0: f64,
    sigma_bar_s: f64,
}

fn branch_of(mode: Mode) -> BranchKind {
    match mode {
        Mode::AM0 | Mode::AM1 | Mode::M => BranchKind::Loading,
        Mode::MA0 | Mode::MA1 => BranchKind::Unloading,
    }
}

impl<'a> HybridModel<'a> {
    pub fn new(p: &'a MaterialParams) -> Self {
        let o = Outer::new(p);
        Self { p, sigma_bar0: o.a0(1.0), sigma_bar_s: o.s(1.0) }
    }

    /// `σ̄(T) = σ_A^(1)(1, T)`.
    pub fn sigma_bar(&self, temp: f64) -> f64 {
        self.sigma_bar0 + self.sigma_bar_s * (temp - self.p.t0)
    }

    /// `σ̄_S = σ_S(1)`.
    pub fn sigma_bar_s(&self) -> f64 {
        self.sigma_bar_s
    }

    /// Strain threshold of full martensite `E_M⁻¹ σ̄ + ε_T`.
    pub fn threshold(&self, temp: f64) -> f64 {
        self.sigma_bar(temp) / self.p.e_m + self.p.eps_t
    }

    /// Residual of the algebraic phase relation of `mode` and its slope in x.
    #[inline]
    fn residual(&self, mode: Mode, eps: f64, x: f64, pair: &BranchPair) -> (f64, f64) {
        let kind = branch_of(mode);
        if mode.is_slack() {
            (pair.value(kind), pair.dx(kind))
        } else {
            let sigma = stress_unchecked(eps, x, self.p);
            let (_, s_x) = stress_partials_unchecked(eps, x, self.p);
            (pair.value(kind) - sigma, pair.dx(kind) - s_x)
        }
    }

    /// Recovered phase fraction, saturated at the range ends when the
    /// relation has no root inside. Warm-started from `guess`.
    pub fn zeta(
        &self,
        xc: &ContinuousState,
        xd: &DiscreteState,
        mem: &BranchMemory,
        guess: Option<f64>,
    ) -> Result<Zeta> {
        let mode = xd.mode();
        if mode == Mode::M {
            return Ok(Zeta { x: 1.0, sat: Saturation::Interior });
        }
        let (lo, hi) = mem.range();
        let f = |x: f64| self.residual(mode, xc.eps, x, &mem.pair(x, xc.temp));
        let (g_lo, _) = f(lo);
        if g_lo >= 0.0 {
            return Ok(Zeta { x: lo, sat: if g_lo > 0.0 { Saturation::Lower } else { Saturation::Interior } });
        }
        let (g_hi, _) = f(hi);
        if g_hi <= 0.0 {
            return Ok(Zeta { x: hi, sat: if g_hi < 0.0 { Saturation::Upper } else { Saturation::Interior } });
        }
        let x = safeguarded_newton(&f, lo, hi, guess)?;
        Ok(Zeta { x, sat: Saturation::Interior })
    }

    /// Evaluate rates, strains and thresholds for the flow and jump conditions.
    pub fn eval(&self, state: &HybridState, input: &InputSample, guess: Option<f64>) -> Result<Eval> {
        self.eval_parts(&state.xc, &state.xd, &state.mem, input, guess)
    }

    /// [`Self::eval`] on borrowed state components.
    pub fn eval_parts(
        &self,
        xc: &ContinuousState,
        xd: &DiscreteState,
        mem: &BranchMemory,
        input: &InputSample,
        guess: Option<f64>,
    ) -> Result<Eval> {
        let p = self.p;
        let mode = xd.mode();
        let z = self.zeta(xc, xd, mem, guess)?;
        let x = z.x;
        let (lo, hi) = mem.range();
        let outer_sat = (z.sat == Saturation::Lower && lo <= 0.0) || (z.sat == Saturation::Upper && hi >= 1.0);
        let pair = mem.pair(x, xc.temp);
        let lambda = thermal_rate(xc.temp, input, p);
        let strain_rate = input.v / p.l0;
        let (s_eps, s_x) = stress_partials_unchecked(xc.eps, x, p);
        let latent = p.h_m / p.c_v;
        let phi_raw = match mode {
            Mode::M => 0.0,
            Mode::AM0 | Mode::MA0 => {
                let kind = branch_of(mode);
                let den = pair.dx(kind) - s_x + pair.d_dt * latent;
                check_denominator(den, mode)?;
                (s_eps * strain_rate - pair.d_dt * lambda) / den
            }
            Mode::AM1 | Mode::MA1 => {
                let kind = branch_of(mode);
                let den = pair.dx(kind) + pair.d_dt * latent;
                check_denominator(den, mode)?;
                -pair.d_dt * lambda / den
            }
        };
        let phi = if z.sat == Saturation::Interior { phi_raw } else { 0.0 };
        let sigma = stress_unchecked(xc.eps, x, p);
        let (eps_eff, eps_eff_rate) = if mode.is_slack() {
            (x * p.eps_t, phi * p.eps_t)
        } else {
            (xc.eps, strain_rate)
        };
        let bounds = mem.strain_bounds(xc.temp);
        Ok(Eval {
            mode,
            x,
            sat: z.sat,
            outer_sat,
            phi_raw,
            phi,
            lambda,
            sigma,
            sigma_rate: s_eps * strain_rate + s_x * phi,
            eps_eff,
            eps_eff_rate,
            threshold: self.threshold(xc.temp),
            threshold_rate: self.sigma_bar_s * lambda / p.e_m,
            sigma_bar: self.sigma_bar(xc.temp),
            strain_rate,
            range: (lo, hi),
            bounds,
            eps: xc.eps,
            temp: xc.temp,
            n_l: xd.n_l,
        })
    }

    /// `(dε/dt, dT/dt)`.
    pub fn flow_map(&self, state: &HybridState, input: &InputSample, guess: Option<f64>) -> Result<(f64, f64)> {
        let e = self.eval(state, input, guess)?;
        Ok((e.strain_rate, e.temp_rate(self.p)))
    }
}

fn check_denominator(den: f64, mode: Mode) -> Result<()> {
    if den.abs() < DENOM_MIN || !den.is_finite() {
        return Err(Error::SingularDenominator(den, mode.to_string()));
    }
    Ok(())
}

/// Root of an increasing-through-zero function on `[lo, hi]` with
/// `f(lo) < 0 < f(hi)`: Newton steps kept inside a shrinking bracket.
fn safeguarded_newton<F>(f: &F, lo: f64, hi: f64, guess: Option<f64>) -> Result<f64>
where
    F: Fn(f64) -> (f64, f64),
{
    let (mut a, mut b) = (lo, hi);
    let mut x = guess.filter(|g| *g > lo && *g < hi).unwrap_or(0.5 * (lo + hi));
    for _ in 0..200 {
        let (g, dg) = f(x);
        if g == 0.0 {
            return Ok(x);
        }
        if g < 0.0 {
            a = x;
        } else {
            b = x;
        }
        let newton = x - g / dg;
        let next = if dg.is_finite() && dg != 0.0 && newton > a && newton < b {
            newton
        } else {
            0.5 * (a + b)
        };
        if (next - x).abs() < 1e-13 || b - a < 1e-13 {
            return Ok(next);
        }
        x = next;
    }
    Err(Error::NoRoot { mode: "newton".into(), lo, hi })
}

/// Recovered phase fraction by the strict bracketing sweep: errors when the
/// relation has no sign change or more than one on the admissible range.
pub fn zeta_xm(state: &HybridState, p: &MaterialParams) -> Result<f64> {
    let mode = state.mode();
    if mode == Mode::M {
        return Ok(1.0);
    }
    let model = HybridModel::new(p);
    let (lo, hi) = state.mem.range();
    let f = |x: f64| model.residual(mode, state.xc.eps, x, &state.mem.pair(x, state.xc.temp));
    let n = SWEEP_INTERVALS;
    let xs: Vec<f64> = (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect();
    let gs: Vec<f64> = xs.iter().map(|&x| f(x).0).collect();
    let mut brackets = Vec::new();
    for i in 0..n {
        if gs[i] == 0.0 {
            brackets.push((xs[i], xs[i]));
        } else if gs[i] * gs[i + 1] < 0.0 {
            brackets.push((xs[i], xs[i + 1]));
        }
    }
    if gs[n] == 0.0 {
        brackets.push((xs[n], xs[n]));
    }
    match brackets.as_slice() {
        [] => Err(Error::NoRoot { mode: mode.to_string(), lo, hi }),
        [(a, b)] => {
            if a == b {
                return Ok(*a);
            }
            // Bisection to 1e-10, orientation-agnostic.
            let (mut a, mut b) = (*a, *b);
            let s_a = f(a).0.signum();
            while b - a > 1e-10 {
                let m = 0.5 * (a + b);
                if f(m).0.signum() == s_a {
                    a = m
                } else {
                    b = m
                }
            }
            Ok(0.5 * (a + b))
        }
        [first, second, ..] => Err(Error::MultipleRoots {
            mode: mode.to_string(),
            first: first.0,
            second: second.0,
        }),
    }
}

/// `dx_M/dt` of the current mode.
pub fn phi_xm(state: &HybridState, input: &InputSample, p: &MaterialParams) -> Result<f64> {
    Ok(HybridModel::new(p).eval(state, input, None)?.phi)
}

/// `(dε/dt, dT/dt)` of the current mode.
pub fn flow_map(state: &HybridState, input: &InputSample, p: &MaterialParams) -> Result<(f64, f64)> {
    HybridModel::new(p).flow_map(state, input, None)
}

/// `(ε_eff, dε_eff/dt)`.
pub fn effective_strain(state: &HybridState, input: &InputSample, p: &MaterialParams) -> Result<(f64, f64)> {
    let e = HybridModel::new(p).eval(state, input, None)?;
    Ok((e.eps_eff, e.eps_eff_rate))
}

fn dq1(e: &Eval) -> bool {
    e.phi_raw < -RATE_BAND && e.eps <= e.threshold && e.x > MIN_LOOP_WIDTH
}

fn dq2(e: &Eval) -> bool {
    e.eps >= e.threshold && e.strain_rate >= e.threshold_rate
}

fn dq3(e: &Eval) -> bool {
    e.phi_raw > RATE_BAND
}

fn dq4(e: &Eval) -> bool {
    e.eps <= e.threshold && e.strain_rate <= e.threshold_rate
}

fn ds_tensioned(e: &Eval) -> bool {
    e.sigma <= 0.0 && e.sigma_rate <= 0.0
}

fn ds_slack(e: &Eval, p: &MaterialParams) -> bool {
    e.eps > e.x * p.eps_t + STRAIN_MARGIN && e.strain_rate >= e.eps_eff_rate
}

fn dnl(e: &Eval, kind: BranchKind) -> bool {
    if e.n_l < 3 {
        return false;
    }
    let (lo, hi) = e.range;
    let (h_lo, h_hi) = match kind {
        BranchKind::Loading => (e.bounds.a_lo, e.bounds.a_hi),
        BranchKind::Unloading => (e.bounds.m_lo, e.bounds.m_hi),
    };
    // Only the end where the inner branch rejoins its grandparent closes the
    // loop; leaving through the reversal end is a reversal.
    match kind {
        BranchKind::Loading => {
            (e.x >= hi - POSITION_TOL && e.phi_raw >= 0.0)
                || (e.eps_eff > h_hi + STRAIN_MARGIN && e.eps_eff_rate >= 0.0)
        }
        BranchKind::Unloading => {
            (e.x <= lo + POSITION_TOL && e.phi_raw <= 0.0)
                || (e.eps_eff < h_lo - STRAIN_MARGIN && e.eps_eff_rate <= 0.0)
        }
    }
}

/// Whether jump `index` is enabled at `e`.
pub fn jump_enabled(index: u8, e: &Eval, p: &MaterialParams) -> bool {
    use Mode::*;
    match (index, e.mode) {
        (1, AM0) | (16, AM1) => dq1(e),
        (2, AM0) | (15, AM1) => dq2(e),
        (3, AM0) | (6, MA0) => ds_tensioned(e),
        (4, AM0) | (13, AM1) => dnl(e, BranchKind::Loading),
        (5, MA0) | (12, MA1) => dq3(e),
        (7, MA0) | (10, MA1) => dnl(e, BranchKind::Unloading),
        (8, M) => dq4(e) && e.sigma_bar > 0.0,
        (9, M) => dq4(e) && e.sigma_bar <= 0.0,
        (11, MA1) | (14, AM1) => ds_slack(e, p),
        _ => false,
    }
}

/// Active jumps, in priority order.
pub fn jump_check(e: &Eval, p: &MaterialParams) -> Vec<u8> {
    JUMP_PRIORITY.iter().copied().filter(|&i| jump_enabled(i, e, p)).collect()
}

/// Flow conditions; `Err` names the first violated one.
pub fn in_flow_set(e: &Eval, p: &MaterialParams) -> std::result::Result<(), String> {
    let cq = match e.mode {
        Mode::AM0 | Mode::AM1 => {
            (e.phi_raw >= -RATE_BAND || e.x <= MIN_LOOP_WIDTH) && e.eps <= e.threshold + STRAIN_MARGIN
        }
        Mode::MA0 | Mode::MA1 => e.phi_raw <= RATE_BAND,
        Mode::M => e.eps >= e.threshold - STRAIN_MARGIN,
    };
    if !cq {
        return Err(format!("C_q violated in {} (phi_xM = {:e}, eps = {}, threshold = {})", e.mode, e.phi_raw, e.eps, e.threshold));
    }
    let cs = match e.mode {
        Mode::AM0 | Mode::MA0 => e.sigma >= -STRESS_TOL,
        Mode::M => true,
        Mode::AM1 | Mode::MA1 => e.eps <= e.x * p.eps_t + STRAIN_MARGIN,
    };
    if !cs {
        return Err(format!("C_s violated in {} (sigma = {:e}, eps = {}, x_M = {})", e.mode, e.sigma, e.eps, e.x));
    }
    if e.n_l >= 3 {
        let (lo, hi) = e.range;
        let (h_lo, h_hi) = match branch_of(e.mode) {
            BranchKind::Loading => (e.bounds.a_lo, e.bounds.a_hi),
            BranchKind::Unloading => (e.bounds.m_lo, e.bounds.m_hi),
        };
        let inside = e.x >= lo - POSITION_TOL
            && e.x <= hi + POSITION_TOL
            && e.eps_eff >= h_lo - STRAIN_MARGIN
            && e.eps_eff <= h_hi + STRAIN_MARGIN;
        if !inside {
            return Err(format!(
                "C_nl violated at level {} (x_M = {}, range [{lo}, {hi}], eps_eff = {}, bounds [{h_lo}, {h_hi}])",
                e.n_l, e.x, e.eps_eff
            ));
        }
    }
    Ok(())
}

/// One applied jump.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Transition {
    pub t: f64,
    /// Jump counter before the jump.
    pub j: usize,
    pub from: DiscreteState,
    pub to: DiscreteState,
    pub index: u8,
    pub trigger: &'static str,
}

/// Apply jump `index` at the evaluated point `e`.
pub fn jump_map(state: &HybridState, index: u8, e: &Eval) -> Result<HybridState> {
    let mut next = state.clone();
    let xd = state.xd;
    let temp = state.xc.temp;
    let x = e.x;
    let eps_rev = e.eps_eff;
    let mem = &mut next.mem;
    let (q, s) = match index {
        1 | 16 => {
            mem.reverse(x, temp, BranchKind::Unloading, eps_rev)?;
            (Branch::MA, index == 16)
        }
        2 | 15 => {
            mem.reset();
            (Branch::M, false)
        }
        3 => (Branch::AM, true),
        4 | 13 => {
            mem.pop_closure()?;
            (Branch::AM, index == 13)
        }
        5 | 12 => {
            if x <= OUTER_RESET_TOL {
                mem.reset();
            } else {
                mem.reverse(x, temp, BranchKind::Loading, eps_rev)?;
            }
            (Branch::AM, index == 12)
        }
        6 => (Branch::MA, true),
        7 | 10 => {
            mem.pop_closure()?;
            (Branch::MA, index == 10)
        }
        8 | 9 => {
            mem.reset();
            mem.push_reversal(1.0, temp, BranchKind::Unloading, eps_rev)?;
            (Branch::MA, index == 9)
        }
        11 => (Branch::MA, false),
        14 => (Branch::AM, false),
        _ => return Err(Error::InconsistentJump(format!("no jump map with index {index}"))),
    };
    next.xd = DiscreteState { q, s, n_l: next.mem.level() };
    if let Err(err) = next.xd.check() {
        return Err(Error::InconsistentJump(format!(
            "jump {index} from {xd} cannot be realized by the branch memory: {err}"
        )));
    }
    Ok(next)
}

/// Strain at which the current loading branch meets zero stress.
pub fn slack_strain(x: f64, p: &MaterialParams) -> f64 {
    x * p.eps_t
}

/// Compliance-weighted strain `h(x) = C(x) σ + ε_T x`.
pub fn branch_strain(sigma: f64, x: f64, p: &MaterialParams) -> f64 {
    compliance(x, p) * sigma + p.eps_t * x
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn p() -> MaterialParams {
        MaterialParams::identified()
    }

    fn state(eps: f64, temp: f64, q: Branch, s: bool, p: &MaterialParams) -> HybridState {
        HybridState {
            xc: ContinuousState { eps, temp },
            xd: DiscreteState { q, s, n_l: 1 },
            mem: BranchMemory::new(p),
        }
    }

    fn input(v: f64, power: f64, t_env: f64) -> InputSample {
        InputSample { v, power, t_env }
    }

    #[test]
    fn mode_m_is_pure_martensite() {
        let p = p();
        let st = state(0.07, 350.0, Branch::M, false, &p);
        assert_eq!(zeta_xm(&st, &p).unwrap(), 1.0);
        assert_eq!(phi_xm(&st, &input(1e-4, 0.1, 300.0), &p).unwrap(), 0.0);
    }

    #[test]
    fn zeta_solves_the_branch_relation() {
        let p = p();
        let st = state(0.03, 372.0, Branch::AM, false, &p);
        let x = zeta_xm(&st, &p).unwrap();
        let a = st.mem.branch_eval(BranchKind::Loading, x, 372.0).unwrap();
        assert_relative_eq!(stress_unchecked(0.03, x, &p), a, max_relative = 1e-6);
        let fast = HybridModel::new(&p).zeta(&st.xc, &st.xd, &st.mem, Some(0.9)).unwrap();
        assert!((fast.x - x).abs() < 1e-9);
    }

    #[test]
    fn slack_root_guard() {
        let p = p();
        // Far above the reference temperature the unloading branch is positive everywhere.
        let mut st = state(0.0, 450.0, Branch::MA, true, &p);
        st.mem.push_reversal(1.0, 450.0, BranchKind::Unloading, 0.0).unwrap();
        st.xd.n_l = 2;
        assert!(matches!(zeta_xm(&st, &p), Err(Error::NoRoot { .. })));
    }

    #[test]
    fn slack_at_equilibrium_is_frozen() {
        let p = p();
        let st = state(0.0, 298.0, Branch::AM, true, &p);
        assert_eq!(phi_xm(&st, &input(0.0, 0.0, 298.0), &p).unwrap(), 0.0);
        let (e, r) = effective_strain(&st, &input(0.0, 0.0, 298.0), &p).unwrap();
        assert_eq!(r, 0.0);
        assert_relative_eq!(e, zeta_xm(&st, &p).unwrap() * p.eps_t, max_relative = 1e-8);
    }

    #[test]
    fn heating_in_slack_recovers_strain() {
        let p = p();
        let mut st = state(0.0, 330.0, Branch::MA, true, &p);
        st.mem.push_reversal(0.95, 330.0, BranchKind::Unloading, 0.0).unwrap();
        st.xd.n_l = 2;
        let (_, rate) = effective_strain(&st, &input(0.0, 0.3, 298.0), &p).unwrap();
        assert!(rate < 0.0);
    }

    #[test]
    fn loading_produces_martensite() {
        let p = p();
        let t = 372.0;
        let inp = input(1e-4, p.conductance() * (t - 298.0), 298.0);
        for eps in [0.015, 0.02, 0.03, 0.04] {
            let st = state(eps, t, Branch::AM, false, &p);
            assert!(phi_xm(&st, &inp, &p).unwrap() > 0.0, "eps = {eps}");
        }
    }

    #[test]
    fn flow_examples() {
        let p = p();
        let st = state(0.07, 298.0, Branch::M, false, &p);
        assert_eq!(flow_map(&st, &input(0.0, 0.0, 298.0), &p).unwrap(), (0.0, 0.0));
        let (_, dt) = flow_map(&st, &input(0.0, 0.41, 298.0), &p).unwrap();
        assert!((dt - 317.3).abs() < 0.1);
        let (de, _) = flow_map(&st, &input(2e-6, 0.0, 298.0), &p).unwrap();
        assert_eq!(de, 2e-6 / p.l0);
    }

    #[test]
    fn flow_set_examples() {
        let p = p();
        let model = HybridModel::new(&p);
        let st = state(0.02, 298.0, Branch::M, false, &p);
        let e = model.eval(&st, &input(0.0, 0.0, 298.0), None).unwrap();
        assert!(in_flow_set(&e, &p).unwrap_err().starts_with("C_q"));
        let t = p.t0;
        let st = state(0.0, t, Branch::AM, false, &p);
        let e = model.eval(&st, &input(1e-5, p.conductance() * (t - 298.0), 298.0), None).unwrap();
        assert!(in_flow_set(&e, &p).is_ok());
        assert!(jump_check(&e, &p).is_empty());
    }

    #[test]
    fn jump_examples() {
        let p = p();
        let model = HybridModel::new(&p);
        let t = 330.0;
        let thr = model.threshold(t);
        let hold = input(0.0, p.conductance() * (t - 298.0), 298.0);
        let st = state(thr + 1e-6, t, Branch::AM, false, &p);
        let e = model.eval(&st, &input(1e-3, hold.power, 298.0), None).unwrap();
        assert_eq!(jump_check(&e, &p), vec![2]);
        let m = jump_map(&st, 2, &e).unwrap();
        assert_eq!(m.xd, DiscreteState { q: Branch::M, s: false, n_l: 1 });
        let e = model.eval(&m, &input(1e-3, hold.power, 298.0), None).unwrap();
        assert!(jump_check(&e, &p).is_empty());
        let e = model.eval(&m, &input(-1e-3, hold.power, 298.0), None).unwrap();
        let mut below = m.clone();
        below.xc.eps = thr - 1e-9;
        let e2 = model.eval(&below, &input(-1e-3, hold.power, 298.0), None).unwrap();
        assert!(jump_check(&e, &p).is_empty());
        assert_eq!(jump_check(&e2, &p), vec![8]);
        let ma = jump_map(&below, 8, &e2).unwrap();
        assert_eq!(ma.xd, DiscreteState { q: Branch::MA, s: false, n_l: 2 });
    }

    #[test]
    fn return_to_outer_branch_from_austenite() {
        let p = p();
        let model = HybridModel::new(&p);
        let t = 372.0;
        let mut st = state(0.002, t, Branch::MA, false, &p);
        st.mem.push_reversal(0.3, t, BranchKind::Unloading, 0.03).unwrap();
        st.xd.n_l = 2;
        let mut e = model.eval(&st, &input(1e-3, p.conductance() * (t - 298.0), 298.0), None).unwrap();
        assert!(jump_check(&e, &p).contains(&5));
        let inner = jump_map(&st, 5, &e).unwrap();
        assert_eq!(inner.xd, DiscreteState { q: Branch::AM, s: false, n_l: 3 });
        e.x = 0.0;
        let next = jump_map(&st, 5, &e).unwrap();
        assert_eq!(next.xd, DiscreteState { q: Branch::AM, s: false, n_l: 1 });
    }

    #[test]
    fn initial_modes() {
        let p = p();
        let model = HybridModel::new(&p);
        assert_eq!(HybridState::initial(0.0, 298.0, &p).unwrap().mode(), Mode::AM1);
        assert_eq!(HybridState::initial(0.01, 372.0, &p).unwrap().mode(), Mode::AM0);
        let thr = model.threshold(372.0);
        assert_eq!(HybridState::initial(thr + 1e-3, 372.0, &p).unwrap().mode(), Mode::M);
    }

    #[test]
    fn discrete_invariants() {
        assert!(DiscreteState { q: Branch::M, s: true, n_l: 1 }.check().is_err());
        assert!(DiscreteState { q: Branch::AM, s: false, n_l: 2 }.check().is_err());
        assert!(DiscreteState { q: Branch::MA, s: true, n_l: 3 }.check().is_err());
        assert!(DiscreteState { q: Branch::MA, s: true, n_l: 4 }.check().is_ok());
        assert_eq!(Branch::from_code(-1), Some(Branch::MA));
    }
}
