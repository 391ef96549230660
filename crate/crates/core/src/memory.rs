//! Branch memory of the hysteresis: the stack of nested minor loops.
//!
//! Level 1 is the outer loop. A reversal at `x_rev` opens level `k + 1` whose
//! new branch blends the parent's two branches,
//!
//! ```text
//! new(x) = parent_same(x) + β(x) · (parent_other(x) − parent_same(x))
//! ```
//!
//! with `β` linear in `x`, equal to 1 at `x_rev` and 0 at the far end of the new
//! range. The branch of the other kind is inherited unchanged. The blend passes
//! through the reversal point, rejoins the parent at the far end (where the loop
//! closes), stays between the parent's branches and keeps the common
//! temperature slope `σ_S(x)`. Curves are evaluated exactly, bottom-up through
//! the stack.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::constitutive::{compliance, Outer};
use crate::error::{Error, Result};
use crate::params::MaterialParams;

/// Tolerance on admissible phase-fraction ranges.
pub const RANGE_TOL: f64 = 1e-9;
/// Narrowest admissible range of a new minor loop.
pub const MIN_LOOP_WIDTH: f64 = 1e-6;
/// Phase fraction below which a new loading branch restarts the outer loop.
pub const OUTER_RESET_TOL: f64 = 1e-9;
/// Samples per curve in the debug dump.
pub const DEFAULT_GRID: usize = 201;

/// Which of the two hysteresis branches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BranchKind {
    /// Loading branch `σ_A`, austenite to martensite.
    Loading,
    /// Unloading branch `σ_M`, martensite to austenite.
    Unloading,
}

impl BranchKind {
    pub fn opposite(self) -> Self {
        match self {
            Self::Loading => Self::Unloading,
            Self::Unloading => Self::Loading,
        }
    }
}

/// One level of the memory stack.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchRecord {
    pub level: usize,
    /// Branch opened by the reversal; `None` for the outer loop.
    pub kind: Option<BranchKind>,
    pub x_lo: f64,
    pub x_hi: f64,
    pub x_rev: f64,
    /// Effective strain at the reversal.
    pub reversal_eps: f64,
    pub reversal_temp: f64,
}

impl BranchRecord {
    fn outer() -> Self {
        Self {
            level: 1,
            kind: None,
            x_lo: 0.0,
            x_hi: 1.0,
            x_rev: f64::NAN,
            reversal_eps: f64::NAN,
            reversal_temp: f64::NAN,
        }
    }

    /// Blend weight and its slope.
    #[inline]
    fn beta(&self, x: f64) -> (f64, f64) {
        match self.kind {
            Some(BranchKind::Unloading) => {
                let w = self.x_rev - self.x_lo;
                ((x - self.x_lo) / w, 1.0 / w)
            }
            Some(BranchKind::Loading) => {
                let w = self.x_hi - self.x_rev;
                ((self.x_hi - x) / w, -1.0 / w)
            }
            None => (0.0, 0.0),
        }
    }
}

/// Both branches of the current level and their partials at `(x, T)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchPair {
    pub a: f64,
    pub da_dx: f64,
    pub m: f64,
    pub dm_dx: f64,
    /// Common temperature slope `σ_S(x)`.
    pub d_dt: f64,
}

impl BranchPair {
    pub fn value(&self, kind: BranchKind) -> f64 {
        match kind {
            BranchKind::Loading => self.a,
            BranchKind::Unloading => self.m,
        }
    }

    pub fn dx(&self, kind: BranchKind) -> f64 {
        match kind {
            BranchKind::Loading => self.da_dx,
            BranchKind::Unloading => self.dm_dx,
        }
    }
}

/// Strain limits of the current branches at the ends of the admissible range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrainBounds {
    pub a_lo: f64,
    pub a_hi: f64,
    pub m_lo: f64,
    pub m_hi: f64,
}

/// What [`BranchMemory::reverse`] did.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReversalOutcome {
    Pushed,
    /// The reversal undid the top loop before it opened up.
    PoppedOne,
    /// Loading restarted from pure austenite: back on the outer loop.
    Reset,
    /// Degenerate reversal on the outer loop, nothing recorded.
    Ignored,
}

/// Stack of hysteresis branches, bottom = outer loop.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchMemory {
    params: MaterialParams,
    stack: Vec<BranchRecord>,
}

impl BranchMemory {
    pub fn new(params: &MaterialParams) -> Self {
        Self { params: *params, stack: vec![BranchRecord::outer()] }
    }

    pub fn params(&self) -> &MaterialParams {
        &self.params
    }

    /// Current inner-loop index `n_l`.
    pub fn level(&self) -> usize {
        self.stack.len()
    }

    pub fn top(&self) -> &BranchRecord {
        self.stack.last().expect("memory stack is never empty")
    }

    pub fn records(&self) -> &[BranchRecord] {
        &self.stack
    }

    /// Admissible range of the current level.
    pub fn range(&self) -> (f64, f64) {
        let t = self.top();
        (t.x_lo, t.x_hi)
    }

    pub fn reset(&mut self) {
        self.stack.truncate(1);
    }

    fn check_range(&self, x: f64) -> Result<f64> {
        let t = self.top();
        if !x.is_finite() || x < t.x_lo - RANGE_TOL || x > t.x_hi + RANGE_TOL {
            return Err(Error::OutOfRange { x, lo: t.x_lo, hi: t.x_hi, level: t.level });
        }
        Ok(x.clamp(t.x_lo, t.x_hi))
    }

    /// Both branches at `(x, T)` without range checks.
    #[inline]
    pub fn pair(&self, x: f64, temp: f64) -> BranchPair {
        let o = Outer::new(&self.params);
        let (mut a, mut da, mut m, mut dm) = (o.a0(x), o.da0(x), o.m0(x), o.dm0(x));
        for r in &self.stack[1..] {
            let (b, db) = r.beta(x);
            let (gap, dgap) = (a - m, da - dm);
            match r.kind {
                Some(BranchKind::Unloading) => {
                    m += b * gap;
                    dm += db * gap + b * dgap;
                }
                Some(BranchKind::Loading) => {
                    a -= b * gap;
                    da -= db * gap + b * dgap;
                }
                None => {}
            }
        }
        let dtemp = temp - self.params.t0;
        let (s, ds) = (o.s(x), o.ds(x));
        BranchPair {
            a: a + s * dtemp,
            da_dx: da + ds * dtemp,
            m: m + s * dtemp,
            dm_dx: dm + ds * dtemp,
            d_dt: s,
        }
    }

    /// Branch stress of the current level.
    pub fn branch_eval(&self, kind: BranchKind, x: f64, temp: f64) -> Result<f64> {
        let x = self.check_range(x)?;
        Ok(self.pair(x, temp).value(kind))
    }

    /// `(∂σ_branch/∂x_M, ∂σ_branch/∂T)` of the current level.
    pub fn branch_partials(&self, kind: BranchKind, x: f64, temp: f64) -> Result<(f64, f64)> {
        let x = self.check_range(x)?;
        let p = self.pair(x, temp);
        Ok((p.dx(kind), p.d_dt))
    }

    /// Range a reversal at `x_rev` onto `new_kind` would open.
    pub fn reversal_range(&self, x_rev: f64, new_kind: BranchKind) -> (f64, f64) {
        let (lo, hi) = self.range();
        match new_kind {
            BranchKind::Unloading => (lo, x_rev),
            BranchKind::Loading => (x_rev, hi),
        }
    }

    /// Open a new minor loop at `x_rev`, moving onto `new_kind`.
    pub fn push_reversal(
        &mut self,
        x_rev: f64,
        temp: f64,
        new_kind: BranchKind,
        reversal_eps: f64,
    ) -> Result<()> {
        let x_rev = self.check_range(x_rev)?;
        let (lo, hi) = self.reversal_range(x_rev, new_kind);
        if hi - lo < MIN_LOOP_WIDTH {
            return Err(Error::DegenerateReversal { x: x_rev, lo, hi });
        }
        let level = self.level() + 1;
        self.stack.push(BranchRecord {
            level,
            kind: Some(new_kind),
            x_lo: lo,
            x_hi: hi,
            x_rev,
            reversal_eps,
            reversal_temp: temp,
        });
        Ok(())
    }

    /// Close the current minor loop: `n_l → n_l − 2`.
    pub fn pop_closure(&mut self) -> Result<()> {
        if self.level() < 3 {
            return Err(Error::MemoryUnderflow { level: self.level() });
        }
        self.stack.truncate(self.level() - 2);
        Ok(())
    }

    /// Reversal bookkeeping shared by both models.
    ///
    /// A loading reversal from pure austenite restarts the outer loop, a
    /// reversal that would open an empty loop undoes the top level instead.
    pub fn reverse(
        &mut self,
        x_rev: f64,
        temp: f64,
        new_kind: BranchKind,
        reversal_eps: f64,
    ) -> Result<ReversalOutcome> {
        if new_kind == BranchKind::Loading && x_rev <= OUTER_RESET_TOL {
            self.reset();
            return Ok(ReversalOutcome::Reset);
        }
        let x = self.check_range(x_rev)?;
        let (lo, hi) = self.reversal_range(x, new_kind);
        if hi - lo >= MIN_LOOP_WIDTH {
            self.push_reversal(x, temp, new_kind, reversal_eps)?;
            Ok(ReversalOutcome::Pushed)
        } else if self.level() >= 2 {
            self.stack.pop();
            Ok(ReversalOutcome::PoppedOne)
        } else {
            Ok(ReversalOutcome::Ignored)
        }
    }

    /// Strain at which the branch of `kind` is reached with phase fraction `x`.
    pub fn branch_strain(&self, kind: BranchKind, x: f64, temp: f64) -> f64 {
        compliance(x, &self.params) * self.pair(x, temp).value(kind) + self.params.eps_t * x
    }

    /// Strain-range limits of the current branches at `T`.
    pub fn strain_bounds(&self, temp: f64) -> StrainBounds {
        let (lo, hi) = self.range();
        StrainBounds {
            a_lo: self.branch_strain(BranchKind::Loading, lo, temp),
            a_hi: self.branch_strain(BranchKind::Loading, hi, temp),
            m_lo: self.branch_strain(BranchKind::Unloading, lo, temp),
            m_hi: self.branch_strain(BranchKind::Unloading, hi, temp),
        }
    }

    /// Uniform samples `(x, σ_A, σ_M)` of the current level over its range.
    pub fn sample(&self, n: usize, temp: f64) -> Vec<(f64, f64, f64)> {
        let (lo, hi) = self.range();
        let n = n.max(2);
        (0..n)
            .map(|i| {
                let x = lo + (hi - lo) * i as f64 / (n - 1) as f64;
                let p = self.pair(x, temp);
                (x, p.a, p.m)
            })
            .collect()
    }

    /// Structured text dump of the whole stack with sampled curves at `T`.
    pub fn debug_dump(&self, temp: f64, grid: usize) -> String {
        let mut out = String::new();
        let mut view = self.clone();
        let levels: Vec<BranchRecord> = self.stack.clone();
        for r in levels.iter().rev() {
            view.stack.truncate(r.level);
            let _ = writeln!(out, "[[level]]");
            let _ = writeln!(out, "level = {}", r.level);
            let _ = writeln!(out, "kind = \"{}\"", match r.kind {
                None => "outer",
                Some(BranchKind::Loading) => "loading",
                Some(BranchKind::Unloading) => "unloading",
            });
            let _ = writeln!(out, "x_lo = {}\nx_hi = {}", r.x_lo, r.x_hi);
            if r.kind.is_some() {
                let _ = writeln!(out, "x_rev = {}\nreversal_eps = {}", r.x_rev, r.reversal_eps);
            }
            let s = view.sample(grid, temp);
            let list = |f: &dyn Fn(&(f64, f64, f64)) -> f64| {
                s.iter().map(|v| format!("{:e}", f(v))).collect::<Vec<_>>().join(", ")
            };
            let _ = writeln!(out, "x = [{}]", list(&|v| v.0));
            let _ = writeln!(out, "sigma_A = [{}]", list(&|v| v.1));
            let _ = writeln!(out, "sigma_M = [{}]\n", list(&|v| v.2));
        }
        out
    }
}
