//! Best-of-both-worlds pipeline for goods with copies: equilibrium, bihierarchy, lottery, and the chores duality.

pub mod bihierarchy;
pub mod ceei;
pub mod chores;
pub mod lottery;
mod numeric;

use std::fmt;
use std::str::FromStr;

use num_traits::Zero;

use crate::rational::{to_f64, Rational};

pub use bihierarchy::{
    bihierarchy_decompose, build_bihierarchy, preference_order, Bihierarchy, QuotaSet, Side,
};
pub use ceei::{bang_per_buck_holds, compute_ceei, compute_ceei_with, row_cap, verify_ceei};
pub use chores::{
    check_ef11_chores, chores_ef1_factor, chores_to_copies, copies_alloc_to_chores, ChoresInstance,
};
pub use lottery::{
    audit_lottery, ce_lottery, ce_lottery_with, copies_view, CeLottery, Lottery, LotteryAudit,
    LotteryEntry, SupportAudit,
};

/// Fractional allocation, agents by goods.
pub type Matrix = Vec<Vec<Rational>>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CeeiMode {
    /// Unit cells and supplies.
    Copies,
    /// Adds a cap of (total copies)/n on each row.
    CopiesBalanced,
}

impl CeeiMode {
    pub fn name(self) -> &'static str {
        match self {
            CeeiMode::Copies => "copies",
            CeeiMode::CopiesBalanced => "copies-balanced",
        }
    }
}

impl fmt::Display for CeeiMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CeeiMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "copies" => Ok(CeeiMode::Copies),
            "copies-balanced" | "copies+balanced" => Ok(CeeiMode::CopiesBalanced),
            other => Err(format!(
                "unknown mode `{}` (expected copies or copies-balanced)",
                other
            )),
        }
    }
}

/// Non-negative slack of each equilibrium condition, on normalized valuations.
#[derive(Clone, Debug, PartialEq)]
pub struct Residuals {
    pub feasibility: Rational,
    pub best_bundle: Rational,
    pub cheapest_bundle: Rational,
    pub clearing: Rational,
}

impl Residuals {
    pub fn max(&self) -> Rational {
        [
            &self.feasibility,
            &self.best_bundle,
            &self.cheapest_bundle,
            &self.clearing,
        ]
        .into_iter()
        .max()
        .cloned()
        .unwrap_or_else(Rational::zero)
    }

    pub fn max_f64(&self) -> f64 {
        to_f64(&self.max())
    }

    pub fn is_exact(&self) -> bool {
        self.max().is_zero()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CeeiCertificate {
    pub mode: CeeiMode,
    pub x: Matrix,
    pub prices: Vec<Rational>,
    pub residuals: Residuals,
    /// False when `x` went through the rounding bridge and residuals describe the numeric point.
    pub exact: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CeeiOptions {
    /// Largest accepted residual.
    pub tau: f64,
    /// Newton iterations across all smoothing levels.
    pub max_iterations: usize,
    /// Denominator bound of the rounding bridge.
    pub max_denominator: u64,
}

impl Default for CeeiOptions {
    fn default() -> Self {
        CeeiOptions {
            tau: 1e-6,
            max_iterations: 100_000,
            max_denominator: 10_000,
        }
    }
}
