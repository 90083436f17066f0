//! Lotteries over integral type-level assignments and the CE lottery pipeline.

use num_traits::{One, Zero};
use rayon::prelude::*;

use super::bihierarchy::{bihierarchy_decompose, build_bihierarchy, Bihierarchy};
use super::ceei::{compute_ceei_with, row_cap};
use super::{CeeiCertificate, CeeiMode, CeeiOptions, Matrix};
use crate::copies::{expand_copies, expand_copies_balanced, CopiesView};
use crate::error::Result;
use crate::fairness::{
    check_ef11_wc, check_fractional_ef, check_fractional_po, check_po, check_prop1_wc,
    FairnessReport, FractionalRows, Universe,
};
use crate::instance::{Allocation, Bundle, Instance};
use crate::rational::Rational;

#[derive(Clone, Debug, PartialEq)]
pub struct LotteryEntry {
    pub weight: Rational,
    /// Goods (types) each agent receives.
    pub assignment: Vec<Bundle>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Lottery {
    pub entries: Vec<LotteryEntry>,
}

impl Lottery {
    pub fn total_weight(&self) -> Rational {
        self.entries
            .iter()
            .fold(Rational::zero(), |a, e| a + &e.weight)
    }

    /// Expected assignment matrix.
    pub fn marginals(&self, agents: usize, goods: usize) -> Matrix {
        let mut x = vec![vec![Rational::zero(); goods]; agents];
        for e in &self.entries {
            for (i, b) in e.assignment.iter().enumerate() {
                for g in b.iter() {
                    x[i][g] += &e.weight;
                }
            }
        }
        x
    }

    /// Copy-level allocations of the support.
    pub fn allocations(&self, view: &CopiesView) -> Result<Vec<Allocation>> {
        self.entries
            .iter()
            .map(|e| view.to_allocation(&e.assignment))
            .collect()
    }
}

pub fn copies_view(instance: &Instance, mode: CeeiMode) -> Result<CopiesView> {
    match mode {
        CeeiMode::Copies => expand_copies(instance),
        CeeiMode::CopiesBalanced => expand_copies_balanced(instance),
    }
}

#[derive(Clone, Debug)]
pub struct CeLottery {
    pub certificate: CeeiCertificate,
    pub hierarchy: Bihierarchy,
    pub lottery: Lottery,
}

/// Equilibrium, bihierarchy and decomposition in sequence.
pub fn ce_lottery(instance: &Instance, mode: CeeiMode) -> Result<CeLottery> {
    ce_lottery_with(instance, mode, &CeeiOptions::default())
}

pub fn ce_lottery_with(
    instance: &Instance,
    mode: CeeiMode,
    options: &CeeiOptions,
) -> Result<CeLottery> {
    let certificate = compute_ceei_with(instance, mode, options)?;
    let hierarchy = build_bihierarchy(instance, &certificate.x, mode);
    let lottery = bihierarchy_decompose(&certificate.x, &hierarchy)?;
    Ok(CeLottery {
        certificate,
        hierarchy,
        lottery,
    })
}

/// Ex-post checks of one support allocation.
#[derive(Clone, Debug)]
pub struct SupportAudit {
    pub weight: Rational,
    pub allocation: Allocation,
    pub feasible: bool,
    pub prop1: FairnessReport,
    pub ef11: FairnessReport,
    pub po: FairnessReport,
}

#[derive(Clone, Debug)]
pub struct LotteryAudit {
    pub weights_sum_to_one: bool,
    pub marginals_match: bool,
    pub ex_ante_ef: FairnessReport,
    pub ex_ante_po: FairnessReport,
    pub support: Vec<SupportAudit>,
}

impl LotteryAudit {
    /// Every ex-ante and ex-post property the mode promises.
    pub fn holds(&self, mode: CeeiMode) -> bool {
        self.weights_sum_to_one
            && self.marginals_match
            && self.ex_ante_ef.holds
            && self.ex_ante_po.holds
            && self.support.iter().all(|s| {
                s.feasible
                    && s.prop1.holds
                    && s.po.holds
                    && (mode == CeeiMode::CopiesBalanced || s.ef11.holds)
            })
    }
}

/// Audits `lottery` against the matrix it should realize; ex-ante checks use tolerance `tau_prime`.
pub fn audit_lottery(
    instance: &Instance,
    mode: CeeiMode,
    x: &Matrix,
    lottery: &Lottery,
    tau_prime: &Rational,
    cap: u64,
) -> Result<LotteryAudit> {
    let view = copies_view(instance, mode)?;
    let fs = &view.problem.constraint;
    let copy_inst = &view.problem.instance;
    let allocations = lottery.allocations(&view)?;
    let support = lottery
        .entries
        .par_iter()
        .zip(allocations)
        .map(|(e, allocation)| {
            Ok(SupportAudit {
                weight: e.weight.clone(),
                feasible: fs.is_feasible_allocation(&allocation, false),
                prop1: check_prop1_wc(copy_inst, fs, &allocation)?,
                ef11: check_ef11_wc(copy_inst, fs, &allocation)?,
                po: check_po(copy_inst, fs, &allocation, Universe::AllFeasible, cap)?,
                allocation,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let rows = FractionalRows {
        row_cap: row_cap(instance, mode),
    };
    Ok(LotteryAudit {
        weights_sum_to_one: lottery.total_weight() == Rational::one(),
        marginals_match: &lottery.marginals(instance.agent_count(), instance.good_count()) == x,
        ex_ante_ef: check_fractional_ef(instance, x, tau_prime),
        ex_ante_po: check_fractional_po(instance, x, &rows, tau_prime),
        support,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feasibility::DEFAULT_CAP;
    use crate::rational::{int, rat};

    #[test]
    fn symmetric_square_gives_two_matchings() {
        let inst = Instance::from_values(vec![vec![int(1), int(1)]; 2]).unwrap();
        let out = ce_lottery(&inst, CeeiMode::Copies).unwrap();
        assert_eq!(out.lottery.entries.len(), 2);
        let audit = audit_lottery(
            &inst,
            CeeiMode::Copies,
            &out.certificate.x,
            &out.lottery,
            &rat(1, 1000),
            DEFAULT_CAP,
        )
        .unwrap();
        assert!(audit.holds(CeeiMode::Copies));
        for s in &audit.support {
            assert_eq!(
                s.allocation
                    .bundles()
                    .iter()
                    .map(|b| b.len())
                    .collect::<Vec<_>>(),
                vec![1, 1]
            );
        }
    }

    #[test]
    fn balanced_supports_are_balanced() {
        let inst = Instance::with_supplies(
            vec!["a".into(), "b".into(), "c".into()],
            vec![vec![int(5), int(1), int(1)], vec![int(4), int(2), int(1)]],
            vec![1, 2, 1],
        )
        .unwrap();
        let out = ce_lottery(&inst, CeeiMode::CopiesBalanced).unwrap();
        let audit = audit_lottery(
            &inst,
            CeeiMode::CopiesBalanced,
            &out.certificate.x,
            &out.lottery,
            &rat(1, 1000),
            DEFAULT_CAP,
        )
        .unwrap();
        assert!(audit.holds(CeeiMode::CopiesBalanced), "{:?}", audit);
    }
}
