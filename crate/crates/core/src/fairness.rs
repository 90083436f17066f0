//! Fairness and efficiency verifiers; every failing report carries a replayable witness.

use std::fmt;

use num_traits::{One, Signed, Zero};

use crate::error::{Error, Result};
use crate::feasibility::{Constraint, FeasibilitySet};
use crate::instance::{utilities, Allocation, Bundle, Instance};
use crate::lp::{LinearProgram, LpOutcome, Relation};
use crate::mnw::reduce_to_unconstrained;
use crate::pareto::{find_dominator, Dominator};
use crate::rational::{format_rational, to_f64, Rational};

#[derive(Clone, Debug, PartialEq)]
pub enum Witness {
    /// `envious` violates the property against `envied`; `removed`/`added` name the goods tried.
    Pair {
        envious: usize,
        envied: usize,
        removed: Option<usize>,
        added: Option<usize>,
    },
    Agent {
        agent: usize,
    },
    Dominator(Dominator),
}

/// Outcome class of a tolerance-based check.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Exact,
    WithinTolerance,
    Violated,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FairnessReport {
    pub property: String,
    pub holds: bool,
    pub witness: Option<Witness>,
    pub alpha: Option<Rational>,
    /// Set by fractional checks only.
    pub verdict: Option<Verdict>,
    /// Largest violation seen by a fractional check.
    pub slack: Option<Rational>,
}

impl FairnessReport {
    pub(crate) fn new(property: &str, witness: Option<Witness>) -> Self {
        FairnessReport {
            property: property.to_string(),
            holds: witness.is_none(),
            witness,
            alpha: None,
            verdict: None,
            slack: None,
        }
    }

    fn with_alpha(mut self, alpha: &Rational) -> Self {
        self.alpha = Some(alpha.clone());
        self
    }
}

impl fmt::Display for FairnessReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: {}",
            self.property,
            if self.holds { "holds" } else { "fails" }
        )?;
        if let Some(a) = &self.alpha {
            write!(f, " (alpha {})", format_rational(a))?;
        }
        if let Some(v) = self.verdict {
            write!(f, " [{:?}", v)?;
            if let Some(s) = &self.slack {
                write!(f, ", slack {:e}", to_f64(s))?;
            }
            write!(f, "]")?;
        }
        match &self.witness {
            Some(Witness::Pair {
                envious,
                envied,
                removed,
                added,
            }) => {
                write!(f, "; agent {} vs agent {}", envious + 1, envied + 1)?;
                if let Some(g) = removed {
                    write!(f, ", removed good #{}", g + 1)?;
                }
                if let Some(g) = added {
                    write!(f, ", added good #{}", g + 1)?;
                }
            }
            Some(Witness::Agent { agent }) => write!(f, "; agent {}", agent + 1)?,
            Some(Witness::Dominator(d)) => {
                let u: Vec<String> = d.utilities.iter().map(format_rational).collect();
                write!(
                    f,
                    "; dominated by {:?} with utilities ({})",
                    d.allocation.bundles(),
                    u.join(", ")
                )?;
            }
            None => {}
        }
        Ok(())
    }
}

/// Good in `set` with the largest value for `agent`, lowest index on ties.
fn argmax(instance: &Instance, agent: usize, set: Bundle) -> Option<usize> {
    set.iter().fold(None, |best, g| match best {
        Some(b) if instance.value(agent, b) >= instance.value(agent, g) => Some(b),
        _ => Some(g),
    })
}

fn pairs(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n).flat_map(move |i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
}

pub fn check_ef(instance: &Instance, alloc: &Allocation) -> FairnessReport {
    let witness = pairs(alloc.agent_count())
        .find(|&(i, j)| {
            instance.bundle_value(i, alloc.bundle(i)) < instance.bundle_value(i, alloc.bundle(j))
        })
        .map(|(i, j)| Witness::Pair {
            envious: i,
            envied: j,
            removed: None,
            added: None,
        });
    FairnessReport::new("ef", witness)
}

/// `v_i(A_i) >= alpha * v_i(A_j \ {g})` for the most valuable `g` in `A_j`.
pub fn check_alpha_ef1(
    instance: &Instance,
    alloc: &Allocation,
    alpha: &Rational,
) -> FairnessReport {
    let witness = pairs(alloc.agent_count()).find_map(|(i, j)| {
        let bj = alloc.bundle(j);
        let g = argmax(instance, i, bj)?;
        let own = instance.bundle_value(i, alloc.bundle(i));
        (own < alpha * instance.bundle_value(i, bj.without(g))).then_some(Witness::Pair {
            envious: i,
            envied: j,
            removed: Some(g),
            added: None,
        })
    });
    FairnessReport::new("ef1", witness).with_alpha(alpha)
}

/// Largest `alpha <= 1` for which the allocation is alpha-EF1.
pub fn ef1_factor(instance: &Instance, alloc: &Allocation) -> Rational {
    let mut factor = Rational::one();
    for (i, j) in pairs(alloc.agent_count()) {
        let bj = alloc.bundle(j);
        let Some(g) = argmax(instance, i, bj) else {
            continue;
        };
        let rival = instance.bundle_value(i, bj.without(g));
        if rival.is_positive() {
            let ratio = instance.bundle_value(i, alloc.bundle(i)) / rival;
            if ratio < factor {
                factor = ratio;
            }
        }
    }
    factor
}

/// Copy categories, with every uncovered good as its own category.
fn copy_categories(fs: &FeasibilitySet) -> Result<Vec<Bundle>> {
    match fs.constraint() {
        Constraint::Copies { categories } | Constraint::CopiesBalanced { categories } => {
            let mut out: Vec<Bundle> = categories.iter().map(|c| c.goods).collect();
            let covered = out.iter().fold(Bundle::EMPTY, |a, b| a.union(*b));
            out.extend(
                Bundle::full(fs.good_count())
                    .minus(covered)
                    .iter()
                    .map(Bundle::singleton),
            );
            Ok(out)
        }
        other => Err(Error::UnsupportedConstraint(other.name().to_string())),
    }
}

/// Goods of `set` whose category holds none of `own`.
fn uncommon(categories: &[Bundle], own: Bundle, set: Bundle) -> Bundle {
    categories
        .iter()
        .filter(|c| c.is_disjoint(own))
        .fold(Bundle::EMPTY, |acc, c| acc.union(c.intersect(set)))
}

/// EF1 without commons: the removed good must come from a category the envious agent does not hold.
pub fn check_ef1wc(
    instance: &Instance,
    fs: &FeasibilitySet,
    alloc: &Allocation,
    alpha: &Rational,
) -> Result<FairnessReport> {
    let categories = copy_categories(fs)?;
    let witness = pairs(alloc.agent_count()).find_map(|(i, j)| {
        let (ai, aj) = (alloc.bundle(i), alloc.bundle(j));
        let own = instance.bundle_value(i, ai);
        if own >= alpha * instance.bundle_value(i, aj) {
            return None;
        }
        let g = argmax(instance, i, uncommon(&categories, ai, aj));
        match g {
            Some(g) if own >= alpha * instance.bundle_value(i, aj.without(g)) => None,
            _ => Some(Witness::Pair {
                envious: i,
                envied: j,
                removed: g,
                added: None,
            }),
        }
    });
    Ok(FairnessReport::new("ef1wc", witness).with_alpha(alpha))
}

/// Weak-order prefix counts: `|{g' in set : v_i(g') >= t}|` for every threshold value `t`.
fn dominated_counts(instance: &Instance, agent: usize, own: Bundle, rival: Bundle) -> bool {
    let row = &instance.valuations()[agent];
    let mut levels: Vec<&Rational> = row.iter().collect();
    levels.sort();
    levels.dedup();
    levels.iter().all(|t| {
        let count = |b: Bundle| b.iter().filter(|&g| row[g] >= **t).count();
        count(own) >= count(rival)
    })
}

/// Stochastic-dominance EF1: some single removal makes the ordinal prefix counts dominate.
pub fn check_sd_ef1(instance: &Instance, alloc: &Allocation) -> FairnessReport {
    let witness = pairs(alloc.agent_count()).find_map(|(i, j)| {
        let (ai, aj) = (alloc.bundle(i), alloc.bundle(j));
        if aj.is_empty()
            || aj
                .iter()
                .any(|g| dominated_counts(instance, i, ai, aj.without(g)))
        {
            None
        } else {
            Some(Witness::Pair {
                envious: i,
                envied: j,
                removed: None,
                added: None,
            })
        }
    });
    FairnessReport::new("sd-ef1", witness)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Universe {
    AllFeasible,
    CompleteFeasible,
}

pub fn check_po(
    instance: &Instance,
    fs: &FeasibilitySet,
    alloc: &Allocation,
    universe: Universe,
    cap: u64,
) -> Result<FairnessReport> {
    let target = utilities(instance, alloc).utilities;
    let d = find_dominator(
        instance,
        fs,
        universe == Universe::CompleteFeasible,
        &target,
        cap,
    )?;
    Ok(FairnessReport::new("po", d.map(Witness::Dominator)))
}

/// Pareto optimality against every allocation of the goods as given, ignoring the constraint.
pub fn check_po_plus(instance: &Instance, alloc: &Allocation, cap: u64) -> Result<FairnessReport> {
    let target = utilities(instance, alloc).utilities;
    let d = find_dominator(
        instance,
        &FeasibilitySet::free(instance),
        false,
        &target,
        cap,
    )?;
    Ok(FairnessReport::new("po+", d.map(Witness::Dominator)))
}

/// `2 v_i(A_i) >= ṽ_i(A_i ∪ A_j \ {g})` for some `g` in `A_j`.
pub fn check_constrained_mef1(
    instance: &Instance,
    fs: &FeasibilitySet,
    alloc: &Allocation,
) -> Result<FairnessReport> {
    let reduced = reduce_to_unconstrained(instance, fs)?;
    let two = Rational::from_integer(2.into());
    let witness = pairs(alloc.agent_count()).find_map(|(i, j)| {
        let (ai, aj) = (alloc.bundle(i), alloc.bundle(j));
        let own = &two * instance.bundle_value(i, ai);
        (!aj.is_empty()
            && aj
                .iter()
                .all(|g| own < reduced.value(i, ai.union(aj.without(g)))))
        .then_some(Witness::Pair {
            envious: i,
            envied: j,
            removed: None,
            added: None,
        })
    });
    Ok(FairnessReport::new("mef1", witness))
}

/// Marginal EF1 under the weighted-rank valuations: `ṽ_i(A_i ∪ A_j \ {g}) - ṽ_i(A_i) <= ṽ_i(A_i)`.
pub fn check_mef1_reduced(
    instance: &Instance,
    fs: &FeasibilitySet,
    alloc: &Allocation,
) -> Result<FairnessReport> {
    let reduced = reduce_to_unconstrained(instance, fs)?;
    let witness = pairs(alloc.agent_count()).find_map(|(i, j)| {
        let (ai, aj) = (alloc.bundle(i), alloc.bundle(j));
        let own = reduced.value(i, ai);
        let fails = |g: usize| reduced.value(i, ai.union(aj.without(g))) - &own > own;
        (!aj.is_empty() && aj.iter().all(fails)).then_some(Witness::Pair {
            envious: i,
            envied: j,
            removed: None,
            added: None,
        })
    });
    Ok(FairnessReport::new("mef1-reduced", witness))
}

fn prop_share(instance: &Instance, agent: usize) -> Rational {
    instance.bundle_value(agent, instance.all_goods())
        / Rational::from_integer(instance.agent_count().into())
}

fn prop1_with(
    instance: &Instance,
    alloc: &Allocation,
    candidates: impl Fn(usize) -> Bundle,
) -> Option<Witness> {
    (0..alloc.agent_count()).find_map(|i| {
        let own = alloc.bundle(i);
        let value = instance.bundle_value(i, own);
        let share = prop_share(instance, i);
        if value >= share {
            return None;
        }
        let boost = argmax(instance, i, candidates(i))
            .map(|g| instance.value(i, g).clone())
            .unwrap_or_else(Rational::zero);
        (value + boost < share).then_some(Witness::Agent { agent: i })
    })
}

/// `v_i(A_i) >= v_i(M)/n`, or some good outside `A_i` closes the gap.
pub fn check_prop1(instance: &Instance, alloc: &Allocation) -> FairnessReport {
    let all = instance.all_goods();
    FairnessReport::new(
        "prop1",
        prop1_with(instance, alloc, |i| all.minus(alloc.bundle(i))),
    )
}

/// Prop1 where the added good must come from a copy category the agent does not hold.
pub fn check_prop1_wc(
    instance: &Instance,
    fs: &FeasibilitySet,
    alloc: &Allocation,
) -> Result<FairnessReport> {
    let categories = copy_categories(fs)?;
    let all = instance.all_goods();
    let w = prop1_with(instance, alloc, |i| {
        uncommon(&categories, alloc.bundle(i), all)
    });
    Ok(FairnessReport::new("prop1-wc", w))
}

fn ef11_with(
    instance: &Instance,
    alloc: &Allocation,
    candidates: impl Fn(usize) -> Bundle,
) -> Option<Witness> {
    pairs(alloc.agent_count()).find_map(|(i, j)| {
        let (ai, aj) = (alloc.bundle(i), alloc.bundle(j));
        let own = instance.bundle_value(i, ai);
        let rival = instance.bundle_value(i, aj);
        if own >= rival {
            return None;
        }
        let gj = argmax(instance, i, aj);
        let gi = argmax(instance, i, candidates(i));
        let raised = own
            + gi.map(|g| instance.value(i, g).clone())
                .unwrap_or_else(Rational::zero);
        let lowered = rival
            - gj.map(|g| instance.value(i, g).clone())
                .unwrap_or_else(Rational::zero);
        (raised < lowered).then_some(Witness::Pair {
            envious: i,
            envied: j,
            removed: gj,
            added: gi,
        })
    })
}

/// EF¹₁: adding one outside good to `A_i` and removing one from `A_j` eliminates envy.
pub fn check_ef11(instance: &Instance, alloc: &Allocation) -> FairnessReport {
    let all = instance.all_goods();
    FairnessReport::new(
        "ef11",
        ef11_with(instance, alloc, |i| all.minus(alloc.bundle(i))),
    )
}

/// EF¹₁ where the added good comes from a copy category the agent does not hold.
pub fn check_ef11_wc(
    instance: &Instance,
    fs: &FeasibilitySet,
    alloc: &Allocation,
) -> Result<FairnessReport> {
    let categories = copy_categories(fs)?;
    let all = instance.all_goods();
    let w = ef11_with(instance, alloc, |i| {
        uncommon(&categories, alloc.bundle(i), all)
    });
    Ok(FairnessReport::new("ef11-wc", w))
}

/// Valuations scaled so every agent's total value is 1 (copies counted with multiplicity).
pub fn normalized(instance: &Instance) -> Vec<Vec<Rational>> {
    instance
        .valuations()
        .iter()
        .map(|row| {
            let total: Rational = row
                .iter()
                .zip(instance.supplies())
                .fold(Rational::zero(), |a, (v, &q)| {
                    a + v * Rational::from_integer(q.into())
                });
            row.iter()
                .map(|v| {
                    if total.is_zero() {
                        v.clone()
                    } else {
                        v / &total
                    }
                })
                .collect()
        })
        .collect()
}

fn dot(a: &[Rational], b: &[Rational]) -> Rational {
    a.iter()
        .zip(b)
        .fold(Rational::zero(), |acc, (x, y)| acc + x * y)
}

fn classify(slack: &Rational, tau: &Rational) -> Verdict {
    if !slack.is_positive() {
        Verdict::Exact
    } else if slack <= tau {
        Verdict::WithinTolerance
    } else {
        Verdict::Violated
    }
}

fn tolerance_report(
    property: &str,
    slack: Rational,
    tau: &Rational,
    witness: Option<Witness>,
) -> FairnessReport {
    let verdict = classify(&slack, tau);
    let mut r = FairnessReport::new(property, None);
    r.holds = verdict != Verdict::Violated;
    r.witness = if slack.is_positive() { witness } else { None };
    r.verdict = Some(verdict);
    r.slack = Some(slack);
    r
}

/// Envy-freeness of a fractional allocation on normalized valuations, up to `tau`.
pub fn check_fractional_ef(
    instance: &Instance,
    x: &[Vec<Rational>],
    tau: &Rational,
) -> FairnessReport {
    let v = normalized(instance);
    let mut worst = Rational::zero();
    let mut witness = None;
    for (i, j) in pairs(x.len()) {
        let gap = dot(&v[i], &x[j]) - dot(&v[i], &x[i]);
        if gap > worst {
            worst = gap;
            witness = Some(Witness::Pair {
                envious: i,
                envied: j,
                removed: None,
                added: None,
            });
        }
    }
    tolerance_report("fractional-ef", worst, tau, witness)
}

/// Linear rows of a fractional allocation beyond unit cells and supplies.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FractionalRows {
    /// Optional cap on every agent's row sum.
    pub row_cap: Option<Rational>,
}

/// Pareto optimality of `x` among fractional allocations, via `max Σδ_i` on normalized valuations.
pub fn check_fractional_po(
    instance: &Instance,
    x: &[Vec<Rational>],
    rows: &FractionalRows,
    tau: &Rational,
) -> FairnessReport {
    let v = normalized(instance);
    let (n, m) = (instance.agent_count(), instance.good_count());
    let y = |i: usize, g: usize| i * m + g;
    let delta = |i: usize| n * m + i;
    let mut objective = vec![Rational::zero(); n * m + n];
    for i in 0..n {
        objective[delta(i)] = Rational::one();
    }
    let mut lp = LinearProgram::new(n * m + n).maximize(objective);
    for i in 0..n {
        for g in 0..m {
            lp.add_sparse(&[(y(i, g), Rational::one())], Relation::Le, Rational::one());
        }
    }
    for g in 0..m {
        let terms: Vec<_> = (0..n).map(|i| (y(i, g), Rational::one())).collect();
        lp.add_sparse(
            &terms,
            Relation::Le,
            Rational::from_integer(instance.supplies()[g].into()),
        );
    }
    for i in 0..n {
        if let Some(cap) = &rows.row_cap {
            let terms: Vec<_> = (0..m).map(|g| (y(i, g), Rational::one())).collect();
            lp.add_sparse(&terms, Relation::Le, cap.clone());
        }
        let mut terms: Vec<_> = (0..m).map(|g| (y(i, g), v[i][g].clone())).collect();
        terms.push((delta(i), -Rational::one()));
        lp.add_sparse(&terms, Relation::Ge, dot(&v[i], &x[i]));
    }
    match lp.solve() {
        LpOutcome::Optimal { value, x: sol } => {
            let witness = (0..n)
                .find(|&i| sol[delta(i)].is_positive())
                .map(|agent| Witness::Agent { agent });
            tolerance_report("fractional-po", value, tau, witness)
        }
        // `x` itself is feasible whenever it respects the rows, so this only reports malformed input.
        _ => tolerance_report("fractional-po", Rational::from_integer(1.into()), tau, None),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feasibility::DEFAULT_CAP;
    use crate::fixtures;
    use crate::rational::{int, rat};
    use proptest::prelude::*;

    #[test]
    fn tightness_k3_factor() {
        let p = fixtures::tightness(3, false);
        let a = fixtures::tightness_mnw(3);
        assert!(check_alpha_ef1(&p.instance, &a, &rat(3, 4)).holds);
        let r = check_alpha_ef1(&p.instance, &a, &(rat(3, 4) + rat(1, 100)));
        assert!(!r.holds);
        assert_eq!(
            r.witness,
            Some(Witness::Pair {
                envious: 1,
                envied: 0,
                removed: Some(0),
                added: None
            })
        );
        assert_eq!(ef1_factor(&p.instance, &a), rat(3, 4));
        let r = check_alpha_ef1(&p.instance, &a, &int(1));
        assert!(matches!(
            r.witness,
            Some(Witness::Pair {
                envious: 1,
                envied: 0,
                ..
            })
        ));
    }

    #[test]
    fn example1_is_ef1() {
        let p = fixtures::example1();
        assert!(check_alpha_ef1(&p.instance, &fixtures::example1_mnw(&p.instance), &int(1)).holds);
    }

    #[test]
    fn copies_example_is_half_ef1wc() {
        let view = fixtures::chores_gap_view();
        let a = fixtures::chores_gap_mnw(&view);
        let p = &view.problem;
        assert!(
            check_ef1wc(&p.instance, &p.constraint, &a, &rat(1, 2))
                .unwrap()
                .holds
        );
        assert!(
            check_constrained_mef1(&p.instance, &p.constraint, &a)
                .unwrap()
                .holds
        );
        let free = FeasibilitySet::free(&p.instance);
        assert!(check_ef1wc(&p.instance, &free, &a, &rat(1, 2)).is_err());
    }

    #[test]
    fn copies_tight_fails_ef1wc_at_one() {
        let view = fixtures::copies_tight_view(3, &rat(1, 6));
        let a = fixtures::copies_tight_mnw(&view, 3);
        let p = &view.problem;
        assert!(
            !check_ef1wc(&p.instance, &p.constraint, &a, &int(1))
                .unwrap()
                .holds
        );
    }

    #[test]
    fn sd_ef1_trivial_cases() {
        let inst = Instance::from_values(vec![vec![int(1), int(2)]]).unwrap();
        assert!(check_sd_ef1(&inst, &Allocation::new(vec![inst.all_goods()]).unwrap()).holds);
    }

    #[test]
    fn example1_complete_allocations_are_dominated() {
        let p = fixtures::example1();
        let all =
            crate::feasibility::enumerate_feasible(&p.instance, &p.constraint, true, DEFAULT_CAP)
                .unwrap();
        assert!(!all.is_empty());
        for a in all {
            let r = check_po(
                &p.instance,
                &p.constraint,
                &a,
                Universe::AllFeasible,
                DEFAULT_CAP,
            )
            .unwrap();
            assert!(!r.holds);
        }
        let mnw = fixtures::example1_mnw(&p.instance);
        assert!(
            check_po(
                &p.instance,
                &p.constraint,
                &mnw,
                Universe::AllFeasible,
                DEFAULT_CAP
            )
            .unwrap()
            .holds
        );
    }

    #[test]
    fn fractional_checks() {
        let inst = Instance::from_values(vec![vec![int(1), int(1)]; 2]).unwrap();
        let half = vec![vec![rat(1, 2); 2]; 2];
        let tau = rat(1, 1_000_000);
        let ef = check_fractional_ef(&inst, &half, &tau);
        assert_eq!(ef.verdict, Some(Verdict::Exact));
        assert!(check_fractional_po(&inst, &half, &FractionalRows::default(), &tau).holds);
        let skewed = vec![vec![rat(2, 5), rat(2, 5)], vec![rat(3, 5), rat(3, 5)]];
        let r = check_fractional_ef(&inst, &skewed, &tau);
        assert!(!r.holds);
        assert_eq!(
            r.witness,
            Some(Witness::Pair {
                envious: 0,
                envied: 1,
                removed: None,
                added: None
            })
        );
        let wasteful = vec![vec![rat(1, 4); 2]; 2];
        let r = check_fractional_po(&inst, &wasteful, &FractionalRows::default(), &tau);
        assert_eq!(r.verdict, Some(Verdict::Violated));
        let nearly = vec![
            vec![rat(1, 2), rat(1, 2)],
            vec![rat(1, 2), rat(1, 2) - rat(1, 10_000_000)],
        ];
        let r = check_fractional_po(&inst, &nearly, &FractionalRows::default(), &tau);
        assert_eq!(r.verdict, Some(Verdict::WithinTolerance));
    }

    #[test]
    fn prop1_and_ef11_basics() {
        let inst = Instance::from_values(vec![vec![int(3), int(1)], vec![int(1), int(3)]]).unwrap();
        let a =
            Allocation::new(vec![Bundle::from_indices([0]), Bundle::from_indices([1])]).unwrap();
        assert!(check_prop1(&inst, &a).holds);
        assert!(check_ef11(&inst, &a).holds);
        let skew = Allocation::new(vec![Bundle::EMPTY, Bundle::from_indices([0, 1])]).unwrap();
        assert!(check_prop1(&inst, &skew).holds);
        assert!(check_ef11(&inst, &skew).holds);
        let bad = Instance::from_values(vec![vec![int(1); 4], vec![int(1); 4]]).unwrap();
        let a = Allocation::new(vec![Bundle::EMPTY, bad.all_goods()]).unwrap();
        assert!(!check_prop1(&bad, &a).holds);
        assert!(!check_ef11(&bad, &a).holds);
    }

    fn random_alloc() -> impl Strategy<Value = (Vec<Vec<i64>>, Vec<usize>)> {
        (2usize..=3, 1usize..=6).prop_flat_map(|(n, m)| {
            (
                proptest::collection::vec(proptest::collection::vec(0i64..=4, m), n),
                proptest::collection::vec(0..=n, m),
            )
        })
    }

    fn build(rows: &[Vec<i64>], owners: &[usize]) -> (Instance, Allocation) {
        let inst = Instance::from_values(
            rows.iter()
                .map(|r| r.iter().map(|&v| int(v)).collect())
                .collect(),
        )
        .unwrap();
        let n = rows.len();
        let mut bundles = vec![Bundle::EMPTY; n];
        for (g, &o) in owners.iter().enumerate() {
            if o < n {
                bundles[o] = bundles[o].with(g);
            }
        }
        (inst, Allocation::new(bundles).unwrap())
    }

    fn replay_pair(inst: &Instance, a: &Allocation, w: &Witness, alpha: &Rational) -> bool {
        match w {
            Witness::Pair {
                envious,
                envied,
                removed,
                ..
            } => {
                let rival = a
                    .bundle(*envied)
                    .minus(removed.map_or(Bundle::EMPTY, Bundle::singleton));
                inst.bundle_value(*envious, a.bundle(*envious))
                    < alpha * inst.bundle_value(*envious, rival)
            }
            _ => false,
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn implication_chain((rows, owners) in random_alloc()) {
            let (inst, a) = build(&rows, &owners);
            let ef1 = check_alpha_ef1(&inst, &a, &int(1));
            if check_ef(&inst, &a).holds {
                prop_assert!(ef1.holds);
            }
            if ef1.holds {
                prop_assert!(check_alpha_ef1(&inst, &a, &rat(1, 2)).holds);
            }
            if check_sd_ef1(&inst, &a).holds {
                prop_assert!(ef1.holds);
            }
            let f = ef1_factor(&inst, &a);
            prop_assert!(check_alpha_ef1(&inst, &a, &f).holds);
            if f < int(1) {
                prop_assert!(!check_alpha_ef1(&inst, &a, &(f + rat(1, 1000))).holds);
            }
            if let Some(w) = &ef1.witness {
                prop_assert!(replay_pair(&inst, &a, w, &int(1)));
            }
            if ef1.holds {
                prop_assert!(check_ef11(&inst, &a).holds);
            }
        }

        #[test]
        fn po_universe_monotone((rows, owners) in random_alloc()) {
            let (inst, a) = build(&rows, &owners);
            let fs = FeasibilitySet::free(&inst);
            let all = check_po(&inst, &fs, &a, Universe::AllFeasible, DEFAULT_CAP).unwrap();
            if a.is_complete(&inst) {
                let complete = check_po(&inst, &fs, &a, Universe::CompleteFeasible, DEFAULT_CAP).unwrap();
                if all.holds {
                    prop_assert!(complete.holds);
                }
            }
            if let Some(Witness::Dominator(d)) = &all.witness {
                prop_assert_eq!(&utilities(&inst, &d.allocation).utilities, &d.utilities);
                prop_assert!(crate::pareto::dominates(&d.utilities, &utilities(&inst, &a).utilities));
            }
        }

        #[test]
        fn mef1_implies_half_ef1((rows, owners) in random_alloc()) {
            let (inst, a) = build(&rows, &owners);
            let m = inst.good_count();
            let fs = FeasibilitySet::new(Constraint::Uniform { rank: m.div_ceil(2) }, &inst).unwrap();
            if !fs.is_feasible_allocation(&a, false) {
                return Ok(());
            }
            if check_constrained_mef1(&inst, &fs, &a).unwrap().holds {
                prop_assert!(check_alpha_ef1(&inst, &a, &rat(1, 2)).holds);
            }
            prop_assert_eq!(
                check_constrained_mef1(&inst, &fs, &a).unwrap().holds,
                check_mef1_reduced(&inst, &fs, &a).unwrap().holds
            );
        }
    }
}
