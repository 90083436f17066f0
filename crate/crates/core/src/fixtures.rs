//! Canonical instances reproducing the worked examples and tightness families.

use crate::copies::{expand_copies, CopiesView};
use crate::error::{Error, Result};
use crate::feasibility::{Category, Constraint, FeasibilitySet};
use crate::instance::{Allocation, Bundle, Instance};
use crate::io::Problem;
use crate::mnw::round_robin;
use crate::rational::{int, rat, Rational};

fn problem(valuations: Vec<Vec<Rational>>, constraint: Constraint) -> Problem {
    let instance = Instance::from_values(valuations).expect("fixture instance");
    let constraint = FeasibilitySet::new(constraint, &instance).expect("fixture constraint");
    Problem {
        instance,
        constraint,
    }
}

fn ints(row: &[i64]) -> Vec<Rational> {
    row.iter().map(|&v| int(v)).collect()
}

fn goods(ids: impl IntoIterator<Item = usize>) -> Bundle {
    Bundle::from_indices(ids)
}

fn alloc(bundles: Vec<Bundle>) -> Allocation {
    Allocation::new(bundles).expect("disjoint fixture bundles")
}

/// Two agents, eight goods, nested categories {g1..g4} (bound 2) inside all goods (bound 4).
pub fn example1() -> Problem {
    problem(
        vec![
            ints(&[0, 1, 0, 0, 1, 1, 1, 0]),
            ints(&[0, 0, 1, 1, 0, 0, 0, 1]),
        ],
        Constraint::Laminar {
            categories: vec![
                Category::upper(goods(0..4), 2),
                Category::upper(goods(0..8), 4),
            ],
        },
    )
}

pub fn example1_mnw(_instance: &Instance) -> Allocation {
    alloc(vec![goods([1, 4, 5, 6]), goods([2, 3, 7])])
}

/// `S = g1..gk` worth 1 to both agents, `T = g(k+1)..g(2k)` worth 0 and 1/2; at most `k` goods each.
pub fn tightness(k: usize, balanced: bool) -> Problem {
    let mut v1 = vec![int(1); k];
    v1.extend(vec![int(0); k]);
    let mut v2 = vec![int(1); k];
    v2.extend(vec![rat(1, 2); k]);
    let constraint = if balanced {
        Constraint::Balanced
    } else {
        Constraint::Partition {
            categories: vec![Category::upper(goods(0..2 * k), k as u32)],
        }
    };
    problem(vec![v1, v2], constraint)
}

pub fn tightness_mnw(k: usize) -> Allocation {
    alloc(vec![goods(0..k), goods(k..2 * k)])
}

/// Four pairs with bound 1 each.
pub fn sdef1_impossible() -> Problem {
    problem(
        vec![
            ints(&[8, 4, 7, 5, 6, 1, 3, 2]),
            ints(&[6, 2, 8, 5, 7, 3, 4, 1]),
        ],
        Constraint::Partition {
            categories: (0..4)
                .map(|c| Category::upper(goods([2 * c, 2 * c + 1]), 1))
                .collect(),
        },
    )
}

fn copies_fixture(
    ids: Vec<String>,
    valuations: Vec<Vec<Rational>>,
    supplies: Vec<u32>,
) -> CopiesView {
    let types = Instance::with_supplies(ids, valuations, supplies).expect("fixture types");
    expand_copies(&types).expect("fixture copies")
}

fn type_ids(m: usize) -> Vec<String> {
    (1..=m).map(|g| format!("g{}", g)).collect()
}

/// Three agents, three goods with two copies each; diagonal 1, off-diagonal `eps`.
pub fn poplus_copies_view(eps: &Rational) -> CopiesView {
    let row = |i: usize| {
        (0..3)
            .map(|g| if g == i { int(1) } else { eps.clone() })
            .collect()
    };
    copies_fixture(type_ids(3), (0..3).map(row).collect(), vec![2; 3])
}

pub fn poplus_copies() -> Problem {
    poplus_copies_view(&rat(1, 4)).problem
}

/// Two agents, `k^2 + k` low goods worth 1 to both, `k^2 + k` high goods worth `k + 1` and `k`.
pub fn poplus_balanced(k: usize) -> Problem {
    let half = k * k + k;
    let mut v1 = vec![int(1); half];
    v1.extend(vec![int(k as i64 + 1); half]);
    let mut v2 = vec![int(1); half];
    v2.extend(vec![int(k as i64); half]);
    problem(vec![v1, v2], Constraint::Balanced)
}

/// `S` goods with two copies valued `delta` and 1, `T` goods with one copy valued 1 by both.
pub fn copies_tight_view(k: usize, delta: &Rational) -> CopiesView {
    let mut v1 = vec![delta.clone(); k];
    v1.extend(vec![int(1); k]);
    let v2 = vec![int(1); 2 * k];
    let mut supplies = vec![2; k];
    supplies.extend(vec![1; k]);
    copies_fixture(type_ids(2 * k), vec![v1, v2], supplies)
}

pub fn copies_tight(k: usize) -> Problem {
    copies_tight_view(k, &rat(1, 2 * k as i64)).problem
}

/// Agent 1 holds a copy of every type plus all of `T`; agent 2 holds a copy of every `S` type.
pub fn copies_tight_mnw(view: &CopiesView, k: usize) -> Allocation {
    let s: Bundle = (0..k).collect();
    let t: Bundle = (k..2 * k).collect();
    view.to_allocation(&[s.union(t), s])
        .expect("fixture assignment")
}

/// Three agents, three goods with two copies; agent 1 values two of them at 1/100.
pub fn chores_gap_view() -> CopiesView {
    let v1 = vec![int(1), rat(1, 100), rat(1, 100)];
    copies_fixture(
        type_ids(3),
        vec![v1, ints(&[1, 1, 1]), ints(&[1, 1, 1])],
        vec![2; 3],
    )
}

pub fn chores_gap() -> Problem {
    chores_gap_view().problem
}

/// `A1 = {g1}`, `A2 = {g1, g2, g3}`, `A3 = {g2, g3}` at the type level.
pub fn chores_gap_mnw(view: &CopiesView) -> Allocation {
    view.to_allocation(&[goods([0]), goods([0, 1, 2]), goods([1, 2])])
        .expect("fixture assignment")
}

pub fn roundrobin_po() -> Problem {
    problem(
        vec![
            ints(&[10, 9, 5, 4, 3, 2, 1, 0]),
            ints(&[10, 9, 8, 7, 6, 5, 1, 0]),
        ],
        Constraint::Balanced,
    )
}

/// `({g1, g2, g7, g8}, {g3, g4, g5, g6})`.
pub fn roundrobin_dominator() -> Allocation {
    alloc(vec![goods([0, 1, 6, 7]), goods([2, 3, 4, 5])])
}

/// A named fixture with an optional companion allocation.
#[derive(Clone, Debug)]
pub struct Fixture {
    pub name: String,
    pub problem: Problem,
    pub allocation: Option<Allocation>,
}

pub fn names() -> Vec<String> {
    let mut names = vec!["example1".to_string()];
    names.extend((2..=6).map(|k| format!("tightness-k{}", k)));
    names.extend((2..=6).map(|k| format!("tightness-balanced-k{}", k)));
    names.push("sdef1-impossible".into());
    names.push("poplus-copies".into());
    names.push("poplus-balanced-k2".into());
    names.extend((2..=6).map(|k| format!("copies-tight-k{}", k)));
    names.push("chores-ef1-gap".into());
    names.push("roundrobin-po".into());
    names
}

fn suffix_k(name: &str, prefix: &str) -> Option<usize> {
    name.strip_prefix(prefix)?
        .parse()
        .ok()
        .filter(|k| (2..=6).contains(k))
}

pub fn by_name(name: &str) -> Result<Fixture> {
    let fixture = |problem: Problem, allocation: Option<Allocation>| Fixture {
        name: name.to_string(),
        problem,
        allocation,
    };
    if let Some(k) = suffix_k(name, "tightness-k") {
        return Ok(fixture(tightness(k, false), Some(tightness_mnw(k))));
    }
    if let Some(k) = suffix_k(name, "tightness-balanced-k") {
        return Ok(fixture(tightness(k, true), Some(tightness_mnw(k))));
    }
    if let Some(k) = suffix_k(name, "copies-tight-k") {
        let view = copies_tight_view(k, &rat(1, 2 * k as i64));
        let a = copies_tight_mnw(&view, k);
        return Ok(fixture(view.problem, Some(a)));
    }
    Ok(match name {
        "example1" => {
            let p = example1();
            let a = example1_mnw(&p.instance);
            fixture(p, Some(a))
        }
        "sdef1-impossible" => fixture(sdef1_impossible(), None),
        "poplus-copies" => fixture(poplus_copies(), None),
        "poplus-balanced-k2" => fixture(poplus_balanced(2), None),
        "chores-ef1-gap" => {
            let view = chores_gap_view();
            let a = chores_gap_mnw(&view);
            fixture(view.problem, Some(a))
        }
        "roundrobin-po" => {
            let p = roundrobin_po();
            let a = round_robin(&p.instance, &[0, 1]);
            fixture(p, Some(a))
        }
        other => return Err(Error::Schema(format!("unknown fixture `{}`", other))),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::utilities;

    #[test]
    fn every_name_resolves() {
        for name in names() {
            let f = by_name(&name).unwrap();
            if let Some(a) = &f.allocation {
                assert!(
                    f.problem.constraint.is_feasible_allocation(a, false),
                    "{}",
                    name
                );
            }
        }
        assert!(by_name("tightness-k7").is_err());
    }

    #[test]
    fn reference_tables() {
        assert_eq!(
            sdef1_impossible().instance.valuations()[0],
            ints(&[8, 4, 7, 5, 6, 1, 3, 2])
        );
        assert_eq!(
            roundrobin_po().instance.valuations()[1],
            ints(&[10, 9, 8, 7, 6, 5, 1, 0])
        );
        assert_eq!(poplus_balanced(2).instance.good_count(), 12);
    }

    #[test]
    fn example_utilities() {
        let p = example1();
        let u = utilities(&p.instance, &example1_mnw(&p.instance));
        assert_eq!(u.utilities, vec![int(4), int(3)]);
        assert_eq!(u.nash_welfare, int(12));
        let t = tightness(3, false);
        let u = utilities(&t.instance, &tightness_mnw(3));
        assert_eq!(u.utilities, vec![int(3), rat(3, 2)]);
        assert_eq!(u.nash_welfare, rat(9, 2));
    }
}
