//! Pareto-dominance oracle over a feasible universe.

use std::collections::HashMap;
use std::ops::ControlFlow;

use crate::error::{Error, Result};
use crate::feasibility::{for_each_feasible, Constraint, FeasibilitySet};
use crate::instance::{utilities, Allocation, Bundle, Instance};
use crate::rational::Rational;
use num_traits::Zero;

/// A feasible allocation whose utilities weakly improve on a target for everyone and strictly for someone.
#[derive(Clone, Debug, PartialEq)]
pub struct Dominator {
    pub utilities: Vec<Rational>,
    pub allocation: Allocation,
}

pub fn dominates(a: &[Rational], b: &[Rational]) -> bool {
    a.iter().zip(b).all(|(x, y)| x >= y) && a.iter().zip(b).any(|(x, y)| x > y)
}

fn weakly_dominates(a: &[Rational], b: &[Rational]) -> bool {
    a.iter().zip(b).all(|(x, y)| x >= y)
}

/// First dominator of `target` in the universe, if any.
pub fn find_dominator(
    instance: &Instance,
    fs: &FeasibilitySet,
    complete: bool,
    target: &[Rational],
    cap: u64,
) -> Result<Option<Dominator>> {
    Ok(dominators(instance, fs, complete, target, cap)?
        .into_iter()
        .next())
}

/// Every Pareto-optimal point of the universe that dominates `target`, with one witness each.
pub fn dominators(
    instance: &Instance,
    fs: &FeasibilitySet,
    complete: bool,
    target: &[Rational],
    cap: u64,
) -> Result<Vec<Dominator>> {
    let frontier = match Groups::of(instance, fs) {
        Some(groups) => frontier_dp(instance, &groups, complete, cap)?,
        None => frontier_enumerated(instance, fs, complete, cap)?,
    };
    Ok(frontier
        .into_iter()
        .filter(|d| dominates(&d.utilities, target))
        .collect())
}

/// Pareto frontier of the feasible universe.
pub fn pareto_frontier(
    instance: &Instance,
    fs: &FeasibilitySet,
    complete: bool,
    cap: u64,
) -> Result<Vec<Dominator>> {
    match Groups::of(instance, fs) {
        Some(groups) => frontier_dp(instance, &groups, complete, cap),
        None => frontier_enumerated(instance, fs, complete, cap),
    }
}

fn keep_maximal(points: Vec<Dominator>) -> Vec<Dominator> {
    let mut kept: Vec<Dominator> = Vec::new();
    for p in points {
        if kept
            .iter()
            .any(|k| weakly_dominates(&k.utilities, &p.utilities))
        {
            continue;
        }
        kept.retain(|k| !weakly_dominates(&p.utilities, &k.utilities));
        kept.push(p);
    }
    kept
}

fn frontier_enumerated(
    instance: &Instance,
    fs: &FeasibilitySet,
    complete: bool,
    cap: u64,
) -> Result<Vec<Dominator>> {
    let mut points = Vec::new();
    for_each_feasible(instance, fs, complete, cap, |a| {
        points.push(Dominator {
            utilities: utilities(instance, a).utilities,
            allocation: a.clone(),
        });
        ControlFlow::Continue(())
    })?;
    Ok(keep_maximal(points))
}

/// Independent blocks of goods with per-agent count bounds, plus optional global size bounds.
struct Groups {
    blocks: Vec<(Vec<usize>, u32, u32)>,
    sizes: Option<(usize, usize)>,
}

impl Groups {
    fn of(instance: &Instance, fs: &FeasibilitySet) -> Option<Groups> {
        let m = instance.good_count();
        let (categories, sizes) = match fs.constraint() {
            Constraint::Free => (&[][..], None),
            Constraint::Uniform { rank } => (&[][..], Some((0, *rank))),
            Constraint::Balanced => (&[][..], Some(fs.balanced_bounds())),
            Constraint::Partition { categories }
            | Constraint::Copies { categories }
            | Constraint::PartitionLb { categories } => (&categories[..], None),
            Constraint::CopiesBalanced { categories } => {
                (&categories[..], Some(fs.balanced_bounds()))
            }
            Constraint::Laminar { .. }
            | Constraint::Graphic { .. }
            | Constraint::Extended { .. } => return None,
        };
        let mut covered = Bundle::EMPTY;
        let mut blocks = Vec::new();
        for c in categories {
            covered = covered.union(c.goods);
            blocks.push((c.goods.iter().collect(), c.lower, c.upper));
        }
        blocks.extend(
            Bundle::full(m)
                .minus(covered)
                .iter()
                .map(|g| (vec![g], 0, 1)),
        );
        Some(Groups { blocks, sizes })
    }
}

/// Local choices of one block: utility vector, per-agent counts and the goods each agent takes.
fn block_choices(
    instance: &Instance,
    goods: &[usize],
    lower: u32,
    upper: u32,
    complete: bool,
) -> Vec<(Vec<Rational>, Vec<usize>, Vec<Bundle>)> {
    let n = instance.agent_count();
    let options = if complete { n } else { n + 1 };
    let mut seen: HashMap<(Vec<Rational>, Vec<usize>), ()> = HashMap::new();
    let mut out = Vec::new();
    let mut assign = vec![0usize; goods.len()];
    loop {
        let mut bundles = vec![Bundle::EMPTY; n];
        for (k, &who) in assign.iter().enumerate() {
            if who < n {
                bundles[who] = bundles[who].with(goods[k]);
            }
        }
        let counts: Vec<usize> = bundles.iter().map(|b| b.len()).collect();
        if counts
            .iter()
            .all(|&c| lower as usize <= c && c <= upper as usize)
        {
            let utils: Vec<Rational> = (0..n)
                .map(|i| instance.bundle_value(i, bundles[i]))
                .collect();
            if seen.insert((utils.clone(), counts.clone()), ()).is_none() {
                out.push((utils, counts, bundles));
            }
        }
        // Odometer increment.
        let mut k = 0;
        loop {
            if k == assign.len() {
                return out;
            }
            assign[k] += 1;
            if assign[k] < options {
                break;
            }
            assign[k] = 0;
            k += 1;
        }
    }
}

struct State {
    utils: Vec<Rational>,
    counts: Vec<usize>,
    back: Option<(usize, usize)>,
}

fn frontier_dp(
    instance: &Instance,
    groups: &Groups,
    complete: bool,
    cap: u64,
) -> Result<Vec<Dominator>> {
    let n = instance.agent_count();
    let track = groups.sizes.is_some();
    let hi = groups.sizes.map_or(usize::MAX, |s| s.1);
    let mut layers: Vec<Vec<State>> = vec![vec![State {
        utils: vec![Rational::zero(); n],
        counts: vec![0; if track { n } else { 0 }],
        back: None,
    }]];
    let mut choices = Vec::new();
    let mut work = 0u64;
    for (goods, lower, upper) in &groups.blocks {
        let local = block_choices(instance, goods, *lower, *upper, complete);
        let prev = layers.last().unwrap();
        let mut buckets: HashMap<Vec<usize>, Vec<State>> = HashMap::new();
        let mut order: Vec<Vec<usize>> = Vec::new();
        for (s, state) in prev.iter().enumerate() {
            for (c, (du, dc, _)) in local.iter().enumerate() {
                work += 1;
                if work > cap {
                    return Err(Error::ExplosionGuard { cap });
                }
                let counts: Vec<usize> = if track {
                    state.counts.iter().zip(dc).map(|(a, b)| a + b).collect()
                } else {
                    Vec::new()
                };
                if counts.iter().any(|&k| k > hi) {
                    continue;
                }
                let utils: Vec<Rational> = state.utils.iter().zip(du).map(|(a, b)| a + b).collect();
                let bucket = buckets.entry(counts.clone()).or_insert_with(|| {
                    order.push(counts.clone());
                    Vec::new()
                });
                if bucket.iter().any(|b| weakly_dominates(&b.utils, &utils)) {
                    continue;
                }
                bucket.retain(|b| !weakly_dominates(&utils, &b.utils));
                bucket.push(State {
                    utils,
                    counts,
                    back: Some((s, c)),
                });
            }
        }
        let mut next = Vec::new();
        for key in order {
            next.extend(buckets.remove(&key).unwrap());
        }
        layers.push(next);
        choices.push(local);
    }
    let lo = groups.sizes.map_or(0, |s| s.0);
    let mut points = Vec::new();
    for (s, state) in layers.last().unwrap().iter().enumerate() {
        if state.counts.iter().any(|&k| k < lo) {
            continue;
        }
        let mut bundles = vec![Bundle::EMPTY; n];
        let (mut layer, mut idx) = (layers.len() - 1, s);
        while let Some((p, c)) = layers[layer][idx].back {
            for (i, b) in choices[layer - 1][c].2.iter().enumerate() {
                bundles[i] = bundles[i].union(*b);
            }
            layer -= 1;
            idx = p;
        }
        points.push(Dominator {
            utilities: state.utils.clone(),
            allocation: Allocation::from_disjoint(bundles),
        });
    }
    Ok(keep_maximal(points))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feasibility::{enumerate_feasible, Category, DEFAULT_CAP};
    use crate::fixtures;
    use crate::rational::int;
    use proptest::prelude::*;

    fn naive_frontier(
        instance: &Instance,
        fs: &FeasibilitySet,
        complete: bool,
    ) -> Vec<Vec<Rational>> {
        let all: Vec<Vec<Rational>> = enumerate_feasible(instance, fs, complete, DEFAULT_CAP)
            .unwrap()
            .iter()
            .map(|a| utilities(instance, a).utilities)
            .collect();
        let mut f: Vec<Vec<Rational>> = all
            .iter()
            .filter(|u| !all.iter().any(|v| dominates(v, u)))
            .cloned()
            .collect();
        f.sort();
        f.dedup();
        f
    }

    fn points(instance: &Instance, fs: &FeasibilitySet, complete: bool) -> Vec<Vec<Rational>> {
        let mut f: Vec<Vec<Rational>> = pareto_frontier(instance, fs, complete, DEFAULT_CAP)
            .unwrap()
            .into_iter()
            .map(|d| d.utilities)
            .collect();
        f.sort();
        f
    }

    #[test]
    fn roundrobin_dominator_is_on_the_frontier() {
        let p = fixtures::roundrobin_po();
        let rr = crate::mnw::round_robin(&p.instance, &[0, 1]);
        let target = utilities(&p.instance, &rr).utilities;
        let found = dominators(&p.instance, &p.constraint, false, &target, DEFAULT_CAP).unwrap();
        assert!(found.iter().any(|d| d.utilities == vec![int(20), int(26)]));
        for d in &found {
            assert!(p.constraint.is_feasible_allocation(&d.allocation, false));
            assert_eq!(utilities(&p.instance, &d.allocation).utilities, d.utilities);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(60))]

        #[test]
        fn dp_matches_enumeration(
            rows in proptest::collection::vec(proptest::collection::vec(0i64..=3, 6), 2..=3),
            kind in 0u8..5,
            complete in any::<bool>(),
        ) {
            let inst = Instance::from_values(rows.iter().map(|r| r.iter().map(|&v| int(v)).collect()).collect()).unwrap();
            let n = inst.agent_count() as u32;
            let constraint = match kind {
                0 => Constraint::Free,
                1 => Constraint::Uniform { rank: 3 },
                2 => Constraint::Balanced,
                3 => Constraint::Partition { categories: vec![Category::upper(Bundle(0b0111), 1)] },
                _ => Constraint::PartitionLb { categories: vec![Category::new(Bundle(0b111100), 1, 2.max(4u32.div_ceil(n)))] },
            };
            let fs = FeasibilitySet::new(constraint, &inst).unwrap();
            prop_assert_eq!(points(&inst, &fs, complete), naive_frontier(&inst, &fs, complete));
        }
    }
}
