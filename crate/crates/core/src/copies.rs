//! Type-level instances with supplies versus their copy-level expansion.

use crate::error::{Error, Result};
use crate::feasibility::{Category, Constraint, FeasibilitySet};
use crate::instance::{Allocation, Bundle, Instance};
use crate::io::Problem;

/// Copy-level problem plus the map from each copy to its good type.
#[derive(Clone, Debug)]
pub struct CopiesView {
    pub problem: Problem,
    pub type_of: Vec<usize>,
    /// Copies of each type, in order.
    pub copies: Vec<Vec<usize>>,
}

/// Expands a good with supply `q > 1` into copies `g#1..g#q`; the copies form one category.
pub fn expand_copies(types: &Instance) -> Result<CopiesView> {
    expand(types, false)
}

/// Same expansion with a balancedness requirement on top of the copies constraint.
pub fn expand_copies_balanced(types: &Instance) -> Result<CopiesView> {
    expand(types, true)
}

fn expand(types: &Instance, balanced: bool) -> Result<CopiesView> {
    let n = types.agent_count();
    let mut goods = Vec::new();
    let mut type_of = Vec::new();
    let mut copies = Vec::new();
    for (t, id) in types.goods().iter().enumerate() {
        let q = types.supplies()[t] as usize;
        if q > n {
            return Err(Error::InvalidConstraint(format!(
                "good `{}` has more copies than agents",
                id
            )));
        }
        let mut mine = Vec::with_capacity(q);
        for c in 1..=q {
            mine.push(goods.len());
            goods.push(if q == 1 {
                id.clone()
            } else {
                format!("{}#{}", id, c)
            });
            type_of.push(t);
        }
        copies.push(mine);
    }
    let valuations = types
        .valuations()
        .iter()
        .map(|row| type_of.iter().map(|&t| row[t].clone()).collect())
        .collect();
    let instance = Instance::new(goods, valuations)?;
    let categories: Vec<Category> = copies
        .iter()
        .map(|c| Category::upper(c.iter().copied().collect(), 1))
        .collect();
    let constraint = if balanced {
        Constraint::CopiesBalanced { categories }
    } else {
        Constraint::Copies { categories }
    };
    let constraint = FeasibilitySet::new(constraint, &instance)?;
    Ok(CopiesView {
        problem: Problem {
            instance,
            constraint,
        },
        type_of,
        copies,
    })
}

impl CopiesView {
    /// Copy-level allocation for a type-level assignment; holders take copies in agent order.
    pub fn to_allocation(&self, assignment: &[Bundle]) -> Result<Allocation> {
        let mut bundles = vec![Bundle::EMPTY; assignment.len()];
        for (t, copies) in self.copies.iter().enumerate() {
            let holders: Vec<usize> = (0..assignment.len())
                .filter(|&i| assignment[i].contains(t))
                .collect();
            if holders.len() > copies.len() {
                return Err(Error::InvalidAllocation(format!(
                    "good type {} assigned beyond its supply",
                    t
                )));
            }
            for (i, c) in holders.into_iter().zip(copies) {
                bundles[i] = bundles[i].with(*c);
            }
        }
        Allocation::new(bundles)
    }

    /// Type-level view of a copy-level allocation.
    pub fn to_assignment(&self, alloc: &Allocation) -> Vec<Bundle> {
        alloc
            .bundles()
            .iter()
            .map(|b| b.iter().map(|c| self.type_of[c]).collect())
            .collect()
    }

    /// Number of copies of each type an agent holds.
    pub fn type_counts(&self, bundle: Bundle) -> Vec<usize> {
        let mut counts = vec![0; self.copies.len()];
        for c in bundle.iter() {
            counts[self.type_of[c]] += 1;
        }
        counts
    }
}

/// Type-level instance recovered from copy categories (one type per category, uncovered goods are singletons).
pub fn collapse_copies(problem: &Problem) -> Result<(Instance, Vec<Vec<usize>>)> {
    let inst = &problem.instance;
    let mut groups: Vec<Vec<usize>> = problem
        .constraint
        .categories()
        .iter()
        .map(|c| c.goods.iter().collect())
        .collect();
    let covered = groups
        .iter()
        .flatten()
        .fold(Bundle::EMPTY, |b, &g| b.with(g));
    groups.extend(inst.all_goods().minus(covered).iter().map(|g| vec![g]));
    groups.retain(|g| !g.is_empty());
    groups.sort();
    let goods = groups
        .iter()
        .map(|g| base_name(inst.good_id(g[0])))
        .collect();
    let valuations = (0..inst.agent_count())
        .map(|i| groups.iter().map(|g| inst.value(i, g[0]).clone()).collect())
        .collect();
    let supplies = groups.iter().map(|g| g.len() as u32).collect();
    Ok((
        Instance::with_supplies(goods, valuations, supplies)?,
        groups,
    ))
}

fn base_name(id: &str) -> String {
    match id.rsplit_once('#') {
        Some((base, tail)) if tail.chars().all(|c| c.is_ascii_digit()) => base.to_string(),
        _ => id.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::int;

    #[test]
    fn expansion_names_and_round_trip() {
        let types = Instance::with_supplies(
            vec!["a".into(), "b".into()],
            vec![vec![int(1), int(2)], vec![int(3), int(4)]],
            vec![2, 1],
        )
        .unwrap();
        let view = expand_copies(&types).unwrap();
        assert_eq!(view.problem.instance.goods(), &["a#1", "a#2", "b"]);
        let assignment = vec![Bundle::from_indices([0, 1]), Bundle::from_indices([0])];
        let alloc = view.to_allocation(&assignment).unwrap();
        assert!(view.problem.constraint.is_feasible_allocation(&alloc, true));
        assert_eq!(view.to_assignment(&alloc), assignment);
        let (back, _) = collapse_copies(&view.problem).unwrap();
        assert_eq!(back, types);
    }
}
