//! Chore division as goods with `n - 1` copies per chore.

use num_traits::{One, Zero};

use crate::copies::{expand_copies, CopiesView};
use crate::error::{Error, Result};
use crate::fairness::{FairnessReport, Witness};
use crate::instance::{Allocation, Bundle, Instance};
use crate::rational::Rational;

/// Costs are non-negative magnitudes; an agent's utility is the negated cost.
#[derive(Clone, Debug, PartialEq)]
pub struct ChoresInstance {
    pub chores: Vec<String>,
    pub costs: Vec<Vec<Rational>>,
}

impl ChoresInstance {
    pub fn new(chores: Vec<String>, costs: Vec<Vec<Rational>>) -> Result<ChoresInstance> {
        if costs.len() < 2 {
            return Err(Error::DimensionMismatch(
                "chore division needs at least two agents".into(),
            ));
        }
        // Reuses the goods validation: ids, dimensions, non-negativity.
        Instance::new(chores.clone(), costs.clone())?;
        Ok(ChoresInstance { chores, costs })
    }

    pub fn agent_count(&self) -> usize {
        self.costs.len()
    }

    pub fn chore_count(&self) -> usize {
        self.chores.len()
    }

    pub fn cost(&self, agent: usize, bundle: Bundle) -> Rational {
        bundle
            .iter()
            .fold(Rational::zero(), |a, c| a + &self.costs[agent][c])
    }
}

/// One copy category per chore with `n - 1` copies valued at the chore's cost.
pub fn chores_to_copies(chores: &ChoresInstance) -> Result<CopiesView> {
    let supply = chores.agent_count() as u32 - 1;
    let types = Instance::with_supplies(
        chores.chores.clone(),
        chores.costs.clone(),
        vec![supply; chores.chore_count()],
    )?;
    expand_copies(&types)
}

/// Each chore goes to the one agent holding no copy of it.
pub fn copies_alloc_to_chores(view: &CopiesView, alloc: &Allocation) -> Result<Vec<Bundle>> {
    let n = alloc.agent_count();
    let assignment = view.to_assignment(alloc);
    let mut chores = vec![Bundle::EMPTY; n];
    for (t, copies) in view.copies.iter().enumerate() {
        let holders = copies.iter().filter(|&&c| alloc.owner(c).is_some()).count();
        let distinct: Vec<usize> = (0..n).filter(|&i| assignment[i].contains(t)).collect();
        if holders + 1 != n || distinct.len() != holders {
            return Err(Error::MalformedCopiesAllocation(format!(
                "good type {} is held by {} distinct agents, expected {}",
                t,
                distinct.len(),
                n - 1
            )));
        }
        let missing = (0..n)
            .find(|i| !distinct.contains(i))
            .expect("one agent lacks the type");
        chores[missing] = chores[missing].with(t);
    }
    Ok(chores)
}

fn most_costly(chores: &ChoresInstance, agent: usize, within: Bundle) -> Option<usize> {
    within.iter().max_by(|&a, &b| {
        chores.costs[agent][a]
            .cmp(&chores.costs[agent][b])
            .then(b.cmp(&a))
    })
}

/// EF¹₁ for chores: dropping one own chore and adding one more to the rival removes envy.
pub fn check_ef11_chores(chores: &ChoresInstance, bundles: &[Bundle]) -> FairnessReport {
    let all = Bundle::full(chores.chore_count());
    let n = bundles.len();
    let witness = (0..n)
        .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
        .find_map(|(i, j)| {
            let (bi, bj) = (bundles[i], bundles[j]);
            if bi.is_empty() || bj == all {
                return None;
            }
            let ci = most_costly(chores, i, bi)?;
            let cj = most_costly(chores, i, all.minus(bj))?;
            let own = chores.cost(i, bi) - &chores.costs[i][ci];
            let rival = chores.cost(i, bj) + &chores.costs[i][cj];
            (own > rival).then_some(Witness::Pair {
                envious: i,
                envied: j,
                removed: Some(ci),
                added: Some(cj),
            })
        });
    FairnessReport::new("ef11-chores", witness)
}

/// Largest `α <= 1` with `α (c_i(B_i) - max_{c in B_i} c_i(c)) <= c_i(B_j)` for all pairs.
pub fn chores_ef1_factor(chores: &ChoresInstance, bundles: &[Bundle]) -> Rational {
    let n = bundles.len();
    let mut factor = Rational::one();
    for i in 0..n {
        let Some(top) = most_costly(chores, i, bundles[i]) else {
            continue;
        };
        let own = chores.cost(i, bundles[i]) - &chores.costs[i][top];
        for j in (0..n).filter(|&j| j != i) {
            let rival = chores.cost(i, bundles[j]);
            if own > rival {
                factor = factor.min(rival / &own);
            }
        }
    }
    factor
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fairness::check_ef11_wc;
    use crate::fixtures;
    use crate::rational::{int, rat};

    #[test]
    fn gap_example_maps_to_zero_factor() {
        let view = fixtures::chores_gap_view();
        let alloc = fixtures::chores_gap_mnw(&view);
        let types = &view.problem.instance;
        let chores = ChoresInstance::new(
            vec!["g1".into(), "g2".into(), "g3".into()],
            (0..3)
                .map(|i| {
                    view.copies
                        .iter()
                        .map(|c| types.value(i, c[0]).clone())
                        .collect()
                })
                .collect(),
        )
        .unwrap();
        let image = copies_alloc_to_chores(&view, &alloc).unwrap();
        assert_eq!(
            image,
            vec![
                Bundle::from_indices([1, 2]),
                Bundle::EMPTY,
                Bundle::from_indices([0])
            ]
        );
        assert_eq!(chores_ef1_factor(&chores, &image), int(0));
        let after_removal = chores.cost(0, image[0]) - rat(1, 100);
        assert_eq!(after_removal, rat(1, 100));
    }

    #[test]
    fn single_chore_two_agents() {
        let chores =
            ChoresInstance::new(vec!["c".into()], vec![vec![int(3)], vec![int(1)]]).unwrap();
        let view = chores_to_copies(&chores).unwrap();
        assert_eq!(view.copies, vec![vec![0]]);
        let alloc = Allocation::new(vec![Bundle::from_indices([0]), Bundle::EMPTY]).unwrap();
        assert_eq!(
            copies_alloc_to_chores(&view, &alloc).unwrap(),
            vec![Bundle::EMPTY, Bundle::from_indices([0])]
        );
        let partial = Allocation::empty(2);
        assert!(matches!(
            copies_alloc_to_chores(&view, &partial),
            Err(Error::MalformedCopiesAllocation(_))
        ));
    }

    #[test]
    fn duality_on_a_small_instance() {
        let chores = ChoresInstance::new(
            vec!["a".into(), "b".into(), "c".into()],
            vec![
                vec![int(3), int(1), int(2)],
                vec![int(1), int(1), int(1)],
                vec![int(2), int(3), int(1)],
            ],
        )
        .unwrap();
        let view = chores_to_copies(&chores).unwrap();
        let alloc = view
            .to_allocation(&[
                Bundle::from_indices([0, 1]),
                Bundle::from_indices([1, 2]),
                Bundle::from_indices([0, 2]),
            ])
            .unwrap();
        let goods_side =
            check_ef11_wc(&view.problem.instance, &view.problem.constraint, &alloc).unwrap();
        let image = copies_alloc_to_chores(&view, &alloc).unwrap();
        assert_eq!(goods_side.holds, check_ef11_chores(&chores, &image).holds);
    }
}
