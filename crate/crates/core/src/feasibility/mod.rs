//! Feasibility oracles for every supported constraint family.

mod enumerate;
mod matroid;

pub use enumerate::{enumerate_feasible, for_each_feasible, DEFAULT_CAP};
pub(crate) use enumerate::{lower_bounded, lower_reachable};
pub use matroid::{base_orderable_bijection, free_extend, lower_bound_worlds, Bijection};

use num_traits::Zero;

use crate::error::{Error, Result};
use crate::instance::{Allocation, Bundle, Instance};
use crate::rational::Rational;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Category {
    pub goods: Bundle,
    pub lower: u32,
    pub upper: u32,
}

impl Category {
    pub fn new(goods: Bundle, lower: u32, upper: u32) -> Category {
        Category {
            goods,
            lower,
            upper,
        }
    }

    pub fn upper(goods: Bundle, upper: u32) -> Category {
        Category {
            goods,
            lower: 0,
            upper,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Constraint {
    Free,
    Uniform {
        rank: usize,
    },
    Partition {
        categories: Vec<Category>,
    },
    Laminar {
        categories: Vec<Category>,
    },
    /// Good `g` is the edge `edges[g]`.
    Graphic {
        edges: Vec<(u32, u32)>,
    },
    Copies {
        categories: Vec<Category>,
    },
    Balanced,
    PartitionLb {
        categories: Vec<Category>,
    },
    /// Goods with copies where bundle sizes must also differ by at most one.
    CopiesBalanced {
        categories: Vec<Category>,
    },
    /// Free extension of `base` by `dummies`, truncated at `rank`.
    Extended {
        base: Box<Constraint>,
        dummies: Bundle,
        rank: usize,
    },
}

impl Constraint {
    pub fn name(&self) -> &'static str {
        match self {
            Constraint::Free => "free",
            Constraint::Uniform { .. } => "uniform",
            Constraint::Partition { .. } => "partition",
            Constraint::Laminar { .. } => "laminar",
            Constraint::Graphic { .. } => "graphic",
            Constraint::Copies { .. } => "copies",
            Constraint::Balanced => "balanced",
            Constraint::PartitionLb { .. } => "partition_lb",
            Constraint::CopiesBalanced { .. } => "copies_balanced",
            Constraint::Extended { .. } => "extended",
        }
    }

    pub fn categories(&self) -> &[Category] {
        match self {
            Constraint::Partition { categories }
            | Constraint::Laminar { categories }
            | Constraint::Copies { categories }
            | Constraint::PartitionLb { categories }
            | Constraint::CopiesBalanced { categories } => categories,
            _ => &[],
        }
    }
}

/// A constraint family bound to the dimensions of one instance.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeasibilitySet {
    constraint: Constraint,
    agents: usize,
    goods: usize,
}

impl FeasibilitySet {
    pub fn new(constraint: Constraint, instance: &Instance) -> Result<FeasibilitySet> {
        let fs = FeasibilitySet {
            constraint,
            agents: instance.agent_count(),
            goods: instance.good_count(),
        };
        fs.validate(&fs.constraint, instance)?;
        Ok(fs)
    }

    pub fn free(instance: &Instance) -> FeasibilitySet {
        FeasibilitySet {
            constraint: Constraint::Free,
            agents: instance.agent_count(),
            goods: instance.good_count(),
        }
    }

    fn validate(&self, constraint: &Constraint, instance: &Instance) -> Result<()> {
        let ground = Bundle::full(self.goods);
        let bad = |msg: String| Err(Error::InvalidConstraint(msg));
        for c in constraint.categories() {
            if !c.goods.is_subset(ground) {
                return bad("category refers to a missing good".into());
            }
            if c.lower > c.upper {
                return bad("category lower bound exceeds upper bound".into());
            }
        }
        let cats = constraint.categories();
        let disjoint = || {
            cats.iter()
                .enumerate()
                .all(|(a, c)| cats[a + 1..].iter().all(|d| c.goods.is_disjoint(d.goods)))
        };
        match constraint {
            Constraint::Free | Constraint::Balanced => Ok(()),
            Constraint::Uniform { .. } => Ok(()),
            Constraint::Partition { categories } => {
                if !disjoint() {
                    return bad("partition categories overlap".into());
                }
                if categories.iter().any(|c| c.lower > 0) {
                    return bad(
                        "partition categories carry no lower bounds; use partition_lb".into(),
                    );
                }
                Ok(())
            }
            Constraint::Laminar { categories } => {
                for (a, c) in categories.iter().enumerate() {
                    for d in &categories[a + 1..] {
                        let inter = c.goods.intersect(d.goods);
                        if !(inter.is_empty() || inter == c.goods || inter == d.goods) {
                            return bad("laminar categories must be nested or disjoint".into());
                        }
                    }
                    if c.lower > 0 {
                        return bad("laminar categories carry no lower bounds".into());
                    }
                }
                Ok(())
            }
            Constraint::Graphic { edges } => {
                if edges.len() != self.goods {
                    return bad(format!("{} edges for {} goods", edges.len(), self.goods));
                }
                Ok(())
            }
            Constraint::Copies { categories } | Constraint::CopiesBalanced { categories } => {
                if !disjoint() {
                    return bad("copy categories overlap".into());
                }
                for c in categories {
                    if c.upper != 1 || c.lower != 0 {
                        return bad("copy categories have bound exactly 1".into());
                    }
                    if c.goods.len() > self.agents {
                        return bad("a good has more copies than there are agents".into());
                    }
                    let first = c.goods.iter().next();
                    if let Some(f) = first {
                        for i in 0..self.agents {
                            if c.goods
                                .iter()
                                .any(|g| instance.value(i, g) != instance.value(i, f))
                            {
                                return bad(format!(
                                    "agent {} values copies of one good differently",
                                    i
                                ));
                            }
                        }
                    }
                }
                Ok(())
            }
            Constraint::PartitionLb { categories } => {
                if !disjoint() {
                    return bad("partition categories overlap".into());
                }
                let n = self.agents as u32;
                for c in categories {
                    let size = c.goods.len() as u32;
                    if !(c.lower <= size / n && size.div_ceil(n) <= c.upper) {
                        return bad(
                            "bounds must satisfy lower <= floor(|C|/n) <= ceil(|C|/n) <= upper"
                                .into(),
                        );
                    }
                }
                Ok(())
            }
            Constraint::Extended {
                base,
                dummies,
                rank,
            } => {
                if !dummies.is_subset(ground) {
                    return bad("dummy goods out of range".into());
                }
                if dummies
                    .iter()
                    .any(|g| (0..self.agents).any(|i| !instance.value(i, g).is_zero()))
                {
                    return bad("dummy goods must be worthless".into());
                }
                let _ = rank;
                let real = self.goods - dummies.len();
                if *dummies != ground.minus(Bundle::full(real)) {
                    return bad("dummy goods must follow the original goods".into());
                }
                let inner = FeasibilitySet {
                    constraint: (**base).clone(),
                    agents: self.agents,
                    goods: real,
                };
                inner.validate(base, instance)
            }
        }
    }

    pub fn constraint(&self) -> &Constraint {
        &self.constraint
    }

    pub fn name(&self) -> &'static str {
        self.constraint.name()
    }

    pub fn agent_count(&self) -> usize {
        self.agents
    }

    pub fn good_count(&self) -> usize {
        self.goods
    }

    pub fn categories(&self) -> &[Category] {
        self.constraint.categories()
    }

    pub fn is_matroidal(&self) -> bool {
        !matches!(
            self.constraint,
            Constraint::Balanced
                | Constraint::PartitionLb { .. }
                | Constraint::CopiesBalanced { .. }
        )
    }

    /// Bundle-size bounds of the balanced families.
    pub fn balanced_bounds(&self) -> (usize, usize) {
        let n = self.agents.max(1);
        (self.goods / n, self.goods.div_ceil(n))
    }

    fn unsupported<T>(&self) -> Result<T> {
        Err(Error::UnsupportedConstraint(self.name().to_string()))
    }

    pub fn is_independent(&self, set: Bundle) -> Result<bool> {
        if !self.is_matroidal() {
            return self.unsupported();
        }
        Ok(independent(&self.constraint, set))
    }

    pub fn is_feasible_bundle(&self, set: Bundle) -> bool {
        if !set.is_subset(Bundle::full(self.goods)) {
            return false;
        }
        match &self.constraint {
            Constraint::Balanced => {
                let (lo, hi) = self.balanced_bounds();
                (lo..=hi).contains(&set.len())
            }
            Constraint::PartitionLb { categories } => categories.iter().all(|c| {
                let k = set.intersect(c.goods).len() as u32;
                c.lower <= k && k <= c.upper
            }),
            Constraint::CopiesBalanced { categories } => {
                let (lo, hi) = self.balanced_bounds();
                (lo..=hi).contains(&set.len()) && within_upper(categories, set)
            }
            c => independent(c, set),
        }
    }

    pub fn is_feasible_allocation(&self, alloc: &Allocation, complete: bool) -> bool {
        if alloc.agent_count() != self.agents {
            return false;
        }
        if complete && alloc.allocated() != Bundle::full(self.goods) {
            return false;
        }
        alloc.bundles().iter().all(|b| self.is_feasible_bundle(*b))
    }

    /// Upper-bound feasibility of a partial bundle: some superset may still be feasible.
    pub fn can_extend(&self, set: Bundle) -> bool {
        match &self.constraint {
            Constraint::Balanced => set.len() <= self.balanced_bounds().1,
            Constraint::PartitionLb { categories } => within_upper(categories, set),
            Constraint::CopiesBalanced { categories } => {
                set.len() <= self.balanced_bounds().1 && within_upper(categories, set)
            }
            c => independent(c, set),
        }
    }

    pub fn rank(&self) -> Result<usize> {
        if !self.is_matroidal() {
            return self.unsupported();
        }
        let mut basis = Bundle::EMPTY;
        for g in 0..self.goods {
            if independent(&self.constraint, basis.with(g)) {
                basis = basis.with(g);
            }
        }
        Ok(basis.len())
    }

    /// Greedy max-weight independent subset of `within`: descending weight, ties by index.
    pub fn max_weight_independent(
        &self,
        weights: &[Rational],
        within: Bundle,
    ) -> Result<(Bundle, Rational)> {
        if !self.is_matroidal() {
            return self.unsupported();
        }
        let mut order: Vec<usize> = within
            .iter()
            .filter(|&g| weights[g] > Rational::zero())
            .collect();
        order.sort_by(|&a, &b| weights[b].cmp(&weights[a]).then(a.cmp(&b)));
        let mut chosen = Bundle::EMPTY;
        let mut value = Rational::zero();
        for g in order {
            if independent(&self.constraint, chosen.with(g)) {
                chosen = chosen.with(g);
                value += &weights[g];
            }
        }
        Ok((chosen, value))
    }

    pub(crate) fn with_constraint(&self, constraint: Constraint, goods: usize) -> FeasibilitySet {
        FeasibilitySet {
            constraint,
            agents: self.agents,
            goods,
        }
    }
}

fn within_upper(categories: &[Category], set: Bundle) -> bool {
    categories
        .iter()
        .all(|c| set.intersect(c.goods).len() as u32 <= c.upper)
}

fn independent(constraint: &Constraint, set: Bundle) -> bool {
    match constraint {
        Constraint::Free => true,
        Constraint::Uniform { rank } => set.len() <= *rank,
        Constraint::Partition { categories }
        | Constraint::Laminar { categories }
        | Constraint::Copies { categories } => within_upper(categories, set),
        Constraint::Graphic { edges } => is_forest(edges, set),
        Constraint::Extended {
            base,
            dummies,
            rank,
        } => set.len() <= *rank && independent(base, set.minus(*dummies)),
        Constraint::Balanced
        | Constraint::PartitionLb { .. }
        | Constraint::CopiesBalanced { .. } => {
            unreachable!("non-matroidal constraint has no independence oracle")
        }
    }
}

/// Incremental union-find acyclicity check over the edges selected by `set`.
fn is_forest(edges: &[(u32, u32)], set: Bundle) -> bool {
    let vertices = set
        .iter()
        .filter(|&g| g < edges.len())
        .map(|g| edges[g].0.max(edges[g].1) as usize + 1)
        .max()
        .unwrap_or(0);
    let mut parent: Vec<usize> = (0..vertices).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for g in set.iter() {
        let Some(&(u, v)) = edges.get(g) else {
            return false;
        };
        let (ru, rv) = (find(&mut parent, u as usize), find(&mut parent, v as usize));
        if ru == rv {
            return false;
        }
        parent[ru] = rv;
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::rational::int;

    fn bundle(ids: &[usize]) -> Bundle {
        Bundle::from_indices(ids.iter().copied())
    }

    #[test]
    fn example1_independence() {
        let p = fixtures::example1();
        let fs = &p.constraint;
        assert!(fs.is_independent(bundle(&[0, 1])).unwrap());
        assert!(!fs.is_independent(bundle(&[0, 1, 2])).unwrap());
        assert!(fs.is_independent(Bundle::EMPTY).unwrap());
        assert_eq!(fs.rank().unwrap(), 4);
    }

    #[test]
    fn triangle_is_dependent() {
        let inst = Instance::from_values(vec![vec![int(1); 3]]).unwrap();
        let fs = FeasibilitySet::new(
            Constraint::Graphic {
                edges: vec![(0, 1), (1, 2), (2, 0)],
            },
            &inst,
        )
        .unwrap();
        assert!(!fs.is_independent(bundle(&[0, 1, 2])).unwrap());
        assert!(fs.is_independent(bundle(&[0, 2])).unwrap());
        assert_eq!(fs.rank().unwrap(), 2);
    }

    #[test]
    fn balanced_sizes() {
        let inst = Instance::from_values(vec![vec![int(1); 8]; 2]).unwrap();
        let fs = FeasibilitySet::new(Constraint::Balanced, &inst).unwrap();
        let a = Allocation::new(vec![bundle(&[0, 1, 2, 3]), bundle(&[4, 5, 6, 7])]).unwrap();
        let b = Allocation::new(vec![bundle(&[0, 1, 2, 3, 4]), bundle(&[5, 6, 7])]).unwrap();
        assert!(fs.is_feasible_allocation(&a, true));
        assert!(!fs.is_feasible_allocation(&b, false));
        assert!(fs.is_independent(Bundle::EMPTY).is_err());
    }

    #[test]
    fn lower_bound_missing_category_is_infeasible() {
        let inst = Instance::from_values(vec![vec![int(1); 4]; 2]).unwrap();
        let cats = vec![
            Category::new(bundle(&[0, 1]), 1, 1),
            Category::new(bundle(&[2, 3]), 0, 2),
        ];
        let fs = FeasibilitySet::new(Constraint::PartitionLb { categories: cats }, &inst).unwrap();
        assert!(!fs.is_feasible_bundle(bundle(&[2, 3])));
        assert!(fs.is_feasible_bundle(bundle(&[0, 3])));
    }

    #[test]
    fn example1_mnw_allocation_is_feasible_but_incomplete() {
        let p = fixtures::example1();
        let a = fixtures::example1_mnw(&p.instance);
        assert!(p.constraint.is_feasible_allocation(&a, false));
        assert!(!p.constraint.is_feasible_allocation(&a, true));
    }

    #[test]
    fn greedy_weights() {
        let p = fixtures::example1();
        let w = &p.instance.valuations()[0];
        let (set, value) = p
            .constraint
            .max_weight_independent(w, p.instance.all_goods())
            .unwrap();
        assert_eq!(value, int(4));
        assert_eq!(set, bundle(&[1, 4, 5, 6]));
        let (empty, zero) = p
            .constraint
            .max_weight_independent(w, Bundle::EMPTY)
            .unwrap();
        assert_eq!((empty, zero), (Bundle::EMPTY, int(0)));

        let inst = Instance::from_values(vec![vec![int(5), int(3), int(1)]]).unwrap();
        let fs = FeasibilitySet::new(Constraint::Uniform { rank: 2 }, &inst).unwrap();
        let (_, v) = fs
            .max_weight_independent(&inst.valuations()[0], inst.all_goods())
            .unwrap();
        assert_eq!(v, int(8));
    }

    #[test]
    fn rejects_non_laminar_and_unequal_copies() {
        let inst = Instance::from_values(vec![vec![int(1), int(2), int(1)]; 2]).unwrap();
        let cats = vec![
            Category::upper(bundle(&[0, 1]), 1),
            Category::upper(bundle(&[1, 2]), 1),
        ];
        assert!(FeasibilitySet::new(Constraint::Laminar { categories: cats }, &inst).is_err());
        let copies = vec![Category::upper(bundle(&[0, 1]), 1)];
        assert!(FeasibilitySet::new(Constraint::Copies { categories: copies }, &inst).is_err());
    }
}
