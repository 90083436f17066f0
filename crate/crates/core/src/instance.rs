//! Instances, bundles, allocations and utility profiles.

use std::collections::HashMap;
use std::fmt;

use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::rational::Rational;

/// Largest number of goods an instance may hold (bundles are 64-bit masks).
pub const MAX_GOODS: usize = 64;

/// A set of good indices.
#[derive(Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Bundle(pub u64);

impl Bundle {
    pub const EMPTY: Bundle = Bundle(0);

    pub fn full(m: usize) -> Bundle {
        if m >= 64 {
            Bundle(u64::MAX)
        } else {
            Bundle((1u64 << m) - 1)
        }
    }

    pub fn singleton(g: usize) -> Bundle {
        Bundle(1u64 << g)
    }

    pub fn from_indices(indices: impl IntoIterator<Item = usize>) -> Bundle {
        indices.into_iter().fold(Bundle::EMPTY, |b, g| b.with(g))
    }

    pub fn contains(self, g: usize) -> bool {
        self.0 >> g & 1 == 1
    }

    pub fn with(self, g: usize) -> Bundle {
        Bundle(self.0 | 1u64 << g)
    }

    pub fn without(self, g: usize) -> Bundle {
        Bundle(self.0 & !(1u64 << g))
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn union(self, other: Bundle) -> Bundle {
        Bundle(self.0 | other.0)
    }

    pub fn intersect(self, other: Bundle) -> Bundle {
        Bundle(self.0 & other.0)
    }

    pub fn minus(self, other: Bundle) -> Bundle {
        Bundle(self.0 & !other.0)
    }

    pub fn is_subset(self, other: Bundle) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn is_disjoint(self, other: Bundle) -> bool {
        self.0 & other.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = usize> {
        let mut bits = self.0;
        std::iter::from_fn(move || {
            if bits == 0 {
                None
            } else {
                let g = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(g)
            }
        })
    }
}

impl fmt::Debug for Bundle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

impl FromIterator<usize> for Bundle {
    fn from_iter<T: IntoIterator<Item = usize>>(iter: T) -> Self {
        Bundle::from_indices(iter)
    }
}

/// Agents, goods and additive valuations.
#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    goods: Vec<String>,
    valuations: Vec<Vec<Rational>>,
    supplies: Vec<u32>,
    index: HashMap<String, usize>,
}

impl Instance {
    pub fn new(goods: Vec<String>, valuations: Vec<Vec<Rational>>) -> Result<Instance> {
        let m = goods.len();
        let supplies = vec![1; m];
        Instance::with_supplies(goods, valuations, supplies)
    }

    pub fn with_supplies(
        goods: Vec<String>,
        valuations: Vec<Vec<Rational>>,
        supplies: Vec<u32>,
    ) -> Result<Instance> {
        let m = goods.len();
        if valuations.is_empty() {
            return Err(Error::Schema("at least one agent is required".into()));
        }
        if m > MAX_GOODS {
            return Err(Error::TooManyGoods {
                max: MAX_GOODS,
                got: m,
            });
        }
        let mut index = HashMap::with_capacity(m);
        for (g, id) in goods.iter().enumerate() {
            if index.insert(id.clone(), g).is_some() {
                return Err(Error::DuplicateGood(id.clone()));
            }
        }
        for (i, row) in valuations.iter().enumerate() {
            if row.len() != m {
                return Err(Error::DimensionMismatch(format!(
                    "agent {} has {} valuations for {} goods",
                    i,
                    row.len(),
                    m
                )));
            }
            if let Some(g) = row.iter().position(|v| *v < Rational::zero()) {
                return Err(Error::NegativeValuation {
                    agent: i,
                    good: goods[g].clone(),
                });
            }
        }
        if supplies.len() != m {
            return Err(Error::DimensionMismatch(format!(
                "{} supplies for {} goods",
                supplies.len(),
                m
            )));
        }
        if let Some(g) = supplies.iter().position(|&q| q == 0) {
            return Err(Error::Schema(format!(
                "supply of `{}` must be positive",
                goods[g]
            )));
        }
        Ok(Instance {
            goods,
            valuations,
            supplies,
            index,
        })
    }

    /// Goods named `g1..gm`.
    pub fn from_values(valuations: Vec<Vec<Rational>>) -> Result<Instance> {
        let m = valuations.first().map_or(0, Vec::len);
        Instance::new((1..=m).map(|g| format!("g{}", g)).collect(), valuations)
    }

    pub fn agent_count(&self) -> usize {
        self.valuations.len()
    }

    pub fn good_count(&self) -> usize {
        self.goods.len()
    }

    pub fn goods(&self) -> &[String] {
        &self.goods
    }

    pub fn good_id(&self, g: usize) -> &str {
        &self.goods[g]
    }

    pub fn good_index(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn valuations(&self) -> &[Vec<Rational>] {
        &self.valuations
    }

    pub fn value(&self, agent: usize, good: usize) -> &Rational {
        &self.valuations[agent][good]
    }

    pub fn supplies(&self) -> &[u32] {
        &self.supplies
    }

    pub fn all_goods(&self) -> Bundle {
        Bundle::full(self.good_count())
    }

    pub fn bundle_value(&self, agent: usize, bundle: Bundle) -> Rational {
        let row = &self.valuations[agent];
        bundle.iter().fold(Rational::zero(), |acc, g| acc + &row[g])
    }

    /// Largest single-good value in `bundle` for `agent`, zero when empty.
    pub fn max_good_value(&self, agent: usize, bundle: Bundle) -> Rational {
        bundle
            .iter()
            .map(|g| &self.valuations[agent][g])
            .max()
            .cloned()
            .unwrap_or_else(Rational::zero)
    }

    pub fn bundle_of(&self, ids: &[&str]) -> Result<Bundle> {
        ids.iter()
            .map(|id| {
                self.good_index(id)
                    .ok_or_else(|| Error::UnknownGood(id.to_string()))
            })
            .collect()
    }

    /// Instance restricted to `keep_agents` and `keep_goods` (used when shrinking counterexamples).
    pub fn restrict(&self, keep_agents: &[usize], keep_goods: &[usize]) -> Result<Instance> {
        let goods = keep_goods.iter().map(|&g| self.goods[g].clone()).collect();
        let valuations = keep_agents
            .iter()
            .map(|&i| {
                keep_goods
                    .iter()
                    .map(|&g| self.valuations[i][g].clone())
                    .collect()
            })
            .collect();
        let supplies = keep_goods.iter().map(|&g| self.supplies[g]).collect();
        Instance::with_supplies(goods, valuations, supplies)
    }
}

/// Integral allocation; goods outside every bundle are unallocated.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Allocation {
    bundles: Vec<Bundle>,
}

impl Allocation {
    pub fn new(bundles: Vec<Bundle>) -> Result<Allocation> {
        let mut seen = Bundle::EMPTY;
        for b in &bundles {
            if !seen.is_disjoint(*b) {
                return Err(Error::InvalidAllocation("bundles overlap".into()));
            }
            seen = seen.union(*b);
        }
        Ok(Allocation { bundles })
    }

    pub(crate) fn from_disjoint(bundles: Vec<Bundle>) -> Allocation {
        debug_assert!(Allocation::new(bundles.clone()).is_ok());
        Allocation { bundles }
    }

    pub fn empty(n: usize) -> Allocation {
        Allocation {
            bundles: vec![Bundle::EMPTY; n],
        }
    }

    pub fn from_ids(instance: &Instance, bundles: &[Vec<&str>]) -> Result<Allocation> {
        let bundles = bundles
            .iter()
            .map(|ids| instance.bundle_of(ids))
            .collect::<Result<_>>()?;
        let alloc = Allocation::new(bundles)?;
        alloc.validate(instance)?;
        Ok(alloc)
    }

    pub fn validate(&self, instance: &Instance) -> Result<()> {
        if self.bundles.len() != instance.agent_count() {
            return Err(Error::DimensionMismatch(format!(
                "allocation has {} bundles for {} agents",
                self.bundles.len(),
                instance.agent_count()
            )));
        }
        if !self.allocated().is_subset(instance.all_goods()) {
            return Err(Error::InvalidAllocation(
                "bundle refers to a missing good".into(),
            ));
        }
        Ok(())
    }

    pub fn bundles(&self) -> &[Bundle] {
        &self.bundles
    }

    pub fn bundle(&self, agent: usize) -> Bundle {
        self.bundles[agent]
    }

    pub fn agent_count(&self) -> usize {
        self.bundles.len()
    }

    pub fn allocated(&self) -> Bundle {
        self.bundles
            .iter()
            .fold(Bundle::EMPTY, |acc, b| acc.union(*b))
    }

    pub fn is_complete(&self, instance: &Instance) -> bool {
        self.allocated() == instance.all_goods()
    }

    pub fn owner(&self, g: usize) -> Option<usize> {
        self.bundles.iter().position(|b| b.contains(g))
    }

    pub fn ids<'a>(&self, instance: &'a Instance) -> Vec<Vec<&'a str>> {
        self.bundles
            .iter()
            .map(|b| b.iter().map(|g| instance.good_id(g)).collect())
            .collect()
    }
}

/// Per-agent utilities together with the positive-support set and Nash welfare.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UtilityProfile {
    pub utilities: Vec<Rational>,
    pub positive: Vec<usize>,
    pub nash_welfare: Rational,
}

impl UtilityProfile {
    pub fn from_utilities(utilities: Vec<Rational>) -> UtilityProfile {
        let positive: Vec<usize> = (0..utilities.len())
            .filter(|&i| utilities[i] > Rational::zero())
            .collect();
        let nash_welfare = if positive.is_empty() {
            Rational::zero()
        } else {
            positive
                .iter()
                .fold(Rational::one(), |acc, &i| acc * &utilities[i])
        };
        UtilityProfile {
            utilities,
            positive,
            nash_welfare,
        }
    }

    /// Lexicographic objective: support size first, then Nash welfare.
    pub fn key(&self) -> MnwKey {
        MnwKey {
            support: self.positive.len(),
            nash_welfare: self.nash_welfare.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct MnwKey {
    pub support: usize,
    pub nash_welfare: Rational,
}

pub fn utilities(instance: &Instance, alloc: &Allocation) -> UtilityProfile {
    UtilityProfile::from_utilities(
        (0..instance.agent_count())
            .map(|i| instance.bundle_value(i, alloc.bundle(i)))
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{int, rat};

    fn ints(rows: &[&[i64]]) -> Vec<Vec<Rational>> {
        rows.iter()
            .map(|r| r.iter().map(|&v| int(v)).collect())
            .collect()
    }

    #[test]
    fn bundle_ops() {
        let b = Bundle::from_indices([0, 3, 5]);
        assert_eq!(b.len(), 3);
        assert!(b.contains(3) && !b.contains(2));
        assert_eq!(b.iter().collect::<Vec<_>>(), vec![0, 3, 5]);
        assert_eq!(b.without(3).with(1), Bundle::from_indices([0, 1, 5]));
        assert_eq!(Bundle::full(64).len(), 64);
    }

    #[test]
    fn rejects_bad_instances() {
        let neg = Instance::from_values(vec![vec![int(-1)]]);
        assert!(matches!(
            neg,
            Err(Error::NegativeValuation { agent: 0, .. })
        ));
        let dup = Instance::new(vec!["a".into(), "a".into()], ints(&[&[1, 1]]));
        assert!(matches!(dup, Err(Error::DuplicateGood(_))));
        let dim = Instance::from_values(vec![vec![int(1)], vec![]]);
        assert!(matches!(dim, Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn empty_allocation_has_zero_welfare() {
        let inst = Instance::from_values(ints(&[&[1, 2], &[3, 4]])).unwrap();
        let u = utilities(&inst, &Allocation::empty(2));
        assert!(u.positive.is_empty());
        assert_eq!(u.nash_welfare, int(0));
    }

    #[test]
    fn overlapping_bundles_rejected() {
        assert!(Allocation::new(vec![
            Bundle::from_indices([0]),
            Bundle::from_indices([0, 1])
        ])
        .is_err());
    }

    #[test]
    fn welfare_multiplies_positive_utilities() {
        let inst =
            Instance::from_values(vec![vec![rat(1, 2), int(0)], vec![int(0), int(0)]]).unwrap();
        let a =
            Allocation::new(vec![Bundle::from_indices([0]), Bundle::from_indices([1])]).unwrap();
        let u = utilities(&inst, &a);
        assert_eq!(u.positive, vec![0]);
        assert_eq!(u.nash_welfare, rat(1, 2));
    }
}
