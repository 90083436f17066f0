//! Exact constrained maximum-Nash-welfare search, round robin and the weighted-rank view.

use std::ops::{Add, Mul};

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::feasibility::{lower_bounded, lower_reachable, Category, FeasibilitySet, DEFAULT_CAP};
use crate::instance::{utilities, Allocation, Bundle, Instance};
use crate::rational::Rational;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SolveMode {
    #[default]
    AllOptima,
    OneOptimum,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SearchStats {
    pub nodes: u64,
    pub pruned: u64,
}

#[derive(Clone, Debug)]
pub struct MnwResult {
    /// Canonically sorted optima.
    pub maximizers: Vec<Allocation>,
    pub support_size: usize,
    pub nash_welfare: Rational,
    pub stats: SearchStats,
}

pub fn solve_mnw(
    instance: &Instance,
    fs: &FeasibilitySet,
    complete: bool,
    mode: SolveMode,
) -> Result<MnwResult> {
    solve_mnw_capped(instance, fs, complete, mode, DEFAULT_CAP)
}

/// Branch and bound over goods in descending total value; `cap` bounds visited nodes.
pub fn solve_mnw_capped(
    instance: &Instance,
    fs: &FeasibilitySet,
    complete: bool,
    mode: SolveMode,
    cap: u64,
) -> Result<MnwResult> {
    let scaled = scale_to_integers(instance);
    let n = instance.agent_count();
    let bits: u64 = (0..n)
        .map(|i| {
            scaled
                .iter()
                .map(|row| &row[i])
                .fold(BigInt::zero(), |a, v| a + v)
                .bits()
                + 1
        })
        .sum();
    let (maximizers, stats) = if bits < 120 {
        let values: Vec<Vec<u128>> = scaled
            .iter()
            .map(|row| row.iter().map(|v| v.to_u128().unwrap()).collect())
            .collect();
        search(instance, fs, complete, mode, cap, values)?
    } else {
        search(instance, fs, complete, mode, cap, scaled)?
    };
    if maximizers.is_empty() {
        return Err(Error::EmptyFeasibleSet);
    }
    let key = utilities(instance, &maximizers[0]).key();
    Ok(MnwResult {
        maximizers,
        support_size: key.support,
        nash_welfare: key.nash_welfare,
        stats,
    })
}

/// Valuations times the common denominator, indexed `[good][agent]`.
fn scale_to_integers(instance: &Instance) -> Vec<Vec<BigInt>> {
    let lcm = instance
        .valuations()
        .iter()
        .flatten()
        .fold(BigInt::one(), |acc, v| acc.lcm(v.denom()));
    (0..instance.good_count())
        .map(|g| {
            (0..instance.agent_count())
                .map(|i| (instance.value(i, g) * Rational::from_integer(lcm.clone())).to_integer())
                .collect()
        })
        .collect()
}

trait Weight: Clone + Ord + Zero + One + Add<Output = Self> + Mul<Output = Self> {}
impl<W: Clone + Ord + Zero + One + Add<Output = W> + Mul<Output = W>> Weight for W {}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord)]
struct Key<W> {
    support: usize,
    product: W,
}

fn key_of<W: Weight>(utils: impl Iterator<Item = W>) -> Key<W> {
    let mut support = 0;
    let mut product = W::one();
    for u in utils {
        if u > W::zero() {
            support += 1;
            product = product * u;
        }
    }
    if support == 0 {
        product = W::zero();
    }
    Key { support, product }
}

struct Search<'a, W> {
    fs: &'a FeasibilitySet,
    order: Vec<usize>,
    /// `values[g][i]`, integer-scaled.
    values: Vec<Vec<W>>,
    /// `rest[k][i]`: agent `i`'s value for goods `order[k..]`.
    rest: Vec<Vec<W>>,
    complete: bool,
    all: bool,
    cap: u64,
    lower: Vec<Category>,
    bundles: Vec<Bundle>,
    utils: Vec<W>,
    best: Option<Key<W>>,
    found: Vec<Allocation>,
    stats: SearchStats,
}

impl<W: Weight> Search<'_, W> {
    fn remaining(&self, k: usize) -> Bundle {
        self.order[k..].iter().copied().collect()
    }

    fn bound(&self, k: usize) -> Key<W> {
        key_of(
            self.utils
                .iter()
                .zip(&self.rest[k])
                .map(|(u, r)| u.clone() + r.clone()),
        )
    }

    fn prune(&self, bound: &Key<W>) -> bool {
        match &self.best {
            None => false,
            Some(best) if self.all => bound < best,
            Some(best) => bound <= best,
        }
    }

    fn leaf(&mut self) {
        if !self.bundles.iter().all(|b| self.fs.is_feasible_bundle(*b)) {
            return;
        }
        let key = key_of(self.utils.iter().cloned());
        let alloc = Allocation::from_disjoint(self.bundles.clone());
        match &self.best {
            Some(best) if key < *best => {}
            Some(best) if key == *best => {
                if self.all {
                    self.found.push(alloc);
                }
            }
            _ => {
                self.best = Some(key);
                self.found = vec![alloc];
            }
        }
    }

    fn run(&mut self, k: usize) -> Result<()> {
        self.stats.nodes += 1;
        if self.stats.nodes > self.cap {
            return Err(Error::ExplosionGuard { cap: self.cap });
        }
        if !lower_reachable(&self.lower, &self.bundles, self.remaining(k)) {
            self.stats.pruned += 1;
            return Ok(());
        }
        if self.prune(&self.bound(k)) {
            self.stats.pruned += 1;
            return Ok(());
        }
        if k == self.order.len() {
            self.leaf();
            return Ok(());
        }
        let g = self.order[k];
        for i in 0..self.bundles.len() {
            let next = self.bundles[i].with(g);
            if !self.fs.can_extend(next) {
                continue;
            }
            let prev = std::mem::replace(&mut self.bundles[i], next);
            let before = self.utils[i].clone();
            self.utils[i] = before.clone() + self.values[g][i].clone();
            self.run(k + 1)?;
            self.utils[i] = before;
            self.bundles[i] = prev;
        }
        if !self.complete {
            self.run(k + 1)?;
        }
        Ok(())
    }
}

fn search<W: Weight>(
    instance: &Instance,
    fs: &FeasibilitySet,
    complete: bool,
    mode: SolveMode,
    cap: u64,
    values: Vec<Vec<W>>,
) -> Result<(Vec<Allocation>, SearchStats)> {
    let n = instance.agent_count();
    let m = instance.good_count();
    let total = |g: usize| values[g].iter().fold(W::zero(), |a, v| a + v.clone());
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| total(b).cmp(&total(a)).then(a.cmp(&b)));
    let mut rest = vec![vec![W::zero(); n]; m + 1];
    for k in (0..m).rev() {
        rest[k] = (0..n)
            .map(|i| rest[k + 1][i].clone() + values[order[k]][i].clone())
            .collect();
    }
    let mut s = Search {
        fs,
        order,
        values,
        rest,
        complete,
        all: mode == SolveMode::AllOptima,
        cap,
        lower: lower_bounded(fs),
        bundles: vec![Bundle::EMPTY; n],
        utils: vec![W::zero(); n],
        best: None,
        found: Vec::new(),
        stats: SearchStats::default(),
    };
    s.run(0)?;
    let mut found = s.found;
    found.sort();
    Ok((found, s.stats))
}

/// Agents pick in cyclic `order`, each taking a highest-valued remaining good (lowest index on ties).
pub fn round_robin(instance: &Instance, order: &[usize]) -> Allocation {
    let mut bundles = vec![Bundle::EMPTY; instance.agent_count()];
    let mut left = instance.all_goods();
    for &i in order.iter().cycle() {
        if left.is_empty() || order.is_empty() {
            break;
        }
        let pick = left
            .iter()
            .fold(None::<usize>, |best, g| match best {
                Some(b) if instance.value(i, b) >= instance.value(i, g) => Some(b),
                _ => Some(g),
            })
            .unwrap();
        bundles[i] = bundles[i].with(pick);
        left = left.without(pick);
    }
    Allocation::from_disjoint(bundles)
}

/// Weighted-rank valuations `ṽ_i(S) = max { v_i(T) : T ⊆ S independent }`.
#[derive(Clone, Copy, Debug)]
pub struct ReducedValuation<'a> {
    instance: &'a Instance,
    fs: &'a FeasibilitySet,
}

pub fn reduce_to_unconstrained<'a>(
    instance: &'a Instance,
    fs: &'a FeasibilitySet,
) -> Result<ReducedValuation<'a>> {
    if !fs.is_matroidal() {
        return Err(Error::UnsupportedConstraint(fs.name().to_string()));
    }
    Ok(ReducedValuation { instance, fs })
}

impl ReducedValuation<'_> {
    pub fn best_subset(&self, agent: usize, set: Bundle) -> Bundle {
        self.fs
            .max_weight_independent(&self.instance.valuations()[agent], set)
            .expect("matroidal")
            .0
    }

    pub fn value(&self, agent: usize, set: Bundle) -> Rational {
        self.fs
            .max_weight_independent(&self.instance.valuations()[agent], set)
            .expect("matroidal")
            .1
    }

    /// Each agent keeps its best feasible sub-bundle.
    pub fn project(&self, alloc: &Allocation) -> Allocation {
        Allocation::from_disjoint(
            alloc
                .bundles()
                .iter()
                .enumerate()
                .map(|(i, b)| self.best_subset(i, *b))
                .collect(),
        )
    }
}
