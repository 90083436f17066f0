use std::ops::ControlFlow;

use super::{Category, Constraint, FeasibilitySet};
use crate::error::{Error, Result};
use crate::instance::{Allocation, Bundle, Instance};

/// Default ExplosionGuard cap on visited search states.
pub const DEFAULT_CAP: u64 = 2_000_000;

/// Categories whose lower bounds must stay reachable during the search.
pub(crate) fn lower_bounded(fs: &FeasibilitySet) -> Vec<Category> {
    match fs.constraint() {
        Constraint::PartitionLb { categories } => {
            categories.iter().filter(|c| c.lower > 0).cloned().collect()
        }
        Constraint::Balanced | Constraint::CopiesBalanced { .. } => {
            let (lo, hi) = fs.balanced_bounds();
            if lo == 0 {
                Vec::new()
            } else {
                vec![Category::new(
                    Bundle::full(fs.good_count()),
                    lo as u32,
                    hi as u32,
                )]
            }
        }
        _ => Vec::new(),
    }
}

/// Whether the unassigned goods can still cover every agent's lower-bound deficit.
pub(crate) fn lower_reachable(lower: &[Category], bundles: &[Bundle], remaining: Bundle) -> bool {
    lower.iter().all(|c| {
        let deficit: usize = bundles
            .iter()
            .map(|b| (c.lower as usize).saturating_sub(b.intersect(c.goods).len()))
            .sum();
        deficit <= remaining.intersect(c.goods).len()
    })
}

struct Search<'a, F> {
    fs: &'a FeasibilitySet,
    m: usize,
    complete: bool,
    cap: u64,
    states: u64,
    lower: Vec<Category>,
    bundles: Vec<Bundle>,
    visit: F,
}

impl<F: FnMut(&Allocation) -> ControlFlow<()>> Search<'_, F> {
    fn lower_reachable(&self, next: usize) -> bool {
        lower_reachable(
            &self.lower,
            &self.bundles,
            Bundle::full(self.m).minus(Bundle::full(next)),
        )
    }

    fn run(&mut self, g: usize) -> Result<ControlFlow<()>> {
        self.states += 1;
        if self.states > self.cap {
            return Err(Error::ExplosionGuard { cap: self.cap });
        }
        if !self.lower_reachable(g) {
            return Ok(ControlFlow::Continue(()));
        }
        if g == self.m {
            if self.bundles.iter().all(|b| self.fs.is_feasible_bundle(*b)) {
                let alloc = Allocation::from_disjoint(self.bundles.clone());
                return Ok((self.visit)(&alloc));
            }
            return Ok(ControlFlow::Continue(()));
        }
        for i in 0..self.bundles.len() {
            let next = self.bundles[i].with(g);
            if self.fs.can_extend(next) {
                let prev = std::mem::replace(&mut self.bundles[i], next);
                let flow = self.run(g + 1)?;
                self.bundles[i] = prev;
                if flow.is_break() {
                    return Ok(flow);
                }
            }
        }
        if !self.complete {
            return self.run(g + 1);
        }
        Ok(ControlFlow::Continue(()))
    }
}

/// Visits every feasible allocation once, goods assigned in index order with prefix pruning.
pub fn for_each_feasible(
    instance: &Instance,
    fs: &FeasibilitySet,
    complete: bool,
    cap: u64,
    visit: impl FnMut(&Allocation) -> ControlFlow<()>,
) -> Result<u64> {
    let mut search = Search {
        fs,
        m: instance.good_count(),
        complete,
        cap,
        states: 0,
        lower: lower_bounded(fs),
        bundles: vec![Bundle::EMPTY; instance.agent_count()],
        visit,
    };
    let _ = search.run(0)?;
    Ok(search.states)
}

pub fn enumerate_feasible(
    instance: &Instance,
    fs: &FeasibilitySet,
    complete: bool,
    cap: u64,
) -> Result<Vec<Allocation>> {
    let mut out = Vec::new();
    for_each_feasible(instance, fs, complete, cap, |a| {
        out.push(a.clone());
        ControlFlow::Continue(())
    })?;
    Ok(out)
}
