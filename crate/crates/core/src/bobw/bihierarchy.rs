//! Two laminar quota families over allocation cells, and exact lottery decomposition of matrices inside them.

use std::collections::HashSet;

use num_traits::{One, Signed, Zero};

use super::lottery::{Lottery, LotteryEntry};
use super::{CeeiMode, Matrix};
use crate::error::{Error, Result};
use crate::instance::{Bundle, Instance};
use crate::rational::{format_rational, Rational};

/// Integer quotas on the total mass of a set of `(agent, good)` cells.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuotaSet {
    pub cells: Vec<(usize, usize)>,
    pub lower: u64,
    pub upper: u64,
}

impl QuotaSet {
    pub fn new(mut cells: Vec<(usize, usize)>, lower: u64, upper: u64) -> QuotaSet {
        cells.sort_unstable();
        cells.dedup();
        QuotaSet {
            cells,
            lower,
            upper,
        }
    }

    fn mass(&self, x: &Matrix) -> Rational {
        self.cells
            .iter()
            .fold(Rational::zero(), |a, &(i, g)| a + &x[i][g])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    H1,
    H2,
}

/// Every cell is additionally bounded by `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Bihierarchy {
    pub agents: usize,
    pub goods: usize,
    pub h1: Vec<QuotaSet>,
    pub h2: Vec<QuotaSet>,
}

fn floor_ceil(r: &Rational) -> (u64, u64) {
    let lo = r.floor().to_integer();
    let hi = r.ceil().to_integer();
    (
        u64::try_from(lo).unwrap_or(0),
        u64::try_from(hi).unwrap_or(0),
    )
}

fn quota_for(cells: Vec<(usize, usize)>, x: &Matrix) -> QuotaSet {
    let set = QuotaSet::new(cells, 0, 0);
    let (lower, upper) = floor_ceil(&set.mass(x));
    QuotaSet {
        lower,
        upper,
        ..set
    }
}

/// Value-descending order of goods for one agent, ties by index.
pub fn preference_order(instance: &Instance, agent: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..instance.good_count()).collect();
    order.sort_by(|&a, &b| {
        instance
            .value(agent, b)
            .cmp(instance.value(agent, a))
            .then(a.cmp(&b))
    });
    order
}

/// Prefix quotas per agent in `H1`, column quotas in `H2`. The full-row prefix carries the
/// balancedness bound, so both modes share one structure.
pub fn build_bihierarchy(instance: &Instance, x: &Matrix, _mode: CeeiMode) -> Bihierarchy {
    let (n, m) = (instance.agent_count(), instance.good_count());
    let mut h1 = Vec::new();
    for i in 0..n {
        let order = preference_order(instance, i);
        for t in 1..=m {
            h1.push(quota_for(order[..t].iter().map(|&g| (i, g)).collect(), x));
        }
    }
    let h2 = (0..m)
        .map(|g| quota_for((0..n).map(|i| (i, g)).collect(), x))
        .collect();
    Bihierarchy {
        agents: n,
        goods: m,
        h1,
        h2,
    }
}

fn laminar_with(family: &[QuotaSet], cells: &[(usize, usize)]) -> bool {
    let s: HashSet<&(usize, usize)> = cells.iter().collect();
    family.iter().all(|f| {
        let common = f.cells.iter().filter(|c| s.contains(c)).count();
        common == 0 || common == f.cells.len() || common == cells.len()
    })
}

impl Bihierarchy {
    /// Adds a quota set to whichever hierarchy keeps it laminar.
    pub fn with_extra(mut self, set: QuotaSet) -> Result<Bihierarchy> {
        let clash = |family: &[QuotaSet]| family.iter().any(|f| f.cells == set.cells);
        if laminar_with(&self.h1, &set.cells) && !clash(&self.h2) {
            self.h1.push(set);
            return Ok(self);
        }
        if laminar_with(&self.h2, &set.cells) && !clash(&self.h1) {
            self.h2.push(set);
            return Ok(self);
        }
        Err(Error::NonBihierarchy(
            "extra constraint crosses both hierarchies".into(),
        ))
    }

    pub fn validate(&self) -> Result<()> {
        for (name, family) in [("H1", &self.h1), ("H2", &self.h2)] {
            for (a, s) in family.iter().enumerate() {
                if s.cells
                    .iter()
                    .any(|&(i, g)| i >= self.agents || g >= self.goods)
                {
                    return Err(Error::NonBihierarchy(format!(
                        "{} set {} refers to a missing cell",
                        name, a
                    )));
                }
                if s.lower > s.upper {
                    return Err(Error::NonBihierarchy(format!(
                        "{} set {} has lower > upper",
                        name, a
                    )));
                }
                if !laminar_with(&family[a + 1..], &s.cells) {
                    return Err(Error::NonBihierarchy(format!(
                        "{} set {} crosses another set",
                        name, a
                    )));
                }
            }
        }
        if self
            .h1
            .iter()
            .any(|s| self.h2.iter().any(|t| t.cells == s.cells))
        {
            return Err(Error::NonBihierarchy(
                "a set occurs in both hierarchies".into(),
            ));
        }
        Ok(())
    }

    /// First violated constraint of `x`, if any.
    pub fn violation(&self, x: &Matrix) -> Option<String> {
        if x.len() != self.agents || x.iter().any(|r| r.len() != self.goods) {
            return Some("matrix dimensions differ from the bihierarchy".into());
        }
        for (i, row) in x.iter().enumerate() {
            for (g, c) in row.iter().enumerate() {
                if c.is_negative() || *c > Rational::one() {
                    return Some(format!(
                        "cell ({}, {}) = {} outside [0, 1]",
                        i,
                        g,
                        format_rational(c)
                    ));
                }
            }
        }
        for (name, family) in [("H1", &self.h1), ("H2", &self.h2)] {
            for (a, s) in family.iter().enumerate() {
                let mass = s.mass(x);
                if mass < Rational::from_integer(s.lower.into())
                    || mass > Rational::from_integer(s.upper.into())
                {
                    return Some(format!(
                        "{} set {} has mass {} outside [{}, {}]",
                        name,
                        a,
                        format_rational(&mass),
                        s.lower,
                        s.upper
                    ));
                }
            }
        }
        None
    }

    pub fn is_satisfied_by(&self, x: &Matrix) -> bool {
        self.violation(x).is_none()
    }
}

/// Flow network: a shared root, one node per quota set, one edge per cell and per set.
struct Network {
    /// `(tail, head)` per edge; cells come first in row-major order.
    ends: Vec<(usize, usize)>,
    /// Cells (row-major indices) under each set edge.
    members: Vec<Vec<usize>>,
    cells: usize,
}

const ROOT: usize = 0;

impl Network {
    fn new(h: &Bihierarchy) -> Network {
        let (n, m) = (h.agents, h.goods);
        let cells = n * m;
        // Repeated sets would leave dangling nodes; keep the first copy.
        let mut sets: Vec<(Side, &QuotaSet)> = Vec::new();
        for (side, s) in
            h.h1.iter()
                .map(|s| (Side::H1, s))
                .chain(h.h2.iter().map(|s| (Side::H2, s)))
        {
            if !sets.iter().any(|(d, t)| *d == side && t.cells == s.cells) {
                sets.push((side, s));
            }
        }
        let node = |k: usize| k + 1;
        let contains = |outer: &QuotaSet, inner: &QuotaSet| {
            inner
                .cells
                .iter()
                .all(|c| outer.cells.binary_search(c).is_ok())
        };
        // Smallest strict superset on the same side.
        let parent = |k: usize| {
            let (side, s) = sets[k];
            (0..sets.len())
                .filter(|&o| {
                    o != k
                        && sets[o].0 == side
                        && sets[o].1.cells.len() > s.cells.len()
                        && contains(sets[o].1, s)
                })
                .min_by_key(|&o| sets[o].1.cells.len())
                .map_or(ROOT, node)
        };
        let minimal = |side: Side, cell: (usize, usize)| {
            (0..sets.len())
                .filter(|&o| sets[o].0 == side && sets[o].1.cells.binary_search(&cell).is_ok())
                .min_by_key(|&o| sets[o].1.cells.len())
                .map_or(ROOT, node)
        };
        let mut ends = Vec::new();
        let mut members = Vec::new();
        for i in 0..n {
            for g in 0..m {
                ends.push((minimal(Side::H1, (i, g)), minimal(Side::H2, (i, g))));
                members.push(vec![i * m + g]);
            }
        }
        for (k, (side, s)) in sets.iter().enumerate() {
            ends.push(match side {
                Side::H1 => (parent(k), node(k)),
                Side::H2 => (node(k), parent(k)),
            });
            members.push(s.cells.iter().map(|&(i, g)| i * m + g).collect());
        }
        Network {
            ends,
            members,
            cells,
        }
    }

    fn flows(&self, cells: &[Rational]) -> Vec<Rational> {
        self.members
            .iter()
            .map(|ms| ms.iter().fold(Rational::zero(), |a, &c| a + &cells[c]))
            .collect()
    }

    /// A cycle of fractional edges as `(edge, sign)` pairs, starting from the lowest fractional cell.
    fn fractional_cycle(&self, flow: &[Rational]) -> Option<Vec<(usize, bool)>> {
        let fractional: Vec<bool> = flow.iter().map(|f| !f.is_integer()).collect();
        let start = (0..self.cells).find(|&e| fractional[e])?;
        let (tail, head) = self.ends[start];
        if tail == head {
            return Some(vec![(start, true)]);
        }
        let mut nodes = vec![tail, head];
        let mut path = vec![(start, true)];
        loop {
            let here = *nodes.last().unwrap();
            let last = path.last().unwrap().0;
            let next = (0..self.ends.len()).find(|&e| {
                e != last && fractional[e] && (self.ends[e].0 == here || self.ends[e].1 == here)
            })?;
            let (t, h) = self.ends[next];
            if t == h {
                return Some(vec![(next, true)]);
            }
            let (forward, other) = if t == here { (true, h) } else { (false, t) };
            path.push((next, forward));
            if let Some(at) = nodes.iter().position(|&v| v == other) {
                return Some(path.split_off(at));
            }
            nodes.push(other);
        }
    }

    /// Integral point of the face of `cells` obtained by cycle pushes that stay within each edge's floor and ceiling.
    fn vertex(&self, cells: &[Rational]) -> Vec<Rational> {
        let mut y = cells.to_vec();
        loop {
            let flow = self.flows(&y);
            let Some(cycle) = self.fractional_cycle(&flow) else {
                return y;
            };
            let step = cycle
                .iter()
                .map(|&(e, up)| {
                    if up {
                        flow[e].ceil() - &flow[e]
                    } else {
                        &flow[e] - flow[e].floor()
                    }
                })
                .min()
                .unwrap();
            for &(e, up) in &cycle {
                if e < self.cells {
                    if up {
                        y[e] += &step;
                    } else {
                        y[e] -= &step;
                    }
                }
            }
        }
    }
}

/// Convex combination of integral matrices inside `h` reproducing `x` exactly, with at most one more
/// entry than `x` has fractional cells.
pub fn bihierarchy_decompose(x: &Matrix, h: &Bihierarchy) -> Result<Lottery> {
    h.validate()?;
    if let Some(v) = h.violation(x) {
        return Err(Error::ConstraintViolation(v));
    }
    let (n, m) = (h.agents, h.goods);
    let net = Network::new(h);
    let mut cur: Vec<Rational> = x.iter().flatten().cloned().collect();
    let mut remaining = Rational::one();
    let mut raw: Vec<(Rational, Vec<Rational>)> = Vec::new();
    loop {
        if cur.iter().all(|c| c.is_integer()) {
            raw.push((remaining, cur));
            break;
        }
        let v = net.vertex(&cur);
        let (fx, fv) = (net.flows(&cur), net.flows(&v));
        let mu = (0..fx.len())
            .filter(|&e| !fx[e].is_integer())
            .map(|e| {
                if fx[e] > fv[e] {
                    (fx[e].ceil() - &fx[e]) / (&fx[e] - &fv[e])
                } else {
                    (&fx[e] - fx[e].floor()) / (&fv[e] - &fx[e])
                }
            })
            .min()
            .unwrap();
        let share = &mu / (Rational::one() + &mu);
        raw.push((&remaining * &share, v.clone()));
        remaining = &remaining / (Rational::one() + &mu);
        cur = cur.iter().zip(&v).map(|(c, w)| c + &mu * (c - w)).collect();
    }
    let mut entries: Vec<LotteryEntry> = Vec::new();
    for (weight, cells) in raw {
        if weight.is_zero() {
            continue;
        }
        let assignment: Vec<Bundle> = (0..n)
            .map(|i| (0..m).filter(|&g| cells[i * m + g].is_one()).collect())
            .collect();
        match entries.iter_mut().find(|e| e.assignment == assignment) {
            Some(e) => e.weight += weight,
            None => entries.push(LotteryEntry { weight, assignment }),
        }
    }
    Ok(Lottery { entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{int, rat};

    fn matrix(rows: &[&[(i64, i64)]]) -> Matrix {
        rows.iter()
            .map(|r| r.iter().map(|&(p, q)| rat(p, q)).collect())
            .collect()
    }

    fn square() -> Instance {
        Instance::from_values(vec![vec![int(2), int(1)], vec![int(1), int(2)]]).unwrap()
    }

    #[test]
    fn half_matrix_quotas() {
        let x = matrix(&[&[(1, 2), (1, 2)], &[(1, 2), (1, 2)]]);
        let h = build_bihierarchy(&square(), &x, CeeiMode::Copies);
        assert_eq!((h.h1[0].lower, h.h1[0].upper), (0, 1));
        assert_eq!((h.h1[1].lower, h.h1[1].upper), (1, 1));
        assert!(h.validate().is_ok());
    }

    #[test]
    fn half_matrix_splits_into_matchings() {
        let x = matrix(&[&[(1, 2), (1, 2)], &[(1, 2), (1, 2)]]);
        let h = build_bihierarchy(&square(), &x, CeeiMode::Copies);
        let lottery = bihierarchy_decompose(&x, &h).unwrap();
        assert_eq!(lottery.entries.len(), 2);
        assert!(lottery.entries.iter().all(|e| e.weight == rat(1, 2)));
        assert_eq!(lottery.marginals(2, 2), x);
        for e in &lottery.entries {
            assert_eq!(
                e.assignment.iter().map(|b| b.len()).collect::<Vec<_>>(),
                vec![1, 1]
            );
        }
    }

    #[test]
    fn integral_matrix_is_one_entry() {
        let x = matrix(&[&[(1, 1), (0, 1)], &[(0, 1), (1, 1)]]);
        let h = build_bihierarchy(&square(), &x, CeeiMode::Copies);
        let lottery = bihierarchy_decompose(&x, &h).unwrap();
        assert_eq!(lottery.entries.len(), 1);
        assert_eq!(lottery.entries[0].weight, int(1));
        assert!(h.h1.iter().chain(&h.h2).all(|s| s.lower == s.upper));
    }

    #[test]
    fn full_cells_stay_put() {
        let x = matrix(&[&[(1, 1), (1, 3), (2, 3)], &[(0, 1), (2, 3), (1, 3)]]);
        let inst = Instance::from_values(vec![
            vec![int(3), int(2), int(1)],
            vec![int(1), int(2), int(3)],
        ])
        .unwrap();
        let h = build_bihierarchy(&inst, &x, CeeiMode::Copies);
        let lottery = bihierarchy_decompose(&x, &h).unwrap();
        assert!(lottery.entries.iter().all(|e| e.assignment[0].contains(0)));
        assert_eq!(lottery.marginals(2, 3), x);
    }

    #[test]
    fn violations_and_crossing_sets() {
        let x = matrix(&[&[(1, 2), (1, 2)], &[(1, 2), (1, 2)]]);
        let h = build_bihierarchy(&square(), &x, CeeiMode::Copies);
        let bad = matrix(&[&[(1, 1), (1, 1)], &[(1, 2), (1, 2)]]);
        assert!(matches!(
            bihierarchy_decompose(&bad, &h),
            Err(Error::ConstraintViolation(_))
        ));
        let crossing = QuotaSet::new(vec![(0, 1), (1, 0)], 0, 1);
        assert!(matches!(
            h.clone().with_extra(crossing),
            Err(Error::NonBihierarchy(_))
        ));
        let inst = Instance::from_values(vec![
            vec![int(3), int(2), int(1)],
            vec![int(1), int(2), int(3)],
        ])
        .unwrap();
        let x = matrix(&[&[(1, 2), (1, 2), (1, 2)], &[(1, 2), (1, 2), (1, 2)]]);
        let h = build_bihierarchy(&inst, &x, CeeiMode::Copies);
        let two_columns = QuotaSet::new(vec![(0, 0), (1, 0), (0, 1), (1, 1)], 2, 2);
        let extended = h.with_extra(two_columns).unwrap();
        assert_eq!(extended.h2.len(), 4);
        assert!(extended.validate().is_ok());
    }
}
