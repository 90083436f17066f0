//! Competitive equilibrium from equal incomes for goods with copies.

use std::collections::HashSet;

use num_traits::{One, Signed, Zero};

use super::{CeeiCertificate, CeeiMode, CeeiOptions, Matrix, Residuals};
use crate::error::{Error, Result};
use crate::fairness::normalized;
use crate::instance::Instance;
use crate::lp::{LinearProgram, LpOutcome, Relation, Scalar};
use crate::rational::{to_f64, Rational};

fn r(n: impl Into<num_bigint::BigInt>) -> Rational {
    Rational::from_integer(n.into())
}

fn dot(a: &[Rational], b: &[Rational]) -> Rational {
    a.iter()
        .zip(b)
        .fold(Rational::zero(), |acc, (x, y)| acc + x * y)
}

fn pos(x: Rational) -> Rational {
    if x.is_positive() {
        x
    } else {
        Rational::zero()
    }
}

/// Bundle-size cap of the balanced mode: total copies over agents.
pub fn row_cap(instance: &Instance, mode: CeeiMode) -> Option<Rational> {
    match mode {
        CeeiMode::Copies => None,
        CeeiMode::CopiesBalanced => {
            let total: u64 = instance.supplies().iter().map(|&q| q as u64).sum();
            Some(Rational::new(
                total.into(),
                (instance.agent_count() as u64).into(),
            ))
        }
    }
}

pub(crate) fn check_positive(instance: &Instance) -> Result<()> {
    for (i, row) in instance.valuations().iter().enumerate() {
        if let Some(g) = row.iter().position(|v| !v.is_positive()) {
            return Err(Error::NotStrictlyPositive { agent: i, good: g });
        }
    }
    for (g, &q) in instance.supplies().iter().enumerate() {
        if q as usize > instance.agent_count() {
            return Err(Error::InvalidConstraint(format!(
                "good `{}` has more copies than agents",
                instance.good_id(g)
            )));
        }
    }
    Ok(())
}

/// Per-agent demand LP: `max v·y` (or `min p·y` at utility `floor`) over `p·y <= budget`, `y <= 1`, optional row cap.
fn demand_lp(
    v: &[Rational],
    p: &[Rational],
    cap: Option<&Rational>,
    floor: Option<&Rational>,
) -> LinearProgram<Rational> {
    let m = v.len();
    let mut lp = match floor {
        None => LinearProgram::new(m).maximize(v.to_vec()),
        Some(_) => LinearProgram::new(m).minimize(p.to_vec()),
    };
    for g in 0..m {
        lp.add_sparse(&[(g, Rational::one())], Relation::Le, Rational::one());
    }
    if let Some(cap) = cap {
        lp.add(vec![Rational::one(); m], Relation::Le, cap.clone());
    }
    match floor {
        None => lp.add(p.to_vec(), Relation::Le, Rational::one()),
        Some(f) => lp.add(v.to_vec(), Relation::Ge, f.clone()),
    }
    lp
}

/// Exact residuals of every equilibrium condition, on normalized valuations.
pub fn verify_ceei(instance: &Instance, mode: CeeiMode, x: &Matrix, p: &[Rational]) -> Residuals {
    let v = normalized(instance);
    let (n, m) = (instance.agent_count(), instance.good_count());
    let cap = row_cap(instance, mode);
    let q: Vec<Rational> = instance.supplies().iter().map(|&s| r(s)).collect();
    let column = |g: usize| (0..n).fold(Rational::zero(), |a, i| a + &x[i][g]);

    let mut feasibility = Rational::zero();
    for row in x {
        for cell in row {
            feasibility += pos(-cell.clone()) + pos(cell - Rational::one());
        }
        if let Some(cap) = &cap {
            feasibility += pos(row.iter().fold(Rational::zero(), |a, c| a + c) - cap);
        }
    }
    let mut clearing = Rational::zero();
    for g in 0..m {
        let s = column(g);
        feasibility += pos(&s - &q[g]);
        clearing += pos(&s - &q[g]);
        let unsold = pos(&q[g] - &s);
        clearing += if p[g].is_negative() {
            -p[g].clone()
        } else {
            p[g].clone().min(unsold)
        };
    }

    let mut best_bundle = Rational::zero();
    let mut cheapest_bundle = Rational::zero();
    for i in 0..n {
        let value = dot(&v[i], &x[i]);
        let spend = dot(p, &x[i]);
        let mut gap = pos(&spend - Rational::one());
        if let LpOutcome::Optimal { value: best, .. } =
            demand_lp(&v[i], p, cap.as_ref(), None).solve()
        {
            gap += pos(best - &value);
        }
        best_bundle = best_bundle.max(gap);
        if let LpOutcome::Optimal {
            value: cheapest, ..
        } = demand_lp(&v[i], p, cap.as_ref(), Some(&value)).solve()
        {
            cheapest_bundle = cheapest_bundle.max(pos(&spend - cheapest));
        }
    }
    Residuals {
        feasibility,
        best_bundle,
        cheapest_bundle,
        clearing,
    }
}

/// Bang-per-buck ordering for every agent: fully held goods beat partially held ones (all equal), which beat unheld ones.
pub fn bang_per_buck_holds(instance: &Instance, x: &Matrix, p: &[Rational], tol: f64) -> bool {
    let v = normalized(instance);
    // None stands for an infinite ratio at price zero.
    let bb = |i: usize, g: usize| (!p[g].is_zero()).then(|| to_f64(&(&v[i][g] / &p[g])));
    let le = |a: Option<f64>, b: Option<f64>| match (a, b) {
        (_, None) => true,
        (None, Some(_)) => false,
        (Some(a), Some(b)) => a <= b + tol * b.abs().max(1.0),
    };
    (0..instance.agent_count()).all(|i| {
        let class = |g: usize| {
            if x[i][g].is_one() {
                2
            } else if x[i][g].is_zero() {
                0
            } else {
                1
            }
        };
        let goods: Vec<usize> = (0..instance.good_count()).collect();
        goods.iter().all(|&a| {
            goods.iter().all(|&b| match class(a).cmp(&class(b)) {
                std::cmp::Ordering::Greater => le(bb(i, b), bb(i, a)),
                std::cmp::Ordering::Equal if class(a) == 1 => {
                    le(bb(i, a), bb(i, b)) && le(bb(i, b), bb(i, a))
                }
                _ => true,
            })
        })
    })
}

// Copies mode: enumerate the order type of the money multipliers, then solve the induced linear system.

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
enum Class {
    Full,
    Partial,
    Zero,
}

/// Interval of a multiplier ratio; `hi = None` is unbounded.
#[derive(Clone, Debug)]
struct Interval {
    lo: Rational,
    lo_open: bool,
    hi: Option<Rational>,
    hi_open: bool,
}

impl Interval {
    fn at(breaks: &[Rational], k: usize) -> Interval {
        if k % 2 == 1 {
            let b = breaks[k / 2].clone();
            return Interval {
                lo: b.clone(),
                lo_open: false,
                hi: Some(b),
                hi_open: false,
            };
        }
        let s = k / 2;
        Interval {
            lo: if s == 0 {
                Rational::zero()
            } else {
                breaks[s - 1].clone()
            },
            lo_open: true,
            hi: breaks.get(s).cloned(),
            hi_open: true,
        }
    }

    fn times(&self, o: &Interval) -> Interval {
        Interval {
            lo: &self.lo * &o.lo,
            lo_open: self.lo_open || o.lo_open,
            hi: match (&self.hi, &o.hi) {
                (Some(a), Some(b)) => Some(a * b),
                _ => None,
            },
            hi_open: self.hi_open || o.hi_open,
        }
    }

    fn meets(&self, o: &Interval) -> bool {
        let (lo, lo_open) = match self.lo.cmp(&o.lo) {
            std::cmp::Ordering::Greater => (&self.lo, self.lo_open),
            std::cmp::Ordering::Less => (&o.lo, o.lo_open),
            std::cmp::Ordering::Equal => (&self.lo, self.lo_open || o.lo_open),
        };
        let (hi, hi_open) = match (&self.hi, &o.hi) {
            (None, None) => return true,
            (Some(a), None) => (a, self.hi_open),
            (None, Some(b)) => (b, o.hi_open),
            (Some(a), Some(b)) => match a.cmp(b) {
                std::cmp::Ordering::Less => (a, self.hi_open),
                std::cmp::Ordering::Greater => (b, o.hi_open),
                std::cmp::Ordering::Equal => (a, self.hi_open || o.hi_open),
            },
        };
        lo < hi || (lo == hi && !lo_open && !hi_open)
    }
}

struct Pair {
    i: usize,
    j: usize,
    breaks: Vec<Rational>,
    /// Index in `breaks` of `v_j(g) / v_i(g)` for every good.
    slot: Vec<usize>,
}

struct FaceSearch<'a> {
    v: &'a [Vec<Rational>],
    q: &'a [u32],
    pairs: Vec<Pair>,
    positions: Vec<usize>,
    seen: HashSet<Vec<Class>>,
    faces: Vec<Vec<Class>>,
}

impl FaceSearch<'_> {
    fn pair_index(&self, i: usize, j: usize) -> usize {
        self.pairs
            .iter()
            .position(|p| p.i == i && p.j == j)
            .unwrap()
    }

    fn consistent(&self) -> bool {
        let n = self.v.len();
        let interval = |i: usize, j: usize| {
            let k = self.pair_index(i, j);
            Interval::at(&self.pairs[k].breaks, self.positions[k])
        };
        for i in 0..n {
            for j in i + 1..n {
                for k in j + 1..n {
                    if !interval(i, j).times(&interval(j, k)).meets(&interval(i, k)) {
                        return false;
                    }
                }
            }
        }
        true
    }

    /// Sign of `λ_a v_a(g) - λ_b v_b(g)`.
    fn compare(&self, a: usize, b: usize, g: usize) -> std::cmp::Ordering {
        if a == b {
            return std::cmp::Ordering::Equal;
        }
        let (i, j, flip) = if a < b { (a, b, false) } else { (b, a, true) };
        let k = self.pair_index(i, j);
        let point = 2 * self.pairs[k].slot[g] + 1;
        let ord = self.positions[k].cmp(&point);
        if flip {
            ord.reverse()
        } else {
            ord
        }
    }

    fn classes(&self) -> Option<Vec<Class>> {
        let (n, m) = (self.v.len(), self.v.first().map_or(0, Vec::len));
        let mut out = vec![Class::Zero; n * m];
        for g in 0..m {
            let above: Vec<usize> = (0..n)
                .map(|a| (0..n).filter(|&b| self.compare(b, a, g).is_gt()).count())
                .collect();
            for a in 0..n {
                for b in 0..n {
                    let expect = above[b].cmp(&above[a]);
                    if self.compare(a, b, g) != expect {
                        return None;
                    }
                }
            }
            let q = self.q[g] as usize;
            for a in 0..n {
                let level = (0..n).filter(|&b| above[b] == above[a]).count();
                out[a * m + g] = if above[a] + level <= q {
                    Class::Full
                } else if above[a] < q {
                    Class::Partial
                } else {
                    Class::Zero
                };
            }
        }
        Some(out)
    }

    fn run(&mut self, k: usize) {
        if k == self.pairs.len() {
            if !self.consistent() {
                return;
            }
            if let Some(c) = self.classes() {
                if self.seen.insert(c.clone()) {
                    self.faces.push(c);
                }
            }
            return;
        }
        for pos in 0..=2 * self.pairs[k].breaks.len() {
            self.positions[k] = pos;
            self.run(k + 1);
        }
    }
}

/// Linear system of one face over `(λ, p, b)`, where `b` is spending on partially held goods.
/// With `even`, the objective keeps each partial good's spending close to an equal split.
fn face_lp<T: Scalar>(
    v: &[Vec<T>],
    q: &[u32],
    classes: &[Class],
    even: bool,
) -> (LinearProgram<T>, Vec<Option<usize>>) {
    let (n, m) = (v.len(), v[0].len());
    let mut spend = vec![None; n * m];
    let mut vars = n + m;
    for (c, class) in classes.iter().enumerate() {
        if *class == Class::Partial {
            spend[c] = Some(vars);
            vars += 1;
        }
    }
    let partial_cells = vars - n - m;
    let deviation = vars;
    if even {
        vars += 2 * partial_cells;
    }
    let lambda = |i: usize| i;
    let price = |g: usize| n + g;
    let mut lp = LinearProgram::new(vars);
    for i in 0..n {
        for g in 0..m {
            let terms = [(price(g), T::one()), (lambda(i), -v[i][g].clone())];
            match classes[i * m + g] {
                Class::Full => lp.add_sparse(&terms, Relation::Le, T::zero()),
                Class::Zero => lp.add_sparse(&terms, Relation::Ge, T::zero()),
                Class::Partial => {
                    lp.add_sparse(&terms, Relation::Eq, T::zero());
                    let b = spend[i * m + g].unwrap();
                    lp.add_sparse(
                        &[(b, T::one()), (price(g), -T::one())],
                        Relation::Le,
                        T::zero(),
                    );
                }
            }
        }
    }
    for g in 0..m {
        let full = (0..n)
            .filter(|&i| classes[i * m + g] == Class::Full)
            .count();
        let partial: Vec<usize> = (0..n).filter_map(|i| spend[i * m + g]).collect();
        if partial.is_empty() {
            if full < q[g] as usize {
                lp.add_sparse(&[(price(g), T::one())], Relation::Eq, T::zero());
            }
            continue;
        }
        let mut terms: Vec<(usize, T)> = partial.iter().map(|&b| (b, T::one())).collect();
        let mut rest = T::zero();
        for _ in full..q[g] as usize {
            rest = rest + T::one();
        }
        terms.push((price(g), -rest.clone()));
        lp.add_sparse(&terms, Relation::Eq, T::zero());
        if even {
            let mut count = T::zero();
            for _ in &partial {
                count = count + T::one();
            }
            let share = rest / count;
            for &b in &partial {
                let d = deviation + 2 * (b - n - m);
                let row = [
                    (b, T::one()),
                    (price(g), -share.clone()),
                    (d, -T::one()),
                    (d + 1, T::one()),
                ];
                lp.add_sparse(&row, Relation::Eq, T::zero());
            }
        }
    }
    if even {
        for d in deviation..vars {
            lp.objective[d] = T::one();
        }
        lp.maximize = false;
    }
    for i in 0..n {
        let mut terms = Vec::new();
        let mut all_full = true;
        for g in 0..m {
            match classes[i * m + g] {
                Class::Full => terms.push((price(g), T::one())),
                Class::Partial => {
                    all_full = false;
                    terms.push((spend[i * m + g].unwrap(), T::one()));
                }
                Class::Zero => all_full = false,
            }
        }
        let relation = if all_full { Relation::Le } else { Relation::Eq };
        lp.add_sparse(&terms, relation, T::one());
    }
    (lp, spend)
}

fn face_solution(
    v: &[Vec<Rational>],
    q: &[u32],
    classes: &[Class],
) -> Option<(Matrix, Vec<Rational>)> {
    let (n, m) = (v.len(), v[0].len());
    let (lp, spend) = face_lp(v, q, classes, true);
    let LpOutcome::Optimal { x: sol, .. } = lp.solve() else {
        return None;
    };
    let p: Vec<Rational> = (0..m).map(|g| sol[n + g].clone()).collect();
    let x = (0..n)
        .map(|i| {
            (0..m)
                .map(|g| match classes[i * m + g] {
                    Class::Full => Rational::one(),
                    Class::Zero => Rational::zero(),
                    Class::Partial if p[g].is_zero() => Rational::zero(),
                    Class::Partial => &sol[spend[i * m + g].unwrap()] / &p[g],
                })
                .collect()
        })
        .collect();
    Some((x, p))
}

/// Exact equilibrium in copies mode, or `None` if no face verifies.
pub(crate) fn copies_exact(instance: &Instance) -> Option<(Matrix, Vec<Rational>)> {
    let v = normalized(instance);
    let n = instance.agent_count();
    let m = instance.good_count();
    if m == 0 {
        return Some((vec![Vec::new(); n], Vec::new()));
    }
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let ratios: Vec<Rational> = (0..m).map(|g| &v[j][g] / &v[i][g]).collect();
            let mut breaks = ratios.clone();
            breaks.sort();
            breaks.dedup();
            let slot = ratios
                .iter()
                .map(|c| breaks.binary_search(c).unwrap())
                .collect();
            pairs.push(Pair { i, j, breaks, slot });
        }
    }
    let mut search = FaceSearch {
        v: &v,
        q: instance.supplies(),
        positions: vec![0; pairs.len()],
        pairs,
        seen: HashSet::new(),
        faces: Vec::new(),
    };
    search.run(0);
    let faces = search.faces;
    let vf: Vec<Vec<f64>> = v
        .iter()
        .map(|row| row.iter().map(to_f64).collect())
        .collect();
    let accept = |classes: &[Class]| {
        let (x, p) = face_solution(&v, instance.supplies(), classes)?;
        verify_ceei(instance, CeeiMode::Copies, &x, &p)
            .is_exact()
            .then_some((x, p))
    };
    let mut rejected = Vec::new();
    for classes in &faces {
        if face_lp(&vf, instance.supplies(), classes, false)
            .0
            .solve()
            .is_feasible()
        {
            if let Some(found) = accept(classes) {
                return Some(found);
            }
        } else {
            rejected.push(classes);
        }
    }
    rejected.into_iter().find_map(|c| accept(c))
}

/// Equilibrium prices and allocation, certified by [`verify_ceei`].
pub fn compute_ceei(instance: &Instance, mode: CeeiMode) -> Result<CeeiCertificate> {
    compute_ceei_with(instance, mode, &CeeiOptions::default())
}

pub fn compute_ceei_with(
    instance: &Instance,
    mode: CeeiMode,
    options: &CeeiOptions,
) -> Result<CeeiCertificate> {
    check_positive(instance)?;
    // A copies equilibrium that already respects the row cap is also a balanced one.
    if let Some((x, prices)) = copies_exact(instance) {
        let residuals = verify_ceei(instance, mode, &x, &prices);
        if residuals.is_exact() && (mode == CeeiMode::Copies || unsold(instance, &x).is_zero()) {
            return Ok(CeeiCertificate {
                mode,
                x,
                prices,
                residuals,
                exact: true,
            });
        }
    }
    let certificate = super::numeric::solve(instance, mode, options)?;
    if mode == CeeiMode::CopiesBalanced {
        // Rows reach the cap only when every copy is sold; otherwise supports need not be balanced.
        let left = to_f64(&unsold(instance, &certificate.x));
        if left > options.tau {
            return Err(Error::ConvergenceFailure {
                max_residual: left,
                certificate: Box::new(certificate),
            });
        }
    }
    Ok(certificate)
}

/// Largest unallocated supply over goods.
pub fn unsold(instance: &Instance, x: &Matrix) -> Rational {
    (0..instance.good_count())
        .map(|g| {
            pos(r(instance.supplies()[g]) - x.iter().fold(Rational::zero(), |a, row| a + &row[g]))
        })
        .max()
        .unwrap_or_else(Rational::zero)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{int, rat};

    fn types(rows: Vec<Vec<Rational>>, supplies: Vec<u32>) -> Instance {
        let m = supplies.len();
        Instance::with_supplies((1..=m).map(|g| format!("g{}", g)).collect(), rows, supplies)
            .unwrap()
    }

    #[test]
    fn symmetric_two_by_two() {
        let inst = types(vec![vec![int(1), int(1)]; 2], vec![1, 1]);
        let half = vec![vec![rat(1, 2); 2]; 2];
        assert!(verify_ceei(&inst, CeeiMode::Copies, &half, &[int(1), int(1)]).is_exact());
        let cert = compute_ceei(&inst, CeeiMode::Copies).unwrap();
        assert!(cert.exact && cert.residuals.is_exact());
        assert!(bang_per_buck_holds(&inst, &cert.x, &cert.prices, 0.0));
    }

    #[test]
    fn shared_good_with_two_copies() {
        let inst = types(vec![vec![int(3)], vec![int(1)]], vec![2]);
        let x = vec![vec![int(1)], vec![int(1)]];
        for p in [rat(1, 3), int(1)] {
            assert!(verify_ceei(&inst, CeeiMode::Copies, &x, &[p]).is_exact());
        }
        assert!(compute_ceei(&inst, CeeiMode::Copies)
            .unwrap()
            .residuals
            .is_exact());
    }

    #[test]
    fn perturbation_is_detected() {
        let inst = types(vec![vec![int(1), int(1)]; 2], vec![1, 1]);
        let mut x = vec![vec![rat(1, 2); 2]; 2];
        x[0][0] += rat(1, 10);
        let res = verify_ceei(&inst, CeeiMode::Copies, &x, &[int(1), int(1)]);
        assert!(res.feasibility.is_positive() || res.clearing.is_positive());
    }

    #[test]
    fn zero_value_rejected() {
        let inst = types(vec![vec![int(1), int(0)]], vec![1, 1]);
        assert!(matches!(
            compute_ceei(&inst, CeeiMode::Copies),
            Err(Error::NotStrictlyPositive { agent: 0, good: 1 })
        ));
    }

    #[test]
    fn asymmetric_three_agents() {
        let inst = types(
            vec![
                vec![int(3), int(1), rat(1, 2), int(2)],
                vec![int(1), int(2), int(2), rat(1, 4)],
                vec![int(1), int(1), int(1), int(1)],
            ],
            vec![2, 1, 2, 1],
        );
        let cert = compute_ceei(&inst, CeeiMode::Copies).unwrap();
        assert!(cert.residuals.is_exact());
        assert!(bang_per_buck_holds(&inst, &cert.x, &cert.prices, 0.0));
    }
}
