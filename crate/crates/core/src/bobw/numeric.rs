//! Smoothed market solver: logistic demands, Fischer-Burmeister Newton on prices, then exact face snapping.

use num_traits::{One, Signed, Zero};

use super::ceei::{row_cap, verify_ceei};
use super::{CeeiCertificate, CeeiMode, CeeiOptions, Matrix};
use crate::error::{Error, Result};
use crate::fairness::normalized;
use crate::instance::Instance;
use crate::lp::{LinearProgram, LpOutcome, Relation};
use crate::rational::{from_f64, snap, to_f64, Rational};

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn bisect(mut lo: f64, mut hi: f64, mut too_low: impl FnMut(f64) -> bool) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if too_low(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

struct Market {
    v: Vec<Vec<f64>>,
    q: Vec<f64>,
    cap: Option<f64>,
}

#[derive(Clone, Debug)]
struct AgentDemand {
    y: Vec<f64>,
    alpha: f64,
    mu: f64,
}

impl Market {
    fn demand_at(&self, i: usize, p: &[f64], eps: f64, alpha: f64, mu: f64) -> Vec<f64> {
        self.v[i]
            .iter()
            .zip(p)
            .map(|(v, p)| sigmoid((v - alpha * p - mu) / eps))
            .collect()
    }

    fn mu_for(&self, i: usize, p: &[f64], eps: f64, alpha: f64) -> f64 {
        let Some(cap) = self.cap else { return 0.0 };
        let count = |mu: f64| self.demand_at(i, p, eps, alpha, mu).iter().sum::<f64>();
        if count(0.0) <= cap {
            return 0.0;
        }
        let hi = self.v[i]
            .iter()
            .zip(p)
            .map(|(v, p)| v - alpha * p)
            .fold(0.0, f64::max)
            + 60.0 * eps;
        bisect(0.0, hi, |mu| count(mu) > cap)
    }

    fn agent(&self, i: usize, p: &[f64], eps: f64) -> AgentDemand {
        let spend = |alpha: f64| {
            let mu = self.mu_for(i, p, eps, alpha);
            let y = self.demand_at(i, p, eps, alpha, mu);
            (y.iter().zip(p).map(|(y, p)| y * p).sum::<f64>(), y, mu)
        };
        let (s0, y0, mu0) = spend(0.0);
        if s0 <= 1.0 {
            return AgentDemand {
                y: y0,
                alpha: 0.0,
                mu: mu0,
            };
        }
        let mut hi = 1.0;
        for _ in 0..2000 {
            if spend(hi).0 <= 1.0 {
                break;
            }
            hi *= 2.0;
        }
        let alpha = bisect(0.0, hi, |a| spend(a).0 > 1.0);
        let (_, y, mu) = spend(alpha);
        AgentDemand { y, alpha, mu }
    }

    fn demands(&self, p: &[f64], eps: f64) -> Vec<AgentDemand> {
        let p: Vec<f64> = p.iter().map(|x| x.max(0.0)).collect();
        (0..self.v.len()).map(|i| self.agent(i, &p, eps)).collect()
    }

    /// Jacobian of aggregate demand with respect to prices.
    fn jacobian(&self, p: &[f64], eps: f64, agents: &[AgentDemand]) -> Vec<Vec<f64>> {
        let m = p.len();
        let p: Vec<f64> = p.iter().map(|x| x.max(0.0)).collect();
        let mut jac = vec![vec![0.0; m]; m];
        for d in agents {
            if d.alpha <= 0.0 {
                continue;
            }
            let s: Vec<f64> = d.y.iter().map(|y| y * (1.0 - y) / eps).collect();
            let a: f64 = (0..m).map(|g| p[g] * p[g] * s[g]).sum();
            let b: f64 = (0..m).map(|g| p[g] * s[g]).sum();
            let c: f64 = s.iter().sum();
            for h in 0..m {
                let r1 = d.y[h] - d.alpha * p[h] * s[h];
                let r2 = -d.alpha * s[h];
                let det = a * c - b * b;
                let (da, dm) = if d.mu > 0.0 && det.abs() > 1e-300 {
                    ((r1 * c - r2 * b) / det, (a * r2 - b * r1) / det)
                } else if a > 0.0 {
                    (r1 / a, 0.0)
                } else {
                    (0.0, 0.0)
                };
                for g in 0..m {
                    let direct = if g == h { d.alpha } else { 0.0 };
                    jac[g][h] += s[g] * (-direct - p[g] * da - dm);
                }
            }
        }
        jac
    }
}

fn solve_linear(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Fischer-Burmeister residual of the clearing complementarity `p >= 0, q - Σy >= 0`.
fn fb(p: &[f64], q: &[f64], agents: &[AgentDemand]) -> Vec<f64> {
    (0..p.len())
        .map(|g| {
            let e = q[g] - agents.iter().map(|d| d.y[g]).sum::<f64>();
            p[g] + e - (p[g] * p[g] + e * e).sqrt()
        })
        .collect()
}

fn merit(phi: &[f64]) -> f64 {
    0.5 * phi.iter().map(|x| x * x).sum::<f64>()
}

struct Numeric {
    p: Vec<f64>,
    agents: Vec<AgentDemand>,
}

/// Newton steps at one smoothing level; returns the number of iterations used.
fn newton(market: &Market, p: &mut Vec<f64>, eps: f64, budget: usize) -> usize {
    let m = p.len();
    let mut agents = market.demands(p, eps);
    let mut phi = fb(p, &market.q, &agents);
    let mut used = 0;
    while used < budget && phi.iter().any(|x| x.abs() > 1e-13) {
        used += 1;
        let jy = market.jacobian(p, eps, &agents);
        let mut jac = vec![vec![0.0; m]; m];
        for g in 0..m {
            let e = market.q[g] - agents.iter().map(|d| d.y[g]).sum::<f64>();
            let r = (p[g] * p[g] + e * e).sqrt();
            let (da, db) = if r < 1e-300 {
                (1.0 - 0.5f64.sqrt(), 1.0 - 0.5f64.sqrt())
            } else {
                (1.0 - p[g] / r, 1.0 - e / r)
            };
            for h in 0..m {
                let dp = if p[h] < 0.0 { 0.0 } else { -jy[g][h] };
                jac[g][h] = db * dp + if g == h { da } else { 0.0 };
            }
        }
        let psi = merit(&phi);
        let newton_dir = solve_linear(jac.clone(), phi.iter().map(|x| -x).collect());
        let gradient: Vec<f64> = (0..m)
            .map(|h| -(0..m).map(|g| jac[g][h] * phi[g]).sum::<f64>())
            .collect();
        // Levenberg-Marquardt steps for near-singular Jacobians.
        let damped = [1.0, 1e-3].into_iter().filter_map(|scale| {
            let damping = scale * phi.iter().map(|x| x * x).sum::<f64>().sqrt();
            let normal: Vec<Vec<f64>> = (0..m)
                .map(|a| {
                    (0..m)
                        .map(|b| {
                            (0..m).map(|g| jac[g][a] * jac[g][b]).sum::<f64>()
                                + if a == b { damping } else { 0.0 }
                        })
                        .collect()
                })
                .collect();
            solve_linear(normal, gradient.clone())
        });
        let directions: Vec<Vec<f64>> = newton_dir
            .into_iter()
            .chain(damped.collect::<Vec<_>>())
            .chain(std::iter::once(gradient.clone()))
            .collect();
        let mut moved = false;
        for dir in directions {
            let slope: f64 = (0..m)
                .map(|h| (0..m).map(|g| jac[g][h] * phi[g]).sum::<f64>() * dir[h])
                .sum();
            let mut t = 1.0;
            while t > 1e-12 {
                let trial: Vec<f64> = p.iter().zip(&dir).map(|(a, d)| a + t * d).collect();
                let trial_agents = market.demands(&trial, eps);
                let trial_phi = fb(&trial, &market.q, &trial_agents);
                if merit(&trial_phi) <= psi + 1e-4 * t * slope.min(0.0) && merit(&trial_phi) < psi {
                    *p = trial;
                    agents = trial_agents;
                    phi = trial_phi;
                    moved = true;
                    break;
                }
                t *= 0.5;
            }
            if moved {
                break;
            }
        }
        if !moved {
            break;
        }
    }
    used
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Cell {
    Full,
    Partial,
    Zero,
}

/// Exact prices and allocation on the face suggested by a numeric point, if one verifies.
fn snap_face(
    instance: &Instance,
    mode: CeeiMode,
    v: &[Vec<Rational>],
    cap: Option<&Rational>,
    num: &Numeric,
    tol: f64,
) -> Option<(Matrix, Vec<Rational>)> {
    let (n, m) = (v.len(), v[0].len());
    let q: Vec<Rational> = instance
        .supplies()
        .iter()
        .map(|&s| Rational::from_integer(s.into()))
        .collect();
    let cell = |i: usize, g: usize| {
        let y = num.agents[i].y[g];
        if y > 1.0 - tol {
            Cell::Full
        } else if y < tol {
            Cell::Zero
        } else {
            Cell::Partial
        }
    };
    let spends = |i: usize| {
        num.agents[i]
            .y
            .iter()
            .zip(&num.p)
            .map(|(y, p)| y * p.max(0.0))
            .sum::<f64>()
    };
    let budgeted: Vec<bool> = (0..n)
        .map(|i| num.agents[i].alpha > 0.0 && spends(i) > 1.0 - 1e-6)
        .collect();
    let capped: Vec<bool> = (0..n).map(|i| num.agents[i].mu > 0.0).collect();

    // Stage one: multipliers and prices. Variables: λ, ν, μ, p, d+, d-.
    let (lam, nu, mu, price, dp, dm) = (0, n, 2 * n, 3 * n, 3 * n + m, 3 * n + 2 * m);
    let mut lp = LinearProgram::new(3 * n + 3 * m);
    let mut objective = vec![Rational::zero(); 3 * n + 3 * m];
    for g in 0..m {
        objective[dp + g] = Rational::one();
        objective[dm + g] = Rational::one();
        lp.add_sparse(
            &[
                (price + g, Rational::one()),
                (dp + g, -Rational::one()),
                (dm + g, Rational::one()),
            ],
            Relation::Eq,
            from_f64(num.p[g].max(0.0)),
        );
        let column: f64 = num.agents.iter().map(|d| d.y[g]).sum();
        if column < to_f64(&q[g]) - 1e-6 {
            lp.add_sparse(
                &[(price + g, Rational::one())],
                Relation::Eq,
                Rational::zero(),
            );
        }
    }
    for i in 0..n {
        if !capped[i] {
            lp.add_sparse(&[(nu + i, Rational::one())], Relation::Eq, Rational::zero());
            lp.add_sparse(&[(mu + i, Rational::one())], Relation::Eq, Rational::zero());
        }
        for g in 0..m {
            let relation = match cell(i, g) {
                Cell::Full => Relation::Le,
                Cell::Partial => Relation::Eq,
                Cell::Zero => Relation::Ge,
            };
            if budgeted[i] {
                let terms = [
                    (price + g, Rational::one()),
                    (lam + i, -v[i][g].clone()),
                    (nu + i, Rational::one()),
                ];
                lp.add_sparse(&terms, relation, Rational::zero());
            } else {
                lp.add_sparse(&[(mu + i, Rational::one())], relation, v[i][g].clone());
            }
        }
    }
    let LpOutcome::Optimal { x: sol, .. } = lp.minimize(objective).solve() else {
        return None;
    };
    let p: Vec<Rational> = (0..m).map(|g| sol[price + g].clone()).collect();
    let binding: Vec<bool> = (0..n)
        .map(|i| {
            if budgeted[i] {
                sol[nu + i].is_positive()
            } else {
                sol[mu + i].is_positive()
            }
        })
        .collect();
    let face = Face {
        cells: (0..n)
            .map(|i| (0..m).map(|g| cell(i, g)).collect())
            .collect(),
        budgeted,
        binding,
    };
    if let Some(x) = fill_partial(&q, cap, num, &face, Some(&p)) {
        if verify_ceei(instance, mode, &x, &p).is_exact() {
            return Some((x, p));
        }
    }
    // The face LP ignores budgets, so its prices can miss the face by rounding; small-denominator prices may not.
    let forced_zero: Vec<bool> = p.iter().map(|c| c.is_zero()).collect();
    let binding: Vec<bool> = (0..n).map(|i| capped[i]).collect();
    let face = Face { binding, ..face };
    let mut tried: Vec<Vec<Rational>> = Vec::new();
    for den in [10u64, 100, 1_000, 10_000, 100_000, 1_000_000] {
        let p: Vec<Rational> = (0..m)
            .map(|g| {
                if forced_zero[g] {
                    Rational::zero()
                } else {
                    snap(num.p[g].max(0.0), den)
                }
            })
            .collect();
        if tried.contains(&p) {
            continue;
        }
        if let Some(x) = fill_partial(&q, cap, num, &face, Some(&p)) {
            if verify_ceei(instance, mode, &x, &p).is_exact() {
                return Some((x, p));
            }
        }
        tried.push(p);
    }
    // Allocation first, then prices: budgets are linear once the allocation is fixed.
    let x = fill_partial(&q, cap, num, &face, None)?;
    let p = prices_for(v, &x, cap, num, &face.budgeted)?;
    verify_ceei(instance, mode, &x, &p)
        .is_exact()
        .then_some((x, p))
}

/// Prices closest to the numeric ones that support `x` as every agent's demand.
fn prices_for(
    v: &[Vec<Rational>],
    x: &Matrix,
    cap: Option<&Rational>,
    num: &Numeric,
    budgeted: &[bool],
) -> Option<Vec<Rational>> {
    let (n, m) = (x.len(), x[0].len());
    let (lam, nu, mu, price, dp, dm) = (0, n, 2 * n, 3 * n, 3 * n + m, 3 * n + 2 * m);
    let mut lp = LinearProgram::new(3 * n + 3 * m);
    let mut objective = vec![Rational::zero(); 3 * n + 3 * m];
    for g in 0..m {
        objective[dp + g] = Rational::one();
        objective[dm + g] = Rational::one();
        lp.add_sparse(
            &[
                (price + g, Rational::one()),
                (dp + g, -Rational::one()),
                (dm + g, Rational::one()),
            ],
            Relation::Eq,
            from_f64(num.p[g].max(0.0)),
        );
    }
    for i in 0..n {
        let row = x[i].iter().fold(Rational::zero(), |a, c| a + c);
        if cap.is_none_or(|k| &row < k) {
            lp.add_sparse(&[(nu + i, Rational::one())], Relation::Eq, Rational::zero());
            lp.add_sparse(&[(mu + i, Rational::one())], Relation::Eq, Rational::zero());
        }
        let spend: Vec<(usize, Rational)> = (0..m)
            .filter(|&g| !x[i][g].is_zero())
            .map(|g| (price + g, x[i][g].clone()))
            .collect();
        let relation = if budgeted[i] {
            Relation::Eq
        } else {
            Relation::Le
        };
        lp.add_sparse(&spend, relation, Rational::one());
        for g in 0..m {
            let relation = if x[i][g].is_one() {
                Relation::Le
            } else if x[i][g].is_zero() {
                Relation::Ge
            } else {
                Relation::Eq
            };
            if budgeted[i] {
                let terms = [
                    (price + g, Rational::one()),
                    (lam + i, -v[i][g].clone()),
                    (nu + i, Rational::one()),
                ];
                lp.add_sparse(&terms, relation, Rational::zero());
            } else {
                lp.add_sparse(&[(mu + i, Rational::one())], relation, v[i][g].clone());
            }
        }
    }
    let LpOutcome::Optimal { x: sol, .. } = lp.minimize(objective).solve() else {
        return None;
    };
    Some((0..m).map(|g| sol[price + g].clone()).collect())
}

struct Face {
    cells: Vec<Vec<Cell>>,
    budgeted: Vec<bool>,
    binding: Vec<bool>,
}

/// Partial cells closest to the numeric point that meet budgets, caps and clearing at prices `p`.
fn fill_partial(
    q: &[Rational],
    cap: Option<&Rational>,
    num: &Numeric,
    face: &Face,
    p: Option<&[Rational]>,
) -> Option<Matrix> {
    let (n, m) = (face.cells.len(), q.len());
    let cell = |i: usize, g: usize| face.cells[i][g];
    let partial: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (0..m).map(move |g| (i, g)))
        .filter(|&(i, g)| cell(i, g) == Cell::Partial)
        .collect();
    let k = partial.len();
    let mut lp = LinearProgram::new(3 * k);
    let mut objective = vec![Rational::zero(); 3 * k];
    for (t, &(i, g)) in partial.iter().enumerate() {
        objective[k + t] = Rational::one();
        objective[2 * k + t] = Rational::one();
        lp.add_sparse(&[(t, Rational::one())], Relation::Le, Rational::one());
        lp.add_sparse(
            &[
                (t, Rational::one()),
                (k + t, -Rational::one()),
                (2 * k + t, Rational::one()),
            ],
            Relation::Eq,
            from_f64(num.agents[i].y[g]),
        );
    }
    for g in 0..m {
        let full = (0..n).filter(|&i| cell(i, g) == Cell::Full).count();
        let terms: Vec<(usize, Rational)> = partial
            .iter()
            .enumerate()
            .filter(|(_, c)| c.1 == g)
            .map(|(t, _)| (t, Rational::one()))
            .collect();
        let rest = &q[g] - Rational::from_integer(full.into());
        let sold = match p {
            Some(p) => p[g].is_positive(),
            None => num.agents.iter().map(|d| d.y[g]).sum::<f64>() >= to_f64(&q[g]) - 1e-6,
        };
        let relation = if sold { Relation::Eq } else { Relation::Le };
        lp.add_sparse(&terms, relation, rest);
    }
    for i in 0..n {
        let full: Vec<usize> = (0..m).filter(|&g| cell(i, g) == Cell::Full).collect();
        let mine: Vec<(usize, usize)> = partial
            .iter()
            .enumerate()
            .filter(|(_, c)| c.0 == i)
            .map(|(t, c)| (t, c.1))
            .collect();
        if let Some(p) = p {
            let fixed_spend = full.iter().fold(Rational::zero(), |a, &g| a + &p[g]);
            let spend_terms: Vec<(usize, Rational)> =
                mine.iter().map(|&(t, g)| (t, p[g].clone())).collect();
            let relation = if face.budgeted[i] {
                Relation::Eq
            } else {
                Relation::Le
            };
            lp.add_sparse(&spend_terms, relation, Rational::one() - fixed_spend);
        }
        if let Some(cap) = cap {
            let count_terms: Vec<(usize, Rational)> =
                mine.iter().map(|&(t, _)| (t, Rational::one())).collect();
            let relation = if face.binding[i] {
                Relation::Eq
            } else {
                Relation::Le
            };
            lp.add_sparse(
                &count_terms,
                relation,
                cap - Rational::from_integer(full.len().into()),
            );
        }
    }
    let LpOutcome::Optimal { x: sol, .. } = lp.minimize(objective).solve() else {
        return None;
    };
    let mut x: Matrix = (0..n)
        .map(|i| {
            (0..m)
                .map(|g| {
                    if cell(i, g) == Cell::Full {
                        Rational::one()
                    } else {
                        Rational::zero()
                    }
                })
                .collect()
        })
        .collect();
    for (t, &(i, g)) in partial.iter().enumerate() {
        x[i][g] = sol[t].clone();
    }
    Some(x)
}

/// Rounds `x` to small denominators and repairs it back into the feasible region by an L1-closest LP.
pub(crate) fn rationalize(
    instance: &Instance,
    mode: CeeiMode,
    x: &[Vec<f64>],
    max_den: u64,
) -> Matrix {
    repair(instance, mode, x, max_den, true)
        .or_else(|| repair(instance, mode, x, max_den, false))
        .unwrap_or_else(|| {
            vec![vec![Rational::zero(); instance.good_count()]; instance.agent_count()]
        })
}

/// With `keep_tight`, columns and rows within rounding of their bound stay exactly at it.
fn repair(
    instance: &Instance,
    mode: CeeiMode,
    x: &[Vec<f64>],
    max_den: u64,
    keep_tight: bool,
) -> Option<Matrix> {
    let (n, m) = (instance.agent_count(), instance.good_count());
    let cap = row_cap(instance, mode);
    let tight = |sum: f64, bound: f64| {
        if keep_tight && sum > bound - 1e-6 {
            Relation::Eq
        } else {
            Relation::Le
        }
    };
    let target: Vec<Vec<Rational>> = x
        .iter()
        .map(|row| {
            row.iter()
                .map(|&c| snap(c.clamp(0.0, 1.0), max_den))
                .collect()
        })
        .collect();
    let cells = n * m;
    let mut lp = LinearProgram::new(3 * cells);
    let mut objective = vec![Rational::zero(); 3 * cells];
    for i in 0..n {
        for g in 0..m {
            let c = i * m + g;
            objective[cells + c] = Rational::one();
            objective[2 * cells + c] = Rational::one();
            lp.add_sparse(&[(c, Rational::one())], Relation::Le, Rational::one());
            lp.add_sparse(
                &[
                    (c, Rational::one()),
                    (cells + c, -Rational::one()),
                    (2 * cells + c, Rational::one()),
                ],
                Relation::Eq,
                target[i][g].clone(),
            );
        }
    }
    for g in 0..m {
        let terms: Vec<(usize, Rational)> = (0..n).map(|i| (i * m + g, Rational::one())).collect();
        let q = instance.supplies()[g];
        let sum: f64 = x.iter().map(|row| row[g]).sum();
        lp.add_sparse(
            &terms,
            tight(sum, q as f64),
            Rational::from_integer(q.into()),
        );
    }
    if let Some(cap) = &cap {
        for (i, row) in x.iter().enumerate() {
            let terms: Vec<(usize, Rational)> =
                (0..m).map(|g| (i * m + g, Rational::one())).collect();
            lp.add_sparse(&terms, tight(row.iter().sum(), to_f64(cap)), cap.clone());
        }
    }
    match lp.minimize(objective).solve() {
        LpOutcome::Optimal { x: sol, .. } => {
            Some((0..n).map(|i| sol[i * m..(i + 1) * m].to_vec()).collect())
        }
        _ => None,
    }
}

/// Residuals of the numeric point itself, evaluated exactly.
fn exact_residuals(instance: &Instance, mode: CeeiMode, num: &Numeric) -> super::Residuals {
    let x: Matrix = num
        .agents
        .iter()
        .map(|d| d.y.iter().map(|&c| from_f64(c)).collect())
        .collect();
    let p: Vec<Rational> = num.p.iter().map(|&c| from_f64(c.max(0.0))).collect();
    verify_ceei(instance, mode, &x, &p)
}

/// Newton steps allowed per smoothing level.
const LEVEL_ITERATIONS: usize = 60;

/// Solves the market numerically, snapping to an exact face when possible and falling back to the rounding bridge.
pub(crate) fn solve(
    instance: &Instance,
    mode: CeeiMode,
    options: &CeeiOptions,
) -> Result<CeeiCertificate> {
    let v = normalized(instance);
    let (n, m) = (instance.agent_count(), instance.good_count());
    let cap = row_cap(instance, mode);
    let market = Market {
        v: v.iter()
            .map(|row| row.iter().map(to_f64).collect())
            .collect(),
        q: instance.supplies().iter().map(|&s| s as f64).collect(),
        cap: cap.as_ref().map(to_f64),
    };
    let total: f64 = market.q.iter().sum::<f64>().max(1.0);
    let mut p = vec![n as f64 / total; m];
    let mut eps = 0.05 / total;
    let mut iterations = 0;
    let mut best: Option<(f64, Numeric)> = None;
    while iterations < options.max_iterations {
        let budget = (options.max_iterations - iterations).min(LEVEL_ITERATIONS);
        iterations += newton(&market, &mut p, eps, budget).max(1);
        let num = Numeric {
            agents: market.demands(&p, eps),
            p: p.clone(),
        };
        if eps < 1e-3 / total {
            for tol in [1e-6, 1e-9, 1e-3] {
                if let Some((x, prices)) = snap_face(instance, mode, &v, cap.as_ref(), &num, tol) {
                    let residuals = verify_ceei(instance, mode, &x, &prices);
                    return Ok(CeeiCertificate {
                        mode,
                        x,
                        prices,
                        residuals,
                        exact: true,
                    });
                }
            }
        }
        let residual = exact_residuals(instance, mode, &num).max_f64();
        let improved = best.as_ref().is_none_or(|(r, _)| residual < *r);
        if improved {
            best = Some((residual, num));
        } else if eps < 1e-5 / total
            && residual > 2.0 * best.as_ref().map_or(f64::INFINITY, |(r, _)| *r)
        {
            break;
        }
        if eps <= 1e-7 / total {
            break;
        }
        eps *= 0.25;
    }
    let num = match best {
        Some((_, num)) => num,
        None => Numeric {
            agents: market.demands(&p, eps),
            p,
        },
    };
    let raw_x: Vec<Vec<f64>> = num.agents.iter().map(|d| d.y.clone()).collect();
    let residuals = exact_residuals(instance, mode, &num);
    let x = rationalize(instance, mode, &raw_x, options.max_denominator);
    let prices = num.p.iter().map(|&c| snap(c.max(0.0), 1_000_000)).collect();
    let max_residual = residuals.max_f64();
    let certificate = CeeiCertificate {
        mode,
        x,
        prices,
        residuals,
        exact: false,
    };
    if max_residual > options.tau {
        return Err(Error::ConvergenceFailure {
            max_residual,
            certificate: Box::new(certificate),
        });
    }
    Ok(certificate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::int;

    #[test]
    fn smoothed_demand_respects_budget_and_cap() {
        let market = Market {
            v: vec![vec![0.5, 0.3, 0.2]],
            q: vec![1.0; 3],
            cap: Some(1.5),
        };
        let d = market.agent(0, &[2.0, 0.1, 0.1], 1e-4);
        let spend = 2.0 * d.y[0] + 0.1 * (d.y[1] + d.y[2]);
        assert!(spend <= 1.0 + 1e-9);
        assert!(d.y.iter().sum::<f64>() <= 1.5 + 1e-9);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let market = Market {
            v: vec![vec![0.4, 0.35, 0.25], vec![0.2, 0.3, 0.5]],
            q: vec![1.0; 3],
            cap: Some(1.5),
        };
        let p = vec![0.9, 0.6, 0.5];
        let eps = 0.05;
        let agents = market.demands(&p, eps);
        let jac = market.jacobian(&p, eps, &agents);
        let h = 1e-6;
        for k in 0..3 {
            let mut up = p.clone();
            up[k] += h;
            let mut down = p.clone();
            down[k] -= h;
            let (a, b) = (market.demands(&up, eps), market.demands(&down, eps));
            for g in 0..3 {
                let fd: f64 = (a.iter().map(|d| d.y[g]).sum::<f64>()
                    - b.iter().map(|d| d.y[g]).sum::<f64>())
                    / (2.0 * h);
                assert!(
                    (fd - jac[g][k]).abs() < 1e-4 * fd.abs().max(1.0),
                    "{} {} {} {}",
                    g,
                    k,
                    fd,
                    jac[g][k]
                );
            }
        }
    }

    #[test]
    fn rationalize_repairs_columns() {
        let inst = Instance::from_values(vec![vec![int(1), int(1)]; 2]).unwrap();
        let x = rationalize(
            &inst,
            CeeiMode::Copies,
            &[vec![0.6, 0.5], vec![0.6, 0.5]],
            10_000,
        );
        for g in 0..2 {
            assert!(&x[0][g] + &x[1][g] <= int(1));
        }
    }
}
