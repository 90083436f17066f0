//! Seeded instance generators, property checks and greedy counterexample shrinking.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::bobw::ChoresInstance;
use crate::copies::expand_copies;
use crate::error::{Error, Result};
use crate::fairness::{
    check_alpha_ef1, check_constrained_mef1, check_ef1wc, check_po, check_sd_ef1, FairnessReport,
    Universe,
};
use crate::feasibility::{enumerate_feasible, Category, Constraint, FeasibilitySet, DEFAULT_CAP};
use crate::instance::{Allocation, Bundle, Instance};
use crate::io::Problem;
use crate::mnw::{solve_mnw, SolveMode};
use crate::rational::{rat, Rational};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Family {
    Free,
    Partition,
    Laminar,
    Graphic,
    Uniform,
    PartitionLb,
    Balanced,
    Copies,
}

impl Family {
    pub const ALL: [Family; 8] = [
        Family::Free,
        Family::Partition,
        Family::Laminar,
        Family::Graphic,
        Family::Uniform,
        Family::PartitionLb,
        Family::Balanced,
        Family::Copies,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Free => "free",
            Family::Partition => "partition",
            Family::Laminar => "laminar",
            Family::Graphic => "graphic",
            Family::Uniform => "uniform",
            Family::PartitionLb => "partition_lb",
            Family::Balanced => "balanced",
            Family::Copies => "copies",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let s = s.replace('-', "_");
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| format!("unknown family `{}`", s))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Property {
    /// Every maximizer is ½-EF1.
    HalfEf1,
    /// Every maximizer is EF1. Not guaranteed; exploratory.
    Ef1Exact,
    /// Every maximizer is PO in the universe matching the completeness flag.
    Po,
    /// Every maximizer is ½-EF1-WC (copies only).
    Ef1wcHalf,
    /// Every maximizer is constrained MEF1 (matroidal only).
    Mef1,
    /// Complete maximizers are also maximizers without completeness.
    CompleteInMnw,
    /// Some complete feasible allocation is SD-EF1.
    SdEf1Exists,
    /// Some feasible allocation is EF1 and PO.
    Ef1PoExists,
}

impl Property {
    pub const ALL: [Property; 8] = [
        Property::HalfEf1,
        Property::Ef1Exact,
        Property::Po,
        Property::Ef1wcHalf,
        Property::Mef1,
        Property::CompleteInMnw,
        Property::SdEf1Exists,
        Property::Ef1PoExists,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Property::HalfEf1 => "half-ef1",
            Property::Ef1Exact => "ef1-exact",
            Property::Po => "po",
            Property::Ef1wcHalf => "ef1wc-half",
            Property::Mef1 => "mef1",
            Property::CompleteInMnw => "complete-in-mnw",
            Property::SdEf1Exists => "sd-ef1-exists",
            Property::Ef1PoExists => "ef1-po-exists",
        }
    }
}

impl fmt::Display for Property {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Property {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Property::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| format!("unknown property `{}`", s))
    }
}

/// Grid value in `{0, 1/4, ..., 3}`, or `{1/4, ..., 3}` when `positive`.
pub fn grid_value(rng: &mut impl Rng, positive: bool) -> Rational {
    let lo = if positive { 1 } else { 0 };
    rat(rng.gen_range(lo..=12), 4)
}

pub fn random_instance(rng: &mut impl Rng, n: usize, m: usize, positive: bool) -> Instance {
    let rows = (0..n)
        .map(|_| (0..m).map(|_| grid_value(rng, positive)).collect())
        .collect();
    Instance::from_values(rows).expect("generated instance")
}

/// Type-level instance with supplies in `1..=max_supply` (capped at `n`).
pub fn random_types(
    rng: &mut impl Rng,
    n: usize,
    m: usize,
    max_supply: u32,
    positive: bool,
) -> Instance {
    let rows = (0..n)
        .map(|_| (0..m).map(|_| grid_value(rng, positive)).collect())
        .collect();
    let supplies = (0..m)
        .map(|_| rng.gen_range(1..=max_supply.min(n as u32).max(1)))
        .collect();
    let ids = (1..=m).map(|g| format!("g{}", g)).collect();
    Instance::with_supplies(ids, rows, supplies).expect("generated types")
}

pub fn random_chores(rng: &mut impl Rng, n: usize, c: usize) -> ChoresInstance {
    let costs = (0..n)
        .map(|_| (0..c).map(|_| grid_value(rng, false)).collect())
        .collect();
    ChoresInstance::new((1..=c).map(|g| format!("c{}", g)).collect(), costs)
        .expect("generated chores")
}

/// Random disjoint groups over a shuffled prefix of the goods; the rest stay uncovered.
fn random_groups(rng: &mut impl Rng, m: usize, cover_all: bool) -> Vec<Bundle> {
    let mut goods: Vec<usize> = (0..m).collect();
    goods.shuffle(rng);
    let k = rng.gen_range(1..=m.clamp(1, 3));
    let mut groups = vec![Bundle::EMPTY; k];
    for g in goods {
        let slot = rng.gen_range(0..if cover_all { k } else { k + 1 });
        if slot < k {
            groups[slot] = groups[slot].with(g);
        }
    }
    groups.retain(|b| !b.is_empty());
    groups
}

fn upper_for(rng: &mut impl Rng, size: usize, n: usize, complete: bool) -> u32 {
    let lo = if complete { size.div_ceil(n) } else { 1 };
    rng.gen_range(lo.max(1)..=size.max(1)) as u32
}

/// Random constraint of a family; with `complete`, bounds leave room for complete allocations.
pub fn random_constraint(
    rng: &mut impl Rng,
    family: Family,
    n: usize,
    m: usize,
    complete: bool,
) -> Constraint {
    match family {
        Family::Free => Constraint::Free,
        Family::Balanced => Constraint::Balanced,
        Family::Uniform => {
            let lo = if complete { m.div_ceil(n) } else { 1 };
            Constraint::Uniform {
                rank: rng.gen_range(lo.max(1)..=m.max(1)),
            }
        }
        Family::Partition => Constraint::Partition {
            categories: random_groups(rng, m, false)
                .into_iter()
                .map(|b| Category::upper(b, upper_for(rng, b.len(), n, complete)))
                .collect(),
        },
        Family::PartitionLb => Constraint::PartitionLb {
            categories: {
                let cover_all = rng.gen_bool(0.5);
                random_groups(rng, m, cover_all)
            }
            .into_iter()
            .map(|b| {
                let size = b.len();
                let lower = rng.gen_range(0..=size / n) as u32;
                let upper = rng.gen_range(size.div_ceil(n)..=size) as u32;
                Category::new(b, lower, upper)
            })
            .collect(),
        },
        Family::Laminar => {
            let groups = random_groups(rng, m, false);
            let mut categories: Vec<Category> = groups
                .iter()
                .map(|&b| Category::upper(b, upper_for(rng, b.len(), n, complete)))
                .collect();
            // A parent over some groups plus possibly uncovered goods.
            let covered = groups.iter().fold(Bundle::EMPTY, |a, b| a.union(*b));
            let mut parent = Bundle::full(m)
                .minus(covered)
                .intersect(Bundle(rng.gen::<u64>()));
            for b in &groups {
                if rng.gen_bool(0.5) {
                    parent = parent.union(*b);
                }
            }
            if !parent.is_empty() && !groups.contains(&parent) {
                categories.push(Category::upper(
                    parent,
                    upper_for(rng, parent.len(), n, complete),
                ));
            }
            // A child inside the first group.
            if let Some(first) = groups.first() {
                let child = first.intersect(Bundle(rng.gen::<u64>()));
                if !child.is_empty() && child != *first {
                    categories.push(Category::upper(
                        child,
                        upper_for(rng, child.len(), n, complete),
                    ));
                }
            }
            Constraint::Laminar { categories }
        }
        Family::Graphic => {
            let vertices = rng.gen_range(2..=4u32);
            let edges = (0..m)
                .map(|_| {
                    let a = rng.gen_range(0..vertices);
                    let b = (a + rng.gen_range(1..vertices)) % vertices;
                    (a.min(b), a.max(b))
                })
                .collect();
            Constraint::Graphic { edges }
        }
        Family::Copies => unreachable!("copies problems come from random_copies_problem"),
    }
}

/// Copy-level problem with exactly `m` copies over random types.
pub fn random_copies_problem(rng: &mut impl Rng, n: usize, m: usize, positive: bool) -> Problem {
    let mut supplies = Vec::new();
    let mut left = m;
    while left > 0 {
        let q = rng.gen_range(1..=n.min(left));
        supplies.push(q as u32);
        left -= q;
    }
    let t = supplies.len();
    let rows = (0..n)
        .map(|_| (0..t).map(|_| grid_value(rng, positive)).collect())
        .collect();
    let types =
        Instance::with_supplies((1..=t).map(|g| format!("g{}", g)).collect(), rows, supplies)
            .expect("generated types");
    expand_copies(&types).expect("generated copies").problem
}

pub fn random_problem(
    rng: &mut impl Rng,
    family: Family,
    n: usize,
    m: usize,
    positive: bool,
    complete: bool,
) -> Problem {
    if family == Family::Copies {
        return random_copies_problem(rng, n, m, positive);
    }
    let instance = random_instance(rng, n, m, positive);
    let constraint = random_constraint(rng, family, n, m, complete);
    let constraint = FeasibilitySet::new(constraint, &instance).expect("generated constraint");
    Problem {
        instance,
        constraint,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FuzzConfig {
    pub seed: u64,
    pub trials: usize,
    pub agents: (usize, usize),
    pub goods: (usize, usize),
    pub positive: bool,
    pub families: Vec<Family>,
    pub properties: Vec<Property>,
    pub complete: bool,
    pub cap: u64,
    pub shrink: bool,
}

impl Default for FuzzConfig {
    fn default() -> Self {
        FuzzConfig {
            seed: 0,
            trials: 100,
            agents: (2, 3),
            goods: (1, 6),
            positive: false,
            families: vec![Family::Partition],
            properties: vec![Property::HalfEf1, Property::Po],
            complete: false,
            cap: DEFAULT_CAP,
            shrink: true,
        }
    }
}

/// Independent stream for trial `t`.
pub fn trial_rng(seed: u64, t: usize) -> ChaCha8Rng {
    let mut z = seed
        ^ (t as u64)
            .wrapping_add(1)
            .wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    ChaCha8Rng::seed_from_u64(z ^ (z >> 31))
}

pub fn trial_problem(config: &FuzzConfig, t: usize) -> (Family, Problem) {
    let mut rng = trial_rng(config.seed, t);
    let family = config.families[t % config.families.len()];
    let n = rng.gen_range(config.agents.0..=config.agents.1);
    let m = rng.gen_range(config.goods.0..=config.goods.1);
    (
        family,
        random_problem(&mut rng, family, n, m, config.positive, config.complete),
    )
}

/// A property violation, with the allocation that exhibits it when there is one.
#[derive(Clone, Debug)]
pub struct Violation {
    pub message: String,
    pub allocation: Option<Allocation>,
}

fn failing(report: FairnessReport, alloc: &Allocation) -> Option<Violation> {
    (!report.holds).then(|| Violation {
        message: report.to_string(),
        allocation: Some(alloc.clone()),
    })
}

/// `Ok(None)` when the property holds or does not apply to the problem's constraint family.
pub fn check_property(
    problem: &Problem,
    property: Property,
    complete: bool,
    cap: u64,
) -> Result<Option<Violation>> {
    let (inst, fs) = (&problem.instance, &problem.constraint);
    let half = rat(1, 2);
    let maximizers = || -> Result<Option<Vec<Allocation>>> {
        match solve_mnw(inst, fs, complete, SolveMode::AllOptima) {
            Ok(r) => Ok(Some(r.maximizers)),
            Err(Error::EmptyFeasibleSet) => Ok(None),
            Err(e) => Err(e),
        }
    };
    let each =
        |check: &dyn Fn(&Allocation) -> Result<Option<Violation>>| -> Result<Option<Violation>> {
            for a in maximizers()?.unwrap_or_default() {
                if let Some(v) = check(&a)? {
                    return Ok(Some(v));
                }
            }
            Ok(None)
        };
    let copies = matches!(
        fs.constraint(),
        Constraint::Copies { .. } | Constraint::CopiesBalanced { .. }
    );
    match property {
        Property::HalfEf1 => each(&|a| Ok(failing(check_alpha_ef1(inst, a, &half), a))),
        Property::Ef1Exact => each(&|a| {
            Ok(failing(
                check_alpha_ef1(inst, a, &Rational::from_integer(1.into())),
                a,
            ))
        }),
        Property::Po => {
            let universe = if complete {
                Universe::CompleteFeasible
            } else {
                Universe::AllFeasible
            };
            each(&|a| Ok(failing(check_po(inst, fs, a, universe, cap)?, a)))
        }
        Property::Ef1wcHalf if copies => {
            each(&|a| Ok(failing(check_ef1wc(inst, fs, a, &half)?, a)))
        }
        Property::Mef1 if fs.is_matroidal() => {
            each(&|a| Ok(failing(check_constrained_mef1(inst, fs, a)?, a)))
        }
        Property::Ef1wcHalf | Property::Mef1 => Ok(None),
        Property::CompleteInMnw => {
            let Ok(full) = solve_mnw(inst, fs, true, SolveMode::AllOptima) else {
                return Ok(None);
            };
            let free = solve_mnw(inst, fs, false, SolveMode::AllOptima)?;
            Ok(full
                .maximizers
                .iter()
                .find(|a| !free.maximizers.contains(a))
                .map(|a| Violation {
                    message: "complete maximizer is not a maximizer without completeness".into(),
                    allocation: Some(a.clone()),
                }))
        }
        Property::SdEf1Exists => {
            let all = enumerate_feasible(inst, fs, true, cap)?;
            let found = all.iter().any(|a| check_sd_ef1(inst, a).holds);
            Ok((!found && !all.is_empty()).then(|| Violation {
                message: format!(
                    "none of {} complete feasible allocations is sd-ef1",
                    all.len()
                ),
                allocation: None,
            }))
        }
        Property::Ef1PoExists => {
            let all = enumerate_feasible(inst, fs, complete, cap)?;
            let one = Rational::from_integer(1.into());
            for a in &all {
                if check_alpha_ef1(inst, a, &one).holds
                    && check_po(
                        inst,
                        fs,
                        a,
                        if complete {
                            Universe::CompleteFeasible
                        } else {
                            Universe::AllFeasible
                        },
                        cap,
                    )?
                    .holds
                {
                    return Ok(None);
                }
            }
            Ok((!all.is_empty()).then(|| Violation {
                message: format!("none of {} feasible allocations is ef1 and po", all.len()),
                allocation: None,
            }))
        }
    }
}

fn remap(b: Bundle, goods: &[usize]) -> Bundle {
    goods
        .iter()
        .enumerate()
        .filter(|(_, &g)| b.contains(g))
        .map(|(k, _)| k)
        .collect()
}

fn restrict_constraint(c: &Constraint, goods: &[usize]) -> Option<Constraint> {
    let cats = |cs: &[Category]| -> Vec<Category> {
        cs.iter()
            .map(|c| Category::new(remap(c.goods, goods), c.lower, c.upper))
            .filter(|c| !c.goods.is_empty())
            .collect()
    };
    Some(match c {
        Constraint::Free => Constraint::Free,
        Constraint::Balanced => Constraint::Balanced,
        Constraint::Uniform { rank } => Constraint::Uniform { rank: *rank },
        Constraint::Partition { categories } => Constraint::Partition {
            categories: cats(categories),
        },
        Constraint::Laminar { categories } => Constraint::Laminar {
            categories: cats(categories),
        },
        Constraint::Copies { categories } => Constraint::Copies {
            categories: cats(categories),
        },
        Constraint::CopiesBalanced { categories } => Constraint::CopiesBalanced {
            categories: cats(categories),
        },
        Constraint::PartitionLb { categories } => Constraint::PartitionLb {
            categories: cats(categories),
        },
        Constraint::Graphic { edges } => Constraint::Graphic {
            edges: goods.iter().map(|&g| edges[g]).collect(),
        },
        Constraint::Extended { .. } => return None,
    })
}

/// Sub-problem on the given agents and goods, if the constraint stays valid there.
pub fn restrict_problem(problem: &Problem, agents: &[usize], goods: &[usize]) -> Option<Problem> {
    let instance = problem.instance.restrict(agents, goods).ok()?;
    let constraint = restrict_constraint(problem.constraint.constraint(), goods)?;
    let constraint = FeasibilitySet::new(constraint, &instance).ok()?;
    Some(Problem {
        instance,
        constraint,
    })
}

/// Greedily drops goods, then agents, while the violation persists.
pub fn shrink(problem: &Problem, property: Property, complete: bool, cap: u64) -> Problem {
    let violates = |p: &Problem| matches!(check_property(p, property, complete, cap), Ok(Some(_)));
    let mut best = problem.clone();
    loop {
        let (n, m) = (best.instance.agent_count(), best.instance.good_count());
        let agents: Vec<usize> = (0..n).collect();
        let goods: Vec<usize> = (0..m).collect();
        let smaller = (0..m)
            .rev()
            .map(|g| {
                (
                    agents.clone(),
                    goods
                        .iter()
                        .copied()
                        .filter(|&h| h != g)
                        .collect::<Vec<_>>(),
                )
            })
            .chain((0..n).rev().filter(|_| n > 2).map(|i| {
                (
                    agents
                        .iter()
                        .copied()
                        .filter(|&a| a != i)
                        .collect::<Vec<_>>(),
                    goods.clone(),
                )
            }))
            .filter_map(|(a, g)| restrict_problem(&best, &a, &g))
            .find(|p| violates(p));
        match smaller {
            Some(p) => best = p,
            None => return best,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Finding {
    pub trial: usize,
    pub family: Family,
    pub property: Property,
    pub violation: Violation,
    /// Shrunken problem that still violates the property.
    pub problem: Problem,
}

#[derive(Clone, Debug, Default)]
pub struct FuzzSummary {
    pub trials: usize,
    /// Trials that hit the state cap or another solver error.
    pub errors: Vec<(usize, String)>,
    pub findings: Vec<Finding>,
}

pub fn run_fuzz(config: &FuzzConfig) -> FuzzSummary {
    let outcomes: Vec<(Vec<Finding>, Option<String>)> = (0..config.trials)
        .into_par_iter()
        .map(|t| {
            let (family, problem) = trial_problem(config, t);
            let mut findings = Vec::new();
            for &property in &config.properties {
                match check_property(&problem, property, config.complete, config.cap) {
                    Ok(None) => {}
                    Ok(Some(_)) => {
                        let small = if config.shrink {
                            shrink(&problem, property, config.complete, config.cap)
                        } else {
                            problem.clone()
                        };
                        let violation =
                            check_property(&small, property, config.complete, config.cap)
                                .ok()
                                .flatten()
                                .expect("shrinking preserves the violation");
                        findings.push(Finding {
                            trial: t,
                            family,
                            property,
                            violation,
                            problem: small,
                        });
                    }
                    Err(e) => return (findings, Some(e.to_string())),
                }
            }
            (findings, None)
        })
        .collect();
    let mut summary = FuzzSummary {
        trials: config.trials,
        ..FuzzSummary::default()
    };
    for (t, (findings, error)) in outcomes.into_iter().enumerate() {
        summary.findings.extend(findings);
        if let Some(e) = error {
            summary.errors.push((t, e));
        }
    }
    summary
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible() {
        let config = FuzzConfig {
            families: Family::ALL.to_vec(),
            ..FuzzConfig::default()
        };
        for t in 0..40 {
            let (fa, a) = trial_problem(&config, t);
            let (fb, b) = trial_problem(&config, t);
            assert_eq!(fa, fb);
            assert_eq!(a, b);
        }
    }

    #[test]
    fn complete_generators_admit_complete_allocations() {
        for family in [
            Family::Partition,
            Family::Laminar,
            Family::Uniform,
            Family::PartitionLb,
            Family::Balanced,
        ] {
            for t in 0..30 {
                let mut rng = trial_rng(11, t);
                let p = random_problem(&mut rng, family, 2, 5, false, true);
                let all =
                    enumerate_feasible(&p.instance, &p.constraint, true, DEFAULT_CAP).unwrap();
                assert!(!all.is_empty(), "{} trial {}", family, t);
            }
        }
    }

    #[test]
    fn exact_ef1_findings_shrink_and_replay() {
        let config = FuzzConfig {
            seed: 3,
            trials: 60,
            families: vec![Family::Partition],
            properties: vec![Property::Ef1Exact],
            ..FuzzConfig::default()
        };
        let summary = run_fuzz(&config);
        for f in &summary.findings {
            assert!(f.problem.instance.good_count() <= 6);
            assert!(check_property(&f.problem, f.property, false, DEFAULT_CAP)
                .unwrap()
                .is_some());
        }
    }

    #[test]
    fn names_round_trip() {
        for f in Family::ALL {
            assert_eq!(f.name().parse::<Family>().unwrap(), f);
        }
        for p in Property::ALL {
            assert_eq!(p.name().parse::<Property>().unwrap(), p);
        }
    }
}
