use num_traits::Zero;

use super::{Category, Constraint, FeasibilitySet};
use crate::error::{Error, Result};
use crate::instance::{Bundle, Instance};
use crate::rational::Rational;

/// Pads the ground set with worthless goods until it holds `n * rank` goods.
///
/// The extended family keeps a set independent iff its original part is independent
/// and its size stays within the rank.
pub fn free_extend(fs: &FeasibilitySet, instance: &Instance) -> Result<(FeasibilitySet, Instance)> {
    let rank = fs.rank()?;
    let n = instance.agent_count();
    let m = instance.good_count();
    let target = n * rank;
    if target <= m {
        return Ok((fs.clone(), instance.clone()));
    }
    let extra = target - m;
    if target > crate::instance::MAX_GOODS {
        return Err(Error::TooManyGoods {
            max: crate::instance::MAX_GOODS,
            got: target,
        });
    }
    let mut goods = instance.goods().to_vec();
    let mut k = 0;
    while goods.len() < target {
        k += 1;
        let id = format!("dummy{}", k);
        if instance.good_index(&id).is_none() {
            goods.push(id);
        }
    }
    let valuations = instance
        .valuations()
        .iter()
        .map(|row| {
            let mut row = row.clone();
            row.resize(target, Rational::zero());
            row
        })
        .collect();
    let mut supplies = instance.supplies().to_vec();
    supplies.resize(target, 1);
    let extended = Instance::with_supplies(goods, valuations, supplies)?;
    let dummies = Bundle::full(target).minus(Bundle::full(m));
    debug_assert_eq!(dummies.len(), extra);
    let everything = Category::upper(Bundle::full(target), rank as u32);
    let constraint = match fs.constraint() {
        Constraint::Free | Constraint::Uniform { .. } => Constraint::Uniform { rank },
        Constraint::Partition { categories }
        | Constraint::Laminar { categories }
        | Constraint::Copies { categories } => {
            let mut categories = categories.clone();
            categories.push(everything);
            Constraint::Laminar { categories }
        }
        Constraint::Graphic { .. } => Constraint::Extended {
            base: Box::new(fs.constraint().clone()),
            dummies,
            rank,
        },
        Constraint::Extended {
            base, dummies: old, ..
        } => Constraint::Extended {
            base: base.clone(),
            dummies: old.union(dummies),
            rank,
        },
        _ => unreachable!("rank() rejects non-matroidal constraints"),
    };
    let fs = FeasibilitySet::new(constraint, &extended)?;
    Ok((fs, extended))
}

/// Exchange bijection between two bases: `pairs` maps each good of `S` to one of `T`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Bijection {
    pub pairs: Vec<(usize, usize)>,
}

impl Bijection {
    pub fn image(&self, g: usize) -> Option<usize> {
        self.pairs.iter().find(|p| p.0 == g).map(|p| p.1)
    }

    /// Double-exchange check: `S - g + f(g)` and `T - f(g) + g` are both independent.
    pub fn verify(&self, fs: &FeasibilitySet, s: Bundle, t: Bundle) -> Result<bool> {
        let domain: Bundle = self.pairs.iter().map(|p| p.0).collect();
        let range: Bundle = self.pairs.iter().map(|p| p.1).collect();
        if domain != s || range != t || self.pairs.len() != s.len() {
            return Ok(false);
        }
        for &(g, f) in &self.pairs {
            if !fs.is_independent(s.without(g).with(f))?
                || !fs.is_independent(t.without(f).with(g))?
            {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

pub fn base_orderable_bijection(fs: &FeasibilitySet, s: Bundle, t: Bundle) -> Result<Bijection> {
    let categories: Vec<Category> = match fs.constraint() {
        Constraint::Free | Constraint::Uniform { .. } => Vec::new(),
        Constraint::Partition { categories }
        | Constraint::Copies { categories }
        | Constraint::Laminar { categories } => categories.clone(),
        other => return Err(Error::UnsupportedConstraint(other.name().to_string())),
    };
    let rank = fs.rank()?;
    let is_basis = |b: Bundle| -> Result<bool> { Ok(b.len() == rank && fs.is_independent(b)?) };
    if !is_basis(s)? || !is_basis(t)? {
        return Err(Error::NotBases);
    }
    let mut pairs: Vec<(usize, usize)> = s.intersect(t).iter().map(|g| (g, g)).collect();
    let only_s = s.minus(t);
    let only_t = t.minus(s);

    // Laminar tree: parent = smallest strictly larger category containing it.
    let mut order: Vec<usize> = (0..categories.len()).collect();
    order.sort_by_key(|&c| (categories[c].goods.len(), c));
    let deepest = |g: usize| {
        order
            .iter()
            .copied()
            .find(|&c| categories[c].goods.contains(g))
    };
    let parent_of = |c: usize| {
        order.iter().copied().find(|&d| {
            d != c
                && categories[c].goods.is_subset(categories[d].goods)
                && (categories[d].goods != categories[c].goods || d > c)
        })
    };
    // Leftovers per node; index `categories.len()` is the root.
    let root = categories.len();
    let mut left_s: Vec<Vec<usize>> = vec![Vec::new(); root + 1];
    let mut left_t: Vec<Vec<usize>> = vec![Vec::new(); root + 1];
    for g in only_s.iter() {
        left_s[deepest(g).unwrap_or(root)].push(g);
    }
    for g in only_t.iter() {
        left_t[deepest(g).unwrap_or(root)].push(g);
    }
    for node in order.iter().copied().chain(std::iter::once(root)) {
        let mut a = std::mem::take(&mut left_s[node]);
        let mut b = std::mem::take(&mut left_t[node]);
        a.sort_unstable();
        b.sort_unstable();
        let k = a.len().min(b.len());
        pairs.extend(a.iter().copied().zip(b.iter().copied()).take(k));
        if node == root {
            if a.len() != b.len() {
                return Err(Error::NotBases);
            }
            break;
        }
        let up = parent_of(node).unwrap_or(root);
        left_s[up].extend_from_slice(&a[k..]);
        left_t[up].extend_from_slice(&b[k..]);
    }
    pairs.sort_unstable();
    Ok(Bijection { pairs })
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Partition matroids whose complete allocations jointly cover the lower-bounded family.
pub fn lower_bound_worlds(fs: &FeasibilitySet, cap: u64) -> Result<Vec<FeasibilitySet>> {
    let n = fs.agent_count();
    let m = fs.good_count();
    let categories: Vec<Category> = match fs.constraint() {
        Constraint::PartitionLb { categories } => categories.clone(),
        Constraint::Balanced => {
            let (lo, hi) = fs.balanced_bounds();
            vec![Category::new(Bundle::full(m), lo as u32, hi as u32)]
        }
        other => return Err(Error::UnsupportedConstraint(other.name().to_string())),
    };
    let count = categories
        .iter()
        .map(|c| binomial(c.goods.len(), n * c.lower as usize))
        .fold(1u128, |a, b| a.saturating_mul(b));
    if count > cap as u128 {
        return Err(Error::ExplosionGuard { cap });
    }
    let choices: Vec<Vec<Bundle>> = categories
        .iter()
        .map(|c| subsets_of_size(c.goods, n * c.lower as usize))
        .collect();
    let mut worlds = Vec::with_capacity(count as usize);
    let mut pick = vec![0usize; categories.len()];
    loop {
        let mut cats = Vec::with_capacity(2 * categories.len());
        for (c, cat) in categories.iter().enumerate() {
            let q = choices[c][pick[c]];
            cats.push(Category::upper(q, cat.lower));
            cats.push(Category::upper(cat.goods.minus(q), cat.upper - cat.lower));
        }
        worlds.push(fs.with_constraint(Constraint::Partition { categories: cats }, m));
        let mut k = 0;
        while k < pick.len() {
            pick[k] += 1;
            if pick[k] < choices[k].len() {
                break;
            }
            pick[k] = 0;
            k += 1;
        }
        if k == pick.len() {
            break;
        }
    }
    Ok(worlds)
}

fn subsets_of_size(set: Bundle, size: usize) -> Vec<Bundle> {
    let items: Vec<usize> = set.iter().collect();
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(size);
    fn rec(
        items: &[usize],
        start: usize,
        size: usize,
        current: &mut Vec<usize>,
        out: &mut Vec<Bundle>,
    ) {
        if current.len() == size {
            out.push(current.iter().copied().collect());
            return;
        }
        for k in start..items.len() {
            if items.len() - k < size - current.len() {
                break;
            }
            current.push(items[k]);
            rec(items, k + 1, size, current, out);
            current.pop();
        }
    }
    rec(&items, 0, size, &mut current, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::rational::int;

    fn b(ids: &[usize]) -> Bundle {
        Bundle::from_indices(ids.iter().copied())
    }

    #[test]
    fn example1_laminar_bijection() {
        let p = fixtures::example1();
        let s = b(&[0, 1, 4, 5]);
        let t = b(&[2, 3, 6, 7]);
        let f = base_orderable_bijection(&p.constraint, s, t).unwrap();
        assert_eq!(f.image(0), Some(2));
        assert_eq!(f.image(1), Some(3));
        assert_eq!(f.image(4), Some(6));
        assert_eq!(f.image(5), Some(7));
        assert!(f.verify(&p.constraint, s, t).unwrap());
    }

    #[test]
    fn partition_bijection_respects_categories() {
        let inst = Instance::from_values(vec![vec![int(1); 4]; 2]).unwrap();
        let cats = vec![
            Category::upper(b(&[0, 1]), 1),
            Category::upper(b(&[2, 3]), 1),
        ];
        let fs = FeasibilitySet::new(Constraint::Partition { categories: cats }, &inst).unwrap();
        let f = base_orderable_bijection(&fs, b(&[0, 2]), b(&[1, 3])).unwrap();
        assert_eq!(f.pairs, vec![(0, 1), (2, 3)]);
        let id = base_orderable_bijection(&fs, b(&[0, 2]), b(&[0, 2])).unwrap();
        assert_eq!(id.pairs, vec![(0, 0), (2, 2)]);
        assert!(matches!(
            base_orderable_bijection(&fs, b(&[0]), b(&[1, 3])),
            Err(Error::NotBases)
        ));
    }

    #[test]
    fn graphic_bijection_is_unsupported() {
        let inst = Instance::from_values(vec![vec![int(1); 3]]).unwrap();
        let fs = FeasibilitySet::new(
            Constraint::Graphic {
                edges: vec![(0, 1), (1, 2), (2, 0)],
            },
            &inst,
        )
        .unwrap();
        assert!(matches!(
            base_orderable_bijection(&fs, b(&[0, 1]), b(&[1, 2])),
            Err(Error::UnsupportedConstraint(_))
        ));
    }

    #[test]
    fn free_extension_counts() {
        let inst = Instance::from_values(vec![vec![int(1); 7]; 2]).unwrap();
        let fs = FeasibilitySet::new(Constraint::Uniform { rank: 4 }, &inst).unwrap();
        let (fs2, inst2) = free_extend(&fs, &inst).unwrap();
        assert_eq!(inst2.good_count(), 8);
        assert_eq!(fs2.rank().unwrap(), 4);

        let p = fixtures::example1();
        let (fs3, inst3) = free_extend(&p.constraint, &p.instance).unwrap();
        assert_eq!(inst3, p.instance);
        assert_eq!(fs3, p.constraint);
    }

    #[test]
    fn world_counts() {
        let inst = Instance::from_values(vec![vec![int(1); 4]; 2]).unwrap();
        let bal = FeasibilitySet::new(Constraint::Balanced, &inst).unwrap();
        let worlds = lower_bound_worlds(&bal, 1000).unwrap();
        assert_eq!(worlds.len(), 1);
        assert_eq!(
            worlds[0].categories(),
            &[
                Category::upper(b(&[0, 1, 2, 3]), 2),
                Category::upper(Bundle::EMPTY, 0)
            ]
        );
        let lb = Constraint::PartitionLb {
            categories: vec![Category::new(b(&[0, 1, 2, 3]), 1, 2)],
        };
        let fs = FeasibilitySet::new(lb, &inst).unwrap();
        assert_eq!(lower_bound_worlds(&fs, 1000).unwrap().len(), 6);
        assert!(matches!(
            lower_bound_worlds(&fs, 5),
            Err(Error::ExplosionGuard { .. })
        ));
        let zero = Constraint::PartitionLb {
            categories: vec![Category::new(b(&[0, 1, 2, 3]), 0, 2)],
        };
        let fs0 = FeasibilitySet::new(zero, &inst).unwrap();
        let w = lower_bound_worlds(&fs0, 10).unwrap();
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].categories()[1], Category::upper(b(&[0, 1, 2, 3]), 2));
    }
}
