//! Contraction multi-indices for products of multiple Wiener-Itô integrals.
//!
//! A product of `n` integrals of order `q` expands into a sum over multi-indices
//! `α = (α_ij)_{i<j}` where `α_ij` counts the variables contracted between factor
//! `i` and factor `j`. Every factor can give away at most `q` variables. The
//! remaining `β⁰_k` free legs of factor `k` add up to the order `m = nq − 2|α|`
//! of the resulting integral, and the multiplicity of each index is the
//! integer `C_α = q!ⁿ / (∏ β⁰_k! ∏ α_ij!)`.

use num_bigint::BigUint;
use num_traits::{One, Zero};
use serde::Serialize;

use crate::error::{Error, Result};

/// A multi-index `α ∈ A_{n,q}`.
///
/// Entries are stored flat in the order `(1,2), (1,3), …, (1,n), (2,3), …`,
/// which is also the order used for the lexicographic enumeration.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct ContractionIndex {
    n: usize,
    q: u32,
    entries: Vec<u32>,
}

/// `C_α` together with the index it belongs to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChaosCoefficient {
    pub value: BigUint,
    pub index: ContractionIndex,
}

/// Free legs per factor, their running sums and the resulting chaos order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FreeLegProfile {
    pub free: Vec<u32>,
    pub cumulative: Vec<u32>,
    pub order: u32,
}

fn pair_count(n: usize) -> usize {
    n * (n - 1) / 2
}

/// Position of pair `(i, j)`, `i < j`, zero-based, in the flat entry vector.
fn pair_slot(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < n);
    i * n - i * (i + 1) / 2 + (j - i - 1)
}

fn pairs(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n).flat_map(move |i| (i + 1..n).map(move |j| (i, j)))
}

impl ContractionIndex {
    /// Builds an index from its flat entry vector, checking membership in `A_{n,q}`.
    pub fn new(n: usize, q: u32, entries: Vec<u32>) -> Result<Self> {
        if n == 0 || q == 0 {
            return Err(Error::invalid("n and q must be at least 1"));
        }
        if entries.len() != pair_count(n) {
            return Err(Error::invalid(format!(
                "expected {} entries for n = {n}, got {}",
                pair_count(n),
                entries.len()
            )));
        }
        let index = ContractionIndex { n, q, entries };
        for k in 0..n {
            if index.contracted_legs(k) > q {
                return Err(Error::invalid(format!(
                    "factor {} contracts more than q = {q} variables",
                    k + 1
                )));
            }
        }
        Ok(index)
    }

    /// The index with no contraction at all.
    pub fn zero(n: usize, q: u32) -> Result<Self> {
        Self::new(n, q, vec![0; pair_count(n.max(1))])
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn q(&self) -> u32 {
        self.q
    }

    pub fn entries(&self) -> &[u32] {
        &self.entries
    }

    /// `α_ij` for zero-based `i != j`.
    pub fn get(&self, i: usize, j: usize) -> u32 {
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        self.entries[pair_slot(self.n, a, b)]
    }

    /// `(i, j, α_ij)` for every pair with `i < j`, zero-based.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize, u32)> + '_ {
        pairs(self.n).zip(self.entries.iter()).map(|((i, j), &a)| (i, j, a))
    }

    pub fn total(&self) -> u32 {
        self.entries.iter().sum()
    }

    /// `m(α) = nq − 2|α|`.
    pub fn order(&self) -> u32 {
        self.n as u32 * self.q - 2 * self.total()
    }

    fn contracted_legs(&self, k: usize) -> u32 {
        (0..self.n).filter(|&j| j != k).map(|j| self.get(k, j)).sum()
    }

    /// `β⁰_k`, the number of variables of factor `k` left uncontracted.
    pub fn free_legs(&self) -> Vec<u32> {
        (0..self.n).map(|k| self.q - self.contracted_legs(k)).collect()
    }
}

/// Lists `A_{n,q}` (or the slice of it with `m(α) = order`) in lexicographic order.
pub fn enumerate_indices(n: usize, q: u32, order: Option<u32>) -> Result<Vec<ContractionIndex>> {
    if n == 0 || q == 0 {
        return Err(Error::invalid("n and q must be at least 1"));
    }
    let nq = n as u32 * q;
    let target_total = match order {
        Some(m) if m > nq => {
            return Err(Error::invalid(format!("order {m} exceeds nq = {nq}")));
        }
        Some(m) if !(nq - m).is_multiple_of(2) => {
            return Err(Error::invalid(format!(
                "order {m} has the wrong parity: nq = {nq}, so the set is empty"
            )));
        }
        Some(m) => Some((nq - m) / 2),
        None => None,
    };

    let slots: Vec<(usize, usize)> = pairs(n).collect();
    let mut out = Vec::new();
    let mut entries = vec![0u32; slots.len()];
    let mut row_sums = vec![0u32; n];
    descend(
        0,
        0,
        &slots,
        q,
        target_total,
        &mut entries,
        &mut row_sums,
        &mut |e| {
            out.push(ContractionIndex {
                n,
                q,
                entries: e.to_vec(),
            })
        },
    );
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn descend(
    slot: usize,
    total: u32,
    slots: &[(usize, usize)],
    q: u32,
    target_total: Option<u32>,
    entries: &mut [u32],
    row_sums: &mut [u32],
    emit: &mut dyn FnMut(&[u32]),
) {
    if let Some(t) = target_total {
        if total > t {
            return;
        }
        // Remaining capacity cannot reach the target.
        let remaining: u32 = slots[slot..]
            .iter()
            .map(|&(i, j)| (q - row_sums[i]).min(q - row_sums[j]))
            .sum();
        if total + remaining < t {
            return;
        }
    }
    if slot == slots.len() {
        if target_total.is_none_or(|t| t == total) {
            emit(entries);
        }
        return;
    }
    let (i, j) = slots[slot];
    let cap = (q - row_sums[i]).min(q - row_sums[j]);
    for a in 0..=cap {
        entries[slot] = a;
        row_sums[i] += a;
        row_sums[j] += a;
        descend(slot + 1, total + a, slots, q, target_total, entries, row_sums, emit);
        row_sums[i] -= a;
        row_sums[j] -= a;
    }
    entries[slot] = 0;
}

fn factorial(k: u32) -> BigUint {
    (1..=k).fold(BigUint::one(), |acc, v| acc * v)
}

/// Exact `C_α`.
pub fn coefficient(index: &ContractionIndex) -> ChaosCoefficient {
    let numerator = factorial(index.q).pow(index.n as u32);
    let denominator = index
        .free_legs()
        .into_iter()
        .chain(index.entries.iter().copied())
        .fold(BigUint::one(), |acc, k| acc * factorial(k));
    debug_assert!((&numerator % &denominator).is_zero());
    ChaosCoefficient {
        value: numerator / denominator,
        index: index.clone(),
    }
}

pub fn free_leg_profile(index: &ContractionIndex) -> FreeLegProfile {
    let free = index.free_legs();
    let cumulative = free
        .iter()
        .scan(0u32, |acc, &b| {
            *acc += b;
            Some(*acc)
        })
        .collect();
    FreeLegProfile {
        free,
        cumulative,
        order: index.order(),
    }
}

/// `E[G^n]` for a standard Gaussian, computed as the sum of `C_α` over the
/// fully contracted indices of `A_{n,1}`.
pub fn gaussian_moment(n: usize) -> Result<BigUint> {
    if n < 2 || !n.is_multiple_of(2) {
        return Err(Error::invalid(format!(
            "gaussian_moment needs an even n >= 2, got {n}"
        )));
    }
    Ok(enumerate_indices(n, 1, Some(0))?
        .iter()
        .map(|a| coefficient(a).value)
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binom(n: u32, k: u32) -> BigUint {
        factorial(n) / (factorial(k) * factorial(n - k))
    }

    /// Every vector of the box `[0, q]^{n(n-1)/2}` that satisfies the row constraint.
    fn brute_force(n: usize, q: u32) -> Vec<Vec<u32>> {
        let len = pair_count(n);
        let mut out = Vec::new();
        let total = (q as usize + 1).pow(len as u32);
        for code in 0..total {
            let mut c = code;
            let mut v = vec![0u32; len];
            for slot in v.iter_mut().rev() {
                *slot = (c % (q as usize + 1)) as u32;
                c /= q as usize + 1;
            }
            let ok = (0..n).all(|k| {
                pairs(n)
                    .zip(&v)
                    .filter(|((i, j), _)| *i == k || *j == k)
                    .map(|(_, a)| *a)
                    .sum::<u32>()
                    <= q
            });
            if ok {
                out.push(v);
            }
        }
        out
    }

    #[test]
    fn small_enumerations() {
        let two_two = enumerate_indices(2, 2, None).unwrap();
        assert_eq!(
            two_two.iter().map(|a| a.entries().to_vec()).collect::<Vec<_>>(),
            vec![vec![0], vec![1], vec![2]]
        );
        let three_one = enumerate_indices(3, 1, None).unwrap();
        assert_eq!(three_one.len(), 4);
        let full = enumerate_indices(2, 2, Some(0)).unwrap();
        assert_eq!(full.len(), 1);
        assert_eq!(full[0].entries(), &[2]);
    }

    #[test]
    fn enumeration_matches_brute_force() {
        for n in 1..=5 {
            for q in 1..=4 {
                let fast: Vec<Vec<u32>> = enumerate_indices(n, q, None)
                    .unwrap()
                    .into_iter()
                    .map(|a| a.entries)
                    .collect();
                // brute force walks the box in lexicographic order too
                assert_eq!(fast, brute_force(n, q), "n={n} q={q}");
            }
        }
    }

    #[test]
    fn order_filter_is_a_slice() {
        for n in 2..=4 {
            for q in 1..=3 {
                let all = enumerate_indices(n, q, None).unwrap();
                let nq = n as u32 * q;
                for m in (nq % 2..=nq).step_by(2) {
                    let filtered = enumerate_indices(n, q, Some(m)).unwrap();
                    let expected: Vec<_> =
                        all.iter().filter(|a| a.order() == m).cloned().collect();
                    assert_eq!(filtered, expected);
                }
            }
        }
    }

    #[test]
    fn parity_of_full_contraction() {
        for n in 1..=5 {
            for q in 1..=4 {
                let nq = n as u32 * q;
                let res = enumerate_indices(n, q, Some(0));
                if nq % 2 == 1 {
                    assert!(res.is_err());
                } else {
                    assert!(!res.unwrap().is_empty() || n == 1);
                }
            }
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(enumerate_indices(0, 2, None).is_err());
        assert!(enumerate_indices(2, 0, None).is_err());
        assert!(enumerate_indices(2, 2, Some(1)).is_err());
        assert!(enumerate_indices(2, 2, Some(6)).is_err());
        assert!(ContractionIndex::new(3, 1, vec![1, 1, 0]).is_err());
        assert!(ContractionIndex::new(3, 1, vec![1, 0]).is_err());
    }

    #[test]
    fn two_factor_product_formula() {
        for q in 1..=8u32 {
            for r in 0..=q {
                let a = ContractionIndex::new(2, q, vec![r]).unwrap();
                let expected = factorial(r) * binom(q, r) * binom(q, r);
                assert_eq!(coefficient(&a).value, expected, "q={q} r={r}");
            }
        }
        let c = |r| coefficient(&ContractionIndex::new(2, 2, vec![r]).unwrap()).value;
        assert_eq!(c(0), BigUint::from(1u32));
        assert_eq!(c(1), BigUint::from(4u32));
        assert_eq!(c(2), BigUint::from(2u32));
    }

    #[test]
    fn free_legs_examples() {
        let p = free_leg_profile(&ContractionIndex::new(2, 2, vec![1]).unwrap());
        assert_eq!(p.free, vec![1, 1]);
        assert_eq!(p.cumulative, vec![1, 2]);
        assert_eq!(p.order, 2);

        let p = free_leg_profile(&ContractionIndex::new(2, 3, vec![3]).unwrap());
        assert_eq!(p.free, vec![0, 0]);
        assert_eq!(p.cumulative, vec![0, 0]);
        assert_eq!(p.order, 0);

        let p = free_leg_profile(&ContractionIndex::new(3, 2, vec![1, 1, 1]).unwrap());
        assert_eq!(p.free, vec![0, 0, 0]);
        assert_eq!(p.order, 0);
    }

    #[test]
    fn free_legs_sum_to_order() {
        for n in 1..=5 {
            for q in 1..=4 {
                for a in enumerate_indices(n, q, None).unwrap() {
                    let p = free_leg_profile(&a);
                    assert_eq!(p.free.iter().sum::<u32>(), p.order);
                    assert!(2 * a.total() <= n as u32 * q);
                }
            }
        }
    }

    #[test]
    fn gaussian_moments_are_double_factorials() {
        let double_factorial = |n: u64| (1..n).step_by(2).product::<u64>();
        for n in [2usize, 4, 6, 8, 10] {
            assert_eq!(
                gaussian_moment(n).unwrap(),
                BigUint::from(double_factorial(n as u64)),
                "n={n}"
            );
        }
        assert_eq!(gaussian_moment(4).unwrap(), BigUint::from(3u32));
        assert_eq!(gaussian_moment(8).unwrap(), BigUint::from(105u32));
        assert!(gaussian_moment(3).is_err());
        assert!(gaussian_moment(0).is_err());
    }

    #[test]
    fn chaos_expansion_of_gaussian_power() {
        // For q = 1 the expansion of G^n is sum_k n!/(k!(n-k)!!...) He_k; in
        // particular sum over all α of C_α with order m gives the coefficient of
        // the Wick power :G^m:, i.e. binom(n, m)·(n-m-1)!!.
        let double_factorial = |n: i64| (1..n).step_by(2).product::<i64>().max(1);
        for n in 2..=7usize {
            for m in (n % 2..=n).step_by(2) {
                let s: BigUint = enumerate_indices(n, 1, Some(m as u32))
                    .unwrap()
                    .iter()
                    .map(|a| coefficient(a).value)
                    .sum();
                let b = binom(n as u32, m as u32);
                let expected = b * BigUint::from(double_factorial((n - m) as i64) as u64);
                assert_eq!(s, expected, "n={n} m={m}");
            }
        }
    }
}
