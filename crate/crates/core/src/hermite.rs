//! Exact Hermite-basis algebra for polynomial functionals and the regime they fall into.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};

/// Polynomial with exact rational coefficients in the power basis.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Polynomial {
    coeffs: Vec<BigRational>,
}

fn rat(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

/// Exact rational from a decimal or fraction literal such as `-3`, `0.25`, `1e-3` or `7/4`.
pub fn parse_rational(text: &str) -> Result<BigRational> {
    let t = text.trim();
    if let Some((num, den)) = t.split_once('/') {
        let num = BigInt::from_str(num.trim())
            .map_err(|_| Error::invalid(format!("bad numerator in {t:?}")))?;
        let den = BigInt::from_str(den.trim())
            .map_err(|_| Error::invalid(format!("bad denominator in {t:?}")))?;
        if den.is_zero() {
            return Err(Error::invalid(format!("zero denominator in {t:?}")));
        }
        return Ok(BigRational::new(num, den));
    }
    let (mantissa, exponent) = match t.find(['e', 'E']) {
        Some(pos) => (
            &t[..pos],
            t[pos + 1..]
                .parse::<i32>()
                .map_err(|_| Error::invalid(format!("bad exponent in {t:?}")))?,
        ),
        None => (t, 0),
    };
    let (int_part, frac_part) = mantissa.split_once('.').unwrap_or((mantissa, ""));
    let negative = int_part.starts_with('-');
    let digits = format!("{}{}", int_part.trim_start_matches(['-', '+']), frac_part);
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return Err(Error::invalid(format!("not a number: {t:?}")));
    }
    let mut value = BigRational::from_integer(BigInt::from_str(&digits).unwrap());
    let scale = exponent - frac_part.len() as i32;
    let ten = rat(10);
    if scale >= 0 {
        value *= num_traits::pow(ten, scale as usize);
    } else {
        value /= num_traits::pow(ten, (-scale) as usize);
    }
    Ok(if negative { -value } else { value })
}

/// The rational with the shortest decimal expansion that round-trips to `x`.
pub fn rational_from_f64(x: f64) -> Result<BigRational> {
    if !x.is_finite() {
        return Err(Error::invalid(format!("non-finite value {x}")));
    }
    parse_rational(&format!("{x:e}"))
}

pub fn rational_to_f64(x: &BigRational) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

pub(crate) fn serialize_rational<S: Serializer>(x: &BigRational, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&x.to_string())
}

impl Polynomial {
    pub fn new(mut coeffs: Vec<BigRational>) -> Self {
        while coeffs.last().is_some_and(Zero::is_zero) {
            coeffs.pop();
        }
        Polynomial { coeffs }
    }

    pub fn zero() -> Self {
        Polynomial { coeffs: Vec::new() }
    }

    pub fn from_i64(coeffs: &[i64]) -> Self {
        Self::new(coeffs.iter().map(|&c| rat(c)).collect())
    }

    /// `x^k`.
    pub fn monomial(k: usize) -> Self {
        let mut c = vec![BigRational::zero(); k + 1];
        c[k] = BigRational::one();
        Self::new(c)
    }

    /// Parses a comma- or whitespace-separated coefficient list `a0, a1, ...`.
    pub fn parse(text: &str) -> Result<Self> {
        let coeffs = text
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(parse_rational)
            .collect::<Result<Vec<_>>>()?;
        if coeffs.is_empty() {
            return Err(Error::invalid("empty coefficient list"));
        }
        Ok(Self::new(coeffs))
    }

    pub fn coeffs(&self) -> &[BigRational] {
        &self.coeffs
    }

    /// Degree; the zero polynomial reports 0.
    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn is_constant(&self) -> bool {
        self.coeffs.len() <= 1
    }

    pub fn coeff(&self, k: usize) -> BigRational {
        self.coeffs.get(k).cloned().unwrap_or_else(BigRational::zero)
    }

    pub fn scale(&self, c: &BigRational) -> Self {
        Self::new(self.coeffs.iter().map(|a| a * c).collect())
    }

    fn add_scaled(&mut self, other: &Polynomial, c: &BigRational) {
        if self.coeffs.len() < other.coeffs.len() {
            self.coeffs.resize(other.coeffs.len(), BigRational::zero());
        }
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a += b * c;
        }
        *self = Self::new(std::mem::take(&mut self.coeffs));
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.coeffs.iter().map(rational_to_f64).collect()
    }

    pub fn eval(&self, x: &BigRational) -> BigRational {
        self.coeffs
            .iter()
            .rev()
            .fold(BigRational::zero(), |acc, a| acc * x + a)
    }

    /// `E[P(G)]` for `G ~ N(0, variance)`, from the moments `σ^{2j}(2j−1)!!`.
    pub fn gaussian_mean(&self, variance: &BigRational) -> BigRational {
        let mut moment = BigRational::one();
        let mut total = BigRational::zero();
        for (k, a) in self.coeffs.iter().enumerate() {
            if k % 2 == 1 {
                continue;
            }
            if k > 0 {
                moment = moment * variance * rat(k as i64 - 1);
            }
            total += a * &moment;
        }
        total
    }

    /// True if some odd power has a nonzero coefficient.
    pub fn has_odd_term(&self) -> bool {
        self.coeffs.iter().enumerate().any(|(k, a)| k % 2 == 1 && !a.is_zero())
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.coeffs.is_empty() {
            return write!(f, "0");
        }
        let parts: Vec<String> = self.coeffs.iter().map(|c| c.to_string()).collect();
        write!(f, "[{}]", parts.join(", "))
    }
}

impl Serialize for Polynomial {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let v: Vec<String> = self.coeffs.iter().map(|c| c.to_string()).collect();
        v.serialize(s)
    }
}

/// `P = mean_term + Σ_{k≥1} b_k H_k^σ` with `H_k^σ` orthogonal for `N(0, σ²)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HermiteExpansion {
    #[serde(serialize_with = "serialize_rational")]
    pub variance: BigRational,
    #[serde(serialize_with = "serialize_rational")]
    pub mean_term: BigRational,
    #[serde(serialize_with = "serialize_coeff_map")]
    pub coeffs: BTreeMap<usize, BigRational>,
    pub rank: Option<usize>,
}

fn serialize_coeff_map<S: Serializer>(
    m: &BTreeMap<usize, BigRational>,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    let as_strings: BTreeMap<String, String> =
        m.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
    as_strings.serialize(s)
}

fn check_variance(variance: &BigRational) -> Result<()> {
    if !variance.is_positive() {
        return Err(Error::invalid(format!("variance must be positive, got {variance}")));
    }
    Ok(())
}

/// Probabilists' Hermite polynomial of degree `k` for a Gaussian of the given variance.
pub fn hermite_polynomial(k: usize, variance: &BigRational) -> Result<Polynomial> {
    check_variance(variance)?;
    let mut prev = Polynomial::from_i64(&[1]);
    if k == 0 {
        return Ok(prev);
    }
    let mut cur = Polynomial::from_i64(&[0, 1]);
    for j in 1..k {
        // H_{j+1} = x H_j − σ² j H_{j−1}
        let mut shifted = Vec::with_capacity(cur.coeffs.len() + 1);
        shifted.push(BigRational::zero());
        shifted.extend(cur.coeffs.iter().cloned());
        let mut next = Polynomial::new(shifted);
        next.add_scaled(&prev, &-(variance * rat(j as i64)));
        prev = std::mem::replace(&mut cur, next);
    }
    Ok(cur)
}

/// Rewrites `p` in the Hermite basis of `N(0, variance)`.
pub fn expand(p: &Polynomial, variance: &BigRational) -> Result<HermiteExpansion> {
    check_variance(variance)?;
    let mut rest = p.clone();
    let mut coeffs = BTreeMap::new();
    // H_k is monic, so peeling off the leading term is a triangular solve.
    for k in (1..=p.degree()).rev() {
        let lead = rest.coeff(k);
        if lead.is_zero() {
            continue;
        }
        rest.add_scaled(&hermite_polynomial(k, variance)?, &-lead.clone());
        coeffs.insert(k, lead);
    }
    let mean_term = rest.coeff(0);
    let rank = coeffs.keys().next().copied();
    Ok(HermiteExpansion {
        variance: variance.clone(),
        mean_term,
        coeffs,
        rank,
    })
}

impl HermiteExpansion {
    /// Power-basis form of the expansion.
    pub fn reconstruct(&self) -> Result<Polynomial> {
        let mut p = Polynomial::new(vec![self.mean_term.clone()]);
        for (&k, b) in &self.coeffs {
            p.add_scaled(&hermite_polynomial(k, &self.variance)?, b);
        }
        Ok(p)
    }
}

pub fn centered_rank(p: &Polynomial, variance: &BigRational) -> Result<usize> {
    if p.is_constant() {
        return Err(Error::RankUndefined);
    }
    expand(p, variance)?.rank.ok_or(Error::RankUndefined)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RegimeFamily {
    Brownian,
    Fbm,
    HermiteD,
    Rosenblatt,
}

/// Limit regime of `S_T(t) = ∫_0^{Tt} (P(X_s) − E P(X_s)) ds`.
///
/// `T^{normalization_exponent} · S_T` converges to the limit family.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegimeLabel {
    pub family: RegimeFamily,
    #[serde(serialize_with = "serialize_rational")]
    pub normalization_exponent: BigRational,
    #[serde(serialize_with = "serialize_opt_rational")]
    pub limit_hurst: Option<BigRational>,
    pub rank_used: usize,
}

fn serialize_opt_rational<S: Serializer>(
    x: &Option<BigRational>,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    x.as_ref().map(|v| v.to_string()).serialize(s)
}

impl RegimeLabel {
    /// Growth exponent of `Var S_T(1)` in `T`, i.e. `−2e`.
    pub fn variance_slope(&self) -> BigRational {
        -(&self.normalization_exponent * rat(2))
    }

    /// Hurst index used when checking self-similarity of the limit.
    pub fn limit_hurst_or_half(&self) -> BigRational {
        self.limit_hurst
            .clone()
            .unwrap_or_else(|| BigRational::new(BigInt::from(1), BigInt::from(2)))
    }
}

/// `H_0 = 1 − (1 − H)/q`.
pub fn h0_exact(q: u32, h: &BigRational) -> BigRational {
    BigRational::one() - (BigRational::one() - h) / rat(q as i64)
}

/// Decides the limit regime for a polynomial functional of an order-`q` moving average.
///
/// `variance` is `Var X(0)`; the centered rank is taken with respect to `N(0, variance)`.
pub fn classify_regime(
    q: u32,
    h: &BigRational,
    p: &Polynomial,
    variance: &BigRational,
) -> Result<RegimeLabel> {
    let half = BigRational::new(BigInt::from(1), BigInt::from(2));
    if q == 0 {
        return Err(Error::invalid("q must be at least 1"));
    }
    if *h <= half || *h >= BigRational::one() {
        return Err(Error::invalid(format!("H must lie in (1/2, 1), got {h}")));
    }
    let d = centered_rank(p, variance)?;
    let one = BigRational::one();
    if q == 1 {
        let threshold = &one - BigRational::new(BigInt::from(1), BigInt::from(2 * d as i64));
        if *h == threshold {
            return Err(Error::CriticalCase { d });
        }
        if *h < threshold {
            return Ok(RegimeLabel {
                family: RegimeFamily::Brownian,
                normalization_exponent: -half,
                limit_hurst: None,
                rank_used: d,
            });
        }
        let gap = rat(d as i64) * (&one - h);
        return Ok(RegimeLabel {
            family: RegimeFamily::HermiteD,
            normalization_exponent: &gap - &one,
            limit_hurst: Some(&one - &gap),
            rank_used: d,
        });
    }
    let h0 = h0_exact(q, h);
    if q % 2 == 1 && p.has_odd_term() {
        Ok(RegimeLabel {
            family: RegimeFamily::Fbm,
            normalization_exponent: -h0.clone(),
            limit_hurst: Some(h0),
            rank_used: d,
        })
    } else {
        let two_h0 = &h0 * rat(2);
        Ok(RegimeLabel {
            family: RegimeFamily::Rosenblatt,
            normalization_exponent: &one - &two_h0,
            limit_hurst: Some(two_h0 - one),
            rank_used: d,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn r(s: &str) -> BigRational {
        parse_rational(s).unwrap()
    }

    fn factorial(k: usize) -> BigRational {
        rat((1..=k as i64).product::<i64>().max(1))
    }

    /// `E[Q(G)]` for a polynomial `Q`, via the moment sequence.
    fn expectation(q: &Polynomial, var: &BigRational) -> BigRational {
        q.gaussian_mean(var)
    }

    fn mul(a: &Polynomial, b: &Polynomial) -> Polynomial {
        if a.is_zero() || b.is_zero() {
            return Polynomial::zero();
        }
        let mut c = vec![BigRational::zero(); a.coeffs.len() + b.coeffs.len() - 1];
        for (i, x) in a.coeffs.iter().enumerate() {
            for (j, y) in b.coeffs.iter().enumerate() {
                c[i + j] += x * y;
            }
        }
        Polynomial::new(c)
    }

    #[test]
    fn parses_literals() {
        assert_eq!(r("7/4"), BigRational::new(7.into(), 4.into()));
        assert_eq!(r("-0.25"), BigRational::new((-1).into(), 4.into()));
        assert_eq!(r("1e-3"), BigRational::new(1.into(), 1000.into()));
        assert_eq!(r("2.5E2"), rat(250));
        assert!(parse_rational("abc").is_err());
        assert!(parse_rational("1/0").is_err());
        assert_eq!(rational_from_f64(0.8).unwrap(), r("4/5"));
        assert_eq!(rational_from_f64(0.55).unwrap(), r("11/20"));
    }

    #[test]
    fn hermite_examples() {
        let one = rat(1);
        assert_eq!(hermite_polynomial(2, &one).unwrap(), Polynomial::from_i64(&[-1, 0, 1]));
        assert_eq!(hermite_polynomial(3, &one).unwrap(), Polynomial::from_i64(&[0, -3, 0, 1]));
        assert_eq!(hermite_polynomial(2, &rat(4)).unwrap(), Polynomial::from_i64(&[-4, 0, 1]));
        assert_eq!(hermite_polynomial(0, &one).unwrap(), Polynomial::from_i64(&[1]));
        assert!(hermite_polynomial(2, &rat(0)).is_err());
        assert!(hermite_polynomial(2, &rat(-1)).is_err());
    }

    #[test]
    fn expansion_examples() {
        let one = rat(1);
        let e = expand(&Polynomial::monomial(2), &one).unwrap();
        assert_eq!(e.mean_term, one);
        assert_eq!(e.coeffs, BTreeMap::from([(2, rat(1))]));
        assert_eq!(e.rank, Some(2));

        let e = expand(&Polynomial::monomial(3), &one).unwrap();
        assert_eq!(e.coeffs, BTreeMap::from([(1, rat(3)), (3, rat(1))]));
        assert_eq!(e.rank, Some(1));

        for v in ["1/4", "1", "9"] {
            let e = expand(&Polynomial::monomial(1), &r(v)).unwrap();
            assert!(e.mean_term.is_zero());
            assert_eq!(e.coeffs, BTreeMap::from([(1, rat(1))]));
        }
        assert!(expand(&Polynomial::monomial(1), &rat(0)).is_err());
    }

    #[test]
    fn rank_examples() {
        let one = rat(1);
        assert_eq!(centered_rank(&Polynomial::monomial(4), &one).unwrap(), 2);
        assert_eq!(centered_rank(&Polynomial::from_i64(&[0, -3, 0, 1]), &one).unwrap(), 3);
        assert_eq!(centered_rank(&Polynomial::monomial(2), &one).unwrap(), 2);
        assert_eq!(centered_rank(&Polynomial::monomial(3), &one).unwrap(), 1);
        assert!(matches!(
            centered_rank(&Polynomial::from_i64(&[5]), &one),
            Err(Error::RankUndefined)
        ));
        // x^4 = 3 + 6 H_2 + H_4
        let e = expand(&Polynomial::monomial(4), &one).unwrap();
        assert_eq!(e.mean_term, rat(3));
        assert_eq!(e.coeffs, BTreeMap::from([(2, rat(6)), (4, rat(1))]));
    }

    #[test]
    fn rank_depends_on_variance() {
        // x^3 - 3x is H_3 for unit variance but has a linear part otherwise.
        let p = Polynomial::from_i64(&[0, -3, 0, 1]);
        assert_eq!(centered_rank(&p, &rat(1)).unwrap(), 3);
        assert_eq!(centered_rank(&p, &rat(2)).unwrap(), 1);
    }

    #[test]
    fn orthogonality_by_moments() {
        for var in [r("1/4"), rat(1), rat(9)] {
            let hs: Vec<Polynomial> =
                (0..=6).map(|k| hermite_polynomial(k, &var).unwrap()).collect();
            for k in 0..=6 {
                for l in 0..=6 {
                    let e = expectation(&mul(&hs[k], &hs[l]), &var);
                    if k == l {
                        let expected = factorial(k) * num_traits::pow(var.clone(), k);
                        assert_eq!(e, expected, "k={k}");
                    } else {
                        assert!(e.is_zero(), "k={k} l={l}");
                    }
                }
            }
        }
    }

    #[test]
    fn regime_examples() {
        let one = rat(1);
        let rl = classify_regime(2, &r("0.8"), &Polynomial::monomial(2), &one).unwrap();
        assert_eq!(rl.family, RegimeFamily::Rosenblatt);
        assert_eq!(rl.normalization_exponent, r("-4/5"));
        assert_eq!(rl.limit_hurst, Some(r("4/5")));
        assert_eq!(rl.variance_slope(), r("8/5"));

        let rl = classify_regime(3, &r("0.8"), &Polynomial::from_i64(&[0, 1, 0, 1]), &one).unwrap();
        assert_eq!(rl.family, RegimeFamily::Fbm);
        assert_eq!(rl.normalization_exponent, r("-14/15"));
        assert_eq!(rl.variance_slope(), r("28/15"));

        let rl = classify_regime(1, &r("0.6"), &Polynomial::monomial(2), &one).unwrap();
        assert_eq!(rl.family, RegimeFamily::Brownian);
        assert_eq!(rl.normalization_exponent, r("-1/2"));
        assert_eq!(rl.limit_hurst, None);

        let rl = classify_regime(1, &r("0.9"), &Polynomial::monomial(2), &one).unwrap();
        assert_eq!(rl.family, RegimeFamily::HermiteD);
        assert_eq!(rl.limit_hurst, Some(r("4/5")));
        assert_eq!(rl.variance_slope(), r("8/5"));

        // d = 1 always lands in the Hermite branch with a Gaussian limit.
        let rl = classify_regime(1, &r("0.6"), &Polynomial::monomial(1), &one).unwrap();
        assert_eq!(rl.family, RegimeFamily::HermiteD);
        assert_eq!(rl.limit_hurst, Some(r("0.6")));

        // q even: always Rosenblatt, also for odd polynomials.
        let rl = classify_regime(2, &r("0.8"), &Polynomial::monomial(3), &one).unwrap();
        assert_eq!(rl.family, RegimeFamily::Rosenblatt);
        // q odd with even polynomial
        let rl = classify_regime(3, &r("0.8"), &Polynomial::monomial(4), &one).unwrap();
        assert_eq!(rl.family, RegimeFamily::Rosenblatt);
    }

    #[test]
    fn regime_errors() {
        let one = rat(1);
        assert!(matches!(
            classify_regime(1, &r("0.75"), &Polynomial::monomial(2), &one),
            Err(Error::CriticalCase { d: 2 })
        ));
        assert!(classify_regime(2, &r("0.5"), &Polynomial::monomial(2), &one).is_err());
        assert!(classify_regime(2, &r("1"), &Polynomial::monomial(2), &one).is_err());
        assert!(classify_regime(2, &r("0.8"), &Polynomial::from_i64(&[3]), &one).is_err());
    }

    fn arb_poly() -> impl Strategy<Value = Polynomial> {
        prop::collection::vec((-20i64..=20, 1i64..=7), 1..=9).prop_map(|v| {
            Polynomial::new(
                v.into_iter()
                    .map(|(n, d)| BigRational::new(n.into(), d.into()))
                    .collect(),
            )
        })
    }

    fn arb_variance() -> impl Strategy<Value = BigRational> {
        prop_oneof![Just(r("1/4")), Just(rat(1)), Just(rat(9))]
    }

    proptest! {
        #[test]
        fn round_trip_is_exact(p in arb_poly(), var in arb_variance()) {
            let e = expand(&p, &var).unwrap();
            prop_assert_eq!(e.reconstruct().unwrap(), p.clone());
            prop_assert_eq!(e.mean_term.clone(), p.gaussian_mean(&var));
            prop_assert!(e.coeffs.keys().all(|&k| k >= 1 && k <= p.degree()));
        }

        #[test]
        fn rank_is_scale_invariant(p in arb_poly(), var in arb_variance(), c in (-9i64..=9).prop_filter("nonzero", |c| *c != 0)) {
            prop_assume!(!p.is_constant());
            let scaled = p.scale(&rat(c));
            prop_assert_eq!(centered_rank(&p, &var).unwrap(), centered_rank(&scaled, &var).unwrap());
        }

        #[test]
        fn q_ge_2_regime_depends_on_parity_only(
            p in arb_poly(),
            q in 2u32..=5,
            bump in 1i64..=5,
        ) {
            prop_assume!(!p.is_constant());
            let h = r("0.8");
            let one = rat(1);
            let base = classify_regime(q, &h, &p, &one).unwrap();
            // Changing the size of existing nonzero coefficients keeps the parity pattern.
            let mutated = Polynomial::new(
                p.coeffs().iter().map(|a| if a.is_zero() { a.clone() } else { a * rat(bump) + a }).collect(),
            );
            let other = classify_regime(q, &h, &mutated, &one).unwrap();
            prop_assert_eq!(base.family, other.family);
            prop_assert_eq!(base.normalization_exponent, other.normalization_exponent);
        }
    }
}
