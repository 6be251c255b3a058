//! Finiteness of `∫_{ℝⁿ} ∏ |f_i(M_i x)| dx` for power-like `f_i` by power counting over spans,
//! the Hardy-Littlewood-Sobolev admissibility report, and a numerical divergence oracle.

use std::collections::{BTreeSet, HashSet, VecDeque};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::Serialize;

use crate::combinatorics::ContractionIndex;
use crate::error::{Error, Result};
use crate::hermite::{rational_to_f64, serialize_rational};
use crate::quadrature::gauss_legendre;

pub const MAX_FUNCTIONALS: usize = 24;

fn rat(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

/// `f_i(t)` behaves like `|t|^{μ_i}` for `|t| ≤ a_i` and like `|t|^{ν_i}` for `|t| ≥ b_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerCountingProblem {
    pub dimension: usize,
    pub functionals: Vec<Vec<BigRational>>,
    /// `(μ_i, ν_i)`.
    pub exponents: Vec<(BigRational, BigRational)>,
    /// `(a_i, b_i)`, defaulting to `(1, 1)`.
    pub bounds: Vec<(BigRational, BigRational)>,
}

impl PowerCountingProblem {
    pub fn new(
        dimension: usize,
        functionals: Vec<Vec<BigRational>>,
        exponents: Vec<(BigRational, BigRational)>,
    ) -> Result<Self> {
        let k = functionals.len();
        let p = PowerCountingProblem {
            dimension,
            functionals,
            exponents,
            bounds: vec![(rat(1), rat(1)); k],
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_bounds(mut self, bounds: Vec<(BigRational, BigRational)>) -> Result<Self> {
        self.bounds = bounds;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.functionals.len();
        if self.dimension == 0 {
            return Err(Error::invalid("dimension must be positive"));
        }
        if k == 0 {
            return Err(Error::invalid("need at least one functional"));
        }
        if k > MAX_FUNCTIONALS {
            return Err(Error::invalid(format!(
                "{k} functionals exceed the supported maximum of {MAX_FUNCTIONALS}"
            )));
        }
        if self.exponents.len() != k || self.bounds.len() != k {
            return Err(Error::invalid("functionals, exponents and bounds must have equal length"));
        }
        for (i, m) in self.functionals.iter().enumerate() {
            if m.len() != self.dimension {
                return Err(Error::invalid(format!("functional {i} has {} coordinates, expected {}", m.len(), self.dimension)));
            }
            if m.iter().all(Zero::is_zero) {
                return Err(Error::invalid(format!("functional {i} is zero")));
            }
        }
        for (i, (a, b)) in self.bounds.iter().enumerate() {
            if !a.is_positive() || a > b {
                return Err(Error::invalid(format!("bounds of functional {i} must satisfy 0 < a <= b")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.functionals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functionals.is_empty()
    }
}

/// Reduced row-echelon basis of a row space; two spans are equal iff their forms are equal.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct Rref(Vec<Vec<BigRational>>);

impl Rref {
    fn empty() -> Self {
        Rref(Vec::new())
    }

    fn dim(&self) -> usize {
        self.0.len()
    }

    /// Residual of `v` after elimination against the basis.
    fn reduce(&self, v: &[BigRational]) -> Vec<BigRational> {
        let mut r = v.to_vec();
        for row in &self.0 {
            let pivot = row.iter().position(|x| !x.is_zero()).unwrap();
            if !r[pivot].is_zero() {
                let f = r[pivot].clone();
                for (a, b) in r.iter_mut().zip(row) {
                    *a -= &f * b;
                }
            }
        }
        r
    }

    fn contains(&self, v: &[BigRational]) -> bool {
        self.reduce(v).iter().all(Zero::is_zero)
    }

    fn extended(&self, v: &[BigRational]) -> Option<Rref> {
        let mut r = self.reduce(v);
        let pivot = r.iter().position(|x| !x.is_zero())?;
        let inv = r[pivot].recip();
        for x in r.iter_mut() {
            *x *= &inv;
        }
        let mut rows: Vec<Vec<BigRational>> = self
            .0
            .iter()
            .map(|row| {
                if row[pivot].is_zero() {
                    row.clone()
                } else {
                    let f = row[pivot].clone();
                    row.iter().zip(&r).map(|(a, b)| a - &f * b).collect()
                }
            })
            .collect();
        rows.push(r);
        rows.sort_by_key(|row| row.iter().position(|x| !x.is_zero()).unwrap());
        Some(Rref(rows))
    }
}

pub fn rank(vectors: &[Vec<BigRational>]) -> usize {
    let mut b = Rref::empty();
    for v in vectors {
        if let Some(next) = b.extended(v) {
            b = next;
        }
    }
    b.dim()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Finiteness {
    Yes,
    ConditionsViolated,
    HypothesisFailed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum Condition {
    /// `d₀(W) > 0`.
    #[serde(rename = "a")]
    NearZero,
    /// `d∞(W) < 0`.
    #[serde(rename = "b")]
    NearInfinity,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    pub condition: Condition,
    /// Indices into the problem's functionals, a basis of the offending span.
    pub subset: Vec<usize>,
    pub span_dim: usize,
    /// `d₀(W)` or `d∞(W)`.
    #[serde(serialize_with = "serialize_rational")]
    pub value: BigRational,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CountingVerdict {
    pub finite: Finiteness,
    pub witness: Option<Witness>,
    pub subsets_examined: usize,
    pub span_rank: usize,
    /// Whether only condition (a) was checked (integral over `[-1, 1]ⁿ`).
    pub bounded_domain: bool,
}

struct Flat {
    rref: Rref,
    members: Vec<usize>,
}

/// Every distinct span of a subset of the functionals, the empty span first.
fn enumerate_flats(p: &PowerCountingProblem) -> Vec<Flat> {
    let members_of = |r: &Rref| -> Vec<usize> {
        (0..p.len()).filter(|&i| r.contains(&p.functionals[i])).collect()
    };
    let mut seen: HashSet<Rref> = HashSet::new();
    let mut out = Vec::new();
    let mut queue = VecDeque::new();
    let start = Rref::empty();
    seen.insert(start.clone());
    queue.push_back(start);
    while let Some(r) = queue.pop_front() {
        let members = members_of(&r);
        for i in 0..p.len() {
            if members.binary_search(&i).is_ok() {
                continue;
            }
            let next = r.extended(&p.functionals[i]).expect("non-member extends the span");
            if seen.insert(next.clone()) {
                queue.push_back(next);
            }
        }
        out.push(Flat { rref: r, members });
    }
    out
}

/// Lexicographically first basis of a flat drawn from its member functionals.
fn greedy_basis(p: &PowerCountingProblem, members: &[usize]) -> Vec<usize> {
    let mut basis = Rref::empty();
    let mut chosen = Vec::new();
    for &i in members {
        if let Some(next) = basis.extended(&p.functionals[i]) {
            basis = next;
            chosen.push(i);
        }
    }
    chosen
}

fn d0(p: &PowerCountingProblem, dim: usize, members: &[usize]) -> BigRational {
    members.iter().fold(rat(dim as i64), |acc, &i| acc + &p.exponents[i].0)
}

fn dinf(p: &PowerCountingProblem, dim: usize, members: &[usize]) -> BigRational {
    let inside: BTreeSet<usize> = members.iter().copied().collect();
    (0..p.len())
        .filter(|i| !inside.contains(i))
        .fold(rat((p.dimension - dim) as i64), |acc, i| acc + &p.exponents[i].1)
}

fn check(p: &PowerCountingProblem, bounded: bool) -> Result<CountingVerdict> {
    p.validate()?;
    let span_rank = rank(&p.functionals);
    if span_rank < p.dimension {
        return Ok(CountingVerdict {
            finite: Finiteness::HypothesisFailed,
            witness: None,
            subsets_examined: 0,
            span_rank,
            bounded_domain: bounded,
        });
    }
    let flats = enumerate_flats(p);
    let mut worst: Option<Witness> = None;
    let mut consider = |w: Witness| {
        let better = match &worst {
            None => true,
            Some(cur) => (&w.subset, w.condition) < (&cur.subset, cur.condition),
        };
        if better {
            worst = Some(w);
        }
    };
    for f in &flats {
        let dim = f.rref.dim();
        if dim > 0 {
            let v = d0(p, dim, &f.members);
            if !v.is_positive() {
                consider(Witness {
                    condition: Condition::NearZero,
                    subset: greedy_basis(p, &f.members),
                    span_dim: dim,
                    value: v,
                });
            }
        }
        if !bounded && dim < p.dimension {
            let v = dinf(p, dim, &f.members);
            if !v.is_negative() {
                consider(Witness {
                    condition: Condition::NearInfinity,
                    subset: greedy_basis(p, &f.members),
                    span_dim: dim,
                    value: v,
                });
            }
        }
    }
    Ok(CountingVerdict {
        finite: if worst.is_some() { Finiteness::ConditionsViolated } else { Finiteness::Yes },
        witness: worst,
        subsets_examined: flats.len(),
        span_rank,
        bounded_domain: bounded,
    })
}

/// Conditions (a) and (b) of the power counting theorem, checked span by span.
pub fn check_integrability(p: &PowerCountingProblem) -> Result<CountingVerdict> {
    check(p, false)
}

/// Condition (a) only: decides finiteness over `[-1, 1]ⁿ` when the `f_i` are exact powers near 0.
pub fn check_integrability_bounded(p: &PowerCountingProblem) -> Result<CountingVerdict> {
    check(p, true)
}

/// The integrability system controlling the vanishing of higher-order terms for a contraction `α`.
///
/// Variables are `(w_1..w_n, w'_1..w'_n, ξ)`; the `w` factors carry `(0, −L)`, pair differences
/// carry `(2H₀−2)α_ij` at both ends and `ξ − w_k + w'_k` carries `(2H₀−2)β⁰_k`.
pub fn contraction_problem(alpha: &ContractionIndex, h: &BigRational, l: &BigRational) -> Result<PowerCountingProblem> {
    let n = alpha.n();
    let q = alpha.q();
    let dim = 2 * n + 1;
    let unit = |i: usize| -> Vec<BigRational> {
        let mut v = vec![BigRational::zero(); dim];
        v[i] = BigRational::one();
        v
    };
    let slope = rat(2) * (crate::hermite::h0_exact(q, h) - BigRational::one());
    let mut functionals = Vec::new();
    let mut exponents = Vec::new();
    for k in 0..2 * n {
        functionals.push(unit(k));
        exponents.push((BigRational::zero(), -l.clone()));
    }
    for offset in [0, n] {
        for (i, j, a) in alpha.pairs() {
            let mut v = vec![BigRational::zero(); dim];
            v[offset + i] = rat(1);
            v[offset + j] = rat(-1);
            let e = &slope * rat(a as i64);
            functionals.push(v);
            exponents.push((e.clone(), e));
        }
    }
    let profile = crate::combinatorics::free_leg_profile(alpha);
    for k in 0..n {
        let mut v = vec![BigRational::zero(); dim];
        v[2 * n] = rat(1);
        v[k] = rat(-1);
        v[n + k] = rat(1);
        let e = &slope * rat(profile.free[k] as i64);
        functionals.push(v);
        exponents.push((e.clone(), e));
    }
    PowerCountingProblem::new(dim, functionals, exponents)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HlsReport {
    pub admissible: bool,
    /// `α ≡ 0`: no singular factors, plain `L¹`.
    pub trivial: bool,
    #[serde(serialize_with = "serialize_rational")]
    pub p: BigRational,
    pub p_value: f64,
    #[serde(serialize_with = "serialize_rational")]
    pub inverse_h: BigRational,
    #[serde(serialize_with = "serialize_rationals")]
    pub gammas: Vec<BigRational>,
    #[serde(serialize_with = "serialize_rational")]
    pub gamma_sum: BigRational,
    /// `n(1 − 1/p)`, the value the exponents must sum to for scale invariance.
    #[serde(serialize_with = "serialize_rational")]
    pub required_sum: BigRational,
    pub p_in_range: bool,
    pub gammas_in_range: bool,
    pub sum_matches: bool,
    pub p_below_inverse_h: bool,
    /// `p = 1/H` exactly.
    pub boundary: bool,
    pub violations: Vec<String>,
}

fn serialize_rationals<S: serde::Serializer>(v: &[BigRational], s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::Serialize as _;
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().serialize(s)
}

/// Hypotheses of the multilinear Hardy-Littlewood-Sobolev bound for `K_{x,α,H₀}`.
pub fn hls_admissible(h: &BigRational, alpha: &ContractionIndex) -> Result<HlsReport> {
    let half = BigRational::new(1.into(), 2.into());
    if *h <= half || *h >= BigRational::one() {
        return Err(Error::invalid(format!("H must lie in (1/2, 1), got {h}")));
    }
    let n = alpha.n();
    let q = alpha.q();
    let one = BigRational::one();
    let total = rat(alpha.total() as i64);
    let nq = rat((n * q as usize) as i64);
    let p = (&one - (&one - h) * rat(2) * &total / &nq).recip();
    let inverse_h = h.recip();
    let slope = rat(2) * (&one - h) / rat(q as i64);
    let gammas: Vec<BigRational> = alpha.entries().iter().map(|&a| &slope * rat(a as i64)).collect();
    let gamma_sum = gammas.iter().fold(BigRational::zero(), |a, g| a + g);
    let required_sum = rat(n as i64) * (&one - p.recip());
    let trivial = alpha.total() == 0;
    let p_in_range = trivial || (p > one && p < rat(n as i64));
    let gammas_in_range = gammas.iter().all(|g| !g.is_negative() && *g < one);
    let sum_matches = gamma_sum == required_sum;
    let p_below_inverse_h = p < inverse_h;
    let boundary = p == inverse_h;
    let mut violations = Vec::new();
    if !p_in_range {
        violations.push(format!("p = {p} not in (1, {n})"));
    }
    if !gammas_in_range {
        violations.push("some gamma_ij outside [0, 1)".to_string());
    }
    if !sum_matches {
        violations.push(format!("sum of gamma_ij = {gamma_sum} differs from n(1 - 1/p) = {required_sum}"));
    }
    if !p_below_inverse_h {
        violations.push(format!("p = {p} is not below 1/H = {inverse_h}"));
    }
    Ok(HlsReport {
        admissible: violations.is_empty(),
        trivial,
        p_value: rational_to_f64(&p),
        p,
        inverse_h,
        gammas,
        gamma_sum,
        required_sum,
        p_in_range,
        gammas_in_range,
        sum_matches,
        p_below_inverse_h,
        boundary,
        violations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum OracleVerdict {
    Convergent,
    Divergent,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub verdict: OracleVerdict,
    /// Integral over the shell between consecutive exhaustion domains.
    pub increments: Vec<f64>,
    pub ratios: Vec<f64>,
}

/// Exhaustion schedule and decision thresholds of the divergence oracle.
#[derive(Debug, Clone, Copy)]
pub struct OracleSettings {
    pub levels: usize,
    pub scale: f64,
    pub r0: f64,
    pub eps0: f64,
    /// Increments shrinking at least this fast mean convergence.
    pub growth_threshold: f64,
    /// Increment ratios at or above this mean divergence.
    pub divergence_ratio: f64,
    pub angular_refinement: usize,
}

impl Default for OracleSettings {
    fn default() -> Self {
        OracleSettings {
            levels: 4,
            scale: 1024.0,
            r0: 16.0,
            eps0: 1.0 / 16.0,
            growth_threshold: 1.5,
            divergence_ratio: 0.9,
            angular_refinement: 48,
        }
    }
}

/// One factor `f(t)`, a piecewise power of `|t|` with breakpoints `a ≤ b`.
#[derive(Clone, Copy)]
struct PiecewisePower {
    mu: f64,
    nu: f64,
    a: f64,
    b: f64,
}

impl PiecewisePower {
    /// `(coefficient, exponent)` of `f(t) = coef·|t|^exp` on the piece containing `|t|`.
    fn piece(&self, t: f64) -> (f64, f64) {
        if t < self.a {
            (1.0, self.mu)
        } else if t <= self.b {
            (self.a.powf(self.mu), 0.0)
        } else {
            (self.a.powf(self.mu) * self.b.powf(-self.nu), self.nu)
        }
    }
}

/// `∫_lo^hi c·r^p dr`.
fn power_integral(c: f64, p: f64, lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        return 0.0;
    }
    if (p + 1.0).abs() < 1e-14 {
        c * (hi / lo).ln()
    } else {
        c * (hi.powf(p + 1.0) - lo.powf(p + 1.0)) / (p + 1.0)
    }
}

/// `∫_lo^hi r^{n−1} ∏ f_i(r·c_i) dr` along one direction, evaluated piece by piece.
fn radial(factors: &[PiecewisePower], coeffs: &[f64], jac: f64, lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        return 0.0;
    }
    let mut cuts = vec![lo, hi];
    for (f, &c) in factors.iter().zip(coeffs) {
        for t in [f.a, f.b] {
            let r = t / c;
            if r > lo && r < hi {
                cuts.push(r);
            }
        }
    }
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut total = 0.0;
    for w in cuts.windows(2) {
        let mid = 0.5 * (w[0] + w[1]);
        let mut coef = 1.0;
        let mut pow = jac;
        for (f, &c) in factors.iter().zip(coeffs) {
            let (k, e) = f.piece(mid * c);
            coef *= k * c.powf(e);
            pow += e;
        }
        total += power_integral(coef, pow, w[0], w[1]);
    }
    total
}

fn oracle_factors(p: &PowerCountingProblem) -> Vec<PiecewisePower> {
    p.exponents
        .iter()
        .zip(&p.bounds)
        .map(|((mu, nu), (a, b))| PiecewisePower {
            mu: rational_to_f64(mu),
            nu: rational_to_f64(nu),
            a: rational_to_f64(a),
            b: rational_to_f64(b),
        })
        .collect()
}

/// Shell integrals `I_{ℓ+1} − I_ℓ` along one direction whose functional values are `coeffs`.
fn shell_increments(
    factors: &[PiecewisePower],
    coeffs: &[f64],
    jac: f64,
    radii: &[(f64, f64)],
) -> Vec<f64> {
    // Domain at level ℓ along this ray: r ∈ [max_i ε_ℓ/|c_i|, R_ℓ].
    let cmin = coeffs.iter().fold(f64::INFINITY, |a, &c| a.min(c));
    if cmin <= 0.0 {
        return vec![0.0; radii.len() - 1];
    }
    radii
        .windows(2)
        .map(|w| {
            let (eps0, r0) = w[0];
            let (eps1, r1) = w[1];
            let (l0, h0) = (eps0 / cmin, r0);
            let (l1, h1) = (eps1 / cmin, r1);
            if l0 < h0 {
                radial(factors, coeffs, jac, l1, l0.min(h1)) + radial(factors, coeffs, jac, h0.max(l1), h1)
            } else {
                radial(factors, coeffs, jac, l1, h1)
            }
        })
        .collect()
}

/// Classifies `∫_{ℝⁿ} ∏ f_i(M_i x) dx` for `n ≤ 2` from the growth of integrals over
/// `{|x| ≤ R_ℓ, |M_i x| ≥ ε_ℓ}` as `R_ℓ → ∞`, `ε_ℓ → 0`.
pub fn divergence_oracle(p: &PowerCountingProblem, settings: OracleSettings) -> Result<OracleReport> {
    p.validate()?;
    if p.dimension > 2 {
        return Err(Error::invalid("the divergence oracle handles dimension 1 or 2"));
    }
    if settings.levels < 4 {
        return Err(Error::invalid("need at least 4 refinement levels"));
    }
    let factors = oracle_factors(p);
    let radii: Vec<(f64, f64)> = (0..settings.levels)
        .map(|l| {
            let s = settings.scale.powi(l as i32);
            (settings.eps0 / s, settings.r0 * s)
        })
        .collect();
    let m: Vec<Vec<f64>> = p
        .functionals
        .iter()
        .map(|v| v.iter().map(rational_to_f64).collect())
        .collect();
    let mut increments = vec![0.0; settings.levels - 1];
    if p.dimension == 1 {
        for sign in [1.0, -1.0] {
            let coeffs: Vec<f64> = m.iter().map(|v| (sign * v[0]).abs()).collect();
            for (acc, v) in increments.iter_mut().zip(shell_increments(&factors, &coeffs, 0.0, &radii)) {
                *acc += v;
            }
        }
    } else {
        // Directions where some functional vanishes bound the angular pieces.
        let mut cuts: Vec<f64> = vec![0.0, std::f64::consts::TAU];
        for v in &m {
            let base = (-v[0]).atan2(v[1]);
            for k in -2..=2 {
                let t = base + k as f64 * std::f64::consts::PI;
                if t > 0.0 && t < std::f64::consts::TAU {
                    cuts.push(t);
                }
            }
        }
        cuts.sort_by(f64::total_cmp);
        cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
        let (gx, gw) = gauss_legendre(8);
        let mut eval = |theta: f64, weight: f64| {
            let (s, c) = theta.sin_cos();
            let coeffs: Vec<f64> = m.iter().map(|v| (v[0] * c + v[1] * s).abs()).collect();
            for (acc, v) in increments.iter_mut().zip(shell_increments(&factors, &coeffs, 1.0, &radii)) {
                *acc += weight * v;
            }
        };
        for w in cuts.windows(2) {
            let (a, b) = (w[0], w[1]);
            let mid = 0.5 * (a + b);
            // Geometric grading toward both ends, where a functional may vanish.
            let mut pieces = Vec::new();
            for (end, dir) in [(a, 1.0), (b, -1.0)] {
                let half = mid - a;
                let mut outer = half;
                for _ in 0..settings.angular_refinement {
                    let inner = outer * 0.5;
                    let (x0, x1) = (end + dir * inner, end + dir * outer);
                    pieces.push((x0.min(x1), x0.max(x1)));
                    outer = inner;
                }
                let last = end + dir * outer;
                pieces.push((end.min(last), end.max(last)));
            }
            for (lo, hi) in pieces {
                let (c, h) = (0.5 * (lo + hi), 0.5 * (hi - lo));
                for (x, wgt) in gx.iter().zip(&gw) {
                    eval(c + h * x, h * wgt);
                }
            }
        }
    }
    let ratios: Vec<f64> = increments.windows(2).map(|w| w[1] / w[0]).collect();
    let finite = ratios.iter().all(|r| r.is_finite());
    let verdict = if !finite || increments.iter().any(|v| !(*v > 0.0)) {
        OracleVerdict::Inconclusive
    } else if ratios.iter().all(|&r| r <= 1.0 / settings.growth_threshold) {
        OracleVerdict::Convergent
    } else if ratios.iter().all(|&r| r >= settings.divergence_ratio) {
        OracleVerdict::Divergent
    } else {
        OracleVerdict::Inconclusive
    };
    Ok(OracleReport { verdict, increments, ratios })
}
