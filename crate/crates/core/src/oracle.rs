//! Exact stratum probabilities and efficiencies.
//!
//! Under perfect ranking the stage-`r` rank-`i` unit is distributed as the
//! `i`-th order statistic of the `m` independent stage-`(r-1)` measured units.
//! For binary data the `i`-th smallest of independent Bernoulli(`q_j`) values
//! is 1 exactly when at least `m - i + 1` of them are 1, so each stage is one
//! Poisson-binomial tail per rank, starting from `m` iid Bernoulli(`p`).
//!
//! Ties among equal responses do not matter here: whichever tied unit the
//! ranker picks, the selected *value* is the same, so the enumerators sort by
//! response alone.
//!
//! Everything is generic over the probability type so the same code runs in
//! `f64` and in exact rationals ([`Rational`]). In `f64` each convolution step
//! is a convex combination of values in `[0, 1]`, so the rounding error grows
//! by at most a few ulps per step (well under 1e-12 for the grids used here).
//!
//! The covariate oracle extends the recursion to ranking by a discrete
//! covariate with random tie-breaking: the rank-`i` unit's covariate level is
//! the `i`-th order statistic of the set's levels, and given its level a unit's
//! response is Bernoulli(share of successes at that level) because selection
//! never looks at responses.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Num, One, ToPrimitive, Zero};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::estimate::{efficiency_report, EfficiencyReport, Provenance};
use crate::model::{check_probability, CovariateOrder};

pub type Rational = BigRational;

/// Probability arithmetic the oracle needs.
pub trait Prob: Clone + Num + PartialOrd + std::fmt::Debug {
    fn to_f64(&self) -> f64;
}

impl Prob for f64 {
    fn to_f64(&self) -> f64 {
        *self
    }
}

impl Prob for BigRational {
    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
}

/// Exact rational from a decimal literal such as `"0.25"` or a ratio `"1/3"`.
pub fn rational(text: &str) -> Result<Rational> {
    let bad = || Error::InvalidParameter(format!("'{text}' is not a decimal or ratio"));
    let t = text.trim();
    if let Some((a, b)) = t.split_once('/') {
        let num: BigInt = a.trim().parse().map_err(|_| bad())?;
        let den: BigInt = b.trim().parse().map_err(|_| bad())?;
        if den.is_zero() {
            return Err(bad());
        }
        return Ok(Rational::new(num, den));
    }
    let (neg, body) = t.strip_prefix('-').map_or((false, t), |s| (true, s));
    let (int, frac) = body.split_once('.').unwrap_or((body, ""));
    if int.is_empty() && frac.is_empty() {
        return Err(bad());
    }
    let digits = format!("{int}{frac}");
    let num: BigInt = if digits.is_empty() { BigInt::zero() } else { digits.parse().map_err(|_| bad())? };
    let den = num_traits::pow(BigInt::from(10), frac.len());
    let r = Rational::new(num, den);
    Ok(if neg { -r } else { r })
}

/// Exact rational for an `f64` that came from a short decimal (e.g. `0.1`).
pub fn rational_from_f64(p: f64) -> Result<Rational> {
    rational(&format!("{p}"))
}

/// Stratum probabilities for one `(p, m, r)` under perfect ranking.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactStrata<T> {
    pub p: T,
    pub m: usize,
    pub r: u32,
    pub probs: Vec<T>,
}

impl<T: Prob> ExactStrata<T> {
    pub fn mean(&self) -> T {
        let sum = self.probs.iter().fold(T::zero(), |acc, q| acc + q.clone());
        sum / from_usize::<T>(self.m)
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.probs.iter().map(Prob::to_f64).collect()
    }

    /// `sum_i p[i](1 - p[i])`.
    pub fn bernoulli_sum(&self) -> T {
        self.probs.iter().fold(T::zero(), |acc, q| acc + q.clone() * (T::one() - q.clone()))
    }

    /// Design variance with `n` cycles.
    pub fn variance(&self, n: usize) -> T {
        self.bernoulli_sum() / from_usize::<T>(n * self.m * self.m)
    }
}

fn from_usize<T: Prob>(k: usize) -> T {
    // repeated doubling keeps this exact for rationals and cheap for f64
    let mut acc = T::zero();
    let mut base = T::one();
    let mut k = k;
    while k > 0 {
        if k & 1 == 1 {
            acc = acc + base.clone();
        }
        base = base.clone() + base;
        k >>= 1;
    }
    acc
}

/// Distribution of the number of successes among independent Bernoulli trials.
pub fn poisson_binomial_pmf<T: Prob>(probs: &[T]) -> Vec<T> {
    let mut pmf = vec![T::zero(); probs.len() + 1];
    pmf[0] = T::one();
    for (t, q) in probs.iter().enumerate() {
        let miss = T::one() - q.clone();
        for k in (1..=t + 1).rev() {
            pmf[k] = pmf[k].clone() * miss.clone() + pmf[k - 1].clone() * q.clone();
        }
        pmf[0] = pmf[0].clone() * miss;
    }
    pmf
}

/// `P(sum of independent Bernoulli(probs) >= k)`; zero when `k > probs.len()`.
pub fn poisson_binomial_tail<T: Prob>(probs: &[T], k: usize) -> T {
    if k == 0 {
        return T::one();
    }
    let pmf = poisson_binomial_pmf(probs);
    clamp_unit(pmf.into_iter().skip(k).fold(T::zero(), |acc, x| acc + x))
}

/// One ranking stage: rank-`i` (0-based) is 1 iff at least `m - i` inputs are 1.
fn next_stage<T: Prob>(prev: &[T]) -> Vec<T> {
    let m = prev.len();
    let pmf = poisson_binomial_pmf(prev);
    // tails[k] = P(S >= k)
    let mut tails = vec![T::zero(); m + 2];
    for k in (0..=m).rev() {
        tails[k] = tails[k + 1].clone() + pmf[k].clone();
    }
    (0..m).map(|i| clamp_unit(tails[m - i].clone())).collect()
}

// rounding can push an f64 sum of probabilities just past 1
fn clamp_unit<T: Prob>(x: T) -> T {
    if x > T::one() {
        T::one()
    } else if x < T::zero() {
        T::zero()
    } else {
        x
    }
}

/// RSS (stage 1) strata: `P(Binomial(m, p) >= m - i + 1)` for 1-based `i`.
pub fn stage1_strata<T: Prob>(p: T, m: usize) -> Result<ExactStrata<T>> {
    msrss_strata(p, m, 1)
}

/// Stage-`r` strata by the Poisson-binomial stage recursion.
pub fn msrss_strata<T: Prob>(p: T, m: usize, r: u32) -> Result<ExactStrata<T>> {
    check_prob_generic(&p)?;
    if m == 0 || r == 0 {
        return Err(Error::InvalidParameter("m and r must be at least 1".into()));
    }
    let mut probs = vec![p.clone(); m];
    for _ in 0..r {
        probs = next_stage(&probs);
    }
    Ok(ExactStrata { p, m, r, probs })
}

fn check_prob_generic<T: Prob>(p: &T) -> Result<()> {
    if *p < T::zero() || *p > T::one() {
        return Err(Error::InvalidParameter(format!("p must lie in [0, 1], got {p:?}")));
    }
    Ok(())
}

/// Exact RE/PSSR under perfect ranking (`n = 1`; both are invariant in `n`).
///
/// At `p = 0` or `p = 1` both variances are zero and the report is flagged
/// degenerate.
pub fn exact_efficiency(p: f64, m: usize, r: u32) -> Result<EfficiencyReport> {
    check_probability("p", p)?;
    let strata = msrss_strata(p, m, r)?;
    let var_srs = p * (1.0 - p) / m as f64;
    let var_design = if p == 0.0 || p == 1.0 { 0.0 } else { strata.variance(1) };
    efficiency_report(var_srs, var_design, None, Provenance::Exact)
}

/// Exact rational variances for `(p, m, r)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactVariances {
    pub var_srs: Rational,
    pub var_design: Rational,
}

impl ExactVariances {
    /// `(1 - var_design / var_srs) * 100`; `None` when `var_srs = 0`.
    pub fn pssr(&self) -> Option<Rational> {
        if self.var_srs.is_zero() {
            return None;
        }
        Some((Rational::one() - &self.var_design / &self.var_srs) * Rational::from_integer(100.into()))
    }

    pub fn re(&self) -> Option<Rational> {
        if self.var_design.is_zero() {
            return None;
        }
        Some(&self.var_srs / &self.var_design)
    }
}

pub fn exact_variances_rational(p: &Rational, m: usize, r: u32) -> Result<ExactVariances> {
    let strata = msrss_strata(p.clone(), m, r)?;
    let mm = Rational::from_integer(BigInt::from(m));
    Ok(ExactVariances { var_srs: p * (Rational::one() - p) / mm, var_design: strata.variance(1) })
}

/// Largest `m^(r+1)` the brute-force enumerator accepts.
pub const BRUTE_FORCE_MAX_UNITS: usize = 20;

fn brute_force_units(m: usize, r: u32) -> Result<usize> {
    if m == 0 || r == 0 {
        return Err(Error::InvalidParameter("m and r must be at least 1".into()));
    }
    stage_units(m, r)
}

// units behind a stage-`r` sample; stage 0 is `m` iid units
fn stage_units(m: usize, r: u32) -> Result<usize> {
    if m == 0 {
        return Err(Error::InvalidParameter("m must be at least 1".into()));
    }
    match m.checked_pow(r + 1) {
        Some(u) if u <= BRUTE_FORCE_MAX_UNITS => Ok(u),
        _ => Err(Error::TooLarge { units: (m as u128).saturating_pow(r + 1), cap: BRUTE_FORCE_MAX_UNITS as u64 }),
    }
}

/// Runs the MSRSS selection on one binary assignment (bit `u` = unit `u`)
/// and returns the `m` measured values.
fn select_binary(mask: u32, m: usize, r: u32, units: usize, buf: &mut Vec<u8>) {
    buf.clear();
    buf.extend((0..units).map(|u| ((mask >> u) & 1) as u8));
    let mut len = units;
    for _ in 0..r {
        let groups = len / m;
        for c in 0..groups {
            let zeros = buf[c * m..(c + 1) * m].iter().filter(|&&v| v == 0).count();
            // rank c % m (0-based) of a sorted binary set is 1 iff it sits past the zeros
            buf[c] = u8::from(c % m >= zeros);
        }
        len = groups;
    }
    buf.truncate(m);
}

/// Tallies over all `2^units` assignments, grouped by the number of ones `k`:
/// how often each measured value, and each pair of sorted values, is 1.
struct Tally {
    units: usize,
    hits: Vec<Vec<u64>>,
    sorted_pairs: Vec<Vec<Vec<u64>>>,
}

impl Tally {
    fn run(m: usize, r: u32) -> Result<Self> {
        let units = stage_units(m, r)?;
        let mut hits = vec![vec![0u64; m]; units + 1];
        let mut sorted_pairs = vec![vec![vec![0u64; m]; m]; units + 1];
        let mut buf = Vec::with_capacity(units);
        for mask in 0..(1u32 << units) {
            let k = mask.count_ones() as usize;
            select_binary(mask, m, r, units, &mut buf);
            for (i, &v) in buf.iter().enumerate() {
                hits[k][i] += u64::from(v);
            }
            let mut sorted = buf.clone();
            sorted.sort_unstable();
            for i in 0..m {
                for j in 0..m {
                    sorted_pairs[k][i][j] += u64::from(sorted[i] & sorted[j]);
                }
            }
        }
        Ok(Self { units, hits, sorted_pairs })
    }

    fn weight<T: Prob>(&self, p: &T, k: usize) -> T {
        let q = T::one() - p.clone();
        let mut w = T::one();
        for _ in 0..k {
            w = w * p.clone();
        }
        for _ in k..self.units {
            w = w * q.clone();
        }
        w
    }

    fn expect<T: Prob>(&self, p: &T, counts: impl Fn(usize) -> u64) -> T {
        (0..=self.units).fold(T::zero(), |acc, k| acc + self.weight(p, k) * from_usize::<T>(counts(k) as usize))
    }
}

/// Exact strata by enumerating every binary assignment of the `m^(r+1)`
/// identified units and running the selection procedure on each.
pub fn brute_force_enumerate<T: Prob>(p: T, m: usize, r: u32) -> Result<ExactStrata<T>> {
    check_prob_generic(&p)?;
    brute_force_units(m, r)?;
    let tally = Tally::run(m, r)?;
    let probs = (0..m).map(|i| tally.expect(&p, |k| tally.hits[k][i])).collect();
    Ok(ExactStrata { p, m, r, probs })
}

/// Means and covariance matrix of the order statistics of the `m` measured
/// values of a stage-`(r-1)` sample (stage 0 being `m` iid units), by full
/// enumeration. The means equal the stage-`r` strata.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderStatMoments<T> {
    pub means: Vec<T>,
    pub cov: Vec<Vec<T>>,
}

pub fn order_statistic_moments<T: Prob>(p: T, m: usize, r: u32) -> Result<OrderStatMoments<T>> {
    check_prob_generic(&p)?;
    if r == 0 {
        return Err(Error::InvalidParameter("r must be at least 1".into()));
    }
    let tally = Tally::run(m, r - 1)?;
    let second: Vec<Vec<T>> =
        (0..m).map(|i| (0..m).map(|j| tally.expect(&p, |k| tally.sorted_pairs[k][i][j])).collect()).collect();
    let means: Vec<T> = (0..m).map(|i| second[i][i].clone()).collect();
    let cov =
        (0..m).map(|i| (0..m).map(|j| second[i][j].clone() - means[i].clone() * means[j].clone()).collect()).collect();
    Ok(OrderStatMoments { means, cov })
}

/// A population summarized by a discrete ranking covariate: level `c` (in
/// ascending covariate order) has probability `weights[c]` and success share
/// `success[c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelPopulation<T> {
    pub levels: Vec<i64>,
    pub weights: Vec<T>,
    pub success: Vec<T>,
}

impl<T: Prob> LevelPopulation<T> {
    pub fn proportion(&self) -> T {
        self.weights.iter().zip(&self.success).fold(T::zero(), |acc, (w, q)| acc + w.clone() * q.clone())
    }

    /// Ranking by the response itself: levels 0 and 1.
    pub fn perfect(p: T) -> Self {
        Self { levels: vec![0, 1], weights: vec![T::one() - p.clone(), p], success: vec![T::zero(), T::one()] }
    }
}

impl LevelPopulation<Rational> {
    /// Exact level weights and success shares of a dataset covariate.
    pub fn from_dataset(ds: &Dataset, covariate: &str) -> Result<Self> {
        Self::from_dataset_ordered(ds, covariate, CovariateOrder::Numeric)
    }

    /// As [`from_dataset`](Self::from_dataset), with levels arranged in `order`.
    pub fn from_dataset_ordered(ds: &Dataset, covariate: &str, order: CovariateOrder) -> Result<Self> {
        let col = ds.covariate(covariate)?;
        let mut levels: Vec<(f64, i64)> = order.keys(col).into_iter().zip(col.iter().copied()).collect();
        levels.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
        levels.dedup_by_key(|l| l.1);
        let n = BigInt::from(ds.n_rows());
        let mut weights = Vec::with_capacity(levels.len());
        let mut success = Vec::with_capacity(levels.len());
        for &(_, lv) in &levels {
            let rows: Vec<usize> = (0..col.len()).filter(|&i| col[i] == lv).collect();
            let ones = rows.iter().filter(|&&i| ds.response()[i] == 1).count();
            weights.push(Rational::new(BigInt::from(rows.len()), n.clone()));
            success.push(Rational::new(BigInt::from(ones), BigInt::from(rows.len())));
        }
        Ok(Self { levels: levels.into_iter().map(|(_, lv)| lv).collect(), weights, success })
    }

    pub fn to_f64(&self) -> LevelPopulation<f64> {
        LevelPopulation {
            levels: self.levels.clone(),
            weights: self.weights.iter().map(Prob::to_f64).collect(),
            success: self.success.iter().map(Prob::to_f64).collect(),
        }
    }
}

fn level_cdf<T: Prob>(pmf: &[T]) -> Vec<T> {
    // cdf[b] = P(level < b), b = 0..=L
    let mut cdf = Vec::with_capacity(pmf.len() + 1);
    let mut acc = T::zero();
    cdf.push(acc.clone());
    for w in pmf {
        acc = acc + w.clone();
        cdf.push(acc.clone());
    }
    cdf
}

fn strata_from_level_pmfs<T: Prob>(pop: &LevelPopulation<T>, pmfs: &[Vec<T>]) -> Vec<T> {
    pmfs.iter()
        .map(|pmf| pmf.iter().zip(&pop.success).fold(T::zero(), |acc, (w, q)| acc + w.clone() * q.clone()))
        .collect()
}

/// Stratum probabilities under covariate ranking with random tie-breaks, by
/// the Poisson-binomial recursion on level CDFs.
pub fn covariate_strata<T: Prob>(pop: &LevelPopulation<T>, m: usize, r: u32) -> Result<Vec<T>> {
    Ok(strata_from_level_pmfs(pop, &covariate_level_pmfs(pop, m, r)?))
}

/// Level distributions of the rank-1..m units after `r` stages.
pub fn covariate_level_pmfs<T: Prob>(pop: &LevelPopulation<T>, m: usize, r: u32) -> Result<Vec<Vec<T>>> {
    if m == 0 || r == 0 {
        return Err(Error::InvalidParameter("m and r must be at least 1".into()));
    }
    let n_levels = pop.weights.len();
    let mut cdfs: Vec<Vec<T>> = vec![level_cdf(&pop.weights); m];
    for _ in 0..r {
        let mut next = vec![vec![T::zero(); n_levels + 1]; m];
        for b in 0..=n_levels {
            let below: Vec<T> = cdfs.iter().map(|c| c[b].clone()).collect();
            let pmf = poisson_binomial_pmf(&below);
            let mut tail = T::zero();
            // P(rank-i level < b) = P(at least i+1 units below b)
            for i in (0..m).rev() {
                tail = tail + pmf[i + 1].clone();
                next[i][b] = clamp_unit(tail.clone());
            }
        }
        cdfs = next;
    }
    Ok(cdfs.iter().map(|c| (0..n_levels).map(|l| c[l + 1].clone() - c[l].clone()).collect()).collect())
}

/// Same quantity by enumerating every tuple of levels within each set and
/// sorting it. Cost `r * L^m` per stage; refuses more than `max_tuples`.
pub fn covariate_strata_enumerated<T: Prob>(
    pop: &LevelPopulation<T>,
    m: usize,
    r: u32,
    max_tuples: u64,
) -> Result<Vec<T>> {
    if m == 0 || r == 0 {
        return Err(Error::InvalidParameter("m and r must be at least 1".into()));
    }
    let n_levels = pop.weights.len();
    let tuples = (n_levels as u64)
        .checked_pow(m as u32)
        .filter(|&t| t <= max_tuples)
        .ok_or(Error::TooLarge { units: (n_levels as u128).saturating_pow(m as u32), cap: max_tuples })?;
    let mut pmfs: Vec<Vec<T>> = vec![pop.weights.clone(); m];
    let mut digits = vec![0usize; m];
    for _ in 0..r {
        let mut next = vec![vec![T::zero(); n_levels]; m];
        for t in 0..tuples {
            let mut rest = t;
            for d in digits.iter_mut() {
                *d = (rest % n_levels as u64) as usize;
                rest /= n_levels as u64;
            }
            let w = digits.iter().enumerate().fold(T::one(), |acc, (j, &lv)| acc * pmfs[j][lv].clone());
            if w.is_zero() {
                continue;
            }
            let mut sorted = digits.clone();
            sorted.sort_unstable();
            for (i, &lv) in sorted.iter().enumerate() {
                next[i][lv] = next[i][lv].clone() + w.clone();
            }
        }
        pmfs = next;
    }
    Ok(strata_from_level_pmfs(pop, &pmfs))
}

/// Full enumeration of the whole MSRSS procedure over level assignments to
/// all `m^(r+1)` units. Refuses more than `max_assignments` assignments.
pub fn covariate_brute_force<T: Prob>(
    pop: &LevelPopulation<T>,
    m: usize,
    r: u32,
    max_assignments: u64,
) -> Result<Vec<T>> {
    let units = brute_force_units(m, r)?;
    let n_levels = pop.weights.len();
    let total = (n_levels as u64)
        .checked_pow(units as u32)
        .filter(|&t| t <= max_assignments)
        .ok_or(Error::TooLarge { units: (n_levels as u128).saturating_pow(units as u32), cap: max_assignments })?;
    let mut probs = vec![T::zero(); m];
    let mut lv = vec![0usize; units];
    for t in 0..total {
        let mut rest = t;
        for d in lv.iter_mut() {
            *d = (rest % n_levels as u64) as usize;
            rest /= n_levels as u64;
        }
        let w = lv.iter().fold(T::one(), |acc, &l| acc * pop.weights[l].clone());
        if w.is_zero() {
            continue;
        }
        let mut buf = lv.clone();
        let mut len = units;
        for _ in 0..r {
            let groups = len / m;
            for c in 0..groups {
                let mut set = buf[c * m..(c + 1) * m].to_vec();
                set.sort_unstable();
                buf[c] = set[c % m];
            }
            len = groups;
        }
        for i in 0..m {
            probs[i] = probs[i].clone() + w.clone() * pop.success[buf[i]].clone();
        }
    }
    Ok(probs)
}

/// Exact RE/PSSR for a dataset covariate (`n = 1`), with `var_srs = p(1-p)/m`.
pub fn covariate_efficiency(pop: &LevelPopulation<f64>, m: usize, r: u32) -> Result<EfficiencyReport> {
    let p = pop.proportion();
    let strata = covariate_strata(pop, m, r)?;
    let var_design = crate::estimate::bernoulli_sum(&strata) / (m * m) as f64;
    efficiency_report(p * (1.0 - p) / m as f64, var_design, None, Provenance::Exact)
}
