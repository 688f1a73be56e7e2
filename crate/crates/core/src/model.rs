//! Populations, ranking strategies and the unit-level operations shared by
//! every design.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};

/// Where units come from.
#[derive(Debug, Clone)]
pub enum PopulationModel {
    /// Units are iid Bernoulli(p).
    Bernoulli { p: f64 },
    /// Units are rows of a finite dataset drawn uniformly with replacement.
    Dataset(Arc<Dataset>),
}

impl PopulationModel {
    pub fn bernoulli(p: f64) -> Result<Self> {
        check_probability("p", p)?;
        Ok(Self::Bernoulli { p })
    }

    pub fn dataset(ds: Arc<Dataset>) -> Result<Self> {
        if ds.n_rows() == 0 {
            return Err(Error::EmptyPopulation("dataset has no rows".into()));
        }
        Ok(Self::Dataset(ds))
    }

    /// True proportion of successes.
    pub fn proportion(&self) -> f64 {
        match self {
            Self::Bernoulli { p } => *p,
            Self::Dataset(ds) => ds.population_proportion(),
        }
    }
}

/// How the units of a set are judgment-ordered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum RankingStrategy {
    /// By the true response; ties broken at random.
    Perfect,
    /// Uniformly random order.
    Random,
    /// By the synthetic covariate `Y = lambda*(X - p)/sd + sqrt(1 - lambda^2)*Z`.
    DellClutter { lambda: f64 },
    /// By a dataset covariate; ties broken at random.
    Covariate {
        column: String,
        #[serde(default, skip_serializing_if = "CovariateOrder::is_numeric")]
        order: CovariateOrder,
    },
}

/// Order in which covariate levels are compared.
///
/// `Lexical` compares the decimal labels as strings (`1 < 10 < 2 < ... < 9`),
/// as R does for the levels of an unordered factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovariateOrder {
    #[default]
    Numeric,
    Lexical,
}

impl CovariateOrder {
    pub fn is_numeric(&self) -> bool {
        *self == Self::Numeric
    }

    /// Sort keys for `values`: equal values share a key and keys increase
    /// along the chosen order.
    pub fn keys(self, values: &[i64]) -> Vec<f64> {
        match self {
            Self::Numeric => values.iter().map(|&v| v as f64).collect(),
            Self::Lexical => {
                let mut labels: Vec<String> = values.iter().map(i64::to_string).collect();
                labels.sort_unstable();
                labels.dedup();
                values.iter().map(|v| labels.binary_search(&v.to_string()).unwrap_or_default() as f64).collect()
            }
        }
    }
}

impl FromStr for CovariateOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "numeric" => Ok(Self::Numeric),
            "lexical" => Ok(Self::Lexical),
            other => Err(Error::Config(format!("unknown covariate order '{other}' (expected numeric or lexical)"))),
        }
    }
}

impl RankingStrategy {
    pub fn covariate(column: impl Into<String>) -> Self {
        Self::Covariate { column: column.into(), order: CovariateOrder::Numeric }
    }

    pub fn dell_clutter(lambda: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::InvalidParameter(format!("lambda must lie in [0, 1], got {lambda}")));
        }
        Ok(Self::DellClutter { lambda })
    }

    /// Checks the strategy against a population.
    pub fn validate(&self, pop: &PopulationModel) -> Result<()> {
        match (self, pop) {
            (Self::DellClutter { lambda }, _) => {
                if !(0.0..=1.0).contains(lambda) {
                    return Err(Error::InvalidParameter(format!("lambda must lie in [0, 1], got {lambda}")));
                }
                let p = pop.proportion();
                if p <= 0.0 || p >= 1.0 {
                    return Err(Error::Degenerate(format!(
                        "Dell-Clutter ranking needs 0 < p < 1 (got p = {p}): the response has no spread to standardize"
                    )));
                }
                Ok(())
            }
            (Self::Covariate { column, .. }, PopulationModel::Dataset(ds)) => ds.covariate(column).map(|_| ()),
            (Self::Covariate { column, .. }, PopulationModel::Bernoulli { .. }) => {
                Err(Error::Config(format!("covariate ranking on '{column}' needs a dataset population")))
            }
            _ => Ok(()),
        }
    }

    /// Short label used in output tables.
    pub fn label(&self) -> String {
        match self {
            Self::Perfect => "perfect".into(),
            Self::Random => "random".into(),
            Self::DellClutter { lambda } => format!("dell_clutter({lambda})"),
            Self::Covariate { column, order: CovariateOrder::Numeric } => format!("covariate({column})"),
            Self::Covariate { column, order: CovariateOrder::Lexical } => {
                format!("covariate({column},lexical)")
            }
        }
    }

    /// Ranking quality as a correlation: 1 for perfect, 0 for random, lambda
    /// for Dell-Clutter, undefined for covariates.
    pub fn lambda(&self) -> Option<f64> {
        match self {
            Self::Perfect => Some(1.0),
            Self::Random => Some(0.0),
            Self::DellClutter { lambda } => Some(*lambda),
            Self::Covariate { .. } => None,
        }
    }

    /// Covariate name for output tables; lexical order is marked `name:lexical`.
    pub fn covariate_label(&self) -> Option<String> {
        match self {
            Self::Covariate { column, order: CovariateOrder::Numeric } => Some(column.clone()),
            Self::Covariate { column, order: CovariateOrder::Lexical } => Some(format!("{column}:lexical")),
            _ => None,
        }
    }

    pub fn covariate_column(&self) -> Option<&str> {
        match self {
            Self::Covariate { column, .. } => Some(column),
            _ => None,
        }
    }
}

impl fmt::Display for RankingStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// An identified population unit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Unit {
    pub response: u8,
    pub ranking_score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum DesignKind {
    Srs,
    Rss,
    Msrss,
}

impl fmt::Display for DesignKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Srs => "SRS",
            Self::Rss => "RSS",
            Self::Msrss => "MSRSS",
        })
    }
}

/// Design kind, set size `m`, stage count `r` and cycle count `n`.
///
/// SRS is stored with `m = N` and `n = 1`; RSS always has `r = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DesignSpec {
    pub kind: DesignKind,
    pub m: usize,
    pub r: u32,
    pub n: usize,
}

impl DesignSpec {
    pub fn srs(sample_size: usize) -> Result<Self> {
        check_count("N", sample_size)?;
        Ok(Self { kind: DesignKind::Srs, m: sample_size, r: 1, n: 1 })
    }

    pub fn rss(m: usize, n: usize) -> Result<Self> {
        check_count("m", m)?;
        check_count("n", n)?;
        Ok(Self { kind: DesignKind::Rss, m, r: 1, n })
    }

    pub fn msrss(m: usize, r: u32, n: usize) -> Result<Self> {
        check_count("m", m)?;
        check_count("r", r as usize)?;
        check_count("n", n)?;
        Ok(Self { kind: DesignKind::Msrss, m, r, n })
    }

    /// Number of measured units, `N = m n`.
    pub fn sample_size(&self) -> usize {
        self.m * self.n
    }

    /// Units identified per cycle (`m^(r+1)`, or `m` for SRS). `None` on overflow.
    pub fn units_per_cycle(&self) -> Option<u128> {
        match self.kind {
            DesignKind::Srs => Some(self.m as u128),
            DesignKind::Rss | DesignKind::Msrss => (self.m as u128).checked_pow(self.r.checked_add(1)?),
        }
    }

    pub fn units_identified(&self) -> Option<u128> {
        self.units_per_cycle()?.checked_mul(self.n as u128)
    }
}

fn check_count(name: &str, v: usize) -> Result<()> {
    if v == 0 {
        return Err(Error::InvalidParameter(format!("{name} must be at least 1")));
    }
    Ok(())
}

pub(crate) fn check_probability(name: &str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidParameter(format!("{name} must lie in [0, 1], got {p}")));
    }
    Ok(())
}

/// Dell-Clutter ranking score `lambda*(x - p)/sqrt(p(1-p)) + sqrt(1 - lambda^2)*z`.
pub fn gen_dell_clutter_score(x: u8, p: f64, lambda: f64, z: f64) -> Result<f64> {
    Ok(DellClutter::new(p, lambda)?.score(x, z))
}

/// Precomputed Dell-Clutter coefficients for one (p, lambda).
#[derive(Debug, Clone, Copy)]
pub(crate) struct DellClutter {
    p: f64,
    signal: f64,
    noise: f64,
}

impl DellClutter {
    pub(crate) fn new(p: f64, lambda: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::InvalidParameter(format!("lambda must lie in [0, 1], got {lambda}")));
        }
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Degenerate(format!("Dell-Clutter score needs 0 < p < 1, got {p}")));
        }
        Ok(Self { p, signal: lambda / (p * (1.0 - p)).sqrt(), noise: (1.0 - lambda * lambda).max(0.0).sqrt() })
    }

    #[inline]
    pub(crate) fn score(&self, x: u8, z: f64) -> f64 {
        self.signal * (f64::from(x) - self.p) + self.noise * z
    }
}

/// What the ranker looks at when ordering a set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum KeyRule {
    Response,
    None,
    Score,
}

impl KeyRule {
    fn of(strategy: &RankingStrategy) -> Self {
        match strategy {
            RankingStrategy::Perfect => Self::Response,
            RankingStrategy::Random => Self::None,
            RankingStrategy::DellClutter { .. } | RankingStrategy::Covariate { .. } => Self::Score,
        }
    }

    #[inline]
    fn key(self, u: &Unit) -> f64 {
        match self {
            Self::Response => f64::from(u.response),
            Self::None => 0.0,
            Self::Score => u.ranking_score,
        }
    }
}

/// Ranks `units` ascending by the strategy's score, breaking ties at random.
///
/// Returns the unit indices in judgment order.
pub fn rank_set<R: Rng + ?Sized>(units: &[Unit], strategy: &RankingStrategy, rng: &mut R) -> Result<Vec<usize>> {
    if units.is_empty() {
        return Err(Error::InvalidParameter("cannot rank an empty set".into()));
    }
    let rule = KeyRule::of(strategy);
    let mut keyed: Vec<(f64, u64, usize)> =
        units.iter().enumerate().map(|(idx, u)| (rule.key(u), rng.random::<u64>(), idx)).collect();
    keyed.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    Ok(keyed.into_iter().map(|(_, _, idx)| idx).collect())
}

/// Population + strategy resolved into something that produces units quickly.
#[derive(Debug, Clone)]
pub(crate) struct UnitSource {
    rows: Option<Rows>,
    p: f64,
    dell_clutter: Option<DellClutter>,
    rule: KeyRule,
}

#[derive(Debug, Clone)]
struct Rows {
    response: Vec<u8>,
    scores: Option<Vec<f64>>,
}

impl UnitSource {
    pub(crate) fn new(pop: &PopulationModel, strategy: &RankingStrategy) -> Result<Self> {
        strategy.validate(pop)?;
        let p = pop.proportion();
        let dell_clutter = match strategy {
            RankingStrategy::DellClutter { lambda } => Some(DellClutter::new(p, *lambda)?),
            _ => None,
        };
        let rows = match pop {
            PopulationModel::Bernoulli { .. } => None,
            PopulationModel::Dataset(ds) => {
                if ds.n_rows() == 0 {
                    return Err(Error::EmptyPopulation("dataset has no rows".into()));
                }
                let scores = match strategy {
                    RankingStrategy::Covariate { column, order } => Some(order.keys(ds.covariate(column)?)),
                    _ => None,
                };
                Some(Rows { response: ds.response().to_vec(), scores })
            }
        };
        Ok(Self { rows, p, dell_clutter, rule: KeyRule::of(strategy) })
    }

    pub(crate) fn rule(&self) -> KeyRule {
        self.rule
    }

    #[inline]
    pub(crate) fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Unit {
        let (response, covariate) = match &self.rows {
            None => (u8::from(rng.random::<f64>() < self.p), None),
            Some(rows) => {
                let idx = rng.random_range(0..rows.response.len());
                (rows.response[idx], rows.scores.as_ref().map(|s| s[idx]))
            }
        };
        let ranking_score = match (&self.dell_clutter, covariate) {
            (Some(dc), _) => dc.score(response, rng.sample(StandardNormal)),
            (None, Some(c)) => c,
            (None, None) => f64::from(response),
        };
        Unit { response, ranking_score }
    }

    pub(crate) fn fill<R: Rng + ?Sized>(&self, out: &mut [Unit], rng: &mut R) {
        for u in out {
            *u = self.draw(rng);
        }
    }
}

/// Identifies `count` units with ranking scores attached per `strategy`.
pub fn draw_units<R: Rng + ?Sized>(
    pop: &PopulationModel,
    strategy: &RankingStrategy,
    count: usize,
    rng: &mut R,
) -> Result<Vec<Unit>> {
    check_count("count", count)?;
    let source = UnitSource::new(pop, strategy)?;
    Ok((0..count).map(|_| source.draw(rng)).collect())
}

/// Maps an `f64` to a `u64` whose unsigned order matches `total_cmp`.
#[inline]
fn ordered_bits(x: f64) -> u64 {
    let b = x.to_bits();
    if b >> 63 == 1 {
        !b
    } else {
        b | (1 << 63)
    }
}

/// Reusable buffers for ranking-and-selection.
#[derive(Debug, Default)]
pub(crate) struct Selector {
    // (score bits << 64) | random tie-break
    keys: Vec<u128>,
    indexed: Vec<(u128, u32)>,
}

impl Selector {
    /// Picks the unit with judgment rank `rank` (0-based) from `set`.
    #[inline]
    pub(crate) fn select<R: Rng + ?Sized>(&mut self, set: &[Unit], rank: usize, rule: KeyRule, rng: &mut R) -> Unit {
        debug_assert!(rank < set.len());
        self.keys.clear();
        self.keys.extend(
            set.iter().map(|u| (u128::from(ordered_bits(rule.key(u))) << 64) | u128::from(rng.random::<u64>())),
        );
        let keys = &self.keys;
        if keys.len() <= 8 {
            // rank of unit j = number of units that order before it (index breaks exact key ties)
            for (j, &kj) in keys.iter().enumerate() {
                let before = keys.iter().enumerate().filter(|&(i, &ki)| ki < kj || (ki == kj && i < j)).count();
                if before == rank {
                    return set[j];
                }
            }
            unreachable!("ranks of distinct (key, index) pairs form a permutation");
        }
        self.indexed.clear();
        self.indexed.extend(keys.iter().enumerate().map(|(i, &k)| (k, i as u32)));
        let (_, chosen, _) = self.indexed.select_nth_unstable(rank);
        set[chosen.1 as usize]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn unit(response: u8, score: f64) -> Unit {
        Unit { response, ranking_score: score }
    }

    #[test]
    fn dell_clutter_examples() {
        assert_eq!(gen_dell_clutter_score(1, 0.5, 1.0, 123.0).unwrap(), 1.0);
        assert_eq!(gen_dell_clutter_score(0, 0.5, 0.0, 0.37).unwrap(), 0.37);
        assert!((gen_dell_clutter_score(1, 0.5, 0.6, 0.0).unwrap() - 0.6).abs() < 1e-15);
    }

    #[test]
    fn dell_clutter_rejects_degenerate_p() {
        assert!(matches!(gen_dell_clutter_score(1, 0.0, 0.5, 0.0), Err(Error::Degenerate(_))));
        assert!(matches!(gen_dell_clutter_score(1, 1.0, 0.5, 0.0), Err(Error::Degenerate(_))));
        assert!(gen_dell_clutter_score(1, 0.5, 1.5, 0.0).is_err());
        let pop = PopulationModel::bernoulli(1.0).unwrap();
        assert!(RankingStrategy::dell_clutter(0.5).unwrap().validate(&pop).is_err());
    }

    #[test]
    fn strict_sort() {
        let mut rng = seeded(1);
        let units = [unit(0, 3.0), unit(0, 1.0), unit(0, 2.0)];
        let s = RankingStrategy::covariate("y");
        assert_eq!(rank_set(&units, &s, &mut rng).unwrap(), vec![1, 2, 0]);
    }

    #[test]
    fn perfect_puts_failures_first() {
        let mut rng = seeded(2);
        let units = [unit(1, 0.0), unit(0, 0.0)];
        assert_eq!(rank_set(&units, &RankingStrategy::Perfect, &mut rng).unwrap(), vec![1, 0]);
    }

    #[test]
    fn ties_broken_evenly() {
        let mut rng = seeded(3);
        let units = [unit(0, 2.0), unit(1, 2.0)];
        let s = RankingStrategy::covariate("y");
        let trials = 100_000;
        let first = (0..trials).filter(|_| rank_set(&units, &s, &mut rng).unwrap()[0] == 0).count();
        let freq = first as f64 / trials as f64;
        assert!((freq - 0.5).abs() < 0.01, "freq {freq}");
    }

    #[test]
    fn rank_empty_set_fails() {
        let mut rng = seeded(4);
        assert!(rank_set(&[], &RankingStrategy::Perfect, &mut rng).is_err());
    }

    #[test]
    fn bernoulli_extremes() {
        let mut rng = seeded(5);
        let ones =
            draw_units(&PopulationModel::bernoulli(1.0).unwrap(), &RankingStrategy::Perfect, 5, &mut rng).unwrap();
        assert!(ones.iter().all(|u| u.response == 1));
        let zeros =
            draw_units(&PopulationModel::bernoulli(0.0).unwrap(), &RankingStrategy::Perfect, 5, &mut rng).unwrap();
        assert!(zeros.iter().all(|u| u.response == 0));
    }

    #[test]
    fn covariate_needs_dataset() {
        let pop = PopulationModel::bernoulli(0.3).unwrap();
        let s = RankingStrategy::covariate("y");
        assert!(matches!(s.validate(&pop), Err(Error::Config(_))));
    }

    #[test]
    fn lexical_order_puts_ten_after_one() {
        let keys = CovariateOrder::Lexical.keys(&[2, 10, 1, 9, 10]);
        assert_eq!(keys, vec![2.0, 1.0, 0.0, 3.0, 1.0]);
        assert_eq!(CovariateOrder::Numeric.keys(&[2, 10]), vec![2.0, 10.0]);
        assert_eq!("Lexical".parse::<CovariateOrder>().unwrap(), CovariateOrder::Lexical);
        assert!("alphabetic".parse::<CovariateOrder>().is_err());
    }

    #[test]
    fn covariate_strategy_json() {
        let s = RankingStrategy::covariate("y");
        assert_eq!(serde_json::to_string(&s).unwrap(), r#"{"kind":"covariate","column":"y"}"#);
        let lex: RankingStrategy =
            serde_json::from_str(r#"{"kind":"covariate","column":"y","order":"lexical"}"#).unwrap();
        assert_eq!(lex.covariate_label().unwrap(), "y:lexical");
    }

    #[test]
    fn design_bookkeeping() {
        assert_eq!(DesignSpec::msrss(3, 2, 4).unwrap().units_identified(), Some(108));
        assert_eq!(DesignSpec::rss(3, 2).unwrap().units_identified(), Some(18));
        assert_eq!(DesignSpec::srs(7).unwrap().units_identified(), Some(7));
        assert_eq!(DesignSpec::msrss(3, 2, 4).unwrap().sample_size(), 12);
        assert!(DesignSpec::msrss(0, 1, 1).is_err());
        assert!(DesignSpec::msrss(2, 0, 1).is_err());
    }

    #[test]
    fn selector_matches_rank_set() {
        let mut rng = seeded(6);
        let units = [unit(1, 5.0), unit(0, -1.0), unit(1, 2.5), unit(0, 9.0)];
        let mut sel = Selector::default();
        for rank in 0..4 {
            let picked = sel.select(&units, rank, KeyRule::Score, &mut rng);
            let order = rank_set(&units, &RankingStrategy::DellClutter { lambda: 0.5 }, &mut rng).unwrap();
            assert_eq!(picked, units[order[rank]]);
        }
    }
}
