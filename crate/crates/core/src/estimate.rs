//! Proportion estimators, their variances, Wald intervals and the RE / PSSR
//! comparison against SRS.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::designs::RankedSample;
use crate::error::{Error, Result};
use crate::model::check_probability;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrataSource {
    Empirical,
    ExactOracle,
}

/// Success probabilities of the rank-1..m judgment order statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumProportions {
    pub probs: Vec<f64>,
    pub source: StrataSource,
}

impl StratumProportions {
    pub fn new(probs: Vec<f64>, source: StrataSource) -> Result<Self> {
        for &p in &probs {
            check_probability("stratum proportion", p)?;
        }
        Ok(Self { probs, source })
    }

    pub fn empirical(sample: &RankedSample) -> Self {
        Self { probs: sample.stratum_means(), source: StrataSource::Empirical }
    }

    pub fn mean(&self) -> f64 {
        self.probs.iter().sum::<f64>() / self.probs.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Exact,
    MonteCarlo,
}

impl std::fmt::Display for Provenance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Exact => "exact",
            Self::MonteCarlo => "monte-carlo",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFlag {
    /// Both variances are zero (p at 0 or 1); RE and PSSR are undefined.
    Degenerate,
    /// The design variance is zero while the SRS variance is not.
    InfiniteRe,
}

/// Variances of the two estimators and the derived RE and PSSR.
///
/// Serializes to exactly `var_srs, var_design, re, pssr, mc_stderr,
/// provenance`; non-finite RE/PSSR become `null`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyReport {
    pub var_srs: f64,
    pub var_design: f64,
    #[serde(deserialize_with = "nullable_f64")]
    pub re: f64,
    #[serde(deserialize_with = "nullable_f64")]
    pub pssr: f64,
    /// Standard error of `re` when `var_design` is a Monte Carlo estimate.
    pub mc_stderr: Option<f64>,
    pub provenance: Provenance,
}

fn nullable_f64<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

impl EfficiencyReport {
    pub fn flag(&self) -> Option<ReportFlag> {
        if self.var_design == 0.0 && self.var_srs == 0.0 {
            Some(ReportFlag::Degenerate)
        } else if self.var_design == 0.0 {
            Some(ReportFlag::InfiniteRe)
        } else {
            None
        }
    }

    /// Standard error of PSSR implied by the RE standard error.
    pub fn pssr_stderr(&self) -> Option<f64> {
        // PSSR = 100 (1 - 1/RE)  =>  dPSSR/dRE = 100 / RE^2
        self.mc_stderr.map(|se| 100.0 * se / (self.re * self.re))
    }
}

/// `(1/(nm)) sum_i sum_j X[i]j`.
pub fn estimate_proportion(sample: &RankedSample) -> f64 {
    let vals = sample.values();
    vals.iter().map(|&v| u64::from(v)).sum::<u64>() as f64 / vals.len() as f64
}

/// `p(1-p)/N`.
pub fn variance_srs(p: f64, sample_size: usize) -> Result<f64> {
    check_probability("p", p)?;
    if sample_size == 0 {
        return Err(Error::InvalidParameter("N must be at least 1".into()));
    }
    Ok(p * (1.0 - p) / sample_size as f64)
}

/// `sum_i p[i](1 - p[i]) / (n m^2)`.
pub fn variance_design(strata: &StratumProportions, n: usize, m: usize) -> Result<f64> {
    if strata.probs.len() != m {
        return Err(Error::LengthMismatch { expected: m, actual: strata.probs.len() });
    }
    if n == 0 || m == 0 {
        return Err(Error::InvalidParameter("n and m must be at least 1".into()));
    }
    Ok(bernoulli_sum(&strata.probs) / (n * m * m) as f64)
}

pub(crate) fn bernoulli_sum(probs: &[f64]) -> f64 {
    probs.iter().map(|p| p * (1.0 - p)).sum()
}

/// Builds the report from the two variances.
pub fn efficiency_report(
    var_srs: f64,
    var_design: f64,
    mc_stderr: Option<f64>,
    provenance: Provenance,
) -> Result<EfficiencyReport> {
    if !(var_srs >= 0.0 && var_design >= 0.0) {
        return Err(Error::InvalidParameter(format!("variances must be non-negative, got {var_srs} and {var_design}")));
    }
    let (re, pssr) = if var_design > 0.0 {
        (var_srs / var_design, (1.0 - var_design / var_srs) * 100.0)
    } else if var_srs > 0.0 {
        (f64::INFINITY, 100.0)
    } else {
        (f64::NAN, f64::NAN)
    };
    Ok(EfficiencyReport { var_srs, var_design, re, pssr, mc_stderr, provenance })
}

/// Standard normal quantile.
///
/// Delegates to `statrs`, whose inverse CDF goes through an inverse
/// complementary error function accurate to double precision.
pub fn normal_quantile(prob: f64) -> Result<f64> {
    if !(prob > 0.0 && prob < 1.0) {
        return Err(Error::InvalidParameter(format!("quantile level must lie in (0, 1), got {prob}")));
    }
    Ok(standard_normal().inverse_cdf(prob))
}

pub fn normal_cdf(x: f64) -> f64 {
    standard_normal().cdf(x)
}

fn standard_normal() -> Normal {
    Normal::standard()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

/// Wald interval from per-stratum plug-in variances, clipped to `[0, 1]`.
///
/// With one cycle the per-stratum variance is not estimable; `fallback`
/// then uses `p(1-p)/(nm)`, which bounds the design variance from above.
pub fn wald_interval(sample: &RankedSample, level: f64, fallback: bool) -> Result<Interval> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidParameter(format!("confidence level must lie in (0, 1), got {level}")));
    }
    let (m, n) = (sample.m(), sample.n());
    let p_hat = estimate_proportion(sample);
    let var = if n >= 2 {
        bernoulli_sum(&sample.stratum_means()) / (n * m * m) as f64
    } else if fallback {
        p_hat * (1.0 - p_hat) / (n * m) as f64
    } else {
        return Err(Error::VarianceNotEstimable(
            "a single cycle gives one observation per rank, so per-stratum variances cannot be estimated; \
             use at least two cycles or enable the conservative fallback"
                .into(),
        ));
    };
    let z = normal_quantile(0.5 + level / 2.0)?;
    let half = z * var.sqrt();
    Ok(Interval { lo: (p_hat - half).max(0.0), hi: (p_hat + half).min(1.0) })
}
