//! Sample-size planning: smallest design that meets a target Wald half-width.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::normal_quantile;
use crate::mc::{simulate_efficiency, strategy_for_lambda, GridPoint};
use crate::model::PopulationModel;
use crate::oracle::msrss_strata;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignSize {
    /// Cycles (for SRS, the number of single draws).
    pub n: usize,
    /// Measured units.
    #[serde(rename = "N")]
    pub total: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub half_width: f64,
    pub level: f64,
    pub p: f64,
    pub m: usize,
    pub r: u32,
    pub lambda: f64,
    pub z: f64,
    pub srs: DesignSize,
    pub msrss: DesignSize,
    /// `100 (1 - var_msrss / var_srs)` at equal measured size.
    pub pssr: f64,
    /// `100 (1 - N_msrss / N_srs)` for the recommended sizes.
    pub measurement_savings: f64,
}

/// Inputs for [`plan`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanRequest {
    pub half_width: f64,
    pub level: f64,
    pub p: f64,
    pub m: usize,
    pub r: u32,
    /// Ranking quality; 1 uses the exact perfect-ranking variance.
    pub lambda: f64,
    /// Replications used to calibrate the variance when `lambda < 1`.
    pub calibration_reps: usize,
    pub seed: u64,
}

impl PlanRequest {
    pub fn new(half_width: f64, level: f64, p: f64, m: usize, r: u32) -> Self {
        Self { half_width, level, p, m, r, lambda: 1.0, calibration_reps: 20_000, seed: 0 }
    }
}

/// Smallest `k >= 1` with `z^2 * unit_var / k <= h^2`.
fn smallest_count(z: f64, unit_var: f64, half_width: f64) -> usize {
    let k = (z * z * unit_var / (half_width * half_width)).ceil();
    (k as usize).max(1)
}

pub fn plan(req: &PlanRequest) -> Result<Plan> {
    let PlanRequest { half_width, level, p, m, r, lambda, .. } = *req;
    if half_width.is_nan() || half_width <= 0.0 {
        return Err(Error::InvalidParameter("half-width must be positive".into()));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Degenerate(format!("planning needs a guess 0 < p < 1, got {p}")));
    }
    if m == 0 || r == 0 {
        return Err(Error::InvalidParameter("m and r must be at least 1".into()));
    }
    let z = normal_quantile(0.5 + level / 2.0)?;
    let var_unit = p * (1.0 - p);
    // variance of one MSRSS cycle's estimator
    let var_cycle = if lambda == 1.0 || m == 1 {
        let strata = msrss_strata(p, m, r)?;
        strata.variance(1)
    } else {
        let pop = PopulationModel::bernoulli(p)?;
        let point = GridPoint::bernoulli(p, strategy_for_lambda(lambda)?, m, r);
        simulate_efficiency(&pop, &point, req.calibration_reps, req.seed, 1)?.var_design
    };
    // a half-width reaching both ends of [0, 1] is met by any sample
    let (n_srs, n_msrss) = if half_width >= p.max(1.0 - p) {
        (1, 1)
    } else {
        (smallest_count(z, var_unit, half_width), smallest_count(z, var_cycle, half_width))
    };
    let srs = DesignSize { n: n_srs, total: n_srs };
    let msrss = DesignSize { n: n_msrss, total: n_msrss * m };
    Ok(Plan {
        half_width,
        level,
        p,
        m,
        r,
        lambda,
        z,
        srs,
        msrss,
        pssr: (1.0 - var_cycle / (var_unit / m as f64)) * 100.0,
        measurement_savings: (1.0 - msrss.total as f64 / srs.total as f64) * 100.0,
    })
}
