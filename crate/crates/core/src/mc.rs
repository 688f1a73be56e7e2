//! Seeded, parallel Monte Carlo efficiency studies.
//!
//! Each grid point gets a stable id hashed from its content, and replication
//! `t` of that point draws from the counter-based stream `(seed, id, t)`.
//! Per-replication estimates are collected in replication order and reduced
//! serially, so results are bit-identical for any worker count.

use std::sync::Arc;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::designs::{check_cap, CycleSampler, DEFAULT_UNIT_CAP};
use crate::error::{Error, Result};
use crate::estimate::{efficiency_report, EfficiencyReport, Provenance};
use crate::model::{CovariateOrder, DesignSpec, PopulationModel, RankingStrategy, UnitSource};
use crate::rng::StreamKey;

pub const DEFAULT_REPLICATIONS: usize = 100_000;

/// Grid of the published perfect-ranking PSSR table.
pub const TABLE1_P: [f64; 5] = [0.1, 0.25, 0.5, 0.75, 0.9];
pub const TABLE_M: [usize; 3] = [3, 4, 5];
pub const TABLE_R: [u32; 4] = [1, 2, 3, 4];
pub const FIGURE_LAMBDAS: [f64; 3] = [0.7, 0.85, 1.0];

/// Maps a ranking-quality value to a strategy. The endpoints use the
/// equivalent cheaper strategies: at `lambda = 1` the Dell-Clutter score is a
/// monotone function of the response, and at `lambda = 0` it is pure noise.
pub fn strategy_for_lambda(lambda: f64) -> Result<RankingStrategy> {
    if lambda == 1.0 {
        Ok(RankingStrategy::Perfect)
    } else if lambda == 0.0 {
        Ok(RankingStrategy::Random)
    } else {
        RankingStrategy::dell_clutter(lambda)
    }
}

/// Where grid points draw their units from.
#[derive(Debug, Clone)]
pub enum PopulationGrid {
    /// Bernoulli populations, one per `p`.
    Bernoulli(Vec<f64>),
    Dataset(Arc<Dataset>),
}

#[derive(Debug, Clone)]
pub struct SimulationConfig {
    pub population: PopulationGrid,
    pub strategies: Vec<RankingStrategy>,
    pub m: Vec<usize>,
    pub r: Vec<u32>,
    /// Cycles per sample (RE does not depend on it; 1 by default).
    pub n: usize,
    pub replications: usize,
    pub seed: u64,
    pub workers: usize,
    pub unit_cap: u64,
}

impl SimulationConfig {
    pub fn new(population: PopulationGrid, strategies: Vec<RankingStrategy>, m: Vec<usize>, r: Vec<u32>) -> Self {
        Self {
            population,
            strategies,
            m,
            r,
            n: 1,
            replications: DEFAULT_REPLICATIONS,
            seed: 0,
            workers: default_workers(),
            unit_cap: DEFAULT_UNIT_CAP,
        }
    }

    /// The 60-cell perfect-ranking PSSR table.
    pub fn table1() -> Self {
        Self::new(
            PopulationGrid::Bernoulli(TABLE1_P.to_vec()),
            vec![RankingStrategy::Perfect],
            TABLE_M.to_vec(),
            TABLE_R.to_vec(),
        )
    }

    /// RE curves over `p` for every `(m, r, lambda)` of the imperfect-ranking figures.
    pub fn figures(p_grid: Vec<f64>) -> Result<Self> {
        let strategies = FIGURE_LAMBDAS.iter().map(|&l| strategy_for_lambda(l)).collect::<Result<_>>()?;
        Ok(Self::new(PopulationGrid::Bernoulli(p_grid), strategies, TABLE_M.to_vec(), TABLE_R.to_vec()))
    }

    pub fn with_replications(mut self, reps: usize) -> Self {
        self.replications = reps;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications < 2 {
            return Err(Error::InvalidParameter("replications must be at least 2".into()));
        }
        if self.workers == 0 {
            return Err(Error::InvalidParameter("workers must be at least 1".into()));
        }
        if self.n == 0 {
            return Err(Error::InvalidParameter("n must be at least 1".into()));
        }
        let empty_pop = match &self.population {
            PopulationGrid::Bernoulli(ps) => ps.is_empty(),
            PopulationGrid::Dataset(ds) => ds.n_rows() == 0,
        };
        if empty_pop || self.strategies.is_empty() || self.m.is_empty() || self.r.is_empty() {
            return Err(Error::InvalidParameter("grid is empty".into()));
        }
        if let PopulationGrid::Bernoulli(ps) = &self.population {
            for &p in ps {
                crate::model::check_probability("p", p)?;
            }
        }
        Ok(())
    }

    /// Grid points in output order: population, then strategy, then m, then r.
    pub fn points(&self) -> Vec<GridPoint> {
        let pops: Vec<Option<f64>> = match &self.population {
            PopulationGrid::Bernoulli(ps) => ps.iter().map(|&p| Some(p)).collect(),
            PopulationGrid::Dataset(_) => vec![None],
        };
        let mut out = Vec::new();
        for p in &pops {
            for s in &self.strategies {
                for &m in &self.m {
                    for &r in &self.r {
                        out.push(GridPoint { p: *p, strategy: s.clone(), m, r, n: self.n });
                    }
                }
            }
        }
        out
    }

    fn population_for(&self, point: &GridPoint) -> Result<PopulationModel> {
        match (&self.population, point.p) {
            (PopulationGrid::Bernoulli(_), Some(p)) => PopulationModel::bernoulli(p),
            (PopulationGrid::Dataset(ds), _) => PopulationModel::dataset(ds.clone()),
            (PopulationGrid::Bernoulli(_), None) => Err(Error::Config("grid point has no p".into())),
        }
    }
}

pub fn default_workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

/// One cell of a sweep. `p` is `None` for dataset populations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub p: Option<f64>,
    pub strategy: RankingStrategy,
    pub m: usize,
    pub r: u32,
    pub n: usize,
}

impl GridPoint {
    pub fn bernoulli(p: f64, strategy: RankingStrategy, m: usize, r: u32) -> Self {
        Self { p: Some(p), strategy, m, r, n: 1 }
    }

    /// Stable 64-bit id used to key the random streams of this point.
    pub fn stream_id(&self) -> u64 {
        // FNV-1a over a canonical description
        let desc = format!(
            "p={:?};s={};m={};r={};n={}",
            self.p.map(f64::to_bits),
            self.strategy.label(),
            self.m,
            self.r,
            self.n
        );
        desc.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3))
    }
}

/// Summary moments of the replicated estimates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateMoments {
    pub reps: usize,
    pub mean: f64,
    /// Unbiased sample variance.
    pub variance: f64,
    /// Fourth central moment.
    pub m4: f64,
}

impl EstimateMoments {
    pub fn from_values(values: &[f64]) -> Result<Self> {
        let reps = values.len();
        if reps < 2 {
            return Err(Error::InvalidParameter("need at least two replications".into()));
        }
        let mean = values.iter().sum::<f64>() / reps as f64;
        let (mut s2, mut s4) = (0.0, 0.0);
        for v in values {
            let d = v - mean;
            let d2 = d * d;
            s2 += d2;
            s4 += d2 * d2;
        }
        Ok(Self { reps, mean, variance: s2 / (reps - 1) as f64, m4: s4 / reps as f64 })
    }

    /// Delta-method standard error of the sample variance.
    pub fn variance_stderr(&self) -> f64 {
        let r = self.reps as f64;
        let sigma4 = self.variance * self.variance;
        ((self.m4 - sigma4 * (r - 3.0) / (r - 1.0)) / r).max(0.0).sqrt()
    }
}

/// Replicated estimator values for one design point.
///
/// Replication `t` uses stream `(seed, stream_id, t)`; the output is in
/// replication order regardless of `workers`.
#[allow(clippy::too_many_arguments)]
pub fn simulate_estimates(
    pop: &PopulationModel,
    strategy: &RankingStrategy,
    design: DesignSpec,
    reps: usize,
    seed: u64,
    stream_id: u64,
    workers: usize,
    unit_cap: u64,
) -> Result<Vec<f64>> {
    check_cap(&design, unit_cap)?;
    let source = UnitSource::new(pop, strategy)?;
    let key = StreamKey::new(seed, stream_id);
    let (m, r, n) = (design.m, design.r, design.n);
    let srs = design.kind == crate::model::DesignKind::Srs;
    let one = |sampler: &mut CycleSampler, buf: &mut Vec<u8>, t: usize| -> f64 {
        let mut rng = key.stream(t as u64);
        let mut ones = 0u64;
        for _ in 0..n {
            if srs {
                sampler.srs(&source, &mut rng, buf);
            } else {
                sampler.msrss_cycle(&source, m, r, &mut rng, buf);
            }
            ones += buf.iter().map(|&v| u64::from(v)).sum::<u64>();
        }
        ones as f64 / (m * n) as f64
    };
    let init = || (CycleSampler::default(), vec![0u8; m]);
    if workers <= 1 {
        let (mut sampler, mut buf) = init();
        return Ok((0..reps).map(|t| one(&mut sampler, &mut buf, t)).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(|| {
        (0..reps).into_par_iter().with_min_len(64).map_init(init, |(sampler, buf), t| one(sampler, buf, t)).collect()
    }))
}

/// Monte Carlo RE/PSSR for one point: `var_design` is the sample variance of
/// the replicated estimator, `var_srs` the closed form `p(1-p)/(mn)`.
pub fn simulate_efficiency(
    pop: &PopulationModel,
    point: &GridPoint,
    reps: usize,
    seed: u64,
    workers: usize,
) -> Result<EfficiencyReport> {
    simulate_point(pop, point, reps, seed, workers, DEFAULT_UNIT_CAP).map(|(rep, _)| rep)
}

fn simulate_point(
    pop: &PopulationModel,
    point: &GridPoint,
    reps: usize,
    seed: u64,
    workers: usize,
    unit_cap: u64,
) -> Result<(EfficiencyReport, EstimateMoments)> {
    let p = pop.proportion();
    if p <= 0.0 || p >= 1.0 {
        return Err(Error::Degenerate(format!("population proportion {p} leaves nothing to estimate")));
    }
    let design = DesignSpec::msrss(point.m, point.r, point.n)?;
    let values = simulate_estimates(pop, &point.strategy, design, reps, seed, point.stream_id(), workers, unit_cap)?;
    let moments = EstimateMoments::from_values(&values)?;
    let var_srs = p * (1.0 - p) / design.sample_size() as f64;
    let var_design = moments.variance;
    let stderr =
        if var_design > 0.0 { var_srs / var_design * moments.variance_stderr() / var_design } else { f64::INFINITY };
    let report = efficiency_report(var_srs, var_design, Some(stderr), Provenance::MonteCarlo)?;
    Ok((report, moments))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub point: GridPoint,
    /// True population proportion used for `var_srs`.
    pub p: f64,
    pub report: Option<EfficiencyReport>,
    pub error: Option<String>,
    pub reps: usize,
    /// Mean of the replicated estimates.
    pub mean_estimate: Option<f64>,
    #[serde(skip)]
    pub elapsed: Duration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub seed: u64,
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn elapsed(&self) -> Duration {
        self.rows.iter().map(|r| r.elapsed).sum()
    }

    pub fn failed(&self) -> impl Iterator<Item = &SweepRow> {
        self.rows.iter().filter(|r| r.error.is_some())
    }

    /// CSV with columns `p,m,r,lambda,covariate,re,pssr,stderr,reps`.
    /// Failed cells carry `NA` in the numeric result columns.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["p", "m", "r", "lambda", "covariate", "re", "pssr", "stderr", "reps"])?;
        for row in &self.rows {
            let (re, pssr, se) = match &row.report {
                Some(rep) => (fmt_num(rep.re), fmt_num(rep.pssr), rep.mc_stderr.map_or("NA".into(), fmt_num)),
                None => ("NA".into(), "NA".into(), "NA".into()),
            };
            w.write_record([
                fmt_num(row.p),
                row.point.m.to_string(),
                row.point.r.to_string(),
                row.point.strategy.lambda().map_or(String::new(), fmt_num),
                row.point.strategy.covariate_label().unwrap_or_default(),
                re,
                pssr,
                se,
                row.reps.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Long-format curve data: `figure,panel,series,x,re,stderr`.
    ///
    /// Bernoulli sweeps give one figure per `m`, one panel per ranking
    /// quality, one series per `r` and `x = p`. Dataset sweeps give one
    /// figure, one panel per `m`, one series per covariate and `x = r`.
    pub fn write_plot_data<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["figure", "panel", "series", "x", "re", "stderr"])?;
        for row in self.rows.iter() {
            let Some(rep) = &row.report else { continue };
            let se = rep.mc_stderr.map_or("NA".into(), fmt_num);
            let pt = &row.point;
            let rec = match &pt.strategy {
                RankingStrategy::Covariate { .. } => [
                    "re_dataset".to_string(),
                    format!("m={}", pt.m),
                    pt.strategy.covariate_label().unwrap_or_default(),
                    pt.r.to_string(),
                    fmt_num(rep.re),
                    se,
                ],
                s => [
                    format!("re_m{}", pt.m),
                    format!("lambda={}", s.lambda().map_or("NA".into(), fmt_num)),
                    format!("r={}", pt.r),
                    fmt_num(row.p),
                    fmt_num(rep.re),
                    se,
                ],
            };
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Shortest decimal that round-trips.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        "NA".into()
    } else if x.is_infinite() {
        if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{x}")
    }
}

/// Evaluates every grid point. A failing point is recorded with its error and
/// the sweep continues.
pub fn run_sweep(config: &SimulationConfig) -> Result<SweepResult> {
    config.validate()?;
    let rows = config
        .points()
        .into_iter()
        .map(|point| {
            let start = Instant::now();
            let outcome = config.population_for(&point).and_then(|pop| {
                let p = pop.proportion();
                simulate_point(&pop, &point, config.replications, config.seed, config.workers, config.unit_cap)
                    .map(|(rep, mom)| (p, rep, mom))
            });
            let p = point.p.unwrap_or_else(|| match &config.population {
                PopulationGrid::Dataset(ds) => ds.population_proportion(),
                PopulationGrid::Bernoulli(_) => f64::NAN,
            });
            let elapsed = start.elapsed();
            match outcome {
                Ok((p, report, mom)) => SweepRow {
                    point,
                    p,
                    report: Some(report),
                    error: None,
                    reps: config.replications,
                    mean_estimate: Some(mom.mean),
                    elapsed,
                },
                Err(e) => SweepRow {
                    point,
                    p,
                    report: None,
                    error: Some(e.to_string()),
                    reps: config.replications,
                    mean_estimate: None,
                    elapsed,
                },
            }
        })
        .collect();
    Ok(SweepResult { seed: config.seed, rows })
}

/// Covariate-ranked sweep over a dataset population.
#[allow(clippy::too_many_arguments)]
pub fn dataset_sweep(
    dataset: Arc<Dataset>,
    covariates: &[String],
    order: CovariateOrder,
    m: Vec<usize>,
    r: Vec<u32>,
    reps: usize,
    seed: u64,
    workers: usize,
) -> Result<SweepResult> {
    for c in covariates {
        dataset.covariate(c)?;
    }
    let strategies = covariates.iter().map(|c| RankingStrategy::Covariate { column: c.clone(), order }).collect();
    let config = SimulationConfig::new(PopulationGrid::Dataset(dataset), strategies, m, r)
        .with_replications(reps)
        .with_seed(seed)
        .with_workers(workers);
    run_sweep(&config)
}
