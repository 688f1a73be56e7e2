use std::collections::hash_map::RandomState;
use std::hash::{BuildHasher, Hasher};
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use anyhow::{Context, Result};
use rankset::data::{summarize_file, ColumnMapping};
use rankset::estimate::{estimate_proportion, wald_interval, Interval};
use rankset::mc::{self, fmt_num, strategy_for_lambda, PopulationGrid, SweepResult};
use rankset::oracle::{self, rational, Rational};
use rankset::plan::{plan, PlanRequest};
use rankset::{CovariateOrder, DesignKind, MissingPolicy, RankedSample, SimulationConfig};
use serde::Serialize;
use serde_json::{json, Value};

use crate::args::{Common, DatasetArgs, DesignArg, EstimateArgs, Format, OracleArgs, PlanArgs, SimulateArgs};
use crate::output::{csv_document, document, emit, file_digest, json_document, Metadata};
use crate::UsageError;

/// Default p grid for the RE-curve preset.
const FIGURE_P: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

fn fresh_seed() -> u64 {
    RandomState::new().build_hasher().finish()
}

fn workers(common: &Common) -> usize {
    common.workers.unwrap_or_else(mc::default_workers)
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn finish(common: &Common, meta: &mut Metadata, start: Instant) {
    if !common.no_timing {
        meta.elapsed = Some(start.elapsed());
    }
}

fn write_sweep(common: &Common, meta: &Metadata, sweep: &SweepResult, plot_data: Option<&Path>) -> Result<()> {
    let format = common.format.unwrap_or(Format::Csv);
    let body = document(format, meta, sweep, |buf| sweep.write_csv(buf))?;
    emit(common.output.as_deref(), &body)?;
    if let Some(path) = plot_data {
        emit(Some(path), &csv_document(meta, |buf| sweep.write_plot_data(buf))?)?;
    }
    for row in sweep.failed() {
        eprintln!(
            "warning: m={} r={} {}: {}",
            row.point.m,
            row.point.r,
            row.point.strategy,
            row.error.as_deref().unwrap_or("failed")
        );
    }
    Ok(())
}

pub fn simulate(common: &Common, args: &SimulateArgs) -> Result<()> {
    let start = Instant::now();
    let seed = common.seed.unwrap_or_else(fresh_seed);
    let mut config = if args.table1 {
        SimulationConfig::table1()
    } else if args.figures {
        let p = if args.p.is_empty() { FIGURE_P.to_vec() } else { args.p.clone() };
        SimulationConfig::figures(p)?
    } else {
        let lambdas = if args.lambda.is_empty() { vec![1.0] } else { args.lambda.clone() };
        let strategies = lambdas.iter().map(|&l| strategy_for_lambda(l)).collect::<rankset::Result<Vec<_>>>()?;
        let r = if args.r.is_empty() { vec![1] } else { args.r.clone() };
        SimulationConfig::new(PopulationGrid::Bernoulli(args.p.clone()), strategies, args.m.clone(), r)
    };
    if args.design == DesignArg::Rss && config.r.iter().any(|&r| r != 1) {
        return Err(usage("--design rss is the one-stage design; drop --r or use --r 1"));
    }
    config.n = args.n;
    let config = config.with_replications(args.reps).with_seed(seed).with_workers(workers(common));
    config.validate()?;

    let PopulationGrid::Bernoulli(ps) = &config.population else { unreachable!() };
    let hashed = json!({
        "p": ps,
        "strategies": config.strategies,
        "m": config.m,
        "r": config.r,
        "n": config.n,
        "reps": config.replications,
    });
    let sweep = mc::run_sweep(&config)?;
    let mut meta = Metadata::new("simulate", Some(seed), &hashed);
    finish(common, &mut meta, start);
    write_sweep(common, &meta, &sweep, args.plot_data.as_deref())
}

#[derive(Debug, Serialize)]
struct OracleRow {
    p: String,
    m: usize,
    r: u32,
    var_srs: String,
    var_msrss: String,
    re: String,
    pssr: String,
    flag: String,
}

#[derive(Debug, Serialize)]
struct StratumRow {
    p: String,
    m: usize,
    r: u32,
    stratum: usize,
    prob: String,
}

fn fraction(x: &Rational) -> String {
    if x.is_integer() {
        x.numer().to_string()
    } else {
        format!("{}/{}", x.numer(), x.denom())
    }
}

fn oracle_rows(p_text: &str, m: usize, r: u32, fractions: bool) -> Result<OracleRow> {
    let p_exact = rational(p_text).map_err(|e| usage(e.to_string()))?;
    let p = oracle::Prob::to_f64(&p_exact);
    let rep = oracle::exact_efficiency(p, m, r)?;
    let flag = match rep.flag() {
        Some(rankset::estimate::ReportFlag::Degenerate) => "degenerate",
        Some(rankset::estimate::ReportFlag::InfiniteRe) => "infinite_re",
        None => "",
    };
    let (var_srs, var_msrss, re, pssr) = if fractions {
        let v = oracle::exact_variances_rational(&p_exact, m, r)?;
        (
            fraction(&v.var_srs),
            fraction(&v.var_design),
            v.re().map_or("NA".into(), |x| fraction(&x)),
            v.pssr().filter(|_| rep.flag().is_none()).map_or("NA".into(), |x| fraction(&x)),
        )
    } else {
        (fmt_num(rep.var_srs), fmt_num(rep.var_design), fmt_num(rep.re), fmt_num(rep.pssr))
    };
    Ok(OracleRow { p: p_text.to_string(), m, r, var_srs, var_msrss, re, pssr, flag: flag.into() })
}

fn strata_rows(p_text: &str, m: usize, r: u32, fractions: bool) -> Result<Vec<StratumRow>> {
    let p_exact = rational(p_text).map_err(|e| usage(e.to_string()))?;
    let probs: Vec<String> = if fractions {
        oracle::msrss_strata(p_exact, m, r)?.probs.iter().map(fraction).collect()
    } else {
        let p = oracle::Prob::to_f64(&p_exact);
        oracle::msrss_strata(p, m, r)?.probs.into_iter().map(fmt_num).collect()
    };
    Ok(probs
        .into_iter()
        .enumerate()
        .map(|(i, prob)| StratumRow { p: p_text.to_string(), m, r, stratum: i + 1, prob })
        .collect())
}

fn write_rows<T: Serialize>(rows: &[T], buf: &mut Vec<u8>) -> rankset::Result<()> {
    let mut w = csv::Writer::from_writer(buf);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn oracle(common: &Common, args: &OracleArgs) -> Result<()> {
    let start = Instant::now();
    if args.m.contains(&0) || args.r.contains(&0) {
        return Err(usage("m and r must be at least 1"));
    }
    let hashed = json!({
        "p": args.p, "m": args.m, "r": args.r, "strata": args.strata, "fractions": args.fractions,
    });
    let format = common.format.unwrap_or(Format::Csv);
    let mut meta = Metadata::new("oracle", None, &hashed);
    let body = if args.strata {
        let mut rows = Vec::new();
        for p in &args.p {
            for &m in &args.m {
                for &r in &args.r {
                    rows.extend(strata_rows(p, m, r, args.fractions)?);
                }
            }
        }
        finish(common, &mut meta, start);
        document(format, &meta, &rows, |buf| write_rows(&rows, buf))?
    } else {
        let mut rows = Vec::new();
        for p in &args.p {
            for &m in &args.m {
                for &r in &args.r {
                    rows.push(oracle_rows(p, m, r, args.fractions)?);
                }
            }
        }
        finish(common, &mut meta, start);
        document(format, &meta, &rows, |buf| write_rows(&rows, buf))?
    };
    emit(common.output.as_deref(), &body)
}

fn resolve_mapping(args: &DatasetArgs) -> Result<ColumnMapping> {
    let base = match &args.mapping {
        Some(path) => {
            Some(ColumnMapping::from_config_file(path).with_context(|| format!("reading mapping {}", path.display()))?)
        }
        None => None,
    };
    let pick = |flag: &Option<String>, from: Option<&String>, name: &str| -> Result<String> {
        flag.clone()
            .or_else(|| from.cloned())
            .ok_or_else(|| usage(format!("--{name} is required without a mapping file")))
    };
    let mut mapping = ColumnMapping {
        response: pick(&args.response, base.as_ref().map(|b| &b.response), "response")?,
        success_label: pick(&args.success, base.as_ref().map(|b| &b.success_label), "success")?,
        failure_label: pick(&args.failure, base.as_ref().map(|b| &b.failure_label), "failure")?,
        covariates: base.as_ref().map(|b| b.covariates.clone()).unwrap_or_default(),
        missing: base.as_ref().map(|b| b.missing).unwrap_or_default(),
        order: base.as_ref().map(|b| b.order).unwrap_or_default(),
    };
    if !args.covariate.is_empty() {
        mapping.covariates = args.covariate.clone();
    }
    if let Some(m) = &args.missing {
        mapping.missing = m.parse::<MissingPolicy>().map_err(|e| usage(e.to_string()))?;
    }
    if let Some(o) = &args.covariate_order {
        mapping.order = o.parse::<CovariateOrder>().map_err(|e| usage(e.to_string()))?;
    }
    if mapping.covariates.is_empty() {
        return Err(usage("no covariates given (--covariate or the mapping file)"));
    }
    Ok(mapping)
}

pub fn dataset(common: &Common, args: &DatasetArgs) -> Result<()> {
    let start = Instant::now();
    let mapping = resolve_mapping(args)?;
    let (ds, summary) =
        summarize_file(&args.data, &mapping).with_context(|| format!("loading {}", args.data.display()))?;
    let digest = file_digest(&args.data)?;

    if args.summary_only {
        let hashed = json!({ "data_sha256": digest, "mapping": mapping });
        let mut meta = Metadata::new("dataset", None, &hashed);
        finish(common, &mut meta, start);
        return emit(common.output.as_deref(), &json_document(&meta, &summary)?);
    }

    let seed = common.seed.unwrap_or_else(fresh_seed);
    let hashed = json!({
        "data_sha256": digest,
        "mapping": mapping,
        "m": args.m,
        "r": args.r,
        "reps": args.reps,
    });
    let sweep = mc::dataset_sweep(
        Arc::new(ds),
        &mapping.covariates,
        mapping.order,
        args.m.clone(),
        args.r.clone(),
        args.reps,
        seed,
        workers(common),
    )?;
    let mut meta = Metadata::new("dataset", Some(seed), &hashed);
    finish(common, &mut meta, start);
    if let Some(path) = &args.summary {
        emit(Some(path), &json_document(&meta, &summary)?)?;
    }
    write_sweep(common, &meta, &sweep, args.plot_data.as_deref())
}

#[derive(Debug, Serialize)]
struct EstimateResult {
    p_hat: f64,
    interval: Interval,
    level: f64,
    design: &'static str,
    m: usize,
    r: u32,
    n: usize,
    measured: usize,
    fallback_variance: bool,
}

pub fn estimate(common: &Common, args: &EstimateArgs) -> Result<()> {
    let start = Instant::now();
    let file =
        std::fs::File::open(&args.sample).with_context(|| format!("cannot open sample {}", args.sample.display()))?;
    let sample = RankedSample::read_csv(file)?;
    let interval = wald_interval(&sample, args.level, args.fallback_variance)?;
    let d = sample.design();
    let result = EstimateResult {
        p_hat: estimate_proportion(&sample),
        interval,
        level: args.level,
        design: match d.kind {
            DesignKind::Srs => "srs",
            DesignKind::Rss => "rss",
            DesignKind::Msrss => "msrss",
        },
        m: sample.m(),
        r: d.r,
        n: sample.n(),
        measured: sample.units_measured(),
        fallback_variance: args.fallback_variance,
    };
    let hashed = json!({
        "sample_sha256": file_digest(&args.sample)?,
        "level": args.level,
        "fallback_variance": args.fallback_variance,
    });
    let mut meta = Metadata::new("estimate", None, &hashed);
    finish(common, &mut meta, start);
    let format = common.format.unwrap_or(Format::Json);
    let body = document(format, &meta, &result, |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["p_hat", "lo", "hi", "level", "design", "m", "r", "n"])?;
        w.write_record([
            fmt_num(result.p_hat),
            fmt_num(result.interval.lo),
            fmt_num(result.interval.hi),
            fmt_num(result.level),
            result.design.to_string(),
            result.m.to_string(),
            result.r.to_string(),
            result.n.to_string(),
        ])?;
        w.flush()?;
        Ok(())
    })?;
    emit(common.output.as_deref(), &body)
}

pub fn plan_cmd(common: &Common, args: &PlanArgs) -> Result<()> {
    let start = Instant::now();
    if !(args.level > 0.0 && args.level < 1.0) {
        return Err(usage(format!("--level must lie in (0, 1), got {}", args.level)));
    }
    let calibrated = args.lambda < 1.0 && args.m > 1;
    let seed = calibrated.then(|| common.seed.unwrap_or_else(fresh_seed));
    let mut req = PlanRequest::new(args.half_width, args.level, args.p, args.m, args.r);
    req.lambda = args.lambda;
    req.calibration_reps = args.calibration_reps;
    req.seed = seed.unwrap_or(0);
    let result = plan(&req)?;
    let mut hashed = json!({
        "half_width": args.half_width, "level": args.level, "p": args.p,
        "m": args.m, "r": args.r, "lambda": args.lambda,
    });
    if calibrated {
        hashed["calibration_reps"] = Value::from(args.calibration_reps);
    }
    let mut meta = Metadata::new("plan", seed, &hashed);
    finish(common, &mut meta, start);
    let format = common.format.unwrap_or(Format::Json);
    let body = document(format, &meta, &result, |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["design", "m", "r", "n", "N", "pssr", "measurement_savings"])?;
        w.write_record(["srs", "1", "0", &result.srs.n.to_string(), &result.srs.total.to_string(), "", ""])?;
        w.write_record([
            "msrss".to_string(),
            result.m.to_string(),
            result.r.to_string(),
            result.msrss.n.to_string(),
            result.msrss.total.to_string(),
            fmt_num(result.pssr),
            fmt_num(result.measurement_savings),
        ])?;
        w.flush()?;
        Ok(())
    })?;
    emit(common.output.as_deref(), &body)
}
