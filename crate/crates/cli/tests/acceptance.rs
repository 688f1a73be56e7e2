//! Acceptance checks for the library and the `rankset` binary.
//!
//! Prints one PASS/FAIL line per criterion (with the individual checks
//! indented below it) and exits non-zero when any criterion fails. Exact
//! targets come from small enumerators defined in this file, not from the
//! library's own oracle.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;
use rankset::data::{load_csv, pairwise_spearman, summarize_file};
use rankset::estimate::{variance_design, variance_srs, StrataSource};
use rankset::mc::{
    dataset_sweep, default_workers, run_sweep, simulate_efficiency, simulate_estimates, strategy_for_lambda,
    PopulationGrid, SweepRow, TABLE1_P, TABLE_M, TABLE_R,
};
use rankset::model::gen_dell_clutter_score;
use rankset::oracle::{
    brute_force_enumerate, exact_efficiency, exact_variances_rational, msrss_strata, order_statistic_moments, rational,
};
use rankset::{
    ColumnMapping, CovariateOrder, Dataset, DesignSpec, GridPoint, PopulationModel, RankingStrategy, SimulationConfig,
    StratumProportions,
};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

const SEED: u64 = 20_240_917;
const FULL_REPS: usize = 100_000;
const CI_REPS: usize = 10_000;
const COVARIATE_REPS: usize = 20_000;

/// Reference Monte Carlo PSSR (%) under perfect ranking.
/// Rows: (m, r) for m in 3..=5, r in 1..=4. Columns: p in TABLE1_P.
const REFERENCE_PSSR: [[f64; 5]; 12] = [
    [16.16, 30.88, 37.37, 30.78, 16.61],
    [20.52, 43.87, 53.20, 43.25, 20.47],
    [21.53, 50.73, 59.78, 50.90, 21.71],
    [22.04, 55.17, 63.19, 55.41, 22.04],
    [22.73, 38.53, 45.70, 38.55, 22.38],
    [28.89, 53.59, 61.21, 53.33, 29.22],
    [31.57, 61.80, 69.34, 61.49, 31.40],
    [32.71, 67.24, 73.96, 67.34, 32.52],
    [27.94, 44.51, 50.72, 44.26, 27.80],
    [36.84, 60.38, 66.99, 60.16, 37.03],
    [40.61, 67.24, 73.68, 67.47, 40.96],
    [42.53, 71.32, 76.90, 71.51, 42.73],
];

/// Reference PSSR (%) on the breast cancer data ranked by Cell.size, rows m = 3..=5, columns r = 1..=4.
const REFERENCE_WBCD_PSSR: [[f64; 4]; 3] =
    [[25.33, 34.06, 38.59, 40.40], [30.11, 39.29, 44.34, 46.52], [33.90, 43.27, 47.07, 48.89]];

const REFERENCE_SPEARMAN: [(&str, f64); 3] = [("Cell.size", 0.86), ("Epith.c.size", 0.76), ("Mitoses", 0.53)];

// ---------------------------------------------------------------- reporting

struct Criterion {
    id: u32,
    title: &'static str,
    checks: Vec<(bool, String)>,
    notes: Vec<String>,
}

impl Criterion {
    fn new(id: u32, title: &'static str) -> Self {
        Self { id, title, checks: Vec::new(), notes: Vec::new() }
    }

    fn check(&mut self, ok: bool, text: impl Into<String>) {
        self.checks.push((ok, text.into()));
    }

    fn note(&mut self, text: impl Into<String>) {
        self.notes.push(text.into());
    }

    fn passed(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|(ok, _)| *ok)
    }

    fn print(&self) {
        let ok = self.checks.iter().filter(|(ok, _)| *ok).count();
        println!(
            "{} criterion {}: {} ({ok}/{} checks)",
            if self.passed() { "PASS" } else { "FAIL" },
            self.id,
            self.title,
            self.checks.len()
        );
        for (ok, text) in &self.checks {
            println!("    [{}] {text}", if *ok { "ok" } else { "FAIL" });
        }
        for text in &self.notes {
            println!("    note: {text}");
        }
    }
}

/// Tracks the worst value of a per-cell statistic and the cells that failed.
struct Worst {
    worst: f64,
    at: String,
    cells: usize,
    failures: Vec<String>,
}

impl Worst {
    fn new() -> Self {
        Self { worst: f64::NEG_INFINITY, at: String::new(), cells: 0, failures: Vec::new() }
    }

    fn add(&mut self, value: f64, ok: bool, at: String) {
        self.cells += 1;
        if value > self.worst || value.is_nan() {
            self.worst = value;
            self.at.clone_from(&at);
        }
        if !ok {
            self.failures.push(format!("{at} ({value:.3})"));
        }
    }

    fn summary(&self, what: &str) -> String {
        let mut s = format!(
            "{}/{} cells {what}; worst {:.3} at {}",
            self.cells - self.failures.len(),
            self.cells,
            self.worst,
            self.at
        );
        if !self.failures.is_empty() {
            s.push_str(&format!("; failing: {}", self.failures.join(", ")));
        }
        s
    }
}

/// Sum of squared z-scores against the 0.999 quantile of chi-square with one
/// degree of freedom per cell.
fn pooled(c: &mut Criterion, what: &str, z: &Worst, sum_sq: f64) {
    let limit = ChiSquared::new(z.cells as f64).unwrap().inverse_cdf(0.999);
    c.check(
        sum_sq <= limit,
        format!(
            "{what}: sum of squared z = {sum_sq:.1} over {} cells (limit {limit:.1}); largest |z| {:.2} at {}",
            z.cells, z.worst, z.at
        ),
    );
}

// ---------------------------------------------------------- test oracles

/// Stratum success probabilities by enumerating the 2^m outcomes of one set
/// at every stage. Stage-0 units are iid Bernoulli(p).
fn enum_strata(p: f64, m: usize, r: u32) -> Vec<f64> {
    let mut strata = vec![p; m];
    for _ in 0..r {
        let mut next = vec![0.0; m];
        for mask in 0u32..(1 << m) {
            let w: f64 =
                strata.iter().enumerate().map(|(k, q)| if mask >> k & 1 == 1 { *q } else { 1.0 - q }).product();
            let ones = mask.count_ones() as usize;
            // ascending ranks: the rank-i unit (0-based) is a one iff ones > m - 1 - i
            for (i, slot) in next.iter_mut().enumerate() {
                if ones + i >= m {
                    *slot += w;
                }
            }
        }
        strata = next;
    }
    strata
}

fn pssr_of(p: f64, strata: &[f64]) -> f64 {
    let m = strata.len() as f64;
    let var_design: f64 = strata.iter().map(|q| q * (1.0 - q)).sum::<f64>() / (m * m);
    100.0 * (1.0 - var_design / (p * (1.0 - p) / m))
}

fn re_of(p: f64, strata: &[f64]) -> f64 {
    1.0 / (1.0 - pssr_of(p, strata) / 100.0)
}

/// A population split by covariate level, in ranking order.
struct Levels {
    p: f64,
    weight: Vec<f64>,
    success: Vec<f64>,
}

impl Levels {
    fn from_rows(response: &[u8], covariate: &[i64], lexical: bool) -> Self {
        let mut by_level: BTreeMap<i64, (f64, f64)> = BTreeMap::new();
        for (&y, &c) in response.iter().zip(covariate) {
            let e = by_level.entry(c).or_default();
            e.0 += 1.0;
            e.1 += f64::from(y);
        }
        let mut levels: Vec<(i64, (f64, f64))> = by_level.into_iter().collect();
        if lexical {
            levels.sort_by_key(|(c, _)| c.to_string());
        }
        let n = response.len() as f64;
        Self {
            p: response.iter().map(|&y| f64::from(y)).sum::<f64>() / n,
            weight: levels.iter().map(|(_, (k, _))| k / n).collect(),
            success: levels.iter().map(|(_, (k, s))| s / k).collect(),
        }
    }

    /// Stratum probabilities by enumerating every level tuple of one set at
    /// each stage; the rank-i unit carries the i-th smallest level.
    fn strata(&self, m: usize, r: u32) -> Vec<f64> {
        let nl = self.weight.len();
        let mut pmfs = vec![self.weight.clone(); m];
        for _ in 0..r {
            let mut next = vec![vec![0.0; nl]; m];
            let mut tuple = vec![0usize; m];
            let mut sorted = vec![0usize; m];
            'outer: loop {
                let w: f64 = tuple.iter().enumerate().map(|(k, &l)| pmfs[k][l]).product();
                if w > 0.0 {
                    sorted.copy_from_slice(&tuple);
                    sorted.sort_unstable();
                    for (i, &l) in sorted.iter().enumerate() {
                        next[i][l] += w;
                    }
                }
                for slot in tuple.iter_mut() {
                    *slot += 1;
                    if *slot < nl {
                        continue 'outer;
                    }
                    *slot = 0;
                }
                break;
            }
            pmfs = next;
        }
        pmfs.iter().map(|f| f.iter().zip(&self.success).map(|(a, b)| a * b).sum()).collect()
    }

    fn pssr(&self, m: usize, r: u32) -> f64 {
        pssr_of(self.p, &self.strata(m, r))
    }
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap());
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        for &k in &idx[i..=j] {
            out[k] = (i + j) as f64 / 2.0 + 1.0;
        }
        i = j + 1;
    }
    out
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// Reads the response and the given covariate columns straight from a CSV,
/// keeping rows where the covariate is present.
fn raw_columns(path: &Path, covariate: &str) -> (Vec<u8>, Vec<i64>) {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    let header = rdr.headers().unwrap().clone();
    let yi = header.iter().position(|h| h == "Class").unwrap();
    let ci = header.iter().position(|h| h == covariate).unwrap();
    let (mut ys, mut cs) = (Vec::new(), Vec::new());
    for rec in rdr.records() {
        let rec = rec.unwrap();
        let c = rec[ci].trim();
        if c.is_empty() || c == "NA" {
            continue;
        }
        ys.push(u8::from(rec[yi].trim() == "malignant"));
        cs.push(c.parse().unwrap());
    }
    (ys, cs)
}

// --------------------------------------------------------------- helpers

fn repo_file(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..").join(name)
}

fn table_index(m: usize, r: u32) -> usize {
    (m - 3) * 4 + (r as usize - 1)
}

fn p_index(p: f64) -> usize {
    TABLE1_P.iter().position(|&q| q == p).unwrap()
}

fn row_re(row: &SweepRow) -> (f64, f64) {
    let rep = row.report.as_ref().unwrap_or_else(|| panic!("failed point: {:?}", row.error));
    (rep.re, rep.mc_stderr.unwrap())
}

fn row_pssr(row: &SweepRow) -> f64 {
    row.report.as_ref().unwrap().pssr
}

fn bernoulli_point(p: f64, lambda: f64, m: usize, r: u32, reps: usize) -> (f64, f64) {
    let pop = PopulationModel::bernoulli(p).unwrap();
    let point = GridPoint::bernoulli(p, strategy_for_lambda(lambda).unwrap(), m, r);
    let rep = simulate_efficiency(&pop, &point, reps, SEED, default_workers()).unwrap();
    (rep.re, rep.mc_stderr.unwrap())
}

// -------------------------------------------------------------- criteria

fn oracle_vs_brute_force() -> Criterion {
    let mut c = Criterion::new(1, "exact stratum oracle equals brute-force enumeration");
    let start = Instant::now();
    let mut cells = 0;
    let mut bad = Vec::new();
    for (m, r) in [(2, 1), (3, 1), (2, 2), (4, 1), (2, 3)] {
        for p in ["1/10", "1/4", "1/2", "3/4", "9/10"] {
            let q = rational(p).unwrap();
            let fast = msrss_strata(q.clone(), m, r).unwrap().probs;
            let slow = brute_force_enumerate(q, m, r).unwrap().probs;
            cells += 1;
            if fast != slow {
                bad.push(format!("m={m} r={r} p={p}"));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    c.check(bad.is_empty(), format!("{}/{cells} cells identical in rational arithmetic {bad:?}", cells - bad.len()));
    c.check(secs < 10.0, format!("runtime {secs:.2} s (limit 10 s)"));
    c
}

fn hand_derived_cells() -> Criterion {
    let mut c = Criterion::new(2, "hand-derived exact cells at p = 0.5, m = 3");
    let half = rational("1/2").unwrap();
    let v1 = exact_variances_rational(&half, 3, 1).unwrap();
    c.check(v1.pssr() == Some(rational("75/2").unwrap()), format!("r=1 PSSR = {} (expected 75/2)", v1.pssr().unwrap()));
    let v2 = exact_variances_rational(&half, 3, 2).unwrap();
    c.check(
        v2.var_design == rational("5790/147456").unwrap(),
        format!("r=2 design variance = {} (expected 5790/147456)", v2.var_design),
    );
    let pssr2 = exact_efficiency(0.5, 3, 2).unwrap().pssr;
    let enum2 = pssr_of(0.5, &enum_strata(0.5, 3, 2));
    c.check(
        v2.pssr() == Some(rational("27075/512").unwrap())
            && (pssr2 - enum2).abs() < 1e-12
            && (pssr2 - 52.88).abs() < 0.005,
        format!("r=2 PSSR = {pssr2:.6} (enumeration {enum2:.6}, rounds to 52.88)"),
    );
    for (exact, reference, r) in [(37.5, 37.37, 1), (pssr2, 53.20, 2)] {
        let gap = (exact - reference).abs();
        c.check(gap <= 0.75, format!("r={r} reference {reference} within 0.75 pp of exact {exact:.2} (gap {gap:.2})"));
    }
    c
}

struct GridRun {
    rows: Vec<SweepRow>,
}

fn perfect_ranking_grid() -> (Criterion, GridRun) {
    let mut c = Criterion::new(3, "perfect-ranking PSSR grid by Monte Carlo (60 cells)");
    let workers = default_workers();
    let start = Instant::now();
    let full = run_sweep(&SimulationConfig::table1().with_replications(FULL_REPS).with_seed(SEED)).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let mut vs_exact = Worst::new();
    let mut vs_ref = Worst::new();
    for row in &full.rows {
        let (p, m, r) = (row.p, row.point.m, row.point.r);
        let at = format!("m={m} r={r} p={p}");
        let (re, se) = row_re(row);
        let z = (re - re_of(p, &enum_strata(p, m, r))).abs() / se;
        vs_exact.add(z, z <= 3.0, at.clone());
        let gap = (row_pssr(row) - REFERENCE_PSSR[table_index(m, r)][p_index(p)]).abs();
        vs_ref.add(gap, gap <= 1.5, at);
    }
    c.check(
        vs_exact.failures.is_empty() && vs_exact.cells == 60,
        format!("(a) {FULL_REPS} reps, |RE - exact| / stderr <= 3: {}", vs_exact.summary("within")),
    );
    c.check(
        vs_ref.failures.is_empty(),
        format!("(b) {FULL_REPS} reps, |PSSR - reference| <= 1.5 pp: {}", vs_ref.summary("within")),
    );
    c.check(secs < 600.0, format!("runtime {secs:.1} s with {workers} worker(s) (limit 600 s)"));

    let ci = run_sweep(&SimulationConfig::table1().with_replications(CI_REPS).with_seed(SEED)).unwrap();
    let mut ci_ref = Worst::new();
    for row in &ci.rows {
        let (p, m, r) = (row.p, row.point.m, row.point.r);
        let gap = (row_pssr(row) - REFERENCE_PSSR[table_index(m, r)][p_index(p)]).abs();
        ci_ref.add(gap, gap <= 3.0, format!("m={m} r={r} p={p}"));
    }
    c.check(
        ci_ref.failures.is_empty(),
        format!("{CI_REPS}-rep preset, |PSSR - reference| <= 3 pp: {}", ci_ref.summary("within")),
    );

    let mut exact_gap = Worst::new();
    for m in TABLE_M {
        for r in TABLE_R {
            for p in TABLE1_P {
                let gap = (pssr_of(p, &enum_strata(p, m, r)) - REFERENCE_PSSR[table_index(m, r)][p_index(p)]).abs();
                exact_gap.add(gap, true, format!("m={m} r={r} p={p}"));
            }
        }
    }
    c.note(format!("exact vs reference: largest gap {:.2} pp at {}", exact_gap.worst, exact_gap.at));
    (c, GridRun { rows: full.rows })
}

fn headline() -> Criterion {
    let mut c = Criterion::new(4, "headline efficiency at m = 5, r = 4, p = 0.5");
    let rep = exact_efficiency(0.5, 5, 4).unwrap();
    let strata = enum_strata(0.5, 5, 4);
    c.check(
        (rep.pssr - pssr_of(0.5, &strata)).abs() < 1e-9,
        format!("library PSSR {:.4} equals enumeration {:.4}", rep.pssr, pssr_of(0.5, &strata)),
    );
    c.check((rep.pssr - 76.90).abs() <= 1.0, format!("PSSR {:.2} within 1 pp of 76.90", rep.pssr));
    let target = 1.0 / (1.0 - 0.769);
    c.check((rep.re - target).abs() <= 0.2, format!("RE {:.3} within 0.2 of {target:.3}", rep.re));
    c
}

fn estimator_properties(grid: &GridRun, extra_rows: &[(String, f64, f64)]) -> Criterion {
    let mut c = Criterion::new(5, "estimator properties");

    // unbiasedness on a 12-point subgrid of the 100k-rep sweep
    let mut bias = Worst::new();
    for row in &grid.rows {
        let (p, m, r) = (row.p, row.point.m, row.point.r);
        if ![0.1, 0.5, 0.9].contains(&p) || ![(3, 1), (3, 4), (5, 1), (5, 4)].contains(&(m, r)) {
            continue;
        }
        let rep = row.report.as_ref().unwrap();
        let z = (row.mean_estimate.unwrap() - p).abs() / (rep.var_design / row.reps as f64).sqrt();
        bias.add(z, z <= 4.0, format!("m={m} r={r} p={p}"));
    }
    c.check(
        bias.cells == 12 && bias.failures.is_empty(),
        format!("unbiased: |mean - p| / sqrt(var/R) <= 4: {}", bias.summary("within")),
    );

    // algebraic ordering on random stratum vectors
    let mut rng = rankset::rng::seeded(SEED);
    let mut worse = 0;
    for _ in 0..1000 {
        let m = rng.random_range(2..=8);
        let probs: Vec<f64> = (0..m).map(|_| rng.random::<f64>()).collect();
        let mean = probs.iter().sum::<f64>() / m as f64;
        let strata = StratumProportions::new(probs, StrataSource::Empirical).unwrap();
        let vd = variance_design(&strata, 1, m).unwrap();
        let vs = variance_srs(mean, m).unwrap();
        if vd > vs * (1.0 + 1e-12) {
            worse += 1;
        }
    }
    c.check(worse == 0, format!("design variance <= SRS variance on 1000 random stratum vectors ({worse} violations)"));

    // ordering on every Monte Carlo point
    let mut mc = Worst::new();
    for row in &grid.rows {
        let (re, se) = row_re(row);
        let z = (1.0 - re) / se;
        mc.add(z, z <= 2.0, format!("m={} r={} p={}", row.point.m, row.point.r, row.p));
    }
    for (at, re, se) in extra_rows {
        let z = (1.0 - re) / se;
        mc.add(z, z <= 2.0, at.clone());
    }
    c.check(mc.failures.is_empty(), format!("Monte Carlo RE >= 1 within 2 stderr: {}", mc.summary("consistent")));

    // strict monotonicity in r, exact
    let mut pairs = 0;
    let mut bad = Vec::new();
    for k in 1..10 {
        let p = rational(&format!("{k}/10")).unwrap();
        for m in 2..=6 {
            let vars: Vec<_> = (1..=5).map(|r| msrss_strata(p.clone(), m, r).unwrap().variance(1)).collect();
            for (r, w) in vars.windows(2).enumerate() {
                pairs += 1;
                if w[1] >= w[0] {
                    bad.push(format!("p={k}/10 m={m} r={}", r + 1));
                }
            }
        }
    }
    c.check(
        bad.is_empty(),
        format!("exact variance strictly decreasing in r: {}/{pairs} steps {bad:?}", pairs - bad.len()),
    );

    // normal limit with continuity correction
    let (p, m, r, n, reps) = (0.3, 3, 2u32, 200usize, 10_000usize);
    let design = DesignSpec::msrss(m, r, n).unwrap();
    let pop = PopulationModel::bernoulli(p).unwrap();
    let point = GridPoint { n, ..GridPoint::bernoulli(p, RankingStrategy::Perfect, m, r) };
    let values = simulate_estimates(
        &pop,
        &RankingStrategy::Perfect,
        design,
        reps,
        SEED,
        point.stream_id(),
        default_workers(),
        rankset::designs::DEFAULT_UNIT_CAP,
    )
    .unwrap();
    let big_n = (m * n) as f64;
    let strata = enum_strata(p, m, r);
    let sd = (strata.iter().map(|q| q * (1.0 - q)).sum::<f64>() / (m * m * n) as f64).sqrt();
    let mut counts: Vec<i64> = values.iter().map(|v| (v * big_n).round() as i64).collect();
    counts.sort_unstable();
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut ks: f64 = 0.0;
    let mut i = 0;
    while i < counts.len() {
        let (k, first) = (counts[i], i);
        while i < counts.len() && counts[i] == k {
            i += 1;
        }
        // empirical CDF just below and at k against the normal at k -/+ 1/2
        let lo = normal.cdf(((k as f64 - 0.5) / big_n - p) / sd);
        let hi = normal.cdf(((k as f64 + 0.5) / big_n - p) / sd);
        ks = ks.max((first as f64 / reps as f64 - lo).abs()).max((i as f64 / reps as f64 - hi).abs());
    }
    c.check(
        ks <= 0.02,
        format!("KS distance {ks:.4} to the normal limit (n={n}, {reps} reps, continuity corrected; limit 0.02)"),
    );

    // strata average to p
    let mut worst: f64 = 0.0;
    let mut cells = 0;
    for k in 1..10 {
        let p = f64::from(k) / 10.0;
        for m in 2..=6 {
            for r in 1..=5 {
                let s = msrss_strata(p, m, r).unwrap();
                worst = worst.max((s.mean() - p).abs());
                cells += 1;
            }
        }
    }
    c.check(worst <= 8.0 * f64::EPSILON, format!("mean of strata equals p on {cells} cells (max error {worst:.1e})"));

    // covariance of stage-0 order statistics at m = 3
    let one = rational("1").unwrap();
    let mut ok = true;
    for p in ["1/10", "1/4", "1/2", "3/4", "9/10"] {
        let q = rational(p).unwrap();
        let mom = order_statistic_moments(q.clone(), 3, 1).unwrap();
        let strata = msrss_strata(q, 3, 1).unwrap().probs;
        ok &= mom.means == strata;
        for i in 0..3 {
            for j in i + 1..3 {
                ok &= mom.cov[i][j] == &strata[i] * (&one - &strata[j]);
            }
        }
    }
    c.check(ok, "enumerated Cov(X_(i), X_(j)) = p_i (1 - p_j) for i < j at m = 3, exact");
    c
}

fn imperfect_ranking() -> (Criterion, Vec<(String, f64, f64)>) {
    let mut c = Criterion::new(6, "imperfect ranking");
    let mut rows = Vec::new();

    for (p, m, r) in [(0.5, 3, 2), (0.3, 4, 1)] {
        let (re, se) = bernoulli_point(p, 0.0, m, r, FULL_REPS);
        rows.push((format!("lambda=0 m={m} r={r} p={p}"), re, se));
        let z = (re - 1.0).abs() / se;
        c.check(z <= 3.0, format!("random ranking m={m} r={r} p={p}: RE {re:.4} +/- {se:.4} ({z:.2} stderr from 1)"));
    }

    let by_lambda: Vec<(f64, f64, f64)> = [0.7, 0.85, 1.0]
        .iter()
        .map(|&l| {
            let (re, se) = bernoulli_point(0.5, l, 4, 2, FULL_REPS);
            rows.push((format!("lambda={l} m=4 r=2 p=0.5"), re, se));
            (l, re, se)
        })
        .collect();
    for w in by_lambda.windows(2) {
        let (l0, re0, se0) = w[0];
        let (l1, re1, se1) = w[1];
        let z = (re1 - re0) / (se0 * se0 + se1 * se1).sqrt();
        c.check(
            z > 2.0,
            format!("m=4 r=2 p=0.5: RE({l1}) {re1:.3} exceeds RE({l0}) {re0:.3} by {z:.1} stderr (need > 2)"),
        );
    }

    let p_grid: Vec<f64> = (1..=9).map(|k| f64::from(k) / 10.0).collect();
    let config = SimulationConfig::new(
        PopulationGrid::Bernoulli(p_grid.clone()),
        vec![RankingStrategy::Perfect],
        vec![3],
        vec![1],
    )
    .with_replications(FULL_REPS)
    .with_seed(SEED);
    let sweep = run_sweep(&config).unwrap();
    let by_p: BTreeMap<u32, (f64, f64)> =
        sweep.rows.iter().map(|row| ((row.p * 10.0).round() as u32, row_re(row))).collect();
    let mut sym = Worst::new();
    for k in 1..5 {
        let (a, sa) = by_p[&k];
        let (b, sb) = by_p[&(10 - k)];
        rows.push((format!("m=3 r=1 p=0.{k}"), a, sa));
        rows.push((format!("m=3 r=1 p=0.{}", 10 - k), b, sb));
        let z = (a - b).abs() / (sa * sa + sb * sb).sqrt();
        sym.add(z, z <= 2.0, format!("p=0.{k} vs 0.{}", 10 - k));
    }
    c.check(
        sym.failures.is_empty(),
        format!("RE(p) = RE(1 - p) at m=3 r=1 within 2 stderr: {}", sym.summary("within")),
    );

    let mut rng = rankset::rng::seeded(SEED ^ 0xdc);
    for lambda in [0.3, 0.7, 0.85] {
        let n = 1_000_000;
        let (mut xs, mut ys) = (Vec::with_capacity(n), Vec::with_capacity(n));
        for _ in 0..n {
            let x = u8::from(rng.random::<f64>() < 0.5);
            let z: f64 = rng.sample(StandardNormal);
            xs.push(f64::from(x));
            ys.push(gen_dell_clutter_score(x, 0.5, lambda, z).unwrap());
        }
        let rho = pearson(&xs, &ys);
        c.check(
            (rho - lambda).abs() <= 0.01,
            format!("score correlation {rho:.4} for lambda {lambda} (10^6 draws, tolerance 0.01)"),
        );
    }
    (c, rows)
}

struct CovariateRun {
    /// (m, r) -> (RE, stderr, PSSR)
    cells: BTreeMap<(usize, u32), (f64, f64, f64)>,
}

fn covariate_run(ds: &Arc<Dataset>, covariate: &str, order: CovariateOrder, reps: usize) -> CovariateRun {
    let sweep = dataset_sweep(
        ds.clone(),
        &[covariate.to_string()],
        order,
        TABLE_M.to_vec(),
        TABLE_R.to_vec(),
        reps,
        SEED,
        default_workers(),
    )
    .unwrap();
    let cells = sweep
        .rows
        .iter()
        .map(|row| {
            let (re, se) = row_re(row);
            ((row.point.m, row.point.r), (re, se, row_pssr(row)))
        })
        .collect();
    CovariateRun { cells }
}

/// Checks the Y2 >= Y5 >= Y9 > 1 ordering cell by cell beyond 2 stderr.
fn ordering_check(c: &mut Criterion, label: &str, runs: &[(&str, CovariateRun)]) {
    let mut fails = Vec::new();
    let mut tightest = f64::INFINITY;
    for &(m, r) in runs[0].1.cells.keys() {
        for w in runs.windows(2) {
            let (a, sa, _) = w[0].1.cells[&(m, r)];
            let (b, sb, _) = w[1].1.cells[&(m, r)];
            let z = (a - b) / (sa * sa + sb * sb).sqrt();
            tightest = tightest.min(z);
            if z <= 2.0 {
                fails.push(format!("m={m} r={r} {} vs {} ({z:.1})", w[0].0, w[1].0));
            }
        }
        let (last, se, _) = runs[runs.len() - 1].1.cells[&(m, r)];
        let z = (last - 1.0) / se;
        tightest = tightest.min(z);
        if z <= 2.0 {
            fails.push(format!("m={m} r={r} {} vs 1 ({z:.1})", runs[runs.len() - 1].0));
        }
    }
    let names: Vec<&str> = runs.iter().map(|(n, _)| *n).collect();
    c.check(
        fails.is_empty(),
        format!(
            "{label}: RE {} > 1 beyond 2 stderr in all 12 cells (smallest margin {tightest:.1} stderr){}",
            names.join(" > "),
            if fails.is_empty() { String::new() } else { format!("; failing: {}", fails.join(", ")) }
        ),
    );
}

fn dataset_workflow() -> Criterion {
    let mut c = Criterion::new(7, "dataset workflow");
    let mapping = ColumnMapping::from_config_file(repo_file("data/wbcd.mapping")).unwrap();
    let covariates = ["Cell.size", "Epith.c.size", "Mitoses"];

    // bundled fixture, exact targets from the level enumerator
    let fixture = repo_file("data/wbcd_fixture.csv");
    let (ds, summary) = summarize_file(&fixture, &mapping).unwrap();
    let ds = Arc::new(ds);
    let (ys, _) = raw_columns(&fixture, "Cell.size");
    let p_fix = ys.iter().map(|&y| f64::from(y)).sum::<f64>() / ys.len() as f64;
    c.check(
        ds.n_rows() == ys.len() && ds.population_proportion() == p_fix,
        format!("fixture: {} rows, p = {} (direct count {p_fix})", ds.n_rows(), ds.population_proportion()),
    );
    let mut worst: f64 = 0.0;
    for cov in covariates {
        let (y, x) = raw_columns(&fixture, cov);
        let yf: Vec<f64> = y.iter().map(|&v| f64::from(v)).collect();
        let xf: Vec<f64> = x.iter().map(|&v| v as f64).collect();
        let target = pearson(&ranks(&yf), &ranks(&xf));
        worst = worst.max((summary.spearman[cov].unwrap() - target).abs());
    }
    c.check(worst < 1e-12, format!("fixture: Spearman matches direct computation (max diff {worst:.1e})"));

    let mut fixture_runs = Vec::new();
    let mut vs_exact = Worst::new();
    let mut sum_sq = 0.0;
    let mut vs_exact_pp = Worst::new();
    for cov in covariates {
        let reps = if cov == "Cell.size" { FULL_REPS } else { COVARIATE_REPS };
        let run = covariate_run(&ds, cov, CovariateOrder::Numeric, reps);
        let (y, x) = raw_columns(&fixture, cov);
        let levels = Levels::from_rows(&y, &x, false);
        for (&(m, r), &(re, se, pssr)) in &run.cells {
            let exact = levels.pssr(m, r);
            let z = (re - 1.0 / (1.0 - exact / 100.0)).abs() / se;
            sum_sq += z * z;
            vs_exact.add(z, true, format!("{cov} m={m} r={r}"));
            if cov == "Cell.size" {
                let gap = (pssr - exact).abs();
                vs_exact_pp.add(gap, gap <= 1.5, format!("m={m} r={r}"));
            }
        }
        fixture_runs.push((cov, run));
    }
    pooled(&mut c, "fixture: RE vs exact", &vs_exact, sum_sq);
    c.check(
        vs_exact_pp.failures.is_empty(),
        format!(
            "fixture: Cell.size PSSR at {FULL_REPS} reps within 1.5 pp of exact: {}",
            vs_exact_pp.summary("within")
        ),
    );
    ordering_check(&mut c, "fixture", &fixture_runs);

    // the real data, when fetched
    let real = repo_file("data/wbcd.csv");
    if !real.exists() {
        c.note("data/wbcd.csv not found; run scripts/fetch_wbcd.sh to add the full-data checks");
        return c;
    }
    let raw = pairwise_spearman(&real, &mapping).unwrap();
    for (cov, target) in REFERENCE_SPEARMAN {
        let got = raw[cov].unwrap();
        c.check(
            (got - target).abs() <= 0.01,
            format!("Spearman(Class, {cov}) = {got:.4}, reference {target} +/- 0.01"),
        );
    }
    let ds = Arc::new(load_csv(&real, &mapping).unwrap());
    c.check(
        ds.n_rows() == 699 && ds.successes() == 241,
        format!("{} malignant of {} rows (reference 241/699)", ds.successes(), ds.n_rows()),
    );

    let lexical = covariate_run(&ds, "Cell.size", CovariateOrder::Lexical, FULL_REPS);
    let (y, x) = raw_columns(&real, "Cell.size");
    let lex_levels = Levels::from_rows(&y, &x, true);
    let num_levels = Levels::from_rows(&y, &x, false);
    let mut vs_ref = Worst::new();
    let mut vs_exact = Worst::new();
    let mut sum_sq = 0.0;
    for (&(m, r), &(re, se, pssr)) in &lexical.cells {
        let gap = (pssr - REFERENCE_WBCD_PSSR[m - 3][r as usize - 1]).abs();
        vs_ref.add(gap, gap <= 1.5, format!("m={m} r={r}"));
        let exact = lex_levels.pssr(m, r);
        let z = (re - 1.0 / (1.0 - exact / 100.0)).abs() / se;
        sum_sq += z * z;
        vs_exact.add(z, true, format!("m={m} r={r}"));
    }
    c.check(
        vs_ref.failures.is_empty(),
        format!(
            "Cell.size (label order), {FULL_REPS} reps: |PSSR - reference| <= 1.5 pp: {}",
            vs_ref.summary("within")
        ),
    );
    pooled(&mut c, "Cell.size (label order): RE vs exact", &vs_exact, sum_sq);
    let numeric: Vec<String> = TABLE_M
        .iter()
        .flat_map(|&m| TABLE_R.iter().map(move |&r| (m, r)))
        .map(|(m, r)| format!("{:.2}", num_levels.pssr(m, r)))
        .collect();
    c.note(format!("Cell.size in numeric order, exact PSSR (m=3..5, r=1..4): {}", numeric.join(" ")));

    for (order, label) in [(CovariateOrder::Numeric, "numeric order"), (CovariateOrder::Lexical, "label order")] {
        let runs: Vec<(&str, CovariateRun)> =
            covariates.iter().map(|&cov| (cov, covariate_run(&ds, cov, order, COVARIATE_REPS))).collect();
        ordering_check(&mut c, label, &runs);
    }
    c
}

fn determinism() -> Criterion {
    let mut c = Criterion::new(8, "byte-identical output across worker counts");
    let dir = tempfile::tempdir().unwrap();
    let fixture = repo_file("data/wbcd_fixture.csv");
    let mapping = repo_file("data/wbcd.mapping");
    let jobs: Vec<(&str, Vec<String>)> = vec![
        (
            "simulate",
            [
                "simulate", "--p", "0.2", "0.5", "--m", "3", "4", "--r", "1", "2", "--lambda", "0.7", "1", "--reps",
                "4000", "--seed", "77",
            ]
            .map(String::from)
            .to_vec(),
        ),
        (
            "dataset",
            vec![
                "dataset".into(),
                fixture.display().to_string(),
                "--mapping".into(),
                mapping.display().to_string(),
                "--m".into(),
                "3".into(),
                "--r".into(),
                "1".into(),
                "2".into(),
                "--reps".into(),
                "4000".into(),
                "--seed".into(),
                "77".into(),
            ],
        ),
    ];
    for (name, args) in jobs {
        let mut outputs = Vec::new();
        for workers in ["1", "4", "8"] {
            let path = dir.path().join(format!("{name}-{workers}.csv"));
            let status = Command::new(env!("CARGO_BIN_EXE_rankset"))
                .args(&args)
                .args(["--workers", workers, "--no-timing", "-o", path.to_str().unwrap()])
                .status()
                .unwrap();
            assert!(status.success(), "{name} with {workers} workers failed");
            outputs.push(std::fs::read(&path).unwrap());
        }
        let same = outputs.windows(2).all(|w| w[0] == w[1]);
        c.check(same, format!("{name}: files for 1, 4 and 8 workers identical ({} bytes)", outputs[0].len()));
    }
    c
}

fn main() {
    let start = Instant::now();
    let mut done = Vec::new();
    let mut run = |c: Criterion| {
        c.print();
        done.push(c.passed());
    };
    run(oracle_vs_brute_force());
    run(hand_derived_cells());
    let (c3, grid) = perfect_ranking_grid();
    run(c3);
    run(headline());
    let (c6, extra) = imperfect_ranking();
    run(estimator_properties(&grid, &extra));
    run(c6);
    run(dataset_workflow());
    run(determinism());
    let passed = done.iter().filter(|&&ok| ok).count();
    println!("acceptance: {passed}/{} criteria passed in {:.0} s", done.len(), start.elapsed().as_secs_f64());
    if passed != done.len() {
        std::process::exit(1);
    }
}
