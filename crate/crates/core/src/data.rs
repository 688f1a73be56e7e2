//! Dataset ingestion for covariate-ranked sampling from a real population.
//!
//! A dataset is a binary response column plus named ordinal covariates. The
//! column mapping (which column is the response, which label counts as a
//! success, which columns are covariates) is supplied by the caller, either
//! directly or through a small `key = value` config file:
//!
//! ```text
//! # comments and blank lines are ignored
//! response = Class
//! success = malignant
//! failure = benign
//! covariates = Cell.size, Epith.c.size, Mitoses
//! missing = drop
//! order = numeric
//! ```
//!
//! `order` (`numeric` or `lexical`) only affects how covariate-ranked sampling
//! compares levels; summaries always use the numeric values.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::CovariateOrder;

/// Tokens treated as a missing cell.
const MISSING_TOKENS: [&str; 4] = ["", "?", "NA", "NaN"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MissingPolicy {
    /// Drop rows with a missing value in any mapped column.
    #[default]
    Drop,
    /// Fail on the first missing value.
    Error,
}

impl std::str::FromStr for MissingPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "drop" => Ok(Self::Drop),
            "error" => Ok(Self::Error),
            other => Err(Error::Config(format!("unknown missing-value policy '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMapping {
    pub response: String,
    pub success_label: String,
    pub failure_label: String,
    pub covariates: Vec<String>,
    #[serde(default)]
    pub missing: MissingPolicy,
    #[serde(default)]
    pub order: CovariateOrder,
}

impl ColumnMapping {
    /// Parses the `key = value` config format described in the module docs.
    pub fn from_config_str(text: &str) -> Result<Self> {
        let mut response = None;
        let mut success = None;
        let mut failure = None;
        let mut covariates = None;
        let mut missing = MissingPolicy::default();
        let mut order = CovariateOrder::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value'", lineno + 1)))?;
            let value = value.trim().to_string();
            match key.trim() {
                "response" => response = Some(value),
                "success" => success = Some(value),
                "failure" => failure = Some(value),
                "covariates" => {
                    covariates = Some(
                        value.split(',').map(|c| c.trim().to_string()).filter(|c| !c.is_empty()).collect::<Vec<_>>(),
                    )
                }
                "missing" => missing = value.parse()?,
                "order" => order = value.parse()?,
                other => return Err(Error::Config(format!("line {}: unknown key '{other}'", lineno + 1))),
            }
        }
        let need = |v: Option<String>, k: &str| v.ok_or_else(|| Error::Config(format!("mapping is missing '{k}'")));
        Ok(Self {
            response: need(response, "response")?,
            success_label: need(success, "success")?,
            failure_label: need(failure, "failure")?,
            covariates: covariates.unwrap_or_default(),
            missing,
            order,
        })
    }

    pub fn from_config_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_config_str(&std::fs::read_to_string(path)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    pub mapping: ColumnMapping,
    pub raw_rows: usize,
    pub dropped_rows: usize,
}

/// Binary response plus ordered, named integer covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    response: Vec<u8>,
    covariates: Vec<(String, Vec<i64>)>,
    provenance: Provenance,
}

impl Dataset {
    /// Builds a dataset from in-memory columns.
    pub fn new(response: Vec<u8>, covariates: Vec<(String, Vec<i64>)>) -> Result<Self> {
        if let Some(row) = response.iter().position(|&v| v > 1) {
            return Err(Error::Data { row: row + 1, message: "response must be 0 or 1".into() });
        }
        for (name, col) in &covariates {
            if col.len() != response.len() {
                return Err(Error::Config(format!(
                    "covariate '{name}' has {} values but the response has {}",
                    col.len(),
                    response.len()
                )));
            }
        }
        let n = response.len();
        Ok(Self {
            response,
            provenance: Provenance {
                source: "<memory>".into(),
                mapping: ColumnMapping {
                    response: "response".into(),
                    success_label: "1".into(),
                    failure_label: "0".into(),
                    covariates: covariates.iter().map(|(c, _)| c.clone()).collect(),
                    missing: MissingPolicy::Error,
                    order: CovariateOrder::Numeric,
                },
                raw_rows: n,
                dropped_rows: 0,
            },
            covariates,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.response.len()
    }

    pub fn response(&self) -> &[u8] {
        &self.response
    }

    pub fn covariate_names(&self) -> impl Iterator<Item = &str> {
        self.covariates.iter().map(|(n, _)| n.as_str())
    }

    pub fn covariate(&self, name: &str) -> Result<&[i64]> {
        self.covariates
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, c)| c.as_slice())
            .ok_or_else(|| Error::Config(format!("no covariate column named '{name}'")))
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    /// Mean of the response column.
    pub fn population_proportion(&self) -> f64 {
        if self.response.is_empty() {
            return f64::NAN;
        }
        self.successes() as f64 / self.n_rows() as f64
    }

    pub fn successes(&self) -> usize {
        self.response.iter().filter(|&&v| v == 1).count()
    }

    /// Spearman correlation between the response and a covariate.
    pub fn spearman(&self, covariate: &str) -> Result<f64> {
        let resp: Vec<f64> = self.response.iter().map(|&v| f64::from(v)).collect();
        let cov: Vec<f64> = self.covariate(covariate)?.iter().map(|&v| v as f64).collect();
        spearman(&resp, &cov)
    }

    /// Writes the dataset back out with the labels and column names it was loaded with.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let map = &self.provenance.mapping;
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec![map.response.clone()];
        header.extend(self.covariates.iter().map(|(n, _)| n.clone()));
        w.write_record(&header)?;
        for row in 0..self.n_rows() {
            let mut rec =
                vec![if self.response[row] == 1 { map.success_label.clone() } else { map.failure_label.clone() }];
            rec.extend(self.covariates.iter().map(|(_, c)| c[row].to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn summary(&self) -> Result<DatasetSummary> {
        let mut spearman = BTreeMap::new();
        for name in self.covariate_names() {
            spearman.insert(name.to_string(), defined(self.spearman(name))?);
        }
        Ok(DatasetSummary {
            n_rows: self.n_rows(),
            p: self.population_proportion(),
            spearman,
            spearman_before_drop: None,
        })
    }
}

/// JSON summary `{n_rows, p, spearman: {covariate: value}}`.
///
/// A correlation is `null` when the response or the covariate is constant.
///
/// `spearman_before_drop` holds pairwise-complete correlations over the raw
/// file and is only present when rows were dropped and the values differ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub n_rows: usize,
    pub p: f64,
    pub spearman: BTreeMap<String, Option<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub spearman_before_drop: Option<BTreeMap<String, Option<f64>>>,
}

fn is_missing(cell: &str) -> bool {
    let t = cell.trim();
    MISSING_TOKENS.iter().any(|m| t.eq_ignore_ascii_case(m))
}

struct RawTable {
    header: Vec<String>,
    rows: Vec<csv::StringRecord>,
}

impl RawTable {
    fn read<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
        let header = rdr.headers()?.iter().map(str::to_string).collect();
        let rows = rdr.records().collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(Self { header, rows })
    }

    fn index(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Config(format!("column '{name}' not found in header")))
    }
}

fn parse_label(cell: &str, map: &ColumnMapping, row: usize) -> Result<u8> {
    if cell == map.success_label {
        Ok(1)
    } else if cell == map.failure_label {
        Ok(0)
    } else {
        Err(Error::Data {
            row,
            message: format!("response label '{cell}' is neither '{}' nor '{}'", map.success_label, map.failure_label),
        })
    }
}

fn parse_score(cell: &str, column: &str, row: usize) -> Result<i64> {
    cell.parse::<i64>()
        .map_err(|_| Error::Data { row, message: format!("covariate '{column}' value '{cell}' is not an integer") })
}

/// Reads a CSV with a header row and applies `mapping`.
///
/// Row numbers in errors count data rows from 1 (the header is not counted).
pub fn load_csv(path: impl AsRef<Path>, mapping: &ColumnMapping) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)?;
    let mut ds = load_reader(file, mapping)?;
    ds.provenance.source = path.display().to_string();
    Ok(ds)
}

pub fn load_reader<R: Read>(input: R, mapping: &ColumnMapping) -> Result<Dataset> {
    let table = RawTable::read(input)?;
    let resp_idx = table.index(&mapping.response)?;
    let cov_idx = mapping.covariates.iter().map(|c| table.index(c)).collect::<Result<Vec<_>>>()?;

    let mut response = Vec::with_capacity(table.rows.len());
    let mut covs: Vec<Vec<i64>> = vec![Vec::with_capacity(table.rows.len()); cov_idx.len()];
    let mut dropped = 0;
    'rows: for (i, rec) in table.rows.iter().enumerate() {
        let row = i + 1;
        let cells: Vec<&str> =
            std::iter::once(resp_idx).chain(cov_idx.iter().copied()).map(|j| rec.get(j).unwrap_or("")).collect();
        if let Some(pos) = cells.iter().position(|c| is_missing(c)) {
            match mapping.missing {
                MissingPolicy::Drop => {
                    dropped += 1;
                    continue 'rows;
                }
                MissingPolicy::Error => {
                    let col = if pos == 0 { &mapping.response } else { &mapping.covariates[pos - 1] };
                    return Err(Error::Data { row, message: format!("missing value in '{col}'") });
                }
            }
        }
        response.push(parse_label(cells[0], mapping, row)?);
        for (k, cell) in cells[1..].iter().enumerate() {
            covs[k].push(parse_score(cell, &mapping.covariates[k], row)?);
        }
    }
    if response.is_empty() {
        return Err(Error::EmptyPopulation("no usable rows after cleaning".into()));
    }
    Ok(Dataset {
        response,
        covariates: mapping.covariates.iter().cloned().zip(covs).collect(),
        provenance: Provenance {
            source: "<reader>".into(),
            mapping: mapping.clone(),
            raw_rows: table.rows.len(),
            dropped_rows: dropped,
        },
    })
}

/// Spearman correlations computed per covariate over rows where both the
/// response and that covariate are present (no listwise deletion).
pub fn pairwise_spearman(path: impl AsRef<Path>, mapping: &ColumnMapping) -> Result<BTreeMap<String, Option<f64>>> {
    let table = RawTable::read(std::fs::File::open(path)?)?;
    let resp_idx = table.index(&mapping.response)?;
    let mut out = BTreeMap::new();
    for cov in &mapping.covariates {
        let j = table.index(cov)?;
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (i, rec) in table.rows.iter().enumerate() {
            let (a, b) = (rec.get(resp_idx).unwrap_or(""), rec.get(j).unwrap_or(""));
            if is_missing(a) || is_missing(b) {
                continue;
            }
            xs.push(f64::from(parse_label(a, mapping, i + 1)?));
            ys.push(parse_score(b, cov, i + 1)? as f64);
        }
        out.insert(cov.clone(), defined(spearman(&xs, &ys))?);
    }
    Ok(out)
}

/// Loads, summarizes, and when rows were dropped also reports the
/// pairwise-complete correlations if they differ.
pub fn summarize_file(path: impl AsRef<Path>, mapping: &ColumnMapping) -> Result<(Dataset, DatasetSummary)> {
    let path = path.as_ref();
    let ds = load_csv(path, mapping)?;
    let mut summary = ds.summary()?;
    if ds.provenance.dropped_rows > 0 {
        let raw = pairwise_spearman(path, mapping)?;
        let differs = |a: Option<f64>, b: Option<f64>| match (a, b) {
            (Some(a), Some(b)) => (a - b).abs() > 1e-12,
            (a, b) => a.is_some() != b.is_some(),
        };
        if raw.iter().any(|(k, v)| differs(summary.spearman[k], *v)) {
            summary.spearman_before_drop = Some(raw);
        }
    }
    Ok((ds, summary))
}

fn defined(r: Result<f64>) -> Result<Option<f64>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::Degenerate(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Midranks (1-based, ties get the average of the positions they span).
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let avg = (start + end + 1) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = avg;
        }
        start = end;
    }
    ranks
}

/// Spearman rank correlation with midrank tie handling.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch { expected: x.len(), actual: y.len() });
    }
    if x.len() < 2 {
        return Err(Error::InvalidParameter("spearman needs at least two rows".into()));
    }
    pearson(&midranks(x), &midranks(y))
}

fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Degenerate("correlation undefined for a constant column".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}
