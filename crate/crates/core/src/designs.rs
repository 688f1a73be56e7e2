//! SRS, RSS and multistage RSS sample draws.
//!
//! One MSRSS cycle identifies `m^(r+1)` units, shuffles them into random sets
//! and then repeatedly ranks-and-selects: at stage `s` the current units are
//! cut into consecutive groups of `m`, and group `c` keeps its unit with
//! judgment rank `c mod m`. Every block of `m` consecutive groups therefore
//! forms one ranked set, and after `r` stages exactly `m` units remain, the
//! `i`-th of which is the rank-`i` judgment order statistic of the last stage.
//! With `r = 1` this is ordinary RSS.

use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DesignKind, DesignSpec, PopulationModel, RankingStrategy, Selector, Unit, UnitSource};

/// Default ceiling on units identified per cycle.
pub const DEFAULT_UNIT_CAP: u64 = 10_000_000;

/// Measured binary values indexed by judgment rank and cycle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankedSample {
    design: DesignSpec,
    // cycle-major: values[j * m + i]
    values: Vec<u8>,
    units_identified: u128,
}

impl RankedSample {
    /// Wraps measured values laid out cycle-major (`values[j * m + i]`).
    pub fn new(design: DesignSpec, values: Vec<u8>) -> Result<Self> {
        if values.len() != design.sample_size() {
            return Err(Error::LengthMismatch { expected: design.sample_size(), actual: values.len() });
        }
        if values.iter().any(|&v| v > 1) {
            return Err(Error::InvalidParameter("sample values must be 0 or 1".into()));
        }
        let units_identified =
            design.units_identified().ok_or_else(|| Error::InvalidParameter("design size overflows".into()))?;
        Ok(Self { design, values, units_identified })
    }

    pub fn design(&self) -> &DesignSpec {
        &self.design
    }

    pub fn m(&self) -> usize {
        self.design.m
    }

    pub fn n(&self) -> usize {
        self.design.n
    }

    /// Value of the rank-`i` unit in cycle `j` (both 0-based).
    pub fn get(&self, i: usize, j: usize) -> u8 {
        self.values[j * self.design.m + i]
    }

    pub fn values(&self) -> &[u8] {
        &self.values
    }

    pub fn units_identified(&self) -> u128 {
        self.units_identified
    }

    /// Units whose response was read.
    pub fn units_measured(&self) -> usize {
        self.values.len()
    }

    /// Per-rank sample proportions `(1/n) sum_j X[i]j`.
    pub fn stratum_means(&self) -> Vec<f64> {
        let (m, n) = (self.m(), self.n());
        (0..m).map(|i| (0..n).map(|j| f64::from(self.get(i, j))).sum::<f64>() / n as f64).collect()
    }

    fn stage_label(&self) -> u32 {
        match self.design.kind {
            DesignKind::Srs => 0,
            _ => self.design.r,
        }
    }

    /// CSV with columns `stage_r, rank_i, cycle_j, value` (1-based indices;
    /// `stage_r = 0` marks an SRS sample).
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let stage = self.stage_label();
        for j in 0..self.n() {
            for i in 0..self.m() {
                w.serialize(SampleRow { stage_r: stage, rank_i: i + 1, cycle_j: j + 1, value: self.get(i, j) })?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the format produced by [`RankedSample::write_csv`]. Every
    /// `(rank, cycle)` cell must appear exactly once.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).comment(Some(b'#')).from_reader(input);
        let rows = rdr.deserialize::<SampleRow>().collect::<std::result::Result<Vec<_>, _>>()?;
        let first = rows.first().ok_or_else(|| Error::InvalidParameter("sample file is empty".into()))?;
        let stage = first.stage_r;
        if let Some(pos) = rows.iter().position(|r| r.stage_r != stage) {
            return Err(Error::Data { row: pos + 1, message: "mixed stage_r values".into() });
        }
        let m = rows.iter().map(|r| r.rank_i).max().unwrap_or(0);
        let n = rows.iter().map(|r| r.cycle_j).max().unwrap_or(0);
        if rows.iter().any(|r| r.rank_i == 0 || r.cycle_j == 0) {
            return Err(Error::InvalidParameter("rank_i and cycle_j are 1-based".into()));
        }
        let design = match stage {
            0 => DesignSpec::srs(m * n)?,
            1 => DesignSpec::rss(m, n)?,
            r => DesignSpec::msrss(m, r, n)?,
        };
        let mut values = vec![u8::MAX; m * n];
        for (pos, row) in rows.iter().enumerate() {
            let slot = &mut values[(row.cycle_j - 1) * m + row.rank_i - 1];
            if *slot != u8::MAX {
                return Err(Error::Data {
                    row: pos + 1,
                    message: format!("duplicate cell (rank {}, cycle {})", row.rank_i, row.cycle_j),
                });
            }
            if row.value > 1 {
                return Err(Error::Data { row: pos + 1, message: format!("value {} is not 0 or 1", row.value) });
            }
            *slot = row.value;
        }
        if values.contains(&u8::MAX) {
            return Err(Error::InvalidParameter(format!("sample is incomplete: expected {m} x {n} cells")));
        }
        Self::new(design, values)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct SampleRow {
    stage_r: u32,
    rank_i: usize,
    cycle_j: usize,
    value: u8,
}

/// Reusable buffers for repeated cycle draws.
#[derive(Debug, Default)]
pub(crate) struct CycleSampler {
    units: Vec<Unit>,
    selector: Selector,
}

impl CycleSampler {
    /// Draws one MSRSS cycle and writes the `m` measured values to `out`.
    pub(crate) fn msrss_cycle<R: Rng + ?Sized>(
        &mut self,
        source: &UnitSource,
        m: usize,
        r: u32,
        rng: &mut R,
        out: &mut [u8],
    ) {
        debug_assert_eq!(out.len(), m);
        let total = m.pow(r + 1);
        self.units.resize(total, Unit { response: 0, ranking_score: 0.0 });
        source.fill(&mut self.units, rng);
        self.units.shuffle(rng);

        let rule = source.rule();
        let mut len = total;
        for _ in 0..r {
            let groups = len / m;
            for c in 0..groups {
                // group c starts at c*m >= c, so writing slot c never clobbers an unread group
                let picked = self.selector.select(&self.units[c * m..(c + 1) * m], c % m, rule, rng);
                self.units[c] = picked;
            }
            len = groups;
        }
        for (slot, u) in out.iter_mut().zip(&self.units[..m]) {
            *slot = u.response;
        }
    }

    pub(crate) fn srs<R: Rng + ?Sized>(&mut self, source: &UnitSource, rng: &mut R, out: &mut [u8]) {
        for slot in out {
            *slot = source.draw(rng).response;
        }
    }
}

/// Simple random sample of size `sample_size`, drawn with replacement.
pub fn draw_srs<R: Rng + ?Sized>(pop: &PopulationModel, sample_size: usize, rng: &mut R) -> Result<RankedSample> {
    let design = DesignSpec::srs(sample_size)?;
    let source = UnitSource::new(pop, &RankingStrategy::Random)?;
    let mut values = vec![0u8; sample_size];
    CycleSampler::default().srs(&source, rng, &mut values);
    RankedSample::new(design, values)
}

/// Ranked set sample with set size `m` over `n` cycles.
pub fn draw_rss<R: Rng + ?Sized>(
    pop: &PopulationModel,
    m: usize,
    n: usize,
    strategy: &RankingStrategy,
    rng: &mut R,
) -> Result<RankedSample> {
    let design = DesignSpec::rss(m, n)?;
    draw_design(pop, design, strategy, DEFAULT_UNIT_CAP, rng)
}

/// `r`-th stage ranked set sample with set size `m` over `n` cycles.
pub fn draw_msrss<R: Rng + ?Sized>(
    pop: &PopulationModel,
    m: usize,
    r: u32,
    n: usize,
    strategy: &RankingStrategy,
    rng: &mut R,
) -> Result<RankedSample> {
    draw_msrss_capped(pop, m, r, n, strategy, DEFAULT_UNIT_CAP, rng)
}

/// [`draw_msrss`] with an explicit ceiling on units identified per cycle.
pub fn draw_msrss_capped<R: Rng + ?Sized>(
    pop: &PopulationModel,
    m: usize,
    r: u32,
    n: usize,
    strategy: &RankingStrategy,
    unit_cap: u64,
    rng: &mut R,
) -> Result<RankedSample> {
    let design = DesignSpec::msrss(m, r, n)?;
    draw_design(pop, design, strategy, unit_cap, rng)
}

pub(crate) fn check_cap(design: &DesignSpec, unit_cap: u64) -> Result<()> {
    match design.units_per_cycle() {
        Some(units) if units <= u128::from(unit_cap) => Ok(()),
        Some(units) => Err(Error::TooLarge { units, cap: unit_cap }),
        None => Err(Error::TooLarge { units: u128::MAX, cap: unit_cap }),
    }
}

fn draw_design<R: Rng + ?Sized>(
    pop: &PopulationModel,
    design: DesignSpec,
    strategy: &RankingStrategy,
    unit_cap: u64,
    rng: &mut R,
) -> Result<RankedSample> {
    check_cap(&design, unit_cap)?;
    let source = UnitSource::new(pop, strategy)?;
    let (m, n) = (design.m, design.n);
    let mut values = vec![0u8; m * n];
    let mut sampler = CycleSampler::default();
    for cycle in values.chunks_exact_mut(m) {
        sampler.msrss_cycle(&source, m, design.r, rng, cycle);
    }
    RankedSample::new(design, values)
}
