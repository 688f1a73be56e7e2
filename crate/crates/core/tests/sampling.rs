use std::collections::HashSet;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rankset::designs::{draw_msrss, draw_rss, draw_srs};
use rankset::model::{draw_units, gen_dell_clutter_score};
use rankset::rng::seeded;
use rankset::{Dataset, PopulationModel, RankingStrategy};

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

fn binom(n: u64, k: u64) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// P(rank-i order statistic of m iid Bernoulli(q) is 1), i counted from 0.
fn order_stat_one(q: f64, m: u64, i: u64) -> f64 {
    (m - i..=m).map(|k| binom(m, k) * q.powi(k as i32) * (1.0 - q).powi((m - k) as i32)).sum()
}

#[test]
fn dell_clutter_score_has_correlation_lambda() {
    let mut rng = seeded(11);
    for &(p, lambda) in &[(0.5, 0.7), (0.5, 0.85), (0.5, 0.3), (0.2, 0.7)] {
        let n = 1_000_000;
        let mut xs = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        for _ in 0..n {
            let x = u8::from(rng.random::<f64>() < p);
            let z: f64 = rng.sample(StandardNormal);
            xs.push(f64::from(x));
            ys.push(gen_dell_clutter_score(x, p, lambda, z).unwrap());
        }
        let rho = pearson(&xs, &ys);
        assert!((rho - lambda).abs() <= 0.01, "p={p} lambda={lambda}: corr {rho}");
    }
}

#[test]
fn dataset_draws_only_return_existing_rows() {
    let response = vec![0, 1, 1, 0, 1, 0, 0];
    let cov: Vec<i64> = vec![3, 9, 7, 1, 8, 2, 5];
    let rows: HashSet<(u8, i64)> = response.iter().copied().zip(cov.iter().copied()).collect();
    let ds = Arc::new(Dataset::new(response, vec![("y".into(), cov)]).unwrap());
    let pop = PopulationModel::dataset(ds).unwrap();
    let mut rng = seeded(3);
    let units = draw_units(&pop, &RankingStrategy::covariate("y"), 50_000, &mut rng).unwrap();
    let mut seen = HashSet::new();
    for u in &units {
        let key = (u.response, u.ranking_score as i64);
        assert!(rows.contains(&key), "fabricated unit {u:?}");
        seen.insert(key);
    }
    // with replacement: every row shows up over many draws
    assert_eq!(seen.len(), rows.len());
}

#[test]
fn srs_mean_tracks_p() {
    let pop = PopulationModel::bernoulli(0.34).unwrap();
    let mut rng = seeded(5);
    let sample = draw_srs(&pop, 200_000, &mut rng).unwrap();
    let mean = sample.values().iter().map(|&v| f64::from(v)).sum::<f64>() / 200_000.0;
    assert!((mean - 0.34).abs() < 0.005, "mean {mean}");
}

#[test]
fn rss_lowest_rank_frequency() {
    let pop = PopulationModel::bernoulli(0.5).unwrap();
    let mut rng = seeded(8);
    let reps = 100_000;
    let sample = draw_rss(&pop, 3, reps, &RankingStrategy::Perfect, &mut rng).unwrap();
    let freq = (0..reps).filter(|&j| sample.get(0, j) == 1).count() as f64 / reps as f64;
    let target = order_stat_one(0.5, 3, 0);
    assert!((target - 0.125).abs() < 1e-15);
    assert!((freq - target).abs() < 0.01, "freq {freq}");
}

#[test]
fn msrss_stage_one_is_rss() {
    let pop = PopulationModel::bernoulli(0.3).unwrap();
    for strategy in [RankingStrategy::Perfect, RankingStrategy::dell_clutter(0.7).unwrap()] {
        let a = draw_rss(&pop, 4, 25, &strategy, &mut seeded(21)).unwrap();
        let b = draw_msrss(&pop, 4, 1, 25, &strategy, &mut seeded(21)).unwrap();
        assert_eq!(a.values(), b.values());
    }
}

#[test]
fn msrss_stage_two_lowest_rank() {
    let pop = PopulationModel::bernoulli(0.5).unwrap();
    let reps = 100_000;
    let sample = draw_msrss(&pop, 3, 2, reps, &RankingStrategy::Perfect, &mut seeded(13)).unwrap();
    let freq = (0..reps).filter(|&j| sample.get(0, j) == 1).count() as f64 / reps as f64;
    // stage-2 rank 1 is a success only if all three stage-1 units are
    let stage1: f64 = (0..3).map(|i| order_stat_one(0.5, 3, i)).product();
    assert!((stage1 - 7.0 / 128.0).abs() < 1e-15);
    assert!((freq - stage1).abs() < 0.005, "freq {freq}");
}

#[test]
fn stratum_frequencies_by_strategy() {
    let pop = PopulationModel::bernoulli(0.4).unwrap();
    let reps = 60_000;
    let means = |s: &RankingStrategy| draw_msrss(&pop, 3, 1, reps, s, &mut seeded(99)).unwrap().stratum_means();
    let random = means(&RankingStrategy::Random);
    let noisy = means(&RankingStrategy::dell_clutter(0.7).unwrap());
    let perfect = means(&RankingStrategy::Perfect);
    for &v in &random {
        assert!((v - 0.4).abs() < 0.01);
    }
    for (i, &got) in perfect.iter().enumerate() {
        let target = order_stat_one(0.4, 3, i as u64);
        assert!((got - target).abs() < 0.01, "rank {i}: {got} vs {target}");
    }
    // imperfect ranking spreads the strata less than perfect ranking
    assert!(perfect[0] < noisy[0] && noisy[0] < random[0]);
    assert!(perfect[2] > noisy[2] && noisy[2] > random[2]);
}

#[test]
fn sample_csv_roundtrip() {
    let pop = PopulationModel::bernoulli(0.5).unwrap();
    for sample in [
        draw_msrss(&pop, 3, 2, 4, &RankingStrategy::Perfect, &mut seeded(1)).unwrap(),
        draw_rss(&pop, 2, 3, &RankingStrategy::Random, &mut seeded(2)).unwrap(),
        draw_srs(&pop, 5, &mut seeded(3)).unwrap(),
    ] {
        let mut buf = Vec::new();
        sample.write_csv(&mut buf).unwrap();
        let back = rankset::RankedSample::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.values(), sample.values());
        assert_eq!(back.design(), sample.design());
    }
}
