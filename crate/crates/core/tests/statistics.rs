use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use swarmlab::scheduler::{derive_seed, sample_assignment};
use swarmlab::sybil::{expected_support, CollusionTracker};

/// 0.999 quantile of chi-square with 44 degrees of freedom (scipy `chi2.ppf`).
const CHI2_44_P001: f64 = 78.749_524_228_043_03;

#[test]
fn scheduler_draws_every_pair_uniformly() {
    let n = 10;
    let draws = 100_000;
    let seed = derive_seed(&[0x5a; 32], b"node-uniformity").unwrap();
    let a = sample_assignment(&seed, n, &BTreeSet::new(), draws).unwrap();
    let mut counts = vec![0u64; n * n];
    for p in &a.pairs {
        let (i, j) = p.canonical();
        counts[i * n + j] += 1;
    }
    let pairs = (n * (n - 1) / 2) as f64;
    let expected = draws as f64 / pairs;
    let sd = (draws as f64 * (1.0 / pairs) * (1.0 - 1.0 / pairs)).sqrt();
    let mut chi2 = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let c = counts[i * n + j] as f64;
            assert!((c - expected).abs() < 5.0 * sd, "pair ({i},{j}): {c} vs {expected:.1}");
            chi2 += (c - expected).powi(2) / expected;
        }
    }
    assert!(chi2 < CHI2_44_P001, "chi-square {chi2:.2}");
}

#[test]
fn order_within_a_pair_is_a_fair_coin() {
    let seed = derive_seed(&[3; 32], b"node-order").unwrap();
    let a = sample_assignment(&seed, 6, &BTreeSet::new(), 40_000).unwrap();
    let low_first = a.pairs.iter().filter(|p| p.first < p.second).count() as f64;
    let sd = (40_000.0f64 * 0.25).sqrt();
    assert!((low_first - 20_000.0).abs() < 4.0 * sd, "{low_first}");
}

#[test]
fn random_rankings_give_the_baseline_support_rate() {
    let n = 10;
    let rounds = 10_000;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut tracker = CollusionTracker::new(n);
    let everyone: Vec<usize> = (0..n).collect();
    for _ in 0..rounds {
        let top_half: Vec<(usize, BTreeSet<usize>)> = (0..n)
            .map(|judge| {
                let mut others: Vec<usize> = (0..n).filter(|&j| j != judge).collect();
                others.shuffle(&mut rng);
                (judge, others[..n.div_ceil(2)].iter().copied().collect())
            })
            .collect();
        tracker.update_support(&everyone, &top_half);
    }
    let target = expected_support(n);
    assert!((target - 10.0 / 18.0).abs() < 1e-15);
    let per_pair_se = (target * (1.0 - target) / rounds as f64).sqrt();
    let mut sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                assert_eq!(tracker.c(i, i), None);
                continue;
            }
            let c = tracker.c(i, j).unwrap();
            assert!((c - target).abs() < 4.5 * per_pair_se, "c[{i}][{j}] = {c}");
            sum += c;
        }
    }
    let mean = sum / (n * (n - 1)) as f64;
    let mean_se = per_pair_se / ((n * (n - 1)) as f64).sqrt();
    assert!((mean - target).abs() < 3.0 * mean_se, "mean {mean} vs {target}");
}
