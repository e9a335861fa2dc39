mod common;

use std::collections::BTreeSet;

use common::*;
use rand::seq::SliceRandom;
use rand::Rng;
use shiftnas::data::{synthetic, SyntheticPreset};
use shiftnas::metrics::{cross_task_rank, global_topk_hits, RankedPair};
use shiftnas::rng::rng_from_seed;
use shiftnas::space::{ArchGenome, Dims, Preset, SearchSpace};
use shiftnas::supernet::Supernet;
use shiftnas::train::{strict_fair_round, train_strict_fair, train_uniform, Sampler, TrainConfig};

fn tiny(hidden_dim: usize) -> SearchSpace {
    SearchSpace::preset(
        Preset::Tiny,
        Dims {
            input_dim: 16,
            hidden_dim,
            num_classes: 3,
        },
    )
}

fn per_block_counts(space: &SearchSpace, genomes: impl IntoIterator<Item = ArchGenome>) -> Vec<Vec<u64>> {
    let mut counts: Vec<Vec<u64>> = (0..space.num_blocks()).map(|b| vec![0; space.num_choices(b)]).collect();
    for g in genomes {
        for (b, &c) in g.choices().iter().enumerate() {
            counts[b][c] += 1;
        }
    }
    counts
}

#[test]
fn sampler_passes_chi_square() {
    let space = tiny(8);
    let mut rng = rng_from_seed(40);
    let counts = per_block_counts(&space, (0..40_000).map(|_| space.sample_uniform(&mut rng)));
    for (b, c) in counts.iter().enumerate() {
        let p = chi_square_uniform_p(c);
        assert!(p > 0.001, "block {b}: p = {p}");
    }
}

#[test]
fn training_stream_passes_chi_square() {
    let space = tiny(4);
    let data = synthetic(SyntheticPreset::Rings, 1);
    let mut net = Supernet::init(space.clone(), 0).unwrap();
    let cfg = TrainConfig {
        steps: 10_000,
        batch_size: 1,
        seed: 77,
        ..TrainConfig::default()
    };
    let log = train_uniform(&mut net, &data, &cfg).unwrap();
    let counts = per_block_counts(&space, log.records.iter().map(|r| r.genome.clone()));
    assert_eq!(counts, log.choice_counts);
    for (b, c) in counts.iter().enumerate() {
        let p = chi_square_uniform_p(c);
        assert!(p > 0.001, "block {b}: p = {p}");
    }
}

#[test]
fn strict_fair_spread_is_zero_at_every_round_boundary() {
    let space = tiny(4);
    let data = synthetic(SyntheticPreset::Rings, 1);
    let mut net = Supernet::init(space.clone(), 0).unwrap();
    let cfg = TrainConfig {
        steps: 4 * 50,
        batch_size: 2,
        sampler: Sampler::StrictFair,
        seed: 3,
        ..TrainConfig::default()
    };
    let log = train_strict_fair(&mut net, &data, &cfg).unwrap();
    let mut counts = vec![vec![0u64; 4]; space.num_blocks()];
    for (step, r) in log.records.iter().enumerate() {
        for (b, &c) in r.genome.choices().iter().enumerate() {
            counts[b][c] += 1;
        }
        if (step + 1) % 4 == 0 {
            let k = (step as u64 + 1) / 4;
            assert!(counts.iter().flatten().all(|&n| n == k), "spread after round {k}");
        }
    }
}

#[test]
fn strict_fair_rounds_repeat_at_the_uniform_permutation_rate() {
    // Consecutive rounds of one block share a permutation with chance 1/4! = 1/24.
    let mut rng = rng_from_seed(12);
    let blocks = 4;
    let rounds: Vec<Vec<Vec<usize>>> = (0..1000).map(|_| strict_fair_round(blocks, 4, &mut rng)).collect();
    let repeats = rounds
        .windows(2)
        .map(|w| (0..blocks).filter(|&b| w[0][b] == w[1][b]).count())
        .sum::<usize>() as f64;
    let trials = 999.0 * blocks as f64;
    let p = 1.0 / 24.0;
    let sd = (trials * p * (1.0 - p)).sqrt();
    assert!((repeats - trials * p).abs() < 4.0 * sd, "repeats {repeats}, expected {}", trials * p);
}

#[test]
fn mutation_flip_rate_matches_probability() {
    let space = tiny(8);
    let mut rng = rng_from_seed(5);
    for prob in [0.1, 0.5, 0.9] {
        let mut flips = vec![0u32; space.num_blocks()];
        for _ in 0..10_000 {
            let g = space.sample_uniform(&mut rng);
            let m = space.mutate(&g, prob, &mut rng).unwrap();
            for (b, (x, y)) in g.choices().iter().zip(m.choices()).enumerate() {
                flips[b] += (x != y) as u32;
            }
        }
        for f in flips {
            assert!((f as f64 / 10_000.0 - prob).abs() < 0.02, "prob {prob}: rate {}", f as f64 / 1e4);
        }
    }
}

#[test]
fn crossover_takes_each_parent_half_the_time() {
    let space = tiny(8);
    let mut rng = rng_from_seed(6);
    let a = ArchGenome::new(vec![0, 0, 0, 0]);
    let b = ArchGenome::new(vec![3, 3, 3, 3]);
    let mut from_a = [0u32; 4];
    for _ in 0..10_000 {
        let child = space.crossover(&a, &b, &mut rng).unwrap();
        for (i, &c) in child.choices().iter().enumerate() {
            assert!(c == 0 || c == 3);
            from_a[i] += (c == 0) as u32;
        }
    }
    for n in from_a {
        assert!((n as f64 / 10_000.0 - 0.5).abs() < 0.02);
    }
}

#[test]
fn random_estimator_hits_a_third_of_the_good_set() {
    let mut rng = rng_from_seed(7);
    let good: BTreeSet<String> = (0..10).map(|i| format!("g{i:02}")).collect();
    let ids: Vec<String> = good.iter().cloned().chain((0..20).map(|i| format!("p{i:02}"))).collect();
    let trials = 10_000;
    let mut total = 0usize;
    for _ in 0..trials {
        let pairs: Vec<RankedPair> = ids
            .iter()
            .map(|id| RankedPair {
                id: id.clone(),
                estimated: rng.random(),
                truth: 0.0,
            })
            .collect();
        total += global_topk_hits(&pairs, &good, 10).unwrap();
    }
    let mean = total as f64 / trials as f64;
    assert!((mean - 10.0 / 3.0).abs() < 0.1, "mean hits {mean}");
}

#[test]
fn independent_task_rankings_overlap_by_a_third() {
    let mut rng = rng_from_seed(8);
    let ids: Vec<String> = (0..30).map(|i| format!("a{i:02}")).collect();
    let trials = 4000;
    let mut overlap = 0.0;
    for _ in 0..trials {
        let mut perm: Vec<usize> = (0..30).collect();
        perm.shuffle(&mut rng);
        let a: Vec<RankedPair> = ids
            .iter()
            .enumerate()
            .map(|(i, id)| RankedPair { id: id.clone(), estimated: 0.0, truth: i as f64 })
            .collect();
        let b: Vec<RankedPair> = ids
            .iter()
            .enumerate()
            .map(|(i, id)| RankedPair { id: id.clone(), estimated: 0.0, truth: perm[i] as f64 })
            .collect();
        overlap += cross_task_rank(&a, &b, 10).unwrap().global_overlap;
    }
    let mean = overlap / trials as f64;
    assert!((mean - 1.0 / 3.0).abs() < 0.01, "mean overlap {mean}");
}
