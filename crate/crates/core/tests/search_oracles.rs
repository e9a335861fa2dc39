mod common;

use std::collections::BTreeSet;

use shiftnas::data::{synthetic, Dataset, SyntheticPreset};
use shiftnas::rng::{derive_seed, rng_from_seed};
use shiftnas::search::{
    generate_candidates, search, split_batches, update_top_t, EAConfig, HistoryEvent, Member, Phase,
};
use shiftnas::space::{ArchGenome, Dims, Preset, SearchSpace};
use shiftnas::supernet::{GradAggregate, Supernet, UpdateScope};
use shiftnas::train::{evaluate_arch, train, BatchStream, EvalSpec, TrainConfig};

fn setup() -> (SearchSpace, Dataset, Supernet) {
    let data = synthetic(SyntheticPreset::Rings, 2);
    let space = SearchSpace::preset(
        Preset::Tiny,
        Dims {
            input_dim: 16,
            hidden_dim: 8,
            num_classes: 3,
        },
    );
    let mut net = Supernet::init(space.clone(), 1).unwrap();
    train(
        &mut net,
        &data,
        &TrainConfig {
            steps: 200,
            seed: 3,
            ..TrainConfig::default()
        },
    )
    .unwrap();
    (space, data, net)
}

fn quick(seed: u64) -> EAConfig {
    EAConfig {
        population_t: 6,
        iterations: 3,
        shift_lr: 0.2,
        shift_samples_per_iter: 20,
        shift_batch_size: 4,
        eval: EvalSpec {
            batches: 2,
            batch_size: 32,
            seed: 0,
        },
        seed,
        ..EAConfig::default()
    }
}

fn candidates_at(history: &[HistoryEvent], iteration: usize) -> Vec<ArchGenome> {
    history
        .iter()
        .filter(|e| e.iteration == iteration && e.phase == Phase::Candidate)
        .map(|e| e.genome.clone())
        .collect()
}

#[test]
fn one_iteration_replays_step_by_step() {
    let (space, data, net) = setup();
    let cfg = EAConfig {
        population_t: 2,
        iterations: 1,
        ..quick(9)
    };
    let mut searched = net.clone();
    let result = search(&mut searched, &data, &cfg, &[]).unwrap();

    // replay from public pieces
    let eval = EvalSpec {
        seed: derive_seed(cfg.seed, "search/eval"),
        ..cfg.eval
    };
    let mut rng = rng_from_seed(derive_seed(cfg.seed, "search/ea"));
    let score = |n: &Supernet, g: &ArchGenome| evaluate_arch(n, g, &data, &eval).unwrap();
    let boot: Vec<Member> = generate_candidates(&[], &cfg, &mut rng, &space)
        .unwrap()
        .iter()
        .map(|g| Member::new(&space, score(&net, g)).unwrap())
        .collect();
    let top = update_top_t(&[], &boot, &cfg, &space);
    let parents: Vec<ArchGenome> = top.iter().map(|m| m.genome.clone()).collect();
    let cands = generate_candidates(&parents, &cfg, &mut rng, &space).unwrap();
    let mut stream = BatchStream::new(&data.splits().train, derive_seed(cfg.seed, "search/shift")).unwrap();
    let mut agg = GradAggregate::new();
    let mut accs = Vec::new();
    for (g, batches) in cands.iter().zip(split_batches(cfg.shift_samples_per_iter, cands.len())) {
        accs.push(score(&net, g).accuracy);
        for _ in 0..batches {
            let (x, y) = data.gather(&stream.next_batch(cfg.shift_batch_size)).unwrap();
            agg.add(&net.loss_and_grads(g, &x, &y).unwrap().1).unwrap();
        }
    }
    let mut replayed = net.clone();
    replayed.apply_update(&agg, cfg.shift_lr, agg.contributions(), UpdateScope::ALL).unwrap();

    assert_eq!(candidates_at(&result.history, 1), cands);
    let logged: Vec<f64> = result
        .history
        .iter()
        .filter(|e| e.phase == Phase::Candidate)
        .map(|e| e.accuracy)
        .collect();
    assert_eq!(logged, accs, "candidates must be scored on the pre-update weights");
    assert_eq!(searched.checksum(), replayed.checksum());
}

#[test]
fn frozen_search_leaves_weights_alone() {
    let (_, data, net) = setup();
    let mut frozen = net.clone();
    search(
        &mut frozen,
        &data,
        &EAConfig {
            shifting: false,
            ..quick(1)
        },
        &[],
    )
    .unwrap();
    assert_eq!(frozen, net);

    let mut zero_lr = net.clone();
    search(
        &mut zero_lr,
        &data,
        &EAConfig {
            shift_lr: 0.0,
            ..quick(1)
        },
        &[],
    )
    .unwrap();
    assert!(zero_lr.values().eq(net.values()));
    assert!(zero_lr.train_steps() > net.train_steps(), "updates were applied with lr 0");
}

#[test]
fn shifting_diverges_only_after_the_first_update() {
    let (_, data, net) = setup();
    let (mut on, mut off) = (net.clone(), net.clone());
    let r_on = search(&mut on, &data, &quick(5), &[]).unwrap();
    let r_off = search(
        &mut off,
        &data,
        &EAConfig {
            shifting: false,
            ..quick(5)
        },
        &[],
    )
    .unwrap();
    let boot = |r: &shiftnas::search::SearchResult| -> Vec<(ArchGenome, f64)> {
        r.history
            .iter()
            .filter(|e| e.phase == Phase::Bootstrap)
            .map(|e| (e.genome.clone(), e.accuracy))
            .collect()
    };
    assert_eq!(boot(&r_on), boot(&r_off));
    let c_on: BTreeSet<ArchGenome> = candidates_at(&r_on.history, 1).into_iter().collect();
    let c_off: BTreeSet<ArchGenome> = candidates_at(&r_off.history, 1).into_iter().collect();
    assert_eq!(c_on, c_off);
    assert_ne!(on.checksum(), off.checksum());
}

#[test]
fn search_replays_byte_for_byte() {
    let (_, data, net) = setup();
    let run = || {
        let mut n = net.clone();
        let probes = vec![ArchGenome::new(vec![1, 1, 1, 1])];
        let r = search(&mut n, &data, &quick(8), &probes).unwrap();
        let mut h = Vec::new();
        r.write_history_csv(&mut h, None).unwrap();
        let mut t = Vec::new();
        r.write_trajectory_csv(&mut t, None).unwrap();
        (h, t, n.checksum())
    };
    assert_eq!(run(), run());
}

#[test]
fn budget_at_identity_cost_forces_identity() {
    let (space, data, net) = setup();
    let min = space.min_flops_genome();
    let cfg = EAConfig {
        flops_budget: Some(space.flops(&min).unwrap()),
        ..quick(2)
    };
    let mut n = net.clone();
    let r = search(&mut n, &data, &cfg, &[]).unwrap();
    assert!(r.sampled_genomes().all(|g| *g == min));
    assert_eq!(r.best.genome, min);
}
