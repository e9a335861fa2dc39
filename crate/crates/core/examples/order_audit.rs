//! Measures how well supernet accuracy ranks architectures, before and
//! after shifting, against retrained ground truth.

use shiftnas::data::{synthetic, SyntheticPreset};
use shiftnas::metrics::{order_experiment, retrain_truth};
use shiftnas::rng::rng_from_seed;
use shiftnas::search::{search_with_hook, EAConfig};
use shiftnas::space::{ArchGenome, Dims, Preset, SearchSpace};
use shiftnas::supernet::Supernet;
use shiftnas::train::{retrain_from_scratch, train, EvalSpec, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = synthetic(SyntheticPreset::Rings, 9);
    let space = SearchSpace::preset(
        Preset::Tiny,
        Dims {
            input_dim: data.input_dim(),
            hidden_dim: 16,
            num_classes: data.num_classes(),
        },
    );
    let mut net = Supernet::init(space.clone(), 9)?;
    train(
        &mut net,
        &data,
        &TrainConfig {
            steps: 1500,
            seed: 9,
            ..TrainConfig::default()
        },
    )?;

    // rank a random sample by retrain accuracy, then split it into good and poor
    let retrain = TrainConfig {
        steps: 600,
        seed: 9,
        ..TrainConfig::default()
    };
    let mut rng = rng_from_seed(9);
    let mut pool: Vec<ArchGenome> = (0..24).map(|_| space.sample_uniform(&mut rng)).collect();
    pool.sort();
    pool.dedup();
    let mut scored = Vec::new();
    for g in pool {
        let acc = retrain_from_scratch(&space, &g, &data, &retrain)?.accuracy;
        scored.push((g, acc));
    }
    scored.sort_by(|a, b| b.1.total_cmp(&a.1));
    let cut = scored.len() / 3;
    let good: Vec<ArchGenome> = scored[..cut].iter().map(|(g, _)| g.clone()).collect();
    let poor: Vec<ArchGenome> = scored[cut..]
        .iter()
        .filter(|(_, t)| *t < scored[cut - 1].1)
        .map(|(g, _)| g.clone())
        .collect();
    let truth = retrain_truth(&space, &good, &poor, &data, &retrain, 1)?;

    let cfg = EAConfig {
        population_t: 20,
        iterations: 6,
        shift_lr: 0.3,
        shift_batch_size: 16,
        seed: 9,
        ..EAConfig::default()
    };
    let mut snapshots = Vec::new();
    search_with_hook(&mut net, &data, &cfg, &[], |it, n| {
        if it % 3 == 0 {
            snapshots.push((it, n.clone()));
        }
        Ok(())
    })?;
    let refs: Vec<(usize, &Supernet)> = snapshots.iter().map(|(i, n)| (*i, n)).collect();
    for r in order_experiment(&refs, &truth, &data, &EvalSpec::full())? {
        println!(
            "iteration {:>2}: top-{} hits {}, local tau {:+.3}{}",
            r.iteration,
            r.global_k,
            r.global_hits,
            r.local_tau,
            if r.local_tau_defined { "" } else { " (undefined)" }
        );
    }
    Ok(())
}
