//! Evolutionary search on a trained supernet, with and without shifting the
//! shared weights toward the sampled architectures.

use shiftnas::data::{synthetic, SyntheticPreset};
use shiftnas::search::{search, EAConfig};
use shiftnas::space::{Dims, Preset, SearchSpace};
use shiftnas::supernet::Supernet;
use shiftnas::train::{retrain_from_scratch, train, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = synthetic(SyntheticPreset::Rings, 3);
    let space = SearchSpace::preset(
        Preset::Tiny,
        Dims {
            input_dim: data.input_dim(),
            hidden_dim: 16,
            num_classes: data.num_classes(),
        },
    );
    let mut net = Supernet::init(space.clone(), 3)?;
    train(
        &mut net,
        &data,
        &TrainConfig {
            steps: 1500,
            seed: 3,
            ..TrainConfig::default()
        },
    )?;

    for shifting in [false, true] {
        let mut copy = net.clone();
        let cfg = EAConfig {
            population_t: 20,
            iterations: 8,
            shift_lr: 0.3,
            shift_batch_size: 16,
            shifting,
            seed: 3,
            ..EAConfig::default()
        };
        let result = search(&mut copy, &data, &cfg, &[])?;
        let retrained = retrain_from_scratch(
            &space,
            &result.best.genome,
            &data,
            &TrainConfig {
                steps: 1000,
                seed: 3,
                ..TrainConfig::default()
            },
        )?;
        println!(
            "shifting={shifting}: best {} (supernet acc {:.3}, retrained {:.3}), weights changed: {}",
            result.best.genome,
            result.best.accuracy(),
            retrained.accuracy,
            copy.checksum() != net.checksum()
        );
    }
    Ok(())
}
