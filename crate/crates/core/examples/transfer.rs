//! Reuses a supernet trained on one task for another, and tracks how fast
//! it catches up with a supernet trained on the new task from scratch.

use shiftnas::data::{synthetic, SyntheticPreset};
use shiftnas::search::EAConfig;
use shiftnas::space::{Dims, Preset, SearchSpace};
use shiftnas::supernet::Supernet;
use shiftnas::train::{train, TrainConfig};
use shiftnas::transfer::{transfer_convergence_probe, transfer_search, TransferConfig};

fn trained(preset: SyntheticPreset, steps: usize) -> Result<Supernet, Box<dyn std::error::Error>> {
    let data = synthetic(preset, 11);
    let space = SearchSpace::preset(
        Preset::Tiny,
        Dims {
            input_dim: data.input_dim(),
            hidden_dim: 32,
            num_classes: data.num_classes(),
        },
    );
    let mut net = Supernet::init(space, 11)?;
    let cfg = TrainConfig {
        steps,
        seed: 11,
        ..TrainConfig::default()
    };
    train(&mut net, &data, &cfg)?;
    Ok(net)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let pretrained = trained(SyntheticPreset::BlobsEasy, 3000)?;
    let reference = trained(SyntheticPreset::Rings, 3000)?;
    let target = synthetic(SyntheticPreset::Rings, 11);
    let tcfg = TransferConfig {
        ea: EAConfig {
            iterations: 4,
            shift_lr: 0.05,
            seed: 11,
            ..EAConfig::default()
        },
        ..TransferConfig::default()
    };
    for row in transfer_convergence_probe(&pretrained, &target, &tcfg, &reference)? {
        println!(
            "iteration {}: transferred {:.3}, from scratch {:.3}, gap {:+.3}",
            row.iteration, row.transfer_acc, row.reference_acc, row.gap
        );
    }
    let (_, result) = transfer_search(&pretrained, &target, &tcfg)?;
    println!("best after transfer: {} ({:.3})", result.best.genome, result.best.accuracy());
    Ok(())
}
