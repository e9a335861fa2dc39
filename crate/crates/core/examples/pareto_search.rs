//! Accuracy-versus-flops search under a flops budget.

use shiftnas::data::{synthetic, SyntheticPreset};
use shiftnas::search::{search, EAConfig, SearchMode};
use shiftnas::space::{Dims, Preset, SearchSpace};
use shiftnas::supernet::Supernet;
use shiftnas::train::{train, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = synthetic(SyntheticPreset::Rings, 5);
    let space = SearchSpace::preset(
        Preset::Tiny,
        Dims {
            input_dim: data.input_dim(),
            hidden_dim: 16,
            num_classes: data.num_classes(),
        },
    );
    let mut net = Supernet::init(space.clone(), 5)?;
    train(
        &mut net,
        &data,
        &TrainConfig {
            steps: 1500,
            seed: 5,
            ..TrainConfig::default()
        },
    )?;
    let all = space.enumerate()?;
    let max_flops = all.iter().map(|g| space.flops(g)).collect::<Result<Vec<_>, _>>()?.into_iter().max().unwrap();
    let budget = max_flops * 3 / 4;
    let cfg = EAConfig {
        population_t: 20,
        iterations: 8,
        mode: SearchMode::BiObjective,
        flops_budget: Some(budget),
        shift_lr: 0.3,
        shift_batch_size: 16,
        seed: 5,
        ..EAConfig::default()
    };
    let result = search(&mut net, &data, &cfg, &[])?;
    println!("flops budget {budget} (largest architecture {max_flops})");
    println!("pareto front:");
    for m in &result.pareto_front {
        println!("  {}  acc {:.3}  flops {}", m.genome, m.accuracy(), m.flops);
    }
    Ok(())
}
