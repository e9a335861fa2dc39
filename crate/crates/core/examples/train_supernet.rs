//! Trains a tiny supernet with uniform and strict-fair path sampling and
//! saves a checkpoint.

use shiftnas::data::{synthetic, SyntheticPreset};
use shiftnas::space::{Dims, Preset, SearchSpace};
use shiftnas::supernet::{load_checkpoint, save_checkpoint, Supernet};
use shiftnas::train::{evaluate_arch, train, EvalSpec, Sampler, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = synthetic(SyntheticPreset::BlobsEasy, 7);
    let space = SearchSpace::preset(
        Preset::Tiny,
        Dims {
            input_dim: data.input_dim(),
            hidden_dim: 32,
            num_classes: data.num_classes(),
        },
    );
    let probes: Vec<_> = space.enumerate()?.into_iter().step_by(37).collect();

    for sampler in [Sampler::Uniform, Sampler::StrictFair] {
        let mut net = Supernet::init(space.clone(), 7)?;
        let cfg = TrainConfig {
            steps: 2000,
            sampler,
            seed: 7,
            ..TrainConfig::default()
        };
        let log = train(&mut net, &data, &cfg)?;
        let mut accs = Vec::new();
        for g in &probes {
            accs.push(evaluate_arch(&net, g, &data, &EvalSpec::full())?.accuracy);
        }
        println!(
            "{sampler:?}: final loss {:.3}, mean accuracy over {} paths {:.3}",
            log.mean_loss_tail(100),
            probes.len(),
            accs.iter().sum::<f64>() / accs.len() as f64
        );
        println!("  per-choice updates in block 0: {:?}", log.choice_counts[0]);

        let dir = std::env::temp_dir().join("shiftnas-example");
            std::fs::create_dir_all(&dir)?;
        let path = dir.join("supernet.ckpt");
        save_checkpoint(&net, &path, None)?;
        let (back, _) = load_checkpoint(&path)?;
        assert_eq!(back.checksum(), net.checksum());
    }
    Ok(())
}
