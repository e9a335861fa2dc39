//! Round-trips a dataset through CSV and searches on the loaded copy.

use shiftnas::data::{load_csv, save_csv, synthetic, SyntheticPreset};
use shiftnas::search::{search, EAConfig};
use shiftnas::space::{Dims, Preset, SearchSpace};
use shiftnas::supernet::Supernet;
use shiftnas::train::{train, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args()
        .nth(1)
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("shiftnas-rings.csv"));
    if !path.exists() {
        save_csv(&synthetic(SyntheticPreset::Rings, 1), &path)?;
        println!("wrote {}", path.display());
    }
    let load = load_csv(&path, 1)?;
    for w in &load.warnings {
        println!("warning: {w}");
    }
    let data = load.dataset;
    println!(
        "{}: {} rows, {} features, {} classes, split {}/{}/{}",
        data.name,
        data.len(),
        data.input_dim(),
        data.num_classes(),
        data.splits().train.len(),
        data.splits().val.len(),
        data.splits().test.len()
    );
    let space = SearchSpace::preset(
        Preset::Tiny,
        Dims {
            input_dim: data.input_dim(),
            hidden_dim: 16,
            num_classes: data.num_classes(),
        },
    );
    let mut net = Supernet::init(space, 1)?;
    train(
        &mut net,
        &data,
        &TrainConfig {
            steps: 800,
            seed: 1,
            ..TrainConfig::default()
        },
    )?;
    let cfg = EAConfig {
        population_t: 10,
        iterations: 4,
        seed: 1,
        ..EAConfig::default()
    };
    let result = search(&mut net, &data, &cfg, &[])?;
    println!("best {} at {:.3}", result.best.genome, result.best.accuracy());
    Ok(())
}
