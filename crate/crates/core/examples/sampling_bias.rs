//! On a synthetic fitness landscape, an elitist search samples good
//! architectures more often than bad ones; a random search does not.

use shiftnas::metrics::sampling_fitness_correlation;
use shiftnas::search::{surrogate_search, EAConfig, SurrogateConfig, SurrogateFitness};
use shiftnas::space::{Dims, Preset, SearchSpace};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let space = SearchSpace::preset(Preset::Tiny, Dims::default());
    for seed in 0..5 {
        let scfg = SurrogateConfig {
            seed,
            ..SurrogateConfig::default()
        };
        let fitness = SurrogateFitness::new(&space, &scfg)?;
        let (optimum, value) = fitness.argmax(&space)?;
        let elitist = EAConfig {
            seed,
            ..EAConfig::default()
        };
        let random = EAConfig {
            elitism: false,
            mutation_prob: 1.0,
            ..elitist.clone()
        };
        let a = surrogate_search(&space, &scfg, &elitist)?;
        let b = surrogate_search(&space, &scfg, &random)?;
        println!(
            "seed {seed}: elitist tau {:+.3}, random tau {:+.3}, optimum {optimum} ({value:.3}) found: {}",
            sampling_fitness_correlation(a.sampled_genomes(), |g| fitness.value(g))?,
            sampling_fitness_correlation(b.sampled_genomes(), |g| fitness.value(g))?,
            a.best.genome == optimum
        );
    }
    Ok(())
}
