//! Synthetic fitness landscape for fast statistical checks of the search.
//!
//! `f(g) = Σ_b unary[b][g_b] + Σ_b pair[b][g_b][g_{b+1}]`, with entries drawn
//! from seeded normals. Each evaluation adds fresh Gaussian noise of scale
//! `noise_sigma`; the noise stream is seeded as well.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{run_search, EAConfig, Estimator, SearchResult};
use crate::rng::{derive_seed, rng_from_seed, SeededRng};
use crate::space::{ArchGenome, SearchSpace};
use crate::train::EvalResult;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SurrogateConfig {
    /// Standard deviation of adjacent-block interaction terms.
    pub interaction_scale: f64,
    /// Estimator noise added to every evaluation.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self {
            interaction_scale: 0.3,
            noise_sigma: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateFitness {
    unary: Vec<Vec<f64>>,
    /// `pair[b][i][j]` couples block `b` choice `i` with block `b + 1` choice `j`.
    pair: Vec<Vec<Vec<f64>>>,
}

impl SurrogateFitness {
    pub fn new(space: &SearchSpace, cfg: &SurrogateConfig) -> Result<Self> {
        if !(cfg.interaction_scale.is_finite() && cfg.interaction_scale >= 0.0) {
            return Err(Error::Config("surrogate.interaction_scale must be finite and >= 0".into()));
        }
        let mut rng = rng_from_seed(derive_seed(cfg.seed, "surrogate/table"));
        let unit = Normal::new(0.0, 1.0).expect("unit normal");
        let nb = space.num_blocks();
        let unary = (0..nb)
            .map(|b| (0..space.num_choices(b)).map(|_| unit.sample(&mut rng)).collect())
            .collect();
        let pair = (0..nb.saturating_sub(1))
            .map(|b| {
                (0..space.num_choices(b))
                    .map(|_| {
                        (0..space.num_choices(b + 1))
                            .map(|_| cfg.interaction_scale * unit.sample(&mut rng))
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Ok(Self { unary, pair })
    }

    /// Noise-free fitness.
    pub fn value(&self, g: &ArchGenome) -> f64 {
        let c = g.choices();
        let mut f: f64 = c.iter().zip(&self.unary).map(|(&i, row)| row[i]).sum();
        for (b, table) in self.pair.iter().enumerate() {
            f += table[c[b]][c[b + 1]];
        }
        f
    }

    /// Exhaustive maximizer; ties go to the lexicographically first genome.
    pub fn argmax(&self, space: &SearchSpace) -> Result<(ArchGenome, f64)> {
        let mut best: Option<(ArchGenome, f64)> = None;
        for g in space.enumerate()? {
            let v = self.value(&g);
            if best.as_ref().is_none_or(|(_, bv)| v > *bv) {
                best = Some((g, v));
            }
        }
        best.ok_or_else(|| Error::InvalidSpace("space has no genomes".into()))
    }
}

pub struct SurrogateEstimator {
    fitness: SurrogateFitness,
    noise: Option<Normal<f64>>,
    rng: SeededRng,
}

impl SurrogateEstimator {
    pub fn new(space: &SearchSpace, cfg: &SurrogateConfig) -> Result<Self> {
        if !(cfg.noise_sigma.is_finite() && cfg.noise_sigma >= 0.0) {
            return Err(Error::Config("surrogate.noise_sigma must be finite and >= 0".into()));
        }
        let noise = (cfg.noise_sigma > 0.0).then(|| Normal::new(0.0, cfg.noise_sigma).expect("positive sigma"));
        Ok(Self {
            fitness: SurrogateFitness::new(space, cfg)?,
            noise,
            rng: rng_from_seed(derive_seed(cfg.seed, "surrogate/noise")),
        })
    }

    pub fn fitness(&self) -> &SurrogateFitness {
        &self.fitness
    }
}

impl Estimator for SurrogateEstimator {
    fn evaluate(&mut self, genome: &ArchGenome) -> Result<EvalResult> {
        let eps = self.noise.map_or(0.0, |n| n.sample(&mut self.rng));
        Ok(EvalResult {
            genome: genome.clone(),
            accuracy: self.fitness.value(genome) + eps,
            loss: 0.0,
            at_step: 0,
        })
    }
}

/// The evolutionary driver on the surrogate landscape. Shifting is a no-op.
pub fn surrogate_search(space: &SearchSpace, scfg: &SurrogateConfig, cfg: &EAConfig) -> Result<SearchResult> {
    space.validate()?;
    let mut est = SurrogateEstimator::new(space, scfg)?;
    run_search(space, &mut est, cfg, &[], |_, _| Ok(()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{Dims, Preset};

    fn tiny() -> SearchSpace {
        SearchSpace::preset(Preset::Tiny, Dims::default())
    }

    #[test]
    fn fitness_is_seeded() {
        let s = tiny();
        let a = SurrogateFitness::new(&s, &SurrogateConfig::default()).unwrap();
        let b = SurrogateFitness::new(&s, &SurrogateConfig::default()).unwrap();
        assert_eq!(a, b);
        let c = SurrogateFitness::new(
            &s,
            &SurrogateConfig {
                seed: 9,
                ..SurrogateConfig::default()
            },
        )
        .unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn zero_iterations_returns_best_bootstrap() {
        let s = tiny();
        let cfg = EAConfig {
            iterations: 0,
            ..EAConfig::default()
        };
        let r = surrogate_search(&s, &SurrogateConfig::default(), &cfg).unwrap();
        let best_boot = r
            .history
            .iter()
            .filter(|e| e.phase == super::super::Phase::Bootstrap)
            .map(|e| e.accuracy)
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(r.best.accuracy(), best_boot);
    }

    #[test]
    fn noise_free_search_reaches_top_percentile() {
        let s = tiny();
        let scfg = SurrogateConfig::default();
        let r = surrogate_search(&s, &scfg, &EAConfig::default()).unwrap();
        let f = SurrogateFitness::new(&s, &scfg).unwrap();
        let mut all: Vec<f64> = s.enumerate().unwrap().iter().map(|g| f.value(g)).collect();
        all.sort_by(f64::total_cmp);
        let p95 = all[(0.95 * (all.len() - 1) as f64) as usize];
        assert!(r.best.accuracy() >= p95);
    }
}
