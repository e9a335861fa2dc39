//! Supernet training (uniform and strict-fairness path sampling), supernet
//! evaluation of a single architecture, and the retrain-from-scratch oracle.

use std::io::Write;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::nn::count_correct;
use crate::rng::{derive_seed, rng_from_seed, SeededRng};
use crate::space::{ArchGenome, SearchSpace};
use crate::supernet::{GradAggregate, PathGrads, Supernet, UpdateScope};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampler {
    Uniform,
    StrictFair,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    #[default]
    Constant,
    /// `lr · (1 − step/steps)`
    LinearDecay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub sampler: Sampler,
    pub lr_schedule: LrSchedule,
    /// Derived from the run's master seed; never read from config files.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 5000,
            batch_size: 64,
            lr: 0.05,
            sampler: Sampler::Uniform,
            lr_schedule: LrSchedule::Constant,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::Config("train.steps must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("train.batch_size must be >= 1".into()));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Config("train.lr must be positive".into()));
        }
        Ok(())
    }

    fn lr_at(&self, step: usize) -> f64 {
        match self.lr_schedule {
            LrSchedule::Constant => self.lr,
            LrSchedule::LinearDecay => self.lr * (1.0 - step as f64 / self.steps as f64),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub step: usize,
    pub genome: ArchGenome,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainLog {
    pub records: Vec<TrainRecord>,
    /// `[block][choice]` number of steps on which the choice was on the path.
    pub choice_counts: Vec<Vec<u64>>,
}

impl TrainLog {
    fn new(space: &SearchSpace) -> Self {
        Self {
            records: Vec::new(),
            choice_counts: space.blocks.iter().map(|b| vec![0; b.choices.len()]).collect(),
        }
    }

    /// `step,genome,loss` rows after an optional `#` comment line.
    pub fn write_csv<W: Write>(&self, mut out: W, comment: Option<&str>) -> std::io::Result<()> {
        if let Some(c) = comment {
            writeln!(out, "# {c}")?;
        }
        writeln!(out, "step,genome,loss")?;
        for r in &self.records {
            writeln!(out, "{},{},{}", r.step, r.genome, r.loss)?;
        }
        Ok(())
    }

    pub fn mean_loss_tail(&self, n: usize) -> f64 {
        let tail = &self.records[self.records.len().saturating_sub(n)..];
        tail.iter().map(|r| r.loss).sum::<f64>() / tail.len().max(1) as f64
    }
}

/// Endless epoch-shuffled stream of training-row indices.
#[derive(Debug, Clone)]
pub struct BatchStream {
    pool: Vec<usize>,
    order: Vec<usize>,
    cursor: usize,
    rng: SeededRng,
}

impl BatchStream {
    pub fn new(pool: &[usize], seed: u64) -> Result<Self> {
        if pool.is_empty() {
            return Err(Error::EmptyDataset("training split is empty".into()));
        }
        Ok(Self {
            pool: pool.to_vec(),
            order: Vec::new(),
            cursor: 0,
            rng: rng_from_seed(seed),
        })
    }

    pub fn next_batch(&mut self, size: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(size);
        while out.len() < size {
            if self.cursor == self.order.len() {
                self.order = self.pool.clone();
                self.order.shuffle(&mut self.rng);
                self.cursor = 0;
            }
            let take = (size - out.len()).min(self.order.len() - self.cursor);
            out.extend_from_slice(&self.order[self.cursor..self.cursor + take]);
            self.cursor += take;
        }
        out
    }
}

/// Random stream used for path sampling in [`train_uniform`]; exposed so the
/// sampled genome sequence can be replayed independently.
pub fn arch_rng(cfg: &TrainConfig) -> SeededRng {
    rng_from_seed(derive_seed(cfg.seed, "train/arch"))
}

fn data_stream(dataset: &Dataset, cfg: &TrainConfig) -> Result<BatchStream> {
    BatchStream::new(&dataset.splits().train, derive_seed(cfg.seed, "train/data"))
}

fn check_compatible(net: &Supernet, dataset: &Dataset) -> Result<()> {
    let space = net.space();
    if dataset.input_dim() != space.input_dim {
        return Err(Error::shape("dataset input width", space.input_dim, dataset.input_dim()));
    }
    if dataset.num_classes() > space.num_classes {
        return Err(Error::shape("dataset classes", space.num_classes, dataset.num_classes()));
    }
    Ok(())
}

/// One SGD step on a single path.
pub fn sgd_path(net: &mut Supernet, grads: &PathGrads, lr: f64, scope: UpdateScope) -> Result<()> {
    let mut agg = GradAggregate::new();
    agg.add(grads)?;
    net.apply_update(&agg, lr, 1, scope)
}

fn run_steps(
    net: &mut Supernet,
    dataset: &Dataset,
    cfg: &TrainConfig,
    mut next_genome: impl FnMut(usize) -> ArchGenome,
) -> Result<TrainLog> {
    cfg.validate()?;
    check_compatible(net, dataset)?;
    let mut stream = data_stream(dataset, cfg)?;
    let mut log = TrainLog::new(net.space());
    for step in 0..cfg.steps {
        let genome = next_genome(step);
        let (x, labels) = dataset.gather(&stream.next_batch(cfg.batch_size))?;
        let (loss, grads) = net.loss_and_grads(&genome, &x, &labels)?;
        sgd_path(net, &grads, cfg.lr_at(step), UpdateScope::ALL)?;
        for (b, &c) in genome.choices().iter().enumerate() {
            log.choice_counts[b][c] += 1;
        }
        log.records.push(TrainRecord { step, genome, loss });
    }
    Ok(log)
}

/// Each step trains one uniformly sampled path on one mini-batch.
pub fn train_uniform(net: &mut Supernet, dataset: &Dataset, cfg: &TrainConfig) -> Result<TrainLog> {
    if cfg.sampler != Sampler::Uniform {
        return Err(Error::Config("train_uniform requires sampler = uniform".into()));
    }
    let mut rng = arch_rng(cfg);
    let space = net.space().clone();
    run_steps(net, dataset, cfg, |_| space.sample_uniform(&mut rng))
}

/// Rounds of `C` steps; in each round every block walks a fresh random
/// permutation of its choices, so at every round boundary all
/// `(block, choice)` pairs have been trained equally often.
pub fn train_strict_fair(net: &mut Supernet, dataset: &Dataset, cfg: &TrainConfig) -> Result<TrainLog> {
    if cfg.sampler != Sampler::StrictFair {
        return Err(Error::Config("train_strict_fair requires sampler = strict_fair".into()));
    }
    let space = net.space().clone();
    let c = space.blocks.first().map_or(1, |b| b.choices.len());
    if space.blocks.iter().any(|b| b.choices.len() != c) {
        return Err(Error::Config("strict-fair sampling needs equal choice counts in every block".into()));
    }
    let mut rng = arch_rng(cfg);
    let mut perms: Vec<Vec<usize>> = Vec::new();
    run_steps(net, dataset, cfg, |step| {
        let j = step % c;
        if j == 0 {
            perms = strict_fair_round(space.num_blocks(), c, &mut rng);
        }
        ArchGenome::new(perms.iter().map(|p| p[j]).collect())
    })
}

/// One permutation of `0..c` per block.
pub fn strict_fair_round(num_blocks: usize, c: usize, rng: &mut SeededRng) -> Vec<Vec<usize>> {
    (0..num_blocks)
        .map(|_| {
            let mut p: Vec<usize> = (0..c).collect();
            p.shuffle(rng);
            p
        })
        .collect()
}

pub fn train(net: &mut Supernet, dataset: &Dataset, cfg: &TrainConfig) -> Result<TrainLog> {
    match cfg.sampler {
        Sampler::Uniform => train_uniform(net, dataset, cfg),
        Sampler::StrictFair => train_strict_fair(net, dataset, cfg),
    }
}

/// How much of the validation split an evaluation uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSpec {
    /// Number of mini-batches; `0` means the whole validation split.
    pub batches: usize,
    pub batch_size: usize,
    #[serde(skip)]
    pub seed: u64,
}

impl Default for EvalSpec {
    fn default() -> Self {
        Self {
            batches: 8,
            batch_size: 64,
            seed: 0,
        }
    }
}

impl EvalSpec {
    pub fn full() -> Self {
        Self {
            batches: 0,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub genome: ArchGenome,
    pub accuracy: f64,
    pub loss: f64,
    pub at_step: u64,
}

/// Validation rows an evaluation with `spec` reads.
pub fn eval_indices(dataset: &Dataset, spec: &EvalSpec) -> Result<Vec<usize>> {
    let val = &dataset.splits().val;
    if val.is_empty() {
        return Err(Error::EmptyDataset("validation split is empty".into()));
    }
    if spec.batches == 0 {
        return Ok(val.clone());
    }
    if spec.batch_size == 0 {
        return Err(Error::Config("eval batch_size must be >= 1".into()));
    }
    let mut idx = val.clone();
    idx.shuffle(&mut rng_from_seed(derive_seed(spec.seed, "eval/subset")));
    idx.truncate((spec.batches * spec.batch_size).min(val.len()));
    Ok(idx)
}

/// Supernet accuracy of `g`; never mutates the net.
pub fn evaluate_arch(net: &Supernet, g: &ArchGenome, dataset: &Dataset, spec: &EvalSpec) -> Result<EvalResult> {
    check_compatible(net, dataset)?;
    let idx = eval_indices(dataset, spec)?;
    evaluate_on(net, g, dataset, &idx, spec.batch_size.max(1))
}

pub(crate) fn evaluate_on(
    net: &Supernet,
    g: &ArchGenome,
    dataset: &Dataset,
    idx: &[usize],
    chunk: usize,
) -> Result<EvalResult> {
    let mut correct = 0usize;
    let mut loss_sum = 0.0;
    for part in idx.chunks(chunk.max(1)) {
        let (x, labels) = dataset.gather(part)?;
        let logits = net.predict(g, &x)?;
        correct += count_correct(&logits, &labels);
        let (loss, _) = crate::nn::softmax_cross_entropy(&logits, &labels)?;
        loss_sum += loss * part.len() as f64;
    }
    Ok(EvalResult {
        genome: g.clone(),
        accuracy: correct as f64 / idx.len() as f64,
        loss: loss_sum / idx.len() as f64,
        at_step: net.train_steps(),
    })
}

/// Ground-truth oracle: trains `g` alone from a fresh seeded init and reports
/// full validation accuracy.
pub fn retrain_from_scratch(
    space: &SearchSpace,
    g: &ArchGenome,
    dataset: &Dataset,
    cfg: &TrainConfig,
) -> Result<EvalResult> {
    let fixed = space.restrict(g)?;
    let mut net = Supernet::init(fixed, derive_seed(cfg.seed, "retrain/init"))?;
    let cfg = TrainConfig {
        sampler: Sampler::Uniform,
        ..cfg.clone()
    };
    train_uniform(&mut net, dataset, &cfg)?;
    let mut result = evaluate_arch(&net, &ArchGenome::zeros(g.len()), dataset, &EvalSpec::full())?;
    result.genome = g.clone();
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate_synthetic;
    use crate::space::{Dims, Preset};

    fn small_space() -> SearchSpace {
        SearchSpace::preset(
            Preset::Tiny,
            Dims {
                input_dim: 16,
                hidden_dim: 8,
                num_classes: 3,
            },
        )
    }

    fn cfg(steps: usize, sampler: Sampler) -> TrainConfig {
        TrainConfig {
            steps,
            batch_size: 16,
            lr: 0.05,
            sampler,
            lr_schedule: LrSchedule::Constant,
            seed: 7,
        }
    }

    #[test]
    fn zero_steps_rejected() {
        let data = generate_synthetic("rings", 1).unwrap();
        let mut net = Supernet::init(small_space(), 1).unwrap();
        assert!(matches!(
            train_uniform(&mut net, &data, &cfg(0, Sampler::Uniform)),
            Err(Error::Config(_))
        ));
        assert!(train_uniform(&mut net, &data, &cfg(5, Sampler::StrictFair)).is_err());
    }

    #[test]
    fn genome_stream_matches_sampler() {
        let data = generate_synthetic("rings", 1).unwrap();
        let space = small_space();
        let mut net = Supernet::init(space.clone(), 1).unwrap();
        let c = cfg(30, Sampler::Uniform);
        let log = train_uniform(&mut net, &data, &c).unwrap();
        let mut rng = arch_rng(&c);
        for r in &log.records {
            assert_eq!(r.genome, space.sample_uniform(&mut rng));
        }
        assert_eq!(net.train_steps(), 30);
    }

    #[test]
    fn strict_fair_counts_are_equal_at_round_boundaries() {
        let data = generate_synthetic("rings", 1).unwrap();
        let mut net = Supernet::init(small_space(), 1).unwrap();
        let log = train_strict_fair(&mut net, &data, &cfg(12, Sampler::StrictFair)).unwrap();
        for row in &log.choice_counts {
            assert!(row.iter().all(|&n| n == 3));
        }
    }

    #[test]
    fn strict_fair_rejects_uneven_blocks() {
        let data = generate_synthetic("rings", 1).unwrap();
        let mut space = small_space();
        space.blocks[1].choices.truncate(2);
        let mut net = Supernet::init(space, 1).unwrap();
        assert!(train_strict_fair(&mut net, &data, &cfg(4, Sampler::StrictFair)).is_err());
    }

    #[test]
    fn evaluation_is_read_only_and_full_split_default() {
        let data = generate_synthetic("rings", 2).unwrap();
        let net = Supernet::init(small_space(), 3).unwrap();
        let before = net.checksum();
        let g = ArchGenome::new(vec![1, 2, 3, 0]);
        let full = evaluate_arch(&net, &g, &data, &EvalSpec::full()).unwrap();
        assert_eq!(net.checksum(), before);
        let idx = eval_indices(&data, &EvalSpec::full()).unwrap();
        let manual = evaluate_on(&net, &g, &data, &idx, 7).unwrap();
        assert_eq!(full.accuracy, manual.accuracy);
        assert!((0.0..=1.0).contains(&full.accuracy));
        let sub = EvalSpec {
            batches: 2,
            batch_size: 10,
            seed: 4,
        };
        assert_eq!(eval_indices(&data, &sub).unwrap().len(), 20);
    }

    #[test]
    fn retrain_is_deterministic() {
        let data = generate_synthetic("rings", 2).unwrap();
        let g = ArchGenome::new(vec![1, 0, 0, 3]);
        let c = cfg(50, Sampler::Uniform);
        let a = retrain_from_scratch(&small_space(), &g, &data, &c).unwrap();
        let b = retrain_from_scratch(&small_space(), &g, &data, &c).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.genome, g);
    }

    #[test]
    fn batch_stream_cycles_through_epochs() {
        let mut s = BatchStream::new(&[10, 11, 12], 0).unwrap();
        let mut first: Vec<usize> = s.next_batch(3);
        first.sort_unstable();
        assert_eq!(first, vec![10, 11, 12]);
        assert_eq!(s.next_batch(7).len(), 7);
        assert!(BatchStream::new(&[], 0).is_err());
    }
}
