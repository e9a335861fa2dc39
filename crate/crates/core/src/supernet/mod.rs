//! Single-path weight-sharing supernet.
//!
//! One parameter set lives per `(block, choice)` plus a stem and a head that
//! sit on every path. A genome selects exactly one choice per block; forward
//! and backward passes only ever read or produce values for that path.

mod checkpoint;

use std::collections::BTreeMap;

use crate::nn::{
    layer_backward, layer_forward, sgd_slice, softmax_cross_entropy, DenseGrads, DenseParams,
    LayerCache, Matrix,
};
use crate::rng::rng_from_seed;
use crate::space::{ArchGenome, SearchSpace};
use crate::{Error, Result};

pub use checkpoint::{load_checkpoint, load_checkpoint_expecting, save_checkpoint, CheckpointHeader, Provenance, CHECKPOINT_FORMAT};

/// Per-layer params of one choice; `None` for identity layers.
pub type ChoiceParams = Vec<Option<DenseParams>>;

#[derive(Debug, Clone, PartialEq)]
pub struct Supernet {
    space: SearchSpace,
    stem: DenseParams,
    /// `[block][choice][layer]`
    blocks: Vec<Vec<ChoiceParams>>,
    head: DenseParams,
    train_steps: u64,
    stem_reinitialized: bool,
}

/// Forward activations for one genome, consumed by [`Supernet::backward_path`].
#[derive(Debug, Clone)]
pub struct PathCache {
    genome: ArchGenome,
    stem: LayerCache,
    blocks: Vec<Vec<LayerCache>>,
    head: LayerCache,
}

/// Parameter gradients for one path. Only selected choices with trainable
/// layers have an entry in `blocks`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathGrads {
    pub genome: ArchGenome,
    pub stem: DenseGrads,
    pub blocks: BTreeMap<(usize, usize), ChoiceParams>,
    pub head: DenseGrads,
}

/// Sum of path gradients across several mini-batches.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GradAggregate {
    stem: Option<DenseGrads>,
    blocks: BTreeMap<(usize, usize), ChoiceParams>,
    head: Option<DenseGrads>,
    contributions: usize,
}

/// Which parameter groups an update may touch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UpdateScope {
    pub stem: bool,
    pub blocks: bool,
    pub head: bool,
}

impl UpdateScope {
    pub const ALL: UpdateScope = UpdateScope {
        stem: true,
        blocks: true,
        head: true,
    };
}

fn add_into(slot: &mut Option<DenseGrads>, g: &DenseGrads) -> Result<()> {
    match slot {
        Some(acc) => acc.add_assign(g),
        None => {
            *slot = Some(g.clone());
            Ok(())
        }
    }
}

impl GradAggregate {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, grads: &PathGrads) -> Result<()> {
        add_into(&mut self.stem, &grads.stem)?;
        add_into(&mut self.head, &grads.head)?;
        for (key, layers) in &grads.blocks {
            match self.blocks.get_mut(key) {
                Some(acc) => {
                    for (a, g) in acc.iter_mut().zip(layers) {
                        if let Some(g) = g {
                            add_into(a, g)?;
                        }
                    }
                }
                None => {
                    self.blocks.insert(*key, layers.clone());
                }
            }
        }
        self.contributions += 1;
        Ok(())
    }

    pub fn contributions(&self) -> usize {
        self.contributions
    }

    pub fn is_empty(&self) -> bool {
        self.contributions == 0
    }

    /// `(block, choice)` pairs that received any gradient.
    pub fn touched_choices(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.blocks.keys().copied()
    }
}

impl Supernet {
    /// Glorot-uniform weights and zero biases, deterministic in `seed`.
    pub fn init(space: SearchSpace, seed: u64) -> Result<Self> {
        space.validate()?;
        let mut rng = rng_from_seed(seed);
        let stem = DenseParams::glorot(space.input_dim, space.hidden_dim, &mut rng);
        let blocks = space
            .blocks
            .iter()
            .map(|block| {
                block
                    .choices
                    .iter()
                    .map(|choice| {
                        choice
                            .layers
                            .iter()
                            .map(|l| {
                                l.has_params()
                                    .then(|| DenseParams::glorot(l.in_dim, l.out_dim, &mut rng))
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let head = DenseParams::glorot(space.hidden_dim, space.num_classes, &mut rng);
        Ok(Self {
            space,
            stem,
            blocks,
            head,
            train_steps: 0,
            stem_reinitialized: false,
        })
    }

    pub(crate) fn from_parts(
        space: SearchSpace,
        stem: DenseParams,
        blocks: Vec<Vec<ChoiceParams>>,
        head: DenseParams,
        train_steps: u64,
        stem_reinitialized: bool,
    ) -> Self {
        Self {
            space,
            stem,
            blocks,
            head,
            train_steps,
            stem_reinitialized,
        }
    }

    pub fn space(&self) -> &SearchSpace {
        &self.space
    }

    pub fn stem(&self) -> &DenseParams {
        &self.stem
    }

    pub fn head(&self) -> &DenseParams {
        &self.head
    }

    pub fn choice_params(&self, block: usize, choice: usize) -> &ChoiceParams {
        &self.blocks[block][choice]
    }

    pub fn choice_params_mut(&mut self, block: usize, choice: usize) -> &mut ChoiceParams {
        &mut self.blocks[block][choice]
    }

    pub fn head_mut(&mut self) -> &mut DenseParams {
        &mut self.head
    }

    pub fn stem_mut(&mut self) -> &mut DenseParams {
        &mut self.stem
    }

    pub fn train_steps(&self) -> u64 {
        self.train_steps
    }

    /// True when the stem was re-initialized by a head reset for a new input width.
    pub fn stem_reinitialized(&self) -> bool {
        self.stem_reinitialized
    }

    /// All parameters in canonical order: stem, blocks (block, choice, layer), head.
    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.stem
            .values()
            .chain(self.block_values())
            .chain(self.head.values())
    }

    pub fn block_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.blocks
            .iter()
            .flatten()
            .flatten()
            .flatten()
            .flat_map(DenseParams::values)
    }

    pub fn param_count(&self) -> usize {
        self.values().count()
    }

    /// SHA-256 over the little-endian bytes of every parameter.
    pub fn checksum(&self) -> String {
        crate::rng::sha256_hex(&values_to_bytes(self.values()))
    }

    /// SHA-256 over block parameters only.
    pub fn block_checksum(&self) -> String {
        crate::rng::sha256_hex(&values_to_bytes(self.block_values()))
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.space.input_dim {
            return Err(Error::shape("forward_path input", self.space.input_dim, x.cols()));
        }
        Ok(())
    }

    pub fn forward_path(&self, g: &ArchGenome, x: &Matrix) -> Result<(Matrix, PathCache)> {
        self.space.check_genome(g)?;
        self.check_input(x)?;
        let (mut h, stem_cache) = layer_forward(&self.space.stem_spec(), Some(&self.stem), x)?;
        let mut block_caches = Vec::with_capacity(g.len());
        for (b, &c) in g.choices().iter().enumerate() {
            let spec = self.space.choice(b, c);
            let mut caches = Vec::with_capacity(spec.layers.len());
            for (layer, params) in spec.layers.iter().zip(&self.blocks[b][c]) {
                let (out, cache) = layer_forward(layer, params.as_ref(), &h)?;
                caches.push(cache);
                h = out;
            }
            block_caches.push(caches);
        }
        let (logits, head_cache) = layer_forward(&self.space.head_spec(), Some(&self.head), &h)?;
        Ok((
            logits,
            PathCache {
                genome: g.clone(),
                stem: stem_cache,
                blocks: block_caches,
                head: head_cache,
            },
        ))
    }

    /// Logits only.
    pub fn predict(&self, g: &ArchGenome, x: &Matrix) -> Result<Matrix> {
        self.forward_path(g, x).map(|(logits, _)| logits)
    }

    pub fn backward_path(
        &self,
        g: &ArchGenome,
        cache: &PathCache,
        grad_logits: &Matrix,
    ) -> Result<PathGrads> {
        if &cache.genome != g {
            return Err(Error::shape("backward_path cache genome", g, &cache.genome));
        }
        let head_spec = self.space.head_spec();
        let (mut grad, head_grads) =
            layer_backward(&head_spec, Some(&self.head), &cache.head, grad_logits)?;
        let mut blocks = BTreeMap::new();
        for (b, &c) in g.choices().iter().enumerate().rev() {
            let spec = self.space.choice(b, c);
            let params = &self.blocks[b][c];
            let caches = &cache.blocks[b];
            let mut layer_grads: ChoiceParams = vec![None; spec.layers.len()];
            for l in (0..spec.layers.len()).rev() {
                let (gin, gp) = layer_backward(&spec.layers[l], params[l].as_ref(), &caches[l], &grad)?;
                layer_grads[l] = gp;
                grad = gin;
            }
            if spec.has_params() {
                blocks.insert((b, c), layer_grads);
            }
        }
        let (_, stem_grads) =
            layer_backward(&self.space.stem_spec(), Some(&self.stem), &cache.stem, &grad)?;
        Ok(PathGrads {
            genome: g.clone(),
            stem: stem_grads.expect("stem is dense"),
            blocks,
            head: head_grads.expect("head is dense"),
        })
    }

    /// Forward + cross-entropy + backward on one mini-batch.
    pub fn loss_and_grads(
        &self,
        g: &ArchGenome,
        x: &Matrix,
        labels: &[usize],
    ) -> Result<(f64, PathGrads)> {
        let (logits, cache) = self.forward_path(g, x)?;
        let (loss, grad_logits) = softmax_cross_entropy(&logits, labels)?;
        let grads = self.backward_path(g, &cache, &grad_logits)?;
        Ok((loss, grads))
    }

    /// One SGD step with gradient `sum / normalizer` on every parameter the
    /// aggregate touched (restricted to `scope`). Increments `train_steps`.
    pub fn apply_update(
        &mut self,
        agg: &GradAggregate,
        lr: f64,
        normalizer: usize,
        scope: UpdateScope,
    ) -> Result<()> {
        if normalizer == 0 {
            return Err(Error::Precondition("update normalizer must be >= 1".into()));
        }
        if !(lr.is_finite() && lr >= 0.0) {
            return Err(Error::Config(format!("learning rate {lr} must be finite and >= 0")));
        }
        let step = lr / normalizer as f64;
        // validate every shape before mutating anything
        if let Some(g) = &agg.stem {
            check_same(&self.stem, g, "stem")?;
        }
        if let Some(g) = &agg.head {
            check_same(&self.head, g, "head")?;
        }
        for (&(b, c), layers) in &agg.blocks {
            let params = self
                .blocks
                .get(b)
                .and_then(|cs| cs.get(c))
                .ok_or_else(|| Error::shape("apply_update choice", "existing (block, choice)", format!("({b}, {c})")))?;
            if params.len() != layers.len() {
                return Err(Error::shape("apply_update layers", params.len(), layers.len()));
            }
            for (p, g) in params.iter().zip(layers) {
                match (p, g) {
                    (Some(p), Some(g)) => check_same(p, g, "block layer")?,
                    (None, Some(_)) => return Err(Error::shape("apply_update layer", "identity", "dense grads")),
                    _ => {}
                }
            }
        }

        if scope.stem {
            if let Some(g) = &agg.stem {
                step_params(&mut self.stem, g, step);
            }
        }
        if scope.head {
            if let Some(g) = &agg.head {
                step_params(&mut self.head, g, step);
            }
        }
        if scope.blocks {
            for (&(b, c), layers) in &agg.blocks {
                for (p, g) in self.blocks[b][c].iter_mut().zip(layers) {
                    if let (Some(p), Some(g)) = (p, g) {
                        step_params(p, g, step);
                    }
                }
            }
        }
        self.train_steps += 1;
        Ok(())
    }

    /// Fresh head for `new_num_classes`; the stem is re-initialized too when
    /// `new_input_dim` differs. Block parameters are kept bitwise.
    pub fn reset_head(&self, new_num_classes: usize, new_input_dim: usize, seed: u64) -> Result<Supernet> {
        if new_num_classes < 2 {
            return Err(Error::Config("a classification head needs at least 2 classes".into()));
        }
        if new_input_dim == 0 {
            return Err(Error::Config("input width must be positive".into()));
        }
        let mut rng = rng_from_seed(seed);
        let space = self.space.with_io(new_input_dim, new_num_classes);
        let reinit_stem = new_input_dim != self.space.input_dim;
        let stem = if reinit_stem {
            DenseParams::glorot(new_input_dim, space.hidden_dim, &mut rng)
        } else {
            self.stem.clone()
        };
        let head = DenseParams::glorot(space.hidden_dim, new_num_classes, &mut rng);
        Ok(Supernet {
            space,
            stem,
            blocks: self.blocks.clone(),
            head,
            train_steps: self.train_steps,
            stem_reinitialized: reinit_stem,
        })
    }

    #[cfg(test)]
    pub(crate) fn layer_spec_iter(&self) -> impl Iterator<Item = (crate::nn::LayerSpec, Option<&DenseParams>)> {
        std::iter::once((self.space.stem_spec(), Some(&self.stem)))
            .chain(self.space.blocks.iter().zip(&self.blocks).flat_map(|(block, params)| {
                block
                    .choices
                    .iter()
                    .zip(params)
                    .flat_map(|(choice, ps)| choice.layers.iter().copied().zip(ps.iter().map(Option::as_ref)))
            }))
            .chain(std::iter::once((self.space.head_spec(), Some(&self.head))))
    }
}

fn check_same(p: &DenseParams, g: &DenseParams, what: &'static str) -> Result<()> {
    if p.same_shape(g) {
        Ok(())
    } else {
        Err(Error::shape(
            what,
            format!("{:?}", p.weight.shape()),
            format!("{:?}", g.weight.shape()),
        ))
    }
}

fn step_params(p: &mut DenseParams, g: &DenseParams, step: f64) {
    sgd_slice(p.weight.data_mut(), g.weight.data(), step);
    sgd_slice(&mut p.bias, &g.bias, step);
}

pub(crate) fn values_to_bytes(values: impl Iterator<Item = f64>) -> Vec<u8> {
    values.flat_map(f64::to_le_bytes).collect()
}
