//! Discrete architecture space: choice catalog, genomes, genetic operators
//! and the FLOPs cost model.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::nn::{Activation, LayerSpec};
use crate::{Error, Result};

/// Default cap for [`SearchSpace::enumerate`].
pub const ENUMERATION_CAP: u128 = 1_000_000;

/// One architecture: a choice index per block.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ArchGenome(Vec<usize>);

impl ArchGenome {
    pub fn new(choices: Vec<usize>) -> Self {
        Self(choices)
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0; len])
    }

    pub fn choices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for ArchGenome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("-")?;
            }
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

impl FromStr for ArchGenome {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let choices = s
            .split('-')
            .map(|part| part.trim().parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::InvalidGenome {
                genome: s.to_string(),
                reason: e.to_string(),
            })?;
        Ok(Self(choices))
    }
}

impl Serialize for ArchGenome {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ArchGenome {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChoiceSpec {
    pub name: String,
    pub layers: Vec<LayerSpec>,
}

impl ChoiceSpec {
    /// MAC convention: twice the weight-element count, biases excluded.
    pub fn flops(&self) -> u64 {
        2 * self.layers.iter().map(LayerSpec::weight_elements).sum::<u64>()
    }

    pub fn has_params(&self) -> bool {
        self.layers.iter().any(LayerSpec::has_params)
    }

    fn validate(&self, hidden_dim: usize) -> Result<()> {
        let (Some(first), Some(last)) = (self.layers.first(), self.layers.last()) else {
            return Err(Error::InvalidSpace(format!("choice `{}` has no layers", self.name)));
        };
        if first.in_dim != hidden_dim || last.out_dim != hidden_dim {
            return Err(Error::InvalidSpace(format!(
                "choice `{}` must map hidden width {hidden_dim} to itself",
                self.name
            )));
        }
        for layer in &self.layers {
            layer.validate()?;
        }
        for pair in self.layers.windows(2) {
            if pair[0].out_dim != pair[1].in_dim {
                return Err(Error::InvalidSpace(format!(
                    "choice `{}` layer chain is not shape-consistent",
                    self.name
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Block {
    pub choices: Vec<ChoiceSpec>,
}

/// Input/hidden/output widths shared by every path through the supernet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dims {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub num_classes: usize,
}

impl Default for Dims {
    fn default() -> Self {
        Self {
            input_dim: 16,
            hidden_dim: 32,
            num_classes: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// 4 blocks × 4 choices.
    Tiny,
    /// 8 blocks × 4 choices.
    Standard,
}

impl Preset {
    pub fn num_blocks(self) -> usize {
        match self {
            Preset::Tiny => 4,
            Preset::Standard => 8,
        }
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tiny" => Ok(Preset::Tiny),
            "standard" => Ok(Preset::Standard),
            other => Err(Error::UnknownPreset(other.to_string())),
        }
    }
}

/// The standard 4-way choice catalog for a block of hidden width `h`:
/// identity, dense+relu, bottleneck (h → h/4 → h) + relu, dense+tanh.
pub fn standard_choices(h: usize) -> Vec<ChoiceSpec> {
    let narrow = (h / 4).max(1);
    vec![
        ChoiceSpec {
            name: "identity".into(),
            layers: vec![LayerSpec::identity(h)],
        },
        ChoiceSpec {
            name: "dense_relu".into(),
            layers: vec![LayerSpec::dense(h, h, Activation::Relu)],
        },
        ChoiceSpec {
            name: "bottleneck_relu".into(),
            layers: vec![
                LayerSpec::dense(h, narrow, Activation::Relu),
                LayerSpec::dense(narrow, h, Activation::Relu),
            ],
        },
        ChoiceSpec {
            name: "dense_tanh".into(),
            layers: vec![LayerSpec::dense(h, h, Activation::Tanh)],
        },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSpace {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub num_classes: usize,
    pub blocks: Vec<Block>,
    #[serde(default)]
    pub flops_budget: Option<u64>,
    /// Optional user-supplied per-(block, choice) latency costs.
    #[serde(default)]
    pub cost_table: Option<Vec<Vec<f64>>>,
}

/// `default_space("tiny" | "standard")` with default dims.
pub fn default_space(preset: &str) -> Result<SearchSpace> {
    Ok(SearchSpace::preset(preset.parse()?, Dims::default()))
}

impl SearchSpace {
    pub fn preset(preset: Preset, dims: Dims) -> Self {
        Self::with_blocks(preset.num_blocks(), dims)
    }

    /// `num_blocks` copies of the standard catalog.
    pub fn with_blocks(num_blocks: usize, dims: Dims) -> Self {
        Self {
            input_dim: dims.input_dim,
            hidden_dim: dims.hidden_dim,
            num_classes: dims.num_classes,
            blocks: (0..num_blocks)
                .map(|_| Block {
                    choices: standard_choices(dims.hidden_dim),
                })
                .collect(),
            flops_budget: None,
            cost_table: None,
        }
    }

    pub fn with_budget(mut self, budget: Option<u64>) -> Self {
        self.flops_budget = budget;
        self
    }

    pub fn dims(&self) -> Dims {
        Dims {
            input_dim: self.input_dim,
            hidden_dim: self.hidden_dim,
            num_classes: self.num_classes,
        }
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn num_choices(&self, block: usize) -> usize {
        self.blocks[block].choices.len()
    }

    pub fn choice(&self, block: usize, choice: usize) -> &ChoiceSpec {
        &self.blocks[block].choices[choice]
    }

    pub fn stem_spec(&self) -> LayerSpec {
        LayerSpec::dense(self.input_dim, self.hidden_dim, Activation::None)
    }

    pub fn head_spec(&self) -> LayerSpec {
        LayerSpec::dense(self.hidden_dim, self.num_classes, Activation::None)
    }

    /// Number of genomes, saturating at `u128::MAX`.
    pub fn size(&self) -> u128 {
        self.blocks
            .iter()
            .fold(1u128, |acc, b| acc.saturating_mul(b.choices.len() as u128))
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden_dim == 0 || self.num_classes == 0 {
            return Err(Error::InvalidSpace("dims must be positive".into()));
        }
        for (b, block) in self.blocks.iter().enumerate() {
            if block.choices.is_empty() {
                return Err(Error::InvalidSpace(format!("block {b} has no choices")));
            }
            for choice in &block.choices {
                choice.validate(self.hidden_dim)?;
            }
        }
        if let Some(table) = &self.cost_table {
            let shape_ok = table.len() == self.blocks.len()
                && table
                    .iter()
                    .zip(&self.blocks)
                    .all(|(row, block)| row.len() == block.choices.len());
            if !shape_ok {
                return Err(Error::InvalidSpace("cost_table shape does not match blocks".into()));
            }
            if table.iter().flatten().any(|c| !c.is_finite() || *c < 0.0) {
                return Err(Error::InvalidSpace("cost_table entries must be finite and >= 0".into()));
            }
        }
        if let Some(budget) = self.flops_budget {
            let min = self.flops(&self.min_flops_genome())?;
            if min > budget {
                return Err(Error::Infeasible { budget });
            }
        }
        Ok(())
    }

    pub fn check_genome(&self, g: &ArchGenome) -> Result<()> {
        if g.len() != self.blocks.len() {
            return Err(Error::InvalidGenome {
                genome: g.to_string(),
                reason: format!("expected {} blocks, got {}", self.blocks.len(), g.len()),
            });
        }
        for (b, (&c, block)) in g.choices().iter().zip(&self.blocks).enumerate() {
            if c >= block.choices.len() {
                return Err(Error::InvalidGenome {
                    genome: g.to_string(),
                    reason: format!("block {b} has {} choices, got index {c}", block.choices.len()),
                });
            }
        }
        Ok(())
    }

    fn fixed_flops(&self) -> u64 {
        2 * (self.stem_spec().weight_elements() + self.head_spec().weight_elements())
    }

    /// Stem + selected choices + head, `2 ×` weight elements.
    pub fn flops(&self, g: &ArchGenome) -> Result<u64> {
        self.check_genome(g)?;
        Ok(self.fixed_flops()
            + g.choices()
                .iter()
                .enumerate()
                .map(|(b, &c)| self.choice(b, c).flops())
                .sum::<u64>())
    }

    /// Secondary objective: cost-table latency when present, else flops.
    pub fn cost(&self, g: &ArchGenome) -> Result<f64> {
        match &self.cost_table {
            Some(table) => {
                self.check_genome(g)?;
                Ok(g.choices().iter().enumerate().map(|(b, &c)| table[b][c]).sum())
            }
            None => Ok(self.flops(g)? as f64),
        }
    }

    pub fn min_flops_genome(&self) -> ArchGenome {
        ArchGenome(
            self.blocks
                .iter()
                .map(|block| {
                    (0..block.choices.len())
                        .min_by_key(|&c| (block.choices[c].flops(), c))
                        .unwrap_or(0)
                })
                .collect(),
        )
    }

    pub fn is_feasible(&self, g: &ArchGenome, budget: Option<u64>) -> Result<bool> {
        match budget {
            None => self.check_genome(g).map(|_| true),
            Some(b) => Ok(self.flops(g)? <= b),
        }
    }

    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> ArchGenome {
        ArchGenome(
            self.blocks
                .iter()
                .map(|block| rng.random_range(0..block.choices.len()))
                .collect(),
        )
    }

    /// Each position is resampled with probability `per_block_prob`, uniformly
    /// over the block's other choices.
    pub fn mutate<R: Rng + ?Sized>(
        &self,
        g: &ArchGenome,
        per_block_prob: f64,
        rng: &mut R,
    ) -> Result<ArchGenome> {
        if !(0.0..=1.0).contains(&per_block_prob) {
            return Err(Error::Config(format!("mutation probability {per_block_prob} outside [0, 1]")));
        }
        self.check_genome(g)?;
        let choices = g
            .choices()
            .iter()
            .zip(&self.blocks)
            .map(|(&current, block)| {
                let n = block.choices.len();
                if rng.random_bool(per_block_prob) && n > 1 {
                    let r = rng.random_range(0..n - 1);
                    if r >= current {
                        r + 1
                    } else {
                        r
                    }
                } else {
                    current
                }
            })
            .collect();
        Ok(ArchGenome(choices))
    }

    /// Uniform crossover: each position copied from `a` or `b` with probability ½.
    pub fn crossover<R: Rng + ?Sized>(
        &self,
        a: &ArchGenome,
        b: &ArchGenome,
        rng: &mut R,
    ) -> Result<ArchGenome> {
        if a.len() != b.len() {
            return Err(Error::LengthMismatch {
                left: a.len(),
                right: b.len(),
            });
        }
        self.check_genome(a)?;
        self.check_genome(b)?;
        Ok(ArchGenome(
            a.choices()
                .iter()
                .zip(b.choices())
                .map(|(&x, &y)| if rng.random_bool(0.5) { x } else { y })
                .collect(),
        ))
    }

    pub fn enumerate(&self) -> Result<Vec<ArchGenome>> {
        self.enumerate_capped(ENUMERATION_CAP)
    }

    /// All genomes in lexicographic order (last block varies fastest).
    pub fn enumerate_capped(&self, cap: u128) -> Result<Vec<ArchGenome>> {
        let size = self.size();
        if size > cap {
            return Err(Error::SpaceTooLarge { size, cap });
        }
        let mut out = Vec::with_capacity(size as usize);
        let mut current = vec![0usize; self.blocks.len()];
        if self.blocks.iter().any(|b| b.choices.is_empty()) {
            return Ok(out);
        }
        loop {
            out.push(ArchGenome(current.clone()));
            let mut pos = self.blocks.len();
            loop {
                if pos == 0 {
                    return Ok(out);
                }
                pos -= 1;
                current[pos] += 1;
                if current[pos] < self.blocks[pos].choices.len() {
                    break;
                }
                current[pos] = 0;
            }
        }
    }

    /// A space with exactly the choices `g` selects, one per block.
    pub fn restrict(&self, g: &ArchGenome) -> Result<SearchSpace> {
        self.check_genome(g)?;
        Ok(SearchSpace {
            blocks: g
                .choices()
                .iter()
                .enumerate()
                .map(|(b, &c)| Block {
                    choices: vec![self.choice(b, c).clone()],
                })
                .collect(),
            cost_table: self
                .cost_table
                .as_ref()
                .map(|t| g.choices().iter().enumerate().map(|(b, &c)| vec![t[b][c]]).collect()),
            ..self.clone()
        })
    }

    /// Same catalog with new input width and class count.
    pub fn with_io(&self, input_dim: usize, num_classes: usize) -> SearchSpace {
        SearchSpace {
            input_dim,
            num_classes,
            ..self.clone()
        }
    }
}
