//! Reusing a supernet trained on one task for search on another.
//!
//! The head is re-initialized for the new label set (the stem too when the
//! input width changes) and the search fine-tunes the net as it goes: each
//! candidate is evaluated first, then trained for a few SGD steps on its own
//! path before the next candidate is looked at.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::rng::{derive_seed, rng_from_seed};
use crate::search::{run_search, EAConfig, SearchResult, ShiftPolicy, SupernetEstimator};
use crate::space::ArchGenome;
use crate::supernet::{Supernet, UpdateScope};
use crate::train::{eval_indices, evaluate_on, EvalSpec};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransferMode {
    #[default]
    FinetuneAll,
    /// Only the head (and a re-initialized stem) are trained.
    FreezeFeatures,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransferConfig {
    pub mode: TransferMode,
    /// Search settings; `shift_lr` is the fine-tuning rate.
    pub ea: EAConfig,
    pub head_seed: u64,
    pub immediate_updates: bool,
    pub steps_per_candidate: usize,
    pub batch_size: usize,
    /// Random genomes tracked by the convergence probe.
    pub probe_count: usize,
}

impl Default for TransferConfig {
    fn default() -> Self {
        Self {
            mode: TransferMode::FinetuneAll,
            ea: EAConfig::default(),
            head_seed: 0,
            immediate_updates: true,
            steps_per_candidate: 10,
            batch_size: 32,
            probe_count: 8,
        }
    }
}

impl TransferConfig {
    pub fn validate(&self) -> Result<()> {
        self.ea.validate()?;
        if self.batch_size == 0 {
            return Err(Error::Config("transfer.batch_size must be >= 1".into()));
        }
        Ok(())
    }

    /// Parameter groups that fine-tuning may touch on `net`.
    pub fn scope(&self, net: &Supernet) -> UpdateScope {
        match self.mode {
            TransferMode::FinetuneAll => UpdateScope::ALL,
            TransferMode::FreezeFeatures => UpdateScope {
                stem: net.stem_reinitialized(),
                blocks: false,
                head: true,
            },
        }
    }

    fn policy(&self, net: &Supernet) -> ShiftPolicy {
        if self.immediate_updates {
            ShiftPolicy::Immediate {
                lr: self.ea.shift_lr,
                steps_per_candidate: self.steps_per_candidate,
                batch_size: self.batch_size,
                scope: self.scope(net),
            }
        } else {
            ShiftPolicy::Frozen
        }
    }
}

/// The pretrained net adapted to `dataset`: new head, stem kept when the
/// input width matches.
pub fn prepare(pretrained: &Supernet, dataset: &Dataset, tcfg: &TransferConfig) -> Result<Supernet> {
    pretrained.reset_head(dataset.num_classes(), dataset.input_dim(), tcfg.head_seed)
}

/// Search on `dataset` starting from `pretrained`. Returns the adapted net
/// alongside the search result.
pub fn transfer_search(
    pretrained: &Supernet,
    dataset: &Dataset,
    tcfg: &TransferConfig,
) -> Result<(Supernet, SearchResult)> {
    transfer_search_with_hook(pretrained, dataset, tcfg, &[], |_, _| Ok(()))
}

/// [`transfer_search`] with probes and a per-iteration callback on the net.
pub fn transfer_search_with_hook(
    pretrained: &Supernet,
    dataset: &Dataset,
    tcfg: &TransferConfig,
    probes: &[ArchGenome],
    mut hook: impl FnMut(usize, &Supernet) -> Result<()>,
) -> Result<(Supernet, SearchResult)> {
    tcfg.validate()?;
    let mut net = prepare(pretrained, dataset, tcfg)?;
    let space = net.space().clone();
    let policy = tcfg.policy(&net);
    let result = {
        let mut est =
            SupernetEstimator::new(&mut net, dataset, tcfg.ea.eval_spec(), policy, tcfg.ea.shift_seed())?;
        run_search(&space, &mut est, &tcfg.ea, probes, |it, e| hook(it, e.net()))?
    };
    Ok((net, result))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub iteration: usize,
    pub transfer_acc: f64,
    pub reference_acc: f64,
    pub gap: f64,
}

/// Seeded random genomes used as the probe set.
pub fn probe_genomes(net: &Supernet, count: usize, seed: u64) -> Vec<ArchGenome> {
    let mut rng = rng_from_seed(derive_seed(seed, "transfer/probes"));
    (0..count).map(|_| net.space().sample_uniform(&mut rng)).collect()
}

/// Mean supernet accuracy of `probes` on the given validation rows.
pub fn probe_mean(net: &Supernet, probes: &[ArchGenome], dataset: &Dataset, eval: &EvalSpec) -> Result<f64> {
    if probes.is_empty() {
        return Err(Error::Precondition("probe set is empty".into()));
    }
    let idx = eval_indices(dataset, eval)?;
    let mut sum = 0.0;
    for g in probes {
        sum += evaluate_on(net, g, dataset, &idx, eval.batch_size)?.accuracy;
    }
    Ok(sum / probes.len() as f64)
}

/// Per-iteration gap between the transferred net and `reference` (a net
/// trained from scratch on `dataset`) over a fixed probe set.
pub fn transfer_convergence_probe(
    pretrained: &Supernet,
    dataset: &Dataset,
    tcfg: &TransferConfig,
    reference: &Supernet,
) -> Result<Vec<GapRow>> {
    if tcfg.probe_count == 0 {
        return Err(Error::Precondition("probe set is empty".into()));
    }
    let probes = probe_genomes(reference, tcfg.probe_count, tcfg.ea.seed);
    let eval = tcfg.ea.eval_spec();
    let reference_acc = probe_mean(reference, &probes, dataset, &eval)?;
    // Iteration 0 is the untouched head-reset net, before any fine-tuning.
    let raw = probe_mean(&prepare(pretrained, dataset, tcfg)?, &probes, dataset, &eval)?;
    let mut rows = vec![GapRow {
        iteration: 0,
        transfer_acc: raw,
        reference_acc,
        gap: reference_acc - raw,
    }];
    transfer_search_with_hook(pretrained, dataset, tcfg, &[], |iteration, net| {
        if iteration == 0 {
            return Ok(());
        }
        let transfer_acc = probe_mean(net, &probes, dataset, &eval)?;
        rows.push(GapRow {
            iteration,
            transfer_acc,
            reference_acc,
            gap: reference_acc - transfer_acc,
        });
        Ok(())
    })?;
    Ok(rows)
}

/// `iteration,transfer_acc,reference_acc,gap`
pub fn write_gap_csv<W: Write>(rows: &[GapRow], mut out: W, comment: Option<&str>) -> std::io::Result<()> {
    if let Some(c) = comment {
        writeln!(out, "# {c}")?;
    }
    writeln!(out, "iteration,transfer_acc,reference_acc,gap")?;
    for r in rows {
        writeln!(out, "{},{},{},{}", r.iteration, r.transfer_acc, r.reference_acc, r.gap)?;
    }
    Ok(())
}
