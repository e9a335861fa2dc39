//! Order-preserving diagnostics: Kendall's tau-b, global top-k hits, the
//! good-vs-poor order experiment, sampling-bias correlation and cross-task
//! rank comparison.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::space::{ArchGenome, SearchSpace};
use crate::supernet::Supernet;
use crate::train::{evaluate_arch, retrain_from_scratch, EvalSpec, TrainConfig};
use crate::{Error, Result};

/// Kendall's tau-b: `(C − D) / sqrt((C + D + Tx)(C + D + Ty))`, where `Tx`
/// (`Ty`) counts pairs tied only in `xs` (`ys`). Equals tau-a without ties.
pub fn kendall_tau(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::LengthMismatch {
            left: xs.len(),
            right: ys.len(),
        });
    }
    if xs.len() < 2 {
        return Err(Error::TauUndefined("need at least two observations"));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::TauUndefined("non-finite score"));
    }
    let (mut concordant, mut discordant, mut tied_x, mut tied_y) = (0u64, 0u64, 0u64, 0u64);
    for i in 0..xs.len() {
        for j in i + 1..xs.len() {
            let dx = xs[i] - xs[j];
            let dy = ys[i] - ys[j];
            match (dx == 0.0, dy == 0.0) {
                (true, true) => {}
                (true, false) => tied_x += 1,
                (false, true) => tied_y += 1,
                (false, false) => {
                    if (dx > 0.0) == (dy > 0.0) {
                        concordant += 1
                    } else {
                        discordant += 1
                    }
                }
            }
        }
    }
    let cd = (concordant + discordant) as f64;
    let denom = ((cd + tied_x as f64) * (cd + tied_y as f64)).sqrt();
    if denom == 0.0 {
        return Err(Error::TauUndefined("one sequence is constant"));
    }
    Ok((concordant as f64 - discordant as f64) / denom)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedPair {
    pub id: String,
    pub estimated: f64,
    pub truth: f64,
}

/// Ids of the `k` best entries by `score`, ties broken by id.
fn top_k_ids<'a>(pairs: &'a [RankedPair], k: usize, score: impl Fn(&RankedPair) -> f64) -> Vec<&'a str> {
    let mut order: Vec<&RankedPair> = pairs.iter().collect();
    order.sort_by(|a, b| score(b).total_cmp(&score(a)).then_with(|| a.id.cmp(&b.id)));
    order.into_iter().take(k).map(|p| p.id.as_str()).collect()
}

/// How many of `good_ids` appear in the top-`k` by estimated score.
pub fn global_topk_hits(pairs: &[RankedPair], good_ids: &BTreeSet<String>, k: usize) -> Result<usize> {
    if k > pairs.len() {
        return Err(Error::Precondition(format!("k = {k} exceeds {} pairs", pairs.len())));
    }
    let known: BTreeSet<&str> = pairs.iter().map(|p| p.id.as_str()).collect();
    if let Some(unknown) = good_ids.iter().find(|id| !known.contains(id.as_str())) {
        return Err(Error::UnknownId(unknown.clone()));
    }
    Ok(top_k_ids(pairs, k, |p| p.estimated)
        .into_iter()
        .filter(|id| good_ids.contains(*id))
        .count())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderReport {
    /// Label of the supernet snapshot, e.g. the shifting iteration.
    pub iteration: usize,
    pub global_hits: usize,
    pub global_k: usize,
    /// Tau-b of estimated vs true scores over the good set. Reported as `0.0`
    /// when undefined (all estimates tied).
    pub local_tau: f64,
    pub local_tau_defined: bool,
    pub n_good: usize,
    pub n_poor: usize,
}

impl OrderReport {
    pub fn from_pairs(iteration: usize, good: &[RankedPair], poor: &[RankedPair]) -> Result<Self> {
        let all: Vec<RankedPair> = good.iter().chain(poor).cloned().collect();
        let good_ids: BTreeSet<String> = good.iter().map(|p| p.id.clone()).collect();
        let k = good.len();
        let global_hits = global_topk_hits(&all, &good_ids, k)?;
        let est: Vec<f64> = good.iter().map(|p| p.estimated).collect();
        let truth: Vec<f64> = good.iter().map(|p| p.truth).collect();
        let (local_tau, local_tau_defined) = match kendall_tau(&est, &truth) {
            Ok(t) => (t, true),
            Err(Error::TauUndefined(_)) => (0.0, false),
            Err(e) => return Err(e),
        };
        Ok(Self {
            iteration,
            global_hits,
            global_k: k,
            local_tau,
            local_tau_defined,
            n_good: good.len(),
            n_poor: poor.len(),
        })
    }
}

/// `iteration,global_hits,local_tau` rows.
pub fn write_order_csv<W: Write>(reports: &[OrderReport], mut out: W, comment: Option<&str>) -> std::io::Result<()> {
    if let Some(c) = comment {
        writeln!(out, "# {c}")?;
    }
    writeln!(out, "iteration,global_hits,local_tau")?;
    for r in reports {
        writeln!(out, "{},{},{}", r.iteration, r.global_hits, r.local_tau)?;
    }
    Ok(())
}

/// Ground-truth scores of the good and poor sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderTruth {
    pub good: Vec<(ArchGenome, f64)>,
    pub poor: Vec<(ArchGenome, f64)>,
}

impl OrderTruth {
    /// Every good genome must beat every poor genome.
    pub fn check(&self) -> Result<()> {
        for (g, tg) in &self.good {
            for (p, tp) in &self.poor {
                if tg <= tp {
                    return Err(Error::Precondition(format!(
                        "good genome {g} (truth {tg}) does not beat poor genome {p} (truth {tp})"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Retrains every genome from scratch (`jobs` at a time) and checks the
/// good-beats-poor precondition.
pub fn retrain_truth(
    space: &SearchSpace,
    good: &[ArchGenome],
    poor: &[ArchGenome],
    dataset: &Dataset,
    retrain_cfg: &TrainConfig,
    jobs: usize,
) -> Result<OrderTruth> {
    let all: Vec<ArchGenome> = good.iter().chain(poor).cloned().collect();
    let scores = retrain_many(space, &all, dataset, retrain_cfg, jobs)?;
    let truth = OrderTruth {
        good: good.iter().cloned().zip(scores[..good.len()].iter().copied()).collect(),
        poor: poor.iter().cloned().zip(scores[good.len()..].iter().copied()).collect(),
    };
    truth.check()?;
    Ok(truth)
}

/// Retrain accuracies in input order; independent jobs run on up to `jobs` threads.
pub fn retrain_many(
    space: &SearchSpace,
    genomes: &[ArchGenome],
    dataset: &Dataset,
    cfg: &TrainConfig,
    jobs: usize,
) -> Result<Vec<f64>> {
    let jobs = jobs.max(1).min(genomes.len().max(1));
    let chunk = genomes.len().div_ceil(jobs).max(1);
    let results: Vec<Result<Vec<f64>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = genomes
            .chunks(chunk)
            .map(|part| {
                scope.spawn(move || {
                    part.iter()
                        .map(|g| retrain_from_scratch(space, g, dataset, cfg).map(|r| r.accuracy))
                        .collect::<Result<Vec<f64>>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("retrain worker panicked"))
            .collect()
    });
    let mut out = Vec::with_capacity(genomes.len());
    for r in results {
        out.extend(r?);
    }
    Ok(out)
}

/// Evaluates the good and poor genomes on each `(iteration, supernet)` snapshot
/// against precomputed truth.
pub fn order_experiment(
    checkpoints: &[(usize, &Supernet)],
    truth: &OrderTruth,
    dataset: &Dataset,
    eval: &EvalSpec,
) -> Result<Vec<OrderReport>> {
    truth.check()?;
    checkpoints
        .iter()
        .map(|&(iteration, net)| {
            let score = |set: &[(ArchGenome, f64)]| -> Result<Vec<RankedPair>> {
                set.iter()
                    .map(|(g, t)| {
                        Ok(RankedPair {
                            id: g.to_string(),
                            estimated: evaluate_arch(net, g, dataset, eval)?.accuracy,
                            truth: *t,
                        })
                    })
                    .collect()
            };
            OrderReport::from_pairs(iteration, &score(&truth.good)?, &score(&truth.poor)?)
        })
        .collect()
}

/// Kendall correlation between how often each genome was sampled and its true score.
pub fn sampling_fitness_correlation<'a>(
    samples: impl IntoIterator<Item = &'a ArchGenome>,
    truth: impl Fn(&ArchGenome) -> f64,
) -> Result<f64> {
    let mut counts: BTreeMap<&ArchGenome, u64> = BTreeMap::new();
    for g in samples {
        *counts.entry(g).or_default() += 1;
    }
    if counts.len() < 2 {
        return Err(Error::TauUndefined("fewer than two distinct sampled genomes"));
    }
    let (c, t): (Vec<f64>, Vec<f64>) = counts.iter().map(|(g, &n)| (n as f64, truth(g))).unzip();
    kendall_tau(&c, &t)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossTaskReport {
    pub global_overlap: f64,
    /// Tau-b of task-A vs task-B truth over task A's top-k.
    pub local_tau: f64,
}

/// Compares truth rankings of the same architectures on two tasks.
pub fn cross_task_rank(pairs_a: &[RankedPair], pairs_b: &[RankedPair], k: usize) -> Result<CrossTaskReport> {
    let b_truth: HashMap<&str, f64> = pairs_b.iter().map(|p| (p.id.as_str(), p.truth)).collect();
    let a_ids: BTreeSet<&str> = pairs_a.iter().map(|p| p.id.as_str()).collect();
    if a_ids.len() != b_truth.len() || pairs_a.len() != pairs_b.len() {
        return Err(Error::LengthMismatch {
            left: pairs_a.len(),
            right: pairs_b.len(),
        });
    }
    if let Some(id) = a_ids.iter().find(|id| !b_truth.contains_key(*id)) {
        return Err(Error::UnknownId(id.to_string()));
    }
    if k == 0 || k > pairs_a.len() {
        return Err(Error::Precondition(format!("k = {k} must be in 1..={}", pairs_a.len())));
    }
    let top_a = top_k_ids(pairs_a, k, |p| p.truth);
    let top_b: BTreeSet<&str> = top_k_ids(pairs_b, k, |p| p.truth).into_iter().collect();
    let overlap = top_a.iter().filter(|id| top_b.contains(*id)).count();
    let a_truth: HashMap<&str, f64> = pairs_a.iter().map(|p| (p.id.as_str(), p.truth)).collect();
    let xs: Vec<f64> = top_a.iter().map(|id| a_truth[id]).collect();
    let ys: Vec<f64> = top_a.iter().map(|id| b_truth[id]).collect();
    Ok(CrossTaskReport {
        global_overlap: overlap as f64 / k as f64,
        local_tau: kendall_tau(&xs, &ys)?,
    })
}
