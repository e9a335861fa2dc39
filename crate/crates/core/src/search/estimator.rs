//! Fitness sources for the evolutionary driver.

use std::collections::HashMap;

use crate::data::Dataset;
use crate::space::ArchGenome;
use crate::supernet::{GradAggregate, Supernet, UpdateScope};
use crate::train::{eval_indices, evaluate_on, sgd_path, BatchStream, EvalResult, EvalSpec};
use crate::Result;

/// What the driver needs from a fitness source. Within one iteration the
/// driver calls `begin_iteration`, then `evaluate` followed by
/// `after_evaluation` for each candidate in order, then `end_iteration`.
pub trait Estimator {
    fn evaluate(&mut self, genome: &ArchGenome) -> Result<EvalResult>;

    fn begin_iteration(&mut self, _candidates: &[ArchGenome]) -> Result<()> {
        Ok(())
    }

    /// Hook run right after candidate `index` was evaluated.
    fn after_evaluation(&mut self, _index: usize, _genome: &ArchGenome) -> Result<()> {
        Ok(())
    }

    fn end_iteration(&mut self) -> Result<()> {
        Ok(())
    }

    /// Evaluation of the initial population. Defaults to plain evaluation.
    fn bootstrap(&mut self, genome: &ArchGenome) -> Result<EvalResult> {
        self.evaluate(genome)
    }

    /// Evaluation used to pick the final answer.
    fn final_evaluate(&mut self, genome: &ArchGenome) -> Result<EvalResult> {
        self.evaluate(genome)
    }
}

/// How the supernet changes while it is searched.
#[derive(Debug, Clone, PartialEq)]
pub enum ShiftPolicy {
    /// Weights never change (plain one-shot search).
    Frozen,
    /// Gradients of every candidate are summed and applied as one mean
    /// gradient step at the end of the iteration.
    Accumulate {
        lr: f64,
        /// Mini-batches per iteration, split as evenly as possible across candidates.
        batches_per_iter: usize,
        batch_size: usize,
    },
    /// Each candidate is fine-tuned right after its own evaluation.
    Immediate {
        lr: f64,
        steps_per_candidate: usize,
        batch_size: usize,
        scope: UpdateScope,
    },
}

/// Mini-batches assigned to each of `population` candidates when `total`
/// are spread evenly; the first `total % population` get one extra.
pub fn split_batches(total: usize, population: usize) -> Vec<usize> {
    if population == 0 {
        return Vec::new();
    }
    let (base, rem) = (total / population, total % population);
    (0..population).map(|t| base + usize::from(t < rem)).collect()
}

/// Supernet accuracy on a fixed validation subset, with optional shifting.
pub struct SupernetEstimator<'a> {
    net: &'a mut Supernet,
    dataset: &'a Dataset,
    eval: EvalSpec,
    eval_idx: Vec<usize>,
    final_idx: Vec<usize>,
    policy: ShiftPolicy,
    stream: BatchStream,
    aggregate: GradAggregate,
    plan: Vec<usize>,
    /// Results valid for the current weights.
    memo: HashMap<ArchGenome, EvalResult>,
}

impl<'a> SupernetEstimator<'a> {
    pub fn new(
        net: &'a mut Supernet,
        dataset: &'a Dataset,
        eval: EvalSpec,
        policy: ShiftPolicy,
        shift_seed: u64,
    ) -> Result<Self> {
        let eval_idx = eval_indices(dataset, &eval)?;
        let final_idx = eval_indices(dataset, &EvalSpec::full())?;
        Ok(Self {
            net,
            dataset,
            eval,
            eval_idx,
            final_idx,
            policy,
            stream: BatchStream::new(&dataset.splits().train, shift_seed)?,
            aggregate: GradAggregate::new(),
            plan: Vec::new(),
            memo: HashMap::new(),
        })
    }

    pub fn net(&self) -> &Supernet {
        self.net
    }

    pub fn policy(&self) -> &ShiftPolicy {
        &self.policy
    }

    fn fine_tune(&mut self, genome: &ArchGenome, batches: usize, batch_size: usize) -> Result<()> {
        for _ in 0..batches {
            let (x, labels) = self.dataset.gather(&self.stream.next_batch(batch_size))?;
            let (_, grads) = self.net.loss_and_grads(genome, &x, &labels)?;
            self.aggregate.add(&grads)?;
        }
        Ok(())
    }

    fn immediate(&mut self, genome: &ArchGenome) -> Result<()> {
        if let ShiftPolicy::Immediate {
            lr,
            steps_per_candidate,
            batch_size,
            scope,
        } = self.policy
        {
            for _ in 0..steps_per_candidate {
                let (x, labels) = self.dataset.gather(&self.stream.next_batch(batch_size))?;
                let (_, grads) = self.net.loss_and_grads(genome, &x, &labels)?;
                sgd_path(self.net, &grads, lr, scope)?;
            }
            if steps_per_candidate > 0 {
                self.memo.clear();
            }
        }
        Ok(())
    }
}

impl Estimator for SupernetEstimator<'_> {
    fn evaluate(&mut self, genome: &ArchGenome) -> Result<EvalResult> {
        if let Some(hit) = self.memo.get(genome) {
            return Ok(hit.clone());
        }
        let r = evaluate_on(self.net, genome, self.dataset, &self.eval_idx, self.eval.batch_size)?;
        self.memo.insert(genome.clone(), r.clone());
        Ok(r)
    }

    fn begin_iteration(&mut self, candidates: &[ArchGenome]) -> Result<()> {
        self.aggregate = GradAggregate::new();
        self.plan = match self.policy {
            ShiftPolicy::Accumulate { batches_per_iter, .. } => split_batches(batches_per_iter, candidates.len()),
            _ => Vec::new(),
        };
        Ok(())
    }

    fn after_evaluation(&mut self, index: usize, genome: &ArchGenome) -> Result<()> {
        match self.policy {
            ShiftPolicy::Frozen => Ok(()),
            ShiftPolicy::Accumulate { batch_size, .. } => {
                let batches = self.plan.get(index).copied().unwrap_or(0);
                self.fine_tune(genome, batches, batch_size)
            }
            ShiftPolicy::Immediate { .. } => self.immediate(genome),
        }
    }

    fn end_iteration(&mut self) -> Result<()> {
        if let ShiftPolicy::Accumulate { lr, .. } = self.policy {
            let n = self.aggregate.contributions();
            if n > 0 {
                self.net.apply_update(&self.aggregate, lr, n, UpdateScope::ALL)?;
                self.memo.clear();
            }
            self.aggregate = GradAggregate::new();
        }
        Ok(())
    }

    fn bootstrap(&mut self, genome: &ArchGenome) -> Result<EvalResult> {
        let r = self.evaluate(genome)?;
        self.immediate(genome)?;
        Ok(r)
    }

    fn final_evaluate(&mut self, genome: &ArchGenome) -> Result<EvalResult> {
        evaluate_on(self.net, genome, self.dataset, &self.final_idx, self.eval.batch_size)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_spreads_remainder_first() {
        let plan = split_batches(640, 50);
        assert_eq!(plan.iter().sum::<usize>(), 640);
        assert_eq!(plan[0], 13);
        assert_eq!(plan[39], 13);
        assert_eq!(plan[40], 12);
        assert_eq!(split_batches(6, 3), vec![2, 2, 2]);
        assert!(split_batches(5, 0).is_empty());
    }
}
