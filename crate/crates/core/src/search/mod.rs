//! Evolutionary search over a trained supernet with optional supernet
//! shifting.
//!
//! Each iteration generates `population_t` candidates from the current
//! top-T, evaluates every candidate on the weights as they were at the start
//! of the iteration, accumulates shifting gradients through each candidate's
//! path, applies one mean-gradient step, and finally merges the candidates
//! into the top-T. A genome sampled again replaces its stored accuracy with
//! the latest measurement.

mod estimator;
mod nsga;
mod surrogate;

use std::collections::BTreeMap;
use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::rng::{derive_seed, rng_from_seed, SeededRng};
use crate::space::{ArchGenome, SearchSpace};
use crate::supernet::Supernet;
use crate::train::{EvalResult, EvalSpec};
use crate::{Error, Result};

pub use estimator::{split_batches, Estimator, ShiftPolicy, SupernetEstimator};
pub use nsga::{crowding_distance, nondominated_sort};
pub use surrogate::{surrogate_search, SurrogateConfig, SurrogateEstimator, SurrogateFitness};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMode {
    #[default]
    SingleObjective,
    /// Nondominated rank + crowding distance over (accuracy, cost).
    BiObjective,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EAConfig {
    pub population_t: usize,
    pub iterations: usize,
    pub mutation_prob: f64,
    /// Fraction of candidates produced by crossover (then mutation).
    pub crossover_fraction: f64,
    pub shift_lr: f64,
    /// Shifting mini-batches per iteration, split across candidates.
    pub shift_samples_per_iter: usize,
    /// Rows per shifting mini-batch.
    pub shift_batch_size: usize,
    pub flops_budget: Option<u64>,
    pub mode: SearchMode,
    pub shifting: bool,
    pub max_resample_attempts: usize,
    /// When false, candidates ignore the top-T and are uniform samples.
    pub elitism: bool,
    pub eval: EvalSpec,
    #[serde(skip)]
    pub seed: u64,
}

impl Default for EAConfig {
    fn default() -> Self {
        Self {
            population_t: 50,
            iterations: 20,
            mutation_prob: 0.1,
            crossover_fraction: 0.5,
            shift_lr: 1e-4,
            shift_samples_per_iter: 640,
            shift_batch_size: 1,
            flops_budget: None,
            mode: SearchMode::SingleObjective,
            shifting: true,
            max_resample_attempts: 100,
            elitism: true,
            eval: EvalSpec::default(),
            seed: 0,
        }
    }
}

impl EAConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population_t < 2 {
            return Err(Error::Config("search.population_t must be >= 2".into()));
        }
        if !(0.0..=1.0).contains(&self.mutation_prob) {
            return Err(Error::Config("search.mutation_prob must be in [0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.crossover_fraction) {
            return Err(Error::Config("search.crossover_fraction must be in [0, 1]".into()));
        }
        if !(self.shift_lr.is_finite() && self.shift_lr >= 0.0) {
            return Err(Error::Config("search.shift_lr must be finite and >= 0".into()));
        }
        if self.shift_batch_size == 0 {
            return Err(Error::Config("search.shift_batch_size must be >= 1".into()));
        }
        Ok(())
    }

    /// The flops cap in force: the config's, else the space's.
    pub fn budget(&self, space: &SearchSpace) -> Option<u64> {
        self.flops_budget.or(space.flops_budget)
    }

    /// Shifting policy implied by `shifting`, `shift_lr` and the sample counts.
    pub fn shift_policy(&self) -> ShiftPolicy {
        if self.shifting {
            ShiftPolicy::Accumulate {
                lr: self.shift_lr,
                batches_per_iter: self.shift_samples_per_iter,
                batch_size: self.shift_batch_size,
            }
        } else {
            ShiftPolicy::Frozen
        }
    }

    pub(crate) fn ea_rng(&self) -> SeededRng {
        rng_from_seed(derive_seed(self.seed, "search/ea"))
    }

    pub(crate) fn shift_seed(&self) -> u64 {
        derive_seed(self.seed, "search/shift")
    }

    pub(crate) fn eval_spec(&self) -> EvalSpec {
        EvalSpec {
            seed: derive_seed(self.seed, "search/eval"),
            ..self.eval
        }
    }
}

/// A top-T entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Member {
    pub genome: ArchGenome,
    pub result: EvalResult,
    pub flops: u64,
    pub cost: f64,
}

impl Member {
    pub fn new(space: &SearchSpace, result: EvalResult) -> Result<Self> {
        Ok(Self {
            flops: space.flops(&result.genome)?,
            cost: space.cost(&result.genome)?,
            genome: result.genome.clone(),
            result,
        })
    }

    pub fn accuracy(&self) -> f64 {
        self.result.accuracy
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Bootstrap,
    Candidate,
    Final,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Bootstrap => "bootstrap",
            Phase::Candidate => "candidate",
            Phase::Final => "final",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEvent {
    pub iteration: usize,
    pub genome: ArchGenome,
    pub accuracy: f64,
    pub flops: u64,
    pub phase: Phase,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub iteration: usize,
    pub genome: ArchGenome,
    pub accuracy: f64,
}

pub struct SearchState {
    pub top_t: Vec<Member>,
    pub history: Vec<HistoryEvent>,
    pub iteration: usize,
    rng: SeededRng,
}

impl SearchState {
    pub fn new(cfg: &EAConfig) -> Self {
        Self {
            top_t: Vec::new(),
            history: Vec::new(),
            iteration: 0,
            rng: cfg.ea_rng(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub best: Member,
    /// Nondominated members of the final top-T (bi-objective mode only).
    pub pareto_front: Vec<Member>,
    pub top_t: Vec<Member>,
    /// Final top-T re-evaluated on the final weights over the full validation split.
    pub final_evaluations: Vec<Member>,
    pub history: Vec<HistoryEvent>,
    pub trajectory: Vec<TrajectoryRow>,
}

impl SearchResult {
    /// Genomes drawn by the search (bootstrap and candidates, not the final re-evaluation).
    pub fn sampled_genomes(&self) -> impl Iterator<Item = &ArchGenome> {
        self.history
            .iter()
            .filter(|e| e.phase != Phase::Final)
            .map(|e| &e.genome)
    }

    /// `iteration,genome,acc,flops,phase`
    pub fn write_history_csv<W: Write>(&self, mut out: W, comment: Option<&str>) -> std::io::Result<()> {
        if let Some(c) = comment {
            writeln!(out, "# {c}")?;
        }
        writeln!(out, "iteration,genome,acc,flops,phase")?;
        for e in &self.history {
            writeln!(out, "{},{},{},{},{}", e.iteration, e.genome, e.accuracy, e.flops, e.phase.as_str())?;
        }
        Ok(())
    }

    /// `iteration,probe_genome,acc`
    pub fn write_trajectory_csv<W: Write>(&self, mut out: W, comment: Option<&str>) -> std::io::Result<()> {
        if let Some(c) = comment {
            writeln!(out, "# {c}")?;
        }
        writeln!(out, "iteration,probe_genome,acc")?;
        for r in &self.trajectory {
            writeln!(out, "{},{},{}", r.iteration, r.genome, r.accuracy)?;
        }
        Ok(())
    }

    /// Probe accuracies at one iteration, in probe order.
    pub fn trajectory_at(&self, iteration: usize) -> Vec<&TrajectoryRow> {
        self.trajectory.iter().filter(|r| r.iteration == iteration).collect()
    }
}

/// A feasible genome drawn uniformly: rejection sampling first, then a draw
/// from the enumerated feasible set when the space is small enough.
pub fn uniform_feasible<R: Rng + ?Sized>(
    space: &SearchSpace,
    budget: Option<u64>,
    attempts: usize,
    rng: &mut R,
) -> Result<ArchGenome> {
    for _ in 0..attempts.max(1) {
        let g = space.sample_uniform(rng);
        if space.is_feasible(&g, budget)? {
            return Ok(g);
        }
    }
    let Some(budget) = budget else {
        unreachable!("every genome is feasible without a budget");
    };
    let feasible: Vec<ArchGenome> = space
        .enumerate()
        .map_err(|_| Error::Infeasible { budget })?
        .into_iter()
        .filter(|g| space.flops(g).is_ok_and(|f| f <= budget))
        .collect();
    if feasible.is_empty() {
        return Err(Error::Infeasible { budget });
    }
    Ok(feasible[rng.random_range(0..feasible.len())].clone())
}

/// `population_t` new candidates. The first `crossover_fraction` come from
/// crossover of two distinct parents followed by mutation, the rest from
/// mutating one parent. Infeasible children are regenerated up to
/// `max_resample_attempts` times, then replaced by a uniform feasible sample.
pub fn generate_candidates<R: Rng + ?Sized>(
    parents: &[ArchGenome],
    cfg: &EAConfig,
    rng: &mut R,
    space: &SearchSpace,
) -> Result<Vec<ArchGenome>> {
    let budget = cfg.budget(space);
    let n = cfg.population_t;
    if parents.is_empty() || !cfg.elitism {
        return (0..n)
            .map(|_| uniform_feasible(space, budget, cfg.max_resample_attempts, rng))
            .collect();
    }
    let n_cross = (cfg.crossover_fraction * n as f64).round() as usize;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut child = None;
        for _ in 0..cfg.max_resample_attempts.max(1) {
            let g = if i < n_cross && parents.len() >= 2 {
                let a = rng.random_range(0..parents.len());
                let mut b = rng.random_range(0..parents.len() - 1);
                if b >= a {
                    b += 1;
                }
                let c = space.crossover(&parents[a], &parents[b], rng)?;
                space.mutate(&c, cfg.mutation_prob, rng)?
            } else {
                let p = &parents[rng.random_range(0..parents.len())];
                space.mutate(p, cfg.mutation_prob, rng)?
            };
            if space.is_feasible(&g, budget)? {
                child = Some(g);
                break;
            }
        }
        let child = match child {
            Some(g) => g,
            None => uniform_feasible(space, budget, cfg.max_resample_attempts, rng)?,
        };
        out.push(child);
    }
    Ok(out)
}

/// Accuracy descending, then flops ascending, then genome.
fn rank_key(a: &Member, b: &Member) -> std::cmp::Ordering {
    b.accuracy()
        .total_cmp(&a.accuracy())
        .then(a.flops.cmp(&b.flops))
        .then_with(|| a.genome.cmp(&b.genome))
}

/// Merges new measurements into the top-T. Later measurements of a genome
/// replace earlier ones; the union is deduplicated, filtered by the budget,
/// ordered, and truncated to `population_t`.
pub fn update_top_t(
    top_t: &[Member],
    candidates: &[Member],
    cfg: &EAConfig,
    space: &SearchSpace,
) -> Vec<Member> {
    let budget = cfg.budget(space);
    let mut merged: BTreeMap<ArchGenome, Member> = BTreeMap::new();
    for m in top_t.iter().chain(candidates) {
        merged.insert(m.genome.clone(), m.clone());
    }
    let mut members: Vec<Member> = merged
        .into_values()
        .filter(|m| budget.is_none_or(|b| m.flops <= b))
        .collect();
    match cfg.mode {
        SearchMode::SingleObjective => members.sort_by(rank_key),
        SearchMode::BiObjective => members = pareto_order(members),
    }
    members.truncate(cfg.population_t);
    members
}

/// Front index ascending, crowding distance descending, then [`rank_key`].
fn pareto_order(members: Vec<Member>) -> Vec<Member> {
    let points: Vec<(f64, f64)> = members.iter().map(|m| (m.accuracy(), m.cost)).collect();
    let mut keyed: Vec<(usize, f64, Member)> = Vec::with_capacity(members.len());
    let mut slots: Vec<Option<Member>> = members.into_iter().map(Some).collect();
    for (rank, front) in nondominated_sort(&points).into_iter().enumerate() {
        let front_points: Vec<(f64, f64)> = front.iter().map(|&i| points[i]).collect();
        for (&i, d) in front.iter().zip(crowding_distance(&front_points)) {
            keyed.push((rank, d, slots[i].take().expect("each index in one front")));
        }
    }
    keyed.sort_by(|a, b| {
        a.0.cmp(&b.0)
            .then(b.1.total_cmp(&a.1))
            .then_with(|| rank_key(&a.2, &b.2))
    });
    keyed.into_iter().map(|(_, _, m)| m).collect()
}

/// One generation: generate, evaluate all on the pre-update weights while
/// feeding shifting hooks, close the iteration, then update the top-T.
pub fn ea_iteration<E: Estimator>(
    state: &mut SearchState,
    estimator: &mut E,
    cfg: &EAConfig,
    space: &SearchSpace,
) -> Result<()> {
    let parents: Vec<ArchGenome> = state.top_t.iter().map(|m| m.genome.clone()).collect();
    let candidates = generate_candidates(&parents, cfg, &mut state.rng, space)?;
    state.iteration += 1;
    estimator.begin_iteration(&candidates)?;
    let mut members = Vec::with_capacity(candidates.len());
    for (t, g) in candidates.iter().enumerate() {
        let result = estimator.evaluate(g)?;
        estimator.after_evaluation(t, g)?;
        let member = Member::new(space, result)?;
        state.history.push(HistoryEvent {
            iteration: state.iteration,
            genome: g.clone(),
            accuracy: member.accuracy(),
            flops: member.flops,
            phase: Phase::Candidate,
        });
        members.push(member);
    }
    estimator.end_iteration()?;
    state.top_t = update_top_t(&state.top_t, &members, cfg, space);
    Ok(())
}

/// Evaluates the initial population and seeds the top-T.
pub fn bootstrap<E: Estimator>(
    state: &mut SearchState,
    estimator: &mut E,
    cfg: &EAConfig,
    space: &SearchSpace,
) -> Result<()> {
    let initial = generate_candidates(&[], cfg, &mut state.rng, space)?;
    let mut members = Vec::with_capacity(initial.len());
    for g in &initial {
        let member = Member::new(space, estimator.bootstrap(g)?)?;
        state.history.push(HistoryEvent {
            iteration: 0,
            genome: g.clone(),
            accuracy: member.accuracy(),
            flops: member.flops,
            phase: Phase::Bootstrap,
        });
        members.push(member);
    }
    state.top_t = update_top_t(&state.top_t, &members, cfg, space);
    Ok(())
}

/// Full driver for any estimator. `hook(iteration, estimator)` runs after
/// bootstrap (iteration 0) and after every iteration.
pub fn run_search<E: Estimator>(
    space: &SearchSpace,
    estimator: &mut E,
    cfg: &EAConfig,
    probes: &[ArchGenome],
    mut hook: impl FnMut(usize, &mut E) -> Result<()>,
) -> Result<SearchResult> {
    cfg.validate()?;
    for p in probes {
        space.check_genome(p)?;
    }
    let mut state = SearchState::new(cfg);
    let mut trajectory = Vec::new();
    let mut record = |iteration: usize, estimator: &mut E, trajectory: &mut Vec<TrajectoryRow>| -> Result<()> {
        for p in probes {
            trajectory.push(TrajectoryRow {
                iteration,
                genome: p.clone(),
                accuracy: estimator.evaluate(p)?.accuracy,
            });
        }
        hook(iteration, estimator)
    };

    bootstrap(&mut state, estimator, cfg, space)?;
    record(0, estimator, &mut trajectory)?;
    for _ in 0..cfg.iterations {
        ea_iteration(&mut state, estimator, cfg, space)?;
        record(state.iteration, estimator, &mut trajectory)?;
    }

    let mut finals = Vec::with_capacity(state.top_t.len());
    for m in &state.top_t {
        let member = Member::new(space, estimator.final_evaluate(&m.genome)?)?;
        state.history.push(HistoryEvent {
            iteration: state.iteration,
            genome: member.genome.clone(),
            accuracy: member.accuracy(),
            flops: member.flops,
            phase: Phase::Final,
        });
        finals.push(member);
    }
    let (best, pareto_front) = match cfg.mode {
        SearchMode::SingleObjective => {
            let best = finals.iter().min_by(|a, b| rank_key(a, b)).cloned();
            (best, Vec::new())
        }
        SearchMode::BiObjective => {
            let points: Vec<(f64, f64)> = finals.iter().map(|m| (m.accuracy(), m.cost)).collect();
            let mut front: Vec<Member> = nondominated_sort(&points)
                .first()
                .map(|f| f.iter().map(|&i| finals[i].clone()).collect())
                .unwrap_or_default();
            front.sort_by(rank_key);
            (front.first().cloned(), front)
        }
    };
    let best = best.ok_or_else(|| Error::Precondition("search produced an empty population".into()))?;
    Ok(SearchResult {
        best,
        pareto_front,
        top_t: state.top_t,
        final_evaluations: finals,
        history: state.history,
        trajectory,
    })
}

/// Evolutionary search on `net`, shifting it in place when `cfg.shifting`.
pub fn search(
    net: &mut Supernet,
    dataset: &Dataset,
    cfg: &EAConfig,
    probes: &[ArchGenome],
) -> Result<SearchResult> {
    search_with_hook(net, dataset, cfg, probes, |_, _| Ok(()))
}

/// [`search`] with a callback that sees the supernet after bootstrap
/// (iteration 0) and after every iteration.
pub fn search_with_hook(
    net: &mut Supernet,
    dataset: &Dataset,
    cfg: &EAConfig,
    probes: &[ArchGenome],
    mut hook: impl FnMut(usize, &Supernet) -> Result<()>,
) -> Result<SearchResult> {
    let space = net.space().clone();
    let mut est = SupernetEstimator::new(net, dataset, cfg.eval_spec(), cfg.shift_policy(), cfg.shift_seed())?;
    run_search(&space, &mut est, cfg, probes, |it, e| hook(it, e.net()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use crate::space::{Dims, Preset};

    fn space() -> SearchSpace {
        SearchSpace::preset(
            Preset::Tiny,
            Dims {
                input_dim: 8,
                hidden_dim: 16,
                num_classes: 4,
            },
        )
    }

    fn member(g: &str, acc: f64, space: &SearchSpace) -> Member {
        Member::new(
            space,
            EvalResult {
                genome: g.parse().unwrap(),
                accuracy: acc,
                loss: 0.0,
                at_step: 0,
            },
        )
        .unwrap()
    }

    #[test]
    fn empty_parents_bootstrap_uniformly() {
        let s = space();
        let cfg = EAConfig::default();
        let mut rng = rng_from_seed(1);
        let c = generate_candidates(&[], &cfg, &mut rng, &s).unwrap();
        assert_eq!(c.len(), 50);
        let mut rng2 = rng_from_seed(1);
        for g in &c {
            assert_eq!(g, &s.sample_uniform(&mut rng2));
        }
    }

    #[test]
    fn identity_budget_forces_identity() {
        let s = space();
        let budget = s.flops(&ArchGenome::zeros(4)).unwrap();
        let cfg = EAConfig {
            flops_budget: Some(budget),
            ..EAConfig::default()
        };
        let mut rng = rng_from_seed(2);
        let parents = vec!["1-2-3-1".parse().unwrap(), "0-0-0-0".parse().unwrap()];
        for g in generate_candidates(&parents, &cfg, &mut rng, &s)
            .unwrap()
            .into_iter()
            .chain(generate_candidates(&[], &cfg, &mut rng, &s).unwrap())
        {
            assert_eq!(g, ArchGenome::zeros(4));
        }
    }

    #[test]
    fn latest_accuracy_wins() {
        let s = space();
        let cfg = EAConfig {
            population_t: 3,
            ..EAConfig::default()
        };
        let top = vec![member("1-1-1-1", 0.9, &s), member("2-2-2-2", 0.8, &s)];
        let updated = update_top_t(&top, &[member("1-1-1-1", 0.5, &s)], &cfg, &s);
        assert_eq!(updated[0].genome.to_string(), "2-2-2-2");
        assert_eq!(updated[1].accuracy(), 0.5);
    }

    #[test]
    fn worse_candidates_leave_full_top_t_unchanged() {
        let s = space();
        let cfg = EAConfig {
            population_t: 2,
            ..EAConfig::default()
        };
        let top = vec![member("1-1-1-1", 0.9, &s), member("2-2-2-2", 0.8, &s)];
        let updated = update_top_t(&top, &[member("3-3-3-3", 0.1, &s), member("0-1-0-1", 0.2, &s)], &cfg, &s);
        assert_eq!(updated, top);
    }

    #[test]
    fn ties_prefer_lower_flops_then_genome() {
        let s = space();
        let cfg = EAConfig::default();
        let out = update_top_t(
            &[],
            &[member("1-0-0-0", 0.5, &s), member("0-0-0-0", 0.5, &s), member("3-0-0-0", 0.5, &s)],
            &cfg,
            &s,
        );
        let order: Vec<String> = out.iter().map(|m| m.genome.to_string()).collect();
        assert_eq!(order, vec!["0-0-0-0", "1-0-0-0", "3-0-0-0"]);
    }

    #[test]
    fn bi_objective_keeps_front_first() {
        let s = space();
        let cfg = EAConfig {
            population_t: 2,
            mode: SearchMode::BiObjective,
            ..EAConfig::default()
        };
        // cheap and decent vs. expensive and best vs. dominated
        let out = update_top_t(
            &[],
            &[member("0-0-0-0", 0.6, &s), member("1-1-1-1", 0.9, &s), member("1-1-1-3", 0.5, &s)],
            &cfg,
            &s,
        );
        let kept: Vec<String> = out.iter().map(|m| m.genome.to_string()).collect();
        assert!(kept.contains(&"0-0-0-0".to_string()) && kept.contains(&"1-1-1-1".to_string()));
    }

    #[test]
    fn config_validation() {
        assert!(EAConfig {
            population_t: 1,
            ..EAConfig::default()
        }
        .validate()
        .is_err());
        assert!(EAConfig {
            mutation_prob: -0.1,
            ..EAConfig::default()
        }
        .validate()
        .is_err());
        EAConfig::default().validate().unwrap();
    }
}
