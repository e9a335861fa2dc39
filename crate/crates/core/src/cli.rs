//! Command-line front end. Every command reads a [`RunConfig`], writes into
//! the run directory (`config.json`, `checkpoints/`, `logs/`, `results/`) and
//! stamps each artifact with the config hash and master seed.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{DatasetSource, LoadedConfig, RunConfig, SEED_ENV};
use crate::metrics::{order_experiment, retrain_many, retrain_truth, write_order_csv, OrderTruth};
use crate::rng::derive_seed;
use crate::search::{search_with_hook, EAConfig};
use crate::space::{ArchGenome, SearchSpace};
use crate::supernet::{load_checkpoint, load_checkpoint_expecting, save_checkpoint, Provenance, Supernet};
use crate::train::train;
use crate::transfer::{transfer_convergence_probe, transfer_search_with_hook, write_gap_csv};
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "shiftnas", version, about = "One-shot architecture search with supernet shifting")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a supernet with single-path sampling.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Evolutionary search over a trained supernet.
    Search {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Keep the supernet frozen (plain one-shot search).
        #[arg(long)]
        no_shifting: bool,
        /// Random genomes whose accuracy is tracked every iteration.
        #[arg(long, default_value_t = 5)]
        probes: usize,
        /// Also save the supernet after every K iterations (and before the first).
        #[arg(long)]
        snapshot_every: Option<usize>,
    },
    /// Train genomes alone from scratch (ground truth).
    Retrain {
        #[arg(long)]
        config: PathBuf,
        /// Genome such as 1-2-0-3; repeat for several.
        #[arg(long, required = true)]
        genome: Vec<ArchGenome>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Rank-preservation audit of supernet snapshots against retrained truth.
    OrderAudit {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        checkpoints: Vec<PathBuf>,
        /// File with one good genome per line.
        #[arg(long)]
        good: PathBuf,
        /// File with one poor genome per line.
        #[arg(long)]
        poor: PathBuf,
        /// Labels for the snapshots; defaults to 0, 1, 2, ...
        #[arg(long, value_delimiter = ',')]
        iterations: Option<Vec<usize>>,
        /// Reuse a truth JSON written by an earlier audit instead of retraining.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Adapt a pretrained supernet to a new dataset while searching.
    Transfer {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Synthetic preset name or CSV path.
        #[arg(long)]
        dataset: String,
        /// Supernet trained from scratch on the new dataset, for the gap table.
        #[arg(long)]
        reference: Option<PathBuf>,
    },
    /// Summarize and cross-check all artifacts in a run directory.
    Report {
        #[arg(long)]
        run_dir: PathBuf,
    },
}

/// JSON wrapper written for every result file.
#[derive(Debug, Serialize, Deserialize)]
pub struct Artifact<T> {
    pub kind: String,
    pub config_hash: String,
    pub master_seed: u64,
    pub data: T,
}

/// Parses `argv` and runs the command; returns the process exit code.
/// Errors go to stderr as one JSON object.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let msg = e.render().to_string();
            eprintln!("{}", json!({ "error": "usage", "message": msg.trim() }));
            return 2;
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", json!({ "error": e.kind(), "message": e.to_string() }));
            1
        }
    }
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Train { config } => cmd_train(&config),
        Command::Search {
            config,
            checkpoint,
            no_shifting,
            probes,
            snapshot_every,
        } => cmd_search(&config, &checkpoint, no_shifting, probes, snapshot_every),
        Command::Retrain { config, genome, jobs } => cmd_retrain(&config, &genome, jobs),
        Command::OrderAudit {
            config,
            checkpoints,
            good,
            poor,
            iterations,
            truth,
            jobs,
        } => cmd_order_audit(&config, &checkpoints, &good, &poor, iterations, truth.as_deref(), jobs),
        Command::Transfer {
            config,
            checkpoint,
            dataset,
            reference,
        } => cmd_transfer(&config, &checkpoint, &dataset, reference.as_deref()),
        Command::Report { run_dir } => cmd_report(&run_dir),
    }
}

/// An opened run: config, resolved run directory and provenance.
struct Run {
    loaded: LoadedConfig,
    dir: PathBuf,
    provenance: Provenance,
}

impl Run {
    fn open(config: &Path) -> Result<Self> {
        let loaded = RunConfig::load(config)?;
        if let Some(seed) = loaded.seed_override {
            eprintln!("{}", json!({ "event": "seed_override", "env": SEED_ENV, "master_seed": seed }));
        }
        let dir = loaded.run_dir();
        for sub in ["checkpoints", "logs", "results"] {
            let p = dir.join(sub);
            fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
        }
        let provenance = loaded.config.provenance();
        let echo = serde_json::to_string_pretty(&loaded.config)? + "\n";
        write_file(&dir.join("config.json"), echo.as_bytes())?;
        Ok(Self {
            loaded,
            dir,
            provenance,
        })
    }

    fn cfg(&self) -> &RunConfig {
        &self.loaded.config
    }

    fn comment(&self) -> String {
        format!(
            "config_hash={} master_seed={}",
            self.provenance.config_hash, self.provenance.master_seed
        )
    }

    fn result<T: Serialize>(&self, name: &str, data: T) -> Result<()> {
        let artifact = Artifact {
            kind: name.to_string(),
            config_hash: self.provenance.config_hash.clone(),
            master_seed: self.provenance.master_seed,
            data,
        };
        let text = serde_json::to_string_pretty(&artifact)? + "\n";
        write_file(&self.dir.join("results").join(format!("{name}.json")), text.as_bytes())
    }

    fn log(&self, name: &str, write: impl FnOnce(&mut Vec<u8>, &str) -> std::io::Result<()>) -> Result<()> {
        let path = self.dir.join("logs").join(name);
        let mut buf = Vec::new();
        write(&mut buf, &self.comment()).map_err(|e| Error::io(&path, e))?;
        write_file(&path, &buf)
    }

    fn checkpoint(&self, name: &str, net: &Supernet) -> Result<PathBuf> {
        let path = self.dir.join("checkpoints").join(name);
        save_checkpoint(net, &path, Some(&self.provenance))?;
        Ok(path)
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn cmd_train(config: &Path) -> Result<()> {
    let run = Run::open(config)?;
    let data = run.loaded.dataset()?;
    let space = run.cfg().build_space(&data)?;
    let mut net = Supernet::init(space, run.cfg().supernet_seed())?;
    let log = train(&mut net, &data, &run.cfg().train_config())?;
    run.checkpoint("supernet.ckpt", &net)?;
    run.log("train.csv", |w, c| log.write_csv(w, Some(c)))?;
    run.result(
        "train",
        json!({
            "dataset": data.name,
            "steps": net.train_steps(),
            "param_count": net.param_count(),
            "checksum": net.checksum(),
            "mean_loss_last_100": log.mean_loss_tail(100),
            "choice_counts": log.choice_counts,
        }),
    )
}

fn cmd_search(
    config: &Path,
    checkpoint: &Path,
    no_shifting: bool,
    n_probes: usize,
    snapshot_every: Option<usize>,
) -> Result<()> {
    let run = Run::open(config)?;
    let data = run.loaded.dataset()?;
    let space = run.cfg().build_space(&data)?;
    let (mut net, _) = load_checkpoint_expecting(checkpoint, &space)?;
    let checksum_before = net.checksum();
    let cfg = EAConfig {
        shifting: !no_shifting,
        ..run.cfg().search_config()
    };
    let probes = probe_set(&space, n_probes, run.cfg().master_seed);
    let tag = if no_shifting { "search_noshift" } else { "search" };
    let result = search_with_hook(&mut net, &data, &cfg, &probes, |it, net| {
        if let Some(k) = snapshot_every {
            if k > 0 && it % k == 0 {
                run.checkpoint(&format!("{tag}_iter{it}.ckpt"), net)?;
            }
        }
        Ok(())
    })?;
    run.checkpoint(&format!("{tag}_final.ckpt"), &net)?;
    run.log(&format!("{tag}_history.csv"), |w, c| result.write_history_csv(w, Some(c)))?;
    run.log(&format!("{tag}_trajectory.csv"), |w, c| result.write_trajectory_csv(w, Some(c)))?;
    run.result(
        tag,
        json!({
            "shifting": cfg.shifting,
            "checksum_before": checksum_before,
            "checksum_after": net.checksum(),
            "best": result.best,
            "pareto_front": result.pareto_front,
            "final_evaluations": result.final_evaluations,
            "top_t": result.top_t,
        }),
    )
}

/// Seeded random genomes tracked during search.
fn probe_set(space: &SearchSpace, n: usize, master_seed: u64) -> Vec<ArchGenome> {
    let mut rng = crate::rng::rng_from_seed(derive_seed(master_seed, "cli/probes"));
    (0..n).map(|_| space.sample_uniform(&mut rng)).collect()
}

fn cmd_retrain(config: &Path, genomes: &[ArchGenome], jobs: usize) -> Result<()> {
    let run = Run::open(config)?;
    let data = run.loaded.dataset()?;
    let space = run.cfg().build_space(&data)?;
    for g in genomes {
        space.check_genome(g)?;
    }
    let scores = retrain_many(&space, genomes, &data, &run.cfg().retrain_config(), jobs)?;
    let rows: Vec<Value> = genomes
        .iter()
        .zip(&scores)
        .map(|(g, acc)| json!({ "genome": g, "accuracy": acc }))
        .collect();
    run.result("retrain", rows)
}

fn read_genomes(path: &Path) -> Result<Vec<ArchGenome>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(i, l)| {
            l.trim().parse().map_err(|e: Error| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

fn cmd_order_audit(
    config: &Path,
    checkpoints: &[PathBuf],
    good: &Path,
    poor: &Path,
    iterations: Option<Vec<usize>>,
    truth_path: Option<&Path>,
    jobs: usize,
) -> Result<()> {
    let run = Run::open(config)?;
    let data = run.loaded.dataset()?;
    let space = run.cfg().build_space(&data)?;
    let (good, poor) = (read_genomes(good)?, read_genomes(poor)?);
    for g in good.iter().chain(&poor) {
        space.check_genome(g)?;
    }
    let labels = iterations.unwrap_or_else(|| (0..checkpoints.len()).collect());
    if labels.len() != checkpoints.len() {
        return Err(Error::LengthMismatch {
            left: labels.len(),
            right: checkpoints.len(),
        });
    }
    let truth = match truth_path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            let artifact: Artifact<OrderTruth> = serde_json::from_str(&text)?;
            artifact.data.check()?;
            artifact.data
        }
        None => retrain_truth(&space, &good, &poor, &data, &run.cfg().retrain_config(), jobs)?,
    };
    run.result("order_truth", &truth)?;
    let nets = checkpoints
        .iter()
        .map(|p| load_checkpoint_expecting(p, &space).map(|(n, _)| n))
        .collect::<Result<Vec<_>>>()?;
    let snapshots: Vec<(usize, &Supernet)> = labels.iter().copied().zip(nets.iter()).collect();
    let reports = order_experiment(&snapshots, &truth, &data, &run.cfg().audit_eval)?;
    run.log("order.csv", |w, c| write_order_csv(&reports, w, Some(c)))?;
    run.result("order", &reports)
}

fn cmd_transfer(config: &Path, checkpoint: &Path, dataset: &str, reference: Option<&Path>) -> Result<()> {
    let run = Run::open(config)?;
    let data = DatasetSource::from_arg(dataset).load(run.cfg().master_seed, &run.loaded.base_dir)?;
    let expected = run.cfg().build_space(&data)?;
    let (pretrained, _) = load_checkpoint(checkpoint)?;
    if pretrained.space().with_io(data.input_dim(), data.num_classes()) != expected {
        return Err(Error::SpaceMismatch);
    }
    let tcfg = run.cfg().transfer_config();
    let probes = probe_set(&expected, 5, run.cfg().master_seed);
    let (net, result) = transfer_search_with_hook(&pretrained, &data, &tcfg, &probes, |_, _| Ok(()))?;
    run.checkpoint("transfer_final.ckpt", &net)?;
    run.log("transfer_history.csv", |w, c| result.write_history_csv(w, Some(c)))?;
    run.log("transfer_trajectory.csv", |w, c| result.write_trajectory_csv(w, Some(c)))?;
    if let Some(r) = reference {
        let (reference, _) = load_checkpoint_expecting(r, &expected)?;
        let rows = transfer_convergence_probe(&pretrained, &data, &tcfg, &reference)?;
        run.log("transfer_gap.csv", |w, c| write_gap_csv(&rows, w, Some(c)))?;
    }
    run.result(
        "transfer",
        json!({
            "dataset": data.name,
            "mode": tcfg.mode,
            "stem_reinitialized": net.stem_reinitialized(),
            "best": result.best,
            "pareto_front": result.pareto_front,
            "final_evaluations": result.final_evaluations,
        }),
    )
}

#[derive(Debug, Serialize)]
struct ArtifactCheck {
    path: String,
    config_hash: Option<String>,
    master_seed: Option<u64>,
    matches_config: bool,
}

/// `config_hash=… master_seed=…` from a CSV comment line.
fn parse_comment(line: &str) -> (Option<String>, Option<u64>) {
    let mut hash = None;
    let mut seed = None;
    for tok in line.trim_start_matches('#').split_whitespace() {
        if let Some(v) = tok.strip_prefix("config_hash=") {
            hash = Some(v.to_string());
        } else if let Some(v) = tok.strip_prefix("master_seed=") {
            seed = v.parse().ok();
        }
    }
    (hash, seed)
}

fn cmd_report(run_dir: &Path) -> Result<()> {
    let config_path = run_dir.join("config.json");
    let text = fs::read_to_string(&config_path).map_err(|e| Error::io(&config_path, e))?;
    let config = RunConfig::from_json(&text)?;
    let expected = config.provenance();

    let mut checks = Vec::new();
    let mut results = BTreeMap::new();
    let mut check = |path: &Path, hash: Option<String>, seed: Option<u64>| {
        let matches = hash.as_deref() == Some(expected.config_hash.as_str()) && seed == Some(expected.master_seed);
        checks.push(ArtifactCheck {
            path: path.strip_prefix(run_dir).unwrap_or(path).display().to_string(),
            config_hash: hash,
            master_seed: seed,
            matches_config: matches,
        });
    };

    for path in sorted_files(&run_dir.join("results"), "json")? {
        if path.file_name().is_some_and(|n| n == "report.json") {
            continue;
        }
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let artifact: Artifact<Value> = serde_json::from_str(&text)?;
        check(&path, Some(artifact.config_hash), Some(artifact.master_seed));
        results.insert(artifact.kind, artifact.data);
    }
    for path in sorted_files(&run_dir.join("logs"), "csv")? {
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let first = text.lines().next().unwrap_or_default();
        let (hash, seed) = if first.starts_with('#') { parse_comment(first) } else { (None, None) };
        check(&path, hash, seed);
    }
    for path in sorted_files(&run_dir.join("checkpoints"), "ckpt")? {
        let (_, header) = load_checkpoint(&path)?;
        let p = header.provenance;
        check(&path, p.as_ref().map(|p| p.config_hash.clone()), p.map(|p| p.master_seed));
    }

    let consistent = checks.iter().all(|c| c.matches_config);
    let report = json!({
        "config_hash": expected.config_hash,
        "master_seed": expected.master_seed,
        "consistent": consistent,
        "artifacts": checks,
        "results": results,
    });
    let out = serde_json::to_string_pretty(&report)? + "\n";
    write_file(&run_dir.join("results").join("report.json"), out.as_bytes())?;
    println!("{out}");
    if !consistent {
        return Err(Error::Precondition(
            "some artifacts were produced by a different config or seed".into(),
        ));
    }
    Ok(())
}

fn sorted_files(dir: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    if !dir.exists() {
        return Ok(Vec::new());
    }
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == ext))
        .collect();
    files.sort();
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comment_round_trip() {
        let (h, s) = parse_comment("# config_hash=abc123 master_seed=7");
        assert_eq!(h.as_deref(), Some("abc123"));
        assert_eq!(s, Some(7));
    }

    #[test]
    fn unknown_flag_is_usage_error() {
        assert_eq!(main_with_args(["shiftnas", "train", "--bogus"]), 2);
        assert_eq!(main_with_args(["shiftnas", "frobnicate"]), 2);
    }

    #[test]
    fn missing_config_fails() {
        assert_eq!(main_with_args(["shiftnas", "train", "--config", "/nonexistent/c.json"]), 1);
    }
}
