//! Independent oracles shared by the integration tests and the acceptance run.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use shiftnas::nn::{layer_backward, layer_forward, softmax_cross_entropy, Activation, DenseParams, LayerSpec, Matrix};
use shiftnas::rng::rng_from_seed;
use shiftnas::space::{ArchGenome, SearchSpace};
use shiftnas::supernet::Supernet;
use statrs::distribution::{ChiSquared, ContinuousCDF};

pub const FD_STEP: f64 = 1e-5;

/// Relative error with a small floor so two near-zero values compare sanely.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Upper-tail p-value of Pearson's chi-square against equal expected counts.
pub fn chi_square_uniform_p(observed: &[u64]) -> f64 {
    let n: u64 = observed.iter().sum();
    let k = observed.len();
    assert!(k >= 2 && n > 0);
    let expected = n as f64 / k as f64;
    let stat: f64 = observed
        .iter()
        .map(|&o| (o as f64 - expected).powi(2) / expected)
        .sum();
    let dist = ChiSquared::new((k - 1) as f64).unwrap();
    1.0 - dist.cdf(stat)
}

/// Tau-b by direct pair enumeration.
pub fn brute_tau_b(xs: &[f64], ys: &[f64]) -> f64 {
    let (mut c, mut d, mut tx, mut ty) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for i in 0..xs.len() {
        for j in i + 1..xs.len() {
            let dx = xs[i] - xs[j];
            let dy = ys[i] - ys[j];
            if dx == 0.0 && dy == 0.0 {
                continue;
            } else if dx == 0.0 {
                tx += 1.0;
            } else if dy == 0.0 {
                ty += 1.0;
            } else if dx * dy > 0.0 {
                c += 1.0;
            } else {
                d += 1.0;
            }
        }
    }
    (c - d) / ((c + d + tx) * (c + d + ty)).sqrt()
}

pub fn random_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix {
    let n = Normal::new(0.0, 1.0).unwrap();
    Matrix::new(rows, cols, (0..rows * cols).map(|_| n.sample(rng)).collect()).unwrap()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerCase {
    Identity,
    Linear,
    Relu,
    Tanh,
}

pub const LAYER_CASES: [LayerCase; 4] = [LayerCase::Identity, LayerCase::Linear, LayerCase::Relu, LayerCase::Tanh];

/// Max relative error between analytic and central-difference gradients of
/// `L = Σ G ⊙ layer(x)` over x, W and b, for one seeded random instance.
pub fn layer_fd_case(case: LayerCase, seed: u64) -> f64 {
    let mut rng = rng_from_seed(seed);
    let n = rng.random_range(1..5);
    let din = rng.random_range(1..7);
    let (spec, dout) = match case {
        LayerCase::Identity => (LayerSpec::identity(din), din),
        other => {
            let dout = rng.random_range(1..7);
            let act = match other {
                LayerCase::Linear => Activation::None,
                LayerCase::Relu => Activation::Relu,
                _ => Activation::Tanh,
            };
            (LayerSpec::dense(din, dout, act), dout)
        }
    };
    let params = (case != LayerCase::Identity).then(|| DenseParams {
        weight: random_matrix(din, dout, &mut rng),
        bias: random_matrix(1, dout, &mut rng).into_data(),
    });
    // keep relu pre-activations away from the kink
    let x = loop {
        let x = random_matrix(n, din, &mut rng);
        let Some(p) = &params else { break x };
        let mut z = x.matmul(&p.weight).unwrap();
        z.add_row_vector(&p.bias).unwrap();
        if case != LayerCase::Relu || z.data().iter().all(|v| v.abs() > 1e-3) {
            break x;
        }
    };
    let g = random_matrix(n, dout, &mut rng);
    let loss = |p: Option<&DenseParams>, x: &Matrix| -> f64 {
        let (y, _) = layer_forward(&spec, p, x).unwrap();
        y.data().iter().zip(g.data()).map(|(a, b)| a * b).sum()
    };
    let (_, cache) = layer_forward(&spec, params.as_ref(), &x).unwrap();
    let (gx, gp) = layer_backward(&spec, params.as_ref(), &cache, &g).unwrap();

    let mut worst: f64 = 0.0;
    for i in 0..x.data().len() {
        let (mut xp, mut xm) = (x.clone(), x.clone());
        xp.data_mut()[i] += FD_STEP;
        xm.data_mut()[i] -= FD_STEP;
        let num = (loss(params.as_ref(), &xp) - loss(params.as_ref(), &xm)) / (2.0 * FD_STEP);
        worst = worst.max(rel_err(gx.data()[i], num));
    }
    if let (Some(p), Some(gp)) = (&params, &gp) {
        let analytic: Vec<f64> = gp.values().collect();
        for (i, a) in analytic.iter().enumerate() {
            let (mut pp, mut pm) = (p.clone(), p.clone());
            *pp.values_mut().nth(i).unwrap() += FD_STEP;
            *pm.values_mut().nth(i).unwrap() -= FD_STEP;
            let num = (loss(Some(&pp), &x) - loss(Some(&pm), &x)) / (2.0 * FD_STEP);
            worst = worst.max(rel_err(*a, num));
        }
    } else {
        assert!(gp.is_none() && params.is_none());
    }
    worst
}

/// A parameter of a supernet addressed for finite differences.
#[derive(Debug, Clone, Copy)]
pub enum ParamRef {
    Stem(usize),
    Head(usize),
    Block { block: usize, choice: usize, layer: usize, index: usize },
}

pub fn param_mut(net: &mut Supernet, r: ParamRef) -> &mut f64 {
    match r {
        ParamRef::Stem(i) => net.stem_mut().values_mut().nth(i).unwrap(),
        ParamRef::Head(i) => net.head_mut().values_mut().nth(i).unwrap(),
        ParamRef::Block {
            block,
            choice,
            layer,
            index,
        } => net.choice_params_mut(block, choice)[layer]
            .as_mut()
            .unwrap()
            .values_mut()
            .nth(index)
            .unwrap(),
    }
}

/// Max relative error of end-to-end path gradients (cross-entropy loss) for
/// genome `g` against central differences on every parameter of the path.
pub fn path_fd_case(net: &Supernet, g: &ArchGenome, x: &Matrix, labels: &[usize]) -> f64 {
    let (_, grads) = net.loss_and_grads(g, x, labels).unwrap();
    let mut pairs: Vec<(ParamRef, f64)> = Vec::new();
    pairs.extend(grads.stem.values().enumerate().map(|(i, v)| (ParamRef::Stem(i), v)));
    pairs.extend(grads.head.values().enumerate().map(|(i, v)| (ParamRef::Head(i), v)));
    for (&(block, choice), layers) in &grads.blocks {
        for (layer, lg) in layers.iter().enumerate() {
            if let Some(lg) = lg {
                pairs.extend(lg.values().enumerate().map(|(index, v)| {
                    (
                        ParamRef::Block {
                            block,
                            choice,
                            layer,
                            index,
                        },
                        v,
                    )
                }));
            }
        }
    }
    let loss_of = |n: &Supernet| {
        let logits = n.predict(g, x).unwrap();
        softmax_cross_entropy(&logits, labels).unwrap().0
    };
    let mut worst: f64 = 0.0;
    let mut probe = net.clone();
    for (r, analytic) in pairs {
        let orig = *param_mut(&mut probe, r);
        *param_mut(&mut probe, r) = orig + FD_STEP;
        let up = loss_of(&probe);
        *param_mut(&mut probe, r) = orig - FD_STEP;
        let down = loss_of(&probe);
        *param_mut(&mut probe, r) = orig;
        worst = worst.max(rel_err(analytic, (up - down) / (2.0 * FD_STEP)));
    }
    worst
}

/// Gives every bias a random value. Fresh nets have zero biases, which puts
/// relu pre-activations exactly on the kink whenever the layer below is dead.
pub fn randomize_biases(net: &mut Supernet, seed: u64) {
    let mut rng = rng_from_seed(seed);
    let n = Normal::new(0.0, 0.5).unwrap();
    for v in net.stem_mut().bias.iter_mut() {
        *v = n.sample(&mut rng);
    }
    for v in net.head_mut().bias.iter_mut() {
        *v = n.sample(&mut rng);
    }
    let space = net.space().clone();
    for b in 0..space.num_blocks() {
        for c in 0..space.num_choices(b) {
            for layer in net.choice_params_mut(b, c).iter_mut().flatten() {
                for v in layer.bias.iter_mut() {
                    *v = n.sample(&mut rng);
                }
            }
        }
    }
}

/// Adds seeded noise to every choice that `g` does not select.
pub fn perturb_unselected(net: &mut Supernet, g: &ArchGenome, seed: u64) -> usize {
    let mut rng = rng_from_seed(seed);
    let n = Normal::new(0.0, 1.0).unwrap();
    let space: SearchSpace = net.space().clone();
    let mut touched = 0;
    for b in 0..space.num_blocks() {
        for c in 0..space.num_choices(b) {
            if g.choices()[b] == c {
                continue;
            }
            for layer in net.choice_params_mut(b, c).iter_mut().flatten() {
                for v in layer.values_mut() {
                    *v += n.sample(&mut rng);
                    touched += 1;
                }
            }
        }
    }
    touched
}

/// Runs the CLI in-process and returns its exit code.
pub fn cli(args: &[&str]) -> i32 {
    let mut argv = vec!["shiftnas"];
    argv.extend_from_slice(args);
    shiftnas::cli::main_with_args(argv)
}

pub fn write_config(dir: &Path, name: &str, json: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, json).unwrap();
    path
}

/// A small but complete pipeline config on the tiny preset.
pub fn tiny_config(output_dir: &str, seed: u64) -> String {
    format!(
        r#"{{
  "space": {{ "preset": {{ "name": "tiny", "hidden_dim": 16 }} }},
  "dataset": {{ "synthetic": {{ "preset": "rings" }} }},
  "train": {{ "steps": 300 }},
  "retrain": {{ "steps": 150 }},
  "search": {{ "population_t": 10, "iterations": 3, "shift_lr": 0.1, "shift_samples_per_iter": 40, "shift_batch_size": 8 }},
  "transfer": {{ "ea": {{ "population_t": 6, "iterations": 2, "shift_lr": 0.05 }}, "steps_per_candidate": 2 }},
  "master_seed": {seed},
  "output_dir": "{output_dir}"
}}"#
    )
}

pub fn read(path: impl AsRef<Path>) -> Vec<u8> {
    std::fs::read(path.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", path.as_ref().display()))
}
