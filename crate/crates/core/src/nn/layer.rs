//! Dense and identity layers with exact hand-derived backward passes.
//!
//! A dense layer computes `y = act(x·W + b)` with `W` stored as an
//! `in_dim × out_dim` row-major matrix, so a batch `x` is `n × in_dim`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Matrix;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Dense,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
    None,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::None => z,
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `y`.
    #[inline]
    fn derivative(self, z: f64, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::None => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn dense(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Self {
            kind: LayerKind::Dense,
            in_dim,
            out_dim,
            activation,
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            kind: LayerKind::Identity,
            in_dim: dim,
            out_dim: dim,
            activation: Activation::None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_dim == 0 || self.out_dim == 0 {
            return Err(Error::InvalidLayer("dims must be positive".into()));
        }
        if self.kind == LayerKind::Identity
            && (self.in_dim != self.out_dim || self.activation != Activation::None)
        {
            return Err(Error::InvalidLayer(
                "identity requires in_dim == out_dim and no activation".into(),
            ));
        }
        Ok(())
    }

    pub fn has_params(&self) -> bool {
        self.kind == LayerKind::Dense
    }

    /// Number of weight-matrix elements (biases excluded).
    pub fn weight_elements(&self) -> u64 {
        match self.kind {
            LayerKind::Dense => (self.in_dim * self.out_dim) as u64,
            LayerKind::Identity => 0,
        }
    }
}

/// Weights and bias of a dense layer. Gradients share the same layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseParams {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

pub type DenseGrads = DenseParams;

impl DenseParams {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            weight: Matrix::zeros(in_dim, out_dim),
            bias: vec![0.0; out_dim],
        }
    }

    /// Glorot-uniform weights in `±sqrt(6/(fan_in+fan_out))`, zero bias.
    pub fn glorot<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let limit = glorot_limit(in_dim, out_dim);
        let mut p = Self::zeros(in_dim, out_dim);
        for w in p.weight.data_mut() {
            *w = rng.random_range(-limit..=limit);
        }
        p
    }

    pub fn in_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn matches(&self, spec: &LayerSpec) -> bool {
        spec.kind == LayerKind::Dense
            && self.weight.shape() == (spec.in_dim, spec.out_dim)
            && self.bias.len() == spec.out_dim
    }

    pub fn same_shape(&self, other: &DenseParams) -> bool {
        self.weight.shape() == other.weight.shape() && self.bias.len() == other.bias.len()
    }

    pub fn add_assign(&mut self, other: &DenseParams) -> Result<()> {
        if !self.same_shape(other) {
            return Err(Error::shape(
                "DenseParams::add_assign",
                format!("{:?}", self.weight.shape()),
                format!("{:?}", other.weight.shape()),
            ));
        }
        for (a, b) in self.weight.data_mut().iter_mut().zip(other.weight.data()) {
            *a += b;
        }
        for (a, b) in self.bias.iter_mut().zip(&other.bias) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        self.weight.data_mut().iter_mut().for_each(|w| *w *= factor);
        self.bias.iter_mut().for_each(|b| *b *= factor);
    }

    /// Weights then bias, the canonical flattening order.
    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.weight.data().iter().chain(&self.bias).copied()
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.weight.data_mut().iter_mut().chain(self.bias.iter_mut())
    }
}

pub fn glorot_limit(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Values kept from the forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct LayerCache {
    input: Matrix,
    pre_activation: Option<Matrix>,
    output: Option<Matrix>,
}

impl LayerCache {
    pub fn input(&self) -> &Matrix {
        &self.input
    }
}

fn check_params<'a>(spec: &LayerSpec, params: Option<&'a DenseParams>) -> Result<Option<&'a DenseParams>> {
    spec.validate()?;
    match (spec.kind, params) {
        (LayerKind::Identity, None) => Ok(None),
        (LayerKind::Identity, Some(_)) => Err(Error::InvalidLayer(
            "identity layer takes no params".into(),
        )),
        (LayerKind::Dense, Some(p)) if p.matches(spec) => Ok(Some(p)),
        (LayerKind::Dense, Some(p)) => Err(Error::shape(
            "layer params",
            format!("{}x{}", spec.in_dim, spec.out_dim),
            format!("{}x{} (bias {})", p.in_dim(), p.out_dim(), p.bias.len()),
        )),
        (LayerKind::Dense, None) => Err(Error::InvalidLayer("dense layer requires params".into())),
    }
}

pub fn layer_forward(
    spec: &LayerSpec,
    params: Option<&DenseParams>,
    x: &Matrix,
) -> Result<(Matrix, LayerCache)> {
    let params = check_params(spec, params)?;
    if x.cols() != spec.in_dim {
        return Err(Error::shape("layer_forward input", spec.in_dim, x.cols()));
    }
    let Some(p) = params else {
        return Ok((
            x.clone(),
            LayerCache {
                input: x.clone(),
                pre_activation: None,
                output: None,
            },
        ));
    };
    let mut z = x.matmul(&p.weight)?;
    z.add_row_vector(&p.bias)?;
    let y = match spec.activation {
        Activation::None => z.clone(),
        act => z.map(|v| act.apply(v)),
    };
    if !y.is_finite() {
        return Err(Error::NonFinite("layer_forward"));
    }
    Ok((
        y.clone(),
        LayerCache {
            input: x.clone(),
            pre_activation: Some(z),
            output: Some(y),
        },
    ))
}

/// Returns `(∂L/∂x, ∂L/∂{W,b})`; the parameter gradient is `None` for identity layers.
pub fn layer_backward(
    spec: &LayerSpec,
    params: Option<&DenseParams>,
    cache: &LayerCache,
    grad_out: &Matrix,
) -> Result<(Matrix, Option<DenseGrads>)> {
    let params = check_params(spec, params)?;
    let expected = (cache.input.rows(), spec.out_dim);
    if grad_out.shape() != expected {
        return Err(Error::shape(
            "layer_backward grad_out",
            format!("{expected:?}"),
            format!("{:?}", grad_out.shape()),
        ));
    }
    let Some(p) = params else {
        return Ok((grad_out.clone(), None));
    };
    let (Some(z), Some(y)) = (&cache.pre_activation, &cache.output) else {
        return Err(Error::InvalidLayer("cache was produced by a different layer kind".into()));
    };
    let mut grad_z = grad_out.clone();
    if spec.activation != Activation::None {
        for ((g, &zv), &yv) in grad_z.data_mut().iter_mut().zip(z.data()).zip(y.data()) {
            *g *= spec.activation.derivative(zv, yv);
        }
    }
    let grad_w = cache.input.t_matmul(&grad_z)?;
    let grad_b = grad_z.col_sums();
    let grad_in = grad_z.matmul_t(&p.weight)?;
    Ok((
        grad_in,
        Some(DenseParams {
            weight: grad_w,
            bias: grad_b,
        }),
    ))
}
