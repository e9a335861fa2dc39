use super::DenseParams;
use crate::{Error, Result};

/// Plain SGD: `p ← p − lr·g`, elementwise.
pub fn sgd_step(params: &mut DenseParams, grads: &DenseParams, lr: f64) -> Result<()> {
    if !params.same_shape(grads) {
        return Err(Error::shape(
            "sgd_step",
            format!("{:?}", params.weight.shape()),
            format!("{:?}", grads.weight.shape()),
        ));
    }
    sgd_slice(params.weight.data_mut(), grads.weight.data(), lr);
    sgd_slice(&mut params.bias, &grads.bias, lr);
    Ok(())
}

pub(crate) fn sgd_slice(params: &mut [f64], grads: &[f64], lr: f64) {
    for (p, g) in params.iter_mut().zip(grads) {
        *p -= lr * g;
    }
}
