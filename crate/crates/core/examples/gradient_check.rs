//! Compares supernet path gradients with central finite differences.

use shiftnas::nn::{softmax_cross_entropy, Matrix};
use shiftnas::rng::rng_from_seed;
use shiftnas::space::{Dims, Preset, SearchSpace};
use shiftnas::supernet::Supernet;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dims = Dims {
        input_dim: 5,
        hidden_dim: 8,
        num_classes: 3,
    };
    let space = SearchSpace::preset(Preset::Tiny, dims);
    let net = Supernet::init(space.clone(), 3)?;
    let g = space.sample_uniform(&mut rng_from_seed(4));
    let x = Matrix::new(2, 5, (0..10).map(|i| (i as f64 * 0.37).sin()).collect())?;
    let labels = [0, 2];

    let (loss, grads) = net.loss_and_grads(&g, &x, &labels)?;
    println!("genome {g}, loss {loss:.6}");

    let loss_of = |n: &Supernet| -> shiftnas::Result<f64> { Ok(softmax_cross_entropy(&n.predict(&g, &x)?, &labels)?.0) };
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for (i, analytic) in grads.head.values().enumerate() {
        let mut up = net.clone();
        *up.head_mut().values_mut().nth(i).unwrap() += h;
        let mut down = net.clone();
        *down.head_mut().values_mut().nth(i).unwrap() -= h;
        let numeric = (loss_of(&up)? - loss_of(&down)?) / (2.0 * h);
        worst = worst.max((analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6));
    }
    println!("head parameters checked: {}", grads.head.values().count());
    println!("max relative error: {worst:.2e}");
    Ok(())
}
