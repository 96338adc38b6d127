//! Backpropagation against central finite differences on the standard
//! network shape.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use relroute::features::INPUT_LEN;
use relroute::nn::{standard_shape, Mlp};

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut mlp = Mlp::new(&standard_shape(INPUT_LEN), 3);
    for layer in mlp.layers_mut() {
        layer.biases.iter_mut().for_each(|b| *b = rng.random_range(-0.1..0.1));
    }
    let rows = 8;
    let xs: Vec<f64> = (0..rows * INPUT_LEN).map(|_| rng.random::<f64>()).collect();
    let ys: Vec<f64> = (0..rows).map(|_| rng.random_range(-10.0..0.0)).collect();
    let (loss, grads) = mlp.loss_and_gradients(&xs, &ys);
    let analytic = grads.flatten();

    // the loss is piecewise quadratic in each parameter, so a central
    // difference is exact away from rectifier kinks
    let h = 1e-5;
    let mut worst = 0.0f64;
    let mut k = 0;
    for li in 0..mlp.layers().len() {
        for bias in [false, true] {
            let len = if bias {
                mlp.layers()[li].biases.len()
            } else {
                mlp.layers()[li].weights.len()
            };
            for i in 0..len {
                let mut probe = mlp.clone();
                let p = param(&mut probe, li, bias, i);
                *p += h;
                let up = probe.loss(&xs, &ys);
                *param(&mut probe, li, bias, i) -= 2.0 * h;
                let down = probe.loss(&xs, &ys);
                let numeric = (up - down) / (2.0 * h);
                let a = analytic[k];
                worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6));
                k += 1;
            }
        }
    }
    println!("shape {:?}, {} parameters, loss {loss:.4}", mlp.sizes(), mlp.param_count());
    println!("max relative error {worst:.2e}");
}

fn param(m: &mut Mlp, li: usize, bias: bool, i: usize) -> &mut f64 {
    let layer = &mut m.layers_mut()[li];
    if bias {
        &mut layer.biases[i]
    } else {
        &mut layer.weights[i]
    }
}
