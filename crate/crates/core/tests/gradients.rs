use hyperproj::nn::{Mode, Network, NetworkSpec};
use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EPS: f64 = 1e-5;

/// Random dropout-free f64 network with batch norm and scale/shift moved
/// off identity, plus a batch and targets.
fn toy(seed: u64) -> (Network<f64>, Array2<f64>, Array2<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let input = rng.random_range(2..=4);
    let hidden: Vec<usize> = (0..rng.random_range(1..=2)).map(|_| rng.random_range(3..=6)).collect();
    let spec = NetworkSpec::new(input, &hidden, true, 0.0);
    assert!(spec.parameter_count() <= 200);
    let mut net = Network::<f64>::new(spec, seed).unwrap();
    for layer in net.layers_mut() {
        if let Some(bn) = &mut layer.batch_norm {
            bn.gamma.mapv_inplace(|_| rng.random_range(0.5..1.5));
            bn.beta.mapv_inplace(|_| rng.random_range(-0.5..0.5));
        }
        layer.dense.bias.mapv_inplace(|_| rng.random_range(-0.3..0.3));
    }
    let rows = rng.random_range(6..=12);
    let x = Array2::from_shape_fn((rows, input), |_| rng.random_range(-1.0..1.0));
    let y = Array2::from_shape_fn((rows, 2), |_| rng.random_range(-3.0..3.0));
    (net, x, y)
}

fn loss(net: &Network<f64>, x: &Array2<f64>, y: &Array2<f64>) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    net.train_step(x.view(), y.view(), Mode::Train, &mut rng).unwrap().loss
}

/// Largest relative error between analytic and central-difference
/// gradients over every trainable parameter.
fn worst_relative_error(seed: u64) -> f64 {
    let (mut net, x, y) = toy(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let step = net.train_step(x.view(), y.view(), Mode::Train, &mut rng).unwrap();
    let analytic: Vec<Vec<f64>> = step.gradients.slices().iter().map(|s| s.to_vec()).collect();
    let mut worst = 0.0f64;
    for (b, grads) in analytic.iter().enumerate() {
        for (e, &a) in grads.iter().enumerate() {
            let original = net.param_slices_mut()[b][e];
            net.param_slices_mut()[b][e] = original + EPS;
            let up = loss(&net, &x, &y);
            net.param_slices_mut()[b][e] = original - EPS;
            let down = loss(&net, &x, &y);
            net.param_slices_mut()[b][e] = original;
            let numeric = (up - down) / (2.0 * EPS);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(rel);
        }
    }
    worst
}

#[test]
fn analytic_gradients_match_central_differences() {
    for seed in 0..10 {
        let worst = worst_relative_error(seed);
        assert!(worst <= 1e-4, "network {seed}: relative error {worst:e}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn gradients_match_for_random_networks(seed in 100u64..100_000) {
        prop_assert!(worst_relative_error(seed) <= 1e-4);
    }
}
