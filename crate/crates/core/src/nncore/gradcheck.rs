use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::ParameterBundle;

/// Parameters above this count are checked on a seeded random subset.
pub const FULL_CHECK_LIMIT: usize = 10_000;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(1e-7);
    (analytic - numeric).abs() / denom
}

/// Compare analytic gradients from `loss_and_grad` against central
/// differences with step `h`; returns the largest relative error.
pub fn grad_check<F>(params: &ParameterBundle, h: f64, seed: u64, mut loss_and_grad: F) -> f64
where
    F: FnMut(&ParameterBundle) -> (f64, ParameterBundle),
{
    assert!(h > 0.0, "step must be positive");
    let (_, analytic) = loss_and_grad(params);
    let n = params.len();
    let indices: Vec<usize> = if n > FULL_CHECK_LIMIT {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut idx = sample(&mut rng, n, FULL_CHECK_LIMIT / 10).into_vec();
        idx.sort_unstable();
        idx
    } else {
        (0..n).collect()
    };
    let mut probe = params.clone();
    let mut worst: f64 = 0.0;
    for i in indices {
        let orig = probe.flat_get(i);
        probe.flat_set(i, orig + h);
        let (up, _) = loss_and_grad(&probe);
        probe.flat_set(i, orig - h);
        let (down, _) = loss_and_grad(&probe);
        probe.flat_set(i, orig);
        let numeric = (up - down) / (2.0 * h);
        worst = worst.max(relative_error(analytic.flat_get(i), numeric));
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nncore::{backward, forward, Activation, LayerSpec};
    use ndarray::Array2;
    use rand::Rng;

    fn random_input(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
    }

    /// Half the squared norm of the output batch.
    fn quadratic<'a>(
        specs: &'a [LayerSpec],
        x: &'a Array2<f64>,
    ) -> impl FnMut(&ParameterBundle) -> (f64, ParameterBundle) + 'a {
        move |p| {
            let (out, tape) = forward(p, specs, x.view());
            let loss = 0.5 * out.iter().map(|v| v * v).sum::<f64>();
            let (g, _) = backward(p, specs, &tape, out.view());
            (loss, g)
        }
    }

    #[test]
    fn linear_quadratic_is_exact() {
        let specs = [LayerSpec::new(4, 3, Activation::Identity)];
        let p = ParameterBundle::init(&specs, "", &mut ChaCha8Rng::seed_from_u64(1));
        let x = random_input(5, 4, 2);
        let err = grad_check(&p, 1e-5, 0, quadratic(&specs, &x));
        assert!(err < 1e-8, "err {err}");
    }

    #[test]
    fn every_activation_passes() {
        for act in [Activation::Relu, Activation::LeakyRelu, Activation::Sigmoid, Activation::Identity] {
            let specs =
                [LayerSpec::new(5, 8, act), LayerSpec::new(8, 6, act), LayerSpec::new(6, 2, Activation::Identity)];
            let p = ParameterBundle::init(&specs, "", &mut ChaCha8Rng::seed_from_u64(3));
            let x = random_input(4, 5, 7);
            let err = grad_check(&p, 1e-5, 0, quadratic(&specs, &x));
            assert!(err < 1e-4, "{act:?}: {err}");
        }
    }

    #[test]
    fn corrupted_backward_is_caught() {
        let specs = [LayerSpec::new(3, 4, Activation::Sigmoid), LayerSpec::new(4, 1, Activation::Identity)];
        let p = ParameterBundle::init(&specs, "", &mut ChaCha8Rng::seed_from_u64(5));
        let x = random_input(3, 3, 1);
        let mut honest = quadratic(&specs, &x);
        let err = grad_check(&p, 1e-5, 0, |q| {
            let (l, mut g) = honest(q);
            for v in &mut g.tensors[0].data {
                *v *= 1.1;
            }
            (l, g)
        });
        assert!(err > 1e-2, "fault not detected: {err}");
    }
}
