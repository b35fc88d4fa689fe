//! Back-propagated gradients against central finite differences of a loss
//! written out independently with plain loops.

use approx::assert_relative_eq;
use ndarray::{Array1, Array2};
use rand::Rng;

use llnet::nn::{evaluate, gradients, Activation, DenseLayer, LossConfig, Network, Objective};
use llnet::rng::seeded;

fn sig(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Per-example activations of every layer, naive loops.
fn forward(layers: &[(Array2<f64>, Array1<f64>)], x: &[f64]) -> Vec<Vec<f64>> {
    let mut acts = vec![x.to_vec()];
    for (w, b) in layers {
        let prev = acts.last().unwrap();
        let out = (0..w.nrows())
            .map(|i| sig(b[i] + (0..w.ncols()).map(|j| w[[i, j]] * prev[j]).sum::<f64>()))
            .collect();
        acts.push(out);
    }
    acts
}

fn oracle_loss(objective: &Objective, layers: &[(Array2<f64>, Array1<f64>)], x: &Array2<f64>, y: &Array2<f64>) -> f64 {
    let n = x.nrows();
    let mut residual = 0.0;
    let mut hidden_mean = vec![0.0; layers[0].0.nrows()];
    for r in 0..n {
        let acts = forward(layers, x.row(r).as_slice().unwrap());
        let out = acts.last().unwrap();
        residual += out.iter().zip(y.row(r)).map(|(o, t)| (o - t).powi(2)).sum::<f64>();
        for (m, h) in hidden_mean.iter_mut().zip(&acts[1]) {
            *m += h / n as f64;
        }
    }
    let norms: f64 = layers.iter().map(|(w, _)| w.iter().map(|v| v * v).sum::<f64>()).sum();
    match objective {
        Objective::Da(cfg) => {
            let kl: f64 = hidden_mean
                .iter()
                .map(|&q| cfg.rho * (cfg.rho / q).ln() + (1.0 - cfg.rho) * ((1.0 - cfg.rho) / (1.0 - q)).ln())
                .sum();
            0.5 * residual / n as f64 + cfg.beta * kl + 0.5 * cfg.lambda * norms
        }
        Objective::Ssda { lambda } => residual / n as f64 + lambda / (layers.len() / 2) as f64 * norms,
    }
}

fn random_case(dims: &[usize], n: usize, seed: u64) -> (Vec<(Array2<f64>, Array1<f64>)>, Array2<f64>, Array2<f64>) {
    let mut rng = seeded(seed);
    let layers = dims
        .windows(2)
        .map(|d| {
            let w = Array2::from_shape_simple_fn((d[1], d[0]), || rng.random_range(-1.0..1.0));
            let b = Array1::from_shape_simple_fn(d[1], || rng.random_range(-0.5..0.5));
            (w, b)
        })
        .collect();
    let x = Array2::from_shape_simple_fn((n, dims[0]), || rng.random_range(0.0..1.0));
    let y = Array2::from_shape_simple_fn((n, *dims.last().unwrap()), || rng.random_range(0.0..1.0));
    (layers, x, y)
}

fn network(layers: &[(Array2<f64>, Array1<f64>)]) -> Network {
    Network::new(
        layers
            .iter()
            .map(|(w, b)| DenseLayer::new(w.clone(), b.clone(), Activation::Sigmoid).unwrap())
            .collect(),
    )
    .unwrap()
}

fn param(layers: &mut [(Array2<f64>, Array1<f64>)], k: usize, idx: (usize, Option<usize>)) -> &mut f64 {
    match idx {
        (i, Some(j)) => &mut layers[k].0[[i, j]],
        (i, None) => &mut layers[k].1[i],
    }
}

fn check(objective: Objective, dims: &[usize], seed: u64) {
    let (mut layers, x, y) = random_case(dims, 7, seed);
    let net = network(&layers);
    let (loss, grads) = gradients(&objective, &net, x.view(), y.view()).unwrap();
    let oracle = oracle_loss(&objective, &layers, &x, &y);
    assert_relative_eq!(loss.total(), oracle, max_relative = 1e-12);
    assert_relative_eq!(evaluate(&objective, &net, x.view(), y.view()).unwrap().total(), oracle, max_relative = 1e-12);

    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for k in 0..layers.len() {
        let (rows, cols) = layers[k].0.dim();
        let params = (0..rows).flat_map(|i| (0..cols).map(move |j| (i, Some(j))).chain([(i, None)]));
        for idx in params {
            let analytic = match idx {
                (i, Some(j)) => grads.weights[k][[i, j]],
                (i, None) => grads.biases[k][i],
            };
            let orig = *param(&mut layers, k, idx);
            *param(&mut layers, k, idx) = orig + h;
            let up = oracle_loss(&objective, &layers, &x, &y);
            *param(&mut layers, k, idx) = orig - h;
            let down = oracle_loss(&objective, &layers, &x, &y);
            *param(&mut layers, k, idx) = orig;
            let numeric = (up - down) / (2.0 * h);
            let err = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-3);
            worst = worst.max(err);
        }
    }
    assert!(worst <= 1e-5, "worst relative gradient error {worst:e}");
}

#[test]
fn da_gradients_match_finite_differences() {
    for seed in 0..4 {
        let cfg = LossConfig { lambda: 0.01, beta: 0.3, rho: 0.1 };
        check(Objective::Da(cfg), &[6, 4, 6], seed);
        check(Objective::Da(LossConfig::default()), &[5, 8, 3], seed + 10);
    }
}

#[test]
fn ssda_gradients_match_finite_differences() {
    for seed in 0..4 {
        check(Objective::Ssda { lambda: 0.02 }, &[6, 5, 3, 5, 6], seed);
        check(Objective::Ssda { lambda: 1e-4 }, &[4, 7, 4], seed + 10);
    }
}
