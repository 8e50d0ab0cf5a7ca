//! A 4×3 RBM is small enough to enumerate every visible and hidden state.

use lowres_core::data::Dataset;
use lowres_core::models::{Network, RbmParams};
use lowres_core::numerics::{Matrix, RngStream, StreamId, StreamPurpose};
use lowres_core::quantize::QuantPolicy;
use lowres_core::training::{train, TrainConfig};

const V: usize = 4;
const H: usize = 3;

fn stream(tensor: u8) -> RngStream {
    RngStream::new(2024, StreamId::new(StreamPurpose::Test, tensor, 0, 0))
}

fn bits_of(state: usize, n: usize) -> Vec<f64> {
    (0..n).map(|i| ((state >> i) & 1) as f64).collect()
}

fn random_rbm(rng: &mut RngStream) -> RbmParams {
    let mut rbm = RbmParams::zeros(V, H);
    for w in rbm.w.as_mut_slice() {
        *w = 2.0 * rng.uniform() - 1.0;
    }
    for b in rbm.b_vis.iter_mut().chain(&mut rbm.b_hid) {
        *b = rng.uniform() - 0.5;
    }
    rbm
}

fn energy(rbm: &RbmParams, v: &[f64], h: &[f64]) -> f64 {
    let mut e = 0.0;
    for i in 0..V {
        e -= rbm.b_vis[i] * v[i];
        for j in 0..H {
            e -= v[i] * rbm.w[(i, j)] * h[j];
        }
    }
    for j in 0..H {
        e -= rbm.b_hid[j] * h[j];
    }
    e
}

/// Exact `P(v)` by summing the joint over all hidden states.
fn exact_marginal(rbm: &RbmParams) -> Vec<f64> {
    let unnorm: Vec<f64> = (0..1 << V)
        .map(|s| {
            let v = bits_of(s, V);
            (0..1 << H).map(|t| (-energy(rbm, &v, &bits_of(t, H))).exp()).sum()
        })
        .collect();
    let z: f64 = unnorm.iter().sum();
    unnorm.into_iter().map(|p| p / z).collect()
}

fn p_hidden(rbm: &RbmParams, v: &[f64]) -> Vec<f64> {
    (0..H)
        .map(|j| {
            let a = rbm.b_hid[j] + (0..V).map(|i| v[i] * rbm.w[(i, j)]).sum::<f64>();
            1.0 / (1.0 + (-a).exp())
        })
        .collect()
}

/// Exact gradient of the mean negative log-likelihood of `data`, flattened
/// as (w, b_vis, b_hid).
fn exact_gradient(rbm: &RbmParams, data: &[Vec<f64>]) -> Vec<f64> {
    let mut grad = vec![0.0; V * H + V + H];
    let mut accumulate = |v: &[f64], weight: f64| {
        let ph = p_hidden(rbm, v);
        for i in 0..V {
            for j in 0..H {
                grad[i * H + j] += weight * v[i] * ph[j];
            }
            grad[V * H + i] += weight * v[i];
        }
        for j in 0..H {
            grad[V * H + V + j] += weight * ph[j];
        }
    };
    for (s, p) in exact_marginal(rbm).into_iter().enumerate() {
        accumulate(&bits_of(s, V), p);
    }
    for v in data {
        accumulate(v, -1.0 / data.len() as f64);
    }
    grad
}

fn exact_nll(rbm: &RbmParams, data: &[Vec<f64>]) -> f64 {
    let p = exact_marginal(rbm);
    let index = |v: &[f64]| v.iter().enumerate().map(|(i, &x)| (x as usize) << i).sum::<usize>();
    -data.iter().map(|v| p[index(v)].ln()).sum::<f64>() / data.len() as f64
}

fn flatten(g: &lowres_core::models::RbmGrad) -> Vec<f64> {
    g.w.as_slice().iter().chain(&g.b_vis).chain(&g.b_hid).copied().collect()
}

fn equilibrium_chains(rbm: &mut RbmParams, n: usize, rng: &mut RngStream) {
    let init: Vec<f64> = (0..n * V).map(|_| f64::from(u8::from(rng.bernoulli(0.5)))).collect();
    rbm.set_chains(Matrix::from_vec(n, V, init).unwrap()).unwrap();
    let dummy = Matrix::zeros(1, V);
    rbm.pcd_step(&dummy, 50, rng).unwrap();
}

fn toy_data() -> Vec<Vec<f64>> {
    [0b0011, 0b0011, 0b0111, 0b1100, 0b1100, 0b1110, 0b0011, 0b1100]
        .iter()
        .map(|&s| bits_of(s, V))
        .collect()
}

#[test]
fn free_energy_matches_enumeration() {
    let rbm = random_rbm(&mut stream(0));
    let exact = exact_marginal(&rbm);
    let unnorm: Vec<f64> = (0..1 << V).map(|s| (-rbm.free_energy(&bits_of(s, V)).unwrap()).exp()).collect();
    let z: f64 = unnorm.iter().sum();
    for (p, q) in exact.iter().zip(&unnorm) {
        assert!((p - q / z).abs() < 1e-12);
    }
}

#[test]
fn gibbs_chain_reaches_the_exact_marginal() {
    let rbm = random_rbm(&mut stream(1));
    let exact = exact_marginal(&rbm);
    let recorded = rbm.sample(&[0.0; V], 100_000, 1, &mut stream(2)).unwrap();
    // Average P(v | h) over the chain rather than counting visits.
    let mut estimate = [0.0; 1 << V];
    for pv in &recorded {
        for (s, e) in estimate.iter_mut().enumerate() {
            let v = bits_of(s, V);
            *e += v.iter().zip(pv).map(|(&x, &p)| if x == 1.0 { p } else { 1.0 - p }).product::<f64>();
        }
    }
    let tv: f64 = estimate
        .iter()
        .zip(&exact)
        .map(|(e, p)| (e / recorded.len() as f64 - p).abs())
        .sum::<f64>()
        / 2.0;
    println!("total variation {tv:.5}");
    assert!(tv < 0.02);
}

#[test]
fn gradient_vanishes_when_data_is_drawn_from_the_model() {
    let mut rng = stream(3);
    let mut rbm = random_rbm(&mut rng);
    equilibrium_chains(&mut rbm, 20_000, &mut rng);
    let data = rbm.chains.clone();
    equilibrium_chains(&mut rbm, 20_000, &mut rng);
    let grad = rbm.pcd_step(&data, 1, &mut rng).unwrap();
    let worst = flatten(&grad).into_iter().map(f64::abs).fold(0.0, f64::max);
    println!("largest gradient entry {worst:.5}");
    assert!(worst < 0.02);
}

#[test]
fn pcd_gradient_points_along_the_exact_gradient() {
    let mut rng = stream(4);
    let mut rbm = random_rbm(&mut rng);
    let data = toy_data();
    let exact = exact_gradient(&rbm, &data);
    equilibrium_chains(&mut rbm, 5_000, &mut rng);
    let batch = Matrix::from_rows(&data).unwrap();
    let estimate = flatten(&rbm.pcd_step(&batch, 15, &mut rng).unwrap());
    let dot: f64 = exact.iter().zip(&estimate).map(|(a, b)| a * b).sum();
    let norm = |g: &[f64]| g.iter().map(|x| x * x).sum::<f64>().sqrt();
    let cosine = dot / (norm(&exact) * norm(&estimate));
    println!("cosine {cosine:.4}");
    assert!(cosine > 0.9);
}

#[test]
fn training_lowers_exact_likelihood_loss() {
    let data = toy_data();
    let rbm = random_rbm(&mut stream(5));
    let before = exact_nll(&rbm, &data);
    let ds = Dataset::new("toy", Matrix::from_rows(&data).unwrap(), None, vec![]).unwrap();
    let cfg = TrainConfig::new(QuantPolicy::Float32Baseline, 0.1, 200, 4, 6);
    let (trained, _) = train(rbm, &ds, None, &cfg).unwrap();
    let after = exact_nll(&trained, &data);
    println!("nll {before:.4} -> {after:.4}");
    assert!(after < before - 0.5);
    assert_eq!(trained.kind().name(), "rbm");
}
