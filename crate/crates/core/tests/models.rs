//! Causality probes and closed-form gradient-penalty cases.

mod common;

use common::{random_matrix, rng};
use flooddan::models::{ArchConfig, Critic, CriticParams, EncoderParams, Parameters};
use flooddan::training::{critic_loss, gradient_penalty};
use ndarray::{Array1, Array2};
use rand::Rng;

const T: usize = 24;

fn random_encoder(stations: usize, seed: u64) -> EncoderParams {
    let mut enc = ArchConfig::default().new_encoder(stations);
    enc.init(&mut rng(seed));
    // Random biases keep every ReLU in play.
    let mut r = rng(seed + 1);
    let names: Vec<String> = enc.tensors().iter().map(|(n, _)| n.to_string()).collect();
    for (name, mut t) in names.iter().zip(enc.tensors_mut()) {
        if name.ends_with("bias") {
            t.mapv_inplace(|_| r.random_range(-0.2..0.2));
        }
    }
    enc
}

fn max_abs_diff_column(a: &Array2<f64>, b: &Array2<f64>, col: usize) -> f64 {
    a.column(col)
        .iter()
        .zip(b.column(col))
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

#[test]
fn future_inputs_never_reach_past_outputs() {
    for seed in 0..5 {
        let enc = random_encoder(6, seed * 10);
        let x = random_matrix(6, T, 1.0, &mut rng(seed * 10 + 2)).mapv(f64::abs);
        let base = enc.forward(&x, None).unwrap();
        for s in 0..T {
            let mut y = x.clone();
            y.column_mut(s).mapv_inplace(|v| v + 3.0);
            let out = enc.forward(&y, None).unwrap();
            for j in 0..s {
                assert_eq!(
                    max_abs_diff_column(&base, &out, j),
                    0.0,
                    "seed {seed}: input {s} moved output {j}"
                );
            }
            assert!(
                max_abs_diff_column(&base, &out, s) > 0.0,
                "input {s} has no effect at its own step"
            );
        }
    }
}

#[test]
fn inputs_older_than_receptive_field_have_no_influence() {
    let rf = ArchConfig::default().receptive_field();
    assert_eq!(rf, 8);
    for seed in 0..5 {
        let enc = random_encoder(4, 100 + seed);
        let x = random_matrix(4, T, 1.0, &mut rng(200 + seed)).mapv(f64::abs);
        let base = enc.forward(&x, None).unwrap();
        for s in 0..T {
            let mut y = x.clone();
            y.column_mut(s).mapv_inplace(|v| v + 3.0);
            let out = enc.forward(&y, None).unwrap();
            for j in s + rf..T {
                assert!(
                    max_abs_diff_column(&base, &out, j) <= 1e-10,
                    "input {s} reached output {j} beyond the receptive field"
                );
            }
            // The oldest step inside the field still matters.
            if s + rf - 1 < T {
                assert!(max_abs_diff_column(&base, &out, s + rf - 1) > 0.0);
            }
        }
    }
}

/// `D(F) = w · F`.
struct Linear(Array1<f64>);

impl Critic for Linear {
    fn scores(&self, f: &Array2<f64>) -> Vec<f64> {
        f.dot(&self.0).to_vec()
    }
    fn input_gradients(&self, f: &Array2<f64>) -> Array2<f64> {
        Array2::from_shape_fn(f.dim(), |(_, j)| self.0[j])
    }
}

/// `D(F) = c`.
struct Constant(f64);

impl Critic for Constant {
    fn scores(&self, f: &Array2<f64>) -> Vec<f64> {
        vec![self.0; f.nrows()]
    }
    fn input_gradients(&self, f: &Array2<f64>) -> Array2<f64> {
        Array2::zeros(f.dim())
    }
}

fn batches(n: usize, seed: u64) -> (Array2<f64>, Array2<f64>, Vec<f64>) {
    let mut r = rng(seed);
    let s = random_matrix(5, n, 2.0, &mut r);
    let t = random_matrix(5, n, 2.0, &mut r);
    let eps = (0..5).map(|_| r.random::<f64>()).collect();
    (s, t, eps)
}

#[test]
fn unit_norm_linear_critic_has_zero_penalty() {
    let n = 36 * T;
    let mut r = rng(1);
    let w: Array1<f64> = Array1::from_shape_fn(n, |_| r.random_range(-1.0..1.0));
    let critic = Linear(&w / w.dot(&w).sqrt());
    for seed in 0..10 {
        let (s, t, eps) = batches(n, seed);
        assert!(gradient_penalty(&critic, &s, &t, &eps).abs() <= 1e-10);
    }
}

#[test]
fn constant_critic_has_unit_penalty() {
    let n = 36 * T;
    for seed in 0..10 {
        let (s, t, eps) = batches(n, seed);
        assert!((gradient_penalty(&Constant(3.5), &s, &t, &eps) - 1.0).abs() <= 1e-10);
    }
}

#[test]
fn doubled_sum_critic_penalty_closed_form() {
    let n = 36 * T;
    let critic = Linear(Array1::from_elem(n, 2.0));
    let want = (2.0 * (n as f64).sqrt() - 1.0).powi(2);
    let (s, t, eps) = batches(n, 3);
    let got = gradient_penalty(&critic, &s, &t, &eps);
    assert!((got - want).abs() / want <= 1e-8, "{got} vs {want}");
}

#[test]
fn identical_batches_leave_only_the_penalty() {
    let n = 36 * 4;
    let mut critic = CriticParams::zeros(n, 32, 0.2);
    critic.init(&mut rng(4));
    let (s, _, eps) = batches(n, 5);
    let loss = critic_loss(&critic, &s, &s, &eps, 10.0);
    let penalty = gradient_penalty(&critic, &s, &s, &eps);
    assert_eq!(loss, 10.0 * penalty);
}

#[test]
fn zero_critic_loss_equals_penalty_weight() {
    let n = 36 * T;
    let critic = CriticParams::zeros(n, 128, 0.2);
    let (s, t, eps) = batches(n, 6);
    assert_eq!(critic_loss(&critic, &s, &t, &eps, 10.0), 10.0);
}
