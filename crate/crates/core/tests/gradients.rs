//! Analytic gradients against central finite differences.

mod common;

use common::{check_input, check_params, random_matrix, rng, REL_TOL};
use flooddan::hydrodata::WindowedSample;
use flooddan::models::{flatten_features, ArchConfig, Critic, CriticParams, HeadMode, HeadParams, Parameters};
use flooddan::training::{
    critic_loss, critic_loss_and_grads, generator_loss, generator_loss_and_grads, gradient_penalty, Forecaster,
};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const COORDS: usize = 25;

fn assert_check(name: &str, c: common::Check) {
    println!(
        "{name}: {} coordinates, worst relative error {:.2e}",
        c.checked, c.worst
    );
    assert!(c.checked >= 20, "{name}: only {} usable coordinates", c.checked);
    assert!(c.worst <= REL_TOL, "{name}: relative error {:.3e}", c.worst);
}

fn critic_for(inputs: usize, seed: u64) -> CriticParams {
    let mut c = CriticParams::zeros(inputs, 16, 0.2);
    c.init(&mut rng(seed));
    // Nonzero biases exercise every term of the backward pass.
    let mut r = rng(seed + 100);
    for b in [&mut c.b1, &mut c.b2, &mut c.b3] {
        b.mapv_inplace(|_| r.random_range(-0.1..0.1));
    }
    c
}

#[test]
fn encoder_parameters_and_input() {
    let arch = ArchConfig::default();
    let mut enc = arch.new_encoder(5);
    enc.init(&mut rng(1));
    let len = 12;
    let x = random_matrix(5, 2 * len, 1.0, &mut rng(2));
    let w = random_matrix(36, 2 * len, 1.0, &mut rng(3));
    // Fixed dropout masks: the same stream for every evaluation.
    let run = |e: &flooddan::models::EncoderParams, x: &Array2<f64>| {
        let mut r = ChaCha8Rng::seed_from_u64(9);
        e.forward_batch(x, len, Some(&mut r))
    };
    let loss = |e: &flooddan::models::EncoderParams, x: &Array2<f64>| (&run(e, x).output * &w).sum();
    let pass = run(&enc, &x);
    let mut grads = enc.zeroed();
    let gx = enc.backward(&pass, &w, &mut grads);
    assert_check(
        "encoder params",
        check_params(&enc, &grads, &|e| loss(e, &x), COORDS, 4),
    );
    assert_check("encoder input", check_input(&x, &gx, &|x| loss(&enc, x), COORDS, 5));
}

#[test]
fn head_parameters_and_features() {
    for mode in [HeadMode::Residual, HeadMode::Direct] {
        let mut head = HeadParams::zeros(36, 36, mode, true);
        head.init(&mut rng(11));
        let len = 7;
        let features = random_matrix(36, 3 * len, 1.0, &mut rng(12));
        let history = random_matrix(3, len, 1.0, &mut rng(13)).mapv(f64::abs);
        let c = [0.7, -1.3, 0.4];
        let loss = |h: &HeadParams, f: &Array2<f64>| {
            h.forward_batch(f, &history, len)
                .predictions
                .iter()
                .zip(c)
                .map(|(p, c)| p * c)
                .sum::<f64>()
        };
        let pass = head.forward_batch(&features, &history, len);
        let mut grads = head.zeroed();
        let gf = head.backward(&pass, &c, &mut grads);
        assert_check(
            &format!("{mode:?} head params"),
            check_params(&head, &grads, &|h| loss(h, &features), COORDS, 14),
        );
        assert_check(
            &format!("{mode:?} head features"),
            check_input(&features, &gf, &|f| loss(&head, f), COORDS, 15),
        );
    }
}

#[test]
fn critic_parameters_and_input() {
    let n = 36 * 4;
    let critic = critic_for(n, 21);
    let f = random_matrix(3, n, 1.0, &mut rng(22));
    let c = [1.0, -0.5, 2.0];
    let loss = |k: &CriticParams, f: &Array2<f64>| k.scores(f).iter().zip(c).map(|(s, c)| s * c).sum::<f64>();
    let pass = critic.forward(&f);
    let mut grads = critic.zeroed();
    let gf = critic.backward(&pass, &c, &mut grads);
    assert_check(
        "critic params",
        check_params(&critic, &grads, &|k| loss(k, &f), COORDS, 23),
    );
    assert_check("critic input", check_input(&f, &gf, &|f| loss(&critic, f), COORDS, 24));
}

#[test]
fn gradient_penalty_input_gradient() {
    // The penalty is built on ∇_F D; check that gradient itself.
    let n = 36 * 4;
    let critic = critic_for(n, 31);
    let f = random_matrix(2, n, 1.0, &mut rng(32));
    let analytic = critic.input_gradients(&f);
    for row in 0..2 {
        let loss = |x: &Array2<f64>| critic.scores(x)[row];
        let mut masked = analytic.clone();
        for (r, mut line) in masked.rows_mut().into_iter().enumerate() {
            if r != row {
                line.fill(0.0);
            }
        }
        assert_check(
            &format!("input gradient row {row}"),
            check_input(&f, &masked, &loss, COORDS, 33 + row as u64),
        );
    }
}

#[test]
fn critic_loss_and_penalty_parameter_gradients() {
    let n = 36 * 4;
    let critic = critic_for(n, 41);
    let s = random_matrix(4, n, 1.0, &mut rng(42));
    let t = random_matrix(4, n, 1.0, &mut rng(43)).mapv(|v| v + 0.3);
    let eps = [0.15, 0.5, 0.8, 0.33];
    let (_, full) = critic_loss_and_grads(&critic, &s, &t, &eps, 10.0).unwrap();
    assert_check(
        "critic_loss params",
        check_params(&critic, &full, &|k| critic_loss(k, &s, &t, &eps, 10.0), COORDS, 44),
    );
    // Penalty part alone: difference of the weighted and unweighted gradients.
    let (_, plain) = critic_loss_and_grads(&critic, &s, &t, &eps, 0.0).unwrap();
    let mut penalty = full.clone();
    for ((mut p, (_, a)), (_, b)) in penalty
        .tensors_mut()
        .into_iter()
        .zip(full.tensors())
        .zip(plain.tensors())
    {
        p.assign(&((&a - &b) / 10.0));
    }
    assert_check(
        "gradient_penalty params",
        check_params(&critic, &penalty, &|k| gradient_penalty(k, &s, &t, &eps), COORDS, 45),
    );
}

#[test]
fn generator_loss_encoder_gradient() {
    let arch = ArchConfig::default();
    let mut enc = arch.new_encoder(4);
    enc.init(&mut rng(51));
    let len = 10;
    let critic = critic_for(36 * len, 52);
    let x = random_matrix(4, 2 * len, 1.0, &mut rng(53)).mapv(f64::abs);
    let (_, grads) = generator_loss_and_grads(&critic, &enc, &x, len);
    let loss = |e: &flooddan::models::EncoderParams| {
        generator_loss(&critic, &flatten_features(&e.forward_batch(&x, len, None).output, len))
    };
    assert_check(
        "generator_loss encoder params",
        check_params(&enc, &grads, &loss, COORDS, 54),
    );
}

#[test]
fn supervised_loss_gradients() {
    let arch = ArchConfig::default();
    let model = flooddan::training::new_forecaster(&arch, 3, 24, 61);
    let mut r = rng(62);
    let samples: Vec<WindowedSample> = (0..4)
        .map(|k| WindowedSample {
            x: random_matrix(3, 24, 1.0, &mut r).mapv(f64::abs),
            y_history: (0..24).map(|_| r.random_range(0.0..1.0)).collect(),
            y: Some(r.random_range(0.0..1.0)),
            source_index: k,
        })
        .collect();
    let idx = [0, 1, 2, 3];
    let step = model.loss_and_grads(&samples, &idx, None);
    let with = |enc, head| Forecaster {
        encoder: enc,
        head,
        variant: model.variant,
    };
    assert_check(
        "supervised encoder params",
        check_params(
            &model.encoder,
            &step.encoder_grads,
            &|e| with(e.clone(), model.head.clone()).mean_loss(&samples),
            COORDS,
            63,
        ),
    );
    assert_check(
        "supervised head params",
        check_params(
            &model.head,
            &step.head_grads,
            &|h| with(model.encoder.clone(), h.clone()).mean_loss(&samples),
            COORDS,
            64,
        ),
    );
}
