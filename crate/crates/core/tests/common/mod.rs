#![allow(dead_code)]

use flooddan::models::Parameters;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-3;
pub const REL_TOL: f64 = 1e-4;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rows: usize, cols: usize, scale: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-scale..scale))
}

/// Flat coordinates `(tensor, index)` of every parameter.
pub fn coordinates<P: Parameters>(p: &P) -> Vec<(usize, usize)> {
    p.tensors()
        .iter()
        .enumerate()
        .flat_map(|(t, (_, a))| (0..a.len()).map(move |i| (t, i)))
        .collect()
}

pub fn get<P: Parameters>(p: &P, (t, i): (usize, usize)) -> f64 {
    *p.tensors()[t].1.iter().nth(i).unwrap()
}

pub fn shifted<P: Parameters + Clone>(p: &P, (t, i): (usize, usize), delta: f64) -> P {
    let mut q = p.clone();
    {
        let mut tensors = q.tensors_mut();
        *tensors[t].iter_mut().nth(i).unwrap() += delta;
    }
    q
}

/// Central difference, or `None` when halving the step changes the
/// estimate, which means the stencil straddles a kink of a piecewise-linear
/// activation.
pub fn central_difference(f: &dyn Fn(f64) -> f64) -> Option<f64> {
    let fd = |h: f64| (f(h) - f(-h)) / (2.0 * h);
    let (a, b) = (fd(STEP), fd(STEP / 2.0));
    let scale = a.abs().max(b.abs()).max(1e-12);
    ((a - b).abs() <= 1e-6 * scale).then_some(a)
}

pub struct Check {
    pub checked: usize,
    pub worst: f64,
}

/// Compares `analytic` against central differences of `loss` at random
/// coordinates with a non-negligible gradient until `want` coordinates are
/// verified.
pub fn check_params<P: Parameters + Clone>(
    params: &P,
    analytic: &P,
    loss: &dyn Fn(&P) -> f64,
    want: usize,
    seed: u64,
) -> Check {
    let mut coords = coordinates(params);
    let mut r = rng(seed);
    use rand::seq::SliceRandom;
    coords.shuffle(&mut r);
    let mut check = Check { checked: 0, worst: 0.0 };
    for c in coords {
        if check.checked == want {
            break;
        }
        let a = get(analytic, c);
        if a.abs() < 1e-7 {
            continue;
        }
        let Some(fd) = central_difference(&|h| loss(&shifted(params, c, h))) else {
            continue;
        };
        let rel = (a - fd).abs() / a.abs().max(fd.abs());
        check.worst = check.worst.max(rel);
        check.checked += 1;
    }
    check
}

/// Same check for an input matrix.
pub fn check_input(
    x: &Array2<f64>,
    analytic: &Array2<f64>,
    loss: &dyn Fn(&Array2<f64>) -> f64,
    want: usize,
    seed: u64,
) -> Check {
    let mut coords: Vec<(usize, usize)> = (0..x.nrows())
        .flat_map(|i| (0..x.ncols()).map(move |j| (i, j)))
        .collect();
    use rand::seq::SliceRandom;
    coords.shuffle(&mut rng(seed));
    let mut check = Check { checked: 0, worst: 0.0 };
    for c in coords {
        if check.checked == want {
            break;
        }
        let a = analytic[c];
        if a.abs() < 1e-7 {
            continue;
        }
        let Some(fd) = central_difference(&|h| {
            let mut y = x.clone();
            y[c] += h;
            loss(&y)
        }) else {
            continue;
        };
        let rel = (a - fd).abs() / a.abs().max(fd.abs());
        check.worst = check.worst.max(rel);
        check.checked += 1;
    }
    check
}

/// Small synthetic watershed pair and a configuration sized for tests.
pub fn small_setup(source_len: usize, target_len: usize) -> (flooddan::pipeline::RunConfig, Prepared, Prepared) {
    let mut cfg = flooddan::pipeline::RunConfig::default();
    cfg.synthetic.source.series_length = source_len;
    cfg.synthetic.target.series_length = target_len;
    cfg.train.epochs = 3;
    cfg.adapt.epochs = 3;
    cfg.train.batch_size = 32;
    cfg.adapt.batch_size = 32;
    let source = prepare(&generate_synthetic(&cfg.synthetic.source).unwrap(), &cfg).unwrap();
    let target = prepare(&generate_synthetic(&cfg.synthetic.target).unwrap(), &cfg).unwrap();
    (cfg, source, target)
}

use flooddan::hydrodata::generate_synthetic;
use flooddan::pipeline::{prepare, Prepared};
