use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayViewD, ArrayViewMutD, Axis, Zip};
use rand::Rng;

use super::layers::{init_array, Parameters};

/// Anything that scores flattened feature maps and exposes the gradient of
/// each score with respect to its own input row.
pub trait Critic {
    /// `features` is `(batch, n)`; returns one score per row.
    fn scores(&self, features: &Array2<f64>) -> Vec<f64>;
    /// Row `b` holds `∂ score_b / ∂ features_b`.
    fn input_gradients(&self, features: &Array2<f64>) -> Array2<f64>;
}

/// Wasserstein critic: flatten → hidden → hidden → scalar with leaky-ReLU
/// hidden activations and an unconstrained output.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticParams {
    /// (hidden, n)
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    /// (hidden, hidden)
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    pub w3: Array1<f64>,
    /// Length-1 so it is a tensor like the rest.
    pub b3: Array1<f64>,
    pub slope: f64,
}

struct GradientFactors {
    u: Array2<f64>,
    z: Array2<f64>,
    m1: Array2<f64>,
    m2: Array2<f64>,
}

pub struct CriticPass {
    pub scores: Vec<f64>,
    input: Array2<f64>,
    pre1: Array2<f64>,
    act1: Array2<f64>,
    pre2: Array2<f64>,
    act2: Array2<f64>,
}

impl CriticParams {
    pub fn zeros(inputs: usize, hidden: usize, slope: f64) -> Self {
        Self {
            w1: Array2::zeros((hidden, inputs)),
            b1: Array1::zeros(hidden),
            w2: Array2::zeros((hidden, hidden)),
            b2: Array1::zeros(hidden),
            w3: Array1::zeros(hidden),
            b3: Array1::zeros(1),
            slope,
        }
    }

    pub fn init<R: Rng>(&mut self, rng: &mut R) {
        let inputs = self.w1.ncols();
        let hidden = self.w1.nrows();
        init_array(rng, inputs, &mut self.w1);
        init_array(rng, hidden, &mut self.w2);
        init_array(rng, hidden, &mut self.w3);
        self.b1.fill(0.0);
        self.b2.fill(0.0);
        self.b3.fill(0.0);
    }

    pub fn input_dim(&self) -> usize {
        self.w1.ncols()
    }

    fn leaky(&self, pre: &Array2<f64>) -> Array2<f64> {
        let slope = self.slope;
        pre.mapv(|v| if v > 0.0 { v } else { slope * v })
    }

    fn leaky_slopes(&self, pre: &Array2<f64>) -> Array2<f64> {
        let slope = self.slope;
        pre.mapv(|v| if v > 0.0 { 1.0 } else { slope })
    }

    pub fn forward(&self, features: &Array2<f64>) -> CriticPass {
        let mut pre1 = features.dot(&self.w1.t());
        pre1 += &self.b1;
        let act1 = self.leaky(&pre1);
        let mut pre2 = act1.dot(&self.w2.t());
        pre2 += &self.b2;
        let act2 = self.leaky(&pre2);
        let scores = (act2.dot(&self.w3) + self.b3[0]).to_vec();
        CriticPass {
            scores,
            input: features.clone(),
            pre1,
            act1,
            pre2,
            act2,
        }
    }

    /// Accumulates parameter gradients of `Σ_b grad_scores[b]·score_b` and
    /// returns its gradient w.r.t. the input rows.
    pub fn backward(&self, pass: &CriticPass, grad_scores: &[f64], grads: &mut CriticParams) -> Array2<f64> {
        let g = Array1::from(grad_scores.to_vec());
        grads.b3[0] += g.sum();
        grads.w3 += &pass.act2.t().dot(&g);
        // (batch, hidden)
        let mut d2 = g.insert_axis(Axis(1)).dot(&self.w3.view().insert_axis(Axis(0)));
        d2 *= &self.leaky_slopes(&pass.pre2);
        general_mat_mul(1.0, &d2.t(), &pass.act1, 1.0, &mut grads.w2);
        grads.b2 += &d2.sum_axis(Axis(0));
        let mut d1 = d2.dot(&self.w2);
        d1 *= &self.leaky_slopes(&pass.pre1);
        general_mat_mul(1.0, &d1.t(), &pass.input, 1.0, &mut grads.w1);
        grads.b1 += &d1.sum_axis(Axis(0));
        d1.dot(&self.w1)
    }

    /// Hidden-layer quantities of the input gradient: `u = m2 ⊙ w3`,
    /// `z = m1 ⊙ (u W2)`, so that `∇_F D = z W1`. The activation slopes
    /// `m1, m2` are piecewise constant, so these depend on the input only
    /// through which side of each kink it lies on.
    fn gradient_factors(&self, features: &Array2<f64>) -> GradientFactors {
        let pass = self.forward(features);
        let m1 = self.leaky_slopes(&pass.pre1);
        let m2 = self.leaky_slopes(&pass.pre2);
        let u = &m2 * &self.w3;
        let z = u.dot(&self.w2) * &m1;
        GradientFactors { u, z, m1, m2 }
    }

    /// Gradient of `Σ_b P(g_b)` w.r.t. the critic parameters, where
    /// `g_b = ∇_F D(F_b)` and `dpdg` holds `∂P/∂g_b` row-wise. Bias gradients
    /// are zero almost everywhere because `g` does not depend on them.
    pub fn input_gradient_backward(&self, features: &Array2<f64>, dpdg: &Array2<f64>, grads: &mut CriticParams) {
        let GradientFactors { u, z, m1, m2 } = self.gradient_factors(features);
        // g = z W1  ⇒  ∂/∂W1 = zᵀ γ
        general_mat_mul(1.0, &z.t(), dpdg, 1.0, &mut grads.w1);
        // ∂/∂z = γ W1ᵀ, then through m1 to v = u W2
        let dv = dpdg.dot(&self.w1.t()) * &m1;
        general_mat_mul(1.0, &u.t(), &dv, 1.0, &mut grads.w2);
        let du = dv.dot(&self.w2.t()) * &m2;
        grads.w3 += &du.sum_axis(Axis(0));
    }
}

impl Critic for CriticParams {
    fn scores(&self, features: &Array2<f64>) -> Vec<f64> {
        self.forward(features).scores
    }

    fn input_gradients(&self, features: &Array2<f64>) -> Array2<f64> {
        self.gradient_factors(features).z.dot(&self.w1)
    }
}

impl Parameters for CriticParams {
    fn tensors(&self) -> Vec<(String, ArrayViewD<'_, f64>)> {
        vec![
            ("critic.fc1.weight".into(), self.w1.view().into_dyn()),
            ("critic.fc1.bias".into(), self.b1.view().into_dyn()),
            ("critic.fc2.weight".into(), self.w2.view().into_dyn()),
            ("critic.fc2.bias".into(), self.b2.view().into_dyn()),
            ("critic.out.weight".into(), self.w3.view().into_dyn()),
            ("critic.out.bias".into(), self.b3.view().into_dyn()),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<ArrayViewMutD<'_, f64>> {
        vec![
            self.w1.view_mut().into_dyn(),
            self.b1.view_mut().into_dyn(),
            self.w2.view_mut().into_dyn(),
            self.b2.view_mut().into_dyn(),
            self.w3.view_mut().into_dyn(),
            self.b3.view_mut().into_dyn(),
        ]
    }
}

/// Checks that every row is finite.
pub(crate) fn rows_finite(features: &Array2<f64>) -> bool {
    let mut ok = true;
    Zip::from(features).for_each(|v| ok &= v.is_finite());
    ok
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_critic(n: usize, seed: u64, with_bias: bool) -> CriticParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut c = CriticParams::zeros(n, 16, 0.2);
        c.init(&mut rng);
        if with_bias {
            c.b1.mapv_inplace(|_| rng.random_range(-0.3..0.3));
            c.b2.mapv_inplace(|_| rng.random_range(-0.3..0.3));
            c.b3[0] = 0.7;
        }
        c
    }

    fn batch(n: usize, rows: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((rows, n), |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn zero_critic_scores_zero() {
        let c = CriticParams::zeros(10, 8, 0.2);
        assert!(c.scores(&batch(10, 4, 1)).iter().all(|&s| s == 0.0));
    }

    #[test]
    fn bias_free_critic_is_positively_homogeneous() {
        let c = random_critic(10, 2, false);
        let f = batch(10, 3, 3);
        let base = c.scores(&f);
        let scaled = c.scores(&(&f * 2.5));
        for (a, b) in base.iter().zip(&scaled) {
            assert!((b - 2.5 * a).abs() < 1e-12);
        }
    }

    #[test]
    fn input_gradient_matches_backward() {
        let c = random_critic(10, 4, true);
        let f = batch(10, 3, 5);
        let pass = c.forward(&f);
        let mut grads = c.zeroed();
        let via_backward = c.backward(&pass, &[1.0, 1.0, 1.0], &mut grads);
        let direct = c.input_gradients(&f);
        assert!((&via_backward - &direct).iter().all(|d| d.abs() < 1e-12));
    }

    #[test]
    fn finite_rows_check() {
        let mut f = batch(4, 2, 6);
        assert!(rows_finite(&f));
        f[[1, 2]] = f64::NAN;
        assert!(!rows_finite(&f));
    }
}
