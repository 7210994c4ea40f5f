//! Diagonal Gaussians over the latent code.

use crate::numerics::{NumericsError, Rng, Tape, Tensor, Var};

/// `N(μ, diag(σ²))` stored as `μ` and `log σ`, both `[1, latent]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentGaussian {
    pub mu: Tensor,
    pub log_sigma: Tensor,
}

impl LatentGaussian {
    pub fn standard(dim: usize) -> Self {
        Self {
            mu: Tensor::zeros(1, dim),
            log_sigma: Tensor::zeros(1, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.mu.cols()
    }

    pub fn sigma(&self) -> Tensor {
        self.log_sigma.map(f64::exp)
    }

    /// `μ + σ ⊙ ε`.
    pub fn reparameterize(&self, eps: &Tensor) -> Tensor {
        assert_eq!(eps.shape(), self.mu.shape(), "noise shape mismatch");
        let data = self
            .mu
            .data()
            .iter()
            .zip(self.log_sigma.data())
            .zip(eps.data())
            .map(|((m, ls), e)| m + ls.exp() * e)
            .collect();
        Tensor::new(1, self.dim(), data).expect("same shape")
    }

    pub fn sample(&self, rng: &mut Rng) -> Tensor {
        let eps = standard_normal(self.dim(), rng);
        self.reparameterize(&eps)
    }
}

pub fn standard_normal(dim: usize, rng: &mut Rng) -> Tensor {
    Tensor::row_vector((0..dim).map(|_| rng.normal()).collect())
}

/// Closed-form `KL(q ‖ p)` summed over dimensions.
pub fn kl_divergence(q: &LatentGaussian, p: &LatentGaussian) -> f64 {
    assert_eq!(q.dim(), p.dim(), "latent dimension mismatch");
    let mut total = 0.0;
    for i in 0..q.dim() {
        let (mq, lq) = (q.mu.data()[i], q.log_sigma.data()[i]);
        let (mp, lp) = (p.mu.data()[i], p.log_sigma.data()[i]);
        let var_q = (2.0 * lq).exp();
        let var_p = (2.0 * lp).exp();
        total += lp - lq + (var_q + (mq - mp).powi(2)) / (2.0 * var_p) - 0.5;
    }
    total
}

/// A Gaussian whose parameters live on a tape.
#[derive(Clone, Copy, Debug)]
pub struct GaussianVars {
    pub mu: Var,
    pub log_sigma: Var,
}

impl GaussianVars {
    pub fn value(&self, tape: &Tape) -> LatentGaussian {
        LatentGaussian {
            mu: tape.value(self.mu).clone(),
            log_sigma: tape.value(self.log_sigma).clone(),
        }
    }

    /// Reparameterized draw with the noise `eps` held constant.
    pub fn reparameterize(&self, tape: &mut Tape, eps: Tensor) -> Result<Var, NumericsError> {
        let eps = tape.constant(eps);
        let sigma = tape.exp(self.log_sigma)?;
        let noise = tape.mul(sigma, eps)?;
        tape.add(self.mu, noise)
    }
}

/// Differentiable `KL(q ‖ p)` as a `1 x 1` node.
pub fn kl_on_tape(tape: &mut Tape, q: GaussianVars, p: GaussianVars) -> Result<Var, NumericsError> {
    let two_lq = tape.scale(q.log_sigma, 2.0)?;
    let var_q = tape.exp(two_lq)?;
    let neg_two_lp = tape.scale(p.log_sigma, -2.0)?;
    let inv_var_p = tape.exp(neg_two_lp)?;
    let diff = tape.sub(q.mu, p.mu)?;
    let diff_sq = tape.mul(diff, diff)?;
    let num = tape.add(var_q, diff_sq)?;
    let ratio = tape.mul(num, inv_var_p)?;
    let half_ratio = tape.affine(ratio, 0.5, -0.5)?;
    let log_ratio = tape.sub(p.log_sigma, q.log_sigma)?;
    let per_dim = tape.add(log_ratio, half_ratio)?;
    tape.sum_all(per_dim)
}
