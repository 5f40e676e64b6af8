//! Adam training on the Monte-Carlo evidence bound. Single-threaded and
//! fully deterministic in the config seed.

use super::elbo::nelbo_grad;
use super::{LatentModel, ModelError, ModelGrads};
use crate::data::Dataset;
use crate::rng::{derive_seed, SplitMix64};

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.002,
            batch_size: 16,
            epochs: 30,
            seed: 0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<(), ModelError> {
        if !(self.learning_rate > 0.0) {
            return Err(ModelError::InvalidParameter("learning rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(ModelError::InvalidParameter("batch size must be at least 1".into()));
        }
        Ok(())
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    lr: f64,
}

impl Adam {
    fn new(dim: usize, cfg: &TrainConfig) -> Self {
        Adam {
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            step: 0,
            beta1: cfg.adam_beta1,
            beta2: cfg.adam_beta2,
            eps: cfg.adam_eps,
            lr: cfg.learning_rate,
        }
    }

    fn update(&mut self, params: &mut [f64], grads: &[f64]) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for ((p, &g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// Minimizes the mean bound over the dataset; returns the trained model and
/// the per-epoch mean bound in bits per dimension.
pub fn train(
    model: &LatentModel,
    data: &Dataset,
    cfg: &TrainConfig,
) -> Result<(LatentModel, Vec<f64>), ModelError> {
    cfg.validate()?;
    if data.grids.is_empty() {
        return Err(ModelError::InvalidParameter("training set is empty".into()));
    }
    let input_dim = model.arch().input_dim;
    if data.grids.iter().any(|g| g.dim() != input_dim) {
        return Err(ModelError::ShapeMismatch(format!(
            "dataset grids do not match the model input width {input_dim}"
        )));
    }
    let mut trained = model.clone();
    if cfg.epochs == 0 {
        return Ok((trained, Vec::new()));
    }

    let bits_per_dim = 1.0 / (std::f64::consts::LN_2 * input_dim as f64);
    let mut params = trained.params();
    let mut adam = Adam::new(params.len(), cfg);
    let mut grads = ModelGrads::zeros(&trained);
    let mut curve = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..data.grids.len()).collect();

    for epoch in 0..cfg.epochs {
        let mut rng = SplitMix64::new(derive_seed(cfg.seed, epoch as u64));
        rng.shuffle(&mut order);
        let mut epoch_nats = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            grads.reset();
            let scale = 1.0 / batch.len() as f64;
            for &idx in batch {
                epoch_nats += nelbo_grad(&trained, &data.grids[idx], &mut rng, &mut grads, scale);
            }
            adam.update(&mut params, &grads.to_vec());
            trained.set_params(&params)?;
        }
        let mean_bits = epoch_nats / data.grids.len() as f64 * bits_per_dim;
        if !mean_bits.is_finite() {
            return Err(ModelError::NonFinite { context: format!("epoch {epoch}") });
        }
        curve.push(mean_bits);
    }
    Ok((trained, curve))
}
