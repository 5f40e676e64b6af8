//! The latent-variable generative model.
//!
//! A Markov chain of logistic latents: inference nets map the data up the
//! chain, generative nets map it back down, the top layer carries a
//! standard logistic prior, and the observation net emits a discretized
//! logistic per pixel. Everything is an MLP with tanh hidden layers.

mod elbo;
mod gradcheck;
mod io;
pub mod logistic;
mod mlp;
mod train;

pub use elbo::{nelbo, nelbo_samples};
pub use gradcheck::{grad_check, GradCheckReport};
pub use io::{load_model, save_model};
pub use mlp::LOG_S_BOUND;
pub use train::{train, TrainConfig};

pub(crate) use elbo::normalize_grid;
pub(crate) use mlp::{Mlp, MlpGrads};

use crate::data::Grid;
use crate::hash::Fingerprint;
use crate::rng::SplitMix64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("layer {0} out of range")]
    LayerOutOfRange(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("non-finite value in {context}")]
    NonFinite { context: String },
    #[error("finite-difference step {0} outside the trustworthy band [1e-6, 1e-3]")]
    IllConditionedEpsilon(f64),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed model file: {0}")]
    MalformedFile(String),
    #[error("model file checksum does not match its contents")]
    ChecksumMismatch,
}

/// Network shapes: data width, latent widths bottom to top, and the hidden
/// widths every MLP shares.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    pub input_dim: usize,
    pub latent_dims: Vec<usize>,
    pub hidden_dims: Vec<usize>,
    pub seed: u64,
}

impl Architecture {
    pub fn layer_count(&self) -> usize {
        self.latent_dims.len()
    }

    fn validate(&self) -> Result<(), ModelError> {
        if self.input_dim == 0 {
            return Err(ModelError::InvalidArchitecture("input dimension is zero".into()));
        }
        if self.latent_dims.is_empty() {
            return Err(ModelError::InvalidArchitecture("at least one latent layer".into()));
        }
        if self.hidden_dims.is_empty() {
            return Err(ModelError::InvalidArchitecture("at least one hidden layer".into()));
        }
        if self.latent_dims.iter().chain(&self.hidden_dims).any(|&d| d == 0) {
            return Err(ModelError::InvalidArchitecture("zero-width layer".into()));
        }
        Ok(())
    }
}

/// Location and log-scale of a per-dimension logistic; |log_s| stays
/// within LOG_S_BOUND.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticParams {
    pub mu: Vec<f64>,
    pub log_s: Vec<f64>,
}

impl LogisticParams {
    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct LatentModel {
    arch: Architecture,
    /// infer[0]: data -> latent 0; infer[i]: latent i-1 -> latent i.
    infer: Vec<Mlp>,
    /// gen[i]: latent i+1 -> latent i.
    gen: Vec<Mlp>,
    /// latent 0 -> per-pixel observation params.
    obs: Mlp,
}

/// Builds a model with scaled-uniform fan-in initialization, deterministic
/// in `arch.seed`.
pub fn init_model(arch: &Architecture) -> Result<LatentModel, ModelError> {
    arch.validate()?;
    let mut rng = SplitMix64::new(arch.seed);
    let l = arch.layer_count();
    let mut infer = Vec::with_capacity(l);
    let mut prev = arch.input_dim;
    for &m in &arch.latent_dims {
        infer.push(Mlp::init(prev, &arch.hidden_dims, m, &mut rng));
        prev = m;
    }
    let mut gen = Vec::with_capacity(l.saturating_sub(1));
    for i in 0..l - 1 {
        gen.push(Mlp::init(arch.latent_dims[i + 1], &arch.hidden_dims, arch.latent_dims[i], &mut rng));
    }
    let obs = Mlp::init(arch.latent_dims[0], &arch.hidden_dims, arch.input_dim, &mut rng);
    Ok(LatentModel { arch: arch.clone(), infer, gen, obs })
}

impl LatentModel {
    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn layer_count(&self) -> usize {
        self.arch.layer_count()
    }

    /// Posterior parameters for latent `layer`; layer 0 conditions on the
    /// normalized data, deeper layers on the latent below.
    pub fn infer_layer(&self, layer: usize, input: &[f64]) -> Result<LogisticParams, ModelError> {
        let net = self.infer.get(layer).ok_or(ModelError::LayerOutOfRange(layer))?;
        if input.len() != net.in_dim() {
            return Err(ModelError::ShapeMismatch(format!(
                "inference layer {layer} wants {} inputs, got {}",
                net.in_dim(),
                input.len()
            )));
        }
        Ok(net.forward(input).0)
    }

    /// Generative parameters of latent `layer` given the latent above it.
    pub fn generate_layer(&self, layer: usize, z_above: &[f64]) -> Result<LogisticParams, ModelError> {
        let net = self.gen.get(layer).ok_or(ModelError::LayerOutOfRange(layer))?;
        if z_above.len() != net.in_dim() {
            return Err(ModelError::ShapeMismatch(format!(
                "generative layer {layer} wants {} inputs, got {}",
                net.in_dim(),
                z_above.len()
            )));
        }
        Ok(net.forward(z_above).0)
    }

    /// Per-pixel observation parameters given the bottom latent.
    pub fn observe_params(&self, z0: &[f64]) -> Result<LogisticParams, ModelError> {
        if z0.len() != self.obs.in_dim() {
            return Err(ModelError::ShapeMismatch(format!(
                "observation net wants {} inputs, got {}",
                self.obs.in_dim(),
                z0.len()
            )));
        }
        Ok(self.obs.forward(z0).0)
    }

    /// Posterior mean embedding of a grid: the location of q(z_0 | x).
    pub fn latent_mean(&self, grid: &Grid) -> Result<Vec<f64>, ModelError> {
        let x = normalize_grid(grid);
        Ok(self.infer_layer(0, &x)?.mu)
    }

    pub fn param_count(&self) -> usize {
        self.nets().map(Mlp::param_count).sum()
    }

    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for net in self.nets() {
            net.append_params(&mut out);
        }
        out
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<(), ModelError> {
        if params.len() != self.param_count() {
            return Err(ModelError::ShapeMismatch(format!(
                "{} parameters for a model of {}",
                params.len(),
                self.param_count()
            )));
        }
        let mut pos = 0;
        for net in self.nets_mut() {
            net.read_params(params, &mut pos);
        }
        Ok(())
    }

    /// Canonical network order for parameter serialization.
    fn nets(&self) -> impl Iterator<Item = &Mlp> {
        self.infer.iter().chain(self.gen.iter()).chain(std::iter::once(&self.obs))
    }

    fn nets_mut(&mut self) -> impl Iterator<Item = &mut Mlp> {
        self.infer
            .iter_mut()
            .chain(self.gen.iter_mut())
            .chain(std::iter::once(&mut self.obs))
    }

    pub(crate) fn infer_net(&self, layer: usize) -> &Mlp {
        &self.infer[layer]
    }

    pub(crate) fn gen_net(&self, layer: usize) -> &Mlp {
        &self.gen[layer]
    }

    pub(crate) fn obs_net(&self) -> &Mlp {
        &self.obs
    }

    /// Fingerprint of the serialized model.
    pub fn fingerprint(&self) -> Fingerprint {
        io::fingerprint_of(self)
    }
}

/// Gradients for every parameter, in canonical order.
#[derive(Debug, Clone)]
pub(crate) struct ModelGrads {
    pub infer: Vec<MlpGrads>,
    pub gen: Vec<MlpGrads>,
    pub obs: MlpGrads,
}

impl ModelGrads {
    pub fn zeros(model: &LatentModel) -> Self {
        ModelGrads {
            infer: model.infer.iter().map(MlpGrads::zeros).collect(),
            gen: model.gen.iter().map(MlpGrads::zeros).collect(),
            obs: MlpGrads::zeros(&model.obs),
        }
    }

    pub fn reset(&mut self) {
        self.infer.iter_mut().for_each(MlpGrads::reset);
        self.gen.iter_mut().for_each(MlpGrads::reset);
        self.obs.reset();
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for g in self.infer.iter().chain(self.gen.iter()).chain(std::iter::once(&self.obs)) {
            g.append_to(&mut out);
        }
        out
    }
}
