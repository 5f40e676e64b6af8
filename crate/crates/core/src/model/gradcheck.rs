//! Verifies the hand-written backward pass against central finite
//! differences. The difference quotients are evaluated in double-double
//! arithmetic with Richardson extrapolation so the oracle's own error sits
//! orders of magnitude below the tolerance being certified, and the same
//! sampling noise is replayed for every perturbation.

use super::elbo::{nelbo_grad, normalize_grid};
use super::logistic::{logit, normalize_pixel, DELTA};
use super::mlp::LOG_S_BOUND;
use super::{Architecture, LatentModel, ModelError, ModelGrads};
use crate::data::Grid;
use crate::rng::{derive_seed, SplitMix64};
use twofloat::TwoFloat;

const DRAWS: usize = 2;
const MAX_CHECKED: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub mean_rel_err: f64,
    pub checked: usize,
    pub epsilon: f64,
}

/// |a - b| against the larger magnitude, floored so near-zero pairs do not
/// explode the ratio.
pub(crate) fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

pub fn grad_check(
    model: &LatentModel,
    grid: &Grid,
    epsilon: f64,
    seed: u64,
) -> Result<GradCheckReport, ModelError> {
    if !(1e-6..=1e-3).contains(&epsilon) {
        return Err(ModelError::IllConditionedEpsilon(epsilon));
    }
    if grid.dim() != model.arch().input_dim {
        return Err(ModelError::ShapeMismatch(format!(
            "grid has {} values, model wants {}",
            grid.dim(),
            model.arch().input_dim
        )));
    }

    let mut grads = ModelGrads::zeros(model);
    let mut rng = SplitMix64::new(seed);
    for _ in 0..DRAWS {
        nelbo_grad(model, grid, &mut rng, &mut grads, 1.0 / DRAWS as f64);
    }
    let analytic = grads.to_vec();

    // Replay the same uniform stream as standard-logistic noise, one block
    // per latent layer per draw, so every objective evaluation sees the
    // exact samples the analytic pass differentiated through.
    let mut rng = SplitMix64::new(seed);
    let arch = model.arch();
    let noise: Vec<Vec<Vec<f64>>> = (0..DRAWS)
        .map(|_| {
            arch.latent_dims
                .iter()
                .map(|&m| (0..m).map(|_| logit(rng.next_open01())).collect())
                .collect()
        })
        .collect();

    let x_hp: Vec<TwoFloat> = normalize_grid(grid).iter().map(|&v| TwoFloat::from(v)).collect();
    let plan = HpPlan::new(arch);
    let mut params: Vec<TwoFloat> = model.params().iter().map(|&p| TwoFloat::from(p)).collect();

    let total = params.len();
    let indices: Vec<usize> = if total <= MAX_CHECKED {
        (0..total).collect()
    } else {
        let mut all: Vec<usize> = (0..total).collect();
        SplitMix64::new(derive_seed(seed, 1)).shuffle(&mut all);
        all.truncate(MAX_CHECKED);
        all
    };

    let mut max_rel = 0.0f64;
    let mut sum_rel = 0.0f64;
    for &idx in &indices {
        let full = central_difference(&plan, &mut params, idx, epsilon, grid.data(), &x_hp, &noise);
        let half = central_difference(&plan, &mut params, idx, epsilon / 2.0, grid.data(), &x_hp, &noise);
        let fd = f64::from((half * 4.0 - full) / 3.0);
        let rel = relative_error(analytic[idx], fd);
        max_rel = max_rel.max(rel);
        sum_rel += rel;
    }
    Ok(GradCheckReport {
        max_rel_err: max_rel,
        mean_rel_err: sum_rel / indices.len() as f64,
        checked: indices.len(),
        epsilon,
    })
}

fn central_difference(
    plan: &HpPlan,
    params: &mut [TwoFloat],
    idx: usize,
    step: f64,
    pixels: &[u8],
    x: &[TwoFloat],
    noise: &[Vec<Vec<f64>>],
) -> TwoFloat {
    let saved = params[idx];
    params[idx] = saved + step;
    let plus = plan.objective(params, pixels, x, noise);
    params[idx] = saved - step;
    let minus = plan.objective(params, pixels, x, noise);
    params[idx] = saved;
    (plus - minus) / (2.0 * step)
}

/// Offsets of each network inside the flat parameter vector, in the same
/// declaration order the model serializes with.
struct HpPlan {
    input_dim: usize,
    latent_dims: Vec<usize>,
    hidden_dims: Vec<usize>,
    infer_offsets: Vec<usize>,
    gen_offsets: Vec<usize>,
    obs_offset: usize,
}

fn mlp_span(in_dim: usize, hidden: &[usize], out_dim: usize) -> usize {
    let mut total = 0;
    let mut prev = in_dim;
    for &h in hidden {
        total += prev * h + h;
        prev = h;
    }
    total + 2 * (prev * out_dim + out_dim)
}

impl HpPlan {
    fn new(arch: &Architecture) -> Self {
        let mut off = 0;
        let mut infer_offsets = Vec::with_capacity(arch.latent_dims.len());
        let mut prev = arch.input_dim;
        for &m in &arch.latent_dims {
            infer_offsets.push(off);
            off += mlp_span(prev, &arch.hidden_dims, m);
            prev = m;
        }
        let mut gen_offsets = Vec::new();
        for i in 0..arch.latent_dims.len() - 1 {
            gen_offsets.push(off);
            off += mlp_span(arch.latent_dims[i + 1], &arch.hidden_dims, arch.latent_dims[i]);
        }
        HpPlan {
            input_dim: arch.input_dim,
            latent_dims: arch.latent_dims.clone(),
            hidden_dims: arch.hidden_dims.clone(),
            infer_offsets,
            gen_offsets,
            obs_offset: off,
        }
    }

    fn objective(
        &self,
        params: &[TwoFloat],
        pixels: &[u8],
        x: &[TwoFloat],
        noise: &[Vec<Vec<f64>>],
    ) -> TwoFloat {
        let mut total = TwoFloat::from(0.0);
        for draw in noise {
            total += self.draw(params, pixels, x, draw);
        }
        total / noise.len() as f64
    }

    fn draw(&self, params: &[TwoFloat], pixels: &[u8], x: &[TwoFloat], noise: &[Vec<f64>]) -> TwoFloat {
        let layers = self.latent_dims.len();
        let mut z: Vec<Vec<TwoFloat>> = Vec::with_capacity(layers);
        let mut bound = TwoFloat::from(0.0);
        for i in 0..layers {
            let input: &[TwoFloat] = if i == 0 { x } else { &z[i - 1] };
            let (mu, ls) = self.network(params, self.infer_offsets[i], input, self.latent_dims[i]);
            let zi: Vec<TwoFloat> = (0..self.latent_dims[i])
                .map(|j| mu[j] + ls[j].exp() * noise[i][j])
                .collect();
            for j in 0..zi.len() {
                bound += hp_log_pdf(zi[j], mu[j], ls[j]);
            }
            z.push(zi);
        }
        let (omu, ols) = self.network(params, self.obs_offset, &z[0], self.input_dim);
        for (j, &v) in pixels.iter().enumerate() {
            bound -= hp_pixel_log_mass(v, omu[j], ols[j]);
        }
        for i in 0..layers - 1 {
            let (pmu, pls) = self.network(params, self.gen_offsets[i], &z[i + 1], self.latent_dims[i]);
            for j in 0..z[i].len() {
                bound -= hp_log_pdf(z[i][j], pmu[j], pls[j]);
            }
        }
        for &zv in &z[layers - 1] {
            bound -= hp_log_pdf_std(zv);
        }
        bound
    }

    fn network(
        &self,
        params: &[TwoFloat],
        offset: usize,
        input: &[TwoFloat],
        out_dim: usize,
    ) -> (Vec<TwoFloat>, Vec<TwoFloat>) {
        let mut pos = offset;
        let mut act = input.to_vec();
        for &h in &self.hidden_dims {
            act = dense(params, &mut pos, &act, h).into_iter().map(hp_tanh).collect();
        }
        let mu = dense(params, &mut pos, &act, out_dim);
        let ls = dense(params, &mut pos, &act, out_dim)
            .into_iter()
            .map(|u| hp_tanh(u / LOG_S_BOUND) * LOG_S_BOUND)
            .collect();
        (mu, ls)
    }
}

fn dense(params: &[TwoFloat], pos: &mut usize, x: &[TwoFloat], out_dim: usize) -> Vec<TwoFloat> {
    let in_dim = x.len();
    let w = &params[*pos..*pos + in_dim * out_dim];
    *pos += in_dim * out_dim;
    let b = &params[*pos..*pos + out_dim];
    *pos += out_dim;
    (0..out_dim)
        .map(|o| {
            let mut acc = b[o];
            for (wi, xi) in w[o * in_dim..(o + 1) * in_dim].iter().zip(x) {
                acc += *wi * *xi;
            }
            acc
        })
        .collect()
}

fn hp_softplus(x: TwoFloat) -> TwoFloat {
    let tail = (-x.abs()).exp().ln_1p();
    if x > 0.0 {
        x + tail
    } else {
        tail
    }
}

fn hp_log_sigmoid(x: TwoFloat) -> TwoFloat {
    -hp_softplus(-x)
}

fn hp_tanh(x: TwoFloat) -> TwoFloat {
    let e = (x.abs() * -2.0).exp();
    let t = (TwoFloat::from(1.0) - e) / (TwoFloat::from(1.0) + e);
    if x < 0.0 {
        -t
    } else {
        t
    }
}

fn hp_log_pdf(z: TwoFloat, mu: TwoFloat, ls: TwoFloat) -> TwoFloat {
    let t = (z - mu) / ls.exp();
    -t - ls - hp_softplus(-t) * 2.0
}

fn hp_log_pdf_std(z: TwoFloat) -> TwoFloat {
    -z - hp_softplus(-z) * 2.0
}

fn hp_pixel_log_mass(v: u8, mu: TwoFloat, ls: TwoFloat) -> TwoFloat {
    let s = ls.exp();
    let center = normalize_pixel(v);
    if v == 0 {
        hp_log_sigmoid((TwoFloat::from(center + DELTA) - mu) / s)
    } else if v == 255 {
        hp_log_sigmoid(-((TwoFloat::from(center - DELTA) - mu) / s))
    } else {
        let a = (TwoFloat::from(center - DELTA) - mu) / s;
        let b = (TwoFloat::from(center + DELTA) - mu) / s;
        hp_log_sigmoid(b) + hp_log_sigmoid(-a) + (-(a - b).exp()).ln_1p()
    }
}
