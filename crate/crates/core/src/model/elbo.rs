//! Monte-Carlo evidence bound and its hand-written pathwise gradient.
//!
//! One draw samples every latent layer by reparameterization, so the
//! backward pass threads gradients both through the densities directly and
//! through the sampled latents back into the inference networks.

use super::logistic::{self, normalize_pixel};
use super::mlp::MlpCache;
use super::{LatentModel, LogisticParams, ModelError, ModelGrads};
use crate::data::Grid;
use crate::rng::SplitMix64;

/// Maps grid bytes onto the model scale [-1, 1].
pub(crate) fn normalize_grid(grid: &Grid) -> Vec<f64> {
    grid.data().iter().map(|&v| normalize_pixel(v)).collect()
}

/// Everything one Monte-Carlo draw leaves behind for backprop.
struct Draw {
    z: Vec<Vec<f64>>,
    infer: Vec<(LogisticParams, MlpCache)>,
    gen: Vec<(LogisticParams, MlpCache)>,
    obs: (LogisticParams, MlpCache),
    nelbo: f64,
}

fn run_draw(model: &LatentModel, x: &[f64], pixels: &[u8], rng: &mut SplitMix64) -> Draw {
    let layers = model.layer_count();
    let mut infer = Vec::with_capacity(layers);
    let mut z: Vec<Vec<f64>> = Vec::with_capacity(layers);
    let mut log_q = 0.0;
    for i in 0..layers {
        let input: &[f64] = if i == 0 { x } else { &z[i - 1] };
        let (params, cache) = model.infer_net(i).forward(input);
        let zi: Vec<f64> = params
            .mu
            .iter()
            .zip(&params.log_s)
            .map(|(&mu, &ls)| logistic::sample(mu, ls, rng.next_open01()))
            .collect();
        log_q += zi
            .iter()
            .zip(&params.mu)
            .zip(&params.log_s)
            .map(|((&zv, &mu), &ls)| logistic::log_pdf(zv, mu, ls))
            .sum::<f64>();
        infer.push((params, cache));
        z.push(zi);
    }

    let obs = model.obs_net().forward(&z[0]);
    let log_px: f64 = pixels
        .iter()
        .zip(&obs.0.mu)
        .zip(&obs.0.log_s)
        .map(|((&v, &mu), &ls)| logistic::pixel_log_mass(v, mu, ls))
        .sum();

    let mut gen = Vec::with_capacity(layers - 1);
    let mut log_pz = 0.0;
    for i in 0..layers - 1 {
        let (params, cache) = model.gen_net(i).forward(&z[i + 1]);
        log_pz += z[i]
            .iter()
            .zip(&params.mu)
            .zip(&params.log_s)
            .map(|((&zv, &mu), &ls)| logistic::log_pdf(zv, mu, ls))
            .sum::<f64>();
        gen.push((params, cache));
    }
    let log_prior: f64 = z[layers - 1].iter().map(|&zv| logistic::log_pdf_std(zv)).sum();

    let nelbo = log_q - log_px - log_pz - log_prior;
    Draw { z, infer, gen, obs, nelbo }
}

fn backprop_draw(model: &LatentModel, pixels: &[u8], draw: &Draw, grads: &mut ModelGrads, scale: f64) {
    let layers = model.layer_count();
    let mut dz: Vec<Vec<f64>> = draw.z.iter().map(|zi| vec![0.0; zi.len()]).collect();

    // Density partials. The posterior terms also feed the reparameterized
    // sample path, applied last when the latent gradients are complete.
    let mut dq_mu: Vec<Vec<f64>> = Vec::with_capacity(layers);
    let mut dq_ls: Vec<Vec<f64>> = Vec::with_capacity(layers);
    for i in 0..layers {
        let q = &draw.infer[i].0;
        let mut dmu = vec![0.0; q.len()];
        let mut dls = vec![0.0; q.len()];
        for j in 0..q.len() {
            let (dzv, dm, dl) = logistic::log_pdf_grad(draw.z[i][j], q.mu[j], q.log_s[j]);
            dz[i][j] += scale * dzv;
            dmu[j] += scale * dm;
            dls[j] += scale * dl;
        }
        dq_mu.push(dmu);
        dq_ls.push(dls);
    }

    let obs = &draw.obs.0;
    let mut dobs_mu = vec![0.0; obs.len()];
    let mut dobs_ls = vec![0.0; obs.len()];
    for j in 0..obs.len() {
        let (dm, dl) = logistic::pixel_log_mass_grad(pixels[j], obs.mu[j], obs.log_s[j]);
        dobs_mu[j] = -scale * dm;
        dobs_ls[j] = -scale * dl;
    }

    let mut dp_mu: Vec<Vec<f64>> = Vec::with_capacity(layers - 1);
    let mut dp_ls: Vec<Vec<f64>> = Vec::with_capacity(layers - 1);
    for i in 0..layers - 1 {
        let p = &draw.gen[i].0;
        let mut dmu = vec![0.0; p.len()];
        let mut dls = vec![0.0; p.len()];
        for j in 0..p.len() {
            let (dzv, dm, dl) = logistic::log_pdf_grad(draw.z[i][j], p.mu[j], p.log_s[j]);
            dz[i][j] -= scale * dzv;
            dmu[j] = -scale * dm;
            dls[j] = -scale * dl;
        }
        dp_mu.push(dmu);
        dp_ls.push(dls);
    }

    for j in 0..dz[layers - 1].len() {
        dz[layers - 1][j] -= scale * logistic::log_pdf_std_grad(draw.z[layers - 1][j]);
    }

    // Network backward passes: observation and generative nets deposit
    // into the latents they read.
    let din = model.obs_net().backward(&draw.obs.1, &dobs_mu, &dobs_ls, &mut grads.obs);
    dz[0].iter_mut().zip(&din).for_each(|(d, &v)| *d += v);

    for i in 0..layers - 1 {
        let din = model
            .gen_net(i)
            .backward(&draw.gen[i].1, &dp_mu[i], &dp_ls[i], &mut grads.gen[i]);
        dz[i + 1].iter_mut().zip(&din).for_each(|(d, &v)| *d += v);
    }

    // Inference nets, top layer down: each pass closes over the sample
    // path z = mu + s * t (dz/dmu = 1, dz/dlog_s = z - mu) and hands its
    // input gradient to the layer below.
    for i in (0..layers).rev() {
        let q = &draw.infer[i].0;
        let total_mu: Vec<f64> = dq_mu[i].iter().zip(&dz[i]).map(|(&a, &b)| a + b).collect();
        let total_ls: Vec<f64> = dq_ls[i]
            .iter()
            .zip(&dz[i])
            .zip(draw.z[i].iter().zip(&q.mu))
            .map(|((&a, &b), (&zv, &mu))| a + b * (zv - mu))
            .collect();
        let din = model
            .infer_net(i)
            .backward(&draw.infer[i].1, &total_mu, &total_ls, &mut grads.infer[i]);
        if i > 0 {
            dz[i - 1].iter_mut().zip(&din).for_each(|(d, &v)| *d += v);
        }
    }
}

fn check_input(model: &LatentModel, grid: &Grid) -> Result<(), ModelError> {
    if grid.dim() != model.arch().input_dim {
        return Err(ModelError::ShapeMismatch(format!(
            "grid has {} values, model wants {}",
            grid.dim(),
            model.arch().input_dim
        )));
    }
    Ok(())
}

/// Per-draw Monte-Carlo estimates of the negative evidence bound, in nats.
pub fn nelbo_samples(
    model: &LatentModel,
    grid: &Grid,
    n_samples: usize,
    seed: u64,
) -> Result<Vec<f64>, ModelError> {
    check_input(model, grid)?;
    if n_samples == 0 {
        return Err(ModelError::InvalidParameter("n_samples must be at least 1".into()));
    }
    let x = normalize_grid(grid);
    let mut rng = SplitMix64::new(seed);
    let draws: Vec<f64> = (0..n_samples)
        .map(|_| run_draw(model, &x, grid.data(), &mut rng).nelbo)
        .collect();
    if draws.iter().any(|v| !v.is_finite()) {
        return Err(ModelError::NonFinite { context: "evidence bound".into() });
    }
    Ok(draws)
}

/// Mean negative evidence bound over `n_samples` draws, in nats.
pub fn nelbo(model: &LatentModel, grid: &Grid, n_samples: usize, seed: u64) -> Result<f64, ModelError> {
    let draws = nelbo_samples(model, grid, n_samples, seed)?;
    Ok(draws.iter().sum::<f64>() / draws.len() as f64)
}

/// One draw: accumulates `scale` times the parameter gradient into `grads`
/// and returns the draw's bound in nats.
pub(crate) fn nelbo_grad(
    model: &LatentModel,
    grid: &Grid,
    rng: &mut SplitMix64,
    grads: &mut ModelGrads,
    scale: f64,
) -> f64 {
    let x = normalize_grid(grid);
    let draw = run_draw(model, &x, grid.data(), rng);
    backprop_draw(model, grid.data(), &draw, grads, scale);
    draw.nelbo
}
