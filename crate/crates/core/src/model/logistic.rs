//! Logistic-distribution numerics: stable log densities, the discretized
//! per-pixel observation mass, their partial derivatives, and sampling.

/// Grid half-step: pixel v covers [v_norm - DELTA, v_norm + DELTA] with the
/// edge bins stretched to infinity.
pub const DELTA: f64 = 1.0 / 255.0;

/// Maps a byte value onto the model scale [-1, 1].
pub fn normalize_pixel(v: u8) -> f64 {
    2.0 * v as f64 / 255.0 - 1.0
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn log_sigmoid(x: f64) -> f64 {
    -softplus(-x)
}

/// ln(u / (1 - u)) for u in (0, 1).
pub fn logit(u: f64) -> f64 {
    u.ln() - (-u).ln_1p()
}

/// Draws from Logistic(mu, exp(log_s)) given a uniform u in (0, 1).
pub fn sample(mu: f64, log_s: f64, u: f64) -> f64 {
    mu + log_s.exp() * logit(u)
}

/// Log density of Logistic(mu, s) at z, with s = exp(log_s).
pub fn log_pdf(z: f64, mu: f64, log_s: f64) -> f64 {
    let t = (z - mu) / log_s.exp();
    -t - log_s - 2.0 * softplus(-t)
}

/// Partials of `log_pdf` with respect to (z, mu, log_s).
pub fn log_pdf_grad(z: f64, mu: f64, log_s: f64) -> (f64, f64, f64) {
    let s = log_s.exp();
    let t = (z - mu) / s;
    let dlp_dt = 2.0 * sigmoid(-t) - 1.0;
    (dlp_dt / s, -dlp_dt / s, -dlp_dt * t - 1.0)
}

/// Standard logistic log density (the prior).
pub fn log_pdf_std(z: f64) -> f64 {
    -z - 2.0 * softplus(-z)
}

pub fn log_pdf_std_grad(z: f64) -> f64 {
    2.0 * sigmoid(-z) - 1.0
}

/// Standardized bin bounds for pixel value v under (mu, s); edge pixels
/// extend to the infinite tail. Returns (lower, upper) with None meaning
/// an infinite bound.
fn pixel_bounds(v: u8, mu: f64, s: f64) -> (Option<f64>, Option<f64>) {
    let center = normalize_pixel(v);
    let lower = (v > 0).then(|| (center - DELTA - mu) / s);
    let upper = (v < 255).then(|| (center + DELTA - mu) / s);
    (lower, upper)
}

/// Log probability mass of pixel value v under a discretized
/// Logistic(mu, exp(log_s)) on the 256-level grid.
pub fn pixel_log_mass(v: u8, mu: f64, log_s: f64) -> f64 {
    let s = log_s.exp();
    match pixel_bounds(v, mu, s) {
        (None, Some(b)) => log_sigmoid(b),
        (Some(a), None) => log_sigmoid(-a),
        (Some(a), Some(b)) => {
            // log[sigmoid(b) - sigmoid(a)] without cancellation:
            // sigmoid(b) - sigmoid(a) = sigmoid(b) sigmoid(-a) (1 - e^(a-b)).
            log_sigmoid(b) + log_sigmoid(-a) + (-((a - b).exp())).ln_1p()
        }
        (None, None) => unreachable!("a pixel bin always has at least one finite edge"),
    }
}

/// Partials of `pixel_log_mass` with respect to (mu, log_s).
pub fn pixel_log_mass_grad(v: u8, mu: f64, log_s: f64) -> (f64, f64) {
    let s = log_s.exp();
    match pixel_bounds(v, mu, s) {
        (None, Some(b)) => {
            let d_db = sigmoid(-b);
            (-d_db / s, -d_db * b)
        }
        (Some(a), None) => {
            let d_da = -sigmoid(a);
            (-d_da / s, -d_da * a)
        }
        (Some(a), Some(b)) => {
            let shared = 1.0 / (b - a).exp_m1();
            let d_db = sigmoid(-b) + shared;
            let d_da = -sigmoid(a) - shared;
            (-(d_da + d_db) / s, -d_da * a - d_db * b)
        }
        (None, None) => unreachable!(),
    }
}
