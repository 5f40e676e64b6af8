//! Small dense networks with tanh hidden layers and two linear heads
//! producing location and log-scale. Backward passes are written out by
//! hand; `grad_check` holds them to finite differences.

use super::LogisticParams;
use crate::rng::SplitMix64;

/// Log-scale head saturation bound.
pub const LOG_S_BOUND: f64 = 7.0;

/// Smooth clamp onto (-LOG_S_BOUND, LOG_S_BOUND).
fn saturate(u: f64) -> f64 {
    LOG_S_BOUND * (u / LOG_S_BOUND).tanh()
}

#[derive(Debug, Clone)]
pub struct Dense {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub in_dim: usize,
}

impl Dense {
    fn init(in_dim: usize, out_dim: usize, rng: &mut SplitMix64) -> Self {
        let bound = 1.0 / (in_dim as f64).sqrt();
        let w = (0..in_dim * out_dim)
            .map(|_| (2.0 * rng.next_open01() - 1.0) * bound)
            .collect();
        Dense { w, b: vec![0.0; out_dim], in_dim }
    }

    pub fn param_count(&self) -> usize {
        self.w.len() + self.b.len()
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.in_dim);
        let mut y = self.b.clone();
        for (o, yo) in y.iter_mut().enumerate() {
            let row = &self.w[o * self.in_dim..(o + 1) * self.in_dim];
            *yo += row.iter().zip(x).map(|(w, x)| w * x).sum::<f64>();
        }
        y
    }

    /// Accumulates weight gradients and the input gradient for one layer.
    fn backward(&self, x: &[f64], dy: &[f64], g: &mut DenseGrads, dx: &mut [f64]) {
        for (o, &d) in dy.iter().enumerate() {
            let row = &self.w[o * self.in_dim..(o + 1) * self.in_dim];
            let grow = &mut g.w[o * self.in_dim..(o + 1) * self.in_dim];
            g.b[o] += d;
            for i in 0..self.in_dim {
                grow[i] += d * x[i];
                dx[i] += d * row[i];
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct DenseGrads {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl DenseGrads {
    fn zeros(d: &Dense) -> Self {
        DenseGrads { w: vec![0.0; d.w.len()], b: vec![0.0; d.b.len()] }
    }

    fn reset(&mut self) {
        self.w.iter_mut().for_each(|v| *v = 0.0);
        self.b.iter_mut().for_each(|v| *v = 0.0);
    }
}

#[derive(Debug, Clone)]
pub struct Mlp {
    pub hidden: Vec<Dense>,
    pub head_mu: Dense,
    pub head_ls: Dense,
}

/// Forward activations kept for the backward pass: the input and each
/// post-tanh hidden vector, plus the saturated log-scale output.
pub struct MlpCache {
    acts: Vec<Vec<f64>>,
    ls: Vec<f64>,
}

impl Mlp {
    pub fn init(in_dim: usize, hidden_dims: &[usize], out_dim: usize, rng: &mut SplitMix64) -> Self {
        let mut hidden = Vec::with_capacity(hidden_dims.len());
        let mut prev = in_dim;
        for &h in hidden_dims {
            hidden.push(Dense::init(prev, h, rng));
            prev = h;
        }
        Mlp {
            hidden,
            head_mu: Dense::init(prev, out_dim, rng),
            head_ls: Dense::init(prev, out_dim, rng),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.hidden[0].in_dim
    }

    pub fn param_count(&self) -> usize {
        self.hidden.iter().map(Dense::param_count).sum::<usize>()
            + self.head_mu.param_count()
            + self.head_ls.param_count()
    }

    pub fn forward(&self, input: &[f64]) -> (LogisticParams, MlpCache) {
        let mut acts = Vec::with_capacity(self.hidden.len() + 1);
        acts.push(input.to_vec());
        for layer in &self.hidden {
            let mut h = layer.forward(acts.last().unwrap());
            h.iter_mut().for_each(|v| *v = v.tanh());
            acts.push(h);
        }
        let top = acts.last().unwrap();
        let mu = self.head_mu.forward(top);
        let ls: Vec<f64> = self.head_ls.forward(top).iter().map(|&u| saturate(u)).collect();
        (LogisticParams { mu: mu.clone(), log_s: ls.clone() }, MlpCache { acts, ls })
    }

    /// Backpropagates head gradients; returns the input gradient.
    pub fn backward(&self, cache: &MlpCache, d_mu: &[f64], d_ls: &[f64], g: &mut MlpGrads) -> Vec<f64> {
        // d saturate(u)/du = 1 - (saturate(u)/bound)^2
        let d_ls_raw: Vec<f64> = d_ls
            .iter()
            .zip(&cache.ls)
            .map(|(&d, &ls)| d * (1.0 - (ls / LOG_S_BOUND) * (ls / LOG_S_BOUND)))
            .collect();
        let top = cache.acts.last().unwrap();
        let mut dh = vec![0.0; top.len()];
        self.head_mu.backward(top, d_mu, &mut g.head_mu, &mut dh);
        self.head_ls.backward(top, &d_ls_raw, &mut g.head_ls, &mut dh);

        for (idx, layer) in self.hidden.iter().enumerate().rev() {
            let post = &cache.acts[idx + 1];
            let dpre: Vec<f64> = dh.iter().zip(post).map(|(&d, &a)| d * (1.0 - a * a)).collect();
            let mut dx = vec![0.0; layer.in_dim];
            layer.backward(&cache.acts[idx], &dpre, &mut g.hidden[idx], &mut dx);
            dh = dx;
        }
        dh
    }

    pub fn append_params(&self, out: &mut Vec<f64>) {
        for d in self.hidden.iter().chain([&self.head_mu, &self.head_ls]) {
            out.extend_from_slice(&d.w);
            out.extend_from_slice(&d.b);
        }
    }

    pub fn read_params(&mut self, src: &[f64], pos: &mut usize) {
        for d in self
            .hidden
            .iter_mut()
            .chain([&mut self.head_mu, &mut self.head_ls])
        {
            let w_len = d.w.len();
            d.w.copy_from_slice(&src[*pos..*pos + w_len]);
            *pos += w_len;
            let b_len = d.b.len();
            d.b.copy_from_slice(&src[*pos..*pos + b_len]);
            *pos += b_len;
        }
    }
}

#[derive(Debug, Clone)]
pub struct MlpGrads {
    pub hidden: Vec<DenseGrads>,
    pub head_mu: DenseGrads,
    pub head_ls: DenseGrads,
}

impl MlpGrads {
    pub fn zeros(m: &Mlp) -> Self {
        MlpGrads {
            hidden: m.hidden.iter().map(DenseGrads::zeros).collect(),
            head_mu: DenseGrads::zeros(&m.head_mu),
            head_ls: DenseGrads::zeros(&m.head_ls),
        }
    }

    pub fn reset(&mut self) {
        self.hidden.iter_mut().for_each(DenseGrads::reset);
        self.head_mu.reset();
        self.head_ls.reset();
    }

    pub fn append_to(&self, out: &mut Vec<f64>) {
        for d in self.hidden.iter().chain([&self.head_mu, &self.head_ls]) {
            out.extend_from_slice(&d.w);
            out.extend_from_slice(&d.b);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Scalar objective over the MLP outputs for finite-difference checks.
    fn objective(m: &Mlp, x: &[f64]) -> f64 {
        let (p, _) = m.forward(x);
        p.mu.iter().enumerate().map(|(i, &v)| (i as f64 + 1.0) * v * v).sum::<f64>()
            + p.log_s.iter().map(|&v| v.cos()).sum::<f64>()
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = SplitMix64::new(5);
        let mlp = Mlp::init(3, &[5, 4], 2, &mut rng);
        let x = vec![0.3, -0.8, 1.1];
        let (p, cache) = mlp.forward(&x);
        let d_mu: Vec<f64> = p.mu.iter().enumerate().map(|(i, &v)| 2.0 * (i as f64 + 1.0) * v).collect();
        let d_ls: Vec<f64> = p.log_s.iter().map(|&v| -v.sin()).collect();
        let mut g = MlpGrads::zeros(&mlp);
        let dx = mlp.backward(&cache, &d_mu, &d_ls, &mut g);

        let mut analytic = Vec::new();
        g.append_to(&mut analytic);
        let mut params = Vec::new();
        mlp.append_params(&mut params);

        let eps = 1e-6;
        for i in 0..params.len() {
            let mut probe = mlp.clone();
            let mut plus = params.clone();
            plus[i] += eps;
            probe.read_params(&plus, &mut 0);
            let up = objective(&probe, &x);
            let mut minus = params.clone();
            minus[i] -= eps;
            probe.read_params(&minus, &mut 0);
            let down = objective(&probe, &x);
            let fd = (up - down) / (2.0 * eps);
            assert!(
                (analytic[i] - fd).abs() < 1e-6,
                "param {i}: analytic {} vs fd {fd}",
                analytic[i]
            );
        }

        for i in 0..x.len() {
            let mut xp = x.clone();
            xp[i] += eps;
            let up = objective(&mlp, &xp);
            xp[i] -= 2.0 * eps;
            let down = objective(&mlp, &xp);
            let fd = (up - down) / (2.0 * eps);
            assert!((dx[i] - fd).abs() < 1e-6, "input {i}: {} vs {fd}", dx[i]);
        }
    }

    #[test]
    fn param_vector_roundtrip() {
        let mut rng = SplitMix64::new(9);
        let mlp = Mlp::init(4, &[6], 3, &mut rng);
        let mut params = Vec::new();
        mlp.append_params(&mut params);
        assert_eq!(params.len(), mlp.param_count());
        let mut copy = mlp.clone();
        copy.read_params(&params, &mut 0);
        let mut again = Vec::new();
        copy.append_params(&mut again);
        assert_eq!(params, again);
    }

    #[test]
    fn log_scale_respects_the_bound() {
        let mut rng = SplitMix64::new(1);
        let mut mlp = Mlp::init(2, &[3], 2, &mut rng);
        // Force huge head weights; outputs must stay inside the bound.
        mlp.head_ls.w.iter_mut().for_each(|w| *w = 1e6);
        let (p, _) = mlp.forward(&[1.0, 1.0]);
        assert!(p.log_s.iter().all(|&v| v.abs() <= LOG_S_BOUND));
    }
}
