use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::lstm::LstmParams;

/// Trainable tensors of the generator. Also used as the gradient container.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    /// Forward encoder cell, hidden size `d_q / 2`.
    pub enc_fwd: LstmParams,
    /// Backward encoder cell, hidden size `d_q / 2`.
    pub enc_bwd: LstmParams,
    /// Decoder cell over `[embedding; selective read; context]`.
    pub dec: LstmParams,
    /// Bilinear attention between the previous decoder state and each memory slot.
    pub w_att: Array2<f64>,
    /// Generate-mode projection.
    pub w_o: Array2<f64>,
    /// One row per output-vocabulary token.
    pub out_vecs: Array2<f64>,
    /// Copy-mode projection, `d_q x d_q`.
    pub w_c: Array2<f64>,
}

impl PolicyParams {
    pub fn init(d_e: usize, d_q: usize, n_out: usize, scale: f64, rng: &mut impl Rng) -> Self {
        assert!(d_q % 2 == 0, "d_q must be even (two encoder directions)");
        let h = d_q / 2;
        let mut mat = |r, c| Array2::from_shape_fn((r, c), |_| rng.gen_range(-scale..=scale));
        let w_att = mat(d_q, d_q);
        let w_o = mat(d_q, d_q);
        let out_vecs = mat(n_out, d_q);
        let w_c = mat(d_q, d_q);
        Self {
            enc_fwd: LstmParams::new(d_e, h, rng, scale),
            enc_bwd: LstmParams::new(d_e, h, rng, scale),
            dec: LstmParams::new(d_e + 2 * d_q, d_q, rng, scale),
            w_att,
            w_o,
            out_vecs,
            w_c,
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            enc_fwd: self.enc_fwd.zeros_like(),
            enc_bwd: self.enc_bwd.zeros_like(),
            dec: self.dec.zeros_like(),
            w_att: Array2::zeros(self.w_att.raw_dim()),
            w_o: Array2::zeros(self.w_o.raw_dim()),
            out_vecs: Array2::zeros(self.out_vecs.raw_dim()),
            w_c: Array2::zeros(self.w_c.raw_dim()),
        }
    }

    pub fn d_q(&self) -> usize {
        self.w_c.nrows()
    }

    /// Named flat views of every tensor, in a fixed order.
    pub fn tensors(&self) -> Vec<(&'static str, &[f64])> {
        fn flat1(a: &Array1<f64>) -> &[f64] {
            a.as_slice().expect("standard layout")
        }
        fn flat2(a: &Array2<f64>) -> &[f64] {
            a.as_slice().expect("standard layout")
        }
        vec![
            ("enc_fwd.w", flat2(&self.enc_fwd.w)),
            ("enc_fwd.b", flat1(&self.enc_fwd.b)),
            ("enc_bwd.w", flat2(&self.enc_bwd.w)),
            ("enc_bwd.b", flat1(&self.enc_bwd.b)),
            ("dec.w", flat2(&self.dec.w)),
            ("dec.b", flat1(&self.dec.b)),
            ("w_att", flat2(&self.w_att)),
            ("w_o", flat2(&self.w_o)),
            ("out_vecs", flat2(&self.out_vecs)),
            ("w_c", flat2(&self.w_c)),
        ]
    }

    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        fn flat1(a: &mut Array1<f64>) -> &mut [f64] {
            a.as_slice_mut().expect("standard layout")
        }
        fn flat2(a: &mut Array2<f64>) -> &mut [f64] {
            a.as_slice_mut().expect("standard layout")
        }
        vec![
            ("enc_fwd.w", flat2(&mut self.enc_fwd.w)),
            ("enc_fwd.b", flat1(&mut self.enc_fwd.b)),
            ("enc_bwd.w", flat2(&mut self.enc_bwd.w)),
            ("enc_bwd.b", flat1(&mut self.enc_bwd.b)),
            ("dec.w", flat2(&mut self.dec.w)),
            ("dec.b", flat1(&mut self.dec.b)),
            ("w_att", flat2(&mut self.w_att)),
            ("w_o", flat2(&mut self.w_o)),
            ("out_vecs", flat2(&mut self.out_vecs)),
            ("w_c", flat2(&mut self.w_c)),
        ]
    }

    /// `self += scale * other`
    pub fn add_scaled(&mut self, other: &PolicyParams, scale: f64) {
        for ((_, dst), (_, src)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += scale * s;
            }
        }
    }

    pub fn norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|(_, t)| t.iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

/// First-order optimizer minimizing a loss from its gradient.
#[derive(Clone, Debug)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    clip_norm: Option<f64>,
    m: Option<PolicyParams>,
    v: Option<PolicyParams>,
    t: i32,
}

impl Optimizer {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    pub fn new(kind: OptimizerKind, lr: f64, clip_norm: Option<f64>) -> Self {
        Self {
            kind,
            lr,
            clip_norm,
            m: None,
            v: None,
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut PolicyParams, grad: &PolicyParams) {
        let mut scale = 1.0;
        if let Some(max) = self.clip_norm {
            let n = grad.norm();
            if n > max {
                scale = max / n;
            }
        }
        match self.kind {
            OptimizerKind::Sgd => params.add_scaled(grad, -self.lr * scale),
            OptimizerKind::Adam => {
                self.t += 1;
                let m = self.m.get_or_insert_with(|| grad.zeros_like());
                let v = self.v.get_or_insert_with(|| grad.zeros_like());
                let bc1 = 1.0 - Self::BETA1.powi(self.t);
                let bc2 = 1.0 - Self::BETA2.powi(self.t);
                let lr = self.lr;
                for (((_, p), (_, g)), ((_, m), (_, v))) in params
                    .tensors_mut()
                    .into_iter()
                    .zip(grad.tensors())
                    .zip(m.tensors_mut().into_iter().zip(v.tensors_mut()))
                {
                    for i in 0..p.len() {
                        let gi = g[i] * scale;
                        m[i] = Self::BETA1 * m[i] + (1.0 - Self::BETA1) * gi;
                        v[i] = Self::BETA2 * v[i] + (1.0 - Self::BETA2) * gi * gi;
                        let mh = m[i] / bc1;
                        let vh = v[i] / bc2;
                        p[i] -= lr * mh / (vh.sqrt() + Self::EPS);
                    }
                }
            }
        }
    }
}
