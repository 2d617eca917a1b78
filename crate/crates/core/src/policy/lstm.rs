//! LSTM cell with an explicit backward pass.
//!
//! ```text
//! z = W [x; h_prev] + b          (gate blocks i, f, g, o)
//! i = sigmoid(z_i)  f = sigmoid(z_f)  g = tanh(z_g)  o = sigmoid(z_o)
//! c = f * c_prev + i * g
//! h = o * tanh(c)
//! ```

use ndarray::{concatenate, s, Array1, Array2, ArrayView1, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LstmParams {
    /// `4h x (input + h)`
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl LstmParams {
    pub fn new(input: usize, hidden: usize, rng: &mut impl Rng, scale: f64) -> Self {
        Self {
            w: Array2::from_shape_fn((4 * hidden, input + hidden), |_| {
                rng.gen_range(-scale..=scale)
            }),
            b: Array1::from_shape_fn(4 * hidden, |_| rng.gen_range(-scale..=scale)),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            w: Array2::zeros(self.w.raw_dim()),
            b: Array1::zeros(self.b.raw_dim()),
        }
    }

    pub fn hidden(&self) -> usize {
        self.b.len() / 4
    }

    pub fn input(&self) -> usize {
        self.w.ncols() - self.hidden()
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Clone, Debug)]
pub struct LstmCache {
    xh: Array1<f64>,
    c_prev: Array1<f64>,
    i: Array1<f64>,
    f: Array1<f64>,
    g: Array1<f64>,
    o: Array1<f64>,
    tanh_c: Array1<f64>,
    pub h: Array1<f64>,
    pub c: Array1<f64>,
}

pub fn forward(
    p: &LstmParams,
    x: ArrayView1<f64>,
    h_prev: ArrayView1<f64>,
    c_prev: ArrayView1<f64>,
) -> LstmCache {
    let n = p.hidden();
    let xh = concatenate(Axis(0), &[x, h_prev]).expect("1-d concat");
    let z = p.w.dot(&xh) + &p.b;
    let i = z.slice(s![0..n]).mapv(sigmoid);
    let f = z.slice(s![n..2 * n]).mapv(sigmoid);
    let g = z.slice(s![2 * n..3 * n]).mapv(f64::tanh);
    let o = z.slice(s![3 * n..4 * n]).mapv(sigmoid);
    let c = &f * &c_prev + &i * &g;
    let tanh_c = c.mapv(f64::tanh);
    let h = &o * &tanh_c;
    LstmCache {
        xh,
        c_prev: c_prev.to_owned(),
        i,
        f,
        g,
        o,
        tanh_c,
        h,
        c,
    }
}

/// Gradients flowing out of one cell application.
pub struct LstmBack {
    pub dx: Array1<f64>,
    pub dh_prev: Array1<f64>,
    pub dc_prev: Array1<f64>,
}

/// Accumulates parameter gradients into `grad` and returns input gradients.
pub fn backward(
    p: &LstmParams,
    cache: &LstmCache,
    dh: &Array1<f64>,
    dc: &Array1<f64>,
    grad: &mut LstmParams,
) -> LstmBack {
    let n = p.hidden();
    let d_o = dh * &cache.tanh_c;
    let dc = dc + &(dh * &cache.o * &cache.tanh_c.mapv(|t| 1.0 - t * t));
    let d_i = &dc * &cache.g;
    let d_g = &dc * &cache.i;
    let d_f = &dc * &cache.c_prev;
    let dc_prev = &dc * &cache.f;

    let mut dz = Array1::zeros(4 * n);
    dz.slice_mut(s![0..n])
        .assign(&(&d_i * &cache.i.mapv(|v| v * (1.0 - v))));
    dz.slice_mut(s![n..2 * n])
        .assign(&(&d_f * &cache.f.mapv(|v| v * (1.0 - v))));
    dz.slice_mut(s![2 * n..3 * n])
        .assign(&(&d_g * &cache.g.mapv(|v| 1.0 - v * v)));
    dz.slice_mut(s![3 * n..4 * n])
        .assign(&(&d_o * &cache.o.mapv(|v| v * (1.0 - v))));

    outer_add(&mut grad.w, &dz, &cache.xh);
    grad.b += &dz;
    let dxh = p.w.t().dot(&dz);
    let input = p.input();
    LstmBack {
        dx: dxh.slice(s![0..input]).to_owned(),
        dh_prev: dxh.slice(s![input..]).to_owned(),
        dc_prev,
    }
}

/// `m += a b^T`
pub fn outer_add(m: &mut Array2<f64>, a: &Array1<f64>, b: &Array1<f64>) {
    for (mut row, &ai) in m.outer_iter_mut().zip(a.iter()) {
        if ai != 0.0 {
            row.scaled_add(ai, b);
        }
    }
}
