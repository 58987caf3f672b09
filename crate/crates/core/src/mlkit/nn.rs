//! Single-hidden-layer logistic networks with several linear outputs.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_fit_input, Matrix};
use crate::error::{Error, Result};
use crate::rng::{self, stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NnParams {
    pub hidden: usize,
    /// L2 penalty on connection weights (biases are not penalized).
    pub weight_decay: f64,
    /// Full-batch Adam steps.
    pub epochs: usize,
    pub learning_rate: f64,
}

impl Default for NnParams {
    fn default() -> Self {
        Self {
            hidden: 8,
            weight_decay: 1e-3,
            epochs: 1000,
            learning_rate: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Net {
    w1: DMatrix<f64>,
    b1: DVector<f64>,
    w2: DMatrix<f64>,
    b2: DVector<f64>,
}

impl Net {
    fn len(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    fn flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.len());
        v.extend(self.w1.iter());
        v.extend(self.b1.iter());
        v.extend(self.w2.iter());
        v.extend(self.b2.iter());
        v
    }

    fn set_flat(&mut self, v: &[f64]) {
        let mut k = 0;
        for x in self.w1.iter_mut() {
            *x = v[k];
            k += 1;
        }
        for x in self.b1.iter_mut() {
            *x = v[k];
            k += 1;
        }
        for x in self.w2.iter_mut() {
            *x = v[k];
            k += 1;
        }
        for x in self.b2.iter_mut() {
            *x = v[k];
            k += 1;
        }
    }

    fn hidden(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut z = x * self.w1.transpose();
        for mut row in z.row_iter_mut() {
            for (v, b) in row.iter_mut().zip(self.b1.iter()) {
                *v = logistic(*v + b);
            }
        }
        z
    }

    fn output(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = a * self.w2.transpose();
        for mut row in out.row_iter_mut() {
            for (v, b) in row.iter_mut().zip(self.b2.iter()) {
                *v += b;
            }
        }
        out
    }

    /// Penalized loss and its gradient in flat layout.
    fn loss_grad(&self, x: &DMatrix<f64>, y: &DMatrix<f64>, w: &[f64], decay: f64) -> (f64, Vec<f64>) {
        let wsum: f64 = w.iter().sum();
        let a = self.hidden(x);
        let mut d_out = self.output(&a) - y;
        let mut loss = 0.0;
        for (m, mut row) in d_out.row_iter_mut().enumerate() {
            loss += w[m] * row.norm_squared();
            row *= 2.0 * w[m] / wsum;
        }
        loss /= wsum;
        loss += decay * (self.w1.norm_squared() + self.w2.norm_squared());
        let g_w2 = d_out.transpose() * &a + 2.0 * decay * &self.w2;
        let g_b2: Vec<f64> = d_out.column_iter().map(|c| c.sum()).collect();
        let mut d_hidden = &d_out * &self.w2;
        d_hidden.zip_apply(&a, |g, act| *g *= act * (1.0 - act));
        let g_w1 = d_hidden.transpose() * x + 2.0 * decay * &self.w1;
        let g_b1: Vec<f64> = d_hidden.column_iter().map(|c| c.sum()).collect();
        let mut grad = Vec::with_capacity(self.len());
        grad.extend(g_w1.iter());
        grad.extend(g_b1);
        grad.extend(g_w2.iter());
        grad.extend(g_b2);
        (loss, grad)
    }
}

/// Number of weights and biases of a network with `d` inputs, `hidden`
/// units and `q` outputs.
pub fn parameter_count(d: usize, hidden: usize, q: usize) -> usize {
    hidden * (d + 1) + q * (hidden + 1)
}

/// Penalized weighted squared-error objective and its analytic gradient for
/// the flat parameter vector `theta` (input weights, hidden biases, output
/// weights, output biases; matrices column-major), on raw inputs.
pub fn objective(x: &Matrix, y: &Matrix, w: &[f64], hidden: usize, weight_decay: f64, theta: &[f64]) -> (f64, Vec<f64>) {
    let (d, q) = (x.cols(), y.cols());
    assert_eq!(theta.len(), parameter_count(d, hidden, q), "parameter vector length");
    let mut net = Net {
        w1: DMatrix::zeros(hidden, d),
        b1: DVector::zeros(hidden),
        w2: DMatrix::zeros(q, hidden),
        b2: DVector::zeros(q),
    };
    net.set_flat(theta);
    let xm = DMatrix::from_row_slice(x.rows(), d, x.as_slice());
    let ym = DMatrix::from_row_slice(y.rows(), q, y.as_slice());
    net.loss_grad(&xm, &ym, w, weight_decay)
}

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// A trained network. Inputs and outputs are standardized internally with
/// weighted means and standard deviations.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuralFit {
    net: Net,
    in_mean: Vec<f64>,
    in_scale: Vec<f64>,
    out_mean: Vec<f64>,
    out_scale: Vec<f64>,
    /// Weighted mean squared error on the training data, original units,
    /// summed over outputs.
    pub training_loss: f64,
}

fn standardize(m: &Matrix, w: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let wsum: f64 = w.iter().sum();
    let mut mean = vec![0.0; m.cols()];
    let mut scale = vec![0.0; m.cols()];
    for (i, r) in m.iter_rows().enumerate() {
        for (a, v) in mean.iter_mut().zip(r) {
            *a += w[i] * v;
        }
    }
    mean.iter_mut().for_each(|a| *a /= wsum);
    for (i, r) in m.iter_rows().enumerate() {
        for ((s, v), mu) in scale.iter_mut().zip(r).zip(&mean) {
            *s += w[i] * (v - mu).powi(2);
        }
    }
    for s in scale.iter_mut() {
        *s = (*s / wsum).sqrt();
        if !(*s > 1e-12) {
            *s = 1.0;
        }
    }
    (mean, scale)
}

fn to_dmatrix(m: &Matrix, rows: &[usize], mean: &[f64], scale: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), m.cols(), |r, c| (m.get(rows[r], c) - mean[c]) / scale[c])
}

impl NeuralFit {
    /// Trains on rows with positive weight.
    pub fn fit(x: &Matrix, y: &Matrix, w: &[f64], params: &NnParams, seed: u64) -> Result<Self> {
        check_fit_input(x, y.rows(), Some(w))?;
        if params.hidden == 0 {
            return Err(Error::Config("network needs at least one hidden unit".into()));
        }
        let rows: Vec<usize> = (0..x.rows()).filter(|&i| w[i] > 0.0).collect();
        let wa: Vec<f64> = rows.iter().map(|&i| w[i]).collect();
        let (in_mean, in_scale) = standardize(&x.select_rows(&rows), &wa);
        let (out_mean, out_scale) = standardize(&y.select_rows(&rows), &wa);
        let xs = to_dmatrix(x, &rows, &in_mean, &in_scale);
        let ys = to_dmatrix(y, &rows, &out_mean, &out_scale);

        let (d, h, q) = (x.cols(), params.hidden, y.cols());
        let mut g = rng::rng_for(seed, &[stream::NN]);
        let init = |fan_in: usize| {
            let r = 0.7 / (fan_in.max(1) as f64).sqrt();
            move |g: &mut rng::SimRng| g.random_range(-r..=r)
        };
        let i1 = init(d);
        let i2 = init(h);
        let mut net = Net {
            w1: DMatrix::from_fn(h, d, |_, _| i1(&mut g)),
            b1: DVector::from_fn(h, |_, _| i1(&mut g)),
            w2: DMatrix::from_fn(q, h, |_, _| i2(&mut g)),
            b2: DVector::zeros(q),
        };

        let mut theta = net.flat();
        let mut m1 = vec![0.0; theta.len()];
        let mut m2 = vec![0.0; theta.len()];
        let (beta1, beta2, eps) = (0.9f64, 0.999f64, 1e-8);
        for t in 1..=params.epochs {
            let (loss, grad) = net.loss_grad(&xs, &ys, &wa, params.weight_decay);
            if !loss.is_finite() {
                return Err(Error::Training(format!("network loss diverged at step {t}")));
            }
            let c1 = 1.0 - beta1.powi(t as i32);
            let c2 = 1.0 - beta2.powi(t as i32);
            for k in 0..theta.len() {
                m1[k] = beta1 * m1[k] + (1.0 - beta1) * grad[k];
                m2[k] = beta2 * m2[k] + (1.0 - beta2) * grad[k] * grad[k];
                theta[k] -= params.learning_rate * (m1[k] / c1) / ((m2[k] / c2).sqrt() + eps);
            }
            net.set_flat(&theta);
        }
        let mut fit = Self {
            net,
            in_mean,
            in_scale,
            out_mean,
            out_scale,
            training_loss: 0.0,
        };
        let wsum: f64 = wa.iter().sum();
        let mut total = 0.0;
        for (&i, &wi) in rows.iter().zip(&wa) {
            let p = fit.predict(x.row(i));
            total += wi * p.iter().zip(y.row(i)).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        }
        fit.training_loss = total / wsum;
        if !fit.training_loss.is_finite() {
            return Err(Error::Training("network produced non-finite predictions".into()));
        }
        Ok(fit)
    }

    pub fn predict(&self, x: &[f64]) -> Vec<f64> {
        let xs = DMatrix::from_fn(1, x.len(), |_, c| (x[c] - self.in_mean[c]) / self.in_scale[c]);
        let out = self.net.output(&self.net.hidden(&xs));
        out.iter()
            .zip(self.out_mean.iter().zip(&self.out_scale))
            .map(|(v, (m, s))| m + s * v)
            .collect()
    }

    pub fn predict_rows(&self, x: &Matrix) -> Matrix {
        let all: Vec<usize> = (0..x.rows()).collect();
        let xs = to_dmatrix(x, &all, &self.in_mean, &self.in_scale);
        let out = self.net.output(&self.net.hidden(&xs));
        let q = out.ncols();
        let mut m = Matrix::zeros(x.rows(), q);
        for i in 0..x.rows() {
            for (k, v) in m.row_mut(i).iter_mut().enumerate() {
                *v = self.out_mean[k] + self.out_scale[k] * out[(i, k)];
            }
        }
        m
    }
}
