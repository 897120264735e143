//! Small ReLU perceptrons trained full-batch with Adam on two-class
//! cross-entropy.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpOptions {
    /// Hidden layer widths; the output layer (2 logits) is implicit.
    pub hidden: Vec<usize>,
    pub dropout: f64,
    pub epochs: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl MlpOptions {
    /// `d -> 256 ReLU -> 2`, 100 epochs at lr 1e-3.
    pub fn probe() -> Self {
        Self {
            hidden: vec![256],
            dropout: 0.0,
            epochs: 100,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// `d -> 512 -> 512 -> 2` with dropout 0.2.
    pub fn deep() -> Self {
        Self {
            hidden: vec![512, 512],
            dropout: 0.2,
            ..Self::probe()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    /// `out x in`.
    pub w: DMatrix<f64>,
    pub b: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Dense>,
    pub options: MlpOptions,
    pub seed: u64,
}

fn relu_inplace(m: &mut DMatrix<f64>) {
    m.iter_mut().for_each(|v| *v = v.max(0.0));
}

fn affine(x: &DMatrix<f64>, layer: &Dense) -> DMatrix<f64> {
    let mut z = x * layer.w.transpose();
    for mut row in z.row_iter_mut() {
        row += layer.b.transpose();
    }
    z
}

/// Row-wise two-class softmax; returns the class-1 probability per row.
fn class1_prob(logits: &DMatrix<f64>) -> Vec<f64> {
    logits
        .row_iter()
        .map(|r| crate::logistic::sigmoid(r[1] - r[0]))
        .collect()
}

impl Mlp {
    /// Uniform `(-1/sqrt(fan_in), 1/sqrt(fan_in))` init for weights and biases.
    pub fn init(d_in: usize, options: MlpOptions, seed: u64) -> Self {
        let mut rng = SplitMix64::keyed(seed, &[0x1417]);
        let mut widths = vec![d_in];
        widths.extend(&options.hidden);
        widths.push(2);
        let layers = widths
            .windows(2)
            .map(|w| {
                let bound = 1.0 / (w[0] as f64).sqrt();
                let mut u = || rng.random_range(-bound..bound);
                Dense {
                    w: DMatrix::from_fn(w[1], w[0], |_, _| u()),
                    b: DVector::from_fn(w[1], |_, _| u()),
                }
            })
            .collect();
        Self {
            layers,
            options,
            seed,
        }
    }

    pub fn logits(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut a = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            a = affine(&a, layer);
            if i + 1 < self.layers.len() {
                relu_inplace(&mut a);
            }
        }
        a
    }

    pub fn predict_proba(&self, x: &DMatrix<f64>) -> Vec<f64> {
        class1_prob(&self.logits(x))
    }

    /// Mean cross-entropy and its gradient per layer. With `dropout_rng`,
    /// inverted dropout is applied after every hidden ReLU.
    pub fn loss_and_gradients(
        &self,
        x: &DMatrix<f64>,
        y: &[bool],
        mut dropout_rng: Option<&mut SplitMix64>,
    ) -> (f64, Vec<(DMatrix<f64>, DVector<f64>)>) {
        let n = x.nrows() as f64;
        let last = self.layers.len() - 1;
        let keep = 1.0 - self.options.dropout;
        let mut inputs = vec![x.clone()];
        let mut masks: Vec<Option<DMatrix<f64>>> = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = affine(inputs.last().unwrap(), layer);
            if i < last {
                relu_inplace(&mut z);
                let mask = match dropout_rng.as_deref_mut() {
                    Some(rng) if self.options.dropout > 0.0 => Some(z.map(|_| {
                        if rng.random::<f64>() < keep {
                            1.0 / keep
                        } else {
                            0.0
                        }
                    })),
                    _ => None,
                };
                if let Some(m) = &mask {
                    z.component_mul_assign(m);
                }
                masks.push(mask);
            }
            inputs.push(z);
        }
        let out = inputs.pop().unwrap();
        let p1 = class1_prob(&out);
        let loss = p1
            .iter()
            .zip(y)
            .map(|(p, &t)| -(if t { *p } else { 1.0 - p }).max(1e-300).ln())
            .sum::<f64>()
            / n;
        let mut grad = DMatrix::from_fn(out.nrows(), 2, |r, c| {
            let t = f64::from(u8::from(y[r]));
            if c == 1 {
                (p1[r] - t) / n
            } else {
                (t - p1[r]) / n
            }
        });
        let mut grads = vec![(DMatrix::zeros(0, 0), DVector::zeros(0)); self.layers.len()];
        for i in (0..=last).rev() {
            let a_prev = &inputs[i];
            let gw = grad.transpose() * a_prev;
            let gb = DVector::from_iterator(grad.ncols(), grad.column_iter().map(|c| c.sum()));
            if i > 0 {
                let mut g_prev = &grad * &self.layers[i].w;
                // a_prev is post-ReLU (and post-dropout): zero where inactive.
                g_prev.zip_apply(a_prev, |g, a| {
                    if a <= 0.0 {
                        *g = 0.0;
                    }
                });
                if let Some(mask) = &masks[i - 1] {
                    g_prev.component_mul_assign(mask);
                }
                grad = g_prev;
            }
            grads[i] = (gw, gb);
        }
        (loss, grads)
    }

    /// Trains on `x` (already scaled) with labels `y` (true = class 1).
    pub fn fit(&mut self, x: &DMatrix<f64>, y: &[bool]) -> Result<()> {
        if x.nrows() != y.len() {
            return Err(Error::Shape(format!("{} rows but {} labels", x.nrows(), y.len())));
        }
        if y.iter().all(|&v| v) || y.iter().all(|&v| !v) {
            return Err(Error::DegenerateLabels("MLP needs both classes".into()));
        }
        let o = self.options.clone();
        let zeros = |l: &Dense| (l.w.map(|_| 0.0), l.b.map(|_| 0.0));
        let mut m: Vec<_> = self.layers.iter().map(zeros).collect();
        let mut v = m.clone();
        for epoch in 0..o.epochs {
            let mut rng = SplitMix64::keyed(self.seed, &[0xd809, epoch as u64]);
            let (_, grads) = self.loss_and_gradients(x, y, Some(&mut rng));
            let t = (epoch + 1) as i32;
            let c1 = 1.0 - o.beta1.powi(t);
            let c2 = 1.0 - o.beta2.powi(t);
            let step = |p: &mut f64, g: f64, mi: &mut f64, vi: &mut f64| {
                *mi = o.beta1 * *mi + (1.0 - o.beta1) * g;
                *vi = o.beta2 * *vi + (1.0 - o.beta2) * g * g;
                *p -= o.lr * (*mi / c1) / ((*vi / c2).sqrt() + o.eps);
            };
            for (((layer, (gw, gb)), (mw, mb)), (vw, vb)) in
                self.layers.iter_mut().zip(&grads).zip(&mut m).zip(&mut v)
            {
                for (((p, g), mi), vi) in layer.w.iter_mut().zip(gw.iter()).zip(mw.iter_mut()).zip(vw.iter_mut()) {
                    step(p, *g, mi, vi);
                }
                for (((p, g), mi), vi) in layer.b.iter_mut().zip(gb.iter()).zip(mb.iter_mut()).zip(vb.iter_mut()) {
                    step(p, *g, mi, vi);
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::StandardNormal;

    fn blobs(n: usize, d: usize, sep: f64, seed: u64) -> (DMatrix<f64>, Vec<bool>) {
        let mut rng = SplitMix64::new(seed);
        let y: Vec<bool> = (0..n).map(|i| i % 2 == 1).collect();
        let x = DMatrix::from_fn(n, d, |r, c| {
            let shift = if y[r] && c == 0 { sep } else { 0.0 };
            shift + rng.sample::<f64, _>(StandardNormal)
        });
        (x, y)
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (x, y) = blobs(12, 3, 2.0, 1);
        let net = Mlp::init(3, MlpOptions { hidden: vec![5, 4], ..MlpOptions::probe() }, 3);
        let (_, grads) = net.loss_and_gradients(&x, &y, None);
        let h = 1e-6;
        for li in 0..net.layers.len() {
            for k in 0..net.layers[li].w.len() {
                let mut up = net.clone();
                up.layers[li].w[k] += h;
                let mut down = net.clone();
                down.layers[li].w[k] -= h;
                let fd = (up.loss_and_gradients(&x, &y, None).0 - down.loss_and_gradients(&x, &y, None).0) / (2.0 * h);
                assert!((fd - grads[li].0[k]).abs() < 1e-6, "layer {li} w[{k}]: {fd} vs {}", grads[li].0[k]);
            }
            for k in 0..net.layers[li].b.len() {
                let mut up = net.clone();
                up.layers[li].b[k] += h;
                let mut down = net.clone();
                down.layers[li].b[k] -= h;
                let fd = (up.loss_and_gradients(&x, &y, None).0 - down.loss_and_gradients(&x, &y, None).0) / (2.0 * h);
                assert!((fd - grads[li].1[k]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn separable_blobs_are_learned_and_training_is_deterministic() {
        let (x, y) = blobs(200, 5, 6.0, 2);
        let mut a = Mlp::init(5, MlpOptions::probe(), 9);
        a.fit(&x, &y).unwrap();
        let acc = a
            .predict_proba(&x)
            .iter()
            .zip(&y)
            .filter(|(p, &t)| (**p > 0.5) == t)
            .count();
        assert!(acc >= 190, "{acc}");
        let mut b = Mlp::init(5, MlpOptions::probe(), 9);
        b.fit(&x, &y).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn deep_with_dropout_trains() {
        let (x, y) = blobs(100, 4, 6.0, 3);
        let mut net = Mlp::init(4, MlpOptions { hidden: vec![32, 32], ..MlpOptions::deep() }, 1);
        net.fit(&x, &y).unwrap();
        let acc = net.predict_proba(&x).iter().zip(&y).filter(|(p, &t)| (**p > 0.5) == t).count();
        assert!(acc >= 90, "{acc}");
    }

    #[test]
    fn single_class_rejected() {
        let mut net = Mlp::init(2, MlpOptions::probe(), 0);
        let x = DMatrix::zeros(3, 2);
        assert!(matches!(net.fit(&x, &[false; 3]), Err(Error::DegenerateLabels(_))));
    }
}
