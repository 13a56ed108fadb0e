//! Multilayer perceptron base learner.
//!
//! Hidden layers use the logistic sigmoid, the output layer is affine. The
//! network exposes the three pieces an ensemble trainer needs: a forward pass
//! that records activations, a backward pass driven by an externally supplied
//! output-space gradient, and a plain SGD update.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::seeds;

pub const MLP_FORMAT: &str = "sea-mlp/1";

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// One affine map, `weights` is `fan_out x fan_in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn new(weights: Matrix, bias: Vec<f64>) -> Result<Self> {
        if weights.rows() != bias.len() {
            return Err(Error::dim(format!(
                "{} weight rows but {} biases",
                weights.rows(),
                bias.len()
            )));
        }
        if weights.rows() == 0 || weights.cols() == 0 {
            return Err(Error::dim("layer widths must be >= 1"));
        }
        Ok(Layer { weights, bias })
    }

    pub fn fan_in(&self) -> usize {
        self.weights.cols()
    }

    pub fn fan_out(&self) -> usize {
        self.weights.rows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Layer>,
}

/// Activation cache of one forward pass.
///
/// `pre[l]` is the affine output of layer `l`; `post[0]` is the input and
/// `post[l + 1]` the activation after layer `l` (equal to `pre[l]` for the
/// output layer).
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub pre: Vec<Vec<f64>>,
    pub post: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.post.last().expect("trace has at least the input")
    }
}

/// Parameter gradients, shape-congruent with the network they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGradients {
    pub layers: Vec<Layer>,
}

impl MlpGradients {
    pub fn zeros_like(m: &Mlp) -> Self {
        MlpGradients {
            layers: m
                .layers
                .iter()
                .map(|l| Layer {
                    weights: Matrix::zeros(l.fan_out(), l.fan_in()),
                    bias: vec![0.0; l.fan_out()],
                })
                .collect(),
        }
    }

    pub fn scale(&mut self, s: f64) {
        for l in &mut self.layers {
            l.weights.as_mut_slice().iter_mut().for_each(|v| *v *= s);
            l.bias.iter_mut().for_each(|v| *v *= s);
        }
    }

    pub fn fill_zero(&mut self) {
        self.scale(0.0);
    }

    /// Flattened view in the same order as [`Mlp::params`].
    pub fn flat(&self) -> Vec<f64> {
        flatten(&self.layers)
    }

    fn congruent(&self, m: &Mlp) -> bool {
        self.layers.len() == m.layers.len()
            && self.layers.iter().zip(&m.layers).all(|(g, l)| {
                g.weights.shape() == l.weights.shape() && g.bias.len() == l.bias.len()
            })
    }
}

fn flatten(layers: &[Layer]) -> Vec<f64> {
    let mut out = Vec::new();
    for l in layers {
        out.extend_from_slice(l.weights.as_slice());
        out.extend_from_slice(&l.bias);
    }
    out
}

impl Mlp {
    /// Glorot-uniform weights, zero biases. `hidden` may be empty, giving a
    /// single affine layer.
    pub fn new(d_in: usize, hidden: &[usize], d_out: usize, seed: u64) -> Result<Self> {
        let mut widths = Vec::with_capacity(hidden.len() + 2);
        widths.push(d_in);
        widths.extend_from_slice(hidden);
        widths.push(d_out);
        if widths.contains(&0) {
            return Err(Error::invalid(format!(
                "layer widths must be >= 1, got {widths:?}"
            )));
        }
        let mut rng = seeds::rng(seed);
        let layers = widths
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let data = (0..fan_in * fan_out)
                    .map(|_| rng.random_range(-limit..=limit))
                    .collect();
                Layer {
                    weights: Matrix::from_vec(fan_out, fan_in, data).expect("sized"),
                    bias: vec![0.0; fan_out],
                }
            })
            .collect();
        Ok(Mlp { layers })
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("an MLP needs at least one layer"));
        }
        for (i, w) in layers.windows(2).enumerate() {
            if w[0].fan_out() != w[1].fan_in() {
                return Err(Error::dim(format!(
                    "layer {i} outputs {} values but layer {} expects {}",
                    w[0].fan_out(),
                    i + 1,
                    w[1].fan_in()
                )));
            }
        }
        let m = Mlp { layers };
        if !m.params().iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("parameters must be finite"));
        }
        Ok(m)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn d_in(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn d_out(&self) -> usize {
        self.layers.last().expect("non-empty").fan_out()
    }

    pub fn n_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.fan_out() * (l.fan_in() + 1))
            .sum()
    }

    /// All parameters, layer by layer: weights row-major, then biases.
    pub fn params(&self) -> Vec<f64> {
        flatten(&self.layers)
    }

    pub fn set_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.n_params() {
            return Err(Error::dim(format!(
                "{} parameters supplied, network has {}",
                flat.len(),
                self.n_params()
            )));
        }
        let mut it = flat.iter().copied();
        for l in &mut self.layers {
            for v in l.weights.as_mut_slice() {
                *v = it.next().expect("sized");
            }
            for v in &mut l.bias {
                *v = it.next().expect("sized");
            }
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, Trace)> {
        if x.len() != self.d_in() {
            return Err(Error::dim(format!(
                "input has {} values, network expects {}",
                x.len(),
                self.d_in()
            )));
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("non-finite input"));
        }
        let trace = self.trace(x);
        Ok((trace.output().to_vec(), trace))
    }

    /// Forward pass without input validation; `x.len()` must equal `d_in`.
    pub fn trace(&self, x: &[f64]) -> Trace {
        let last = self.layers.len() - 1;
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post = Vec::with_capacity(self.layers.len() + 1);
        post.push(x.to_vec());
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = vec![0.0; layer.fan_out()];
            layer.weights.matvec_into(&post[l], &mut z);
            z.iter_mut().zip(&layer.bias).for_each(|(v, b)| *v += b);
            let a = if l == last {
                z.clone()
            } else {
                z.iter().map(|&v| sigmoid(v)).collect()
            };
            pre.push(z);
            post.push(a);
        }
        Trace { pre, post }
    }

    /// Output only; `x.len()` must equal `d_in`.
    pub fn predict(&self, x: &[f64]) -> Vec<f64> {
        let last = self.layers.len() - 1;
        let mut a = x.to_vec();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = vec![0.0; layer.fan_out()];
            layer.weights.matvec_into(&a, &mut z);
            z.iter_mut().zip(&layer.bias).for_each(|(v, b)| *v += b);
            if l != last {
                z.iter_mut().for_each(|v| *v = sigmoid(*v));
            }
            a = z;
        }
        a
    }

    /// Gradient of a loss with `dloss/dy = delta_out` w.r.t. every parameter.
    pub fn backward(&self, trace: &Trace, delta_out: &[f64]) -> Result<MlpGradients> {
        let mut g = MlpGradients::zeros_like(self);
        self.backward_accumulate(trace, delta_out, &mut g)?;
        Ok(g)
    }

    /// Adds this sample's parameter gradient into `acc`.
    pub fn backward_accumulate(
        &self,
        trace: &Trace,
        delta_out: &[f64],
        acc: &mut MlpGradients,
    ) -> Result<()> {
        let n = self.layers.len();
        let shapes_ok = trace.pre.len() == n
            && trace.post.len() == n + 1
            && trace.post[0].len() == self.d_in()
            && self
                .layers
                .iter()
                .zip(&trace.pre)
                .all(|(l, z)| z.len() == l.fan_out());
        if !shapes_ok {
            return Err(Error::dim("trace does not match the network"));
        }
        if delta_out.len() != self.d_out() {
            return Err(Error::dim(format!(
                "output gradient has {} values, network emits {}",
                delta_out.len(),
                self.d_out()
            )));
        }
        if !acc.congruent(self) {
            return Err(Error::dim("gradient buffer does not match the network"));
        }

        let mut delta = delta_out.to_vec();
        for l in (0..n).rev() {
            let layer = &self.layers[l];
            let input = &trace.post[l];
            let g = &mut acc.layers[l];
            for (r, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                g.bias[r] += d;
                for (gw, &a) in g.weights.row_mut(r).iter_mut().zip(input) {
                    *gw += d * a;
                }
            }
            if l == 0 {
                break;
            }
            // delta for the previous (sigmoid) layer
            let mut prev = vec![0.0; layer.fan_in()];
            for (r, &d) in delta.iter().enumerate() {
                for (p, &w) in prev.iter_mut().zip(layer.weights.row(r)) {
                    *p += w * d;
                }
            }
            for (p, &a) in prev.iter_mut().zip(input) {
                *p *= a * (1.0 - a);
            }
            delta = prev;
        }
        Ok(())
    }

    /// `theta -= alpha * g`. Leaves the network untouched and reports
    /// divergence if any updated parameter would be non-finite.
    pub fn sgd_step(&mut self, g: &MlpGradients, alpha: f64) -> Result<()> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::invalid(format!(
                "learning rate must be > 0, got {alpha}"
            )));
        }
        if !g.congruent(self) {
            return Err(Error::dim("gradients do not match the network"));
        }
        let finite = self.layers.iter().zip(&g.layers).all(|(l, gl)| {
            l.weights
                .as_slice()
                .iter()
                .zip(gl.weights.as_slice())
                .chain(l.bias.iter().zip(&gl.bias))
                .all(|(p, d)| (p - alpha * d).is_finite())
        });
        if !finite {
            return Err(Error::Diverged {
                epoch: 0,
                learner: 0,
            });
        }
        for (l, gl) in self.layers.iter_mut().zip(&g.layers) {
            for (p, d) in l
                .weights
                .as_mut_slice()
                .iter_mut()
                .zip(gl.weights.as_slice())
            {
                *p -= alpha * d;
            }
            for (p, d) in l.bias.iter_mut().zip(&gl.bias) {
                *p -= alpha * d;
            }
        }
        Ok(())
    }

    pub fn to_checkpoint(&self) -> MlpCheckpoint {
        MlpCheckpoint {
            format: MLP_FORMAT.to_string(),
            layers: self
                .layers
                .iter()
                .map(|l| LayerCheckpoint {
                    rows: l.fan_out(),
                    cols: l.fan_in(),
                    weights: l.weights.as_slice().to_vec(),
                    bias: l.bias.clone(),
                })
                .collect(),
        }
    }

    pub fn from_checkpoint(c: &MlpCheckpoint) -> Result<Self> {
        if c.format != MLP_FORMAT {
            return Err(Error::invalid(format!(
                "unsupported checkpoint format `{}` (expected `{MLP_FORMAT}`)",
                c.format
            )));
        }
        let layers = c
            .layers
            .iter()
            .map(|l| {
                Layer::new(
                    Matrix::from_vec(l.rows, l.cols, l.weights.clone())?,
                    l.bias.clone(),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Mlp::from_layers(layers)
    }
}

/// Flat JSON form of an [`Mlp`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpCheckpoint {
    pub format: String,
    pub layers: Vec<LayerCheckpoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerCheckpoint {
    pub rows: usize,
    pub cols: usize,
    /// Row-major, `rows x cols`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear(w: f64, b: f64) -> Mlp {
        Mlp::from_layers(vec![Layer::new(
            Matrix::from_vec(1, 1, vec![w]).unwrap(),
            vec![b],
        )
        .unwrap()])
        .unwrap()
    }

    #[test]
    fn init_shapes() {
        let m = Mlp::new(2, &[10, 10], 1, 0).unwrap();
        let shapes: Vec<_> = m.layers().iter().map(|l| l.weights.shape()).collect();
        assert_eq!(shapes, vec![(10, 2), (10, 10), (1, 10)]);
        assert!(m.layers().iter().all(|l| l.bias.iter().all(|&b| b == 0.0)));
        let lim = (6.0f64 / 12.0).sqrt();
        assert!(m.layers()[0]
            .weights
            .as_slice()
            .iter()
            .all(|w| w.abs() <= lim));
    }

    #[test]
    fn init_is_deterministic() {
        assert_eq!(
            Mlp::new(3, &[4], 2, 42).unwrap(),
            Mlp::new(3, &[4], 2, 42).unwrap()
        );
        assert_ne!(
            Mlp::new(3, &[4], 2, 42).unwrap(),
            Mlp::new(3, &[4], 2, 43).unwrap()
        );
    }

    #[test]
    fn degenerate_and_zero_widths() {
        let m = Mlp::new(3, &[], 2, 0).unwrap();
        assert_eq!(m.layers().len(), 1);
        assert_eq!(m.layers()[0].weights.shape(), (2, 3));
        assert!(Mlp::new(0, &[3], 1, 0).is_err());
        assert!(Mlp::new(2, &[3, 0], 1, 0).is_err());
    }

    #[test]
    fn affine_forward() {
        let (y, _) = linear(2.0, 1.0).forward(&[3.0]).unwrap();
        assert_eq!(y, vec![7.0]);
    }

    #[test]
    fn zero_network_outputs_zero() {
        let mut m = Mlp::new(3, &[4, 4], 2, 5).unwrap();
        let zeros = vec![0.0; m.n_params()];
        m.set_params(&zeros).unwrap();
        let (y, _) = m.forward(&[1.0, -2.0, 0.5]).unwrap();
        assert_eq!(y, vec![0.0, 0.0]);
    }

    #[test]
    fn one_hidden_unit_at_half() {
        let m = Mlp::from_layers(vec![
            Layer::new(Matrix::from_vec(1, 1, vec![0.0]).unwrap(), vec![0.0]).unwrap(),
            Layer::new(Matrix::from_vec(1, 1, vec![2.0]).unwrap(), vec![0.0]).unwrap(),
        ])
        .unwrap();
        for x in [-3.0, 0.0, 10.0] {
            assert_eq!(m.forward(&[x]).unwrap().0, vec![1.0]);
        }
    }

    #[test]
    fn forward_rejects_bad_input() {
        let m = Mlp::new(2, &[3], 1, 0).unwrap();
        assert!(m.forward(&[f64::NAN, 0.0]).is_err());
        assert!(m.forward(&[1.0]).is_err());
    }

    #[test]
    fn predict_matches_forward() {
        let m = Mlp::new(3, &[5, 4], 2, 8).unwrap();
        let x = [0.3, -0.7, 1.1];
        assert_eq!(m.predict(&x), m.forward(&x).unwrap().0);
    }

    #[test]
    fn backward_linear_by_hand() {
        let m = linear(0.7, -0.2);
        let (_, tr) = m.forward(&[3.0]).unwrap();
        let g = m.backward(&tr, &[2.0]).unwrap();
        assert_eq!(g.layers[0].weights.as_slice(), &[6.0]);
        assert_eq!(g.layers[0].bias, vec![2.0]);
    }

    #[test]
    fn backward_zero_delta_is_zero() {
        let m = Mlp::new(3, &[4, 4], 2, 1).unwrap();
        let (_, tr) = m.forward(&[0.1, 0.2, 0.3]).unwrap();
        let g = m.backward(&tr, &[0.0, 0.0]).unwrap();
        assert!(g.flat().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_rejects_mismatched_trace() {
        let a = Mlp::new(3, &[4], 1, 1).unwrap();
        let b = Mlp::new(3, &[5], 1, 1).unwrap();
        let (_, tr) = b.forward(&[0.0; 3]).unwrap();
        assert!(a.backward(&tr, &[1.0]).is_err());
        let (_, tr) = a.forward(&[0.0; 3]).unwrap();
        assert!(a.backward(&tr, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn backward_matches_half_square_loss_differences() {
        let m = Mlp::new(3, &[5, 4], 2, 77).unwrap();
        let x = [0.4, -1.3, 0.9];
        let (y, tr) = m.forward(&x).unwrap();
        let g = m.backward(&tr, &y).unwrap().flat();
        let theta = m.params();
        let h = 1e-6;
        let loss = |p: &[f64]| {
            let mut n = m.clone();
            n.set_params(p).unwrap();
            0.5 * n.predict(&x).iter().map(|v| v * v).sum::<f64>()
        };
        for i in 0..theta.len() {
            let mut plus = theta.clone();
            plus[i] += h;
            let mut minus = theta.clone();
            minus[i] -= h;
            let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
            let rel = (fd - g[i]).abs() / fd.abs().max(g[i].abs()).max(1e-8);
            assert!(rel < 1e-6, "param {i}: analytic {} vs fd {fd}", g[i]);
        }
    }

    #[test]
    fn sgd_arithmetic() {
        let mut m = linear(1.0, 1.0);
        let mut g = MlpGradients::zeros_like(&m);
        g.layers[0].weights.set(0, 0, 2.0);
        g.layers[0].bias[0] = 2.0;
        m.sgd_step(&g, 0.1).unwrap();
        assert!((m.layers()[0].weights.get(0, 0) - 0.8).abs() < 1e-15);
        assert!((m.layers()[0].bias[0] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn sgd_zero_gradient_is_fixed_point() {
        let mut m = Mlp::new(2, &[3], 1, 3).unwrap();
        let before = m.clone();
        m.sgd_step(&MlpGradients::zeros_like(&before), 0.5).unwrap();
        assert_eq!(m, before);
    }

    #[test]
    fn sgd_rejects_bad_rate_and_divergence() {
        let mut m = linear(1.0, 0.0);
        let g = MlpGradients::zeros_like(&m);
        assert!(m.sgd_step(&g, 0.0).is_err());
        assert!(m.sgd_step(&g, -1.0).is_err());
        let mut g = MlpGradients::zeros_like(&m);
        g.layers[0].bias[0] = f64::MAX;
        let before = m.clone();
        assert!(matches!(m.sgd_step(&g, 4.0), Err(Error::Diverged { .. })));
        assert_eq!(m, before);
    }

    #[test]
    fn checkpoint_round_trip() {
        let m = Mlp::new(3, &[4, 2], 2, 9).unwrap();
        let json = serde_json::to_string(&m.to_checkpoint()).unwrap();
        let back: MlpCheckpoint = serde_json::from_str(&json).unwrap();
        assert_eq!(Mlp::from_checkpoint(&back).unwrap(), m);
        let mut bad = back.clone();
        bad.format = "other/9".into();
        assert!(Mlp::from_checkpoint(&bad).is_err());
        let mut bad = back;
        bad.layers[1].cols = 3;
        assert!(Mlp::from_checkpoint(&bad).is_err());
    }
}
