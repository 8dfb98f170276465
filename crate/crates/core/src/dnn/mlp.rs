//! Two-hidden-layer perceptron with 24 linear outputs.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{EpfError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
}

impl Activation {
    pub const ALL: [Activation; 3] = [Activation::Relu, Activation::Tanh, Activation::Sigmoid];

    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
        }
    }

    /// Derivative expressed through the pre-activation `z`.
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - z.tanh().powi(2),
            Activation::Sigmoid => {
                let s = 1.0 / (1.0 + (-z).exp());
                s * (1.0 - s)
            }
        }
    }
}

/// Variance-scaled initial weights, averaging fan-in and fan-out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Init {
    VarianceScaledUniform,
    VarianceScaledNormal,
}

impl Init {
    pub const ALL: [Init; 2] = [Init::VarianceScaledUniform, Init::VarianceScaledNormal];

    fn sample(self, rng: &mut impl Rng, fan_in: usize, fan_out: usize) -> f64 {
        let var = 2.0 / (fan_in + fan_out) as f64;
        match self {
            Init::VarianceScaledUniform => {
                let limit = (3.0 * var).sqrt();
                rng.random_range(-limit..limit)
            }
            Init::VarianceScaledNormal => var.sqrt() * rng.sample::<f64, _>(StandardNormal),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Keep flags (1 kept, 0 dropped) for both hidden layers, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMask {
    pub hidden1: DMatrix<f64>,
    pub hidden2: DMatrix<f64>,
}

impl DropoutMask {
    pub fn sample(rng: &mut impl Rng, batch: usize, n1: usize, n2: usize, rate: f64) -> Self {
        let mut keep = |r, c| DMatrix::from_fn(r, c, |_, _| if rng.random::<f64>() < rate { 0.0 } else { 1.0 });
        let hidden1 = keep(batch, n1);
        let hidden2 = keep(batch, n2);
        DropoutMask { hidden1, hidden2 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    /// Weight matrices stored output-by-input.
    pub w: [DMatrix<f64>; 3],
    pub b: [DVector<f64>; 3],
    pub activation: Activation,
    pub dropout: f64,
}

/// Serialized form of one dense layer; weights are row-major, output by input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub n_in: usize,
    pub n_out: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w: [DMatrix<f64>; 3],
    pub b: [DVector<f64>; 3],
}

impl Gradients {
    pub fn max_abs(&self) -> f64 {
        self.w
            .iter()
            .map(|m| m.amax())
            .chain(self.b.iter().map(|v| v.amax()))
            .fold(0.0, f64::max)
    }
}

struct Cache {
    z1: DMatrix<f64>,
    a1: DMatrix<f64>,
    z2: DMatrix<f64>,
    a2: DMatrix<f64>,
    out: DMatrix<f64>,
}

fn add_bias(m: &mut DMatrix<f64>, b: &DVector<f64>) {
    for (j, mut col) in m.column_iter_mut().enumerate() {
        col.add_scalar_mut(b[j]);
    }
}

impl Mlp {
    pub fn zeros(n_in: usize, n1: usize, n2: usize, n_out: usize, activation: Activation, dropout: f64) -> Self {
        Mlp {
            w: [DMatrix::zeros(n1, n_in), DMatrix::zeros(n2, n1), DMatrix::zeros(n_out, n2)],
            b: [DVector::zeros(n1), DVector::zeros(n2), DVector::zeros(n_out)],
            activation,
            dropout,
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn init(
        rng: &mut impl Rng,
        n_in: usize,
        n1: usize,
        n2: usize,
        n_out: usize,
        activation: Activation,
        init: Init,
        dropout: f64,
    ) -> Self {
        let mut net = Mlp::zeros(n_in, n1, n2, n_out, activation, dropout);
        for w in &mut net.w {
            let (fan_out, fan_in) = w.shape();
            for v in w.iter_mut() {
                *v = init.sample(rng, fan_in, fan_out);
            }
        }
        net
    }

    pub fn n_in(&self) -> usize {
        self.w[0].ncols()
    }

    pub fn widths(&self) -> (usize, usize) {
        (self.w[0].nrows(), self.w[1].nrows())
    }

    pub fn n_out(&self) -> usize {
        self.w[2].nrows()
    }

    pub fn n_params(&self) -> usize {
        self.w.iter().map(|m| m.len()).sum::<usize>() + self.b.iter().map(|v| v.len()).sum::<usize>()
    }

    fn check_input(&self, x: &DMatrix<f64>) -> Result<()> {
        if x.ncols() != self.n_in() {
            return Err(EpfError::Shape(format!(
                "network expects {} inputs, got {}",
                self.n_in(),
                x.ncols()
            )));
        }
        Ok(())
    }

    fn check_mask(&self, batch: usize, mask: &DropoutMask) -> Result<()> {
        let (n1, n2) = self.widths();
        if mask.hidden1.shape() != (batch, n1) || mask.hidden2.shape() != (batch, n2) {
            return Err(EpfError::Shape(format!(
                "dropout mask shapes {:?}/{:?} do not match batch {batch} and widths {n1}/{n2}",
                mask.hidden1.shape(),
                mask.hidden2.shape()
            )));
        }
        Ok(())
    }

    /// Inverted dropout: kept units are scaled by 1/(1 − rate) in training so
    /// evaluation needs no rescaling.
    fn run(&self, x: &DMatrix<f64>, mask: Option<&DropoutMask>) -> Cache {
        let act = self.activation;
        let keep_scale = if self.dropout < 1.0 { 1.0 / (1.0 - self.dropout) } else { 0.0 };
        let mut z1 = x * self.w[0].transpose();
        add_bias(&mut z1, &self.b[0]);
        let mut a1 = z1.map(|z| act.apply(z));
        if let Some(m) = mask {
            a1.component_mul_assign(&m.hidden1);
            a1 *= keep_scale;
        }
        let mut z2 = &a1 * self.w[1].transpose();
        add_bias(&mut z2, &self.b[1]);
        let mut a2 = z2.map(|z| act.apply(z));
        if let Some(m) = mask {
            a2.component_mul_assign(&m.hidden2);
            a2 *= keep_scale;
        }
        let mut out = &a2 * self.w[2].transpose();
        add_bias(&mut out, &self.b[2]);
        Cache { z1, a1, z2, a2, out }
    }

    /// Batch forward pass, one sample per row.
    pub fn forward_batch(&self, x: &DMatrix<f64>, mode: Mode, mask: Option<&DropoutMask>) -> Result<DMatrix<f64>> {
        self.check_input(x)?;
        let mask = match mode {
            Mode::Eval => None,
            Mode::Train => {
                let m = mask.ok_or_else(|| EpfError::config("dropout_mask", "training mode needs a mask"))?;
                self.check_mask(x.nrows(), m)?;
                Some(m)
            }
        };
        Ok(self.run(x, mask).out)
    }

    /// Mean squared error over all samples and outputs, with its exact gradient.
    pub fn loss_and_gradient(
        &self,
        x: &DMatrix<f64>,
        y: &DMatrix<f64>,
        mask: Option<&DropoutMask>,
    ) -> Result<(f64, Gradients)> {
        self.check_input(x)?;
        if x.nrows() == 0 || y.shape() != (x.nrows(), self.n_out()) {
            return Err(EpfError::Shape(format!(
                "batch of {} inputs with targets {:?}",
                x.nrows(),
                y.shape()
            )));
        }
        if let Some(m) = mask {
            self.check_mask(x.nrows(), m)?;
        }
        let act = self.activation;
        let keep_scale = if self.dropout < 1.0 { 1.0 / (1.0 - self.dropout) } else { 0.0 };
        let c = self.run(x, mask);
        let diff = &c.out - y;
        let count = diff.len() as f64;
        let loss = diff.norm_squared() / count;

        let d3 = diff * (2.0 / count);
        let gw3 = d3.tr_mul(&c.a2);
        let gb3 = d3.row_sum().transpose();
        let mut d2 = &d3 * &self.w[2];
        if let Some(m) = mask {
            d2.component_mul_assign(&m.hidden2);
            d2 *= keep_scale;
        }
        d2.zip_apply(&c.z2, |g, z| *g *= act.derivative(z));
        let gw2 = d2.tr_mul(&c.a1);
        let gb2 = d2.row_sum().transpose();
        let mut d1 = &d2 * &self.w[1];
        if let Some(m) = mask {
            d1.component_mul_assign(&m.hidden1);
            d1 *= keep_scale;
        }
        d1.zip_apply(&c.z1, |g, z| *g *= act.derivative(z));
        let gw1 = d1.tr_mul(x);
        let gb1 = d1.row_sum().transpose();
        Ok((
            loss,
            Gradients {
                w: [gw1, gw2, gw3],
                b: [gb1, gb2, gb3],
            },
        ))
    }

    /// All parameters as one flat vector: W1, b1, W2, b2, W3, b3 (column-major).
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for k in 0..3 {
            out.extend_from_slice(self.w[k].as_slice());
            out.extend_from_slice(self.b[k].as_slice());
        }
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        let mut i = 0;
        for k in 0..3 {
            let n = self.w[k].len();
            self.w[k].as_mut_slice().copy_from_slice(&flat[i..i + n]);
            i += n;
            let n = self.b[k].len();
            self.b[k].as_mut_slice().copy_from_slice(&flat[i..i + n]);
            i += n;
        }
    }

    pub fn to_layers(&self) -> Vec<LayerParams> {
        (0..3)
            .map(|k| {
                let w = &self.w[k];
                LayerParams {
                    n_in: w.ncols(),
                    n_out: w.nrows(),
                    weights: w.transpose().as_slice().to_vec(),
                    bias: self.b[k].as_slice().to_vec(),
                }
            })
            .collect()
    }

    pub fn from_layers(layers: &[LayerParams], activation: Activation, dropout: f64) -> Result<Self> {
        if layers.len() != 3 {
            return Err(EpfError::Shape(format!("expected 3 layers, found {}", layers.len())));
        }
        for (k, l) in layers.iter().enumerate() {
            if l.weights.len() != l.n_in * l.n_out || l.bias.len() != l.n_out {
                return Err(EpfError::Shape(format!("layer {k} sizes are inconsistent")));
            }
            if k > 0 && l.n_in != layers[k - 1].n_out {
                return Err(EpfError::Shape(format!("layer {k} does not chain to layer {}", k - 1)));
            }
        }
        let mat = |l: &LayerParams| DMatrix::from_row_slice(l.n_out, l.n_in, &l.weights);
        let vec = |l: &LayerParams| DVector::from_column_slice(&l.bias);
        Ok(Mlp {
            w: [mat(&layers[0]), mat(&layers[1]), mat(&layers[2])],
            b: [vec(&layers[0]), vec(&layers[1]), vec(&layers[2])],
            activation,
            dropout,
        })
    }
}

/// Adam with the usual betas (0.9, 0.999).
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(lr: f64, n: usize) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, net: &mut Mlp, grads: &Gradients) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        let mut i = 0;
        for k in 0..3 {
            for (p, g) in net.w[k].iter_mut().zip(grads.w[k].iter()) {
                *p -= self.update(i, *g, c1, c2);
                i += 1;
            }
            for (p, g) in net.b[k].iter_mut().zip(grads.b[k].iter()) {
                *p -= self.update(i, *g, c1, c2);
                i += 1;
            }
        }
    }

    fn update(&mut self, i: usize, g: f64, c1: f64, c2: f64) -> f64 {
        self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
        self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
        self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + self.eps)
    }
}
