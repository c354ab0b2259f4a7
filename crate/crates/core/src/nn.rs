//! Dense feed-forward networks with hand-written backprop and Adam.
//!
//! Batches are row-major matrices, one sample per row. Everything is `f64`.

use rand::Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng::Stream;

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!("{} values for a {rows}x{cols} matrix", data.len())));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("ragged rows".into()));
        }
        Ok(Self { rows: rows.len(), cols, data: rows.concat() })
    }

    pub fn row_vector(v: &[f64]) -> Self {
        Self { rows: 1, cols: v.len(), data: v.to_vec() }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Concatenates the columns of `self` and `other`, row by row.
    pub fn hcat(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows {
            return Err(Error::Shape(format!("hcat of {} and {} rows", self.rows, other.rows)));
        }
        let mut data = Vec::with_capacity(self.rows * (self.cols + other.cols));
        for r in 0..self.rows {
            data.extend_from_slice(self.row(r));
            data.extend_from_slice(other.row(r));
        }
        Ok(Matrix { rows: self.rows, cols: self.cols + other.cols, data })
    }

    /// Columns `lo..hi` as a new matrix.
    pub fn columns(&self, lo: usize, hi: usize) -> Matrix {
        let mut data = Vec::with_capacity(self.rows * (hi - lo));
        for r in 0..self.rows {
            data.extend_from_slice(&self.row(r)[lo..hi]);
        }
        Matrix { rows: self.rows, cols: hi - lo, data }
    }

    pub fn scale(&mut self, k: f64) {
        self.data.iter_mut().for_each(|x| *x *= k);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Linear,
    Softmax,
}

impl Activation {
    fn tag(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Tanh => 1,
            Activation::Linear => 2,
            Activation::Softmax => 3,
        }
    }

    fn from_tag(t: u8) -> Result<Self> {
        Ok(match t {
            0 => Activation::Relu,
            1 => Activation::Tanh,
            2 => Activation::Linear,
            3 => Activation::Softmax,
            _ => return Err(Error::Format(format!("unknown activation tag {t}"))),
        })
    }
}

/// One dense layer: `y = act(W x + b)`, `W` stored `n_out x n_in` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub n_in: usize,
    pub n_out: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

/// Ordered layer stack. Parameter gradients use the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    layers: Vec<Layer>,
}

/// Intermediate values recorded by `forward` and consumed by `backward`.
#[derive(Debug, Clone)]
pub struct Tape {
    inputs: Vec<Matrix>,
    outputs: Vec<Matrix>,
}

impl Tape {
    pub fn output(&self) -> &Matrix {
        self.outputs.last().expect("tape of an empty network")
    }
}

impl ModelParams {
    /// Xavier-uniform weights and zero biases. `dims` lists layer widths from
    /// input to output; hidden layers use `hidden`, the last layer `output`.
    pub fn xavier(dims: &[usize], hidden: Activation, output: Activation, rng: &mut Stream) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::Shape(format!("bad layer widths {dims:?}")));
        }
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for (k, w) in dims.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let limit = (6.0 / (n_in + n_out) as f64).sqrt();
            let weights = (0..n_in * n_out).map(|_| rng.random_range(-limit..=limit)).collect();
            let activation = if k + 2 == dims.len() { output } else { hidden };
            layers.push(Layer { n_in, n_out, weights, bias: vec![0.0; n_out], activation });
        }
        Ok(Self { layers })
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Shape("network without layers".into()));
        }
        for (k, l) in layers.iter().enumerate() {
            if l.weights.len() != l.n_in * l.n_out || l.bias.len() != l.n_out {
                return Err(Error::Shape(format!("layer {k} storage does not match {}x{}", l.n_out, l.n_in)));
            }
            if k > 0 && layers[k - 1].n_out != l.n_in {
                return Err(Error::Shape(format!("layer {k} input {} != previous output {}", l.n_in, layers[k - 1].n_out)));
            }
            if l.activation == Activation::Softmax && k + 1 != layers.len() {
                return Err(Error::Shape("softmax is only allowed on the output layer".into()));
            }
        }
        Ok(Self { layers })
    }

    /// Same architecture with every parameter zero.
    pub fn zeros_like(&self) -> Self {
        let layers = self
            .layers
            .iter()
            .map(|l| Layer { weights: vec![0.0; l.weights.len()], bias: vec![0.0; l.n_out], ..l.clone() })
            .collect();
        Self { layers }
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].n_in
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().n_out
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn same_architecture(&self, other: &ModelParams) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.n_in == b.n_in && a.n_out == b.n_out && a.activation == b.activation)
    }

    fn check_same(&self, other: &ModelParams) -> Result<()> {
        if self.same_architecture(other) {
            Ok(())
        } else {
            Err(Error::Shape("architecture mismatch".into()))
        }
    }

    /// All parameters in storage order: per layer, weights then bias.
    pub fn flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            v.extend_from_slice(&l.weights);
            v.extend_from_slice(&l.bias);
        }
        v
    }

    pub fn get_flat(&self, mut idx: usize) -> f64 {
        for l in &self.layers {
            if idx < l.weights.len() {
                return l.weights[idx];
            }
            idx -= l.weights.len();
            if idx < l.bias.len() {
                return l.bias[idx];
            }
            idx -= l.bias.len();
        }
        panic!("parameter index out of range")
    }

    pub fn set_flat(&mut self, mut idx: usize, value: f64) {
        for l in &mut self.layers {
            if idx < l.weights.len() {
                l.weights[idx] = value;
                return;
            }
            idx -= l.weights.len();
            if idx < l.bias.len() {
                l.bias[idx] = value;
                return;
            }
            idx -= l.bias.len();
        }
        panic!("parameter index out of range")
    }

    fn zip_mut(&mut self, other: &ModelParams, mut f: impl FnMut(&mut f64, f64)) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights.iter_mut().zip(&b.weights).for_each(|(x, &y)| f(x, y));
            a.bias.iter_mut().zip(&b.bias).for_each(|(x, &y)| f(x, y));
        }
    }

    /// `self += k * other`, elementwise.
    pub fn add_scaled(&mut self, other: &ModelParams, k: f64) -> Result<()> {
        self.check_same(other)?;
        self.zip_mut(other, |x, y| *x += k * y);
        Ok(())
    }

    pub fn scale(&mut self, k: f64) {
        for l in &mut self.layers {
            l.weights.iter_mut().for_each(|x| *x *= k);
            l.bias.iter_mut().for_each(|x| *x *= k);
        }
    }

    pub fn forward(&self, input: &Matrix) -> Result<(Matrix, Tape)> {
        if input.cols != self.input_dim() {
            return Err(Error::Shape(format!("input width {} for a network expecting {}", input.cols, self.input_dim())));
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut outputs = Vec::with_capacity(self.layers.len());
        let mut x = input.clone();
        for l in &self.layers {
            let y = layer_forward(l, &x);
            inputs.push(x);
            x = y;
            outputs.push(x.clone());
        }
        Ok((x, Tape { inputs, outputs }))
    }

    /// Forward pass without recording a tape.
    pub fn predict(&self, input: &Matrix) -> Result<Matrix> {
        if input.cols != self.input_dim() {
            return Err(Error::Shape(format!("input width {} for a network expecting {}", input.cols, self.input_dim())));
        }
        let mut x = layer_forward(&self.layers[0], input);
        for l in &self.layers[1..] {
            x = layer_forward(l, &x);
        }
        Ok(x)
    }

    pub fn predict_one(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.predict(&Matrix::row_vector(x))?.into_data())
    }

    /// Gradients of a scalar loss `L` given `output_grad = dL/dY` for the
    /// taped batch. Returns parameter gradients and `dL/dX`.
    pub fn backward(&self, tape: &Tape, output_grad: &Matrix) -> Result<(ModelParams, Matrix)> {
        self.backward_impl(tape, output_grad, true).map(|(g, dx)| (g.unwrap(), dx))
    }

    /// Only `dL/dX`; skips the weight-gradient products.
    pub fn input_gradient(&self, tape: &Tape, output_grad: &Matrix) -> Result<Matrix> {
        self.backward_impl(tape, output_grad, false).map(|(_, dx)| dx)
    }

    fn backward_impl(&self, tape: &Tape, output_grad: &Matrix, want_params: bool) -> Result<(Option<ModelParams>, Matrix)> {
        if tape.inputs.len() != self.layers.len()
            || tape.inputs.iter().zip(&self.layers).any(|(x, l)| x.cols != l.n_in)
        {
            return Err(Error::Shape("tape was not recorded by this network".into()));
        }
        let out = tape.output();
        if output_grad.rows != out.rows || output_grad.cols != out.cols {
            return Err(Error::Shape(format!(
                "output gradient {}x{} for output {}x{}",
                output_grad.rows, output_grad.cols, out.rows, out.cols
            )));
        }
        let mut grads = want_params.then(|| self.zeros_like());
        let mut delta = output_grad.clone();
        for k in (0..self.layers.len()).rev() {
            let l = &self.layers[k];
            let y = &tape.outputs[k];
            activation_backward(l.activation, y, &mut delta);
            let x = &tape.inputs[k];
            if let Some(g) = grads.as_mut() {
                let gl = &mut g.layers[k];
                // dW = delta^T x
                unsafe {
                    matrixmultiply::dgemm(
                        l.n_out, delta.rows, l.n_in, 1.0,
                        delta.data.as_ptr(), 1, delta.cols as isize,
                        x.data.as_ptr(), x.cols as isize, 1,
                        0.0, gl.weights.as_mut_ptr(), l.n_in as isize, 1,
                    );
                }
                for r in 0..delta.rows {
                    for (b, d) in gl.bias.iter_mut().zip(delta.row(r)) {
                        *b += d;
                    }
                }
            }
            // dX = delta W
            let mut dx = Matrix::zeros(delta.rows, l.n_in);
            unsafe {
                matrixmultiply::dgemm(
                    delta.rows, l.n_out, l.n_in, 1.0,
                    delta.data.as_ptr(), delta.cols as isize, 1,
                    l.weights.as_ptr(), l.n_in as isize, 1,
                    0.0, dx.data.as_mut_ptr(), l.n_in as isize, 1,
                );
            }
            delta = dx;
        }
        Ok((grads, delta))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 8 * self.n_params());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.layers.len() as u32).to_le_bytes());
        for l in &self.layers {
            out.extend_from_slice(&(l.n_in as u32).to_le_bytes());
            out.extend_from_slice(&(l.n_out as u32).to_le_bytes());
            out.push(l.activation.tag());
        }
        for l in &self.layers {
            for x in l.weights.iter().chain(&l.bias) {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(MAGIC.len())? != MAGIC {
            return Err(Error::Format("bad magic header".into()));
        }
        let n_layers = r.u32()? as usize;
        let mut dims = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            let n_in = r.u32()? as usize;
            let n_out = r.u32()? as usize;
            let act = Activation::from_tag(r.take(1)?[0])?;
            dims.push((n_in, n_out, act));
        }
        let mut layers = Vec::with_capacity(n_layers);
        for (n_in, n_out, activation) in dims {
            let weights = (0..n_in * n_out).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            let bias = (0..n_out).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            layers.push(Layer { n_in, n_out, weights, bias, activation });
        }
        if r.pos != bytes.len() {
            return Err(Error::Format(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Self::from_layers(layers)
    }

    /// Hex SHA-256 of the serialized parameters.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_bytes()))
    }
}

const MAGIC: &[u8; 8] = b"ECNNPAR1";

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Format("truncated parameter file".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

fn layer_forward(l: &Layer, x: &Matrix) -> Matrix {
    let mut y = Matrix::zeros(x.rows, l.n_out);
    for r in 0..x.rows {
        y.row_mut(r).copy_from_slice(&l.bias);
    }
    // y = x W^T + b
    unsafe {
        matrixmultiply::dgemm(
            x.rows, l.n_in, l.n_out, 1.0,
            x.data.as_ptr(), x.cols as isize, 1,
            l.weights.as_ptr(), 1, l.n_in as isize,
            1.0, y.data.as_mut_ptr(), l.n_out as isize, 1,
        );
    }
    match l.activation {
        Activation::Linear => {}
        Activation::Relu => y.data.iter_mut().for_each(|v| *v = v.max(0.0)),
        Activation::Tanh => y.data.iter_mut().for_each(|v| *v = v.tanh()),
        Activation::Softmax => {
            for r in 0..y.rows {
                let row = y.row_mut(r);
                let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                row.iter_mut().for_each(|v| *v = (*v - m).exp());
                let s: f64 = row.iter().sum();
                row.iter_mut().for_each(|v| *v /= s);
            }
        }
    }
    y
}

/// Turns `dL/dY` into `dL/dZ` in place, where `y = act(z)`.
fn activation_backward(act: Activation, y: &Matrix, delta: &mut Matrix) {
    match act {
        Activation::Linear => {}
        Activation::Relu => delta.data.iter_mut().zip(&y.data).for_each(|(d, &v)| {
            if v <= 0.0 {
                *d = 0.0
            }
        }),
        Activation::Tanh => delta.data.iter_mut().zip(&y.data).for_each(|(d, &v)| *d *= 1.0 - v * v),
        Activation::Softmax => {
            for r in 0..y.rows {
                let p = y.row(r);
                let d = delta.row_mut(r);
                let dot: f64 = d.iter().zip(p).map(|(a, b)| a * b).sum();
                d.iter_mut().zip(p).for_each(|(g, &pi)| *g = pi * (*g - dot));
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    m: ModelParams,
    v: ModelParams,
    step: u64,
}

impl AdamState {
    pub fn new(params: &ModelParams, config: AdamConfig) -> Self {
        Self { config, m: params.zeros_like(), v: params.zeros_like(), step: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One descent step along `grads` with bias-corrected moments.
    pub fn step(&mut self, params: &mut ModelParams, grads: &ModelParams) -> Result<()> {
        params.check_same(grads)?;
        self.m.check_same(grads)?;
        let mut offset = 0;
        for (k, l) in grads.layers.iter().enumerate() {
            if let Some(i) = l.weights.iter().chain(&l.bias).position(|g| !g.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "gradient of layer {k} entry {i} (flat index {}) is {}",
                    offset + i,
                    l.weights.iter().chain(&l.bias).nth(i).unwrap()
                )));
            }
            offset += l.weights.len() + l.bias.len();
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        for ((p, g), (m, v)) in params
            .layers
            .iter_mut()
            .zip(&grads.layers)
            .zip(self.m.layers.iter_mut().zip(self.v.layers.iter_mut()))
        {
            let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
                for i in 0..p.len() {
                    m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                    v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                    let mh = m[i] / c1;
                    let vh = v[i] / c2;
                    p[i] -= lr * mh / (vh.sqrt() + eps);
                }
            };
            update(&mut p.weights, &g.weights, &mut m.weights, &mut v.weights);
            update(&mut p.bias, &g.bias, &mut m.bias, &mut v.bias);
        }
        Ok(())
    }
}

/// `target <- nu * online + (1 - nu) * target`.
pub fn soft_update(target: &mut ModelParams, online: &ModelParams, nu: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&nu) {
        return Err(Error::Domain(format!("soft-update coefficient {nu} outside [0,1]")));
    }
    target.check_same(online)?;
    if nu == 1.0 {
        *target = online.clone();
        return Ok(());
    }
    target.zip_mut(online, |t, o| *t = nu * o + (1.0 - nu) * *t);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::MasterSeed;

    fn identity_layer(n: usize, act: Activation) -> ModelParams {
        let mut w = vec![0.0; n * n];
        for i in 0..n {
            w[i * n + i] = 1.0;
        }
        ModelParams::from_layers(vec![Layer { n_in: n, n_out: n, weights: w, bias: vec![0.0; n], activation: act }]).unwrap()
    }

    #[test]
    fn identity_linear_layer() {
        let net = identity_layer(3, Activation::Linear);
        assert_eq!(net.predict_one(&[1.5, -2.0, 0.25]).unwrap(), vec![1.5, -2.0, 0.25]);
    }

    #[test]
    fn relu_clips_negative() {
        let net = identity_layer(2, Activation::Relu);
        assert_eq!(net.predict_one(&[-1.0, 2.0]).unwrap(), vec![0.0, 2.0]);
    }

    #[test]
    fn softmax_output_normalizes() {
        let mut rng = MasterSeed(1).stream("nn");
        let net = ModelParams::xavier(&[5, 7, 4], Activation::Tanh, Activation::Softmax, &mut rng).unwrap();
        let y = net.predict_one(&[3.0, -1.0, 0.5, 2.0, 9.0]).unwrap();
        assert!((y.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn forward_is_pure() {
        let mut rng = MasterSeed(2).stream("nn");
        let net = ModelParams::xavier(&[4, 8, 3], Activation::Relu, Activation::Linear, &mut rng).unwrap();
        let x = Matrix::from_rows(&[vec![0.1, 0.2, 0.3, 0.4]]).unwrap();
        let a = net.forward(&x).unwrap().0;
        let b = net.forward(&x).unwrap().0;
        assert_eq!(a.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        assert_eq!(net.predict(&x).unwrap(), a);
    }

    #[test]
    fn rejects_wrong_input_width() {
        let net = identity_layer(3, Activation::Linear);
        assert!(matches!(net.predict_one(&[1.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn rejects_inconsistent_layers() {
        let l1 = Layer { n_in: 2, n_out: 3, weights: vec![0.0; 6], bias: vec![0.0; 3], activation: Activation::Tanh };
        let l2 = Layer { n_in: 4, n_out: 1, weights: vec![0.0; 4], bias: vec![0.0; 1], activation: Activation::Linear };
        assert!(ModelParams::from_layers(vec![l1, l2]).is_err());
    }

    /// loss = sum(c ⊙ y) with fixed c, so dL/dY = c.
    fn weighted_loss(net: &ModelParams, x: &Matrix, c: &Matrix) -> f64 {
        net.predict(x).unwrap().data().iter().zip(c.data()).map(|(a, b)| a * b).sum()
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = MasterSeed(3).stream("nn");
        let mut net = ModelParams::xavier(&[4, 6, 5, 3], Activation::Tanh, Activation::Tanh, &mut rng).unwrap();
        let x = Matrix::from_vec(3, 4, (0..12).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let c = Matrix::from_vec(3, 3, (0..9).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let (_, tape) = net.forward(&x).unwrap();
        let (g, dx) = net.backward(&tape, &c).unwrap();
        let d = 1e-5;
        let mut worst: f64 = 0.0;
        for i in 0..net.n_params() {
            let p = net.get_flat(i);
            net.set_flat(i, p + d);
            let up = weighted_loss(&net, &x, &c);
            net.set_flat(i, p - d);
            let dn = weighted_loss(&net, &x, &c);
            net.set_flat(i, p);
            let fd = (up - dn) / (2.0 * d);
            let an = g.get_flat(i);
            worst = worst.max((fd - an).abs() / fd.abs().max(an.abs()).max(1e-6));
        }
        for k in 0..x.data().len() {
            let mut xp = x.clone();
            xp.data_mut()[k] += d;
            let mut xm = x.clone();
            xm.data_mut()[k] -= d;
            let fd = (weighted_loss(&net, &xp, &c) - weighted_loss(&net, &xm, &c)) / (2.0 * d);
            let an = dx.data()[k];
            worst = worst.max((fd - an).abs() / fd.abs().max(an.abs()).max(1e-6));
        }
        assert!(worst <= 1e-4, "max relative error {worst}");
    }

    #[test]
    fn zero_output_gradient_gives_zero_gradients() {
        let mut rng = MasterSeed(4).stream("nn");
        let net = ModelParams::xavier(&[3, 4, 2], Activation::Tanh, Activation::Softmax, &mut rng).unwrap();
        let x = Matrix::from_rows(&[vec![0.3, -0.2, 0.9]]).unwrap();
        let (_, tape) = net.forward(&x).unwrap();
        let (g, dx) = net.backward(&tape, &Matrix::zeros(1, 2)).unwrap();
        assert!(g.flat().iter().all(|&v| v == 0.0));
        assert!(dx.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn duplicated_sample_matches_single() {
        let mut rng = MasterSeed(5).stream("nn");
        let net = ModelParams::xavier(&[3, 4, 2], Activation::Tanh, Activation::Linear, &mut rng).unwrap();
        let row = vec![0.3, -0.2, 0.9];
        let gy = vec![0.7, -1.1];
        let (_, t1) = net.forward(&Matrix::from_rows(&[row.clone()]).unwrap()).unwrap();
        let (g1, _) = net.backward(&t1, &Matrix::from_rows(&[gy.clone()]).unwrap()).unwrap();
        // mean loss over two identical rows: each row carries half the gradient
        let half: Vec<f64> = gy.iter().map(|v| v / 2.0).collect();
        let (_, t2) = net.forward(&Matrix::from_rows(&[row.clone(), row]).unwrap()).unwrap();
        let (g2, _) = net.backward(&t2, &Matrix::from_rows(&[half.clone(), half]).unwrap()).unwrap();
        for (a, b) in g1.flat().iter().zip(g2.flat()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn backward_rejects_foreign_tape() {
        let mut rng = MasterSeed(6).stream("nn");
        let a = ModelParams::xavier(&[3, 4, 2], Activation::Tanh, Activation::Linear, &mut rng).unwrap();
        let b = ModelParams::xavier(&[5, 4, 2], Activation::Tanh, Activation::Linear, &mut rng).unwrap();
        let (_, tape) = b.forward(&Matrix::zeros(1, 5)).unwrap();
        assert!(a.backward(&tape, &Matrix::zeros(1, 2)).is_err());
    }

    fn scalar_net(w: f64) -> ModelParams {
        ModelParams::from_layers(vec![Layer { n_in: 1, n_out: 1, weights: vec![w], bias: vec![0.0], activation: Activation::Linear }]).unwrap()
    }

    #[test]
    fn adam_first_step_is_lr_times_sign() {
        // The sign approximation is off by eps/|g| relative, so small
        // gradients are checked against the exact first step instead.
        for g in [3.7, -0.02, 150.0, -0.002, 1e-7] {
            let mut p = scalar_net(1.0);
            let mut grad = p.zeros_like();
            grad.layers_mut()[0].weights[0] = g;
            let mut adam = AdamState::new(&p, AdamConfig::with_lr(1e-3));
            adam.step(&mut p, &grad).unwrap();
            let delta = p.layers()[0].weights[0] - 1.0;
            if g.abs() >= 1e-2 {
                let expect = -1e-3 * g.signum();
                assert!(((delta - expect) / expect).abs() < 1e-6, "g={g} delta={delta}");
            }
            let exact = -1e-3 * g / (g.abs() + 1e-8);
            assert!(((delta - exact) / exact).abs() < 1e-9, "g={g} delta={delta}");
        }
    }

    #[test]
    fn adam_zero_gradient_is_fixed_point() {
        let mut p = scalar_net(0.42);
        let grad = p.zeros_like();
        let mut adam = AdamState::new(&p, AdamConfig::default());
        for _ in 0..100 {
            adam.step(&mut p, &grad).unwrap();
        }
        assert_eq!(p.layers()[0].weights[0], 0.42);
    }

    #[test]
    fn adam_matches_scalar_reference() {
        // scalar reference implementation
        let (lr, b1, b2, eps) = (1e-3, 0.9, 0.999, 1e-8);
        let (mut m, mut v, mut w) = (0.0f64, 0.0f64, 1.0f64);
        let mut steps = Vec::new();
        for t in 1..=2 {
            let g = 0.5;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let upd = lr * (m / (1.0 - b1.powi(t))) / ((v / (1.0 - b2.powi(t))).sqrt() + eps);
            w -= upd;
            steps.push(upd);
        }
        let mut p = scalar_net(1.0);
        let mut grad = p.zeros_like();
        grad.layers_mut()[0].weights[0] = 0.5;
        let mut adam = AdamState::new(&p, AdamConfig::with_lr(lr));
        let w0 = p.layers()[0].weights[0];
        adam.step(&mut p, &grad).unwrap();
        let w1 = p.layers()[0].weights[0];
        adam.step(&mut p, &grad).unwrap();
        let w2 = p.layers()[0].weights[0];
        assert!((w2 - w).abs() < 1e-15);
        assert!((w1 - w2).abs() <= (w0 - w1).abs() + 1e-12);
        assert!((steps[1] - (w1 - w2)).abs() < 1e-15);
    }

    #[test]
    fn adam_rejects_non_finite() {
        let mut p = scalar_net(1.0);
        let mut grad = p.zeros_like();
        grad.layers_mut()[0].bias[0] = f64::NAN;
        let mut adam = AdamState::new(&p, AdamConfig::default());
        let err = adam.step(&mut p, &grad).unwrap_err();
        assert!(matches!(err, Error::NonFinite(ref s) if s.contains("flat index 1")));
        assert_eq!(p.layers()[0].weights[0], 1.0);
    }

    #[test]
    fn soft_update_endpoints() {
        let mut rng = MasterSeed(7).stream("nn");
        let online = ModelParams::xavier(&[3, 5, 2], Activation::Tanh, Activation::Tanh, &mut rng).unwrap();
        let mut t = ModelParams::xavier(&[3, 5, 2], Activation::Tanh, Activation::Tanh, &mut rng).unwrap();
        let frozen = t.clone();
        soft_update(&mut t, &online, 0.0).unwrap();
        assert_eq!(t, frozen);
        soft_update(&mut t, &online, 1.0).unwrap();
        assert_eq!(t, online);
        let x = [0.1, 0.2, 0.3];
        assert_eq!(t.predict_one(&x).unwrap(), online.predict_one(&x).unwrap());
    }

    #[test]
    fn soft_update_default_coefficient() {
        let mut t = scalar_net(0.0);
        let online = scalar_net(1.0);
        soft_update(&mut t, &online, 0.001).unwrap();
        assert!((t.layers()[0].weights[0] - 0.001).abs() < 1e-18);
        assert!(soft_update(&mut t, &identity_layer(2, Activation::Linear), 0.5).is_err());
    }

    #[test]
    fn serialization_roundtrip_and_errors() {
        let mut rng = MasterSeed(8).stream("nn");
        let net = ModelParams::xavier(&[3, 5, 2], Activation::Relu, Activation::Softmax, &mut rng).unwrap();
        let bytes = net.to_bytes();
        assert_eq!(&bytes[..8], MAGIC);
        assert_eq!(ModelParams::from_bytes(&bytes).unwrap(), net);
        assert!(ModelParams::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(ModelParams::from_bytes(&bad).is_err());
        assert_eq!(net.digest().len(), 64);
    }
}
