//! Small dense networks with hand-written reverse mode.

use rand::Rng;

use crate::math::sigmoid;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Linear,
    Relu,
    Sigmoid,
}

impl Activation {
    pub fn id(self) -> u32 {
        match self {
            Activation::Linear => 0,
            Activation::Relu => 1,
            Activation::Sigmoid => 2,
        }
    }

    pub fn from_id(id: u32) -> Option<Self> {
        match id {
            0 => Some(Activation::Linear),
            1 => Some(Activation::Relu),
            2 => Some(Activation::Sigmoid),
            _ => None,
        }
    }

    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Linear => x,
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => sigmoid(x),
        }
    }

    /// Derivative expressed through the pre-activation `x` and output `y`.
    #[inline]
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Linear => 1.0,
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
        }
    }
}

/// Fully connected layer; `weights` is row-major `[out][in]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Dense {
    pub fn zeros(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Self {
            in_dim,
            out_dim,
            weights: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
            activation,
        }
    }

    /// Uniform in `±sqrt(6 / (fan_in + fan_out))`, zero bias. Weights are
    /// rounded through `f32` so a freshly built model serialises exactly.
    pub fn glorot<R: Rng>(in_dim: usize, out_dim: usize, activation: Activation, rng: &mut R) -> Self {
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let mut d = Self::zeros(in_dim, out_dim, activation);
        for w in &mut d.weights {
            *w = rng.gen_range(-limit..limit) as f32 as f64;
        }
        d
    }

    fn forward_into(&self, x: &[f64], pre: &mut Vec<f64>, out: &mut Vec<f64>) {
        debug_assert_eq!(x.len(), self.in_dim);
        pre.clear();
        out.clear();
        for o in 0..self.out_dim {
            let row = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
            let z = self.bias[o] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
            pre.push(z);
            out.push(self.activation.apply(z));
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

/// Values recorded by [`Mlp::forward_trace`] for the backward pass.
#[derive(Clone, Debug, Default)]
pub struct MlpTrace {
    /// Input of each layer; `inputs[0]` is the network input.
    pub inputs: Vec<Vec<f64>>,
    pub pre: Vec<Vec<f64>>,
    pub output: Vec<f64>,
}

/// Gradient with the same shapes as an [`Mlp`].
#[derive(Clone, Debug, PartialEq)]
pub struct MlpGrad {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<Vec<f64>>,
}

impl MlpGrad {
    pub fn zeros_like(mlp: &Mlp) -> Self {
        Self {
            weights: mlp.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            bias: mlp.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
        }
    }

    pub fn add(&mut self, other: &MlpGrad) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        for (a, b) in self.bias.iter_mut().zip(&other.bias) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights
            .iter()
            .chain(&self.bias)
            .all(|v| v.iter().all(|x| x.is_finite()))
    }
}

impl Mlp {
    /// Network with the given layer widths, `hidden` activation on inner
    /// layers and `output` activation on the last.
    pub fn glorot<R: Rng>(dims: &[usize], hidden: Activation, output: Activation, rng: &mut R) -> Self {
        assert!(dims.len() >= 2);
        let n = dims.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let act = if i + 1 == n { output } else { hidden };
                Dense::glorot(dims[i], dims[i + 1], act, rng)
            })
            .collect();
        Self { layers }
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().expect("non-empty network").out_dim
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.forward_trace(x).output
    }

    pub fn forward_trace(&self, x: &[f64]) -> MlpTrace {
        let mut trace = MlpTrace {
            inputs: Vec::with_capacity(self.layers.len()),
            pre: Vec::with_capacity(self.layers.len()),
            output: Vec::new(),
        };
        let mut cur = x.to_vec();
        for layer in &self.layers {
            let mut pre = Vec::with_capacity(layer.out_dim);
            let mut out = Vec::with_capacity(layer.out_dim);
            layer.forward_into(&cur, &mut pre, &mut out);
            trace.inputs.push(cur);
            trace.pre.push(pre);
            cur = out;
        }
        trace.output = cur;
        trace
    }

    /// Accumulates parameter gradients into `grad` and returns `dL/dx`.
    pub fn backward(&self, trace: &MlpTrace, grad_out: &[f64], grad: &mut MlpGrad) -> Vec<f64> {
        let mut g: Vec<f64> = grad_out.to_vec();
        for (li, layer) in self.layers.iter().enumerate().rev() {
            let pre = &trace.pre[li];
            let out: &[f64] = if li + 1 == self.layers.len() {
                &trace.output
            } else {
                &trace.inputs[li + 1]
            };
            let input = &trace.inputs[li];
            let mut g_in = vec![0.0; layer.in_dim];
            for o in 0..layer.out_dim {
                let dz = g[o] * layer.activation.derivative(pre[o], out[o]);
                if dz == 0.0 {
                    continue;
                }
                grad.bias[li][o] += dz;
                let row = o * layer.in_dim;
                let gw = &mut grad.weights[li][row..row + layer.in_dim];
                let w = &layer.weights[row..row + layer.in_dim];
                for i in 0..layer.in_dim {
                    gw[i] += dz * input[i];
                    g_in[i] += dz * w[i];
                }
            }
            g = g_in;
        }
        g
    }

    /// Flat mutable views of every parameter array, weights then bias per
    /// layer.
    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weights.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }
}

impl MlpGrad {
    /// Flat views matching [`Mlp::params_mut`].
    pub fn params(&self) -> Vec<&[f64]> {
        self.weights
            .iter()
            .zip(&self.bias)
            .flat_map(|(w, b)| [w.as_slice(), b.as_slice()])
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut mlp = Mlp::glorot(&[5, 7, 7, 3], Activation::Relu, Activation::Sigmoid, &mut rng);
        for l in &mut mlp.layers {
            for b in &mut l.bias {
                *b = rng.gen_range(-0.3..0.3);
            }
        }
        let x: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let w_out = [0.3, -1.2, 0.8];
        let loss = |m: &Mlp, x: &[f64]| -> f64 { m.forward(x).iter().zip(&w_out).map(|(a, b)| a * b).sum() };
        let trace = mlp.forward_trace(&x);
        let mut grad = MlpGrad::zeros_like(&mlp);
        let gx = mlp.backward(&trace, &w_out, &mut grad);

        let h = 1e-6;
        for i in 0..x.len() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            let fd = (loss(&mlp, &xp) - loss(&mlp, &xm)) / (2.0 * h);
            assert!((fd - gx[i]).abs() < 1e-7);
        }
        for li in 0..mlp.layers.len() {
            for wi in 0..mlp.layers[li].weights.len() {
                let mut p = mlp.clone();
                let mut m = mlp.clone();
                p.layers[li].weights[wi] += h;
                m.layers[li].weights[wi] -= h;
                let fd = (loss(&p, &x) - loss(&m, &x)) / (2.0 * h);
                assert!((fd - grad.weights[li][wi]).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn glorot_bounds_and_zero_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let d = Dense::glorot(32, 64, Activation::Relu, &mut rng);
        let limit = (6.0f64 / 96.0).sqrt();
        assert!(d.weights.iter().all(|w| w.abs() <= limit));
        assert!(d.bias.iter().all(|&b| b == 0.0));
        assert!(d.weights.iter().all(|&w| w as f32 as f64 == w));
    }
}
