//! Small dense networks in double precision with hand-written reverse-mode
//! gradients and an Adam optimizer.
//!
//! Parameters live in one flat vector so optimizers, finite-difference checks
//! and persistence all work on the same layout: for each layer, the weight
//! matrix row-major (`out × in`) followed by the bias vector.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Relu,
    /// x·σ(x)
    Silu,
    Identity,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
            Activation::Silu => x * sigmoid(x),
            Activation::Identity => x,
        }
    }

    /// Derivative with respect to the pre-activation.
    fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Silu => {
                let s = sigmoid(x);
                s * (1.0 + x * (1.0 - s))
            }
            Activation::Identity => 1.0,
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
            Activation::Silu => "silu",
            Activation::Identity => "identity",
        })
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            "silu" => Ok(Activation::Silu),
            "identity" => Ok(Activation::Identity),
            other => Err(Error::Format(format!("unknown activation `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseNet {
    widths: Vec<usize>,
    activations: Vec<Activation>,
    params: Vec<f64>,
}

/// Result of a backward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub params: Vec<f64>,
    pub input: Vec<f64>,
}

/// Per-layer values kept from the forward pass.
struct Trace {
    /// Input to each layer; the last entry is the network output.
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

impl DenseNet {
    /// Network with the given layer widths (input first) and one activation
    /// per affine layer. Weights are drawn from U(−1/√fan_in, 1/√fan_in),
    /// biases start at zero.
    pub fn new<R: Rng + ?Sized>(
        widths: &[usize],
        activations: &[Activation],
        rng: &mut R,
    ) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::InvalidParameter(
                "a network needs at least two nonzero widths".into(),
            ));
        }
        if activations.len() != widths.len() - 1 {
            return Err(Error::ShapeMismatch {
                expected: widths.len() - 1,
                got: activations.len(),
            });
        }
        let mut params = Vec::with_capacity(Self::count_params(widths));
        for pair in widths.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let limit = 1.0 / (fan_in as f64).sqrt();
            params.extend((0..fan_in * fan_out).map(|_| rng.random_range(-limit..limit)));
            params.extend(std::iter::repeat_n(0.0, fan_out));
        }
        Ok(Self {
            widths: widths.to_vec(),
            activations: activations.to_vec(),
            params,
        })
    }

    /// Multilayer perceptron with a shared hidden activation and a linear head.
    pub fn mlp<R: Rng + ?Sized>(
        input: usize,
        hidden: &[usize],
        output: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        let mut widths = vec![input];
        widths.extend_from_slice(hidden);
        widths.push(output);
        let mut acts = vec![activation; hidden.len()];
        acts.push(Activation::Identity);
        Self::new(&widths, &acts, rng)
    }

    fn count_params(widths: &[usize]) -> usize {
        widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(Error::ShapeMismatch {
                expected: self.input_dim(),
                got: input.len(),
            });
        }
        Ok(())
    }

    fn trace(&self, input: &[f64]) -> Trace {
        let mut inputs = vec![input.to_vec()];
        let mut pre = Vec::with_capacity(self.activations.len());
        let mut offset = 0;
        for (k, act) in self.activations.iter().enumerate() {
            let (n_in, n_out) = (self.widths[k], self.widths[k + 1]);
            let w = &self.params[offset..offset + n_in * n_out];
            let b = &self.params[offset + n_in * n_out..offset + n_in * n_out + n_out];
            offset += n_in * n_out + n_out;
            let x = inputs.last().unwrap();
            let z: Vec<f64> = (0..n_out)
                .map(|o| {
                    let row = &w[o * n_in..(o + 1) * n_in];
                    row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + b[o]
                })
                .collect();
            inputs.push(z.iter().map(|&v| act.apply(v)).collect());
            pre.push(z);
        }
        Trace { inputs, pre }
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        Ok(self.trace(input).inputs.pop().unwrap())
    }

    /// Exact gradients of `upstream · forward(input)`.
    pub fn backward(&self, input: &[f64], upstream: &[f64]) -> Result<Gradients> {
        let mut params = vec![0.0; self.n_params()];
        let input_grad = self.backward_accumulate(input, upstream, &mut params)?;
        Ok(Gradients {
            params,
            input: input_grad,
        })
    }

    /// Like [`DenseNet::backward`] but adds the parameter gradient into `acc`
    /// and returns only the input gradient.
    pub fn backward_accumulate(
        &self,
        input: &[f64],
        upstream: &[f64],
        acc: &mut [f64],
    ) -> Result<Vec<f64>> {
        self.check_input(input)?;
        if upstream.len() != self.output_dim() {
            return Err(Error::ShapeMismatch {
                expected: self.output_dim(),
                got: upstream.len(),
            });
        }
        if acc.len() != self.n_params() {
            return Err(Error::ShapeMismatch {
                expected: self.n_params(),
                got: acc.len(),
            });
        }
        let trace = self.trace(input);
        let mut grad = upstream.to_vec();
        let mut offset = self.n_params();
        for k in (0..self.activations.len()).rev() {
            let (n_in, n_out) = (self.widths[k], self.widths[k + 1]);
            offset -= n_in * n_out + n_out;
            let act = self.activations[k];
            let dz: Vec<f64> = grad
                .iter()
                .zip(&trace.pre[k])
                .map(|(g, &z)| g * act.derivative(z))
                .collect();
            let x = &trace.inputs[k];
            let w = &self.params[offset..offset + n_in * n_out];
            let (gw, gb) = acc[offset..offset + n_in * n_out + n_out].split_at_mut(n_in * n_out);
            let mut dx = vec![0.0; n_in];
            for o in 0..n_out {
                let d = dz[o];
                gb[o] += d;
                let row = &w[o * n_in..(o + 1) * n_in];
                let grow = &mut gw[o * n_in..(o + 1) * n_in];
                for i in 0..n_in {
                    grow[i] += d * x[i];
                    dx[i] += d * row[i];
                }
            }
            grad = dx;
        }
        Ok(grad)
    }

    /// Write the versioned text format:
    ///
    /// ```text
    /// dense-net v1
    /// widths <w0> <w1> ...
    /// activations <a1> <a2> ...
    /// params <count>
    /// <one value per line, shortest round-trip decimal>
    /// ```
    pub fn save<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "dense-net v1")?;
        let widths: Vec<String> = self.widths.iter().map(|w| w.to_string()).collect();
        writeln!(out, "widths {}", widths.join(" "))?;
        let acts: Vec<String> = self.activations.iter().map(|a| a.to_string()).collect();
        writeln!(out, "activations {}", acts.join(" "))?;
        writeln!(out, "params {}", self.params.len())?;
        for p in &self.params {
            writeln!(out, "{p}")?;
        }
        Ok(())
    }

    pub fn load<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let mut next = |what: &str| -> Result<String> {
            lines
                .next()
                .ok_or_else(|| Error::Format(format!("missing {what}")))?
                .map_err(|e| Error::Format(e.to_string()))
        };
        if next("header")?.trim() != "dense-net v1" {
            return Err(Error::Format("expected `dense-net v1` header".into()));
        }
        let field = |line: String, key: &str| -> Result<Vec<String>> {
            let mut parts = line.split_whitespace().map(str::to_owned);
            if parts.next().as_deref() != Some(key) {
                return Err(Error::Format(format!("expected `{key}` line")));
            }
            Ok(parts.collect())
        };
        let widths = field(next("widths")?, "widths")?
            .iter()
            .map(|w| w.parse::<usize>().map_err(|e| Error::Format(e.to_string())))
            .collect::<Result<Vec<_>>>()?;
        let activations = field(next("activations")?, "activations")?
            .iter()
            .map(|a| a.parse::<Activation>())
            .collect::<Result<Vec<_>>>()?;
        let count: usize = field(next("params")?, "params")?
            .first()
            .ok_or_else(|| Error::Format("missing parameter count".into()))?
            .parse()
            .map_err(|e: std::num::ParseIntError| Error::Format(e.to_string()))?;
        if widths.len() < 2 || activations.len() != widths.len() - 1 {
            return Err(Error::Format("inconsistent layer layout".into()));
        }
        if count != Self::count_params(&widths) {
            return Err(Error::Format(format!(
                "parameter count {count} does not match widths"
            )));
        }
        let params = (0..count)
            .map(|_| {
                next("parameter")?
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Format(e.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            widths,
            activations,
            params,
        })
    }
}

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(n_params: usize, lr: f64) -> Result<Self> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::InvalidParameter(
                "learning rate must be positive".into(),
            ));
        }
        Ok(Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        })
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::ShapeMismatch {
                expected: self.m.len(),
                got: grads.len().min(params.len()),
            });
        }
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("gradient".into()));
        }
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

/// Rescale `grads` in place so their Euclidean norm is at most `max_norm`.
pub fn clip_grad_norm(grads: &mut [f64], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        grads.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

/// Central finite differences of a scalar function of a parameter vector.
pub fn numeric_gradient<F>(params: &[f64], step: f64, mut f: F) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut probe = params.to_vec();
    (0..params.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + step;
            let hi = f(&probe);
            probe[i] = orig - step;
            let lo = f(&probe);
            probe[i] = orig;
            (hi - lo) / (2.0 * step)
        })
        .collect()
}

/// Largest elementwise `|a − n| / max(|a|, |n|, floor)`.
///
/// The floor keeps vanishing gradients from turning rounding noise into a
/// large ratio.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}
