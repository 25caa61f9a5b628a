//! Small fully connected Q-network with hand-written backpropagation and ADAM.
//!
//! All parameters live in one flat vector: for each layer, the row-major
//! `outputs x inputs` weight matrix followed by the bias vector. Gradients and
//! optimizer moments use the same layout.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};

pub const DEFAULT_HIDDEN: [usize; 2] = [64, 64];

const SNAPSHOT_MAGIC: &[u8; 4] = b"QNET";
pub const SNAPSHOT_VERSION: u32 = 1;

/// Hidden-layer nonlinearity. The output layer is always linear.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
}

impl Activation {
    pub fn tag(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "relu" => Some(Activation::Relu),
            _ => None,
        }
    }

    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
        }
    }

    #[inline]
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct LayerView {
    inputs: usize,
    outputs: usize,
    weights: usize,
    bias: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QNetwork {
    sizes: Vec<usize>,
    activation: Activation,
    params: Vec<f64>,
}

/// Gradient of a loss with respect to every network parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub Vec<f64>);

impl Gradients {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|g| *g == 0.0)
    }
}

fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl QNetwork {
    /// All-zero network with the given layer sizes `[input, hidden.., output]`.
    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::InvalidConfig(format!(
                "invalid layer sizes {sizes:?}"
            )));
        }
        Ok(QNetwork {
            sizes: sizes.to_vec(),
            activation: Activation::Relu,
            params: vec![0.0; param_count(sizes)],
        })
    }

    /// Weights uniform in `+-1/sqrt(fan_in)`, biases zero.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(sizes)?;
        for view in net.views() {
            let bound = 1.0 / (view.inputs as f64).sqrt();
            for w in &mut net.params[view.weights..view.bias] {
                *w = rng.random_range(-bound..bound);
            }
        }
        Ok(net)
    }

    /// `[3n, hidden[0], hidden[1], |actions|]` for an `n`-qubit search.
    pub fn for_register<R: Rng + ?Sized>(
        n_qubits: usize,
        hidden: [usize; 2],
        rng: &mut R,
    ) -> Result<Self> {
        let n_actions = 5 * n_qubits + n_qubits * n_qubits.saturating_sub(1);
        Self::new(&[3 * n_qubits, hidden[0], hidden[1], n_actions], rng)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().expect("at least two layers")
    }

    pub fn parameters(&self) -> &[f64] {
        &self.params
    }

    pub fn parameters_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn views(&self) -> Vec<LayerView> {
        let mut offset = 0;
        self.sizes
            .windows(2)
            .map(|w| {
                let view = LayerView {
                    inputs: w[0],
                    outputs: w[1],
                    weights: offset,
                    bias: offset + w[0] * w[1],
                };
                offset = view.bias + w[1];
                view
            })
            .collect()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                actual: x.len(),
            });
        }
        Ok(())
    }

    /// Runs one sample through the network, returning every layer's
    /// pre-activation and post-activation values.
    fn trace(&self, views: &[LayerView], x: &[f64]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let mut pre = Vec::with_capacity(views.len());
        let mut post: Vec<Vec<f64>> = Vec::with_capacity(views.len() + 1);
        post.push(x.to_vec());
        let last = views.len() - 1;
        for (l, view) in views.iter().enumerate() {
            let input = &post[l];
            let w = &self.params[view.weights..view.bias];
            let b = &self.params[view.bias..view.bias + view.outputs];
            let z: Vec<f64> = (0..view.outputs)
                .map(|o| {
                    let row = &w[o * view.inputs..(o + 1) * view.inputs];
                    row.iter().zip(input).map(|(a, b)| a * b).sum::<f64>() + b[o]
                })
                .collect();
            let a = if l == last {
                z.clone()
            } else {
                z.iter().map(|&v| self.activation.apply(v)).collect()
            };
            pre.push(z);
            post.push(a);
        }
        (pre, post)
    }

    /// Action values `Q(s, .)` for one observation.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let views = self.views();
        let (_, mut post) = self.trace(&views, x);
        Ok(post.pop().expect("output layer"))
    }

    /// Mean squared error between `targets[k]` and `Q(inputs[k], actions[k])`,
    /// with its gradient. Only the chosen action's output receives gradient.
    pub fn mse_loss_and_grad<S: AsRef<[f64]>>(
        &self,
        inputs: &[S],
        actions: &[usize],
        targets: &[f64],
    ) -> Result<(f64, Gradients)> {
        if inputs.is_empty() {
            return Err(Error::EmptyBatch);
        }
        if actions.len() != inputs.len() || targets.len() != inputs.len() {
            return Err(Error::DimensionMismatch {
                expected: inputs.len(),
                actual: actions.len().min(targets.len()),
            });
        }
        let n_out = self.output_dim();
        if let Some(&bad) = actions.iter().find(|&&a| a >= n_out) {
            return Err(Error::ActionOutOfRange {
                index: bad,
                n_actions: n_out,
            });
        }
        let views = self.views();
        let batch = inputs.len() as f64;
        let mut grad = vec![0.0; self.params.len()];
        let mut loss = 0.0;
        for ((x, &action), &target) in inputs.iter().zip(actions).zip(targets) {
            let x = x.as_ref();
            self.check_input(x)?;
            let (pre, post) = self.trace(&views, x);
            let q = post[views.len()][action];
            let err = q - target;
            loss += err * err;

            // delta = dL/dz for the current layer
            let mut delta = vec![0.0; n_out];
            delta[action] = 2.0 * err / batch;
            for (l, view) in views.iter().enumerate().rev() {
                let input = &post[l];
                for (o, &d) in delta.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    let row = view.weights + o * view.inputs;
                    for (g, &a) in grad[row..row + view.inputs].iter_mut().zip(input) {
                        *g += d * a;
                    }
                    grad[view.bias + o] += d;
                }
                if l == 0 {
                    break;
                }
                let mut next = vec![0.0; view.inputs];
                for (o, &d) in delta.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    let row = &self.params[view.weights + o * view.inputs..][..view.inputs];
                    for (n, &w) in next.iter_mut().zip(row) {
                        *n += d * w;
                    }
                }
                for (n, &z) in next.iter_mut().zip(&pre[l - 1]) {
                    *n *= self.activation.derivative(z);
                }
                delta = next;
            }
        }
        Ok((loss / batch, Gradients(grad)))
    }

    /// Overwrites this network's parameters with `src`'s.
    pub fn copy_from(&mut self, src: &QNetwork) -> Result<()> {
        if self.sizes != src.sizes {
            return Err(Error::ArchitectureMismatch(
                self.sizes.clone(),
                src.sizes.clone(),
            ));
        }
        self.activation = src.activation;
        self.params.copy_from_slice(&src.params);
        Ok(())
    }

    pub fn same_architecture(&self, other: &QNetwork) -> bool {
        self.sizes == other.sizes && self.activation == other.activation
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let tag = self.activation.tag().as_bytes();
        let mut out = Vec::with_capacity(32 + 8 * (self.sizes.len() + self.params.len()));
        out.extend_from_slice(SNAPSHOT_MAGIC);
        out.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
        out.push(tag.len() as u8);
        out.extend_from_slice(tag);
        out.extend_from_slice(&(self.sizes.len() as u32).to_le_bytes());
        for &s in &self.sizes {
            out.extend_from_slice(&(s as u64).to_le_bytes());
        }
        out.extend_from_slice(&(self.params.len() as u64).to_le_bytes());
        for &p in &self.params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(mut bytes: &[u8]) -> Result<Self> {
        let bad = |msg: &str| Error::Snapshot(msg.to_string());
        let mut take = |n: usize| -> Result<Vec<u8>> {
            let mut buf = vec![0u8; n];
            bytes
                .read_exact(&mut buf)
                .map_err(|_| bad("unexpected end of data"))?;
            Ok(buf)
        };
        if take(4)? != SNAPSHOT_MAGIC {
            return Err(bad("bad magic"));
        }
        let version = u32::from_le_bytes(take(4)?.try_into().unwrap());
        if version != SNAPSHOT_VERSION {
            return Err(Error::Snapshot(format!("unsupported version {version}")));
        }
        let tag_len = take(1)?[0] as usize;
        let tag = String::from_utf8(take(tag_len)?).map_err(|_| bad("activation tag"))?;
        let activation = Activation::from_tag(&tag)
            .ok_or_else(|| Error::Snapshot(format!("unknown activation {tag:?}")))?;
        let n_sizes = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        let sizes = (0..n_sizes)
            .map(|_| Ok(u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize))
            .collect::<Result<Vec<_>>>()?;
        let mut net = Self::zeros(&sizes)?;
        net.activation = activation;
        let n_params = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
        if n_params != net.params.len() {
            return Err(Error::Snapshot(format!(
                "{n_params} parameters for layer sizes {sizes:?}"
            )));
        }
        for p in net.params.iter_mut() {
            *p = f64::from_le_bytes(take(8)?.try_into().unwrap());
        }
        if !take(1).is_err() {
            return Err(bad("trailing bytes"));
        }
        Ok(net)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut file = fs::File::create(path)
            .map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
        file.write_all(&self.to_bytes())
            .map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes =
            fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::from_bytes(&bytes)
    }
}

/// ADAM optimizer state over a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    pub fn new(n_params: usize, learning_rate: f64, beta1: f64, beta2: f64) -> Self {
        AdamState {
            learning_rate,
            beta1,
            beta2,
            epsilon: 1e-8,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    pub fn for_network(net: &QNetwork, learning_rate: f64) -> Self {
        Self::new(net.parameters().len(), learning_rate, 0.9, 0.999)
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.m
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.v
    }
}

/// One bias-corrected ADAM update of `net` along `grads`.
pub fn adam_step(net: &mut QNetwork, state: &mut AdamState, grads: &Gradients) -> Result<()> {
    let n = net.params.len();
    if grads.0.len() != n || state.m.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: if grads.0.len() != n {
                grads.0.len()
            } else {
                state.m.len()
            },
        });
    }
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    for (((p, &g), m), v) in net
        .params
        .iter_mut()
        .zip(&grads.0)
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        *m = state.beta1 * *m + (1.0 - state.beta1) * g;
        *v = state.beta2 * *v + (1.0 - state.beta2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p -= state.learning_rate * m_hat / (v_hat.sqrt() + state.epsilon);
    }
    Ok(())
}
