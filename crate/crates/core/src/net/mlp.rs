//! Fixed-topology fully connected networks: parameter storage, scaled
//! uniform fan-in initialization, forward evaluation, and hand-written
//! backpropagation (per-sample and batched GEMM variants).

use rand::distributions::{Distribution, Uniform};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Error, Debug)]
pub enum NetError {
    #[error("invalid network spec: {0}")]
    InvalidSpec(String),
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),
}

/// Hidden-layer activation. The output layer is always linear.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    z
                } else {
                    0.0
                }
            }
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the *pre-activation* z.
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
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
        }
    }
}

/// Topology of a fully connected network.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub output_dim: usize,
    pub activation: Activation,
}

impl MlpSpec {
    pub fn new(input_dim: usize, hidden_dims: &[usize], output_dim: usize, activation: Activation) -> Self {
        MlpSpec {
            input_dim,
            hidden_dims: hidden_dims.to_vec(),
            output_dim,
            activation,
        }
    }

    pub fn validate(&self) -> Result<(), NetError> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(NetError::InvalidSpec("dims must be >= 1".into()));
        }
        if self.hidden_dims.is_empty() {
            return Err(NetError::InvalidSpec("hidden_dims must be non-empty".into()));
        }
        if self.hidden_dims.iter().any(|&h| h == 0) {
            return Err(NetError::InvalidSpec("hidden dims must be >= 1".into()));
        }
        Ok(())
    }

    /// `(in_dim, out_dim)` of each layer, input to output.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_dims.len() + 1);
        let mut prev = self.input_dim;
        for &h in &self.hidden_dims {
            dims.push((prev, h));
            prev = h;
        }
        dims.push((prev, self.output_dim));
        dims
    }

    /// Total parameter count: Σ out·(in + 1).
    pub fn param_len(&self) -> usize {
        self.layer_dims().iter().map(|&(i, o)| o * (i + 1)).sum()
    }

    /// Reconstruct the spec from a parameter layout (e.g. a deserialized
    /// snapshot, which stores layer dims but not the activation).
    pub fn from_layout(layout: &[LayerLayout], activation: Activation) -> Result<Self, NetError> {
        if layout.len() < 2 {
            return Err(NetError::InvalidSpec(
                "layout must have at least one hidden layer".into(),
            ));
        }
        for pair in layout.windows(2) {
            if pair[0].out_dim != pair[1].in_dim {
                return Err(NetError::InvalidSpec(format!(
                    "layer chain mismatch: {} -> {}",
                    pair[0].out_dim, pair[1].in_dim
                )));
            }
        }
        let hidden: Vec<usize> = layout[..layout.len() - 1].iter().map(|l| l.out_dim).collect();
        let spec = MlpSpec::new(
            layout[0].in_dim,
            &hidden,
            layout[layout.len() - 1].out_dim,
            activation,
        );
        spec.validate()?;
        Ok(spec)
    }
}

/// Location of one layer's parameters inside the flat value array.
/// Weights are row-major `(out_dim × in_dim)` at `offset`; the `out_dim`
/// biases follow immediately after the weights.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerLayout {
    pub in_dim: usize,
    pub out_dim: usize,
    pub offset: usize,
}

impl LayerLayout {
    pub fn weight_count(&self) -> usize {
        self.in_dim * self.out_dim
    }
    pub fn len(&self) -> usize {
        self.weight_count() + self.out_dim
    }
    pub fn bias_offset(&self) -> usize {
        self.offset + self.weight_count()
    }
}

/// Flat parameter store for one network, with per-layer layout metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamVector {
    pub values: Vec<f64>,
    pub layout: Vec<LayerLayout>,
}

impl ParamVector {
    /// Zero-initialized parameters in the layout implied by `spec`.
    pub fn zeros(spec: &MlpSpec) -> Result<Self, NetError> {
        spec.validate()?;
        let mut layout = Vec::new();
        let mut offset = 0;
        for (in_dim, out_dim) in spec.layer_dims() {
            layout.push(LayerLayout { in_dim, out_dim, offset });
            offset += out_dim * (in_dim + 1);
        }
        Ok(ParamVector {
            values: vec![0.0; offset],
            layout,
        })
    }

    /// Layout offsets must be strictly increasing and contiguous, and the
    /// value array must span exactly the layers' total size.
    pub fn validate(&self) -> Result<(), NetError> {
        let mut expected = 0usize;
        for layer in &self.layout {
            if layer.offset != expected {
                return Err(NetError::InvalidSpec(format!(
                    "layer offset {} not contiguous (expected {})",
                    layer.offset, expected
                )));
            }
            expected += layer.len();
        }
        if expected != self.values.len() {
            return Err(NetError::DimMismatch {
                context: "param vector length",
                expected,
                got: self.values.len(),
            });
        }
        Ok(())
    }

    /// Check that this parameter vector has the layout implied by `spec`.
    pub fn matches(&self, spec: &MlpSpec) -> bool {
        let dims = spec.layer_dims();
        self.layout.len() == dims.len()
            && self
                .layout
                .iter()
                .zip(dims)
                .all(|(l, (i, o))| l.in_dim == i && l.out_dim == o)
            && self.values.len() == spec.param_len()
    }

    pub fn iter_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Initialize parameters: weights uniform in `(-1/√fan_in, 1/√fan_in)`,
/// biases exactly zero. Deterministic given `(spec, seed)`.
pub fn init_params(spec: &MlpSpec, seed: u64) -> Result<ParamVector, NetError> {
    let mut params = ParamVector::zeros(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for layer in &params.layout.clone() {
        let scale = 1.0 / (layer.in_dim as f64).sqrt();
        let dist = Uniform::new(-scale, scale);
        for w in &mut params.values[layer.offset..layer.offset + layer.weight_count()] {
            *w = dist.sample(&mut rng);
        }
        // biases stay zero
    }
    Ok(params)
}

fn check_input(spec: &MlpSpec, params: &ParamVector, len: usize, context: &'static str) -> Result<(), NetError> {
    if !params.matches(spec) {
        return Err(NetError::DimMismatch {
            context: "params vs spec",
            expected: spec.param_len(),
            got: params.values.len(),
        });
    }
    if len != spec.input_dim {
        return Err(NetError::DimMismatch {
            context,
            expected: spec.input_dim,
            got: len,
        });
    }
    Ok(())
}

/// Per-sample forward pass (reference path).
pub fn forward(params: &ParamVector, spec: &MlpSpec, input: &[f64]) -> Result<Vec<f64>, NetError> {
    check_input(spec, params, input.len(), "forward input")?;
    let last = params.layout.len() - 1;
    let mut act = input.to_vec();
    for (l, layer) in params.layout.iter().enumerate() {
        let mut next = vec![0.0; layer.out_dim];
        for o in 0..layer.out_dim {
            let row = layer.offset + o * layer.in_dim;
            let mut z = params.values[layer.bias_offset() + o];
            for i in 0..layer.in_dim {
                z += params.values[row + i] * act[i];
            }
            next[o] = if l == last { z } else { spec.activation.apply(z) };
        }
        act = next;
    }
    Ok(act)
}

/// Per-sample backward pass (reference path).
///
/// Returns gradients of `⟨output, output_grad⟩` with respect to the
/// parameters (same layout as `params`) and the input.
pub fn backward(
    params: &ParamVector,
    spec: &MlpSpec,
    input: &[f64],
    output_grad: &[f64],
) -> Result<(Vec<f64>, Vec<f64>), NetError> {
    check_input(spec, params, input.len(), "backward input")?;
    if output_grad.len() != spec.output_dim {
        return Err(NetError::DimMismatch {
            context: "backward output_grad",
            expected: spec.output_dim,
            got: output_grad.len(),
        });
    }
    let last = params.layout.len() - 1;

    // Forward, caching per-layer inputs and pre-activations.
    let mut inputs: Vec<Vec<f64>> = Vec::with_capacity(params.layout.len());
    let mut preacts: Vec<Vec<f64>> = Vec::with_capacity(params.layout.len());
    let mut act = input.to_vec();
    for (l, layer) in params.layout.iter().enumerate() {
        inputs.push(act.clone());
        let mut z = vec![0.0; layer.out_dim];
        for o in 0..layer.out_dim {
            let row = layer.offset + o * layer.in_dim;
            let mut s = params.values[layer.bias_offset() + o];
            for i in 0..layer.in_dim {
                s += params.values[row + i] * act[i];
            }
            z[o] = s;
        }
        preacts.push(z.clone());
        act = if l == last {
            z
        } else {
            z.iter().map(|&v| spec.activation.apply(v)).collect()
        };
    }

    let mut grads = vec![0.0; params.values.len()];
    let mut delta = output_grad.to_vec(); // d⟨out, g⟩/d(layer output)
    for (l, layer) in params.layout.iter().enumerate().rev() {
        // Through the activation (output layer is linear).
        if l != last {
            for (d, &z) in delta.iter_mut().zip(&preacts[l]) {
                *d *= spec.activation.derivative(z);
            }
        }
        let x = &inputs[l];
        let mut input_grad = vec![0.0; layer.in_dim];
        for o in 0..layer.out_dim {
            let row = layer.offset + o * layer.in_dim;
            grads[layer.bias_offset() + o] += delta[o];
            for i in 0..layer.in_dim {
                grads[row + i] += delta[o] * x[i];
                input_grad[i] += params.values[row + i] * delta[o];
            }
        }
        delta = input_grad;
    }
    Ok((grads, delta))
}

/// Cache produced by [`forward_batch_cached`], consumed by [`backward_batch`].
///
/// All matrices are column-major with one column per sample: entry `(r, c)`
/// of a `dim × n` matrix lives at `r + c * dim`.
pub struct BatchCache {
    /// Per-layer inputs; `inputs[0]` is the input batch itself.
    inputs: Vec<Vec<f64>>,
    /// Per-layer pre-activations.
    preacts: Vec<Vec<f64>>,
    n: usize,
}

#[inline]
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: isize,
    csa: isize,
    b: &[f64],
    rsb: isize,
    csb: isize,
    beta: f64,
    c: &mut [f64],
    rsc: isize,
    csc: isize,
) {
    debug_assert!(c.len() >= m * n);
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            rsc,
            csc,
        );
    }
}

fn forward_batch_impl(
    params: &ParamVector,
    spec: &MlpSpec,
    inputs: &[f64],
    n: usize,
    want_cache: bool,
) -> Result<(Vec<f64>, Option<BatchCache>), NetError> {
    if n == 0 || inputs.len() != spec.input_dim * n {
        return Err(NetError::DimMismatch {
            context: "forward_batch inputs",
            expected: spec.input_dim * n.max(1),
            got: inputs.len(),
        });
    }
    if !params.matches(spec) {
        return Err(NetError::DimMismatch {
            context: "params vs spec",
            expected: spec.param_len(),
            got: params.values.len(),
        });
    }
    let last = params.layout.len() - 1;
    let mut cache = BatchCache {
        inputs: Vec::new(),
        preacts: Vec::new(),
        n,
    };
    let mut act = inputs.to_vec();
    for (l, layer) in params.layout.iter().enumerate() {
        // Z = W · X, column-major X and Z, row-major W.
        let mut z = vec![0.0; layer.out_dim * n];
        gemm(
            layer.out_dim,
            layer.in_dim,
            n,
            &params.values[layer.offset..],
            layer.in_dim as isize,
            1,
            &act,
            1,
            layer.in_dim as isize,
            0.0,
            &mut z,
            1,
            layer.out_dim as isize,
        );
        let biases = &params.values[layer.bias_offset()..layer.bias_offset() + layer.out_dim];
        for col in z.chunks_exact_mut(layer.out_dim) {
            for (v, b) in col.iter_mut().zip(biases) {
                *v += b;
            }
        }
        if want_cache {
            cache.inputs.push(act);
            cache.preacts.push(z.clone());
        }
        if l == last {
            act = z;
        } else {
            for v in &mut z {
                *v = spec.activation.apply(*v);
            }
            act = z;
        }
    }
    Ok((act, if want_cache { Some(cache) } else { None }))
}

/// Batched forward pass over `n` column-major samples; no gradient cache.
pub fn forward_batch(
    params: &ParamVector,
    spec: &MlpSpec,
    inputs: &[f64],
    n: usize,
) -> Result<Vec<f64>, NetError> {
    forward_batch_impl(params, spec, inputs, n, false).map(|(out, _)| out)
}

/// Batched forward pass that also returns the cache needed by [`backward_batch`].
pub fn forward_batch_cached(
    params: &ParamVector,
    spec: &MlpSpec,
    inputs: &[f64],
    n: usize,
) -> Result<(Vec<f64>, BatchCache), NetError> {
    forward_batch_impl(params, spec, inputs, n, true).map(|(out, c)| (out, c.expect("cache requested")))
}

/// Batched backward pass. `output_grads` is `output_dim × n` column-major;
/// gradients are *summed* over the batch (callers fold any `1/n` into
/// `output_grads`). Returns `(param_grads, input_grads)`.
pub fn backward_batch(
    params: &ParamVector,
    spec: &MlpSpec,
    cache: &BatchCache,
    output_grads: &[f64],
) -> Result<(Vec<f64>, Vec<f64>), NetError> {
    let n = cache.n;
    if output_grads.len() != spec.output_dim * n {
        return Err(NetError::DimMismatch {
            context: "backward_batch output_grads",
            expected: spec.output_dim * n,
            got: output_grads.len(),
        });
    }
    let last = params.layout.len() - 1;
    let mut grads = vec![0.0; params.values.len()];
    let mut delta = output_grads.to_vec();
    for (l, layer) in params.layout.iter().enumerate().rev() {
        if l != last {
            for (d, &z) in delta.iter_mut().zip(&cache.preacts[l]) {
                *d *= spec.activation.derivative(z);
            }
        }
        let x = &cache.inputs[l];
        // dW = Δ · Xᵀ : (out × in) = (out × n) · (n × in)
        gemm(
            layer.out_dim,
            n,
            layer.in_dim,
            &delta,
            1,
            layer.out_dim as isize,
            x,
            layer.in_dim as isize,
            1,
            0.0,
            &mut grads[layer.offset..layer.offset + layer.weight_count()],
            layer.in_dim as isize,
            1,
        );
        // db = row sums of Δ
        {
            let b = &mut grads[layer.bias_offset()..layer.bias_offset() + layer.out_dim];
            for col in delta.chunks_exact(layer.out_dim) {
                for (g, d) in b.iter_mut().zip(col) {
                    *g += d;
                }
            }
        }
        // dX = Wᵀ · Δ : (in × n) = (in × out) · (out × n)
        let mut input_grad = vec![0.0; layer.in_dim * n];
        gemm(
            layer.in_dim,
            layer.out_dim,
            n,
            &params.values[layer.offset..],
            1,
            layer.in_dim as isize,
            &delta,
            1,
            layer.out_dim as isize,
            0.0,
            &mut input_grad,
            1,
            layer.in_dim as isize,
        );
        delta = input_grad;
    }
    Ok((grads, delta))
}
