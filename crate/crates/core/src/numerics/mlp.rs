//! Dense tanh network with a linear output layer.
//!
//! All parameters live in one flat vector, layer by layer: the weight matrix
//! (row-major, `out x in`) followed by the bias vector. The optimizer, the
//! gradient buffers and the checkpoint format share that layout.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView1, ArrayView2, ArrayViewMut2, Axis};
use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    dims: Vec<usize>,
    params: Vec<f64>,
    /// Start of each layer's weight block in `params`.
    offsets: Vec<usize>,
}

/// Activations recorded by [`Mlp::trace`]; `activations[0]` is the input and
/// `activations[l + 1]` the output of layer `l`.
#[derive(Debug, Clone)]
pub struct Trace {
    dims: Vec<usize>,
    activations: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("trace holds the input at least")
    }
}

/// Batched counterpart of [`Trace`], one row per sample.
#[derive(Debug, Clone)]
pub struct BatchTrace {
    dims: Vec<usize>,
    activations: Vec<Array2<f64>>,
}

impl BatchTrace {
    pub fn output(&self) -> &Array2<f64> {
        self.activations.last().expect("trace holds the input at least")
    }
}

#[derive(Debug, Clone)]
pub struct Gradients {
    pub params: Vec<f64>,
    pub input: Vec<f64>,
}

fn layer_offsets(dims: &[usize]) -> Vec<usize> {
    let mut offsets = Vec::with_capacity(dims.len().saturating_sub(1));
    let mut at = 0;
    for w in dims.windows(2) {
        offsets.push(at);
        at += w[0] * w[1] + w[1];
    }
    offsets
}

impl Mlp {
    /// Number of scalar parameters for a given layer layout.
    pub fn param_count(dims: &[usize]) -> usize {
        dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    fn check_dims(dims: &[usize]) -> Result<()> {
        if dims.len() < 2 {
            return Err(Error::Config(format!(
                "network needs at least an input and an output width, got {dims:?}"
            )));
        }
        if dims.contains(&0) {
            return Err(Error::Config(format!("layer widths must be positive, got {dims:?}")));
        }
        Ok(())
    }

    /// Scaled-uniform initialization with bound `sqrt(6 / (fan_in + fan_out))`,
    /// zero biases, and the final layer's weights multiplied by `output_scale`.
    /// Values are rounded to `f32` so checkpoints reproduce them exactly.
    pub fn new<R: Rng + ?Sized>(dims: &[usize], output_scale: f64, rng: &mut R) -> Result<Self> {
        Self::check_dims(dims)?;
        let mut net = Self::zeros(dims)?;
        let layers = net.num_layers();
        for l in 0..layers {
            let (fan_in, fan_out) = (dims[l], dims[l + 1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let scale = if l + 1 == layers { output_scale } else { 1.0 };
            let start = net.offsets[l];
            for w in &mut net.params[start..start + fan_in * fan_out] {
                *w = rng.random_range(-bound..bound) * scale;
            }
        }
        net.snap_to_f32();
        Ok(net)
    }

    pub fn zeros(dims: &[usize]) -> Result<Self> {
        Self::check_dims(dims)?;
        Ok(Self {
            dims: dims.to_vec(),
            params: vec![0.0; Self::param_count(dims)],
            offsets: layer_offsets(dims),
        })
    }

    pub fn from_params(dims: &[usize], params: Vec<f64>) -> Result<Self> {
        Self::check_dims(dims)?;
        let expected = Self::param_count(dims);
        if params.len() != expected {
            return Err(Error::Dimension {
                context: "mlp parameters",
                expected,
                got: params.len(),
            });
        }
        Ok(Self {
            dims: dims.to_vec(),
            params,
            offsets: layer_offsets(dims),
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.dims.len() - 1
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Round every parameter to the nearest `f32`.
    pub fn snap_to_f32(&mut self) {
        for p in &mut self.params {
            *p = *p as f32 as f64;
        }
    }

    pub fn weights(&self, layer: usize) -> ArrayView2<'_, f64> {
        let (i, o) = (self.dims[layer], self.dims[layer + 1]);
        let start = self.offsets[layer];
        ArrayView2::from_shape((o, i), &self.params[start..start + i * o]).expect("layout")
    }

    pub fn bias(&self, layer: usize) -> &[f64] {
        let (i, o) = (self.dims[layer], self.dims[layer + 1]);
        let start = self.offsets[layer] + i * o;
        &self.params[start..start + o]
    }

    fn check_input(&self, len: usize) -> Result<()> {
        if len != self.input_dim() {
            return Err(Error::Dimension {
                context: "mlp input",
                expected: self.input_dim(),
                got: len,
            });
        }
        Ok(())
    }

    fn layer_into(&self, layer: usize, input: &[f64], out: &mut Vec<f64>) {
        let (fan_in, fan_out) = (self.dims[layer], self.dims[layer + 1]);
        let start = self.offsets[layer];
        let w = &self.params[start..start + fan_in * fan_out];
        let b = &self.params[start + fan_in * fan_out..start + fan_in * fan_out + fan_out];
        let hidden = layer + 1 < self.num_layers();
        out.clear();
        for (row, &bias) in w.chunks_exact(fan_in).zip(b) {
            let z = row.iter().zip(input).fold(bias, |acc, (w, x)| acc + w * x);
            out.push(if hidden { z.tanh() } else { z });
        }
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input.len())?;
        let mut x = input.to_vec();
        let mut y = Vec::new();
        for l in 0..self.num_layers() {
            self.layer_into(l, &x, &mut y);
            std::mem::swap(&mut x, &mut y);
        }
        Ok(x)
    }

    /// Forward pass keeping every layer's activations for [`Mlp::backward`].
    pub fn trace(&self, input: &[f64]) -> Result<Trace> {
        self.check_input(input.len())?;
        let mut activations = Vec::with_capacity(self.dims.len());
        activations.push(input.to_vec());
        for l in 0..self.num_layers() {
            let mut y = Vec::with_capacity(self.dims[l + 1]);
            self.layer_into(l, &activations[l], &mut y);
            activations.push(y);
        }
        Ok(Trace {
            dims: self.dims.clone(),
            activations,
        })
    }

    fn check_trace(&self, dims: &[usize], rows: Option<usize>, grad_rows: usize) -> Result<()> {
        if dims != self.dims.as_slice() {
            return Err(Error::Usage(format!(
                "activations were recorded for layout {dims:?}, network is {:?}",
                self.dims
            )));
        }
        if let Some(rows) = rows {
            if rows != grad_rows {
                return Err(Error::Dimension {
                    context: "batch gradient rows",
                    expected: rows,
                    got: grad_rows,
                });
            }
        }
        Ok(())
    }

    /// Reverse pass for one sample: gradients of `output_grad . output` with
    /// respect to every parameter and to the input.
    pub fn backward(&self, trace: &Trace, output_grad: &[f64]) -> Result<Gradients> {
        self.check_trace(&trace.dims, None, 0)?;
        if output_grad.len() != self.output_dim() {
            return Err(Error::Dimension {
                context: "mlp output gradient",
                expected: self.output_dim(),
                got: output_grad.len(),
            });
        }
        let mut grads = vec![0.0; self.params.len()];
        let mut delta = output_grad.to_vec();
        for l in (0..self.num_layers()).rev() {
            let (fan_in, fan_out) = (self.dims[l], self.dims[l + 1]);
            if l + 1 < self.num_layers() {
                for (d, a) in delta.iter_mut().zip(&trace.activations[l + 1]) {
                    *d *= 1.0 - a * a;
                }
            }
            let start = self.offsets[l];
            let prev = &trace.activations[l];
            let (gw, rest) = grads[start..].split_at_mut(fan_in * fan_out);
            for (row, &d) in gw.chunks_exact_mut(fan_in).zip(&delta) {
                for (g, &x) in row.iter_mut().zip(prev) {
                    *g = d * x;
                }
            }
            rest[..fan_out].copy_from_slice(&delta);

            let w = &self.params[start..start + fan_in * fan_out];
            let mut next = vec![0.0; fan_in];
            for (row, &d) in w.chunks_exact(fan_in).zip(&delta) {
                for (n, &wij) in next.iter_mut().zip(row) {
                    *n += wij * d;
                }
            }
            delta = next;
        }
        Ok(Gradients {
            params: grads,
            input: delta,
        })
    }

    /// Batched forward; `input` has one sample per row.
    pub fn forward_batch(&self, input: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        Ok(self.trace_batch(input)?.activations.pop().unwrap())
    }

    pub fn trace_batch(&self, input: ArrayView2<'_, f64>) -> Result<BatchTrace> {
        self.check_input(input.ncols())?;
        let mut activations = Vec::with_capacity(self.dims.len());
        activations.push(input.to_owned());
        for l in 0..self.num_layers() {
            let x = &activations[l];
            let mut z = x.dot(&self.weights(l).t());
            z += &ArrayView1::from(self.bias(l));
            if l + 1 < self.num_layers() {
                z.mapv_inplace(f64::tanh);
            }
            activations.push(z);
        }
        Ok(BatchTrace {
            dims: self.dims.clone(),
            activations,
        })
    }

    /// Batched reverse pass. Parameter gradients are summed over rows and
    /// *added* into `param_grads`; the input gradient is returned.
    pub fn backward_batch(
        &self,
        trace: &BatchTrace,
        output_grad: ArrayView2<'_, f64>,
        param_grads: &mut [f64],
    ) -> Result<Array2<f64>> {
        self.check_trace(&trace.dims, Some(trace.activations[0].nrows()), output_grad.nrows())?;
        if output_grad.ncols() != self.output_dim() {
            return Err(Error::Dimension {
                context: "mlp output gradient",
                expected: self.output_dim(),
                got: output_grad.ncols(),
            });
        }
        if param_grads.len() != self.params.len() {
            return Err(Error::Dimension {
                context: "mlp gradient buffer",
                expected: self.params.len(),
                got: param_grads.len(),
            });
        }
        let mut delta = output_grad.to_owned();
        for l in (0..self.num_layers()).rev() {
            let (fan_in, fan_out) = (self.dims[l], self.dims[l + 1]);
            if l + 1 < self.num_layers() {
                delta.zip_mut_with(&trace.activations[l + 1], |d, &a| *d *= 1.0 - a * a);
            }
            let start = self.offsets[l];
            let (gw, rest) = param_grads[start..].split_at_mut(fan_in * fan_out);
            let mut gw = ArrayViewMut2::from_shape((fan_out, fan_in), gw).expect("layout");
            general_mat_mul(1.0, &delta.t(), &trace.activations[l], 1.0, &mut gw);
            for (g, s) in rest[..fan_out].iter_mut().zip(delta.sum_axis(Axis(0))) {
                *g += s;
            }
            delta = delta.dot(&self.weights(l));
        }
        Ok(delta)
    }
}
