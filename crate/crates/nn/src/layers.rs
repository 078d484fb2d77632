//! Minimal layers on top of candle tensors, with seeded initialization so
//! runs are reproducible independent of candle's own random source.

use candle_core::{DType, Device, Tensor, Var, D};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;

/// Named trainable variables in creation order.
pub type NamedVars = Vec<(String, Var)>;

pub fn vars_only(named: &NamedVars) -> Vec<Var> {
    named.iter().map(|(_, v)| v.clone()).collect()
}

/// Creates variables, drawing initial values from a seeded stream.
pub struct ParamInit {
    rng: ChaCha8Rng,
    dtype: DType,
    device: Device,
    prefix: String,
    vars: NamedVars,
}

impl ParamInit {
    pub fn new(seed: u64, dtype: DType) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            dtype,
            device: Device::Cpu,
            prefix: String::new(),
            vars: Vec::new(),
        }
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    /// Names created after this call are prefixed with `prefix.`.
    pub fn scope(&mut self, prefix: &str) {
        self.prefix = prefix.to_string();
    }

    fn push(&mut self, name: &str, values: Vec<f64>, shape: &[usize]) -> Result<Var> {
        let t = Tensor::from_vec(values, shape, &self.device)?.to_dtype(self.dtype)?;
        let v = Var::from_tensor(&t)?;
        let full = if self.prefix.is_empty() {
            name.to_string()
        } else {
            format!("{}.{name}", self.prefix)
        };
        self.vars.push((full, v.clone()));
        Ok(v)
    }

    /// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn uniform(&mut self, name: &str, shape: &[usize], fan_in: usize) -> Result<Var> {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let n: usize = shape.iter().product();
        let values = (0..n).map(|_| self.rng.random_range(-bound..bound)).collect();
        self.push(name, values, shape)
    }

    pub fn zeros(&mut self, name: &str, shape: &[usize]) -> Result<Var> {
        let n: usize = shape.iter().product();
        self.push(name, vec![0.0; n], shape)
    }

    pub fn normal(&mut self, name: &str, shape: &[usize], std: f64) -> Result<Var> {
        let dist = rand_distr::Normal::new(0.0, std).expect("positive std");
        let n: usize = shape.iter().product();
        let values = (0..n).map(|_| self.rng.sample(dist)).collect();
        self.push(name, values, shape)
    }

    pub fn finish(self) -> NamedVars {
        self.vars
    }
}

pub fn leaky_relu(x: &Tensor) -> Result<Tensor> {
    Ok(candle_nn::ops::leaky_relu(x, 0.2)?)
}

/// `log(1 + exp(x))` without overflow.
pub fn softplus(x: &Tensor) -> Result<Tensor> {
    Ok((x.relu()? + (x.abs()?.neg()?.exp()? + 1.0)?.log()?)?)
}

#[derive(Clone, Debug)]
pub struct Linear {
    w: Var,
    b: Var,
}

impl Linear {
    pub fn new(p: &mut ParamInit, name: &str, input: usize, output: usize) -> Result<Self> {
        Ok(Self {
            w: p.uniform(&format!("{name}.weight"), &[input, output], input)?,
            b: p.uniform(&format!("{name}.bias"), &[output], input)?,
        })
    }

    /// Applies to the last dimension of `x`.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let dims = x.dims().to_vec();
        let input = *dims.last().expect("non-scalar input");
        let rows: usize = dims[..dims.len() - 1].iter().product();
        let y = x.reshape((rows, input))?.matmul(self.w.as_tensor())?.broadcast_add(self.b.as_tensor())?;
        let mut out_dims = dims;
        *out_dims.last_mut().expect("non-scalar input") = self.w.dim(1)?;
        Ok(y.reshape(out_dims)?)
    }
}

/// Same-length 1-D convolution over `(batch, channels, time)`.
#[derive(Clone, Debug)]
pub struct Conv1d {
    w: Var,
    b: Var,
    padding: usize,
}

impl Conv1d {
    pub fn new(p: &mut ParamInit, name: &str, input: usize, output: usize, kernel: usize) -> Result<Self> {
        Ok(Self {
            w: p.uniform(&format!("{name}.weight"), &[output, input, kernel], input * kernel)?,
            b: p.uniform(&format!("{name}.bias"), &[output], input * kernel)?,
            padding: kernel / 2,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = x.conv1d(self.w.as_tensor(), self.padding, 1, 1, 1)?;
        let out = self.b.dim(0)?;
        Ok(y.broadcast_add(&self.b.as_tensor().reshape((1, out, 1))?)?)
    }
}

#[derive(Clone, Debug)]
pub struct Embedding {
    w: Var,
}

impl Embedding {
    pub fn new(p: &mut ParamInit, name: &str, vocab: usize, dim: usize) -> Result<Self> {
        Ok(Self {
            w: p.normal(&format!("{name}.weight"), &[vocab, dim], 0.5)?,
        })
    }

    /// `ids` is a flat u32 tensor; returns `(ids.len(), dim)`.
    pub fn forward(&self, ids: &Tensor) -> Result<Tensor> {
        Ok(self.w.as_tensor().index_select(ids, 0)?)
    }
}

/// One GRU direction; gates ordered reset, update, new.
#[derive(Clone, Debug)]
pub struct Gru {
    wx: Var,
    bx: Var,
    wh: Var,
    bh: Var,
    hidden: usize,
}

impl Gru {
    pub fn new(p: &mut ParamInit, name: &str, input: usize, hidden: usize) -> Result<Self> {
        Ok(Self {
            wx: p.uniform(&format!("{name}.wx"), &[input, 3 * hidden], hidden)?,
            bx: p.uniform(&format!("{name}.bx"), &[3 * hidden], hidden)?,
            wh: p.uniform(&format!("{name}.wh"), &[hidden, 3 * hidden], hidden)?,
            bh: p.uniform(&format!("{name}.bh"), &[3 * hidden], hidden)?,
            hidden,
        })
    }

    /// `x` is time-major `(T, B, I)`; returns `(T, B, H)`.
    pub fn forward(&self, x: &Tensor, reverse: bool) -> Result<Tensor> {
        let (t, b, i) = x.dims3()?;
        let hdim = self.hidden;
        let xs = x
            .reshape((t * b, i))?
            .matmul(self.wx.as_tensor())?
            .broadcast_add(self.bx.as_tensor())?
            .reshape((t, b, 3 * hdim))?;
        let mut h = Tensor::zeros((b, hdim), x.dtype(), x.device())?;
        let mut outs = Vec::with_capacity(t);
        for s in 0..t {
            let idx = if reverse { t - 1 - s } else { s };
            let xg = xs.get(idx)?;
            let hg = h.matmul(self.wh.as_tensor())?.broadcast_add(self.bh.as_tensor())?;
            let r = candle_nn::ops::sigmoid(&(xg.narrow(1, 0, hdim)? + hg.narrow(1, 0, hdim)?)?)?;
            let z = candle_nn::ops::sigmoid(&(xg.narrow(1, hdim, hdim)? + hg.narrow(1, hdim, hdim)?)?)?;
            let n = (xg.narrow(1, 2 * hdim, hdim)? + (r * hg.narrow(1, 2 * hdim, hdim)?)?)?.tanh()?;
            h = (&n + (z * (&h - &n)?)?)?;
            outs.push(h.clone());
        }
        if reverse {
            outs.reverse();
        }
        Ok(Tensor::stack(&outs, 0)?)
    }
}

#[derive(Clone, Debug)]
pub struct BiGru {
    fwd: Gru,
    bwd: Gru,
}

impl BiGru {
    pub fn new(p: &mut ParamInit, name: &str, input: usize, hidden: usize) -> Result<Self> {
        Ok(Self {
            fwd: Gru::new(p, &format!("{name}.fwd"), input, hidden)?,
            bwd: Gru::new(p, &format!("{name}.bwd"), input, hidden)?,
        })
    }

    /// `(T, B, I)` to `(T, B, 2H)`.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok(Tensor::cat(&[self.fwd.forward(x, false)?, self.bwd.forward(x, true)?], D::Minus1)?)
    }
}
