//! Seeded parameter storage and the few layers the codec is built from.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use candle_core::{DType, Device, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{NvcError, Result};

pub const LEAKY_SLOPE: f64 = 0.1;

pub fn leaky_relu(x: &Tensor) -> Result<Tensor> {
    Ok(candle_nn::ops::leaky_relu(x, LEAKY_SLOPE)?)
}

/// Named trainable tensors with deterministic initialisation.
pub struct ParamStore {
    vars: BTreeMap<String, Var>,
    rng: ChaCha8Rng,
    dtype: DType,
    device: Device,
    half: Arc<AtomicBool>,
}

impl std::fmt::Debug for ParamStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ParamStore").field("params", &self.vars.len()).field("dtype", &self.dtype).finish()
    }
}

impl ParamStore {
    pub fn new(seed: u64, dtype: DType, device: &Device) -> Self {
        Self {
            vars: BTreeMap::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            dtype,
            device: device.clone(),
            half: Arc::new(AtomicBool::new(false)),
        }
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    /// Runs convolutions in F16 while weights stay in the store dtype.
    pub fn set_half_precision(&self, on: bool) {
        self.half.store(on, Ordering::Relaxed);
    }

    fn insert(&mut self, name: &str, data: Vec<f64>, shape: &[usize]) -> Result<Var> {
        if self.vars.contains_key(name) {
            return Err(NvcError::Model(format!("parameter {name} registered twice")));
        }
        let t = Tensor::from_vec(data, shape, &self.device)?.to_dtype(self.dtype)?;
        let v = Var::from_tensor(&t)?;
        self.vars.insert(name.to_string(), v.clone());
        Ok(v)
    }

    /// Tensor filled with `value`.
    pub fn constant(&mut self, name: &str, shape: &[usize], value: f64) -> Result<Var> {
        let n = shape.iter().product();
        self.insert(name, vec![value; n], shape)
    }

    /// Tensor drawn from U(-bound, bound).
    pub fn uniform(&mut self, name: &str, shape: &[usize], bound: f64) -> Result<Var> {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| self.rng.gen_range(-bound..=bound)).collect();
        self.insert(name, data, shape)
    }

    /// Square-kernel convolution with "same" padding. `gain` scales the
    /// default U(±sqrt(3 / fan_in)) weight init.
    pub fn conv(&mut self, name: &str, cin: usize, cout: usize, k: usize, stride: usize, gain: f64) -> Result<Conv> {
        let fan_in = (cin * k * k) as f64;
        let weight = self.uniform(&format!("{name}.weight"), &[cout, cin, k, k], gain * (3.0 / fan_in).sqrt())?;
        let bias = self.constant(&format!("{name}.bias"), &[cout], 0.0)?;
        Ok(Conv { weight, bias, stride, padding: k / 2, half: self.half.clone() })
    }

    /// 3x3 convolution to `4 * cout` channels followed by depth-to-space.
    pub fn up_conv(&mut self, name: &str, cin: usize, cout: usize) -> Result<UpConv> {
        Ok(UpConv { conv: self.conv(name, cin, 4 * cout, 3, 1, 1.0)? })
    }

    pub fn get(&self, name: &str) -> Option<&Var> {
        self.vars.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.vars.keys().map(String::as_str)
    }

    pub fn vars(&self) -> impl Iterator<Item = (&str, &Var)> {
        self.vars.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Variables whose names satisfy `pred`, in name order.
    pub fn select(&self, pred: impl Fn(&str) -> bool) -> Vec<Var> {
        self.vars.iter().filter(|(k, _)| pred(k)).map(|(_, v)| v.clone()).collect()
    }

    pub fn num_scalars(&self, pred: impl Fn(&str) -> bool) -> usize {
        self.vars.iter().filter(|(k, _)| pred(k)).map(|(_, v)| v.elem_count()).sum()
    }

    /// Raw little-endian bytes of every parameter matching `pred`, for
    /// bitwise comparisons.
    pub fn snapshot(&self, pred: impl Fn(&str) -> bool) -> Result<BTreeMap<String, Vec<u8>>> {
        let mut out = BTreeMap::new();
        for (k, v) in self.vars.iter().filter(|(k, _)| pred(k)) {
            let vals = v.as_tensor().to_dtype(DType::F64)?.flatten_all()?.to_vec1::<f64>()?;
            out.insert(k.clone(), vals.iter().flat_map(|x| x.to_le_bytes()).collect());
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let map: HashMap<String, Tensor> = self.vars.iter().map(|(k, v)| (k.clone(), v.as_tensor().clone())).collect();
        candle_core::safetensors::save(&map, path).map_err(|e| NvcError::Io(format!("{}: {e}", path.display())))
    }

    /// Overwrites every parameter from a file written by [`ParamStore::save`].
    pub fn load(&mut self, path: &Path) -> Result<()> {
        let map = candle_core::safetensors::load(path, &self.device)
            .map_err(|e| NvcError::Io(format!("{}: {e}", path.display())))?;
        if map.len() != self.vars.len() {
            return Err(NvcError::Model(format!(
                "checkpoint holds {} tensors, model has {}",
                map.len(),
                self.vars.len()
            )));
        }
        for (name, var) in &self.vars {
            let t = map.get(name).ok_or_else(|| NvcError::Model(format!("checkpoint lacks parameter {name}")))?;
            if t.dims() != var.dims() {
                return Err(NvcError::Model(format!(
                    "parameter {name} has shape {:?} in checkpoint, {:?} in model",
                    t.dims(),
                    var.dims()
                )));
            }
            var.set(&t.to_dtype(self.dtype)?)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Conv {
    weight: Var,
    bias: Var,
    stride: usize,
    padding: usize,
    half: Arc<AtomicBool>,
}

impl Conv {
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let w = self.weight.as_tensor();
        let y = if self.half.load(Ordering::Relaxed) && x.dtype() != DType::F16 {
            let dt = x.dtype();
            x.to_dtype(DType::F16)?.conv2d(&w.to_dtype(DType::F16)?, self.padding, self.stride, 1, 1)?.to_dtype(dt)?
        } else {
            x.conv2d(w, self.padding, self.stride, 1, 1)?
        };
        let b = self.bias.as_tensor().reshape((1, (), 1, 1))?;
        Ok(y.broadcast_add(&b)?)
    }

    pub fn out_channels(&self) -> usize {
        self.weight.dims()[0]
    }
}

#[derive(Debug, Clone)]
pub struct UpConv {
    conv: Conv,
}

impl UpConv {
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok(candle_nn::ops::pixel_shuffle(&self.conv.forward(x)?, 2)?)
    }
}

/// conv → LeakyReLU → conv.
#[derive(Debug, Clone)]
pub struct ConvBlock {
    a: Conv,
    b: Conv,
}

impl ConvBlock {
    pub fn new(store: &mut ParamStore, name: &str, cin: usize, hidden: usize, cout: usize) -> Result<Self> {
        Ok(Self {
            a: store.conv(&format!("{name}.0"), cin, hidden, 3, 1, 1.0)?,
            b: store.conv(&format!("{name}.1"), hidden, cout, 3, 1, 1.0)?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.b.forward(&leaky_relu(&self.a.forward(x)?)?)
    }
}

/// Learnable per-channel gain bounds, stored and interpolated in log space.
#[derive(Debug, Clone)]
pub struct LearnedGains {
    log_lo: Var,
    log_hi: Var,
}

impl LearnedGains {
    pub fn new(store: &mut ParamStore, name: &str, channels: usize, init_min: f64, init_max: f64) -> Result<Self> {
        Ok(Self {
            log_lo: store.constant(&format!("{name}.log_q_min"), &[channels], init_min.ln())?,
            log_hi: store.constant(&format!("{name}.log_q_max"), &[channels], init_max.ln())?,
        })
    }

    pub fn channels(&self) -> usize {
        self.log_lo.elem_count()
    }

    /// `(1, C, 1, 1)` gains `q_min * (q_max / q_min)^fraction`.
    pub fn q(&self, fraction: f64) -> Result<Tensor> {
        let lo = self.log_lo.as_tensor();
        let log_q = (lo + ((self.log_hi.as_tensor() - lo)? * fraction)?)?;
        Ok(log_q.exp()?.reshape((1, (), 1, 1))?)
    }

    pub fn range(&self) -> Result<crate::rate_control::GainRange> {
        let get = |v: &Var| -> Result<Vec<f64>> { Ok(v.as_tensor().exp()?.to_dtype(DType::F64)?.to_vec1::<f64>()?) };
        Ok(crate::rate_control::GainRange { min: get(&self.log_lo)?, max: get(&self.log_hi)? })
    }
}
