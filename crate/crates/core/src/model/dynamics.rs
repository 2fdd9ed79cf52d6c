use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::init::orthogonal_kernel;
use super::LEAKY_SLOPE;
use crate::autodiff::{Network, ParamVars, ParameterVector, Real, Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Shape of the residual tendency network.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsConfig {
    pub state_channels: usize,
    #[serde(default = "default_width")]
    pub width: usize,
    #[serde(default = "default_n_down")]
    pub n_down: usize,
    #[serde(default = "default_n_blocks")]
    pub n_blocks: usize,
    #[serde(default = "default_kernel")]
    pub kernel_size: usize,
}

fn default_width() -> usize {
    32
}
fn default_n_down() -> usize {
    2
}
fn default_n_blocks() -> usize {
    6
}
fn default_kernel() -> usize {
    3
}

impl DynamicsConfig {
    pub fn new(state_channels: usize) -> Self {
        Self {
            state_channels,
            width: default_width(),
            n_down: default_n_down(),
            n_blocks: default_n_blocks(),
            kernel_size: default_kernel(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.state_channels == 0 || self.width == 0 {
            return Err(Error::Config("state_channels and width must be positive".into()));
        }
        if self.n_blocks == 0 {
            return Err(Error::Config("n_blocks must be at least 1".into()));
        }
        if self.kernel_size % 2 == 0 {
            return Err(Error::Config(format!("kernel_size must be odd, got {}", self.kernel_size)));
        }
        Ok(())
    }

    /// Spatial sizes must be multiples of this.
    pub fn divisor(&self) -> usize {
        1 << self.n_down
    }

    /// Number of scalar parameters:
    /// `(W C k^2 + W) + (max(n_down, 1) - 1 + 2 n_blocks + n_down)(W^2 k^2 + W) + (C W k^2 + C)`
    /// with `C` state channels, `W` width and `k` the kernel size.
    pub fn parameter_count(&self) -> usize {
        let (c, w, k2) = (self.state_channels, self.width, self.kernel_size * self.kernel_size);
        let hidden = self.n_down.max(1) - 1 + 2 * self.n_blocks + self.n_down;
        (w * c * k2 + w) + hidden * (w * w * k2 + w) + (c * w * k2 + c)
    }

    fn layers(&self) -> Vec<(String, usize, usize)> {
        let (c, w) = (self.state_channels, self.width);
        let mut l = Vec::new();
        if self.n_down == 0 {
            l.push(("stem".to_string(), w, c));
        }
        for i in 0..self.n_down {
            l.push((format!("down{i}"), w, if i == 0 { c } else { w }));
        }
        for b in 0..self.n_blocks {
            l.push((format!("block{b}.conv1"), w, w));
            l.push((format!("block{b}.conv2"), w, w));
        }
        for i in 0..self.n_down {
            l.push((format!("up{i}"), w, w));
        }
        l.push(("out".to_string(), c, w));
        l
    }
}

/// Learned tendency `F(X)`: strided encoder, residual trunk, bilinear decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsModel<T> {
    config: DynamicsConfig,
    params: ParameterVector<T>,
}

/// Gain on the orthogonal output kernel. A unit gain makes the untrained
/// tendency dwarf the true one, and at the prescribed learning rate Adam
/// needs thousands of steps just to shrink it.
pub const OUTPUT_GAIN: f64 = 0.01;

/// Orthogonally initialized parameters, biases zero, deterministic in `seed`.
/// The output kernel is scaled by [`OUTPUT_GAIN`].
pub fn init_orthogonal<T: Real>(cfg: &DynamicsConfig, seed: u64) -> Result<ParameterVector<T>> {
    init_orthogonal_with_gain(cfg, seed, OUTPUT_GAIN)
}

/// [`init_orthogonal`] with an explicit output-kernel gain.
pub fn init_orthogonal_with_gain<T: Real>(cfg: &DynamicsConfig, seed: u64, output_gain: f64) -> Result<ParameterVector<T>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = cfg.kernel_size;
    let mut p = ParameterVector::new();
    for (name, out, inp) in cfg.layers() {
        let mut kernel = orthogonal_kernel::<T>(out, inp, k, &mut rng);
        if name == "out" {
            kernel = kernel.scale(T::lit(output_gain));
        }
        p.push(format!("{name}.k"), kernel)?;
        p.push(format!("{name}.b"), Tensor::zeros(&[out]))?;
    }
    Ok(p)
}

impl<T: Real> DynamicsModel<T> {
    pub fn new(config: DynamicsConfig, seed: u64) -> Result<Self> {
        let params = init_orthogonal(&config, seed)?;
        Ok(Self { config, params })
    }

    pub fn from_params(config: DynamicsConfig, params: ParameterVector<T>) -> Result<Self> {
        let reference = init_orthogonal::<T>(&config, 0)?;
        if !reference.same_layout(&params) {
            return Err(Error::Shape("parameter layout does not match the dynamics configuration".into()));
        }
        Ok(Self { config, params })
    }

    pub fn config(&self) -> &DynamicsConfig {
        &self.config
    }

    fn conv(&self, tape: &mut Tape<T>, p: &ParamVars, name: &str, x: Var, stride: usize) -> Result<Var> {
        let k = p.get(&format!("{name}.k"))?;
        let b = p.get(&format!("{name}.b"))?;
        tape.conv2d(x, k, Some(b), stride)
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        let (c, h, w) = x.chw()?;
        if c != self.config.state_channels {
            return Err(Error::Shape(format!("model expects {} channels, got {c}", self.config.state_channels)));
        }
        let d = self.config.divisor();
        if h % d != 0 || w % d != 0 {
            return Err(Error::Shape(format!("grid {h}x{w} is not divisible by {d}")));
        }
        Ok(())
    }
}

impl<T: Real> Network<T> for DynamicsModel<T> {
    fn params(&self) -> &ParameterVector<T> {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParameterVector<T> {
        &mut self.params
    }

    fn forward(&self, tape: &mut Tape<T>, p: &ParamVars, x: Var) -> Result<Var> {
        self.check_input(tape.value(x))?;
        let slope = T::lit(LEAKY_SLOPE);
        let cfg = &self.config;
        let mut h = x;
        if cfg.n_down == 0 {
            h = self.conv(tape, p, "stem", h, 1)?;
            h = tape.leaky_relu(h, slope);
        }
        for i in 0..cfg.n_down {
            h = self.conv(tape, p, &format!("down{i}"), h, 2)?;
            h = tape.leaky_relu(h, slope);
        }
        for b in 0..cfg.n_blocks {
            let r = self.conv(tape, p, &format!("block{b}.conv1"), h, 1)?;
            let r = tape.leaky_relu(r, slope);
            let r = self.conv(tape, p, &format!("block{b}.conv2"), r, 1)?;
            let s = tape.add(h, r)?;
            h = tape.leaky_relu(s, slope);
        }
        for i in 0..cfg.n_down {
            h = tape.upsample2x(h)?;
            h = self.conv(tape, p, &format!("up{i}"), h, 1)?;
            h = tape.leaky_relu(h, slope);
        }
        self.conv(tape, p, "out", h, 1)
    }
}
