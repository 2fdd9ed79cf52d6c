use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::init::orthogonal_kernel;
use super::LEAKY_SLOPE;
use crate::autodiff::{Gradients, ParamVars, ParameterVector, Real, Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Layout of the observation-driven initial-state encoder.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderConfig {
    pub state_channels: usize,
    /// State channels that are observed, in observation order.
    pub observed: Vec<usize>,
    /// State channels that receive a proxy input, in proxy order.
    #[serde(default)]
    pub proxy: Vec<usize>,
    #[serde(default = "default_history")]
    pub history_len: usize,
    #[serde(default = "default_width")]
    pub width: usize,
    #[serde(default = "default_kernel")]
    pub kernel_size: usize,
}

fn default_history() -> usize {
    4
}
fn default_width() -> usize {
    16
}
fn default_kernel() -> usize {
    3
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.history_len == 0 || self.width == 0 || self.observed.is_empty() {
            return Err(Error::Config("encoder needs history_len, width and observed channels".into()));
        }
        if self.kernel_size % 2 == 0 {
            return Err(Error::Config(format!("kernel_size must be odd, got {}", self.kernel_size)));
        }
        let mut seen = vec![false; self.state_channels];
        for &c in self.observed.iter().chain(&self.proxy) {
            if c >= self.state_channels || seen[c] {
                return Err(Error::Config(format!("encoder channel {c} out of range or repeated")));
            }
            seen[c] = true;
        }
        Ok(())
    }

    pub fn input_channels(&self) -> usize {
        self.history_len * self.observed.len() + self.proxy.len()
    }

    fn layers(&self) -> Vec<(&'static str, usize, usize)> {
        let w = self.width;
        vec![
            ("enc0", w, self.input_channels()),
            ("enc1", w, w),
            ("enc2", w, w),
            ("mid", w, w),
            ("dec1", w, w),
            ("dec0", w, w),
            ("out", self.state_channels, w),
        ]
    }
}

/// What `g` consumes.
#[derive(Debug, Clone, Copy)]
pub enum InitialInputs<'a, T> {
    /// Full initial state, for identity mode.
    Full(&'a Tensor<T>),
    /// Observation frames oldest first (the last one is the current frame)
    /// and proxy channels.
    History { frames: &'a [Tensor<T>], proxy: Option<&'a Tensor<T>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum InitialStateConfig {
    Identity,
    Encoder(EncoderConfig),
}

/// The initial-state map `g`: either passthrough of a given full state or
/// `E(stacked history, proxy) + (current observation, proxy, 0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialStateModel<T> {
    config: InitialStateConfig,
    params: ParameterVector<T>,
}

impl<T: Real> InitialStateModel<T> {
    pub fn identity() -> Self {
        Self { config: InitialStateConfig::Identity, params: ParameterVector::new() }
    }

    pub fn encoder(cfg: EncoderConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParameterVector::new();
        for (name, out, inp) in cfg.layers() {
            params.push(format!("{name}.k"), orthogonal_kernel(out, inp, cfg.kernel_size, &mut rng))?;
            params.push(format!("{name}.b"), Tensor::zeros(&[out]))?;
        }
        Ok(Self { config: InitialStateConfig::Encoder(cfg), params })
    }

    pub fn from_config(config: InitialStateConfig, seed: u64) -> Result<Self> {
        match config {
            InitialStateConfig::Identity => Ok(Self::identity()),
            InitialStateConfig::Encoder(c) => Self::encoder(c, seed),
        }
    }

    pub fn with_params(config: InitialStateConfig, params: ParameterVector<T>) -> Result<Self> {
        let reference = Self::from_config(config, 0)?;
        if !reference.params.same_layout(&params) {
            return Err(Error::Shape("parameter layout does not match the initial-state configuration".into()));
        }
        Ok(Self { config: reference.config, params })
    }

    pub fn config(&self) -> &InitialStateConfig {
        &self.config
    }

    pub fn params(&self) -> &ParameterVector<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParameterVector<T> {
        &mut self.params
    }

    /// Number of observation frames consumed; zero in identity mode.
    pub fn history_len(&self) -> usize {
        match &self.config {
            InitialStateConfig::Identity => 0,
            InitialStateConfig::Encoder(c) => c.history_len,
        }
    }

    /// Records `g(inputs)` on `tape`. `p` must come from registering
    /// [`Self::params`] on the same tape.
    pub fn forward(&self, tape: &mut Tape<T>, p: &ParamVars, inputs: InitialInputs<'_, T>) -> Result<Var> {
        match (&self.config, inputs) {
            (InitialStateConfig::Identity, InitialInputs::Full(x)) => Ok(tape.constant(x.clone())),
            (InitialStateConfig::Identity, InitialInputs::History { .. }) => {
                Err(Error::Config("identity initial state needs a full state".into()))
            }
            (InitialStateConfig::Encoder(_), InitialInputs::Full(_)) => {
                Err(Error::MissingHistory { needed: self.history_len(), got: 0 })
            }
            (InitialStateConfig::Encoder(cfg), InitialInputs::History { frames, proxy }) => {
                self.encode(cfg, tape, p, frames, proxy)
            }
        }
    }

    fn encode(
        &self,
        cfg: &EncoderConfig,
        tape: &mut Tape<T>,
        p: &ParamVars,
        frames: &[Tensor<T>],
        proxy: Option<&Tensor<T>>,
    ) -> Result<Var> {
        if frames.len() < cfg.history_len {
            return Err(Error::MissingHistory { needed: cfg.history_len, got: frames.len() });
        }
        let frames = &frames[frames.len() - cfg.history_len..];
        let current = frames.last().expect("history_len > 0");
        let (co, h, w) = current.chw()?;
        if co != cfg.observed.len() {
            return Err(Error::Shape(format!("expected {} observed channels, got {co}", cfg.observed.len())));
        }
        if h % 4 != 0 || w % 4 != 0 {
            return Err(Error::Shape(format!("encoder grid {h}x{w} is not divisible by 4")));
        }
        let mut parts: Vec<&Tensor<T>> = frames.iter().collect();
        let empty = Tensor::zeros(&[0, h, w]);
        let proxy = match proxy {
            Some(t) => t,
            None if cfg.proxy.is_empty() => &empty,
            None => return Err(Error::Shape("encoder expects proxy channels".into())),
        };
        if proxy.shape() != [cfg.proxy.len(), h, w] {
            return Err(Error::Shape(format!("proxy shape {:?} does not match", proxy.shape())));
        }
        if !cfg.proxy.is_empty() {
            parts.push(proxy);
        }
        let x = tape.constant(Tensor::concat_channels(&parts)?);
        let slope = T::lit(LEAKY_SLOPE);
        let conv = |tape: &mut Tape<T>, name: &str, x: Var, stride: usize, act: bool| -> Result<Var> {
            let y = tape.conv2d(x, p.get(&format!("{name}.k"))?, Some(p.get(&format!("{name}.b"))?), stride)?;
            Ok(if act { tape.leaky_relu(y, slope) } else { y })
        };
        let s0 = conv(tape, "enc0", x, 1, true)?;
        let s1 = conv(tape, "enc1", s0, 2, true)?;
        let z = conv(tape, "enc2", s1, 2, true)?;
        let z = conv(tape, "mid", z, 1, true)?;
        let z = tape.upsample2x(z)?;
        let z = conv(tape, "dec1", z, 1, true)?;
        let z = tape.add(z, s1)?;
        let z = tape.upsample2x(z)?;
        let z = conv(tape, "dec0", z, 1, true)?;
        let z = tape.add(z, s0)?;
        let e = conv(tape, "out", z, 1, false)?;

        let mut skip = current.embed_channels(&cfg.observed, cfg.state_channels)?;
        if !cfg.proxy.is_empty() {
            skip.add_assign(&proxy.embed_channels(&cfg.proxy, cfg.state_channels)?);
        }
        let skip = tape.constant(skip);
        tape.add(e, skip)
    }

    /// Plain evaluation of `g`.
    pub fn evaluate(&self, inputs: InitialInputs<'_, T>) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let p = self.params.register(&mut tape);
        let out = self.forward(&mut tape, &p, inputs)?;
        Ok(tape.value(out).clone())
    }

    /// `(d g / d theta)^T lambda0`, flat; empty in identity mode.
    pub fn vjp_params(&self, inputs: InitialInputs<'_, T>, lambda0: &Tensor<T>) -> Result<Vec<T>> {
        if self.params.is_empty() {
            return Ok(Vec::new());
        }
        let mut tape = Tape::new();
        let p = self.params.register(&mut tape);
        let out = self.forward(&mut tape, &p, inputs)?;
        let grads: Gradients<T> = tape.backward(out, lambda0.clone())?;
        Ok(self.params.gather_grad(&p, &grads))
    }
}
