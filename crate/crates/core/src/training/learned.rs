use serde::{Deserialize, Serialize};

use super::config::{InitialMode, ModelConfig};
use super::data::{history_before, Normalizer, Sample, Window};
use crate::adjoint::ObservationOperator;
use crate::autodiff::{Network, ParameterVector, Real};
use crate::error::{Error, Result};
use crate::model::{DynamicsConfig, DynamicsModel, EncoderConfig, InitialStateConfig, InitialStateModel};
use crate::simulators::Dataset;

/// Everything needed to run the learned system on frames of one dataset
/// layout: `F`, `g`, `H` and the data scaling.
#[derive(Debug, Clone, PartialEq)]
pub struct Learned<T> {
    pub config: ModelConfig,
    pub dynamics: DynamicsModel<T>,
    pub initial: InitialStateModel<T>,
    pub obs: ObservationOperator,
    pub norm: Normalizer,
    pub shape: (usize, usize),
    proxy: Vec<usize>,
}

/// Serializable description that, together with parameters, rebuilds a
/// [`Learned`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnedSpec {
    pub config: ModelConfig,
    pub history_len: usize,
    pub norm: Normalizer,
    pub nx: usize,
    pub ny: usize,
}

fn index_of(names: &[String], n: &str) -> Result<usize> {
    names.iter().position(|c| c == n).ok_or_else(|| Error::Config(format!("unknown channel {n:?}")))
}

impl<T: Real> Learned<T> {
    /// Fresh model: `F` seeded with `seed`, an encoder with `seed + 1`.
    pub fn new(spec: &LearnedSpec, seed: u64) -> Result<Self> {
        let (dcfg, icfg, obs, proxy) = Self::configs(spec)?;
        let dynamics = DynamicsModel::new(dcfg, seed)?;
        let initial = InitialStateModel::from_config(icfg, seed + 1)?;
        Ok(Self { config: spec.config.clone(), dynamics, initial, obs, norm: spec.norm.clone(), shape: (spec.nx, spec.ny), proxy })
    }

    pub fn from_params(spec: &LearnedSpec, dynamics: ParameterVector<T>, initial: ParameterVector<T>) -> Result<Self> {
        let (dcfg, icfg, obs, proxy) = Self::configs(spec)?;
        Ok(Self {
            config: spec.config.clone(),
            dynamics: DynamicsModel::from_params(dcfg, dynamics)?,
            initial: InitialStateModel::with_params(icfg, initial)?,
            obs,
            norm: spec.norm.clone(),
            shape: (spec.nx, spec.ny),
            proxy,
        })
    }

    fn configs(spec: &LearnedSpec) -> Result<(DynamicsConfig, InitialStateConfig, ObservationOperator, Vec<usize>)> {
        let names = &spec.norm.channels;
        let net = &spec.config.network;
        let dcfg = DynamicsConfig {
            state_channels: names.len(),
            width: net.width,
            n_down: net.n_down,
            n_blocks: net.n_blocks,
            kernel_size: net.kernel_size,
        };
        dcfg.validate()?;
        if spec.nx % dcfg.divisor() != 0 || spec.ny % dcfg.divisor() != 0 {
            return Err(Error::Config(format!("grid {}x{} not divisible by {}", spec.nx, spec.ny, dcfg.divisor())));
        }
        let obs = ObservationOperator::from_names(names, &spec.config.observed)?;
        let (icfg, proxy) = match &spec.config.initial {
            InitialMode::Identity => (InitialStateConfig::Identity, vec![]),
            InitialMode::Encoder { width, proxy } => {
                let proxy = proxy.iter().map(|p| index_of(names, p)).collect::<Result<Vec<_>>>()?;
                let cfg = EncoderConfig {
                    state_channels: names.len(),
                    observed: obs.channels().to_vec(),
                    proxy: proxy.clone(),
                    history_len: spec.history_len,
                    width: *width,
                    kernel_size: 3,
                };
                (InitialStateConfig::Encoder(cfg), proxy)
            }
        };
        Ok((dcfg, icfg, obs, proxy))
    }

    pub fn spec(&self) -> LearnedSpec {
        LearnedSpec {
            config: self.config.clone(),
            history_len: self.initial.history_len(),
            norm: self.norm.clone(),
            nx: self.shape.0,
            ny: self.shape.1,
        }
    }

    pub fn channels(&self) -> &[String] {
        &self.norm.channels
    }

    pub fn n_params(&self) -> usize {
        self.dynamics.params().len() + self.initial.params().len()
    }

    /// Dynamics then initial-state parameters.
    pub fn flat_params(&self) -> Vec<T> {
        self.dynamics.params().flat().iter().chain(self.initial.params().flat()).copied().collect()
    }

    pub fn set_flat_params(&mut self, flat: &[T]) -> Result<()> {
        let n = self.dynamics.params().len();
        if flat.len() != self.n_params() {
            return Err(Error::Shape(format!("{} values for {} parameters", flat.len(), self.n_params())));
        }
        self.dynamics.params_mut().set_flat(&flat[..n])?;
        self.initial.params_mut().set_flat(&flat[n..])
    }

    pub fn check_dataset(&self, data: &Dataset) -> Result<()> {
        if data.channels() != self.channels() || (data.meta.nx, data.meta.ny) != self.shape {
            return Err(Error::Config(format!(
                "dataset has channels {:?} on {}x{}, model expects {:?} on {}x{}",
                data.channels(),
                data.meta.nx,
                data.meta.ny,
                self.channels(),
                self.shape.0,
                self.shape.1
            )));
        }
        Ok(())
    }

    fn all(&self) -> Vec<usize> {
        (0..self.channels().len()).collect()
    }

    /// Normalized full state of frame `k`.
    pub fn state(&self, data: &Dataset, k: usize) -> Result<crate::autodiff::Tensor<T>> {
        self.norm.frame(data.raw(k), &self.all(), self.shape)
    }

    /// Normalized observation of frame `k`.
    pub fn observation(&self, data: &Dataset, k: usize) -> Result<crate::autodiff::Tensor<T>> {
        self.norm.frame(data.raw(k), self.obs.channels(), self.shape)
    }

    /// Inputs for `g` at `window` and observations at `current + offset`.
    pub fn sample(&self, data: &Dataset, window: Window, offsets: &[usize]) -> Result<Sample<T>> {
        let cur = window.current;
        let last = cur + offsets.last().copied().unwrap_or(0);
        if last >= data.len() || cur < history_before(self.initial.history_len()) {
            return Err(Error::DatasetTooShort { needed: last + 1, available: data.len() });
        }
        let (full, history, proxy) = if self.initial.history_len() == 0 {
            (Some(self.state(data, cur)?), vec![], None)
        } else {
            let first = cur + 1 - self.initial.history_len();
            let history = (first..=cur).map(|k| self.observation(data, k)).collect::<Result<Vec<_>>>()?;
            let proxy = if self.proxy.is_empty() {
                None
            } else {
                Some(self.norm.frame(data.raw(cur), &self.proxy, self.shape)?)
            };
            (None, history, proxy)
        };
        let targets = offsets.iter().map(|o| self.observation(data, cur + o)).collect::<Result<Vec<_>>>()?;
        Ok(Sample { window, full, history, proxy, targets })
    }
}
