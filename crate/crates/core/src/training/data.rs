use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use crate::adjoint::Problem;
use crate::autodiff::{Real, Tensor};
use crate::error::{Error, Result};
use crate::model::InitialInputs;
use crate::simulators::Dataset;

/// Per-channel scale applied to frames before they reach the model. The
/// two velocity components share one scale so that directions survive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub channels: Vec<String>,
    pub scales: Vec<f64>,
}

impl Normalizer {
    pub fn identity(channels: &[String]) -> Self {
        Self { channels: channels.to_vec(), scales: vec![1.0; channels.len()] }
    }

    /// RMS of every channel over `frames`, pooled over `u` and `v`.
    pub fn fit(data: &Dataset, frames: Range<usize>) -> Result<Self> {
        let names = data.channels().to_vec();
        let c = names.len();
        let per = data.raw(0).len() / c;
        let mut ms = vec![0.0; c];
        for k in frames.clone() {
            for (ch, m) in ms.iter_mut().enumerate() {
                *m += data.raw(k)[ch * per..(ch + 1) * per].iter().map(|v| v * v).sum::<f64>();
            }
        }
        let n = (frames.len() * per) as f64;
        ms.iter_mut().for_each(|m| *m /= n);
        let (iu, iv) = (names.iter().position(|s| s == "u"), names.iter().position(|s| s == "v"));
        if let (Some(a), Some(b)) = (iu, iv) {
            let pooled = 0.5 * (ms[a] + ms[b]);
            ms[a] = pooled;
            ms[b] = pooled;
        }
        let scales: Vec<f64> = ms.iter().map(|m| m.sqrt()).collect();
        if scales.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::Config(format!("cannot normalize channels with scales {scales:?}")));
        }
        Ok(Self { channels: names, scales })
    }

    /// Normalized tensor of the channels `idx` of a flat frame.
    pub fn frame<T: Real>(&self, raw: &[f64], idx: &[usize], shape: (usize, usize)) -> Result<Tensor<T>> {
        let per = shape.0 * shape.1;
        let mut out = Vec::with_capacity(idx.len() * per);
        for &c in idx {
            let s = self.scales[c];
            out.extend(raw[c * per..(c + 1) * per].iter().map(|v| v / s));
        }
        Tensor::from_f64(&[idx.len(), shape.0, shape.1], &out)
    }

    /// Physical values of a model tensor whose channels are `idx`.
    pub fn restore<T: Real>(&self, x: &Tensor<T>, idx: &[usize]) -> Result<Vec<f64>> {
        let (c, h, w) = x.chw()?;
        if c != idx.len() {
            return Err(Error::Shape(format!("{c} channels for {} names", idx.len())));
        }
        let per = h * w;
        Ok(x.to_f64().chunks(per).zip(idx).flat_map(|(ch, &i)| ch.iter().map(move |v| v * self.scales[i])).collect())
    }
}

/// Frame index bookkeeping of one training sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    /// Frame holding the initial condition.
    pub current: usize,
}

/// Frames before the current one that `g` reads.
pub fn history_before(history_len: usize) -> usize {
    history_len.saturating_sub(1)
}

/// Frames spanned by one window.
pub fn window_len(history_len: usize, target_len: usize, stride: usize) -> usize {
    history_before(history_len) + 1 + target_len * stride
}

/// All admissible windows whose frames lie in `frames`.
pub fn windows_in(frames: Range<usize>, history_len: usize, target_len: usize, stride: usize) -> Result<Range<usize>> {
    let need = window_len(history_len, target_len, stride);
    if frames.len() < need {
        return Err(Error::DatasetTooShort { needed: need, available: frames.len() });
    }
    let first = frames.start + history_before(history_len);
    Ok(first..first + frames.len() - need + 1)
}

/// `batch_size` windows drawn uniformly from `frames`.
pub fn sample_minibatch(
    frames: Range<usize>,
    cfg: &TrainConfig,
    history_len: usize,
    rng: &mut impl Rng,
) -> Result<Vec<Window>> {
    let range = windows_in(frames, history_len, cfg.target_len, cfg.target_stride)?;
    Ok((0..cfg.batch_size).map(|_| Window { current: rng.random_range(range.clone()) }).collect())
}

/// `eps0 * decay^i`, clamped to `[0, 1]`.
pub fn ss_probability(iteration: u64, cfg: &TrainConfig) -> f64 {
    let p = cfg.ss_epsilon0 * cfg.ss_decay.powf(iteration as f64);
    p.clamp(0.0, 1.0)
}

/// Model-space tensors of one window.
#[derive(Debug, Clone)]
pub struct Sample<T> {
    pub window: Window,
    /// Full state at `current`, for identity `g`.
    pub full: Option<Tensor<T>>,
    /// Observation history ending at `current`, for an encoder `g`.
    pub history: Vec<Tensor<T>>,
    pub proxy: Option<Tensor<T>>,
    pub targets: Vec<Tensor<T>>,
}

impl<T: Real> Sample<T> {
    pub fn problem<'a>(&'a self, resets: &'a [bool]) -> Problem<'a, T> {
        let inputs = match &self.full {
            Some(x) => InitialInputs::Full(x),
            None => InitialInputs::History { frames: &self.history, proxy: self.proxy.as_ref() },
        };
        Problem { inputs, targets: &self.targets, resets }
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn window_arithmetic() {
        assert_eq!(windows_in(0..20, 0, 6, 1).unwrap(), 0..14);
        assert_eq!(windows_in(0..20, 1, 6, 1).unwrap(), 0..14);
        assert_eq!(windows_in(0..20, 4, 6, 1).unwrap(), 3..14);
        assert_eq!(windows_in(5..30, 0, 3, 3).unwrap(), 5..21);
        assert!(matches!(windows_in(0..6, 0, 6, 1), Err(Error::DatasetTooShort { needed: 7, available: 6 })));
    }

    #[test]
    fn minibatch_is_reproducible_and_in_range() {
        let cfg = TrainConfig { batch_size: 64, ..TrainConfig::default() };
        let a = sample_minibatch(0..20, &cfg, 0, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = sample_minibatch(0..20, &cfg, 0, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|w| w.current <= 13));
        assert!(a.iter().any(|w| w.current == 0) && a.iter().any(|w| w.current == 13));
    }

    #[test]
    fn scheduled_sampling_schedule() {
        let cfg = TrainConfig { ss_epsilon0: 0.8, ss_decay: 1.0, ..TrainConfig::default() };
        assert_eq!(ss_probability(0, &cfg), 0.8);
        assert_eq!(ss_probability(1000, &cfg), 0.8);
        let cfg = TrainConfig { ss_epsilon0: 1.0, ss_decay: 0.99, ..TrainConfig::default() };
        assert!((ss_probability(459, &cfg) - 0.99f64.powi(459)).abs() < 1e-15);
        assert!((ss_probability(459, &cfg) - 0.0099).abs() < 1e-4);
    }
}
