use serde::{Deserialize, Serialize};

use crate::autodiff::{Real, Tensor};
use crate::error::{Error, Result};
use crate::fields::StateField;

/// Linear projector `H` keeping a subset of state channels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservationOperator {
    channels: Vec<usize>,
    state_channels: usize,
}

impl ObservationOperator {
    pub fn new(channels: Vec<usize>, state_channels: usize) -> Result<Self> {
        let mut seen = vec![false; state_channels];
        for &c in &channels {
            if c >= state_channels || seen[c] {
                return Err(Error::Config(format!("observed channel {c} out of range or repeated")));
            }
            seen[c] = true;
        }
        if channels.is_empty() {
            return Err(Error::Config("at least one channel must be observed".into()));
        }
        Ok(Self { channels, state_channels })
    }

    pub fn identity(state_channels: usize) -> Self {
        Self { channels: (0..state_channels).collect(), state_channels }
    }

    /// Observes the named channels of a state laid out as `names`.
    pub fn from_names(names: &[String], observed: &[String]) -> Result<Self> {
        let idx = observed
            .iter()
            .map(|o| {
                names
                    .iter()
                    .position(|n| n == o)
                    .ok_or_else(|| Error::Config(format!("unknown observed channel {o:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(idx, names.len())
    }

    pub fn channels(&self) -> &[usize] {
        &self.channels
    }

    pub fn state_channels(&self) -> usize {
        self.state_channels
    }

    pub fn n_observed(&self) -> usize {
        self.channels.len()
    }

    /// Channels never observed.
    pub fn hidden(&self) -> Vec<usize> {
        (0..self.state_channels).filter(|c| !self.channels.contains(c)).collect()
    }

    pub fn observe<T: Real>(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check(x)?;
        x.select_channels(&self.channels)
    }

    /// `H*`: embeds an observation into an otherwise zero state.
    pub fn adjoint<T: Real>(&self, y: &Tensor<T>) -> Result<Tensor<T>> {
        y.embed_channels(&self.channels, self.state_channels)
    }

    pub fn observe_state(&self, x: &StateField) -> Result<StateField> {
        if x.n_channels() != self.state_channels {
            return Err(Error::Shape(format!("state has {} channels, expected {}", x.n_channels(), self.state_channels)));
        }
        let names: Vec<String> = self.channels.iter().map(|&c| x.names()[c].clone()).collect();
        x.select(&names)
    }

    fn check<T: Real>(&self, x: &Tensor<T>) -> Result<()> {
        let (c, _, _) = x.chw()?;
        if c != self.state_channels {
            return Err(Error::Shape(format!("state has {c} channels, expected {}", self.state_channels)));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projector_algebra() {
        let h = ObservationOperator::new(vec![2], 3).unwrap();
        let x = Tensor::<f64>::from_f64(&[3, 2, 2], &(0..12).map(|v| v as f64).collect::<Vec<_>>()).unwrap();
        let y = h.observe(&x).unwrap();
        assert_eq!(y.data(), &[8.0, 9.0, 10.0, 11.0]);
        let back = h.adjoint(&y).unwrap();
        assert_eq!(back.channel(2), x.channel(2));
        assert!(back.channel(0).iter().chain(back.channel(1)).all(|&v| v == 0.0));
        assert_eq!(h.hidden(), vec![0, 1]);

        let id = ObservationOperator::identity(3);
        assert_eq!(id.observe(&x).unwrap(), x);
        assert!(ObservationOperator::new(vec![3], 3).is_err());
        assert!(ObservationOperator::new(vec![1, 1], 3).is_err());
    }
}
