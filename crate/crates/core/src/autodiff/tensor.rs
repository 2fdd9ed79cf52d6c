use super::Real;
use crate::error::{Error, Result};
use crate::fields::{Grid2D, StateField};

/// Dense row-major array. Feature maps are `(channels, nx, ny)`, kernels
/// `(out, in, kh, kw)`, biases `(out,)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Shape(format!("shape {shape:?} needs {n} values, got {}", data.len())));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self { shape: shape.to_vec(), data: vec![T::zero(); shape.iter().product()] }
    }

    pub fn full(shape: &[usize], v: T) -> Self {
        Self { shape: shape.to_vec(), data: vec![v; shape.iter().product()] }
    }

    pub fn scalar(v: T) -> Self {
        Self { shape: vec![1], data: vec![v] }
    }

    pub fn from_f64(shape: &[usize], data: &[f64]) -> Result<Self> {
        Self::new(shape.to_vec(), data.iter().map(|&v| T::lit(v)).collect())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|v| v.as_f64()).collect()
    }

    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|v| U::lit(v.as_f64())).collect() }
    }

    /// `(channels, nx, ny)` of a feature map.
    pub fn chw(&self) -> Result<(usize, usize, usize)> {
        match self.shape[..] {
            [c, h, w] => Ok((c, h, w)),
            _ => Err(Error::Shape(format!("expected a (channels, nx, ny) tensor, got {:?}", self.shape))),
        }
    }

    pub fn same_shape(&self, other: &Self) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!("{:?} vs {:?}", self.shape, other.shape)));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Self {
        debug_assert_eq!(self.shape, other.shape);
        Self { shape: self.shape.clone(), data: self.data.iter().zip(&other.data).map(|(&a, &b)| a + b).collect() }
    }

    pub fn sub(&self, other: &Self) -> Self {
        debug_assert_eq!(self.shape, other.shape);
        Self { shape: self.shape.clone(), data: self.data.iter().zip(&other.data).map(|(&a, &b)| a - b).collect() }
    }

    pub fn scale(&self, alpha: T) -> Self {
        Self { shape: self.shape.clone(), data: self.data.iter().map(|&a| alpha * a).collect() }
    }

    /// `self += alpha * other`
    pub fn axpy_assign(&mut self, alpha: T, other: &Self) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn dot(&self, other: &Self) -> T {
        debug_assert_eq!(self.shape, other.shape);
        self.data.iter().zip(&other.data).map(|(&a, &b)| a * b).sum()
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn norm(&self) -> T {
        self.dot(self).sqrt()
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Contiguous values of channel `c` in a feature map.
    pub fn channel(&self, c: usize) -> &[T] {
        let plane = self.shape[1..].iter().product::<usize>();
        &self.data[c * plane..(c + 1) * plane]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [T] {
        let plane = self.shape[1..].iter().product::<usize>();
        &mut self.data[c * plane..(c + 1) * plane]
    }

    /// Feature map holding the listed channels, in order.
    pub fn select_channels(&self, idx: &[usize]) -> Result<Self> {
        let (c, h, w) = self.chw()?;
        let mut data = Vec::with_capacity(idx.len() * h * w);
        for &k in idx {
            if k >= c {
                return Err(Error::Shape(format!("channel {k} out of range for {c} channels")));
            }
            data.extend_from_slice(self.channel(k));
        }
        Ok(Self { shape: vec![idx.len(), h, w], data })
    }

    /// Places the channels of `self` at positions `idx` of a zero map with `total` channels.
    pub fn embed_channels(&self, idx: &[usize], total: usize) -> Result<Self> {
        let (c, h, w) = self.chw()?;
        if c != idx.len() || idx.iter().any(|&k| k >= total) {
            return Err(Error::Shape(format!("cannot embed {c} channels at {idx:?} into {total}")));
        }
        let mut out = Self::zeros(&[total, h, w]);
        for (src, &dst) in idx.iter().enumerate() {
            out.channel_mut(dst).copy_from_slice(self.channel(src));
        }
        Ok(out)
    }

    pub fn concat_channels(parts: &[&Self]) -> Result<Self> {
        let Some(first) = parts.first() else {
            return Err(Error::Shape("nothing to concatenate".into()));
        };
        let (_, h, w) = first.chw()?;
        let mut total = 0;
        for p in parts {
            let (c, ph, pw) = p.chw()?;
            if (ph, pw) != (h, w) {
                return Err(Error::Shape(format!("spatial mismatch {ph}x{pw} vs {h}x{w}")));
            }
            total += c;
        }
        let mut data = Vec::with_capacity(total * h * w);
        for p in parts {
            data.extend_from_slice(&p.data);
        }
        Ok(Self { shape: vec![total, h, w], data })
    }

    pub fn from_state(state: &StateField) -> Self {
        let g = state.grid();
        Self {
            shape: vec![state.n_channels(), g.nx, g.ny],
            data: state.channels().iter().flat_map(|c| c.values().iter().map(|&v| T::lit(v))).collect(),
        }
    }

    pub fn to_state(&self, grid: Grid2D, names: &[String]) -> Result<StateField> {
        let (c, h, w) = self.chw()?;
        if (c, h, w) != (names.len(), grid.nx, grid.ny) {
            return Err(Error::Shape(format!(
                "tensor {:?} does not fit {} channels on {}x{}",
                self.shape,
                names.len(),
                grid.nx,
                grid.ny
            )));
        }
        StateField::from_flat(grid, names, &self.to_f64())
    }
}
