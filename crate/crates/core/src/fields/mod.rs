//! Periodic 2D grids, multi-channel fields and the differential operators
//! shared by the simulators and the metrics.
//!
//! Every operator here treats both directions as periodic. Finite-difference
//! operators use second-order centered stencils; the Poisson solve and the
//! Leray projection work in Fourier space with symbols that match those
//! stencils exactly, so that e.g. `divergence(leray_project(u, v))` vanishes
//! to roundoff rather than to truncation error.

mod spectral;
mod stencil;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use spectral::{leray_project, poisson_solve};
pub use stencil::{ddx, ddy, divergence, laplacian, vorticity};

/// Uniform periodic grid. Node `(i, j)` sits at `(i * dx, j * dy)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid2D {
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
}

impl Grid2D {
    pub const MIN_CELLS: usize = 4;

    pub fn new(nx: usize, ny: usize, dx: f64, dy: f64) -> Result<Self> {
        if nx < Self::MIN_CELLS || ny < Self::MIN_CELLS {
            return Err(Error::InvalidGrid(format!(
                "need at least {m}x{m} cells, got {nx}x{ny}",
                m = Self::MIN_CELLS
            )));
        }
        if !(dx > 0.0 && dy > 0.0 && dx.is_finite() && dy.is_finite()) {
            return Err(Error::InvalidGrid(format!("spacing must be positive, got dx={dx}, dy={dy}")));
        }
        Ok(Self { nx, ny, dx, dy })
    }

    /// Grid covering `[0, lx) x [0, ly)`.
    pub fn with_extent(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self> {
        Self::new(nx, ny, lx / nx as f64, ly / ny as f64)
    }

    /// Periodic unit square.
    pub fn unit_square(nx: usize, ny: usize) -> Result<Self> {
        Self::with_extent(nx, ny, 1.0, 1.0)
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn lx(&self) -> f64 {
        self.nx as f64 * self.dx
    }

    pub fn ly(&self) -> f64 {
        self.ny as f64 * self.dy
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        i * self.ny + j
    }

    /// Flat index of `(i + di, j + dj)` with periodic wrap.
    #[inline]
    pub fn wrap(&self, i: usize, j: usize, di: isize, dj: isize) -> usize {
        let ii = (i as isize + di).rem_euclid(self.nx as isize) as usize;
        let jj = (j as isize + dj).rem_euclid(self.ny as isize) as usize;
        ii * self.ny + jj
    }
}

/// A scalar field on a [`Grid2D`], stored x-major (`values[i * ny + j]`).
#[derive(Debug, Clone, PartialEq)]
pub struct Field2D {
    grid: Grid2D,
    values: Vec<f64>,
}

impl Field2D {
    pub fn new(grid: Grid2D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Shape(format!(
                "field needs {} values for a {}x{} grid, got {}",
                grid.len(),
                grid.nx,
                grid.ny,
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Shape(format!("non-finite value at flat index {pos}")));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid2D) -> Self {
        Self { grid, values: vec![0.0; grid.len()] }
    }

    pub fn constant(grid: Grid2D, c: f64) -> Self {
        Self { grid, values: vec![c; grid.len()] }
    }

    /// Samples `f(x, y)` at the grid nodes.
    pub fn from_fn(grid: Grid2D, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for i in 0..grid.nx {
            for j in 0..grid.ny {
                values.push(f(i as f64 * grid.dx, j as f64 * grid.dy));
            }
        }
        Self { grid, values }
    }

    /// Builds a field from index-space values `f(i, j)`.
    pub fn from_index_fn(grid: Grid2D, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for i in 0..grid.nx {
            for j in 0..grid.ny {
                values.push(f(i, j));
            }
        }
        Self { grid, values }
    }

    pub(crate) fn from_raw(grid: Grid2D, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.idx(i, j)]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_raw(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        debug_assert_eq!(self.grid, other.grid);
        Self::from_raw(
            self.grid,
            self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        )
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, alpha: f64) -> Self {
        self.map(|v| alpha * v)
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.values.len() as f64
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Root mean square over the grid.
    pub fn rms(&self) -> f64 {
        (self.values.iter().map(|v| v * v).sum::<f64>() / self.values.len() as f64).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Cyclic shift: `out(i, j) = self(i - si, j - sj)`.
    pub fn roll(&self, si: isize, sj: isize) -> Self {
        let g = self.grid;
        Self::from_index_fn(g, |i, j| self.values[g.wrap(i, j, -si, -sj)])
    }
}

/// Named multi-channel field. All channels share one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct StateField {
    grid: Grid2D,
    names: Vec<String>,
    channels: Vec<Field2D>,
}

/// Observations have the same layout as states; they carry a subset of the
/// state channels.
pub type ObservationField = StateField;

impl StateField {
    pub fn new(channels: Vec<(String, Field2D)>) -> Result<Self> {
        let Some((_, first)) = channels.first() else {
            return Err(Error::Shape("a state needs at least one channel".into()));
        };
        let grid = *first.grid();
        let mut names = Vec::with_capacity(channels.len());
        let mut fields = Vec::with_capacity(channels.len());
        for (name, field) in channels {
            if *field.grid() != grid {
                return Err(Error::Shape(format!("channel {name:?} is on a different grid")));
            }
            if names.contains(&name) {
                return Err(Error::Shape(format!("duplicate channel name {name:?}")));
            }
            names.push(name);
            fields.push(field);
        }
        Ok(Self { grid, names, channels: fields })
    }

    pub fn zeros(grid: Grid2D, names: &[&str]) -> Result<Self> {
        Self::new(names.iter().map(|n| (n.to_string(), Field2D::zeros(grid))).collect())
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn channels(&self) -> &[Field2D] {
        &self.channels
    }

    pub fn channel(&self, k: usize) -> &Field2D {
        &self.channels[k]
    }

    pub fn channel_mut(&mut self, k: usize) -> &mut Field2D {
        &mut self.channels[k]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn get(&self, name: &str) -> Option<&Field2D> {
        self.index_of(name).map(|k| &self.channels[k])
    }

    /// Requires the channel names to be exactly `expected`, in order.
    pub fn expect_channels(&self, expected: &[&str]) -> Result<()> {
        if self.names.len() != expected.len() || self.names.iter().zip(expected).any(|(a, b)| a != b) {
            return Err(Error::Shape(format!("expected channels {expected:?}, got {:?}", self.names)));
        }
        Ok(())
    }

    /// Same channel layout with every channel transformed.
    pub fn map_channels(&self, f: impl Fn(&Field2D) -> Field2D) -> Self {
        Self { grid: self.grid, names: self.names.clone(), channels: self.channels.iter().map(f).collect() }
    }

    /// `self + alpha * other`, channel by channel.
    pub fn axpy(&self, alpha: f64, other: &Self) -> Self {
        debug_assert_eq!(self.names, other.names);
        Self {
            grid: self.grid,
            names: self.names.clone(),
            channels: self
                .channels
                .iter()
                .zip(&other.channels)
                .map(|(a, b)| a.zip_with(b, |x, y| x + alpha * y))
                .collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.channels.iter().all(Field2D::is_finite)
    }

    /// Channel-major flat copy of every value.
    pub fn to_flat(&self) -> Vec<f64> {
        self.channels.iter().flat_map(|c| c.values().iter().copied()).collect()
    }

    /// Inverse of [`StateField::to_flat`].
    pub fn from_flat(grid: Grid2D, names: &[String], flat: &[f64]) -> Result<Self> {
        if flat.len() != grid.len() * names.len() {
            return Err(Error::Shape(format!(
                "flat state needs {} values, got {}",
                grid.len() * names.len(),
                flat.len()
            )));
        }
        let channels = names
            .iter()
            .zip(flat.chunks(grid.len()))
            .map(|(n, chunk)| Ok((n.clone(), Field2D::new(grid, chunk.to_vec())?)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(channels)
    }

    /// Keeps only the named channels, in the given order.
    pub fn select(&self, names: &[String]) -> Result<Self> {
        let channels = names
            .iter()
            .map(|n| {
                self.get(n)
                    .cloned()
                    .map(|f| (n.clone(), f))
                    .ok_or_else(|| Error::Shape(format!("state has no channel {n:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(channels)
    }
}
