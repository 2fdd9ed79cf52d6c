//! Ground-truth simulators, time integration and dataset generation.

mod euler;
mod shallow_water;

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub use euler::{euler_rhs, velocity_from_streamfunction, CHANNELS as EULER_CHANNELS};
pub use shallow_water::{
    energy as shallow_water_energy, shallow_water_rhs, to_cell_centers, wind_forcing, ShallowWaterParams,
    CHANNELS as SHALLOW_WATER_CHANNELS,
};

use crate::error::{Error, Result};
use crate::fields::{Field2D, Grid2D, StateField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    #[default]
    Euler,
    Rk4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemKind {
    ShallowWater,
    Euler,
}

impl SystemKind {
    pub fn channels(self) -> [&'static str; 3] {
        match self {
            SystemKind::ShallowWater => SHALLOW_WATER_CHANNELS,
            SystemKind::Euler => EULER_CHANNELS,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SystemKind::ShallowWater => "shallow_water",
            SystemKind::Euler => "euler",
        }
    }
}

/// Time stepping of an autonomous system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integration {
    pub dt: f64,
    pub n_steps: usize,
    pub save_every: usize,
    pub scheme: Scheme,
}

/// One explicit step `x -> x + dt * phi(x)`.
pub fn step<F>(rhs: &mut F, x: &StateField, dt: f64, scheme: Scheme) -> Result<StateField>
where
    F: FnMut(&StateField) -> Result<StateField>,
{
    match scheme {
        Scheme::Euler => Ok(x.axpy(dt, &rhs(x)?)),
        Scheme::Rk4 => {
            let k1 = rhs(x)?;
            let k2 = rhs(&x.axpy(0.5 * dt, &k1))?;
            let k3 = rhs(&x.axpy(0.5 * dt, &k2))?;
            let k4 = rhs(&x.axpy(dt, &k3))?;
            let mut out = x.axpy(dt / 6.0, &k1);
            out = out.axpy(dt / 3.0, &k2);
            out = out.axpy(dt / 3.0, &k3);
            Ok(out.axpy(dt / 6.0, &k4))
        }
    }
}

/// Integrates and hands every `save_every`-th state (starting with `x0`) to
/// `sink`. Returns the final state.
pub fn integrate_with<F, S>(mut rhs: F, x0: &StateField, cfg: &Integration, mut sink: S) -> Result<StateField>
where
    F: FnMut(&StateField) -> Result<StateField>,
    S: FnMut(f64, &StateField) -> Result<()>,
{
    if !(cfg.dt > 0.0) || cfg.save_every == 0 {
        return Err(Error::Config("integration needs dt > 0 and save_every >= 1".into()));
    }
    let mut x = x0.clone();
    sink(0.0, &x)?;
    for n in 1..=cfg.n_steps {
        x = step(&mut rhs, &x, cfg.dt, cfg.scheme)?;
        if !x.is_finite() {
            return Err(Error::NonFinite { step: n });
        }
        if n % cfg.save_every == 0 {
            sink(n as f64 * cfg.dt, &x)?;
        }
    }
    Ok(x)
}

/// Sampled trajectory `(time, state)`, including `t = 0`.
pub fn integrate<F>(rhs: F, x0: &StateField, cfg: &Integration) -> Result<Vec<(f64, StateField)>>
where
    F: FnMut(&StateField) -> Result<StateField>,
{
    let mut out = Vec::new();
    integrate_with(rhs, x0, cfg, |t, x| {
        out.push((t, x.clone()));
        Ok(())
    })?;
    Ok(out)
}

/// Random smooth initial condition settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialCondition {
    /// RMS of each velocity component.
    pub velocity_rms: f64,
    /// RMS of the scalar channel (`h` or `rho`).
    pub scalar_rms: f64,
    /// Largest integer wavenumber present.
    pub kmax: usize,
    /// Shallow water only: fraction of the geostrophic velocity of `h` added
    /// on top of the random velocity.
    pub geostrophic: f64,
}

impl Default for InitialCondition {
    fn default() -> Self {
        Self { velocity_rms: 0.1, scalar_rms: 10.0, kmax: 4, geostrophic: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub system: SystemKind,
    pub nx: usize,
    pub ny: usize,
    /// Integration step in the system's time unit (seconds for shallow water).
    pub dt_sim: f64,
    pub save_every: usize,
    /// Steps discarded before the first saved frame.
    #[serde(default)]
    pub spinup_steps: usize,
    #[serde(default)]
    pub scheme: Scheme,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub shallow_water: ShallowWaterParams,
    #[serde(default)]
    pub initial: InitialCondition,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt_sim > 0.0) || self.save_every == 0 {
            return Err(Error::Config("dt_sim must be positive and save_every at least 1".into()));
        }
        if self.system == SystemKind::ShallowWater {
            self.shallow_water.validate()?;
        }
        self.grid().map(|_| ())
    }

    pub fn grid(&self) -> Result<Grid2D> {
        match self.system {
            SystemKind::ShallowWater => self.shallow_water.grid(self.nx, self.ny),
            SystemKind::Euler => Grid2D::unit_square(self.nx, self.ny),
        }
    }

    pub fn frame_dt(&self) -> f64 {
        self.dt_sim * self.save_every as f64
    }

    pub fn rhs(&self) -> impl FnMut(&StateField) -> Result<StateField> + '_ {
        move |x: &StateField| match self.system {
            SystemKind::ShallowWater => shallow_water_rhs(x, &self.shallow_water),
            SystemKind::Euler => euler_rhs(x),
        }
    }

    /// Converts a simulator state to the collocated frame that is stored.
    pub fn to_frame(&self, x: &StateField) -> Result<StateField> {
        match self.system {
            SystemKind::ShallowWater => to_cell_centers(x),
            SystemKind::Euler => Ok(x.clone()),
        }
    }

    /// Seeded random smooth initial state in the simulator's own layout.
    pub fn initial_state(&self) -> Result<StateField> {
        let grid = self.grid()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let ic = &self.initial;
        let names = self.system.channels();
        let named = |fields: [Field2D; 3]| {
            StateField::new(names.iter().map(|s| s.to_string()).zip(fields).collect())
        };
        match self.system {
            SystemKind::ShallowWater => {
                let h = RandomField::new(&mut rng, ic.kmax).sample(&grid, 0.5, 0.5, ic.scalar_rms);
                let mut u = RandomField::new(&mut rng, ic.kmax).sample(&grid, 0.0, 0.5, ic.velocity_rms);
                let mut v = RandomField::new(&mut rng, ic.kmax).sample(&grid, 0.5, 0.0, ic.velocity_rms);
                if ic.geostrophic != 0.0 {
                    let (ug, vg) = geostrophic_velocity(&h, &self.shallow_water);
                    u = u.add(&ug.scale(ic.geostrophic));
                    v = v.add(&vg.scale(ic.geostrophic));
                }
                named([u, v, h])
            }
            SystemKind::Euler => {
                let psi = RandomField::new(&mut rng, ic.kmax).sample(&grid, 0.0, 0.0, 1.0);
                let (u, v) = velocity_from_streamfunction(&psi);
                let s = ic.velocity_rms / (0.5 * (u.rms().powi(2) + v.rms().powi(2))).sqrt();
                let rho = RandomField::new(&mut rng, ic.kmax).sample(&grid, 0.0, 0.0, ic.scalar_rms);
                named([u.scale(s), v.scale(s), rho.add(&Field2D::constant(grid, 1.0))])
            }
        }
    }
}

/// `(-g*/f0 dh/dy, g*/f0 dh/dx)` on the C-grid faces for `h` at centers.
fn geostrophic_velocity(h: &Field2D, p: &ShallowWaterParams) -> (Field2D, Field2D) {
    let g = *h.grid();
    let c = p.g_star / p.f0;
    // corner values of dh/dy and dh/dx averaged onto the faces
    let u = Field2D::from_index_fn(g, |i, j| {
        let im = (i + g.nx - 1) % g.nx;
        let jp = (j + 1) % g.ny;
        let jm = (j + g.ny - 1) % g.ny;
        let dhdy = 0.25 * (h.at(i, jp) - h.at(i, jm) + h.at(im, jp) - h.at(im, jm)) / g.dy;
        -c * dhdy
    });
    let v = Field2D::from_index_fn(g, |i, j| {
        let ip = (i + 1) % g.nx;
        let im = (i + g.nx - 1) % g.nx;
        let jm = (j + g.ny - 1) % g.ny;
        let dhdx = 0.25 * (h.at(ip, j) - h.at(im, j) + h.at(ip, jm) - h.at(im, jm)) / g.dx;
        c * dhdx
    });
    (u, v)
}

/// Band-limited random Fourier series with a red spectrum.
struct RandomField {
    modes: Vec<(f64, f64, f64, f64)>,
}

impl RandomField {
    fn new(rng: &mut impl Rng, kmax: usize) -> Self {
        let k = kmax as i64;
        let mut modes = Vec::new();
        for mx in -k..=k {
            for my in 0..=k {
                if (my == 0 && mx <= 0) || mx * mx + my * my > k * k {
                    continue;
                }
                let r2 = (mx * mx + my * my) as f64;
                let a: f64 = rng.sample::<f64, _>(StandardNormal) / r2;
                let phase = rng.random_range(0.0..2.0 * PI);
                modes.push((mx as f64, my as f64, a, phase));
            }
        }
        Self { modes }
    }

    /// Samples at `((i + ox) dx, (j + oy) dy)` scaled to the given RMS.
    fn sample(&self, grid: &Grid2D, ox: f64, oy: f64, rms: f64) -> Field2D {
        let (lx, ly) = (grid.lx(), grid.ly());
        let f = Field2D::from_index_fn(*grid, |i, j| {
            let x = (i as f64 + ox) * grid.dx / lx;
            let y = (j as f64 + oy) * grid.dy / ly;
            self.modes.iter().map(|&(mx, my, a, ph)| a * (2.0 * PI * (mx * x + my * y) + ph).cos()).sum()
        });
        let r = f.rms();
        if r == 0.0 { f } else { f.scale(rms / r) }
    }
}

/// Receives frames as they are produced.
pub trait FrameSink {
    fn push(&mut self, time: f64, frame: &StateField) -> Result<()>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Split {
    pub train: usize,
    pub test: usize,
}

impl Split {
    pub fn total(&self) -> usize {
        self.train + self.test
    }
}

/// Dataset metadata, mirrored in the JSON sidecar of the file format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub system: SystemKind,
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
    pub channels: Vec<String>,
    /// Simulated time between consecutive frames.
    pub frame_dt: f64,
    pub split: Split,
    pub sim: SimConfig,
}

impl DatasetMeta {
    pub fn grid(&self) -> Result<Grid2D> {
        Grid2D::with_extent(self.nx, self.ny, self.lx, self.ly)
    }
}

/// One long trajectory of collocated frames; the first `split.train`
/// frames are the training part and the rest the test part.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub meta: DatasetMeta,
    frames: Vec<Vec<f64>>,
}

impl Dataset {
    pub fn new(meta: DatasetMeta, frames: Vec<Vec<f64>>) -> Result<Self> {
        let per = meta.channels.len() * meta.nx * meta.ny;
        if let Some(bad) = frames.iter().find(|f| f.len() != per) {
            return Err(Error::Shape(format!("frame has {} values, expected {per}", bad.len())));
        }
        Ok(Self { meta, frames })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn grid(&self) -> Grid2D {
        self.meta.grid().expect("validated at construction")
    }

    pub fn channels(&self) -> &[String] {
        &self.meta.channels
    }

    /// Flat channel-major values of frame `k`.
    pub fn raw(&self, k: usize) -> &[f64] {
        &self.frames[k]
    }

    pub fn frame(&self, k: usize) -> StateField {
        StateField::from_flat(self.grid(), &self.meta.channels, &self.frames[k]).expect("consistent frame")
    }

    pub fn train_range(&self) -> std::ops::Range<usize> {
        0..self.meta.split.train.min(self.len())
    }

    pub fn test_range(&self) -> std::ops::Range<usize> {
        self.meta.split.train.min(self.len())..self.len()
    }
}

/// Collects frames in memory.
#[derive(Debug, Default)]
pub struct MemorySink {
    pub frames: Vec<Vec<f64>>,
}

impl FrameSink for MemorySink {
    fn push(&mut self, _time: f64, frame: &StateField) -> Result<()> {
        self.frames.push(frame.to_flat());
        Ok(())
    }
}

/// Only counts frames.
#[derive(Debug, Default)]
pub struct CountingSink {
    pub count: usize,
    pub last_time: f64,
}

impl FrameSink for CountingSink {
    fn push(&mut self, time: f64, _frame: &StateField) -> Result<()> {
        self.count += 1;
        self.last_time = time;
        Ok(())
    }
}

pub fn dataset_meta(cfg: &SimConfig, split: Split) -> Result<DatasetMeta> {
    let grid = cfg.grid()?;
    Ok(DatasetMeta {
        system: cfg.system,
        nx: cfg.nx,
        ny: cfg.ny,
        lx: grid.lx(),
        ly: grid.ly(),
        channels: cfg.system.channels().iter().map(|s| s.to_string()).collect(),
        frame_dt: cfg.frame_dt(),
        split,
        sim: cfg.clone(),
    })
}

/// Runs the spin-up, then streams `split.total()` collocated frames to
/// `sink`, timed from the end of the spin-up.
pub fn generate_into(cfg: &SimConfig, split: Split, sink: &mut dyn FrameSink) -> Result<DatasetMeta> {
    cfg.validate()?;
    let meta = dataset_meta(cfg, split)?;
    if split.total() == 0 {
        return Ok(meta);
    }
    let x0 = cfg.initial_state()?;
    let spin = Integration { dt: cfg.dt_sim, n_steps: cfg.spinup_steps, save_every: 1, scheme: cfg.scheme };
    let start = integrate_with(cfg.rhs(), &x0, &spin, |_, _| Ok(()))?;
    let run = Integration {
        dt: cfg.dt_sim,
        n_steps: (split.total() - 1) * cfg.save_every,
        save_every: cfg.save_every,
        scheme: cfg.scheme,
    };
    integrate_with(cfg.rhs(), &start, &run, |t, x| sink.push(t, &cfg.to_frame(x)?)).map_err(|e| match e {
        Error::NonFinite { step } => Error::NonFinite { step: step + cfg.spinup_steps },
        e => e,
    })?;
    Ok(meta)
}

pub fn generate_dataset(cfg: &SimConfig, split: Split) -> Result<Dataset> {
    let mut sink = MemorySink::default();
    let meta = generate_into(cfg, split, &mut sink)?;
    Dataset::new(meta, sink.frames)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decay(x: &StateField) -> Result<StateField> {
        Ok(x.map_channels(|f| f.scale(-1.0)))
    }

    fn scalar_state(v: f64) -> StateField {
        let g = Grid2D::unit_square(4, 4).unwrap();
        StateField::new(vec![("x".into(), Field2D::constant(g, v))]).unwrap()
    }

    #[test]
    fn euler_and_rk4_on_linear_decay() {
        let x0 = scalar_state(2.0);
        let cfg = Integration { dt: 0.1, n_steps: 10, save_every: 5, scheme: Scheme::Euler };
        let traj = integrate(decay, &x0, &cfg).unwrap();
        assert_eq!(traj.len(), 3);
        let last = traj[2].1.channel(0).at(0, 0);
        assert!((last - 2.0 * 0.9f64.powi(10)).abs() < 1e-14);
        assert!((traj[2].0 - 1.0).abs() < 1e-15);

        let cfg = Integration { scheme: Scheme::Rk4, ..cfg };
        let traj = integrate(decay, &x0, &cfg).unwrap();
        let last = traj[2].1.channel(0).at(0, 0);
        assert!((last / (2.0 * (-1.0f64).exp()) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn zero_rhs_keeps_state() {
        let x0 = scalar_state(0.7);
        let cfg = Integration { dt: 0.5, n_steps: 4, save_every: 1, scheme: Scheme::Rk4 };
        let traj = integrate(|x: &StateField| Ok(x.map_channels(|f| f.scale(0.0))), &x0, &cfg).unwrap();
        assert!(traj.iter().all(|(_, x)| x == &x0));
    }

    #[test]
    fn blow_up_is_reported_with_step() {
        let x0 = scalar_state(1.0);
        let cfg = Integration { dt: 1.0, n_steps: 10_000, save_every: 1, scheme: Scheme::Euler };
        let grow = |x: &StateField| Ok(x.map_channels(|f| f.scale(1e100)));
        match integrate(grow, &x0, &cfg) {
            Err(Error::NonFinite { step }) => assert!(step > 1 && step < 10),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn random_field_has_requested_rms() {
        let g = Grid2D::unit_square(16, 16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = RandomField::new(&mut rng, 3).sample(&g, 0.0, 0.0, 2.5);
        assert!((f.rms() - 2.5).abs() < 1e-12);
        assert!(f.mean().abs() < 1e-12);
    }
}
