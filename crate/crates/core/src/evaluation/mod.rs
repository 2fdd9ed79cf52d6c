//! Forecast metrics, the persistence baseline and the between-frames
//! interpolation study.

mod metrics;

use std::ops::Range;

use serde::{Deserialize, Serialize};

pub use metrics::{forecast_mse, frame_cosine, frame_mse, hidden_cosine, persistence_baseline, COSINE_MIN_NORM};

use crate::adjoint::ObservationOperator;
use crate::autodiff::{Network, Real, Tensor};
use crate::error::{Error, Result};
use crate::fields::StateField;
use crate::model::{InitialInputs, InitialStateModel};
use crate::simulators::{integrate_with, step, Dataset, Integration, Scheme, SimConfig};
use crate::training::{windows_in, Learned, Window};

/// Free-running explicit Euler rollout from `g(inputs)`, returning the
/// states at frames `1..=k`.
pub fn forecast<T: Real, N: Network<T> + ?Sized>(
    model: &N,
    init: &InitialStateModel<T>,
    inputs: InitialInputs<'_, T>,
    k: usize,
    substeps: usize,
) -> Result<Vec<Tensor<T>>> {
    let mut x = init.evaluate(inputs)?;
    let dt = T::lit(1.0 / substeps as f64);
    let mut out = Vec::with_capacity(k);
    for frame in 1..=k {
        for s in 1..=substeps {
            let f = model.evaluate(&x)?;
            x.axpy_assign(dt, &f);
            if !x.is_finite() {
                return Err(Error::NonFinite { step: (frame - 1) * substeps + s });
            }
        }
        out.push(x.clone());
    }
    Ok(out)
}

/// Physical-unit forecast of frames `current + 1 ..= current + k`.
pub fn forecast_frames<T: Real>(model: &Learned<T>, data: &Dataset, current: usize, k: usize, substeps: usize) -> Result<Vec<StateField>> {
    let sample = model.sample(data, Window { current }, &[])?;
    let states = forecast(&model.dynamics, &model.initial, sample.problem(&[]).inputs, k, substeps)?;
    let all: Vec<usize> = (0..model.channels().len()).collect();
    states
        .iter()
        .map(|x| StateField::from_flat(data.grid(), model.channels(), &model.norm.restore(x, &all)?))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub horizons: Vec<usize>,
    pub substeps: usize,
    /// Frames between consecutive evaluation windows.
    pub window_stride: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { horizons: vec![1, 5, 10], substeps: 3, window_stride: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastReport {
    pub horizons: Vec<usize>,
    pub mse: Vec<f64>,
    /// Velocity cosine, when the state has `u` and `v`.
    pub cosine: Vec<Option<f64>>,
    pub baseline_mse: Vec<f64>,
    pub n_windows: usize,
    /// Window-mean single-frame errors at offsets `1..=max horizon`.
    pub frame_mse: Vec<f64>,
    pub frame_baseline: Vec<f64>,
    pub frame_cosine: Vec<Option<f64>>,
}

impl ForecastReport {
    pub fn at(&self, k: usize) -> Option<usize> {
        self.horizons.iter().position(|&h| h == k)
    }

    /// Plain CSV, one row per horizon.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("K,mse,persistence_mse,cosine\n");
        for (i, k) in self.horizons.iter().enumerate() {
            let cos = self.cosine[i].map(|c| c.to_string()).unwrap_or_default();
            s.push_str(&format!("{k},{},{},{cos}\n", self.mse[i], self.baseline_mse[i]));
        }
        s
    }
}

/// Per-offset errors accumulated over windows.
struct FrameErrors {
    mse: Vec<f64>,
    baseline: Vec<f64>,
    cosine: Vec<Option<f64>>,
    n_windows: usize,
}

fn velocity(x: &StateField) -> Option<(&crate::fields::Field2D, &crate::fields::Field2D)> {
    Some((x.get("u")?, x.get("v")?))
}

fn frame_errors<T: Real>(model: &Learned<T>, data: &Dataset, frames: Range<usize>, k: usize, substeps: usize, window_stride: usize) -> Result<FrameErrors> {
    model.check_dataset(data)?;
    if k == 0 {
        return Ok(FrameErrors { mse: vec![], baseline: vec![], cosine: vec![], n_windows: 0 });
    }
    let range = windows_in(frames, model.initial.history_len(), k, 1)?;
    let obs = &model.obs;
    let mut mse = vec![0.0; k];
    let mut baseline = vec![0.0; k];
    let mut cos_sum = vec![0.0; k];
    let mut cos_n = vec![0usize; k];
    let mut n = 0;
    for cur in range.step_by(window_stride.max(1)) {
        let pred = forecast_frames(model, data, cur, k, substeps)?;
        let y0 = obs.observe_state(&data.frame(cur))?;
        for (i, p) in pred.iter().enumerate() {
            let truth = data.frame(cur + i + 1);
            let y = obs.observe_state(&truth)?;
            mse[i] += frame_mse(&obs.observe_state(p)?, &y)?;
            baseline[i] += frame_mse(&y0, &y)?;
            if let (Some(a), Some(b)) = (velocity(p), velocity(&truth)) {
                if let Some(c) = frame_cosine(a, b) {
                    cos_sum[i] += c;
                    cos_n[i] += 1;
                }
            }
        }
        n += 1;
    }
    let nf = n as f64;
    Ok(FrameErrors {
        mse: mse.iter().map(|v| v / nf).collect(),
        baseline: baseline.iter().map(|v| v / nf).collect(),
        cosine: cos_sum.iter().zip(&cos_n).map(|(s, &c)| (c > 0).then(|| s / c as f64)).collect(),
        n_windows: n,
    })
}

fn prefix_mean(v: &[f64], k: usize) -> f64 {
    v[..k].iter().sum::<f64>() / k as f64
}

/// Horizon-averaged MSE, persistence MSE and velocity cosine over every
/// window in `frames` (stepping by `window_stride`).
pub fn evaluate_forecasts<T: Real>(model: &Learned<T>, data: &Dataset, frames: Range<usize>, cfg: &EvalConfig) -> Result<ForecastReport> {
    if cfg.horizons.windows(2).any(|w| w[1] <= w[0]) || cfg.horizons.first() == Some(&0) {
        return Err(Error::Config("horizons must be positive and increasing".into()));
    }
    let kmax = cfg.horizons.last().copied().unwrap_or(0);
    let e = frame_errors(model, data, frames, kmax, cfg.substeps, cfg.window_stride)?;
    let cosine = cfg
        .horizons
        .iter()
        .map(|&k| {
            let c: Vec<f64> = e.cosine[..k].iter().flatten().copied().collect();
            (!c.is_empty()).then(|| c.iter().sum::<f64>() / c.len() as f64)
        })
        .collect();
    Ok(ForecastReport {
        horizons: cfg.horizons.clone(),
        mse: cfg.horizons.iter().map(|&k| prefix_mean(&e.mse, k)).collect(),
        cosine,
        baseline_mse: cfg.horizons.iter().map(|&k| prefix_mean(&e.baseline, k)).collect(),
        n_windows: e.n_windows,
        frame_mse: e.mse,
        frame_baseline: e.baseline,
        frame_cosine: e.cosine,
    })
}

/// Offsets `1..=k` split into multiples of `stride` and the rest.
pub fn interpolation_offsets(stride: usize, k: usize) -> (Vec<usize>, Vec<usize>) {
    (1..=k).partition(|o| o % stride.max(1) == 0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterpolationReport {
    pub stride: usize,
    pub seen: Vec<usize>,
    pub unseen: Vec<usize>,
    /// Single-frame MSE at offsets `1..=k`.
    pub mse: Vec<f64>,
    pub persistence: Vec<f64>,
    pub seen_mse: f64,
    pub unseen_mse: f64,
    pub seen_persistence: f64,
    pub unseen_persistence: f64,
    pub n_windows: usize,
}

fn mean_at(v: &[f64], offsets: &[usize]) -> f64 {
    if offsets.is_empty() {
        return f64::NAN;
    }
    offsets.iter().map(|&o| v[o - 1]).sum::<f64>() / offsets.len() as f64
}

/// Per-offset errors of a model trained on every `stride`-th frame,
/// evaluated on every frame in between.
pub fn interpolation_eval<T: Real>(
    model: &Learned<T>,
    data: &Dataset,
    frames: Range<usize>,
    stride: usize,
    k: usize,
    substeps: usize,
    window_stride: usize,
) -> Result<InterpolationReport> {
    let e = frame_errors(model, data, frames, k, substeps, window_stride)?;
    let (seen, unseen) = interpolation_offsets(stride, k);
    Ok(InterpolationReport {
        stride,
        seen_mse: mean_at(&e.mse, &seen),
        unseen_mse: mean_at(&e.mse, &unseen),
        seen_persistence: mean_at(&e.baseline, &seen),
        unseen_persistence: mean_at(&e.baseline, &unseen),
        seen,
        unseen,
        mse: e.mse,
        persistence: e.baseline,
        n_windows: e.n_windows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub seen_mse: f64,
    pub unseen_mse: f64,
    /// Unseen-offset MSE between Euler rollouts at `dt` and `dt/2`: an
    /// estimate of the time-stepping error alone.
    pub discretization_mse: f64,
    pub ratio: f64,
}

/// Interpolation with the true right-hand side as `F`: explicit Euler with
/// `substeps` per frame from the true state, compared with the generator's
/// own trajectory on the observed channels.
pub fn oracle_interpolation(
    sim: &SimConfig,
    observed: &[String],
    stride: usize,
    k: usize,
    substeps: usize,
    n_windows: usize,
) -> Result<OracleReport> {
    sim.validate()?;
    let (seen, unseen) = interpolation_offsets(stride, k);
    let names: Vec<String> = sim.system.channels().iter().map(|s| s.to_string()).collect();
    let obs = ObservationOperator::from_names(&names, observed)?;
    let spin = Integration { dt: sim.dt_sim, n_steps: sim.spinup_steps, save_every: 1, scheme: sim.scheme };
    let mut start = integrate_with(sim.rhs(), &sim.initial_state()?, &spin, |_, _| Ok(()))?;

    let euler = |x0: &StateField, n: usize| -> Result<Vec<StateField>> {
        let dt = sim.frame_dt() / n as f64;
        let mut rhs = sim.rhs();
        let mut x = x0.clone();
        let mut out = Vec::with_capacity(k);
        for _ in 0..k {
            for _ in 0..n {
                x = step(&mut rhs, &x, dt, Scheme::Euler)?;
            }
            out.push(obs.observe_state(&sim.to_frame(&x)?)?);
        }
        Ok(out)
    };
    let (mut e_seen, mut e_unseen, mut e_disc) = (0.0, 0.0, 0.0);
    for _ in 0..n_windows {
        let mut truth = Vec::with_capacity(k);
        let mut rhs = sim.rhs();
        let mut x = start.clone();
        for _ in 0..k {
            for _ in 0..sim.save_every {
                x = step(&mut rhs, &x, sim.dt_sim, sim.scheme)?;
            }
            truth.push(obs.observe_state(&sim.to_frame(&x)?)?);
        }
        let coarse = euler(&start, substeps)?;
        let fine = euler(&start, 2 * substeps)?;
        let err = |a: &[StateField], b: &[StateField], offs: &[usize]| -> Result<f64> {
            let mut s = 0.0;
            for &o in offs {
                s += frame_mse(&a[o - 1], &b[o - 1])?;
            }
            Ok(s / offs.len().max(1) as f64)
        };
        e_seen += err(&coarse, &truth, &seen)?;
        e_unseen += err(&coarse, &truth, &unseen)?;
        e_disc += err(&coarse, &fine, &unseen)?;
        start = x;
    }
    let n = n_windows.max(1) as f64;
    let (seen_mse, unseen_mse, discretization_mse) = (e_seen / n, e_unseen / n, e_disc / n);
    Ok(OracleReport { seen_mse, unseen_mse, discretization_mse, ratio: unseen_mse / discretization_mse })
}
