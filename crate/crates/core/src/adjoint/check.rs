//! The oracle chain on a tiny random problem: central differences against
//! backprop, then backprop against the continuous adjoint at `dt` and `dt/2`.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    finite_difference_gradient, grad_backprop, grad_continuous_adjoint, loss, record_on, rollout, ObservationOperator,
    Problem, Schedule,
};
use crate::autodiff::{Fault, Network, Tape, Tensor};
use crate::error::Result;
use crate::model::{init_orthogonal_with_gain, DynamicsConfig, DynamicsModel, InitialInputs, InitialStateModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradCheckConfig {
    pub grid: usize,
    pub channels: usize,
    /// Observed channel indices; the rest are hidden.
    pub observed: Vec<usize>,
    pub width: usize,
    pub n_down: usize,
    pub n_blocks: usize,
    pub target_len: usize,
    pub substeps: usize,
    pub n_coords: usize,
    pub eps: f64,
    pub seed: u64,
    pub fd_tolerance: f64,
    pub gap_tolerance: f64,
    pub ratio_range: (f64, f64),
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            grid: 8,
            channels: 2,
            observed: vec![0],
            width: 8,
            n_down: 2,
            n_blocks: 1,
            target_len: 6,
            substeps: 3,
            n_coords: 24,
            eps: 1e-6,
            seed: 1,
            fd_tolerance: 1e-6,
            gap_tolerance: 5e-2,
            ratio_range: (1.5, 2.5),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub n_params: usize,
    pub coords: Vec<usize>,
    pub loss: f64,
    /// `|g_fd - g_bp| / |g_bp|` over the probed coordinates.
    pub fd_rel_error: f64,
    /// Largest per-coordinate error relative to `max |g_bp|` on the probe.
    pub fd_max_error: f64,
    /// `|g_adj - g_bp| / |g_bp|` at `dt` and `dt / 2`.
    pub gap: f64,
    pub gap_half: f64,
    pub ratio: f64,
    pub fd_pass: bool,
    pub gap_pass: bool,
    pub ratio_pass: bool,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.fd_pass && self.gap_pass && self.ratio_pass
    }
}

fn rel(a: &[f64], b: &[f64]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let n: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    d / n
}

/// Runs the chain in double precision. `fault` corrupts the backprop pass
/// so that the harness itself can be seen to fail.
pub fn gradcheck(cfg: &GradCheckConfig, fault: Option<Fault>) -> Result<GradCheckReport> {
    let dcfg = DynamicsConfig {
        state_channels: cfg.channels,
        width: cfg.width,
        n_down: cfg.n_down,
        n_blocks: cfg.n_blocks,
        kernel_size: 3,
    };
    // Unit output gain: a damped F would make the adjoint gap trivially small.
    let model = DynamicsModel::<f64>::from_params(dcfg.clone(), init_orthogonal_with_gain(&dcfg, cfg.seed, 1.0)?)?;
    let obs = ObservationOperator::new(cfg.observed.clone(), cfg.channels)?;
    let init = InitialStateModel::<f64>::identity();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed + 100);
    let mut random = |c: usize| {
        let n = c * cfg.grid * cfg.grid;
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        Tensor::from_f64(&[c, cfg.grid, cfg.grid], &v)
    };
    let x0 = random(cfg.channels)?;
    let targets = (0..cfg.target_len).map(|_| random(obs.n_observed())).collect::<Result<Vec<_>>>()?;
    let problem = Problem { inputs: InitialInputs::Full(&x0), targets: &targets, resets: &[] };

    let schedule = Schedule::dense(cfg.target_len, cfg.substeps);
    let mut rec = record_on(Tape::with_fault(fault), &model, &init, &obs, &schedule, &problem)?;
    let bp = grad_backprop(&mut rec, &model, &init)?.to_f64();

    let n_params = model.params().len();
    let mut coords = sample(&mut rng, n_params, cfg.n_coords.min(n_params)).into_vec();
    coords.sort_unstable();
    let fd = finite_difference_gradient(
        |theta| {
            let mut m = model.clone();
            m.params_mut().set_flat(theta)?;
            loss(&m, &init, &obs, &schedule, &problem)
        },
        model.params().flat(),
        &coords,
        cfg.eps,
    )?;
    let probe: Vec<f64> = coords.iter().map(|&i| bp[i]).collect();
    let fd_rel_error = rel(&fd, &probe);
    let scale = probe.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let fd_max_error = fd.iter().zip(&probe).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())) / scale;

    let gap_at = |substeps: usize| -> Result<f64> {
        let s = Schedule::dense(cfg.target_len, substeps);
        let (roll, _) = rollout(&model, &init, &obs, &s, &problem)?;
        let adj = grad_continuous_adjoint(&model, &init, &obs, &s, &problem, &roll)?.to_f64();
        let mut rec = record_on(Tape::with_fault(fault), &model, &init, &obs, &s, &problem)?;
        let bp = grad_backprop(&mut rec, &model, &init)?.to_f64();
        Ok(rel(&adj, &bp))
    };
    let gap = gap_at(cfg.substeps)?;
    let gap_half = gap_at(2 * cfg.substeps)?;
    let ratio = gap / gap_half;

    Ok(GradCheckReport {
        n_params,
        coords,
        loss: rec.report.total,
        fd_rel_error,
        fd_max_error,
        gap,
        gap_half,
        ratio,
        fd_pass: fd_rel_error <= cfg.fd_tolerance,
        gap_pass: gap <= cfg.gap_tolerance,
        ratio_pass: (cfg.ratio_range.0..=cfg.ratio_range.1).contains(&ratio),
    })
}
