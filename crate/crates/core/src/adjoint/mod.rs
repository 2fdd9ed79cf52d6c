//! Rollouts of the learned system and the gradient of the trajectory loss.
//!
//! The loss of one sequence is
//! `J = (1/l) sum_k mean_x sum_c (H X_k - Y_k)^2` over the `l` observation
//! times. Two gradients are offered: exact reverse mode through the explicit
//! Euler rollout ([`grad_backprop`]) and the continuous adjoint equation
//! integrated backward on the same substep grid ([`grad_continuous_adjoint`]),
//! which agrees with the former up to `O(dt)`.

mod check;
mod observation;

pub use check::{gradcheck, GradCheckConfig, GradCheckReport};
pub use observation::ObservationOperator;

use crate::autodiff::{vjp, Network, ParamVars, Real, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::model::{InitialInputs, InitialStateModel};

/// Euler substeps per frame and the frame offsets that carry targets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schedule {
    pub substeps: usize,
    pub target_frames: Vec<usize>,
}

impl Schedule {
    /// Targets at frames `1..=l`.
    pub fn dense(l: usize, substeps: usize) -> Self {
        Self { substeps, target_frames: (1..=l).collect() }
    }

    /// Targets at frames `stride, 2 stride, ..., l stride`.
    pub fn strided(l: usize, stride: usize, substeps: usize) -> Self {
        Self { substeps, target_frames: (1..=l).map(|k| k * stride).collect() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.substeps == 0 || self.target_frames.is_empty() {
            return Err(Error::Config("schedule needs substeps >= 1 and at least one target".into()));
        }
        if self.target_frames[0] == 0 || self.target_frames.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("target frames must be positive and increasing".into()));
        }
        Ok(())
    }

    /// Step size in frame units.
    pub fn dt(&self) -> f64 {
        1.0 / self.substeps as f64
    }

    pub fn n_steps(&self) -> usize {
        self.target_frames.last().copied().unwrap_or(0) * self.substeps
    }

    /// Substep index of each target.
    pub fn obs_steps(&self) -> Vec<usize> {
        self.target_frames.iter().map(|f| f * self.substeps).collect()
    }
}

/// What one training sequence provides.
#[derive(Debug, Clone, Copy)]
pub struct Problem<'a, T> {
    pub inputs: InitialInputs<'a, T>,
    /// Observations at the schedule's target frames.
    pub targets: &'a [Tensor<T>],
    /// Scheduled-sampling resets per target; empty means none.
    pub resets: &'a [bool],
}

impl<T: Real> Problem<'_, T> {
    fn reset(&self, k: usize) -> bool {
        self.resets.get(k).copied().unwrap_or(false)
    }

    fn check(&self, schedule: &Schedule) -> Result<()> {
        schedule.validate()?;
        if self.targets.len() != schedule.target_frames.len() {
            return Err(Error::Shape(format!(
                "{} targets for {} target frames",
                self.targets.len(),
                schedule.target_frames.len()
            )));
        }
        if !self.resets.is_empty() && self.resets.len() != self.targets.len() {
            return Err(Error::Shape("one reset flag per target expected".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    /// Mean of `per_observation`.
    pub total: f64,
    /// Grid-mean squared error summed over observed channels, per target.
    pub per_observation: Vec<f64>,
}

/// Forward trajectory on the substep grid.
#[derive(Debug, Clone)]
pub struct Rollout<T> {
    pub dt: f64,
    /// `states[n]` is the state after substep `n`, before any
    /// scheduled-sampling overwrite; `states[0]` is the output of `g`.
    pub states: Vec<Tensor<T>>,
    pub obs_steps: Vec<usize>,
}

impl<T: Real> Rollout<T> {
    pub fn times(&self) -> Vec<f64> {
        (0..self.states.len()).map(|n| n as f64 * self.dt).collect()
    }

    /// Predicted states at the target times.
    pub fn at_targets(&self) -> Vec<&Tensor<T>> {
        self.obs_steps.iter().map(|&n| &self.states[n]).collect()
    }
}

/// Gradient split by component.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient<T> {
    pub dynamics: Vec<T>,
    pub initial: Vec<T>,
}

impl<T: Real> Gradient<T> {
    /// Both parts as one `f64` vector, dynamics first.
    pub fn to_f64(&self) -> Vec<f64> {
        self.dynamics.iter().chain(&self.initial).map(|v| v.as_f64()).collect()
    }
}

/// Residual statistics and the direct loss sensitivity `dJ/dX_k`.
fn residual<T: Real>(obs: &ObservationOperator, x: &Tensor<T>, y: &Tensor<T>, weight: f64) -> Result<(f64, Tensor<T>)> {
    let pred = obs.observe(x)?;
    pred.same_shape(y)?;
    let r = pred.sub(y);
    let (_, h, w) = r.chw()?;
    let pixels = (h * w) as f64;
    let sq: f64 = r.data().iter().map(|v| v.as_f64() * v.as_f64()).sum::<f64>() / pixels;
    let seed = obs.adjoint(&r.scale(T::lit(2.0 * weight / pixels)))?;
    Ok((sq, seed))
}

fn observation_weight(l: usize) -> f64 {
    1.0 / l as f64
}

fn initial_state<T: Real>(init: &InitialStateModel<T>, inputs: InitialInputs<'_, T>) -> Result<Tensor<T>> {
    init.evaluate(inputs)
}

/// Explicit Euler rollout without recording; also returns the loss.
pub fn rollout<T: Real, N: Network<T> + ?Sized>(
    model: &N,
    init: &InitialStateModel<T>,
    obs: &ObservationOperator,
    schedule: &Schedule,
    problem: &Problem<'_, T>,
) -> Result<(Rollout<T>, LossReport)> {
    problem.check(schedule)?;
    let dt = T::lit(schedule.dt());
    let obs_steps = schedule.obs_steps();
    let weight = observation_weight(obs_steps.len());
    let mut cur = initial_state(init, problem.inputs)?;
    let mut states = vec![cur.clone()];
    let mut per_observation = Vec::with_capacity(obs_steps.len());
    let mut k = 0;
    for n in 1..=schedule.n_steps() {
        let f = model.evaluate(&cur)?;
        let mut x = cur;
        x.axpy_assign(dt, &f);
        if !x.is_finite() {
            return Err(Error::NonFinite { step: n });
        }
        cur = x.clone();
        if obs_steps[k] == n {
            let (sq, _) = residual(obs, &x, &problem.targets[k], weight)?;
            per_observation.push(sq);
            if problem.reset(k) {
                overwrite(&mut cur, obs, &problem.targets[k]);
            }
            k += 1;
        }
        states.push(x);
    }
    let report = LossReport { total: per_observation.iter().sum::<f64>() * weight, per_observation };
    Ok((Rollout { dt: schedule.dt(), states, obs_steps }, report))
}

fn overwrite<T: Real>(x: &mut Tensor<T>, obs: &ObservationOperator, y: &Tensor<T>) {
    for (src, &dst) in obs.channels().iter().enumerate() {
        x.channel_mut(dst).copy_from_slice(y.channel(src));
    }
}

/// Loss of one sequence.
pub fn loss<T: Real, N: Network<T> + ?Sized>(
    model: &N,
    init: &InitialStateModel<T>,
    obs: &ObservationOperator,
    schedule: &Schedule,
    problem: &Problem<'_, T>,
) -> Result<f64> {
    Ok(rollout(model, init, obs, schedule, problem)?.1.total)
}

/// A rollout recorded on a tape, ready for one reverse pass.
pub struct Recorded<T> {
    tape: Tape<T>,
    dynamics_vars: ParamVars,
    initial_vars: ParamVars,
    seeds: Vec<(Var, Tensor<T>)>,
    pub report: LossReport,
    /// Predicted states at the target times.
    pub predictions: Vec<Tensor<T>>,
}

impl<T: Real> Recorded<T> {
    pub fn is_consumed(&self) -> bool {
        self.tape.is_consumed()
    }
}

/// Runs the rollout on a tape so that [`grad_backprop`] can differentiate it.
pub fn record<T: Real, N: Network<T> + ?Sized>(
    model: &N,
    init: &InitialStateModel<T>,
    obs: &ObservationOperator,
    schedule: &Schedule,
    problem: &Problem<'_, T>,
) -> Result<Recorded<T>> {
    record_on(Tape::new(), model, init, obs, schedule, problem)
}

fn record_on<T: Real, N: Network<T> + ?Sized>(
    mut tape: Tape<T>,
    model: &N,
    init: &InitialStateModel<T>,
    obs: &ObservationOperator,
    schedule: &Schedule,
    problem: &Problem<'_, T>,
) -> Result<Recorded<T>> {
    problem.check(schedule)?;
    let dynamics_vars = model.params().register(&mut tape);
    let initial_vars = init.params().register(&mut tape);
    let dt = T::lit(schedule.dt());
    let obs_steps = schedule.obs_steps();
    let weight = observation_weight(obs_steps.len());
    let mut cur = init.forward(&mut tape, &initial_vars, problem.inputs)?;
    let mut seeds = Vec::with_capacity(obs_steps.len());
    let mut per_observation = Vec::with_capacity(obs_steps.len());
    let mut predictions = Vec::with_capacity(obs_steps.len());
    let mut k = 0;
    for n in 1..=schedule.n_steps() {
        let f = model.forward(&mut tape, &dynamics_vars, cur)?;
        let x = tape.axpy(cur, dt, f)?;
        if !tape.value(x).is_finite() {
            return Err(Error::NonFinite { step: n });
        }
        cur = x;
        if obs_steps[k] == n {
            let (sq, seed) = residual(obs, tape.value(x), &problem.targets[k], weight)?;
            per_observation.push(sq);
            seeds.push((x, seed));
            predictions.push(tape.value(x).clone());
            if problem.reset(k) {
                cur = tape.overwrite_channels(x, obs.channels(), &problem.targets[k])?;
            }
            k += 1;
        }
    }
    let report = LossReport { total: per_observation.iter().sum::<f64>() * weight, per_observation };
    Ok(Recorded { tape, dynamics_vars, initial_vars, seeds, report, predictions })
}

/// Exact gradient of the discrete loss by reverse mode through every
/// substep and through `g`. The recording can be used once.
pub fn grad_backprop<T: Real, N: Network<T> + ?Sized>(
    rec: &mut Recorded<T>,
    model: &N,
    init: &InitialStateModel<T>,
) -> Result<Gradient<T>> {
    let seeds = std::mem::take(&mut rec.seeds);
    if rec.tape.is_consumed() {
        return Err(Error::TapeConsumed);
    }
    let grads = rec.tape.backward_from(seeds)?;
    Ok(Gradient {
        dynamics: model.params().gather_grad(&rec.dynamics_vars, &grads),
        initial: init.params().gather_grad(&rec.initial_vars, &grads),
    })
}

/// Loss and backprop gradient in one call.
pub fn loss_and_grad<T: Real, N: Network<T> + ?Sized>(
    model: &N,
    init: &InitialStateModel<T>,
    obs: &ObservationOperator,
    schedule: &Schedule,
    problem: &Problem<'_, T>,
) -> Result<(LossReport, Gradient<T>)> {
    let mut rec = record(model, init, obs, schedule, problem)?;
    let g = grad_backprop(&mut rec, model, init)?;
    Ok((rec.report, g))
}

/// Gradient from the adjoint state `lambda`, integrated backward from
/// `lambda_T = 0` with explicit Euler on the forward substep grid:
/// `lambda_{n-1} = lambda_n + dt (dF(X_n))^T lambda_n`, with an impulsive
/// source `-dJ/dX_k` at each target time. The gradient is
/// `-sum_n dt (dF/dtheta(X_{n-1}))^T lambda_n - (dg/dtheta)^T lambda_0`.
///
/// The parameter integral pairs `lambda_n` with the state at the left end of
/// its substep. Pairing it with `X_n` is just as consistent but its `O(dt)`
/// constant is several times larger for the small networks used here.
/// Each substep costs two VJPs.
pub fn grad_continuous_adjoint<T: Real, N: Network<T> + ?Sized>(
    model: &N,
    init: &InitialStateModel<T>,
    obs: &ObservationOperator,
    schedule: &Schedule,
    problem: &Problem<'_, T>,
    rollout: &Rollout<T>,
) -> Result<Gradient<T>> {
    problem.check(schedule)?;
    let n_steps = schedule.n_steps();
    if rollout.states.len() != n_steps + 1 {
        return Err(Error::Shape("rollout does not match the schedule".into()));
    }
    let dt = schedule.dt();
    let weight = observation_weight(rollout.obs_steps.len());
    let mut lambda = Tensor::zeros(rollout.states[0].shape());
    let mut acc = vec![0.0f64; model.params().len()];
    let mut k = rollout.obs_steps.len();
    for n in (1..=n_steps).rev() {
        let x = &rollout.states[n];
        if k > 0 && rollout.obs_steps[k - 1] == n {
            k -= 1;
            if problem.reset(k) {
                for &c in obs.channels() {
                    lambda.channel_mut(c).iter_mut().for_each(|v| *v = T::zero());
                }
            }
            let (_, seed) = residual(obs, x, &problem.targets[k], weight)?;
            lambda.axpy_assign(-T::one(), &seed);
        }
        // parameter sensitivity over (t_{n-1}, t_n]: lambda_n against F at
        // the state the forward step left from, after any overwrite
        let left = match rollout.obs_steps.iter().position(|&m| m == n - 1) {
            Some(j) if problem.reset(j) => {
                let mut x = rollout.states[n - 1].clone();
                overwrite(&mut x, obs, &problem.targets[j]);
                std::borrow::Cow::Owned(x)
            }
            _ => std::borrow::Cow::Borrowed(&rollout.states[n - 1]),
        };
        let vp = vjp(model, &left, &lambda, None)?;
        for (a, p) in acc.iter_mut().zip(&vp.params) {
            *a -= dt * p.as_f64();
        }
        let v = vjp(model, x, &lambda, None)?;
        lambda.axpy_assign(T::lit(dt), &v.state);
        if !lambda.is_finite() {
            return Err(Error::NonFinite { step: n });
        }
    }
    let initial = init.vjp_params(problem.inputs, &lambda)?.into_iter().map(|v| -v).collect();
    Ok(Gradient { dynamics: acc.into_iter().map(T::lit).collect(), initial })
}

/// Central differences `(J(theta + eps e_i) - J(theta - eps e_i)) / (2 eps)`
/// at the listed coordinates.
pub fn finite_difference_gradient<F>(mut loss_fn: F, params: &[f64], coords: &[usize], eps: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let mut theta = params.to_vec();
    coords
        .iter()
        .map(|&i| {
            if i >= theta.len() {
                return Err(Error::Shape(format!("coordinate {i} out of range for {} parameters", theta.len())));
            }
            let orig = theta[i];
            theta[i] = orig + eps;
            let plus = loss_fn(&theta)?;
            theta[i] = orig - eps;
            let minus = loss_fn(&theta)?;
            theta[i] = orig;
            Ok((plus - minus) / (2.0 * eps))
        })
        .collect()
}
