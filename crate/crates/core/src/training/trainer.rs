use std::ops::Range;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{GradMode, ModelConfig, TrainConfig};
use super::data::{sample_minibatch, ss_probability, windows_in, Normalizer, Sample, Window};
use super::learned::{Learned, LearnedSpec};
use super::optim::OptimizerState;
use crate::adjoint::{grad_continuous_adjoint, loss_and_grad, rollout, Schedule};
use crate::autodiff::Real;
use crate::error::{Error, Result};
use crate::simulators::Dataset;

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LogRecord {
    Iter { iter: u64, epoch: usize, loss: f64, ss_prob: f64, skipped: bool, wall_s: f64 },
    Epoch { epoch: usize, iter: u64, val_loss: f64, best_val: f64, improved: bool, wall_s: f64 },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub records: Vec<LogRecord>,
}

impl TrainLog {
    /// Training losses in iteration order.
    pub fn losses(&self) -> Vec<f64> {
        self.records
            .iter()
            .filter_map(|r| match r {
                LogRecord::Iter { loss, .. } => Some(*loss),
                _ => None,
            })
            .collect()
    }

    pub fn validation(&self) -> Vec<f64> {
        self.records
            .iter()
            .filter_map(|r| match r {
                LogRecord::Epoch { val_loss, .. } => Some(*val_loss),
                _ => None,
            })
            .collect()
    }
}

/// Lowest validation loss so far and the parameters that reached it.
#[derive(Debug, Clone, PartialEq)]
pub struct Best<T> {
    pub val_loss: f64,
    pub epoch: usize,
    pub params: Vec<T>,
}

/// Training state between iterations; everything here goes into a
/// checkpoint.
pub struct Trainer<T> {
    pub config: TrainConfig,
    pub model: Learned<T>,
    pub opt: OptimizerState,
    pub rng: ChaCha8Rng,
    pub iteration: u64,
    pub epoch: usize,
    pub best: Option<Best<T>>,
    pub bad_epochs: usize,
    pool: Option<rayon::ThreadPool>,
}

/// Training and validation frames inside the dataset's train part; the
/// validation part is its last tenth.
pub fn train_val_split(data: &Dataset) -> (Range<usize>, Range<usize>) {
    let r = data.train_range();
    let n_val = r.len().div_ceil(10);
    let cut = r.end - n_val;
    (r.start..cut, cut..r.end)
}

fn schedule(cfg: &TrainConfig) -> Schedule {
    Schedule::strided(cfg.target_len, cfg.target_stride, cfg.substeps)
}

/// Loss and flat gradient of one sequence.
fn sample_gradient<T: Real>(
    model: &Learned<T>,
    schedule: &Schedule,
    sample: &Sample<T>,
    resets: &[bool],
    mode: GradMode,
) -> Result<(f64, Vec<f64>)> {
    let p = sample.problem(resets);
    let (loss, g) = match mode {
        GradMode::Backprop => {
            let (report, g) = loss_and_grad(&model.dynamics, &model.initial, &model.obs, schedule, &p)?;
            (report.total, g)
        }
        GradMode::Adjoint => {
            let (roll, report) = rollout(&model.dynamics, &model.initial, &model.obs, schedule, &p)?;
            let g = grad_continuous_adjoint(&model.dynamics, &model.initial, &model.obs, schedule, &p, &roll)?;
            (report.total, g)
        }
    };
    Ok((loss, g.to_f64()))
}

impl<T: Real> Trainer<T> {
    pub fn new(data: &Dataset, model_cfg: &ModelConfig, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let (train, _) = train_val_split(data);
        let norm = Normalizer::fit(data, train)?;
        let history_len = match model_cfg.initial {
            super::config::InitialMode::Identity => 0,
            super::config::InitialMode::Encoder { .. } => cfg.history_len,
        };
        let spec = LearnedSpec { config: model_cfg.clone(), history_len, norm, nx: data.meta.nx, ny: data.meta.ny };
        let model = Learned::new(&spec, cfg.seed)?;
        let opt = OptimizerState::new(model.n_params());
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        Self::assemble(cfg, model, opt, rng, 0, 0, None, 0)
    }

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn assemble(
        config: TrainConfig,
        model: Learned<T>,
        opt: OptimizerState,
        rng: ChaCha8Rng,
        iteration: u64,
        epoch: usize,
        best: Option<Best<T>>,
        bad_epochs: usize,
    ) -> Result<Self> {
        config.validate()?;
        let pool = if config.workers > 1 {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(config.workers)
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            Some(pool)
        } else {
            None
        };
        Ok(Self { config, model, opt, rng, iteration, epoch, best, bad_epochs, pool })
    }

    /// Default epoch length: one pass worth of training windows.
    pub fn iters_per_epoch(&self, data: &Dataset) -> Result<usize> {
        if let Some(n) = self.config.iters_per_epoch {
            return Ok(n);
        }
        let (train, _) = train_val_split(data);
        let c = &self.config;
        let n = windows_in(train, self.model.initial.history_len(), c.target_len, c.target_stride)?.len();
        Ok(n.div_ceil(c.batch_size))
    }

    fn map_samples<R: Send>(&self, jobs: Vec<(Sample<T>, Vec<bool>)>, f: impl Fn(&Sample<T>, &[bool]) -> R + Sync) -> Vec<R> {
        match &self.pool {
            // collect keeps sample order, so sums below do not depend on scheduling
            Some(pool) => pool.install(|| jobs.par_iter().map(|(s, r)| f(s, r)).collect()),
            None => jobs.iter().map(|(s, r)| f(s, r)).collect(),
        }
    }

    /// One optimizer iteration on a fresh minibatch. A non-finite loss or
    /// gradient skips the update and leaves the parameters untouched.
    pub fn step(&mut self, data: &Dataset, started: Instant) -> Result<LogRecord> {
        let (train, _) = train_val_split(data);
        let cfg = self.config.clone();
        let eps = ss_probability(self.iteration, &cfg);
        let windows = sample_minibatch(train, &cfg, self.model.initial.history_len(), &mut self.rng)?;
        let sched = schedule(&cfg);
        let mut jobs = Vec::with_capacity(windows.len());
        for w in windows {
            // always draw, so the stream does not depend on eps
            let resets: Vec<bool> = (0..cfg.target_len).map(|_| self.rng.random::<f64>() < eps).collect();
            jobs.push((self.model.sample(data, w, &sched.target_frames)?, resets));
        }
        let results = self.map_samples(jobs, |s, r| sample_gradient(&self.model, &sched, s, r, cfg.grad_mode));

        let n = results.len() as f64;
        let mut loss = 0.0;
        let mut grad = vec![0.0; self.model.n_params()];
        let mut skipped = false;
        for r in results {
            match r {
                Ok((l, g)) if l.is_finite() && g.iter().all(|v| v.is_finite()) => {
                    loss += l / n;
                    grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b / n);
                }
                Ok(_) | Err(Error::NonFinite { .. }) => {
                    skipped = true;
                    loss = f64::INFINITY;
                }
                Err(e) => return Err(e),
            }
        }
        if !skipped {
            let mut params = self.model.flat_params();
            self.opt.update(&cfg.adam, cfg.lr, &mut params, &grad)?;
            self.model.set_flat_params(&params)?;
        }
        let rec = LogRecord::Iter {
            iter: self.iteration,
            epoch: self.epoch,
            loss,
            ss_prob: eps,
            skipped,
            wall_s: started.elapsed().as_secs_f64(),
        };
        self.iteration += 1;
        Ok(rec)
    }

    /// Mean free-running loss over evenly spaced validation windows.
    pub fn validate(&self, data: &Dataset) -> Result<f64> {
        let (_, val) = train_val_split(data);
        let cfg = &self.config;
        let range = windows_in(val, self.model.initial.history_len(), cfg.target_len, cfg.target_stride)?;
        let n = cfg.validation_windows.clamp(1, range.len());
        let starts: Vec<usize> = if n == 1 {
            vec![range.start]
        } else {
            (0..n).map(|i| range.start + i * (range.len() - 1) / (n - 1)).collect()
        };
        let sched = schedule(cfg);
        let jobs = starts
            .into_iter()
            .map(|c| Ok((self.model.sample(data, Window { current: c }, &sched.target_frames)?, vec![])))
            .collect::<Result<Vec<_>>>()?;
        let m = &self.model;
        let losses = self.map_samples(jobs, |s, r| rollout(&m.dynamics, &m.initial, &m.obs, &sched, &s.problem(r)));
        let mut total = 0.0;
        let count = losses.len() as f64;
        for l in losses {
            total += l?.1.total;
        }
        Ok(total / count)
    }

    pub fn finished(&self) -> bool {
        self.epoch >= self.config.epochs || (self.config.patience > 0 && self.bad_epochs >= self.config.patience)
    }

    /// Runs one epoch of iterations followed by validation, reporting every
    /// record to `log`.
    pub fn run_epoch(&mut self, data: &Dataset, started: Instant, log: &mut dyn FnMut(&LogRecord)) -> Result<()> {
        let iters = self.iters_per_epoch(data)?;
        for _ in 0..iters {
            let rec = self.step(data, started)?;
            log(&rec);
        }
        let val = self.validate(data)?;
        let improved = val.is_finite() && self.best.as_ref().is_none_or(|b| val < b.val_loss);
        if improved {
            self.best = Some(Best { val_loss: val, epoch: self.epoch, params: self.model.flat_params() });
            self.bad_epochs = 0;
        } else {
            self.bad_epochs += 1;
        }
        let rec = LogRecord::Epoch {
            epoch: self.epoch,
            iter: self.iteration,
            val_loss: val,
            best_val: self.best.as_ref().map_or(f64::INFINITY, |b| b.val_loss),
            improved,
            wall_s: started.elapsed().as_secs_f64(),
        };
        log(&rec);
        self.epoch += 1;
        Ok(())
    }

    /// The model with the best validation parameters restored.
    pub fn best_model(&self) -> Result<Learned<T>> {
        let mut m = self.model.clone();
        if let Some(b) = &self.best {
            m.set_flat_params(&b.params)?;
        }
        Ok(m)
    }
}

/// Trains from scratch until the epoch budget or patience runs out and
/// returns the best-validation model.
pub fn train<T: Real>(
    data: &Dataset,
    model_cfg: &ModelConfig,
    cfg: TrainConfig,
    log: &mut dyn FnMut(&LogRecord),
) -> Result<(Learned<T>, TrainLog)> {
    let mut trainer = Trainer::<T>::new(data, model_cfg, cfg)?;
    let started = Instant::now();
    let mut history = TrainLog::default();
    while !trainer.finished() {
        trainer.run_epoch(data, started, &mut |r| {
            history.records.push(r.clone());
            log(r);
        })?;
    }
    Ok((trainer.best_model()?, history))
}
