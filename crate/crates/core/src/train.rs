//! Loss, Adam, plateau/early-stopping callbacks, metrics and the epoch loop.

use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::WindowSample;
use crate::error::{Error, Result};
use crate::graph::Var;
use crate::models::Forecaster;
use crate::params::{Ctx, ParamStore};
use crate::tensor::Tensor;

/// Mean squared error over every element of `[batch, horizon]`.
pub fn mse_loss(ctx: &Ctx, prediction: Var, target: Var) -> Result<Var> {
    let g = ctx.g();
    let (a, b) = (g.shape(prediction), g.shape(target));
    if a != b {
        return Err(Error::shape("mse_loss", &a, &b));
    }
    g.mean(g.square(g.sub(prediction, target)?)?)
}

/// Bias-corrected Adam moments for every tensor of a store.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl AdamState {
    /// `beta1 = 0.9`, `beta2 = 0.999`, `epsilon = 1e-7`.
    pub fn new(store: &ParamStore) -> Self {
        let zeros = || store.tensors().iter().map(|t| alloc::vec![0.0; t.len()]).collect();
        AdamState {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-7,
            step: 0,
            first: zeros(),
            second: zeros(),
        }
    }
}

/// One Adam update of every tensor in `store`.
pub fn adam_step(store: &mut ParamStore, grads: &[Tensor], state: &mut AdamState, lr: f64) -> Result<()> {
    if grads.len() != store.len() || state.first.len() != store.len() {
        return Err(Error::Invalid(alloc::format!(
            "{} gradients / {} moment slots for {} parameters",
            grads.len(),
            state.first.len(),
            store.len()
        )));
    }
    for (id, grad) in store.ids().zip(grads) {
        let shape = store.get(id).shape();
        if shape != grad.shape() || state.first[id.index()].len() != grad.len() {
            return Err(Error::shape("adam_step", shape, grad.shape()));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - libm::pow(state.beta1, t as f64);
    let c2 = 1.0 - libm::pow(state.beta2, t as f64);
    let ids: Vec<_> = store.ids().collect();
    for (id, grad) in ids.into_iter().zip(grads) {
        let i = id.index();
        let (m, v) = (&mut state.first[i], &mut state.second[i]);
        let mut data = store.get(id).data().to_vec();
        for (j, &gj) in grad.data().iter().enumerate() {
            m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * gj;
            v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * gj * gj;
            let m_hat = m[j] / c1;
            let v_hat = v[j] / c2;
            data[j] -= lr * m_hat / (libm::sqrt(v_hat) + state.epsilon);
        }
        let updated = Tensor::new(store.get(id).shape(), data).map_err(|_| Error::NonFinite { op: "adam_step" })?;
        store.set(id, updated)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CallbackAction {
    Continue,
    ReduceLr,
    StopRestoreBest,
}

impl CallbackAction {
    pub fn as_str(self) -> &'static str {
        match self {
            CallbackAction::Continue => "CONTINUE",
            CallbackAction::ReduceLr => "REDUCE_LR",
            CallbackAction::StopRestoreBest => "STOP_RESTORE_BEST",
        }
    }
}

/// Early stopping and plateau learning-rate reduction on validation loss.
///
/// Both counters count epochs since the last strict improvement. The plateau
/// counter restarts after each reduction; stopping wins when both fire.
#[derive(Debug, Clone, PartialEq)]
pub struct CallbackState {
    pub stop_patience: usize,
    pub plateau_patience: usize,
    pub best: f64,
    pub best_epoch: Option<usize>,
    pub since_best: usize,
    pub since_reduce: usize,
    epochs: usize,
}

impl CallbackState {
    pub fn new(stop_patience: usize, plateau_patience: usize) -> Self {
        CallbackState {
            stop_patience,
            plateau_patience,
            best: f64::INFINITY,
            best_epoch: None,
            since_best: 0,
            since_reduce: 0,
            epochs: 0,
        }
    }

    /// Whether the last update set a new best.
    pub fn improved(&self) -> bool {
        self.best_epoch == Some(self.epochs - 1)
    }

    pub fn update(&mut self, val_loss: f64) -> CallbackAction {
        let epoch = self.epochs;
        self.epochs += 1;
        if val_loss < self.best {
            self.best = val_loss;
            self.best_epoch = Some(epoch);
            self.since_best = 0;
            self.since_reduce = 0;
            return CallbackAction::Continue;
        }
        self.since_best += 1;
        self.since_reduce += 1;
        if self.since_best >= self.stop_patience {
            CallbackAction::StopRestoreBest
        } else if self.since_reduce >= self.plateau_patience {
            self.since_reduce = 0;
            CallbackAction::ReduceLr
        } else {
            CallbackAction::Continue
        }
    }
}

/// `1 - SS_res / SS_tot`.
pub fn r_squared(prediction: &[f64], truth: &[f64]) -> Result<f64> {
    if prediction.len() != truth.len() {
        return Err(Error::shape("r_squared", &[prediction.len()], &[truth.len()]));
    }
    if truth.len() < 2 {
        return Err(Error::Invalid("R² needs at least two points".into()));
    }
    let mean = truth.iter().sum::<f64>() / truth.len() as f64;
    let ss_tot: f64 = truth.iter().map(|y| (y - mean) * (y - mean)).sum();
    if !(ss_tot > 0.0) {
        return Err(Error::Invalid("R² is undefined for a constant target".into()));
    }
    let ss_res: f64 = prediction.iter().zip(truth).map(|(p, y)| (p - y) * (p - y)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Samples packed into contiguous row-major buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub len: usize,
    pub past_len: usize,
    pub past_width: usize,
    pub horizon: usize,
    pub n_known: usize,
    pub past: Vec<f64>,
    pub future: Vec<f64>,
    pub target: Vec<f64>,
}

impl SampleSet {
    pub fn from_samples(samples: &[WindowSample], past_len: usize, horizon: usize) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::Data("cannot pack an empty sample set".into()))?;
        if first.past.len() % past_len != 0 || first.future_known.len() % horizon != 0 || first.target.len() != horizon
        {
            return Err(Error::Data("sample sizes do not match the window spec".into()));
        }
        let past_width = first.past.len() / past_len;
        let n_known = first.future_known.len() / horizon;
        let mut set = SampleSet {
            len: samples.len(),
            past_len,
            past_width,
            horizon,
            n_known,
            past: Vec::with_capacity(samples.len() * first.past.len()),
            future: Vec::with_capacity(samples.len() * first.future_known.len()),
            target: Vec::with_capacity(samples.len() * horizon),
        };
        for s in samples {
            if s.past.len() != first.past.len()
                || s.future_known.len() != first.future_known.len()
                || s.target.len() != horizon
            {
                return Err(Error::Data(alloc::format!(
                    "sample at anchor {} has inconsistent sizes",
                    s.anchor
                )));
            }
            set.past.extend_from_slice(&s.past);
            set.future.extend_from_slice(&s.future_known);
            set.target.extend_from_slice(&s.target);
        }
        Ok(set)
    }

    /// `(past, future, target)` tensors for the given sample indices.
    pub fn batch(&self, indices: &[usize]) -> Result<(Tensor, Tensor, Tensor)> {
        let (pw, fw) = (self.past_len * self.past_width, self.horizon * self.n_known);
        let mut past = Vec::with_capacity(indices.len() * pw);
        let mut future = Vec::with_capacity(indices.len() * fw);
        let mut target = Vec::with_capacity(indices.len() * self.horizon);
        for &i in indices {
            past.extend_from_slice(&self.past[i * pw..(i + 1) * pw]);
            future.extend_from_slice(&self.future[i * fw..(i + 1) * fw]);
            target.extend_from_slice(&self.target[i * self.horizon..(i + 1) * self.horizon]);
        }
        let b = indices.len();
        Ok((
            Tensor::new(&[b, self.past_len, self.past_width], past)?,
            Tensor::new(&[b, self.horizon, self.n_known], future)?,
            Tensor::new(&[b, self.horizon], target)?,
        ))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    pub plateau_patience: usize,
    pub plateau_factor: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 128,
            max_epochs: 100,
            early_stop_patience: 6,
            plateau_patience: 3,
            plateau_factor: 0.5,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(alloc::format!(
                "learning rate {} is invalid",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::Config("batch_size and max_epochs must be positive".into()));
        }
        if self.early_stop_patience == 0 || self.plateau_patience == 0 {
            return Err(Error::Config("patience values must be positive".into()));
        }
        if !(self.plateau_factor > 0.0 && self.plateau_factor < 1.0) {
            return Err(Error::Config(alloc::format!(
                "plateau factor {} must lie in (0, 1)",
                self.plateau_factor
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Learning rate used during the epoch.
    pub lr: f64,
    pub action: CallbackAction,
}

/// Test-set metrics in scaled units.
#[derive(Debug, Clone, PartialEq)]
pub struct TestMetrics {
    /// R² over the flattened `(sample, step)` matrix.
    pub r2: f64,
    /// Mean of the per-step R² values.
    pub r2_step_mean: f64,
    pub r2_per_step: Vec<f64>,
    pub rmse_per_step: Vec<f64>,
    pub mse: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub test: Option<TestMetrics>,
}

/// Hook called after every epoch; returning an error aborts training.
pub trait TrainObserver {
    fn on_epoch(&mut self, record: &EpochRecord) -> Result<()>;
}

impl TrainObserver for () {
    fn on_epoch(&mut self, _: &EpochRecord) -> Result<()> {
        Ok(())
    }
}

/// Predictions `[len, horizon]` in inference mode.
pub fn predict(model: &dyn Forecaster, set: &SampleSet, batch_size: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(set.len * set.horizon);
    let idx: Vec<usize> = (0..set.len).collect();
    for chunk in idx.chunks(batch_size.max(1)) {
        let (past, future, _) = set.batch(chunk)?;
        let ctx = Ctx::inference(model.store());
        let g = ctx.g();
        let y = model.forward(&ctx, g.constant(past), g.constant(future))?;
        out.extend_from_slice(g.value(y).data());
    }
    Ok(out)
}

pub fn mean_squared_error(prediction: &[f64], truth: &[f64]) -> f64 {
    prediction
        .iter()
        .zip(truth)
        .map(|(p, y)| (p - y) * (p - y))
        .sum::<f64>()
        / truth.len() as f64
}

pub fn evaluate(model: &dyn Forecaster, set: &SampleSet, batch_size: usize) -> Result<TestMetrics> {
    let pred = predict(model, set, batch_size)?;
    let h = set.horizon;
    let column = |v: &[f64], k: usize| v.iter().skip(k).step_by(h).copied().collect::<Vec<f64>>();
    let mut r2_per_step = Vec::with_capacity(h);
    let mut rmse_per_step = Vec::with_capacity(h);
    for k in 0..h {
        let (p, y) = (column(&pred, k), column(&set.target, k));
        r2_per_step.push(r_squared(&p, &y)?);
        rmse_per_step.push(libm::sqrt(mean_squared_error(&p, &y)));
    }
    Ok(TestMetrics {
        r2: r_squared(&pred, &set.target)?,
        r2_step_mean: r2_per_step.iter().sum::<f64>() / h as f64,
        r2_per_step,
        rmse_per_step,
        mse: mean_squared_error(&pred, &set.target),
    })
}

fn diverged(err: Error, epoch: usize, step: usize) -> Error {
    match err {
        Error::NonFinite { .. } => Error::Diverged { epoch, step },
        other => other,
    }
}

/// Trains with shuffled mini-batches, validates after each epoch, restores
/// the best validation weights and evaluates on `test` when given.
pub fn train_loop(
    model: &mut dyn Forecaster,
    train: &SampleSet,
    val: &SampleSet,
    test: Option<&SampleSet>,
    cfg: &TrainConfig,
    observer: &mut dyn TrainObserver,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.len == 0 || val.len == 0 {
        return Err(Error::Data("training and validation sets must be non-empty".into()));
    }
    if train.horizon != model.horizon() {
        return Err(Error::Config(alloc::format!(
            "samples have horizon {} but the model forecasts {}",
            train.horizon,
            model.horizon()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = AdamState::new(model.store());
    let mut callbacks = CallbackState::new(cfg.early_stop_patience, cfg.plateau_patience);
    let mut lr = cfg.learning_rate;
    let mut best: Vec<Tensor> = model.store().tensors().to_vec();
    let mut history = Vec::new();
    let mut order: Vec<usize> = (0..train.len).collect();
    let mut step = 0usize;
    for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let (past, future, target) = train.batch(chunk)?;
            let (loss_value, grads) = {
                let ctx = Ctx::train(model.store());
                let g = ctx.g();
                let y = model
                    .forward(&ctx, g.constant(past), g.constant(future))
                    .map_err(|e| diverged(e, epoch, step))?;
                let loss = mse_loss(&ctx, y, g.constant(target)).map_err(|e| diverged(e, epoch, step))?;
                let mut grads = g.backward(loss)?;
                (g.value(loss).item()?, ctx.param_grads(&mut grads))
            };
            adam_step(model.store_mut(), &grads, &mut adam, lr).map_err(|e| diverged(e, epoch, step))?;
            total += loss_value * chunk.len() as f64;
            step += 1;
        }
        let train_loss = total / train.len as f64;
        let val_pred = predict(model, val, cfg.batch_size.max(256)).map_err(|e| diverged(e, epoch, step))?;
        let val_loss = mean_squared_error(&val_pred, &val.target);
        if !val_loss.is_finite() {
            return Err(Error::Diverged { epoch, step });
        }
        let action = callbacks.update(val_loss);
        if callbacks.improved() {
            best = model.store().tensors().to_vec();
        }
        let record = EpochRecord {
            epoch,
            train_loss,
            val_loss,
            lr,
            action,
        };
        observer.on_epoch(&record)?;
        history.push(record);
        match action {
            CallbackAction::Continue => {}
            CallbackAction::ReduceLr => lr *= cfg.plateau_factor,
            CallbackAction::StopRestoreBest => break,
        }
    }
    model.store_mut().load_tensors(best)?;
    let test = match test {
        Some(set) => Some(evaluate(model, set, 256)?),
        None => None,
    };
    Ok(TrainOutcome {
        history,
        best_epoch: callbacks.best_epoch.unwrap_or(0),
        best_val_loss: callbacks.best,
        test,
    })
}

/// CSV rendering of a training history.
pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut s = String::from("epoch,train_loss,val_loss,lr,action\n");
    for r in history {
        s.push_str(&alloc::format!(
            "{},{:e},{:e},{:e},{}\n",
            r.epoch,
            r.train_loss,
            r.val_loss,
            r.lr,
            r.action.as_str()
        ));
    }
    s
}
