//! Optimization loop: Adam with bias correction, reduce-on-plateau learning
//! rate schedule, minibatch epochs over masked examples, metric logging, and
//! seed-shifted multi-run averaging.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autograd::{GradStore, ParamSet};
use crate::corpus::{split_dataset, RawMaskedPair};
use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig};
use crate::tensor::{real, Real, Tensor};
use crate::tokenizer::{encode, MaskedExample, Vocab};

/// Which loss the plateau scheduler watches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Monitor {
    TrainLoss,
    TestLoss,
}

/// Training hyperparameters.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub lr0: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Plateau decay factor.
    pub factor: f64,
    /// Epochs without improvement before a decay.
    pub patience: usize,
    /// Minimum absolute loss improvement that counts.
    pub min_delta: f64,
    pub monitor: Monitor,
    pub split_ratio: f64,
    pub seed: u64,
    pub n_runs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr0: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            batch_size: 8,
            epochs: 30,
            factor: 0.2,
            patience: 3,
            min_delta: 1e-4,
            monitor: Monitor::TrainLoss,
            split_ratio: 0.75,
            seed: 0,
            n_runs: 3,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Error::InvalidArgument {
            name: "train config",
            msg,
        };
        if !(self.factor > 0.0 && self.factor < 1.0) {
            return Err(fail(format!("factor {} not in (0,1)", self.factor)));
        }
        if self.lr0 <= 0.0 {
            return Err(fail(format!("lr0 {} must be positive", self.lr0)));
        }
        if self.batch_size == 0 {
            return Err(fail("batch_size must be >= 1".into()));
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(fail(format!("split_ratio {} not in (0,1)", self.split_ratio)));
        }
        if self.n_runs == 0 {
            return Err(fail("n_runs must be >= 1".into()));
        }
        Ok(())
    }
}

/// Adam first/second moment state, aligned with a [`ParamSet`].
#[derive(Debug, Clone)]
pub struct AdamState<T> {
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
    t: u64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl<T: Real> AdamState<T> {
    pub fn new(params: &ParamSet<T>, beta1: f64, beta2: f64, eps: f64) -> Self {
        let zeros: Vec<Vec<T>> = params.iter().map(|(_, t)| vec![T::zero(); t.len()]).collect();
        AdamState {
            m: zeros.clone(),
            v: zeros,
            t: 0,
            beta1,
            beta2,
            eps,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

/// One Adam update with bias correction; advances the state by one step.
pub fn adam_step<T: Real>(
    params: &mut ParamSet<T>,
    grads: &GradStore<T>,
    state: &mut AdamState<T>,
    lr: f64,
) -> Result<()> {
    state.t += 1;
    let b1 = real::<T>(state.beta1);
    let b2 = real::<T>(state.beta2);
    let one = T::one();
    let bc1 = real::<T>(1.0 - state.beta1.powi(state.t as i32));
    let bc2 = real::<T>(1.0 - state.beta2.powi(state.t as i32));
    let lr = real::<T>(lr);
    let eps = real::<T>(state.eps);
    for (idx, id) in params.ids().enumerate().collect::<Vec<_>>() {
        let g = grads.get(id);
        let value = params.get_mut(id);
        if g.len() != value.len() {
            return Err(Error::ShapeMismatch {
                op: "adam_step",
                lhs: vec![value.len()],
                rhs: vec![g.len()],
            });
        }
        let m = &mut state.m[idx];
        let v = &mut state.v[idx];
        for (k, theta) in value.data_mut().iter_mut().enumerate() {
            let gk = g[k];
            m[k] = b1 * m[k] + (one - b1) * gk;
            v[k] = b2 * v[k] + (one - b2) * gk * gk;
            let m_hat = m[k] / bc1;
            let v_hat = v[k] / bc2;
            *theta -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

/// Reduce-on-plateau: when the monitored loss fails to improve by at least
/// `min_delta` for `patience` consecutive observations, the learning rate is
/// multiplied by `factor` and the stagnation counter resets.
#[derive(Debug, Clone)]
pub struct PlateauScheduler {
    lr: f64,
    factor: f64,
    patience: usize,
    min_delta: f64,
    best: Option<f64>,
    stagnant: usize,
}

impl PlateauScheduler {
    pub fn new(lr0: f64, factor: f64, patience: usize, min_delta: f64) -> Self {
        PlateauScheduler {
            lr: lr0,
            factor,
            patience,
            min_delta,
            best: None,
            stagnant: 0,
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    /// Feeds one epoch loss; returns the learning rate for the next epoch.
    pub fn step(&mut self, loss: f64) -> f64 {
        match self.best {
            None => self.best = Some(loss),
            Some(best) if loss < best - self.min_delta => {
                self.best = Some(loss);
                self.stagnant = 0;
            }
            Some(_) => {
                self.stagnant += 1;
                if self.stagnant >= self.patience {
                    self.lr *= self.factor;
                    self.stagnant = 0;
                }
            }
        }
        self.lr
    }
}

/// One epoch's training-mode metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub run: usize,
    /// 1-based epoch index.
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    /// Learning rate in effect during this epoch.
    pub lr: f64,
}

/// Final eval-mode metrics of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunFinal {
    pub run: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub test_loss: f64,
    pub test_acc: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation (n-1); zero for a single run.
    pub std: f64,
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> MeanStd {
    let n = values.clone().count();
    if n == 0 {
        return MeanStd { mean: 0.0, std: 0.0 };
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    let std = if n > 1 {
        (values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    MeanStd { mean, std }
}

/// Cross-run mean ± sample standard deviation of the final metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub train_loss: MeanStd,
    pub train_acc: MeanStd,
    pub test_loss: MeanStd,
    pub test_acc: MeanStd,
}

/// Complete metric log of a [`train`] call.
#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub epochs: Vec<EpochRecord>,
    pub runs: Vec<RunFinal>,
    pub summary: Summary,
}

impl RunMetrics {
    /// `run,epoch,train_loss,train_acc` rows.
    pub fn epochs_csv(&self) -> String {
        let mut out = String::from("run,epoch,train_loss,train_acc\n");
        for e in &self.epochs {
            out.push_str(&format!(
                "{},{},{},{}\n",
                e.run, e.epoch, e.train_loss, e.train_acc
            ));
        }
        out
    }

    /// JSON-style `{mean, std}` summary per metric.
    pub fn summary_text(&self) -> String {
        let f = |m: &MeanStd| format!("{{\"mean\": {}, \"std\": {}}}", m.mean, m.std);
        format!(
            "{{\"train_loss\": {}, \"train_acc\": {}, \"test_loss\": {}, \"test_acc\": {}}}\n",
            f(&self.summary.train_loss),
            f(&self.summary.train_acc),
            f(&self.summary.test_loss),
            f(&self.summary.test_acc)
        )
    }
}

fn count_supervised(example: &MaskedExample) -> usize {
    example.label_ids.iter().filter(|&&l| l >= 0).count()
}

fn count_correct(logits: &Tensor<f32>, labels: &[i32]) -> usize {
    let mut correct = 0usize;
    for (i, &label) in labels.iter().enumerate() {
        if label < 0 {
            continue;
        }
        let row = logits.row(i);
        let mut best = 0usize;
        for (j, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = j;
            }
        }
        if best == label as usize {
            correct += 1;
        }
    }
    correct
}

/// Encodes pairs at their tight length (`residues + [CLS]`, no padding).
/// Padded positions cannot influence unpadded outputs, so this is exact and
/// much cheaper than encoding at the model maximum.
pub fn encode_tight(vocab: &Vocab, pairs: &[RawMaskedPair]) -> Result<Vec<MaskedExample>> {
    pairs
        .iter()
        .map(|p| encode(vocab, p, p.input_seq.len() + 1))
        .collect()
}

/// Token-weighted eval-mode loss and accuracy over pre-encoded examples.
pub fn evaluate_examples(model: &Model<f32>, examples: &[MaskedExample]) -> Result<(f64, f64)> {
    if examples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut loss_sum = 0.0f64;
    let mut correct = 0usize;
    let mut tokens = 0usize;
    for ex in examples {
        let out = model.loss_graph(ex, false, 0)?;
        loss_sum += out.loss_value as f64 * out.n_supervised as f64;
        correct += count_correct(&out.logits, &out.labels);
        tokens += out.n_supervised;
    }
    Ok((loss_sum / tokens as f64, correct as f64 / tokens as f64))
}

/// Token-weighted eval-mode loss and accuracy over raw pairs.
pub fn evaluate(model: &Model<f32>, pairs: &[RawMaskedPair]) -> Result<(f64, f64)> {
    let vocab = Vocab::new();
    let examples = encode_tight(&vocab, pairs)?;
    evaluate_examples(model, &examples)
}

fn train_single_run(
    model_config: &ModelConfig,
    cfg: &TrainConfig,
    run: usize,
    train_ex: &[MaskedExample],
    test_ex: &[MaskedExample],
) -> Result<(Model<f32>, Vec<EpochRecord>)> {
    let run_seed = cfg.seed.wrapping_add(run as u64);
    let mut model = Model::<f32>::init(model_config, run_seed)?;
    let mut state = AdamState::new(&model.params, cfg.beta1, cfg.beta2, cfg.eps);
    let mut grads = GradStore::zeros_like(&model.params);
    let mut sched = PlateauScheduler::new(cfg.lr0, cfg.factor, cfg.patience, cfg.min_delta);
    let mut rng = ChaCha8Rng::seed_from_u64(run_seed.wrapping_add(0x9E37_79B9_7F4A_7C15));
    let mut records = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let mut order: Vec<usize> = (0..train_ex.len()).collect();
        order.shuffle(&mut rng);
        let mut loss_weighted = 0.0f64;
        let mut correct = 0usize;
        let mut tokens = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            grads.zero();
            let total_n: usize = batch.iter().map(|&i| count_supervised(&train_ex[i])).sum();
            if total_n == 0 {
                return Err(Error::NoSupervisedPositions);
            }
            for &i in batch {
                let ex = &train_ex[i];
                let dropout_seed = rng.random::<u64>();
                let out = model.loss_graph(ex, true, dropout_seed)?;
                if !out.loss_value.is_finite() {
                    return Err(Error::Diverged { run, epoch });
                }
                loss_weighted += out.loss_value as f64 * out.n_supervised as f64;
                correct += count_correct(&out.logits, &out.labels);
                tokens += out.n_supervised;
                let weight = out.n_supervised as f32 / total_n as f32;
                out.graph.backward_scaled(out.loss, weight, &mut grads)?;
            }
            adam_step(&mut model.params, &grads, &mut state, sched.lr())?;
        }
        let train_loss = loss_weighted / tokens as f64;
        let train_acc = correct as f64 / tokens as f64;
        records.push(EpochRecord {
            run,
            epoch,
            train_loss,
            train_acc,
            lr: sched.lr(),
        });
        let monitored = match cfg.monitor {
            Monitor::TrainLoss => train_loss,
            Monitor::TestLoss => evaluate_examples(&model, test_ex)?.0,
        };
        sched.step(monitored);
    }
    Ok((model, records))
}

/// Splits `pairs` once (seeded by `cfg.seed`, shared across runs so every
/// run sees the same partition), then trains `n_runs` replicas with seeds
/// `seed, seed+1, …` controlling initialization, batch order, and dropout.
/// Returns the last run's model together with the full metric log.
pub fn train(
    model_config: &ModelConfig,
    cfg: &TrainConfig,
    pairs: &[RawMaskedPair],
) -> Result<(Model<f32>, RunMetrics)> {
    model_config.validate()?;
    cfg.validate()?;
    let (train_pairs, test_pairs) = split_dataset(pairs, cfg.split_ratio, cfg.seed)?;
    if train_pairs.is_empty() || test_pairs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let vocab = Vocab::new();
    let train_ex = encode_tight(&vocab, &train_pairs)?;
    let test_ex = encode_tight(&vocab, &test_pairs)?;

    let mut epochs = Vec::new();
    let mut finals = Vec::new();
    let mut last_model = None;
    for run in 0..cfg.n_runs {
        let (model, records) = train_single_run(model_config, cfg, run, &train_ex, &test_ex)?;
        epochs.extend(records);
        let (train_loss, train_acc) = evaluate_examples(&model, &train_ex)?;
        let (test_loss, test_acc) = evaluate_examples(&model, &test_ex)?;
        finals.push(RunFinal {
            run,
            train_loss,
            train_acc,
            test_loss,
            test_acc,
        });
        last_model = Some(model);
    }
    let summary = Summary {
        train_loss: mean_std(finals.iter().map(|f| f.train_loss)),
        train_acc: mean_std(finals.iter().map(|f| f.train_acc)),
        test_loss: mean_std(finals.iter().map(|f| f.test_loss)),
        test_acc: mean_std(finals.iter().map(|f| f.test_acc)),
    };
    Ok((
        last_model.expect("n_runs >= 1"),
        RunMetrics {
            epochs,
            runs: finals,
            summary,
        },
    ))
}
