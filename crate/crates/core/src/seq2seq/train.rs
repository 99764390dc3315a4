use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{Params, Seq2SeqModel};
use super::vocab::{TokenId, UNK};
use super::ModelError;
use crate::identifiers::IdentifierIndex;
use crate::par;
use crate::representation::TrainingUnit;

/// Examples per gradient chunk. Chunks are the unit of parallel work and
/// are summed in order, so results do not depend on the thread count.
const CHUNK: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub clip_norm: f64,
    pub shuffle_seed: u64,
    pub optimizer: Optimizer,
    /// Probability of replacing each input token by UNK during training.
    pub token_dropout: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.5,
            batch_size: 16,
            epochs: 150,
            clip_norm: 5.0,
            shuffle_seed: 0,
            optimizer: Optimizer::Sgd,
            token_dropout: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.epochs == 0 {
            return Err(ModelError::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(ModelError::Config("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(ModelError::Config("learning_rate must be a non-negative number".into()));
        }
        if !(self.clip_norm > 0.0) {
            return Err(ModelError::Config("clip_norm must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.token_dropout) {
            return Err(ModelError::Config("token_dropout must be in [0, 1)".into()));
        }
        Ok(())
    }
}

/// A unit resolved to model ids; `target` ends with EOS.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    pub input: Vec<TokenId>,
    pub target: Vec<TokenId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub initial_loss: f64,
    /// Mean training loss of each epoch, as seen by the optimizer.
    pub epoch_losses: Vec<f64>,
    pub final_loss: f64,
}

pub fn prepare_examples(
    model: &Seq2SeqModel,
    units: &[TrainingUnit],
    index: &IdentifierIndex,
) -> Result<Vec<Example>, ModelError> {
    units
        .iter()
        .map(|u| {
            let id = index
                .get(&u.doc_id)
                .ok_or_else(|| ModelError::MissingIdentifier { doc_id: u.doc_id.clone() })?;
            Ok(Example { input: model.encode_text(&u.input_text), target: model.vocab.encode_identifier(&id.tokens)? })
        })
        .collect()
}

impl Seq2SeqModel {
    /// Mean negative log-likelihood over `batch`.
    pub fn batch_loss(&self, batch: &[Example]) -> f64 {
        if batch.is_empty() {
            return 0.0;
        }
        let each = par::map(batch, |e| -self.sequence_logprob_ids(&e.input, &e.target));
        each.iter().sum::<f64>() / batch.len() as f64
    }

    /// Mean negative log-likelihood over `batch` and its exact gradient.
    pub fn loss_and_gradient(&self, batch: &[Example]) -> (f64, Params) {
        let weight = 1.0 / batch.len().max(1) as f64;
        let chunks: Vec<&[Example]> = batch.chunks(CHUNK).collect();
        let parts = par::map(&chunks, |chunk| {
            let mut grad = self.params.zeros_like();
            let loss: f64 =
                chunk.iter().map(|e| self.accumulate_gradient(&e.input, &e.target, weight, &mut grad)).sum();
            (loss, grad)
        });
        let mut parts = parts.into_iter();
        let (mut loss, mut grad) = parts.next().unwrap_or_else(|| (0.0, self.params.zeros_like()));
        for (l, g) in parts {
            loss += l;
            grad.add_assign(&g);
        }
        (loss * weight, grad)
    }

    /// Loss over training units, resolving identifiers through `index`.
    pub fn loss(&self, units: &[TrainingUnit], index: &IdentifierIndex) -> Result<(f64, Params), ModelError> {
        let examples = prepare_examples(self, units, index)?;
        Ok(self.loss_and_gradient(&examples))
    }
}

struct AdamState {
    m: Params,
    v: Params,
    t: i32,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

fn apply_update(params: &mut Params, grad: &Params, config: &TrainConfig, adam: &mut Option<AdamState>) {
    let lr = config.learning_rate;
    let grads: Vec<&[f64]> = grad.tensors().into_iter().map(|(_, m)| m.data.as_slice()).collect();
    match adam {
        None => {
            for (p, g) in params.tensors_mut().into_iter().zip(grads) {
                for (pi, gi) in p.data.iter_mut().zip(g) {
                    *pi -= lr * gi;
                }
            }
        }
        Some(state) => {
            state.t += 1;
            let c1 = 1.0 - BETA1.powi(state.t);
            let c2 = 1.0 - BETA2.powi(state.t);
            let ms = state.m.tensors_mut();
            let vs = state.v.tensors_mut();
            for (((p, g), m), v) in params.tensors_mut().into_iter().zip(grads).zip(ms).zip(vs) {
                for i in 0..p.data.len() {
                    m.data[i] = BETA1 * m.data[i] + (1.0 - BETA1) * g[i];
                    v.data[i] = BETA2 * v.data[i] + (1.0 - BETA2) * g[i] * g[i];
                    let mh = m.data[i] / c1;
                    let vh = v.data[i] / c2;
                    p.data[i] -= lr * mh / (vh.sqrt() + ADAM_EPS);
                }
            }
        }
    }
}

fn dropout(input: &[TokenId], p: f64, rng: &mut ChaCha8Rng) -> Vec<TokenId> {
    if p <= 0.0 {
        return input.to_vec();
    }
    let mut out: Vec<TokenId> = input.iter().map(|&t| if rng.gen::<f64>() < p { UNK } else { t }).collect();
    if out.iter().all(|&t| t == UNK) {
        out = input.to_vec();
    }
    out
}

/// Minibatch training over all units, shuffled together every epoch.
/// `on_epoch` sees (epoch, mean loss) after each epoch.
pub fn train(
    model: &mut Seq2SeqModel,
    units: &[TrainingUnit],
    index: &IdentifierIndex,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<TrainReport, ModelError> {
    config.validate()?;
    if units.is_empty() {
        return Err(ModelError::Config("no training units".into()));
    }
    let examples = prepare_examples(model, units, index)?;
    let initial_loss = model.batch_loss(&examples);
    if !initial_loss.is_finite() {
        return Err(ModelError::Divergence { epoch: 0, batch: 0, loss: initial_loss });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.shuffle_seed);
    let mut adam = match config.optimizer {
        Optimizer::Sgd => None,
        Optimizer::Adam => {
            Some(AdamState { m: model.params.zeros_like(), v: model.params.zeros_like(), t: 0 })
        }
    };
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (b, idx) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<Example> = idx
                .iter()
                .map(|&i| Example {
                    input: dropout(&examples[i].input, config.token_dropout, &mut rng),
                    target: examples[i].target.clone(),
                })
                .collect();
            let (loss, mut grad) = model.loss_and_gradient(&batch);
            if !loss.is_finite() {
                return Err(ModelError::Divergence { epoch, batch: b, loss });
            }
            let norm = grad.sq_norm().sqrt();
            if !norm.is_finite() {
                return Err(ModelError::Divergence { epoch, batch: b, loss: norm });
            }
            if norm > config.clip_norm {
                let scale = config.clip_norm / norm;
                for m in grad.tensors_mut() {
                    m.data.iter_mut().for_each(|v| *v *= scale);
                }
            }
            apply_update(&mut model.params, &grad, config, &mut adam);
            total += loss * batch.len() as f64;
        }
        let mean = total / examples.len() as f64;
        log::debug!("epoch {epoch}: loss {mean:.6}");
        on_epoch(epoch, mean);
        epoch_losses.push(mean);
    }
    let final_loss = model.batch_loss(&examples);
    if !final_loss.is_finite() {
        return Err(ModelError::Divergence { epoch: config.epochs, batch: 0, loss: final_loss });
    }
    Ok(TrainReport { initial_loss, epoch_losses, final_loss })
}
