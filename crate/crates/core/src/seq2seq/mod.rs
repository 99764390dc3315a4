//! Recurrent encoder-decoder that maps text to identifier token sequences,
//! with hand-written backpropagation.

mod model;
pub mod tensor;
mod train;
mod vocab;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use model::{argmax, DecoderState, Encoded, Gru, ModelConfig, Params, Seq2SeqModel};
pub use train::{prepare_examples, train, Example, Optimizer, TrainConfig, TrainReport};
pub use vocab::{TokenId, UnknownIdentifierToken, Vocab, BOS, EOS, PAD, UNK};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("no identifier for document `{doc_id}`")]
    MissingIdentifier { doc_id: String },
    #[error(transparent)]
    UnknownToken(#[from] UnknownIdentifierToken),
    #[error("training diverged at epoch {epoch}, batch {batch} (loss {loss})")]
    Divergence { epoch: usize, batch: usize, loss: f64 },
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: bad checkpoint: {message}", path.display())]
    Checkpoint { path: PathBuf, message: String },
}

pub fn build_vocab(
    units: &[crate::representation::TrainingUnit],
    index: &crate::identifiers::IdentifierIndex,
) -> Vocab {
    Vocab::build(units, index)
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format_version: u32,
    config: ModelConfig,
    vocab: Vocab,
    params: Params,
}

impl Seq2SeqModel {
    pub fn to_json(&self) -> String {
        serde_json::to_string(&Checkpoint {
            format_version: CHECKPOINT_VERSION,
            config: self.config.clone(),
            vocab: self.vocab.clone(),
            params: self.params.clone(),
        })
        .expect("checkpoint serializes")
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        std::fs::write(path, self.to_json()).map_err(|source| ModelError::Io { path: path.into(), source })
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let raw = std::fs::read_to_string(path).map_err(|source| ModelError::Io { path: path.into(), source })?;
        let bad = |message: String| ModelError::Checkpoint { path: path.into(), message };
        let ck: Checkpoint = serde_json::from_str(&raw).map_err(|e| bad(e.to_string()))?;
        if ck.format_version != CHECKPOINT_VERSION {
            return Err(bad(format!("unsupported format version {}", ck.format_version)));
        }
        ck.config.validate()?;
        let expected = Params::init(&ck.config, &ck.vocab);
        let shapes = |p: &Params| p.tensors().iter().map(|(n, m)| (n.clone(), m.rows, m.cols)).collect::<Vec<_>>();
        if shapes(&expected) != shapes(&ck.params) {
            return Err(bad("parameter shapes do not match config and vocabulary".into()));
        }
        if ck.params.tensors().iter().any(|(_, m)| m.data.len() != m.rows * m.cols) {
            return Err(bad("tensor data length does not match its shape".into()));
        }
        Ok(Seq2SeqModel { config: ck.config, vocab: ck.vocab, params: ck.params })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::identifiers::{Identifier, IdentifierIndex, Scheme};
    use crate::representation::{TrainingUnit, UnitTask};

    fn tiny() -> (Seq2SeqModel, Vec<TrainingUnit>, IdentifierIndex) {
        let index = IdentifierIndex::new(
            Scheme::EIds,
            vec![
                Identifier { doc_id: "a".into(), scheme: Scheme::EIds, tokens: vec!["0".into(), "1".into()] },
                Identifier { doc_id: "b".into(), scheme: Scheme::EIds, tokens: vec!["1".into()] },
            ],
        )
        .unwrap();
        let units = vec![
            TrainingUnit { input_text: "storms hit the coast".into(), doc_id: "a".into(), task: UnitTask::IndexEvent },
            TrainingUnit { input_text: "prices rose sharply".into(), doc_id: "b".into(), task: UnitTask::IndexEvent },
        ];
        let config = ModelConfig { embed_dim: 6, hidden_dim: 8, attention_dim: 5, ..ModelConfig::default() };
        let model = Seq2SeqModel::new(config, build_vocab(&units, &index)).unwrap();
        (model, units, index)
    }

    #[test]
    fn step_distribution_is_normalized_and_pure() {
        let (m, _, _) = tiny();
        let input = m.encode_text("storms hit");
        let a = m.step_logprobs(&input, &[m.vocab.identifier_id("0").unwrap()]);
        let b = m.step_logprobs(&input, &[m.vocab.identifier_id("0").unwrap()]);
        assert_eq!(a, b);
        let total: f64 = a.iter().map(|l| l.exp()).sum();
        assert!((total - 1.0).abs() < 1e-6);
        let uniform = -(a.len() as f64).ln();
        assert!(a.iter().all(|l| (l - uniform).abs() < 0.5));
    }

    #[test]
    fn sequence_logprob_sums_steps() {
        let (m, _, _) = tiny();
        let input = m.encode_text("prices rose");
        let target = m.vocab.encode_identifier(&["0".into(), "1".into()]).unwrap();
        let mut expect = 0.0;
        for t in 0..target.len() {
            expect += m.step_logprobs(&input, &target[..t])[target[t] as usize];
        }
        let got = m.sequence_logprob("prices rose", &["0".into(), "1".into()]).unwrap();
        assert!((got - expect).abs() < 1e-12);
        assert!(got <= 0.0);
    }

    #[test]
    fn loss_is_mean_over_batch() {
        let (m, units, index) = tiny();
        let (single, _) = m.loss(&units[..1], &index).unwrap();
        let lp = m.sequence_logprob(&units[0].input_text, &index.get("a").unwrap().tokens).unwrap();
        assert!((single + lp).abs() < 1e-12);
        let (l1, _) = m.loss(&units, &index).unwrap();
        let doubled: Vec<_> = units.iter().chain(units.iter()).cloned().collect();
        let (l2, _) = m.loss(&doubled, &index).unwrap();
        assert!((l1 - l2).abs() < 1e-12);
    }

    #[test]
    fn missing_identifier_is_reported() {
        let (m, mut units, index) = tiny();
        units[0].doc_id = "zzz".into();
        assert!(matches!(m.loss(&units, &index), Err(ModelError::MissingIdentifier { .. })));
    }

    #[test]
    fn zero_learning_rate_keeps_loss() {
        let (mut m, units, index) = tiny();
        let cfg = TrainConfig { learning_rate: 0.0, epochs: 3, ..TrainConfig::default() };
        let r = train(&mut m, &units, &index, &cfg, |_, _| {}).unwrap();
        assert!((r.final_loss - r.initial_loss).abs() < 1e-9);
    }

    #[test]
    fn training_is_deterministic_and_learns() {
        let (m0, units, index) = tiny();
        let cfg = TrainConfig { epochs: 40, batch_size: 2, token_dropout: 0.0, ..TrainConfig::default() };
        let (mut a, mut b) = (m0.clone(), m0);
        let ra = train(&mut a, &units, &index, &cfg, |_, _| {}).unwrap();
        let rb = train(&mut b, &units, &index, &cfg, |_, _| {}).unwrap();
        assert_eq!(ra, rb);
        assert!(ra.final_loss < ra.initial_loss);
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let (mut m, units, index) = tiny();
        let cfg = TrainConfig { epochs: 2, ..TrainConfig::default() };
        train(&mut m, &units, &index, &cfg, |_, _| {}).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        m.save(&path).unwrap();
        let back = Seq2SeqModel::load(&path).unwrap();
        assert_eq!(back, m);
        let input = m.encode_text("storms");
        assert_eq!(back.step_logprobs(&input, &[]), m.step_logprobs(&input, &[]));
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(ModelConfig { hidden_dim: 0, ..ModelConfig::default() }.validate().is_err());
        assert!(TrainConfig { epochs: 0, ..TrainConfig::default() }.validate().is_err());
    }
}
