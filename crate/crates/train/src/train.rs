use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Result, TrainError};
use crate::loss::{argmax_rows, cross_entropy};
use crate::model::Model;
use crate::optim::Sgd;
use crate::real::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub momentum: f64,
    pub batch: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Batch size for evaluation passes.
    pub eval_batch: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.005,
            momentum: 0.9,
            batch: 64,
            epochs: 30,
            seed: 0,
            eval_batch: 250,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 || self.eval_batch == 0 {
            return Err(TrainError::Config("batch sizes must be positive".into()));
        }
        if !(self.lr >= 0.0) || !(0.0..1.0).contains(&self.momentum) {
            return Err(TrainError::Config(format!(
                "need lr >= 0 and momentum in [0, 1), got lr={} momentum={}",
                self.lr, self.momentum
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
}

impl History {
    pub fn best_test_accuracy(&self) -> Option<f64> {
        self.epochs.iter().filter_map(|e| e.test_accuracy).reduce(f64::max)
    }

    pub fn final_test_accuracy(&self) -> Option<f64> {
        self.epochs.last().and_then(|e| e.test_accuracy)
    }
}

/// Fraction of `data` classified correctly in inference mode.
pub fn evaluate<S: Real>(model: &Model<S>, data: &Dataset, batch: usize) -> Result<f64> {
    if data.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let mut correct = 0usize;
    let indices: Vec<usize> = (0..data.len()).collect();
    for chunk in indices.chunks(batch.max(1)) {
        let (x, labels) = data.batch::<S>(chunk)?;
        let logits = model.predict(&x)?;
        correct += argmax_rows(&logits, model.classes())
            .iter()
            .zip(&labels)
            .filter(|(p, l)| p == l)
            .count();
    }
    Ok(correct as f64 / data.len() as f64)
}

/// Mini-batch SGD with momentum. The shuffle order and dropout masks come
/// from a generator seeded with `cfg.seed`, so a fixed seed reproduces the
/// whole trajectory. `on_epoch` sees each record as it is produced.
pub fn train<S: Real>(
    model: &mut Model<S>,
    train: &Dataset,
    test: Option<&Dataset>,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<History> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    if let Some(&label) = train.labels.iter().find(|&&l| l as usize >= model.classes()) {
        return Err(TrainError::LabelRange {
            label: label as usize,
            classes: model.classes(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut sgd = Sgd::new(S::lit(cfg.lr), S::lit(cfg.momentum));
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = History::default();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let (mut loss_sum, mut correct) = (0.0f64, 0usize);
        for chunk in order.chunks(cfg.batch) {
            let (x, labels) = train.batch::<S>(chunk)?;
            let (logits, cache) = model.forward(&x, Some(&mut rng))?;
            let (loss, grad) = cross_entropy(&logits, model.classes(), &labels)?;
            loss_sum += loss.as_f64() * chunk.len() as f64;
            correct += argmax_rows(&logits, model.classes())
                .iter()
                .zip(&labels)
                .filter(|(p, l)| p == l)
                .count();
            let grads = model.backward(&cache, &grad)?;
            model.update_running(&cache);
            sgd.step(model.params_mut(), &grads);
        }
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            train_accuracy: correct as f64 / train.len() as f64,
            test_accuracy: test.map(|t| evaluate(model, t, cfg.eval_batch)).transpose()?,
        };
        on_epoch(&record);
        history.epochs.push(record);
    }
    Ok(history)
}
