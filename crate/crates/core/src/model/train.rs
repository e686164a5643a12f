use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cvr::{ModalityVolume, NormStats};
use crate::ensemble::Label;
use crate::error::{Error, Result};
use crate::nn::{sigmoid_bce, AdamConfig, AdamState};
use crate::tensor::TensorND;

use super::augment::Symmetry;
use super::ConvNet3D;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    /// Upper bound on epochs.
    pub epochs: usize,
    pub seed: u64,
    /// Stop after this many epochs in which validation accuracy and
    /// validation loss both fail to reach a new best; `None` runs every epoch.
    pub patience: Option<usize>,
    /// Draw a random flip, transpose and time reversal per training sample.
    #[serde(default)]
    pub augment: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            batch_size: 20,
            epochs: 100,
            seed: 0,
            patience: Some(10),
            augment: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::Invalid(format!("lr must be > 0, got {}", self.lr)));
        }
        if self.batch_size == 0 {
            return Err(Error::Invalid("batch_size must be >= 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Invalid("epochs must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean minibatch BCE over the epoch.
    pub loss: f64,
    /// Accuracy of the minibatch forward passes, before each update.
    pub train_accuracy: f64,
    pub val_accuracy: Option<f64>,
    pub val_loss: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: ConvNet3D,
    pub history: Vec<EpochRecord>,
    /// Epoch (1-based) whose parameters were kept.
    pub best_epoch: usize,
}

/// Minibatch Adam on sigmoid BCE.
///
/// Normalization statistics are computed from `train_set` and stored in the
/// returned model. With a non-empty `val_set` the parameters of the best
/// validation epoch are kept: highest accuracy, then lowest loss.
pub fn train(
    mut model: ConvNet3D,
    train_set: &[(ModalityVolume, Label)],
    val_set: &[(ModalityVolume, Label)],
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::Empty("training set".into()));
    }
    let n_fake = train_set.iter().filter(|(_, l)| l.is_fake()).count();
    if n_fake == 0 || n_fake == train_set.len() {
        return Err(Error::SingleClass);
    }
    for (v, _) in train_set.iter().chain(val_set) {
        model.check_volume(v)?;
        if v.normalization.is_some() {
            return Err(Error::Invalid("training expects raw volumes".into()));
        }
    }
    model.normalization = NormStats::compute(train_set.iter().map(|(v, _)| &v.tensor))?;
    let prepare = |set: &[(ModalityVolume, Label)]| -> Result<Vec<(TensorND, f64)>> {
        set.iter()
            .map(|(v, l)| Ok((model.prepare(v)?, l.target())))
            .collect()
    };
    let train_data = prepare(train_set)?;
    let val_data = prepare(val_set)?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let adam = AdamConfig {
        lr: config.lr,
        ..AdamConfig::default()
    };
    let mut state = AdamState::new(adam, &model.network.params())?;
    let mut order: Vec<usize> = (0..train_data.len()).collect();
    let mut history = Vec::new();
    let mut best: Option<(f64, f64, usize, crate::nn::Network<f32>)> = None;
    let (mut best_acc, mut best_loss) = (f64::NEG_INFINITY, f64::INFINITY);
    let mut stale = 0usize;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let (mut loss_sum, mut correct) = (0.0f64, 0usize);
        for batch in order.chunks(config.batch_size) {
            let augmented: Vec<TensorND> = if config.augment {
                batch
                    .iter()
                    .map(|&i| {
                        let sym = Symmetry::from_index(rng.random_range(0..Symmetry::COUNT));
                        sym.apply(model.modality, &train_data[i].0, &model.normalization)
                    })
                    .collect::<Result<_>>()?
            } else {
                Vec::new()
            };
            let inputs: Vec<&TensorND> = if config.augment {
                augmented.iter().collect()
            } else {
                batch.iter().map(|&i| &train_data[i].0).collect()
            };
            let x = TensorND::stack(&inputs)?;
            let fwd = model.network.forward(&x, true)?;
            let n = batch.len() as f64;
            let mut d_logits = Vec::with_capacity(batch.len());
            for (&i, &l) in batch.iter().zip(&fwd.logits) {
                let y = train_data[i].1;
                let (loss, grad) = sigmoid_bce(l as f64, y).map_err(|_| {
                    Error::NonFinite(format!(
                        "{} training logit at epoch {epoch}",
                        model.modality
                    ))
                })?;
                loss_sum += loss;
                correct += usize::from((l > 0.0) == (y > 0.5));
                d_logits.push((grad / n) as f32);
            }
            let grads = model.network.backward(&fwd, &d_logits)?;
            for g in &grads.params {
                g.check_finite("parameter gradient")?;
            }
            let grad_refs: Vec<&TensorND> = grads.params.iter().collect();
            state.update(&mut model.network.params_mut(), &grad_refs)?;
        }
        let loss = loss_sum / train_data.len() as f64;
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("training loss at epoch {epoch}")));
        }
        let train_accuracy = correct as f64 / train_data.len() as f64;
        let (val_accuracy, val_loss) = if val_data.is_empty() {
            (None, None)
        } else {
            let (acc, vl) = score(&model, &val_data)?;
            (Some(acc), Some(vl))
        };
        log::info!(
            "{} epoch {epoch}: loss {loss:.4} train acc {train_accuracy:.3} val acc {val_accuracy:?}",
            model.modality
        );
        history.push(EpochRecord {
            epoch,
            loss,
            train_accuracy,
            val_accuracy,
            val_loss,
        });

        if let (Some(acc), Some(vl)) = (val_accuracy, val_loss) {
            let better = match &best {
                None => true,
                Some((ba, bl, _, _)) => acc > *ba || (acc == *ba && vl < *bl),
            };
            if better {
                best = Some((acc, vl, epoch, model.network.clone()));
            }
            if acc > best_acc || vl < best_loss {
                best_acc = best_acc.max(acc);
                best_loss = best_loss.min(vl);
                stale = 0;
            } else {
                stale += 1;
            }
            if config.patience.is_some_and(|p| stale >= p) {
                break;
            }
        }
    }

    let last = history.len();
    let best_epoch = match best {
        Some((_, _, epoch, network)) => {
            model.network = network;
            epoch
        }
        None => last,
    };
    model.epoch = best_epoch;
    model.seed = config.seed;
    Ok(TrainOutcome {
        model,
        history,
        best_epoch,
    })
}

/// Accuracy and mean BCE over prepared inputs.
fn score(model: &ConvNet3D, data: &[(TensorND, f64)]) -> Result<(f64, f64)> {
    let (mut correct, mut loss) = (0usize, 0.0f64);
    for (x, y) in data {
        let l = model.logit(x)?;
        loss += sigmoid_bce(l, *y)?.0;
        correct += usize::from((l > 0.0) == (*y > 0.5));
    }
    Ok((correct as f64 / data.len() as f64, loss / data.len() as f64))
}
