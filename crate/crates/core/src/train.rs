//! Mini-batch Adam training of an autoencoder on reconstruction MSE.

use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::Autoencoder;
use crate::nn::{adam_step, mse_loss, AdamState, Mode};
use crate::patches::{augment_with, DatasetSplit, Dihedral, Patch};
use crate::rng;

/// Epochs between learning-rate halvings when decay is on.
pub const DECAY_EVERY: usize = 25;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub name: String,
    pub lr: f64,
    pub batch: usize,
    pub patches_per_image: usize,
    pub epochs: usize,
    pub lr_decay: bool,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::invalid(format!("learning rate must be positive, got {}", self.lr)));
        }
        if self.batch == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        if self.patches_per_image == 0 {
            return Err(Error::invalid("patches per image must be at least 1"));
        }
        Ok(())
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        if self.lr_decay {
            self.lr * 0.5f64.powi((epoch / DECAY_EVERY) as i32)
        } else {
            self.lr
        }
    }

    /// Lower-case, dash-separated form of the name (`"Small Batch"` -> `"small-batch"`).
    pub fn slug(&self) -> String {
        slugify(&self.name)
    }
}

fn slugify(name: &str) -> String {
    name.split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(|w| w.to_ascii_lowercase())
        .collect::<Vec<_>>()
        .join("-")
}

/// The seven hyperparameter settings that were compared.
pub fn builtin_configs() -> Vec<TrainConfig> {
    let cfg = |name: &str, lr, batch, patches_per_image, epochs, lr_decay| TrainConfig {
        name: name.to_string(),
        lr,
        batch,
        patches_per_image,
        epochs,
        lr_decay,
    };
    vec![
        cfg("Baseline", 0.001, 1024, 3000, 100, false),
        cfg("Lower Learning Rate", 0.0001, 1024, 3000, 100, false),
        cfg("Small Batch", 0.001, 256, 3000, 100, false),
        cfg("Large Batch", 0.002, 2048, 3000, 100, false),
        cfg("More Patches", 0.001, 1024, 4900, 100, false),
        cfg("Extended Training", 0.001, 1024, 3000, 200, false),
        cfg("Learning Rate Decay", 0.001, 1024, 3000, 100, true),
    ]
}

/// Looks a built-in config up by name or slug, case-insensitively.
pub fn find_config(name: &str) -> Option<TrainConfig> {
    let wanted = slugify(name);
    builtin_configs().into_iter().find(|c| c.slug() == wanted)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<EpochRecord>,
}

impl TrainLog {
    pub fn final_val_loss(&self) -> Option<f64> {
        self.records.last().map(|r| r.val_loss)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
        w.write_record(["epoch", "train_loss", "val_loss", "seconds"])
            .map_err(|e| csv_error(path, e))?;
        for r in &self.records {
            w.write_record([
                r.epoch.to_string(),
                r.train_loss.to_string(),
                r.val_loss.to_string(),
                format!("{:.3}", r.seconds),
            ])
            .map_err(|e| csv_error(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

pub(crate) fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e))
}

/// Splits `order` into batches, folding a trailing single sample into the
/// previous batch so batch statistics stay defined.
fn batches(order: &[usize], size: usize) -> Vec<&[usize]> {
    let mut chunks: Vec<&[usize]> = order.chunks(size).collect();
    if chunks.len() > 1 && chunks.last().is_some_and(|c| c.len() == 1) {
        let n = order.len();
        chunks.pop();
        chunks.pop();
        let start = (chunks.len()) * size;
        chunks.push(&order[start..n]);
    }
    chunks
}

/// Mean reconstruction MSE over `patches` in evaluation mode.
pub fn mean_loss(model: &mut Autoencoder, patches: &[Patch], chunk: usize) -> Result<f64> {
    if patches.is_empty() {
        return Err(Error::invalid("cannot compute a loss over zero patches"));
    }
    let mut total = 0.0;
    for group in patches.chunks(chunk.max(1)) {
        let x = model.input_tensor(group)?;
        let y = model.forward(&x, Mode::Eval)?;
        let (loss, _) = mse_loss(&y, &x)?;
        total += loss * group.len() as f64;
    }
    Ok(total / patches.len() as f64)
}

/// Runs `config.epochs` epochs of shuffled, augmented mini-batch Adam.
///
/// Shuffles are keyed by `(seed, epoch)` and augmentations by
/// `(seed, epoch, sample)`, so a run is fully determined by its inputs.
/// `on_epoch` sees every record as it is produced.
pub fn train_with(
    model: &mut Autoencoder,
    data: &DatasetSplit,
    config: &TrainConfig,
    seed: u64,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainLog> {
    config.validate()?;
    if data.train.is_empty() || data.val.is_empty() {
        return Err(Error::invalid("training and validation splits must both be non-empty"));
    }
    let size = model.spec().input_size;
    if let Some(p) = data.train.iter().chain(&data.val).find(|p| p.size != size) {
        return Err(Error::ShapeMismatch {
            context: "training patches",
            expected: vec![size, size],
            actual: vec![p.size, p.size],
        });
    }

    let mut adam = AdamState::new();
    let mut log = TrainLog::default();
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    for epoch in 0..config.epochs {
        let started = Instant::now();
        let lr = config.lr_at(epoch);
        order.sort_unstable();
        order.shuffle(&mut rng::stream(seed, &[rng::tag("shuffle"), epoch as u64]));

        let mut total = 0.0;
        for (b, idx) in batches(&order, config.batch).into_iter().enumerate() {
            let augmented: Vec<Patch> = idx
                .iter()
                .map(|&i| augment_with(&data.train[i], Dihedral::for_sample(seed, epoch as u64, i as u64)))
                .collect();
            let x = model.input_tensor(&augmented)?;
            let y = model.forward(&x, Mode::Train)?;
            let (loss, grad) = mse_loss(&y, &x)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "training loss is {loss} at epoch {} batch {b}",
                    epoch + 1
                )));
            }
            model.zero_grad();
            model.backward(&grad)?;
            adam_step(&mut model.params_mut(), &mut adam, lr)
                .map_err(|e| Error::NonFinite(format!("epoch {} batch {b}: {e}", epoch + 1)))?;
            total += loss * idx.len() as f64;
        }

        let val_loss = mean_loss(model, &data.val, 512)?;
        if !val_loss.is_finite() {
            return Err(Error::NonFinite(format!("validation loss is {val_loss} at epoch {}", epoch + 1)));
        }
        let record = EpochRecord {
            epoch: epoch + 1,
            train_loss: total / data.train.len() as f64,
            val_loss,
            seconds: started.elapsed().as_secs_f64(),
        };
        on_epoch(&record);
        log.records.push(record);
    }
    Ok(log)
}

pub fn train(model: &mut Autoencoder, data: &DatasetSplit, config: &TrainConfig, seed: u64) -> Result<TrainLog> {
    train_with(model, data, config, seed, |_| {})
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seven_configs() {
        let all = builtin_configs();
        assert_eq!(all.len(), 7);
        let small = find_config("Small Batch").unwrap();
        assert_eq!(small.batch, 256);
        let more = find_config("more-patches").unwrap();
        assert_eq!(more.patches_per_image, 4900);
        let large = find_config("large batch").unwrap();
        assert_eq!((large.lr, large.batch), (0.002, 2048));
        let base = find_config("baseline").unwrap();
        assert_eq!((base.lr, base.batch, base.patches_per_image, base.epochs), (0.001, 1024, 3000, 100));
        assert_eq!(find_config("Extended Training").unwrap().epochs, 200);
        assert_eq!(find_config("lower-learning-rate").unwrap().lr, 0.0001);
        assert!(find_config("learning-rate-decay").unwrap().lr_decay);
        assert!(find_config("nope").is_none());
        for c in &all {
            c.validate().unwrap();
        }
    }

    #[test]
    fn config_validation() {
        let mut c = find_config("baseline").unwrap();
        c.epochs = 0;
        assert!(c.validate().is_err());
        let mut c = find_config("baseline").unwrap();
        c.lr = 0.0;
        assert!(c.validate().is_err());
        let mut c = find_config("baseline").unwrap();
        c.batch = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn decay_halves_every_25_epochs() {
        let c = find_config("learning-rate-decay").unwrap();
        assert_eq!(c.lr_at(0), 0.001);
        assert_eq!(c.lr_at(24), 0.001);
        assert_eq!(c.lr_at(25), 0.0005);
        assert_eq!(c.lr_at(99), 0.000125);
        assert_eq!(find_config("baseline").unwrap().lr_at(99), 0.001);
    }

    #[test]
    fn trailing_singleton_is_folded() {
        let order: Vec<usize> = (0..9).collect();
        let b = batches(&order, 4);
        assert_eq!(b.iter().map(|c| c.len()).collect::<Vec<_>>(), vec![4, 5]);
        let b = batches(&order, 3);
        assert_eq!(b.iter().map(|c| c.len()).collect::<Vec<_>>(), vec![3, 3, 3]);
        assert_eq!(batches(&order[..1], 4).len(), 1);
    }
}
