use serde::{Deserialize, Serialize};

use super::model::{check_labels, FreezeMask, ToyModel};
use crate::error::{ensure, Error, Result};
use crate::matrix::Matrix;
use crate::scalar::{lit, Scalar};

/// Only full-batch gradient descent is supported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    #[default]
    FullBatchGd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    /// Seeds model initialization wherever a run creates one.
    pub seed: u64,
    #[serde(default)]
    pub optimizer: Optimizer,
}

impl TrainConfig {
    pub fn new(learning_rate: f64, epochs: usize, seed: u64) -> Self {
        Self {
            learning_rate,
            epochs,
            seed,
            optimizer: Optimizer::FullBatchGd,
        }
    }

    /// Defaults for pretraining on the source domain.
    pub fn pretrain_default() -> Self {
        Self::new(0.05, 300, 42)
    }

    /// Defaults for fine-tuning on the target training split.
    pub fn finetune_default() -> Self {
        Self::new(0.05, 200, 42)
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.epochs >= 1, "epochs must be at least 1");
        ensure!(
            self.learning_rate > 0.0 && self.learning_rate.is_finite(),
            "learning rate must be positive and finite, got {}",
            self.learning_rate
        );
        Ok(())
    }
}

/// Per-epoch losses recorded by [`train_with_history`].
#[derive(Debug, Clone, PartialEq)]
pub struct TrainHistory<T> {
    /// Loss before each update, one entry per epoch.
    pub losses: Vec<T>,
    /// Loss of the returned model.
    pub final_loss: T,
}

/// Full-batch gradient descent on the unfrozen groups.
pub fn train<T: Scalar>(
    model: &ToyModel<T>,
    x: &Matrix<T>,
    y: &[usize],
    mask: &FreezeMask,
    cfg: &TrainConfig,
) -> Result<ToyModel<T>> {
    train_with_history(model, x, y, mask, cfg).map(|(m, _)| m)
}

pub fn train_with_history<T: Scalar>(
    model: &ToyModel<T>,
    x: &Matrix<T>,
    y: &[usize],
    mask: &FreezeMask,
    cfg: &TrainConfig,
) -> Result<(ToyModel<T>, TrainHistory<T>)> {
    cfg.validate()?;
    model.validate()?;
    ensure!(
        x.cols() == model.input_width(),
        "input has {} columns but the model expects {}",
        x.cols(),
        model.input_width()
    );
    check_labels(x.rows(), y, model.num_classes())?;

    let mut current = model.clone();
    let lr: T = lit(cfg.learning_rate);
    let mut losses = Vec::with_capacity(cfg.epochs);
    // The body is fixed while dense1 is frozen, so its activations are computed once.
    let cached_hidden = mask.dense1.then(|| current.hidden(x));

    if mask.all_frozen() {
        let hidden = cached_hidden.unwrap_or_else(|| current.hidden(x));
        let loss = current.loss_from_hidden(&hidden, y);
        return Ok((
            current,
            TrainHistory {
                losses: vec![loss; cfg.epochs],
                final_loss: loss,
            },
        ));
    }

    for epoch in 0..cfg.epochs {
        let owned;
        let hidden = match &cached_hidden {
            Some(h) => h,
            None => {
                owned = current.hidden(x);
                &owned
            }
        };
        let (loss, grads) = current.backprop(x, hidden, y, mask);
        if !loss.is_finite() || !grads.is_finite() {
            return Err(Error::TrainingDiverged {
                epoch,
                context: String::new(),
            });
        }
        losses.push(loss);
        current.apply_step(&grads, lr, mask);
        if !current.is_finite() {
            return Err(Error::TrainingDiverged {
                epoch,
                context: "non-finite parameters".into(),
            });
        }
    }

    let hidden = match cached_hidden {
        Some(h) => h,
        None => current.hidden(x),
    };
    let final_loss = current.loss_from_hidden(&hidden, y);
    if !final_loss.is_finite() {
        return Err(Error::TrainingDiverged {
            epoch: cfg.epochs,
            context: "non-finite final loss".into(),
        });
    }
    Ok((current, TrainHistory { losses, final_loss }))
}

/// Index of the largest value, ties going to the lowest index.
pub fn argmax<T: Scalar>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Fraction of rows whose predicted class equals the label.
pub fn accuracy<T: Scalar>(model: &ToyModel<T>, x: &Matrix<T>, y: &[usize]) -> Result<f64> {
    ensure!(x.rows() > 0, "accuracy of an empty dataset is undefined");
    ensure!(y.len() == x.rows(), "{} labels for {} rows", y.len(), x.rows());
    let logits = model.forward(x)?;
    Ok(accuracy_from_logits(&logits, y))
}

pub(crate) fn accuracy_from_logits<T: Scalar>(logits: &Matrix<T>, y: &[usize]) -> f64 {
    let correct = logits
        .iter_rows()
        .zip(y)
        .filter(|(row, &label)| argmax(row) == label)
        .count();
    correct as f64 / y.len() as f64
}
