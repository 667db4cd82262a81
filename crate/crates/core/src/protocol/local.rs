//! Unsplit baseline training. Uses exactly the same per-batch operation
//! order as a split run so identically seeded runs produce bit-identical
//! binary32 parameter trajectories.

use std::time::Instant;

use super::{count_correct, EpochMetrics, ProtocolError, RunSummary};
use crate::data::{batch_indices, Dataset};
use crate::nn::ops::softmax_cross_entropy;
use crate::nn::{LocalModel, ModelSpec};
use crate::wire::{TrainConfig, Transcript};

/// Accuracy of the full pipeline over a test set, evaluated in chunks.
pub fn evaluate_local(
    model: &LocalModel,
    ds: &Dataset,
    chunk: usize,
) -> Result<f32, ProtocolError> {
    if ds.is_empty() {
        return Err(ProtocolError::EmptyTestSet);
    }
    let mut correct = 0usize;
    let mut at = 0usize;
    while at < ds.len() {
        let hi = (at + chunk).min(ds.len());
        let indices: Vec<usize> = (at..hi).collect();
        let (x, y) = ds.gather(&indices);
        let logits = model.infer(&x)?;
        correct += count_correct(&logits, &y);
        at = hi;
    }
    Ok(correct as f32 / ds.len() as f32)
}

/// Train the unsplit model; returns per-epoch metrics, final test accuracy,
/// and the trained model. The observer sees the model after every batch.
pub fn train_local(
    cfg: &TrainConfig,
    train: &Dataset,
    test: &Dataset,
    mut observer: Option<&mut dyn FnMut(usize, &LocalModel)>,
) -> Result<(RunSummary, LocalModel), ProtocolError> {
    cfg.validate()?;
    let spec = ModelSpec::m1();
    let mut model = LocalModel::init(spec, cfg.seed, cfg.server_opt);
    let n = cfg.batch_size;
    let full = train.len() / n;
    if let Some(requested) = cfg.batches_per_epoch {
        if requested * n > train.len() {
            return Err(ProtocolError::State(format!(
                "{requested} batches of {n} exceed the {} training samples",
                train.len()
            )));
        }
    }
    let batches_per_epoch = cfg.batches_per_epoch.unwrap_or(full).min(full);
    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut global_batch = 0usize;
    for epoch in 0..cfg.epochs {
        let started = Instant::now();
        let mut loss_sum = 0.0f64;
        let order = batch_indices(train.len(), n, cfg.seed, epoch as u64);
        for (bi, batch) in order.iter().take(batches_per_epoch).enumerate() {
            let (x, y) = train.gather(batch);
            let logits = model.forward(&x)?;
            let (_, loss, grad) = softmax_cross_entropy(&logits, &y)?;
            if !loss.is_finite() {
                return Err(ProtocolError::Divergence {
                    epoch,
                    batch: bi,
                    loss,
                });
            }
            model.backward_and_step(&grad, cfg.eta)?;
            loss_sum += loss as f64;
            if let Some(ref mut f) = observer {
                f(global_batch, &model);
            }
            global_batch += 1;
        }
        epochs.push(EpochMetrics {
            epoch,
            mean_loss: (loss_sum / batches_per_epoch.max(1) as f64) as f32,
            seconds: started.elapsed().as_secs_f64(),
            bytes_out: 0,
            bytes_in: 0,
            accuracy: None,
        });
    }
    let accuracy = evaluate_local(&model, test, n.max(16))?;
    if let Some(last) = epochs.last_mut() {
        last.accuracy = Some(accuracy);
    }
    Ok((
        RunSummary {
            epochs,
            accuracy,
            transcript: Transcript::default(),
            training_entries: 0,
        },
        model,
    ))
}
