//! Client and server training engines for the split model, plus the local
//! (unsplit) baseline trainer.
//!
//! Per batch the plaintext protocol exchanges
//! `ACT_PLAIN → OUT_PLAIN → GRAD_OUT → GRAD_ACT`; the encrypted protocol
//! exchanges `ACT_ENC → OUT_ENC → GRAD_OUT, GRAD_W → GRAD_ACT`. The extra
//! GRAD_W message exists because the server cannot derive the weight gradient
//! from a ciphertext input; the client computes it in plaintext and accepts
//! the resulting gradient-channel leakage.

mod client;
mod local;
mod server;

pub use client::ClientEngine;
pub use local::{evaluate_local, train_local};
pub use server::{ServerEngine, ServerSummary};

use thiserror::Error;

use crate::ckks::HeError;
use crate::nn::NnError;
use crate::tensor::Tensor;
use crate::wire::{Transcript, WireError};

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error(transparent)]
    He(#[from] HeError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("training diverged at epoch {epoch}, batch {batch}: loss {loss}")]
    Divergence {
        epoch: usize,
        batch: usize,
        loss: f32,
    },
    #[error(
        "connection lost at epoch {epoch}, batch {batch} ({done} batches completed): {source}"
    )]
    TransportAt {
        epoch: usize,
        batch: usize,
        done: usize,
        source: WireError,
    },
    #[error("cannot evaluate on an empty test set")]
    EmptyTestSet,
    #[error("protocol state violation: {0}")]
    State(String),
}

/// Per-epoch record: mean training loss, wall-clock seconds, and the exact
/// transcript byte counts for the epoch. Test accuracy is filled on the final
/// epoch after evaluation.
#[derive(Clone, Debug)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub mean_loss: f32,
    pub seconds: f64,
    pub bytes_out: u64,
    pub bytes_in: u64,
    pub accuracy: Option<f32>,
}

/// Outcome of a training run.
pub struct RunSummary {
    pub epochs: Vec<EpochMetrics>,
    pub accuracy: f32,
    pub transcript: Transcript,
    /// Transcript entries up to the end of training (the remainder belongs to
    /// evaluation and shutdown).
    pub training_entries: usize,
}

/// Count argmax hits of `logits` rows against labels.
pub(crate) fn count_correct(logits: &Tensor, labels: &[u8]) -> usize {
    let (n, classes) = (logits.dim(0), logits.dim(1));
    let mut correct = 0;
    for bi in 0..n {
        let row = &logits.data()[bi * classes..(bi + 1) * classes];
        let mut best = 0usize;
        for j in 1..classes {
            if row[j] > row[best] {
                best = j;
            }
        }
        if best == labels[bi] as usize {
            correct += 1;
        }
    }
    correct
}
