//! Two-party split training of a 1D CNN for heartbeat classification.
//!
//! The network is split U-shaped: the client owns the convolutional stack and
//! the softmax/loss, the server owns a single 256→5 linear layer. Training
//! runs either on plaintext activation maps or on activation maps encrypted
//! under a leveled CKKS-style scheme, in which case the server evaluates its
//! linear layer directly on ciphertexts and never sees the activations.
//!
//! Crate layout:
//! - [`tensor`] — dense f32 tensors used for all training state
//! - [`nn`] — conv/pool/activation/linear layers with analytic backward, the
//!   model definition and checkpoint format
//! - [`optim`] — Adam and plain gradient descent
//! - [`ckks`] — the encryption scheme: encoding, keygen, encrypt/decrypt,
//!   ciphertext–plaintext arithmetic, rescaling, and the encrypted linear map
//! - [`wire`] — length-prefixed framing, message types, transcripts, and the
//!   hyperparameter handshake
//! - [`protocol`] — client/server training engines and the local baseline
//! - [`data`] — heartbeat CSV loading, batching, and a synthetic generator

pub mod ckks;
pub mod data;
pub mod nn;
pub mod optim;
pub mod protocol;
pub mod tensor;
pub mod wire;

pub use ckks::{keygen, CipherVector, HeParams, PrivateContext, PublicContext};
pub use data::Dataset;
pub use nn::{ClientModel, LinearHead, ModelSpec};
pub use protocol::{ClientEngine, EpochMetrics, RunSummary, ServerEngine};
pub use tensor::Tensor;
pub use wire::{Mode, TrainConfig, Transcript};
