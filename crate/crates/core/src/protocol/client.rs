//! The client engine: owns the data, the convolutional stack, the loss, and
//! (in encrypted mode) the only copy of the secret key.

use std::io::{Read, Write};
use std::time::Instant;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::{count_correct, EpochMetrics, ProtocolError, RunSummary};
use crate::ckks::{decrypt_vector, keygen, PrivateContext, PublicContext};
use crate::data::{batch_indices, Dataset};
use crate::nn::ops::{softmax_cross_entropy, weight_grad};
use crate::nn::{ClientModel, ModelSpec};
use crate::tensor::Tensor;
use crate::wire::{Channel, Message, Mode, Tag, TrainConfig, WireError};

// Domain separation for the two client-side random streams.
const KEYGEN_SEED_SALT: u64 = 0x6b65_7967_656e_5f73;
const ENCRYPT_SEED_SALT: u64 = 0x656e_6372_7970_745f;

fn divergence_sentinel(loss: f32) -> ProtocolError {
    // placeholder position; the epoch loop fills in where it happened
    ProtocolError::Divergence {
        epoch: 0,
        batch: 0,
        loss,
    }
}

pub struct ClientEngine<S: Read + Write> {
    chan: Channel<S>,
    cfg: TrainConfig,
    model: ClientModel,
    ctx: Option<(PublicContext, PrivateContext)>,
    enc_rng: ChaCha20Rng,
}

impl<S: Read + Write> ClientEngine<S> {
    pub fn new(stream: S, cfg: TrainConfig) -> Result<Self, ProtocolError> {
        cfg.validate().map_err(ProtocolError::Wire)?;
        let model = ClientModel::init(ModelSpec::m1(), cfg.seed);
        let enc_rng = ChaCha20Rng::seed_from_u64(cfg.seed ^ ENCRYPT_SEED_SALT);
        Ok(ClientEngine {
            chan: Channel::new(stream),
            cfg,
            model,
            ctx: None,
            enc_rng,
        })
    }

    pub fn run(
        self,
        train: &Dataset,
        test: &Dataset,
    ) -> Result<(RunSummary, ClientModel), ProtocolError> {
        self.run_with_observer(train, test, |_, _| {})
    }

    /// Run the full protocol; the observer sees the client model after every
    /// optimizer step.
    pub fn run_with_observer(
        mut self,
        train: &Dataset,
        test: &Dataset,
        mut observer: impl FnMut(usize, &ClientModel),
    ) -> Result<(RunSummary, ClientModel), ProtocolError> {
        let n = self.cfg.batch_size;
        let full = train.len() / n;
        if full == 0 {
            return Err(ProtocolError::State(format!(
                "dataset of {} samples yields no complete batch of {n}",
                train.len()
            )));
        }
        if let Some(requested) = self.cfg.batches_per_epoch {
            if requested * n > train.len() {
                return Err(ProtocolError::State(format!(
                    "{requested} batches of {n} exceed the {} training samples",
                    train.len()
                )));
            }
        }
        let batches_per_epoch = self.cfg.batches_per_epoch.unwrap_or(full).min(full);
        self.cfg.batches_per_epoch = Some(batches_per_epoch);
        self.chan.synchronize_client(&self.cfg)?;
        if self.cfg.mode == Mode::Encrypted {
            let mut params = self
                .cfg
                .he_params()
                .map_err(ProtocolError::Wire)?
                .expect("validated");
            params.noise_std = self.cfg.noise_std();
            let (public, private) = keygen(params, self.cfg.seed ^ KEYGEN_SEED_SALT)?;
            self.chan.send(&Message::CtxPub(Box::new(public.clone())))?;
            self.ctx = Some((public, private));
        }

        let mut epochs = Vec::with_capacity(self.cfg.epochs);
        let mut global_batch = 0usize;
        for epoch in 0..self.cfg.epochs {
            let started = Instant::now();
            let mark = self.chan.transcript.len();
            let mut loss_sum = 0.0f64;
            let order = batch_indices(train.len(), n, self.cfg.seed, epoch as u64);
            for (bi, batch) in order.iter().take(batches_per_epoch).enumerate() {
                let (x, y) = train.gather(batch);
                let result = match self.cfg.mode {
                    Mode::Plain => self.train_batch_plain(&x, &y),
                    Mode::Encrypted => self.train_batch_encrypted(&x, &y),
                };
                let loss = result.map_err(|e| match e {
                    ProtocolError::Wire(source @ WireError::Io(_)) => ProtocolError::TransportAt {
                        epoch,
                        batch: bi,
                        done: global_batch,
                        source,
                    },
                    ProtocolError::Divergence { loss, .. } => ProtocolError::Divergence {
                        epoch,
                        batch: bi,
                        loss,
                    },
                    other => other,
                })?;
                loss_sum += loss as f64;
                observer(global_batch, &self.model);
                global_batch += 1;
            }
            self.chan.send(&Message::EpochEnd {
                epoch: epoch as u32,
            })?;
            let end = self.chan.transcript.len();
            epochs.push(EpochMetrics {
                epoch,
                mean_loss: (loss_sum / batches_per_epoch as f64) as f32,
                seconds: started.elapsed().as_secs_f64(),
                bytes_out: self.chan.transcript.sent_in(mark..end),
                bytes_in: self.chan.transcript.received_in(mark..end),
                accuracy: None,
            });
        }
        let training_entries = self.chan.transcript.len();
        let accuracy = self.evaluate_via_server(test)?;
        if let Some(last) = epochs.last_mut() {
            last.accuracy = Some(accuracy);
        }
        self.chan.send(&Message::Bye)?;
        Ok((
            RunSummary {
                epochs,
                accuracy,
                transcript: self.chan.transcript,
                training_entries,
            },
            self.model,
        ))
    }

    fn train_batch_plain(&mut self, x: &Tensor, y: &[u8]) -> Result<f32, ProtocolError> {
        let a = self.model.forward(x)?;
        self.chan.send(&Message::ActPlain(a))?;
        let logits = self.chan.recv_tensor(Tag::OutPlain)?;
        let (_, loss, grad) = softmax_cross_entropy(&logits, y)?;
        if !loss.is_finite() {
            return Err(divergence_sentinel(loss));
        }
        self.chan.send(&Message::GradOut(grad))?;
        let ga = self.chan.recv_tensor(Tag::GradAct)?;
        self.model.backward_and_step(&ga, self.cfg.eta)?;
        Ok(loss)
    }

    fn train_batch_encrypted(&mut self, x: &Tensor, y: &[u8]) -> Result<f32, ProtocolError> {
        let a = self.model.forward(x)?;
        let (public, private) = self.ctx.as_ref().expect("encrypted mode context");
        let cv = public.encrypt_features(&a, &mut self.enc_rng)?;
        self.chan.send(&Message::ActEnc(cv))?;
        let out = match self.chan.recv()? {
            Message::OutEnc(cv) => cv,
            other => {
                return Err(WireError::UnexpectedMessage {
                    expected: "OUT_ENC",
                    got: other.tag(),
                }
                .into())
            }
        };
        let logits = decrypt_vector(private, &out)?;
        let (_, loss, grad) = softmax_cross_entropy(&logits, y)?;
        if !loss.is_finite() {
            return Err(divergence_sentinel(loss));
        }
        let gw = weight_grad(&grad, &a)?;
        self.chan.send(&Message::GradOut(grad))?;
        self.chan.send(&Message::GradW(gw))?;
        let ga = self.chan.recv_tensor(Tag::GradAct)?;
        self.model.backward_and_step(&ga, self.cfg.eta)?;
        Ok(loss)
    }

    /// Test-set accuracy with the linear layer evaluated by the server.
    /// Plaintext round-trip by default; encrypted when configured.
    fn evaluate_via_server(&mut self, test: &Dataset) -> Result<f32, ProtocolError> {
        if test.is_empty() {
            return Err(ProtocolError::EmptyTestSet);
        }
        let chunk = self.cfg.batch_size.max(16);
        let mut correct = 0usize;
        let mut at = 0usize;
        while at < test.len() {
            let hi = (at + chunk).min(test.len());
            let indices: Vec<usize> = (at..hi).collect();
            let (x, y) = test.gather(&indices);
            let a = self.model.infer(&x)?;
            let logits = if self.cfg.eval_encrypted {
                let (public, private) = self
                    .ctx
                    .as_ref()
                    .ok_or_else(|| ProtocolError::State("encrypted eval without context".into()))?;
                let cv = public.encrypt_features(&a, &mut self.enc_rng)?;
                self.chan.send(&Message::ActEnc(cv))?;
                match self.chan.recv()? {
                    Message::OutEnc(cv) => decrypt_vector(private, &cv)?,
                    other => {
                        return Err(WireError::UnexpectedMessage {
                            expected: "OUT_ENC",
                            got: other.tag(),
                        }
                        .into())
                    }
                }
            } else {
                self.chan.send(&Message::ActPlain(a))?;
                self.chan.recv_tensor(Tag::OutPlain)?
            };
            correct += count_correct(&logits, &y);
            at = hi;
        }
        Ok(correct as f32 / test.len() as f32)
    }
}
