//! The server engine: one linear layer, a strict message-ordering state
//! machine, and — in encrypted mode — a public-only context, so decryption is
//! impossible by construction.

use std::io::{Read, Write};

use super::ProtocolError;
use crate::ckks::{encrypted_linear, PublicContext};
use crate::nn::{LinearHead, ModelSpec};
use crate::tensor::Tensor;
use crate::wire::{Channel, Message, Mode, TrainConfig, Transcript};

/// What the server saw: its transcript and counters for sanity checks.
pub struct ServerSummary {
    pub transcript: Transcript,
    pub epochs_seen: usize,
    pub train_batches: usize,
    pub eval_batches: usize,
}

enum Phase {
    /// Awaiting the start of a training batch.
    TrainIdle { epoch: usize, batch: usize },
    /// Sent OUT_*, awaiting the gradient sequence.
    AwaitGrad { epoch: usize, batch: usize },
    /// Encrypted mode: received GRAD_OUT, awaiting GRAD_W.
    AwaitGradW {
        epoch: usize,
        batch: usize,
        grad_out: Tensor,
    },
    /// All epochs finished; serving evaluation round-trips until BYE.
    Eval,
}

pub struct ServerEngine<S: Read + Write> {
    chan: Channel<S>,
    cfg: TrainConfig,
}

impl<S: Read + Write> ServerEngine<S> {
    pub fn new(stream: S, cfg: TrainConfig) -> Result<Self, ProtocolError> {
        cfg.validate().map_err(ProtocolError::Wire)?;
        Ok(ServerEngine {
            chan: Channel::new(stream),
            cfg,
        })
    }

    pub fn run(self) -> Result<(ServerSummary, LinearHead), ProtocolError> {
        self.run_with_observer(|_, _| {})
    }

    /// Serve one client session; the observer sees the linear head after
    /// every update step.
    pub fn run_with_observer(
        mut self,
        mut observer: impl FnMut(usize, &LinearHead),
    ) -> Result<(ServerSummary, LinearHead), ProtocolError> {
        let cfg = self.chan.synchronize_server(&self.cfg)?;
        let batches_per_epoch = cfg.batches_per_epoch.ok_or_else(|| {
            ProtocolError::State("handshake did not fix the batches per epoch".into())
        })?;
        let mut head = LinearHead::init(&ModelSpec::m1(), cfg.seed, cfg.server_opt);
        let mut ctx: Option<PublicContext> = None;
        if cfg.mode == Mode::Encrypted {
            match self.chan.recv()? {
                Message::CtxPub(c) => {
                    let expect = cfg
                        .he_params()
                        .map_err(ProtocolError::Wire)?
                        .expect("validated");
                    let got = c.params();
                    if got.poly_degree != expect.poly_degree
                        || got.chain_bits != expect.chain_bits
                        || got.scale_bits != expect.scale_bits
                    {
                        return Err(ProtocolError::State(
                            "public context parameters disagree with the synchronized config"
                                .into(),
                        ));
                    }
                    ctx = Some(*c);
                }
                other => {
                    return Err(ProtocolError::State(format!(
                        "expected CTX_PUB after SYNC in encrypted mode, got {}",
                        other.tag().name()
                    )))
                }
            }
        }

        let mut phase = if cfg.epochs > 0 && batches_per_epoch > 0 {
            Phase::TrainIdle { epoch: 0, batch: 0 }
        } else {
            Phase::Eval
        };
        let mut train_batches = 0usize;
        let mut eval_batches = 0usize;
        let mut epochs_seen = 0usize;
        loop {
            let msg = self.chan.recv()?;
            phase = match (phase, msg) {
                (Phase::TrainIdle { epoch, batch }, Message::ActPlain(a)) => {
                    if cfg.mode != Mode::Plain {
                        return Err(ProtocolError::State(
                            "plaintext activations are not accepted while training encrypted"
                                .into(),
                        ));
                    }
                    let out = head.forward(&a)?;
                    self.chan.send(&Message::OutPlain(out))?;
                    Phase::AwaitGrad { epoch, batch }
                }
                (Phase::TrainIdle { epoch, batch }, Message::ActEnc(cv)) => {
                    let ctx = ctx.as_ref().ok_or_else(|| {
                        ProtocolError::State("encrypted activation without a context".into())
                    })?;
                    if cfg.mode != Mode::Encrypted {
                        return Err(ProtocolError::State(
                            "encrypted activations are not accepted in plaintext mode".into(),
                        ));
                    }
                    let out = encrypted_linear(ctx, &cv, &head.weight, &head.bias)?;
                    self.chan.send(&Message::OutEnc(out))?;
                    Phase::AwaitGrad { epoch, batch }
                }
                (Phase::AwaitGrad { epoch, batch }, Message::GradOut(g)) => match cfg.mode {
                    Mode::Plain => {
                        let (gw, gb) = head.grads_from_cache(&g)?;
                        let ga = head.input_grad(&g)?;
                        head.apply_grads(&gw, &gb, cfg.eta);
                        self.chan.send(&Message::GradAct(ga))?;
                        observer(train_batches, &head);
                        train_batches += 1;
                        Phase::TrainIdle {
                            epoch,
                            batch: batch + 1,
                        }
                    }
                    Mode::Encrypted => Phase::AwaitGradW {
                        epoch,
                        batch,
                        grad_out: g,
                    },
                },
                (
                    Phase::AwaitGradW {
                        epoch,
                        batch,
                        grad_out,
                    },
                    Message::GradW(gw),
                ) => {
                    let gb = head.bias_grad(&grad_out);
                    let ga = head.input_grad(&grad_out)?;
                    head.apply_grads(&gw, &gb, cfg.eta);
                    self.chan.send(&Message::GradAct(ga))?;
                    observer(train_batches, &head);
                    train_batches += 1;
                    Phase::TrainIdle {
                        epoch,
                        batch: batch + 1,
                    }
                }
                (Phase::TrainIdle { epoch, batch }, Message::EpochEnd { epoch: e }) => {
                    if batch != batches_per_epoch || e as usize != epoch {
                        return Err(ProtocolError::State(format!(
                            "epoch end after {batch}/{batches_per_epoch} batches (epoch {e})"
                        )));
                    }
                    epochs_seen += 1;
                    if epoch + 1 == cfg.epochs {
                        Phase::Eval
                    } else {
                        Phase::TrainIdle {
                            epoch: epoch + 1,
                            batch: 0,
                        }
                    }
                }
                (Phase::Eval, Message::ActPlain(a)) => {
                    let out = head.infer(&a)?;
                    self.chan.send(&Message::OutPlain(out))?;
                    eval_batches += 1;
                    Phase::Eval
                }
                (Phase::Eval, Message::ActEnc(cv)) => {
                    let ctx = ctx.as_ref().ok_or_else(|| {
                        ProtocolError::State("encrypted activation without a context".into())
                    })?;
                    let out = encrypted_linear(ctx, &cv, &head.weight, &head.bias)?;
                    self.chan.send(&Message::OutEnc(out))?;
                    eval_batches += 1;
                    Phase::Eval
                }
                (Phase::Eval, Message::Bye) => {
                    return Ok((
                        ServerSummary {
                            transcript: self.chan.transcript,
                            epochs_seen,
                            train_batches,
                            eval_batches,
                        },
                        head,
                    ));
                }
                (st, other) => {
                    return Err(ProtocolError::State(format!(
                        "message {} not valid in state {}",
                        other.tag().name(),
                        st.describe(),
                    )))
                }
            };
        }
    }
}

impl Phase {
    fn describe(&self) -> &'static str {
        match self {
            Phase::TrainIdle { .. } => "awaiting batch activation",
            Phase::AwaitGrad { .. } => "awaiting output gradient",
            Phase::AwaitGradW { .. } => "awaiting weight gradient",
            Phase::Eval => "evaluation",
        }
    }
}
