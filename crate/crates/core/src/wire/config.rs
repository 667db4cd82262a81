//! The synchronized training configuration.
//!
//! On disk this is JSON; on the wire it is a fixed binary layout so the
//! echo-compare handshake can match bytes exactly. The client-local HE noise
//! width never crosses the wire: the server holds no secret key and samples
//! no encryption noise.

use serde::{Deserialize, Serialize};

use super::WireError;
use crate::ckks::{HeParams, DEFAULT_NOISE_STD};
use crate::nn::ServerOpt;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Plain,
    Encrypted,
}

/// HE parameters as they appear in config files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeConfig {
    pub poly_modulus: usize,
    pub coeff_mod_bits: Vec<u32>,
    pub scale_bits: u32,
    /// Override for the client-side noise width; test configurations may set
    /// this to zero to make encrypted runs match plaintext runs exactly.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_std: Option<f64>,
}

impl HeConfig {
    pub fn to_params(&self) -> Result<HeParams, WireError> {
        let mut p = HeParams::new(
            self.poly_modulus,
            self.coeff_mod_bits.clone(),
            self.scale_bits,
        )?;
        if let Some(std) = self.noise_std {
            if !(std.is_finite() && std >= 0.0) {
                return Err(WireError::Config(format!("noise_std {std} invalid")));
            }
            p.noise_std = std;
        }
        Ok(p)
    }
}

/// Hyperparameters both parties must agree on before training.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub mode: Mode,
    pub eta: f32,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Batches per epoch; when absent the client derives it from its dataset
    /// and the server adopts the client's value during SYNC.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batches_per_epoch: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub he: Option<HeConfig>,
    #[serde(default)]
    pub server_opt: ServerOpt,
    /// Evaluate through the encrypted linear layer instead of the plaintext
    /// round-trip.
    #[serde(default)]
    pub eval_encrypted: bool,
}

impl TrainConfig {
    pub fn from_json(json: &str) -> Result<Self, WireError> {
        let cfg: TrainConfig =
            serde_json::from_str(json).map_err(|e| WireError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), WireError> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(WireError::Config(format!(
                "eta must be positive, got {}",
                self.eta
            )));
        }
        if self.batch_size < 1 {
            return Err(WireError::Config("batch_size must be at least 1".into()));
        }
        if self.epochs < 1 {
            return Err(WireError::Config("epochs must be at least 1".into()));
        }
        if self.mode == Mode::Encrypted {
            match &self.he {
                None => {
                    return Err(WireError::Config(
                        "encrypted mode requires the `he` parameter block".into(),
                    ))
                }
                Some(he) => {
                    he.to_params()?;
                }
            }
        }
        Ok(())
    }

    pub fn he_params(&self) -> Result<Option<HeParams>, WireError> {
        self.he.as_ref().map(|h| h.to_params()).transpose()
    }

    /// Canonical binary encoding used for SYNC and its echo-compare.
    pub fn to_wire_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.push(match self.mode {
            Mode::Plain => 0u8,
            Mode::Encrypted => 1,
        });
        out.extend_from_slice(&self.eta.to_le_bytes());
        out.extend_from_slice(&(self.batch_size as u64).to_le_bytes());
        out.extend_from_slice(&(self.epochs as u64).to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&(self.batches_per_epoch.unwrap_or(0) as u64).to_le_bytes());
        out.push(match self.server_opt {
            ServerOpt::Sgd => 0,
            ServerOpt::Adam => 1,
        });
        out.push(self.eval_encrypted as u8);
        match &self.he {
            None => out.push(0),
            Some(he) => {
                out.push(1);
                out.extend_from_slice(&(he.poly_modulus as u64).to_le_bytes());
                out.push(he.coeff_mod_bits.len() as u8);
                for &b in &he.coeff_mod_bits {
                    out.extend_from_slice(&b.to_le_bytes());
                }
                out.extend_from_slice(&he.scale_bits.to_le_bytes());
            }
        }
        out
    }

    pub fn from_wire_bytes(bytes: &[u8]) -> Result<Self, WireError> {
        let mut r = bytes;
        let mut take = |n: usize| -> Result<&[u8], WireError> {
            if r.len() < n {
                return Err(WireError::Config("truncated config".into()));
            }
            let (head, tail) = r.split_at(n);
            r = tail;
            Ok(head)
        };
        let mode = match take(1)?[0] {
            0 => Mode::Plain,
            1 => Mode::Encrypted,
            other => return Err(WireError::Config(format!("bad mode byte {other}"))),
        };
        let eta = f32::from_le_bytes(take(4)?.try_into().unwrap());
        let batch_size = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
        let epochs = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
        let seed = u64::from_le_bytes(take(8)?.try_into().unwrap());
        let n = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
        let server_opt = match take(1)?[0] {
            0 => ServerOpt::Sgd,
            1 => ServerOpt::Adam,
            other => return Err(WireError::Config(format!("bad optimizer byte {other}"))),
        };
        let eval_encrypted = take(1)?[0] != 0;
        let he = match take(1)?[0] {
            0 => None,
            1 => {
                let poly_modulus = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
                let len = take(1)?[0] as usize;
                let mut coeff_mod_bits = Vec::with_capacity(len);
                for _ in 0..len {
                    coeff_mod_bits.push(u32::from_le_bytes(take(4)?.try_into().unwrap()));
                }
                let scale_bits = u32::from_le_bytes(take(4)?.try_into().unwrap());
                Some(HeConfig {
                    poly_modulus,
                    coeff_mod_bits,
                    scale_bits,
                    noise_std: None,
                })
            }
            other => return Err(WireError::Config(format!("bad he flag {other}"))),
        };
        if !r.is_empty() {
            return Err(WireError::Config("trailing config bytes".into()));
        }
        let cfg = TrainConfig {
            mode,
            eta,
            batch_size,
            epochs,
            seed,
            batches_per_epoch: if n == 0 { None } else { Some(n) },
            he,
            server_opt,
            eval_encrypted,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// The config as compared during the handshake: the wire form with the
    /// client-local noise override stripped.
    pub fn comparable(&self) -> Vec<u8> {
        self.to_wire_bytes()
    }

    /// Noise width for client-side encryption.
    pub fn noise_std(&self) -> f64 {
        self.he
            .as_ref()
            .and_then(|h| h.noise_std)
            .unwrap_or(DEFAULT_NOISE_STD)
    }
}
