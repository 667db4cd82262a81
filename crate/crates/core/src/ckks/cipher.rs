//! Ciphertext types and the homomorphic operations the encrypted linear
//! layer needs: addition, ciphertext–plaintext multiplication, rescaling.

use rayon::prelude::*;

use super::modmath::{
    center, mod_add, mod_inv, mod_mul, mod_sub, reduce_i64, shoup_mul, shoup_precompute,
};
use super::{HeError, PublicContext};
use crate::tensor::Tensor;

/// Polynomial in RNS form: one residue vector per active prime.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RnsPoly {
    pub(crate) res: Vec<Vec<u64>>,
}

impl RnsPoly {
    pub(crate) fn zeros(primes: usize, n: usize) -> Self {
        RnsPoly {
            res: vec![vec![0u64; n]; primes],
        }
    }

    pub(crate) fn from_i64(coeffs: &[i64], primes: &[u64]) -> Self {
        RnsPoly {
            res: primes
                .iter()
                .map(|&q| coeffs.iter().map(|&c| reduce_i64(c, q)).collect())
                .collect(),
        }
    }
}

/// One RLWE ciphertext: a pair of ring elements in RNS coefficient form,
/// with level and scale bookkeeping.
#[derive(Clone, Debug, PartialEq)]
pub struct Ciphertext {
    pub(crate) c0: RnsPoly,
    pub(crate) c1: RnsPoly,
    /// Remaining rescales; `level + 1` primes are active.
    pub level: usize,
    /// Current encoding scale.
    pub scale: f64,
}

impl Ciphertext {
    pub fn active_primes(&self) -> usize {
        self.level + 1
    }
}

fn check_compatible(a: &Ciphertext, b: &Ciphertext) -> Result<(), HeError> {
    if a.level != b.level {
        return Err(HeError::LevelMismatch {
            left: a.level,
            right: b.level,
        });
    }
    let rel = (a.scale - b.scale).abs() / a.scale.max(b.scale).max(f64::MIN_POSITIVE);
    if rel > 1e-9 {
        return Err(HeError::ScaleMismatch {
            left: a.scale,
            right: b.scale,
        });
    }
    Ok(())
}

/// Slot-wise ciphertext addition.
pub fn ct_add(ctx: &PublicContext, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext, HeError> {
    check_compatible(a, b)?;
    let primes = ctx.active_primes(a.level);
    let mut out = a.clone();
    for (p, &q) in primes.iter().enumerate() {
        for i in 0..ctx.degree() {
            out.c0.res[p][i] = mod_add(out.c0.res[p][i], b.c0.res[p][i], q);
            out.c1.res[p][i] = mod_add(out.c1.res[p][i], b.c1.res[p][i], q);
        }
    }
    Ok(out)
}

/// Encode a slot vector at an arbitrary (possibly very large) scale directly
/// into RNS form. Scales beyond safe i64 range are reached by encoding at a
/// halved scale and doubling residues, which is exact for the power-of-two
/// scale factors this scheme produces.
fn encode_to_rns(
    ctx: &PublicContext,
    values: &[f64],
    scale: f64,
    primes: &[u64],
) -> Result<RnsPoly, HeError> {
    if values.len() > ctx.slot_capacity() {
        return Err(HeError::SlotOverflow {
            len: values.len(),
            capacity: ctx.slot_capacity(),
        });
    }
    let mut enc_scale = scale;
    let mut shift = 0u32;
    while enc_scale > (1u64 << 50) as f64 {
        enc_scale /= 2.0;
        shift += 1;
    }
    let bound = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(bound * enc_scale).is_finite() || bound * enc_scale >= (1i64 << 62) as f64 {
        return Err(HeError::EncodingOverflow { value: bound });
    }
    let coeffs = ctx.encoder().encode(values, enc_scale);
    let mut pt = RnsPoly::from_i64(&coeffs, primes);
    if shift > 0 {
        for (p, &q) in primes.iter().enumerate() {
            let factor = super::modmath::mod_pow(2, shift as u64, q);
            for c in pt.res[p].iter_mut() {
                *c = mod_mul(*c, factor, q);
            }
        }
    }
    Ok(pt)
}

/// Add an encoded plaintext vector at the ciphertext's current scale.
pub fn ct_add_pt(
    ctx: &PublicContext,
    ct: &Ciphertext,
    values: &[f64],
) -> Result<Ciphertext, HeError> {
    let primes = ctx.active_primes(ct.level);
    let pt = encode_to_rns(ctx, values, ct.scale, primes)?;
    let mut out = ct.clone();
    for (p, &q) in primes.iter().enumerate() {
        for i in 0..ctx.degree() {
            out.c0.res[p][i] = mod_add(out.c0.res[p][i], pt.res[p][i], q);
        }
    }
    Ok(out)
}

/// Multiply every slot by a plaintext scalar encoded at scale Δ. The result
/// scale rises to `ct.scale · Δ` pending a rescale.
pub fn ct_mul_scalar(
    ctx: &PublicContext,
    ct: &Ciphertext,
    value: f64,
) -> Result<Ciphertext, HeError> {
    let delta = ctx.params().scale();
    let scaled = value * delta;
    if !scaled.is_finite() || scaled.abs() >= (1i64 << 62) as f64 {
        return Err(HeError::EncodingOverflow { value });
    }
    let factor = scaled.round() as i64;
    let primes = ctx.active_primes(ct.level);
    let mut out = ct.clone();
    for (p, &q) in primes.iter().enumerate() {
        let f = reduce_i64(factor, q);
        let fs = shoup_precompute(f, q);
        for i in 0..ctx.degree() {
            out.c0.res[p][i] = shoup_mul(out.c0.res[p][i], f, fs, q);
            out.c1.res[p][i] = shoup_mul(out.c1.res[p][i], f, fs, q);
        }
    }
    out.scale = ct.scale * delta;
    Ok(out)
}

/// Multiply by a general encoded plaintext vector (slot-wise), raising the
/// scale to `ct.scale · Δ`.
pub fn ct_mul_pt(
    ctx: &PublicContext,
    ct: &Ciphertext,
    values: &[f64],
) -> Result<Ciphertext, HeError> {
    let delta = ctx.params().scale();
    let primes = ctx.active_primes(ct.level);
    let pt = encode_to_rns(ctx, values, delta, primes)?;
    let mut out = ct.clone();
    for (p, &_q) in primes.iter().enumerate() {
        let table = ctx.ntt_table(p);
        let mut pt_ntt = pt.res[p].clone();
        table.forward(&mut pt_ntt);
        let pt_shoup = table.shoup(&pt_ntt);
        out.c0.res[p] = table.mul_by_ntt(&ct.c0.res[p], &pt_ntt, &pt_shoup);
        out.c1.res[p] = table.mul_by_ntt(&ct.c1.res[p], &pt_ntt, &pt_shoup);
    }
    out.scale = ct.scale * delta;
    Ok(out)
}

/// Drop the last active prime, dividing the scale by it. Errors once the
/// level budget is exhausted.
pub fn rescale(ctx: &PublicContext, ct: &Ciphertext) -> Result<Ciphertext, HeError> {
    if ct.level == 0 {
        return Err(HeError::LevelExhausted);
    }
    let primes = ctx.active_primes(ct.level);
    let k = primes.len() - 1;
    let q_last = primes[k];
    let n = ctx.degree();
    let mut out = Ciphertext {
        c0: RnsPoly::zeros(k, n),
        c1: RnsPoly::zeros(k, n),
        level: ct.level - 1,
        scale: ct.scale / q_last as f64,
    };
    for (dst, src) in [(&mut out.c0, &ct.c0), (&mut out.c1, &ct.c1)] {
        for (p, &q) in primes[..k].iter().enumerate() {
            let inv_qlast = mod_inv(q_last % q, q);
            for i in 0..n {
                // centered remainder of the dropped residue
                let r = center(src.res[k][i], q_last);
                let r_mod = reduce_i64(r, q);
                let diff = mod_sub(src.res[p][i], r_mod, q);
                dst.res[p][i] = mod_mul(diff, inv_qlast, q);
            }
        }
    }
    Ok(out)
}

/// A batch-axis-packed encrypted activation map: one ciphertext per feature,
/// batch elements in the slots.
#[derive(Clone, Debug, PartialEq)]
pub struct CipherVector {
    pub(crate) cts: Vec<Ciphertext>,
    /// Occupied slots (the batch size).
    pub slots: usize,
}

impl CipherVector {
    /// Bundle per-feature ciphertexts; they must agree on level and scale.
    pub fn new(cts: Vec<Ciphertext>, slots: usize) -> Result<Self, HeError> {
        if let Some(first) = cts.first() {
            for ct in &cts {
                if ct.level != first.level {
                    return Err(HeError::LevelMismatch {
                        left: first.level,
                        right: ct.level,
                    });
                }
                if ct.scale != first.scale {
                    return Err(HeError::ScaleMismatch {
                        left: first.scale,
                        right: ct.scale,
                    });
                }
            }
        }
        Ok(CipherVector { cts, slots })
    }

    pub fn features(&self) -> usize {
        self.cts.len()
    }

    pub fn level(&self) -> Option<usize> {
        self.cts.first().map(|c| c.level)
    }

    pub fn scale(&self) -> Option<f64> {
        self.cts.first().map(|c| c.scale)
    }

    pub fn cts(&self) -> &[Ciphertext] {
        &self.cts
    }
}

/// The server's linear layer evaluated on the encrypted activation map:
/// output feature `j` decrypts to `Σ_i w[j][i]·a[·,i] + b[j]` per batch slot.
/// Consumes exactly one multiplicative level.
pub fn encrypted_linear(
    ctx: &PublicContext,
    input: &CipherVector,
    weight: &Tensor,
    bias: &Tensor,
) -> Result<CipherVector, HeError> {
    let (out_features, in_features) = (weight.dim(0), weight.dim(1));
    if input.features() != in_features {
        return Err(HeError::FeatureMismatch {
            expected: in_features,
            got: input.features(),
        });
    }
    let level = input.level().ok_or(HeError::EmptyCipherVector)?;
    if level != ctx.max_level() {
        return Err(HeError::NotFresh {
            level,
            expected: ctx.max_level(),
        });
    }
    let delta = ctx.params().scale();
    let n = ctx.degree();
    let primes = ctx.active_primes(level);
    let k = primes.len();
    let in_scale = input.scale().unwrap_or(delta);
    let wd = weight.data();
    let bd = bias.data();

    let outs: Result<Vec<Ciphertext>, HeError> = (0..out_features)
        .into_par_iter()
        .map(|j| {
            let mut c0 = RnsPoly::zeros(k, n);
            let mut c1 = RnsPoly::zeros(k, n);
            for i in 0..in_features {
                let scaled = wd[j * in_features + i] as f64 * delta;
                if !scaled.is_finite() || scaled.abs() >= (1i64 << 62) as f64 {
                    return Err(HeError::EncodingOverflow {
                        value: wd[j * in_features + i] as f64,
                    });
                }
                let factor = scaled.round() as i64;
                if factor == 0 {
                    continue;
                }
                let src = &input.cts[i];
                for (p, &q) in primes.iter().enumerate() {
                    let f = reduce_i64(factor, q);
                    let fs = shoup_precompute(f, q);
                    let (dst0, src0) = (&mut c0.res[p], &src.c0.res[p]);
                    let (dst1, src1) = (&mut c1.res[p], &src.c1.res[p]);
                    for pos in 0..n {
                        dst0[pos] = mod_add(dst0[pos], shoup_mul(src0[pos], f, fs, q), q);
                        dst1[pos] = mod_add(dst1[pos], shoup_mul(src1[pos], f, fs, q), q);
                    }
                }
            }
            // bias enters as round(b·s)·Δ so it sits at the product scale s·Δ
            let b_scaled = bd[j] as f64 * in_scale;
            if !b_scaled.is_finite() || b_scaled.abs() >= (1i64 << 62) as f64 {
                return Err(HeError::EncodingOverflow {
                    value: bd[j] as f64,
                });
            }
            let b_factor = b_scaled.round() as i64;
            for (p, &q) in primes.iter().enumerate() {
                let add = mod_mul(reduce_i64(b_factor, q), ctx.delta_mod(p), q);
                c0.res[p][0] = mod_add(c0.res[p][0], add, q);
            }
            let acc = Ciphertext {
                c0,
                c1,
                level,
                scale: in_scale * delta,
            };
            rescale(ctx, &acc)
        })
        .collect();
    CipherVector::new(outs?, input.slots)
}
