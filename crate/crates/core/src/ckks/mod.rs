//! A leveled approximate homomorphic encryption scheme over power-of-two
//! cyclotomic rings, covering exactly what the encrypted linear layer needs:
//! encrypt, add, ciphertext–plaintext multiply, rescale, decrypt.
//!
//! Representation choices: RNS residues with NTT-based ring multiplication;
//! chain primes are the smallest primes of the requested bit sizes that are
//! ≡ 1 mod 2𝒫; the last chain prime is reserved headroom in the tradition of
//! the libraries this models, so a fresh ciphertext starts on the first
//! `len−1` primes and a 3-prime chain carries a depth-1 budget.

mod cipher;
mod encoding;
pub mod modmath;
mod ntt;
mod serialize;

pub use cipher::{
    ct_add, ct_add_pt, ct_mul_pt, ct_mul_scalar, encrypted_linear, rescale, CipherVector,
    Ciphertext, RnsPoly,
};
pub use serialize::{
    deserialize_cipher_vector, deserialize_public_context, serialize_cipher_vector,
    serialize_public_context, CONTEXT_MAGIC,
};

use encoding::Encoder;
use modmath::{center, chain_primes, mod_add, mod_inv, mod_mul, mod_sub, reduce_i64};
use ntt::NttTable;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use std::sync::Arc;
use thiserror::Error;

use crate::tensor::Tensor;

/// Default RLWE noise width.
pub const DEFAULT_NOISE_STD: f64 = 3.2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HeError {
    #[error("polynomial modulus degree {0} must be one of 2048, 4096, 8192")]
    InvalidPolyDegree(usize),
    #[error("coefficient modulus chain has {0} primes; at least 3 required")]
    ChainTooShort(usize),
    #[error("no usable {bits}-bit prime ≡ 1 mod 2·{degree}")]
    NoPrimeAvailable { bits: u32, degree: usize },
    #[error("scale must be between 2^8 and 2^60, got 2^{0}")]
    InvalidScale(u32),
    #[error("operands at different levels: {left} vs {right}")]
    LevelMismatch { left: usize, right: usize },
    #[error("operands at incompatible scales: {left} vs {right}")]
    ScaleMismatch { left: f64, right: f64 },
    #[error("level budget exhausted: cannot rescale at level 0")]
    LevelExhausted,
    #[error("ciphertext at level {level} but a fresh level {expected} is required")]
    NotFresh { level: usize, expected: usize },
    #[error("vector of {len} values exceeds slot capacity {capacity}")]
    SlotOverflow { len: usize, capacity: usize },
    #[error("plaintext value {value} overflows the encoding range at this scale")]
    EncodingOverflow { value: f64 },
    #[error("expected {expected} feature ciphertexts, got {got}")]
    FeatureMismatch { expected: usize, got: usize },
    #[error("empty cipher vector")]
    EmptyCipherVector,
    #[error("decryption requires the secret key; this context is public-only")]
    MissingSecretKey,
    #[error("malformed serialized data: {0}")]
    Serialize(String),
}

/// Scheme parameters: polynomial modulus degree 𝒫, coefficient modulus chain
/// bit sizes 𝒞, and the encoding scale Δ = 2^scale_bits.
#[derive(Clone, Debug, PartialEq)]
pub struct HeParams {
    pub poly_degree: usize,
    pub chain_bits: Vec<u32>,
    pub scale_bits: u32,
    /// Client-local noise width; not part of the serialized parameter set.
    pub noise_std: f64,
}

impl HeParams {
    pub fn new(poly_degree: usize, chain_bits: Vec<u32>, scale_bits: u32) -> Result<Self, HeError> {
        let p = HeParams {
            poly_degree,
            chain_bits,
            scale_bits,
            noise_std: DEFAULT_NOISE_STD,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), HeError> {
        if !matches!(self.poly_degree, 2048 | 4096 | 8192) {
            return Err(HeError::InvalidPolyDegree(self.poly_degree));
        }
        if self.chain_bits.len() < 3 {
            return Err(HeError::ChainTooShort(self.chain_bits.len()));
        }
        if !(8..=60).contains(&self.scale_bits) {
            return Err(HeError::InvalidScale(self.scale_bits));
        }
        for &b in &self.chain_bits {
            if !(16..=60).contains(&b) {
                return Err(HeError::NoPrimeAvailable {
                    bits: b,
                    degree: self.poly_degree,
                });
            }
        }
        Ok(())
    }

    pub fn scale(&self) -> f64 {
        (2f64).powi(self.scale_bits as i32)
    }

    pub fn slot_capacity(&self) -> usize {
        self.poly_degree / 2
    }

    /// Number of primes fresh ciphertexts live on (the last chain prime is
    /// reserved headroom).
    pub fn data_primes(&self) -> usize {
        self.chain_bits.len() - 1
    }

    pub fn max_level(&self) -> usize {
        self.data_primes() - 1
    }

    /// Rough check against the customary 128-bit security tables. Parameter
    /// sets failing this are still accepted; callers may warn.
    pub fn is_below_standard_security(&self) -> bool {
        let total: u32 = self.chain_bits.iter().sum();
        let bound = match self.poly_degree {
            2048 => 54,
            4096 => 109,
            8192 => 218,
            _ => 0,
        };
        self.poly_degree < 4096 || total > bound
    }
}

pub(crate) struct CtxShared {
    params: HeParams,
    /// Full chain, including the reserved last prime.
    primes: Vec<u64>,
    ntt: Vec<NttTable>,
    encoder: Encoder,
    /// Public key (b, a) = (−a·s + e, a), coefficient domain, per data prime.
    pk_b: Vec<Vec<u64>>,
    pk_a: Vec<Vec<u64>>,
    /// NTT images of the public key for fast encryption.
    pk_b_ntt: Vec<Vec<u64>>,
    pk_a_ntt: Vec<Vec<u64>>,
    pk_b_ntt_shoup: Vec<Vec<u64>>,
    pk_a_ntt_shoup: Vec<Vec<u64>>,
    /// Δ mod q per data prime.
    delta_mod: Vec<u64>,
}

/// Parameters plus public key: everything the server needs and nothing it
/// must not have.
#[derive(Clone)]
pub struct PublicContext {
    pub(crate) inner: Arc<CtxShared>,
}

/// The client's context: the public half plus the secret key.
pub struct PrivateContext {
    public: PublicContext,
    sk: SecretKey,
}

/// The ternary secret polynomial and its transform images. Only ever held
/// inside a [`PrivateContext`].
pub struct SecretKey {
    ternary: Vec<i8>,
    /// NTT image per data prime, with Shoup companions.
    ntt: Vec<Vec<u64>>,
    ntt_shoup: Vec<Vec<u64>>,
}

impl PartialEq for PublicContext {
    fn eq(&self, other: &Self) -> bool {
        serialize::serialize_public_context(self) == serialize::serialize_public_context(other)
    }
}

impl std::fmt::Debug for PublicContext {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PublicContext")
            .field("params", self.params())
            .finish()
    }
}

impl PublicContext {
    pub fn params(&self) -> &HeParams {
        &self.inner.params
    }

    pub fn degree(&self) -> usize {
        self.inner.params.poly_degree
    }

    pub fn slot_capacity(&self) -> usize {
        self.inner.params.slot_capacity()
    }

    pub fn max_level(&self) -> usize {
        self.inner.params.max_level()
    }

    pub(crate) fn active_primes(&self, level: usize) -> &[u64] {
        &self.inner.primes[..level + 1]
    }

    pub(crate) fn ntt_table(&self, prime_index: usize) -> &NttTable {
        &self.inner.ntt[prime_index]
    }

    pub(crate) fn encoder(&self) -> &Encoder {
        &self.inner.encoder
    }

    pub(crate) fn delta_mod(&self, prime_index: usize) -> u64 {
        self.inner.delta_mod[prime_index]
    }

    /// Canonical-embedding encoding of a real vector into rounded integer
    /// polynomial coefficients at the given scale.
    pub fn encode(&self, values: &[f64], scale: f64) -> Result<Vec<i64>, HeError> {
        if values.len() > self.slot_capacity() {
            return Err(HeError::SlotOverflow {
                len: values.len(),
                capacity: self.slot_capacity(),
            });
        }
        let bound = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if !(bound * scale).is_finite() || bound * scale >= (1i64 << 62) as f64 {
            return Err(HeError::EncodingOverflow { value: bound });
        }
        Ok(self.inner.encoder.encode(values, scale))
    }

    /// Inverse of [`PublicContext::encode`].
    pub fn decode(&self, coeffs: &[i64], scale: f64) -> Vec<f64> {
        let f: Vec<f64> = coeffs.iter().map(|&c| c as f64).collect();
        self.inner.encoder.decode(&f, scale)
    }

    /// Encrypt a real vector into the batch slots of one fresh ciphertext.
    pub fn encrypt(&self, values: &[f64], rng: &mut ChaCha20Rng) -> Result<Ciphertext, HeError> {
        let s = &self.inner;
        let n = s.params.poly_degree;
        if values.len() > s.params.slot_capacity() {
            return Err(HeError::SlotOverflow {
                len: values.len(),
                capacity: s.params.slot_capacity(),
            });
        }
        let coeffs = s.encoder.encode(values, s.params.scale());
        let data = s.params.data_primes();
        let v = sample_ternary(rng, n);
        let e0 = sample_gaussian(rng, n, s.params.noise_std);
        let e1 = sample_gaussian(rng, n, s.params.noise_std);
        let mut c0 = RnsPoly::zeros(data, n);
        let mut c1 = RnsPoly::zeros(data, n);
        for p in 0..data {
            let q = s.primes[p];
            let table = &s.ntt[p];
            let mut v_hat: Vec<u64> = v.iter().map(|&x| reduce_i64(x as i64, q)).collect();
            table.forward(&mut v_hat);
            let mut vb = table.mul_ntt_domain(&v_hat, &s.pk_b_ntt[p], &s.pk_b_ntt_shoup[p]);
            let va = table.mul_ntt_domain(&v_hat, &s.pk_a_ntt[p], &s.pk_a_ntt_shoup[p]);
            for i in 0..n {
                let m_plus_e0 = mod_add(reduce_i64(coeffs[i], q), reduce_i64(e0[i], q), q);
                vb[i] = mod_add(vb[i], m_plus_e0, q);
            }
            c0.res[p] = vb;
            c1.res[p] = va
                .iter()
                .enumerate()
                .map(|(i, &x)| mod_add(x, reduce_i64(e1[i], q), q))
                .collect();
        }
        Ok(Ciphertext {
            c0,
            c1,
            level: s.params.max_level(),
            scale: s.params.scale(),
        })
    }

    /// Encrypt a `[n, features]` activation map feature-major: one ciphertext
    /// per feature column, batch entries in the slots. The batch column is
    /// replicated across the whole slot vector, the way the reference
    /// library's encoder fills ciphertexts; slot `k` carries batch entry
    /// `k mod n` and only the first `n` slots are read back.
    pub fn encrypt_features(
        &self,
        activations: &Tensor,
        rng: &mut ChaCha20Rng,
    ) -> Result<CipherVector, HeError> {
        let (rows, features) = (activations.dim(0), activations.dim(1));
        if rows > self.slot_capacity() {
            return Err(HeError::SlotOverflow {
                len: rows,
                capacity: self.slot_capacity(),
            });
        }
        let seeds: Vec<u64> = (0..features).map(|_| rng.gen()).collect();
        let data = activations.data();
        let capacity = self.slot_capacity();
        let cts: Result<Vec<Ciphertext>, HeError> = seeds
            .into_par_iter()
            .enumerate()
            .map(|(f, seed)| {
                let mut local = ChaCha20Rng::seed_from_u64(seed);
                let column: Vec<f64> = (0..capacity)
                    .map(|r| data[(r % rows) * features + f] as f64)
                    .collect();
                self.encrypt(&column, &mut local)
            })
            .collect();
        CipherVector::new(cts?, rows)
    }
}

impl PrivateContext {
    pub fn public(&self) -> &PublicContext {
        &self.public
    }

    pub fn params(&self) -> &HeParams {
        self.public.params()
    }

    /// Serialized secret polynomial, for key-hygiene scans.
    pub fn secret_key_bytes(&self) -> Vec<u8> {
        self.sk.ternary.iter().map(|&x| x as u8).collect()
    }
}

/// Key access used by [`decrypt`]: public contexts structurally lack the key.
pub trait ContextView {
    fn view(&self) -> &PublicContext;
    fn secret(&self) -> Option<&SecretKey>;
}

impl ContextView for PublicContext {
    fn view(&self) -> &PublicContext {
        self
    }
    fn secret(&self) -> Option<&SecretKey> {
        None
    }
}

impl ContextView for PrivateContext {
    fn view(&self) -> &PublicContext {
        &self.public
    }
    fn secret(&self) -> Option<&SecretKey> {
        Some(&self.sk)
    }
}

fn sample_ternary(rng: &mut ChaCha20Rng, n: usize) -> Vec<i8> {
    (0..n).map(|_| rng.gen_range(0i8..3) - 1).collect()
}

fn sample_gaussian(rng: &mut ChaCha20Rng, n: usize, std: f64) -> Vec<i64> {
    if std == 0.0 {
        return vec![0; n];
    }
    (0..n)
        .map(|_| {
            let u1: f64 = rng.gen::<f64>().max(1e-300);
            let u2: f64 = rng.gen();
            let z = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
            (z * std).round() as i64
        })
        .collect()
}

/// Ring machinery shared by keygen and context deserialization.
pub(crate) fn scheme_tables(
    params: &HeParams,
) -> Result<(Vec<u64>, Vec<NttTable>, Encoder, Vec<u64>), HeError> {
    params.validate()?;
    let n = params.poly_degree;
    let primes = chain_primes(&params.chain_bits, n).ok_or_else(|| {
        let bits = *params.chain_bits.iter().max().unwrap();
        HeError::NoPrimeAvailable { bits, degree: n }
    })?;
    let ntt: Vec<NttTable> = primes.iter().map(|&q| NttTable::new(q, n)).collect();
    let encoder = Encoder::new(n);
    let delta_mod = primes
        .iter()
        .map(|&q| {
            let mut d = 1u64 % q;
            for _ in 0..params.scale_bits {
                d = mod_add(d, d, q);
            }
            d
        })
        .collect();
    Ok((primes, ntt, encoder, delta_mod))
}

/// Rebuild a public context from transmitted key polynomials.
pub(crate) fn context_from_key(
    params: HeParams,
    pk_b: Vec<Vec<u64>>,
    pk_a: Vec<Vec<u64>>,
) -> Result<PublicContext, HeError> {
    let (primes, ntt, encoder, delta_mod) = scheme_tables(&params)?;
    let mut pk_b_ntt = Vec::with_capacity(pk_b.len());
    let mut pk_a_ntt = Vec::with_capacity(pk_a.len());
    let mut pk_b_ntt_shoup = Vec::with_capacity(pk_b.len());
    let mut pk_a_ntt_shoup = Vec::with_capacity(pk_a.len());
    for p in 0..params.data_primes() {
        let mut b_hat = pk_b[p].clone();
        ntt[p].forward(&mut b_hat);
        let mut a_hat = pk_a[p].clone();
        ntt[p].forward(&mut a_hat);
        pk_b_ntt_shoup.push(ntt[p].shoup(&b_hat));
        pk_a_ntt_shoup.push(ntt[p].shoup(&a_hat));
        pk_b_ntt.push(b_hat);
        pk_a_ntt.push(a_hat);
    }
    Ok(PublicContext {
        inner: Arc::new(CtxShared {
            params,
            primes,
            ntt,
            encoder,
            pk_b,
            pk_a,
            pk_b_ntt,
            pk_a_ntt,
            pk_b_ntt_shoup,
            pk_a_ntt_shoup,
            delta_mod,
        }),
    })
}

/// Deterministic key generation: the private context and its public half.
pub fn keygen(params: HeParams, seed: u64) -> Result<(PublicContext, PrivateContext), HeError> {
    let (primes, ntt, encoder, delta_mod) = scheme_tables(&params)?;
    let n = params.poly_degree;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let ternary = sample_ternary(&mut rng, n);
    let data = params.data_primes();
    let e = sample_gaussian(&mut rng, n, params.noise_std);
    let mut pk_b = Vec::with_capacity(data);
    let mut pk_a = Vec::with_capacity(data);
    let mut pk_b_ntt = Vec::with_capacity(data);
    let mut pk_a_ntt = Vec::with_capacity(data);
    let mut pk_b_ntt_shoup = Vec::with_capacity(data);
    let mut pk_a_ntt_shoup = Vec::with_capacity(data);
    let mut sk_ntt = Vec::with_capacity(data);
    let mut sk_ntt_shoup = Vec::with_capacity(data);
    // a is uniform mod Q: independent uniform residues per prime
    let a_res: Vec<Vec<u64>> = (0..data)
        .map(|p| {
            let q = primes[p];
            (0..n).map(|_| rng.gen_range(0..q)).collect()
        })
        .collect();
    for p in 0..data {
        let q = primes[p];
        let table = &ntt[p];
        let s_res: Vec<u64> = ternary.iter().map(|&x| reduce_i64(x as i64, q)).collect();
        let mut s_hat = s_res;
        table.forward(&mut s_hat);
        let s_hat_shoup = table.shoup(&s_hat);
        let a_s = table.mul_by_ntt(&a_res[p], &s_hat, &s_hat_shoup);
        // b = -a·s + e
        let b: Vec<u64> = (0..n)
            .map(|i| mod_add(mod_sub(0, a_s[i], q), reduce_i64(e[i], q), q))
            .collect();
        let mut b_hat = b.clone();
        table.forward(&mut b_hat);
        let mut a_hat = a_res[p].clone();
        table.forward(&mut a_hat);
        pk_b.push(b);
        pk_a.push(a_res[p].clone());
        pk_b_ntt_shoup.push(table.shoup(&b_hat));
        pk_a_ntt_shoup.push(table.shoup(&a_hat));
        pk_b_ntt.push(b_hat);
        pk_a_ntt.push(a_hat);
        sk_ntt.push(s_hat);
        sk_ntt_shoup.push(s_hat_shoup);
    }
    let shared = Arc::new(CtxShared {
        params,
        primes,
        ntt,
        encoder,
        pk_b,
        pk_a,
        pk_b_ntt,
        pk_a_ntt,
        pk_b_ntt_shoup,
        pk_a_ntt_shoup,
        delta_mod,
    });
    let public = PublicContext { inner: shared };
    let private = PrivateContext {
        public: public.clone(),
        sk: SecretKey {
            ternary,
            ntt: sk_ntt,
            ntt_shoup: sk_ntt_shoup,
        },
    };
    Ok((public, private))
}

/// Decrypt one ciphertext to its slot values. Requires a private context;
/// public contexts yield a missing-key error.
pub fn decrypt<C: ContextView>(ctx: &C, ct: &Ciphertext) -> Result<Vec<f64>, HeError> {
    let sk = ctx.secret().ok_or(HeError::MissingSecretKey)?;
    let shared = &ctx.view().inner;
    let n = shared.params.poly_degree;
    let active = ct.level + 1;
    let primes = &shared.primes[..active];
    // m = c0 + c1·s per active prime
    let residues: Vec<Vec<u64>> = (0..active)
        .map(|p| {
            let q = primes[p];
            let table = &shared.ntt[p];
            let c1s = table.mul_by_ntt(&ct.c1.res[p], &sk.ntt[p], &sk.ntt_shoup[p]);
            (0..n)
                .map(|i| mod_add(ct.c0.res[p][i], c1s[i], q))
                .collect()
        })
        .collect();
    let coeffs = crt_to_centered_f64(&residues, primes);
    Ok(shared.encoder.decode(&coeffs, ct.scale))
}

/// Decrypt a feature-major cipher vector back into a `[slots, features]`
/// activation tensor.
pub fn decrypt_vector<C: ContextView + Sync>(
    ctx: &C,
    cv: &CipherVector,
) -> Result<Tensor, HeError> {
    if cv.cts.is_empty() {
        return Err(HeError::EmptyCipherVector);
    }
    let features = cv.features();
    let rows = cv.slots;
    // check key presence once up front
    ctx.secret().ok_or(HeError::MissingSecretKey)?;
    let columns: Result<Vec<Vec<f64>>, HeError> =
        cv.cts.par_iter().map(|ct| decrypt(ctx, ct)).collect();
    let columns = columns?;
    let mut data = vec![0.0f32; rows * features];
    for (f, col) in columns.iter().enumerate() {
        for r in 0..rows {
            data[r * features + f] = col[r] as f32;
        }
    }
    Ok(Tensor::from_vec(&[rows, features], data).unwrap())
}

/// Exact CRT reconstruction of centered coefficients via mixed-radix digits.
///
/// Digits are centered one at a time, so a value of small magnitude has all
/// high digits zero and assembles in f64 without cancellation; only values
/// flirting with ±Q/2 lose precision, and those are noise garbage anyway.
fn crt_to_centered_f64(residues: &[Vec<u64>], primes: &[u64]) -> Vec<f64> {
    let k = primes.len();
    let n = residues[0].len();
    // pp[i][j] = (Π_{l<i} q_l) mod q_j, and its inverse at i == j
    let mut pp = vec![vec![1u64; k]; k];
    for i in 1..k {
        for j in 0..k {
            pp[i][j] = mod_mul(pp[i - 1][j], primes[i - 1] % primes[j], primes[j]);
        }
    }
    let inv: Vec<u64> = (0..k).map(|j| mod_inv(pp[j][j], primes[j])).collect();
    let mut out = vec![0.0f64; n];
    let mut digits = vec![0i64; k];
    for (pos, o) in out.iter_mut().enumerate() {
        for j in 0..k {
            let q = primes[j];
            let mut acc = 0u64;
            for i in 0..j {
                acc = mod_add(acc, mod_mul(reduce_i64(digits[i], q), pp[i][j], q), q);
            }
            let r = mod_sub(residues[j][pos], acc, q);
            digits[j] = center(mod_mul(r, inv[j], q), q);
        }
        let mut val = digits[k - 1] as f64;
        for j in (0..k - 1).rev() {
            val = digits[j] as f64 + primes[j] as f64 * val;
        }
        *o = val;
    }
    out
}
