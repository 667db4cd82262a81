//! Byte layouts for ciphertexts and the public context.
//!
//! Cipher vector: header `(𝒫, level, scale, slot count)` as u64 LE (the scale
//! is the IEEE-754 bit pattern of the exact f64, which is plain `2^k` for
//! fresh ciphertexts), then a u32 ciphertext count, then per ciphertext the
//! RNS coefficient arrays of c0 and c1 as u64 LE, one pair per active prime.
//!
//! Public context: magic `CKKS`, version byte, 𝒫, the chain bit sizes, the
//! scale exponent, then the public key polynomials per data prime. No
//! secret-key material is ever written here.

use super::cipher::{CipherVector, Ciphertext, RnsPoly};
use super::{context_from_key, scheme_tables, HeError, HeParams, PublicContext};

pub const CONTEXT_MAGIC: &[u8; 4] = b"CKKS";
const CONTEXT_VERSION: u8 = 1;

struct Reader<'a> {
    bytes: &'a [u8],
    off: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Reader { bytes, off: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], HeError> {
        let s = self
            .bytes
            .get(self.off..self.off + n)
            .ok_or_else(|| HeError::Serialize("unexpected end of data".into()))?;
        self.off += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, HeError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, HeError> {
        let s = self.take(4)?;
        Ok(u32::from_le_bytes([s[0], s[1], s[2], s[3]]))
    }

    fn u64(&mut self) -> Result<u64, HeError> {
        let s = self.take(8)?;
        Ok(u64::from_le_bytes(s.try_into().unwrap()))
    }

    fn done(&self) -> bool {
        self.off == self.bytes.len()
    }
}

fn push_poly(out: &mut Vec<u8>, coeffs: &[u64]) {
    for &c in coeffs {
        out.extend_from_slice(&c.to_le_bytes());
    }
}

fn read_poly(r: &mut Reader, n: usize) -> Result<Vec<u64>, HeError> {
    let raw = r.take(8 * n)?;
    Ok(raw
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

pub fn serialize_cipher_vector(cv: &CipherVector) -> Vec<u8> {
    let level = cv.level().unwrap_or(0);
    let scale = cv.scale().unwrap_or(1.0);
    let n = cv.cts().first().map(|c| c.c0.res[0].len()).unwrap_or(0);
    let mut out = Vec::with_capacity(44 + cv.features() * (level + 1) * 2 * 8 * n);
    out.extend_from_slice(&(n as u64).to_le_bytes());
    out.extend_from_slice(&(level as u64).to_le_bytes());
    out.extend_from_slice(&scale.to_bits().to_le_bytes());
    out.extend_from_slice(&(cv.slots as u64).to_le_bytes());
    out.extend_from_slice(&(cv.features() as u32).to_le_bytes());
    for ct in cv.cts() {
        for p in 0..ct.active_primes() {
            push_poly(&mut out, &ct.c0.res[p]);
            push_poly(&mut out, &ct.c1.res[p]);
        }
    }
    out
}

pub fn deserialize_cipher_vector(bytes: &[u8]) -> Result<CipherVector, HeError> {
    let mut r = Reader::new(bytes);
    let n = r.u64()? as usize;
    let level = r.u64()? as usize;
    let scale = f64::from_bits(r.u64()?);
    let slots = r.u64()? as usize;
    let count = r.u32()? as usize;
    if n == 0 || !n.is_power_of_two() || n > 1 << 16 {
        return Err(HeError::Serialize(format!("bad polynomial degree {n}")));
    }
    if !(scale.is_finite() && scale > 0.0) {
        return Err(HeError::Serialize("bad scale".into()));
    }
    let mut cts = Vec::with_capacity(count);
    for _ in 0..count {
        let mut c0 = Vec::with_capacity(level + 1);
        let mut c1 = Vec::with_capacity(level + 1);
        for _ in 0..level + 1 {
            c0.push(read_poly(&mut r, n)?);
            c1.push(read_poly(&mut r, n)?);
        }
        cts.push(Ciphertext {
            c0: RnsPoly { res: c0 },
            c1: RnsPoly { res: c1 },
            level,
            scale,
        });
    }
    if !r.done() {
        return Err(HeError::Serialize("trailing bytes".into()));
    }
    CipherVector::new(cts, slots)
}

pub fn serialize_public_context(ctx: &PublicContext) -> Vec<u8> {
    let s = &ctx.inner;
    let mut out = Vec::new();
    out.extend_from_slice(CONTEXT_MAGIC);
    out.push(CONTEXT_VERSION);
    out.extend_from_slice(&(s.params.poly_degree as u64).to_le_bytes());
    out.push(s.params.chain_bits.len() as u8);
    for &b in &s.params.chain_bits {
        out.extend_from_slice(&b.to_le_bytes());
    }
    out.extend_from_slice(&s.params.scale_bits.to_le_bytes());
    for p in 0..s.params.data_primes() {
        push_poly(&mut out, &s.pk_b[p]);
        push_poly(&mut out, &s.pk_a[p]);
    }
    out
}

pub fn deserialize_public_context(bytes: &[u8]) -> Result<PublicContext, HeError> {
    let mut r = Reader::new(bytes);
    if r.take(4)? != CONTEXT_MAGIC {
        return Err(HeError::Serialize("missing CKKS magic".into()));
    }
    if r.u8()? != CONTEXT_VERSION {
        return Err(HeError::Serialize("unsupported context version".into()));
    }
    let degree = r.u64()? as usize;
    let chain_len = r.u8()? as usize;
    let mut chain_bits = Vec::with_capacity(chain_len);
    for _ in 0..chain_len {
        chain_bits.push(r.u32()?);
    }
    let scale_bits = r.u32()?;
    let params = HeParams::new(degree, chain_bits, scale_bits)?;
    let (primes, _, _, _) = scheme_tables(&params)?;
    let mut pk_b = Vec::with_capacity(params.data_primes());
    let mut pk_a = Vec::with_capacity(params.data_primes());
    for p in 0..params.data_primes() {
        let q = primes[p];
        let b = read_poly(&mut r, degree)?;
        let a = read_poly(&mut r, degree)?;
        if b.iter().chain(&a).any(|&c| c >= q) {
            return Err(HeError::Serialize(format!(
                "coefficient out of range for prime {q}"
            )));
        }
        pk_b.push(b);
        pk_a.push(a);
    }
    if !r.done() {
        return Err(HeError::Serialize("trailing bytes".into()));
    }
    context_from_key(params, pk_b, pk_a)
}
