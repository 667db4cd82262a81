//! Negacyclic number-theoretic transforms for multiplication in
//! `Z_q[X]/(X^n + 1)`.
//!
//! The negacyclic transform is the cyclic NTT of the input twisted by powers
//! of a primitive 2n-th root ψ; pointwise products in that domain correspond
//! to products modulo `X^n + 1`. Twiddles are laid out contiguously per
//! stage and carry Shoup companions, keeping the butterflies free of 128-bit
//! division and strided loads.

use super::modmath::{mod_inv, mod_mul, root_of_order_2n, shoup_mul, shoup_precompute};

#[derive(Clone, Debug)]
pub struct NttTable {
    pub q: u64,
    pub n: usize,
    psi_pow: Vec<u64>,
    psi_pow_shoup: Vec<u64>,
    /// ψ^{-i}·n^{-1}, pre-scaled for the inverse transform's final twist.
    psi_inv_scaled: Vec<u64>,
    psi_inv_scaled_shoup: Vec<u64>,
    /// Per-stage twiddles for the cyclic pass, contiguous per stage:
    /// stage s (len = 2^{s+1}) holds ω^{k·n/len} for k < len/2.
    fwd_stages: Vec<Vec<u64>>,
    fwd_stages_shoup: Vec<Vec<u64>>,
    inv_stages: Vec<Vec<u64>>,
    inv_stages_shoup: Vec<Vec<u64>>,
}

impl NttTable {
    pub fn new(q: u64, n: usize) -> Self {
        debug_assert!(n.is_power_of_two());
        let psi = root_of_order_2n(q, n);
        let psi_inv = mod_inv(psi, q);
        let n_inv = mod_inv(n as u64, q);
        let mut psi_pow = Vec::with_capacity(n);
        let mut psi_inv_scaled = Vec::with_capacity(n);
        let (mut a, mut b) = (1u64, n_inv);
        for _ in 0..n {
            psi_pow.push(a);
            psi_inv_scaled.push(b);
            a = mod_mul(a, psi, q);
            b = mod_mul(b, psi_inv, q);
        }
        let omega = mod_mul(psi, psi, q);
        let omega_inv = mod_inv(omega, q);
        let stages = |root: u64| -> Vec<Vec<u64>> {
            let mut out = Vec::new();
            let mut len = 2usize;
            while len <= n {
                let w_len = super::modmath::mod_pow(root, (n / len) as u64, q);
                let mut tw = Vec::with_capacity(len / 2);
                let mut w = 1u64;
                for _ in 0..len / 2 {
                    tw.push(w);
                    w = mod_mul(w, w_len, q);
                }
                out.push(tw);
                len <<= 1;
            }
            out
        };
        let fwd_stages = stages(omega);
        let inv_stages = stages(omega_inv);
        let shoup = |v: &[u64]| {
            v.iter()
                .map(|&w| shoup_precompute(w, q))
                .collect::<Vec<_>>()
        };
        NttTable {
            q,
            n,
            psi_pow_shoup: shoup(&psi_pow),
            psi_inv_scaled_shoup: shoup(&psi_inv_scaled),
            fwd_stages_shoup: fwd_stages.iter().map(|s| shoup(s)).collect(),
            inv_stages_shoup: inv_stages.iter().map(|s| shoup(s)).collect(),
            psi_pow,
            psi_inv_scaled,
            fwd_stages,
            inv_stages,
        }
    }

    fn cyclic(&self, a: &mut [u64], stages: &[Vec<u64>], stages_shoup: &[Vec<u64>]) {
        let n = self.n;
        let q = self.q;
        // bit-reverse permutation
        let mut j = 0usize;
        for i in 1..n {
            let mut bit = n >> 1;
            while j & bit != 0 {
                j ^= bit;
                bit >>= 1;
            }
            j |= bit;
            if i < j {
                a.swap(i, j);
            }
        }
        // Harvey-style lazy butterflies: values stay below 4q, with a single
        // conditional on the upper input; one canonicalizing pass at the end.
        let two_q = 2 * q;
        for (tw, tws) in stages.iter().zip(stages_shoup) {
            let half = tw.len();
            let len = half * 2;
            let mut base = 0;
            while base < n {
                // indices stay in range: base + k + half < base + len <= n
                for k in 0..half {
                    unsafe {
                        let w = *tw.get_unchecked(k);
                        let ws = *tws.get_unchecked(k);
                        let mut u = *a.get_unchecked(base + k);
                        if u >= two_q {
                            u -= two_q;
                        }
                        // lazy product in [0, 2q)
                        let x = *a.get_unchecked(base + k + half);
                        let quot = ((x as u128 * ws as u128) >> 64) as u64;
                        let v = x.wrapping_mul(w).wrapping_sub(quot.wrapping_mul(q));
                        *a.get_unchecked_mut(base + k) = u + v;
                        *a.get_unchecked_mut(base + k + half) = u + two_q - v;
                    }
                }
                base += len;
            }
        }
        for v in a.iter_mut() {
            if *v >= two_q {
                *v -= two_q;
            }
            if *v >= q {
                *v -= q;
            }
        }
    }

    /// In-place negacyclic forward transform.
    pub fn forward(&self, a: &mut [u64]) {
        debug_assert_eq!(a.len(), self.n);
        let q = self.q;
        for ((v, &w), &ws) in a.iter_mut().zip(&self.psi_pow).zip(&self.psi_pow_shoup) {
            *v = shoup_mul(*v, w, ws, q);
        }
        self.cyclic(a, &self.fwd_stages, &self.fwd_stages_shoup);
    }

    /// In-place negacyclic inverse transform.
    pub fn inverse(&self, a: &mut [u64]) {
        debug_assert_eq!(a.len(), self.n);
        let q = self.q;
        self.cyclic(a, &self.inv_stages, &self.inv_stages_shoup);
        for ((v, &w), &ws) in a
            .iter_mut()
            .zip(&self.psi_inv_scaled)
            .zip(&self.psi_inv_scaled_shoup)
        {
            *v = shoup_mul(*v, w, ws, q);
        }
    }

    /// `c = a * b mod (X^n + 1, q)` with both inputs in coefficient form.
    #[cfg(test)]
    pub fn negacyclic_mul(&self, a: &[u64], b: &[u64]) -> Vec<u64> {
        let mut b_hat = b.to_vec();
        self.forward(&mut b_hat);
        let b_shoup = self.shoup(&b_hat);
        self.mul_by_ntt(a, &b_hat, &b_shoup)
    }

    /// Multiply a coefficient-form polynomial by one already transformed,
    /// with Shoup companions for the transformed side.
    pub fn mul_by_ntt(&self, a: &[u64], b_ntt: &[u64], b_ntt_shoup: &[u64]) -> Vec<u64> {
        let mut fa = a.to_vec();
        self.forward(&mut fa);
        for ((x, &w), &ws) in fa.iter_mut().zip(b_ntt).zip(b_ntt_shoup) {
            *x = shoup_mul(*x, w, ws, self.q);
        }
        self.inverse(&mut fa);
        fa
    }

    /// Pointwise product of two transform-domain vectors, returned in
    /// coefficient form.
    pub fn mul_ntt_domain(&self, a_ntt: &[u64], b_ntt: &[u64], b_ntt_shoup: &[u64]) -> Vec<u64> {
        let mut out: Vec<u64> = a_ntt
            .iter()
            .zip(b_ntt)
            .zip(b_ntt_shoup)
            .map(|((&a, &w), &ws)| shoup_mul(a, w, ws, self.q))
            .collect();
        self.inverse(&mut out);
        out
    }

    /// Shoup companions for a full NTT-domain vector.
    pub fn shoup(&self, v: &[u64]) -> Vec<u64> {
        v.iter().map(|&w| shoup_precompute(w, self.q)).collect()
    }
}
