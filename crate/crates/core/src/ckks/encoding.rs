//! Canonical-embedding encoding of real vectors into integer polynomials.
//!
//! A degree-`n` negacyclic polynomial evaluated at the odd powers of the
//! primitive 2n-th complex root has `n/2` independent complex slots (the
//! other half are conjugates). Encoding scales a real slot vector by Δ and
//! interpolates; decoding evaluates and divides by the scale. Both directions
//! are a size-`n` FFT plus a half-root twist, so slot-wise products of
//! plaintexts correspond to polynomial products modulo `X^n + 1`.

use num_complex::Complex64;

#[derive(Clone, Debug)]
pub struct Encoder {
    n: usize,
    slots: usize,
    /// Slot index -> frequency bin of the odd exponent orbit generated by 5.
    rot_index: Vec<usize>,
    /// e^{2πi j / n} for j < n.
    roots: Vec<Complex64>,
    /// Half roots e^{iπ j / n} for j < n (the twist).
    half_roots: Vec<Complex64>,
}

impl Encoder {
    pub fn new(n: usize) -> Self {
        debug_assert!(n.is_power_of_two());
        let slots = n / 2;
        let mut rot_index = Vec::with_capacity(slots);
        let mut t: usize = 1;
        for _ in 0..slots {
            rot_index.push((t - 1) / 2);
            t = (t * 5) % (2 * n);
        }
        let roots = (0..n)
            .map(|j| Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * j as f64 / n as f64))
            .collect();
        let half_roots = (0..n)
            .map(|j| Complex64::from_polar(1.0, std::f64::consts::PI * j as f64 / n as f64))
            .collect();
        Encoder {
            n,
            slots,
            rot_index,
            roots,
            half_roots,
        }
    }

    /// In-place FFT computing `X_k = Σ_j x_j e^{s·2πi jk/n}` with `s = +1`
    /// (`invert = false`) or `s = −1`.
    fn fft(&self, buf: &mut [Complex64], invert: bool) {
        let n = buf.len();
        let mut j = 0usize;
        for i in 1..n {
            let mut bit = n >> 1;
            while j & bit != 0 {
                j ^= bit;
                bit >>= 1;
            }
            j |= bit;
            if i < j {
                buf.swap(i, j);
            }
        }
        let mut len = 2;
        while len <= n {
            let step = self.n / len;
            for base in (0..n).step_by(len) {
                for k in 0..len / 2 {
                    let mut w = self.roots[k * step];
                    if invert {
                        w = w.conj();
                    }
                    let u = buf[base + k];
                    let v = buf[base + k + len / 2] * w;
                    buf[base + k] = u + v;
                    buf[base + k + len / 2] = u - v;
                }
            }
            len <<= 1;
        }
    }

    /// Scale `values` by `scale` and interpolate the unique real polynomial
    /// hitting them on the slot orbit; returns rounded integer coefficients.
    pub fn encode(&self, values: &[f64], scale: f64) -> Vec<i64> {
        debug_assert!(values.len() <= self.slots);
        let mut bins = vec![Complex64::new(0.0, 0.0); self.n];
        for (i, &v) in values.iter().enumerate() {
            let k = self.rot_index[i];
            let z = Complex64::new(v * scale, 0.0);
            bins[k] = z;
            bins[self.n - 1 - k] = z.conj();
        }
        self.fft(&mut bins, true);
        let inv_n = 1.0 / self.n as f64;
        (0..self.n)
            .map(|j| (bins[j] * self.half_roots[j].conj()).re * inv_n)
            .map(|x| x.round() as i64)
            .collect()
    }

    /// Evaluate real coefficients on the slot orbit and divide by `scale`.
    pub fn decode(&self, coeffs: &[f64], scale: f64) -> Vec<f64> {
        debug_assert_eq!(coeffs.len(), self.n);
        let mut buf: Vec<Complex64> = coeffs
            .iter()
            .enumerate()
            .map(|(j, &c)| self.half_roots[j] * c)
            .collect();
        self.fft(&mut buf, false);
        let inv = 1.0 / scale;
        self.rot_index.iter().map(|&k| buf[k].re * inv).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_eval(coeffs: &[f64], n: usize, exponent: usize) -> Complex64 {
        // m(ζ^exponent) with ζ = e^{iπ/n}
        let mut acc = Complex64::new(0.0, 0.0);
        for (j, &c) in coeffs.iter().enumerate() {
            let ang = std::f64::consts::PI * (exponent * j % (2 * n)) as f64 / n as f64;
            acc += Complex64::from_polar(c, ang);
        }
        acc
    }

    #[test]
    fn decode_matches_naive_evaluation() {
        let n = 16;
        let enc = Encoder::new(n);
        let coeffs: Vec<f64> = (0..n).map(|j| ((j * 7 + 3) % 11) as f64 - 5.0).collect();
        let slots = enc.decode(&coeffs, 1.0);
        let mut t = 1usize;
        for &s in slots.iter() {
            let direct = naive_eval(&coeffs, n, t);
            assert!((direct.re - s).abs() < 1e-9, "{} vs {}", direct.re, s);
            t = (t * 5) % (2 * n);
        }
    }

    #[test]
    fn roundtrip_recovers_values() {
        let enc = Encoder::new(64);
        let vals: Vec<f64> = (0..32).map(|i| ((i as f64) * 0.37).sin()).collect();
        let coeffs = enc.encode(&vals, (1u64 << 30) as f64);
        let f: Vec<f64> = coeffs.iter().map(|&c| c as f64).collect();
        let back = enc.decode(&f, (1u64 << 30) as f64);
        for (a, b) in vals.iter().zip(&back) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn zeros_encode_to_zeros_exactly() {
        let enc = Encoder::new(32);
        let coeffs = enc.encode(&[0.0; 16], (1u64 << 20) as f64);
        assert!(coeffs.iter().all(|&c| c == 0));
    }

    #[test]
    fn constant_vector_encodes_to_constant_polynomial() {
        let enc = Encoder::new(32);
        let coeffs = enc.encode(&[0.75; 16], (1u64 << 20) as f64);
        assert_eq!(coeffs[0], (0.75 * (1u64 << 20) as f64).round() as i64);
        assert!(coeffs[1..].iter().all(|&c| c == 0));
    }

    #[test]
    fn slotwise_product_is_polynomial_product() {
        // encode two vectors, multiply polynomials mod X^n+1 in f64,
        // decode at the product scale: slots multiply elementwise
        let n = 32;
        let enc = Encoder::new(n);
        let a: Vec<f64> = (0..16).map(|i| 0.1 * i as f64 - 0.8).collect();
        let b: Vec<f64> = (0..16).map(|i| ((i * i) % 7) as f64 * 0.1).collect();
        let scale = (1u64 << 24) as f64;
        let ca = enc.encode(&a, scale);
        let cb = enc.encode(&b, scale);
        let mut prod = vec![0.0f64; n];
        for i in 0..n {
            for j in 0..n {
                let p = ca[i] as f64 * cb[j] as f64;
                if i + j < n {
                    prod[i + j] += p;
                } else {
                    prod[i + j - n] -= p;
                }
            }
        }
        let out = enc.decode(&prod, scale * scale);
        for k in 0..16 {
            assert!((out[k] - a[k] * b[k]).abs() < 1e-5, "slot {k}");
        }
    }
}
