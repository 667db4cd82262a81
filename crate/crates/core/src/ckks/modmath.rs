//! Modular arithmetic over word-sized primes and selection of the NTT-ready
//! coefficient modulus chain.

#[inline(always)]
pub fn mod_add(a: u64, b: u64, q: u64) -> u64 {
    let s = a.wrapping_add(b);
    if s >= q || s < a {
        s.wrapping_sub(q)
    } else {
        s
    }
}

#[inline(always)]
pub fn mod_sub(a: u64, b: u64, q: u64) -> u64 {
    if a >= b {
        a - b
    } else {
        a + q - b
    }
}

#[inline(always)]
pub fn mod_mul(a: u64, b: u64, q: u64) -> u64 {
    ((a as u128 * b as u128) % q as u128) as u64
}

/// Precomputed-quotient companion for [`shoup_mul`]: `⌊w·2^64 / q⌋`.
#[inline]
pub fn shoup_precompute(w: u64, q: u64) -> u64 {
    (((w as u128) << 64) / q as u128) as u64
}

/// `a·w mod q` with the quotient of `w/q` precomputed; requires `q < 2^63`.
#[inline(always)]
pub fn shoup_mul(a: u64, w: u64, w_shoup: u64, q: u64) -> u64 {
    let quot = ((a as u128 * w_shoup as u128) >> 64) as u64;
    let r = a.wrapping_mul(w).wrapping_sub(quot.wrapping_mul(q));
    if r >= q {
        r - q
    } else {
        r
    }
}

pub fn mod_pow(mut base: u64, mut exp: u64, q: u64) -> u64 {
    let mut acc = 1u64 % q;
    base %= q;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mod_mul(acc, base, q);
        }
        base = mod_mul(base, base, q);
        exp >>= 1;
    }
    acc
}

/// Inverse modulo a prime.
pub fn mod_inv(a: u64, q: u64) -> u64 {
    mod_pow(a, q - 2, q)
}

/// Reduce a signed value into `[0, q)`.
#[inline]
pub fn reduce_i64(v: i64, q: u64) -> u64 {
    let r = v % q as i64;
    if r < 0 {
        (r + q as i64) as u64
    } else {
        r as u64
    }
}

/// Center a residue into `(-q/2, q/2]`.
#[inline]
pub fn center(r: u64, q: u64) -> i64 {
    if r > q / 2 {
        r as i64 - q as i64
    } else {
        r as i64
    }
}

/// Deterministic Miller-Rabin for u64.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for p in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        if n == p {
            return true;
        }
        if n % p == 0 {
            return false;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d % 2 == 0 {
        d /= 2;
        s += 1;
    }
    'witness: for a in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        let mut x = mod_pow(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 0..s - 1 {
            x = mod_mul(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Smallest distinct primes of exactly `bits` bits with `p ≡ 1 (mod 2·degree)`,
/// assigned in chain order so repeated bit sizes get consecutive primes.
pub fn chain_primes(bit_sizes: &[u32], degree: usize) -> Option<Vec<u64>> {
    let step = 2 * degree as u64;
    let mut chosen: Vec<u64> = Vec::with_capacity(bit_sizes.len());
    for &bits in bit_sizes {
        let lo = 1u64 << (bits - 1);
        let hi = 1u64 << bits;
        // first candidate ≡ 1 mod 2N at or above lo
        let mut p = lo + (step - ((lo - 1) % step)) % step;
        debug_assert_eq!((p - 1) % step, 0);
        let mut found = None;
        while p < hi {
            if is_prime(p) && !chosen.contains(&p) {
                found = Some(p);
                break;
            }
            p += step;
        }
        chosen.push(found?);
    }
    Some(chosen)
}

/// An element of multiplicative order `2n` modulo `q` (requires
/// `q ≡ 1 mod 2n`), for negacyclic transforms.
pub fn root_of_order_2n(q: u64, n: usize) -> u64 {
    let two_n = 2 * n as u64;
    debug_assert_eq!((q - 1) % two_n, 0);
    let exp = (q - 1) / two_n;
    for x in 2..q {
        let g = mod_pow(x, exp, q);
        // order divides 2n, which is a power of two; g^n == -1 pins it to 2n
        if mod_pow(g, n as u64, q) == q - 1 {
            return g;
        }
    }
    unreachable!("no 2n-th root found for prime {q}");
}
