//! Universal multiply-mod-prime hashing: `h(i) = ((a*i + b) mod p) mod m`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// 2^31 - 1.
pub const DEFAULT_PRIME: u64 = 2_147_483_647;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HashParams {
    pub a: u64,
    pub b: u64,
    pub p: u64,
    pub m: u64,
}

impl HashParams {
    pub fn new(a: u64, b: u64, p: u64, m: u64) -> Result<Self> {
        check_modulus(p, m)?;
        if a == 0 || a > p || b > p {
            return Err(Error::invalid(format!(
                "hash parameters out of range: a={a} (1..={p}), b={b} (0..={p})"
            )));
        }
        Ok(HashParams { a, b, p, m })
    }

    /// Draw `a` uniformly from `1..=p` and `b` from `0..=p`.
    pub fn sample(seed: u64, p: u64, m: u64) -> Result<Self> {
        check_modulus(p, m)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = rng.random_range(1..=p);
        let b = rng.random_range(0..=p);
        Ok(HashParams { a, b, p, m })
    }

    /// Evaluated in 128-bit arithmetic, so the result is exact for any
    /// 64-bit inputs.
    #[inline]
    pub fn code(&self, i: u64) -> u64 {
        let v = (self.a as u128 * i as u128 + self.b as u128) % self.p as u128;
        (v % self.m as u128) as u64
    }
}

fn check_modulus(p: u64, m: u64) -> Result<()> {
    if m == 0 {
        return Err(Error::invalid("hash range m must be at least 1"));
    }
    if m >= p {
        return Err(Error::invalid(format!("hash range m={m} must be below p={p}")));
    }
    if !is_prime(p) {
        return Err(Error::invalid(format!("{p} is not prime")));
    }
    Ok(())
}

fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    (a as u128 * b as u128 % m as u128) as u64
}

fn pow_mod(mut base: u64, mut exp: u64, m: u64) -> u64 {
    let mut acc = 1u64;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, m);
        }
        base = mul_mod(base, base, m);
        exp >>= 1;
    }
    acc
}

/// Deterministic Miller-Rabin; the witness set is exact for all `u64`.
pub fn is_prime(n: u64) -> bool {
    const WITNESSES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    if n < 2 {
        return false;
    }
    for &w in &WITNESSES {
        if n.is_multiple_of(w) {
            return n == w;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d.is_multiple_of(2) {
        d /= 2;
        s += 1;
    }
    'outer: for &w in &WITNESSES {
        let mut x = pow_mod(w, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'outer;
            }
        }
        return false;
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn primality() {
        let small: Vec<u64> = (0..60).filter(|&n| is_prime(n)).collect();
        assert_eq!(
            small,
            vec![2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59]
        );
        assert!(is_prime(DEFAULT_PRIME));
        assert!(!is_prime(DEFAULT_PRIME - 2));
        assert!(is_prime(18_446_744_073_709_551_557));
    }

    #[test]
    fn identity_like_parameters() {
        let h = HashParams::new(1, 0, DEFAULT_PRIME, 10).unwrap();
        assert_eq!(h.code(5), 5);
    }

    #[test]
    fn worked_example() {
        // (7*10 + 3) mod 31 = 73 mod 31 = 11; 11 mod 8 = 3
        let h = HashParams::new(7, 3, 31, 8).unwrap();
        assert_eq!(h.code(10), 3);
    }

    #[test]
    fn sample_is_deterministic_and_in_range() {
        assert_eq!(
            HashParams::sample(42, 31, 8).unwrap(),
            HashParams::sample(42, 31, 8).unwrap()
        );
        for seed in 0..500 {
            let h = HashParams::sample(seed, 31, 8).unwrap();
            assert!((1..=31).contains(&h.a));
            assert!(h.b <= 31);
        }
    }

    #[test]
    fn invalid_modulus_rejected() {
        assert!(HashParams::sample(0, 32, 8).is_err());
        assert!(HashParams::sample(0, 31, 31).is_err());
        assert!(HashParams::sample(0, 31, 0).is_err());
        assert!(HashParams::new(0, 0, 31, 8).is_err());
    }

    #[test]
    fn overflow_free_near_u64_max() {
        let p = 18_446_744_073_709_551_557u64;
        let h = HashParams::new(p - 1, p, p, 1000).unwrap();
        let i = u64::MAX - 1;
        let expected = ((p as u128 - 1) * i as u128 + p as u128) % p as u128 % 1000;
        assert_eq!(h.code(i) as u128, expected);
    }

    #[test]
    fn a_is_uniform_chi_square() {
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let p = 31u64;
        let draws = 10_000u64;
        let mut counts = vec![0u64; p as usize];
        for seed in 0..draws {
            let h = HashParams::sample(seed, p, 8).unwrap();
            counts[(h.a - 1) as usize] += 1;
        }
        let expected = draws as f64 / p as f64;
        let stat: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        let pval = 1.0 - ChiSquared::new((p - 1) as f64).unwrap().cdf(stat);
        assert!(pval > 0.01, "chi-square p-value {pval}");
    }

    proptest! {
        #[test]
        fn codes_in_range(seed: u64, m in 1u64..10_000, i in 0u64..1_000_000) {
            let h = HashParams::sample(seed, DEFAULT_PRIME, m).unwrap();
            prop_assert!(h.code(i) < m);
            prop_assert_eq!(h.code(i), h.code(i));
        }
    }
}
