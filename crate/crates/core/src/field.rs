//! Scalar fields used for channel realizations.
//!
//! Complex channels model the physical setting. Prime-field channels give an
//! exact rank test: a nonzero minor of the coefficient matrix is a polynomial
//! of degree at most C in the channel entries, so a uniform draw over GF(p)
//! hits one of its roots with probability at most C / p.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// 2^31 - 1.
pub const DEFAULT_PRIME: u64 = 2_147_483_647;

/// Smallest modulus accepted for prime-field mode.
pub const MIN_PRIME: u64 = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalarField {
    Complex,
    Prime(u64),
}

impl ScalarField {
    pub fn name(&self) -> &'static str {
        match self {
            ScalarField::Complex => "complex",
            ScalarField::Prime(_) => "prime",
        }
    }

    /// Rejects prime-field moduli that are composite or below [`MIN_PRIME`].
    pub fn validate(&self) -> Result<()> {
        match *self {
            ScalarField::Complex => Ok(()),
            ScalarField::Prime(p) if p >= MIN_PRIME && is_prime(p) => Ok(()),
            ScalarField::Prime(p) => Err(Error::BadModulus(p)),
        }
    }
}

impl Default for ScalarField {
    fn default() -> Self {
        ScalarField::Prime(DEFAULT_PRIME)
    }
}

#[inline]
pub fn mul_mod(a: u64, b: u64, p: u64) -> u64 {
    ((a as u128 * b as u128) % p as u128) as u64
}

#[inline]
pub fn add_mod(a: u64, b: u64, p: u64) -> u64 {
    let s = a as u128 + b as u128;
    (s % p as u128) as u64
}

#[inline]
pub fn sub_mod(a: u64, b: u64, p: u64) -> u64 {
    if a >= b {
        a - b
    } else {
        p - (b - a)
    }
}

pub fn pow_mod(mut base: u64, mut exp: u64, p: u64) -> u64 {
    let mut acc = 1 % p;
    base %= p;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, p);
        }
        base = mul_mod(base, base, p);
        exp >>= 1;
    }
    acc
}

/// Inverse of a nonzero element of GF(p), p prime.
pub fn inv_mod(a: u64, p: u64) -> u64 {
    debug_assert!(!a.is_multiple_of(p));
    pow_mod(a, p - 2, p)
}

/// Deterministic Miller-Rabin for 64-bit integers.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    const SMALL: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    for &q in &SMALL {
        if n.is_multiple_of(q) {
            return n == q;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d.is_multiple_of(2) {
        d /= 2;
        s += 1;
    }
    'witness: for &a in &SMALL {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn primality() {
        assert!(is_prime(DEFAULT_PRIME));
        assert!(is_prime(1_048_583));
        assert!(!is_prime(1 << 20));
        assert!(!is_prime(DEFAULT_PRIME * 3));
        assert!(is_prime(18_446_744_073_709_551_557));
    }

    #[test]
    fn field_validation() {
        assert!(ScalarField::Prime(DEFAULT_PRIME).validate().is_ok());
        assert!(ScalarField::Prime(65_537).validate().is_err());
        assert!(ScalarField::Prime((1 << 21) + 1).validate().is_err());
        assert!(ScalarField::Complex.validate().is_ok());
    }

    #[test]
    fn inverse_round_trip() {
        let p = DEFAULT_PRIME;
        for a in [1u64, 2, 12345, p - 1] {
            assert_eq!(mul_mod(a, inv_mod(a, p), p), 1);
        }
        assert_eq!(sub_mod(3, 5, p), p - 2);
        assert_eq!(add_mod(p - 1, 2, p), 1);
    }

    #[test]
    fn serde_shape() {
        let c: ScalarField = serde_json::from_str("\"complex\"").unwrap();
        assert_eq!(c, ScalarField::Complex);
        let p: ScalarField = serde_json::from_str("{\"prime\": 2147483647}").unwrap();
        assert_eq!(p, ScalarField::Prime(DEFAULT_PRIME));
        assert_eq!(serde_json::to_string(&p).unwrap(), "{\"prime\":2147483647}");
    }
}
