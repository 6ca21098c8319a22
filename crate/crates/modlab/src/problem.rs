//! The task instance shared by every module: sequence length, modulus, and
//! the auxiliary-modulus mixing parameters.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A modular-addition problem instance.
///
/// `n` inputs in `{0, ..., q-1}` are summed modulo `q`. Training may swap the
/// target modulus to `k * q` with probability `r` per example; `k = 1` or
/// `r = 0` disables the auxiliary task (the plain baseline).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    /// Sequence length N ≥ 1.
    pub n: usize,
    /// Primary modulus q ≥ 2.
    pub q: u64,
    /// Auxiliary factor K ≥ 1. The auxiliary task only differs from the
    /// primary one for K ≥ 2.
    pub k: u64,
    /// Per-example probability of training on the auxiliary modulus Kq.
    pub r: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum ProblemSpecError {
    #[error("sequence length must be at least 1")]
    ZeroLength,
    #[error("modulus must be at least 2, got {0}")]
    ModulusTooSmall(u64),
    #[error("auxiliary factor must be at least 1, got {0}")]
    FactorTooSmall(u64),
    #[error("mixing probability must lie in [0, 1], got {0}")]
    MixingOutOfRange(f64),
    #[error("auxiliary modulus K*q = {k} * {q} overflows u64")]
    AuxModulusOverflow { k: u64, q: u64 },
}

impl ProblemSpec {
    pub fn new(n: usize, q: u64, k: u64, r: f64) -> Result<Self, ProblemSpecError> {
        if n == 0 {
            return Err(ProblemSpecError::ZeroLength);
        }
        if q < 2 {
            return Err(ProblemSpecError::ModulusTooSmall(q));
        }
        if k < 1 {
            return Err(ProblemSpecError::FactorTooSmall(k));
        }
        if !(0.0..=1.0).contains(&r) || r.is_nan() {
            return Err(ProblemSpecError::MixingOutOfRange(r));
        }
        if k.checked_mul(q).is_none() {
            return Err(ProblemSpecError::AuxModulusOverflow { k, q });
        }
        Ok(Self { n, q, k, r })
    }

    /// The enlarged modulus `K * q`.
    pub fn aux_modulus(&self) -> u64 {
        self.k * self.q
    }

    /// Whether (n, q) is small enough for the exact rational analytics,
    /// which work with denominators of size `q^n`.
    pub fn exact_mode_ok(n: usize, q: u64) -> bool {
        n >= 1 && n <= 64 && (2..=1024).contains(&q)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DecimalParseError {
    #[error("empty decimal literal")]
    Empty,
    #[error("invalid decimal literal {0:?}")]
    Invalid(String),
}

/// Parses a decimal literal such as `"0.4"` into the exact rational `2/5`.
///
/// Going through `f64` instead would silently replace `0.4` by its nearest
/// binary fraction and break the exact identities the analytics tests rely
/// on.
pub fn parse_decimal_rational(s: &str) -> Result<BigRational, DecimalParseError> {
    let t = s.trim();
    let (sign, t) = match t.strip_prefix('-') {
        Some(rest) => (-1i32, rest),
        None => (1i32, t.strip_prefix('+').unwrap_or(t)),
    };
    if t.is_empty() {
        return Err(DecimalParseError::Empty);
    }
    let (int_part, frac_part) = match t.split_once('.') {
        Some((a, b)) => (a, b),
        None => (t, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(DecimalParseError::Invalid(s.to_string()));
    }
    if !int_part.chars().all(|c| c.is_ascii_digit())
        || !frac_part.chars().all(|c| c.is_ascii_digit())
    {
        return Err(DecimalParseError::Invalid(s.to_string()));
    }
    let digits: String = [int_part, frac_part].concat();
    let num: BigInt = digits
        .parse()
        .map_err(|_| DecimalParseError::Invalid(s.to_string()))?;
    let den = BigInt::from(10u32).pow(frac_part.len() as u32);
    let mut value = BigRational::new(num, den);
    if sign < 0 && !value.is_zero() {
        value = -value;
    }
    Ok(value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::One;

    #[test]
    fn accepts_paper_scale_instances() {
        let spec = ProblemSpec::new(8, 31, 5, 0.2).unwrap();
        assert_eq!(spec.aux_modulus(), 155);
        ProblemSpec::new(128, 974_269, 8, 0.3).unwrap();
    }

    #[test]
    fn rejects_invalid_fields() {
        assert_eq!(
            ProblemSpec::new(0, 5, 2, 0.0),
            Err(ProblemSpecError::ZeroLength)
        );
        assert_eq!(
            ProblemSpec::new(4, 1, 2, 0.0),
            Err(ProblemSpecError::ModulusTooSmall(1))
        );
        assert_eq!(
            ProblemSpec::new(4, 5, 0, 0.0),
            Err(ProblemSpecError::FactorTooSmall(0))
        );
        assert!(ProblemSpec::new(4, 5, 2, 1.5).is_err());
        assert!(ProblemSpec::new(4, 5, 2, f64::NAN).is_err());
        assert!(ProblemSpec::new(4, u64::MAX, 3, 0.0).is_err());
    }

    #[test]
    fn exact_mode_guideline() {
        assert!(ProblemSpec::exact_mode_ok(64, 1024));
        assert!(!ProblemSpec::exact_mode_ok(65, 2));
        assert!(!ProblemSpec::exact_mode_ok(8, 3329));
        assert!(!ProblemSpec::exact_mode_ok(0, 7));
    }

    #[test]
    fn decimal_parsing_is_exact() {
        let r = parse_decimal_rational("0.4").unwrap();
        assert_eq!(r, BigRational::new(2.into(), 5.into()));
        assert_eq!(parse_decimal_rational("1").unwrap(), BigRational::one());
        assert_eq!(
            parse_decimal_rational(".25").unwrap(),
            BigRational::new(1.into(), 4.into())
        );
        assert_eq!(
            parse_decimal_rational("-0.5").unwrap(),
            BigRational::new((-1).into(), 2.into())
        );
        assert!(parse_decimal_rational("").is_err());
        assert!(parse_decimal_rational("0.4e2").is_err());
        assert!(parse_decimal_rational(".").is_err());
    }
}
