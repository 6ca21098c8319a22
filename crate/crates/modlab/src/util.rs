//! Small shared helpers: config hashing, rational serialization, and
//! compensated summation.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::ToPrimitive;
use serde::Serialize;
use sha2::{Digest, Sha256};

/// Hashes a serializable config to a short hex digest. Used to stamp
/// checkpoints, histories, and metric reports so outputs can be matched to
/// the exact configuration that produced them.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_string(value).expect("config serializes");
    let digest = Sha256::digest(json.as_bytes());
    let mut out = String::with_capacity(16);
    for byte in &digest[..8] {
        out.push_str(&format!("{byte:02x}"));
    }
    out
}

/// Serializes `BigRational` as `{"num": "...", "den": "..."}` so arbitrary
/// precision survives the trip through JSON.
pub mod ratio_serde {
    use super::*;
    use serde::de::Error as DeError;
    use serde::{Deserialize, Deserializer, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Repr {
        num: String,
        den: String,
    }

    pub fn serialize<S: Serializer>(value: &BigRational, ser: S) -> Result<S::Ok, S::Error> {
        Repr {
            num: value.numer().to_string(),
            den: value.denom().to_string(),
        }
        .serialize(ser)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<BigRational, D::Error> {
        let repr = Repr::deserialize(de)?;
        let num: BigInt = repr.num.parse().map_err(D::Error::custom)?;
        let den: BigInt = repr.den.parse().map_err(D::Error::custom)?;
        if den == BigInt::from(0) {
            return Err(D::Error::custom("zero denominator"));
        }
        Ok(BigRational::new(num, den))
    }
}

/// Like [`ratio_serde`] but for `(BigRational, BigRational)` pairs.
pub mod ratio_pair_serde {
    use super::*;
    use serde::{Deserialize, Deserializer, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Pair {
        #[serde(with = "super::ratio_serde")]
        lo: BigRational,
        #[serde(with = "super::ratio_serde")]
        hi: BigRational,
    }

    pub fn serialize<S: Serializer>(
        value: &(BigRational, BigRational),
        ser: S,
    ) -> Result<S::Ok, S::Error> {
        Pair {
            lo: value.0.clone(),
            hi: value.1.clone(),
        }
        .serialize(ser)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        de: D,
    ) -> Result<(BigRational, BigRational), D::Error> {
        let pair = Pair::deserialize(de)?;
        Ok((pair.lo, pair.hi))
    }
}

/// Converts an exact rational to the nearest `f64` for display.
pub fn ratio_to_f64(value: &BigRational) -> f64 {
    value.to_f64().unwrap_or(f64::NAN)
}

/// Kahan–Babuška compensated summation; keeps error far below test
/// tolerances for sums of a few hundred square-root terms.
pub fn compensated_sum(terms: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for term in terms {
        let t = sum + term;
        if sum.abs() >= term.abs() {
            comp += (sum - t) + term;
        } else {
            comp += (term - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_is_stable_and_sensitive() {
        #[derive(Serialize)]
        struct Cfg {
            a: u32,
            b: &'static str,
        }
        let h1 = config_hash(&Cfg { a: 1, b: "x" });
        let h2 = config_hash(&Cfg { a: 1, b: "x" });
        let h3 = config_hash(&Cfg { a: 2, b: "x" });
        assert_eq!(h1, h2);
        assert_ne!(h1, h3);
        assert_eq!(h1.len(), 16);
    }

    #[test]
    fn rational_json_round_trip() {
        #[derive(Serialize, serde::Deserialize)]
        struct Wrap {
            #[serde(with = "ratio_serde")]
            v: BigRational,
        }
        let v = BigRational::new(123456789.into(), 987654321.into());
        let json = serde_json::to_string(&Wrap { v: v.clone() }).unwrap();
        assert!(json.contains("\"num\""));
        let back: Wrap = serde_json::from_str(&json).unwrap();
        assert_eq!(back.v, v);
    }

    #[test]
    fn compensated_sum_beats_naive_on_adversarial_input() {
        // 1 followed by many tiny terms that a naive f64 sum drops entirely.
        let terms = std::iter::once(1.0f64).chain(std::iter::repeat(1e-17).take(100_000));
        let sum = compensated_sum(terms);
        assert!((sum - (1.0 + 1e-12)).abs() < 1e-15);
    }
}
