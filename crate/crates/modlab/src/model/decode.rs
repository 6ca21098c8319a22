//! Turning model outputs back into residues.

use super::ModelError;
use std::f64::consts::TAU;

/// `(cos 2πy/m, sin 2πy/m)`: the point on the circle for residue `y` under
/// modulus `m`. Used both to build angular training targets and to verify
/// the decoder.
pub fn angle_pair(y: u64, modulus: u64) -> (f64, f64) {
    let angle = TAU * y as f64 / modulus as f64;
    (angle.cos(), angle.sin())
}

/// Restricted argmax over the first `q` logits, ties broken toward the
/// lowest index. Logits `q..` belong to the auxiliary classes and are never
/// read at inference.
pub fn decode_token(logits: &[f64], q: u64) -> u32 {
    let q = q as usize;
    assert!(logits.len() >= q, "need at least q logits");
    let mut best = 0usize;
    for (i, &v) in logits[..q].iter().enumerate().skip(1) {
        if v > logits[best] {
            best = i;
        }
    }
    best as u32
}

/// An angular decode: the continuous estimate and its rounding.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngularDecode {
    /// `φ̂ q / 2π` in `[0, q)`.
    pub s_hat: f64,
    /// `s_hat` rounded to the nearest integer, reduced mod `q` (so values
    /// near `q` wrap to 0).
    pub s_round: u32,
}

/// Decodes the primary `(cos, sin)` pair of a 4-vector output back into a
/// residue estimate. Errors if the pair is exactly `(0, 0)`, where the angle
/// is undefined.
pub fn decode_angular(output: &[f64], q: u64) -> Result<AngularDecode, ModelError> {
    assert!(output.len() >= 2, "need the primary (cos, sin) pair");
    let (cos, sin) = (output[0], output[1]);
    if cos == 0.0 && sin == 0.0 {
        return Err(ModelError::DegenerateAngularOutput);
    }
    let mut angle = sin.atan2(cos);
    if angle < 0.0 {
        angle += TAU;
    }
    let s_hat = angle * q as f64 / TAU;
    let s_round = (s_hat.round() as u64 % q) as u32;
    Ok(AngularDecode { s_hat, s_round })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn token_argmax_rules() {
        // Unique max below q.
        let mut logits = vec![0.0; 10];
        logits[3] = 5.0;
        assert_eq!(decode_token(&logits, 8), 3);
        // Larger value outside the first q is ignored.
        let mut logits = vec![0.0; 12];
        logits[10] = 9.0;
        logits[5] = 1.0;
        assert_eq!(decode_token(&logits, 8), 5);
        // Exact tie goes to the lowest index.
        let mut logits = vec![0.0; 10];
        logits[2] = 3.0;
        logits[7] = 3.0;
        assert_eq!(decode_token(&logits, 10), 2);
    }

    #[test]
    fn angular_zero_angle() {
        let d = decode_angular(&[1.0, 0.0, 0.3, 0.4], 97).unwrap();
        assert_eq!(d.s_hat, 0.0);
        assert_eq!(d.s_round, 0);
    }

    #[test]
    fn angular_inverts_the_encoding() {
        let (cos, sin) = angle_pair(50, 97);
        let d = decode_angular(&[cos, sin], 97).unwrap();
        assert_eq!(d.s_round, 50);
        assert!((d.s_hat - 50.0).abs() < 1e-9);
    }

    #[test]
    fn rounding_wraps_at_the_modulus() {
        // s_hat near q rounds to 0, the wrap distance being only 0.3.
        let angle = TAU * 96.7 / 97.0;
        let d = decode_angular(&[angle.cos(), angle.sin()], 97).unwrap();
        assert!((d.s_hat - 96.7).abs() < 1e-9);
        assert_eq!(d.s_round, 0);
    }

    #[test]
    fn degenerate_pair_errors() {
        assert!(matches!(
            decode_angular(&[0.0, 0.0, 1.0, 0.0], 97),
            Err(ModelError::DegenerateAngularOutput)
        ));
    }

    #[test]
    fn round_trip_all_residues_small_moduli() {
        for q in [2u64, 3, 31, 97] {
            for y in 0..q {
                let (cos, sin) = angle_pair(y, q);
                let d = decode_angular(&[cos, sin], q).unwrap();
                assert_eq!(d.s_round as u64, y, "q={q} y={y}");
            }
        }
    }
}
