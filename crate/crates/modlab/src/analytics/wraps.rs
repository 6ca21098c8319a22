//! Wrap-count expectations and the no-wrap probability.
//!
//! `D_Kq = floor(S_N / Kq)` counts how often the running sum crosses the
//! enlarged modulus. Training difficulty tracks the expected wrap count, so
//! these are the quantities that justify the auxiliary-modulus method.

use super::pmf::{binomial, ExactPmf};
use super::{exact_sum_pmf, AnalyticsError};
use crate::util::compensated_sum;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};

/// `E[X0] = N(q-1)/(2q)`: expected wraps of the plain task (floor dropped).
pub fn expected_x0(n: usize, q: u64) -> BigRational {
    assert!(n >= 1 && q >= 2, "need n >= 1 and q >= 2");
    BigRational::new(
        BigInt::from(n as u64) * BigInt::from(q - 1),
        BigInt::from(2u64) * BigInt::from(q),
    )
}

/// `E[X1] = ((1-r) + r/K) E[X0]`: expected wraps under auxiliary-modulus
/// mixing. Exact when `r` is rational.
pub fn expected_x1(n: usize, q: u64, k: u64, r: &BigRational) -> BigRational {
    assert!(k >= 1, "need k >= 1");
    let one = BigRational::one();
    let factor = (&one - r) + r / BigRational::from_integer(BigInt::from(k));
    factor * expected_x0(n, q)
}

/// `E[X2]`: expected wraps under the sparse input distribution, where the
/// number of populated positions `z` is drawn with weight `1/sqrt(N-z+1)`.
///
/// Returns the exact finite sum
/// `((q-1)/(2q)) · Σ_z z/sqrt(N-z+1) / Σ_z 1/sqrt(N-z+1)`
/// over `z` in `{z_min, ..., N}`, evaluated in `f64` with compensated
/// summation (the square roots are irrational). `z_min` is 1 for the
/// sampler's range and 0 for the variant that also allows empty inputs;
/// the two differ by a single term of the normalizer.
pub fn expected_x2_exact(n: usize, q: u64, z_min: usize) -> f64 {
    assert!(n >= 1 && q >= 2, "need n >= 1 and q >= 2");
    assert!(z_min <= 1, "z_min is 0 or 1");
    let weighted = compensated_sum(
        (z_min..=n).map(|z| z as f64 / ((n - z + 1) as f64).sqrt()),
    );
    let normalizer = compensated_sum((z_min..=n).map(|z| 1.0 / ((n - z + 1) as f64).sqrt()));
    let mean_z = weighted / normalizer;
    (q - 1) as f64 / (2.0 * q as f64) * mean_z
}

/// Exact `E[D_Kq] = Σ_s floor(s / Kq) P(S_N = s)`.
pub fn expected_wraps_exact(pmf: &ExactPmf, k: u64) -> BigRational {
    assert!(k >= 1, "need k >= 1");
    let kq = k * pmf.q;
    let mut weighted = BigInt::zero();
    for (s, count) in pmf.counts.iter().enumerate() {
        let wraps = s as u64 / kq;
        if wraps > 0 {
            weighted += count * BigInt::from(wraps);
        }
    }
    BigRational::new(weighted, pmf.denominator.clone())
}

/// `max(0, N(q-1)/(2qK) - 1) <= E[D_Kq] <= N(q-1)/(2qK)`, from sandwiching
/// the floor between `x - 1` and `x`.
pub fn expected_wraps_bounds(n: usize, q: u64, k: u64) -> (BigRational, BigRational) {
    assert!(k >= 1, "need k >= 1");
    let hi = expected_x0(n, q) / BigRational::from_integer(BigInt::from(k));
    let lo_raw = &hi - BigRational::one();
    let lo = if lo_raw < BigRational::zero() {
        BigRational::zero()
    } else {
        lo_raw
    };
    (lo, hi)
}

/// `P(D_Kq = 0)` via the closed form
/// `(1/q^N) Σ_{i=0}^{K-1} (-1)^i C(N, i) C((K-i)q + N - 1, N)`.
///
/// Note the lower binomial index `N`: the hockey-stick identity
/// `Σ_{s=0}^{M-1} C(s+N-1, N-1) = C(M+N-1, N)` forces it. The variant with
/// lower index `N-1` fails even the `N = 1` case, where the probability must
/// be 1 for every `K >= 1`. [`prob_zero_wraps_from_pmf`] computes the same
/// probability from the mass table; the two routes agree exactly.
pub fn prob_zero_wraps(n: usize, q: u64, k: u64) -> Result<BigRational, AnalyticsError> {
    if k < 1 {
        return Err(AnalyticsError::FactorTooSmall(k));
    }
    // Reuse the PMF constructor's validation so both routes reject the same
    // inputs, then discard the table.
    exact_sum_pmf(n, q)?;
    let n64 = n as u64;
    let mut numerator = BigInt::zero();
    for i in 0..k.min(n64 + 1) {
        let term = binomial(n64, i) * binomial((k - i) * q + n64 - 1, n64);
        if i % 2 == 0 {
            numerator += term;
        } else {
            numerator -= term;
        }
    }
    Ok(BigRational::new(numerator, BigInt::from(q).pow(n as u32)))
}

/// `P(D_Kq = 0) = Σ_{s=0}^{Kq-1} P(S_N = s)`, summed straight off the mass
/// table. The independent route for checking [`prob_zero_wraps`].
pub fn prob_zero_wraps_from_pmf(pmf: &ExactPmf, k: u64) -> BigRational {
    assert!(k >= 1, "need k >= 1");
    let kq = k * pmf.q;
    let upper = kq.saturating_sub(1).min(pmf.support_max());
    let sum: BigInt = pmf.counts[..=upper as usize].iter().sum();
    BigRational::new(sum, pmf.denominator.clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ratio(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    #[test]
    fn x0_closed_form() {
        assert_eq!(expected_x0(8, 31), ratio(120, 31));
        assert_eq!(expected_x0(1, 2), ratio(1, 4));
        assert_eq!(expected_x0(32, 97), ratio(1536, 97));
    }

    #[test]
    fn x1_degenerate_mixing() {
        let zero = BigRational::zero();
        let one = BigRational::one();
        assert_eq!(expected_x1(8, 31, 5, &zero), expected_x0(8, 31));
        assert_eq!(
            expected_x1(8, 31, 5, &one),
            expected_x0(8, 31) / ratio(5, 1)
        );
        // r = 0.4, K = 4 gives the factor 0.6 + 0.1 = 0.7.
        let r = ratio(2, 5);
        assert_eq!(
            expected_x1(16, 97, 4, &r),
            ratio(7, 10) * expected_x0(16, 97)
        );
    }

    #[test]
    fn x2_single_position() {
        // With n = 1 the only choice is z = 1, so E[X2] = (q-1)/(2q).
        let v = expected_x2_exact(1, 31, 1);
        assert!((v - 15.0 / 31.0).abs() < 1e-15);
    }

    #[test]
    fn x2_hand_sum_for_n2() {
        // z=1 weight 1/sqrt(2), z=2 weight 1: mean z = (1/√2 + 2)/(1/√2 + 1).
        let w = 1.0 / 2.0f64.sqrt();
        let expected = (31.0 - 1.0) / (2.0 * 31.0) * ((w + 2.0) / (w + 1.0));
        assert!((expected_x2_exact(2, 31, 1) - expected).abs() < 1e-15);
    }

    #[test]
    fn wraps_exact_small_cases() {
        // n=1, q=5, K=2: the sum never reaches 10.
        let pmf = exact_sum_pmf(1, 5).unwrap();
        assert_eq!(expected_wraps_exact(&pmf, 2), BigRational::zero());
        // n=2, q=2, K=1: only the sum 2 wraps, once, with probability 1/4.
        let pmf = exact_sum_pmf(2, 2).unwrap();
        assert_eq!(expected_wraps_exact(&pmf, 1), ratio(1, 4));
    }

    #[test]
    fn bounds_sandwich_the_exact_value() {
        let (lo, hi) = expected_wraps_bounds(2, 2, 1);
        assert_eq!(lo, BigRational::zero());
        assert_eq!(hi, ratio(1, 2));
        let exact = expected_wraps_exact(&exact_sum_pmf(2, 2).unwrap(), 1);
        assert!(lo <= exact && exact <= hi);

        assert_eq!(expected_wraps_bounds(1, 2, 4), (ratio(0, 1), ratio(1, 16)));

        let (lo, hi) = expected_wraps_bounds(8, 31, 5);
        assert_eq!(hi, ratio(24, 31));
        assert_eq!(lo, BigRational::zero());
        let exact = expected_wraps_exact(&exact_sum_pmf(8, 31).unwrap(), 5);
        assert!(lo <= exact && exact <= hi);
    }

    #[test]
    fn zero_wrap_probability_closed_form() {
        // n=1: S_1 <= q-1 < Kq always.
        assert_eq!(prob_zero_wraps(1, 7, 1).unwrap(), BigRational::one());
        assert_eq!(prob_zero_wraps(1, 7, 3).unwrap(), BigRational::one());
        // n=2, q=2, K=1: sums {0,1,1,2}, three of four stay below 2.
        assert_eq!(prob_zero_wraps(2, 2, 1).unwrap(), ratio(3, 4));
        // n=2, q=2, K=2: the max sum 2 is below Kq = 4.
        assert_eq!(prob_zero_wraps(2, 2, 2).unwrap(), BigRational::one());
    }

    #[test]
    fn zero_wrap_routes_agree() {
        for n in 1..=5 {
            for q in [2u64, 3, 7] {
                let pmf = exact_sum_pmf(n, q).unwrap();
                for k in 1..=4 {
                    assert_eq!(
                        prob_zero_wraps(n, q, k).unwrap(),
                        prob_zero_wraps_from_pmf(&pmf, k),
                        "n={n} q={q} k={k}"
                    );
                }
            }
        }
    }

    #[test]
    fn rejects_zero_factor() {
        assert_eq!(
            prob_zero_wraps(2, 2, 0).unwrap_err(),
            AnalyticsError::FactorTooSmall(0)
        );
    }
}
