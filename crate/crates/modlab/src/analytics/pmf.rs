//! The exact distribution of `S_N`, the sum of `N` i.i.d. uniform variables
//! on `{0, ..., q-1}`.
//!
//! Writing the generating function `(1 + z + ... + z^{q-1})^N` as
//! `(1 - z^q)^N (1 - z)^{-N}` and expanding both factors gives the
//! inclusion–exclusion count of tuples with sum `s`:
//!
//! ```text
//! q^N · P(S_N = s) = Σ_{k=0}^{floor(s/q)} (-1)^k C(N, k) C(s - qk + N - 1, N - 1)
//! ```

use super::AnalyticsError;
use crate::problem::ProblemSpec;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};

/// `C(n, k)` as a big integer, with `C(n, k) = 0` for `k > n`.
pub(crate) fn binomial(n: u64, k: u64) -> BigInt {
    if k > n {
        return BigInt::zero();
    }
    let k = k.min(n - k);
    let mut num = BigInt::one();
    let mut den = BigInt::one();
    for i in 0..k {
        num *= BigInt::from(n - i);
        den *= BigInt::from(i + 1);
    }
    num / den
}

/// The exact probability mass function of `S_N`, stored as integer counts
/// over the common denominator `q^N`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExactPmf {
    pub n: usize,
    pub q: u64,
    /// `counts[s]` tuples in `{0,...,q-1}^N` sum to `s`, for `s` in
    /// `0 ..= n*(q-1)`.
    pub counts: Vec<BigInt>,
    /// `q^N`, the total number of tuples.
    pub denominator: BigInt,
}

impl ExactPmf {
    /// Largest value in the support, `N(q-1)`.
    pub fn support_max(&self) -> u64 {
        self.n as u64 * (self.q - 1)
    }

    /// `P(S_N = s)` as a reduced rational; zero outside the support.
    pub fn mass(&self, s: u64) -> BigRational {
        match self.counts.get(s as usize) {
            Some(count) => BigRational::new(count.clone(), self.denominator.clone()),
            None => BigRational::zero(),
        }
    }

    /// Sum of all masses; equals one exactly for a correct table.
    pub fn total(&self) -> BigRational {
        let sum: BigInt = self.counts.iter().sum();
        BigRational::new(sum, self.denominator.clone())
    }
}

/// Computes the full PMF of `S_N` by the inclusion–exclusion formula.
///
/// Rejects `n = 0`, `q < 2`, and sizes beyond the exact-mode guideline
/// (`n <= 64`, `q <= 1024`); use [`super::monte_carlo_wraps`] beyond that.
pub fn exact_sum_pmf(n: usize, q: u64) -> Result<ExactPmf, AnalyticsError> {
    if n == 0 {
        return Err(AnalyticsError::ZeroLength);
    }
    if q < 2 {
        return Err(AnalyticsError::ModulusTooSmall(q));
    }
    if !ProblemSpec::exact_mode_ok(n, q) {
        return Err(AnalyticsError::ExactModeExceeded { n, q });
    }

    let support_max = n as u64 * (q - 1);
    let mut counts = Vec::with_capacity(support_max as usize + 1);
    for s in 0..=support_max {
        let mut count = BigInt::zero();
        for k in 0..=(s / q).min(n as u64) {
            let term = binomial(n as u64, k) * binomial(s - q * k + n as u64 - 1, n as u64 - 1);
            if k % 2 == 0 {
                count += term;
            } else {
                count -= term;
            }
        }
        counts.push(count);
    }
    Ok(ExactPmf {
        n,
        q,
        counts,
        denominator: BigInt::from(q).pow(n as u32),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binomial_small_values() {
        assert_eq!(binomial(5, 2), BigInt::from(10));
        assert_eq!(binomial(5, 0), BigInt::from(1));
        assert_eq!(binomial(5, 5), BigInt::from(1));
        assert_eq!(binomial(5, 6), BigInt::from(0));
        assert_eq!(binomial(60, 30).to_string(), "118264581564861424");
    }

    #[test]
    fn single_variable_is_uniform() {
        let pmf = exact_sum_pmf(1, 5).unwrap();
        for s in 0..5 {
            assert_eq!(pmf.mass(s), BigRational::new(1.into(), 5.into()));
        }
        assert_eq!(pmf.total(), BigRational::one());
    }

    #[test]
    fn two_coin_sum() {
        let pmf = exact_sum_pmf(2, 2).unwrap();
        assert_eq!(pmf.mass(0), BigRational::new(1.into(), 4.into()));
        assert_eq!(pmf.mass(1), BigRational::new(1.into(), 2.into()));
        assert_eq!(pmf.mass(2), BigRational::new(1.into(), 4.into()));
        assert_eq!(pmf.mass(3), BigRational::zero());
    }

    #[test]
    fn matches_exhaustive_enumeration_for_three_dice() {
        // Oracle: walk all q^n tuples with an odometer and histogram the sums.
        let (n, q) = (3usize, 7u64);
        let mut histogram = vec![0u64; (n as u64 * (q - 1) + 1) as usize];
        let mut digits = vec![0u64; n];
        loop {
            histogram[digits.iter().sum::<u64>() as usize] += 1;
            let mut pos = 0;
            loop {
                if pos == n {
                    let pmf = exact_sum_pmf(n, q).unwrap();
                    for (s, &count) in histogram.iter().enumerate() {
                        assert_eq!(pmf.counts[s], BigInt::from(count), "s={s}");
                    }
                    return;
                }
                digits[pos] += 1;
                if digits[pos] < q {
                    break;
                }
                digits[pos] = 0;
                pos += 1;
            }
        }
    }

    #[test]
    fn rejects_degenerate_inputs() {
        assert_eq!(exact_sum_pmf(0, 5).unwrap_err(), AnalyticsError::ZeroLength);
        assert_eq!(
            exact_sum_pmf(3, 1).unwrap_err(),
            AnalyticsError::ModulusTooSmall(1)
        );
        assert!(matches!(
            exact_sum_pmf(65, 7).unwrap_err(),
            AnalyticsError::ExactModeExceeded { .. }
        ));
    }
}
