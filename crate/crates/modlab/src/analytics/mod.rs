//! Exact and Monte Carlo analytics for the sum `S_N = x_1 + ... + x_N` of
//! i.i.d. uniform variables on `{0, ..., q-1}`.
//!
//! Everything that admits a closed form is computed with arbitrary-precision
//! rationals (denominators are powers of `q^N`), so the tests can assert
//! equality instead of tolerances. Quantities involving square roots are
//! computed in `f64` with compensated summation. Sizes beyond the exact-mode
//! guideline fall back to the seeded Monte Carlo estimator.

mod gap;
mod montecarlo;
mod pmf;
mod ratio;
mod wraps;

pub use gap::{gap_lower_bound, GapBoundInput};
pub use montecarlo::{monte_carlo_wraps, WrapEstimate};
pub use pmf::{exact_sum_pmf, ExactPmf};
pub use ratio::{rho, rho_heatmap, RhoCell, RHO_BAND};
pub use wraps::{
    expected_wraps_bounds, expected_wraps_exact, expected_x0, expected_x1, expected_x2_exact,
    prob_zero_wraps, prob_zero_wraps_from_pmf,
};

use crate::util::{ratio_pair_serde, ratio_serde};
use num_rational::BigRational;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AnalyticsError {
    #[error("sequence length must be at least 1")]
    ZeroLength,
    #[error("modulus must be at least 2, got {0}")]
    ModulusTooSmall(u64),
    #[error("auxiliary factor must be at least 1, got {0}")]
    FactorTooSmall(u64),
    #[error("(n={n}, q={q}) exceeds the exact-mode size guideline (n <= 64, q <= 1024); use the Monte Carlo estimator instead")]
    ExactModeExceeded { n: usize, q: u64 },
    #[error("need at least 1 sample")]
    NoSamples,
}

/// Every closed-form wrap quantity for one `(n, q, k, r)` instance.
///
/// `e_x1 / e_x0 = (1 - r) + r/K` holds exactly for rational `r`, and
/// `e_dkq_exact` always lies inside `e_dkq_bounds`. `e_x2` involves
/// irrational square roots and is reported as a real.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WrapSummary {
    pub n: usize,
    pub q: u64,
    pub k: u64,
    #[serde(with = "ratio_serde")]
    pub r: BigRational,
    /// Expected wraps of the plain task, `N(q-1)/(2q)`.
    #[serde(with = "ratio_serde")]
    pub e_x0: BigRational,
    /// Expected wraps under auxiliary-modulus mixing.
    #[serde(with = "ratio_serde")]
    pub e_x1: BigRational,
    /// Expected wraps under the sparse input distribution (finite sum,
    /// not the `2/3` asymptote), summed over `z` from 1.
    pub e_x2: f64,
    /// Exact `E[D_Kq] = Σ_s floor(s / Kq) P(S_N = s)`.
    #[serde(with = "ratio_serde")]
    pub e_dkq_exact: BigRational,
    /// `max(0, N(q-1)/(2qK) - 1) <= E[D_Kq] <= N(q-1)/(2qK)`.
    #[serde(with = "ratio_pair_serde")]
    pub e_dkq_bounds: (BigRational, BigRational),
    /// `P(D_Kq = 0)`, the chance the sum never wraps the enlarged modulus.
    #[serde(with = "ratio_serde")]
    pub p_zero_wraps: BigRational,
}

impl WrapSummary {
    /// Computes the full summary. Requires exact-mode sizes.
    pub fn compute(n: usize, q: u64, k: u64, r: &BigRational) -> Result<Self, AnalyticsError> {
        let pmf = exact_sum_pmf(n, q)?;
        if k < 1 {
            return Err(AnalyticsError::FactorTooSmall(k));
        }
        Ok(Self {
            n,
            q,
            k,
            r: r.clone(),
            e_x0: expected_x0(n, q),
            e_x1: expected_x1(n, q, k, r),
            e_x2: expected_x2_exact(n, q, 1),
            e_dkq_exact: expected_wraps_exact(&pmf, k),
            e_dkq_bounds: expected_wraps_bounds(n, q, k),
            p_zero_wraps: prob_zero_wraps_from_pmf(&pmf, k),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::BigRational;

    #[test]
    fn summary_invariants_hold_on_a_small_instance() {
        let r = BigRational::new(1.into(), 5.into());
        let s = WrapSummary::compute(4, 7, 2, &r).unwrap();
        // Scaling identity, exact.
        let factor = &s.e_x1 / &s.e_x0;
        let expected =
            (BigRational::from_integer(1.into()) - &r) + &r / BigRational::from_integer(2.into());
        assert_eq!(factor, expected);
        // Sandwich.
        assert!(s.e_dkq_bounds.0 <= s.e_dkq_exact);
        assert!(s.e_dkq_exact <= s.e_dkq_bounds.1);
        // Probability range.
        assert!(s.p_zero_wraps >= BigRational::from_integer(0.into()));
        assert!(s.p_zero_wraps <= BigRational::from_integer(1.into()));
    }

    #[test]
    fn summary_rejects_bad_factor() {
        let r = BigRational::new(1.into(), 5.into());
        assert_eq!(
            WrapSummary::compute(4, 7, 0, &r).unwrap_err(),
            AnalyticsError::FactorTooSmall(0)
        );
    }
}
