//! The generalization-gap lower bound for sparse-trained models.
//!
//! Under the uniform test distribution each entry is zero with probability
//! `1/q` independently, so a fraction `(1 - 1/q)^N` of test inputs is
//! zero-free. A model whose loss on zero-free inputs is at least ε while its
//! training risk is at most δ must therefore have a test-train gap of at
//! least `ε (1 - 1/q)^N - δ`.

use serde::{Deserialize, Serialize};

/// Inputs to the gap bound. `n = 0` is allowed (empty product, prefactor 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapBoundInput {
    pub q: u64,
    pub n: usize,
    /// Lower bound ε on the loss over zero-free inputs.
    pub eps: f64,
    /// Upper bound δ on the training risk.
    pub delta: f64,
}

impl GapBoundInput {
    pub fn new(q: u64, n: usize, eps: f64, delta: f64) -> Self {
        assert!(q >= 2, "need q >= 2");
        assert!(eps >= 0.0 && delta >= 0.0, "eps and delta are non-negative");
        Self { q, n, eps, delta }
    }
}

/// Returns `(prefactor, bound)` where `prefactor = (1 - 1/q)^N` and
/// `bound = eps * prefactor - delta`. The bound may be negative (it is
/// vacuous then) and is returned as-is.
pub fn gap_lower_bound(input: GapBoundInput) -> (f64, f64) {
    let prefactor = (1.0 - 1.0 / input.q as f64).powi(input.n as i32);
    (prefactor, input.eps * prefactor - input.delta)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_product_gives_prefactor_one() {
        let (prefactor, bound) = gap_lower_bound(GapBoundInput::new(17, 0, 0.5, 0.1));
        assert_eq!(prefactor, 1.0);
        assert!((bound - 0.4).abs() < 1e-15);
    }

    #[test]
    fn reference_cells() {
        let (p, _) = gap_lower_bound(GapBoundInput::new(17, 8, 1.0, 0.0));
        assert!((p - 0.6157).abs() < 5e-5);
        let (p, _) = gap_lower_bound(GapBoundInput::new(113, 32, 1.0, 0.0));
        assert!((p - 0.7524).abs() < 5e-5);
        let (p, _) = gap_lower_bound(GapBoundInput::new(113, 8, 1.0, 0.0));
        assert!((p - 0.9314).abs() < 5e-5);
    }

    #[test]
    fn bound_can_go_negative() {
        let (_, bound) = gap_lower_bound(GapBoundInput::new(5, 32, 0.01, 0.5));
        assert!(bound < 0.0);
    }

    #[test]
    fn prefactor_monotone_in_n_and_q() {
        for q in [3u64, 7, 23, 113] {
            for n in 1..40usize {
                let (a, _) = gap_lower_bound(GapBoundInput::new(q, n, 1.0, 0.0));
                let (b, _) = gap_lower_bound(GapBoundInput::new(q, n + 1, 1.0, 0.0));
                assert!(b < a, "q={q} n={n}");
            }
        }
        for n in [1usize, 8, 32] {
            for q in 2..50u64 {
                let (a, _) = gap_lower_bound(GapBoundInput::new(q, n, 1.0, 0.0));
                let (b, _) = gap_lower_bound(GapBoundInput::new(q + 1, n, 1.0, 0.0));
                assert!(b > a, "q={q} n={n}");
            }
        }
    }
}
