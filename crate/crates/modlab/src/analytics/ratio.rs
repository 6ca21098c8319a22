//! The difficulty ratio ρ between the auxiliary-modulus method and the
//! sparse method.
//!
//! Both methods shrink the expected wrap count by a constant factor:
//! mixing with modulus `Kq` scales it by `(1-r) + r/K`, sparse inputs by
//! (asymptotically) `2/3`. Their ratio
//! `ρ = ((1-r) + r/K) / (2/3)` tells whether a `(K, r)` cell makes training
//! as easy as sparse training; grid cells with `ρ` near 1 are where the
//! method performs best.

use serde::{Deserialize, Serialize};

/// The band around ρ = 1 highlighted on the accuracy heatmaps.
pub const RHO_BAND: (f64, f64) = (0.8, 1.2);

/// `ρ(K, r) = ((1-r) + r/K) / (2/3)`.
///
/// Ranges over `(0, 1.5]`: at `r = 0` the numerator is 1 so ρ = 1.5, and for
/// `r = 1` with large `K` it tends to 0. Strictly decreasing in `r` for
/// `K > 1` and in `K` for `r > 0`.
pub fn rho(k: u64, r: f64) -> f64 {
    assert!(k >= 2, "the auxiliary modulus needs K >= 2");
    assert!((0.0..=1.0).contains(&r), "r must lie in [0, 1]");
    ((1.0 - r) + r / k as f64) / (2.0 / 3.0)
}

/// One cell of the ρ grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RhoCell {
    pub k: u64,
    pub r: f64,
    pub rho: f64,
    /// Whether ρ lies in [`RHO_BAND`].
    pub in_band: bool,
}

/// Evaluates ρ on the full `ks × rs` grid, row-major with `k` as the row
/// axis. Panics on empty axes.
pub fn rho_heatmap(ks: &[u64], rs: &[f64]) -> Vec<RhoCell> {
    assert!(!ks.is_empty() && !rs.is_empty(), "axes must be non-empty");
    let mut cells = Vec::with_capacity(ks.len() * rs.len());
    for &k in ks {
        for &r in rs {
            let value = rho(k, r);
            cells.push(RhoCell {
                k,
                r,
                rho: value,
                in_band: (RHO_BAND.0..=RHO_BAND.1).contains(&value),
            });
        }
    }
    cells
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_match_the_advertised_range() {
        assert!((rho(2, 0.0) - 1.5).abs() < 1e-15);
        assert!((rho(9, 0.0) - 1.5).abs() < 1e-15);
        // K large, r = 1 tends to zero.
        assert!(rho(1_000_000, 1.0) < 2e-6);
    }

    #[test]
    fn direct_values() {
        // (K=4, r=0.4): (0.6 + 0.1) / (2/3) = 1.05.
        assert!((rho(4, 0.4) - 1.05).abs() < 1e-12);
        // (K=5, r=0.4): (0.6 + 0.08) / (2/3) = 1.02.
        assert!((rho(5, 0.4) - 1.02).abs() < 1e-12);
        // (K=2, r=0.1): (0.9 + 0.05) * 1.5 = 1.425.
        assert!((rho(2, 0.1) - 1.425).abs() < 1e-12);
    }

    #[test]
    fn grid_shape_and_band() {
        let ks: Vec<u64> = (4..=9).collect();
        let rs = [0.1, 0.2, 0.3, 0.4];
        let grid = rho_heatmap(&ks, &rs);
        assert_eq!(grid.len(), 24);
        // Row-major: first row is k = 4 across all r.
        assert!(grid[..4].iter().all(|c| c.k == 4));
        let cell = grid
            .iter()
            .find(|c| c.k == 5 && (c.r - 0.4).abs() < 1e-12)
            .unwrap();
        assert!(cell.in_band);
        let out = rho_heatmap(&[2], &[0.0]);
        assert!(!out[0].in_band);
        assert!((out[0].rho - 1.5).abs() < 1e-15);
    }

    #[test]
    fn monotone_in_both_axes() {
        for k in 2..=10u64 {
            for i in 1..9 {
                let r0 = i as f64 / 10.0;
                let r1 = (i + 1) as f64 / 10.0;
                assert!(rho(k, r1) < rho(k, r0), "k={k} r={r0}");
            }
        }
        for i in 1..=9 {
            let r = i as f64 / 10.0;
            for k in 2..10u64 {
                assert!(rho(k + 1, r) < rho(k, r), "k={k} r={r}");
            }
        }
    }
}
