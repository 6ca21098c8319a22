//! Finite-difference verification of the reverse-mode gradients.

use super::{Graph, NodeId, Tensor};

/// Outcome of a gradient check.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub tol: f64,
    /// Total number of elements compared.
    pub compared: usize,
    /// `(input index, element index)` of the worst disagreement.
    pub worst: Option<(usize, usize)>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err.is_finite() && self.max_rel_err <= self.tol
    }
}

/// Compares the reverse-mode gradient of a scalar-valued function against
/// central finite differences at `points`, element by element.
///
/// Runs in `f64`; the step is `1e-5` scaled by the element's magnitude. A
/// non-finite value anywhere fails the check.
pub fn grad_check<F>(f: F, points: &[Tensor<f64>], tol: f64) -> GradCheckReport
where
    F: Fn(&mut Graph<f64>, &[NodeId]) -> NodeId,
{
    // Analytic gradients.
    let mut graph = Graph::new();
    let ids: Vec<NodeId> = points
        .iter()
        .map(|t| graph.input(t.clone(), true))
        .collect();
    let loss = f(&mut graph, &ids);
    assert_eq!(graph.value(loss).len(), 1, "grad_check needs a scalar loss");
    graph.backward(loss);
    let analytic: Vec<Vec<f64>> = ids
        .iter()
        .map(|&id| graph.grad(id).expect("input gradient").to_vec())
        .collect();

    let eval = |points: &[Tensor<f64>]| -> f64 {
        let mut graph = Graph::new();
        let ids: Vec<NodeId> = points
            .iter()
            .map(|t| graph.input(t.clone(), false))
            .collect();
        let loss = f(&mut graph, &ids);
        graph.scalar_value(loss)
    };

    let mut max_rel_err = 0.0f64;
    let mut worst = None;
    let mut compared = 0usize;
    let mut workspace: Vec<Tensor<f64>> = points.to_vec();
    for (pi, point) in points.iter().enumerate() {
        for ei in 0..point.len() {
            let x = point.data()[ei];
            let h = 1e-5 * x.abs().max(1.0);
            workspace[pi].data_mut()[ei] = x + h;
            let up = eval(&workspace);
            workspace[pi].data_mut()[ei] = x - h;
            let down = eval(&workspace);
            workspace[pi].data_mut()[ei] = x;

            let fd = (up - down) / (2.0 * h);
            let ad = analytic[pi][ei];
            let rel = if ad.is_finite() && fd.is_finite() {
                (ad - fd).abs() / ad.abs().max(fd.abs()).max(1e-6)
            } else {
                f64::INFINITY
            };
            compared += 1;
            if rel > max_rel_err {
                max_rel_err = rel;
                worst = Some((pi, ei));
            }
        }
    }
    GradCheckReport {
        max_rel_err,
        tol,
        compared,
        worst,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{domain, stream};
    use rand::Rng;

    fn random_tensor(shape: Vec<usize>, seed: u64, scale: f64) -> Tensor<f64> {
        let mut rng = stream(seed, domain::STATS, 0);
        Tensor::from_fn(shape, |_| (rng.gen::<f64>() * 2.0 - 1.0) * scale)
    }

    #[test]
    fn matmul_sum_gradient() {
        let a = random_tensor(vec![4, 4], 1, 1.0);
        let b = random_tensor(vec![4, 4], 2, 1.0);
        let report = grad_check(
            |g, ids| {
                let c = g.matmul(ids[0], ids[1]);
                g.sum(c)
            },
            &[a, b],
            1e-6,
        );
        assert!(report.passed(), "max rel err {}", report.max_rel_err);
    }

    #[test]
    fn cross_entropy_through_everything() {
        let logits = random_tensor(vec![3, 10], 3, 2.0);
        let report = grad_check(
            |g, ids| g.cross_entropy(ids[0], &[1, 7, 3]),
            &[logits],
            1e-5,
        );
        assert!(report.passed(), "max rel err {}", report.max_rel_err);
    }

    #[test]
    fn fan_out_accumulates() {
        // f(x) = mse(x + x, 0) has gradient 8x/len; fan-out must double, not
        // overwrite.
        let x = Tensor::new(vec![1, 3], vec![1.0, -2.0, 0.5]);
        let mut g = Graph::new();
        let id = g.input(x.clone(), true);
        let doubled = g.add(id, id);
        let zeros = g.constant(Tensor::zeros(vec![1, 3]));
        let loss = g.mse(doubled, zeros);
        g.backward(loss);
        let grad = g.grad(id).unwrap();
        for (gi, xi) in grad.iter().zip(x.data()) {
            let expected: f64 = 8.0 * xi / 3.0;
            assert!((gi - expected).abs() < 1e-10, "{gi} vs {expected}");
        }
    }
}
