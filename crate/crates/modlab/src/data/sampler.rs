//! Samplers for the uniform and sparse input distributions, and label
//! synthesis under both moduli.

use super::{
    Distribution, InputVector, LabeledExample, ModulusKind, SparseFill, TrainingTarget,
};
use crate::problem::ProblemSpec;
use crate::rng::{domain, stream};
use rand::Rng;

/// Draws each entry i.i.d. uniform on `{0, ..., q-1}`.
pub fn sample_uniform<R: Rng>(spec: &ProblemSpec, rng: &mut R) -> InputVector {
    let entries = (0..spec.n).map(|_| rng.gen_range(0..spec.q) as u32).collect();
    InputVector { entries }
}

/// The unnormalized weights `w(z) = 1/sqrt(N - z + 1)` for `z` in `{1..N}`.
pub fn sparse_weights(n: usize) -> Vec<f64> {
    (1..=n).map(|z| 1.0 / ((n - z + 1) as f64).sqrt()).collect()
}

/// Draws a sparse input: the number of populated positions `z` is sampled
/// with weight `1/sqrt(N - z + 1)` on `{1..N}`, `z` positions are chosen
/// uniformly without replacement and filled i.i.d. (from `{0..q-1}` or
/// `{1..q-1}` depending on `fill`), and the rest are set to zero.
pub fn sample_sparse<R: Rng>(spec: &ProblemSpec, rng: &mut R, fill: SparseFill) -> InputVector {
    let n = spec.n;
    let weights = sparse_weights(n);
    let total: f64 = weights.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    let mut z = n;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            z = i + 1;
            break;
        }
        u -= w;
    }

    // Partial Fisher-Yates: the first z slots end up holding the chosen
    // positions.
    let mut positions: Vec<usize> = (0..n).collect();
    for i in 0..z {
        let j = rng.gen_range(i..n);
        positions.swap(i, j);
    }

    let mut entries = vec![0u32; n];
    for &pos in &positions[..z] {
        entries[pos] = match fill {
            SparseFill::IncludeZero => rng.gen_range(0..spec.q) as u32,
            SparseFill::NonZero => rng.gen_range(1..spec.q) as u32,
        };
    }
    InputVector { entries }
}

/// Computes the primary label and quotient: `y_q = Σx_i mod q` and
/// `c = floor(Σx_i / q)`, so `c*q + y_q` reconstructs the sum exactly.
pub fn make_labels(x: InputVector, q: u64) -> LabeledExample {
    let total = x.total();
    LabeledExample {
        x,
        y_q: total % q,
        quotient: total / q,
    }
}

/// The auxiliary label `f_Kq(x) = (c*q + y_q) mod Kq`, reconstructed from
/// the stored quotient rather than the raw entries.
pub fn aux_label(example: &LabeledExample, q: u64, k: u64) -> u64 {
    example.total(q) % (k * q)
}

/// Draws the per-example training target: the auxiliary label with
/// probability `r`, the primary label otherwise.
pub fn select_target<R: Rng>(
    example: &LabeledExample,
    spec: &ProblemSpec,
    rng: &mut R,
) -> TrainingTarget {
    if rng.gen::<f64>() < spec.r {
        TrainingTarget {
            value: aux_label(example, spec.q, spec.k),
            modulus_kind: ModulusKind::AuxiliaryKq,
        }
    } else {
        TrainingTarget {
            value: example.y_q,
            modulus_kind: ModulusKind::PrimaryQ,
        }
    }
}

const SHARD: u64 = 1 << 16;

/// Generates `count` labeled examples from the given distribution.
///
/// Generation is sharded over substreams of `(seed, DATA, shard)`, so
/// identical `(spec, distribution, count, seed)` always produce identical
/// datasets, shard by shard.
pub fn generate_examples(
    spec: &ProblemSpec,
    distribution: Distribution,
    count: u64,
    seed: u64,
) -> Vec<LabeledExample> {
    let mut examples = Vec::with_capacity(count as usize);
    let shards = count.div_ceil(SHARD);
    for shard in 0..shards {
        let mut rng = stream(seed, domain::DATA, shard);
        let in_shard = SHARD.min(count - shard * SHARD);
        for _ in 0..in_shard {
            let x = match distribution {
                Distribution::Uniform => sample_uniform(spec, &mut rng),
                Distribution::Sparse { fill } => sample_sparse(spec, &mut rng, fill),
            };
            examples.push(make_labels(x, spec.q));
        }
    }
    examples
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(n: usize, q: u64) -> ProblemSpec {
        ProblemSpec::new(n, q, 2, 0.0).unwrap()
    }

    #[test]
    fn labels_reconstruct_the_sum() {
        let q = 31;
        let x = InputVector::new(vec![30; 8], q).unwrap();
        let ex = make_labels(x, q);
        assert_eq!(ex.y_q, 23); // 240 - 7*31
        assert_eq!(ex.quotient, 7);
        assert_eq!(ex.total(q), 240);

        let x = InputVector::new(vec![96, 1], 97).unwrap();
        let ex = make_labels(x, 97);
        assert_eq!(ex.y_q, 0);
        assert_eq!(ex.quotient, 1);

        let x = InputVector::new(vec![0; 4], 7).unwrap();
        let ex = make_labels(x, 7);
        assert_eq!((ex.y_q, ex.quotient), (0, 0));
    }

    #[test]
    fn aux_label_wraps_the_reconstructed_sum() {
        let x = InputVector::new(vec![30; 8], 31).unwrap();
        let ex = make_labels(x, 31);
        assert_eq!(aux_label(&ex, 31, 5), 240 % 155);
        // Congruence: the auxiliary label reduces to the primary one.
        assert_eq!(aux_label(&ex, 31, 5) % 31, ex.y_q);
        // Sum below q: unchanged by any K.
        let small = make_labels(InputVector::new(vec![1, 2], 31).unwrap(), 31);
        assert_eq!(aux_label(&small, 31, 5), small.y_q);
    }

    #[test]
    fn select_target_degenerate_rates() {
        let mut rng = stream(1, domain::TARGET, 0);
        let ex = make_labels(InputVector::new(vec![30; 8], 31).unwrap(), 31);
        let always_primary = ProblemSpec::new(8, 31, 5, 0.0).unwrap();
        let always_aux = ProblemSpec::new(8, 31, 5, 1.0).unwrap();
        for _ in 0..100 {
            let t = select_target(&ex, &always_primary, &mut rng);
            assert_eq!(t.modulus_kind, ModulusKind::PrimaryQ);
            assert_eq!(t.value, ex.y_q);
            let t = select_target(&ex, &always_aux, &mut rng);
            assert_eq!(t.modulus_kind, ModulusKind::AuxiliaryKq);
            assert_eq!(t.value, 85);
        }
    }

    #[test]
    fn sparse_single_position() {
        let spec = spec(1, 31);
        let mut rng = stream(2, domain::DATA, 0);
        for _ in 0..50 {
            let x = sample_sparse(&spec, &mut rng, SparseFill::IncludeZero);
            assert_eq!(x.len(), 1);
        }
    }

    #[test]
    fn sparse_nonzero_fill_has_exactly_z_nonzeros() {
        let spec = spec(8, 31);
        let mut rng = stream(3, domain::DATA, 0);
        for _ in 0..200 {
            let x = sample_sparse(&spec, &mut rng, SparseFill::NonZero);
            let nonzero = x.entries().iter().filter(|&&v| v != 0).count();
            assert!((1..=8).contains(&nonzero));
        }
    }

    #[test]
    fn uniform_entries_in_range() {
        let spec = spec(16, 7);
        let mut rng = stream(4, domain::DATA, 0);
        for _ in 0..100 {
            let x = sample_uniform(&spec, &mut rng);
            assert!(x.entries().iter().all(|&v| (v as u64) < 7));
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = spec(8, 31);
        let a = generate_examples(&spec, Distribution::Uniform, 1000, 7);
        let b = generate_examples(&spec, Distribution::Uniform, 1000, 7);
        assert_eq!(a, b);
        let c = generate_examples(&spec, Distribution::Uniform, 1000, 8);
        assert_ne!(a, c);
    }
}
