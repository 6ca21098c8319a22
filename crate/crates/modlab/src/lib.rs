//! A laboratory for learning modular addition with small transformers.
//!
//! The task: given a sequence `x = [x_1, ..., x_N]` with entries in
//! `{0, ..., q-1}`, predict `f_q(x) = (x_1 + ... + x_N) mod q`. What makes
//! the task hard is the wrap around the modulus: the running sum crosses
//! multiples of `q` many times, and a single input change can move the
//! answer anywhere in `{0, ..., q-1}`.
//!
//! The crate has two halves that check each other:
//!
//! * [`analytics`] computes every closed-form quantity about the sum
//!   `S_N = x_1 + ... + x_N` exactly, with arbitrary-precision rationals:
//!   the distribution of `S_N`, expected wrap counts, bounds, and the
//!   zero-free generalization-gap prefactor `(1 - 1/q)^N`.
//! * [`data`], [`autodiff`], [`model`], [`train`] and [`eval`] implement the
//!   learning pipeline: input samplers (uniform and sparse), a tape-based
//!   reverse-mode autodiff engine, an encoder-only transformer with token or
//!   dual-angular embeddings, an AdamW training loop with auxiliary-modulus
//!   target mixing, and the evaluation metrics (match accuracy, τ-accuracy,
//!   zero-count stratification).
//!
//! The training method at the center of the crate replaces the label
//! `f_q(x)` with `f_{Kq}(x)` with probability `r` during training. The
//! enlarged modulus `Kq` wraps less often, which eases optimization, while
//! the input distribution stays uniform — so there is no covariate shift
//! between training and testing. See the guide in `book/` for the full
//! story.

pub mod analytics;
pub mod autodiff;
pub mod data;
pub mod eval;
pub mod model;
pub mod problem;
pub mod rng;
pub mod train;
pub mod util;

pub use problem::ProblemSpec;

#[cfg(doctest)]
mod book {
    //! Keeps the guide's code snippets honest: every fenced Rust block in
    //! `book/src/*.md` is compiled and run as a doc-test.
    macro_rules! chapter {
        ($name:ident, $path:literal) => {
            #[doc = include_str!($path)]
            mod $name {}
        };
    }

    chapter!(ch01_task, "../../../book/src/the-task.md");
    chapter!(ch02_sum_distribution, "../../../book/src/sum-distribution.md");
    chapter!(ch03_wraps, "../../../book/src/wrap-counts.md");
    chapter!(ch04_sparse_gap, "../../../book/src/sparse-inputs-and-the-gap.md");
    chapter!(ch05_difficulty, "../../../book/src/difficulty-ratio.md");
    chapter!(ch06_data, "../../../book/src/datasets.md");
    chapter!(ch07_autodiff, "../../../book/src/autodiff.md");
    chapter!(ch08_model, "../../../book/src/model.md");
    chapter!(ch09_training, "../../../book/src/training.md");
    chapter!(ch10_evaluation, "../../../book/src/evaluation.md");
}
