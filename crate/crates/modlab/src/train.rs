//! Training loop (stub).
