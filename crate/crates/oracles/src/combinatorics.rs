//! Exhaustive subset enumeration.

/// Counts the size-`k` subsets of `n` attempts (the first `c` successful)
/// that contain at least one success. Returns `(hits, total)`.
pub fn pass_at_k_counts(n: u32, c: u32, k: u32) -> (u64, u64) {
    assert!(n <= 20, "enumeration only for small n");
    let successes: u32 = (1u32 << c) - 1;
    let (mut hits, mut total) = (0u64, 0u64);
    for mask in 0u32..(1u32 << n) {
        if mask.count_ones() != k {
            continue;
        }
        total += 1;
        if mask & successes != 0 {
            hits += 1;
        }
    }
    (hits, total)
}

pub fn pass_at_k(n: u32, c: u32, k: u32) -> f64 {
    let (hits, total) = pass_at_k_counts(n, c, k);
    hits as f64 / total as f64
}
