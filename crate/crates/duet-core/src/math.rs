//! Float helpers routed through `libm` so results do not depend on the
//! platform libm or on whether `std` is linked.

pub(crate) fn exp(x: f64) -> f64 {
    libm::exp(x)
}

pub(crate) fn ln(x: f64) -> f64 {
    libm::log(x)
}

pub(crate) fn log2(x: f64) -> f64 {
    libm::log2(x)
}

pub(crate) fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

pub(crate) fn abs(x: f64) -> f64 {
    libm::fabs(x)
}

/// Rounds half away from zero; on the non-negative domains used here this is
/// round-half-up.
pub(crate) fn round(x: f64) -> f64 {
    libm::round(x)
}

/// Pairwise summation in fixed index order: deterministic regardless of how
/// the inputs were produced, and more accurate than a running sum.
pub(crate) fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        2 => xs[0] + xs[1],
        n => {
            let mid = n / 2;
            pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
        }
    }
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    debug_assert!(!xs.is_empty());
    pairwise_sum(xs) / xs.len() as f64
}

pub(crate) fn population_variance(xs: &[f64]) -> f64 {
    debug_assert!(!xs.is_empty());
    let m = mean(xs);
    let sq: alloc::vec::Vec<f64> = xs.iter().map(|x| (x - m) * (x - m)).collect();
    pairwise_sum(&sq) / xs.len() as f64
}

pub(crate) fn population_std(xs: &[f64]) -> f64 {
    sqrt(population_variance(xs))
}
