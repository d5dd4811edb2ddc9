// Float helpers that `core` does not provide without std.

#[inline]
pub(crate) fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub(crate) fn sin(x: f64) -> f64 {
    libm::sin(x)
}

#[inline]
pub(crate) fn abs(x: f64) -> f64 {
    libm::fabs(x)
}

/// Infinity norm of a slice; 0 for an empty slice.
pub(crate) fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, &x| m.max(abs(x)))
}

#[inline]
pub(crate) fn exp(x: f64) -> f64 {
    libm::exp(x)
}
