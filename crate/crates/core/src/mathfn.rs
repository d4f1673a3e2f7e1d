//! Transcendental functions routed through `libm` so that results do not
//! depend on the platform's C math library. `sqrt` is IEEE-exact and comes
//! from std.

#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub fn cos(x: f64) -> f64 {
    libm::cos(x)
}
