//! Scalar functions routed through `libm` so results do not depend on the
//! platform's libm and the crate builds without `std`.

pub const LN_2PI: f64 = 1.837_877_066_409_345_3;

#[inline]
pub fn tanh(x: f64) -> f64 {
    libm::tanh(x)
}
#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}
#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}
#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}
#[inline]
pub fn sin(x: f64) -> f64 {
    libm::sin(x)
}
#[inline]
pub fn cos(x: f64) -> f64 {
    libm::cos(x)
}
#[inline]
pub fn atanh(x: f64) -> f64 {
    libm::atanh(x)
}
#[inline]
pub fn floor(x: f64) -> f64 {
    libm::floor(x)
}
