//! Scalar helpers. `core` has no transcendental functions, so everything goes
//! through `libm` to keep results identical between `std` and bare targets.

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
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
pub fn tanh(x: f64) -> f64 {
    libm::tanh(x)
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + exp(-x))
    } else {
        let e = exp(x);
        e / (1.0 + e)
    }
}

/// Arithmetic mean; `NaN` for an empty slice.
pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population standard deviation (divides by `n`).
pub fn pop_std(xs: &[f64]) -> f64 {
    let m = mean(xs);
    let var = xs.iter().map(|&x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64;
    sqrt(var)
}

/// Population mean and standard deviation, two passes over a cloneable iterator.
pub fn mean_std<I>(xs: I) -> (f64, f64)
where
    I: Iterator<Item = f64> + Clone,
{
    let mut n = 0usize;
    let mut sum = 0.0;
    for x in xs.clone() {
        sum += x;
        n += 1;
    }
    let m = sum / n as f64;
    let var = xs.map(|x| (x - m) * (x - m)).sum::<f64>() / n as f64;
    (m, sqrt(var))
}
