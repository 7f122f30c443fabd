//! Periodic Dirichlet kernel and ULA steering vectors.

use num_complex::Complex64;
use std::f64::consts::PI;

/// Relative distance from a multiple of `X` treated as the removable singularity.
pub const XI_SINGULAR_TOL: f64 = 1e-12;

/// `Ξ_X(x) = (e^{−j2πx} − 1) / (X·e^{−j2πx/X} − X)`.
///
/// Evaluated in the equivalent form
/// `sin(πx)/(X sin(πx/X)) · e^{−jπx(1−1/X)}`, which avoids the cancellation
/// of the exponential differences near the singular points. At `x ≡ 0 (mod X)`
/// the limit is 1; at other integers the kernel is exactly 0.
pub fn dirichlet_xi(order: usize, x: f64) -> Complex64 {
    debug_assert!(order >= 1);
    let big_x = order as f64;
    let ratio = x / big_x;
    if (ratio - ratio.round()).abs() < XI_SINGULAR_TOL {
        return Complex64::new(1.0, 0.0);
    }
    if (x - x.round()).abs() < XI_SINGULAR_TOL * big_x {
        return Complex64::new(0.0, 0.0);
    }
    let mag = (PI * x).sin() / (big_x * (PI * ratio).sin());
    Complex64::from_polar(mag, -PI * x * (1.0 - 1.0 / big_x))
}

/// `|Ξ_X(x)|` without the phase.
pub fn dirichlet_xi_abs(order: usize, x: f64) -> f64 {
    let big_x = order as f64;
    let ratio = x / big_x;
    if (ratio - ratio.round()).abs() < XI_SINGULAR_TOL {
        return 1.0;
    }
    if (x - x.round()).abs() < XI_SINGULAR_TOL * big_x {
        return 0.0;
    }
    ((PI * x).sin() / (big_x * (PI * ratio).sin())).abs()
}

/// ULA response `[1, e^{j2π(d/λ)cosθ}, …]` with `len` elements.
pub fn steering_vector(theta: f64, len: usize, d_over_lambda: f64) -> Vec<Complex64> {
    let step = 2.0 * PI * d_over_lambda * theta.cos();
    (0..len)
        .map(|n| Complex64::from_polar(1.0, step * n as f64))
        .collect()
}

/// Single element `n` of [`steering_vector`].
pub fn steering_element(theta: f64, n: usize, d_over_lambda: f64) -> Complex64 {
    Complex64::from_polar(1.0, 2.0 * PI * d_over_lambda * theta.cos() * n as f64)
}
