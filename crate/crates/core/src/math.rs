//! Thin wrappers over `libm` so numerics are identical with or without `std`.

pub use core::f64::consts::PI;

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub fn powf(x: f64, y: f64) -> f64 {
    libm::pow(x, y)
}

#[inline]
pub fn powi(x: f64, n: i32) -> f64 {
    let mut acc = 1.0;
    let mut base = if n < 0 { 1.0 / x } else { x };
    let mut k = n.unsigned_abs();
    while k > 0 {
        if k & 1 == 1 {
            acc *= base;
        }
        base *= base;
        k >>= 1;
    }
    acc
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
pub fn log2(x: f64) -> f64 {
    libm::log2(x)
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
pub fn atan2(y: f64, x: f64) -> f64 {
    libm::atan2(y, x)
}

#[inline]
pub fn tgamma(x: f64) -> f64 {
    libm::tgamma(x)
}

/// Sign with `sgn(0) = 0`.
#[inline]
pub fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `|s|^p`, with `0^p = 0` for `p > 0` and `0^0 = 1`.
#[inline]
pub fn abs_pow(s: f64, p: f64) -> f64 {
    let a = s.abs();
    if a == 0.0 {
        if p == 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        powf(a, p)
    }
}

/// `|s|^{q-2} s`, the homogeneous sublinear nonlinearity (`sgn` when `q = 1`).
#[inline]
pub fn signed_pow(s: f64, q: f64) -> f64 {
    if s == 0.0 {
        0.0
    } else if q == 1.0 {
        sgn(s)
    } else {
        sgn(s) * powf(s.abs(), q - 1.0)
    }
}

/// Surface area of the unit sphere `S^{N-1}`: `2 π^{N/2} / Γ(N/2)`.
pub fn unit_sphere_area(n: usize) -> f64 {
    let half = n as f64 / 2.0;
    2.0 * powf(PI, half) / tgamma(half)
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    sqrt(dot(a, a))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_areas() {
        assert!((unit_sphere_area(1) - 2.0).abs() < 1e-14);
        assert!((unit_sphere_area(2) - 2.0 * PI).abs() < 1e-14);
        assert!((unit_sphere_area(3) - 4.0 * PI).abs() < 1e-13);
    }

    #[test]
    fn powers() {
        assert_eq!(powi(2.0, 10), 1024.0);
        assert_eq!(powi(2.0, -2), 0.25);
        assert_eq!(abs_pow(0.0, 1.5), 0.0);
        assert_eq!(signed_pow(-4.0, 1.5), -2.0);
        assert_eq!(signed_pow(-3.0, 1.0), -1.0);
        assert_eq!(signed_pow(0.0, 1.0), 0.0);
    }
}
