//! Small dense-vector kernels on `f64` slices.
//!
//! Everything here runs sequentially in index order so results are
//! reproducible bit for bit.

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut s = 0.0;
    for i in 0..a.len() {
        s += a[i] * b[i];
    }
    s
}

#[inline]
pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    norm_sq(a).sqrt()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn scale(alpha: f64, x: &mut [f64]) {
    for v in x.iter_mut() {
        *v *= alpha;
    }
}

/// `a - b`
pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// `a + alpha * b`
pub fn add_scaled(a: &[f64], alpha: f64, b: &[f64]) -> Vec<f64> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x + alpha * y).collect()
}

pub fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut s = 0.0;
    for i in 0..a.len() {
        let d = a[i] - b[i];
        s += d * d;
    }
    s
}

pub fn all_finite(a: &[f64]) -> bool {
    a.iter().all(|v| v.is_finite())
}

pub fn is_zero(a: &[f64]) -> bool {
    a.iter().all(|&v| v == 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basic_kernels() {
        let a = [1.0, -2.0, 2.0];
        let b = [0.5, 1.0, 0.0];
        assert_eq!(dot(&a, &b), -1.5);
        assert_eq!(norm(&a), 3.0);
        assert_eq!(norm_inf(&a), 2.0);
        assert_eq!(sub(&a, &b), vec![0.5, -3.0, 2.0]);
        assert_eq!(add_scaled(&a, 2.0, &b), vec![2.0, 0.0, 2.0]);
        assert_eq!(dist_sq(&a, &b), 0.25 + 9.0 + 4.0);
        let mut y = b.to_vec();
        axpy(-1.0, &b, &mut y);
        assert!(is_zero(&y));
    }
}
