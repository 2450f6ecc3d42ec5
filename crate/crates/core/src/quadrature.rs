//! Gauss–Legendre quadrature nodes and weights.

/// Nodes and weights on [-1, 1], computed by Newton iteration on the
/// Legendre polynomial.  Deterministic for a given order.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "quadrature order must be at least 1");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Chebyshev-based initial guess.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// Legendre polynomial P_n and its derivative at `x`.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Nodes and weights mapped to [0, 1].
pub fn gauss_legendre_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    (
        x.iter().map(|t| 0.5 * (t + 1.0)).collect(),
        w.iter().map(|t| 0.5 * t).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn integrates_polynomials_exactly() {
        // Order n integrates degree 2n-1 exactly.
        let (x, w) = gauss_legendre_unit(4);
        let integral: f64 = x
            .iter()
            .zip(&w)
            .map(|(xi, wi)| wi * xi.powi(7))
            .sum();
        assert_relative_eq!(integral, 1.0 / 8.0, max_relative = 1e-13);
    }

    #[test]
    fn weights_sum_to_interval() {
        for n in [1, 2, 5, 8, 16, 37] {
            let (_, w) = gauss_legendre(n);
            let s: f64 = w.iter().sum();
            assert_relative_eq!(s, 2.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn integrates_smooth_function() {
        let (x, w) = gauss_legendre_unit(16);
        let integral: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.exp()).sum();
        assert_relative_eq!(integral, std::f64::consts::E - 1.0, max_relative = 1e-14);
    }
}
