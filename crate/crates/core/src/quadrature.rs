//! Gauss-Legendre nodes and weights.

/// Nodes and weights integrating polynomials of degree < 2n exactly on [a, b].
/// Weights sum to b - a.
pub(crate) fn gauss_legendre(n: usize, a: f64, b: f64) -> Vec<(f64, f64)> {
    assert!(n >= 1, "quadrature order must be positive");
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        // Chebyshev guess, then Newton on P_n from the three-term recurrence.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let step = p / d;
            x -= step;
            if step.abs() < 1e-15 {
                let (_, d2) = legendre_with_derivative(n, x);
                dp = d2;
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push((mid - half * x, half * w));
    }
    out.sort_by(|l, r| l.0.total_cmp(&r.0));
    out
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_monomials_exactly() {
        for order in [1usize, 2, 5, 16] {
            let rule = gauss_legendre(order, 0.0, 1.0);
            for k in 0..(2 * order) {
                let got: f64 = rule.iter().map(|&(x, w)| w * x.powi(k as i32)).sum();
                let want = 1.0 / (k as f64 + 1.0);
                assert!(
                    (got - want).abs() < 1e-13,
                    "order {order}, x^{k}: got {got}, want {want}"
                );
            }
        }
    }

    #[test]
    fn weights_sum_to_interval_length() {
        let rule = gauss_legendre(7, -0.25, 0.35);
        let total: f64 = rule.iter().map(|&(_, w)| w).sum();
        assert!((total - 0.6).abs() < 1e-14);
    }

    #[test]
    fn handles_smooth_integrand() {
        let rule = gauss_legendre(16, 0.0, std::f64::consts::PI);
        let got: f64 = rule.iter().map(|&(x, w)| w * x.sin()).sum();
        assert!((got - 2.0).abs() < 1e-12, "got {got}");
    }
}
