//! Quadrature weights.

/// Gauss-Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for i in 0..n {
        // Newton iteration on P_n from the Chebyshev-like initial guess
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes.push(0.5 * (1.0 - x));
        weights.push(0.5 * w);
    }
    (nodes, weights)
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Weights on `panels + 1` unit-spaced nodes approximating `∫_0^panels ρ(t) g(t) dt`.
///
/// The panels are split into near-equal blocks of at most `max_block`; on each
/// block `g` is replaced by its interpolant through the block nodes, so the rule
/// is exact whenever `g` restricted to a block is a polynomial of degree up to
/// the block length. `rho_degree` bounds the degree of the polynomial `ρ`.
pub fn product_weights(rho: &dyn Fn(f64) -> f64, rho_degree: usize, panels: usize, max_block: usize) -> Vec<f64> {
    let mut w = vec![0.0; panels + 1];
    if panels == 0 {
        return w;
    }
    let blocks = panels.div_ceil(max_block.max(1));
    let (base, extra) = (panels / blocks, panels % blocks);
    let mut start = 0;
    for b in 0..blocks {
        let len = base + usize::from(b < extra);
        let (gx, gw) = gauss_legendre_unit((rho_degree + len) / 2 + 1);
        for (x, wx) in gx.iter().zip(&gw) {
            let t = start as f64 + x * len as f64;
            let scale = wx * len as f64 * rho(t);
            for i in 0..=len {
                let xi = (start + i) as f64;
                let mut basis = 1.0;
                for r in 0..=len {
                    if r != i {
                        basis *= (t - (start + r) as f64) / (xi - (start + r) as f64);
                    }
                }
                w[start + i] += scale * basis;
            }
        }
        start += len;
    }
    w
}

/// Composite Simpson weights for `n` equally spaced nodes with unit spacing.
///
/// An odd panel count closes with the 3/8 rule on the last three panels.
pub fn simpson_weights(n: usize) -> Vec<f64> {
    match n {
        0 => return Vec::new(),
        1 => return vec![0.0],
        2 => return vec![0.5, 0.5],
        _ => {}
    }
    let panels = n - 1;
    let mut w = vec![0.0; n];
    let simpson_panels = if panels % 2 == 0 { panels } else { panels - 3 };
    for i in (0..simpson_panels).step_by(2) {
        w[i] += 1.0 / 3.0;
        w[i + 1] += 4.0 / 3.0;
        w[i + 2] += 1.0 / 3.0;
    }
    if panels % 2 == 1 {
        let s = simpson_panels;
        w[s] += 3.0 / 8.0;
        w[s + 1] += 9.0 / 8.0;
        w[s + 2] += 9.0 / 8.0;
        w[s + 3] += 3.0 / 8.0;
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_high_degree() {
        let (x, w) = gauss_legendre_unit(20);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        let integral: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(39)).sum();
        assert!((integral - 1.0 / 40.0).abs() < 1e-14);
    }

    #[test]
    fn product_weights_exact_for_block_polynomials() {
        let rho = |t: f64| 1.0 + t * t;
        // 10 panels in blocks of 5: exact for quintics
        let w = product_weights(&rho, 2, 10, 8);
        let g = |t: f64| t.powi(5) - 3.0 * t;
        let approx: f64 = w.iter().enumerate().map(|(q, wq)| wq * g(q as f64)).sum();
        // ∫_0^10 (1 + t²)(t⁵ - 3t) dt
        let exact = 10f64.powi(6) / 6.0 + 10f64.powi(8) / 8.0 - 1.5 * 100.0 - 0.75 * 10f64.powi(4);
        assert!((approx / exact - 1.0).abs() < 1e-13, "{approx} {exact}");
        let total: f64 = product_weights(&|_| 1.0, 0, 2, 8).iter().sum();
        assert!((total - 2.0).abs() < 1e-15);
    }

    #[test]
    fn simpson_exact_for_cubics() {
        for n in [3usize, 4, 5, 8, 11] {
            let w = simpson_weights(n);
            let len = (n - 1) as f64;
            let integral: f64 = w.iter().enumerate().map(|(i, w)| w * (i as f64).powi(3)).sum();
            assert!((integral - len.powi(4) / 4.0).abs() < 1e-10, "n = {n}");
        }
    }
}
