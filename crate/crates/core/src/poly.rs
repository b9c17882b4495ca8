//! Dense monomial-basis polynomials `c[0] + c[1] t + c[2] t^2 + ...`.
//!
//! Kernel pieces are stored in local coordinates (t measured from the left
//! knot of the piece), so every helper here works on short coefficient
//! slices with small arguments.

pub fn eval(c: &[f64], t: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &ci| acc * t + ci)
}

/// n-th derivative.
pub fn derivative(c: &[f64], n: usize) -> Vec<f64> {
    if n >= c.len() {
        return vec![0.0];
    }
    (n..c.len())
        .map(|i| {
            let falling: f64 = ((i - n + 1)..=i).map(|v| v as f64).product();
            c[i] * falling
        })
        .collect()
}

/// Antiderivative vanishing at t = 0.
pub fn antiderivative(c: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(c.len() + 1);
    out.push(0.0);
    out.extend(c.iter().enumerate().map(|(i, &ci)| ci / (i as f64 + 1.0)));
    out
}

/// Integral over `[0, w]`.
pub fn integrate(c: &[f64], w: f64) -> f64 {
    eval(&antiderivative(c), w)
}

/// Coefficients of `t -> p(t + s)`.
pub fn taylor_shift(c: &[f64], s: f64) -> Vec<f64> {
    let mut out = c.to_vec();
    let n = out.len();
    // repeated synthetic division
    for i in 0..n {
        for j in (i..n.saturating_sub(1)).rev() {
            out[j] += s * out[j + 1];
        }
    }
    out
}

pub fn mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &ai) in a.iter().enumerate() {
        for (j, &bj) in b.iter().enumerate() {
            out[i + j] += ai * bj;
        }
    }
    out
}

/// Coefficients of `(a + t)^n` in powers of `t`.
pub fn binomial_power(a: f64, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n + 1];
    let mut binom = 1.0;
    for (k, o) in out.iter_mut().enumerate() {
        *o = binom * a.powi((n - k) as i32);
        binom = binom * (n - k) as f64 / (k + 1) as f64;
    }
    out
}

pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

pub fn factorial(n: usize) -> f64 {
    (1..=n).map(|v| v as f64).product()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn horner_and_derivative() {
        let c = [1.0, -2.0, 3.0];
        assert_eq!(eval(&c, 2.0), 1.0 - 4.0 + 12.0);
        assert_eq!(derivative(&c, 1), vec![-2.0, 6.0]);
        assert_eq!(derivative(&c, 2), vec![6.0]);
        assert_eq!(derivative(&c, 3), vec![0.0]);
    }

    #[test]
    fn shift_matches_direct_evaluation() {
        let c = [0.5, -1.0, 0.25, 2.0];
        let shifted = taylor_shift(&c, 0.75);
        for &t in &[-1.0, 0.0, 0.3, 1.7] {
            assert!((eval(&shifted, t) - eval(&c, t + 0.75)).abs() < 1e-12);
        }
    }

    #[test]
    fn integral_of_square() {
        assert!((integrate(&[0.0, 0.0, 1.0], 3.0) - 9.0).abs() < 1e-14);
        let p = mul(&[1.0, 1.0], &[1.0, 1.0]);
        assert_eq!(p, vec![1.0, 2.0, 1.0]);
        assert_eq!(binomial_power(2.0, 2), vec![4.0, 4.0, 1.0]);
        assert_eq!(binomial(5, 2), 10.0);
    }
}
