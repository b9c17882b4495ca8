//! Independent reference computations shared by integration tests.
#![allow(dead_code)]

/// Gauss-Legendre rule on `[a, b]` from the 8-point table (exact to degree 15).
fn gl8(a: f64, b: f64, f: &mut dyn FnMut(f64) -> f64) -> f64 {
    const X: [f64; 4] = [
        0.183_434_642_495_649_8,
        0.525_532_409_916_329_0,
        0.796_666_477_413_626_7,
        0.960_289_856_497_536_3,
    ];
    const W: [f64; 4] = [
        0.362_683_783_378_362_0,
        0.313_706_645_877_887_3,
        0.222_381_034_453_374_5,
        0.101_228_536_290_376_3,
    ];
    let c = 0.5 * (a + b);
    let r = 0.5 * (b - a);
    let mut s = 0.0;
    for (x, w) in X.iter().zip(&W) {
        s += w * (f(c - r * x) + f(c + r * x));
    }
    s * r
}

/// Causal B-spline of order `n` by repeated convolution with the unit box,
/// `β_n(x) = ∫_0^1 β_{n-1}(x - t) dt`, splitting at the kink of the integrand.
pub fn bspline_by_convolution(order: usize, x: f64) -> f64 {
    if order == 1 {
        return if (0.0..1.0).contains(&x) { 1.0 } else { 0.0 };
    }
    if x <= 0.0 || x >= order as f64 {
        return 0.0;
    }
    let frac = x - x.floor();
    let mut total = 0.0;
    let mut inner = |t: f64| bspline_by_convolution(order - 1, x - t);
    if frac > 0.0 {
        total += gl8(0.0, frac, &mut inner);
        total += gl8(frac, 1.0, &mut inner);
    } else {
        total += gl8(0.0, 1.0, &mut inner);
    }
    total
}

/// Inverse of the centered cubic samples `(1, 4, 1) / 6` from its pole.
pub fn cubic_prefilter_by_pole(k: i64) -> f64 {
    let z = 3f64.sqrt() - 2.0;
    3f64.sqrt() * z.powi(k.unsigned_abs() as i32)
}

/// `∫ φ(x) φ(x - k) dx` by panelled quadrature on a unit-aligned grid.
pub fn autocorrelation_by_quadrature(phi: &dyn Fn(f64) -> f64, lo: f64, hi: f64, k: f64) -> f64 {
    let panels = ((hi - lo) * 2.0).round() as usize;
    let mut total = 0.0;
    for p in 0..panels {
        let a = lo + p as f64 * 0.5;
        total += gl8(a, a + 0.5, &mut |x| phi(x) * phi(x - k));
    }
    total
}

/// Composite trapezoid weights on `n` nodes with spacing `step`.
pub fn trapezoid(values: &[f64], step: f64) -> f64 {
    let n = values.len();
    let inner: f64 = values[1..n - 1].iter().sum();
    step * (inner + 0.5 * (values[0] + values[n - 1]))
}
