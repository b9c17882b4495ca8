//! Truncated multivariate Taylor arithmetic.
//!
//! A jet holds the Taylor coefficients `∂^l f(x0) / l!` for all `|l| <= order`.
//! Composition with elementary functions uses their derivatives at the
//! constant term, so exact partials of nested expressions come out of
//! ordinary arithmetic.

use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;

use crate::multiindex;

#[derive(Debug)]
pub struct JetShape {
    dim: usize,
    order: usize,
    indices: Vec<Vec<usize>>,
    lookup: HashMap<Vec<usize>, usize>,
    /// `(i, j, k)`: coefficient `i` times coefficient `j` lands on `k`.
    table: Vec<(u32, u32, u32)>,
}

impl JetShape {
    fn new(dim: usize, order: usize) -> Self {
        let indices = multiindex::up_to_order(dim, order);
        let lookup: HashMap<Vec<usize>, usize> =
            indices.iter().enumerate().map(|(i, l)| (l.clone(), i)).collect();
        let mut table = Vec::new();
        for (i, a) in indices.iter().enumerate() {
            for (j, b) in indices.iter().enumerate() {
                let sum: Vec<usize> = a.iter().zip(b).map(|(x, y)| x + y).collect();
                if let Some(&k) = lookup.get(&sum) {
                    table.push((i as u32, j as u32, k as u32));
                }
            }
        }
        JetShape {
            dim,
            order,
            indices,
            lookup,
            table,
        }
    }

    pub fn indices(&self) -> &[Vec<usize>] {
        &self.indices
    }
}

thread_local! {
    static SHAPES: RefCell<HashMap<(usize, usize), Rc<JetShape>>> = RefCell::new(HashMap::new());
}

fn shape(dim: usize, order: usize) -> Rc<JetShape> {
    SHAPES.with(|cache| {
        cache
            .borrow_mut()
            .entry((dim, order))
            .or_insert_with(|| Rc::new(JetShape::new(dim, order)))
            .clone()
    })
}

#[derive(Debug, Clone)]
pub struct Jet {
    shape: Rc<JetShape>,
    c: Vec<f64>,
}

impl Jet {
    pub fn constant(dim: usize, order: usize, value: f64) -> Self {
        let shape = shape(dim, order);
        let mut c = vec![0.0; shape.indices.len()];
        c[0] = value;
        Jet { shape, c }
    }

    /// The coordinate `x_axis` expanded at `x0`.
    pub fn variable(dim: usize, order: usize, axis: usize, x0: f64) -> Self {
        let mut out = Self::constant(dim, order, x0);
        if order >= 1 {
            let mut l = vec![0; dim];
            l[axis] = 1;
            let k = out.shape.lookup[&l];
            out.c[k] = 1.0;
        }
        out
    }

    /// All coordinates at `x`.
    pub fn point(order: usize, x: &[f64]) -> Vec<Jet> {
        (0..x.len())
            .map(|i| Self::variable(x.len(), order, i, x[i]))
            .collect()
    }

    pub fn dim(&self) -> usize {
        self.shape.dim
    }

    pub fn order(&self) -> usize {
        self.shape.order
    }

    pub fn value(&self) -> f64 {
        self.c[0]
    }

    /// `∂^l f(x0)`; zero beyond the truncation order.
    pub fn partial(&self, l: &[usize]) -> f64 {
        match self.shape.lookup.get(l) {
            Some(&k) => self.c[k] * l.iter().map(|&v| crate::poly::factorial(v)).product::<f64>(),
            None => 0.0,
        }
    }

    /// Every `∂^l f(x0)` with `|l| = n`, ordered as `multiindex::with_order`.
    pub fn partials_of_order(&self, n: usize) -> Vec<f64> {
        if n > self.shape.order {
            return vec![0.0; multiindex::with_order(self.shape.dim, n).len()];
        }
        let start = self.shape.indices.iter().position(|l| l.iter().sum::<usize>() == n).unwrap();
        self.shape.indices[start..]
            .iter()
            .zip(&self.c[start..])
            .take_while(|(l, _)| l.iter().sum::<usize>() == n)
            .map(|(l, c)| c * l.iter().map(|&v| crate::poly::factorial(v)).product::<f64>())
            .collect()
    }

    pub fn add(&self, other: &Jet) -> Jet {
        let c = self.c.iter().zip(&other.c).map(|(a, b)| a + b).collect();
        Jet {
            shape: self.shape.clone(),
            c,
        }
    }

    pub fn sub(&self, other: &Jet) -> Jet {
        let c = self.c.iter().zip(&other.c).map(|(a, b)| a - b).collect();
        Jet {
            shape: self.shape.clone(),
            c,
        }
    }

    pub fn scale(&self, s: f64) -> Jet {
        Jet {
            shape: self.shape.clone(),
            c: self.c.iter().map(|v| v * s).collect(),
        }
    }

    pub fn add_const(&self, s: f64) -> Jet {
        let mut out = self.clone();
        out.c[0] += s;
        out
    }

    pub fn mul(&self, other: &Jet) -> Jet {
        let mut c = vec![0.0; self.c.len()];
        for &(i, j, k) in &self.shape.table {
            c[k as usize] += self.c[i as usize] * other.c[j as usize];
        }
        Jet {
            shape: self.shape.clone(),
            c,
        }
    }

    /// `g(self)` given `derivs[n] = g^(n)(self.value())` for `n <= order`.
    pub fn compose(&self, derivs: &[f64]) -> Jet {
        let order = self.shape.order;
        let mut h = self.clone();
        h.c[0] = 0.0;
        let mut out = Jet::constant(self.shape.dim, order, derivs[0]);
        let mut power = Jet::constant(self.shape.dim, order, 1.0);
        let mut factorial = 1.0;
        for (n, &d) in derivs.iter().enumerate().take(order + 1).skip(1) {
            power = power.mul(&h);
            factorial *= n as f64;
            if d != 0.0 {
                for (o, p) in out.c.iter_mut().zip(&power.c) {
                    *o += d / factorial * p;
                }
            }
        }
        out
    }

    pub fn sin(&self) -> Jet {
        let (s, c) = self.value().sin_cos();
        let derivs: Vec<f64> = (0..=self.order()).map(|n| [s, c, -s, -c][n % 4]).collect();
        self.compose(&derivs)
    }

    pub fn cos(&self) -> Jet {
        let (s, c) = self.value().sin_cos();
        let derivs: Vec<f64> = (0..=self.order()).map(|n| [c, -s, -c, s][n % 4]).collect();
        self.compose(&derivs)
    }

    pub fn exp(&self) -> Jet {
        let e = self.value().exp();
        self.compose(&vec![e; self.order() + 1])
    }

    /// `self^p` for a positive constant term.
    pub fn powf(&self, p: f64) -> Jet {
        let a = self.value();
        let mut derivs = Vec::with_capacity(self.order() + 1);
        let mut coeff = 1.0;
        for n in 0..=self.order() {
            derivs.push(coeff * a.powf(p - n as f64));
            coeff *= p - n as f64;
        }
        self.compose(&derivs)
    }
}

/// Jet of the Sobolev weight `(1 + ‖x‖²)^{beta/2}` at `x`.
pub fn sobolev_weight(order: usize, x: &[f64], beta: f64) -> Jet {
    let vars = Jet::point(order, x);
    let mut s = Jet::constant(x.len(), order, 1.0);
    for v in &vars {
        s = s.add(&v.mul(v));
    }
    s.powf(beta / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_of_variables() {
        let v = Jet::point(3, &[2.0, -1.0]);
        let xy = v[0].mul(&v[1]);
        assert_eq!(xy.value(), -2.0);
        assert_eq!(xy.partial(&[1, 0]), -1.0);
        assert_eq!(xy.partial(&[0, 1]), 2.0);
        assert_eq!(xy.partial(&[1, 1]), 1.0);
        assert_eq!(xy.partial(&[2, 0]), 0.0);
    }

    #[test]
    fn sine_derivatives_cycle() {
        let x = Jet::variable(1, 6, 0, 0.7);
        let s = x.sin();
        for n in 0..=6 {
            let expected = (0.7f64 + n as f64 * std::f64::consts::FRAC_PI_2).sin();
            assert!((s.partial(&[n]) - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn weight_second_derivative() {
        // d²/dx² (1+x²)^{1/2} = (1+x²)^{-3/2}
        let w = sobolev_weight(2, &[1.5], 1.0);
        assert!((w.partial(&[2]) - (1.0f64 + 2.25).powf(-1.5)).abs() < 1e-14);
    }

    #[test]
    fn chain_rule_through_exp_sin() {
        let x = Jet::variable(1, 3, 0, 0.3);
        let f = x.sin().exp();
        let (s, c) = 0.3f64.sin_cos();
        let e = s.exp();
        assert!((f.partial(&[1]) - c * e).abs() < 1e-14);
        assert!((f.partial(&[2]) - (c * c - s) * e).abs() < 1e-14);
    }
}
