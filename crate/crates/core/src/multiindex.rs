//! Enumeration helpers for multi-indices and integer lattice boxes.

/// All multi-indices `l` in `N^dim` with `|l| = order`, in lexicographic order.
pub fn with_order(dim: usize, order: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current = vec![0usize; dim];
    fill(dim, order, 0, &mut current, &mut out);
    out
}

fn fill(dim: usize, remaining: usize, axis: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if dim == 0 {
        if remaining == 0 {
            out.push(Vec::new());
        }
        return;
    }
    if axis == dim - 1 {
        current[axis] = remaining;
        out.push(current.clone());
        return;
    }
    for v in (0..=remaining).rev() {
        current[axis] = v;
        fill(dim, remaining - v, axis + 1, current, out);
    }
    current[axis] = 0;
}

/// All multi-indices with `|l| <= order`.
pub fn up_to_order(dim: usize, order: usize) -> Vec<Vec<usize>> {
    (0..=order).flat_map(|n| with_order(dim, n)).collect()
}

/// Multinomial coefficient `|l|! / (l_1! ... l_d!)`.
pub fn multinomial(l: &[usize]) -> f64 {
    let total: usize = l.iter().sum();
    let mut out = crate::poly::factorial(total);
    for &li in l {
        out /= crate::poly::factorial(li);
    }
    out
}

/// Every integer point of `[-radius, radius]^dim`, first axis varying slowest.
pub fn lattice_box(dim: usize, radius: i64) -> Vec<Vec<i64>> {
    let side = (2 * radius + 1) as usize;
    let count = side.pow(dim as u32);
    (0..count)
        .map(|mut flat| {
            let mut k = vec![0i64; dim];
            for axis in (0..dim).rev() {
                k[axis] = (flat % side) as i64 - radius;
                flat /= side;
            }
            k
        })
        .collect()
}
