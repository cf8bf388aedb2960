//! Small numeric helpers shared across training code.
//!
//! Everything is `f64`: the training loops are hand-differentiated and the
//! tests compare analytic gradients against central finite differences,
//! which needs more precision than `f32` offers.

use rand::Rng;

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow for large `|x|`.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// `ln(sigmoid(x))`, stable for large negative `x`.
pub fn log_sigmoid(x: f64) -> f64 {
    -softplus(-x)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `a += s * b`.
pub fn add_scaled(a: &mut [f64], b: &[f64], s: f64) {
    debug_assert_eq!(a.len(), b.len());
    for (x, y) in a.iter_mut().zip(b) {
        *x += s * y;
    }
}

/// Row-major matrix times vector.
pub fn matvec(w: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    w.iter().map(|row| dot(row, x)).collect()
}

/// `out += Wᵀ·v` — propagates a gradient back through `matvec`.
pub fn matvec_t_add(out: &mut [f64], w: &[Vec<f64>], v: &[f64]) {
    debug_assert_eq!(w.len(), v.len());
    for (row, &vi) in w.iter().zip(v) {
        add_scaled(out, row, vi);
    }
}

/// `m += a ⊗ b` — accumulates an outer product into a gradient matrix.
pub fn outer_add(m: &mut [Vec<f64>], a: &[f64], b: &[f64]) {
    debug_assert_eq!(m.len(), a.len());
    for (row, &ai) in m.iter_mut().zip(a) {
        add_scaled(row, b, ai);
    }
}

/// Cosine similarity; zero vectors yield 0.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot(a, b) / (na * nb)
}

/// Max-shifted softmax, replacing `xs` with the distribution.
pub fn softmax_in_place(xs: &mut [f64]) {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in xs.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in xs.iter_mut() {
        *x /= sum;
    }
}

/// Sample an index proportionally to non-negative `weights` (linear scan).
/// Weights must not all be zero.
pub fn sample_weighted(rng: &mut impl Rng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    debug_assert!(total > 0.0, "sample_weighted needs positive total weight");
    let mut x = rng.random::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        x -= w;
        if x <= 0.0 {
            return i;
        }
    }
    weights.len() - 1
}

/// Precomputed cumulative distribution for repeated weighted draws in
/// O(log n) via binary search.
#[derive(Debug, Clone)]
pub struct CumulativeTable {
    cumulative: Vec<f64>,
}

impl CumulativeTable {
    /// Build from non-negative weights with positive total.
    pub fn new(weights: &[f64]) -> CumulativeTable {
        let mut cumulative = Vec::with_capacity(weights.len());
        let mut acc = 0.0;
        for &w in weights {
            debug_assert!(w >= 0.0);
            acc += w;
            cumulative.push(acc);
        }
        debug_assert!(acc > 0.0, "CumulativeTable needs positive total weight");
        CumulativeTable { cumulative }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> usize {
        let total = *self.cumulative.last().unwrap();
        let x = rng.random::<f64>() * total;
        match self.cumulative.binary_search_by(|c| c.total_cmp(&x)) {
            Ok(i) | Err(i) => i.min(self.cumulative.len() - 1),
        }
    }
}

/// Central-difference gradient of `f` at `x`.
pub fn finite_difference_gradient(
    f: &mut impl FnMut(&[f64]) -> f64,
    x: &[f64],
    eps: f64,
) -> Vec<f64> {
    let mut point = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = point[i];
        point[i] = orig + eps;
        let up = f(&point);
        point[i] = orig - eps;
        let down = f(&point);
        point[i] = orig;
        grad.push((up - down) / (2.0 * eps));
    }
    grad
}

/// Worst relative disagreement between analytic and numeric gradients,
/// with a floor so near-zero components do not blow up the ratio.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    debug_assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-6))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sigmoid_is_stable_and_symmetric() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(800.0) <= 1.0 && sigmoid(800.0) > 0.999);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(-800.0) < 1e-300);
        for x in [-5.0, -0.3, 0.0, 1.7, 20.0] {
            assert!((sigmoid(x) + sigmoid(-x) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn log_sigmoid_matches_naive_in_safe_range() {
        for x in [-20.0, -1.0, 0.0, 2.5, 20.0] {
            let naive = sigmoid(x).ln();
            assert!((log_sigmoid(x) - naive).abs() < 1e-12);
        }
        // naive form underflows here; the stable form stays finite
        assert!((log_sigmoid(-1000.0) + 1000.0).abs() < 1e-9);
    }

    #[test]
    fn softmax_normalizes_and_shifts() {
        let mut xs = vec![1000.0, 1001.0, 999.0];
        softmax_in_place(&mut xs);
        let sum: f64 = xs.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert!(xs[1] > xs[0] && xs[0] > xs[2]);
    }

    #[test]
    fn cosine_known_values() {
        assert!((cosine(&[1.0, 0.0], &[0.0, 1.0])).abs() < 1e-12);
        assert!((cosine(&[1.0, 2.0], &[2.0, 4.0]) - 1.0).abs() < 1e-12);
        assert!((cosine(&[1.0, 0.0], &[-1.0, 0.0]) + 1.0).abs() < 1e-12);
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 1.0]), 0.0);
    }

    #[test]
    fn weighted_sampling_matches_distribution() {
        let weights = [1.0, 3.0, 6.0];
        let table = CumulativeTable::new(&weights);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut counts = [0usize; 3];
        let mut table_counts = [0usize; 3];
        let n = 100_000;
        for _ in 0..n {
            counts[sample_weighted(&mut rng, &weights)] += 1;
            table_counts[table.sample(&mut rng)] += 1;
        }
        for (c, expect) in [(counts, [0.1, 0.3, 0.6]), (table_counts, [0.1, 0.3, 0.6])]
            .iter()
            .flat_map(|(c, e)| c.iter().zip(e.iter()))
        {
            let freq = *c as f64 / n as f64;
            assert!((freq - expect).abs() < 0.01, "freq {freq} vs {expect}");
        }
    }

    #[test]
    fn finite_difference_agrees_on_quadratic() {
        // f(x) = sum(i * x_i^2) has gradient 2*i*x_i
        let mut f = |x: &[f64]| x.iter().enumerate().map(|(i, v)| i as f64 * v * v).sum();
        let x = [0.3, -1.2, 2.0, 0.0];
        let numeric = finite_difference_gradient(&mut f, &x, 1e-5);
        let analytic: Vec<f64> = x.iter().enumerate().map(|(i, v)| 2.0 * i as f64 * v).collect();
        assert!(max_relative_error(&analytic, &numeric) < 1e-8);
    }
}
