//! Projection of the graph embedding and the combination gate.
//!
//! The integrated graph embedding is 2d-dimensional; a fully connected
//! layer first reduces it to d. The gate then mixes the projected graph
//! view with the textual embedding, componentwise:
//!
//! ```text
//! P = σ(W_P·[G_proj, T] + b_P)      N = P ⊙ T + (1 − P) ⊙ G_proj
//! ```
//!
//! so each coordinate of `N` interpolates between the textual and the
//! graph signal with a learned, input-dependent preference.

use rand::Rng;

use crate::math::{add_scaled, matvec, matvec_t_add, outer_add, sigmoid};
use crate::sslm::SslmError;

/// Fully connected 2d→d reduction applied to the graph embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    /// d×2d weight matrix.
    pub w: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

/// Gate parameters: a d×2d matrix over the concatenated `[G_proj, T]`
/// plus a bias.
#[derive(Debug, Clone, PartialEq)]
pub struct GateParams {
    pub w: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

/// Gradients for any (matrix, bias) pair of this module's shape.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearGrads {
    pub w: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

impl LinearGrads {
    pub fn zeros(rows: usize, cols: usize) -> LinearGrads {
        LinearGrads { w: vec![vec![0.0; cols]; rows], b: vec![0.0; rows] }
    }
}

fn init_linear(rows: usize, cols: usize, rng: &mut impl Rng) -> (Vec<Vec<f64>>, Vec<f64>) {
    let w = (0..rows)
        .map(|_| (0..cols).map(|_| rng.random_range(-0.08..0.08)).collect())
        .collect();
    (w, vec![0.0; rows])
}

impl Projection {
    pub fn init(d: usize, rng: &mut impl Rng) -> Projection {
        let (w, b) = init_linear(d, 2 * d, rng);
        Projection { w, b }
    }

    pub fn forward(&self, g_raw: &[f64]) -> Result<Vec<f64>, SslmError> {
        if g_raw.len() != self.w[0].len() {
            return Err(SslmError::DimensionMismatch(format!(
                "projection expects input {}, got {}",
                self.w[0].len(),
                g_raw.len()
            )));
        }
        let mut out = matvec(&self.w, g_raw);
        add_scaled(&mut out, &self.b, 1.0);
        Ok(out)
    }
}

impl GateParams {
    pub fn init(d: usize, rng: &mut impl Rng) -> GateParams {
        let (w, b) = init_linear(d, 2 * d, rng);
        GateParams { w, b }
    }
}

/// Gate output `N` for one position.
pub fn gate_forward(
    g_proj: &[f64],
    t: &[f64],
    params: &GateParams,
) -> Result<Vec<f64>, SslmError> {
    let (n, _) = gate_forward_cached(g_proj, t, params)?;
    Ok(n)
}

/// Everything the backward pass needs about one gate evaluation.
#[derive(Debug, Clone)]
pub struct GateCache {
    pub g_proj: Vec<f64>,
    pub t: Vec<f64>,
    pub p: Vec<f64>,
}

pub fn gate_forward_cached(
    g_proj: &[f64],
    t: &[f64],
    params: &GateParams,
) -> Result<(Vec<f64>, GateCache), SslmError> {
    let d = params.b.len();
    if g_proj.len() != d || t.len() != d || params.w[0].len() != 2 * d {
        return Err(SslmError::DimensionMismatch(format!(
            "gate expects two {d}-vectors, got {} and {}",
            g_proj.len(),
            t.len()
        )));
    }
    let mut concat = Vec::with_capacity(2 * d);
    concat.extend_from_slice(g_proj);
    concat.extend_from_slice(t);
    let p: Vec<f64> = (0..d)
        .map(|r| sigmoid(crate::math::dot(&params.w[r], &concat) + params.b[r]))
        .collect();
    let n: Vec<f64> = (0..d).map(|r| p[r] * t[r] + (1.0 - p[r]) * g_proj[r]).collect();
    Ok((n, GateCache { g_proj: g_proj.to_vec(), t: t.to_vec(), p }))
}

/// Backward through the gate: accumulates parameter gradients and returns
/// `(dG_proj, dT)`.
pub fn gate_backward(
    params: &GateParams,
    cache: &GateCache,
    dn: &[f64],
    grads: &mut LinearGrads,
) -> (Vec<f64>, Vec<f64>) {
    let d = params.b.len();
    let mut dg_proj = vec![0.0; d];
    let mut dt = vec![0.0; d];
    let mut dpre = vec![0.0; d];
    for r in 0..d {
        dg_proj[r] = dn[r] * (1.0 - cache.p[r]);
        dt[r] = dn[r] * cache.p[r];
        let dp = dn[r] * (cache.t[r] - cache.g_proj[r]);
        dpre[r] = dp * cache.p[r] * (1.0 - cache.p[r]);
    }
    let mut concat = Vec::with_capacity(2 * d);
    concat.extend_from_slice(&cache.g_proj);
    concat.extend_from_slice(&cache.t);
    outer_add(&mut grads.w, &dpre, &concat);
    add_scaled(&mut grads.b, &dpre, 1.0);
    let mut dconcat = vec![0.0; 2 * d];
    matvec_t_add(&mut dconcat, &params.w, &dpre);
    for r in 0..d {
        dg_proj[r] += dconcat[r];
        dt[r] += dconcat[d + r];
    }
    (dg_proj, dt)
}

/// Forward cache for the whole input path (projection then gate).
#[derive(Debug, Clone)]
pub struct InputCache {
    pub g_raw: Vec<f64>,
    pub gate: GateCache,
}

/// N for one character: project the raw 2d graph embedding, then gate it
/// against the textual embedding.
pub fn input_forward(
    proj: &Projection,
    gate: &GateParams,
    g_raw: &[f64],
    t: &[f64],
) -> Result<(Vec<f64>, InputCache), SslmError> {
    let g_proj = proj.forward(g_raw)?;
    let (n, gate_cache) = gate_forward_cached(&g_proj, t, gate)?;
    Ok((n, InputCache { g_raw: g_raw.to_vec(), gate: gate_cache }))
}

/// Backward through gate and projection. The raw graph and textual
/// embeddings are frozen inputs, so their gradients are discarded (which
/// also means the projection weights are not needed here).
pub fn input_backward(
    gate: &GateParams,
    cache: &InputCache,
    dn: &[f64],
    proj_grads: &mut LinearGrads,
    gate_grads: &mut LinearGrads,
) {
    let (dg_proj, _dt) = gate_backward(gate, &cache.gate, dn, gate_grads);
    outer_add(&mut proj_grads.w, &dg_proj, &cache.g_raw);
    add_scaled(&mut proj_grads.b, &dg_proj, 1.0);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::{dot, finite_difference_gradient, max_relative_error};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn zero_gate(d: usize) -> GateParams {
        GateParams { w: vec![vec![0.0; 2 * d]; d], b: vec![0.0; d] }
    }

    #[test]
    fn zero_parameters_average_the_inputs() {
        let params = zero_gate(3);
        let g = vec![1.0, -2.0, 0.5];
        let t = vec![0.0, 4.0, 0.5];
        let n = gate_forward(&g, &t, &params).unwrap();
        for r in 0..3 {
            assert!((n[r] - (g[r] + t[r]) / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn hand_case_matches() {
        // W = 0, b = (ln 3, 0), G = (1, 0), T = (0, 1):
        // P = (σ(ln 3), σ(0)) = (0.75, 0.5), N = (0.25, 0.5)
        let mut params = zero_gate(2);
        params.b[0] = 3.0f64.ln();
        let (n, cache) = gate_forward_cached(&[1.0, 0.0], &[0.0, 1.0], &params).unwrap();
        assert!((cache.p[0] - 0.75).abs() < 1e-12);
        assert!((cache.p[1] - 0.5).abs() < 1e-12);
        assert!((n[0] - 0.25).abs() < 1e-12);
        assert!((n[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn saturated_bias_selects_one_input() {
        let d = 2;
        let g = vec![-3.0, 7.0];
        let t = vec![5.0, -1.0];
        let mut to_t = zero_gate(d);
        to_t.b = vec![50.0; d];
        let n = gate_forward(&g, &t, &to_t).unwrap();
        for r in 0..d {
            assert!((n[r] - t[r]).abs() < 1e-9);
        }
        let mut to_g = zero_gate(d);
        to_g.b = vec![-50.0; d];
        let n = gate_forward(&g, &t, &to_g).unwrap();
        for r in 0..d {
            assert!((n[r] - g[r]).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_dimension_mismatch() {
        let params = zero_gate(3);
        assert!(matches!(
            gate_forward(&[1.0, 2.0], &[0.0; 3], &params),
            Err(SslmError::DimensionMismatch(_))
        ));
        let proj = Projection { w: vec![vec![0.0; 4]; 2], b: vec![0.0; 2] };
        assert!(proj.forward(&[1.0; 3]).is_err());
    }

    proptest! {
        #[test]
        fn gate_output_stays_between_inputs(
            g in proptest::collection::vec(-5.0f64..5.0, 4),
            t in proptest::collection::vec(-5.0f64..5.0, 4),
            bias in proptest::collection::vec(-3.0f64..3.0, 4),
            wrow in proptest::collection::vec(-1.0f64..1.0, 8),
        ) {
            let params = GateParams { w: vec![wrow; 4], b: bias };
            let (n, cache) = gate_forward_cached(&g, &t, &params).unwrap();
            for r in 0..4 {
                prop_assert!(cache.p[r] > 0.0 && cache.p[r] < 1.0);
                let (lo, hi) = (g[r].min(t[r]), g[r].max(t[r]));
                prop_assert!(n[r] >= lo - 1e-12 && n[r] <= hi + 1e-12);
            }
        }
    }

    #[test]
    fn input_path_gradients_match_finite_differences() {
        let d = 4;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..25 {
            let proj = Projection::init(d, &mut rng);
            let mut gate = GateParams::init(d, &mut rng);
            for b in gate.b.iter_mut() {
                *b = rng.random_range(-0.5..0.5);
            }
            let g_raw: Vec<f64> = (0..2 * d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let t: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let r: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();

            let loss = |proj: &Projection, gate: &GateParams| -> f64 {
                let (n, _) = input_forward(proj, gate, &g_raw, &t).unwrap();
                dot(&n, &r)
            };

            let (_, cache) = input_forward(&proj, &gate, &g_raw, &t).unwrap();
            let mut pg = LinearGrads::zeros(d, 2 * d);
            let mut gg = LinearGrads::zeros(d, 2 * d);
            input_backward(&gate, &cache, &r, &mut pg, &mut gg);

            // gate bias
            let numeric_b = finite_difference_gradient(
                &mut |b: &[f64]| {
                    let mut g2 = gate.clone();
                    g2.b = b.to_vec();
                    loss(&proj, &g2)
                },
                &gate.b,
                1e-5,
            );
            assert!(max_relative_error(&gg.b, &numeric_b) < 1e-4);

            // gate weights, one flattened pass
            let flat_w: Vec<f64> = gate.w.iter().flatten().copied().collect();
            let analytic_w: Vec<f64> = gg.w.iter().flatten().copied().collect();
            let numeric_w = finite_difference_gradient(
                &mut |w: &[f64]| {
                    let mut g2 = gate.clone();
                    for (row, chunk) in g2.w.iter_mut().zip(w.chunks(2 * d)) {
                        row.copy_from_slice(chunk);
                    }
                    loss(&proj, &g2)
                },
                &flat_w,
                1e-5,
            );
            assert!(max_relative_error(&analytic_w, &numeric_w) < 1e-4);

            // projection weights and bias
            let flat_p: Vec<f64> = proj.w.iter().flatten().chain(proj.b.iter()).copied().collect();
            let analytic_p: Vec<f64> = pg.w.iter().flatten().chain(pg.b.iter()).copied().collect();
            let numeric_p = finite_difference_gradient(
                &mut |p: &[f64]| {
                    let mut p2 = proj.clone();
                    let (wpart, bpart) = p.split_at(2 * d * d);
                    for (row, chunk) in p2.w.iter_mut().zip(wpart.chunks(2 * d)) {
                        row.copy_from_slice(chunk);
                    }
                    p2.b.copy_from_slice(bpart);
                    loss(&p2, &gate)
                },
                &flat_p,
                1e-5,
            );
            assert!(max_relative_error(&analytic_p, &numeric_p) < 1e-4);
        }
    }
}
