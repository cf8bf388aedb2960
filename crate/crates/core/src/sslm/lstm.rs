//! A plain LSTM cell with explicit forward caches and hand-written
//! backpropagation through time.
//!
//! The cell follows the standard equations — input, forget, and output
//! gates with a tanh candidate:
//!
//! ```text
//! i = σ(Wi·x + Ui·h + bi)        f = σ(Wf·x + Uf·h + bf)
//! o = σ(Wo·x + Uo·h + bo)        g = tanh(Wg·x + Ug·h + bg)
//! c = f ⊙ c_prev + i ⊙ g         h = o ⊙ tanh(c)
//! ```
//!
//! There is no autodiff anywhere: every step records the intermediate
//! activations it needs, and `backward` replays them in reverse.

use rand::Rng;

use crate::math::{add_scaled, dot, matvec_t_add, outer_add, sigmoid};

/// Gate order used throughout: input, forget, output, candidate.
pub const GATES: usize = 4;

/// Square LSTM cell: input, hidden, and cell size are all `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmCell {
    pub d: usize,
    /// Input weights per gate, each d×d.
    pub w: [Vec<Vec<f64>>; GATES],
    /// Recurrent weights per gate, each d×d.
    pub u: [Vec<Vec<f64>>; GATES],
    /// Biases per gate, each length d.
    pub b: [Vec<f64>; GATES],
}

/// Activations recorded by one forward step, consumed by `backward`.
#[derive(Debug, Clone)]
pub struct StepCache {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    gates: [Vec<f64>; GATES],
    tanh_c: Vec<f64>,
}

/// Parameter gradients with the same shapes as the cell.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmGrads {
    pub w: [Vec<Vec<f64>>; GATES],
    pub u: [Vec<Vec<f64>>; GATES],
    pub b: [Vec<f64>; GATES],
}

impl LstmGrads {
    pub fn zeros(d: usize) -> LstmGrads {
        let zm = || std::array::from_fn(|_| vec![vec![0.0; d]; d]);
        LstmGrads { w: zm(), u: zm(), b: std::array::from_fn(|_| vec![0.0; d]) }
    }
}

impl LstmCell {
    /// Seeded uniform(-0.08, 0.08) initialization.
    pub fn init(d: usize, rng: &mut impl Rng) -> LstmCell {
        let mut mat = || -> Vec<Vec<f64>> {
            (0..d).map(|_| (0..d).map(|_| rng.random_range(-0.08..0.08)).collect()).collect()
        };
        let w = std::array::from_fn(|_| mat());
        let u = std::array::from_fn(|_| mat());
        let b = std::array::from_fn(|_| vec![0.0; d]);
        LstmCell { d, w, u, b }
    }

    pub fn zeros(d: usize) -> LstmCell {
        let zm = || std::array::from_fn(|_| vec![vec![0.0; d]; d]);
        LstmCell { d, w: zm(), u: zm(), b: std::array::from_fn(|_| vec![0.0; d]) }
    }

    /// One timestep; returns the new hidden and cell states plus the cache.
    pub fn step(&self, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> (Vec<f64>, Vec<f64>, StepCache) {
        let d = self.d;
        let mut gates: [Vec<f64>; GATES] = std::array::from_fn(|_| vec![0.0; d]);
        for (gi, gate) in gates.iter_mut().enumerate() {
            for (r, slot) in gate.iter_mut().enumerate() {
                let pre = dot(&self.w[gi][r], x) + dot(&self.u[gi][r], h_prev) + self.b[gi][r];
                *slot = if gi == 3 { pre.tanh() } else { sigmoid(pre) };
            }
        }
        let [i, f, o, g] = &gates;
        let c: Vec<f64> = (0..d).map(|r| f[r] * c_prev[r] + i[r] * g[r]).collect();
        let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
        let h: Vec<f64> = (0..d).map(|r| o[r] * tanh_c[r]).collect();
        let cache = StepCache {
            x: x.to_vec(),
            h_prev: h_prev.to_vec(),
            c_prev: c_prev.to_vec(),
            gates,
            tanh_c,
        };
        (h, c, cache)
    }

    /// Run a whole sequence from zero initial states; returns the hidden
    /// states and the per-step caches.
    pub fn run(&self, xs: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<StepCache>) {
        let mut h = vec![0.0; self.d];
        let mut c = vec![0.0; self.d];
        let mut hs = Vec::with_capacity(xs.len());
        let mut caches = Vec::with_capacity(xs.len());
        for x in xs {
            let (nh, nc, cache) = self.step(x, &h, &c);
            h = nh;
            c = nc;
            hs.push(h.clone());
            caches.push(cache);
        }
        (hs, caches)
    }

    /// Backpropagation through time. `dhs[t]` is the loss gradient on the
    /// hidden state at step `t`; parameter gradients accumulate into
    /// `grads`; the return value is the gradient on each input.
    pub fn backward(&self, caches: &[StepCache], dhs: &[Vec<f64>], grads: &mut LstmGrads) -> Vec<Vec<f64>> {
        let d = self.d;
        let mut dxs = vec![vec![0.0; d]; caches.len()];
        let mut dh_carry = vec![0.0; d];
        let mut dc_carry = vec![0.0; d];
        for t in (0..caches.len()).rev() {
            let cache = &caches[t];
            let [i, f, o, g] = &cache.gates;
            let dh: Vec<f64> = (0..d).map(|r| dhs[t][r] + dh_carry[r]).collect();

            // split dh into the output gate and the cell path
            let mut dpre: [Vec<f64>; GATES] = std::array::from_fn(|_| vec![0.0; d]);
            let mut dc = vec![0.0; d];
            for r in 0..d {
                let do_r = dh[r] * cache.tanh_c[r];
                dc[r] = dh[r] * o[r] * (1.0 - cache.tanh_c[r] * cache.tanh_c[r]) + dc_carry[r];
                dpre[2][r] = do_r * o[r] * (1.0 - o[r]);
            }
            for r in 0..d {
                let di_r = dc[r] * g[r];
                let df_r = dc[r] * cache.c_prev[r];
                let dg_r = dc[r] * i[r];
                dpre[0][r] = di_r * i[r] * (1.0 - i[r]);
                dpre[1][r] = df_r * f[r] * (1.0 - f[r]);
                dpre[3][r] = dg_r * (1.0 - g[r] * g[r]);
                dc_carry[r] = dc[r] * f[r];
            }

            dh_carry = vec![0.0; d];
            for (gi, dpre_g) in dpre.iter().enumerate() {
                outer_add(&mut grads.w[gi], dpre_g, &cache.x);
                outer_add(&mut grads.u[gi], dpre_g, &cache.h_prev);
                add_scaled(&mut grads.b[gi], dpre_g, 1.0);
                matvec_t_add(&mut dxs[t], &self.w[gi], dpre_g);
                matvec_t_add(&mut dh_carry, &self.u[gi], dpre_g);
            }
        }
        dxs
    }

    /// Flatten parameters in a fixed order (w, u, b per gate); used by the
    /// optimizer step and persistence.
    pub fn for_each_param(&mut self, mut f: impl FnMut(&mut f64)) {
        for gi in 0..GATES {
            for row in &mut self.w[gi] {
                row.iter_mut().for_each(&mut f);
            }
            for row in &mut self.u[gi] {
                row.iter_mut().for_each(&mut f);
            }
            self.b[gi].iter_mut().for_each(&mut f);
        }
    }

    /// SGD step: `param -= lr * grad`, walking grads in the same order.
    pub fn apply_grads(&mut self, grads: &LstmGrads, lr: f64) {
        for gi in 0..GATES {
            for (row, grow) in self.w[gi].iter_mut().zip(&grads.w[gi]) {
                add_scaled(row, grow, -lr);
            }
            for (row, grow) in self.u[gi].iter_mut().zip(&grads.u[gi]) {
                add_scaled(row, grow, -lr);
            }
            add_scaled(&mut self.b[gi], &grads.b[gi], -lr);
        }
    }
}
