//! Shared test support: an independent slow-reference solver for the linked
//! cell objective, and structural-model data generators.
//!
//! The reference implementation builds its own dense design rows, evaluates
//! the objective with its own arithmetic, and minimizes by a target-level
//! subgradient method. It shares no code with the production solver beyond
//! the problem definition inputs.

#![allow(dead_code)]

use escells_core::{SolverConfig, StateSequence, TimeSeries};
use nalgebra::{DMatrix, DVector};

/// Problem data for the reference solver, assembled independently. States
/// are stored flat (`cells * n` values, cell-major) for the hot loops.
pub struct DenseProblem {
    pub n: usize,
    pub cells: usize,
    /// (cell, offset into `design`, weight, target) per observed window slot.
    pub rows: Vec<(usize, usize, f64, f64)>,
    /// Flat design rows, `n` values each.
    pub design: Vec<f64>,
    pub lambda1: f64,
    pub lambda2: f64,
    pub gauge: f64,
    pub period: usize,
    /// A^(K+1) and A^K.
    pub g_mat: DMatrix<f64>,
    pub h_mat: DMatrix<f64>,
}

fn dense_structure(p: usize) -> (DMatrix<f64>, DVector<f64>, DVector<f64>) {
    let n = p + 2;
    let mut a = DMatrix::zeros(n, n);
    a[(0, 0)] = 1.0;
    a[(0, 1)] = 1.0;
    a[(1, 1)] = 1.0;
    a[(2, n - 1)] = 1.0;
    for k in 1..p {
        a[(2 + k, 1 + k)] = 1.0;
    }
    let mut w = DVector::zeros(n);
    w[0] = 1.0;
    w[1] = 1.0;
    w[n - 1] = 1.0;
    let mut b = DVector::zeros(n);
    b[2] = 1.0;
    b[3] = -1.0;
    (a, w, b)
}

impl DenseProblem {
    /// Assemble from raw inputs. `gauge` must match the production problem's
    /// gauge weight so the two sides optimize the same functional.
    pub fn build(
        ts: &TimeSeries,
        p: usize,
        k: usize,
        decay: f64,
        lambda1: f64,
        lambda2: f64,
        gauge: f64,
    ) -> Self {
        let (a, w, _) = dense_structure(p);
        let n = p + 2;
        let t_last = ts.last_index() as i64;

        // Design rows a_j = (A^T)^j w by explicit dense powers, stored flat.
        let at = a.transpose();
        let mut design: Vec<f64> = Vec::with_capacity((2 * k + 1) * n);
        let mut cur = w.clone();
        for _ in 0..=2 * k {
            design.extend_from_slice(cur.as_slice());
            cur = &at * cur;
        }

        let mut rows = Vec::new();
        for cell in 0..=t_last {
            for j in 0..=2 * k {
                let time = cell - k as i64 + j as i64;
                if time < 0 || time > t_last {
                    continue;
                }
                if let Some(y) = ts.value(time as usize) {
                    let r = j as isize - k as isize;
                    let weight = decay.powi(r.unsigned_abs() as i32);
                    rows.push((cell as usize, j * n, weight, y));
                }
            }
        }

        let mut h_mat = DMatrix::identity(n, n);
        for _ in 0..k {
            h_mat = &a * h_mat;
        }
        let g_mat = &a * &h_mat;

        Self {
            n,
            cells: (t_last + 1) as usize,
            rows,
            design,
            lambda1,
            lambda2,
            gauge,
            period: p,
            g_mat,
            h_mat,
        }
    }

    /// Objective, and when `grad` is given, the (arbitrary-selection)
    /// subgradient written into it — one fused pass.
    fn eval(&self, x: &[f64], mut grad: Option<&mut [f64]>) -> f64 {
        let n = self.n;
        if let Some(g) = grad.as_deref_mut() {
            g.fill(0.0);
        }
        let mut total = 0.0;
        for &(cell, off, weight, y) in &self.rows {
            let xs = &x[cell * n..(cell + 1) * n];
            let row = &self.design[off..off + n];
            let mut dot = 0.0;
            for i in 0..n {
                dot += row[i] * xs[i];
            }
            let res = y - dot;
            total += weight * res.abs();
            if let Some(g) = grad.as_deref_mut() {
                if res != 0.0 {
                    let s = -weight * res.signum();
                    let gs = &mut g[cell * n..(cell + 1) * n];
                    for i in 0..n {
                        gs[i] += s * row[i];
                    }
                }
            }
        }
        for cell in 0..self.cells {
            let xs = &x[cell * n..(cell + 1) * n];
            let tv = xs[2] - xs[3];
            total += self.lambda1 * tv.abs();
            let ssum: f64 = xs[2..2 + self.period].iter().sum();
            total += self.gauge * ssum * ssum;
            if let Some(g) = grad.as_deref_mut() {
                let gs = &mut g[cell * n..(cell + 1) * n];
                if tv != 0.0 {
                    let s = self.lambda1 * tv.signum();
                    gs[2] += s;
                    gs[3] -= s;
                }
                let gg = 2.0 * self.gauge * ssum;
                for i in 0..self.period {
                    gs[2 + i] += gg;
                }
            }
        }
        let gm = self.g_mat.as_slice(); // column-major n x n
        let hm = self.h_mat.as_slice();
        let mut diff = vec![0.0; n];
        for cell in 0..self.cells - 1 {
            let xa = &x[cell * n..(cell + 1) * n];
            let xb = &x[(cell + 1) * n..(cell + 2) * n];
            for r in 0..n {
                let mut v = 0.0;
                for c in 0..n {
                    v += gm[c * n + r] * xa[c] - hm[c * n + r] * xb[c];
                }
                diff[r] = v;
                total += self.lambda2 * v * v;
            }
            if let Some(g) = grad.as_deref_mut() {
                let scale = 2.0 * self.lambda2;
                for c in 0..n {
                    let mut ga = 0.0;
                    let mut gb = 0.0;
                    for r in 0..n {
                        ga += gm[c * n + r] * diff[r];
                        gb += hm[c * n + r] * diff[r];
                    }
                    g[cell * n + c] += scale * ga;
                    g[(cell + 1) * n + c] -= scale * gb;
                }
            }
        }
        total
    }

    pub fn objective(&self, x: &[DVector<f64>]) -> f64 {
        let flat = flatten(x, self.n);
        self.eval(&flat, None)
    }

    /// Crude independent initialization: per-cell local mean level.
    fn initial_point(&self) -> Vec<f64> {
        let mut sums = vec![(0.0f64, 0usize); self.cells];
        for &(cell, _, _, y) in &self.rows {
            sums[cell].0 += y;
            sums[cell].1 += 1;
        }
        let mut x = vec![0.0; self.cells * self.n];
        for (cell, (s, c)) in sums.iter().enumerate() {
            if *c > 0 {
                x[cell * self.n] = s / *c as f64;
            }
        }
        x
    }

    /// Target-level subgradient method (dynamic level with path control).
    /// Returns the best objective seen and the iterate achieving it.
    pub fn solve_reference(&self, iterations: usize) -> (f64, Vec<DVector<f64>>) {
        self.solve_reference_tuned(iterations, 0.05, 4.0, 1.5)
    }

    pub fn solve_reference_tuned(
        &self,
        iterations: usize,
        delta_frac: f64,
        budget_mult: f64,
        growth: f64,
    ) -> (f64, Vec<DVector<f64>>) {
        let dim = self.cells * self.n;
        let mut x = self.initial_point();
        let mut grad = vec![0.0; dim];
        let mut f_best = self.eval(&x, None);
        let mut x_best = x.clone();

        let delta0 = delta_frac * (1.0 + f_best);
        let mut delta = delta0;
        let path_budget = budget_mult * (1.0 + (self.cells as f64).sqrt());
        let mut path = 0.0;

        for _ in 0..iterations {
            let f_x = self.eval(&x, Some(&mut grad));
            if f_x < f_best {
                f_best = f_x;
                x_best.copy_from_slice(&x);
            }
            let gn2: f64 = grad.iter().map(|v| v * v).sum();
            if gn2 <= 1e-30 {
                break;
            }
            let f_lev = f_best - delta;
            if f_x <= f_lev {
                path = 0.0;
                delta = (delta * growth).min(delta0);
            }
            let step = (f_x - f_lev).max(0.0) / gn2;
            for (xi, gi) in x.iter_mut().zip(&grad) {
                *xi -= step * gi;
            }
            path += step * gn2.sqrt();
            if path > path_budget {
                delta *= 0.5;
                path = 0.0;
            }
        }
        let f_final = self.eval(&x, None);
        if f_final < f_best {
            f_best = f_final;
            x_best = x;
        }
        (
            f_best,
            x_best
                .chunks(self.n)
                .map(|c| DVector::from_column_slice(c))
                .collect(),
        )
    }
}

fn flatten(x: &[DVector<f64>], n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len() * n);
    for xi in x {
        out.extend_from_slice(xi.as_slice());
    }
    out
}

/// Generate observations from the structural recursion with gain
/// `(alpha, beta, gamma)` and the given innovation sequence. Returns the
/// series and the state-per-observation sequence (state `t` emits `y_t`),
/// which matches the timing of the fitted centered states.
pub fn hw_generate(
    p: usize,
    x0: &DVector<f64>,
    gains: (f64, f64, f64),
    noise: &[f64],
) -> (TimeSeries, Vec<DVector<f64>>) {
    let (a, w, _) = dense_structure(p);
    let n = p + 2;
    let mut g = DVector::zeros(n);
    g[0] = gains.0;
    g[1] = gains.1;
    g[2] = gains.2;
    let mut z = x0.clone();
    let mut values = Vec::with_capacity(noise.len());
    let mut states = Vec::with_capacity(noise.len());
    for &eps in noise {
        let y = w.dot(&z) + eps;
        states.push(z.clone());
        values.push(y);
        z = &a * z + &g * eps;
    }
    (TimeSeries::complete(values).unwrap(), states)
}

/// A zero-mean seasonal pattern of period `p`, deterministic in `seed`.
pub fn seasonal_pattern(p: usize, amplitude: f64, seed: u64) -> Vec<f64> {
    let mut state = seed.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(1);
    let mut next = move || {
        state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        ((state >> 33) as f64 / (1u64 << 32) as f64) - 0.5
    };
    let mut pattern: Vec<f64> = (0..p).map(|_| amplitude * 2.0 * next()).collect();
    let mean = pattern.iter().sum::<f64>() / p as f64;
    for v in &mut pattern {
        *v -= mean;
    }
    pattern
}

/// Initial state with the given level/trend and a zero-mean seasonal pattern.
pub fn initial_state(p: usize, level: f64, trend: f64, amplitude: f64, seed: u64) -> DVector<f64> {
    let mut x0 = DVector::zeros(p + 2);
    x0[0] = level;
    x0[1] = trend;
    for (j, v) in seasonal_pattern(p, amplitude, seed).into_iter().enumerate() {
        x0[2 + j] = v;
    }
    x0
}

/// Deterministic standard-normal-ish noise via a simple LCG + Box-Muller.
pub fn gaussian_noise(len: usize, sigma: f64, seed: u64) -> Vec<f64> {
    let mut state = seed.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(7);
    let mut uniform = move || {
        state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        ((state >> 11) as f64 / (1u64 << 53) as f64).clamp(1e-12, 1.0 - 1e-12)
    };
    (0..len)
        .map(|_| {
            let u1 = uniform();
            let u2 = uniform();
            sigma * (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        })
        .collect()
}

/// Default tight solver configuration for desk-scale comparisons.
pub fn tight_config() -> SolverConfig {
    SolverConfig {
        tolerance: 1e-8,
        max_iterations: 60_000,
        ..Default::default()
    }
}

pub fn max_state_diff(a: &StateSequence, b: &[DVector<f64>]) -> f64 {
    a.states()
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).amax())
        .fold(0.0, f64::max)
}
