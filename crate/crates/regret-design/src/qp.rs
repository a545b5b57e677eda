//! Box-constrained convex quadratic minimization.
//!
//! Every inner problem in this crate reduces to minimizing a convex
//! quadratic `q(s) = 1/2 s'Hs + g's + c` over a box `[lo, hi]`, sometimes
//! under one additional convex quadratic cap `q_c(s) <= r`. Dimensions
//! are tiny (one per experiment arm), so the workhorse is a primal
//! active-set method with exact Newton solves on the free subspace,
//! backed by a cyclic coordinate-descent polish for semidefinite corner
//! cases; for separable box constraints coordinate-wise stationarity
//! certifies the global minimum of a convex objective. The capped
//! variant dualizes the cap and bisects the multiplier, using
//! monotonicity of the cap value in the multiplier.

use nalgebra::{DMatrix, DVector};

/// First-order stationarity tolerance (relative to gradient scale).
const KKT_TOL: f64 = 1e-11;

/// Hard sweep limit; convex problems at these sizes converge far earlier.
const MAX_SWEEPS: usize = 50_000;

/// A quadratic `1/2 s'Hs + g's + c` with symmetric `H`.
#[derive(Debug, Clone)]
pub struct Quadratic {
    pub h: DMatrix<f64>,
    pub g: DVector<f64>,
    pub c: f64,
}

impl Quadratic {
    pub fn dim(&self) -> usize {
        self.g.len()
    }

    pub fn value(&self, s: &DVector<f64>) -> f64 {
        0.5 * (self.h.clone() * s).dot(s) + self.g.dot(s) + self.c
    }

    /// `self + w * other`, matching dimensions.
    pub fn add_scaled(&self, other: &Quadratic, w: f64) -> Quadratic {
        Quadratic {
            h: &self.h + &other.h * w,
            g: &self.g + &other.g * w,
            c: self.c + other.c * w,
        }
    }

    /// Restricts to the coordinates in `keep`, fixing the rest at zero.
    pub fn restrict(&self, keep: &[usize]) -> Quadratic {
        let m = keep.len();
        let mut h = DMatrix::zeros(m, m);
        let mut g = DVector::zeros(m);
        for (a, &i) in keep.iter().enumerate() {
            g[a] = self.g[i];
            for (b, &j) in keep.iter().enumerate() {
                h[(a, b)] = self.h[(i, j)];
            }
        }
        Quadratic { h, g, c: self.c }
    }
}

/// Result of a box-constrained minimization.
#[derive(Debug, Clone)]
pub struct BoxMin {
    pub s: DVector<f64>,
    pub value: f64,
}

/// Minimizes a convex quadratic over `[lo, hi]^n`.
///
/// Primal active-set method with exact solves on the free subspace
/// (dimensions here are one-per-arm, so each step is a tiny Cholesky).
/// A cyclic coordinate-descent polish runs afterwards as a safety net
/// when the active-set loop exits without certifying stationarity, which
/// keeps semidefinite corner cases correct.
pub fn minimize_box(q: &Quadratic, lo: &[f64], hi: &[f64], start: Option<&DVector<f64>>) -> BoxMin {
    let n = q.dim();
    debug_assert_eq!(lo.len(), n);
    debug_assert_eq!(hi.len(), n);
    let mut s = match start {
        Some(s0) => s0.clone(),
        None => DVector::zeros(n),
    };
    for j in 0..n {
        s[j] = s[j].clamp(lo[j], hi[j]);
    }
    if n == 0 {
        return BoxMin { s, value: q.c };
    }
    let grad_scale = {
        let gmax = q.g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let hmax = q.h.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        (gmax + hmax).max(1e-300)
    };
    let certified = active_set_loop(q, lo, hi, &mut s, grad_scale);
    if !certified {
        coordinate_descent_polish(q, lo, hi, &mut s, grad_scale);
    }
    let value = q.value(&s);
    BoxMin { s, value }
}

/// Returns true when the KKT conditions were certified.
fn active_set_loop(
    q: &Quadratic,
    lo: &[f64],
    hi: &[f64],
    s: &mut DVector<f64>,
    grad_scale: f64,
) -> bool {
    let n = q.dim();
    let bound_tol = |j: usize| 1e-14 * (hi[j] - lo[j]).abs().max(1.0);
    // 0 = free, -1 = at lower, +1 = at upper.
    let mut state: Vec<i8> = (0..n)
        .map(|j| {
            if (s[j] - lo[j]).abs() <= bound_tol(j) {
                -1
            } else if (s[j] - hi[j]).abs() <= bound_tol(j) {
                1
            } else {
                0
            }
        })
        .collect();
    let max_iters = 30 * n + 60;
    for _ in 0..max_iters {
        let free: Vec<usize> = (0..n).filter(|&j| state[j] == 0).collect();
        let grad = &q.h * &*s + &q.g;
        // Newton direction on the free subspace.
        let mut step = DVector::zeros(n);
        let mut step_norm = 0.0f64;
        if !free.is_empty() {
            let m = free.len();
            let mut h_ff = DMatrix::zeros(m, m);
            let mut g_f = DVector::zeros(m);
            for (a, &i) in free.iter().enumerate() {
                g_f[a] = grad[i];
                for (b, &j) in free.iter().enumerate() {
                    h_ff[(a, b)] = q.h[(i, j)];
                }
            }
            let d_f = solve_spd(&h_ff, &(-&g_f));
            for (a, &i) in free.iter().enumerate() {
                step[i] = d_f[a];
                step_norm = step_norm.max(d_f[a].abs());
            }
        }
        if step_norm <= 1e-14 {
            // Stationary on the free set: examine bound multipliers.
            let mut release: Option<(usize, f64)> = None;
            for j in 0..n {
                let viol = match state[j] {
                    -1 => (-grad[j]).max(0.0),
                    1 => grad[j].max(0.0),
                    _ => 0.0,
                };
                let worst_so_far = release.map_or(0.0, |(_, best)| best);
                if viol > KKT_TOL * grad_scale && viol > worst_so_far {
                    release = Some((j, viol));
                }
            }
            match release {
                None => return true,
                Some((j, _)) => {
                    state[j] = 0;
                    continue;
                }
            }
        }
        // Ratio test along the step.
        let mut alpha = 1.0f64;
        let mut blocking: Option<(usize, i8)> = None;
        for &j in &free {
            if step[j] > 0.0 {
                let room = (hi[j] - s[j]) / step[j];
                if room < alpha {
                    alpha = room.max(0.0);
                    blocking = Some((j, 1));
                }
            } else if step[j] < 0.0 {
                let room = (lo[j] - s[j]) / step[j];
                if room < alpha {
                    alpha = room.max(0.0);
                    blocking = Some((j, -1));
                }
            }
        }
        for &j in &free {
            s[j] = (s[j] + alpha * step[j]).clamp(lo[j], hi[j]);
        }
        if let Some((j, side)) = blocking {
            s[j] = if side == 1 { hi[j] } else { lo[j] };
            state[j] = side;
        }
    }
    false
}

/// Solves `H d = b` for symmetric positive semidefinite `H`, escalating a
/// diagonal ridge when the factorization fails. The ridge only perturbs
/// flat directions, so objective values stay accurate.
fn solve_spd(h: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = h.nrows();
    let scale = h.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    let mut ridge = 0.0;
    for attempt in 0..8 {
        let mut hh = h.clone();
        if ridge > 0.0 {
            for j in 0..n {
                hh[(j, j)] += ridge;
            }
        }
        if let Some(chol) = hh.cholesky() {
            return chol.solve(b);
        }
        ridge = scale * 1e-14 * 10f64.powi(attempt);
    }
    // Last resort: least-squares via SVD.
    h.clone().svd(true, true).solve(b, 1e-300).unwrap_or_else(|_| DVector::zeros(n))
}

fn coordinate_descent_polish(
    q: &Quadratic,
    lo: &[f64],
    hi: &[f64],
    s: &mut DVector<f64>,
    grad_scale: f64,
) {
    let n = q.dim();
    let mut hs = &q.h * &*s;
    for _ in 0..MAX_SWEEPS {
        let mut moved = 0.0f64;
        for j in 0..n {
            let hjj = q.h[(j, j)];
            let target = if hjj <= 0.0 {
                let gj = hs[j] - hjj * s[j] + q.g[j];
                if gj > 0.0 {
                    lo[j]
                } else {
                    hi[j]
                }
            } else {
                (s[j] - (hs[j] + q.g[j]) / hjj).clamp(lo[j], hi[j])
            };
            let delta = target - s[j];
            if delta != 0.0 {
                hs += q.h.column(j) * delta;
                s[j] = target;
                moved = moved.max(delta.abs());
            }
        }
        if moved <= 1e-16 && kkt_residual(q, s, lo, hi, &hs) <= KKT_TOL * grad_scale {
            break;
        }
    }
}

fn kkt_residual(
    q: &Quadratic,
    s: &DVector<f64>,
    lo: &[f64],
    hi: &[f64],
    hs: &DVector<f64>,
) -> f64 {
    let mut res = 0.0f64;
    for j in 0..q.dim() {
        let gj = hs[j] + q.g[j];
        let width = hi[j] - lo[j];
        let viol = if width <= 0.0 {
            0.0
        } else if s[j] <= lo[j] + 1e-14 * width.max(1.0) {
            (-gj).max(0.0)
        } else if s[j] >= hi[j] - 1e-14 * width.max(1.0) {
            gj.max(0.0)
        } else {
            gj.abs()
        };
        res = res.max(viol);
    }
    res
}

/// Minimizes `obj` over the box subject to `cap(s) <= r`.
///
/// Returns `None` when even the cap's box minimum exceeds `r` (the
/// constraint set is empty). Otherwise solves via bisection on the
/// Lagrange multiplier: the cap value at the penalized minimizer is
/// nonincreasing in the multiplier.
pub fn minimize_box_capped(
    obj: &Quadratic,
    cap: &Quadratic,
    r: f64,
    lo: &[f64],
    hi: &[f64],
) -> Option<BoxMin> {
    let feas_tol = 1e-12 * r.abs().max(1.0);
    let unconstrained = minimize_box(obj, lo, hi, None);
    if cap.value(&unconstrained.s) <= r + feas_tol {
        return Some(unconstrained);
    }
    let cap_min = minimize_box(cap, lo, hi, Some(&unconstrained.s));
    let cap_floor = cap.value(&cap_min.s);
    if cap_floor > r + feas_tol {
        return None;
    }
    // Bracket the multiplier.
    let mut lam_lo = 0.0f64;
    let mut lam_hi = 1.0f64;
    let mut warm = unconstrained.s.clone();
    let mut best_feasible: Option<BoxMin> = None;
    for _ in 0..200 {
        let pen = obj.add_scaled(cap, lam_hi);
        let m = minimize_box(&pen, lo, hi, Some(&warm));
        warm = m.s.clone();
        if cap.value(&m.s) <= r + feas_tol {
            best_feasible = Some(BoxMin {
                value: obj.value(&m.s),
                s: m.s,
            });
            break;
        }
        lam_lo = lam_hi;
        lam_hi *= 4.0;
    }
    best_feasible.as_ref()?;
    for _ in 0..200 {
        if lam_hi - lam_lo <= 1e-15 * lam_hi {
            break;
        }
        let lam = 0.5 * (lam_lo + lam_hi);
        let pen = obj.add_scaled(cap, lam);
        let m = minimize_box(&pen, lo, hi, Some(&warm));
        warm = m.s.clone();
        if cap.value(&m.s) <= r + feas_tol {
            lam_hi = lam;
            best_feasible = Some(BoxMin {
                value: obj.value(&m.s),
                s: m.s,
            });
        } else {
            lam_lo = lam;
        }
    }
    best_feasible
}
