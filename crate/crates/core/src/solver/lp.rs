//! Bounded dual simplex on an explicit dense basis inverse.
//!
//! Each row `r` gets a slack `s_r` with `a_r x + s_r = b_r`; the slack is
//! `>= 0` for `<=` rows, `<= 0` for `>=` rows and fixed at 0 for equalities.
//! Structural variables are always boxed (infinite bounds are replaced by
//! [`ARTIFICIAL_BOUND`]), so the all-slack basis is dual feasible for any
//! cost vector and bound changes never break dual feasibility.

use std::time::Instant;

use crate::milp::{MilpModel, ObjectiveSense, Sense};

pub const ARTIFICIAL_BOUND: f64 = 1e6;
const PIVOT_TOL: f64 = 1e-9;
const DUAL_TOL: f64 = 1e-9;
const REFACTOR_EVERY: usize = 400;
const BLAND_AFTER: usize = 50;
const NONBASIC: usize = usize::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum LpOutcome {
    Optimal,
    Infeasible,
    /// Dual objective exceeded the cutoff.
    Cutoff,
    /// Deadline or cancellation.
    Aborted,
    Numerical,
}

pub(crate) struct Limits<'a> {
    pub deadline: Option<Instant>,
    pub cancel: Option<&'a std::sync::atomic::AtomicBool>,
    pub cutoff: f64,
}

impl Limits<'_> {
    pub fn none() -> Self {
        Limits { deadline: None, cancel: None, cutoff: f64::INFINITY }
    }

    pub fn expired(&self) -> bool {
        self.deadline.is_some_and(|d| Instant::now() >= d)
            || self.cancel.is_some_and(|c| c.load(std::sync::atomic::Ordering::Relaxed))
    }
}

pub(crate) struct DualSimplex {
    m: usize,
    n: usize,
    cols: Vec<Vec<(usize, f64)>>,
    rhs: Vec<f64>,
    /// Minimization costs over structurals then slacks.
    cost: Vec<f64>,
    lo: Vec<f64>,
    up: Vec<f64>,
    artificial_lo: Vec<bool>,
    artificial_up: Vec<bool>,
    binv: Vec<f64>,
    basis: Vec<usize>,
    pos: Vec<usize>,
    x: Vec<f64>,
    d: Vec<f64>,
    feas_tol: f64,
    since_refactor: usize,
    pub iterations: u64,
    rho: Vec<f64>,
    alpha_row: Vec<f64>,
    alpha_col: Vec<f64>,
}

impl DualSimplex {
    /// Relaxation of `model` (binaries become `[0, 1]` continuous). Costs are
    /// negated for maximization.
    pub fn new(model: &MilpModel, feas_tol: f64) -> Self {
        let n = model.n_vars();
        let rows: Vec<_> = model.rows.iter().filter(|r| !r.terms.is_empty()).collect();
        let m = rows.len();
        let mut cols = vec![Vec::new(); n];
        let mut rhs = Vec::with_capacity(m);
        let mut lo = Vec::with_capacity(n + m);
        let mut up = Vec::with_capacity(n + m);
        for (r, row) in rows.iter().enumerate() {
            for &(j, a) in &row.terms {
                cols[j].push((r, a));
            }
            rhs.push(row.rhs);
        }
        let sign = if model.sense == ObjectiveSense::Maximize { -1.0 } else { 1.0 };
        let mut cost: Vec<f64> = model.objective.iter().map(|c| sign * c).collect();
        cost.resize(n + m, 0.0);
        let mut artificial_lo = vec![false; n];
        let mut artificial_up = vec![false; n];
        for (j, v) in model.vars.iter().enumerate() {
            artificial_lo[j] = !v.lower.is_finite();
            artificial_up[j] = !v.upper.is_finite();
            lo.push(if v.lower.is_finite() { v.lower } else { -ARTIFICIAL_BOUND });
            up.push(if v.upper.is_finite() { v.upper } else { ARTIFICIAL_BOUND });
        }
        for row in &rows {
            let (l, u) = match row.sense {
                Sense::Le => (0.0, f64::INFINITY),
                Sense::Ge => (f64::NEG_INFINITY, 0.0),
                Sense::Eq => (0.0, 0.0),
            };
            lo.push(l);
            up.push(u);
        }
        let mut lp = DualSimplex {
            m,
            n,
            cols,
            rhs,
            cost,
            lo,
            up,
            artificial_lo,
            artificial_up,
            binv: Vec::new(),
            basis: Vec::new(),
            pos: Vec::new(),
            x: vec![0.0; n + m],
            d: Vec::new(),
            feas_tol,
            since_refactor: 0,
            iterations: 0,
            rho: vec![0.0; m],
            alpha_row: vec![0.0; n + m],
            alpha_col: vec![0.0; m],
        };
        lp.cold_start();
        lp
    }

    /// Resets to the all-slack basis.
    fn cold_start(&mut self) {
        let (n, m) = (self.n, self.m);
        self.binv = vec![0.0; m * m];
        for r in 0..m {
            self.binv[r * m + r] = 1.0;
        }
        self.basis = (n..n + m).collect();
        self.pos = vec![NONBASIC; n + m];
        for r in 0..m {
            self.pos[n + r] = r;
        }
        self.d = self.cost.clone();
        for j in 0..n {
            self.x[j] = if self.d[j] >= 0.0 { self.lo[j] } else { self.up[j] };
        }
        self.since_refactor = 0;
        self.recompute_xb();
    }

    /// Replaces the structural bounds and re-seats nonbasic structurals on
    /// the bound matching their reduced-cost sign.
    pub fn set_bounds(&mut self, lo: &[f64], up: &[f64]) {
        self.recompute_duals();
        for j in 0..self.n {
            self.lo[j] = if lo[j].is_finite() { lo[j] } else { -ARTIFICIAL_BOUND };
            self.up[j] = if up[j].is_finite() { up[j] } else { ARTIFICIAL_BOUND };
            if self.pos[j] == NONBASIC {
                self.x[j] = self.seat(j);
            }
        }
        self.recompute_xb();
    }

    fn seat(&self, j: usize) -> f64 {
        if self.d[j] > DUAL_TOL {
            self.lo[j]
        } else if self.d[j] < -DUAL_TOL {
            self.up[j]
        } else if (self.x[j] - self.up[j]).abs() < (self.x[j] - self.lo[j]).abs() {
            self.up[j]
        } else {
            self.lo[j]
        }
    }

    fn recompute_xb(&mut self) {
        let m = self.m;
        let mut t = self.rhs.clone();
        for j in 0..self.n + m {
            if self.pos[j] != NONBASIC || self.x[j] == 0.0 {
                continue;
            }
            if j < self.n {
                for &(r, a) in &self.cols[j] {
                    t[r] -= a * self.x[j];
                }
            } else {
                t[j - self.n] -= self.x[j];
            }
        }
        for r in 0..m {
            let row = &self.binv[r * m..(r + 1) * m];
            let v: f64 = row.iter().zip(&t).map(|(a, b)| a * b).sum();
            self.x[self.basis[r]] = v;
        }
    }

    fn recompute_duals(&mut self) {
        let m = self.m;
        let mut y = vec![0.0; m];
        for r in 0..m {
            let c = self.cost[self.basis[r]];
            if c != 0.0 {
                let row = &self.binv[r * m..(r + 1) * m];
                for (yk, b) in y.iter_mut().zip(row) {
                    *yk += c * b;
                }
            }
        }
        for j in 0..self.n + m {
            if self.pos[j] != NONBASIC {
                self.d[j] = 0.0;
            } else if j < self.n {
                self.d[j] = self.cost[j] - self.cols[j].iter().map(|&(r, a)| y[r] * a).sum::<f64>();
            } else {
                self.d[j] = self.cost[j] - y[j - self.n];
            }
        }
    }

    /// Rebuilds the inverse from the basis columns. Returns false if the basis
    /// is numerically singular.
    fn refactor(&mut self) -> bool {
        let m = self.m;
        let w = 2 * m;
        let mut aug = vec![0.0; m * w];
        for (k, &j) in self.basis.iter().enumerate() {
            if j < self.n {
                for &(r, a) in &self.cols[j] {
                    aug[r * w + k] = a;
                }
            } else {
                aug[(j - self.n) * w + k] = 1.0;
            }
        }
        for r in 0..m {
            aug[r * w + m + r] = 1.0;
        }
        for k in 0..m {
            let (mut p, mut best) = (k, 0.0);
            for r in k..m {
                let v = aug[r * w + k].abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if best < 1e-11 {
                return false;
            }
            if p != k {
                for c in 0..w {
                    aug.swap(p * w + c, k * w + c);
                }
            }
            let piv = aug[k * w + k];
            for c in 0..w {
                aug[k * w + c] /= piv;
            }
            let pivot_row: Vec<(usize, f64)> =
                (0..w).filter_map(|c| (aug[k * w + c] != 0.0).then(|| (c, aug[k * w + c]))).collect();
            for r in 0..m {
                if r == k {
                    continue;
                }
                let f = aug[r * w + k];
                if f != 0.0 {
                    for &(c, v) in &pivot_row {
                        aug[r * w + c] -= f * v;
                    }
                }
            }
        }
        for r in 0..m {
            self.binv[r * m..(r + 1) * m].copy_from_slice(&aug[r * w + m..(r + 1) * w]);
        }
        self.since_refactor = 0;
        true
    }

    pub fn objective(&self) -> f64 {
        self.cost.iter().zip(&self.x).map(|(c, x)| c * x).sum()
    }

    pub fn values(&self) -> &[f64] {
        &self.x[..self.n]
    }

    /// Whether some structural with an infinite model bound sits on its
    /// artificial bound.
    pub fn hits_artificial_bound(&self) -> bool {
        (0..self.n).any(|j| {
            (self.artificial_up[j] && self.x[j] >= ARTIFICIAL_BOUND * (1.0 - 1e-9))
                || (self.artificial_lo[j] && self.x[j] <= -ARTIFICIAL_BOUND * (1.0 - 1e-9))
        })
    }

    fn infeasibility(&self, j: usize) -> f64 {
        let v = self.x[j];
        if v < self.lo[j] - self.feas_tol {
            self.lo[j] - v
        } else if v > self.up[j] + self.feas_tol {
            v - self.up[j]
        } else {
            0.0
        }
    }

    /// Restores dual feasibility by flipping boxed nonbasics; false if a
    /// half-bounded slack has the wrong reduced-cost sign.
    fn repair_dual(&mut self) -> bool {
        let mut changed = false;
        for j in 0..self.n + self.m {
            if self.pos[j] != NONBASIC || self.lo[j] == self.up[j] {
                continue;
            }
            let at_lo = self.x[j] == self.lo[j];
            if at_lo && self.d[j] < -DUAL_TOL {
                if !self.up[j].is_finite() {
                    return false;
                }
                self.x[j] = self.up[j];
                changed = true;
            } else if !at_lo && self.d[j] > DUAL_TOL {
                if !self.lo[j].is_finite() {
                    return false;
                }
                self.x[j] = self.lo[j];
                changed = true;
            }
        }
        if changed {
            self.recompute_xb();
        }
        true
    }

    pub fn solve(&mut self, limits: &Limits<'_>) -> LpOutcome {
        let mut attempts = 0;
        loop {
            let outcome = self.iterate(limits);
            if outcome != LpOutcome::Optimal {
                return outcome;
            }
            // verify from scratch
            self.recompute_xb();
            self.recompute_duals();
            let primal_ok = (0..self.m).all(|r| self.infeasibility(self.basis[r]) == 0.0);
            let dual_ok = (0..self.n + self.m).all(|j| {
                self.pos[j] != NONBASIC
                    || self.lo[j] == self.up[j]
                    || (self.x[j] == self.lo[j] && self.d[j] >= -DUAL_TOL * 100.0)
                    || (self.x[j] == self.up[j] && self.d[j] <= DUAL_TOL * 100.0)
            });
            if primal_ok && dual_ok {
                return LpOutcome::Optimal;
            }
            attempts += 1;
            if attempts > 3 {
                return LpOutcome::Numerical;
            }
            if attempts == 3 || !self.refactor() {
                self.cold_start();
            } else {
                self.recompute_xb();
                self.recompute_duals();
                if !self.repair_dual() {
                    self.cold_start();
                }
            }
        }
    }

    fn iterate(&mut self, limits: &Limits<'_>) -> LpOutcome {
        let (n, m) = (self.n, self.m);
        let mut best_obj = f64::NEG_INFINITY;
        let mut stall = 0usize;
        loop {
            if self.iterations % 32 == 0 && limits.expired() {
                return LpOutcome::Aborted;
            }
            let obj = self.objective();
            if obj > limits.cutoff {
                return LpOutcome::Cutoff;
            }
            if obj > best_obj + 1e-12 {
                best_obj = obj;
                stall = 0;
            } else {
                stall += 1;
            }
            let bland = stall > BLAND_AFTER;

            // leaving row
            let mut r_out = NONBASIC;
            let mut worst = 0.0;
            for r in 0..m {
                let inf = self.infeasibility(self.basis[r]);
                if inf > 0.0 {
                    if bland {
                        if r_out == NONBASIC || self.basis[r] < self.basis[r_out] {
                            r_out = r;
                        }
                    } else if inf > worst {
                        worst = inf;
                        r_out = r;
                    }
                }
            }
            if r_out == NONBASIC {
                return LpOutcome::Optimal;
            }
            let leaving = self.basis[r_out];
            let to_lower = self.x[leaving] < self.lo[leaving];

            // pivot row
            self.rho.copy_from_slice(&self.binv[r_out * m..(r_out + 1) * m]);
            // fixed nonbasics stay in the row so their reduced costs are kept current
            for j in 0..n + m {
                if self.pos[j] != NONBASIC {
                    self.alpha_row[j] = 0.0;
                    continue;
                }
                self.alpha_row[j] =
                    if j < n { self.cols[j].iter().map(|&(r, a)| self.rho[r] * a).sum() } else { self.rho[j - n] };
            }

            // ratio test: x_leaving = beta - sum alpha_j x_j
            let eligible = |a: f64, at_lo: bool| -> bool {
                if to_lower {
                    (at_lo && a < 0.0) || (!at_lo && a > 0.0)
                } else {
                    (at_lo && a > 0.0) || (!at_lo && a < 0.0)
                }
            };
            // reduced cost magnitude on the dual-feasible side
            let slack = |d: f64, at_lo: bool| if at_lo { d.max(0.0) } else { (-d).max(0.0) };
            let mut entering = NONBASIC;
            if bland {
                let mut best = f64::INFINITY;
                for j in 0..n + m {
                    let a = self.alpha_row[j];
                    let at_lo = self.x[j] == self.lo[j];
                    if a.abs() <= PIVOT_TOL || self.lo[j] == self.up[j] || !eligible(a, at_lo) {
                        continue;
                    }
                    let ratio = slack(self.d[j], at_lo) / a.abs();
                    if ratio < best - 1e-12 {
                        best = ratio;
                        entering = j;
                    }
                }
            } else {
                let mut bound = f64::INFINITY;
                for j in 0..n + m {
                    let a = self.alpha_row[j];
                    let at_lo = self.x[j] == self.lo[j];
                    if a.abs() <= PIVOT_TOL || self.lo[j] == self.up[j] || !eligible(a, at_lo) {
                        continue;
                    }
                    bound = bound.min((slack(self.d[j], at_lo) + DUAL_TOL) / a.abs());
                }
                let mut best_a = 0.0;
                for j in 0..n + m {
                    let a = self.alpha_row[j];
                    let at_lo = self.x[j] == self.lo[j];
                    if a.abs() <= PIVOT_TOL || self.lo[j] == self.up[j] || !eligible(a, at_lo) {
                        continue;
                    }
                    if slack(self.d[j], at_lo) / a.abs() <= bound && a.abs() > best_a {
                        best_a = a.abs();
                        entering = j;
                    }
                }
            }
            if entering == NONBASIC {
                return LpOutcome::Infeasible;
            }

            // pivot column
            let q = entering;
            self.alpha_col.fill(0.0);
            if q < n {
                for &(k, a) in &self.cols[q] {
                    for r in 0..m {
                        self.alpha_col[r] += self.binv[r * m + k] * a;
                    }
                }
            } else {
                for r in 0..m {
                    self.alpha_col[r] = self.binv[r * m + (q - n)];
                }
            }
            let piv = self.alpha_col[r_out];
            if (piv - self.alpha_row[q]).abs() > 1e-7 * (1.0 + piv.abs()) || piv.abs() <= PIVOT_TOL {
                if !self.refactor() {
                    self.cold_start();
                } else {
                    self.recompute_xb();
                    self.recompute_duals();
                    if !self.repair_dual() {
                        self.cold_start();
                    }
                }
                self.iterations += 1;
                continue;
            }

            // primal update
            let target = if to_lower { self.lo[leaving] } else { self.up[leaving] };
            let delta = (self.x[leaving] - target) / piv;
            for r in 0..m {
                let a = self.alpha_col[r];
                if a != 0.0 {
                    self.x[self.basis[r]] -= a * delta;
                }
            }
            self.x[q] += delta;
            self.x[leaving] = target;

            // dual update
            let ratio = self.d[q] / piv;
            for j in 0..n + m {
                let a = self.alpha_row[j];
                if a != 0.0 {
                    self.d[j] -= ratio * a;
                }
            }
            self.d[q] = 0.0;
            self.d[leaving] = -ratio;

            // inverse update
            let prow: Vec<f64> = self.binv[r_out * m..(r_out + 1) * m].iter().map(|v| v / piv).collect();
            let nz: Vec<usize> = (0..m).filter(|&k| prow[k] != 0.0).collect();
            // dense rows vectorize better than the index walk
            let dense = nz.len() * 4 > m;
            for r in 0..m {
                if r == r_out {
                    continue;
                }
                let f = self.alpha_col[r];
                if f != 0.0 {
                    let row = &mut self.binv[r * m..(r + 1) * m];
                    if dense {
                        for (b, p) in row.iter_mut().zip(&prow) {
                            *b -= f * p;
                        }
                    } else {
                        for &k in &nz {
                            row[k] -= f * prow[k];
                        }
                    }
                }
            }
            self.binv[r_out * m..(r_out + 1) * m].copy_from_slice(&prow);

            self.basis[r_out] = q;
            self.pos[q] = r_out;
            self.pos[leaving] = NONBASIC;
            self.iterations += 1;
            self.since_refactor += 1;
            if self.since_refactor >= REFACTOR_EVERY {
                if self.refactor() {
                    self.recompute_xb();
                    self.recompute_duals();
                } else {
                    self.cold_start();
                }
            }
        }
    }
}
