//! Two-phase revised simplex applied to the dual of the standardized problem.
//!
//! The models here have many more rows than columns, so the dual has a basis
//! the size of the primal variable count. Primal values are read off the
//! simplex multipliers of the dual.

use log::debug;

use super::{Direction, LinearProgram, LpSolution, LpStatus, Sense, SolverOptions};
use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-9;
const REFACTOR_EVERY: usize = 100;
const STALL_LIMIT: usize = 60;

#[derive(Debug, Clone, Copy)]
enum VarMap {
    /// `x = lower + x'`.
    Shift(usize, f64),
    /// `x = upper - x'`.
    Reflect(usize, f64),
    /// `x = x+ - x-`.
    Split(usize, usize),
}

/// `max c x  s.t.  A x <= b, x >= 0` with rows scaled to unit max coefficient.
struct Standard {
    rows: Vec<Vec<(usize, f64)>>,
    b: Vec<f64>,
    c: Vec<f64>,
    maps: Vec<VarMap>,
    /// Original row index and multiplier for each standard row; bound rows carry `None`.
    origin: Vec<Option<(usize, f64)>>,
    trivially_infeasible: bool,
}

fn standardize(lp: &LinearProgram, opts: &SolverOptions) -> Standard {
    let sgn = match lp.direction {
        Direction::Maximize => 1.0,
        Direction::Minimize => -1.0,
    };
    let mut maps = Vec::with_capacity(lp.variables.len());
    let mut c = Vec::new();
    let mut bound_rows: Vec<(usize, f64)> = Vec::new();
    for (j, v) in lp.variables.iter().enumerate() {
        let cj = sgn * lp.objective[j];
        if v.lower.is_finite() {
            let col = c.len();
            c.push(cj);
            maps.push(VarMap::Shift(col, v.lower));
            if v.upper.is_finite() {
                bound_rows.push((col, v.upper - v.lower));
            }
        } else if v.upper.is_finite() {
            let col = c.len();
            c.push(-cj);
            maps.push(VarMap::Reflect(col, v.upper));
        } else {
            let col = c.len();
            c.push(cj);
            c.push(-cj);
            maps.push(VarMap::Split(col, col + 1));
        }
    }
    let mut st = Standard { rows: Vec::new(), b: Vec::new(), c, maps, origin: Vec::new(), trivially_infeasible: false };
    let push = |st: &mut Standard, mut coefs: Vec<(usize, f64)>, rhs: f64, origin: Option<(usize, f64)>| {
        coefs.retain(|&(_, a)| a != 0.0);
        let scale = coefs.iter().fold(0.0f64, |m, &(_, a)| m.max(a.abs()));
        if scale == 0.0 {
            if rhs < -opts.feasibility_tol {
                st.trivially_infeasible = true;
            }
            return;
        }
        for e in coefs.iter_mut() {
            e.1 /= scale;
        }
        st.rows.push(coefs);
        st.b.push(rhs / scale);
        st.origin.push(origin.map(|(r, m)| (r, m / scale)));
    };
    for (r, row) in lp.rows.iter().enumerate() {
        let mut coefs: Vec<(usize, f64)> = Vec::with_capacity(row.coefficients.len() + 1);
        let mut rhs = row.rhs;
        for &(j, a) in &row.coefficients {
            match st.maps[j] {
                VarMap::Shift(col, l) => {
                    coefs.push((col, a));
                    rhs -= a * l;
                }
                VarMap::Reflect(col, u) => {
                    coefs.push((col, -a));
                    rhs -= a * u;
                }
                VarMap::Split(p, n) => {
                    coefs.push((p, a));
                    coefs.push((n, -a));
                }
            }
        }
        coefs = merge(coefs);
        let neg: Vec<(usize, f64)> = coefs.iter().map(|&(j, a)| (j, -a)).collect();
        match row.sense {
            Sense::Le => push(&mut st, coefs, rhs, Some((r, 1.0))),
            Sense::Ge => push(&mut st, neg, -rhs, Some((r, -1.0))),
            Sense::Eq => {
                push(&mut st, coefs, rhs, Some((r, 1.0)));
                push(&mut st, neg, -rhs, Some((r, -1.0)));
            }
        }
    }
    for (col, width) in bound_rows {
        push(&mut st, vec![(col, 1.0)], width, None);
    }
    st
}

fn merge(mut coefs: Vec<(usize, f64)>) -> Vec<(usize, f64)> {
    coefs.sort_by_key(|e| e.0);
    let mut out: Vec<(usize, f64)> = Vec::with_capacity(coefs.len());
    for (j, a) in coefs {
        match out.last_mut() {
            Some(last) if last.0 == j => last.1 += a,
            _ => out.push((j, a)),
        }
    }
    out
}

#[derive(Debug, PartialEq)]
enum Outcome {
    Optimal,
    Unbounded,
}

/// Revised simplex on `min b y  s.t.  A^T y - s = c,  y, s >= 0`.
struct DualSimplex<'a> {
    st: &'a Standard,
    n: usize,
    m: usize,
    /// Sign applied to each equality so that its right-hand side is nonnegative.
    sigma: Vec<f64>,
    rhs: Vec<f64>,
    basis: Vec<usize>,
    is_basic: Vec<bool>,
    /// Artificials that have left the basis are never re-admitted.
    retired: Vec<bool>,
    binv: Vec<f64>,
    xb: Vec<f64>,
    iterations: usize,
    since_refactor: usize,
    opts: SolverOptions,
}

impl<'a> DualSimplex<'a> {
    fn new(st: &'a Standard, c: Vec<f64>, opts: SolverOptions) -> Self {
        let n = c.len();
        let m = st.rows.len();
        let sigma: Vec<f64> = c.iter().map(|&cj| if cj > 0.0 { 1.0 } else { -1.0 }).collect();
        let rhs: Vec<f64> = c.iter().map(|cj| cj.abs()).collect();
        let total = m + 2 * n;
        let mut is_basic = vec![false; total];
        let mut basis = Vec::with_capacity(n);
        for j in 0..n {
            let col = if sigma[j] < 0.0 { m + j } else { m + n + j };
            basis.push(col);
            is_basic[col] = true;
        }
        let mut binv = vec![0.0; n * n];
        for j in 0..n {
            binv[j * n + j] = 1.0;
        }
        let retired = (0..total).map(|q| q >= m + n && !is_basic[q]).collect();
        Self {
            st,
            xb: rhs.clone(),
            n,
            m,
            sigma,
            rhs,
            basis,
            is_basic,
            retired,
            binv,
            iterations: 0,
            since_refactor: 0,
            opts,
        }
    }

    fn is_artificial(&self, q: usize) -> bool {
        q >= self.m + self.n
    }

    fn cost(&self, q: usize, phase1: bool) -> f64 {
        if phase1 {
            if self.is_artificial(q) { 1.0 } else { 0.0 }
        } else if q < self.m {
            self.st.b[q]
        } else {
            0.0
        }
    }

    /// Dense column `q` of the constraint matrix.
    fn column(&self, q: usize, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        if q < self.m {
            for &(j, a) in &self.st.rows[q] {
                out[j] = self.sigma[j] * a;
            }
        } else if q < self.m + self.n {
            let j = q - self.m;
            out[j] = -self.sigma[j];
        } else {
            out[q - self.m - self.n] = 1.0;
        }
    }

    fn multipliers(&self, phase1: bool) -> Vec<f64> {
        let n = self.n;
        let mut pi = vec![0.0; n];
        for r in 0..n {
            let cb = self.cost(self.basis[r], phase1);
            if cb != 0.0 {
                let row = &self.binv[r * n..(r + 1) * n];
                for (p, &v) in pi.iter_mut().zip(row) {
                    *p += cb * v;
                }
            }
        }
        pi
    }

    fn reduced_cost(&self, q: usize, pi: &[f64], phase1: bool) -> f64 {
        let c = self.cost(q, phase1);
        if q < self.m {
            c - self.st.rows[q].iter().map(|&(j, a)| pi[j] * self.sigma[j] * a).sum::<f64>()
        } else if q < self.m + self.n {
            let j = q - self.m;
            c + pi[j] * self.sigma[j]
        } else {
            c - pi[q - self.m - self.n]
        }
    }

    fn objective(&self, phase1: bool) -> f64 {
        (0..self.n).map(|r| self.cost(self.basis[r], phase1) * self.xb[r]).sum()
    }

    fn refactor(&mut self) -> Result<()> {
        let n = self.n;
        let mut a = vec![0.0; n * n];
        let mut col = vec![0.0; n];
        for r in 0..n {
            self.column(self.basis[r], &mut col);
            for i in 0..n {
                a[i * n + r] = col[i];
            }
        }
        let mut inv = vec![0.0; n * n];
        for i in 0..n {
            inv[i * n + i] = 1.0;
        }
        for k in 0..n {
            let piv = (k..n)
                .max_by(|&i, &j| a[i * n + k].abs().total_cmp(&a[j * n + k].abs()))
                .unwrap();
            let pv = a[piv * n + k];
            if pv.abs() < 1e-13 {
                return Err(Error::InvalidParameters("singular basis during refactorization".into()));
            }
            if piv != k {
                for j in 0..n {
                    a.swap(piv * n + j, k * n + j);
                    inv.swap(piv * n + j, k * n + j);
                }
            }
            for j in 0..n {
                a[k * n + j] /= pv;
                inv[k * n + j] /= pv;
            }
            for i in 0..n {
                if i != k {
                    let f = a[i * n + k];
                    if f != 0.0 {
                        for j in 0..n {
                            a[i * n + j] -= f * a[k * n + j];
                            inv[i * n + j] -= f * inv[k * n + j];
                        }
                    }
                }
            }
        }
        self.binv = inv;
        for r in 0..n {
            let row = &self.binv[r * n..(r + 1) * n];
            self.xb[r] = row.iter().zip(&self.rhs).map(|(a, b)| a * b).sum::<f64>().max(0.0);
        }
        self.since_refactor = 0;
        Ok(())
    }

    fn run(&mut self, phase1: bool) -> Result<Outcome> {
        let n = self.n;
        let total = self.m + 2 * n;
        let mut col = vec![0.0; n];
        let mut alpha = vec![0.0; n];
        let mut best_obj = self.objective(phase1);
        let mut stall = 0usize;
        loop {
            if self.iterations >= self.opts.max_iterations {
                return Err(Error::IterationLimit { iterations: self.iterations, best_bound: self.objective(phase1) });
            }
            if self.since_refactor >= REFACTOR_EVERY {
                self.refactor()?;
            }
            let pi = self.multipliers(phase1);
            let bland = stall > STALL_LIMIT;
            let mut entering = None;
            let mut best_d = -self.opts.optimality_tol;
            for q in 0..total {
                if self.is_basic[q] || self.retired[q] || (!phase1 && self.is_artificial(q)) {
                    continue;
                }
                let d = self.reduced_cost(q, &pi, phase1);
                if d < best_d {
                    entering = Some(q);
                    if bland {
                        break;
                    }
                    best_d = d;
                }
            }
            let Some(q) = entering else {
                return Ok(Outcome::Optimal);
            };
            self.column(q, &mut col);
            for r in 0..n {
                let row = &self.binv[r * n..(r + 1) * n];
                alpha[r] = row.iter().zip(&col).filter(|(_, c)| **c != 0.0).map(|(a, c)| a * c).sum();
            }
            let leave = self.ratio_test(&alpha, phase1, bland);
            let Some(r) = leave else {
                return Ok(Outcome::Unbounded);
            };
            let theta = (self.xb[r] / alpha[r]).max(0.0);
            for i in 0..n {
                if i != r {
                    self.xb[i] = (self.xb[i] - theta * alpha[i]).max(0.0);
                }
            }
            self.xb[r] = theta;
            let pv = alpha[r];
            let (head, rest) = self.binv.split_at_mut(r * n);
            let (prow, tail) = rest.split_at_mut(n);
            prow.iter_mut().for_each(|v| *v /= pv);
            for (i, chunk) in head.chunks_mut(n).chain(tail.chunks_mut(n)).enumerate() {
                let ai = alpha[if i < r { i } else { i + 1 }];
                if ai != 0.0 {
                    for (v, p) in chunk.iter_mut().zip(prow.iter()) {
                        *v -= ai * p;
                    }
                }
            }
            let out = self.basis[r];
            self.is_basic[out] = false;
            if self.is_artificial(out) {
                self.retired[out] = true;
            }
            self.basis[r] = q;
            self.is_basic[q] = true;
            self.iterations += 1;
            self.since_refactor += 1;
            let obj = self.objective(phase1);
            if obj < best_obj - 1e-12 * (1.0 + best_obj.abs()) {
                best_obj = obj;
                stall = 0;
            } else {
                stall += 1;
            }
        }
    }

    fn ratio_test(&self, alpha: &[f64], phase1: bool, bland: bool) -> Option<usize> {
        let n = self.n;
        if !phase1 {
            // Artificials still basic at zero must not move; drive them out first.
            if let Some(r) = (0..n)
                .filter(|&r| self.is_artificial(self.basis[r]) && alpha[r].abs() > PIVOT_TOL)
                .max_by(|&a, &b| alpha[a].abs().total_cmp(&alpha[b].abs()))
            {
                return Some(r);
            }
        }
        let tol = self.opts.feasibility_tol * 1e-2;
        let mut bound = f64::INFINITY;
        for r in 0..n {
            if alpha[r] > PIVOT_TOL {
                bound = bound.min((self.xb[r] + tol) / alpha[r]);
            }
        }
        if !bound.is_finite() {
            return None;
        }
        let mut chosen: Option<usize> = None;
        for r in 0..n {
            if alpha[r] > PIVOT_TOL && self.xb[r] / alpha[r] <= bound {
                chosen = match chosen {
                    None => Some(r),
                    Some(c) if bland => {
                        let (tr, tc) = (self.xb[r] / alpha[r], self.xb[c] / alpha[c]);
                        if tr < tc || (tr == tc && self.basis[r] < self.basis[c]) { Some(r) } else { Some(c) }
                    }
                    Some(c) => {
                        if alpha[r] > alpha[c] { Some(r) } else { Some(c) }
                    }
                };
            }
        }
        chosen
    }
}

/// Solves `lp`. Infeasible and unbounded problems are reported through the status;
/// running out of iterations is an error.
pub fn solve_lp(lp: &LinearProgram, opts: &SolverOptions) -> Result<LpSolution> {
    let st = standardize(lp, opts);
    let fail = |status, iterations| LpSolution {
        status,
        x: Vec::new(),
        objective: f64::NAN,
        max_violation: f64::NAN,
        duals: Vec::new(),
        iterations,
    };
    if st.trivially_infeasible {
        return Ok(fail(LpStatus::Infeasible, 0));
    }
    let mut ds = DualSimplex::new(&st, st.c.clone(), *opts);
    let phase1 = ds.run(true)?;
    debug_assert_eq!(phase1, Outcome::Optimal);
    let art_sum = ds.objective(true);
    let scale = 1.0 + st.c.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    if art_sum > opts.feasibility_tol * scale {
        // Dual infeasible: the primal is unbounded if it has any feasible point.
        let mut probe = DualSimplex::new(&st, vec![0.0; st.c.len()], *opts);
        probe.iterations = ds.iterations;
        let status = match probe.run(false)? {
            Outcome::Unbounded => LpStatus::Infeasible,
            _ => LpStatus::Unbounded,
        };
        debug!("dual infeasible after {} iterations, status {:?}", probe.iterations, status);
        return Ok(fail(status, probe.iterations));
    }
    match ds.run(false)? {
        Outcome::Unbounded => return Ok(fail(LpStatus::Infeasible, ds.iterations)),
        Outcome::Optimal => {}
    }
    ds.refactor()?;
    let pi = ds.multipliers(false);
    let xs: Vec<f64> = (0..ds.n).map(|j| (ds.sigma[j] * pi[j]).max(0.0)).collect();
    let x: Vec<f64> = st
        .maps
        .iter()
        .map(|m| match *m {
            VarMap::Shift(c, l) => l + xs[c],
            VarMap::Reflect(c, u) => u - xs[c],
            VarMap::Split(p, q) => xs[p] - xs[q],
        })
        .collect();
    let sgn = match lp.direction {
        Direction::Maximize => 1.0,
        Direction::Minimize => -1.0,
    };
    let mut duals = vec![0.0; lp.rows.len()];
    for r in 0..ds.n {
        let q = ds.basis[r];
        if q < ds.m {
            if let Some((orig, mult)) = st.origin[q] {
                duals[orig] += sgn * ds.xb[r] * mult;
            }
        }
    }
    let max_violation = super::validate(lp, &x);
    debug!("optimal after {} iterations, violation {:e}", ds.iterations, max_violation);
    Ok(LpSolution {
        status: LpStatus::Optimal,
        objective: lp.objective_value(&x),
        x,
        max_violation,
        duals,
        iterations: ds.iterations,
    })
}
