//! Explicit Moskowitz solutions for the triangular diagram and their inf-morphism
//! combination. Every evaluation is grid-free: a point `(t, x)` is computed
//! directly from the value conditions.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fd::FdParams;
use crate::value_conditions::{BoundaryFlows, Discretization, InitialDensityProfile, GEOM_EPS};

/// Precomputed cumulative counts so that each per-condition solution costs O(1).
#[derive(Debug, Clone)]
pub struct MoskowitzSolver<'a> {
    fd: &'a FdParams,
    profile: &'a InitialDensityProfile,
    flows: &'a BoundaryFlows,
    disc: &'a Discretization,
    /// `count_before[k-1] = sum_{i<k} rho(i) X`, length k_max + 1.
    count_before: Vec<f64>,
    cum_in: Vec<f64>,
    cum_out: Vec<f64>,
}

fn prefix(values: &[f64], scale: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len() + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for v in values {
        acc += v * scale;
        out.push(acc);
    }
    out
}

impl<'a> MoskowitzSolver<'a> {
    pub fn new(
        fd: &'a FdParams,
        profile: &'a InitialDensityProfile,
        flows: &'a BoundaryFlows,
        disc: &'a Discretization,
    ) -> Result<Self> {
        if profile.rho.len() != disc.k_max {
            return Err(Error::Dimension { expected: disc.k_max, got: profile.rho.len() });
        }
        if flows.q_in.len() != disc.n_max || flows.q_out.len() != disc.n_max {
            return Err(Error::Dimension { expected: disc.n_max, got: flows.q_in.len().min(flows.q_out.len()) });
        }
        Ok(Self {
            fd,
            profile,
            flows,
            disc,
            count_before: prefix(&profile.rho, disc.dx),
            cum_in: prefix(&flows.q_in, disc.dt),
            cum_out: prefix(&flows.q_out, disc.dt),
        })
    }

    fn total_count(&self) -> f64 {
        self.count_before[self.disc.k_max]
    }

    /// Solution generated by the initial condition on segment `k`.
    pub fn from_initial(&self, k: usize, t: f64, x: f64) -> f64 {
        initial_solution(self.fd, self.disc, self.count_before[k - 1], self.profile.rho[k - 1], k, t, self.disc.rel(x))
    }

    /// Solution generated by the upstream condition of step `n`.
    pub fn from_upstream(&self, n: usize, t: f64, x: f64) -> f64 {
        let (fd, disc) = (self.fd, self.disc);
        let tau = t - disc.rel(x) / fd.v_f;
        let start = (n - 1) as f64 * disc.dt;
        if tau < start - GEOM_EPS {
            return f64::INFINITY;
        }
        if tau <= start + disc.dt {
            self.cum_in[n - 1] + self.flows.q_in[n - 1] * (tau - start)
        } else {
            self.cum_in[n] + fd.capacity * (tau - start - disc.dt)
        }
    }

    /// Solution generated by the downstream condition of step `n`.
    pub fn from_downstream(&self, n: usize, t: f64, x: f64) -> f64 {
        let (fd, disc) = (self.fd, self.disc);
        let d = x - disc.chi;
        let tau = t - d / fd.w;
        let start = (n - 1) as f64 * disc.dt;
        if tau < start - GEOM_EPS {
            return f64::INFINITY;
        }
        if tau <= start + disc.dt {
            -self.total_count() + self.cum_out[n - 1] + self.flows.q_out[n - 1] * (tau - start) - fd.rho_m * d
        } else {
            -self.total_count() + self.cum_out[n] + fd.capacity * (t - start - disc.dt - d / fd.v_f)
        }
    }

    /// Minimum over every value condition.
    pub fn value(&self, t: f64, x: f64) -> Result<f64> {
        let disc = self.disc;
        let mut m = f64::INFINITY;
        for k in 1..=disc.k_max {
            m = m.min(self.from_initial(k, t, x));
        }
        for n in 1..=disc.n_max {
            m = m.min(self.from_upstream(n, t, x));
            m = m.min(self.from_downstream(n, t, x));
        }
        if m.is_finite() {
            Ok(m)
        } else {
            Err(Error::Unbounded { t, x })
        }
    }
}

/// Which closed-form piece produced a Moskowitz value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Branch {
    /// Initial segment in free flow, characteristic from inside the segment.
    FreeFlow,
    /// Initial segment in free flow, capacity fan from the upstream corner.
    FreeFlowCapacity,
    /// Initial segment congested, characteristic from inside the segment.
    Congested,
    /// Initial segment congested, capacity fan from the downstream corner.
    CongestedCapacity,
    /// Boundary condition carried along a characteristic during its own step.
    Transport,
    /// Boundary condition after its step, capacity-limited.
    Capacity,
}

/// Five-branch solution of one initial segment. `x` is measured from the upstream end;
/// branches whose domains overlap are all evaluated and the minimum is kept.
pub(crate) fn initial_solution(
    fd: &FdParams,
    disc: &Discretization,
    count_before: f64,
    rho: f64,
    k: usize,
    t: f64,
    x: f64,
) -> f64 {
    initial_solution_branch(fd, disc, count_before, rho, k, t, x).map_or(f64::INFINITY, |(v, _)| v)
}

/// Same as [`initial_solution`] but also reports the minimizing branch (first wins on ties).
pub(crate) fn initial_solution_branch(
    fd: &FdParams,
    disc: &Discretization,
    count_before: f64,
    rho: f64,
    k: usize,
    t: f64,
    x: f64,
) -> Option<(f64, Branch)> {
    if t < -GEOM_EPS {
        return None;
    }
    let left = (k - 1) as f64 * disc.dx;
    let right = left + disc.dx;
    let (v, w) = (fd.v_f, fd.w);
    let ge = |a: f64, b: f64| a >= b - GEOM_EPS;
    if !ge(x, left + t * w) || !ge(right + v * t, x) {
        return None;
    }
    let mut best: Option<(f64, Branch)> = None;
    let mut offer = |val: f64, b: Branch| {
        if best.is_none_or(|(cur, _)| val < cur) {
            best = Some((val, b));
        }
    };
    if rho <= fd.rho_c {
        if ge(x, left + v * t) {
            offer(-count_before + rho * (t * v + left - x), Branch::FreeFlow);
        }
        if ge(left + v * t, x) {
            offer(-count_before + fd.rho_c * (t * v + left - x), Branch::FreeFlowCapacity);
        }
    }
    if rho >= fd.rho_c {
        if ge(right + t * w, x) {
            offer(-count_before + rho * (t * w + left - x) - fd.rho_m * t * w, Branch::Congested);
        }
        if ge(x, right + t * w) {
            offer(
                -count_before - rho * disc.dx + fd.rho_c * (t * w + right - x) - fd.rho_m * t * w,
                Branch::CongestedCapacity,
            );
        }
    }
    best
}

pub fn moskowitz_from_initial(
    fd: &FdParams,
    profile: &InitialDensityProfile,
    disc: &Discretization,
    k: usize,
    t: f64,
    x: f64,
) -> f64 {
    initial_solution(fd, disc, profile.count_before(k, disc.dx), profile.rho[k - 1], k, t, disc.rel(x))
}

pub fn moskowitz_from_upstream(fd: &FdParams, flows: &BoundaryFlows, disc: &Discretization, n: usize, t: f64, x: f64) -> f64 {
    let profile = InitialDensityProfile::uniform(disc.k_max, 0.0);
    MoskowitzSolver::new(fd, &profile, flows, disc)
        .map(|s| s.from_upstream(n, t, x))
        .unwrap_or(f64::INFINITY)
}

pub fn moskowitz_from_downstream(
    fd: &FdParams,
    flows: &BoundaryFlows,
    profile: &InitialDensityProfile,
    disc: &Discretization,
    n: usize,
    t: f64,
    x: f64,
) -> f64 {
    MoskowitzSolver::new(fd, profile, flows, disc)
        .map(|s| s.from_downstream(n, t, x))
        .unwrap_or(f64::INFINITY)
}

pub fn solve_moskowitz(
    fd: &FdParams,
    profile: &InitialDensityProfile,
    flows: &BoundaryFlows,
    disc: &Discretization,
    t: f64,
    x: f64,
) -> Result<f64> {
    MoskowitzSolver::new(fd, profile, flows, disc)?.value(t, x)
}

/// Sampled Moskowitz function and the density reconstructed from it.
#[derive(Debug, Clone, Serialize)]
pub struct DensityField {
    pub times: Vec<f64>,
    pub positions: Vec<f64>,
    /// `moskowitz[i][j]` at `(times[i], positions[j])`.
    pub moskowitz: Vec<Vec<f64>>,
    pub density: Vec<Vec<f64>>,
}

impl DensityField {
    /// Grid as CSV: one row per time, one column per position.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t_s\\x_m");
        for x in &self.positions {
            out.push_str(&format!(",{x}"));
        }
        out.push('\n');
        for (t, row) in self.times.iter().zip(&self.density) {
            out.push_str(&format!("{t}"));
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

/// Samples `M` on an `nt x nx` grid over the whole domain and differentiates in space.
pub fn density_field(
    fd: &FdParams,
    profile: &InitialDensityProfile,
    flows: &BoundaryFlows,
    disc: &Discretization,
    nt: usize,
    nx: usize,
) -> Result<DensityField> {
    if nt < 2 || nx < 2 {
        return Err(Error::InvalidParameters("density grid needs nt, nx >= 2".into()));
    }
    let solver = MoskowitzSolver::new(fd, profile, flows, disc)?;
    let times = linspace(0.0, disc.t_max(), nt);
    let positions = linspace(disc.zeta, disc.chi, nx);
    let step = positions[1] - positions[0];
    let moskowitz = times
        .par_iter()
        .map(|&t| positions.iter().map(|&x| solver.value(t, x)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    let density = moskowitz
        .iter()
        .map(|row| {
            (0..nx)
                .map(|j| {
                    let j = j.min(nx - 2);
                    (-(row[j + 1] - row[j]) / step).clamp(0.0, fd.rho_m)
                })
                .collect()
        })
        .collect();
    Ok(DensityField { times, positions, moskowitz, density })
}
