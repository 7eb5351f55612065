//! Deterministic rows by symbolic evaluation of the generic per-condition solutions.

use super::{finish_row, Affine, ChanceSpec, Family, FlowLayout, Provenance};
use crate::fd::FdParams;
use crate::lax_hopf::{initial_solution_branch, Branch};
use crate::lp::ConstraintRow;
use crate::value_conditions::{Discretization, GEOM_EPS};

/// Solution of entry step `n` at `(t, x)` as an affine function of the flows.
pub(crate) fn upstream_solution(
    fd: &FdParams,
    disc: &Discretization,
    layout: &FlowLayout,
    n: usize,
    t: f64,
    x: f64,
) -> Option<(Affine, Branch)> {
    let tau = t - x / fd.v_f;
    let start = (n - 1) as f64 * disc.dt;
    if tau < start - GEOM_EPS {
        return None;
    }
    let mut m = Affine::default();
    if tau <= start + disc.dt + GEOM_EPS {
        m.add_cumulative(&layout.q_in, disc.dt, n, tau, 1.0);
        Some((m, Branch::Transport))
    } else {
        m.add_full_steps(&layout.q_in, disc.dt, n, 1.0);
        m.constant = fd.capacity * (tau - start - disc.dt);
        Some((m, Branch::Capacity))
    }
}

/// Solution of exit step `n` at `(t, x)`; `total` is the initial vehicle count.
pub(crate) fn downstream_solution(
    fd: &FdParams,
    disc: &Discretization,
    layout: &FlowLayout,
    total: f64,
    n: usize,
    t: f64,
    x: f64,
) -> Option<(Affine, Branch)> {
    let d = x - disc.length();
    let tau = t - d / fd.w;
    let start = (n - 1) as f64 * disc.dt;
    if tau < start - GEOM_EPS {
        return None;
    }
    let mut m = Affine::default();
    if tau <= start + disc.dt + GEOM_EPS {
        m.add_cumulative(&layout.q_out, disc.dt, n, tau, 1.0);
        m.constant = -total - fd.rho_m * d;
        Some((m, Branch::Transport))
    } else {
        m.add_full_steps(&layout.q_out, disc.dt, n, 1.0);
        m.constant = -total + fd.capacity * (t - start - disc.dt - d / fd.v_f);
        Some((m, Branch::Capacity))
    }
}

pub(crate) fn entry_condition(disc: &Discretization, layout: &FlowLayout, p: usize, t: f64) -> Affine {
    let mut c = Affine::default();
    c.add_cumulative(&layout.q_in, disc.dt, p, t, 1.0);
    c
}

pub(crate) fn exit_condition(disc: &Discretization, layout: &FlowLayout, total: f64, p: usize, t: f64) -> Affine {
    let mut c = Affine::constant(-total);
    c.add_cumulative(&layout.q_out, disc.dt, p, t, 1.0);
    c
}

/// Every compatibility row with densities at their means, grouped by family in the
/// order initial, entry, exit; within a family by source index then step.
pub fn build_deterministic_rows(
    fd: &FdParams,
    chance: &ChanceSpec,
    disc: &Discretization,
    layout: &FlowLayout,
    link: usize,
) -> Vec<ConstraintRow> {
    let (dx, dt, len) = (disc.dx, disc.dt, disc.length());
    let rho = &chance.rho_mean;
    let total = chance.mean_count(dx);
    let mut before = vec![0.0; disc.k_max + 1];
    for k in 1..=disc.k_max {
        before[k] = before[k - 1] + rho[k - 1] * dx;
    }
    let initial = |k: usize, t: f64, x: f64| {
        initial_solution_branch(fd, disc, before[k - 1], rho[k - 1], k, t, x).map(|(v, b)| (Affine::constant(v), b))
    };
    let tag = |family, source, step, branch| Provenance { family, link, source, step, branch: Some(branch) };
    let mut rows = Vec::new();
    let mut push = |m: Option<(Affine, Branch)>, cond: Affine, family, source, p| {
        if let Some((m, b)) = m {
            rows.extend(finish_row(&m, &cond, tag(family, source, p, b), dt));
        }
    };

    for k in 1..=disc.k_max {
        for p in 1..=disc.n_max {
            let t = p as f64 * dt;
            push(initial(k, t, len), exit_condition(disc, layout, total, p, t), Family::InitialVsExit, k, p);
        }
    }
    for k in 1..=disc.k_max {
        let t = (len - k as f64 * dx) / fd.v_f;
        if let Some(p) = disc.step_containing(t) {
            push(initial(k, t, len), exit_condition(disc, layout, total, p, t), Family::InitialVsExitArrival, k, p);
        }
    }
    for k in 1..=disc.k_max {
        for p in 1..=disc.n_max {
            let t = p as f64 * dt;
            push(initial(k, t, 0.0), entry_condition(disc, layout, p, t), Family::InitialVsEntry, k, p);
        }
    }
    for k in 1..=disc.k_max {
        let t = (k - 1) as f64 * dx / -fd.w;
        if let Some(p) = disc.step_containing(t) {
            push(initial(k, t, 0.0), entry_condition(disc, layout, p, t), Family::InitialVsEntryArrival, k, p);
        }
    }

    for n in 1..=disc.n_max {
        for p in n + 1..=disc.n_max {
            let t = p as f64 * dt;
            push(upstream_solution(fd, disc, layout, n, t, 0.0), entry_condition(disc, layout, p, t), Family::EntryCapacity, n, p);
        }
    }
    for n in 1..=disc.n_max {
        for p in 1..=disc.n_max {
            let t = p as f64 * dt;
            push(
                upstream_solution(fd, disc, layout, n, t, len),
                exit_condition(disc, layout, total, p, t),
                Family::EntryVsExit,
                n,
                p,
            );
        }
    }
    for n in 1..=disc.n_max {
        let t = n as f64 * dt + len / fd.v_f;
        if let Some(p) = disc.step_containing(t) {
            push(
                upstream_solution(fd, disc, layout, n, t, len),
                exit_condition(disc, layout, total, p, t),
                Family::EntryVsExitArrival,
                n,
                p,
            );
        }
    }

    for n in 1..=disc.n_max {
        for p in 1..=disc.n_max {
            let t = p as f64 * dt;
            push(
                downstream_solution(fd, disc, layout, total, n, t, 0.0),
                entry_condition(disc, layout, p, t),
                Family::ExitVsEntry,
                n,
                p,
            );
        }
    }
    for n in 1..=disc.n_max {
        let t = n as f64 * dt + len / -fd.w;
        if let Some(p) = disc.step_containing(t) {
            push(
                downstream_solution(fd, disc, layout, total, n, t, 0.0),
                entry_condition(disc, layout, p, t),
                Family::ExitVsEntryArrival,
                n,
                p,
            );
        }
    }
    for n in 1..=disc.n_max {
        for p in n + 1..=disc.n_max {
            let t = p as f64 * dt;
            push(
                downstream_solution(fd, disc, layout, total, n, t, len),
                exit_condition(disc, layout, total, p, t),
                Family::ExitCapacity,
                n,
                p,
            );
        }
    }
    rows
}
