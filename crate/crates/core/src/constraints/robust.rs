//! Chance-constrained rows in closed form.
//!
//! Rows bounding an initial-segment solution treat only that segment's density as
//! random and substitute the quantile that makes the row hold with probability
//! `1 - alpha` (the solution is monotone in that density). Rows bounding a
//! boundary solution depend on the total count and use its aggregate quantile.

use super::{finish_row, Affine, ChanceSpec, Family, FlowLayout, Provenance};
use crate::fd::FdParams;
use crate::lax_hopf::Branch;
use crate::lp::ConstraintRow;
use crate::value_conditions::{Discretization, GEOM_EPS};

/// Initial-segment solution at the entry (`at_exit = false`) or at the exit plus the
/// total count (`at_exit = true`), with segment `k` at density `r` and the rest at means.
fn segment_bound(
    fd: &FdParams,
    disc: &Discretization,
    r: f64,
    ahead: f64,
    behind: f64,
    k: usize,
    t: f64,
    at_exit: bool,
) -> Option<(f64, Branch)> {
    let (v, w, x_dx) = (fd.v_f, fd.w, disc.dx);
    let left = (k - 1) as f64 * x_dx;
    let right = left + x_dx;
    let x = if at_exit { disc.length() } else { 0.0 };
    let ge = |a: f64, b: f64| a >= b - GEOM_EPS;
    if t < -GEOM_EPS || !ge(x, left + t * w) || !ge(right + v * t, x) {
        return None;
    }
    // (free, characteristic), (free, fan), (congested, characteristic), (congested, fan)
    let vals = if at_exit {
        [
            ahead + r * (t * v + right - x),
            ahead + r * x_dx + fd.rho_c * (t * v + left - x),
            ahead + r * (t * w + right - x) - fd.rho_m * t * w,
            ahead + fd.rho_c * (t * w + right - x) - fd.rho_m * t * w,
        ]
    } else {
        [
            -behind + r * (t * v + left),
            -behind + fd.rho_c * (t * v + left),
            -behind + r * (t * w + left) - fd.rho_m * t * w,
            -behind - r * x_dx + fd.rho_c * (t * w + right) - fd.rho_m * t * w,
        ]
    };
    let applies = [
        r <= fd.rho_c && ge(x, left + v * t),
        r <= fd.rho_c && ge(left + v * t, x),
        r >= fd.rho_c && ge(right + t * w, x),
        r >= fd.rho_c && ge(x, right + t * w),
    ];
    let labels = [Branch::FreeFlow, Branch::FreeFlowCapacity, Branch::Congested, Branch::CongestedCapacity];
    let mut best: Option<(f64, Branch)> = None;
    for i in 0..4 {
        if applies[i] && best.is_none_or(|(b, _)| vals[i] < b) {
            best = Some((vals[i], labels[i]));
        }
    }
    best
}

fn cumulative(vars: &[usize], dt: f64, p: usize, t: f64) -> Affine {
    let mut a = Affine::default();
    a.add_cumulative(vars, dt, p, t, 1.0);
    a
}

/// Rows bounding each initial-segment solution by the entry and exit conditions.
pub fn build_robust_initial_rows(
    fd: &FdParams,
    chance: &ChanceSpec,
    disc: &Discretization,
    layout: &FlowLayout,
    link: usize,
) -> Vec<ConstraintRow> {
    let (dx, dt, len) = (disc.dx, disc.dt, disc.length());
    let k_max = disc.k_max;
    let mut behind = vec![0.0; k_max + 1];
    for k in 1..=k_max {
        behind[k] = behind[k - 1] + chance.rho_mean[k - 1] * dx;
    }
    let ahead = |k: usize| behind[k_max] - behind[k];
    let mut rows = Vec::new();
    let mut emit = |bound: Option<(f64, Branch)>, flows: Affine, family, k, p| {
        if let Some((val, b)) = bound {
            let prov = Provenance { family, link, source: k, step: p, branch: Some(b) };
            rows.extend(finish_row(&Affine::constant(val), &flows, prov, dt));
        }
    };

    // Exit side: the count ahead plus the solution grows with rho(k), so the low quantile binds.
    for k in 1..=k_max {
        let r = chance.lower_density(k);
        for p in 1..=disc.n_max {
            let t = p as f64 * dt;
            let bound = segment_bound(fd, disc, r, ahead(k), behind[k - 1], k, t, true);
            emit(bound, cumulative(&layout.q_out, dt, p, t), Family::InitialVsExit, k, p);
        }
    }
    for k in 1..=k_max {
        let t = (len - k as f64 * dx) / fd.v_f;
        if let Some(p) = disc.step_containing(t) {
            // The value here does not depend on rho(k); the branch tag follows the high quantile.
            let bound = segment_bound(fd, disc, chance.upper_density(k), ahead(k), behind[k - 1], k, t, true);
            emit(bound, cumulative(&layout.q_out, dt, p, t), Family::InitialVsExitArrival, k, p);
        }
    }
    // Entry side: the solution decreases with rho(k), so the high quantile binds.
    for k in 1..=k_max {
        let r = chance.upper_density(k);
        for p in 1..=disc.n_max {
            let t = p as f64 * dt;
            let bound = segment_bound(fd, disc, r, ahead(k), behind[k - 1], k, t, false);
            emit(bound, cumulative(&layout.q_in, dt, p, t), Family::InitialVsEntry, k, p);
        }
    }
    for k in 1..=k_max {
        let t = (k - 1) as f64 * dx / -fd.w;
        if let Some(p) = disc.step_containing(t) {
            let bound = segment_bound(fd, disc, chance.upper_density(k), ahead(k), behind[k - 1], k, t, false);
            emit(bound, cumulative(&layout.q_in, dt, p, t), Family::InitialVsEntryArrival, k, p);
        }
    }
    rows
}

/// Entry-capacity rows and rows bounding the entry solutions by the exit condition.
/// The right-hand side uses the low quantile of the total count.
pub fn build_robust_upstream_rows(
    fd: &FdParams,
    chance: &ChanceSpec,
    disc: &Discretization,
    layout: &FlowLayout,
    link: usize,
) -> Vec<ConstraintRow> {
    let (dt, len) = (disc.dt, disc.length());
    let tau_f = len / fd.v_f;
    let count = chance.mean_count(disc.dx) - chance.total_lower_offset(disc.dx);
    let mut rows = Vec::new();
    let prov = |family, n, p, b| Provenance { family, link, source: n, step: p, branch: Some(b) };

    for n in 1..=disc.n_max {
        for p in n + 1..=disc.n_max {
            let mut flows = Affine::default();
            for i in n..p {
                flows.add(layout.q_in[i], dt);
            }
            let bound = Affine::constant(fd.capacity * (p - n) as f64 * dt);
            rows.extend(finish_row(&bound, &flows, prov(Family::EntryCapacity, n, p, Branch::Capacity), dt));
        }
    }
    let entry_solution = |n: usize, tau: f64| -> (Affine, Branch) {
        let start = (n - 1) as f64 * dt;
        let mut m = Affine::default();
        if tau <= start + dt + GEOM_EPS {
            m.add_cumulative(&layout.q_in, dt, n, tau, 1.0);
            (m, Branch::Transport)
        } else {
            m.add_full_steps(&layout.q_in, dt, n, 1.0);
            m.constant = fd.capacity * (tau - n as f64 * dt);
            (m, Branch::Capacity)
        }
    };
    for n in 1..=disc.n_max {
        for p in 1..=disc.n_max {
            let t = p as f64 * dt;
            if t - tau_f < (n - 1) as f64 * dt - GEOM_EPS {
                continue;
            }
            let (mut m, b) = entry_solution(n, t - tau_f);
            m.constant += count;
            let flows = cumulative(&layout.q_out, dt, p, t);
            rows.extend(finish_row(&m, &flows, prov(Family::EntryVsExit, n, p, b), dt));
        }
    }
    for n in 1..=disc.n_max {
        let t = n as f64 * dt + tau_f;
        if let Some(p) = disc.step_containing(t) {
            let (mut m, b) = entry_solution(n, t - tau_f);
            m.constant += count;
            let flows = cumulative(&layout.q_out, dt, p, t);
            rows.extend(finish_row(&m, &flows, prov(Family::EntryVsExitArrival, n, p, b), dt));
        }
    }
    rows
}

/// Rows bounding the exit solutions by the entry condition, and exit-capacity rows.
/// The right-hand side uses the high quantile of the total count.
pub fn build_robust_downstream_rows(
    fd: &FdParams,
    chance: &ChanceSpec,
    disc: &Discretization,
    layout: &FlowLayout,
    link: usize,
) -> Vec<ConstraintRow> {
    let (dt, len) = (disc.dt, disc.length());
    let (tau_f, tau_w) = (len / fd.v_f, len / -fd.w);
    let count = chance.mean_count(disc.dx) + chance.total_upper_offset(disc.dx);
    let mut rows = Vec::new();
    let prov = |family, n, p, b| Provenance { family, link, source: n, step: p, branch: Some(b) };
    // Exit solution at the entry, time t, with the count term left out.
    let exit_solution = |n: usize, t: f64| -> (Affine, Branch) {
        let tau = t - tau_w;
        let start = (n - 1) as f64 * dt;
        let mut m = Affine::default();
        if tau <= start + dt + GEOM_EPS {
            m.add_cumulative(&layout.q_out, dt, n, tau, 1.0);
            m.constant = fd.rho_m * len;
            (m, Branch::Transport)
        } else {
            m.add_full_steps(&layout.q_out, dt, n, 1.0);
            m.constant = fd.capacity * (t - n as f64 * dt + tau_f);
            (m, Branch::Capacity)
        }
    };
    for n in 1..=disc.n_max {
        for p in 1..=disc.n_max {
            let t = p as f64 * dt;
            if t - tau_w < (n - 1) as f64 * dt - GEOM_EPS {
                continue;
            }
            let (mut m, b) = exit_solution(n, t);
            m.constant -= count;
            let flows = cumulative(&layout.q_in, dt, p, t);
            rows.extend(finish_row(&m, &flows, prov(Family::ExitVsEntry, n, p, b), dt));
        }
    }
    for n in 1..=disc.n_max {
        let t = n as f64 * dt + tau_w;
        if let Some(p) = disc.step_containing(t) {
            let (mut m, b) = exit_solution(n, t);
            m.constant -= count;
            let flows = cumulative(&layout.q_in, dt, p, t);
            rows.extend(finish_row(&m, &flows, prov(Family::ExitVsEntryArrival, n, p, b), dt));
        }
    }
    for n in 1..=disc.n_max {
        for p in n + 1..=disc.n_max {
            let mut flows = Affine::default();
            for i in n..p {
                flows.add(layout.q_out[i], dt);
            }
            let bound = Affine::constant(fd.capacity * (p - n) as f64 * dt);
            rows.extend(finish_row(&bound, &flows, prov(Family::ExitCapacity, n, p, Branch::Capacity), dt));
        }
    }
    rows
}

/// All robust rows of one link in family order.
pub fn build_robust_rows(
    fd: &FdParams,
    chance: &ChanceSpec,
    disc: &Discretization,
    layout: &FlowLayout,
    link: usize,
) -> Vec<ConstraintRow> {
    let mut rows = build_robust_initial_rows(fd, chance, disc, layout, link);
    rows.extend(build_robust_upstream_rows(fd, chance, disc, layout, link));
    rows.extend(build_robust_downstream_rows(fd, chance, disc, layout, link));
    rows
}
