//! Sample-based chance constraints on the initial-condition rows.
//!
//! Densities are drawn jointly for all segments, the bounded Moskowitz value is
//! evaluated per sample and the row is built from its empirical quantile.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constraints::{finish_row, symbolic, Affine, ChanceSpec, Family, FlowLayout, Provenance};
use crate::error::{Error, Result};
use crate::fd::FdParams;
use crate::lax_hopf::initial_solution_branch;
use crate::link_models::{build_throughput_lp, LinkCase};
use crate::lp::{solve_lexicographic, ConstraintRow, LpStatus, SolverOptions};
use crate::value_conditions::Discretization;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloSpec {
    pub n: usize,
    pub seed: u64,
    pub alpha: f64,
}

impl MonteCarloSpec {
    pub fn new(n: usize, seed: u64, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Domain { what: "alpha", value: alpha, lo: 0.0, hi: 1.0 });
        }
        if (n as f64) * alpha < 1.0 {
            return Err(Error::InvalidParameters(format!("{n} samples cannot resolve the {alpha} quantile")));
        }
        Ok(Self { n, seed, alpha })
    }

    /// One-based position of the critical value in ascending order.
    pub fn critical_index(&self) -> usize {
        ((self.n as f64 * self.alpha - 1e-9).ceil() as usize).clamp(1, self.n)
    }
}

/// Joint density draws, `n` rows of `k_max` densities, truncated to `[0, rho_m]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensitySamples {
    pub draws: Vec<Vec<f64>>,
    pub truncated: usize,
}

impl DensitySamples {
    pub fn draw(fd: &FdParams, chance: &ChanceSpec, mc: &MonteCarloSpec) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(mc.seed);
        let k_max = chance.segments();
        let mut truncated = 0;
        let draws = (0..mc.n)
            .map(|_| {
                (0..k_max)
                    .map(|k| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        let r = chance.rho_mean[k] + chance.rho_std[k] * z;
                        if r < 0.0 || r > fd.rho_m {
                            truncated += 1;
                        }
                        r.clamp(0.0, fd.rho_m)
                    })
                    .collect()
            })
            .collect();
        let total = mc.n * k_max;
        if truncated > 0 {
            log::info!("truncated {truncated} of {total} density draws ({:.3}%)", 100.0 * truncated as f64 / total as f64);
        }
        Self { draws, truncated }
    }

    pub fn truncation_rate(&self) -> f64 {
        let total: usize = self.draws.iter().map(Vec::len).sum();
        if total == 0 { 0.0 } else { self.truncated as f64 / total as f64 }
    }
}

/// Target points of the initial-condition rows: `(family, k, p, t, x)`.
fn targets(fd: &FdParams, disc: &Discretization, exit_side: bool) -> Vec<(Family, usize, usize, f64, f64)> {
    let (dx, dt, len) = (disc.dx, disc.dt, disc.length());
    let mut out = Vec::new();
    let (plain, arrival, x) = if exit_side {
        (Family::InitialVsExit, Family::InitialVsExitArrival, len)
    } else {
        (Family::InitialVsEntry, Family::InitialVsEntryArrival, 0.0)
    };
    for k in 1..=disc.k_max {
        for p in 1..=disc.n_max {
            out.push((plain, k, p, p as f64 * dt, x));
        }
    }
    for k in 1..=disc.k_max {
        let t = if exit_side { (len - k as f64 * dx) / fd.v_f } else { (k - 1) as f64 * dx / -fd.w };
        if let Some(p) = disc.step_containing(t) {
            out.push((arrival, k, p, t, x));
        }
    }
    out
}

/// Value of segment `k`'s solution at `(t, x)` for one density draw, with the
/// Moskowitz labels shifted by `offset`.
fn sample_value(fd: &FdParams, disc: &Discretization, rho: &[f64], offset: f64, k: usize, t: f64, x: f64) -> Option<f64> {
    let before = rho[..k - 1].iter().sum::<f64>() * disc.dx - offset;
    initial_solution_branch(fd, disc, before, rho[k - 1], k, t, x).map(|(v, _)| v)
}

fn critical(mut values: Vec<f64>, mc: &MonteCarloSpec) -> f64 {
    values.sort_by(f64::total_cmp);
    values[mc.critical_index() - 1]
}

/// Rows bounding the entry condition by the sampled quantile of each initial solution.
pub fn mc_rows_vs_upstream_with(
    fd: &FdParams,
    disc: &Discretization,
    samples: &DensitySamples,
    layout: &FlowLayout,
    link: usize,
    mc: &MonteCarloSpec,
) -> Vec<ConstraintRow> {
    targets(fd, disc, false)
        .into_par_iter()
        .filter_map(|(family, k, p, t, x)| {
            let vals: Option<Vec<f64>> = samples.draws.iter().map(|r| sample_value(fd, disc, r, 0.0, k, t, x)).collect();
            let m = Affine::constant(critical(vals?, mc));
            let cond = symbolic::entry_condition(disc, layout, p, t);
            finish_row(&m, &cond, Provenance { family, link, source: k, step: p, branch: None }, disc.dt)
        })
        .collect()
}

/// Rows bounding the exit condition: the sorted quantity is the initial solution plus
/// the sampled vehicle count, the count on the condition side is taken at the means.
pub fn mc_rows_vs_downstream_with(
    fd: &FdParams,
    disc: &Discretization,
    chance: &ChanceSpec,
    samples: &DensitySamples,
    layout: &FlowLayout,
    link: usize,
    mc: &MonteCarloSpec,
) -> Vec<ConstraintRow> {
    let mean_total = chance.mean_count(disc.dx);
    shifted_downstream(fd, disc, samples, layout, link, mc, mean_total, 0.0)
}

#[allow(clippy::too_many_arguments)]
fn shifted_downstream(
    fd: &FdParams,
    disc: &Discretization,
    samples: &DensitySamples,
    layout: &FlowLayout,
    link: usize,
    mc: &MonteCarloSpec,
    mean_total: f64,
    offset: f64,
) -> Vec<ConstraintRow> {
    targets(fd, disc, true)
        .into_par_iter()
        .filter_map(|(family, k, p, t, x)| {
            let vals: Option<Vec<f64>> = samples
                .draws
                .iter()
                .map(|r| sample_value(fd, disc, r, offset, k, t, x).map(|v| v + r.iter().sum::<f64>() * disc.dx))
                .collect();
            let m = Affine::constant(critical(vals?, mc) - mean_total);
            let mut cond = symbolic::exit_condition(disc, layout, mean_total, p, t);
            cond.constant += offset;
            finish_row(&m, &cond, Provenance { family, link, source: k, step: p, branch: None }, disc.dt)
        })
        .collect()
}

pub fn mc_rows_vs_upstream(fd: &FdParams, chance: &ChanceSpec, disc: &Discretization, mc: &MonteCarloSpec) -> Vec<ConstraintRow> {
    let samples = DensitySamples::draw(fd, chance, mc);
    mc_rows_vs_upstream_with(fd, disc, &samples, &FlowLayout::contiguous(disc.n_max), 0, mc)
}

pub fn mc_rows_vs_downstream(fd: &FdParams, chance: &ChanceSpec, disc: &Discretization, mc: &MonteCarloSpec) -> Vec<ConstraintRow> {
    let samples = DensitySamples::draw(fd, chance, mc);
    mc_rows_vs_downstream_with(fd, disc, chance, &samples, &FlowLayout::contiguous(disc.n_max), 0, mc)
}

/// Throughput program with the initial-condition rows replaced by sampled rows.
pub fn build_mc_throughput_lp(case: &LinkCase, mc: &MonteCarloSpec) -> crate::lp::LinearProgram {
    let mut lp = build_throughput_lp(case);
    lp.rows.retain(|r| {
        !matches!(
            r.provenance.family,
            Family::InitialVsExit | Family::InitialVsExitArrival | Family::InitialVsEntry | Family::InitialVsEntryArrival
        )
    });
    let samples = DensitySamples::draw(&case.fd, &case.chance, mc);
    let layout = FlowLayout::contiguous(case.disc.n_max);
    let mut rows = mc_rows_vs_downstream_with(&case.fd, &case.disc, &case.chance, &samples, &layout, 0, mc);
    rows.extend(mc_rows_vs_upstream_with(&case.fd, &case.disc, &samples, &layout, 0, mc));
    rows.append(&mut lp.rows);
    rows.sort_by_key(|r| r.provenance);
    lp.rows = rows;
    lp
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonCell {
    pub sigma: f64,
    pub confidence: f64,
    pub relaxed_opt: Option<f64>,
    pub mc_opt: Option<f64>,
    /// `100 * (relaxed - mc) / relaxed`.
    pub pct_error: Option<f64>,
}

/// Average outflow over the first `window` steps, maximized over the optimal face of
/// the throughput program.
fn window_outflow(lp: &crate::lp::LinearProgram, n: usize, window: usize, opts: &SolverOptions) -> Result<Option<f64>> {
    let mut secondary = vec![0.0; lp.num_variables()];
    secondary[n..n + window].iter_mut().for_each(|c| *c = 1.0);
    let sol = solve_lexicographic(lp, &secondary, opts)?;
    if sol.status != LpStatus::Optimal {
        return Ok(None);
    }
    Ok(Some(sol.x[n..n + window].iter().sum::<f64>() / window as f64))
}

/// Number of steps a free-flowing vehicle needs to cross the link.
pub fn impacted_window(case: &LinkCase) -> usize {
    ((case.disc.length() / case.fd.v_f / case.disc.dt - 1e-9).ceil() as usize).clamp(1, case.disc.n_max)
}

/// Relaxed against sampled optimum on every `(sigma, confidence)` cell. The sample
/// seed is shared by all cells.
pub fn compare_relaxed_vs_mc(
    case: &LinkCase,
    sigmas: &[f64],
    confidences: &[f64],
    n: usize,
    seed: u64,
    opts: &SolverOptions,
) -> Result<Vec<ComparisonCell>> {
    let n_max = case.disc.n_max;
    let window = impacted_window(case);
    let grid: Vec<(f64, f64)> = sigmas.iter().flat_map(|&s| confidences.iter().map(move |&c| (s, c))).collect();
    grid.into_par_iter()
        .map(|(sigma, confidence)| {
            let cell = case.with_spread(sigma, confidence)?;
            let mc = MonteCarloSpec::new(n, seed, 1.0 - confidence)?;
            let relaxed_opt = window_outflow(&build_throughput_lp(&cell), n_max, window, opts)?;
            let mc_opt = window_outflow(&build_mc_throughput_lp(&cell, &mc), n_max, window, opts)?;
            let pct_error = match (relaxed_opt, mc_opt) {
                (Some(r), Some(m)) if r.abs() > 0.0 => Some(100.0 * (r - m) / r),
                (Some(_), Some(_)) => Some(0.0),
                _ => None,
            };
            Ok(ComparisonCell { sigma, confidence, relaxed_opt, mc_opt, pct_error })
        })
        .collect()
}

pub fn comparison_to_csv(cells: &[ComparisonCell]) -> String {
    let f = |v: Option<f64>| v.map_or_else(String::new, |x| format!("{x}"));
    let mut s = String::from("sigma,confidence,relaxed_opt,mc_opt,pct_error\n");
    for c in cells {
        s.push_str(&format!("{},{},{},{},{}\n", c.sigma, c.confidence, f(c.relaxed_opt), f(c.mc_opt), f(c.pct_error)));
    }
    s
}
