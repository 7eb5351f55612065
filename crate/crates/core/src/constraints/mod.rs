//! Compatibility rows between value conditions, deterministic and chance-constrained.
//!
//! Every row has the normalized shape `sum coef * flow <= rhs` and is tagged with
//! the pair of conditions that produced it.

pub mod normal;
mod robust;
pub(crate) mod symbolic;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use normal::{inverse_normal_cdf, normal_cdf};
pub use robust::{build_robust_initial_rows, build_robust_downstream_rows, build_robust_rows, build_robust_upstream_rows};
pub use symbolic::build_deterministic_rows;

use crate::error::{Error, Result};
use crate::lax_hopf::Branch;
use crate::lp::ConstraintRow;

/// Source of a row: which solution is bounded by which condition, or which model term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
pub enum Family {
    /// Initial segment against the exit condition at step ends.
    InitialVsExit,
    /// Initial segment against the exit condition when its wave first arrives.
    InitialVsExitArrival,
    /// Initial segment against the entry condition at step ends.
    InitialVsEntry,
    /// Initial segment against the entry condition when its backward wave first arrives.
    InitialVsEntryArrival,
    /// Entry condition against later entry steps (entry capacity).
    EntryCapacity,
    /// Entry condition against the exit condition at step ends.
    EntryVsExit,
    /// Entry condition against the exit condition on free-flow arrival.
    EntryVsExitArrival,
    /// Exit condition against the entry condition at step ends.
    ExitVsEntry,
    /// Exit condition against the entry condition on backward-wave arrival.
    ExitVsEntryArrival,
    /// Exit condition against later exit steps (exit capacity).
    ExitCapacity,
    Smoothing,
    Backlog,
    Junction,
    RampShare,
    Fairness,
    ExitSupply,
    #[default]
    Other,
}

impl Family {
    /// True for the rows coupling value conditions (as opposed to model-specific rows).
    pub fn is_compatibility(self) -> bool {
        (self as u8) <= (Family::ExitCapacity as u8)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
pub struct Provenance {
    pub family: Family,
    pub link: usize,
    /// Segment `k` or step `n` of the bounded solution (0 when not applicable).
    pub source: usize,
    /// Step `p` of the bounding condition (0 when not applicable).
    pub step: usize,
    pub branch: Option<Branch>,
}

impl Provenance {
    pub fn model(family: Family, link: usize, step: usize) -> Self {
        Self { family, link, source: 0, step, branch: None }
    }
}

/// Quantile offsets for arbitrary marginals, in density units (veh/m).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileOffsets {
    /// `q_{1-alpha}(rho_k) - mean_k`.
    pub upper: Vec<f64>,
    /// `mean_k - q_alpha(rho_k)`.
    pub lower: Vec<f64>,
    /// Same for the sum of all segment densities.
    pub total_upper: f64,
    pub total_lower: f64,
}

/// Mean and spread of the initial densities plus the violation probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChanceSpec {
    pub rho_mean: Vec<f64>,
    pub rho_std: Vec<f64>,
    pub alpha: f64,
    pub z: f64,
    /// Replaces the normal offsets `z * sigma` when present.
    pub quantiles: Option<QuantileOffsets>,
}

impl ChanceSpec {
    /// Independent normal densities.
    pub fn normal(rho_mean: Vec<f64>, rho_std: Vec<f64>, alpha: f64) -> Result<Self> {
        if rho_mean.len() != rho_std.len() {
            return Err(Error::Dimension { expected: rho_mean.len(), got: rho_std.len() });
        }
        if !(alpha > 0.0 && alpha <= 0.5) {
            return Err(Error::Domain { what: "alpha", value: alpha, lo: 0.0, hi: 0.5 });
        }
        if let Some(&s) = rho_std.iter().find(|s| !(**s >= 0.0) || !s.is_finite()) {
            return Err(Error::InvalidParameters(format!("standard deviation {s} must be finite and nonnegative")));
        }
        if let Some(&m) = rho_mean.iter().find(|m| !m.is_finite()) {
            return Err(Error::InvalidParameters(format!("mean density {m} must be finite")));
        }
        let z = inverse_normal_cdf(1.0 - alpha)?;
        Ok(Self { rho_mean, rho_std, alpha, z, quantiles: None })
    }

    /// No uncertainty; robust rows coincide with the deterministic ones.
    pub fn deterministic(rho_mean: Vec<f64>) -> Self {
        let n = rho_mean.len();
        Self { rho_mean, rho_std: vec![0.0; n], alpha: 0.5, z: 0.0, quantiles: None }
    }

    /// Uses explicit quantiles in place of the normal offsets.
    pub fn with_quantiles(mut self, q: QuantileOffsets) -> Result<Self> {
        let n = self.rho_mean.len();
        for v in [&q.upper, &q.lower] {
            if v.len() != n {
                return Err(Error::Dimension { expected: n, got: v.len() });
            }
        }
        self.quantiles = Some(q);
        Ok(self)
    }

    pub fn segments(&self) -> usize {
        self.rho_mean.len()
    }

    /// High quantile of segment `k` (1-based).
    pub fn upper_density(&self, k: usize) -> f64 {
        let off = match &self.quantiles {
            Some(q) => q.upper[k - 1],
            None => self.z * self.rho_std[k - 1],
        };
        self.rho_mean[k - 1] + off
    }

    /// Low quantile of segment `k` (1-based).
    pub fn lower_density(&self, k: usize) -> f64 {
        let off = match &self.quantiles {
            Some(q) => q.lower[k - 1],
            None => self.z * self.rho_std[k - 1],
        };
        self.rho_mean[k - 1] - off
    }

    pub fn mean_count(&self, dx: f64) -> f64 {
        self.rho_mean.iter().sum::<f64>() * dx
    }

    /// Offset of the high quantile of the total vehicle count.
    pub fn total_upper_offset(&self, dx: f64) -> f64 {
        match &self.quantiles {
            Some(q) => q.total_upper * dx,
            None => self.z * self.rho_std.iter().map(|s| s * s).sum::<f64>().sqrt() * dx,
        }
    }

    pub fn total_lower_offset(&self, dx: f64) -> f64 {
        match &self.quantiles {
            Some(q) => q.total_lower * dx,
            None => self.z * self.rho_std.iter().map(|s| s * s).sum::<f64>().sqrt() * dx,
        }
    }
}

/// Where a link's boundary flows live in the decision vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowLayout {
    pub q_in: Vec<usize>,
    pub q_out: Vec<usize>,
}

impl FlowLayout {
    /// `q_in(1..n)` at indices `0..n`, `q_out(1..n)` at `n..2n`.
    pub fn contiguous(n_max: usize) -> Self {
        Self { q_in: (0..n_max).collect(), q_out: (n_max..2 * n_max).collect() }
    }
}

const COEF_EPS: f64 = 1e-12;

/// Affine expression in the decision variables.
#[derive(Debug, Clone, Default)]
pub(crate) struct Affine {
    pub constant: f64,
    pub terms: BTreeMap<usize, f64>,
}

impl Affine {
    pub fn constant(c: f64) -> Self {
        Self { constant: c, terms: BTreeMap::new() }
    }

    pub fn add(&mut self, var: usize, coef: f64) {
        *self.terms.entry(var).or_insert(0.0) += coef;
    }

    /// Adds the cumulative count of `q` at time `t` inside step `p`:
    /// `sum_{i<p} q(i) dt + q(p) (t - (p-1) dt)`.
    pub fn add_cumulative(&mut self, vars: &[usize], dt: f64, p: usize, t: f64, sign: f64) {
        for &v in &vars[..p - 1] {
            self.add(v, sign * dt);
        }
        self.add(vars[p - 1], sign * (t - (p - 1) as f64 * dt));
    }

    /// `sum_{i<=n} q(i) dt`.
    pub fn add_full_steps(&mut self, vars: &[usize], dt: f64, n: usize, sign: f64) {
        for &v in &vars[..n] {
            self.add(v, sign * dt);
        }
    }
}

/// Turns `solution >= condition` into `condition.terms - solution.terms <= solution.const - condition.const`.
/// Returns `None` when nothing depends on the decision variables and the row holds.
pub(crate) fn finish_row(solution: &Affine, condition: &Affine, provenance: Provenance, dt: f64) -> Option<ConstraintRow> {
    let mut merged = condition.terms.clone();
    for (&v, &c) in &solution.terms {
        *merged.entry(v).or_insert(0.0) -= c;
    }
    let cut = COEF_EPS * dt.max(1.0);
    let coefficients: Vec<(usize, f64)> = merged.into_iter().filter(|(_, c)| c.abs() > cut).collect();
    let rhs = solution.constant - condition.constant;
    if coefficients.is_empty() && rhs >= -1e-9 {
        return None;
    }
    Some(ConstraintRow::le(coefficients, rhs, provenance))
}
