//! Single-link boundary control programs.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constraints::{build_robust_rows, ChanceSpec, Family, FlowLayout, Provenance};
use crate::error::{Error, Result};
use crate::fd::FdParams;
use crate::lp::{solve_lexicographic, ConstraintRow, Direction, LinearProgram, LpSolution, LpStatus, SolverOptions};
use crate::value_conditions::Discretization;

/// A single link with uncertain initial densities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkCase {
    pub fd: FdParams,
    pub disc: Discretization,
    pub chance: ChanceSpec,
}

impl LinkCase {
    /// The 3858 m, four-lane freeway stretch: six segments, 21 steps of 20 s.
    pub fn i880(sigma: f64, confidence: f64) -> Result<Self> {
        let fd = FdParams::from_critical(30.0, 0.0185, 0.125)?.scaled(4.0);
        let disc = Discretization::for_link(3858.0, 6, 420.0, 21)?;
        let mean = vec![0.065, 0.047, 0.052, 0.057, 0.051, 0.056];
        let chance = ChanceSpec::normal(mean, vec![sigma; 6], 1.0 - confidence)?;
        Ok(Self { fd, disc, chance })
    }

    pub fn with_spread(&self, sigma: f64, confidence: f64) -> Result<Self> {
        let n = self.chance.segments();
        let chance = ChanceSpec::normal(self.chance.rho_mean.clone(), vec![sigma; n], 1.0 - confidence)?;
        Ok(Self { chance, ..self.clone() })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothingSpec {
    pub h: f64,
}

impl SmoothingSpec {
    pub fn new(h: f64) -> Result<Self> {
        if !(h > 2.0) || !h.is_finite() {
            return Err(Error::InvalidParameters(format!("smoothing weight h = {h} must exceed 2")));
        }
        Ok(Self { h })
    }
}

impl Default for SmoothingSpec {
    fn default() -> Self {
        Self { h: 3.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TradeoffSpec {
    pub lambda: f64,
}

impl TradeoffSpec {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::Domain { what: "lambda", value: lambda, lo: 0.0, hi: 1.0 });
        }
        Ok(Self { lambda })
    }
}

/// Variables `q_in_1..n`, `q_out_1..n` bounded by capacity, plus all robust rows.
fn base_program(case: &LinkCase, direction: Direction) -> LinearProgram {
    let n = case.disc.n_max;
    let mut lp = LinearProgram::new(direction);
    for i in 1..=n {
        lp.add_variable(format!("q_in_{i}"), 0.0, case.fd.capacity);
    }
    for i in 1..=n {
        lp.add_variable(format!("q_out_{i}"), 0.0, case.fd.capacity);
    }
    lp.rows = build_robust_rows(&case.fd, &case.chance, &case.disc, &FlowLayout::contiguous(n), 0);
    lp
}

/// Maximize total outflow only.
pub fn build_throughput_lp(case: &LinkCase) -> LinearProgram {
    let n = case.disc.n_max;
    let mut lp = base_program(case, Direction::Maximize);
    for i in 0..n {
        lp.objective[n + i] = 1.0;
    }
    lp
}

/// Maximize `h * sum q_out - sum q_d` with `q_d(i) >= |q_out(i) - q_out(i-1)|`.
pub fn build_max_outflow_lp(case: &LinkCase, smoothing: SmoothingSpec) -> LinearProgram {
    let n = case.disc.n_max;
    let mut lp = base_program(case, Direction::Maximize);
    for i in 0..n {
        lp.objective[n + i] = smoothing.h;
    }
    for i in 2..=n {
        let d = lp.add_variable(format!("q_d_{i}"), 0.0, f64::INFINITY);
        lp.objective[d] = -1.0;
        let (cur, prev) = (n + i - 1, n + i - 2);
        let tag = Provenance::model(Family::Smoothing, 0, i);
        lp.add_row(ConstraintRow::ge(vec![(d, 1.0), (cur, -1.0), (prev, 1.0)], 0.0, tag));
        lp.add_row(ConstraintRow::ge(vec![(d, 1.0), (cur, 1.0), (prev, -1.0)], 0.0, tag));
    }
    lp
}

/// Minimize `-lambda * sum q_out + (1 - lambda) Q` where `Q` bounds every partial
/// sum of `q_in - q_out`.
pub fn build_tradeoff_lp(case: &LinkCase, tradeoff: TradeoffSpec) -> LinearProgram {
    let n = case.disc.n_max;
    let mut lp = base_program(case, Direction::Minimize);
    for i in 0..n {
        lp.objective[n + i] = -tradeoff.lambda;
    }
    let q = lp.add_variable("Q", f64::NEG_INFINITY, f64::INFINITY);
    lp.objective[q] = 1.0 - tradeoff.lambda;
    for i in 1..=n {
        let mut coefs = vec![(q, 1.0)];
        for j in 0..i {
            coefs.push((j, -1.0));
            coefs.push((n + j, 1.0));
        }
        lp.add_row(ConstraintRow::ge(coefs, 0.0, Provenance::model(Family::Backlog, 0, i)));
    }
    lp
}

/// Boundary flows read back from a solved link program.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkPlan {
    pub q_in: Vec<f64>,
    pub q_out: Vec<f64>,
    /// Vehicles discharged over the horizon.
    pub total_outflow: f64,
    /// Arithmetic mean of `q_in` over all steps (veh/s).
    pub avg_inflow: f64,
    /// `-Q T` when the program has a backlog variable.
    pub level_of_service: Option<f64>,
}

impl LinkPlan {
    pub fn from_solution(lp: &LinearProgram, sol: &LpSolution, disc: &Discretization) -> Self {
        let n = disc.n_max;
        let q_in = sol.x[..n].to_vec();
        let q_out = sol.x[n..2 * n].to_vec();
        let total_outflow = q_out.iter().sum::<f64>() * disc.dt;
        let avg_inflow = q_in.iter().sum::<f64>() / n as f64;
        let level_of_service = lp.variable_index("Q").map(|j| -sol.x[j] * disc.dt);
        Self { q_in, q_out, total_outflow, avg_inflow, level_of_service }
    }

    pub fn to_csv(&self, dt: f64) -> String {
        let mut s = String::from("step,t_start_s,q_in_veh_per_s,q_out_veh_per_s\n");
        for (i, (a, b)) in self.q_in.iter().zip(&self.q_out).enumerate() {
            s.push_str(&format!("{},{},{},{}\n", i + 1, i as f64 * dt, a, b));
        }
        s
    }
}

/// Solves `lp`, then among its optima maximizes total inflow so that the reported
/// inflow plan is unique.
pub fn solve_with_max_inflow(lp: &LinearProgram, n_max: usize, opts: &SolverOptions) -> Result<LpSolution> {
    let mut secondary = vec![0.0; lp.num_variables()];
    secondary[..n_max].iter_mut().for_each(|c| *c = 1.0);
    solve_lexicographic(lp, &secondary, opts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub sigma: f64,
    pub confidence: f64,
    pub status: LpStatus,
    pub avg_inflow: Option<f64>,
    pub total_outflow: Option<f64>,
    pub level_of_service: Option<f64>,
}

/// Solves the smoothed throughput program on every `(sigma, confidence)` cell.
pub fn sweep_uncertainty(
    case: &LinkCase,
    sigmas: &[f64],
    confidences: &[f64],
    smoothing: SmoothingSpec,
    opts: &SolverOptions,
) -> Result<Vec<SweepCell>> {
    let grid: Vec<(f64, f64)> = sigmas.iter().flat_map(|&s| confidences.iter().map(move |&c| (s, c))).collect();
    grid.par_iter()
        .map(|&(sigma, confidence)| {
            let cell = case.with_spread(sigma, confidence)?;
            let lp = build_max_outflow_lp(&cell, smoothing);
            let sol = solve_with_max_inflow(&lp, cell.disc.n_max, opts)?;
            let plan = (sol.status == LpStatus::Optimal).then(|| LinkPlan::from_solution(&lp, &sol, &cell.disc));
            Ok(SweepCell {
                sigma,
                confidence,
                status: sol.status,
                avg_inflow: plan.as_ref().map(|p| p.avg_inflow),
                total_outflow: plan.as_ref().map(|p| p.total_outflow),
                level_of_service: plan.and_then(|p| p.level_of_service),
            })
        })
        .collect()
}

pub fn sweep_to_csv(cells: &[SweepCell]) -> String {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut s = String::from("sigma_veh_per_m,confidence,status,avg_inflow_veh_per_s,total_outflow_veh,los_veh\n");
    for c in cells {
        s.push_str(&format!(
            "{},{},{:?},{},{},{}\n",
            c.sigma,
            c.confidence,
            c.status,
            opt(c.avg_inflow),
            opt(c.total_outflow),
            opt(c.level_of_service)
        ));
    }
    s
}
