//! Freeway networks: links, junctions with ramps, and the network control program.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constraints::{build_robust_rows, ChanceSpec, Family, FlowLayout, Provenance};
use crate::error::{Error, Result};
use crate::fd::FdParams;
use crate::lp::{solve_lp, ConstraintRow, Direction, LinearProgram, LpSolution, LpStatus, SolverOptions};
use crate::value_conditions::Discretization;

const SHARE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub name: String,
    pub length: f64,
    pub lanes: usize,
    /// Lane-aggregated diagram.
    pub fd: FdParams,
    pub disc: Discretization,
    pub chance: ChanceSpec,
}

impl Link {
    pub fn new(name: impl Into<String>, lanes: usize, lane_fd: &FdParams, disc: Discretization, chance: ChanceSpec) -> Result<Self> {
        let name = name.into();
        if lanes == 0 {
            return Err(Error::InvalidParameters(format!("link {name} needs at least one lane")));
        }
        if chance.segments() != disc.k_max {
            return Err(Error::Dimension { expected: disc.k_max, got: chance.segments() });
        }
        Ok(Self { name, length: disc.length(), lanes, fd: lane_fd.scaled(lanes as f64), disc, chance })
    }
}

/// A node joining incoming and outgoing links, optionally with one on-ramp and one off-ramp.
///
/// Per step: `q_in(out_r) = sum_c p1[r][c] q_out(in_c) + p2[r] q_on` and
/// `q_off = sum_c p3[c] q_out(in_c)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Junction {
    pub name: String,
    pub incoming: Vec<usize>,
    pub outgoing: Vec<usize>,
    pub p1: Vec<Vec<f64>>,
    pub p2: Vec<f64>,
    pub p3: Vec<f64>,
    pub has_on_ramp: bool,
    pub has_off_ramp: bool,
    /// Incoming link whose per-lane outflow bounds the on-ramp flow from below.
    pub ramp_priority: Option<usize>,
}

impl Junction {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameters(format!("junction {}: {msg}", self.name)));
        let (ni, no) = (self.incoming.len(), self.outgoing.len());
        if self.p1.len() != no || self.p1.iter().any(|r| r.len() != ni) {
            return bad(format!("P1 must be {no}x{ni}"));
        }
        if self.p2.len() != no || self.p3.len() != ni {
            return bad("P2 needs one entry per outgoing link and P3 one per incoming link".into());
        }
        let all = self.p1.iter().flatten().chain(&self.p2).chain(&self.p3);
        if let Some(v) = all.clone().find(|v| !(0.0..=1.0).contains(*v)) {
            return bad(format!("share {v} outside [0, 1]"));
        }
        for c in 0..ni {
            let s: f64 = self.p1.iter().map(|r| r[c]).sum::<f64>() + self.p3[c];
            if (s - 1.0).abs() > SHARE_TOL {
                return bad(format!("shares of incoming link {} sum to {s}, not 1", self.incoming[c]));
            }
        }
        if self.has_on_ramp && (self.p2.iter().sum::<f64>() - 1.0).abs() > SHARE_TOL {
            return bad("on-ramp shares must sum to 1".into());
        }
        if !self.has_off_ramp && self.p3.iter().any(|&v| v > 0.0) {
            return bad("off-ramp shares given without an off-ramp".into());
        }
        if let Some(j) = self.ramp_priority {
            if !self.incoming.contains(&j) || !self.has_on_ramp {
                return bad("ramp priority link must be an incoming link of a node with an on-ramp".into());
            }
        }
        Ok(())
    }
}

/// Decision-variable indices of one network program.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkLayout {
    pub links: Vec<FlowLayout>,
    /// Per junction: on-ramp flows per step, if any.
    pub on_ramp: Vec<Option<Vec<usize>>>,
    pub off_ramp: Vec<Option<Vec<usize>>>,
    pub fairness: Vec<Vec<usize>>,
}

/// Conservation rows of `junction` at every step, equalities written as pairs of inequalities.
pub fn junction_rows(junction: &Junction, index: usize, layout: &NetworkLayout, n_max: usize) -> Vec<ConstraintRow> {
    let mut rows = Vec::new();
    for i in 0..n_max {
        let tag = Provenance::model(Family::Junction, index, i + 1);
        let mut push_eq = |coefs: Vec<(usize, f64)>| {
            rows.push(ConstraintRow::le(coefs.clone(), 0.0, tag));
            rows.push(ConstraintRow::ge(coefs, 0.0, tag));
        };
        for (r, &o) in junction.outgoing.iter().enumerate() {
            let mut coefs = vec![(layout.links[o].q_in[i], 1.0)];
            for (c, &l) in junction.incoming.iter().enumerate() {
                if junction.p1[r][c] != 0.0 {
                    coefs.push((layout.links[l].q_out[i], -junction.p1[r][c]));
                }
            }
            if let (Some(on), true) = (&layout.on_ramp[index], junction.p2[r] != 0.0) {
                coefs.push((on[i], -junction.p2[r]));
            }
            push_eq(coefs);
        }
        if let Some(off) = &layout.off_ramp[index] {
            let mut coefs = vec![(off[i], 1.0)];
            for (c, &l) in junction.incoming.iter().enumerate() {
                if junction.p3[c] != 0.0 {
                    coefs.push((layout.links[l].q_out[i], -junction.p3[c]));
                }
            }
            push_eq(coefs);
        }
    }
    rows
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FairnessPair {
    pub link_a: usize,
    pub link_b: usize,
    pub junction: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkObjectiveSpec {
    pub eta: f64,
    pub fairness_pairs: Vec<FairnessPair>,
    /// Weight step `i` by `n_max - i + 1` to favor early discharge.
    pub time_weighting: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub links: Vec<Link>,
    pub junctions: Vec<Junction>,
    /// Upper bound on the inflow of links without an upstream junction (veh/s).
    pub entry_demand: Vec<Option<f64>>,
    /// Density just downstream of links without a downstream junction.
    pub exit_density: Vec<Option<f64>>,
    /// Upper bound on each junction's on-ramp flow (veh/s).
    pub on_ramp_capacity: Vec<Option<f64>>,
}

impl Network {
    pub fn n_max(&self) -> usize {
        self.links.first().map_or(0, |l| l.disc.n_max)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_max();
        let nl = self.links.len();
        if self.entry_demand.len() != nl || self.exit_density.len() != nl {
            return Err(Error::Dimension { expected: nl, got: self.entry_demand.len().min(self.exit_density.len()) });
        }
        if self.on_ramp_capacity.len() != self.junctions.len() {
            return Err(Error::Dimension { expected: self.junctions.len(), got: self.on_ramp_capacity.len() });
        }
        for l in &self.links {
            if l.disc.n_max != n || (l.disc.dt - self.links[0].disc.dt).abs() > 1e-12 {
                return Err(Error::InvalidParameters(format!("link {} does not share the common time grid", l.name)));
            }
        }
        let mut upstream = vec![0; nl];
        let mut downstream = vec![0; nl];
        for j in &self.junctions {
            j.validate()?;
            for &l in j.incoming.iter().chain(&j.outgoing) {
                if l >= nl {
                    return Err(Error::InvalidParameters(format!("junction {} references missing link {l}", j.name)));
                }
            }
            j.incoming.iter().for_each(|&l| downstream[l] += 1);
            j.outgoing.iter().for_each(|&l| upstream[l] += 1);
        }
        if let Some(l) = (0..nl).find(|&l| upstream[l] > 1 || downstream[l] > 1) {
            return Err(Error::InvalidParameters(format!("link {} is attached to more than one node at one end", self.links[l].name)));
        }
        Ok(())
    }

    /// Same network on a different number of time steps over the same horizon.
    pub fn with_steps(&self, n_max: usize) -> Result<Self> {
        let mut net = self.clone();
        for l in &mut net.links {
            l.disc = Discretization::for_link(l.length, l.disc.k_max, l.disc.t_max(), n_max)?;
        }
        Ok(net)
    }

    /// Links fed by a junction (or by nothing): `(has upstream node, has downstream node)`.
    pub fn attachments(&self) -> Vec<(bool, bool)> {
        let mut out = vec![(false, false); self.links.len()];
        for j in &self.junctions {
            j.outgoing.iter().for_each(|&l| out[l].0 = true);
            j.incoming.iter().for_each(|&l| out[l].1 = true);
        }
        out
    }

    /// The two-highway interchange: highway A is L1-L4, highway B is L5-L8, both
    /// meeting at node 2. Four on-ramps, two off-ramps, 600 m segments.
    pub fn case_study(n_max: usize, robust: bool, confidence: f64) -> Result<Self> {
        let lane_fd = FdParams::from_critical(25.0, 0.02, 0.125)?;
        let horizon = 500.0;
        let lengths = [600.0, 600.0, 1200.0, 600.0, 600.0, 600.0, 1200.0, 600.0];
        let lanes = [2, 2, 3, 3, 4, 5, 5, 5];
        let ratio = [1.575, 0.975, 0.917, 0.352, 1.238, 0.730, 0.088, 0.084];
        let mut links = Vec::new();
        for l in 0..8 {
            let k = (lengths[l] / 600.0) as usize;
            let disc = Discretization::for_link(lengths[l], k, horizon, n_max)?;
            let mean = ratio[l] * lane_fd.rho_c * lanes[l] as f64;
            let sigma = if robust && (l == 2 || l == 6) { 0.2 * mean } else { 0.0 };
            let chance = ChanceSpec::normal(vec![mean; k], vec![sigma; k], 1.0 - confidence)?;
            links.push(Link::new(format!("L{}", l + 1), lanes[l], &lane_fd, disc, chance)?);
        }
        let simple = |name: &str, i: usize, o: usize, off: f64| Junction {
            name: name.into(),
            incoming: vec![i],
            outgoing: vec![o],
            p1: vec![vec![1.0 - off]],
            p2: vec![1.0],
            p3: vec![off],
            has_on_ramp: true,
            has_off_ramp: off > 0.0,
            ramp_priority: Some(i),
        };
        let junctions = vec![
            simple("node1", 0, 1, 0.0),
            Junction {
                name: "node2".into(),
                incoming: vec![1, 5],
                outgoing: vec![2, 6],
                p1: vec![vec![0.5, 0.2], vec![0.5, 0.8]],
                p2: vec![0.0, 0.0],
                p3: vec![0.0, 0.0],
                has_on_ramp: false,
                has_off_ramp: false,
                ramp_priority: None,
            },
            simple("node3", 2, 3, 0.2),
            simple("node4", 4, 5, 0.0),
            simple("node5", 6, 7, 0.2),
        ];
        let mut entry_demand = vec![None; 8];
        entry_demand[0] = Some(links[0].fd.capacity);
        entry_demand[4] = Some(links[4].fd.capacity);
        let mut exit_density = vec![None; 8];
        exit_density[3] = Some(links[3].chance.rho_mean[0]);
        exit_density[7] = Some(links[7].chance.rho_mean[0]);
        let net = Self { links, junctions, entry_demand, exit_density, on_ramp_capacity: vec![None; 5] };
        net.validate()?;
        Ok(net)
    }

    /// Objective used with [`Network::case_study`]: eta = 0.2, fairness between L2 and L6.
    pub fn case_study_objective(eta: f64) -> NetworkObjectiveSpec {
        NetworkObjectiveSpec {
            eta,
            fairness_pairs: vec![FairnessPair { link_a: 1, link_b: 5, junction: 1 }],
            time_weighting: true,
        }
    }
}

/// Counts of the pieces of a network program.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct ProgramSize {
    pub variables: usize,
    /// Link flows plus ramp flows; excludes fairness slacks.
    pub control_variables: usize,
    pub rows: usize,
    pub compatibility_rows: usize,
}

pub fn program_size(lp: &LinearProgram, layout: &NetworkLayout) -> ProgramSize {
    let slack: usize = layout.fairness.iter().map(Vec::len).sum();
    ProgramSize {
        variables: lp.num_variables(),
        control_variables: lp.num_variables() - slack,
        rows: lp.rows.len(),
        compatibility_rows: lp.rows.iter().filter(|r| r.provenance.family.is_compatibility()).count(),
    }
}

/// Builds the network program: weighted main-line flows minus a fairness penalty,
/// subject to robust rows per link, junction conservation, ramp priority and exit supply.
pub fn build_network_lp(net: &Network, spec: &NetworkObjectiveSpec) -> Result<(LinearProgram, NetworkLayout)> {
    net.validate()?;
    if !(spec.eta >= 0.0) {
        return Err(Error::InvalidParameters(format!("eta = {} must be nonnegative", spec.eta)));
    }
    let n = net.n_max();
    let mut lp = LinearProgram::new(Direction::Maximize);
    let mut layout = NetworkLayout { links: Vec::new(), on_ramp: Vec::new(), off_ramp: Vec::new(), fairness: Vec::new() };
    for (l, link) in net.links.iter().enumerate() {
        let cap = link.fd.capacity;
        let in_cap = net.entry_demand[l].map_or(cap, |d| d.min(cap));
        let q_in = (1..=n).map(|i| lp.add_variable(format!("q_in_{}_{i}", link.name), 0.0, in_cap)).collect();
        let q_out = (1..=n).map(|i| lp.add_variable(format!("q_out_{}_{i}", link.name), 0.0, cap)).collect();
        layout.links.push(FlowLayout { q_in, q_out });
    }
    for (j, junc) in net.junctions.iter().enumerate() {
        let ub = net.on_ramp_capacity[j].unwrap_or(f64::INFINITY);
        layout.on_ramp.push(junc.has_on_ramp.then(|| {
            (1..=n).map(|i| lp.add_variable(format!("q_on_{}_{i}", junc.name), 0.0, ub)).collect()
        }));
        layout.off_ramp.push(junc.has_off_ramp.then(|| {
            (1..=n).map(|i| lp.add_variable(format!("q_off_{}_{i}", junc.name), 0.0, f64::INFINITY)).collect()
        }));
    }
    for (f, _) in spec.fairness_pairs.iter().enumerate() {
        let ys = (1..=n).map(|i| lp.add_variable(format!("y_{f}_{i}"), 0.0, f64::INFINITY)).collect();
        layout.fairness.push(ys);
    }

    for fl in &layout.links {
        for i in 0..n {
            let w = if spec.time_weighting { (n - i) as f64 } else { 1.0 };
            lp.objective[fl.q_in[i]] += w;
            lp.objective[fl.q_out[i]] += w;
        }
    }
    for ys in &layout.fairness {
        for &y in ys {
            lp.objective[y] = -spec.eta;
        }
    }

    let per_link: Vec<Vec<ConstraintRow>> = net
        .links
        .par_iter()
        .zip(&layout.links)
        .enumerate()
        .map(|(l, (link, fl))| build_robust_rows(&link.fd, &link.chance, &link.disc, fl, l))
        .collect();
    for rows in per_link {
        lp.rows.extend(rows);
    }
    for (j, junc) in net.junctions.iter().enumerate() {
        lp.rows.extend(junction_rows(junc, j, &layout, n));
        if let (Some(p), Some(on)) = (junc.ramp_priority, &layout.on_ramp[j]) {
            let lanes = net.links[p].lanes as f64;
            for i in 0..n {
                let coefs = vec![(on[i], 1.0), (layout.links[p].q_out[i], -1.0 / lanes)];
                lp.add_row(ConstraintRow::ge(coefs, 0.0, Provenance::model(Family::RampShare, j, i + 1)));
            }
        }
    }
    for (l, rho) in net.exit_density.iter().enumerate() {
        if let Some(rho) = rho {
            let link = &net.links[l];
            let cap = link.fd.supply(*rho)?;
            for i in 0..n {
                let coefs = vec![(layout.links[l].q_out[i], 1.0)];
                lp.add_row(ConstraintRow::le(coefs, cap, Provenance::model(Family::ExitSupply, l, i + 1)));
            }
        }
    }
    for (f, pair) in spec.fairness_pairs.iter().enumerate() {
        let (a, b) = (pair.link_a, pair.link_b);
        let (na, nb) = (net.links[a].lanes as f64, net.links[b].lanes as f64);
        for i in 0..n {
            let y = layout.fairness[f][i];
            let diff = [(layout.links[b].q_out[i], na), (layout.links[a].q_out[i], -nb)];
            let tag = Provenance::model(Family::Fairness, pair.junction, i + 1);
            lp.add_row(ConstraintRow::ge(vec![(y, 1.0), (diff[0].0, -diff[0].1), (diff[1].0, -diff[1].1)], 0.0, tag));
            lp.add_row(ConstraintRow::ge(vec![(y, 1.0), (diff[0].0, diff[0].1), (diff[1].0, diff[1].1)], 0.0, tag));
        }
    }
    Ok((lp, layout))
}

/// Flows read back from a solved network program.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkPlan {
    pub q_in: Vec<Vec<f64>>,
    pub q_out: Vec<Vec<f64>>,
    pub q_on: Vec<Option<Vec<f64>>>,
    pub q_off: Vec<Option<Vec<f64>>>,
}

impl NetworkPlan {
    pub fn from_solution(layout: &NetworkLayout, sol: &LpSolution) -> Self {
        let pick = |ids: &Vec<usize>| ids.iter().map(|&j| sol.x[j]).collect::<Vec<f64>>();
        Self {
            q_in: layout.links.iter().map(|l| pick(&l.q_in)).collect(),
            q_out: layout.links.iter().map(|l| pick(&l.q_out)).collect(),
            q_on: layout.on_ramp.iter().map(|o| o.as_ref().map(pick)).collect(),
            q_off: layout.off_ramp.iter().map(|o| o.as_ref().map(pick)).collect(),
        }
    }

    /// One row per step; flows in veh/h.
    pub fn to_csv(&self, net: &Network) -> String {
        let dt = net.links[0].disc.dt;
        let mut header = vec!["step".to_string(), "t_start_s".to_string()];
        for l in &net.links {
            header.push(format!("{}_in_vph", l.name));
            header.push(format!("{}_out_vph", l.name));
        }
        for (j, junc) in net.junctions.iter().enumerate() {
            if self.q_on[j].is_some() {
                header.push(format!("{}_on_vph", junc.name));
            }
            if self.q_off[j].is_some() {
                header.push(format!("{}_off_vph", junc.name));
            }
        }
        let mut s = header.join(",") + "\n";
        for i in 0..net.n_max() {
            let mut row = vec![(i + 1).to_string(), (i as f64 * dt).to_string()];
            for l in 0..net.links.len() {
                row.push(crate::fd::vps_to_vph(self.q_in[l][i]).to_string());
                row.push(crate::fd::vps_to_vph(self.q_out[l][i]).to_string());
            }
            for j in 0..net.junctions.len() {
                for v in [&self.q_on[j], &self.q_off[j]].into_iter().flatten() {
                    row.push(crate::fd::vps_to_vph(v[i]).to_string());
                }
            }
            s += &(row.join(",") + "\n");
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepCase {
    pub n_max: usize,
    pub status: LpStatus,
    pub size: ProgramSize,
    /// `sum over links of 2 k_max n_max + n_max^2`.
    pub formula_rows: usize,
    pub build_seconds: f64,
    pub solve_seconds: f64,
    /// Flow of the tracked on-ramp sampled once per second (veh/h).
    pub ramp_trajectory: Vec<f64>,
}

/// Solves the network at several step counts and samples one on-ramp's plan on a
/// common one-second axis.
pub fn time_step_sensitivity(
    net: &Network,
    spec: &NetworkObjectiveSpec,
    n_max_list: &[usize],
    ramp_junction: usize,
    opts: &SolverOptions,
) -> Result<Vec<StepCase>> {
    n_max_list
        .iter()
        .map(|&n| {
            let net = net.with_steps(n)?;
            let t0 = Instant::now();
            let (lp, layout) = build_network_lp(&net, spec)?;
            let build_seconds = t0.elapsed().as_secs_f64();
            let t1 = Instant::now();
            let sol = solve_lp(&lp, opts)?;
            let solve_seconds = t1.elapsed().as_secs_f64();
            let formula_rows = net.links.iter().map(|l| 2 * l.disc.k_max * n + n * n).sum();
            let mut ramp_trajectory = Vec::new();
            if sol.status == LpStatus::Optimal {
                if let Some(on) = &layout.on_ramp[ramp_junction] {
                    let dt = net.links[0].disc.dt;
                    let horizon = net.links[0].disc.t_max();
                    let mut t = 0.5;
                    while t < horizon {
                        let i = ((t / dt) as usize).min(n - 1);
                        ramp_trajectory.push(crate::fd::vps_to_vph(sol.x[on[i]]));
                        t += 1.0;
                    }
                }
            }
            Ok(StepCase {
                n_max: n,
                status: sol.status,
                size: program_size(&lp, &layout),
                formula_rows,
                build_seconds,
                solve_seconds,
                ramp_trajectory,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests;
