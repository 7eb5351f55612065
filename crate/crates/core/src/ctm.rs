//! Cell transmission (Godunov) simulation of single links and networks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fd::FdParams;
use crate::network::Network;
use crate::value_conditions::Discretization;

/// Outcome of one Godunov step on a link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkStep {
    pub densities: Vec<f64>,
    /// Inflow admitted by the first cell (veh/s).
    pub accepted_inflow: f64,
    /// Outflow through the last interface (veh/s).
    pub released_outflow: f64,
}

fn check_cfl(fd: &FdParams, dx: f64, dt: f64) -> Result<()> {
    let number = dt * fd.v_f.max(-fd.w) / dx;
    if number > 1.0 + 1e-12 {
        return Err(Error::Cfl(number));
    }
    Ok(())
}

/// Advances `cells` by `dt` with interface flux `min(demand, supply)`. The entry
/// admits up to the first cell's supply; the exit releases up to `outflow_cap`.
pub fn step_link(fd: &FdParams, cells: &[f64], dx: f64, inflow: f64, outflow_cap: f64, dt: f64) -> Result<LinkStep> {
    check_cfl(fd, dx, dt)?;
    let n = cells.len();
    let mut flux = vec![0.0; n + 1];
    flux[0] = inflow.max(0.0).min(fd.supply_unchecked(cells[0]));
    for i in 1..n {
        flux[i] = fd.demand_unchecked(cells[i - 1]).min(fd.supply_unchecked(cells[i]));
    }
    flux[n] = fd.demand_unchecked(cells[n - 1]).min(outflow_cap.max(0.0));
    let r = dt / dx;
    let densities = (0..n).map(|i| (cells[i] + r * (flux[i] - flux[i + 1])).clamp(0.0, fd.rho_m)).collect();
    Ok(LinkStep { densities, accepted_inflow: flux[0], released_outflow: flux[n] })
}

/// Largest time step that divides `period` and satisfies the CFL condition with 10 % margin.
pub fn stable_step(fd: &FdParams, dx: f64, period: f64) -> f64 {
    let limit = 0.9 * dx / fd.v_f.max(-fd.w);
    period / (period / limit).ceil()
}

/// Replays per-step boundary flows on one link with `cells_per_segment` cells per
/// segment, recording the state at the end of every decision step. Inflow beyond the
/// first cell's supply is dropped; `q_out` caps the exit flux.
pub fn simulate_link(
    fd: &FdParams,
    disc: &Discretization,
    rho: &[f64],
    q_in: &[f64],
    q_out: &[f64],
    cells_per_segment: usize,
) -> Result<CellState> {
    if rho.len() != disc.k_max {
        return Err(Error::Dimension { expected: disc.k_max, got: rho.len() });
    }
    if q_in.len() != disc.n_max || q_out.len() != disc.n_max {
        return Err(Error::Dimension { expected: disc.n_max, got: q_in.len().min(q_out.len()) });
    }
    let cps = cells_per_segment.max(1);
    let dx = disc.dx / cps as f64;
    let dt = stable_step(fd, dx, disc.dt);
    let sub = (disc.dt / dt).round() as usize;
    let mut cells: Vec<f64> = rho.iter().flat_map(|&r| std::iter::repeat_n(r, cps)).collect();
    let mut state = CellState { cell_length: dx, times: vec![0.0], densities: vec![cells.clone()] };
    for p in 0..disc.n_max {
        for _ in 0..sub {
            cells = step_link(fd, &cells, dx, q_in[p], q_out[p], dt)?.densities;
        }
        state.times.push((p + 1) as f64 * disc.dt);
        state.densities.push(cells.clone());
    }
    Ok(state)
}

/// Fixed boundary controls per decision step (veh/s).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Controls {
    /// Demand offered to links without an upstream node.
    pub entry_inflow: Vec<Option<Vec<f64>>>,
    /// On-ramp flows per junction.
    pub on_ramp: Vec<Option<Vec<f64>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CtmOptions {
    /// Cells per segment of the link discretization.
    pub cells_per_segment: usize,
    /// Record the state every this many simulation steps.
    pub record_every: usize,
}

impl Default for CtmOptions {
    fn default() -> Self {
        Self { cells_per_segment: 8, record_every: 1 }
    }
}

/// Density history of one link; `densities[r][c]` at `times[r]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellState {
    pub cell_length: f64,
    pub times: Vec<f64>,
    pub densities: Vec<Vec<f64>>,
}

impl CellState {
    pub fn max_density(&self) -> f64 {
        self.densities.iter().flatten().fold(0.0, |m, &v| m.max(v))
    }

    pub fn to_csv(&self) -> String {
        let ncell = self.densities.first().map_or(0, Vec::len);
        let mut s = String::from("t_s");
        for c in 0..ncell {
            s.push_str(&format!(",x{:.1}_m", (c as f64 + 0.5) * self.cell_length));
        }
        s.push('\n');
        for (t, row) in self.times.iter().zip(&self.densities) {
            s.push_str(&t.to_string());
            for v in row {
                s.push_str(&format!(",{v}"));
            }
            s.push('\n');
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    pub dt: f64,
    pub links: Vec<CellState>,
    /// Unserved entry demand at the end, per link (veh).
    pub entry_queue: Vec<f64>,
    /// Unserved on-ramp demand at the end, per junction (veh).
    pub ramp_queue: Vec<f64>,
    pub vehicles_entered: f64,
    pub vehicles_exited: f64,
    pub initial_count: f64,
    pub final_count: f64,
}

impl SimulationResult {
    /// `initial + entered - exited - final`; zero up to rounding.
    pub fn conservation_error(&self) -> f64 {
        self.initial_count + self.vehicles_entered - self.vehicles_exited - self.final_count
    }
}

/// Replays fixed controls on the network from the realized initial densities
/// (`realized[l][k]`, one value per segment).
pub fn simulate_network(net: &Network, realized: &[Vec<f64>], controls: &Controls, opts: CtmOptions) -> Result<SimulationResult> {
    net.validate()?;
    let nl = net.links.len();
    if realized.len() != nl {
        return Err(Error::Dimension { expected: nl, got: realized.len() });
    }
    let n_max = net.n_max();
    let period = net.links[0].disc.dt;
    let cpseg = opts.cells_per_segment.max(1);
    let dxs: Vec<f64> = net.links.iter().map(|l| l.disc.dx / cpseg as f64).collect();
    let dt = net
        .links
        .iter()
        .zip(&dxs)
        .map(|(l, &dx)| stable_step(&l.fd, dx, period))
        .fold(f64::INFINITY, f64::min);
    let sub = (period / dt).round() as usize;

    let mut cells: Vec<Vec<f64>> = Vec::with_capacity(nl);
    for (l, link) in net.links.iter().enumerate() {
        if realized[l].len() != link.disc.k_max {
            return Err(Error::Dimension { expected: link.disc.k_max, got: realized[l].len() });
        }
        let c: Vec<f64> = realized[l].iter().flat_map(|&r| std::iter::repeat_n(r.clamp(0.0, link.fd.rho_m), cpseg)).collect();
        cells.push(c);
    }
    let count = |cells: &[Vec<f64>]| -> f64 { cells.iter().zip(&dxs).map(|(c, dx)| c.iter().sum::<f64>() * dx).sum() };
    let initial_count = count(&cells);
    let attach = net.attachments();

    let mut history: Vec<CellState> =
        dxs.iter().zip(&cells).map(|(&dx, c)| CellState { cell_length: dx, times: vec![0.0], densities: vec![c.clone()] }).collect();
    let mut entry_queue = vec![0.0; nl];
    let mut ramp_queue = vec![0.0; net.junctions.len()];
    let (mut entered, mut exited) = (0.0, 0.0);
    let every = opts.record_every.max(1);

    for step in 0..n_max * sub {
        let p = step / sub;
        // Boundary flows of every link: inflow into the first cell, outflow from the last.
        let mut inflow = vec![0.0; nl];
        let mut outflow = vec![0.0; nl];
        for (l, link) in net.links.iter().enumerate() {
            if !attach[l].0 {
                let plan = controls.entry_inflow.get(l).and_then(|v| v.as_ref()).map_or(0.0, |v| v[p]);
                let offered = plan + entry_queue[l] / dt;
                let acc = offered.min(link.fd.supply_unchecked(cells[l][0]));
                entry_queue[l] = (entry_queue[l] + (plan - acc) * dt).max(0.0);
                inflow[l] = acc;
                entered += acc * dt;
            }
            if !attach[l].1 {
                let cap = net.exit_density[l].map_or(link.fd.capacity, |r| link.fd.supply_unchecked(r));
                let out = link.fd.demand_unchecked(*cells[l].last().unwrap()).min(cap);
                outflow[l] = out;
                exited += out * dt;
            }
        }
        for (j, junc) in net.junctions.iter().enumerate() {
            let plan = controls.on_ramp.get(j).and_then(|v| v.as_ref()).map_or(0.0, |v| v[p]);
            let ramp_demand = if junc.has_on_ramp { plan + ramp_queue[j] / dt } else { 0.0 };
            let supply: Vec<f64> = junc.outgoing.iter().map(|&o| net.links[o].fd.supply_unchecked(cells[o][0])).collect();
            // Ramp first, limited by supply; its unserved part waits.
            let ramp_in: Vec<f64> = junc.p2.iter().zip(&supply).map(|(s, sup)| (s * ramp_demand).min(*sup)).collect();
            let ramp_served: f64 = ramp_in.iter().sum();
            if junc.has_on_ramp {
                ramp_queue[j] = (ramp_queue[j] + (plan - ramp_served) * dt).max(0.0);
                entered += ramp_served * dt;
            }
            let send: Vec<f64> = junc.incoming.iter().map(|&i| net.links[i].fd.demand_unchecked(*cells[i].last().unwrap())).collect();
            // Proportional reduction per outgoing link, then FIFO per incoming link.
            let scale: Vec<f64> = (0..junc.outgoing.len())
                .map(|r| {
                    let want: f64 = (0..send.len()).map(|c| junc.p1[r][c] * send[c]).sum();
                    let room = (supply[r] - ramp_in[r]).max(0.0);
                    if want > room { room / want } else { 1.0 }
                })
                .collect();
            let theta: Vec<f64> = (0..send.len())
                .map(|c| (0..junc.outgoing.len()).filter(|&r| junc.p1[r][c] > 0.0).map(|r| scale[r]).fold(1.0, f64::min))
                .collect();
            for (c, &i) in junc.incoming.iter().enumerate() {
                let out = theta[c] * send[c];
                outflow[i] = out;
                exited += junc.p3[c] * out * dt;
            }
            for (r, &o) in junc.outgoing.iter().enumerate() {
                inflow[o] = ramp_in[r] + (0..send.len()).map(|c| junc.p1[r][c] * theta[c] * send[c]).sum::<f64>();
            }
        }
        for (l, link) in net.links.iter().enumerate() {
            // Boundary flows are already admissible, so the link step only redistributes.
            let st = step_link(&link.fd, &cells[l], dxs[l], inflow[l], outflow[l], dt)?;
            debug_assert!((st.accepted_inflow - inflow[l]).abs() < 1e-9);
            cells[l] = st.densities;
        }
        if (step + 1) % every == 0 || step + 1 == n_max * sub {
            let t = (step + 1) as f64 * dt;
            for (h, c) in history.iter_mut().zip(&cells) {
                h.times.push(t);
                h.densities.push(c.clone());
            }
        }
    }
    let final_count = count(&cells);
    Ok(SimulationResult {
        dt,
        links: history,
        entry_queue,
        ramp_queue,
        vehicles_entered: entered,
        vehicles_exited: exited,
        initial_count,
        final_count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::Network;

    fn fd() -> FdParams {
        FdParams::from_critical(25.0, 0.02, 0.125).unwrap()
    }

    #[test]
    fn equilibrium_is_stationary() {
        let fd = fd();
        let rho = 0.012;
        let q = fd.flux(rho).unwrap();
        let cells = vec![rho; 10];
        let st = step_link(&fd, &cells, 50.0, q, q, 1.8).unwrap();
        for v in &st.densities {
            assert!((v - rho).abs() < 1e-15);
        }
    }

    #[test]
    fn cfl_violation_is_rejected() {
        assert!(matches!(step_link(&fd(), &[0.01; 3], 10.0, 0.0, 0.0, 0.5), Err(Error::Cfl(_))));
    }

    #[test]
    fn jam_release_by_hand() {
        // Fully jammed cells drained at capacity from the downstream end.
        let fd = fd();
        let (dx, dt) = (50.0, 1.8);
        let c = fd.capacity;
        let cells = vec![fd.rho_m; 4];
        let s1 = step_link(&fd, &cells, dx, 0.0, c, dt).unwrap();
        assert!((s1.released_outflow - c).abs() < 1e-12);
        assert_eq!(s1.accepted_inflow, 0.0);
        let last = fd.rho_m - dt / dx * c;
        assert!((s1.densities[3] - last).abs() < 1e-12);
        assert_eq!(&s1.densities[..3], &[fd.rho_m; 3]);
        let s2 = step_link(&fd, &s1.densities, dx, 0.0, c, dt).unwrap();
        let into_last = fd.supply(last).unwrap();
        assert!((s2.densities[2] - (fd.rho_m - dt / dx * into_last)).abs() < 1e-12);
        assert!((s2.densities[3] - (last + dt / dx * (into_last - c))).abs() < 1e-12);
    }

    #[test]
    fn closed_link_conserves_vehicles() {
        let fd = fd();
        let mut cells: Vec<f64> = (0..30).map(|i| 0.125 * ((i * 37 % 11) as f64 / 11.0)).collect();
        let dx = 40.0;
        let before: f64 = cells.iter().sum::<f64>() * dx;
        for _ in 0..1000 {
            cells = step_link(&fd, &cells, dx, 0.0, 0.0, 1.5).unwrap().densities;
        }
        let after: f64 = cells.iter().sum::<f64>() * dx;
        assert!((before - after).abs() < 1e-9);
    }

    #[test]
    fn stable_step_divides_the_period() {
        let dt = stable_step(&fd(), 75.0, 20.0);
        assert!((dt - 2.5).abs() < 1e-12);
    }

    #[test]
    fn empty_network_stays_empty_and_loaded_network_drains() {
        let net = Network::case_study(5, false, 0.975).unwrap();
        let none = Controls { entry_inflow: vec![None; 8], on_ramp: vec![None; 5] };
        let zero: Vec<Vec<f64>> = net.links.iter().map(|l| vec![0.0; l.disc.k_max]).collect();
        let r = simulate_network(&net, &zero, &none, CtmOptions::default()).unwrap();
        assert_eq!(r.final_count, 0.0);

        let full: Vec<Vec<f64>> = net.links.iter().map(|l| l.chance.rho_mean.clone()).collect();
        let r = simulate_network(&net, &full, &none, CtmOptions::default()).unwrap();
        assert!(r.final_count < r.initial_count);
        assert!(r.conservation_error().abs() < 1e-7, "{}", r.conservation_error());
        let csv = r.links[2].to_csv();
        assert!(csv.starts_with("t_s,x37.5_m"));
    }
}
