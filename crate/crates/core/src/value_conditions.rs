//! Piecewise-affine initial and boundary value conditions of the Moskowitz function.
//!
//! Value conditions are `+inf` off their domain. Positions passed in are absolute;
//! internally everything is measured from the upstream boundary `zeta`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fd::FdParams;

/// Tolerance used when testing whether a point lies on a condition's domain.
pub(crate) const GEOM_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Discretization {
    pub zeta: f64,
    pub chi: f64,
    /// Segment length.
    pub dx: f64,
    /// Time step length.
    pub dt: f64,
    pub k_max: usize,
    pub n_max: usize,
}

impl Discretization {
    pub fn new(zeta: f64, chi: f64, k_max: usize, horizon: f64, n_max: usize) -> Result<Self> {
        if k_max == 0 || n_max == 0 {
            return Err(Error::InvalidParameters("k_max and n_max must be >= 1".into()));
        }
        if !(chi > zeta) || !(horizon > 0.0) {
            return Err(Error::InvalidParameters(format!(
                "need chi > zeta and horizon > 0 (got zeta={zeta}, chi={chi}, horizon={horizon})"
            )));
        }
        Ok(Self {
            zeta,
            chi,
            dx: (chi - zeta) / k_max as f64,
            dt: horizon / n_max as f64,
            k_max,
            n_max,
        })
    }

    /// A link of the given length starting at 0.
    pub fn for_link(length: f64, k_max: usize, horizon: f64, n_max: usize) -> Result<Self> {
        Self::new(0.0, length, k_max, horizon, n_max)
    }

    pub fn length(&self) -> f64 {
        self.chi - self.zeta
    }

    pub fn t_max(&self) -> f64 {
        self.dt * self.n_max as f64
    }

    pub(crate) fn rel(&self, x: f64) -> f64 {
        x - self.zeta
    }

    /// Time step index `p` (1-based) whose closed interval `[(p-1)T, pT]` contains `t`;
    /// ties go to the lower index.
    pub fn step_containing(&self, t: f64) -> Option<usize> {
        if t < -GEOM_EPS || t > self.t_max() + GEOM_EPS {
            return None;
        }
        let p = (t / self.dt - GEOM_EPS).ceil().max(1.0) as usize;
        Some(p.min(self.n_max))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialDensityProfile {
    pub rho: Vec<f64>,
}

impl InitialDensityProfile {
    pub fn new(rho: Vec<f64>, fd: &FdParams) -> Result<Self> {
        for &r in &rho {
            if !(0.0..=fd.rho_m).contains(&r) {
                return Err(Error::Domain { what: "initial density", value: r, lo: 0.0, hi: fd.rho_m });
            }
        }
        Ok(Self { rho })
    }

    pub fn uniform(k_max: usize, rho: f64) -> Self {
        Self { rho: vec![rho; k_max] }
    }

    /// Vehicles on the link, `sum_k rho(k) X`.
    pub fn total_count(&self, dx: f64) -> f64 {
        self.rho.iter().sum::<f64>() * dx
    }

    /// `sum_{i<k} rho(i) X` for 1-based `k`.
    pub fn count_before(&self, k: usize, dx: f64) -> f64 {
        self.rho[..k - 1].iter().sum::<f64>() * dx
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryFlows {
    pub q_in: Vec<f64>,
    pub q_out: Vec<f64>,
}

impl BoundaryFlows {
    pub fn new(q_in: Vec<f64>, q_out: Vec<f64>, fd: &FdParams) -> Result<Self> {
        if q_in.len() != q_out.len() {
            return Err(Error::Dimension { expected: q_in.len(), got: q_out.len() });
        }
        for &q in q_in.iter().chain(&q_out) {
            if !(0.0..=fd.capacity * (1.0 + 1e-9)).contains(&q) {
                return Err(Error::Domain { what: "boundary flow", value: q, lo: 0.0, hi: fd.capacity });
            }
        }
        Ok(Self { q_in, q_out })
    }

    pub fn zeros(n_max: usize) -> Self {
        Self { q_in: vec![0.0; n_max], q_out: vec![0.0; n_max] }
    }
}

/// Cumulative count of a piecewise-constant flow at time `t` within step `n` (1-based).
pub(crate) fn cumulative(q: &[f64], dt: f64, n: usize, t: f64) -> f64 {
    q[..n - 1].iter().sum::<f64>() * dt + q[n - 1] * (t - (n - 1) as f64 * dt)
}

fn in_closed(v: f64, lo: f64, hi: f64) -> bool {
    v >= lo - GEOM_EPS && v <= hi + GEOM_EPS
}

/// Initial condition of segment `k` (1-based).
pub fn initial_value(profile: &InitialDensityProfile, disc: &Discretization, k: usize, t: f64, x: f64) -> f64 {
    let x = disc.rel(x);
    let left = (k - 1) as f64 * disc.dx;
    if t.abs() > GEOM_EPS || !in_closed(x, left, left + disc.dx) {
        return f64::INFINITY;
    }
    -profile.count_before(k, disc.dx) - profile.rho[k - 1] * (x - left)
}

/// Upstream boundary condition of time step `n` (1-based).
pub fn upstream_value(flows: &BoundaryFlows, disc: &Discretization, n: usize, t: f64, x: f64) -> f64 {
    let start = (n - 1) as f64 * disc.dt;
    if disc.rel(x).abs() > GEOM_EPS || !in_closed(t, start, start + disc.dt) {
        return f64::INFINITY;
    }
    cumulative(&flows.q_in, disc.dt, n, t)
}

/// Downstream boundary condition of time step `n` (1-based).
pub fn downstream_value(
    flows: &BoundaryFlows,
    profile: &InitialDensityProfile,
    disc: &Discretization,
    n: usize,
    t: f64,
    x: f64,
) -> f64 {
    let start = (n - 1) as f64 * disc.dt;
    if (x - disc.chi).abs() > GEOM_EPS || !in_closed(t, start, start + disc.dt) {
        return f64::INFINITY;
    }
    cumulative(&flows.q_out, disc.dt, n, t) - profile.total_count(disc.dx)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CflReport {
    pub free_flow_number: f64,
    pub congestion_number: f64,
    pub warning: bool,
}

/// Courant numbers of the discretization. The exact solution does not need them
/// below one, so a violation only produces a warning.
pub fn check_cfl(fd: &FdParams, disc: &Discretization) -> CflReport {
    let free_flow_number = (fd.v_f * disc.dt / disc.dx).abs();
    let congestion_number = (fd.w * disc.dt / disc.dx).abs();
    let warning = free_flow_number >= 1.0;
    if warning {
        log::warn!("|v_f T / X| = {free_flow_number:.3} >= 1");
    }
    CflReport { free_flow_number, congestion_number, warning }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (FdParams, Discretization) {
        let fd = FdParams::from_critical(30.0, 0.074, 0.5).unwrap();
        (fd, Discretization::for_link(1200.0, 2, 100.0, 5).unwrap())
    }

    #[test]
    fn discretization_invariants() {
        let d = Discretization::new(100.0, 3958.0, 6, 420.0, 21).unwrap();
        assert!((d.chi - d.zeta - d.k_max as f64 * d.dx).abs() < 1e-9);
        assert!((d.t_max() - 420.0).abs() < 1e-12);
        assert!((d.dx - 643.0).abs() < 1e-12);
        assert!(Discretization::new(0.0, 1.0, 0, 1.0, 1).is_err());
        assert_eq!(d.step_containing(0.0), Some(1));
        assert_eq!(d.step_containing(20.0), Some(1));
        assert_eq!(d.step_containing(20.5), Some(2));
        assert_eq!(d.step_containing(420.0), Some(21));
        assert_eq!(d.step_containing(421.0), None);
    }

    #[test]
    fn initial_value_examples() {
        let (fd, _) = setup();
        let disc = Discretization::for_link(600.0, 1, 100.0, 5).unwrap();
        let prof = InitialDensityProfile::new(vec![0.1], &fd).unwrap();
        assert_eq!(initial_value(&prof, &disc, 1, 0.0, 0.0), 0.0);
        assert!((initial_value(&prof, &disc, 1, 0.0, 600.0) - -60.0).abs() < 1e-12);
        assert!(initial_value(&prof, &disc, 1, 1.0, 300.0).is_infinite());
    }

    #[test]
    fn upstream_value_examples() {
        let (fd, disc) = setup();
        let flows = BoundaryFlows::new(vec![0.5, 1.0, 0.2, 0.0, 0.0], vec![0.0; 5], &fd).unwrap();
        assert_eq!(upstream_value(&flows, &disc, 1, 0.0, 0.0), 0.0);
        let t = 1.5 * disc.dt;
        assert!((upstream_value(&flows, &disc, 2, t, 0.0) - (0.5 * 20.0 + 0.5 * 1.0 * 20.0)).abs() < 1e-12);
        assert!(upstream_value(&flows, &disc, 1, 0.0, disc.dx / 2.0).is_infinite());
    }

    #[test]
    fn downstream_value_examples() {
        let (fd, disc) = setup();
        let prof = InitialDensityProfile::new(vec![0.1, 0.2], &fd).unwrap();
        let flows = BoundaryFlows::new(vec![0.0; 5], vec![1.5, 0.0, 0.0, 0.0, 0.0], &fd).unwrap();
        let total = 0.3 * 600.0;
        assert!((downstream_value(&flows, &prof, &disc, 1, 0.0, disc.chi) + total).abs() < 1e-12);
        assert!((downstream_value(&flows, &prof, &disc, 1, disc.dt, disc.chi) - (1.5 * 20.0 - total)).abs() < 1e-12);
        assert!(downstream_value(&flows, &prof, &disc, 3, 50.0, 10.0).is_infinite());
    }

    #[test]
    fn continuity_across_segments_and_steps() {
        let (fd, disc) = setup();
        let prof = InitialDensityProfile::new(vec![0.1, 0.3], &fd).unwrap();
        let a = initial_value(&prof, &disc, 1, 0.0, disc.dx);
        let b = initial_value(&prof, &disc, 2, 0.0, disc.dx);
        assert!((a - b).abs() < 1e-12);
        let flows = BoundaryFlows::new(vec![0.3, 0.7, 1.0, 0.1, 2.0], vec![2.0, 0.1, 0.0, 1.1, 0.4], &fd).unwrap();
        for n in 1..disc.n_max {
            let t = n as f64 * disc.dt;
            let u1 = upstream_value(&flows, &disc, n, t, 0.0);
            let u2 = upstream_value(&flows, &disc, n + 1, t, 0.0);
            assert!((u1 - u2).abs() < 1e-12);
            let d1 = downstream_value(&flows, &prof, &disc, n, t, disc.chi);
            let d2 = downstream_value(&flows, &prof, &disc, n + 1, t, disc.chi);
            assert!((d1 - d2).abs() < 1e-12);
        }
    }

    #[test]
    fn cfl_examples() {
        let fd = FdParams::from_critical(30.0, 0.074, 0.5).unwrap();
        let link = Discretization::for_link(3858.0, 6, 420.0, 21).unwrap();
        let r = check_cfl(&fd, &link);
        assert!((r.free_flow_number - 0.933).abs() < 1e-3 && !r.warning);
        let lane = FdParams::from_critical(25.0, 0.02, 0.125).unwrap();
        let net = Discretization::for_link(600.0, 1, 500.0, 25).unwrap();
        let r = check_cfl(&lane, &net);
        assert!((r.free_flow_number - 0.8333).abs() < 1e-3 && !r.warning);
        let bad = Discretization::for_link(600.0, 1, 30.0, 1).unwrap();
        assert!(check_cfl(&fd, &bad).warning);
    }
}
