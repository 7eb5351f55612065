//! Triangular fundamental diagram.
//!
//! All quantities are SI: speeds in m/s, densities in veh/m, flows in veh/s.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const REL_TOL: f64 = 1e-6;

/// Vehicles per hour expressed in veh/s.
pub fn vph_to_vps(q: f64) -> f64 {
    q / 3600.0
}

pub fn vps_to_vph(q: f64) -> f64 {
    q * 3600.0
}

/// Critical density of a triangular diagram given both wave speeds and the jam density.
pub fn derive_critical_density(v_f: f64, w: f64, rho_m: f64) -> Result<f64> {
    if !(v_f > 0.0 && w < 0.0 && rho_m > 0.0) {
        return Err(Error::InvalidParameters(format!(
            "need v_f > 0, w < 0, rho_m > 0 (got {v_f}, {w}, {rho_m})"
        )));
    }
    Ok(-w * rho_m / (v_f - w))
}

/// Triangular flux function `psi`, kinked at the critical density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FdParams {
    pub v_f: f64,
    pub w: f64,
    pub rho_c: f64,
    pub rho_m: f64,
    pub capacity: f64,
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= REL_TOL * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

impl FdParams {
    /// Builds from free-flow speed, critical and jam density; `w` and the capacity are derived.
    pub fn from_critical(v_f: f64, rho_c: f64, rho_m: f64) -> Result<Self> {
        if !(v_f > 0.0 && rho_c > 0.0 && rho_c < rho_m) {
            return Err(Error::InvalidParameters(format!(
                "need v_f > 0 and 0 < rho_c < rho_m (got {v_f}, {rho_c}, {rho_m})"
            )));
        }
        let w = -rho_c * v_f / (rho_m - rho_c);
        Self::new(v_f, w, rho_c, rho_m, rho_c * v_f)
    }

    /// Builds from the two wave speeds and the jam density.
    pub fn from_speeds(v_f: f64, w: f64, rho_m: f64) -> Result<Self> {
        let rho_c = derive_critical_density(v_f, w, rho_m)?;
        Self::new(v_f, w, rho_c, rho_m, rho_c * v_f)
    }

    /// Builds from capacity, free-flow speed and jam density.
    pub fn from_capacity(v_f: f64, capacity: f64, rho_m: f64) -> Result<Self> {
        if !(v_f > 0.0 && capacity > 0.0) {
            return Err(Error::InvalidParameters(format!(
                "need v_f > 0 and capacity > 0 (got {v_f}, {capacity})"
            )));
        }
        Self::from_critical(v_f, capacity / v_f, rho_m)
    }

    /// Checked constructor; all five values must agree with each other.
    pub fn new(v_f: f64, w: f64, rho_c: f64, rho_m: f64, capacity: f64) -> Result<Self> {
        let all = [v_f, w, rho_c, rho_m, capacity];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameters("non-finite diagram parameter".into()));
        }
        if !(v_f > 0.0 && w < 0.0 && rho_c > 0.0 && rho_c < rho_m) {
            return Err(Error::InvalidParameters(format!(
                "need v_f > 0, w < 0, 0 < rho_c < rho_m (got {v_f}, {w}, {rho_c}, {rho_m})"
            )));
        }
        if !close(rho_c, -w * rho_m / (v_f - w)) {
            return Err(Error::InvalidParameters(format!(
                "rho_c = {rho_c} inconsistent with -w*rho_m/(v_f-w) = {}",
                -w * rho_m / (v_f - w)
            )));
        }
        if !close(capacity, rho_c * v_f) {
            return Err(Error::InvalidParameters(format!(
                "capacity {capacity} != rho_c*v_f = {}",
                rho_c * v_f
            )));
        }
        Ok(Self { v_f, w, rho_c, rho_m, capacity })
    }

    /// Multiplies densities and flows by the lane count; speeds are unchanged.
    pub fn scaled(&self, lanes: f64) -> Self {
        Self {
            v_f: self.v_f,
            w: self.w,
            rho_c: self.rho_c * lanes,
            rho_m: self.rho_m * lanes,
            capacity: self.capacity * lanes,
        }
    }

    fn check_density(&self, rho: f64, what: &'static str) -> Result<()> {
        if !(0.0..=self.rho_m).contains(&rho) {
            return Err(Error::Domain { what, value: rho, lo: 0.0, hi: self.rho_m });
        }
        Ok(())
    }

    pub fn flux(&self, rho: f64) -> Result<f64> {
        self.check_density(rho, "flux density")?;
        Ok(self.flux_unchecked(rho))
    }

    /// Receiving capacity of a road section at density `rho`.
    pub fn supply(&self, rho: f64) -> Result<f64> {
        self.check_density(rho, "supply density")?;
        Ok(self.supply_unchecked(rho))
    }

    /// Sending capacity of a road section at density `rho`.
    pub fn demand(&self, rho: f64) -> Result<f64> {
        self.check_density(rho, "demand density")?;
        Ok(self.demand_unchecked(rho))
    }

    pub(crate) fn flux_unchecked(&self, rho: f64) -> f64 {
        if rho <= self.rho_c {
            self.v_f * rho
        } else {
            self.w * (rho - self.rho_m)
        }
    }

    pub(crate) fn supply_unchecked(&self, rho: f64) -> f64 {
        if rho <= self.rho_c {
            self.capacity
        } else {
            self.w * (rho - self.rho_m)
        }
    }

    pub(crate) fn demand_unchecked(&self, rho: f64) -> f64 {
        if rho <= self.rho_c {
            self.v_f * rho
        } else {
            self.capacity
        }
    }

    /// Density on the congested branch carrying flow `q`.
    pub fn congested_density(&self, q: f64) -> f64 {
        self.rho_m + q / self.w
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn link() -> FdParams {
        FdParams::from_critical(30.0, 0.074, 0.5).unwrap()
    }

    #[test]
    fn flux_examples() {
        let fd = link();
        assert!((fd.w - -5.2113).abs() < 1e-4);
        assert_eq!(fd.flux(0.0).unwrap(), 0.0);
        assert!((fd.flux(0.074).unwrap() - 2.22).abs() < 1e-12);
        assert!((vps_to_vph(fd.capacity) - 7992.0).abs() < 1e-9);
        assert!(fd.flux(0.5).unwrap().abs() < 1e-12);
        assert!(fd.flux(-0.01).is_err());
        assert!(fd.flux(0.51).is_err());
    }

    #[test]
    fn supply_examples() {
        let lane = FdParams::from_critical(25.0, 0.02, 0.125).unwrap();
        assert!((lane.w - -4.76).abs() < 5e-3);
        assert!((lane.supply(0.088 * 0.02).unwrap() - 0.5).abs() < 1e-12);
        assert!((vps_to_vph(lane.supply(0.0).unwrap()) - 1800.0).abs() < 1e-9);
        assert!(lane.supply(lane.rho_m).unwrap().abs() < 1e-12);
        assert!((lane.supply(lane.rho_c).unwrap() - lane.capacity).abs() < 1e-12);
        assert!(lane.supply(1.0).is_err());
    }

    #[test]
    fn critical_density_examples() {
        let rc = derive_critical_density(25.0, -4.76, 0.125).unwrap();
        assert!((rc - 0.02).abs() < 5e-4, "{rc}");
        let w = -0.074 * 30.0 / (0.5 - 0.074);
        assert!((derive_critical_density(30.0, w, 0.5).unwrap() - 0.074).abs() < 1e-12);
        assert!((derive_critical_density(1.0, -1.0, 1.0).unwrap() - 0.5).abs() < 1e-15);
        assert!(derive_critical_density(1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn inconsistent_parameters_rejected() {
        assert!(FdParams::new(30.0, -5.0, 0.074, 0.5, 2.22).is_err());
        assert!(FdParams::new(30.0, -5.2113, 0.074, 0.5, 2.3).is_err());
        let fd = link();
        assert!(FdParams::new(fd.v_f, fd.w, fd.rho_c, fd.rho_m, fd.capacity).is_ok());
    }

    #[test]
    fn lane_scaling_keeps_speeds() {
        let lane = FdParams::from_critical(30.0, 0.0185, 0.125).unwrap();
        let link = lane.scaled(4.0);
        assert!((link.rho_c - 0.074).abs() < 1e-12);
        assert_eq!(link.v_f, 30.0);
        assert!((link.w - lane.w).abs() < 1e-12);
    }

    proptest::proptest! {
        #[test]
        fn flux_is_concave_and_below_supply(
            v_f in 1.0f64..40.0, w in -10.0f64..-0.5, rho_m in 0.05f64..1.0,
            a in 0.0f64..1.0, b in 0.0f64..1.0, lam in 0.0f64..1.0,
        ) {
            let fd = FdParams::from_speeds(v_f, w, rho_m).unwrap();
            let (ra, rb) = (a * rho_m, b * rho_m);
            let mid = lam * ra + (1.0 - lam) * rb;
            let lhs = fd.flux(mid).unwrap();
            let rhs = lam * fd.flux(ra).unwrap() + (1.0 - lam) * fd.flux(rb).unwrap();
            proptest::prop_assert!(lhs >= rhs - 1e-12);
            proptest::prop_assert!(fd.flux(ra).unwrap() <= fd.capacity + 1e-12);
            proptest::prop_assert!(fd.supply(ra).unwrap() >= fd.flux(ra).unwrap() - 1e-12);
            if ra >= fd.rho_c {
                proptest::prop_assert!((fd.supply(ra).unwrap() - fd.flux(ra).unwrap()).abs() < 1e-12);
            }
        }
    }
}
