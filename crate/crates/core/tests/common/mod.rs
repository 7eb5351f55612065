#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use robust_lwr::constraints::ChanceSpec;
use robust_lwr::ctm::simulate_link;
use robust_lwr::fd::FdParams;
use robust_lwr::lax_hopf::MoskowitzSolver;
use robust_lwr::link_models::{build_throughput_lp, LinkCase};
use robust_lwr::lp::{solve_lp, LpStatus, SolverOptions};
use robust_lwr::value_conditions::{BoundaryFlows, Discretization, InitialDensityProfile};

/// A single link with boundary flows that satisfy every compatibility row.
pub struct FeasibleLink {
    pub fd: FdParams,
    pub disc: Discretization,
    pub rho: Vec<f64>,
    pub q_in: Vec<f64>,
    pub q_out: Vec<f64>,
}

impl FeasibleLink {
    pub fn profile(&self) -> InitialDensityProfile {
        InitialDensityProfile::new(self.rho.clone(), &self.fd).unwrap()
    }

    pub fn flows(&self) -> BoundaryFlows {
        BoundaryFlows::new(self.q_in.clone(), self.q_out.clone(), &self.fd).unwrap()
    }
}

pub fn random_geometry(rng: &mut ChaCha8Rng) -> (FdParams, Discretization) {
    let fd = FdParams::from_critical(rng.gen_range(20.0..32.0), rng.gen_range(0.015..0.025), rng.gen_range(0.1..0.15)).unwrap();
    let k = rng.gen_range(2..6);
    let n = rng.gen_range(5..12);
    let disc = Discretization::for_link(k as f64 * rng.gen_range(300.0..700.0), k, n as f64 * rng.gen_range(15.0..40.0), n).unwrap();
    (fd, disc)
}

/// Random densities, then flows from the deterministic throughput program under
/// random positive weights, which land on varied vertices of the compatible set.
pub fn random_feasible_links(seed: u64, count: usize) -> Vec<FeasibleLink> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    while out.len() < count {
        let (fd, disc) = random_geometry(&mut rng);
        let (k, n) = (disc.k_max, disc.n_max);
        let rho: Vec<f64> = (0..k).map(|_| rng.gen_range(0.0..0.8 * fd.rho_m)).collect();
        let case = LinkCase { fd, disc, chance: ChanceSpec::deterministic(rho.clone()) };
        let mut lp = build_throughput_lp(&case);
        for c in lp.objective.iter_mut().take(2 * n) {
            *c = rng.gen_range(0.1..1.0);
        }
        let sol = solve_lp(&lp, &SolverOptions::default()).unwrap();
        if sol.status != LpStatus::Optimal {
            continue;
        }
        let clip = |v: &[f64]| v.iter().map(|q| q.clamp(0.0, fd.capacity)).collect::<Vec<_>>();
        out.push(FeasibleLink { fd, disc, rho, q_in: clip(&sol.x[..n]), q_out: clip(&sol.x[n..2 * n]) });
    }
    out
}

/// Space-time L1 distance between the cell simulation and exact cell averages of the
/// Lax-Hopf density, sampled at the end of every decision step (veh).
pub fn ctm_l1_error(link: &FeasibleLink, cells_per_segment: usize) -> f64 {
    let (profile, flows) = (link.profile(), link.flows());
    let solver = MoskowitzSolver::new(&link.fd, &profile, &flows, &link.disc).unwrap();
    let state = simulate_link(&link.fd, &link.disc, &link.rho, &link.q_in, &link.q_out, cells_per_segment).unwrap();
    let dx = state.cell_length;
    let mut err = 0.0;
    for (t, row) in state.times.iter().zip(&state.densities).skip(1) {
        let m: Vec<f64> = (0..=row.len()).map(|i| solver.value(*t, i as f64 * dx).unwrap()).collect();
        for (i, r) in row.iter().enumerate() {
            err += (r - (m[i] - m[i + 1]) / dx).abs() * dx;
        }
    }
    err
}

/// Counts pairs where the Moskowitz function decreases in time or increases in space
/// by more than `tol`, over `pairs` random pairs of each kind.
pub fn monotonicity_violations(link: &FeasibleLink, pairs: usize, seed: u64, tol: f64) -> usize {
    let (profile, flows) = (link.profile(), link.flows());
    let solver = MoskowitzSolver::new(&link.fd, &profile, &flows, &link.disc).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (t_max, len) = (link.disc.t_max(), link.disc.length());
    let mut bad = 0;
    for _ in 0..pairs {
        let (x, t1, t2) = (rng.gen_range(0.0..=len), rng.gen_range(0.0..=t_max), rng.gen_range(0.0..=t_max));
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        if solver.value(hi, x).unwrap() < solver.value(lo, x).unwrap() - tol {
            bad += 1;
        }
        let (t, x1, x2) = (rng.gen_range(0.0..=t_max), rng.gen_range(0.0..=len), rng.gen_range(0.0..=len));
        let (lo, hi) = if x1 <= x2 { (x1, x2) } else { (x2, x1) };
        if solver.value(t, hi).unwrap() > solver.value(t, lo).unwrap() + tol {
            bad += 1;
        }
    }
    bad
}
