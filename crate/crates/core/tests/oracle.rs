mod common;

use common::{ctm_l1_error, monotonicity_violations, random_feasible_links};
use proptest::prelude::*;
use robust_lwr::ctm::simulate_link;

#[test]
fn cell_simulation_converges_to_the_exact_field() {
    let links = random_feasible_links(31, 6);
    let (mut coarse, mut fine) = (0.0, 0.0);
    for link in &links {
        let (a, b) = (ctm_l1_error(link, 8), ctm_l1_error(link, 16));
        assert!(b < a, "refinement did not help: {a} -> {b}");
        coarse += a;
        fine += b;
    }
    let ratio = fine / coarse;
    assert!((0.3..=0.8).contains(&ratio), "{ratio}");
}

#[test]
fn cell_simulation_never_exceeds_planned_inflow() {
    for link in random_feasible_links(8, 5) {
        let state = simulate_link(&link.fd, &link.disc, &link.rho, &link.q_in, &link.q_out, 8).unwrap();
        let count = |row: &Vec<f64>| row.iter().sum::<f64>() * state.cell_length;
        let change = count(state.densities.last().unwrap()) - count(&state.densities[0]);
        // Boundary flows can only be cut, never exceeded.
        let max_in = link.q_in.iter().sum::<f64>() * link.disc.dt;
        assert!(change <= max_in + 1e-9);
        assert!(state.densities.iter().flatten().all(|&r| (0.0..=link.fd.rho_m).contains(&r)));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn moskowitz_is_monotone(seed in 0u64..10_000) {
        let link = &random_feasible_links(seed, 1)[0];
        prop_assert_eq!(monotonicity_violations(link, 200, seed, 1e-9), 0);
    }
}
