use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::lp::validate;

fn opts() -> SolverOptions {
    SolverOptions::default()
}

#[test]
fn case_study_sizes_and_solve() {
    let net = Network::case_study(25, true, 0.975).unwrap();
    let t = Instant::now();
    let (lp, layout) = build_network_lp(&net, &Network::case_study_objective(0.2)).unwrap();
    let size = program_size(&lp, &layout);
    eprintln!("size {size:?} build {:?}", t.elapsed());
    assert_eq!(size.control_variables, 550);
    assert_eq!(size.variables, 575);
    let t = Instant::now();
    let sol = solve_lp(&lp, &opts()).unwrap();
    eprintln!("solve {:?} iterations {}", t.elapsed(), sol.iterations);
    assert_eq!(sol.status, LpStatus::Optimal);
    assert!(sol.max_violation <= 1e-7);
}

#[test]
fn junction_validation_names_the_node() {
    let mut net = Network::case_study(5, false, 0.975).unwrap();
    net.junctions[1].p1[0][0] = 0.6;
    let err = net.validate().unwrap_err().to_string();
    assert!(err.contains("node2"), "{err}");
}

#[test]
fn pass_through_node_is_identity() {
    let j = Junction {
        name: "n".into(),
        incoming: vec![0],
        outgoing: vec![1],
        p1: vec![vec![1.0]],
        p2: vec![0.0],
        p3: vec![0.0],
        has_on_ramp: false,
        has_off_ramp: false,
        ramp_priority: None,
    };
    j.validate().unwrap();
    let layout = NetworkLayout {
        links: vec![FlowLayout { q_in: vec![0, 1], q_out: vec![2, 3] }, FlowLayout { q_in: vec![4, 5], q_out: vec![6, 7] }],
        on_ramp: vec![None],
        off_ramp: vec![None],
        fairness: vec![],
    };
    let rows = junction_rows(&j, 0, &layout, 2);
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[0].coefficients, vec![(4, 1.0), (2, -1.0)]);
    assert_eq!(rows[0].sense, crate::lp::Sense::Le);
    assert_eq!(rows[1].sense, crate::lp::Sense::Ge);
    assert_eq!(rows[2].coefficients, vec![(5, 1.0), (3, -1.0)]);
}

#[test]
fn junction_rows_conserve_vehicles() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..50 {
        let ni = rng.gen_range(1..4);
        let no = rng.gen_range(1..4);
        let off = rng.gen_bool(0.5);
        let mut p1 = vec![vec![0.0; ni]; no];
        let mut p3 = vec![0.0; ni];
        for c in 0..ni {
            let mut w: Vec<f64> = (0..no + off as usize).map(|_| rng.gen_range(0.01..1.0)).collect();
            let s: f64 = w.iter().sum();
            w.iter_mut().for_each(|v| *v /= s);
            for r in 0..no {
                p1[r][c] = w[r];
            }
            if off {
                p3[c] = w[no];
            }
            let total: f64 = (0..no).map(|r| p1[r][c]).sum::<f64>() + p3[c];
            p1[0][c] += 1.0 - total;
        }
        let mut p2: Vec<f64> = (0..no).map(|_| rng.gen_range(0.01..1.0)).collect();
        let s: f64 = p2.iter().sum();
        p2.iter_mut().for_each(|v| *v /= s);
        let j = Junction {
            name: "r".into(),
            incoming: (0..ni).collect(),
            outgoing: (ni..ni + no).collect(),
            p1,
            p2: p2.clone(),
            p3,
            has_on_ramp: true,
            has_off_ramp: off,
            ramp_priority: None,
        };
        j.validate().unwrap();
        // Variables: per link q_in, q_out (1 step), then on, off.
        let links: Vec<FlowLayout> = (0..ni + no).map(|l| FlowLayout { q_in: vec![2 * l], q_out: vec![2 * l + 1] }).collect();
        let base = 2 * (ni + no);
        let layout = NetworkLayout { links, on_ramp: vec![Some(vec![base])], off_ramp: vec![off.then(|| vec![base + 1])], fairness: vec![] };
        let rows = junction_rows(&j, 0, &layout, 1);
        // Sum of the Le rows: into-node flows minus out-of-node flows vanishes identically.
        let mut net = vec![0.0; base + 2];
        for r in rows.iter().filter(|r| r.sense == crate::lp::Sense::Le) {
            for &(v, c) in &r.coefficients {
                net[v] += c;
            }
        }
        for l in 0..ni {
            assert!((net[2 * l + 1] + 1.0).abs() < 1e-12);
        }
        for l in ni..ni + no {
            assert!((net[2 * l] - 1.0).abs() < 1e-12);
        }
        assert!((net[base] + 1.0).abs() < 1e-12);
        if off {
            assert!((net[base + 1] - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn optimal_plan_respects_nodes_ramps_and_caps() {
    let net = Network::case_study(10, true, 0.975).unwrap();
    let (lp, layout) = build_network_lp(&net, &Network::case_study_objective(0.2)).unwrap();
    let sol = solve_lp(&lp, &opts()).unwrap();
    assert_eq!(sol.status, LpStatus::Optimal);
    let plan = NetworkPlan::from_solution(&layout, &sol);
    for (j, junc) in net.junctions.iter().enumerate() {
        for i in 0..10 {
            for (r, &o) in junc.outgoing.iter().enumerate() {
                let mut want: f64 = junc.incoming.iter().enumerate().map(|(c, &l)| junc.p1[r][c] * plan.q_out[l][i]).sum();
                if let Some(on) = &plan.q_on[j] {
                    want += junc.p2[r] * on[i];
                }
                assert!((plan.q_in[o][i] - want).abs() <= 1e-7);
            }
            if let Some(p) = junc.ramp_priority {
                let on = plan.q_on[j].as_ref().unwrap()[i];
                assert!(on >= plan.q_out[p][i] / net.links[p].lanes as f64 - 1e-7);
            }
        }
    }
    for l in [3, 7] {
        for i in 0..10 {
            assert!(plan.q_out[l][i] <= net.links[l].fd.capacity + 1e-7);
        }
    }
    assert!(validate(&lp, &sol.x) <= 1e-7);
    let csv = plan.to_csv(&net);
    assert_eq!(csv.lines().count(), 11);
    assert!(csv.starts_with("step,t_start_s,L1_in_vph"));
}

#[test]
fn large_eta_equalizes_per_lane_outflows() {
    let net = Network::case_study(10, false, 0.975).unwrap();
    let spec = Network::case_study_objective(1e4);
    let (lp, layout) = build_network_lp(&net, &spec).unwrap();
    let sol = solve_lp(&lp, &opts()).unwrap();
    assert_eq!(sol.status, LpStatus::Optimal);
    let plan = NetworkPlan::from_solution(&layout, &sol);
    for i in 0..10 {
        let d = 2.0 * plan.q_out[5][i] - 5.0 * plan.q_out[1][i];
        assert!(d.abs() < 1e-6, "step {i}: {d}");
    }
}

#[test]
fn zero_eta_matches_pure_weighted_flow() {
    let net = Network::case_study(8, false, 0.975).unwrap();
    let mut spec = Network::case_study_objective(0.0);
    let (lp, _) = build_network_lp(&net, &spec).unwrap();
    let a = solve_lp(&lp, &opts()).unwrap();
    spec.fairness_pairs.clear();
    let (lp2, _) = build_network_lp(&net, &spec).unwrap();
    let b = solve_lp(&lp2, &opts()).unwrap();
    assert!((a.objective - b.objective).abs() < 1e-6 * b.objective.abs());
}

#[test]
fn single_step_network_solves() {
    let net = Network::case_study(1, true, 0.975).unwrap();
    let cases = time_step_sensitivity(&net, &Network::case_study_objective(0.2), &[1], 2, &opts()).unwrap();
    assert_eq!(cases[0].status, LpStatus::Optimal);
    let tr = &cases[0].ramp_trajectory;
    assert_eq!(tr.len(), 500);
    assert!(tr.iter().all(|v| (v - tr[0]).abs() < 1e-9));
}
