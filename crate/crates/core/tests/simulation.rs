use std::sync::Arc;

use cavsim_core::network::{build_grid_network, EdgeKind, GridGeometry, NetworkGraph};
use cavsim_core::routing::{predict_total_travel_time, route_new_cav, TripRequest};
use cavsim_core::simulation::{
    audit_commits, m_pow_n, random_trips, read_run, run, write_artifacts, Mode, PendingArrival,
    Scenario, SimParams, Simulation,
};
use cavsim_core::trajectory::{feasible_exit_window, fit_boundary_trajectory};
use cavsim_core::CavId;
use num_bigint::BigUint;

fn grid(rows: usize, cols: usize) -> Arc<NetworkGraph<f64>> {
    Arc::new(build_grid_network(rows, cols, &GridGeometry::default()).unwrap())
}

fn scenario(g: &Arc<NetworkGraph<f64>>, params: SimParams<f64>, trips: Vec<TripRequest<f64>>, mode: Mode) -> Scenario<f64> {
    Scenario {
        graph: Arc::clone(g),
        params,
        trips,
        mode,
    }
}

/// Free-running travel time of one CAV: links at constant speed, each
/// intersection at the earliest feasible exit time.
fn isolated_chain(g: &NetworkGraph<f64>, params: &SimParams<f64>, route: &[cavsim_core::network::EdgeId], start: f64) -> f64 {
    let limits = params.coordination.limits;
    let (mut t, mut v) = (start, params.departure_speed);
    for &e in route {
        let edge = g.edge(e);
        match edge.kind {
            EdgeKind::Link => t += edge.length / v,
            EdgeKind::Internal { .. } => {
                let tf = feasible_exit_window(t, v, edge.length, &limits).unwrap().t_lo;
                v = fit_boundary_trajectory(t, v, tf, edge.length)
                    .unwrap()
                    .exit_speed()
                    .clamp(limits.v_min, limits.v_max);
                t = tf;
            }
        }
    }
    t - start
}

#[test]
fn single_cav_matches_the_isolated_chain() {
    for (rows, cols) in [(1, 1), (1, 3), (3, 3)] {
        let g = grid(rows, cols);
        let params = SimParams::default();
        for seed in 0..5 {
            let trips = random_trips(&g, 1, seed, (2.0, 2.0));
            let mut sim = Simulation::new(scenario(&g, params, trips, Mode::Proposed)).unwrap();
            sim.step().unwrap();
            let state = sim.world().cav(CavId(0)).unwrap().clone();
            let expected = isolated_chain(&g, &params, state.route.edges(), 2.0);
            let metrics = sim.run_to_end().unwrap();
            assert_eq!(metrics.trips.len(), 1);
            let got = metrics.trips[0].travel_time;
            assert!((got - expected).abs() < 1e-9, "{rows}x{cols} seed {seed}: {got} vs {expected}");
        }
    }
}

#[test]
fn zero_trips_give_zero_total() {
    let g = grid(2, 2);
    let m = run(scenario(&g, SimParams::default(), Vec::new(), Mode::Proposed)).unwrap();
    assert_eq!(m.total_travel_time(), 0.0);
    assert!(m.trips.is_empty() && m.events.is_empty() && m.commits.is_empty());
    let w = cavsim_core::simulation::WorldState::new(Arc::clone(&g), SimParams::default());
    let p = predict_total_travel_time(&w, &[], &[]).unwrap();
    assert_eq!(p.total, 0.0);
}

#[test]
fn random_trips_are_deterministic_and_reachable() {
    let g = grid(3, 4);
    let a = random_trips(&g, 60, 17, (5.0, 50.0));
    assert_eq!(a, random_trips(&g, 60, 17, (5.0, 50.0)));
    assert_ne!(a, random_trips(&g, 60, 18, (5.0, 50.0)));
    for (i, t) in a.iter().enumerate() {
        assert_eq!(t.cav, CavId(i as u32));
        assert_ne!(t.origin, t.destination);
        assert!(g.reachable_from(t.origin)[t.destination.index()]);
        assert!((5.0..50.0).contains(&t.start));
    }
    assert!(a.windows(2).all(|w| w[0].start <= w[1].start));
}

#[test]
fn prediction_matches_execution_after_the_last_arrival() {
    let g = grid(3, 3);
    for seed in 0..6 {
        let trips = random_trips(&g, 8, seed, (0.0, 15.0));
        let last = trips.last().unwrap().cav;
        let mut sim = Simulation::new(scenario(&g, SimParams::default(), trips, Mode::Proposed)).unwrap();
        while sim.next_start().map_or(true, |t| t.cav != last) {
            sim.step().unwrap();
        }
        let pending = sim.pending_arrival().unwrap().unwrap();
        let active: Vec<CavId> = pending.route_sets.iter().map(|s| s.cav).collect();
        let mut eval = pending.evaluator();
        let predicted = route_new_cav(&mut eval, &pending.previous, pending.new_index, true)
            .unwrap()
            .prediction;
        let metrics = sim.run_to_end().unwrap();
        let executed: f64 = metrics
            .trips
            .iter()
            .filter(|r| active.contains(&r.cav))
            .map(|r| r.travel_time)
            .sum();
        assert!(
            (predicted.total - executed).abs() < 1e-6,
            "seed {seed}: predicted {} executed {executed}",
            predicted.total
        );
    }
}

#[test]
fn every_trip_is_completed_or_rejected() {
    let g = grid(3, 3);
    for mode in [Mode::Proposed, Mode::Baseline] {
        let m = run(scenario(&g, SimParams::default(), random_trips(&g, 40, 2, (0.0, 30.0)), mode)).unwrap();
        assert_eq!(m.submitted, 40);
        assert_eq!(m.trips.len() + m.rejected.len(), 40);
        for r in &m.trips {
            assert!(r.t_finish > r.t_start);
            assert_eq!(r.travel_time, r.t_finish - r.t_start);
        }
        let audit = audit_commits(&m.commits, &SimParams::<f64>::default().coordination.safety, 0.1, 1e-6);
        assert!(audit.is_clean(), "{mode}: {:?}", audit.violations);
    }
}

#[test]
fn computations_table_reports_three_to_the_n() {
    let g = grid(3, 3);
    let m = run(scenario(&g, SimParams::default(), random_trips(&g, 20, 4, (0.0, 20.0)), Mode::Proposed)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_artifacts(&m, dir.path()).unwrap();
    let summary = read_run(dir.path()).unwrap();
    assert_eq!(summary.computations.len(), m.events.len());
    for row in &summary.computations {
        assert_eq!(row.m_pow_n, BigUint::from(3u32).pow(row.n_cavs as u32));
        assert_eq!(row.m_pow_n, m_pow_n(3, row.n_cavs));
        assert!(BigUint::from(row.evaluations) <= row.m_pow_n);
    }
}

#[test]
fn snapshots_evolve_identically() {
    let g = grid(2, 3);
    let mut sim = Simulation::new(scenario(&g, SimParams::default(), random_trips(&g, 10, 6, (0.0, 10.0)), Mode::Proposed)).unwrap();
    for _ in 0..25 {
        sim.step().unwrap();
    }
    let mut a = sim.world().snapshot();
    let mut b = a.snapshot();
    loop {
        let (ea, eb) = (a.step().unwrap(), b.step().unwrap());
        assert_eq!(ea, eb);
        assert_eq!(a.clock(), b.clock());
        if ea.is_none() {
            break;
        }
    }
}

#[test]
fn simultaneous_same_lane_entry_is_rejected_when_holding_is_disabled() {
    let g = grid(1, 1);
    let ix = &g.intersections()[0];
    let origin = *ix.entry_nodes.iter().find(|&&n| g.in_degree(n) == 0).unwrap();
    let dest = *ix
        .exit_nodes
        .iter()
        .find(|&&n| g.reachable_from(origin)[n.index()])
        .unwrap();
    let trip = |cav| TripRequest {
        cav: CavId(cav),
        origin,
        destination: dest,
        start: 0.0,
    };
    let mut params = SimParams::default();
    params.max_holds = 0;
    let mut sim = Simulation::new(scenario(&g, params, vec![trip(0), trip(1)], Mode::Proposed)).unwrap();
    while sim.next_start().map_or(true, |t| t.cav != CavId(1)) {
        sim.step().unwrap();
    }
    let pending: PendingArrival<f64> = sim.pending_arrival().unwrap().unwrap();
    for m in 0..3 {
        let mut c = pending.previous.clone();
        c[pending.new_index] = m;
        let p = predict_total_travel_time(&pending.world, &pending.route_sets, &c).unwrap();
        assert_eq!(p.total, f64::INFINITY);
        assert_eq!(p.stranded, vec![CavId(1)]);
    }
    let m = sim.run_to_end().unwrap();
    assert_eq!(m.trips.len(), 1);
    assert_eq!(m.rejected.len(), 1);
    assert_eq!(m.rejected[0].0, CavId(1));
}

#[test]
fn holding_resolves_a_simultaneous_entry() {
    let g = grid(1, 1);
    let ix = &g.intersections()[0];
    let origin = *ix.entry_nodes.iter().find(|&&n| g.in_degree(n) == 0).unwrap();
    let dest = *ix
        .exit_nodes
        .iter()
        .find(|&&n| g.reachable_from(origin)[n.index()])
        .unwrap();
    let trips = (0..2)
        .map(|cav| TripRequest {
            cav: CavId(cav),
            origin,
            destination: dest,
            start: 0.0,
        })
        .collect();
    let m = run(scenario(&g, SimParams::default(), trips, Mode::Proposed)).unwrap();
    assert_eq!(m.trips.len(), 2);
    assert!(m.trips[1].t_finish > m.trips[0].t_finish);
}
