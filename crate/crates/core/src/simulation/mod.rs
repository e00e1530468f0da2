//! Event-driven execution of a scenario: CAVs appear at their start times,
//! are routed (proposed, baseline or oracle), and move node to node with
//! intersection coordination until they reach their destinations.

mod artifacts;
mod audit;
mod config;
mod world;

use std::sync::Arc;

use num_bigint::BigUint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coordination::{
    CavId, CoordinationError, CoordinationParams, LedgerEntry, SafetyParams,
};
use crate::network::{IntersectionId, NetworkError, NetworkGraph, NodeId};
use crate::routing::{
    baseline_assign, route_new_cav, route_sets_for_world, solve_system_optimal, Evaluator,
    RouteSet, TripRequest,
};
use crate::scalar::{cmp, Scalar};
use crate::trajectory::MotionLimits;

pub use artifacts::{
    compare_runs, read_run, write_artifacts, ArtifactError, ComparisonReport, ComparisonRow,
    ComputationRow, RunSummary, TravelTimeRow,
};
pub use audit::{audit_commits, check_causality, AuditReport, Violation, ViolationKind};
pub use config::{ConfigError, GridDims, ScenarioConfig, TripEntry, TripSpec};
pub use world::{CavState, Event, EventKind, StepEvent, WorldState};

#[derive(Debug, Error)]
pub enum SimulationError {
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Coordination(#[from] CoordinationError),
    #[error("no candidate route of {0} can be coordinated")]
    AllCandidatesInfeasible(CavId),
    #[error("oracle needs {required} evaluations, budget is {budget}")]
    OracleBudgetExceeded { required: String, budget: u64 },
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("engine invariant broken: {0}")]
    Internal(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Event-triggered routing with person-by-person re-routing.
    #[default]
    Proposed,
    /// Instantaneous shortest-time route at departure, never revised.
    Baseline,
    /// Exhaustive system-optimal assignment at every arrival.
    Oracle,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Proposed => "proposed",
            Mode::Baseline => "baseline",
            Mode::Oracle => "oracle",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimParams<T> {
    pub coordination: CoordinationParams<T>,
    /// Occupancy weight of the instantaneous cost map.
    pub kappa: T,
    /// Candidate routes per CAV.
    pub m: usize,
    pub departure_speed: T,
    /// Re-route only CAVs that suffer coordination delay.
    pub delayed_only: bool,
    /// Wait before retrying an entry that cannot be coordinated (s).
    pub hold_step: T,
    pub max_holds: u32,
    /// Largest `M^N` the oracle may enumerate.
    pub oracle_budget: u64,
}

impl<T: Scalar> Default for SimParams<T> {
    fn default() -> Self {
        let limits = MotionLimits {
            u_min: T::lit(-3.0),
            u_max: T::lit(3.0),
            v_min: T::lit(1.0),
            v_max: T::lit(15.0),
        };
        let safety = SafetyParams {
            rho: T::lit(2.0),
            phi: T::lit(0.5),
        };
        Self {
            coordination: CoordinationParams::new(limits, safety),
            kappa: T::lit(0.5),
            m: 3,
            departure_speed: T::lit(0.8) * limits.v_max,
            delayed_only: true,
            hold_step: T::lit(0.5),
            max_holds: 200,
            oracle_budget: 19_683,
        }
    }
}

impl<T: Scalar> SimParams<T> {
    pub fn validate(&self) -> Result<(), String> {
        self.coordination.validate()?;
        if !(1..=3).contains(&self.m) {
            return Err(format!("m must be 1, 2 or 3, got {}", self.m));
        }
        if !(self.kappa >= T::zero()) {
            return Err(format!("kappa must be non-negative, got {}", self.kappa));
        }
        let l = &self.coordination.limits;
        if !(self.departure_speed >= l.v_min && self.departure_speed <= l.v_max) {
            return Err(format!(
                "departure speed {} outside [{}, {}]",
                self.departure_speed, l.v_min, l.v_max
            ));
        }
        if !(self.hold_step > T::zero()) {
            return Err(format!("hold step must be positive, got {}", self.hold_step));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Scenario<T> {
    pub graph: Arc<NetworkGraph<T>>,
    pub params: SimParams<T>,
    pub trips: Vec<TripRequest<T>>,
    pub mode: Mode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripRecord<T> {
    pub cav: CavId,
    pub t_start: T,
    pub t_finish: T,
    pub travel_time: T,
}

/// Routing work done when one CAV joined.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoutingEventRecord {
    pub event_index: usize,
    pub cav: CavId,
    /// CAVs in the network including the new one.
    pub n_cavs: usize,
    pub evaluations: usize,
    pub changes: usize,
}

/// A committed intersection plan together with the plans it was checked against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommitRecord<T> {
    pub intersection: IntersectionId,
    pub entry: LedgerEntry<T>,
    pub co_present: Vec<CavId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics<T> {
    pub mode: Mode,
    pub m: usize,
    pub submitted: usize,
    /// Completed trips in id order.
    pub trips: Vec<TripRecord<T>>,
    pub events: Vec<RoutingEventRecord>,
    pub rejected: Vec<(CavId, String)>,
    pub commits: Vec<CommitRecord<T>>,
}

impl<T: Scalar> Metrics<T> {
    pub fn total_travel_time(&self) -> T {
        self.trips.iter().map(|r| r.travel_time).sum()
    }

    /// `(n, sum of the first n travel times)` in id order.
    pub fn cumulative_totals(&self) -> Vec<(usize, T)> {
        let mut acc = T::zero();
        self.trips
            .iter()
            .enumerate()
            .map(|(i, r)| {
                acc = acc + r.travel_time;
                (i + 1, acc)
            })
            .collect()
    }

    pub fn total_evaluations(&self) -> usize {
        self.events.iter().map(|e| e.evaluations).sum()
    }

    pub fn reroute_changes(&self) -> usize {
        self.events.iter().map(|e| e.changes).sum()
    }
}

/// `m^n` as an exact integer.
pub fn m_pow_n(m: usize, n: usize) -> BigUint {
    BigUint::from(m).pow(n as u32)
}

/// World with a new CAV spawned and fresh candidate sets for every CAV.
#[derive(Debug, Clone)]
pub struct PendingArrival<T> {
    pub world: WorldState<T>,
    pub route_sets: Vec<RouteSet>,
    /// Current choices in id order; the new CAV's slot holds 0.
    pub previous: Vec<usize>,
    pub new_index: usize,
}

impl<T: Scalar> PendingArrival<T> {
    pub fn new(world: &WorldState<T>, trip: TripRequest<T>) -> Result<Self, SimulationError> {
        let mut world = world.snapshot();
        world.spawn(trip)?;
        let route_sets = route_sets_for_world(&world)?;
        let previous = world.cavs().values().map(|c| c.choice).collect();
        let new_index = world
            .cavs()
            .keys()
            .position(|&c| c == trip.cav)
            .expect("spawned");
        Ok(Self {
            world,
            route_sets,
            previous,
            new_index,
        })
    }

    pub fn evaluator(&self) -> Evaluator<'_, T> {
        Evaluator::new(&self.world, &self.route_sets)
    }
}

pub struct Simulation<T> {
    world: WorldState<T>,
    trips: Vec<TripRequest<T>>,
    next_trip: usize,
    mode: Mode,
    metrics: Metrics<T>,
}

impl<T: Scalar> Simulation<T> {
    pub fn new(scenario: Scenario<T>) -> Result<Self, SimulationError> {
        let Scenario {
            graph,
            params,
            mut trips,
            mode,
        } = scenario;
        params.validate().map_err(SimulationError::InvalidScenario)?;
        for t in &trips {
            if !graph.contains_node(t.origin) || !graph.contains_node(t.destination) {
                return Err(SimulationError::InvalidScenario(format!(
                    "{} references an unknown node",
                    t.cav
                )));
            }
            if t.origin == t.destination {
                return Err(SimulationError::InvalidScenario(format!(
                    "{} has identical origin and destination",
                    t.cav
                )));
            }
            if !(t.start >= T::zero()) || !t.start.is_finite() {
                return Err(SimulationError::InvalidScenario(format!(
                    "{} has start time {}",
                    t.cav, t.start
                )));
            }
        }
        trips.sort_by(|a, b| cmp(a.start, b.start).then(a.cav.cmp(&b.cav)));
        let mut ids: Vec<CavId> = trips.iter().map(|t| t.cav).collect();
        ids.sort();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(SimulationError::InvalidScenario("duplicate cav id".into()));
        }
        if mode == Mode::Oracle {
            let required = m_pow_n(params.m, trips.len());
            if required > BigUint::from(params.oracle_budget) {
                return Err(SimulationError::OracleBudgetExceeded {
                    required: required.to_string(),
                    budget: params.oracle_budget,
                });
            }
        }
        let metrics = Metrics {
            mode,
            m: params.m,
            submitted: trips.len(),
            trips: Vec::new(),
            events: Vec::new(),
            rejected: Vec::new(),
            commits: Vec::new(),
        };
        Ok(Self {
            world: WorldState::new(graph, params),
            trips,
            next_trip: 0,
            mode,
            metrics,
        })
    }

    pub fn world(&self) -> &WorldState<T> {
        &self.world
    }

    pub fn metrics(&self) -> &Metrics<T> {
        &self.metrics
    }

    /// Trip whose start is the next event, if any.
    pub fn next_start(&self) -> Option<TripRequest<T>> {
        let trip = *self.trips.get(self.next_trip)?;
        match self.world.next_event() {
            Some(ev) if ev.time <= trip.start => None,
            _ => Some(trip),
        }
    }

    pub fn is_done(&self) -> bool {
        self.next_trip >= self.trips.len() && self.world.next_event().is_none()
    }

    /// Processes one event; returns `false` once nothing is left.
    pub fn step(&mut self) -> Result<bool, SimulationError> {
        if let Some(trip) = self.next_start() {
            self.next_trip += 1;
            self.start_trip(trip)?;
            return Ok(true);
        }
        let Some(ev) = self.world.step()? else {
            return Ok(false);
        };
        match ev {
            StepEvent::Committed { cav, intersection } => {
                let ledger = &self.world.ledgers()[intersection.index()];
                let entry = ledger.get(cav).expect("just committed").clone();
                let co_present = ledger
                    .entries()
                    .iter()
                    .map(|e| e.cav)
                    .filter(|&c| c != cav)
                    .collect();
                self.metrics.commits.push(CommitRecord {
                    intersection,
                    entry,
                    co_present,
                });
            }
            StepEvent::Stranded { cav, time } => {
                log::warn!("{cav} stranded at t={time}: coordination stayed infeasible");
                self.metrics
                    .rejected
                    .push((cav, format!("coordination infeasible at t={time}")));
            }
            StepEvent::Completed {
                cav,
                t_start,
                t_finish,
                ..
            } => {
                log::debug!("{cav} completed at t={t_finish}");
                self.metrics.trips.push(TripRecord {
                    cav,
                    t_start,
                    t_finish,
                    travel_time: t_finish - t_start,
                });
            }
            _ => {}
        }
        Ok(true)
    }

    fn reject(&mut self, cav: CavId, reason: String) {
        log::warn!("{cav} rejected: {reason}");
        self.metrics.rejected.push((cav, reason));
    }

    fn start_trip(&mut self, trip: TripRequest<T>) -> Result<(), SimulationError> {
        let event_index = self.metrics.events.len();
        match self.mode {
            Mode::Baseline => {
                let mut world = self.world.snapshot();
                world.spawn(trip)?;
                match baseline_assign(&world, trip.cav) {
                    Ok(route) => {
                        world.set_route(trip.cav, route, 0)?;
                        self.metrics.events.push(RoutingEventRecord {
                            event_index,
                            cav: trip.cav,
                            n_cavs: world.n_active(),
                            evaluations: 0,
                            changes: 0,
                        });
                        self.world = world;
                    }
                    Err(SimulationError::Network(e)) => self.reject(trip.cav, e.to_string()),
                    Err(e) => return Err(e),
                }
            }
            Mode::Proposed | Mode::Oracle => {
                let pending = match PendingArrival::new(&self.world, trip) {
                    Ok(p) => p,
                    Err(SimulationError::Network(e)) => {
                        self.reject(trip.cav, e.to_string());
                        return Ok(());
                    }
                    Err(e) => return Err(e),
                };
                let mut eval = pending.evaluator();
                let (choices, evaluations, changes) = if self.mode == Mode::Proposed {
                    let params = *self.world.params();
                    match route_new_cav(&mut eval, &pending.previous, pending.new_index, params.delayed_only) {
                        Ok(out) => (out.assignment.choices, out.evaluations, out.changes),
                        Err(SimulationError::AllCandidatesInfeasible(cav)) => {
                            self.reject(cav, "no candidate route can be coordinated".into());
                            return Ok(());
                        }
                        Err(e) => return Err(e),
                    }
                } else {
                    let budget = self.world.params().oracle_budget;
                    let best = solve_system_optimal(&mut eval, budget)?;
                    if !best.prediction.is_feasible() {
                        self.reject(trip.cav, "no assignment can be coordinated".into());
                        return Ok(());
                    }
                    let count = usize::try_from(&best.enumerated).unwrap_or(usize::MAX);
                    (best.assignment.choices, count, 0)
                };
                let n_cavs = pending.route_sets.len();
                log::debug!(
                    "{} joined at t={}: N={n_cavs}, {evaluations} evaluations, {changes} changes",
                    trip.cav,
                    trip.start
                );
                let PendingArrival {
                    mut world,
                    route_sets,
                    ..
                } = pending;
                world.apply_assignment(&route_sets, &choices)?;
                self.world = world;
                self.metrics.events.push(RoutingEventRecord {
                    event_index,
                    cav: trip.cav,
                    n_cavs,
                    evaluations,
                    changes,
                });
            }
        }
        Ok(())
    }

    /// Spawned copy of the world and route sets for the next trip start,
    /// without advancing the simulation.
    pub fn pending_arrival(&self) -> Option<Result<PendingArrival<T>, SimulationError>> {
        self.next_start().map(|trip| PendingArrival::new(&self.world, trip))
    }

    pub fn run_to_end(mut self) -> Result<Metrics<T>, SimulationError> {
        while self.step()? {}
        let mut metrics = self.metrics;
        metrics.trips.sort_by_key(|r| r.cav);
        Ok(metrics)
    }
}

/// Runs a scenario to completion.
pub fn run<T: Scalar>(scenario: Scenario<T>) -> Result<Metrics<T>, SimulationError> {
    Simulation::new(scenario)?.run_to_end()
}

/// `count` trips with uniform origin/destination pairs and uniform start
/// times in `window`. Ids follow start order.
pub fn random_trips<T: Scalar>(
    graph: &NetworkGraph<T>,
    count: usize,
    seed: u64,
    window: (T, T),
) -> Vec<TripRequest<T>> {
    let origins: Vec<NodeId> = graph
        .nodes()
        .iter()
        .map(|n| n.id)
        .filter(|&n| !graph.out_edges(n).is_empty())
        .collect();
    let dests: Vec<NodeId> = graph
        .nodes()
        .iter()
        .map(|n| n.id)
        .filter(|&n| graph.in_degree(n) > 0)
        .collect();
    if count == 0 || origins.is_empty() || dests.is_empty() {
        return Vec::new();
    }
    let reach: Vec<Vec<bool>> = origins.iter().map(|&o| graph.reachable_from(o)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = (window.0.as_f64(), window.1.as_f64());
    let mut trips = Vec::with_capacity(count);
    while trips.len() < count {
        let oi = rng.gen_range(0..origins.len());
        let d = dests[rng.gen_range(0..dests.len())];
        let start = if hi > lo { rng.gen_range(lo..hi) } else { lo };
        let o = origins[oi];
        if o == d || !reach[oi][d.index()] {
            continue;
        }
        trips.push((start, o, d));
    }
    trips.sort_by(|a, b| a.0.total_cmp(&b.0));
    trips
        .into_iter()
        .enumerate()
        .map(|(i, (start, origin, destination))| TripRequest {
            cav: CavId(i as u32),
            origin,
            destination,
            start: T::lit(start),
        })
        .collect()
}
