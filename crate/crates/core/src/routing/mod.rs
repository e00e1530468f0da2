//! Network-level routing: candidate routes, travel-time prediction, the
//! event-triggered assignment of new CAVs with person-by-person re-routing,
//! the exhaustive system-optimal oracle and the selfish baseline.

mod assign;
mod predict;

use serde::{Deserialize, Serialize};

use crate::coordination::CavId;
use crate::network::{shortest_time_path, NetworkError, NetworkGraph, NodeId, Route};
use crate::scalar::Scalar;
use crate::simulation::{SimulationError, WorldState};

pub use assign::{
    baseline_assign, rerouting, route_new_cav, solve_system_optimal, ReroutingOutcome,
    RoutingOutcome, SystemOptimum,
};
pub use predict::{predict_total_travel_time, Evaluator, TravelTimePrediction};

/// Threshold (s) above which a CAV counts as delayed.
pub const DELAY_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TripRequest<T> {
    pub cav: CavId,
    pub origin: NodeId,
    pub destination: NodeId,
    /// Departure time (s).
    pub start: T,
}

/// Candidate routes of one CAV, all leaving from `from`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RouteSet {
    pub cav: CavId,
    pub from: NodeId,
    pub routes: Vec<Route>,
}

impl RouteSet {
    /// Lowest index holding the same route as `routes[m]`.
    pub fn canonical(&self, m: usize) -> usize {
        self.routes
            .iter()
            .position(|r| *r == self.routes[m])
            .expect("route present")
    }
}

/// One selected candidate per CAV, in ascending CAV id order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AssignmentMatrix {
    pub m: usize,
    pub choices: Vec<usize>,
}

impl AssignmentMatrix {
    pub fn new(m: usize, choices: Vec<usize>) -> Self {
        debug_assert!(choices.iter().all(|&c| c < m));
        Self { m, choices }
    }

    pub fn n(&self) -> usize {
        self.choices.len()
    }

    /// Row-per-CAV binary form.
    pub fn to_binary(&self) -> Vec<Vec<u8>> {
        self.choices
            .iter()
            .map(|&c| (0..self.m).map(|j| u8::from(j == c)).collect())
            .collect()
    }

    pub fn from_binary(rows: &[Vec<u8>]) -> Result<Self, String> {
        let m = rows.first().map_or(0, Vec::len);
        let mut choices = Vec::with_capacity(rows.len());
        for (i, row) in rows.iter().enumerate() {
            if row.len() != m || row.iter().any(|&a| a > 1) || row.iter().filter(|&&a| a == 1).count() != 1 {
                return Err(format!("row {i} is not a one-hot vector of length {m}"));
            }
            choices.push(row.iter().position(|&a| a == 1).expect("one-hot"));
        }
        Ok(Self { m, choices })
    }
}

/// Running mean of observed traversal times per edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficStats<T> {
    sum: Vec<T>,
    count: Vec<u32>,
}

impl<T: Scalar> TrafficStats<T> {
    pub fn new(n_edges: usize) -> Self {
        Self {
            sum: vec![T::zero(); n_edges],
            count: vec![0; n_edges],
        }
    }

    pub fn record(&mut self, edge: crate::network::EdgeId, duration: T) {
        self.sum[edge.index()] = self.sum[edge.index()] + duration;
        self.count[edge.index()] += 1;
    }

    pub fn mean(&self, edge: crate::network::EdgeId) -> Option<T> {
        let n = self.count[edge.index()];
        (n > 0).then(|| self.sum[edge.index()] / T::lit(f64::from(n)))
    }
}

/// Edge costs behind the three candidate routes.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMaps<T> {
    /// `length / v_max`.
    pub free_flow: Vec<T>,
    /// Mean observed traversal time, free-flow where nothing was observed.
    pub historical: Vec<T>,
    /// Free-flow time scaled by `1 + kappa * occupancy`.
    pub instantaneous: Vec<T>,
}

impl<T: Scalar> CostMaps<T> {
    pub fn new(
        graph: &NetworkGraph<T>,
        v_max: T,
        stats: &TrafficStats<T>,
        occupancy: &[usize],
        kappa: T,
    ) -> Self {
        let free_flow: Vec<T> = graph.edges().iter().map(|e| e.length / v_max).collect();
        let historical = graph
            .edges()
            .iter()
            .zip(&free_flow)
            .map(|(e, &ff)| stats.mean(e.id).filter(|m| *m > T::zero()).unwrap_or(ff))
            .collect();
        let instantaneous = free_flow
            .iter()
            .zip(occupancy)
            .map(|(&ff, &n)| ff * (T::one() + kappa * T::lit(n as f64)))
            .collect();
        Self {
            free_flow,
            historical,
            instantaneous,
        }
    }

    pub fn from_world(world: &WorldState<T>) -> Self {
        let p = world.params();
        Self::new(
            world.graph(),
            p.coordination.limits.v_max,
            world.stats(),
            &world.occupancy(),
            p.kappa,
        )
    }

    fn ordered(&self) -> [&[T]; 3] {
        [&self.free_flow, &self.historical, &self.instantaneous]
    }
}

/// Up to three shortest-time routes from `from` to `dest`, one per cost map,
/// in the order free-flow, historical, instantaneous. Duplicates are kept.
pub fn generate_candidate_routes<T: Scalar>(
    graph: &NetworkGraph<T>,
    cav: CavId,
    from: NodeId,
    dest: NodeId,
    maps: &CostMaps<T>,
    m: usize,
) -> Result<RouteSet, NetworkError> {
    if !(1..=3).contains(&m) {
        return Err(NetworkError::InvalidArgument(format!(
            "candidate count must be 1, 2 or 3, got {m}"
        )));
    }
    let routes = maps.ordered()[..m]
        .iter()
        .map(|cost| shortest_time_path(graph, from, dest, cost))
        .collect::<Result<_, _>>()?;
    Ok(RouteSet {
        cav,
        from,
        routes,
    })
}

/// Fresh candidate sets for every active CAV from its decision node.
pub fn route_sets_for_world<T: Scalar>(
    world: &WorldState<T>,
) -> Result<Vec<RouteSet>, SimulationError> {
    let maps = CostMaps::from_world(world);
    let graph = world.graph();
    world
        .cavs()
        .iter()
        .map(|(&id, cav)| {
            generate_candidate_routes(
                graph,
                id,
                cav.decision_node(graph),
                cav.trip.destination,
                &maps,
                world.params().m,
            )
            .map_err(SimulationError::from)
        })
        .collect()
}
