use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{SimParams, SimulationError};
use crate::coordination::{min_exit_time, CavId, CoordinationOutcome, IntersectionLedger};
use crate::network::{EdgeId, IntersectionId, NetworkGraph, NodeId, Route};
use crate::routing::{RouteSet, TrafficStats, TripRequest};
use crate::scalar::{cmp, Scalar};

/// Event kinds in processing priority order for equal times.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Completion,
    Arrival,
    Start,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event<T> {
    pub time: T,
    pub kind: EventKind,
    pub cav: CavId,
}

impl<T: Scalar> Event<T> {
    fn key_cmp(&self, other: &Self) -> Ordering {
        cmp(self.time, other.time)
            .then(self.kind.cmp(&other.kind))
            .then(self.cav.cmp(&other.cav))
    }
}

/// Min-heap adapter.
#[derive(Debug, Clone)]
struct Queued<T>(Event<T>);

impl<T: Scalar> PartialEq for Queued<T> {
    fn eq(&self, other: &Self) -> bool {
        self.0.key_cmp(&other.0) == Ordering::Equal
    }
}
impl<T: Scalar> Eq for Queued<T> {}
impl<T: Scalar> PartialOrd for Queued<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<T: Scalar> Ord for Queued<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.key_cmp(&self.0)
    }
}

/// Per-vehicle state between events.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CavState<T> {
    pub trip: TripRequest<T>,
    /// Last node reached.
    pub node: NodeId,
    /// Speed at `node`, or the speed held on the current edge.
    pub speed: T,
    /// Edge being traversed, if any.
    pub current: Option<EdgeId>,
    pub edge_entered: T,
    /// Edges still to take after `current`.
    pub route: Route,
    pub next: usize,
    /// Time lost to coordination so far (s).
    pub delay: T,
    pub holds: u32,
    /// Index of the assigned candidate in the latest route set.
    pub choice: usize,
}

impl<T: Scalar> CavState<T> {
    /// Node from which the CAV can still change its route.
    pub fn decision_node(&self, graph: &NetworkGraph<T>) -> NodeId {
        match self.current {
            Some(e) => graph.edge(e).head,
            None => self.node,
        }
    }

    pub fn remaining(&self) -> &[EdgeId] {
        &self.route.edges()[self.next..]
    }
}

/// Outcome of processing one event.
#[derive(Debug, Clone, PartialEq)]
pub enum StepEvent<T> {
    Committed {
        cav: CavId,
        intersection: IntersectionId,
    },
    Released {
        cav: CavId,
        intersection: IntersectionId,
    },
    Moved {
        cav: CavId,
    },
    Held {
        cav: CavId,
    },
    /// Coordination stayed infeasible past the hold budget; the CAV is removed.
    Stranded {
        cav: CavId,
        time: T,
    },
    Completed {
        cav: CavId,
        t_start: T,
        t_finish: T,
        delay: T,
    },
}

/// Everything the engine needs to continue a run: the clock, active CAVs,
/// intersection ledgers, pending events and traffic statistics.
#[derive(Debug, Clone)]
pub struct WorldState<T> {
    clock: T,
    graph: Arc<NetworkGraph<T>>,
    params: SimParams<T>,
    cavs: BTreeMap<CavId, CavState<T>>,
    ledgers: Vec<IntersectionLedger<T>>,
    events: BinaryHeap<Queued<T>>,
    stats: TrafficStats<T>,
}

impl<T: Scalar> WorldState<T> {
    pub fn new(graph: Arc<NetworkGraph<T>>, params: SimParams<T>) -> Self {
        let ledgers = graph
            .intersections()
            .iter()
            .map(|x| IntersectionLedger::new(x.id))
            .collect();
        let stats = TrafficStats::new(graph.edges().len());
        Self {
            clock: T::zero(),
            graph,
            params,
            cavs: BTreeMap::new(),
            ledgers,
            events: BinaryHeap::new(),
            stats,
        }
    }

    pub fn clock(&self) -> T {
        self.clock
    }

    pub fn graph(&self) -> &Arc<NetworkGraph<T>> {
        &self.graph
    }

    pub fn params(&self) -> &SimParams<T> {
        &self.params
    }

    pub fn cavs(&self) -> &BTreeMap<CavId, CavState<T>> {
        &self.cavs
    }

    pub fn cav(&self, id: CavId) -> Option<&CavState<T>> {
        self.cavs.get(&id)
    }

    pub fn n_active(&self) -> usize {
        self.cavs.len()
    }

    pub fn ledgers(&self) -> &[IntersectionLedger<T>] {
        &self.ledgers
    }

    pub fn stats(&self) -> &TrafficStats<T> {
        &self.stats
    }

    pub fn next_event(&self) -> Option<Event<T>> {
        self.events.peek().map(|q| q.0)
    }

    /// Frozen deep copy for prediction.
    pub fn snapshot(&self) -> Self {
        self.clone()
    }

    /// CAVs currently on each edge.
    pub fn occupancy(&self) -> Vec<usize> {
        let mut occ = vec![0; self.graph.edges().len()];
        for cav in self.cavs.values() {
            if let Some(e) = cav.current {
                occ[e.index()] += 1;
            }
        }
        occ
    }

    fn push(&mut self, time: T, kind: EventKind, cav: CavId) {
        self.events.push(Queued(Event { time, kind, cav }));
    }

    /// Places a new CAV at its origin, departing at its start time with
    /// `params.departure_speed` and an empty route.
    pub fn spawn(&mut self, trip: TripRequest<T>) -> Result<(), SimulationError> {
        if self.cavs.contains_key(&trip.cav) {
            return Err(SimulationError::Internal(format!("{} spawned twice", trip.cav)));
        }
        if trip.start < self.clock {
            return Err(SimulationError::Internal(format!(
                "{} starts at {} before clock {}",
                trip.cav, trip.start, self.clock
            )));
        }
        self.clock = trip.start;
        let speed = self.clamp_speed(self.params.departure_speed);
        self.cavs.insert(
            trip.cav,
            CavState {
                node: trip.origin,
                speed,
                current: None,
                edge_entered: trip.start,
                route: Route::default(),
                next: 0,
                delay: T::zero(),
                holds: 0,
                choice: 0,
                trip,
            },
        );
        self.push(trip.start, EventKind::Arrival, trip.cav);
        Ok(())
    }

    /// Replaces the remaining route of every CAV by its chosen candidate.
    pub fn apply_assignment(
        &mut self,
        route_sets: &[RouteSet],
        choices: &[usize],
    ) -> Result<(), SimulationError> {
        if route_sets.len() != self.cavs.len() || choices.len() != route_sets.len() {
            return Err(SimulationError::Internal(format!(
                "assignment covers {} CAVs, world has {}",
                choices.len(),
                self.cavs.len()
            )));
        }
        for ((set, &m), (id, cav)) in route_sets.iter().zip(choices).zip(self.cavs.iter_mut()) {
            if set.cav != *id {
                return Err(SimulationError::Internal(format!(
                    "route set for {} given to {id}",
                    set.cav
                )));
            }
            cav.route = set.routes[m].clone();
            cav.next = 0;
            cav.choice = m;
        }
        Ok(())
    }

    /// Sets the remaining route of a single CAV.
    pub fn set_route(&mut self, cav: CavId, route: Route, choice: usize) -> Result<(), SimulationError> {
        let state = self
            .cavs
            .get_mut(&cav)
            .ok_or_else(|| SimulationError::Internal(format!("unknown {cav}")))?;
        state.route = route;
        state.next = 0;
        state.choice = choice;
        Ok(())
    }

    pub fn remove(&mut self, cav: CavId) -> Option<CavState<T>> {
        let state = self.cavs.remove(&cav)?;
        self.events.retain(|q| q.0.cav != cav);
        Some(state)
    }

    fn clamp_speed(&self, v: T) -> T {
        let l = &self.params.coordination.limits;
        v.max(l.v_min).min(l.v_max)
    }

    /// Processes the earliest pending event.
    pub fn step(&mut self) -> Result<Option<StepEvent<T>>, SimulationError> {
        let Some(Queued(ev)) = self.events.pop() else {
            return Ok(None);
        };
        self.clock = self.clock.max(ev.time);
        let t = ev.time;
        match ev.kind {
            EventKind::Completion => {
                let cav = self
                    .cavs
                    .remove(&ev.cav)
                    .ok_or_else(|| SimulationError::Internal(format!("completion of unknown {}", ev.cav)))?;
                Ok(Some(StepEvent::Completed {
                    cav: ev.cav,
                    t_start: cav.trip.start,
                    t_finish: t,
                    delay: cav.delay,
                }))
            }
            EventKind::Arrival => self.arrive(ev.cav, t).map(Some),
            EventKind::Start => Err(SimulationError::Internal(
                "trip starts are driven by the simulation loop".into(),
            )),
        }
    }

    fn arrive(&mut self, id: CavId, t: T) -> Result<StepEvent<T>, SimulationError> {
        let graph = Arc::clone(&self.graph);
        let cav = self
            .cavs
            .get_mut(&id)
            .ok_or_else(|| SimulationError::Internal(format!("arrival of unknown {id}")))?;
        let mut released = None;
        if let Some(e) = cav.current.take() {
            let edge = graph.edge(e);
            cav.node = edge.head;
            self.stats.record(e, t - cav.edge_entered);
            if let Some((x, _, _)) = graph.internal_path(e) {
                self.ledgers[x.index()].release(id)?;
                released = Some(x);
            }
        }
        let cav = self.cavs.get_mut(&id).expect("present");
        if cav.node == cav.trip.destination {
            self.push(t, EventKind::Completion, id);
            return Ok(match released {
                Some(intersection) => StepEvent::Released { cav: id, intersection },
                None => StepEvent::Moved { cav: id },
            });
        }
        let Some(&e) = cav.remaining().first() else {
            return Err(SimulationError::Internal(format!(
                "{id} at {} has no route to {}",
                cav.node, cav.trip.destination
            )));
        };
        let edge = graph.edge(e);
        if edge.tail != cav.node {
            return Err(SimulationError::Internal(format!(
                "{id} at {} cannot take {e} from {}",
                cav.node, edge.tail
            )));
        }
        match graph.internal_path(e) {
            None => {
                cav.current = Some(e);
                cav.next += 1;
                cav.edge_entered = t;
                let arrive = t + edge.length / cav.speed;
                self.push(arrive, EventKind::Arrival, id);
                Ok(StepEvent::Moved { cav: id })
            }
            Some((x, path_index, path)) => {
                let coordination = self.params.coordination;
                let outcome =
                    min_exit_time(t, cav.speed, path, &self.ledgers[x.index()], &coordination)?;
                match outcome {
                    CoordinationOutcome::Feasible(plan) => {
                        self.ledgers[x.index()].commit(
                            id,
                            path_index,
                            path,
                            &plan,
                            &coordination.safety,
                        )?;
                        let exit_speed = plan.trajectory.exit_speed();
                        let exit_speed = self.clamp_speed(exit_speed);
                        let cav = self.cavs.get_mut(&id).expect("present");
                        cav.current = Some(e);
                        cav.next += 1;
                        cav.edge_entered = t;
                        cav.delay = cav.delay + plan.delay();
                        cav.speed = exit_speed;
                        self.push(plan.exit_time(), EventKind::Arrival, id);
                        Ok(StepEvent::Committed {
                            cav: id,
                            intersection: x,
                        })
                    }
                    CoordinationOutcome::Infeasible => {
                        let hold = self.params.hold_step;
                        if cav.holds >= self.params.max_holds {
                            self.cavs.remove(&id);
                            return Ok(StepEvent::Stranded { cav: id, time: t });
                        }
                        cav.holds += 1;
                        cav.delay = cav.delay + hold;
                        self.push(t + hold, EventKind::Arrival, id);
                        Ok(StepEvent::Held { cav: id })
                    }
                }
            }
        }
    }
}
