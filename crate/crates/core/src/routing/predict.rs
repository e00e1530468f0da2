use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::RouteSet;
use crate::coordination::CavId;
use crate::scalar::Scalar;
use crate::simulation::{SimulationError, StepEvent, WorldState};

/// Predicted outcome of letting every active CAV finish its assigned route
/// with no further arrivals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TravelTimePrediction<T> {
    /// Sum of trip times, or `+inf` if some CAV could not be coordinated.
    pub total: T,
    /// Trip time per CAV in id order.
    pub per_cav: Vec<(CavId, T)>,
    /// Accumulated coordination delay per CAV in id order.
    pub delays: Vec<(CavId, T)>,
    pub stranded: Vec<CavId>,
}

impl<T: Scalar> TravelTimePrediction<T> {
    pub fn is_feasible(&self) -> bool {
        self.stranded.is_empty() && self.total.is_finite()
    }

    pub fn delay_of(&self, cav: CavId) -> Option<T> {
        self.delays.iter().find(|(c, _)| *c == cav).map(|&(_, d)| d)
    }
}

/// Runs the event engine on a copy of `world` with `choices[i]` applied to
/// the i-th CAV in id order, until every CAV has reached its destination.
pub fn predict_total_travel_time<T: Scalar>(
    world: &WorldState<T>,
    route_sets: &[RouteSet],
    choices: &[usize],
) -> Result<TravelTimePrediction<T>, SimulationError> {
    let mut w = world.snapshot();
    w.apply_assignment(route_sets, choices)?;
    let mut per_cav = Vec::with_capacity(choices.len());
    let mut delays = Vec::with_capacity(choices.len());
    let mut stranded = Vec::new();
    while let Some(ev) = w.step()? {
        match ev {
            StepEvent::Completed {
                cav,
                t_start,
                t_finish,
                delay,
            } => {
                per_cav.push((cav, t_finish - t_start));
                delays.push((cav, delay));
            }
            StepEvent::Stranded { cav, .. } => stranded.push(cav),
            _ => {}
        }
    }
    per_cav.sort_by_key(|p| p.0);
    delays.sort_by_key(|p| p.0);
    let total = if stranded.is_empty() {
        per_cav.iter().map(|p| p.1).sum()
    } else {
        T::infinity()
    };
    Ok(TravelTimePrediction {
        total,
        per_cav,
        delays,
        stranded,
    })
}

/// Memoized predictions over one frozen world and one family of route sets.
///
/// Assignments that differ only by picking duplicate routes share a cache
/// entry. `evaluations` counts distinct predictions actually run.
pub struct Evaluator<'a, T> {
    world: &'a WorldState<T>,
    route_sets: &'a [RouteSet],
    cache: HashMap<Vec<usize>, TravelTimePrediction<T>>,
    evaluations: usize,
}

impl<'a, T: Scalar> Evaluator<'a, T> {
    pub fn new(world: &'a WorldState<T>, route_sets: &'a [RouteSet]) -> Self {
        Self {
            world,
            route_sets,
            cache: HashMap::new(),
            evaluations: 0,
        }
    }

    pub fn world(&self) -> &WorldState<T> {
        self.world
    }

    pub fn route_sets(&self) -> &[RouteSet] {
        self.route_sets
    }

    pub fn n(&self) -> usize {
        self.route_sets.len()
    }

    pub fn m(&self) -> usize {
        self.route_sets.first().map_or(0, |s| s.routes.len())
    }

    pub fn evaluations(&self) -> usize {
        self.evaluations
    }

    fn canonical(&self, choices: &[usize]) -> Vec<usize> {
        choices
            .iter()
            .zip(self.route_sets)
            .map(|(&m, set)| set.canonical(m))
            .collect()
    }

    pub fn evaluate(&mut self, choices: &[usize]) -> Result<TravelTimePrediction<T>, SimulationError> {
        Ok(self.evaluate_many(&[choices.to_vec()])?.remove(0))
    }

    /// Evaluates several assignments, running the uncached ones in parallel.
    pub fn evaluate_many(
        &mut self,
        batch: &[Vec<usize>],
    ) -> Result<Vec<TravelTimePrediction<T>>, SimulationError> {
        let keys: Vec<Vec<usize>> = batch.iter().map(|c| self.canonical(c)).collect();
        let mut missing: Vec<Vec<usize>> = keys
            .iter()
            .filter(|k| !self.cache.contains_key(*k))
            .cloned()
            .collect();
        missing.sort();
        missing.dedup();
        let (world, sets) = (self.world, self.route_sets);
        let fresh: Vec<_> = missing
            .par_iter()
            .map(|k| predict_total_travel_time(world, sets, k))
            .collect::<Result<_, _>>()?;
        self.evaluations += fresh.len();
        self.cache.extend(missing.into_iter().zip(fresh));
        Ok(keys.iter().map(|k| self.cache[k].clone()).collect())
    }
}
