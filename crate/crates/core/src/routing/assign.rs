use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use super::{AssignmentMatrix, CostMaps, Evaluator, TravelTimePrediction, DELAY_EPS};
use crate::coordination::CavId;
use crate::network::{shortest_time_path, Route};
use crate::scalar::Scalar;
use crate::simulation::{SimulationError, WorldState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReroutingOutcome<T> {
    pub assignment: AssignmentMatrix,
    pub prediction: TravelTimePrediction<T>,
    /// Incumbent total after each adopted deviation.
    pub incumbents: Vec<T>,
    pub changes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingOutcome<T> {
    pub assignment: AssignmentMatrix,
    pub prediction: TravelTimePrediction<T>,
    /// Total right after appending the new CAV, before re-routing.
    pub greedy_total: T,
    pub incumbents: Vec<T>,
    pub changes: usize,
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemOptimum<T> {
    pub assignment: AssignmentMatrix,
    pub prediction: TravelTimePrediction<T>,
    /// Number of enumerated assignments, `M^N`.
    pub enumerated: BigUint,
}

/// Index of the smallest total, first one on ties.
fn argmin<T: Scalar>(preds: &[TravelTimePrediction<T>]) -> usize {
    let mut best = 0;
    for (j, p) in preds.iter().enumerate() {
        if p.total < preds[best].total {
            best = j;
        }
    }
    best
}

/// Routes the CAV at position `new_index` (in id order) given the previous
/// choices of the others, then re-routes.
pub fn route_new_cav<T: Scalar>(
    eval: &mut Evaluator<'_, T>,
    previous: &[usize],
    new_index: usize,
    delayed_only: bool,
) -> Result<RoutingOutcome<T>, SimulationError> {
    let m = eval.m();
    let batch: Vec<Vec<usize>> = (0..m)
        .map(|j| {
            let mut c = previous.to_vec();
            c[new_index] = j;
            c
        })
        .collect();
    let mut preds = eval.evaluate_many(&batch)?;
    let best = argmin(&preds);
    let cav = eval.route_sets()[new_index].cav;
    if !preds[best].is_feasible() {
        return Err(SimulationError::AllCandidatesInfeasible(cav));
    }
    let incumbent = preds.swap_remove(best);
    let greedy_total = incumbent.total;
    let assignment = AssignmentMatrix::new(m, batch[best].clone());
    let out = rerouting(eval, assignment, incumbent, delayed_only)?;
    Ok(RoutingOutcome {
        assignment: out.assignment,
        prediction: out.prediction,
        greedy_total,
        incumbents: out.incumbents,
        changes: out.changes,
        evaluations: eval.evaluations(),
    })
}

/// Person-by-person improvement: each CAV in turn switches to its best
/// candidate if that strictly lowers the predicted total, until a full cycle
/// passes without change.
pub fn rerouting<T: Scalar>(
    eval: &mut Evaluator<'_, T>,
    mut assignment: AssignmentMatrix,
    mut incumbent: TravelTimePrediction<T>,
    delayed_only: bool,
) -> Result<ReroutingOutcome<T>, SimulationError> {
    let eps = T::lit(DELAY_EPS);
    let cycle: Vec<usize> = eval
        .route_sets()
        .iter()
        .enumerate()
        .filter(|(_, set)| !delayed_only || incumbent.delay_of(set.cav).map_or(true, |d| d > eps))
        .map(|(i, _)| i)
        .collect();
    let mut incumbents = Vec::new();
    let mut changes = 0;
    let mut unchanged = 0;
    let mut at = 0;
    while !cycle.is_empty() && unchanged < cycle.len() {
        let i = cycle[at];
        let options: Vec<usize> = (0..assignment.m).filter(|&j| j != assignment.choices[i]).collect();
        let batch: Vec<Vec<usize>> = options
            .iter()
            .map(|&j| {
                let mut c = assignment.choices.clone();
                c[i] = j;
                c
            })
            .collect();
        let mut preds = eval.evaluate_many(&batch)?;
        let adopted = if preds.is_empty() {
            false
        } else {
            let best = argmin(&preds);
            if preds[best].total < incumbent.total {
                assignment.choices[i] = options[best];
                incumbent = preds.swap_remove(best);
                incumbents.push(incumbent.total);
                changes += 1;
                true
            } else {
                false
            }
        };
        // A CAV that just moved is at its best response, so it counts as settled.
        unchanged = if adopted { 1 } else { unchanged + 1 };
        at = (at + 1) % cycle.len();
    }
    Ok(ReroutingOutcome {
        assignment,
        prediction: incumbent,
        incumbents,
        changes,
    })
}

/// Exhaustive minimum over all `M^N` assignments, lexicographically first on
/// ties. Refuses when `M^N` exceeds `budget`.
pub fn solve_system_optimal<T: Scalar>(
    eval: &mut Evaluator<'_, T>,
    budget: u64,
) -> Result<SystemOptimum<T>, SimulationError> {
    let (n, m) = (eval.n(), eval.m());
    let enumerated = BigUint::from(m).pow(n as u32);
    if enumerated > BigUint::from(budget) {
        return Err(SimulationError::OracleBudgetExceeded {
            required: enumerated.to_string(),
            budget,
        });
    }
    let total: usize = m.pow(n as u32);
    let decode = |mut k: usize| {
        let mut c = vec![0; n];
        for slot in c.iter_mut().rev() {
            *slot = k % m;
            k /= m;
        }
        c
    };
    let mut best: Option<(Vec<usize>, TravelTimePrediction<T>)> = None;
    const CHUNK: usize = 256;
    for start in (0..total).step_by(CHUNK) {
        let batch: Vec<Vec<usize>> = (start..(start + CHUNK).min(total)).map(decode).collect();
        let preds = eval.evaluate_many(&batch)?;
        for (c, p) in batch.into_iter().zip(preds) {
            if best.as_ref().map_or(true, |(_, b)| p.total < b.total) {
                best = Some((c, p));
            }
        }
    }
    let (choices, prediction) = best.expect("at least one assignment");
    Ok(SystemOptimum {
        assignment: AssignmentMatrix::new(m, choices),
        prediction,
        enumerated,
    })
}

/// Selfish choice: the instantaneous shortest-time route from the CAV's
/// current node.
pub fn baseline_assign<T: Scalar>(world: &WorldState<T>, cav: CavId) -> Result<Route, SimulationError> {
    let state = world
        .cav(cav)
        .ok_or_else(|| SimulationError::Internal(format!("unknown {cav}")))?;
    let maps = CostMaps::from_world(world);
    let graph = world.graph();
    Ok(shortest_time_path(
        graph,
        state.decision_node(graph),
        state.trip.destination,
        &maps.instantaneous,
    )?)
}
