//! Intersection-level coordination: safety constraints, the per-intersection
//! ledger of committed plans, and the minimum exit time search.
//!
//! CAVs plan in first-in-first-out order of entry. Each plan is a cubic
//! trajectory chosen with the earliest exit time that keeps the CAV safe with
//! respect to every plan already committed at the same intersection.

mod constraints;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{ConflictPointId, IntersectionId, NodeId, PathDescriptor};
use crate::scalar::Scalar;
use crate::trajectory::{
    feasible_exit_window, fit_unchecked, CubicTrajectory, FeasibleExitWindow, MotionLimits,
    TrajectoryError,
};

pub use constraints::{
    lateral_margin, lateral_ok, rear_end_margin, rear_end_ok, safety_distance, SafetyParams,
    CONSTRAINT_SLACK,
};
use constraints::lateral_margin_with_time;

/// Vehicle identifier, unique within a simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CavId(pub u32);

impl CavId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for CavId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "cav{}", self.0)
    }
}

#[derive(Debug, Error)]
pub enum CoordinationError {
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
    #[error("{0} is already committed at {1}")]
    DuplicateCav(CavId, IntersectionId),
    #[error("{0} is not committed at {1}")]
    UnknownCav(CavId, IntersectionId),
    #[error("plan for {cav} violates safety with {other} at {intersection}")]
    SafetyViolation {
        cav: CavId,
        other: CavId,
        intersection: IntersectionId,
    },
}

/// Time and place at which a CAV passes one conflict point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossingRecord<T> {
    pub conflict: ConflictPointId,
    pub t_c: T,
    pub p_c: T,
}

/// Committed plan of one CAV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry<T> {
    pub cav: CavId,
    pub path: usize,
    pub entry: NodeId,
    pub trajectory: CubicTrajectory<T>,
    pub crossings: Vec<CrossingRecord<T>>,
}

impl<T: Scalar> LedgerEntry<T> {
    pub fn crossing(&self, conflict: ConflictPointId) -> Option<&CrossingRecord<T>> {
        self.crossings.iter().find(|r| r.conflict == conflict)
    }
}

/// Plans currently in force at one intersection, in commit order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntersectionLedger<T> {
    pub intersection: IntersectionId,
    entries: Vec<LedgerEntry<T>>,
}

impl<T: Scalar> IntersectionLedger<T> {
    pub fn new(intersection: IntersectionId) -> Self {
        Self {
            intersection,
            entries: Vec::new(),
        }
    }

    pub fn entries(&self) -> &[LedgerEntry<T>] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, cav: CavId) -> Option<&LedgerEntry<T>> {
        self.entries.iter().find(|e| e.cav == cav)
    }

    /// Appends `plan` after re-checking it against every committed entry.
    pub fn commit(
        &mut self,
        cav: CavId,
        path_index: usize,
        path: &PathDescriptor<T>,
        plan: &CoordinationPlan<T>,
        safety: &SafetyParams<T>,
    ) -> Result<(), CoordinationError> {
        if self.get(cav).is_some() {
            return Err(CoordinationError::DuplicateCav(cav, self.intersection));
        }
        if let Some(other) = first_conflicting(&plan.trajectory, path, &plan.crossings, self, safety)
        {
            return Err(CoordinationError::SafetyViolation {
                cav,
                other,
                intersection: self.intersection,
            });
        }
        self.entries.push(LedgerEntry {
            cav,
            path: path_index,
            entry: path.entry,
            trajectory: plan.trajectory,
            crossings: plan.crossings.clone(),
        });
        Ok(())
    }

    /// Removes the plan of a CAV that has left the intersection.
    pub fn release(&mut self, cav: CavId) -> Result<LedgerEntry<T>, CoordinationError> {
        let at = self
            .entries
            .iter()
            .position(|e| e.cav == cav)
            .ok_or(CoordinationError::UnknownCav(cav, self.intersection))?;
        Ok(self.entries.remove(at))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoordinationParams<T> {
    pub limits: MotionLimits<T>,
    pub safety: SafetyParams<T>,
    /// Scan step over candidate exit times (s).
    pub search_step: T,
    /// Width of the final bisection bracket (s).
    pub tolerance: T,
}

impl<T: Scalar> CoordinationParams<T> {
    pub fn new(limits: MotionLimits<T>, safety: SafetyParams<T>) -> Self {
        Self {
            limits,
            safety,
            search_step: T::lit(0.05),
            tolerance: T::lit(1e-4),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        self.limits.validate().map_err(|e| e.to_string())?;
        self.safety.validate()?;
        if !(self.search_step > T::zero()) || !(self.tolerance > T::zero()) {
            return Err("search step and tolerance must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoordinationPlan<T> {
    pub trajectory: CubicTrajectory<T>,
    pub crossings: Vec<CrossingRecord<T>>,
    pub window: FeasibleExitWindow<T>,
}

impl<T: Scalar> CoordinationPlan<T> {
    pub fn exit_time(&self) -> T {
        self.trajectory.tf
    }

    /// Extra time spent over the unconstrained earliest exit.
    pub fn delay(&self) -> T {
        self.trajectory.tf - self.window.t_lo
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CoordinationOutcome<T> {
    Feasible(CoordinationPlan<T>),
    /// No scanned exit time satisfies every constraint.
    Infeasible,
}

impl<T> CoordinationOutcome<T> {
    pub fn plan(&self) -> Option<&CoordinationPlan<T>> {
        match self {
            Self::Feasible(p) => Some(p),
            Self::Infeasible => None,
        }
    }
}

fn crossings_of<T: Scalar>(
    traj: &CubicTrajectory<T>,
    path: &PathDescriptor<T>,
) -> Vec<CrossingRecord<T>> {
    path.conflicts
        .iter()
        .map(|&(conflict, p_c)| CrossingRecord {
            conflict,
            t_c: traj.time_at_position_unchecked(p_c),
            p_c,
        })
        .collect()
}

/// First committed CAV whose plan is incompatible with `traj`.
fn first_conflicting<T: Scalar>(
    traj: &CubicTrajectory<T>,
    path: &PathDescriptor<T>,
    crossings: &[CrossingRecord<T>],
    ledger: &IntersectionLedger<T>,
    safety: &SafetyParams<T>,
) -> Option<CavId> {
    let slack = T::lit(CONSTRAINT_SLACK);
    for k in &ledger.entries {
        if k.entry == path.entry && !rear_end_ok(traj, &k.trajectory, safety) {
            return Some(k.cav);
        }
        for mine in crossings {
            if let Some(theirs) = k.crossing(mine.conflict) {
                let m = lateral_margin_with_time(
                    traj,
                    mine.p_c,
                    mine.t_c,
                    &k.trajectory,
                    theirs.p_c,
                    theirs.t_c,
                    safety,
                );
                if m > slack {
                    return Some(k.cav);
                }
            }
        }
    }
    None
}

fn try_exit<T: Scalar>(
    t0: T,
    v0: T,
    tf: T,
    path: &PathDescriptor<T>,
    ledger: &IntersectionLedger<T>,
    params: &CoordinationParams<T>,
) -> Option<(CubicTrajectory<T>, Vec<CrossingRecord<T>>)> {
    let traj = fit_unchecked(t0, v0, tf, path.length);
    if !traj.respects_limits(&params.limits) {
        return None;
    }
    let crossings = crossings_of(&traj, path);
    match first_conflicting(&traj, path, &crossings, ledger, &params.safety) {
        None => Some((traj, crossings)),
        Some(_) => None,
    }
}

/// Whether exiting at `tf` satisfies the motion limits and every constraint
/// against `ledger`.
pub fn exit_time_is_feasible<T: Scalar>(
    t0: T,
    v0: T,
    tf: T,
    path: &PathDescriptor<T>,
    ledger: &IntersectionLedger<T>,
    params: &CoordinationParams<T>,
) -> bool {
    tf > t0 && try_exit(t0, v0, tf, path, ledger, params).is_some()
}

/// Earliest safe exit time for a CAV entering `path` at `t0` with speed `v0`.
///
/// Candidate exit times are scanned from the window's lower end at
/// `search_step`; the first feasible one is refined against its infeasible
/// predecessor by bisection.
pub fn min_exit_time<T: Scalar>(
    t0: T,
    v0: T,
    path: &PathDescriptor<T>,
    ledger: &IntersectionLedger<T>,
    params: &CoordinationParams<T>,
) -> Result<CoordinationOutcome<T>, CoordinationError> {
    let window = match feasible_exit_window(t0, v0, path.length, &params.limits) {
        Ok(w) => w,
        Err(TrajectoryError::EmptyWindow) => return Ok(CoordinationOutcome::Infeasible),
        Err(e) => return Err(e.into()),
    };
    let plan = |(trajectory, crossings)| {
        Ok(CoordinationOutcome::Feasible(CoordinationPlan {
            trajectory,
            crossings,
            window,
        }))
    };
    let attempt = |tf: T| try_exit(t0, v0, tf, path, ledger, params);

    let mut prev = window.t_lo;
    let mut k = 0usize;
    loop {
        let tf = (window.t_lo + params.search_step * T::lit(k as f64)).min(window.t_hi);
        if let Some(found) = attempt(tf) {
            if k == 0 {
                return plan(found);
            }
            let (mut bad, mut good, mut best) = (prev, tf, found);
            while good - bad > params.tolerance {
                let mid = (bad + good) * T::lit(0.5);
                match attempt(mid) {
                    Some(f) => {
                        good = mid;
                        best = f;
                    }
                    None => bad = mid,
                }
            }
            return plan(best);
        }
        if tf >= window.t_hi {
            return Ok(CoordinationOutcome::Infeasible);
        }
        prev = tf;
        k += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{build_grid_network, GridGeometry};

    fn params() -> CoordinationParams<f64> {
        CoordinationParams::new(
            MotionLimits::new(-3.0, 3.0, 1.0, 15.0).unwrap(),
            SafetyParams { rho: 2.0, phi: 0.5 },
        )
    }

    fn paths() -> (PathDescriptor<f64>, PathDescriptor<f64>, PathDescriptor<f64>) {
        let g = build_grid_network(1, 1, &GridGeometry::default()).unwrap();
        let x = &g.intersections()[0];
        // North straight, west straight, north left.
        (x.paths[1].clone(), x.paths[10].clone(), x.paths[2].clone())
    }

    #[test]
    fn empty_ledger_gives_window_lower_end() {
        let (ns, _, _) = paths();
        let ledger = IntersectionLedger::new(IntersectionId(0));
        let out = min_exit_time(0.0, 10.0, &ns, &ledger, &params()).unwrap();
        let plan = out.plan().unwrap();
        assert_eq!(plan.exit_time(), plan.window.t_lo);
        assert_eq!(plan.delay(), 0.0);
    }

    #[test]
    fn crossing_traffic_delays_and_matches_fine_grid() {
        let (ns, we, _) = paths();
        let p = params();
        let mut ledger = IntersectionLedger::new(IntersectionId(0));
        // A slower crossing CAV reaches the shared point as the new one would.
        let first = min_exit_time(0.0, 6.0, &we, &ledger, &p).unwrap();
        ledger
            .commit(CavId(0), 10, &we, first.plan().unwrap(), &p.safety)
            .unwrap();
        let out = min_exit_time(0.0, 10.0, &ns, &ledger, &p).unwrap();
        let plan = out.plan().unwrap();
        assert!(plan.exit_time() > plan.window.t_lo + 0.1);
        let grid = (0..)
            .map(|k| plan.window.t_lo + k as f64 * 1e-3)
            .take_while(|&t| t <= plan.window.t_hi)
            .find(|&t| exit_time_is_feasible(0.0, 10.0, t, &ns, &ledger, &p))
            .unwrap();
        assert!((plan.exit_time() - grid).abs() < 2e-3);
        // Just before the returned time the plan is unsafe.
        assert!(!exit_time_is_feasible(0.0, 10.0, plan.exit_time() - 2e-4, &ns, &ledger, &p));
        ledger
            .commit(CavId(1), 1, &ns, plan, &p.safety)
            .unwrap();
    }

    #[test]
    fn distant_leader_is_inactive() {
        let (ns, _, nl) = paths();
        let p = params();
        let mut ledger = IntersectionLedger::new(IntersectionId(0));
        let lead = min_exit_time(0.0, 15.0, &ns, &ledger, &p).unwrap();
        ledger
            .commit(CavId(0), 1, &ns, lead.plan().unwrap(), &p.safety)
            .unwrap();
        let out = min_exit_time(4.0, 10.0, &nl, &ledger, &p).unwrap();
        let plan = out.plan().unwrap();
        assert_eq!(plan.exit_time(), plan.window.t_lo);
    }

    #[test]
    fn simultaneous_entry_on_one_lane_is_infeasible() {
        let (ns, _, _) = paths();
        let p = params();
        let mut ledger = IntersectionLedger::new(IntersectionId(0));
        let lead = min_exit_time(0.0, 10.0, &ns, &ledger, &p).unwrap();
        ledger
            .commit(CavId(0), 1, &ns, lead.plan().unwrap(), &p.safety)
            .unwrap();
        let out = min_exit_time(0.0, 10.0, &ns, &ledger, &p).unwrap();
        assert_eq!(out, CoordinationOutcome::Infeasible);
    }

    #[test]
    fn commit_rejects_duplicates_and_violations() {
        let (ns, we, _) = paths();
        let p = params();
        let mut ledger = IntersectionLedger::new(IntersectionId(0));
        let a = min_exit_time(0.0, 6.0, &we, &ledger, &p).unwrap();
        let a = a.plan().unwrap().clone();
        ledger.commit(CavId(0), 10, &we, &a, &p.safety).unwrap();
        assert!(matches!(
            ledger.commit(CavId(0), 10, &we, &a, &p.safety),
            Err(CoordinationError::DuplicateCav(..))
        ));
        // Planning against an empty ledger ignores the crossing CAV.
        let naive = min_exit_time(0.0, 10.0, &ns, &IntersectionLedger::new(IntersectionId(0)), &p)
            .unwrap();
        assert!(matches!(
            ledger.commit(CavId(1), 1, &ns, naive.plan().unwrap(), &p.safety),
            Err(CoordinationError::SafetyViolation { other: CavId(0), .. })
        ));
        assert!(ledger.release(CavId(0)).is_ok());
        assert!(matches!(
            ledger.release(CavId(0)),
            Err(CoordinationError::UnknownCav(..))
        ));
    }

    #[test]
    fn entry_speed_outside_band_is_an_error() {
        let (ns, _, _) = paths();
        let ledger = IntersectionLedger::new(IntersectionId(0));
        assert!(min_exit_time(0.0, 20.0, &ns, &ledger, &params()).is_err());
    }
}
