//! Post-hoc safety audit by dense sampling of committed trajectories.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::CommitRecord;
use crate::coordination::{safety_distance, CavId, SafetyParams};
use crate::network::{ConflictPointId, IntersectionId};
use crate::scalar::Scalar;
use crate::trajectory::CubicTrajectory;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ViolationKind {
    RearEnd,
    Lateral(ConflictPointId),
    /// The CAV was committed at two intersections over overlapping times.
    Overlap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub intersection: IntersectionId,
    pub cav: CavId,
    pub other: CavId,
    pub kind: ViolationKind,
    /// Worst sampled excess (m for safety, s for overlaps).
    pub amount: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub pairs_checked: usize,
    pub samples: usize,
    pub violations: Vec<Violation>,
}

impl AuditReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

fn sample_times<T: Scalar>(lo: T, hi: T, dt: T) -> impl Iterator<Item = T> {
    let n = if hi >= lo {
        ((hi - lo) / dt).floor().to_usize().unwrap_or(0) + 1
    } else {
        0
    };
    (0..n)
        .map(move |j| lo + dt * T::lit(j as f64))
        .chain((hi >= lo).then_some(hi))
}

/// Largest sampled `delta(v) + p - p_c` over `[traj.t0, until]`.
fn sampled_excess<T: Scalar>(
    traj: &CubicTrajectory<T>,
    p_c: T,
    until: T,
    dt: T,
    safety: &SafetyParams<T>,
    samples: &mut usize,
) -> T {
    let mut worst = T::neg_infinity();
    for t in sample_times(traj.t0, until, dt) {
        *samples += 1;
        let v = safety_distance(safety, traj.speed_extended(t)) + traj.position_extended(t) - p_c;
        worst = worst.max(v);
    }
    worst
}

/// Checks every committed plan against the plans it shared the intersection
/// with, sampling at `dt`. Rear-end gaps apply to CAVs from the same entry
/// lane; the lateral rule to every shared conflict point.
pub fn audit_commits<T: Scalar>(
    commits: &[CommitRecord<T>],
    safety: &SafetyParams<T>,
    dt: T,
    tolerance: T,
) -> AuditReport {
    let mut report = AuditReport::default();
    let mut latest: HashMap<(IntersectionId, CavId), usize> = HashMap::new();
    for (idx, rec) in commits.iter().enumerate() {
        let i = &rec.entry;
        for &other in &rec.co_present {
            let Some(&k_idx) = latest.get(&(rec.intersection, other)) else {
                continue;
            };
            let k = &commits[k_idx].entry;
            report.pairs_checked += 1;
            let mut flag = |kind, amount: T| {
                report.violations.push(Violation {
                    intersection: rec.intersection,
                    cav: i.cav,
                    other,
                    kind,
                    amount: amount.as_f64(),
                })
            };
            if i.entry == k.entry {
                let (ti, tk) = (&i.trajectory, &k.trajectory);
                let mut worst = T::infinity();
                for t in sample_times(ti.t0.max(tk.t0), ti.tf, dt) {
                    report.samples += 1;
                    let gap = tk.position_extended(t)
                        - ti.position_extended(t)
                        - safety_distance(safety, ti.speed_extended(t));
                    worst = worst.min(gap);
                }
                if worst < -tolerance {
                    flag(ViolationKind::RearEnd, -worst);
                }
            }
            for mine in &i.crossings {
                let Some(theirs) = k.crossings.iter().find(|c| c.conflict == mine.conflict) else {
                    continue;
                };
                let t_i_c = i.trajectory.time_at_position(mine.p_c).unwrap_or(mine.t_c);
                let t_k_c = k.trajectory.time_at_position(theirs.p_c).unwrap_or(theirs.t_c);
                let mut samples = 0;
                let after = sampled_excess(&i.trajectory, mine.p_c, t_k_c, dt, safety, &mut samples);
                let before = sampled_excess(&k.trajectory, theirs.p_c, t_i_c, dt, safety, &mut samples);
                report.samples += samples;
                let value = after.min(before);
                if value > tolerance {
                    flag(ViolationKind::Lateral(mine.conflict), value);
                }
            }
        }
        latest.insert((rec.intersection, i.cav), idx);
    }
    report
}

/// Each CAV holds at most one intersection plan at a time: consecutive
/// commits of the same CAV must not overlap in time.
pub fn check_causality<T: Scalar>(commits: &[CommitRecord<T>]) -> Vec<Violation> {
    let mut last: HashMap<CavId, &CommitRecord<T>> = HashMap::new();
    let mut out = Vec::new();
    for rec in commits {
        if let Some(prev) = last.get(&rec.entry.cav) {
            let overlap = prev.entry.trajectory.tf - rec.entry.trajectory.t0;
            if overlap > T::zero() {
                out.push(Violation {
                    intersection: rec.intersection,
                    cav: rec.entry.cav,
                    other: rec.entry.cav,
                    kind: ViolationKind::Overlap,
                    amount: overlap.as_f64(),
                });
            }
        }
        last.insert(rec.entry.cav, rec);
    }
    out
}
