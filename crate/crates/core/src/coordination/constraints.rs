//! Closed-form evaluation of the rear-end and lateral safety constraints.
//!
//! Every constraint expression is a cubic in time on each piece between
//! trajectory exit times (past its exit a trajectory continues at constant
//! speed), so its extremum over an interval is attained at a piece endpoint
//! or at a stationary point of the piece.

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;
use crate::trajectory::CubicTrajectory;

/// Standstill distance and reaction time of the speed-dependent headway.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SafetyParams<T> {
    pub rho: T,
    pub phi: T,
}

impl<T: Scalar> SafetyParams<T> {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.rho > T::zero()) {
            return Err(format!("standstill distance rho must be positive, got {}", self.rho));
        }
        if !(self.phi >= T::zero()) {
            return Err(format!("reaction time phi must be non-negative, got {}", self.phi));
        }
        Ok(())
    }
}

/// Required gap `rho + phi * v`.
pub fn safety_distance<T: Scalar>(params: &SafetyParams<T>, v: T) -> T {
    params.rho + params.phi * v
}

/// Tolerance (m) used when comparing constraint margins against zero.
pub const CONSTRAINT_SLACK: f64 = 1e-9;

/// `c0 + c1 x + c2 x^2 + c3 x^3`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Poly3<T> {
    c: [T; 4],
}

impl<T: Scalar> Poly3<T> {
    fn eval(&self, x: T) -> T {
        ((self.c[3] * x + self.c[2]) * x + self.c[1]) * x + self.c[0]
    }

    fn derivative(&self) -> Self {
        Self {
            c: [
                self.c[1],
                T::lit(2.0) * self.c[2],
                T::lit(3.0) * self.c[3],
                T::zero(),
            ],
        }
    }

    fn combine(&self, k: T, other: &Self) -> Self {
        let mut c = self.c;
        for (ci, oi) in c.iter_mut().zip(other.c) {
            *ci = *ci + k * oi;
        }
        Self { c }
    }

    fn shift(mut self, k: T) -> Self {
        self.c[0] = self.c[0] + k;
        self
    }

    /// Extremum over `[0, len]`; `sign = 1` for max, `-1` for min.
    fn extremum(&self, len: T, sign: T) -> T {
        let mut best = (self.eval(T::zero()) * sign).max(self.eval(len) * sign);
        // Stationary points solve 3 c3 x^2 + 2 c2 x + c1 = 0.
        let (qa, qb, qc) = (T::lit(3.0) * self.c[3], T::lit(2.0) * self.c[2], self.c[1]);
        let mut consider = |x: T| {
            if x > T::zero() && x < len {
                best = best.max(self.eval(x) * sign);
            }
        };
        if qa.abs() <= T::epsilon() * (qb.abs() + qc.abs()) {
            if qb != T::zero() {
                consider(-qc / qb);
            }
        } else {
            let disc = qb * qb - T::lit(4.0) * qa * qc;
            if disc >= T::zero() {
                let root = disc.sqrt();
                let q = -T::lit(0.5) * (qb + qb.signum() * root);
                if q != T::zero() {
                    consider(q / qa);
                    consider(qc / q);
                } else {
                    consider(T::zero());
                }
            }
        }
        best * sign
    }
}

/// Position polynomial of `traj` around `origin`, valid on one side of `tf`.
fn expand<T: Scalar>(traj: &CubicTrajectory<T>, origin: T) -> Poly3<T> {
    if origin < traj.tf {
        let s = origin - traj.t0;
        Poly3 {
            c: [
                traj.pos_local(s),
                traj.vel_local(s),
                traj.acc_local(s) * T::lit(0.5),
                traj.a,
            ],
        }
    } else {
        let v = traj.exit_speed();
        Poly3 {
            c: [traj.pf + v * (origin - traj.tf), v, T::zero(), T::zero()],
        }
    }
}

/// Extremum of `build(origin)` over `[lo, hi]`, split at `breaks`.
fn piecewise_extremum<T: Scalar>(
    lo: T,
    hi: T,
    breaks: &[T],
    sign: T,
    build: impl Fn(T) -> Poly3<T>,
) -> Option<T> {
    if hi < lo {
        return None;
    }
    let mut cuts: [T; 4] = [lo; 4];
    let mut n = 1;
    for &b in breaks {
        if b > lo && b < hi {
            cuts[n] = b;
            n += 1;
        }
    }
    cuts[..n].sort_by(|a, b| crate::scalar::cmp(*a, *b));
    let mut best: Option<T> = None;
    for k in 0..n {
        let start = cuts[k];
        let end = if k + 1 < n { cuts[k + 1] } else { hi };
        let value = build(start).extremum(end - start, sign) * sign;
        best = Some(best.map_or(value, |b: T| b.max(value)));
    }
    best.map(|b| b * sign)
}

/// Smallest value of `p_k - p_i - delta_i` while CAV `i` is inside, or `None`
/// when the intervals do not overlap. `k` is the CAV ahead.
pub fn rear_end_margin<T: Scalar>(
    follower: &CubicTrajectory<T>,
    leader: &CubicTrajectory<T>,
    params: &SafetyParams<T>,
) -> Option<T> {
    let lo = follower.t0.max(leader.t0);
    let hi = follower.tf;
    piecewise_extremum(lo, hi, &[leader.tf], -T::one(), |o| {
        let pi = expand(follower, o);
        let pk = expand(leader, o);
        pk.combine(-T::one(), &pi)
            .combine(-params.phi, &pi.derivative())
            .shift(-params.rho)
    })
}

pub fn rear_end_ok<T: Scalar>(
    follower: &CubicTrajectory<T>,
    leader: &CubicTrajectory<T>,
    params: &SafetyParams<T>,
) -> bool {
    rear_end_margin(follower, leader, params).map_or(true, |m| m >= -T::lit(CONSTRAINT_SLACK))
}

/// `max_t (delta(t) + p(t) - p_c)` over `[traj.t0, until]`, `-inf` if empty.
fn approach_excess<T: Scalar>(
    traj: &CubicTrajectory<T>,
    p_c: T,
    until: T,
    params: &SafetyParams<T>,
) -> T {
    piecewise_extremum(traj.t0, until, &[traj.tf], T::one(), |o| {
        let p = expand(traj, o);
        p.combine(params.phi, &p.derivative())
            .shift(params.rho - p_c)
    })
    .unwrap_or(T::neg_infinity())
}

/// Lateral constraint value: the smaller of "`i` stays clear until `k` has
/// reached the conflict point" and "`k` stays clear until `i` has reached it".
/// Non-positive means safe.
pub fn lateral_margin<T: Scalar>(
    traj_i: &CubicTrajectory<T>,
    p_i_c: T,
    traj_k: &CubicTrajectory<T>,
    p_k_c: T,
    t_k_c: T,
    params: &SafetyParams<T>,
) -> T {
    let t_i_c = traj_i.time_at_position_unchecked(p_i_c);
    lateral_margin_with_time(traj_i, p_i_c, t_i_c, traj_k, p_k_c, t_k_c, params)
}

pub(crate) fn lateral_margin_with_time<T: Scalar>(
    traj_i: &CubicTrajectory<T>,
    p_i_c: T,
    t_i_c: T,
    traj_k: &CubicTrajectory<T>,
    p_k_c: T,
    t_k_c: T,
    params: &SafetyParams<T>,
) -> T {
    let after_k = approach_excess(traj_i, p_i_c, t_k_c, params);
    if after_k <= T::lit(CONSTRAINT_SLACK) {
        return after_k;
    }
    let before_k = approach_excess(traj_k, p_k_c, t_i_c, params);
    after_k.min(before_k)
}

pub fn lateral_ok<T: Scalar>(
    traj_i: &CubicTrajectory<T>,
    p_i_c: T,
    traj_k: &CubicTrajectory<T>,
    p_k_c: T,
    t_k_c: T,
    params: &SafetyParams<T>,
) -> bool {
    lateral_margin(traj_i, p_i_c, traj_k, p_k_c, t_k_c, params) <= T::lit(CONSTRAINT_SLACK)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::fit_boundary_trajectory;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const SAFETY: SafetyParams<f64> = SafetyParams { rho: 2.0, phi: 0.5 };

    #[test]
    fn safety_distance_examples() {
        assert_eq!(safety_distance(&SAFETY, 0.0), 2.0);
        assert_eq!(safety_distance(&SAFETY, 10.0), 7.0);
        let no_reaction = SafetyParams { rho: 2.0, phi: 0.0 };
        assert_eq!(safety_distance(&no_reaction, 13.7), 2.0);
    }

    #[test]
    fn uniform_gap_passes_and_coincident_fails() {
        // Same profile, leader one gap ahead in time.
        let leader = fit_boundary_trajectory(0.0, 10.0, 7.0, 70.0).unwrap();
        let follower = fit_boundary_trajectory(2.0 * 7.0 / 10.0 * 2.0, 10.0, 2.8 + 7.0, 70.0).unwrap();
        // Gap of 28 m at 10 m/s against delta = 7 m.
        assert!(rear_end_ok(&follower, &leader, &SAFETY));
        assert!(!rear_end_ok(&leader, &leader, &SAFETY));
    }

    #[test]
    fn wide_temporal_separation_is_safe() {
        let k = fit_boundary_trajectory(0.0, 10.0, 7.0, 70.0).unwrap();
        let t_k_c = k.time_at_position(40.0).unwrap();
        // i enters long after k has crossed, so "i after k" holds vacuously.
        let i = fit_boundary_trajectory(20.0, 10.0, 27.0, 70.0).unwrap();
        assert!(lateral_margin(&i, 40.0, &k, 40.0, t_k_c, &SAFETY) <= 0.0);
        // i enters well before k reaches the point, but is far behind it.
        let i = fit_boundary_trajectory(3.0, 2.5, 30.0, 70.0).unwrap();
        assert!(lateral_ok(&i, 60.0, &k, 40.0, t_k_c, &SAFETY));
    }

    #[test]
    fn simultaneous_occupancy_fails() {
        let k = fit_boundary_trajectory(0.0, 10.0, 7.0, 70.0).unwrap();
        let i = fit_boundary_trajectory(0.0, 10.0, 7.0, 70.0).unwrap();
        let t_k_c = k.time_at_position(35.0).unwrap();
        assert!(!lateral_ok(&i, 35.0, &k, 35.0, t_k_c, &SAFETY));
    }

    fn sampled_max(lo: f64, hi: f64, f: impl Fn(f64) -> f64) -> f64 {
        if hi < lo {
            return f64::NEG_INFINITY;
        }
        let n = ((hi - lo) / 1e-3).ceil() as usize;
        (0..=n)
            .map(|k| f((lo + k as f64 * 1e-3).min(hi)))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    fn random_traj(rng: &mut ChaCha8Rng, t0: f64) -> CubicTrajectory<f64> {
        let v0 = rng.gen_range(3.0..15.0);
        let pf = rng.gen_range(40.0..80.0);
        let h = pf / v0 * rng.gen_range(0.7..1.5);
        fit_boundary_trajectory(t0, v0, t0 + h, pf).unwrap()
    }

    #[test]
    fn rear_end_matches_dense_sampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut checked = 0;
        for _ in 0..300 {
            let leader = random_traj(&mut rng, 0.0);
            let t0 = rng.gen_range(0.0..4.0);
            let follower = random_traj(&mut rng, t0);
            let Some(closed) = rear_end_margin(&follower, &leader, &SAFETY) else {
                continue;
            };
            let sampled = -sampled_max(follower.t0.max(leader.t0), follower.tf, |t| {
                -(leader.position_extended(t)
                    - follower.position_extended(t)
                    - safety_distance(&SAFETY, follower.speed_extended(t)))
            });
            assert!(closed <= sampled + 1e-9);
            assert!(sampled - closed < 1e-4, "{closed} vs {sampled}");
            if closed.abs() > 1e-4 {
                assert_eq!(closed >= 0.0, sampled >= 0.0);
                checked += 1;
            }
        }
        assert!(checked > 250);
    }

    #[test]
    fn lateral_matches_dense_sampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let (mut ok, mut bad) = (0, 0);
        for _ in 0..300 {
            let k = random_traj(&mut rng, 0.0);
            let t0 = rng.gen_range(0.0..5.0);
            let i = random_traj(&mut rng, t0);
            let p_k_c = rng.gen_range(5.0..k.pf - 1.0);
            let p_i_c = rng.gen_range(5.0..i.pf - 1.0);
            let t_k_c = k.time_at_position(p_k_c).unwrap();
            let t_i_c = i.time_at_position(p_i_c).unwrap();
            let closed = lateral_margin(&i, p_i_c, &k, p_k_c, t_k_c, &SAFETY);
            let excess = |tr: &CubicTrajectory<f64>, pc: f64, t: f64| {
                safety_distance(&SAFETY, tr.speed_extended(t)) + tr.position_extended(t) - pc
            };
            let b1 = sampled_max(i.t0, t_k_c, |t| excess(&i, p_i_c, t));
            let b2 = sampled_max(k.t0, t_i_c, |t| excess(&k, p_k_c, t));
            let sampled = b1.min(b2);
            if closed.abs() < 1e-4 {
                continue;
            }
            assert_eq!(closed <= 0.0, sampled <= 0.0, "{closed} vs {sampled}");
            if closed <= 0.0 {
                ok += 1;
            } else {
                bad += 1;
            }
        }
        assert!(ok > 20 && bad > 20, "{ok} {bad}");
    }
}
