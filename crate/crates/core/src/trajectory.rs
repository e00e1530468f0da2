//! Energy-optimal cubic trajectories inside an intersection.
//!
//! A CAV entering at time `t0` with speed `v0` follows
//!
//! ```text
//! u(t) = 6 a s + 2 b
//! v(t) = 3 a s^2 + 2 b s + c
//! p(t) = a s^3 + b s^2 + c s + d,      s = t - t0
//! ```
//!
//! with boundary conditions `p(t0) = 0`, `v(t0) = v0`, `p(tf) = pf` and
//! `u(tf) = 0`. Coefficients are stored in the shifted variable `s` so that
//! conditioning does not degrade as the simulation clock grows; use
//! [`CubicTrajectory::absolute_coefficients`] for the unshifted form.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrajectoryError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("time {t} outside validity interval [{t0}, {tf}]")]
    TimeOutOfDomain { t: f64, t0: f64, tf: f64 },
    #[error("position {p} outside [0, {pf}]")]
    PositionOutOfDomain { p: f64, pf: f64 },
    #[error("no exit time satisfies the motion limits")]
    EmptyWindow,
    #[error("feasible exit times do not form an interval (scan pattern {pattern})")]
    NonContiguousWindow { pattern: String },
}

/// Acceleration and speed bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotionLimits<T> {
    pub u_min: T,
    pub u_max: T,
    pub v_min: T,
    pub v_max: T,
}

impl<T: Scalar> MotionLimits<T> {
    pub fn new(u_min: T, u_max: T, v_min: T, v_max: T) -> Result<Self, TrajectoryError> {
        let limits = Self {
            u_min,
            u_max,
            v_min,
            v_max,
        };
        limits.validate()?;
        Ok(limits)
    }

    pub fn validate(&self) -> Result<(), TrajectoryError> {
        let zero = T::zero();
        if !(self.u_min < zero && zero < self.u_max) {
            return Err(TrajectoryError::InvalidArgument(format!(
                "acceleration bounds must satisfy u_min < 0 < u_max, got [{}, {}]",
                self.u_min, self.u_max
            )));
        }
        if !(zero < self.v_min && self.v_min <= self.v_max) {
            return Err(TrajectoryError::InvalidArgument(format!(
                "speed bounds must satisfy 0 < v_min <= v_max, got [{}, {}]",
                self.v_min, self.v_max
            )));
        }
        Ok(())
    }
}

/// Numerical slack applied to limit checks, scaled to the magnitude involved.
fn slack<T: Scalar>(scale: T) -> T {
    let floor = T::lit(1e-9);
    let rel = T::epsilon() * T::lit(64.0) * scale.abs().max(T::one());
    floor.max(rel)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CubicTrajectory<T> {
    /// Cubic coefficient (m/s^3), in the shifted time `s = t - t0`.
    pub a: T,
    pub b: T,
    pub c: T,
    pub d: T,
    pub t0: T,
    pub tf: T,
    pub pf: T,
    pub v0: T,
}

/// Solves the boundary-value problem for the cubic family.
///
/// The system is triangular once written in `s = t - t0`: `d = 0`, `c = v0`,
/// `b = -3 a T` from `u(tf) = 0`, and `-2 a T^3 + v0 T = pf`.
pub fn fit_boundary_trajectory<T: Scalar>(
    t0: T,
    v0: T,
    tf: T,
    pf: T,
) -> Result<CubicTrajectory<T>, TrajectoryError> {
    if !(tf > t0) || !(tf - t0 > T::zero()) {
        return Err(TrajectoryError::InvalidArgument(format!(
            "exit time {tf} must exceed entry time {t0}"
        )));
    }
    if !(pf > T::zero()) {
        return Err(TrajectoryError::InvalidArgument(format!(
            "path length {pf} must be positive"
        )));
    }
    if !(v0 > T::zero()) {
        return Err(TrajectoryError::InvalidArgument(format!(
            "entry speed {v0} must be positive"
        )));
    }
    Ok(fit_unchecked(t0, v0, tf, pf))
}

#[inline]
pub(crate) fn fit_unchecked<T: Scalar>(t0: T, v0: T, tf: T, pf: T) -> CubicTrajectory<T> {
    let horizon = tf - t0;
    let a = (v0 * horizon - pf) / (T::lit(2.0) * horizon * horizon * horizon);
    let b = -T::lit(3.0) * a * horizon;
    CubicTrajectory {
        a,
        b,
        c: v0,
        d: T::zero(),
        t0,
        tf,
        pf,
        v0,
    }
}

impl<T: Scalar> CubicTrajectory<T> {
    #[inline]
    pub fn duration(&self) -> T {
        self.tf - self.t0
    }

    #[inline]
    pub(crate) fn pos_local(&self, s: T) -> T {
        ((self.a * s + self.b) * s + self.c) * s + self.d
    }

    #[inline]
    pub(crate) fn vel_local(&self, s: T) -> T {
        (T::lit(3.0) * self.a * s + T::lit(2.0) * self.b) * s + self.c
    }

    #[inline]
    pub(crate) fn acc_local(&self, s: T) -> T {
        T::lit(6.0) * self.a * s + T::lit(2.0) * self.b
    }

    fn check_time(&self, t: T) -> Result<T, TrajectoryError> {
        if t < self.t0 || t > self.tf || t.is_nan() {
            return Err(TrajectoryError::TimeOutOfDomain {
                t: t.as_f64(),
                t0: self.t0.as_f64(),
                tf: self.tf.as_f64(),
            });
        }
        Ok(t - self.t0)
    }

    pub fn position(&self, t: T) -> Result<T, TrajectoryError> {
        self.check_time(t).map(|s| self.pos_local(s))
    }

    pub fn speed(&self, t: T) -> Result<T, TrajectoryError> {
        self.check_time(t).map(|s| self.vel_local(s))
    }

    pub fn accel(&self, t: T) -> Result<T, TrajectoryError> {
        self.check_time(t).map(|s| self.acc_local(s))
    }

    pub fn exit_speed(&self) -> T {
        self.vel_local(self.duration())
    }

    /// Position with constant-speed extrapolation past `tf`.
    #[inline]
    pub fn position_extended(&self, t: T) -> T {
        if t <= self.tf {
            self.pos_local(t - self.t0)
        } else {
            self.pf + self.exit_speed() * (t - self.tf)
        }
    }

    #[inline]
    pub fn speed_extended(&self, t: T) -> T {
        if t <= self.tf {
            self.vel_local(t - self.t0)
        } else {
            self.exit_speed()
        }
    }

    /// Coefficients of `p(t) = A t^3 + B t^2 + C t + D` in absolute time.
    pub fn absolute_coefficients(&self) -> [T; 4] {
        let (a, b, c, d, t0) = (self.a, self.b, self.c, self.d, self.t0);
        let three = T::lit(3.0);
        let two = T::lit(2.0);
        [
            a,
            b - three * a * t0,
            c - two * b * t0 + three * a * t0 * t0,
            d - c * t0 + b * t0 * t0 - a * t0 * t0 * t0,
        ]
    }

    /// Inverse of the position function on `[t0, tf]`.
    ///
    /// Assumes the trajectory is strictly increasing (certified against a
    /// positive minimum speed); uses a safeguarded Newton iteration inside the
    /// bracket `[t0, tf]`.
    pub fn time_at_position(&self, p: T) -> Result<T, TrajectoryError> {
        // Positions evaluated at the endpoints may overshoot by rounding.
        let slack = T::lit(64.0) * T::epsilon() * self.pf.max(T::one());
        if p < -slack || p > self.pf + slack || p.is_nan() {
            return Err(TrajectoryError::PositionOutOfDomain {
                p: p.as_f64(),
                pf: self.pf.as_f64(),
            });
        }
        Ok(self.time_at_position_unchecked(p))
    }

    pub(crate) fn time_at_position_unchecked(&self, p: T) -> T {
        let horizon = self.duration();
        if p <= T::zero() {
            return self.t0;
        }
        if p >= self.pf {
            return self.tf;
        }
        let tol = T::lit(1e-9).max(T::epsilon() * T::lit(8.0) * (self.tf.abs() + horizon));
        let (mut lo, mut hi) = (T::zero(), horizon);
        let mut s = horizon * p / self.pf;
        for _ in 0..100 {
            let f = self.pos_local(s) - p;
            if f < T::zero() {
                lo = s;
            } else {
                hi = s;
            }
            let df = self.vel_local(s);
            let mut next = if df > T::zero() { s - f / df } else { lo };
            if !(next > lo && next < hi) {
                next = (lo + hi) * T::lit(0.5);
            }
            let step = (next - s).abs();
            s = next;
            if step <= tol * T::lit(0.25) || hi - lo <= tol {
                break;
            }
        }
        self.t0 + s
    }

    /// Closed-form check of the speed and acceleration bounds over `[t0, tf]`.
    ///
    /// Speed is quadratic in time, so its extrema are at the endpoints or at
    /// the vertex; acceleration is linear, so only endpoints matter.
    pub fn respects_limits(&self, limits: &MotionLimits<T>) -> bool {
        let horizon = self.duration();
        let (mut v_lo, mut v_hi) = {
            let v_start = self.vel_local(T::zero());
            let v_end = self.vel_local(horizon);
            (v_start.min(v_end), v_start.max(v_end))
        };
        if self.a != T::zero() {
            let vertex = -self.b / (T::lit(3.0) * self.a);
            if vertex > T::zero() && vertex < horizon {
                let v = self.vel_local(vertex);
                v_lo = v_lo.min(v);
                v_hi = v_hi.max(v);
            }
        }
        let u_start = self.acc_local(T::zero());
        let u_end = self.acc_local(horizon);
        let v_slack = slack(limits.v_max);
        let u_slack = slack(limits.u_max.max(-limits.u_min));
        v_lo >= limits.v_min - v_slack
            && v_hi <= limits.v_max + v_slack
            && u_start.min(u_end) >= limits.u_min - u_slack
            && u_start.max(u_end) <= limits.u_max + u_slack
    }
}

/// Range of exit times reachable with a limits-respecting cubic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeasibleExitWindow<T> {
    pub t_lo: T,
    pub t_hi: T,
}

impl<T: Scalar> FeasibleExitWindow<T> {
    pub fn contains(&self, t: T) -> bool {
        t >= self.t_lo && t <= self.t_hi
    }
}

const WINDOW_SCAN_POINTS: usize = 64;
const WINDOW_TOLERANCE: f64 = 1e-6;

/// Earliest and latest exit times for which the fitted cubic respects `limits`.
///
/// Any feasible trajectory has average speed `pf / (tf - t0)` inside the
/// speed band, so the search is bracketed by `[pf / v_max, pf / v_min]`. A
/// coarse scan locates the feasible run, which must be contiguous, and both
/// ends are refined by bisection.
pub fn feasible_exit_window<T: Scalar>(
    t0: T,
    v0: T,
    pf: T,
    limits: &MotionLimits<T>,
) -> Result<FeasibleExitWindow<T>, TrajectoryError> {
    let v_slack = slack(limits.v_max);
    if v0 < limits.v_min - v_slack || v0 > limits.v_max + v_slack {
        return Err(TrajectoryError::InvalidArgument(format!(
            "entry speed {v0} outside [{}, {}]",
            limits.v_min, limits.v_max
        )));
    }
    if !(pf > T::zero()) {
        return Err(TrajectoryError::InvalidArgument(format!(
            "path length {pf} must be positive"
        )));
    }
    let h_min = pf / limits.v_max;
    let h_max = pf / limits.v_min;
    let feasible = |h: T| fit_unchecked(t0, v0, t0 + h, pf).respects_limits(limits);

    let n = WINDOW_SCAN_POINTS;
    let grid: Vec<T> = (0..n)
        .map(|k| {
            if k == n - 1 {
                h_max
            } else {
                h_min + (h_max - h_min) * T::lit(k as f64) / T::lit((n - 1) as f64)
            }
        })
        .collect();
    let flags: Vec<bool> = grid.iter().map(|&h| feasible(h)).collect();
    let first = flags.iter().position(|&f| f).ok_or(TrajectoryError::EmptyWindow)?;
    let last = flags.iter().rposition(|&f| f).expect("first exists");
    if flags[first..=last].iter().any(|&f| !f) {
        let pattern = flags.iter().map(|&f| if f { '1' } else { '0' }).collect();
        return Err(TrajectoryError::NonContiguousWindow { pattern });
    }

    let tol = T::lit(WINDOW_TOLERANCE);
    let bisect = |mut bad: T, mut good: T| {
        while (good - bad).abs() > tol {
            let mid = (bad + good) * T::lit(0.5);
            if feasible(mid) {
                good = mid;
            } else {
                bad = mid;
            }
        }
        good
    };
    let h_lo = if first == 0 {
        grid[0]
    } else {
        bisect(grid[first - 1], grid[first])
    };
    let h_hi = if last == n - 1 {
        grid[n - 1]
    } else {
        bisect(grid[last + 1], grid[last])
    };
    Ok(FeasibleExitWindow {
        t_lo: t0 + h_lo,
        t_hi: t0 + h_hi,
    })
}
