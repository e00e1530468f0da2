//! Manhattan-grid builder.
//!
//! Each intersection is a square box with one inbound and one outbound lane
//! per arm (right-hand traffic). An internal path starts at the entry node,
//! which sits `approach_length` upstream of the box so the coordinator controls
//! the approach lane, and ends at the exit node on the box boundary. Turns are
//! quarter circles inside the box; right turns use `right_turn_radius` and
//! left turns `box_side - right_turn_radius`.

use serde::{Deserialize, Serialize};

use super::geometry::{point_at_arc_length, polyline_crossings, polyline_length, Point};
use super::{
    ConflictPoint, ConflictPointId, Edge, EdgeId, EdgeKind, IntersectionGeometry,
    IntersectionId, NetworkError, NetworkGraph, Node, NodeId, PathDescriptor,
};
use crate::scalar::Scalar;

const ARC_SEGMENTS: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridGeometry<T> {
    /// Center-to-center spacing of adjacent intersections (m).
    pub block_length: T,
    /// Side of the square conflict area (m).
    pub box_side: T,
    /// Radius of right-turn arcs (m); sets the lane offset from the arm axis.
    pub right_turn_radius: T,
    /// Length of the controlled approach lane ahead of the box (m).
    pub approach_length: T,
}

impl<T: Scalar> Default for GridGeometry<T> {
    fn default() -> Self {
        Self {
            block_length: T::lit(200.0),
            box_side: T::lit(20.0),
            right_turn_radius: T::lit(5.0),
            approach_length: T::lit(50.0),
        }
    }
}

impl<T: Scalar> GridGeometry<T> {
    pub fn validate(&self) -> Result<(), NetworkError> {
        let half = self.box_side * T::lit(0.5);
        let err = |m: &str| Err(NetworkError::InvalidArgument(m.to_string()));
        if !(self.box_side > T::zero()) {
            return err("box_side must be positive");
        }
        if !(self.right_turn_radius > T::zero() && self.right_turn_radius < half) {
            return err("right_turn_radius must lie in (0, box_side / 2)");
        }
        if !(self.approach_length >= T::zero()) {
            return err("approach_length must be non-negative");
        }
        if !(self.block_length > self.box_side + self.approach_length) {
            return err("block_length must exceed box_side + approach_length");
        }
        Ok(())
    }

    fn lane_offset(&self) -> T {
        self.box_side * T::lit(0.5) - self.right_turn_radius
    }
}

/// Compass arm of an intersection. Index order N, E, S, W.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arm {
    North,
    East,
    South,
    West,
}

impl Arm {
    pub const ALL: [Arm; 4] = [Arm::North, Arm::East, Arm::South, Arm::West];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn opposite(self) -> Arm {
        Self::ALL[(self.index() + 2) % 4]
    }

    fn outward<T: Scalar>(self) -> Point<T> {
        let (x, y) = match self {
            Arm::North => (0.0, 1.0),
            Arm::East => (1.0, 0.0),
            Arm::South => (0.0, -1.0),
            Arm::West => (-1.0, 0.0),
        };
        Point::new(T::lit(x), T::lit(y))
    }

    /// Exit arm reached by turning right after entering from `self`.
    fn right_turn(self) -> Arm {
        Self::ALL[(self.index() + 3) % 4]
    }

    fn left_turn(self) -> Arm {
        Self::ALL[(self.index() + 1) % 4]
    }
}

#[derive(Clone, Copy)]
enum Maneuver {
    Right,
    Straight,
    Left,
}

/// Builds a `rows x cols` grid. Intersection `(r, c)` has id `r * cols + c`,
/// its entry nodes are `8k .. 8k+4` and exit nodes `8k+4 .. 8k+8` (arm order
/// N, E, S, W). Internal edges come first, then links between neighbors.
pub fn build_grid_network<T: Scalar>(
    rows: usize,
    cols: usize,
    geometry: &GridGeometry<T>,
) -> Result<NetworkGraph<T>, NetworkError> {
    if rows == 0 || cols == 0 {
        return Err(NetworkError::InvalidArgument(format!(
            "grid dimensions must be positive, got {rows}x{cols}"
        )));
    }
    geometry.validate()?;
    let half = geometry.box_side * T::lit(0.5);
    let lane = geometry.lane_offset();
    let count = rows * cols;

    let mut nodes = Vec::with_capacity(count * 8);
    let mut edges: Vec<Edge<T>> = Vec::new();
    let mut intersections = Vec::with_capacity(count);

    let entry_id = |k: usize, arm: Arm| NodeId((8 * k + arm.index()) as u32);
    let exit_id = |k: usize, arm: Arm| NodeId((8 * k + 4 + arm.index()) as u32);

    for r in 0..rows {
        for c in 0..cols {
            let k = r * cols + c;
            let center = Point::new(
                geometry.block_length * T::lit(c as f64),
                geometry.block_length * T::lit(r as f64),
            );
            let box_entry = |arm: Arm| {
                let o = arm.outward::<T>();
                center + o * half + (o * -T::one()).right() * lane
            };
            let entry_point =
                |arm: Arm| box_entry(arm) + arm.outward::<T>() * geometry.approach_length;
            let exit_point = |arm: Arm| {
                let o = arm.outward::<T>();
                center + o * half + o.right() * lane
            };
            for arm in Arm::ALL {
                nodes.push(Node {
                    id: entry_id(k, arm),
                    position: entry_point(arm),
                });
            }
            for arm in Arm::ALL {
                nodes.push(Node {
                    id: exit_id(k, arm),
                    position: exit_point(arm),
                });
            }

            let mut paths = Vec::with_capacity(12);
            for arm in Arm::ALL {
                for maneuver in [Maneuver::Right, Maneuver::Straight, Maneuver::Left] {
                    let out = match maneuver {
                        Maneuver::Right => arm.right_turn(),
                        Maneuver::Straight => arm.opposite(),
                        Maneuver::Left => arm.left_turn(),
                    };
                    let mut polyline = vec![entry_point(arm)];
                    if geometry.approach_length > T::zero() {
                        polyline.push(box_entry(arm));
                    }
                    let start = box_entry(arm);
                    let end = exit_point(out);
                    match maneuver {
                        Maneuver::Straight => {}
                        Maneuver::Right | Maneuver::Left => {
                            let heading = arm.outward::<T>() * -T::one();
                            let (radius, sign) = match maneuver {
                                Maneuver::Right => (geometry.right_turn_radius, -T::one()),
                                _ => (geometry.box_side - geometry.right_turn_radius, T::one()),
                            };
                            let pivot = start + heading.right() * (radius * -sign);
                            let rel = start - pivot;
                            let theta0 = rel.y.atan2(rel.x);
                            let quarter = T::lit(std::f64::consts::FRAC_PI_2);
                            for step in 1..ARC_SEGMENTS {
                                let f = T::lit(step as f64 / ARC_SEGMENTS as f64);
                                let theta = theta0 + sign * quarter * f;
                                polyline.push(
                                    pivot + Point::new(theta.cos(), theta.sin()) * radius,
                                );
                            }
                        }
                    }
                    polyline.push(end);
                    let edge = EdgeId(edges.len() as u32);
                    let length = polyline_length(&polyline);
                    edges.push(Edge {
                        id: edge,
                        tail: entry_id(k, arm),
                        head: exit_id(k, out),
                        length,
                        kind: EdgeKind::Internal {
                            intersection: IntersectionId(k as u32),
                            path: paths.len(),
                        },
                    });
                    paths.push(PathDescriptor {
                        entry: entry_id(k, arm),
                        exit: exit_id(k, out),
                        edge,
                        polyline,
                        length,
                        conflicts: Vec::new(),
                    });
                }
            }
            let conflict_points = compute_conflicts(&mut paths);
            intersections.push(IntersectionGeometry {
                id: IntersectionId(k as u32),
                center,
                entry_nodes: Arm::ALL.map(|a| entry_id(k, a)),
                exit_nodes: Arm::ALL.map(|a| exit_id(k, a)),
                paths,
                conflict_points,
            });
        }
    }

    for r in 0..rows {
        for c in 0..cols {
            let k = r * cols + c;
            for arm in Arm::ALL {
                let neighbor = match arm {
                    Arm::North if r + 1 < rows => Some(k + cols),
                    Arm::South if r > 0 => Some(k - cols),
                    Arm::East if c + 1 < cols => Some(k + 1),
                    Arm::West if c > 0 => Some(k - 1),
                    _ => None,
                };
                if let Some(n) = neighbor {
                    let tail = exit_id(k, arm);
                    let head = entry_id(n, arm.opposite());
                    let length = nodes[tail.index()]
                        .position
                        .distance(&nodes[head.index()].position);
                    edges.push(Edge {
                        id: EdgeId(edges.len() as u32),
                        tail,
                        head,
                        length,
                        kind: EdgeKind::Link,
                    });
                }
            }
        }
    }

    NetworkGraph::new(nodes, edges, intersections)
}

/// Pairwise crossings of internal paths, merged when they coincide.
///
/// Paths sharing an entry lane diverge and paths sharing an exit lane merge at
/// the box boundary; neither produces an interior conflict point.
fn compute_conflicts<T: Scalar>(paths: &mut [PathDescriptor<T>]) -> Vec<ConflictPoint<T>> {
    let tol = T::lit(1e-6);
    let mut points: Vec<ConflictPoint<T>> = Vec::new();
    for p in 0..paths.len() {
        for q in (p + 1)..paths.len() {
            if paths[p].entry == paths[q].entry {
                continue;
            }
            for (at, sp, sq) in polyline_crossings(&paths[p].polyline, &paths[q].polyline) {
                let interior = |s: T, len: T| s > tol && s < len - tol;
                if !interior(sp, paths[p].length) || !interior(sq, paths[q].length) {
                    continue;
                }
                let idx = match points.iter().position(|c| c.position.distance(&at) < tol) {
                    Some(i) => i,
                    None => {
                        points.push(ConflictPoint {
                            id: ConflictPointId(points.len() as u32),
                            position: at,
                            on_paths: Vec::new(),
                        });
                        points.len() - 1
                    }
                };
                for (path, s) in [(p, sp), (q, sq)] {
                    if !points[idx].on_paths.iter().any(|&(pi, _)| pi == path) {
                        points[idx].on_paths.push((path, s));
                    }
                }
            }
        }
    }
    for cp in &mut points {
        cp.on_paths.sort_by_key(|&(pi, _)| pi);
        // Anchor the planar position to the first path so all views agree.
        let (pi, s) = cp.on_paths[0];
        cp.position = point_at_arc_length(&paths[pi].polyline, s);
        for &(path, s) in &cp.on_paths {
            paths[path].conflicts.push((cp.id, s));
        }
    }
    for path in paths.iter_mut() {
        path.conflicts
            .sort_by(|a, b| crate::scalar::cmp(a.1, b.1).then(a.0.cmp(&b.0)));
    }
    points
}
