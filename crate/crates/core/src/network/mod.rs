//! Road network: directed graph plus per-intersection internal geometry.

mod geometry;
mod grid;
mod shortest;

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

pub use geometry::Point;
pub use grid::{build_grid_network, Arm, GridGeometry};
pub use shortest::{shortest_time_path, Route};

macro_rules! id_type {
    ($name:ident, $prefix:literal) => {
        #[derive(
            Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
        )]
        #[serde(transparent)]
        pub struct $name(pub u32);

        impl $name {
            #[inline]
            pub fn index(self) -> usize {
                self.0 as usize
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!($prefix, "{}"), self.0)
            }
        }
    };
}

id_type!(NodeId, "n");
id_type!(EdgeId, "e");
id_type!(IntersectionId, "x");
id_type!(ConflictPointId, "c");

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid network: {0}")]
    Invalid(String),
    #[error("no route from {origin} to {dest}")]
    NoRoute { origin: NodeId, dest: NodeId },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed network file: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node<T> {
    pub id: NodeId,
    pub position: Point<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum EdgeKind {
    /// Road segment between two intersections (or a boundary stub).
    Link,
    /// Maneuver through an intersection; `path` indexes its internal paths.
    Internal {
        intersection: IntersectionId,
        path: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge<T> {
    pub id: EdgeId,
    pub tail: NodeId,
    pub head: NodeId,
    pub length: T,
    #[serde(flatten)]
    pub kind: EdgeKind,
}

/// Geometry of one maneuver through an intersection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathDescriptor<T> {
    pub entry: NodeId,
    pub exit: NodeId,
    pub edge: EdgeId,
    pub polyline: Vec<Point<T>>,
    pub length: T,
    /// Conflict points along the path, ascending by arc length.
    pub conflicts: Vec<(ConflictPointId, T)>,
}

impl<T: Scalar> PathDescriptor<T> {
    /// Planar point at arc length `s` along the polyline.
    pub fn point_at(&self, s: T) -> Point<T> {
        geometry::point_at_arc_length(&self.polyline, s)
    }

    pub fn conflict_position(&self, id: ConflictPointId) -> Option<T> {
        self.conflicts.iter().find(|(c, _)| *c == id).map(|&(_, s)| s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConflictPoint<T> {
    pub id: ConflictPointId,
    pub position: Point<T>,
    /// `(path index, arc length on that path)`.
    pub on_paths: Vec<(usize, T)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntersectionGeometry<T> {
    pub id: IntersectionId,
    pub center: Point<T>,
    pub entry_nodes: [NodeId; 4],
    pub exit_nodes: [NodeId; 4],
    pub paths: Vec<PathDescriptor<T>>,
    pub conflict_points: Vec<ConflictPoint<T>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetworkGraph<T> {
    nodes: Vec<Node<T>>,
    edges: Vec<Edge<T>>,
    intersections: Vec<IntersectionGeometry<T>>,
    #[serde(skip)]
    out_edges: Vec<Vec<EdgeId>>,
    #[serde(skip)]
    in_degree: Vec<usize>,
}

impl<T: Scalar> PartialEq for NetworkGraph<T> {
    fn eq(&self, other: &Self) -> bool {
        self.nodes == other.nodes
            && self.edges == other.edges
            && self.intersections == other.intersections
    }
}

const POINT_TOLERANCE: f64 = 1e-6;

impl<T: Scalar> NetworkGraph<T> {
    /// Validates and indexes a graph. Ids must equal their position in each list.
    pub fn new(
        nodes: Vec<Node<T>>,
        edges: Vec<Edge<T>>,
        intersections: Vec<IntersectionGeometry<T>>,
    ) -> Result<Self, NetworkError> {
        let mut graph = Self {
            nodes,
            edges,
            intersections,
            out_edges: Vec::new(),
            in_degree: Vec::new(),
        };
        graph.validate()?;
        graph.index();
        Ok(graph)
    }

    fn index(&mut self) {
        self.out_edges = vec![Vec::new(); self.nodes.len()];
        self.in_degree = vec![0; self.nodes.len()];
        for e in &self.edges {
            self.out_edges[e.tail.index()].push(e.id);
            self.in_degree[e.head.index()] += 1;
        }
    }

    fn validate(&self) -> Result<(), NetworkError> {
        let bad = |msg: String| Err(NetworkError::Invalid(msg));
        for (i, n) in self.nodes.iter().enumerate() {
            if n.id.index() != i {
                return bad(format!("node at position {i} has id {}", n.id));
            }
        }
        let node_ok = |id: NodeId| id.index() < self.nodes.len();
        for (i, e) in self.edges.iter().enumerate() {
            if e.id.index() != i {
                return bad(format!("edge at position {i} has id {}", e.id));
            }
            if !node_ok(e.tail) || !node_ok(e.head) {
                return bad(format!("edge {} references a missing node", e.id));
            }
            if !(e.length > T::zero()) {
                return bad(format!("edge {} has non-positive length {}", e.id, e.length));
            }
            if let EdgeKind::Internal { intersection, path } = e.kind {
                let Some(x) = self.intersections.get(intersection.index()) else {
                    return bad(format!("edge {} references missing {intersection}", e.id));
                };
                let Some(p) = x.paths.get(path) else {
                    return bad(format!("edge {} references missing path {path}", e.id));
                };
                if p.edge != e.id || p.entry != e.tail || p.exit != e.head {
                    return bad(format!("edge {} disagrees with its path descriptor", e.id));
                }
            }
        }
        let tol = T::lit(POINT_TOLERANCE);
        for (i, x) in self.intersections.iter().enumerate() {
            if x.id.index() != i {
                return bad(format!("intersection at position {i} has id {}", x.id));
            }
            if x.entry_nodes.iter().chain(&x.exit_nodes).any(|&n| !node_ok(n)) {
                return bad(format!("{} references a missing node", x.id));
            }
            if x.paths.len() != 12 {
                return bad(format!("{} has {} internal paths, expected 12", x.id, x.paths.len()));
            }
            for (pi, p) in x.paths.iter().enumerate() {
                if !x.entry_nodes.contains(&p.entry) || !x.exit_nodes.contains(&p.exit) {
                    return bad(format!("{} path {pi} does not join entry to exit", x.id));
                }
                let edge = self
                    .edges
                    .get(p.edge.index())
                    .ok_or_else(|| NetworkError::Invalid(format!("{} path {pi} edge", x.id)))?;
                if edge.kind
                    != (EdgeKind::Internal {
                        intersection: x.id,
                        path: pi,
                    })
                {
                    return bad(format!("{} path {pi} edge kind mismatch", x.id));
                }
                if p.conflicts.windows(2).any(|w| w[0].1 > w[1].1) {
                    return bad(format!("{} path {pi} conflicts not sorted", x.id));
                }
                for &(c, s) in &p.conflicts {
                    if !(s > T::zero() && s < p.length) {
                        return bad(format!("{} path {pi} conflict {c} at {s} not interior", x.id));
                    }
                }
            }
            for (ci, cp) in x.conflict_points.iter().enumerate() {
                if cp.id.index() != ci {
                    return bad(format!("{} conflict point ids out of order", x.id));
                }
                if cp.on_paths.len() < 2 {
                    return bad(format!("{} conflict {} lies on fewer than 2 paths", x.id, cp.id));
                }
                for &(pi, s) in &cp.on_paths {
                    let Some(p) = x.paths.get(pi) else {
                        return bad(format!("{} conflict {} path {pi} missing", x.id, cp.id));
                    };
                    if p.point_at(s).distance(&cp.position) > tol {
                        return bad(format!(
                            "{} conflict {} inconsistent on path {pi}",
                            x.id, cp.id
                        ));
                    }
                    if p.conflict_position(cp.id) != Some(s) {
                        return bad(format!("{} conflict {} not listed on path {pi}", x.id, cp.id));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn nodes(&self) -> &[Node<T>] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge<T>] {
        &self.edges
    }

    pub fn intersections(&self) -> &[IntersectionGeometry<T>] {
        &self.intersections
    }

    pub fn node(&self, id: NodeId) -> &Node<T> {
        &self.nodes[id.index()]
    }

    pub fn edge(&self, id: EdgeId) -> &Edge<T> {
        &self.edges[id.index()]
    }

    pub fn intersection(&self, id: IntersectionId) -> &IntersectionGeometry<T> {
        &self.intersections[id.index()]
    }

    pub fn out_edges(&self, node: NodeId) -> &[EdgeId] {
        &self.out_edges[node.index()]
    }

    pub fn in_degree(&self, node: NodeId) -> usize {
        self.in_degree[node.index()]
    }

    pub fn contains_node(&self, node: NodeId) -> bool {
        node.index() < self.nodes.len()
    }

    /// Path descriptor behind an internal edge, if it is one.
    pub fn internal_path(&self, edge: EdgeId) -> Option<(IntersectionId, usize, &PathDescriptor<T>)> {
        match self.edge(edge).kind {
            EdgeKind::Internal { intersection, path } => Some((
                intersection,
                path,
                &self.intersections[intersection.index()].paths[path],
            )),
            EdgeKind::Link => None,
        }
    }

    /// Nodes reachable from `origin` (including itself).
    pub fn reachable_from(&self, origin: NodeId) -> Vec<bool> {
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![origin];
        seen[origin.index()] = true;
        while let Some(n) = stack.pop() {
            for &e in self.out_edges(n) {
                let h = self.edge(e).head;
                if !seen[h.index()] {
                    seen[h.index()] = true;
                    stack.push(h);
                }
            }
        }
        seen
    }

    pub fn to_json(&self) -> Result<String, NetworkError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, NetworkError> {
        let raw: NetworkGraph<T> = serde_json::from_str(text)?;
        Self::new(raw.nodes, raw.edges, raw.intersections)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), NetworkError> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, NetworkError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
