use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use super::{EdgeId, NetworkError, NetworkGraph, NodeId};
use crate::scalar::{cmp, Scalar};

/// Ordered edge sequence.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Route(pub Vec<EdgeId>);

impl Route {
    pub fn edges(&self) -> &[EdgeId] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Total of `cost[e]` over the route.
    pub fn cost<T: Scalar>(&self, cost: &[T]) -> T {
        self.0.iter().map(|e| cost[e.index()]).sum()
    }

    /// True when consecutive edges chain from `origin` to `dest`.
    pub fn connects<T: Scalar>(&self, graph: &NetworkGraph<T>, origin: NodeId, dest: NodeId) -> bool {
        let mut at = origin;
        for &e in &self.0 {
            let edge = graph.edge(e);
            if edge.tail != at {
                return false;
            }
            at = edge.head;
        }
        at == dest
    }
}

struct Entry<T> {
    cost: T,
    node: NodeId,
}

impl<T: Scalar> PartialEq for Entry<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl<T: Scalar> Eq for Entry<T> {}
impl<T: Scalar> PartialOrd for Entry<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<T: Scalar> Ord for Entry<T> {
    // Min-heap on cost, then node id.
    fn cmp(&self, other: &Self) -> Ordering {
        cmp(other.cost, self.cost).then_with(|| other.node.cmp(&self.node))
    }
}

/// Minimum-cost route under `edge_cost` (indexed by edge id).
///
/// Among routes of equal cost (to a relative 1e-9) the lexicographically
/// smallest edge-id sequence wins. Returns an empty route when
/// `origin == dest`.
pub fn shortest_time_path<T: Scalar>(
    graph: &NetworkGraph<T>,
    origin: NodeId,
    dest: NodeId,
    edge_cost: &[T],
) -> Result<Route, NetworkError> {
    if !graph.contains_node(origin) || !graph.contains_node(dest) {
        return Err(NetworkError::InvalidArgument(format!(
            "unknown node in query {origin} -> {dest}"
        )));
    }
    if edge_cost.len() != graph.edges().len() {
        return Err(NetworkError::InvalidArgument(format!(
            "cost map has {} entries for {} edges",
            edge_cost.len(),
            graph.edges().len()
        )));
    }
    if let Some(e) = edge_cost.iter().position(|&c| !(c > T::zero())) {
        return Err(NetworkError::InvalidArgument(format!(
            "edge e{e} has non-positive cost {}",
            edge_cost[e]
        )));
    }
    if origin == dest {
        return Ok(Route::default());
    }

    let n = graph.nodes().len();
    let mut best: Vec<Option<(T, Vec<EdgeId>)>> = vec![None; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    best[origin.index()] = Some((T::zero(), Vec::new()));
    heap.push(Entry {
        cost: T::zero(),
        node: origin,
    });

    while let Some(Entry { cost, node }) = heap.pop() {
        if done[node.index()] {
            continue;
        }
        done[node.index()] = true;
        if node == dest {
            break;
        }
        let path = best[node.index()].as_ref().expect("labelled").1.clone();
        for &e in graph.out_edges(node) {
            let head = graph.edge(e).head;
            if done[head.index()] {
                continue;
            }
            let candidate = cost + edge_cost[e.index()];
            let tol = T::lit(1e-9) * candidate.max(T::one());
            let better = match &best[head.index()] {
                None => true,
                Some((old, old_path)) => {
                    candidate < *old - tol
                        || ((candidate - *old).abs() <= tol && {
                            let mut p = path.clone();
                            p.push(e);
                            p < *old_path
                        })
                }
            };
            if better {
                let mut p = path.clone();
                p.push(e);
                best[head.index()] = Some((candidate, p));
                heap.push(Entry {
                    cost: candidate,
                    node: head,
                });
            }
        }
    }

    match best[dest.index()].take() {
        Some((_, path)) if done[dest.index()] => Ok(Route(path)),
        _ => Err(NetworkError::NoRoute { origin, dest }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Edge, EdgeKind, Node, Point};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Bidirectional lattice of `k x k` nodes joined by links only.
    fn lattice(k: usize) -> NetworkGraph<f64> {
        let nodes = (0..k * k)
            .map(|i| Node {
                id: NodeId(i as u32),
                position: Point::new((i % k) as f64, (i / k) as f64),
            })
            .collect();
        let mut edges = Vec::new();
        let mut add = |a: usize, b: usize| {
            let id = EdgeId(edges.len() as u32);
            edges.push(Edge {
                id,
                tail: NodeId(a as u32),
                head: NodeId(b as u32),
                length: 1.0,
                kind: EdgeKind::Link,
            });
        };
        for r in 0..k {
            for c in 0..k {
                let i = r * k + c;
                if c + 1 < k {
                    add(i, i + 1);
                    add(i + 1, i);
                }
                if r + 1 < k {
                    add(i, i + k);
                    add(i + k, i);
                }
            }
        }
        NetworkGraph::new(nodes, edges, vec![]).unwrap()
    }

    /// Every simple path from `origin` to `dest`, by depth-first enumeration.
    fn all_simple_paths(g: &NetworkGraph<f64>, origin: NodeId, dest: NodeId) -> Vec<Vec<EdgeId>> {
        fn go(
            g: &NetworkGraph<f64>,
            at: NodeId,
            dest: NodeId,
            seen: &mut Vec<bool>,
            path: &mut Vec<EdgeId>,
            out: &mut Vec<Vec<EdgeId>>,
        ) {
            if at == dest {
                out.push(path.clone());
                return;
            }
            for &e in g.out_edges(at) {
                let h = g.edge(e).head;
                if !seen[h.index()] {
                    seen[h.index()] = true;
                    path.push(e);
                    go(g, h, dest, seen, path, out);
                    path.pop();
                    seen[h.index()] = false;
                }
            }
        }
        let mut seen = vec![false; g.nodes().len()];
        seen[origin.index()] = true;
        let mut out = Vec::new();
        go(g, origin, dest, &mut seen, &mut Vec::new(), &mut out);
        out
    }

    #[test]
    fn corridor_has_unique_route() {
        let nodes = (0..4)
            .map(|i| Node {
                id: NodeId(i),
                position: Point::new(i as f64, 0.0),
            })
            .collect();
        let edges = (0..3)
            .map(|i| Edge {
                id: EdgeId(i),
                tail: NodeId(i),
                head: NodeId(i + 1),
                length: 2.0,
                kind: EdgeKind::Link,
            })
            .collect();
        let g = NetworkGraph::new(nodes, edges, vec![]).unwrap();
        let r = shortest_time_path(&g, NodeId(0), NodeId(3), &[1.0; 3]).unwrap();
        assert_eq!(r.0, vec![EdgeId(0), EdgeId(1), EdgeId(2)]);
        let r = shortest_time_path(&g, NodeId(2), NodeId(3), &[1.0; 3]).unwrap();
        assert_eq!(r.0, vec![EdgeId(2)]);
        assert!(matches!(
            shortest_time_path(&g, NodeId(3), NodeId(0), &[1.0; 3]),
            Err(NetworkError::NoRoute { .. })
        ));
    }

    #[test]
    fn detours_around_inflated_edge() {
        let g = lattice(3);
        let mut cost = vec![1.0; g.edges().len()];
        // Inflate the first edge leaving the corner.
        cost[g.out_edges(NodeId(0))[0].index()] = 10.0;
        let r = shortest_time_path(&g, NodeId(0), NodeId(8), &cost).unwrap();
        let paths = all_simple_paths(&g, NodeId(0), NodeId(8));
        let min = paths
            .iter()
            .map(|p| Route(p.clone()).cost(&cost))
            .fold(f64::INFINITY, f64::min);
        assert_eq!(r.cost(&cost), min);
        assert!(!r.0.contains(&g.out_edges(NodeId(0))[0]));
        let lexmin = paths
            .iter()
            .filter(|p| Route((*p).clone()).cost(&cost) == min)
            .min()
            .unwrap();
        assert_eq!(&r.0, lexmin);
    }

    #[test]
    fn matches_brute_force_on_random_costs() {
        let g = lattice(3);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            // Integer costs make ties common, exercising the tie-break.
            let cost: Vec<f64> = (0..g.edges().len())
                .map(|_| rng.gen_range(1..4) as f64)
                .collect();
            let o = NodeId(rng.gen_range(0..9));
            let d = NodeId(rng.gen_range(0..9));
            if o == d {
                continue;
            }
            let r = shortest_time_path(&g, o, d, &cost).unwrap();
            assert!(r.connects(&g, o, d));
            let paths = all_simple_paths(&g, o, d);
            let min = paths
                .iter()
                .map(|p| Route(p.clone()).cost(&cost))
                .fold(f64::INFINITY, f64::min);
            assert_eq!(r.cost(&cost), min);
            let lexmin = paths
                .iter()
                .filter(|p| Route((*p).clone()).cost(&cost) == min)
                .min()
                .unwrap();
            assert_eq!(&r.0, lexmin);
        }
    }

    #[test]
    fn rejects_non_positive_costs() {
        let g = lattice(2);
        let mut cost = vec![1.0; g.edges().len()];
        cost[0] = 0.0;
        assert!(matches!(
            shortest_time_path(&g, NodeId(0), NodeId(3), &cost),
            Err(NetworkError::InvalidArgument(_))
        ));
    }
}
