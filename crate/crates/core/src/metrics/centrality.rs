//! Node centralities on a single directed graph and on snapshot sequences.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::graph::{DirectedGraph, Direction, NodeId};
use crate::num::Scalar;
use crate::spillover::SnapshotSequence;

/// Unnormalized directed shortest-path betweenness (Brandes).
pub fn betweenness<T: Scalar>(graph: &DirectedGraph) -> Vec<T> {
    let n = graph.node_count();
    let mut bc = vec![T::zero(); n];
    let mut sigma = vec![T::zero(); n];
    let mut dist = vec![usize::MAX; n];
    let mut delta = vec![T::zero(); n];
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut stack = Vec::with_capacity(n);
    let mut queue = VecDeque::with_capacity(n);

    for s in 0..n {
        for v in 0..n {
            sigma[v] = T::zero();
            dist[v] = usize::MAX;
            delta[v] = T::zero();
            preds[v].clear();
        }
        sigma[s] = T::one();
        dist[s] = 0;
        queue.push_back(s);
        while let Some(v) = queue.pop_front() {
            stack.push(v);
            for &w in graph.successors(v) {
                if dist[w] == usize::MAX {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
                if dist[w] == dist[v] + 1 {
                    sigma[w] = sigma[w] + sigma[v];
                    preds[w].push(v);
                }
            }
        }
        while let Some(w) = stack.pop() {
            for &v in &preds[w] {
                delta[v] = delta[v] + sigma[v] / sigma[w] * (T::one() + delta[w]);
            }
            if w != s {
                bc[w] = bc[w] + delta[w];
            }
        }
    }
    bc
}

/// Local clustering on the symmetrized view: `2 T(v) / (deg (deg - 1))`, zero below degree 2.
pub fn clustering<T: Scalar>(graph: &DirectedGraph) -> Vec<T> {
    let u = graph.symmetrize();
    (0..u.node_count())
        .map(|v| {
            let nb = u.neighbors(v);
            let d = nb.len();
            if d < 2 {
                return T::zero();
            }
            let mut triangles = 0usize;
            for (i, &a) in nb.iter().enumerate() {
                for &b in &nb[i + 1..] {
                    if u.has_edge(a, b) {
                        triangles += 1;
                    }
                }
            }
            T::from_count(2 * triangles) / T::from_count(d * (d - 1))
        })
        .collect()
}

/// Distinct nodes, origin excluded, within `m` hops along `dir` edges.
pub fn m_reach(graph: &DirectedGraph, node: NodeId, m: usize, dir: Direction) -> Result<usize> {
    if m == 0 {
        return Err(Error::Config("m must be at least 1".into()));
    }
    if node.0 >= graph.node_count() {
        return Err(Error::UnknownNode(format!("index {}", node.0)));
    }
    let mut depth = vec![usize::MAX; graph.node_count()];
    depth[node.0] = 0;
    let mut queue = VecDeque::from([node.0]);
    let mut reached = 0;
    while let Some(v) = queue.pop_front() {
        if depth[v] == m {
            continue;
        }
        for &w in graph.neighbors(v, dir) {
            if depth[w] == usize::MAX {
                depth[w] = depth[v] + 1;
                reached += 1;
                queue.push_back(w);
            }
        }
    }
    Ok(reached)
}

pub fn m_reach_all(graph: &DirectedGraph, m: usize, dir: Direction) -> Result<Vec<usize>> {
    (0..graph.node_count())
        .map(|v| m_reach(graph, NodeId(v), m, dir))
        .collect()
}

/// Iteration controls for [`katz`].
#[derive(Debug, Clone, Copy)]
pub struct KatzOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for KatzOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_iterations: 10_000,
        }
    }
}

/// Spectral radius estimate of the adjacency matrix, by power iteration on `A + I`.
/// The shift makes the dominant eigenvalue unique in modulus for any nonnegative matrix.
pub fn spectral_radius(graph: &DirectedGraph) -> f64 {
    let n = graph.node_count();
    if n == 0 || graph.edge_count() == 0 {
        return 0.0;
    }
    let mut x = vec![1.0 / n as f64; n];
    let mut est = 1.0;
    for _ in 0..2000 {
        let y: Vec<f64> = (0..n)
            .map(|i| x[i] + graph.successors(i).iter().map(|&j| x[j]).sum::<f64>())
            .collect();
        let norm: f64 = y.iter().sum();
        x = y.into_iter().map(|v| v / norm).collect();
        let done = (norm - est).abs() < 1e-13 * norm;
        est = norm;
        if done {
            break;
        }
    }
    (est - 1.0).max(0.0)
}

/// Katz centrality `x = sum_{k>=1} a^k (M^T)^k 1`, with `M = A` for in-Katz (walks ending at
/// the node) and `M = A^T` for out-Katz (walks starting at the node).
pub fn katz<T: Scalar>(graph: &DirectedGraph, attenuation: T, dir: Direction) -> Result<Vec<T>> {
    katz_with(graph, attenuation, dir, KatzOptions::default())
}

pub fn katz_with<T: Scalar>(
    graph: &DirectedGraph,
    attenuation: T,
    dir: Direction,
    opts: KatzOptions,
) -> Result<Vec<T>> {
    let a = attenuation.as_f64();
    if !(a > 0.0) {
        return Err(Error::Config(format!("Katz attenuation {a} must be positive")));
    }
    let rho = spectral_radius(graph);
    if a * rho >= 1.0 {
        return Err(Error::KatzDivergence {
            attenuation: a,
            spectral_radius: rho,
        });
    }
    let n = graph.node_count();
    let tol = T::lit(opts.tolerance);
    let mut x = vec![T::zero(); n];
    for _ in 0..opts.max_iterations {
        let next: Vec<T> = (0..n)
            .map(|i| {
                attenuation
                    * graph
                        .neighbors(i, dir)
                        .iter()
                        .map(|&j| x[j] + T::one())
                        .sum::<T>()
            })
            .collect();
        let change = next
            .iter()
            .zip(&x)
            .map(|(a, b)| (*a - *b).abs())
            .fold(T::zero(), T::max);
        x = next;
        if !change.is_finite() {
            return Err(Error::KatzDivergence {
                attenuation: a,
                spectral_radius: rho,
            });
        }
        if change < tol {
            return Ok(x);
        }
    }
    Err(Error::IterationLimit(opts.max_iterations))
}

/// Reach where hop `k` (1-based) follows the edges of snapshot `start + k - 1`.
///
/// Every node reached at hop `k - 1` is expanded at hop `k`; the result counts distinct
/// nodes reached over all hops, origin excluded.
pub fn temporal_m_reach(
    snapshots: &SnapshotSequence,
    start: usize,
    node: NodeId,
    m: usize,
    dir: Direction,
) -> Result<usize> {
    if m == 0 {
        return Err(Error::Config("m must be at least 1".into()));
    }
    if start + m > snapshots.len() {
        return Err(Error::InsufficientData(format!(
            "temporal {m}-reach from snapshot {start} needs {} snapshots, have {}",
            start + m,
            snapshots.len()
        )));
    }
    let n = snapshots.graphs()[0].node_count();
    if node.0 >= n {
        return Err(Error::UnknownNode(format!("index {}", node.0)));
    }
    let mut seen = vec![false; n];
    seen[node.0] = true;
    let mut frontier = vec![node.0];
    let mut in_frontier = vec![false; n];
    for hop in 0..m {
        let g = &snapshots.graphs()[start + hop];
        let mut next = Vec::new();
        for &v in &frontier {
            for &w in g.neighbors(v, dir) {
                if !in_frontier[w] {
                    in_frontier[w] = true;
                    next.push(w);
                }
            }
        }
        for &w in &next {
            in_frontier[w] = false;
            seen[w] = true;
        }
        frontier = next;
    }
    Ok(seen.iter().filter(|&&s| s).count() - 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("n{i}")).collect()
    }

    fn path3() -> DirectedGraph {
        DirectedGraph::from_edges(labels(3), [(0, 1), (1, 2)]).unwrap()
    }

    #[test]
    fn betweenness_path() {
        let b: Vec<f64> = betweenness(&path3());
        assert_eq!(b, vec![0.0, 1.0, 0.0]);
        let e: Vec<f64> = betweenness(&DirectedGraph::empty(labels(4)).unwrap());
        assert!(e.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn betweenness_split_paths() {
        // 0 -> {1, 2} -> 3: two shortest paths, each middle node carries half.
        let g = DirectedGraph::from_edges(labels(4), [(0, 1), (0, 2), (1, 3), (2, 3)]).unwrap();
        let b: Vec<f64> = betweenness(&g);
        assert_eq!(b, vec![0.0, 0.5, 0.5, 0.0]);
    }

    #[test]
    fn clustering_examples() {
        let tri = DirectedGraph::from_edges(labels(3), [(0, 1), (1, 2), (2, 0)]).unwrap();
        assert_eq!(clustering::<f64>(&tri), vec![1.0; 3]);
        let star = DirectedGraph::from_edges(labels(4), [(0, 1), (0, 2), (3, 0)]).unwrap();
        assert_eq!(clustering::<f64>(&star)[0], 0.0);
    }

    #[test]
    fn reach_examples() {
        let g = path3();
        assert_eq!(m_reach(&g, NodeId(0), 1, Direction::Out).unwrap(), 1);
        assert_eq!(m_reach(&g, NodeId(0), 2, Direction::Out).unwrap(), 2);
        assert_eq!(m_reach(&g, NodeId(2), 2, Direction::In).unwrap(), 2);
        let iso = DirectedGraph::empty(labels(2)).unwrap();
        assert_eq!(m_reach(&iso, NodeId(1), 5, Direction::Out).unwrap(), 0);
        assert!(m_reach(&g, NodeId(0), 0, Direction::Out).is_err());
    }

    #[test]
    fn katz_single_edge() {
        let g = DirectedGraph::from_edges(labels(2), [(0, 1)]).unwrap();
        let inn: Vec<f64> = katz(&g, 0.1, Direction::In).unwrap();
        let out: Vec<f64> = katz(&g, 0.1, Direction::Out).unwrap();
        assert!((inn[1] - 0.1).abs() < 1e-15 && inn[0] == 0.0);
        assert!((out[0] - 0.1).abs() < 1e-15 && out[1] == 0.0);
        let e: Vec<f64> = katz(&DirectedGraph::empty(labels(3)).unwrap(), 0.1, Direction::In).unwrap();
        assert!(e.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn katz_divergence_guard() {
        // Directed 3-cycle has spectral radius 1.
        let g = DirectedGraph::from_edges(labels(3), [(0, 1), (1, 2), (2, 0)]).unwrap();
        assert!((spectral_radius(&g) - 1.0).abs() < 1e-6);
        assert!(matches!(
            katz::<f64>(&g, 1.5, Direction::In),
            Err(Error::KatzDivergence { .. })
        ));
        // Geometric series: a / (1 - a) on every node.
        let x: Vec<f64> = katz(&g, 0.5, Direction::In).unwrap();
        assert!(x.iter().all(|v| (v - 1.0).abs() < 1e-9));
    }

    #[test]
    fn temporal_reach_worked_example() {
        // Origin 0 has out-edges to 1, 2, 3 at t; at t+1 those reach 4..7.
        let t0 = DirectedGraph::from_edges(labels(8), [(0, 1), (0, 2), (0, 3)]).unwrap();
        let t1 = DirectedGraph::from_edges(labels(8), [(1, 4), (1, 5), (2, 6), (3, 7), (3, 4)]).unwrap();
        let seq = SnapshotSequence::new(vec![t0, t1]).unwrap();
        assert_eq!(temporal_m_reach(&seq, 0, NodeId(0), 1, Direction::Out).unwrap(), 3);
        assert_eq!(temporal_m_reach(&seq, 0, NodeId(0), 2, Direction::Out).unwrap(), 7);
        assert!(temporal_m_reach(&seq, 1, NodeId(0), 2, Direction::Out).is_err());
    }
}
