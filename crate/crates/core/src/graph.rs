//! Unweighted directed graph with forward and reverse adjacency.

use std::collections::{BTreeSet, HashMap};
use std::io::{Read, Write};

use chrono::NaiveDate;

use crate::error::{Error, Result};

/// Dense node index into a graph's node list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    In,
    Out,
}

impl Direction {
    pub fn reverse(self) -> Self {
        match self {
            Direction::In => Direction::Out,
            Direction::Out => Direction::In,
        }
    }
}

/// Directed graph over labelled nodes. No self-loops, at most one edge per ordered pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DirectedGraph {
    labels: Vec<String>,
    out_adj: Vec<Vec<usize>>,
    in_adj: Vec<Vec<usize>>,
    edge_count: usize,
    timestamp: Option<NaiveDate>,
}

impl DirectedGraph {
    pub fn empty(labels: Vec<String>) -> Result<Self> {
        Self::from_edges(labels, std::iter::empty())
    }

    /// Builds from `(source, target)` index pairs. Duplicate edges collapse; self-loops are rejected.
    pub fn from_edges(labels: Vec<String>, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let n = labels.len();
        let mut seen = BTreeSet::new();
        for l in &labels {
            if !seen.insert(l.as_str()) {
                return Err(Error::InvalidGraph(format!("duplicate node label {l}")));
            }
        }
        let mut out_adj = vec![Vec::new(); n];
        let mut in_adj = vec![Vec::new(); n];
        for (s, t) in edges {
            if s >= n || t >= n {
                return Err(Error::UnknownNode(format!("edge ({s}, {t}) in graph of {n} nodes")));
            }
            if s == t {
                return Err(Error::InvalidGraph(format!("self-loop at {}", labels[s])));
            }
            out_adj[s].push(t);
            in_adj[t].push(s);
        }
        let mut edge_count = 0;
        for a in out_adj.iter_mut().chain(in_adj.iter_mut()) {
            a.sort_unstable();
            a.dedup();
        }
        for a in &out_adj {
            edge_count += a.len();
        }
        Ok(Self {
            labels,
            out_adj,
            in_adj,
            edge_count,
            timestamp: None,
        })
    }

    pub fn with_timestamp(mut self, ts: Option<NaiveDate>) -> Self {
        self.timestamp = ts;
        self
    }

    pub fn timestamp(&self) -> Option<NaiveDate> {
        self.timestamp
    }

    pub fn node_count(&self) -> usize {
        self.labels.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, node: NodeId) -> &str {
        &self.labels[node.0]
    }

    pub fn node(&self, label: &str) -> Option<NodeId> {
        self.labels.iter().position(|l| l == label).map(NodeId)
    }

    fn check(&self, node: NodeId) -> Result<()> {
        if node.0 < self.labels.len() {
            Ok(())
        } else {
            Err(Error::UnknownNode(format!(
                "index {} in graph of {} nodes",
                node.0,
                self.labels.len()
            )))
        }
    }

    /// Sorted neighbour indices following `dir`.
    pub fn neighbors(&self, v: usize, dir: Direction) -> &[usize] {
        match dir {
            Direction::Out => &self.out_adj[v],
            Direction::In => &self.in_adj[v],
        }
    }

    pub fn successors(&self, v: usize) -> &[usize] {
        &self.out_adj[v]
    }

    pub fn predecessors(&self, v: usize) -> &[usize] {
        &self.in_adj[v]
    }

    pub fn has_edge(&self, s: usize, t: usize) -> bool {
        self.out_adj[s].binary_search(&t).is_ok()
    }

    pub fn degree(&self, node: NodeId, dir: Direction) -> Result<usize> {
        self.check(node)?;
        Ok(self.neighbors(node.0, dir).len())
    }

    pub fn degrees(&self, dir: Direction) -> Vec<usize> {
        (0..self.node_count()).map(|v| self.neighbors(v, dir).len()).collect()
    }

    /// Edges in ascending `(source, target)` order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.out_adj
            .iter()
            .enumerate()
            .flat_map(|(s, ts)| ts.iter().map(move |&t| (s, t)))
    }

    /// Induced subgraph on `nodes`, plus the original index of each retained node.
    /// Retained nodes keep their relative order.
    pub fn subgraph_with_map(&self, nodes: &[NodeId]) -> Result<(DirectedGraph, Vec<usize>)> {
        for &v in nodes {
            self.check(v)?;
        }
        let keep: BTreeSet<usize> = nodes.iter().map(|v| v.0).collect();
        let original: Vec<usize> = keep.iter().copied().collect();
        let local: HashMap<usize, usize> = original.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let labels = original.iter().map(|&v| self.labels[v].clone()).collect();
        let edges = original.iter().flat_map(|&s| {
            self.out_adj[s]
                .iter()
                .filter_map(|t| local.get(t).map(|&lt| (local[&s], lt)))
                .collect::<Vec<_>>()
        });
        let g = DirectedGraph::from_edges(labels, edges)?.with_timestamp(self.timestamp);
        Ok((g, original))
    }

    pub fn subgraph(&self, nodes: &[NodeId]) -> Result<DirectedGraph> {
        self.subgraph_with_map(nodes).map(|(g, _)| g)
    }

    /// Undirected view: `{i, j}` present iff `i -> j` or `j -> i`.
    pub fn symmetrize(&self) -> UndirectedGraph {
        let n = self.node_count();
        let mut adj = vec![Vec::new(); n];
        for (s, t) in self.edges() {
            adj[s].push(t);
            adj[t].push(s);
        }
        for a in &mut adj {
            a.sort_unstable();
            a.dedup();
        }
        UndirectedGraph {
            labels: self.labels.clone(),
            adj,
        }
    }

    /// Writes `source,target` label pairs.
    pub fn write_edges_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["source", "target"])?;
        for (s, t) in self.edges() {
            w.write_record([&self.labels[s], &self.labels[t]])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes `index,ticker`.
    pub fn write_nodes_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["index", "ticker"])?;
        for (i, l) in self.labels.iter().enumerate() {
            w.write_record([i.to_string(), l.clone()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads an edge list whose first two columns are `source,target` labels.
    /// Extra columns (test statistics) are ignored.
    pub fn read_edges_csv<R: Read>(labels: Vec<String>, reader: R) -> Result<DirectedGraph> {
        let index: HashMap<&str, usize> = labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
        let mut rdr = csv::Reader::from_reader(reader);
        let mut edges = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let lookup = |s: &str| {
                index
                    .get(s)
                    .copied()
                    .ok_or_else(|| Error::UnknownNode(s.to_string()))
            };
            edges.push((lookup(&rec[0])?, lookup(&rec[1])?));
        }
        DirectedGraph::from_edges(labels, edges)
    }
}

/// Simple undirected graph; adjacency lists sorted, no self-loops or multi-edges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UndirectedGraph {
    labels: Vec<String>,
    adj: Vec<Vec<usize>>,
}

impl UndirectedGraph {
    pub fn node_count(&self) -> usize {
        self.adj.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adj[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adj[v].len()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adj[a].binary_search(&b).is_ok()
    }

    /// Each undirected edge once, as `(low, high)`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adj
            .iter()
            .enumerate()
            .flat_map(|(a, ns)| ns.iter().filter(move |&&b| b > a).map(move |&b| (a, b)))
    }

    /// Directed graph with both orientations of every edge.
    pub fn to_directed(&self) -> DirectedGraph {
        let edges = self.edges().flat_map(|(a, b)| [(a, b), (b, a)]);
        DirectedGraph::from_edges(self.labels.clone(), edges).expect("valid undirected graph")
    }
}
