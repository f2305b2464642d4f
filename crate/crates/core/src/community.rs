//! Louvain community detection and Newman-Girvan modularity on the symmetrized network.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{DirectedGraph, NodeId, UndirectedGraph};
use crate::num::Scalar;

/// Total assignment of labelled nodes to dense community ids `0..k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    labels: Vec<String>,
    assignment: Vec<usize>,
    count: usize,
}

impl Partition {
    /// Renumbers arbitrary community keys densely, in order of first appearance.
    pub fn from_assignment(labels: Vec<String>, raw: &[usize]) -> Result<Self> {
        if labels.len() != raw.len() {
            return Err(Error::InvalidPartition(format!(
                "{} labels for {} assignments",
                labels.len(),
                raw.len()
            )));
        }
        let mut ids = BTreeMap::new();
        let assignment = raw
            .iter()
            .map(|c| {
                let next = ids.len();
                *ids.entry(*c).or_insert(next)
            })
            .collect();
        Ok(Self {
            labels,
            assignment,
            count: ids.len(),
        })
    }

    pub fn singletons(labels: Vec<String>) -> Self {
        let n = labels.len();
        Self {
            labels,
            assignment: (0..n).collect(),
            count: n,
        }
    }

    pub fn single(labels: Vec<String>) -> Self {
        let n = labels.len();
        Self {
            labels,
            assignment: vec![0; n],
            count: usize::from(n > 0),
        }
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn community_count(&self) -> usize {
        self.count
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn community_of(&self, node: usize) -> usize {
        self.assignment[node]
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    /// Member node ids of community `c`, ascending.
    pub fn members(&self, c: usize) -> Vec<NodeId> {
        self.assignment
            .iter()
            .enumerate()
            .filter(|(_, &a)| a == c)
            .map(|(i, _)| NodeId(i))
            .collect()
    }

    pub fn check_matches(&self, graph: &DirectedGraph) -> Result<()> {
        if self.labels != graph.labels() {
            return Err(Error::InvalidPartition(
                "partition labels differ from graph nodes".into(),
            ));
        }
        Ok(())
    }

    /// Writes `ticker,community`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["ticker", "community"])?;
        for (l, c) in self.labels.iter().zip(&self.assignment) {
            w.write_record([l.clone(), c.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut labels = Vec::new();
        let mut raw = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            labels.push(rec[0].to_string());
            raw.push(rec[1].parse::<usize>().map_err(|_| {
                Error::InvalidPartition(format!("bad community id {:?}", &rec[1]))
            })?);
        }
        Self::from_assignment(labels, &raw)
    }
}

/// Community id to member count.
pub fn community_size(partition: &Partition) -> BTreeMap<usize, usize> {
    let mut sizes = BTreeMap::new();
    for &c in &partition.assignment {
        *sizes.entry(c).or_insert(0) += 1;
    }
    sizes
}

/// `Q = sum_c [ e_c / m - resolution * (d_c / 2m)^2 ]` with `e_c` internal edges and `d_c` the degree total.
pub fn modularity<T: Scalar>(graph: &UndirectedGraph, partition: &Partition, resolution: T) -> Result<T> {
    if partition.len() != graph.node_count() {
        return Err(Error::InvalidPartition("size mismatch with graph".into()));
    }
    let m = graph.edge_count();
    if m == 0 {
        return Err(Error::EdgelessGraph);
    }
    let k = partition.community_count();
    let mut internal = vec![0usize; k];
    let mut degree = vec![0usize; k];
    for v in 0..graph.node_count() {
        degree[partition.community_of(v)] += graph.degree(v);
    }
    for (a, b) in graph.edges() {
        if partition.community_of(a) == partition.community_of(b) {
            internal[partition.community_of(a)] += 1;
        }
    }
    let m_t = T::from_count(m);
    let two_m = m_t + m_t;
    Ok(internal
        .iter()
        .zip(&degree)
        .map(|(&e, &d)| {
            let frac = T::from_count(d) / two_m;
            T::from_count(e) / m_t - resolution * frac * frac
        })
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LouvainConfig {
    pub resolution: f64,
    pub seed: u64,
    /// Shuffle the node sweep order with `seed`; ascending index order otherwise.
    pub shuffle: bool,
    pub max_levels: usize,
}

impl Default for LouvainConfig {
    fn default() -> Self {
        Self {
            resolution: 1.0,
            seed: 0,
            shuffle: false,
            max_levels: 64,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LouvainOutcome {
    pub partition: Partition,
    /// Modularity on the original graph after each aggregation level.
    pub level_modularity: Vec<f64>,
}

/// Weighted undirected multigraph used by the aggregation levels.
/// `self_loops[i]` is the `A_ii` entry, i.e. twice the internal edge weight.
struct Level {
    adj: Vec<Vec<(usize, f64)>>,
    self_loops: Vec<f64>,
}

impl Level {
    fn from_graph(g: &UndirectedGraph) -> Self {
        let adj = (0..g.node_count())
            .map(|v| g.neighbors(v).iter().map(|&u| (u, 1.0)).collect())
            .collect();
        Level {
            adj,
            self_loops: vec![0.0; g.node_count()],
        }
    }

    fn len(&self) -> usize {
        self.adj.len()
    }

    fn strength(&self, v: usize) -> f64 {
        self.adj[v].iter().map(|(_, w)| w).sum::<f64>() + self.self_loops[v]
    }

    /// Local moving phase; returns the community of each level node and whether anything moved.
    fn local_moves(&self, resolution: f64, order: &[usize]) -> (Vec<usize>, bool) {
        const EPS: f64 = 1e-12;
        let n = self.len();
        let k: Vec<f64> = (0..n).map(|v| self.strength(v)).collect();
        let two_m: f64 = k.iter().sum();
        let mut comm: Vec<usize> = (0..n).collect();
        let mut tot = k.clone();
        let mut moved_any = false;
        let mut links: BTreeMap<usize, f64> = BTreeMap::new();
        loop {
            let mut moved = false;
            for &v in order {
                let own = comm[v];
                links.clear();
                links.insert(own, 0.0);
                for &(u, w) in &self.adj[v] {
                    *links.entry(comm[u]).or_insert(0.0) += w;
                }
                tot[own] -= k[v];
                let gain = |c: usize, w_in: f64| w_in - resolution * tot[c] * k[v] / two_m;
                let mut best = own;
                let mut best_gain = gain(own, links[&own]);
                // Ascending community ids: equal gains keep the lowest id.
                for (&c, &w_in) in &links {
                    let g = gain(c, w_in);
                    if g > best_gain + EPS {
                        best = c;
                        best_gain = g;
                    }
                }
                tot[best] += k[v];
                if best != own {
                    comm[v] = best;
                    moved = true;
                    moved_any = true;
                }
            }
            if !moved {
                break;
            }
        }
        (comm, moved_any)
    }

    fn aggregate(&self, comm: &[usize], count: usize) -> Level {
        let mut edges: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); count];
        let mut self_loops = vec![0.0; count];
        for v in 0..self.len() {
            let cv = comm[v];
            self_loops[cv] += self.self_loops[v];
            for &(u, w) in &self.adj[v] {
                let cu = comm[u];
                if cu == cv {
                    self_loops[cv] += w;
                } else {
                    *edges[cv].entry(cu).or_insert(0.0) += w;
                }
            }
        }
        Level {
            adj: edges.into_iter().map(|m| m.into_iter().collect()).collect(),
            self_loops,
        }
    }
}

fn densify(raw: &[usize]) -> (Vec<usize>, usize) {
    let mut ids = BTreeMap::new();
    let out = raw
        .iter()
        .map(|c| {
            let next = ids.len();
            *ids.entry(*c).or_insert(next)
        })
        .collect();
    (out, ids.len())
}

/// Two-phase Louvain on the symmetrized unweighted view of `graph`.
///
/// Edgeless graphs return all-singleton partitions.
pub fn louvain(graph: &DirectedGraph, cfg: &LouvainConfig) -> Result<LouvainOutcome> {
    if !(cfg.resolution > 0.0) {
        return Err(Error::Config("Louvain resolution must be positive".into()));
    }
    if graph.node_count() == 0 {
        return Err(Error::InvalidGraph("Louvain on an empty graph".into()));
    }
    let undirected = graph.symmetrize();
    let labels = graph.labels().to_vec();
    if undirected.edge_count() == 0 {
        log::warn!("edgeless graph: every node is its own community");
        return Ok(LouvainOutcome {
            partition: Partition::singletons(labels),
            level_modularity: Vec::new(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut level = Level::from_graph(&undirected);
    let mut node_comm: Vec<usize> = (0..graph.node_count()).collect();
    let mut level_modularity = Vec::new();

    for _ in 0..cfg.max_levels {
        let mut order: Vec<usize> = (0..level.len()).collect();
        if cfg.shuffle {
            order.shuffle(&mut rng);
        }
        let (comm, moved) = level.local_moves(cfg.resolution, &order);
        if !moved {
            break;
        }
        let (comm, count) = densify(&comm);
        for c in node_comm.iter_mut() {
            *c = comm[*c];
        }
        let p = Partition::from_assignment(labels.clone(), &node_comm)?;
        level_modularity.push(modularity(&undirected, &p, cfg.resolution)?);
        level = level.aggregate(&comm, count);
    }
    Ok(LouvainOutcome {
        partition: Partition::from_assignment(labels, &node_comm)?,
        level_modularity,
    })
}
