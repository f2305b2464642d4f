//! Metrics that combine the network with its community partition.

use std::collections::BTreeMap;

use crate::community::Partition;
use crate::error::{Error, Result};
use crate::graph::{DirectedGraph, Direction, NodeId};
use crate::num::Scalar;
use crate::panel::SectorMap;

fn check_community(partition: &Partition, community: usize) -> Result<()> {
    if community >= partition.community_count() {
        return Err(Error::InvalidPartition(format!(
            "community {community} out of range ({} communities)",
            partition.community_count()
        )));
    }
    Ok(())
}

/// Shannon entropy (natural log) of the sector mix inside `community`.
pub fn sectoral_entropy<T: Scalar>(partition: &Partition, sectors: &SectorMap, community: usize) -> Result<T> {
    check_community(partition, community)?;
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    let members = partition.members(community);
    for v in &members {
        let label = &partition.labels()[v.0];
        let s = sectors
            .get(label)
            .ok_or_else(|| Error::MissingSector(label.clone()))?;
        *counts.entry(s).or_insert(0) += 1;
    }
    let total = T::from_count(members.len());
    Ok(counts
        .values()
        .map(|&c| {
            let q = T::from_count(c) / total;
            -q * q.ln()
        })
        .sum::<T>()
        .max(T::zero()))
}

/// `(crossing, internal)` edge counts of a community. Outgoing crossings leave the
/// community; incoming ones enter it.
pub fn boundary_counts(
    graph: &DirectedGraph,
    partition: &Partition,
    community: usize,
    dir: Direction,
) -> Result<(usize, usize)> {
    check_community(partition, community)?;
    let mut crossing = 0;
    let mut internal = 0;
    for (s, t) in graph.edges() {
        let (cs, ct) = (partition.community_of(s), partition.community_of(t));
        if cs == community && ct == community {
            internal += 1;
        } else {
            let anchor = match dir {
                Direction::Out => cs,
                Direction::In => ct,
            };
            if anchor == community {
                crossing += 1;
            }
        }
    }
    Ok((crossing, internal))
}

/// Count of boundary-crossing edges of `community` in direction `dir`.
pub fn inter_degree(graph: &DirectedGraph, partition: &Partition, community: usize, dir: Direction) -> Result<usize> {
    boundary_counts(graph, partition, community, dir).map(|(c, _)| c)
}

/// Crossing edges over internal edges. `0/0` is 0 and `x/0` is replaced by `cap`.
pub fn inter_intra_degree<T: Scalar>(
    graph: &DirectedGraph,
    partition: &Partition,
    community: usize,
    dir: Direction,
    cap: T,
) -> Result<T> {
    let (crossing, internal) = boundary_counts(graph, partition, community, dir)?;
    Ok(match (crossing, internal) {
        (0, _) => T::zero(),
        (_, 0) => {
            log::info!("community {community}: infinite inter/intra ratio capped at {cap}");
            cap
        }
        (c, i) => T::from_count(c) / T::from_count(i),
    })
}

/// Node degree over the summed same-direction degree of its community members; `0/0` is 0.
pub fn commitment_ratio<T: Scalar>(
    graph: &DirectedGraph,
    partition: &Partition,
    node: NodeId,
    dir: Direction,
) -> Result<T> {
    let own = graph.degree(node, dir)?;
    let c = partition.community_of(node.0);
    let total: usize = partition
        .members(c)
        .iter()
        .map(|v| graph.neighbors(v.0, dir).len())
        .sum();
    Ok(if total == 0 {
        T::zero()
    } else {
        T::from_count(own) / T::from_count(total)
    })
}
