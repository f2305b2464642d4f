//! Multilevel metric catalog and the firm x metric table.
//!
//! Levels:
//! - `GT`: per firm on the whole network.
//! - `LT`: per firm on the induced subgraph of its community.
//! - `AT`: community means of the `GT` columns plus community size, broadcast to members.
//! - `new-GT`: commitment ratios and temporal reaches, per firm.
//! - `new-AT`: sectoral entropy, inter degrees and inter/intra ratios, per community.

pub mod centrality;
pub mod community_metrics;

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use centrality::{
    betweenness, clustering, katz, katz_with, m_reach, m_reach_all, spectral_radius, temporal_m_reach,
    KatzOptions,
};
pub use community_metrics::{
    boundary_counts, commitment_ratio, inter_degree, inter_intra_degree, sectoral_entropy,
};

use crate::community::{community_size, Partition};
use crate::error::{Error, Result};
use crate::graph::{DirectedGraph, Direction, NodeId};
use crate::num::Scalar;
use crate::panel::SectorMap;
use crate::spillover::SnapshotSequence;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Level {
    #[serde(rename = "GT")]
    Gt,
    #[serde(rename = "LT")]
    Lt,
    #[serde(rename = "AT")]
    At,
    #[serde(rename = "new-GT")]
    NewGt,
    #[serde(rename = "new-AT")]
    NewAt,
}

impl Level {
    pub const ALL: [Level; 5] = [Level::Gt, Level::Lt, Level::At, Level::NewGt, Level::NewAt];

    pub fn tag(self) -> &'static str {
        match self {
            Level::Gt => "GT",
            Level::Lt => "LT",
            Level::At => "AT",
            Level::NewGt => "new-GT",
            Level::NewAt => "new-AT",
        }
    }

    /// Firm-level global information (`GT` or `new-GT`).
    pub fn is_global(self) -> bool {
        matches!(self, Level::Gt | Level::NewGt)
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Level {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Level::ALL
            .into_iter()
            .find(|l| l.tag() == s)
            .ok_or_else(|| Error::InvalidDesign(format!("unknown level tag {s:?}")))
    }
}

/// Column identity: level tag plus metric name, rendered as `LEVEL.name`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MetricKey {
    pub level: Level,
    pub name: String,
}

impl MetricKey {
    pub fn new(level: Level, name: impl Into<String>) -> Self {
        Self {
            level,
            name: name.into(),
        }
    }
}

impl fmt::Display for MetricKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.level, self.name)
    }
}

impl FromStr for MetricKey {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let (level, name) = s
            .split_once('.')
            .ok_or_else(|| Error::InvalidDesign(format!("column {s:?} lacks a level tag")))?;
        Ok(MetricKey::new(level.parse()?, name))
    }
}

pub const IN_DEGREE: &str = "in_degree";
pub const OUT_DEGREE: &str = "out_degree";
pub const BETWEENNESS: &str = "betweenness";
pub const CLUSTERING: &str = "clustering";
pub const M_REACH: &str = "m_reach";
pub const INV_M_REACH: &str = "inv_m_reach";
pub const IN_KATZ: &str = "in_katz";
pub const OUT_KATZ: &str = "out_katz";
pub const COMMUNITY_SIZE: &str = "community_size";
pub const SECTORAL_ENTROPY: &str = "sectoral_entropy";
pub const INTER_IN_DEGREE: &str = "inter_in_degree";
pub const INTER_OUT_DEGREE: &str = "inter_out_degree";
pub const INTER_INTRA_IN: &str = "inter_intra_in";
pub const INTER_INTRA_OUT: &str = "inter_intra_out";
pub const COMMITMENT_IN: &str = "commitment_in";
pub const COMMITMENT_OUT: &str = "commitment_out";
pub const TEMPORAL_M_REACH: &str = "temporal_m_reach";
pub const TEMPORAL_INV_M_REACH: &str = "temporal_inv_m_reach";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricParams {
    /// Hop limit of the reach metrics.
    pub m: usize,
    pub katz_attenuation: f64,
    /// Replacement for infinite inter/intra ratios.
    pub ratio_cap: f64,
}

impl Default for MetricParams {
    fn default() -> Self {
        Self {
            m: 2,
            katz_attenuation: 0.1,
            ratio_cap: 1e6,
        }
    }
}

/// Snapshots for the temporal reaches, and the snapshot index of the first hop.
#[derive(Debug, Clone, Copy)]
pub struct TemporalInputs<'a> {
    pub snapshots: &'a SnapshotSequence,
    pub start: usize,
}

/// Everything the catalog is computed from. All inputs share the graph's node order.
#[derive(Debug, Clone, Copy)]
pub struct MetricInputs<'a> {
    pub graph: &'a DirectedGraph,
    pub partition: &'a Partition,
    pub sectors: &'a SectorMap,
    pub temporal: Option<TemporalInputs<'a>>,
    pub params: MetricParams,
}

impl MetricInputs<'_> {
    fn validate(&self) -> Result<()> {
        self.partition.check_matches(self.graph)?;
        if let Some(t) = &self.temporal {
            if let Some(g) = t.snapshots.graphs().first() {
                if g.labels() != self.graph.labels() {
                    return Err(Error::InvalidGraph(
                        "snapshot nodes differ from the reference graph".into(),
                    ));
                }
            }
        }
        if self.params.m == 0 {
            return Err(Error::Config("m must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricColumn<T> {
    pub key: MetricKey,
    pub values: Vec<T>,
}

fn counts<T: Scalar>(v: Vec<usize>) -> Vec<T> {
    v.into_iter().map(T::from_count).collect()
}

/// The eight standard centralities of one graph, in catalog order.
fn standard_catalog<T: Scalar>(graph: &DirectedGraph, params: &MetricParams) -> Result<Vec<(&'static str, Vec<T>)>> {
    let a = T::lit(params.katz_attenuation);
    Ok(vec![
        (IN_DEGREE, counts(graph.degrees(Direction::In))),
        (OUT_DEGREE, counts(graph.degrees(Direction::Out))),
        (BETWEENNESS, betweenness(graph)),
        (CLUSTERING, clustering(graph)),
        (M_REACH, counts(m_reach_all(graph, params.m, Direction::Out)?)),
        (INV_M_REACH, counts(m_reach_all(graph, params.m, Direction::In)?)),
        (IN_KATZ, katz(graph, a, Direction::In)?),
        (OUT_KATZ, katz(graph, a, Direction::Out)?),
    ])
}

fn global<T: Scalar>(inputs: &MetricInputs) -> Result<Vec<MetricColumn<T>>> {
    Ok(standard_catalog(inputs.graph, &inputs.params)?
        .into_iter()
        .map(|(name, values)| MetricColumn {
            key: MetricKey::new(Level::Gt, name),
            values,
        })
        .collect())
}

fn local<T: Scalar>(inputs: &MetricInputs) -> Result<Vec<MetricColumn<T>>> {
    let n = inputs.graph.node_count();
    let mut cols: Vec<MetricColumn<T>> = Vec::new();
    for c in 0..inputs.partition.community_count() {
        let members = inputs.partition.members(c);
        let (sub, original) = inputs.graph.subgraph_with_map(&members)?;
        let catalog = standard_catalog::<T>(&sub, &inputs.params)?;
        if cols.is_empty() {
            cols = catalog
                .iter()
                .map(|(name, _)| MetricColumn {
                    key: MetricKey::new(Level::Lt, *name),
                    values: vec![T::zero(); n],
                })
                .collect();
        }
        for (col, (_, vals)) in cols.iter_mut().zip(catalog) {
            for (local_idx, &orig) in original.iter().enumerate() {
                col.values[orig] = vals[local_idx];
            }
        }
    }
    Ok(cols)
}

/// Broadcasts per-community values to members.
fn broadcast<T: Scalar>(partition: &Partition, per_community: &[T]) -> Vec<T> {
    (0..partition.len())
        .map(|v| per_community[partition.community_of(v)])
        .collect()
}

fn community_means<T: Scalar>(partition: &Partition, values: &[T]) -> Vec<T> {
    let k = partition.community_count();
    let mut sum = vec![T::zero(); k];
    let mut cnt = vec![0usize; k];
    for (v, x) in values.iter().enumerate() {
        let c = partition.community_of(v);
        sum[c] = sum[c] + *x;
        cnt[c] += 1;
    }
    sum.into_iter()
        .zip(cnt)
        .map(|(s, c)| s / T::from_count(c))
        .collect()
}

fn aggregated<T: Scalar>(inputs: &MetricInputs, gt: &[MetricColumn<T>]) -> Vec<MetricColumn<T>> {
    let p = inputs.partition;
    let mut cols: Vec<MetricColumn<T>> = gt
        .iter()
        .map(|c| MetricColumn {
            key: MetricKey::new(Level::At, c.key.name.clone()),
            values: broadcast(p, &community_means(p, &c.values)),
        })
        .collect();
    let sizes: Vec<T> = community_size(p).values().map(|&s| T::from_count(s)).collect();
    cols.push(MetricColumn {
        key: MetricKey::new(Level::At, COMMUNITY_SIZE),
        values: broadcast(p, &sizes),
    });
    cols
}

fn new_global<T: Scalar>(inputs: &MetricInputs) -> Result<Vec<MetricColumn<T>>> {
    let g = inputs.graph;
    let p = inputs.partition;
    let commit = |dir| -> Result<Vec<T>> {
        (0..g.node_count())
            .map(|v| commitment_ratio(g, p, NodeId(v), dir))
            .collect()
    };
    let temporal = inputs.temporal.ok_or_else(|| {
        Error::InsufficientData("temporal reach needs a snapshot sequence".into())
    })?;
    let treach = |dir| -> Result<Vec<T>> {
        (0..g.node_count())
            .map(|v| {
                temporal_m_reach(temporal.snapshots, temporal.start, NodeId(v), inputs.params.m, dir)
                    .map(T::from_count)
            })
            .collect()
    };
    Ok(vec![
        MetricColumn {
            key: MetricKey::new(Level::NewGt, COMMITMENT_IN),
            values: commit(Direction::In)?,
        },
        MetricColumn {
            key: MetricKey::new(Level::NewGt, COMMITMENT_OUT),
            values: commit(Direction::Out)?,
        },
        MetricColumn {
            key: MetricKey::new(Level::NewGt, TEMPORAL_M_REACH),
            values: treach(Direction::Out)?,
        },
        MetricColumn {
            key: MetricKey::new(Level::NewGt, TEMPORAL_INV_M_REACH),
            values: treach(Direction::In)?,
        },
    ])
}

fn new_aggregated<T: Scalar>(inputs: &MetricInputs) -> Result<Vec<MetricColumn<T>>> {
    let g = inputs.graph;
    let p = inputs.partition;
    let cap = T::lit(inputs.params.ratio_cap);
    let k = p.community_count();
    let per = |f: &dyn Fn(usize) -> Result<T>| -> Result<Vec<T>> {
        let vals = (0..k).map(f).collect::<Result<Vec<T>>>()?;
        Ok(broadcast(p, &vals))
    };
    let column = |name: &str, values| MetricColumn {
        key: MetricKey::new(Level::NewAt, name),
        values,
    };
    Ok(vec![
        column(SECTORAL_ENTROPY, per(&|c| sectoral_entropy(p, inputs.sectors, c))?),
        column(
            INTER_IN_DEGREE,
            per(&|c| inter_degree(g, p, c, Direction::In).map(T::from_count))?,
        ),
        column(
            INTER_OUT_DEGREE,
            per(&|c| inter_degree(g, p, c, Direction::Out).map(T::from_count))?,
        ),
        column(
            INTER_INTRA_IN,
            per(&|c| inter_intra_degree(g, p, c, Direction::In, cap))?,
        ),
        column(
            INTER_INTRA_OUT,
            per(&|c| inter_intra_degree(g, p, c, Direction::Out, cap))?,
        ),
    ])
}

/// Columns of a single level.
pub fn compute_level<T: Scalar>(inputs: &MetricInputs, level: Level) -> Result<Vec<MetricColumn<T>>> {
    inputs.validate()?;
    match level {
        Level::Gt => global(inputs),
        Level::Lt => local(inputs),
        Level::At => Ok(aggregated(inputs, &global::<T>(inputs)?)),
        Level::NewGt => new_global(inputs),
        Level::NewAt => new_aggregated(inputs),
    }
}

/// Firm x metric matrix; columns sorted by level then name, rows in node order.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricTable<T> {
    firms: Vec<String>,
    columns: Vec<MetricColumn<T>>,
}

impl<T: Scalar> MetricTable<T> {
    pub fn new(firms: Vec<String>, mut columns: Vec<MetricColumn<T>>) -> Result<Self> {
        columns.sort_by(|a, b| a.key.cmp(&b.key));
        if let Some(w) = columns.windows(2).find(|w| w[0].key == w[1].key) {
            return Err(Error::InvalidDesign(format!("duplicate column {}", w[0].key)));
        }
        for c in &columns {
            if c.values.len() != firms.len() {
                return Err(Error::InvalidDesign(format!(
                    "column {} has {} values for {} firms",
                    c.key,
                    c.values.len(),
                    firms.len()
                )));
            }
            if c.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidDesign(format!("column {} has non-finite values", c.key)));
            }
        }
        Ok(Self { firms, columns })
    }

    pub fn firms(&self) -> &[String] {
        &self.firms
    }

    pub fn columns(&self) -> &[MetricColumn<T>] {
        &self.columns
    }

    pub fn column(&self, key: &MetricKey) -> Option<&[T]> {
        self.columns
            .iter()
            .find(|c| &c.key == key)
            .map(|c| c.values.as_slice())
    }

    pub fn keys(&self) -> impl Iterator<Item = &MetricKey> {
        self.columns.iter().map(|c| &c.key)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["ticker".to_string()];
        header.extend(self.columns.iter().map(|c| c.key.to_string()));
        w.write_record(&header)?;
        for (i, f) in self.firms.iter().enumerate() {
            let mut rec = vec![f.clone()];
            rec.extend(self.columns.iter().map(|c| c.values[i].to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let header = rdr.headers()?.clone();
        let keys = header
            .iter()
            .skip(1)
            .map(str::parse)
            .collect::<Result<Vec<MetricKey>>>()?;
        let mut firms = Vec::new();
        let mut values: Vec<Vec<T>> = vec![Vec::new(); keys.len()];
        for rec in rdr.records() {
            let rec = rec?;
            firms.push(rec[0].to_string());
            for (j, cell) in rec.iter().skip(1).enumerate() {
                let v: f64 = cell.parse().map_err(|_| {
                    Error::InvalidDesign(format!("bad value {cell:?} in column {}", keys[j]))
                })?;
                values[j].push(T::lit(v));
            }
        }
        Self::new(
            firms,
            keys.into_iter()
                .zip(values)
                .map(|(key, values)| MetricColumn { key, values })
                .collect(),
        )
    }
}

/// All five levels assembled into one table.
pub fn assemble_table<T: Scalar>(inputs: &MetricInputs) -> Result<MetricTable<T>> {
    inputs.validate()?;
    let gt = global::<T>(inputs)?;
    let mut cols = aggregated(inputs, &gt);
    cols.extend(gt);
    cols.extend(local(inputs)?);
    cols.extend(new_global(inputs)?);
    cols.extend(new_aggregated(inputs)?);
    MetricTable::new(inputs.graph.labels().to_vec(), cols)
}

/// Pearson correlations between metric columns. Zero-variance columns give `None` entries.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix<T> {
    pub names: Vec<String>,
    pub values: Vec<Vec<Option<T>>>,
    pub zero_variance: Vec<String>,
}

impl<T: Scalar> CorrelationMatrix<T> {
    /// Square CSV with metric names as header row and first column; empty cell = missing.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec![String::new()];
        header.extend(self.names.iter().cloned());
        w.write_record(&header)?;
        for (name, row) in self.names.iter().zip(&self.values) {
            let mut rec = vec![name.clone()];
            rec.extend(row.iter().map(|v| v.map(|x| x.to_string()).unwrap_or_default()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn correlation_matrix<T: Scalar>(table: &MetricTable<T>) -> Result<CorrelationMatrix<T>> {
    let n = table.firms.len();
    if n < 2 {
        return Err(Error::InsufficientData("correlation needs at least 2 firms".into()));
    }
    let centered: Vec<Option<Vec<T>>> = table
        .columns
        .iter()
        .map(|c| {
            let mean = crate::num::mean(&c.values).unwrap_or_else(T::zero);
            let dev: Vec<T> = c.values.iter().map(|v| *v - mean).collect();
            let ss = dev.iter().map(|d| *d * *d).sum::<T>();
            (ss > T::zero()).then_some(dev)
        })
        .collect();
    let zero_variance: Vec<String> = table
        .columns
        .iter()
        .zip(&centered)
        .filter(|(_, d)| d.is_none())
        .map(|(c, _)| c.key.to_string())
        .collect();
    for name in &zero_variance {
        log::warn!("zero-variance metric column {name}");
    }
    let k = centered.len();
    let mut values = vec![vec![None; k]; k];
    for i in 0..k {
        for j in i..k {
            if let (Some(a), Some(b)) = (&centered[i], &centered[j]) {
                let r = if i == j {
                    T::one()
                } else {
                    let sab = a.iter().zip(b).map(|(x, y)| *x * *y).sum::<T>();
                    let saa = a.iter().map(|x| *x * *x).sum::<T>();
                    let sbb = b.iter().map(|x| *x * *x).sum::<T>();
                    (sab / (saa.sqrt() * sbb.sqrt())).max(-T::one()).min(T::one())
                };
                values[i][j] = Some(r);
                values[j][i] = Some(r);
            }
        }
    }
    Ok(CorrelationMatrix {
        names: table.columns.iter().map(|c| c.key.to_string()).collect(),
        values,
        zero_variance,
    })
}
