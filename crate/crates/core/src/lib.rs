//! Spillover-network recovery, community detection, multilevel topological metrics and
//! Elastic Net regressions of crisis-period vulnerability on those metrics.
//!
//! The numerical modules are generic over [`Scalar`] (`f32` or `f64`); the aliases below
//! fix the precision used by the pipeline.

pub mod community;
pub mod elastic_net;
pub mod error;
pub mod graph;
mod linalg;
pub mod metrics;
pub mod num;
pub mod panel;
pub mod pipeline;
pub mod spillover;

pub use error::{Error, ErrorKind, Result};
pub use graph::{DirectedGraph, Direction, NodeId, UndirectedGraph};
pub use num::Scalar;

pub type PricePanel64 = panel::PricePanel<f64>;
pub type ReturnPanel64 = panel::ReturnPanel<f64>;
pub type VarFit64 = spillover::VarFit<f64>;
pub type NetworkEstimate64 = spillover::NetworkEstimate<f64>;
pub type MetricTable64 = metrics::MetricTable<f64>;
pub type DesignMatrix64 = elastic_net::DesignMatrix<f64>;
pub type EnFit64 = elastic_net::EnFit<f64>;

pub type PricePanel32 = panel::PricePanel<f32>;
pub type ReturnPanel32 = panel::ReturnPanel<f32>;
pub type MetricTable32 = metrics::MetricTable<f32>;
pub type DesignMatrix32 = elastic_net::DesignMatrix<f32>;
pub type EnFit32 = elastic_net::EnFit<f32>;
