//! Directed spillover networks from pairwise Granger-causality tests on rolling windows.
//!
//! For every ordered pair `(j, i)` a bivariate regression of firm `i`'s returns on `p` of
//! its own lags, with and without `p` lags of firm `j`, is fitted by OLS. The edge `j -> i`
//! is kept when the nested F-test rejects at the configured level.

use std::io::Write;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use crate::error::{Error, Result};
use crate::graph::DirectedGraph;
use crate::linalg::least_squares;
use crate::num::Scalar;
use crate::panel::ReturnPanel;

/// Restricted and unrestricted OLS fits of the target equation.
#[derive(Debug, Clone, PartialEq)]
pub struct VarFit<T> {
    pub lag: usize,
    /// `[intercept, target lags 1..=p, source lags 1..=p]`.
    pub unrestricted: Vec<T>,
    pub unrestricted_se: Vec<T>,
    /// `[intercept, target lags 1..=p]`.
    pub restricted: Vec<T>,
    pub rss_restricted: T,
    pub rss_unrestricted: T,
    /// Number of equations used (series length minus `p`).
    pub sample_size: usize,
}

impl<T: Scalar> VarFit<T> {
    pub fn source_lag_coefficients(&self) -> &[T] {
        &self.unrestricted[1 + self.lag..]
    }

    pub fn source_lag_std_errors(&self) -> &[T] {
        &self.unrestricted_se[1 + self.lag..]
    }

    pub fn residual_dof(&self) -> usize {
        self.sample_size - 2 * self.lag - 1
    }
}

/// Nested F-test outcome.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FTest<T> {
    pub f: T,
    pub p_value: T,
    pub df1: usize,
    pub df2: usize,
}

/// F-test attached to an ordered firm pair; `source -> target`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeTest<T> {
    pub source: usize,
    pub target: usize,
    pub test: FTest<T>,
}

/// Fits the target equation with and without lags of `source`.
pub fn fit_bivariate_var<T: Scalar>(source: &[T], target: &[T], lag: usize) -> Result<VarFit<T>> {
    if lag == 0 {
        return Err(Error::Config("lag order must be at least 1".into()));
    }
    if source.len() != target.len() {
        return Err(Error::InsufficientData("series lengths differ".into()));
    }
    let len = target.len();
    if len < 2 * lag + 5 {
        return Err(Error::InsufficientData(format!(
            "series of length {len} too short for lag {lag} (need {})",
            2 * lag + 5
        )));
    }
    let n = len - lag;
    let y: Vec<T> = target[lag..].to_vec();
    let lagged = |s: &[T], k: usize| -> Vec<T> { s[lag - k..len - k].to_vec() };

    let mut columns = vec![vec![T::one(); n]];
    columns.extend((1..=lag).map(|k| lagged(target, k)));
    let restricted_cols = columns.clone();
    columns.extend((1..=lag).map(|k| lagged(source, k)));

    let full = least_squares(&columns, &y)
        .ok_or_else(|| Error::DegenerateFit("rank-deficient unrestricted regressors".into()))?;
    let restr = least_squares(&restricted_cols, &y)
        .ok_or_else(|| Error::DegenerateFit("rank-deficient restricted regressors".into()))?;

    let dof = n - 2 * lag - 1;
    let sigma2 = full.rss / T::from_count(dof);
    let se = full
        .inverse_gram_diag
        .iter()
        .map(|d| (sigma2 * *d).sqrt())
        .collect();
    // Nested fits: the restricted RSS can only exceed the unrestricted one up to rounding.
    let rss_restricted = restr.rss.max(full.rss);
    Ok(VarFit {
        lag,
        unrestricted: full.coefficients,
        unrestricted_se: se,
        restricted: restr.coefficients,
        rss_restricted,
        rss_unrestricted: full.rss,
        sample_size: n,
    })
}

/// `F = ((RSS_r - RSS_u) / p) / (RSS_u / (T - 2p - 1))` against `F(p, T - 2p - 1)`.
pub fn granger_test<T: Scalar>(fit: &VarFit<T>) -> Result<FTest<T>> {
    if !(fit.rss_unrestricted > T::zero()) {
        return Err(Error::ExactFit);
    }
    let df1 = fit.lag;
    let df2 = fit.residual_dof();
    let num = (fit.rss_restricted - fit.rss_unrestricted).max(T::zero()) / T::from_count(df1);
    let f = num / (fit.rss_unrestricted / T::from_count(df2));
    let p_value = if f == T::zero() {
        T::one()
    } else {
        let dist = FisherSnedecor::new(df1 as f64, df2 as f64)
            .map_err(|e| Error::DegenerateFit(format!("F distribution: {e}")))?;
        T::lit(dist.sf(f.as_f64()).clamp(0.0, 1.0))
    };
    Ok(FTest { f, p_value, df1, df2 })
}

/// Parameters of the network estimation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkConfig {
    pub lag: usize,
    pub significance: f64,
    /// Benjamini-Hochberg control across all pairs of one network instead of per-pair tests.
    pub fdr: bool,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            lag: 1,
            significance: 0.05,
            fdr: false,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lag == 0 {
            return Err(Error::Config("lag must be at least 1".into()));
        }
        if !(self.significance > 0.0 && self.significance < 1.0) {
            return Err(Error::Config(format!(
                "significance {} not in (0, 1)",
                self.significance
            )));
        }
        Ok(())
    }

    pub fn min_window(&self) -> usize {
        2 * self.lag + 5
    }
}

/// One estimated network with the tests behind its edges.
#[derive(Debug, Clone)]
pub struct NetworkEstimate<T> {
    pub graph: DirectedGraph,
    /// Tests of the retained edges, in `(source, target)` order.
    pub edges: Vec<EdgeTest<T>>,
    pub tested_pairs: usize,
    pub skipped_pairs: usize,
}

impl<T: Scalar> NetworkEstimate<T> {
    /// Writes `source,target,F,p_value`.
    pub fn write_edges_csv<W: Write>(&self, writer: W) -> Result<()> {
        let labels = self.graph.labels();
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["source", "target", "F", "p_value"])?;
        for e in &self.edges {
            w.write_record([
                labels[e.source].clone(),
                labels[e.target].clone(),
                e.test.f.to_string(),
                e.test.p_value.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn gap_free<T: Scalar>(panel: &ReturnPanel<T>, firm: usize, rows: std::ops::Range<usize>) -> Option<Vec<T>> {
    panel.rows()[rows].iter().map(|r| r[firm]).collect()
}

/// Benjamini-Hochberg rejection threshold; `None` when nothing is rejected.
fn bh_threshold(mut p: Vec<f64>, q: f64) -> Option<f64> {
    p.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = p.len() as f64;
    p.iter()
        .enumerate()
        .filter(|(k, pk)| **pk <= (*k as f64 + 1.0) / m * q)
        .map(|(_, pk)| *pk)
        .last()
}

/// Network over the panel rows in `rows`.
pub fn build_network_rows<T: Scalar>(
    panel: &ReturnPanel<T>,
    rows: std::ops::Range<usize>,
    cfg: &NetworkConfig,
) -> Result<NetworkEstimate<T>> {
    cfg.validate()?;
    if rows.end > panel.len() || rows.len() < cfg.min_window() {
        return Err(Error::InsufficientData(format!(
            "window of {} rows shorter than minimum {}",
            rows.len(),
            cfg.min_window()
        )));
    }
    let n = panel.n_firms();
    let series: Vec<Option<Vec<T>>> = (0..n).map(|j| gap_free(panel, j, rows.clone())).collect();
    for (j, s) in series.iter().enumerate() {
        if s.is_none() {
            log::warn!(
                "firm {} has missing returns in window; its pairs are skipped",
                panel.firms()[j]
            );
        }
    }
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|s| (0..n).filter(move |&t| t != s).map(move |t| (s, t)))
        .collect();
    let outcomes: Vec<Option<EdgeTest<T>>> = pairs
        .par_iter()
        .map(|&(s, t)| {
            let (xs, ys) = (series[s].as_ref()?, series[t].as_ref()?);
            let test = fit_bivariate_var(xs, ys, cfg.lag).and_then(|f| granger_test(&f));
            match test {
                Ok(test) => Some(EdgeTest {
                    source: s,
                    target: t,
                    test,
                }),
                Err(e) => {
                    log::warn!(
                        "pair {} -> {} skipped: {e}",
                        panel.firms()[s],
                        panel.firms()[t]
                    );
                    None
                }
            }
        })
        .collect();
    let tests: Vec<EdgeTest<T>> = outcomes.iter().flatten().copied().collect();
    let skipped_pairs = pairs.len() - tests.len();

    let threshold = if cfg.fdr {
        bh_threshold(tests.iter().map(|e| e.test.p_value.as_f64()).collect(), cfg.significance)
    } else {
        None
    };
    let keep = |e: &EdgeTest<T>| {
        let p = e.test.p_value.as_f64();
        if cfg.fdr {
            threshold.is_some_and(|th| p <= th)
        } else {
            p < cfg.significance
        }
    };
    let edges: Vec<EdgeTest<T>> = tests.iter().filter(|e| keep(e)).copied().collect();
    let graph = DirectedGraph::from_edges(
        panel.firms().to_vec(),
        edges.iter().map(|e| (e.source, e.target)),
    )?
    .with_timestamp(panel.dates().get(rows.end.wrapping_sub(1)).copied());
    Ok(NetworkEstimate {
        graph,
        edges,
        tested_pairs: tests.len(),
        skipped_pairs,
    })
}

/// Network over returns dated in `[start, end]`.
pub fn build_network<T: Scalar>(
    panel: &ReturnPanel<T>,
    start: NaiveDate,
    end: NaiveDate,
    cfg: &NetworkConfig,
) -> Result<NetworkEstimate<T>> {
    build_network_rows(panel, panel.rows_between(start, end), cfg)
}

/// Time-ordered networks over a shared node set.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSequence {
    snapshots: Vec<DirectedGraph>,
}

impl SnapshotSequence {
    pub fn new(snapshots: Vec<DirectedGraph>) -> Result<Self> {
        if let Some(first) = snapshots.first() {
            if snapshots.iter().any(|g| g.labels() != first.labels()) {
                return Err(Error::InvalidGraph("snapshots have different node sets".into()));
            }
        }
        for w in snapshots.windows(2) {
            if let (Some(a), Some(b)) = (w[0].timestamp(), w[1].timestamp()) {
                if a >= b {
                    return Err(Error::InvalidGraph(format!(
                        "snapshot timestamps not increasing: {a} then {b}"
                    )));
                }
            }
        }
        Ok(Self { snapshots })
    }

    /// Same graph repeated `count` times, without timestamps.
    pub fn constant(graph: &DirectedGraph, count: usize) -> Self {
        Self {
            snapshots: vec![graph.clone().with_timestamp(None); count],
        }
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn get(&self, t: usize) -> Option<&DirectedGraph> {
        self.snapshots.get(t)
    }

    pub fn graphs(&self) -> &[DirectedGraph] {
        &self.snapshots
    }

    pub fn last(&self) -> Option<&DirectedGraph> {
        self.snapshots.last()
    }
}

/// Row ranges `[k*step, k*step + window)` that fit inside `len` rows.
pub fn rolling_windows(len: usize, window: usize, step: usize) -> Result<Vec<std::ops::Range<usize>>> {
    if step == 0 {
        return Err(Error::Config("snapshot step must be positive".into()));
    }
    if window == 0 || len < window {
        return Err(Error::InsufficientData(format!(
            "panel of {len} rows shorter than window {window}"
        )));
    }
    Ok((0..)
        .map(|k| k * step..k * step + window)
        .take_while(|r| r.end <= len)
        .collect())
}

/// One network per rolling window.
pub fn build_snapshot_estimates<T: Scalar>(
    panel: &ReturnPanel<T>,
    window: usize,
    step: usize,
    cfg: &NetworkConfig,
) -> Result<Vec<NetworkEstimate<T>>> {
    rolling_windows(panel.len(), window, step)?
        .into_iter()
        .map(|r| build_network_rows(panel, r, cfg))
        .collect()
}

pub fn build_snapshots<T: Scalar>(
    panel: &ReturnPanel<T>,
    window: usize,
    step: usize,
    cfg: &NetworkConfig,
) -> Result<SnapshotSequence> {
    let est = build_snapshot_estimates(panel, window, step, cfg)?;
    SnapshotSequence::new(est.into_iter().map(|e| e.graph).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_rss_gives_zero_f() {
        let fit = VarFit {
            lag: 1,
            unrestricted: vec![0.0; 3],
            unrestricted_se: vec![1.0; 3],
            restricted: vec![0.0; 2],
            rss_restricted: 2.5,
            rss_unrestricted: 2.5,
            sample_size: 50,
        };
        let t = granger_test(&fit).unwrap();
        assert_eq!(t.f, 0.0);
        assert_eq!(t.p_value, 1.0);
        assert_eq!(t.df2, 47);
    }

    #[test]
    fn exact_fit_rejected() {
        let fit = VarFit {
            lag: 1,
            unrestricted: vec![0.0; 3],
            unrestricted_se: vec![0.0; 3],
            restricted: vec![0.0; 2],
            rss_restricted: 1.0,
            rss_unrestricted: 0.0,
            sample_size: 50,
        };
        assert!(matches!(granger_test(&fit), Err(Error::ExactFit)));
    }

    #[test]
    fn known_f_statistic() {
        let fit: VarFit<f64> = VarFit {
            lag: 2,
            unrestricted: vec![0.0; 5],
            unrestricted_se: vec![1.0; 5],
            restricted: vec![0.0; 3],
            rss_restricted: 12.0,
            rss_unrestricted: 10.0,
            sample_size: 25,
        };
        // ((12 - 10) / 2) / (10 / 20) = 2
        let t = granger_test(&fit).unwrap();
        assert!((t.f - 2.0).abs() < 1e-14);
        // F(2, 20) survival at 2 equals (1 + 2*2/20)^(-10).
        assert!((t.p_value - (1.2f64).powi(-10)).abs() < 1e-10);
    }

    #[test]
    fn constant_source_is_degenerate() {
        let y: Vec<f64> = (0..30).map(|i| ((i * 7) % 11) as f64).collect();
        let x = vec![1.0; 30];
        assert!(matches!(fit_bivariate_var(&x, &y, 1), Err(Error::DegenerateFit(_))));
        assert!(fit_bivariate_var(&x[..6], &y[..6], 1).is_err());
    }

    #[test]
    fn rolling_window_counts() {
        assert_eq!(rolling_windows(60, 48, 12).unwrap().len(), 2);
        assert_eq!(rolling_windows(60, 48, 100).unwrap().len(), 1);
        assert!(rolling_windows(60, 48, 0).is_err());
        assert!(rolling_windows(40, 48, 1).is_err());
    }

    #[test]
    fn bh_threshold_examples() {
        assert_eq!(bh_threshold(vec![0.01, 0.02, 0.5], 0.05), Some(0.02));
        assert_eq!(bh_threshold(vec![0.2, 0.5], 0.05), None);
    }
}
