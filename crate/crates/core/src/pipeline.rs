//! End-to-end study: sample filters, pre-crisis spillover snapshots, communities, the
//! multilevel metric table, crisis targets and the nested Elastic Net specifications.
//!
//! Every stage persists its outputs in the output directory and the next stage reads them
//! back, so each stage can be rerun on its own:
//!
//! | stage         | reads                                   | writes                                              |
//! |---------------|-----------------------------------------|-----------------------------------------------------|
//! | `network`     | price and sector files                  | `nodes.csv`, `snapshots.csv`, `edges_<k>.csv`       |
//! | `communities` | network outputs                         | `partition.csv`                                     |
//! | `metrics`     | network outputs, `partition.csv`        | `metrics.csv`, `correlation.csv`                    |
//! | `targets`     | price and sector files                  | `targets.csv`                                       |
//! | `regress`     | `metrics.csv`, `targets.csv`            | `fit_*.csv`, `cv_*.csv`, `table_*.csv`, `report.json` |

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::community::{louvain, LouvainConfig, Partition};
use crate::elastic_net::{self, CdOptions, DesignMatrix, EnConfig, LambdaRule, Sign};
use crate::error::{Error, Result};
use crate::graph::DirectedGraph;
use crate::metrics::{
    assemble_table, correlation_matrix, CorrelationMatrix, Level, MetricInputs, MetricKey, MetricParams,
    MetricTable, TemporalInputs,
};
use crate::panel::{
    cumulative_return, filter_sample, load_price_csv, load_sector_csv, max_drawdown, to_log_returns, CrisisWindow,
    ReturnPanel, SectorMap,
};
use crate::spillover::{build_network_rows, rolling_windows, NetworkConfig, SnapshotSequence};
use crate::EnFit64;

pub const NODES_FILE: &str = "nodes.csv";
pub const SNAPSHOTS_FILE: &str = "snapshots.csv";
pub const PARTITION_FILE: &str = "partition.csv";
pub const METRICS_FILE: &str = "metrics.csv";
pub const CORRELATION_FILE: &str = "correlation.csv";
pub const TARGETS_FILE: &str = "targets.csv";
pub const REPORT_FILE: &str = "report.json";
pub const LOCK_FILE: &str = ".spillnet.lock";

pub fn edges_file(k: usize) -> String {
    format!("edges_{k}.csv")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    /// Prices the networks are estimated from, typically monthly.
    pub prices: PathBuf,
    /// Prices for the crisis targets, typically daily; `prices` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_prices: Option<PathBuf>,
    pub sectors: PathBuf,
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleConfig {
    /// Longest gap-free pre-crisis return run a firm needs.
    pub min_consecutive: usize,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self { min_consecutive: 36 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SnapshotConfig {
    /// Returns per rolling window.
    pub window: usize,
    pub step: usize,
    pub lag: usize,
    pub significance: f64,
    pub fdr: bool,
}

impl Default for SnapshotConfig {
    fn default() -> Self {
        let t = NetworkConfig::default();
        Self {
            window: 36,
            step: 1,
            lag: t.lag,
            significance: t.significance,
            fdr: t.fdr,
        }
    }
}

impl SnapshotConfig {
    pub fn test(&self) -> NetworkConfig {
        NetworkConfig {
            lag: self.lag,
            significance: self.significance,
            fdr: self.fdr,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegressionConfig {
    /// Mixing parameters; the first one drives tables without suffix and the hypothesis summary.
    pub alphas: Vec<f64>,
    pub folds: usize,
    pub seed: u64,
    pub rule: LambdaRule,
    pub path_length: usize,
    pub lambda_ratio: f64,
    pub tolerance: f64,
    pub max_sweeps: usize,
}

impl Default for RegressionConfig {
    fn default() -> Self {
        let en = EnConfig::default();
        Self {
            alphas: vec![1.0, 0.5],
            folds: en.folds,
            seed: en.seed,
            rule: en.rule,
            path_length: en.path_length,
            lambda_ratio: en.lambda_ratio,
            tolerance: en.cd.tolerance,
            max_sweeps: en.cd.max_sweeps,
        }
    }
}

impl RegressionConfig {
    pub fn primary_alpha(&self) -> f64 {
        self.alphas[0]
    }

    pub fn en_config(&self, alpha: f64) -> EnConfig {
        EnConfig {
            alpha,
            path_length: self.path_length,
            lambda_ratio: self.lambda_ratio,
            folds: self.folds,
            seed: self.seed,
            rule: self.rule,
            cd: CdOptions {
                tolerance: self.tolerance,
                max_sweeps: self.max_sweeps,
            },
        }
    }
}

fn default_windows() -> Vec<CrisisWindow> {
    let d = |s: &str| NaiveDate::parse_from_str(s, "%Y-%m-%d").expect("valid literal");
    vec![
        CrisisWindow {
            label: "12m".into(),
            start: d("2008-01-01"),
            end: d("2008-12-31"),
        },
        CrisisWindow {
            label: "18m".into(),
            start: d("2007-07-01"),
            end: d("2008-12-31"),
        },
    ]
}

/// Full run configuration, read from JSON. Every section except `paths` is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: Paths,
    #[serde(default = "default_windows")]
    pub crisis_windows: Vec<CrisisWindow>,
    #[serde(default)]
    pub sample: SampleConfig,
    #[serde(default)]
    pub network: SnapshotConfig,
    #[serde(default)]
    pub communities: LouvainConfig,
    #[serde(default)]
    pub metrics: MetricParams,
    #[serde(default)]
    pub regression: RegressionConfig,
}

impl PipelineConfig {
    /// Defaults everywhere except the paths.
    pub fn new(paths: Paths) -> Self {
        Self {
            paths,
            crisis_windows: default_windows(),
            sample: SampleConfig::default(),
            network: SnapshotConfig::default(),
            communities: LouvainConfig::default(),
            metrics: MetricParams::default(),
            regression: RegressionConfig::default(),
        }
    }

    /// Parses JSON; relative paths are resolved against `base_dir`.
    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: Self = serde_json::from_str(text)?;
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base_dir.join(&*p);
            }
        };
        resolve(&mut cfg.paths.prices);
        resolve(&mut cfg.paths.sectors);
        resolve(&mut cfg.paths.output_dir);
        if let Some(p) = cfg.paths.target_prices.as_mut() {
            resolve(p);
        }
        Ok(cfg)
    }

    /// Reads a JSON config file; relative paths are taken from the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::from_json(&text, base)
    }

    pub fn validate(&self) -> Result<()> {
        if self.crisis_windows.is_empty() {
            return Err(Error::Config("at least one crisis window required".into()));
        }
        let mut labels = BTreeSet::new();
        for w in &self.crisis_windows {
            w.validate()?;
            if w.label.is_empty()
                || !w.label.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
            {
                return Err(Error::Config(format!(
                    "crisis window label {:?} must be non-empty and use [A-Za-z0-9_-]",
                    w.label
                )));
            }
            if !labels.insert(w.label.as_str()) {
                return Err(Error::Config(format!("duplicate crisis window label {}", w.label)));
            }
        }
        if self.sample.min_consecutive == 0 {
            return Err(Error::Config("sample.min_consecutive must be at least 1".into()));
        }
        let test = self.network.test();
        test.validate()?;
        if self.network.window < test.min_window() {
            return Err(Error::Config(format!(
                "network.window {} below the minimum {} for lag {}",
                self.network.window,
                test.min_window(),
                test.lag
            )));
        }
        if self.network.step == 0 {
            return Err(Error::Config("network.step must be positive".into()));
        }
        if self.metrics.m == 0 {
            return Err(Error::Config("metrics.m must be at least 1".into()));
        }
        if !(self.metrics.katz_attenuation > 0.0 && self.metrics.katz_attenuation.is_finite()) {
            return Err(Error::Config("metrics.katz_attenuation must be positive".into()));
        }
        if !(self.metrics.ratio_cap > 0.0 && self.metrics.ratio_cap.is_finite()) {
            return Err(Error::Config("metrics.ratio_cap must be positive".into()));
        }
        if !(self.communities.resolution > 0.0 && self.communities.resolution.is_finite()) {
            return Err(Error::Config("communities.resolution must be positive".into()));
        }
        let r = &self.regression;
        if r.alphas.is_empty() {
            return Err(Error::Config("regression.alphas must not be empty".into()));
        }
        let mut seen = Vec::new();
        for &a in &r.alphas {
            r.en_config(a).validate()?;
            if seen.contains(&a) {
                return Err(Error::Config(format!("alpha {a} listed twice")));
            }
            seen.push(a);
        }
        if r.path_length < 2 {
            return Err(Error::Config("regression.path_length must be at least 2".into()));
        }
        if !(r.lambda_ratio > 0.0 && r.lambda_ratio < 1.0) {
            return Err(Error::Config("regression.lambda_ratio must lie in (0, 1)".into()));
        }
        if !(r.tolerance > 0.0) || r.max_sweeps == 0 {
            return Err(Error::Config("regression tolerance and max_sweeps must be positive".into()));
        }
        Ok(())
    }

    /// Smallest window covering every crisis definition.
    pub fn crisis_hull(&self) -> CrisisWindow {
        let first = self.crisis_windows[0].clone();
        self.crisis_windows[1..].iter().fold(first, |h, w| h.hull(w))
    }

    /// `cr_<label>` for every window, then `md_<label>`.
    pub fn dependent_variables(&self) -> Vec<String> {
        let labels = self.crisis_windows.iter().map(|w| &w.label);
        labels
            .clone()
            .map(|l| format!("cr_{l}"))
            .chain(labels.map(|l| format!("md_{l}")))
            .collect()
    }

    /// Every modelling parameter with its value, followed by the fixed methodological choices.
    /// File locations are not part of the log.
    pub fn assumption_log(&self) -> Vec<String> {
        let flat = |cfg: &Self| {
            let mut v = serde_json::to_value(cfg).expect("config serializes");
            if let Value::Object(m) = &mut v {
                m.remove("paths");
            }
            let mut out = BTreeMap::new();
            flatten("", &v, &mut out);
            out
        };
        let defaults = flat(&Self::new(self.paths.clone()));
        let mut log: Vec<String> = flat(self)
            .into_iter()
            .map(|(k, v)| {
                let tag = if defaults.get(&k) == Some(&v) { " (default)" } else { "" };
                format!("{k} = {v}{tag}")
            })
            .collect();
        let hull = self.crisis_hull();
        log.extend([
            format!(
                "sample: firms need a return before {}, a gap-free pre-crisis run of at least {} returns and no missing return inside [{}, {}]",
                hull.start, self.sample.min_consecutive, hull.start, hull.end
            ),
            format!(
                "reference network: the snapshot whose window ends on the last return dated before {}; windows are aligned backwards from it",
                hull.start
            ),
            format!(
                "temporal reaches: hop k uses snapshot ref - {} + k, so the last hop uses the reference snapshot",
                self.metrics.m
            ),
            "communities: Louvain on the symmetrized, unweighted reference network".into(),
            match self.paths.target_prices {
                Some(_) => "targets: computed from the separate target price panel".into(),
                None => "targets: computed from the network price panel".into(),
            },
            "targets: cumulative return = sum of log-returns dated inside the window; drawdown = largest running-peak decline of prices inside the window, missing prices skipped".into(),
            "regression: loss scaled by 1/(2N), columns standardized to unit population variance, lambda chosen by cross-validated MSE".into(),
            "regression: columns constant across firms are dropped from a specification before fitting".into(),
            "specifications: gt = GT; gt_at = GT + AT; full = GT + LT + AT + new-GT + new-AT".into(),
            format!(
                "hypotheses: classified from the full specification at alpha = {}; GT and new-GT count as global, LT as local, AT and new-AT are ignored",
                self.regression.primary_alpha()
            ),
        ]);
        log
    }
}

fn flatten(prefix: &str, v: &Value, out: &mut BTreeMap<String, String>) {
    match v {
        Value::Object(m) => {
            for (k, v) in m {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, v, out);
            }
        }
        other => {
            out.insert(prefix.to_string(), other.to_string());
        }
    }
}

/// Output directory held for one invocation.
///
/// Holds a lock file for its lifetime. Files written through it are removed by
/// [`OutputDir::discard`] when the invocation fails.
#[derive(Debug)]
pub struct OutputDir {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl OutputDir {
    pub fn acquire(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        let lock = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&lock) {
            Ok(mut f) => {
                writeln!(f, "{}", std::process::id())?;
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                return Err(Error::Config(format!(
                    "output directory {} is in use (remove {} if no run is active)",
                    dir.display(),
                    lock.display()
                )));
            }
            Err(e) => return Err(e.into()),
        }
        Ok(Self {
            dir,
            written: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    pub fn write(&mut self, name: &str, body: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
        let path = self.path(name);
        let file = File::create(&path)?;
        if !self.written.contains(&path) {
            self.written.push(path);
        }
        let mut w = BufWriter::new(file);
        body(&mut w)?;
        w.flush()?;
        Ok(())
    }

    fn open(&self, name: &str) -> Result<File> {
        let path = self.path(name);
        File::open(&path).map_err(|e| {
            Error::InsufficientData(format!("cannot open {} (run the earlier stage first): {e}", path.display()))
        })
    }

    pub fn discard(&mut self) {
        for p in self.written.drain(..) {
            if let Err(e) = fs::remove_file(&p) {
                log::warn!("could not remove partial output {}: {e}", p.display());
            }
        }
    }
}

impl Drop for OutputDir {
    fn drop(&mut self) {
        let _ = fs::remove_file(self.dir.join(LOCK_FILE));
    }
}

fn require_file(path: &Path, what: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::Config(format!("{what} file {} not found", path.display())))
    }
}

struct Sample {
    returns: ReturnPanel<f64>,
}

fn prepare_sample(cfg: &PipelineConfig) -> Result<Sample> {
    require_file(&cfg.paths.prices, "price")?;
    require_file(&cfg.paths.sectors, "sector")?;
    if let Some(p) = &cfg.paths.target_prices {
        require_file(p, "target price")?;
    }
    let prices = load_price_csv::<f64>(&cfg.paths.prices)?;
    let returns = to_log_returns(&prices)?;
    let returns = filter_sample(&returns, cfg.sample.min_consecutive, &cfg.crisis_hull())?;
    let sectors = load_sector_csv(&cfg.paths.sectors)?;
    sectors.check_covers(returns.firms())?;
    log::info!("{} of {} firms pass the sample filters", returns.n_firms(), prices.n_firms());
    Ok(Sample { returns })
}

/// Row ranges of the rolling windows, aligned so the last one ends on the last pre-crisis row.
fn pre_crisis_windows(cfg: &PipelineConfig, returns: &ReturnPanel<f64>) -> Result<Vec<std::ops::Range<usize>>> {
    let start = cfg.crisis_hull().start;
    let pre = returns.dates().partition_point(|d| *d < start);
    let window = cfg.network.window;
    if pre < window {
        return Err(Error::InsufficientData(format!(
            "{pre} pre-crisis returns, network window needs {window}"
        )));
    }
    let offset = (pre - window) % cfg.network.step;
    Ok(rolling_windows(pre - offset, window, cfg.network.step)?
        .into_iter()
        .map(|r| r.start + offset..r.end + offset)
        .collect())
}

fn network_outputs(cfg: &PipelineConfig, returns: &ReturnPanel<f64>, out: &mut OutputDir) -> Result<()> {
    let test = cfg.network.test();
    let ranges = pre_crisis_windows(cfg, returns)?;
    let estimates = ranges
        .iter()
        .map(|r| build_network_rows(returns, r.clone(), &test))
        .collect::<Result<Vec<_>>>()?;
    out.write(NODES_FILE, |w| estimates[0].graph.write_nodes_csv(w))?;
    for (k, e) in estimates.iter().enumerate() {
        out.write(&edges_file(k), |w| e.write_edges_csv(w))?;
    }
    out.write(SNAPSHOTS_FILE, |w| {
        let mut c = csv::Writer::from_writer(w);
        c.write_record(["index", "window_start", "window_end", "edges", "tested_pairs", "skipped_pairs"])?;
        for (k, (r, e)) in ranges.iter().zip(&estimates).enumerate() {
            c.write_record([
                k.to_string(),
                returns.dates()[r.start].to_string(),
                returns.dates()[r.end - 1].to_string(),
                e.graph.edge_count().to_string(),
                e.tested_pairs.to_string(),
                e.skipped_pairs.to_string(),
            ])?;
        }
        c.flush()?;
        Ok(())
    })?;
    let last = estimates.last().expect("at least one window");
    log::info!(
        "{} snapshots; reference network has {} edges",
        estimates.len(),
        last.graph.edge_count()
    );
    Ok(())
}

/// Reads the snapshot sequence persisted by the network stage.
pub fn load_snapshots(dir: &Path) -> Result<SnapshotSequence> {
    let open = |name: &str| {
        let p = dir.join(name);
        File::open(&p).map_err(|e| {
            Error::InsufficientData(format!("cannot open {} (run the network stage first): {e}", p.display()))
        })
    };
    let mut labels = Vec::new();
    let mut rdr = csv::Reader::from_reader(open(NODES_FILE)?);
    for rec in rdr.records() {
        let rec = rec?;
        labels.push(rec.get(1).unwrap_or_default().to_string());
    }
    let mut rdr = csv::Reader::from_reader(open(SNAPSHOTS_FILE)?);
    let mut graphs = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let end = NaiveDate::parse_from_str(&rec[2], "%Y-%m-%d")
            .map_err(|e| Error::InsufficientData(format!("{SNAPSHOTS_FILE}: bad date {:?}: {e}", &rec[2])))?;
        let g = DirectedGraph::read_edges_csv(labels.clone(), open(&edges_file(k))?)?;
        graphs.push(g.with_timestamp(Some(end)));
    }
    if graphs.is_empty() {
        return Err(Error::InsufficientData(format!("{SNAPSHOTS_FILE} lists no snapshots")));
    }
    SnapshotSequence::new(graphs)
}

fn network_stage(cfg: &PipelineConfig, out: &mut OutputDir) -> Result<()> {
    let sample = prepare_sample(cfg).map_err(|e| e.in_stage("panel_io"))?;
    network_outputs(cfg, &sample.returns, out).map_err(|e| e.in_stage("spillover_net"))
}

fn communities_stage(cfg: &PipelineConfig, out: &mut OutputDir) -> Result<()> {
    let run = |out: &mut OutputDir| -> Result<()> {
        let snaps = load_snapshots(out.dir())?;
        let reference = snaps.last().expect("non-empty sequence");
        let outcome = louvain(reference, &cfg.communities)?;
        log::info!(
            "{} communities, modularity by level {:?}",
            outcome.partition.community_count(),
            outcome.level_modularity
        );
        out.write(PARTITION_FILE, |w| outcome.partition.write_csv(w))
    };
    run(out).map_err(|e| e.in_stage("communities"))
}

fn metrics_stage(cfg: &PipelineConfig, out: &mut OutputDir) -> Result<()> {
    let run = |out: &mut OutputDir| -> Result<()> {
        let snaps = load_snapshots(out.dir())?;
        let reference = snaps.last().expect("non-empty sequence");
        let partition = Partition::read_csv(out.open(PARTITION_FILE)?)?;
        require_file(&cfg.paths.sectors, "sector")?;
        let sectors: SectorMap = load_sector_csv(&cfg.paths.sectors)?;
        let m = cfg.metrics.m;
        if snaps.len() < m {
            return Err(Error::InsufficientData(format!(
                "temporal {m}-reach needs {m} snapshots, have {}",
                snaps.len()
            )));
        }
        let inputs = MetricInputs {
            graph: reference,
            partition: &partition,
            sectors: &sectors,
            temporal: Some(TemporalInputs {
                snapshots: &snaps,
                start: snaps.len() - m,
            }),
            params: cfg.metrics,
        };
        let table = assemble_table::<f64>(&inputs)?;
        let corr = correlation_matrix(&table)?;
        out.write(METRICS_FILE, |w| table.write_csv(w))?;
        out.write(CORRELATION_FILE, |w| corr.write_csv(w))
    };
    run(out).map_err(|e| e.in_stage("metrics"))
}

/// Crisis vulnerability per firm; one column per dependent variable.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetTable {
    pub firms: Vec<String>,
    pub names: Vec<String>,
    /// `values[j][i]`: variable `j`, firm `i`.
    pub values: Vec<Vec<f64>>,
}

impl TargetTable {
    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|j| self.values[j].as_slice())
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["ticker".to_string()];
        header.extend(self.names.iter().cloned());
        w.write_record(&header)?;
        for (i, f) in self.firms.iter().enumerate() {
            let mut rec = vec![f.clone()];
            rec.extend(self.values.iter().map(|c| c[i].to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let header = rdr.headers()?.clone();
        let names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        let mut firms = Vec::new();
        let mut values = vec![Vec::new(); names.len()];
        for rec in rdr.records() {
            let rec = rec?;
            if rec.len() != names.len() + 1 {
                return Err(Error::InsufficientData(format!(
                    "{TARGETS_FILE}: row for {} has {} cells",
                    &rec[0],
                    rec.len()
                )));
            }
            firms.push(rec[0].to_string());
            for (j, cell) in rec.iter().skip(1).enumerate() {
                let v: f64 = cell
                    .parse()
                    .map_err(|_| Error::InsufficientData(format!("{TARGETS_FILE}: bad value {cell:?}")))?;
                values[j].push(v);
            }
        }
        Ok(Self { firms, names, values })
    }
}

/// Cumulative returns and maximum drawdowns of the sample firms over every crisis window.
pub fn compute_targets(cfg: &PipelineConfig, firms: &[String]) -> Result<TargetTable> {
    let source = cfg.paths.target_prices.as_ref().unwrap_or(&cfg.paths.prices);
    let prices = load_price_csv::<f64>(source)?;
    let returns = to_log_returns(&prices)?;
    for w in &cfg.crisis_windows {
        w.check_within(returns.dates())?;
    }
    let mut names = Vec::new();
    let mut values = Vec::new();
    for w in &cfg.crisis_windows {
        names.push(format!("cr_{}", w.label));
        values.push(
            firms
                .iter()
                .map(|f| cumulative_return(&returns, f, w))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    for w in &cfg.crisis_windows {
        names.push(format!("md_{}", w.label));
        values.push(
            firms
                .iter()
                .map(|f| max_drawdown(&prices, f, w))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    Ok(TargetTable {
        firms: firms.to_vec(),
        names,
        values,
    })
}

fn targets_stage(cfg: &PipelineConfig, out: &mut OutputDir) -> Result<()> {
    let run = |out: &mut OutputDir| -> Result<()> {
        let sample = prepare_sample(cfg)?;
        let targets = compute_targets(cfg, sample.returns.firms())?;
        out.write(TARGETS_FILE, |w| targets.write_csv(w))
    };
    run(out).map_err(|e| e.in_stage("panel_io"))
}

/// Nested regressor sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Specification {
    #[serde(rename = "gt")]
    Gt,
    #[serde(rename = "gt_at")]
    GtAt,
    #[serde(rename = "full")]
    Full,
}

impl Specification {
    pub const ALL: [Specification; 3] = [Specification::Gt, Specification::GtAt, Specification::Full];

    pub fn name(self) -> &'static str {
        match self {
            Specification::Gt => "gt",
            Specification::GtAt => "gt_at",
            Specification::Full => "full",
        }
    }

    pub fn levels(self) -> &'static [Level] {
        match self {
            Specification::Gt => &[Level::Gt],
            Specification::GtAt => &[Level::Gt, Level::At],
            Specification::Full => &Level::ALL,
        }
    }

    pub fn includes(self, level: Level) -> bool {
        self.levels().contains(&level)
    }
}

impl fmt::Display for Specification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Regressors of one specification, with the columns dropped for being constant.
pub fn specification_design(
    table: &MetricTable<f64>,
    spec: Specification,
    y: &[f64],
) -> Result<(DesignMatrix<f64>, Vec<String>)> {
    let mut names = Vec::new();
    let mut columns = Vec::new();
    let mut dropped = Vec::new();
    for c in table.columns().iter().filter(|c| spec.includes(c.key.level)) {
        if c.values.windows(2).all(|w| w[0] == w[1]) {
            dropped.push(c.key.to_string());
        } else {
            names.push(c.key.to_string());
            columns.push(c.values.clone());
        }
    }
    if names.is_empty() {
        return Err(Error::InvalidDesign(format!(
            "specification {spec} has no non-constant column"
        )));
    }
    Ok((DesignMatrix::new(names, columns, y.to_vec())?, dropped))
}

/// One fitted specification.
#[derive(Debug, Clone, PartialEq)]
pub struct SpecificationFit {
    pub specification: Specification,
    pub dependent: String,
    pub alpha: f64,
    pub dropped_constant: Vec<String>,
    pub fit: EnFit64,
}

/// Every specification for every dependent variable and alpha, in that nesting order
/// (alpha outermost).
pub fn fit_specifications(
    cfg: &PipelineConfig,
    table: &MetricTable<f64>,
    targets: &TargetTable,
) -> Result<Vec<SpecificationFit>> {
    if table.firms() != targets.firms.as_slice() {
        return Err(Error::InvalidDesign(
            "metric table and targets list different firms".into(),
        ));
    }
    let mut fits = Vec::new();
    for &alpha in &cfg.regression.alphas {
        let en = cfg.regression.en_config(alpha);
        for spec in Specification::ALL {
            for (dep, y) in targets.names.iter().zip(&targets.values) {
                let (design, dropped) = specification_design(table, spec, y)?;
                let fit = elastic_net::fit(&design, &en)?;
                log::info!(
                    "alpha {alpha}, {spec}, {dep}: {} of {} selected",
                    fit.active.len(),
                    design.width()
                );
                fits.push(SpecificationFit {
                    specification: spec,
                    dependent: dep.clone(),
                    alpha,
                    dropped_constant: dropped,
                    fit,
                });
            }
        }
    }
    Ok(fits)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Hypothesis {
    /// Only community-local variables selected.
    H1,
    /// Only system-wide variables selected.
    H2,
    /// Both.
    H3,
    #[serde(rename = "inconclusive")]
    Inconclusive,
}

impl fmt::Display for Hypothesis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Hypothesis::H1 => "H1",
            Hypothesis::H2 => "H2",
            Hypothesis::H3 => "H3",
            Hypothesis::Inconclusive => "inconclusive",
        })
    }
}

/// Classification from the levels of the selected variables.
pub fn classify(selected: impl IntoIterator<Item = Level>) -> Hypothesis {
    let (mut global, mut local) = (false, false);
    for l in selected {
        global |= l.is_global();
        local |= l == Level::Lt;
    }
    match (local, global) {
        (true, false) => Hypothesis::H1,
        (false, true) => Hypothesis::H2,
        (true, true) => Hypothesis::H3,
        (false, false) => Hypothesis::Inconclusive,
    }
}

/// Per dependent variable, the classification of the full specification at `alpha`.
pub fn hypothesis_summary(fits: &[SpecificationFit], alpha: f64) -> BTreeMap<String, Hypothesis> {
    fits.iter()
        .filter(|f| f.specification == Specification::Full && f.alpha == alpha)
        .map(|f| {
            let levels = f
                .fit
                .active
                .iter()
                .filter_map(|a| a.name.parse::<MetricKey>().ok())
                .map(|k| k.level);
            (f.dependent.clone(), classify(levels))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedVariable {
    pub level: Level,
    pub variable: String,
    pub sign: Sign,
    pub coefficient: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub specification: Specification,
    pub dependent: String,
    pub alpha: f64,
    pub lambda: f64,
    pub intercept: f64,
    /// Regressors entering the fit.
    pub candidates: usize,
    pub dropped_constant: Vec<String>,
    pub selected: Vec<SelectedVariable>,
}

impl FitReport {
    fn from_fit(f: &SpecificationFit) -> Result<Self> {
        let selected = f
            .fit
            .names
            .iter()
            .zip(&f.fit.coefficients)
            .filter_map(|(name, c)| Sign::of(*c).map(|s| (name, *c, s)))
            .map(|(name, coefficient, sign)| {
                let key: MetricKey = name.parse()?;
                Ok(SelectedVariable {
                    level: key.level,
                    variable: key.name,
                    sign,
                    coefficient,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            specification: f.specification,
            dependent: f.dependent.clone(),
            alpha: f.alpha,
            lambda: f.fit.lambda,
            intercept: f.fit.intercept,
            candidates: f.fit.names.len(),
            dropped_constant: f.dropped_constant.clone(),
            selected,
        })
    }

    pub fn sign_of(&self, level: Level, variable: &str) -> Option<Sign> {
        self.selected
            .iter()
            .find(|s| s.level == level && s.variable == variable)
            .map(|s| s.sign)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub names: Vec<String>,
    pub values: Vec<Vec<Option<f64>>>,
    pub zero_variance: Vec<String>,
}

impl From<CorrelationMatrix<f64>> for CorrelationReport {
    fn from(c: CorrelationMatrix<f64>) -> Self {
        Self {
            names: c.names,
            values: c.values,
            zero_variance: c.zero_variance,
        }
    }
}

/// Everything `report.json` holds. It depends only on the metric table, the targets and
/// the configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub firms: Vec<String>,
    pub dependent_variables: Vec<String>,
    pub alphas: Vec<f64>,
    pub fits: Vec<FitReport>,
    /// Keyed by dependent variable; primary alpha only.
    pub hypotheses: BTreeMap<String, Hypothesis>,
    pub correlation: CorrelationReport,
    pub assumptions: Vec<String>,
}

impl RunReport {
    pub fn fit(&self, spec: Specification, dependent: &str, alpha: f64) -> Option<&FitReport> {
        self.fits
            .iter()
            .find(|f| f.specification == spec && f.dependent == dependent && f.alpha == alpha)
    }
}

/// Builds the report from the metric table and targets.
pub fn build_report(
    cfg: &PipelineConfig,
    table: &MetricTable<f64>,
    targets: &TargetTable,
) -> Result<(RunReport, Vec<SpecificationFit>)> {
    let fits = fit_specifications(cfg, table, targets)?;
    let mut assumptions = cfg.assumption_log();
    let dropped: BTreeSet<&String> = fits.iter().flat_map(|f| &f.dropped_constant).collect();
    if !dropped.is_empty() {
        assumptions.push(format!(
            "constant columns dropped: {}",
            dropped.into_iter().cloned().collect::<Vec<_>>().join(", ")
        ));
    }
    for f in fits.iter().filter(|f| f.fit.cv.is_none()) {
        assumptions.push(format!(
            "alpha {}, {}, {}: response uncorrelated with every column, empty model reported",
            f.alpha, f.specification, f.dependent
        ));
    }
    let report = RunReport {
        firms: table.firms().to_vec(),
        dependent_variables: targets.names.clone(),
        alphas: cfg.regression.alphas.clone(),
        fits: fits.iter().map(FitReport::from_fit).collect::<Result<_>>()?,
        hypotheses: hypothesis_summary(&fits, cfg.regression.primary_alpha()),
        correlation: correlation_matrix(table)?.into(),
        assumptions,
    };
    Ok((report, fits))
}

fn alpha_suffix(alpha: f64, primary: f64) -> String {
    if alpha == primary {
        String::new()
    } else {
        format!("_alpha{alpha}")
    }
}

/// `table_<spec>.csv` per specification and alpha: rows are variables selected for at least
/// one dependent variable, cells are `+`, `-` or blank.
pub fn emit_tables(report: &RunReport, out: &mut OutputDir) -> Result<()> {
    let primary = report.alphas[0];
    for &alpha in &report.alphas {
        for spec in Specification::ALL {
            let fits: Vec<Option<&FitReport>> = report
                .dependent_variables
                .iter()
                .map(|d| report.fit(spec, d, alpha))
                .collect();
            let rows: BTreeSet<MetricKey> = fits
                .iter()
                .flatten()
                .flat_map(|f| &f.selected)
                .map(|s| MetricKey::new(s.level, s.variable.clone()))
                .collect();
            let name = format!("table_{spec}{}.csv", alpha_suffix(alpha, primary));
            out.write(&name, |w| {
                let mut c = csv::Writer::from_writer(w);
                let mut header = vec!["variable".to_string(), "level".to_string()];
                header.extend(report.dependent_variables.iter().cloned());
                c.write_record(&header)?;
                for key in &rows {
                    let mut rec = vec![key.name.clone(), key.level.tag().to_string()];
                    rec.extend(fits.iter().map(|f| {
                        f.and_then(|f| f.sign_of(key.level, &key.name))
                            .map(|s| s.symbol().to_string())
                            .unwrap_or_default()
                    }));
                    c.write_record(&rec)?;
                }
                c.flush()?;
                Ok(())
            })?;
        }
    }
    Ok(())
}

fn regress_stage(cfg: &PipelineConfig, out: &mut OutputDir) -> Result<RunReport> {
    let run = |out: &mut OutputDir| -> Result<RunReport> {
        let table = MetricTable::<f64>::read_csv(out.open(METRICS_FILE)?)?;
        let targets = TargetTable::read_csv(out.open(TARGETS_FILE)?)?;
        let (report, fits) = build_report(cfg, &table, &targets)?;
        let primary = cfg.regression.primary_alpha();
        for f in &fits {
            let stem = format!(
                "{}_{}{}",
                f.specification,
                f.dependent,
                alpha_suffix(f.alpha, primary)
            );
            out.write(&format!("fit_{stem}.csv"), |w| f.fit.write_report_csv(w))?;
            if let Some(cv) = &f.fit.cv {
                out.write(&format!("cv_{stem}.csv"), |w| cv.write_csv(w))?;
            }
        }
        emit_tables(&report, out)?;
        out.write(REPORT_FILE, |w| {
            serde_json::to_writer_pretty(&mut *w, &report)?;
            writeln!(w)?;
            Ok(())
        })?;
        for (dep, h) in &report.hypotheses {
            log::info!("{dep}: {h}");
        }
        Ok(report)
    };
    run(out).map_err(|e| e.in_stage("elastic_net"))
}

/// Pipeline entry points; `Run` chains the others.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Network,
    Communities,
    Metrics,
    Targets,
    Regress,
    Run,
}

/// Runs one stage under the output-directory lock. Files written by a failing invocation
/// are removed. Returns the report for `Regress` and `Run`.
pub fn run_stage(cfg: &PipelineConfig, stage: Stage) -> Result<Option<RunReport>> {
    cfg.validate()?;
    let mut out = OutputDir::acquire(&cfg.paths.output_dir)?;
    let result = (|| -> Result<Option<RunReport>> {
        match stage {
            Stage::Network => network_stage(cfg, &mut out).map(|_| None),
            Stage::Communities => communities_stage(cfg, &mut out).map(|_| None),
            Stage::Metrics => metrics_stage(cfg, &mut out).map(|_| None),
            Stage::Targets => targets_stage(cfg, &mut out).map(|_| None),
            Stage::Regress => regress_stage(cfg, &mut out).map(Some),
            Stage::Run => {
                network_stage(cfg, &mut out)?;
                communities_stage(cfg, &mut out)?;
                metrics_stage(cfg, &mut out)?;
                targets_stage(cfg, &mut out)?;
                regress_stage(cfg, &mut out).map(Some)
            }
        }
    })();
    if result.is_err() {
        out.discard();
    }
    result
}

/// All stages in order.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunReport> {
    Ok(run_stage(cfg, Stage::Run)?.expect("run stage returns a report"))
}
