//! Fixtures, synthetic studies and brute-force reference implementations shared by the
//! integration tests and the acceptance runner.
#![allow(dead_code)]

pub mod oracles;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use spillnet::community::Partition;
use spillnet::panel::SectorMap;
use spillnet::pipeline::{Paths, PipelineConfig};
use spillnet::DirectedGraph;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut impl Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn labels(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("n{i}")).collect()
}

pub fn date(s: &str) -> NaiveDate {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
}

/// Erdos-Renyi digraph without self-loops.
pub fn random_digraph(rng: &mut impl Rng, n: usize, p: f64) -> DirectedGraph {
    let edges: Vec<(usize, usize)> = (0..n)
        .flat_map(|s| (0..n).map(move |t| (s, t)))
        .filter(|(s, t)| s != t)
        .filter(|_| rng.random::<f64>() < p)
        .collect();
    DirectedGraph::from_edges(labels(n), edges).unwrap()
}

pub fn random_partition(rng: &mut impl Rng, n: usize, k: usize) -> Partition {
    let raw: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
    Partition::from_assignment(labels(n), &raw).unwrap()
}

pub fn random_sectors(rng: &mut impl Rng, n: usize, k: usize) -> SectorMap {
    (0..n)
        .map(|i| (format!("n{i}"), format!("s{}", rng.random_range(0..k))))
        .collect()
}

/// Two communities: dense inside, sparse across. Returns the graph and the planted split.
pub fn two_community_digraph(rng: &mut impl Rng, n: usize) -> (DirectedGraph, Partition) {
    let split = n / 2;
    let side = |v: usize| usize::from(v >= split);
    let mut edges = Vec::new();
    for s in 0..n {
        for t in 0..n {
            if s == t {
                continue;
            }
            let p = if side(s) == side(t) { 0.5 } else { 0.05 };
            if rng.random::<f64>() < p {
                edges.push((s, t));
            }
        }
    }
    let g = DirectedGraph::from_edges(labels(n), edges).unwrap();
    let raw: Vec<usize> = (0..n).map(side).collect();
    (g, Partition::from_assignment(labels(n), &raw).unwrap())
}

/// Two `k`-cliques (both directions) joined by a single edge.
pub fn bridged_cliques(k: usize) -> DirectedGraph {
    let mut edges = Vec::new();
    for block in 0..2 {
        for a in 0..k {
            for b in 0..k {
                if a != b {
                    edges.push((block * k + a, block * k + b));
                }
            }
        }
    }
    edges.push((0, k));
    DirectedGraph::from_edges(labels(2 * k), edges).unwrap()
}

/// Bivariate series where `source` drives `target` at lag 1 with coefficient `b`.
pub fn lagged_pair(rng: &mut impl Rng, len: usize, b: f64) -> (Vec<f64>, Vec<f64>) {
    let x: Vec<f64> = (0..len).map(|_| normal(rng)).collect();
    let mut y = vec![0.0; len];
    for t in 0..len {
        y[t] = normal(rng) + if t > 0 { b * x[t - 1] } else { 0.0 };
    }
    (x, y)
}

/// Synthetic study written to a temporary directory.
pub struct PlantedStudy {
    pub dir: tempfile::TempDir,
    pub config: PipelineConfig,
    pub tickers: Vec<String>,
    /// Number of firms each firm drives in the data-generating process.
    pub true_out_degree: Vec<usize>,
    /// `(source, target)` ticker indices of the planted lag-1 links.
    pub true_edges: Vec<(usize, usize)>,
}

pub struct PlantedParams {
    pub firms: usize,
    /// Firms that drive a few hubs each.
    pub relays: usize,
    pub max_relay_degree: usize,
    /// Firms that drive a random subset of the remaining firms.
    pub hubs: usize,
    pub max_hub_degree: usize,
    /// Lag-1 loading of a driven firm on each of its hubs.
    pub loading: f64,
    pub monthly_vol: f64,
    /// Crisis daily drift: `base + slope * out_degree`.
    pub drift_base: f64,
    pub drift_slope: f64,
    pub daily_vol: f64,
}

impl Default for PlantedParams {
    fn default() -> Self {
        Self {
            firms: 46,
            relays: 10,
            max_relay_degree: 3,
            hubs: 16,
            max_hub_degree: 12,
            loading: 1.2,
            monthly_vol: 0.05,
            drift_base: -0.0025,
            drift_slope: 0.0004,
            daily_vol: 0.008,
        }
    }
}

fn month_ends(first_year: i32, first_month: u32, count: usize) -> Vec<NaiveDate> {
    (0..count)
        .map(|k| {
            let m0 = first_month as usize - 1 + k;
            let y = first_year + (m0 / 12) as i32;
            let m = (m0 % 12) as u32 + 1;
            let next = if m == 12 {
                NaiveDate::from_ymd_opt(y + 1, 1, 1)
            } else {
                NaiveDate::from_ymd_opt(y, m + 1, 1)
            }
            .unwrap();
            next - Duration::days(1)
        })
        .collect()
}

fn weekdays(start: NaiveDate, end: NaiveDate) -> Vec<NaiveDate> {
    start
        .iter_days()
        .take_while(|d| *d <= end)
        .filter(|d| !matches!(d.weekday(), Weekday::Sat | Weekday::Sun))
        .collect()
}

fn price_csv(dates: &[NaiveDate], tickers: &[String], log_returns: &[Vec<f64>]) -> String {
    let mut s = String::from("date");
    for t in tickers {
        write!(s, ",{t}").unwrap();
    }
    s.push('\n');
    let mut price = vec![100.0f64; tickers.len()];
    for (k, d) in dates.iter().enumerate() {
        write!(s, "{d}").unwrap();
        for (j, p) in price.iter_mut().enumerate() {
            if k > 0 {
                *p *= log_returns[k - 1][j].exp();
            }
            write!(s, ",{p}").unwrap();
        }
        s.push('\n');
    }
    s
}

/// Relays drive hubs and hubs drive leaves at lag 1 before the crisis; crisis-period daily
/// drift rises linearly with each firm's true out-degree.
pub fn planted_study(seed: u64, params: &PlantedParams) -> PlantedStudy {
    let mut rng = rng(seed);
    let n = params.firms;
    let tickers: Vec<String> = (0..n).map(|i| format!("F{i:02}")).collect();

    let mut drivers: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut out_degree = vec![0usize; n];
    let hubs: Vec<usize> = (params.relays..params.relays + params.hubs).collect();
    let mut leaves: Vec<usize> = (params.relays + params.hubs..n).collect();
    let mut plant = |sources: std::ops::Range<usize>, targets: &mut Vec<usize>, max: usize| {
        for s in sources {
            let k = rng.random_range(0..=max.min(targets.len()));
            targets.shuffle(&mut rng);
            for &t in &targets[..k] {
                drivers[t].push(s);
            }
            out_degree[s] = k;
        }
    };
    plant(0..params.relays, &mut hubs.clone(), params.max_relay_degree);
    plant(hubs[0]..hubs[0] + params.hubs, &mut leaves, params.max_hub_degree);

    // Monthly panel, January 2002 to December 2008.
    let months = month_ends(2002, 1, 84);
    let mut monthly: Vec<Vec<f64>> = Vec::with_capacity(months.len() - 1);
    for _ in 1..months.len() {
        let row: Vec<f64> = (0..n)
            .map(|i| {
                let own = params.monthly_vol * normal(&mut rng);
                let spill: f64 = match monthly.last() {
                    Some(prev) => drivers[i].iter().map(|&h| params.loading * prev[h]).sum(),
                    None => 0.0,
                };
                own + spill
            })
            .collect();
        monthly.push(row);
    }

    // Daily target panel, June 2007 to December 2008.
    let days = weekdays(date("2007-06-01"), date("2008-12-31"));
    let drift: Vec<f64> = out_degree
        .iter()
        .map(|&k| params.drift_base + params.drift_slope * k as f64)
        .collect();
    let daily: Vec<Vec<f64>> = (1..days.len())
        .map(|_| (0..n).map(|i| drift[i] + params.daily_vol * normal(&mut rng)).collect())
        .collect();

    let dir = tempfile::tempdir().unwrap();
    let path = |name: &str| dir.path().join(name);
    std::fs::write(path("prices.csv"), price_csv(&months, &tickers, &monthly)).unwrap();
    std::fs::write(path("daily.csv"), price_csv(&days, &tickers, &daily)).unwrap();
    let sectors = ["bank", "broker", "insurance", "real_estate"];
    let mut s = String::from("ticker,sector\n");
    for (i, t) in tickers.iter().enumerate() {
        writeln!(s, "{t},{}", sectors[i % sectors.len()]).unwrap();
    }
    std::fs::write(path("sectors.csv"), s).unwrap();

    let config = PipelineConfig::new(Paths {
        prices: path("prices.csv"),
        target_prices: Some(path("daily.csv")),
        sectors: path("sectors.csv"),
        output_dir: path("out"),
    });
    PlantedStudy {
        dir,
        config,
        tickers,
        true_out_degree: out_degree,
        true_edges: drivers
            .iter()
            .enumerate()
            .flat_map(|(t, ds)| ds.iter().map(move |&s| (s, t)))
            .collect(),
    }
}

impl PlantedStudy {
    pub fn with_output(&self, name: &str) -> PipelineConfig {
        let mut cfg = self.config.clone();
        cfg.paths.output_dir = self.dir.path().join(name);
        cfg
    }
}

/// Every regular file under `dir` with its bytes, sorted by name.
pub fn snapshot_dir(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut files: Vec<(PathBuf, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| {
            let bytes = std::fs::read(&p).unwrap();
            (PathBuf::from(p.file_name().unwrap()), bytes)
        })
        .collect();
    files.sort();
    files
}
