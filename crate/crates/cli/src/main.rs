use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use spillnet::elastic_net::LambdaRule;
use spillnet::pipeline::{PipelineConfig, Stage};

/// Spillover networks, multilevel topological metrics and crisis-vulnerability regressions.
#[derive(Parser)]
#[command(name = "spillnet", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Filter the panel and estimate the pre-crisis network snapshots.
    Network(Common),
    /// Louvain communities of the reference network.
    Communities(Common),
    /// Multilevel metric table and its correlation matrix.
    Metrics(Common),
    /// Crisis cumulative returns and drawdowns.
    Targets(Common),
    /// Elastic Net specifications, tables and report from persisted metrics and targets.
    Regress(Common),
    /// Every stage in order.
    Run(Common),
}

#[derive(Args)]
struct Common {
    /// JSON configuration file.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    prices: Option<PathBuf>,
    #[arg(long)]
    target_prices: Option<PathBuf>,
    #[arg(long)]
    sectors: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    min_consecutive: Option<usize>,
    /// Returns per network window.
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    step: Option<usize>,
    #[arg(long)]
    lag: Option<usize>,
    #[arg(long)]
    significance: Option<f64>,
    /// Benjamini-Hochberg control of the edge tests.
    #[arg(long)]
    fdr: Option<bool>,
    #[arg(long)]
    louvain_seed: Option<u64>,
    #[arg(long)]
    resolution: Option<f64>,
    /// Hop limit of the reach metrics.
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    katz_attenuation: Option<f64>,
    /// Comma-separated mixing parameters; the first is primary.
    #[arg(long, value_delimiter = ',')]
    alphas: Option<Vec<f64>>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// `min` or `one-se`.
    #[arg(long, value_parser = parse_rule)]
    rule: Option<LambdaRule>,
}

fn parse_rule(s: &str) -> Result<LambdaRule, String> {
    match s {
        "min" => Ok(LambdaRule::Min),
        "one-se" => Ok(LambdaRule::OneSe),
        _ => Err(format!("unknown rule {s:?}; expected min or one-se")),
    }
}

impl Common {
    fn config(&self) -> spillnet::Result<PipelineConfig> {
        let mut cfg = PipelineConfig::load(&self.config)?;
        macro_rules! set {
            ($src:ident => $($dst:tt)+) => {
                if let Some(v) = self.$src.clone() {
                    cfg.$($dst)+ = v;
                }
            };
        }
        set!(prices => paths.prices);
        set!(sectors => paths.sectors);
        set!(output_dir => paths.output_dir);
        if let Some(p) = self.target_prices.clone() {
            cfg.paths.target_prices = Some(p);
        }
        set!(min_consecutive => sample.min_consecutive);
        set!(window => network.window);
        set!(step => network.step);
        set!(lag => network.lag);
        set!(significance => network.significance);
        set!(fdr => network.fdr);
        set!(louvain_seed => communities.seed);
        set!(resolution => communities.resolution);
        set!(m => metrics.m);
        set!(katz_attenuation => metrics.katz_attenuation);
        set!(alphas => regression.alphas);
        set!(folds => regression.folds);
        set!(seed => regression.seed);
        set!(rule => regression.rule);
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let (stage, common) = match &cli.command {
        Command::Network(c) => (Stage::Network, c),
        Command::Communities(c) => (Stage::Communities, c),
        Command::Metrics(c) => (Stage::Metrics, c),
        Command::Targets(c) => (Stage::Targets, c),
        Command::Regress(c) => (Stage::Regress, c),
        Command::Run(c) => (Stage::Run, c),
    };
    let result = common.config().and_then(|cfg| spillnet::pipeline::run_stage(&cfg, stage));
    match result {
        Ok(report) => {
            if let Some(r) = report {
                for (dep, h) in &r.hypotheses {
                    println!("{dep}\t{h}");
                }
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.kind().exit_code() as u8)
        }
    }
}
