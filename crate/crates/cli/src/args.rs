use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use xalign::{default_lambda_grid, Direction, Metric};

#[derive(Parser, Debug)]
#[command(name = "xalign", version, about = "Measure alignment between embedding spaces")]
pub struct Cli {
    /// Worker threads; output does not depend on this.
    #[arg(long, global = true, env = "XALIGN_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Score one embedding pair.
    Align(AlignArgs),
    /// Score every x layer against every y layer.
    LayerGrid(ConfigArgs),
    /// Paired t-tests between groups or variants across model pairs.
    Contrast(ConfigArgs),
    /// Score against the mean of the first k exemplars for k = 1..k_max.
    Aggregate(ConfigArgs),
    /// Compare matched scores to scores under shuffled pairings.
    Baseline(ConfigArgs),
    /// Write a synthetic shared-latent dataset.
    Synth(SynthArgs),
    /// Print EMB1 headers.
    Inspect(InspectArgs),
    /// Re-run an experiment from its run_record.json.
    Replay(ReplayArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum DirectionArg {
    Xy,
    Yx,
    Both,
}

impl DirectionArg {
    pub fn directions(self) -> Vec<Direction> {
        match self {
            DirectionArg::Xy => vec![Direction::XToY],
            DirectionArg::Yx => vec![Direction::YToX],
            DirectionArg::Both => vec![Direction::XToY, Direction::YToX],
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum MetricArg {
    Linpred,
    Cka,
}

impl From<MetricArg> for Metric {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::Linpred => Metric::LinearPredictivity,
            MetricArg::Cka => Metric::Cka,
        }
    }
}

/// Settings that override whatever the config (or the defaults) say.
#[derive(Args, Debug, Default)]
pub struct Overrides {
    #[arg(long, value_enum)]
    pub direction: Option<DirectionArg>,
    #[arg(long, value_enum)]
    pub metric: Option<MetricArg>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// `default`, a comma list like `0.1,1,10`, or `LO:HI:N` for N
    /// log-spaced values.
    #[arg(long, value_parser = parse_lambda_grid)]
    pub lambda_grid: Option<LambdaGrid>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct AlignArgs {
    #[arg(long)]
    pub x: PathBuf,
    #[arg(long)]
    pub y: PathBuf,
    /// Label for the pair in the output.
    #[arg(long, default_value = "pair")]
    pub name: String,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Args, Debug)]
pub struct ConfigArgs {
    /// Experiment config (TOML).
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write an SVG figure (layer grids and aggregation curves).
    #[arg(long)]
    pub svg: bool,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Base settings (TOML); flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub n_items: Option<usize>,
    #[arg(long)]
    pub latent_dim: Option<usize>,
    #[arg(long)]
    pub d_vision: Option<usize>,
    #[arg(long)]
    pub d_language: Option<usize>,
    /// Noise sigma for both modalities.
    #[arg(long)]
    pub noise: Option<f64>,
    /// Shared fraction per layer, e.g. `0.2,0.5,0.9`.
    #[arg(long, value_delimiter = ',')]
    pub shared_fraction: Option<Vec<f64>>,
    /// Caption exemplars per item.
    #[arg(long)]
    pub captions: Option<usize>,
    /// Image exemplars per item.
    #[arg(long)]
    pub images: Option<usize>,
    #[arg(long)]
    pub preferred_noise_scale: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct InspectArgs {
    #[arg(required = true)]
    pub files: Vec<PathBuf>,
    /// Print the full header as JSON, item ids included.
    #[arg(long)]
    pub json: bool,
}

#[derive(Args, Debug)]
pub struct ReplayArgs {
    pub record: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LambdaGrid(pub Vec<f64>);

pub fn parse_lambda_grid(s: &str) -> Result<LambdaGrid, String> {
    let s = s.trim();
    if s == "default" {
        return Ok(LambdaGrid(default_lambda_grid()));
    }
    let num = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}"));
    let values = if s.contains(':') {
        let parts: Vec<&str> = s.split(':').collect();
        let [lo, hi, n] = parts[..] else {
            return Err("log grid must be LO:HI:N".into());
        };
        let (lo, hi) = (num(lo)?, num(hi)?);
        let n: usize = n.trim().parse().map_err(|e| format!("{n:?}: {e}"))?;
        if !(lo > 0.0 && hi >= lo && n >= 1) {
            return Err("log grid needs 0 < LO <= HI and N >= 1".into());
        }
        if n == 1 {
            vec![lo]
        } else {
            let (a, b) = (lo.log10(), hi.log10());
            (0..n)
                .map(|i| 10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64))
                .collect()
        }
    } else {
        s.split(',').map(num).collect::<Result<Vec<_>, _>>()?
    };
    if values.is_empty() || values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err("lambda values must be positive and finite".into());
    }
    Ok(LambdaGrid(values))
}
