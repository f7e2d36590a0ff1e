mod args;
mod svg;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;
use xalign::experiments::{
    self, csv_max_abs_diff, write_run, ExperimentKind, ExperimentOutput, ExperimentSpec, ModelPair,
    RunRecord,
};
use xalign::synth::{generate, SynthConfig};
use xalign::{read_header, Error};

use args::{AlignArgs, Cli, Command, ConfigArgs, InspectArgs, Overrides, ReplayArgs, SynthArgs};

/// Replayed numbers must match the originals to this tolerance.
const REPLAY_TOLERANCE: f64 = 1e-12;

enum Failure {
    Usage(String),
    Core(Error),
    Mismatch(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) | Failure::Core(Error::Config(_)) => 2,
            Failure::Core(Error::Numeric(_)) => 4,
            Failure::Core(_) => 3,
            Failure::Mismatch(_) => 1,
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Usage(m) | Failure::Mismatch(m) => m.clone(),
            Failure::Core(e) => e.to_string(),
        }
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot set up {n} worker threads: {e}");
            return ExitCode::from(2);
        }
    }
    let outcome = match cli.command {
        Command::Align(a) => cmd_align(a),
        Command::LayerGrid(a) => cmd_config(a, ExperimentKind::LayerGrid),
        Command::Contrast(a) => cmd_config(a, ExperimentKind::GroupContrast),
        Command::Aggregate(a) => cmd_config(a, ExperimentKind::AggregationCurve),
        Command::Baseline(a) => cmd_config(a, ExperimentKind::ShuffledBaseline),
        Command::Synth(a) => cmd_synth(a),
        Command::Inspect(a) => cmd_inspect(a),
        Command::Replay(a) => cmd_replay(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.exit_code())
        }
    }
}

fn absolute(path: &Path) -> Result<PathBuf, Failure> {
    std::path::absolute(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn apply_overrides(spec: &mut ExperimentSpec, o: Overrides) -> Outcome {
    if let Some(d) = o.direction {
        spec.directions = d.directions();
    }
    if let Some(m) = o.metric {
        spec.metric = m.into();
    }
    if let Some(f) = o.folds {
        spec.folds = f;
    }
    if let Some(s) = o.seed {
        spec.seed = s;
    }
    if let Some(g) = o.lambda_grid {
        spec.lambda_grid = g.0;
    }
    if let Some(m) = o.manifest {
        spec.manifest = Some(absolute(&m)?);
    }
    Ok(())
}

fn cmd_align(a: AlignArgs) -> Outcome {
    let mut spec = ExperimentSpec::new(ExperimentKind::Align);
    spec.pairs.push(ModelPair {
        name: a.name,
        x: Some(absolute(&a.x)?),
        y: Some(absolute(&a.y)?),
        ..Default::default()
    });
    apply_overrides(&mut spec, a.overrides)?;
    execute(&spec, &a.out, false)
}

fn cmd_config(a: ConfigArgs, expected: ExperimentKind) -> Outcome {
    let mut spec = ExperimentSpec::load(absolute(&a.config)?)?;
    if spec.kind != expected {
        return Err(Failure::Usage(format!(
            "{} describes a {} experiment, expected {}",
            a.config.display(),
            spec.kind.as_str(),
            expected.as_str()
        )));
    }
    apply_overrides(&mut spec, a.overrides)?;
    execute(&spec, &a.out, a.svg)
}

fn write_figures(output: &ExperimentOutput, dir: &Path) -> Result<Vec<PathBuf>, Failure> {
    let mut figures = Vec::new();
    let mut emit = |name: String, body: String| -> Outcome {
        let path = dir.join(name);
        std::fs::write(&path, body).map_err(|e| Failure::Core(Error::Io { path: path.clone(), source: e }))?;
        figures.push(path);
        Ok(())
    };
    match output {
        ExperimentOutput::LayerGrid(grids) => {
            for (i, g) in grids.iter().enumerate() {
                emit(format!("heatmap_{i}.svg"), svg::heatmap(g))?;
            }
        }
        ExperimentOutput::AggregationCurve(c) => emit("curve.svg".into(), svg::curve(c))?,
        _ => {}
    }
    Ok(figures)
}

fn prepare_out(out: &Path) -> Result<PathBuf, Failure> {
    std::fs::create_dir_all(out)
        .map_err(|e| Failure::Core(Error::Io { path: out.to_path_buf(), source: e }))?;
    absolute(out)
}

fn execute(spec: &ExperimentSpec, out: &Path, svg: bool) -> Outcome {
    let out = prepare_out(out)?;
    let mut record = RunRecord::begin(spec)?;
    let output = experiments::run(spec)?;
    let figures = if svg { write_figures(&output, &out)? } else { Vec::new() };
    let written = write_run(&out, &mut record, &output, &figures)?;
    print_table(&output);
    for p in written {
        eprintln!("wrote {}", p.display());
    }
    Ok(())
}

/// Tab-separated copy of the CSV table for a quick look.
fn print_table(output: &ExperimentOutput) {
    let (headers, rows) = output.table();
    println!("{}", headers.join("\t"));
    for r in rows {
        println!("{}", r.join("\t"));
    }
}

fn cmd_replay(a: ReplayArgs) -> Outcome {
    let original = RunRecord::load(&a.record)?;
    let out = prepare_out(&a.out)?;
    let output = experiments::replay(&original)?;
    let had_figures = original.outputs.iter().any(|p| p.extension().is_some_and(|e| e == "svg"));
    let figures = if had_figures { write_figures(&output, &out)? } else { Vec::new() };
    let mut record = RunRecord::begin(&original.spec)?;
    write_run(&out, &mut record, &output, &figures)?;

    let Some(old_csv) = original.outputs.iter().find(|p| p.ends_with("results.csv")) else {
        eprintln!("record lists no results.csv; nothing to compare");
        return Ok(());
    };
    let read = |p: &Path| {
        std::fs::read_to_string(p).map_err(|e| Failure::Core(Error::Io { path: p.to_path_buf(), source: e }))
    };
    let diff = csv_max_abs_diff(&read(old_csv)?, &read(&out.join("results.csv"))?)?;
    println!("max abs difference {diff:e}");
    if diff > REPLAY_TOLERANCE {
        return Err(Failure::Mismatch(format!(
            "replay differs from {} by {diff:e}",
            old_csv.display()
        )));
    }
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> Outcome {
    let mut cfg = match &a.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::Core(Error::Io { path: path.clone(), source: e }))?;
            toml::from_str::<SynthConfig>(&text)
                .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?
        }
        None => SynthConfig::default(),
    };
    macro_rules! set {
        ($($flag:ident => $field:ident),*) => {$(
            if let Some(v) = a.$flag.clone() { cfg.$field = v; }
        )*};
    }
    set!(n_items => n_items, latent_dim => latent_dim, d_vision => d_vision,
         d_language => d_language, noise => noise_vision, noise => noise_language,
         shared_fraction => shared_fraction, captions => exemplars_language,
         images => exemplars_vision, seed => seed);
    if a.preferred_noise_scale.is_some() {
        cfg.preferred_noise_scale = a.preferred_noise_scale;
    }
    let world = generate(&cfg)?;
    let files = world.write_to(&a.out)?;
    let cfg_path = a.out.join("synth.toml");
    let text = toml::to_string(&cfg).map_err(|e| Failure::Usage(e.to_string()))?;
    std::fs::write(&cfg_path, text).map_err(|e| Failure::Core(Error::Io { path: cfg_path, source: e }))?;
    println!("{}", serde_json::to_string_pretty(&files).expect("paths serialize"));
    Ok(())
}

fn cmd_inspect(a: InspectArgs) -> Outcome {
    for path in &a.files {
        let h = read_header(path)?;
        if a.json {
            println!("{}", serde_json::to_string(&h).expect("header serializes"));
            continue;
        }
        let name = |v: serde_json::Value| v.as_str().map(str::to_owned).unwrap_or_else(|| v.to_string());
        println!("{}", path.display());
        println!("  version   {}", h.version);
        println!("  dtype     {}", name(serde_json::to_value(h.dtype).expect("dtype serializes")));
        println!("  shape     {} x {}", h.rows, h.cols);
        println!("  model     {}", h.model_id);
        println!("  layer     {}", h.layer_index);
        println!("  modality  {}", name(serde_json::to_value(h.modality).expect("modality serializes")));
        println!("  variant   {}", if h.variant.is_empty() { "-" } else { &h.variant });
        let preview: Vec<&str> = h.item_ids.iter().take(3).map(String::as_str).collect();
        let more = if h.item_ids.len() > 3 { ", ..." } else { "" };
        println!("  items     {}{more}", preview.join(", "));
    }
    Ok(())
}
