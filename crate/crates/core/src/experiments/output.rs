use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    align_inputs, run_aggregation_curve_on, run_group_contrast_on, run_layer_grid_on,
    run_shuffled_baseline_on, score_pair, AggregationCurve, BaselineReport, ContrastMode,
    ContrastReport, ExperimentKind, ExperimentSpec, LayerGrid, PairInput, RunOptions,
};
use crate::emb::{read_embeddings, DatasetManifest};
use crate::error::{Error, Result};
use crate::metrics::{AlignmentResult, Metric};

/// Bumped whenever a CSV column is added, removed or reinterpreted.
pub const CSV_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignRow {
    pub pair: String,
    pub x_model: String,
    pub x_layer: u32,
    pub y_model: String,
    pub y_layer: u32,
    pub result: AlignmentResult,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignReport {
    pub metric: Metric,
    /// Ordered by pair, then direction.
    pub rows: Vec<AlignRow>,
}

/// Plain alignment of each model pair in each configured direction.
pub fn run_align_on(
    pairs: &[PairInput],
    manifest: Option<&DatasetManifest>,
    opts: &RunOptions,
) -> Result<AlignReport> {
    opts.validate()?;
    let rows: Vec<Vec<AlignRow>> = pairs
        .par_iter()
        .map(|pair| {
            let aligned = align_inputs(&[pair.x.clone(), pair.y.clone()], manifest, opts.pairing)?;
            let plan = opts.fold_plan(&aligned.pair_keys)?;
            let (x, y) = (&aligned.matrices[0], &aligned.matrices[1]);
            opts.directions
                .par_iter()
                .map(|&d| {
                    Ok(AlignRow {
                        pair: pair.name.clone(),
                        x_model: x.model_id.clone(),
                        x_layer: x.layer_index,
                        y_model: y.model_id.clone(),
                        y_layer: y.layer_index,
                        result: score_pair(x.data.as_ref(), y.data.as_ref(), &plan, d, opts)?,
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(AlignReport {
        metric: opts.metric,
        rows: rows.into_iter().flatten().collect(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "result", rename_all = "snake_case")]
pub enum ExperimentOutput {
    Align(AlignReport),
    LayerGrid(Vec<LayerGrid>),
    GroupContrast(ContrastReport),
    AggregationCurve(AggregationCurve),
    ShuffledBaseline(BaselineReport),
}

fn num(x: f64) -> String {
    format!("{x}")
}

fn opt<T: ToString>(x: Option<T>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn joined(xs: &[f64]) -> String {
    xs.iter().map(|x| num(*x)).collect::<Vec<_>>().join(";")
}

impl ExperimentOutput {
    pub fn kind(&self) -> ExperimentKind {
        match self {
            ExperimentOutput::Align(_) => ExperimentKind::Align,
            ExperimentOutput::LayerGrid(_) => ExperimentKind::LayerGrid,
            ExperimentOutput::GroupContrast(_) => ExperimentKind::GroupContrast,
            ExperimentOutput::AggregationCurve(_) => ExperimentKind::AggregationCurve,
            ExperimentOutput::ShuffledBaseline(_) => ExperimentKind::ShuffledBaseline,
        }
    }

    /// Column names and one record per cell, point or contrast.
    pub fn table(&self) -> (Vec<&'static str>, Vec<Vec<String>>) {
        match self {
            ExperimentOutput::Align(r) => (
                vec![
                    "pair", "direction", "metric", "x_model", "x_layer", "y_model", "y_layer",
                    "n_items", "score", "fold_scores", "fold_lambdas",
                ],
                r.rows
                    .iter()
                    .map(|row| {
                        vec![
                            row.pair.clone(),
                            row.result.direction.to_string(),
                            row.result.metric.to_string(),
                            row.x_model.clone(),
                            row.x_layer.to_string(),
                            row.y_model.clone(),
                            row.y_layer.to_string(),
                            row.result.n_items.to_string(),
                            num(row.result.score),
                            joined(&row.result.per_fold_scores),
                            joined(&row.result.per_fold_lambda),
                        ]
                    })
                    .collect(),
            ),
            ExperimentOutput::LayerGrid(grids) => (
                vec![
                    "pair", "direction", "metric", "x_model", "x_layer", "y_model", "y_layer",
                    "n_items", "score",
                ],
                grids
                    .iter()
                    .flat_map(|g| {
                        g.cells.iter().map(move |c| {
                            vec![
                                g.pair.clone(),
                                c.direction.to_string(),
                                c.result.metric.to_string(),
                                g.x_model.clone(),
                                c.x_layer.to_string(),
                                g.y_model.clone(),
                                c.y_layer.to_string(),
                                g.n_items.to_string(),
                                num(c.result.score),
                            ]
                        })
                    })
                    .collect(),
            ),
            ExperimentOutput::GroupContrast(r) => (
                vec![
                    "contrast", "direction", "condition_a", "condition_b", "n_pairs", "mean_a",
                    "mean_b", "t", "df", "p", "q", "note",
                ],
                r.entries
                    .iter()
                    .map(|e| {
                        let s = e.stats.as_ref();
                        vec![
                            e.name.clone(),
                            e.direction.to_string(),
                            e.condition_a.clone(),
                            e.condition_b.clone(),
                            e.pairs.len().to_string(),
                            num(e.mean_a),
                            num(e.mean_b),
                            opt(s.map(|s| num(s.t))),
                            opt(s.map(|s| s.df)),
                            opt(s.map(|s| num(s.p))),
                            opt(s.and_then(|s| s.q).map(num)),
                            e.note.clone().unwrap_or_default(),
                        ]
                    })
                    .collect(),
            ),
            ExperimentOutput::AggregationCurve(c) => (
                vec!["direction", "k", "n_pairs", "score_mean", "score_stderr", "scores"],
                c.points
                    .iter()
                    .map(|p| {
                        vec![
                            p.direction.to_string(),
                            p.k.to_string(),
                            p.scores.len().to_string(),
                            num(p.score_mean),
                            opt(p.score_stderr.map(num)),
                            joined(&p.scores),
                        ]
                    })
                    .collect(),
            ),
            ExperimentOutput::ShuffledBaseline(r) => (
                vec!["pair", "direction", "k", "matched", "shuffled", "shuffled_runs"],
                r.entries
                    .iter()
                    .map(|e| {
                        vec![
                            e.pair.clone(),
                            e.direction.to_string(),
                            opt(e.k),
                            num(e.matched),
                            num(e.shuffled),
                            joined(&e.shuffled_runs),
                        ]
                    })
                    .collect(),
            ),
        }
    }

    /// CSV preceded by a `# xalign-csv v<N> <kind>` comment line.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let csv_err = |e: csv::Error| Error::Config(format!("writing csv: {e}"));
        writeln!(w, "# xalign-csv v{CSV_SCHEMA_VERSION} {}", self.kind().as_str())
            .map_err(|e| Error::io("<csv>", e))?;
        let mut out = csv::Writer::from_writer(w);
        let (header, rows) = self.table();
        out.write_record(&header).map_err(csv_err)?;
        for row in rows {
            out.write_record(&row).map_err(csv_err)?;
        }
        out.flush().map_err(|e| Error::io("<csv>", e))
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }
}

/// Largest absolute difference between numeric cells of two CSV outputs.
/// Fails if the tables differ in shape, headers or any non-numeric cell.
pub fn csv_max_abs_diff(a: &str, b: &str) -> Result<f64> {
    let parse = |text: &str| -> Result<Vec<Vec<String>>> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        reader
            .records()
            .map(|r| {
                r.map(|rec| rec.iter().map(str::to_owned).collect())
                    .map_err(|e| Error::Config(format!("reading csv: {e}")))
            })
            .collect()
    };
    let (ta, tb) = (parse(a)?, parse(b)?);
    let mismatch = || Error::Config("csv tables differ in structure".into());
    if ta.len() != tb.len() {
        return Err(mismatch());
    }
    let mut worst = 0.0f64;
    for (ra, rb) in ta.iter().zip(&tb) {
        if ra.len() != rb.len() {
            return Err(mismatch());
        }
        for (ca, cb) in ra.iter().zip(rb) {
            let pa: Vec<&str> = ca.split(';').collect();
            let pb: Vec<&str> = cb.split(';').collect();
            if pa.len() != pb.len() {
                return Err(mismatch());
            }
            for (x, y) in pa.iter().zip(&pb) {
                match (x.parse::<f64>(), y.parse::<f64>()) {
                    (Ok(x), Ok(y)) => {
                        if x.to_bits() != y.to_bits() {
                            worst = worst.max((x - y).abs());
                            if worst.is_nan() {
                                return Err(mismatch());
                            }
                        }
                    }
                    _ if x == y => {}
                    _ => return Err(mismatch()),
                }
            }
        }
    }
    Ok(worst)
}

/// Hex SHA-256 of a file's contents.
pub fn file_digest(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Everything needed to rerun an experiment and check that its inputs are
/// unchanged.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub tool_version: String,
    pub spec: ExperimentSpec,
    /// SHA-256 of the spec's canonical TOML form.
    pub spec_digest: String,
    /// Input path → SHA-256 of its contents.
    pub input_digests: BTreeMap<PathBuf, String>,
    pub started_unix: u64,
    pub finished_unix: Option<u64>,
    pub outputs: Vec<PathBuf>,
}

impl RunRecord {
    pub fn begin(spec: &ExperimentSpec) -> Result<Self> {
        let input_digests = spec
            .input_files()
            .into_iter()
            .map(|p| Ok((p.clone(), file_digest(&p)?)))
            .collect::<Result<_>>()?;
        Ok(RunRecord {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            spec: spec.clone(),
            spec_digest: hex::encode(Sha256::digest(spec.to_toml()?.as_bytes())),
            input_digests,
            started_unix: unix_now(),
            finished_unix: None,
            outputs: Vec::new(),
        })
    }

    pub fn finish(&mut self, outputs: Vec<PathBuf>) {
        self.finished_unix = Some(unix_now());
        self.outputs = outputs;
    }

    /// Fails if the spec or any input file changed since the record was made.
    pub fn verify(&self) -> Result<()> {
        let digest = hex::encode(Sha256::digest(self.spec.to_toml()?.as_bytes()));
        if digest != self.spec_digest {
            return Err(Error::StaleRecord("spec does not match its recorded digest".into()));
        }
        for (path, expected) in &self.input_digests {
            let actual = file_digest(path)?;
            if &actual != expected {
                return Err(Error::StaleRecord(format!(
                    "input {} changed since the run (sha256 {actual}, recorded {expected})",
                    path.display()
                )));
            }
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).expect("record serializes");
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

#[derive(Serialize)]
struct Report<'a> {
    schema: String,
    record: &'a RunRecord,
    output: &'a ExperimentOutput,
}

/// Writes `results.csv`, `report.json` and `run_record.json` into `dir` and
/// records their paths. Extra files (figures) can be passed in `extra`.
pub fn write_run(
    dir: impl AsRef<Path>,
    record: &mut RunRecord,
    output: &ExperimentOutput,
    extra: &[PathBuf],
) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csv_path = dir.join("results.csv");
    let report_path = dir.join("report.json");
    let record_path = dir.join("run_record.json");
    let mut outputs = vec![csv_path.clone(), report_path.clone(), record_path.clone()];
    outputs.extend_from_slice(extra);
    record.finish(outputs.clone());

    std::fs::write(&csv_path, output.to_csv_string()?).map_err(|e| Error::io(&csv_path, e))?;
    let report = Report {
        schema: format!("xalign-report v{CSV_SCHEMA_VERSION}"),
        record,
        output,
    };
    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    std::fs::write(&report_path, text + "\n").map_err(|e| Error::io(&report_path, e))?;
    record.save(&record_path)?;
    Ok(outputs)
}

/// Runs a file-driven experiment.
pub fn run(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    spec.validate()?;
    let opts = spec.options();
    let manifest = spec.load_manifest()?;
    let manifest = manifest.as_ref();
    match spec.kind {
        ExperimentKind::Align => {
            let pairs = spec.load_pairs()?;
            run_align_on(&pairs, manifest, &opts).map(ExperimentOutput::Align)
        }
        ExperimentKind::LayerGrid => {
            let mut grids = Vec::with_capacity(spec.pairs.len());
            for pair in &spec.pairs {
                let xs = pair.x_layers.iter().map(read_embeddings).collect::<Result<Vec<_>>>()?;
                let ys = pair.y_layers.iter().map(read_embeddings).collect::<Result<Vec<_>>>()?;
                let mut grid = run_layer_grid_on(&xs, &ys, manifest, &opts)?;
                grid.pair = pair.name.clone();
                grids.push(grid);
            }
            Ok(ExperimentOutput::LayerGrid(grids))
        }
        ExperimentKind::GroupContrast => {
            let params = spec.contrast.as_ref().expect("validated");
            let mode = match (&params.groups, &params.variants) {
                (Some(g), _) => ContrastMode::Groups {
                    a: g[0].clone(),
                    b: g[1].clone(),
                },
                (None, Some(v)) => ContrastMode::Variants { names: v.clone() },
                (None, None) => unreachable!("validated"),
            };
            let pairs = spec.load_pairs()?;
            run_group_contrast_on(&pairs, manifest, &mode, params.min_rows, params.family_size, &opts)
                .map(ExperimentOutput::GroupContrast)
        }
        ExperimentKind::AggregationCurve => {
            let params = spec.aggregation.as_ref().expect("validated");
            let pairs = spec.load_pairs()?;
            run_aggregation_curve_on(
                &pairs,
                manifest.expect("validated"),
                params.side,
                params.k_max,
                params.on_deficient,
                &opts,
            )
            .map(ExperimentOutput::AggregationCurve)
        }
        ExperimentKind::ShuffledBaseline => {
            let params = spec.baseline.clone().unwrap_or(super::BaselineParams {
                target: Default::default(),
                shuffles: 1,
            });
            let agg = spec
                .aggregation
                .as_ref()
                .map(|a| (a.side, a.k_max, a.on_deficient))
                .unwrap_or((Default::default(), 1, Default::default()));
            let pairs = spec.load_pairs()?;
            run_shuffled_baseline_on(&pairs, manifest, params.target, params.shuffles, agg, &opts)
                .map(ExperimentOutput::ShuffledBaseline)
        }
    }
}

/// Reruns a recorded experiment after checking its inputs are unchanged.
pub fn replay(record: &RunRecord) -> Result<ExperimentOutput> {
    record.verify()?;
    run(&record.spec)
}
