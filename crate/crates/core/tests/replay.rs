use std::path::Path;

use xalign::experiments::*;
use xalign::synth::{generate, SynthConfig, SynthFiles};

fn synth_files(dir: &Path, layers: Vec<f64>, captions: usize) -> SynthFiles {
    generate(&SynthConfig {
        n_items: 90,
        latent_dim: 6,
        d_vision: 10,
        d_language: 8,
        shared_fraction: layers,
        exemplars_language: captions,
        seed: 3,
        ..Default::default()
    })
    .unwrap()
    .write_to(dir)
    .unwrap()
}

fn pair(files: &SynthFiles) -> ModelPair {
    ModelPair {
        name: "synth".into(),
        x: Some(files.vision[0].clone()),
        y: Some(files.language[0].clone()),
        ..Default::default()
    }
}

fn with_threads<T: Send>(n: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap().install(f)
}

#[test]
fn layer_grid_csv_has_one_row_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let files = synth_files(dir.path(), vec![0.2, 0.5, 0.9], 1);
    let mut spec = ExperimentSpec::new(ExperimentKind::LayerGrid);
    spec.manifest = Some(files.manifest.clone());
    spec.pairs.push(ModelPair {
        name: "synth".into(),
        x_layers: files.vision[..2].to_vec(),
        y_layers: files.language.clone(),
        ..Default::default()
    });
    let out = run(&spec).unwrap();
    let csv = out.to_csv_string().unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("# xalign-csv v1 layer_grid"));
    assert!(lines.next().unwrap().starts_with("pair,direction,metric"));
    assert_eq!(lines.count(), 12);
}

#[test]
fn every_kind_replays_exactly_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let files = synth_files(&dir.path().join("data"), vec![0.4, 0.8], 3);
    let mut specs = Vec::new();

    let mut align = ExperimentSpec::new(ExperimentKind::Align);
    align.manifest = Some(files.manifest.clone());
    align.pairs.push(pair(&files));
    align.seed = 17;
    specs.push(align.clone());

    let mut grid = ExperimentSpec::new(ExperimentKind::LayerGrid);
    grid.manifest = Some(files.manifest.clone());
    grid.pairs.push(ModelPair {
        name: "synth".into(),
        x_layers: files.vision.clone(),
        y_layers: files.language.clone(),
        ..Default::default()
    });
    specs.push(grid);

    let mut curve = align.clone();
    curve.kind = ExperimentKind::AggregationCurve;
    curve.aggregation = Some(AggregationParams {
        side: AggregateSide::Y,
        k_max: 3,
        on_deficient: DeficientPolicy::Error,
    });
    specs.push(curve.clone());

    let mut baseline = curve;
    baseline.kind = ExperimentKind::ShuffledBaseline;
    baseline.baseline = Some(BaselineParams {
        target: BaselineTarget::AggregationCurve,
        shuffles: 2,
    });
    specs.push(baseline);

    let mut contrast = align;
    contrast.kind = ExperimentKind::GroupContrast;
    contrast.pairs[0].variants.insert(
        "deep".into(),
        VariantFiles {
            x: Some(files.vision[1].clone()),
            y: None,
        },
    );
    contrast.contrast = Some(ContrastParams {
        groups: None,
        variants: Some(vec!["deep".into()]),
        min_rows: 15,
        family_size: None,
    });
    specs.push(contrast);

    for (i, spec) in specs.iter().enumerate() {
        let mut record = RunRecord::begin(spec).unwrap();
        let out = with_threads(1, || run(spec).unwrap());
        let out_dir = dir.path().join(format!("run{i}"));
        let written = write_run(&out_dir, &mut record, &out, &[]).unwrap();
        assert_eq!(written.len(), 3);

        let loaded = RunRecord::load(out_dir.join("run_record.json")).unwrap();
        assert_eq!(loaded, record);
        let original = std::fs::read_to_string(out_dir.join("results.csv")).unwrap();
        for threads in [1, 3] {
            let again = with_threads(threads, || replay(&loaded).unwrap());
            let diff = csv_max_abs_diff(&original, &again.to_csv_string().unwrap()).unwrap();
            assert!(diff <= 1e-12, "{:?} with {threads} threads: {diff}", spec.kind);
        }
    }
}

#[test]
fn spec_survives_the_report_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let files = synth_files(dir.path(), vec![0.8], 1);
    let mut spec = ExperimentSpec::new(ExperimentKind::Align);
    spec.manifest = Some(files.manifest.clone());
    spec.pairs.push(pair(&files));
    let mut record = RunRecord::begin(&spec).unwrap();
    let out = run(&spec).unwrap();
    write_run(dir.path().join("out"), &mut record, &out, &[]).unwrap();
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/report.json")).unwrap())
            .unwrap();
    assert_eq!(report["output"]["kind"], "align");
    assert_eq!(report["record"]["spec"]["lambda_grid"].as_array().unwrap().len(), 17);
    assert_eq!(report["record"]["input_digests"].as_object().unwrap().len(), 3);
}

#[test]
fn replay_refuses_changed_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let files = synth_files(dir.path(), vec![0.8], 1);
    let mut spec = ExperimentSpec::new(ExperimentKind::Align);
    spec.manifest = Some(files.manifest.clone());
    spec.pairs.push(pair(&files));
    let record = RunRecord::begin(&spec).unwrap();
    record.verify().unwrap();

    let mut bytes = std::fs::read(&files.language[0]).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 1;
    std::fs::write(&files.language[0], bytes).unwrap();
    let err = replay(&record).unwrap_err();
    assert!(err.to_string().contains("changed since the run"), "{err}");

    let mut tampered = RunRecord::begin(&spec).unwrap();
    tampered.spec.seed += 1;
    assert!(tampered.verify().is_err());
}

#[test]
fn file_digest_is_sha256() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("abc.txt");
    std::fs::write(&path, "abc").unwrap();
    assert_eq!(
        file_digest(&path).unwrap(),
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
    );
}

#[test]
fn csv_diff_detects_structure_changes() {
    let a = "# x\nh,v\nr,1.0\n";
    assert_eq!(csv_max_abs_diff(a, a).unwrap(), 0.0);
    assert!((csv_max_abs_diff(a, "# x\nh,v\nr,1.5\n").unwrap() - 0.5).abs() < 1e-15);
    assert!(csv_max_abs_diff(a, "# x\nh,v\ns,1.0\n").is_err());
    assert!(csv_max_abs_diff(a, "# x\nh,v\n").is_err());
}
