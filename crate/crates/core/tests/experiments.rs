use std::collections::BTreeSet;

use faer::Mat;
use xalign::emb::{DatasetManifest, ManifestItem};
use xalign::experiments::*;
use xalign::synth::{generate, SynthConfig, SynthWorld};
use xalign::{align_rows, linear_predictivity, make_folds, Direction, Error, Metric, PairingPolicy};

fn world(seed: u64, n: usize, layers: Vec<f64>, captions: usize) -> SynthWorld {
    generate(&SynthConfig {
        n_items: n,
        latent_dim: 8,
        d_vision: 16,
        d_language: 12,
        shared_fraction: layers,
        exemplars_language: captions,
        seed,
        ..Default::default()
    })
    .unwrap()
}

fn pair_of(w: &SynthWorld, name: &str) -> PairInput {
    PairInput::new(name, w.vision[0].clone(), w.language[0].clone())
}

fn opts(metric: Metric) -> RunOptions {
    RunOptions {
        metric,
        ..Default::default()
    }
}

#[test]
fn layer_grid_counts_and_shares_items() {
    let w = world(1, 80, vec![0.2, 0.5, 0.9], 1);
    let grid = run_layer_grid_on(
        &w.vision[..2],
        &w.language,
        Some(&w.manifest),
        &opts(Metric::LinearPredictivity),
    )
    .unwrap();
    assert_eq!(grid.cells.len(), 12);
    assert_eq!(grid.x_layers, vec![0, 1]);
    assert_eq!(grid.y_layers, vec![0, 1, 2]);
    assert!(grid.cells.iter().all(|c| c.result.n_items == 80));
    let dirs: BTreeSet<Direction> = grid.cells.iter().map(|c| c.direction).collect();
    assert_eq!(dirs.len(), 2);
}

#[test]
fn cka_grid_of_a_model_with_itself_has_unit_diagonal() {
    let w = world(2, 50, vec![0.3, 0.6, 0.9], 1);
    let grid = run_layer_grid_on(&w.vision, &w.vision, None, &opts(Metric::Cka)).unwrap();
    for l in 0..3 {
        for d in [Direction::XToY, Direction::YToX] {
            assert!((grid.score(d, l, l).unwrap() - 1.0).abs() < 1e-10);
        }
    }
}

/// Even items keep their captions; odd items get the caption of the next odd
/// item, so group `mismatched` has no true correspondence.
fn half_mismatched(w: &SynthWorld) -> DatasetManifest {
    let n = w.vision[0].rows();
    let odd: Vec<usize> = (0..n).filter(|i| i % 2 == 1).collect();
    let mut items = Vec::new();
    for i in 0..n {
        let key = format!("p{i:05}");
        let (group, cap) = if i % 2 == 0 {
            ("matched", i)
        } else {
            let pos = odd.iter().position(|&o| o == i).unwrap();
            ("mismatched", odd[(pos + 1) % odd.len()])
        };
        items.push(ManifestItem::new(format!("img_{i:05}"), key.clone()).with_group(group));
        items.push(ManifestItem::new(format!("cap_{cap:05}_0"), key).with_group(group));
    }
    DatasetManifest::new("half", items).unwrap()
}

#[test]
fn mismatched_group_scores_lower() {
    let pairs: Vec<PairInput> = (0..3)
        .map(|s| pair_of(&world(10 + s, 200, vec![0.8], 1), &format!("m{s}")))
        .collect();
    let w = world(10, 200, vec![0.8], 1);
    let manifest = half_mismatched(&w);
    let mode = ContrastMode::Groups {
        a: "matched".into(),
        b: "mismatched".into(),
    };
    let report =
        run_group_contrast_on(&pairs, Some(&manifest), &mode, 15, None, &opts(Metric::LinearPredictivity))
            .unwrap();
    assert_eq!(report.entries.len(), 2);
    for e in &report.entries {
        assert_eq!(e.n_items_a, vec![100; 3]);
        assert!(e.scores_a.iter().zip(&e.scores_b).all(|(a, b)| a > b), "{e:?}");
        let s = e.stats.as_ref().unwrap();
        assert!(s.t > 0.0);
        assert_eq!(s.q, Some(s.p));
    }
}

#[test]
fn small_groups_are_rejected() {
    let w = world(3, 20, vec![0.8], 1);
    let manifest = half_mismatched(&w);
    let mode = ContrastMode::Groups {
        a: "matched".into(),
        b: "mismatched".into(),
    };
    let err = run_group_contrast_on(&[pair_of(&w, "p")], Some(&manifest), &mode, 15, None, &opts(Metric::Cka))
        .unwrap_err();
    assert!(err.to_string().contains("fewer than the minimum"), "{err}");
}

#[test]
fn preferred_items_align_better() {
    let pairs: Vec<PairInput> = (0..4)
        .map(|s| {
            let w = generate(&SynthConfig {
                n_items: 300,
                preferred_noise_scale: Some(0.3),
                seed: 40 + s,
                ..Default::default()
            })
            .unwrap();
            pair_of(&w, &format!("m{s}"))
        })
        .collect();
    // every seed labels the same item ids alike
    let manifest = generate(&SynthConfig {
        n_items: 300,
        preferred_noise_scale: Some(0.3),
        seed: 40,
        ..Default::default()
    })
    .unwrap()
    .manifest;
    let mode = ContrastMode::Groups {
        a: "preferred".into(),
        b: "non_preferred".into(),
    };
    let report =
        run_group_contrast_on(&pairs, Some(&manifest), &mode, 15, None, &opts(Metric::LinearPredictivity))
            .unwrap();
    for e in &report.entries {
        assert!(e.mean_a > e.mean_b, "{e:?}");
    }
}

#[test]
fn variant_family_gets_one_q_per_contrast() {
    let pairs: Vec<PairInput> = (0..3)
        .map(|s| {
            let w = world(20 + s, 60, vec![0.8], 1);
            let mut p = pair_of(&w, &format!("m{s}"));
            for (v, noise) in [("a", 0.5), ("b", 1.0), ("c", 2.0), ("d", 4.0)] {
                let x = &p.x;
                let noisy = Mat::from_fn(x.rows(), x.cols(), |i, j| {
                    x.data[(i, j)] + noise * (((i * 31 + j * 17 + s as usize) % 13) as f64 - 6.0) / 6.0
                });
                let mut vx = x.clone();
                vx.data = noisy;
                vx.variant = v.into();
                p.variants.insert(v.into(), VariantInput { x: Some(vx), y: None });
            }
            p
        })
        .collect();
    let mode = ContrastMode::Variants {
        names: vec!["a".into(), "b".into(), "c".into(), "d".into()],
    };
    let manifest = world(20, 60, vec![0.8], 1).manifest;
    let report =
        run_group_contrast_on(&pairs, Some(&manifest), &mode, 15, Some(4), &opts(Metric::Cka)).unwrap();
    assert_eq!(report.entries.len(), 8);
    for d in [Direction::XToY, Direction::YToX] {
        let qs: Vec<f64> = report
            .entries
            .iter()
            .filter(|e| e.direction == d)
            .filter_map(|e| e.stats.as_ref().and_then(|s| s.q))
            .collect();
        assert_eq!(qs.len(), 4);
    }
}

#[test]
fn mismatched_variant_rows_are_rejected() {
    let w = world(5, 30, vec![0.8], 1);
    let mut p = pair_of(&w, "p");
    let mut bad = p.y.clone();
    bad.item_ids[0] = "cap_elsewhere".into();
    p.variants.insert("bad".into(), VariantInput { x: None, y: Some(bad) });
    let mode = ContrastMode::Variants {
        names: vec!["bad".into()],
    };
    let err = run_group_contrast_on(&[p], Some(&w.manifest), &mode, 15, None, &opts(Metric::Cka))
        .unwrap_err();
    assert!(matches!(err, Error::MissingItems(_)), "{err}");
}

#[test]
fn curve_at_one_exemplar_equals_plain_predictivity() {
    let w = world(7, 120, vec![0.7], 4);
    let o = opts(Metric::LinearPredictivity);
    let curve =
        run_aggregation_curve_on(&[pair_of(&w, "p")], &w.manifest, AggregateSide::Y, 4, DeficientPolicy::Error, &o)
            .unwrap();
    let aligned = align_rows(
        &[w.vision[0].clone(), w.language[0].clone()],
        &w.manifest,
        PairingPolicy::OneToOne,
    )
    .unwrap();
    let plan = make_folds(120, 5, o.seed, Some(&aligned.pair_keys)).unwrap();
    let (x, y) = (&aligned.matrices[0].data, &aligned.matrices[1].data);
    let xy = linear_predictivity(x.as_ref(), y.as_ref(), &plan, &o.lambda_grid, o.seed).unwrap();
    let yx = linear_predictivity(y.as_ref(), x.as_ref(), &plan, &o.lambda_grid, o.seed).unwrap();
    let at = |d: Direction| curve.points.iter().find(|p| p.k == 1 && p.direction == d).unwrap();
    assert_eq!(at(Direction::XToY).score_mean.to_bits(), xy.score.to_bits());
    assert_eq!(at(Direction::YToX).score_mean.to_bits(), yx.score.to_bits());
    assert_eq!(at(Direction::XToY).score_stderr, None);
}

#[test]
fn duplicate_exemplars_give_a_flat_curve() {
    let w = world(8, 60, vec![0.7], 1);
    // five identical copies of each caption
    let lang = &w.language[0];
    let mut ids = Vec::new();
    let mut rows = Vec::new();
    let mut items = Vec::new();
    for i in 0..60 {
        items.push(ManifestItem::new(format!("img_{i:05}"), format!("p{i:05}")));
        for e in 0..5 {
            ids.push(format!("cap_{i:05}_{e}"));
            rows.push(i);
            items.push(ManifestItem::new(format!("cap_{i:05}_{e}"), format!("p{i:05}")).with_exemplar(e));
        }
    }
    let mut y = lang.clone();
    y.item_ids = ids;
    y.data = Mat::from_fn(300, lang.cols(), |r, j| lang.data[(rows[r], j)]);
    let manifest = DatasetManifest::new("dup", items).unwrap();
    let pair = PairInput::new("p", w.vision[0].clone(), y);
    let curve = run_aggregation_curve_on(
        &[pair],
        &manifest,
        AggregateSide::Y,
        5,
        DeficientPolicy::Error,
        &opts(Metric::LinearPredictivity),
    )
    .unwrap();
    for d in [Direction::XToY, Direction::YToX] {
        let s: Vec<f64> = curve.points.iter().filter(|p| p.direction == d).map(|p| p.score_mean).collect();
        assert!(s.iter().all(|v| v.to_bits() == s[0].to_bits()), "{s:?}");
    }
}

#[test]
fn deficient_keys_are_listed_or_dropped() {
    let w = world(9, 40, vec![0.7], 3);
    let mut items = w.manifest.items.clone();
    items.retain(|it| !(it.pair_key == "p00003" && it.exemplar_index == Some(2)));
    let manifest = DatasetManifest::new("deficient", items).unwrap();
    let mut y = w.language[0].clone();
    let keep: Vec<usize> = (0..y.rows()).filter(|&r| y.item_ids[r] != "cap_00003_2").collect();
    y.data = Mat::from_fn(keep.len(), y.cols(), |i, j| w.language[0].data[(keep[i], j)]);
    y.item_ids = keep.iter().map(|&r| w.language[0].item_ids[r].clone()).collect();
    let pair = PairInput::new("p", w.vision[0].clone(), y);
    let o = opts(Metric::Cka);
    let err = run_aggregation_curve_on(&[pair.clone()], &manifest, AggregateSide::Y, 3, DeficientPolicy::Error, &o)
        .unwrap_err();
    assert!(err.to_string().contains("p00003"), "{err}");
    let curve =
        run_aggregation_curve_on(&[pair], &manifest, AggregateSide::Y, 3, DeficientPolicy::Drop, &o).unwrap();
    assert_eq!(curve.dropped_keys, vec!["p00003".to_string()]);
    assert_eq!(curve.n_items, vec![39]);
}

#[test]
fn shuffled_self_prediction_collapses() {
    let w = world(11, 200, vec![0.8], 1);
    let mut y = w.vision[0].clone();
    y.modality = xalign::Modality::Language;
    y.item_ids = w.language[0].item_ids.clone();
    let pair = PairInput::new("self", w.vision[0].clone(), y);
    let report = run_shuffled_baseline_on(
        &[pair],
        Some(&w.manifest),
        BaselineTarget::Align,
        2,
        (AggregateSide::Y, 1, DeficientPolicy::Error),
        &opts(Metric::LinearPredictivity),
    )
    .unwrap();
    for e in &report.entries {
        assert!(e.matched > 0.999, "{e:?}");
        assert!(e.shuffled.abs() < 0.05, "{e:?}");
        assert_eq!(e.shuffled_runs.len(), 2);
    }
}

#[test]
fn shuffled_baseline_sits_at_chance_for_both_metrics() {
    let w = generate(&SynthConfig {
        n_items: 1000,
        seed: 12,
        ..Default::default()
    })
    .unwrap();
    for metric in [Metric::LinearPredictivity, Metric::Cka] {
        let report = run_shuffled_baseline_on(
            &[pair_of(&w, "p")],
            Some(&w.manifest),
            BaselineTarget::Align,
            1,
            (AggregateSide::Y, 1, DeficientPolicy::Error),
            &opts(metric),
        )
        .unwrap();
        for e in &report.entries {
            assert!(e.shuffled.abs() < 0.05, "{metric}: {e:?}");
            assert!(e.matched > 0.3, "{metric}: {e:?}");
        }
    }
}

#[test]
fn shuffled_baseline_without_manifest_permutes_rows() {
    let w = world(13, 100, vec![0.9], 1);
    let mut pair = pair_of(&w, "p");
    pair.y.item_ids = pair.x.item_ids.clone();
    let report = run_shuffled_baseline_on(
        &[pair],
        None,
        BaselineTarget::Align,
        1,
        (AggregateSide::Y, 1, DeficientPolicy::Error),
        &opts(Metric::LinearPredictivity),
    )
    .unwrap();
    assert!(report.entries.iter().all(|e| e.matched > e.shuffled + 0.3));
}

#[test]
fn unrelated_ids_need_a_manifest() {
    let w = world(16, 30, vec![0.8], 1);
    let err = run_align_on(&[pair_of(&w, "p")], None, &opts(Metric::Cka)).unwrap_err();
    assert!(err.to_string().contains("supply a manifest"), "{err}");
}

#[test]
fn align_report_is_ordered_by_pair_then_direction() {
    let w = world(14, 50, vec![0.8], 1);
    let pairs = vec![pair_of(&w, "a"), pair_of(&world(15, 50, vec![0.8], 1), "b")];
    let report = run_align_on(&pairs, Some(&w.manifest), &opts(Metric::Cka)).unwrap();
    let order: Vec<(String, Direction)> =
        report.rows.iter().map(|r| (r.pair.clone(), r.result.direction)).collect();
    assert_eq!(
        order,
        vec![
            ("a".into(), Direction::XToY),
            ("a".into(), Direction::YToX),
            ("b".into(), Direction::XToY),
            ("b".into(), Direction::YToX)
        ]
    );
}
