use super::*;
use crate::filterbank::{make_checkerboards, make_uniform};
use crate::rng::stream;
use rand::Rng as _;

fn stump(feature: FeatureIndex, threshold: f32) -> Tree {
    Tree::new(vec![
        Node::Split {
            feature,
            threshold,
            left: 1,
            right: 2,
        },
        Node::Leaf { value: -1.0 },
        Node::Leaf { value: 1.0 },
    ])
    .unwrap()
}

#[test]
fn separable_stump_has_zero_error() {
    let xs: Vec<f32> = (0..40).map(|i| i as f32 / 39.0).collect();
    let rows: Vec<Vec<f32>> = xs.iter().map(|&x| vec![x]).collect();
    let labels: Vec<bool> = xs.iter().map(|&x| x > 0.5).collect();
    let data = QuantizedData::from_rows(&rows, labels.clone()).unwrap();
    let fit = fit_tree(&data, &vec![1.0 / 40.0; 40], 1, Variant::Discrete).unwrap();
    assert_eq!(fit.error, 0.0);
    let (_, thr) = fit.tree.splits().next().unwrap();
    let max_neg = xs.iter().zip(&labels).filter(|(_, &l)| !l).map(|(&x, _)| x).fold(f32::MIN, f32::max);
    let min_pos = xs.iter().zip(&labels).filter(|(_, &l)| l).map(|(&x, _)| x).fold(f32::MAX, f32::min);
    assert!(thr > max_neg && thr <= min_pos, "{max_neg} < {thr} <= {min_pos}");
}

fn xor_data() -> (Vec<Vec<f32>>, Vec<bool>) {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (a, b) in [(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)] {
        for _ in 0..5 {
            rows.push(vec![a, b]);
            labels.push((a > 0.5) != (b > 0.5));
        }
    }
    (rows, labels)
}

#[test]
fn xor_needs_depth_two() {
    let (rows, labels) = xor_data();
    let data = QuantizedData::from_rows(&rows, labels).unwrap();
    let w = vec![1.0 / 20.0; 20];
    assert!(fit_tree(&data, &w, 1, Variant::Discrete).unwrap().error > 0.4);
    let deep = fit_tree(&data, &w, 2, Variant::Discrete).unwrap();
    assert_eq!(deep.error, 0.0);
    assert_eq!(deep.tree.num_splits(), 3);
}

#[test]
fn single_tree_forest_scores_weight_times_leaf() {
    let f = FeatureIndex::new(0, 0, 0, 0);
    let forest = BoostedForest::new(Variant::Discrete, (6, 6), vec![stump(f, 0.5)], vec![0.7]).unwrap();
    assert_eq!(forest.score_with(|_| 0.9), 0.7);
    assert_eq!(forest.score_with(|_| 0.1), -0.7);
    let empty = BoostedForest::new(Variant::Discrete, (6, 6), vec![], vec![]).unwrap();
    assert_eq!(empty.score_with(|_| 0.0), 0.0);
}

#[test]
fn real_boost_leaves_are_finite_and_loss_decreases() {
    let mut rng = stream(3, "forest-test", 0);
    let rows: Vec<Vec<f32>> = (0..300).map(|_| (0..5).map(|_| rng.random::<f32>()).collect()).collect();
    let labels: Vec<bool> = rows.iter().map(|r| r[0] + 0.3 * r[1] > 0.6 + 0.2 * rng.random::<f32>()).collect();
    let data = QuantizedData::from_rows(&rows, labels).unwrap();
    for variant in [Variant::Discrete, Variant::Real] {
        let (ens, trace) = boost(&data, &BoostOptions { n_trees: 40, depth: 2, variant }).unwrap();
        assert!(ens.trees.iter().all(|t| t.nodes().iter().all(|n| match n {
            Node::Leaf { value } => value.is_finite(),
            _ => true,
        })));
        let mut prev = 300.0;
        for &l in &trace.losses {
            assert!(l <= prev * (1.0 + 1e-12), "{variant}: {l} > {prev}");
            prev = l;
        }
    }
}

#[test]
fn monotone_transform_keeps_structure() {
    let mut rng = stream(4, "forest-test", 1);
    let rows: Vec<Vec<f32>> = (0..200).map(|_| (0..6).map(|_| rng.random_range(0..256) as f32).collect()).collect();
    let labels: Vec<bool> = (0..200).map(|_| rng.random_bool(0.4)).collect();
    // affine maps with dyadic coefficients move bin edges exactly
    let moved: Vec<Vec<f32>> = rows.iter().map(|r| r.iter().map(|v| 4.0 * v - 512.0).collect()).collect();
    let a = QuantizedData::from_rows(&rows, labels.clone()).unwrap();
    let b = QuantizedData::from_rows(&moved, labels).unwrap();
    let w = vec![1.0 / 200.0; 200];
    let ta = fit_tree(&a, &w, 3, Variant::Discrete).unwrap().tree;
    let tb = fit_tree(&b, &w, 3, Variant::Discrete).unwrap().tree;
    let feats = |t: &Tree| t.splits().map(|(f, _)| f).collect::<Vec<_>>();
    assert_eq!(feats(&ta), feats(&tb));
    for (x, y) in ta.splits().zip(tb.splits()) {
        assert_eq!(4.0 * x.1 - 512.0, y.1);
    }
}

fn toy_model() -> Model {
    let bank = make_checkerboards(2, 2, 6, 6).unwrap();
    let g = crate::geometry::WindowGeometry {
        window_w: 12,
        window_h: 24,
        ..Default::default()
    };
    let t1 = stump(FeatureIndex::new(3, 6, 0, 2), 0.25);
    let t2 = Tree::new(vec![
        Node::Split {
            feature: FeatureIndex::new(0, 0, 1, 3),
            threshold: -1.5e-7,
            left: 1,
            right: 4,
        },
        Node::Split {
            feature: FeatureIndex::new(9, 2, 0, 0),
            threshold: 3.0,
            left: 2,
            right: 3,
        },
        Node::Leaf { value: -1.0 },
        Node::Leaf { value: 1.0 },
        Node::Leaf { value: 1.0 },
    ])
    .unwrap();
    let forest = BoostedForest::new(Variant::Discrete, (12, 24), vec![t1, t2], vec![0.123456789012, 1.5]).unwrap();
    Model::new(bank, Default::default(), g, forest).unwrap()
}

#[test]
fn model_file_round_trip() {
    let m = toy_model();
    let text = write_model(&m, &["seed 1".into()]);
    let back = parse_model(&text, "m").unwrap();
    assert_eq!(back, m);
    assert_eq!(write_model(&back, &["seed 1".into()]), text);
}

#[test]
fn invalid_split_features_are_rejected() {
    let bank = make_uniform(6, 6).unwrap();
    let forest = BoostedForest::new(Variant::Real, (12, 24), vec![stump(FeatureIndex::new(0, 0, 2, 0), 0.0)], vec![1.0]).unwrap();
    let g = crate::geometry::WindowGeometry {
        window_w: 12,
        window_h: 24,
        ..Default::default()
    };
    assert!(Model::new(bank, Default::default(), g, forest).is_err());
}

#[test]
fn usage_counts_and_influence() {
    let m = toy_model();
    let usage = filter_usage(&m.forest, &m.bank).unwrap();
    assert_eq!(usage.total(), m.forest.num_splits());
    assert_eq!(usage.per_channel[3][6], 1);
    let maps = spatial_influence(&m.forest, &m.bank).unwrap();
    let expected: usize = m
        .forest
        .trees()
        .iter()
        .flat_map(|t| t.splits())
        .map(|(f, _)| m.bank.filters_for(f.channel as usize)[f.filter as usize].nonzero_cells() * 36)
        .sum();
    assert_eq!(maps.total.data.iter().sum::<f32>() as usize, expected);
    let reduced = reduce_bank(&m.forest, &m.bank, 2, ReduceMode::AcrossChannels).unwrap();
    assert_eq!(reduced.num_filters(), 2);
    assert_eq!(reduced.all_filters()[0].id(), "c2x2");
}
