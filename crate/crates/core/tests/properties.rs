mod common;

use ids_core::dataset::{parse_reader, LabeledDataset, Split};
use ids_core::eval::{accuracy, class_metrics, confusion};
use ids_core::features::{compute_zero_ratios, select_features, FeatureSchema};
use ids_core::preprocess::{
    filter_outliers, fit_outlier_model, fit_vocabulary, one_hot, MAD_SCALE,
};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;

fn dataset(lines: &[String]) -> LabeledDataset {
    parse_reader(lines.join("\n").as_bytes(), "synthetic", Split::Train).unwrap()
}

fn fit_schema(ds: &LabeledDataset, k: f64) -> FeatureSchema {
    let vocab = fit_vocabulary(ds).unwrap();
    let outlier = fit_outlier_model(ds, MAD_SCALE, k).unwrap();
    let kept = filter_outliers(&outlier, ds.clone());
    FeatureSchema::fit(&kept, outlier, vocab, 0.8).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn outlier_filter_is_idempotent(seed in any::<u64>(), n in 40usize..300, k in 1.0f64..12.0) {
        let ds = dataset(&common::lines(n, false, seed));
        let model = fit_outlier_model(&ds, MAD_SCALE, k).unwrap();
        let once = filter_outliers(&model, ds);
        let twice = filter_outliers(&model, once.clone());
        prop_assert_eq!(once.records, twice.records);
    }

    #[test]
    fn one_hot_blocks_sum_to_one(seed in any::<u64>(), n in 10usize..200) {
        let ds = dataset(&common::lines(n, false, seed));
        let vocab = fit_vocabulary(&ds).unwrap();
        for (rec, _) in ds.iter() {
            let v = one_hot(&vocab, rec);
            prop_assert_eq!(v.len(), vocab.width());
            for (start, len) in vocab.blocks() {
                let block = &v[start..start + len];
                prop_assert_eq!(block.iter().sum::<f64>(), 1.0);
                prop_assert!(block.iter().all(|&b| b == 0.0 || b == 1.0));
            }
        }
        // Symbols outside the vocabulary leave their block empty.
        let test = parse_reader(common::lines(n, true, seed ^ 1).join("\n").as_bytes(), "t", Split::Test).unwrap();
        for (rec, _) in test.iter() {
            let v = one_hot(&vocab, rec);
            for (start, len) in vocab.blocks() {
                let s: f64 = v[start..start + len].iter().sum();
                prop_assert!(s == 0.0 || s == 1.0);
            }
        }
    }

    #[test]
    fn encoded_values_stay_in_unit_interval(seed in any::<u64>(), n in 40usize..200) {
        let ds = dataset(&common::lines(n, false, seed));
        let schema = fit_schema(&ds, 10.0);
        let unseen = dataset(&common::lines(50, true, seed.wrapping_add(1)));
        for (rec, _) in ds.iter().chain(unseen.iter()) {
            let x = schema.encode(rec);
            prop_assert_eq!(x.len(), schema.input_dim);
            prop_assert!(x.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn selection_is_monotone_in_threshold(
        ratios in prop::collection::vec(0.0f64..=1.0, 38),
        a in 0.01f64..0.99,
        b in 0.01f64..0.99,
    ) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        if let (Ok(small), Ok(large)) = (select_features(&ratios, lo), select_features(&ratios, hi)) {
            prop_assert!(small.iter().all(|i| large.contains(i)));
            for i in 0..38 {
                prop_assert_eq!(small.contains(&i), ratios[i] <= lo);
            }
        }
    }

    #[test]
    fn fitting_ignores_record_order(seed in any::<u64>(), n in 40usize..200) {
        let lines = common::lines(n, false, seed);
        let mut shuffled = lines.clone();
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let (a, b) = (dataset(&lines), dataset(&shuffled));
        let (ma, mb) = (fit_outlier_model(&a, MAD_SCALE, 10.0).unwrap(), fit_outlier_model(&b, MAD_SCALE, 10.0).unwrap());
        prop_assert_eq!(&ma.medians, &mb.medians);
        prop_assert_eq!(&ma.mads, &mb.mads);
        prop_assert_eq!(compute_zero_ratios(&a).unwrap(), compute_zero_ratios(&b).unwrap());
        let (sa, sb) = (fit_schema(&a, 10.0), fit_schema(&b, 10.0));
        prop_assert_eq!(sa.kept_numeric, sb.kept_numeric);
        prop_assert_eq!(sa.scaling, sb.scaling);
        prop_assert_eq!(sa.input_dim, sb.input_dim);
    }

    #[test]
    fn metrics_match_direct_counts(pairs in prop::collection::vec((0usize..4, 0usize..4), 1..300)) {
        let truth: Vec<usize> = pairs.iter().map(|p| p.0).collect();
        let pred: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        let m = confusion(&truth, &pred).unwrap();
        let n = pairs.len();
        prop_assert_eq!(m.total() as usize, n);
        let hits = pairs.iter().filter(|(t, p)| t == p).count();
        prop_assert_eq!(accuracy(&m).unwrap(), hits as f64 / n as f64);
        let mut fp_total = 0;
        for c in 0..4 {
            let tp = pairs.iter().filter(|&&(t, p)| t == c && p == c).count();
            let predicted = pred.iter().filter(|&&p| p == c).count();
            let actual = truth.iter().filter(|&&t| t == c).count();
            let cm = class_metrics(&m, c);
            prop_assert_eq!(cm.precision, (predicted > 0).then(|| tp as f64 / predicted as f64));
            prop_assert_eq!(cm.recall, (actual > 0).then(|| tp as f64 / actual as f64));
            if let (Some(p), Some(r), Some(f)) = (cm.precision, cm.recall, cm.f_measure) {
                prop_assert!(f >= p.min(r) - 1e-12 && f <= p.max(r) + 1e-12);
            }
            fp_total += m.false_positives(c);
        }
        prop_assert_eq!(fp_total as usize, n - hits);
    }
}
