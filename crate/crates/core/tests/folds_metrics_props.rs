use dfnet::evaluation::metrics::{format_metric, parse_metric};
use dfnet::{apt, confusion, make_folds, metrics, ConfusionMatrix};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn folds_partition_the_opacity_images(n_normal in 1usize..5000, n_opacity in 1usize..5000, k in 1usize..12) {
        prop_assume!(k <= n_opacity);
        let folds = make_folds(n_normal, n_opacity, k).unwrap();
        prop_assert_eq!(folds.len(), k);
        let mut next = 0;
        for (i, f) in folds.iter().enumerate() {
            prop_assert_eq!(f.index, i + 1);
            prop_assert_eq!(f.normal.clone(), 0..n_normal);
            prop_assert_eq!(f.opacity.start, next);
            let expected = if i + 1 == k { n_opacity / k + n_opacity % k } else { n_opacity / k };
            prop_assert_eq!(f.opacity.len(), expected);
            next = f.opacity.end;
        }
        prop_assert_eq!(next, n_opacity);
    }

    #[test]
    fn too_many_folds_is_an_error(n_opacity in 1usize..50, extra in 1usize..5) {
        prop_assert!(make_folds(10, n_opacity, n_opacity + extra).is_err());
    }

    #[test]
    fn metrics_match_a_brute_force_recount(
        pairs in prop::collection::vec((0.0f64..1.0, 0u8..=1), 1..200),
    ) {
        let (preds, labels): (Vec<f64>, Vec<u8>) = pairs.into_iter().unzip();
        let cm = confusion(&preds, &labels, 0.5).unwrap();
        let count = |pred: bool, actual: u8| {
            preds.iter().zip(&labels).filter(|&(&p, &t)| (p >= 0.5) == pred && t == actual).count() as u64
        };
        prop_assert_eq!(cm, ConfusionMatrix { tp: count(true, 1), fp: count(true, 0), tn: count(false, 0), fn_: count(false, 1) });

        let s = metrics(&cm);
        let correct = preds.iter().zip(&labels).filter(|&(&p, &t)| (p >= 0.5) == (t == 1)).count();
        prop_assert!((s.acc.unwrap() - correct as f64 / preds.len() as f64).abs() < 1e-12);
        let pos = labels.iter().filter(|&&t| t == 1).count() as f64;
        let neg = labels.len() as f64 - pos;
        match s.sen {
            Some(sen) => prop_assert!((sen - cm.tp as f64 / pos).abs() < 1e-12),
            None => prop_assert_eq!(pos, 0.0),
        }
        match s.spe {
            Some(spe) => prop_assert!((spe - cm.tn as f64 / neg).abs() < 1e-12),
            None => prop_assert_eq!(neg, 0.0),
        }
    }

    #[test]
    fn accuracy_is_the_class_weighted_mean_of_sen_and_spe(tp in 1u64..500, fp in 0u64..500, tn in 0u64..500, fn_ in 0u64..500) {
        prop_assume!(tn + fp > 0);
        let cm = ConfusionMatrix { tp, fp, tn, fn_ };
        let s = metrics(&cm);
        let (pos, neg) = ((tp + fn_) as f64, (tn + fp) as f64);
        let mixed = (pos * s.sen.unwrap() + neg * s.spe.unwrap()) / (pos + neg);
        prop_assert!((s.acc.unwrap() - mixed).abs() < 1e-12);
        let lo = s.sen.unwrap().min(s.spe.unwrap());
        let hi = s.sen.unwrap().max(s.spe.unwrap());
        prop_assert!(lo - 1e-12 <= s.acc.unwrap() && s.acc.unwrap() <= hi + 1e-12);
    }

    #[test]
    fn f1_is_the_harmonic_mean_of_precision_and_recall(tp in 1u64..500, fp in 0u64..500, tn in 0u64..500, fn_ in 0u64..500) {
        let s = metrics(&ConfusionMatrix { tp, fp, tn, fn_ });
        let precision = tp as f64 / (tp + fp) as f64;
        let recall = tp as f64 / (tp + fn_) as f64;
        let harmonic = 2.0 * precision * recall / (precision + recall);
        prop_assert!((s.f1.unwrap() - harmonic).abs() < 1e-12);
    }

    #[test]
    fn apt_rises_with_accuracy_and_falls_with_size(
        a in 0.0f64..1.0, b in 0.0f64..1.0, p in 0.01f64..50.0, q in 0.01f64..50.0,
    ) {
        let (lo_acc, hi_acc) = (a.min(b), a.max(b));
        prop_assert!(apt(lo_acc, p).unwrap() <= apt(hi_acc, p).unwrap());
        let (small, large) = (p.min(q), p.max(q));
        prop_assert!(apt(a, large).unwrap() <= apt(a, small).unwrap());
    }

    #[test]
    fn metric_text_round_trips(v in prop::option::of(-1e6f64..1e6)) {
        prop_assert_eq!(parse_metric(&format_metric(v)).unwrap(), v);
    }
}

#[test]
fn apt_reference_points() {
    assert!((apt(0.9778, 7.3).unwrap() - 0.78002).abs() < 1e-5);
    assert!((apt(0.9068, 3.47).unwrap() - 0.76859).abs() < 1e-5);
    assert!(apt(0.9, 0.0).is_err());
}

#[test]
fn undefined_metrics_have_zero_denominators() {
    let s = metrics(&ConfusionMatrix { tp: 0, fp: 0, tn: 4, fn_: 0 });
    assert_eq!(s.acc, Some(1.0));
    assert_eq!(s.sen, None);
    assert_eq!(s.f1, None);
    assert_eq!(s.spe, Some(1.0));
}

#[test]
fn confusion_rejects_bad_labels_and_lengths() {
    assert!(confusion(&[0.2f64, 0.7], &[0, 2], 0.5).is_err());
    assert!(confusion(&[0.2f64], &[0, 1], 0.5).is_err());
}
