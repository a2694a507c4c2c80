use proptest::prelude::*;
use xdomain_core::losses::{
    classification_loss, detaching_loss, overall_loss, overall_value, pairing_loss, set_distance,
    set_distance_of, BatchSplit, DetachMode, DistanceKind,
};
use xdomain_core::{Error, Graph, Tensor};

/// Plain double loop over rows: mean of unsquared Euclidean distances.
fn oracle_distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let mut total = 0.0;
    for x in a {
        for y in b {
            let mut sq = 0.0;
            for (p, q) in x.iter().zip(y) {
                sq += (p - q) * (p - q);
            }
            total += sq.sqrt();
        }
    }
    total / (a.len() * b.len()) as f64
}

fn rows(t: &[Vec<f64>]) -> Tensor {
    Tensor::from_rows(t).unwrap()
}

fn group(max_rows: usize, dim: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-3.0f64..3.0, dim), 1..=max_rows)
}

/// Labeled source and target embeddings with every label present on both sides.
fn labeled_batch() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>, Vec<Vec<f64>>, Vec<f64>)> {
    (1usize..5).prop_flat_map(|dim| {
        let side = move || {
            (2usize..8).prop_flat_map(move |n| {
                (
                    prop::collection::vec(prop::collection::vec(-3.0f64..3.0, dim), n),
                    prop::collection::vec(prop::bool::ANY, n - 2),
                )
                    .prop_map(|(r, bits)| {
                        let mut labels = vec![1.0, 0.0];
                        labels.extend(bits.into_iter().map(|b| if b { 1.0 } else { 0.0 }));
                        (r, labels)
                    })
            })
        };
        (side(), side()).prop_map(|((fs, ys), (ft, yt))| (fs, ys, ft, yt))
    })
}

fn by_label(r: &[Vec<f64>], labels: &[f64], y: f64) -> Vec<Vec<f64>> {
    r.iter()
        .zip(labels)
        .filter(|(_, &l)| l == y)
        .map(|(x, _)| x.clone())
        .collect()
}

struct Terms {
    l_cp: f64,
    l_cd: f64,
}

fn graph_terms(fs: &[Vec<f64>], ys: &[f64], ft: &[Vec<f64>], yt: &[f64], flip: bool) -> Terms {
    let mut g = Graph::new();
    let a = g.input(rows(fs));
    let b = g.input(rows(ft));
    let mut split = BatchSplit::new(&mut g, a, ys, b, yt).unwrap();
    if flip {
        split = split.flipped_target();
    }
    let cp = pairing_loss(&mut g, &split, DistanceKind::Euclidean).unwrap();
    let cd = detaching_loss(&mut g, &split, DistanceKind::Euclidean, DetachMode::Unbounded).unwrap();
    Terms {
        l_cp: g.value(cp).data()[0],
        l_cd: g.value(cd).data()[0],
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn set_distance_matches_double_loop((a, b) in (1usize..6).prop_flat_map(|d| (group(7, d), group(7, d)))) {
        let got = set_distance_of(&rows(&a), &rows(&b)).unwrap();
        let want = oracle_distance(&a, &b);
        prop_assert!((got - want).abs() <= 1e-12 * want.max(1.0), "{got} vs {want}");
    }

    #[test]
    fn set_distance_is_symmetric_and_translation_invariant(
        (a, b, shift) in (1usize..5).prop_flat_map(|d| (group(6, d), group(6, d), prop::collection::vec(-5.0f64..5.0, d)))
    ) {
        let ab = set_distance_of(&rows(&a), &rows(&b)).unwrap();
        let ba = set_distance_of(&rows(&b), &rows(&a)).unwrap();
        prop_assert!((ab - ba).abs() <= 1e-12 * ab.max(1.0));
        let move_all = |r: &[Vec<f64>]| -> Vec<Vec<f64>> {
            r.iter().map(|x| x.iter().zip(&shift).map(|(p, s)| p + s).collect()).collect()
        };
        let moved = set_distance_of(&rows(&move_all(&a)), &rows(&move_all(&b))).unwrap();
        prop_assert!((ab - moved).abs() <= 1e-9 * ab.max(1.0));
        prop_assert!(ab >= 0.0);
    }

    #[test]
    fn pairing_and_detaching_match_oracle((fs, ys, ft, yt) in labeled_batch()) {
        let t = graph_terms(&fs, &ys, &ft, &yt, false);
        let (sp, sn) = (by_label(&fs, &ys, 1.0), by_label(&fs, &ys, 0.0));
        let (tp, tn) = (by_label(&ft, &yt, 1.0), by_label(&ft, &yt, 0.0));
        let cp = oracle_distance(&sp, &tp) + oracle_distance(&sn, &tn);
        let cd = oracle_distance(&sp, &tn) + oracle_distance(&sn, &tp);
        prop_assert!((t.l_cp - cp).abs() <= 1e-12 * cp.max(1.0));
        prop_assert!((t.l_cd - cd).abs() <= 1e-12 * cd.max(1.0));
    }

    #[test]
    fn flipping_target_labels_swaps_the_terms((fs, ys, ft, yt) in labeled_batch()) {
        let plain = graph_terms(&fs, &ys, &ft, &yt, false);
        let flipped_split = graph_terms(&fs, &ys, &ft, &yt, true);
        let flipped_labels: Vec<f64> = yt.iter().map(|y| 1.0 - y).collect();
        let relabeled = graph_terms(&fs, &ys, &ft, &flipped_labels, false);
        for other in [flipped_split, relabeled] {
            prop_assert_eq!(plain.l_cp, other.l_cd);
            prop_assert_eq!(plain.l_cd, other.l_cp);
        }
    }

    #[test]
    fn hinge_caps_each_detaching_distance((fs, ys, ft, yt) in labeled_batch(), m in 0.1f64..4.0) {
        let mut g = Graph::new();
        let a = g.input(rows(&fs));
        let b = g.input(rows(&ft));
        let split = BatchSplit::new(&mut g, a, &ys, b, &yt).unwrap();
        let cd = detaching_loss(&mut g, &split, DistanceKind::Euclidean, DetachMode::Hinge { margin: m }).unwrap();
        let (sp, sn) = (by_label(&fs, &ys, 1.0), by_label(&fs, &ys, 0.0));
        let (tp, tn) = (by_label(&ft, &yt, 1.0), by_label(&ft, &yt, 0.0));
        let want = oracle_distance(&sp, &tn).min(m) + oracle_distance(&sn, &tp).min(m);
        prop_assert!((g.value(cd).data()[0] - want).abs() <= 1e-12 * want.max(1.0));
    }
}

#[test]
fn squared_variant_matches_squared_oracle() {
    let a = vec![vec![0.0, 1.0], vec![2.0, -1.0]];
    let b = vec![vec![1.0, 1.0], vec![0.5, 3.0], vec![-2.0, 0.0]];
    let mut g = Graph::new();
    let (va, vb) = (g.input(rows(&a)), g.input(rows(&b)));
    let d = set_distance(&mut g, va, vb, DistanceKind::SquaredEuclidean).unwrap();
    let mut want = 0.0;
    for x in &a {
        for y in &b {
            want += x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum::<f64>();
        }
    }
    want /= 6.0;
    assert!((g.value(d).data()[0] - want).abs() < 1e-12);
}

#[test]
fn bce_matches_hand_value() {
    let mut g = Graph::new();
    let p = g.input(Tensor::new(vec![3, 1], vec![0.9, 0.2, 0.6]).unwrap());
    let l = classification_loss(&mut g, p, &[1.0, 0.0, 1.0]).unwrap();
    let want = -(0.9f64.ln() + 0.8f64.ln() + 0.6f64.ln()) / 3.0;
    assert!((g.value(l).data()[0] - want).abs() < 1e-12);
    assert!((want - 0.2797766).abs() < 1e-7);
}

#[test]
fn bce_stays_finite_at_saturated_probabilities() {
    let mut g = Graph::new();
    let p = g.param(Tensor::new(vec![2, 1], vec![0.0, 1.0]).unwrap());
    let l = classification_loss(&mut g, p, &[1.0, 0.0]).unwrap();
    let v = g.value(l).data()[0];
    assert!(v.is_finite());
    assert!((v - -(1e-12f64).ln()).abs() < 1e-6);
    assert!(g.backward(l).unwrap().get(p).all_finite());
}

#[test]
fn overall_combination_and_alpha_validation() {
    assert_eq!(overall_value(0.5, 2.0, 3.0, 0.25).unwrap(), 0.25);
    assert!(matches!(overall_value(0.5, 1.0, 1.0, -0.1), Err(Error::Config(_))));
    let mut g = Graph::new();
    let (a, b, c) = (g.scalar(0.5), g.scalar(2.0), g.scalar(3.0));
    assert!(overall_loss(&mut g, a, b, c, f64::NAN).is_err());
    let o = overall_loss(&mut g, a, b, c, 0.0).unwrap();
    assert_eq!(g.value(o).data()[0], 0.5);
}

#[test]
fn missing_group_is_a_contract_error() {
    let mut g = Graph::new();
    let a = g.input(rows(&[vec![0.0], vec![1.0]]));
    let b = g.input(rows(&[vec![0.0], vec![1.0]]));
    let err = BatchSplit::new(&mut g, a, &[1.0, 0.0], b, &[1.0, 1.0]).unwrap_err();
    assert!(err.to_string().contains("ft_neg"), "{err}");
    let err = BatchSplit::new(&mut g, a, &[1.0, 0.5], b, &[1.0, 0.0]).unwrap_err();
    assert!(matches!(err, Error::Contract(_)));
}
