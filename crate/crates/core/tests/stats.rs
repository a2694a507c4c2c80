use statrs::distribution::{ContinuousCDF, StudentsT};
use xdomain_core::eval::{evaluate, Confusion, Metrics};
use xdomain_core::data::{synth_domain_shift, Dataset, ShiftSpec};
use xdomain_core::model::{ModelConfig, SiameseModel};
use xdomain_core::stats::{ci95_half_width, format_mean_ci, mean, t_critical_975, t_quantile, FoldReport};

#[test]
fn t_quantiles_agree_with_statrs() {
    for df in [1.0, 2.0, 3.5, 9.0, 30.0, 200.0] {
        let reference = StudentsT::new(0.0, 1.0, df).unwrap();
        for p in [0.6, 0.9, 0.975, 0.995] {
            let got = t_quantile(p, df);
            let want = reference.inverse_cdf(p);
            assert!((got - want).abs() < 1e-8 * want.abs().max(1.0), "df {df} p {p}: {got} vs {want}");
        }
    }
}

#[test]
fn critical_values_are_the_three_decimal_table() {
    assert_eq!(t_critical_975(9), 2.262);
    assert_eq!(t_critical_975(4), 2.776);
    assert_eq!(t_critical_975(29), 2.045);
}

#[test]
fn half_width_matches_hand_oracle() {
    let folds = [0.80, 0.82, 0.78, 0.85, 0.79, 0.81, 0.83, 0.77, 0.84, 0.81];
    let m: f64 = folds.iter().sum::<f64>() / 10.0;
    let var = folds.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / 9.0;
    let want = 2.262 * var.sqrt() / 10f64.sqrt();
    assert!((mean(&folds) - m).abs() < 1e-12);
    assert!((ci95_half_width(&folds) - want).abs() < 1e-9);
}

#[test]
fn identical_folds_have_exactly_zero_width() {
    assert_eq!(ci95_half_width(&[0.7; 10]), 0.0);
    assert_eq!(ci95_half_width(&[0.1 + 0.2; 4]), 0.0);
}

#[test]
fn report_formatting() {
    assert_eq!(format_mean_ci(0.804, 0.0356), "0.8040±0.0356");
    let per_fold = vec![
        Metrics { accuracy: 0.5, f1: 0.4 },
        Metrics { accuracy: 0.7, f1: 0.6 },
    ];
    let r = FoldReport::from_folds(per_fold).unwrap();
    assert_eq!(r.k(), 2);
    assert!((r.mean_accuracy - 0.6).abs() < 1e-15);
    assert!(FoldReport::from_folds(vec![Metrics { accuracy: 1.0, f1: 1.0 }]).is_err());
}

#[test]
fn confusion_counts_and_f1() {
    let probs = [0.9, 0.6, 0.4, 0.2, 0.5, 0.7];
    let labels = [1.0, 0.0, 1.0, 0.0, 1.0, 1.0];
    let c = Confusion::from_predictions(&probs, &labels, 0.5);
    assert_eq!((c.tp, c.fp, c.tn, c.fn_), (3, 1, 1, 1));
    let m = c.metrics();
    assert!((m.accuracy - 4.0 / 6.0).abs() < 1e-15);
    assert!((m.f1 - 0.75).abs() < 1e-15);
}

#[test]
fn evaluation_ignores_sample_order() {
    let b = synth_domain_shift(&ShiftSpec::default(), 10, 2, 50, 1).unwrap();
    let model = SiameseModel::init(ModelConfig { seed: 5, ..ModelConfig::default() }).unwrap();
    let forward = evaluate(&model, &b.target_test, 0.5).unwrap();
    let mut reversed = b.target_test.samples().to_vec();
    reversed.reverse();
    let reversed = Dataset::new(reversed, b.target_test.split()).unwrap();
    assert_eq!(evaluate(&model, &reversed, 0.5).unwrap(), forward);
}
