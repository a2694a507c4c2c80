//! Text outputs of the experiment commands.
//!
//! History files hold one metric per line as tab-separated
//! `run  fold  epoch  metric  value`. Per-epoch metrics are `lr`, `steps`,
//! `l_c`, `l_cp`, `l_cd` and `l_overall` (epoch means). Per-fold test metrics
//! `accuracy` and `f1` use `-` as the epoch. Numbers are printed in the
//! shortest form that parses back to the same `f64`.
//!
//! Summary tables are comma-separated with a fixed header:
//!
//! | file          | header                                  |
//! |---------------|-----------------------------------------|
//! | `summary.csv` | `metric,mean,ci95,summary`              |
//! | `folds.csv`   | `run,fold,seed,accuracy,f1`             |
//! | `ablate.csv`  | `mask,mean_acc,ci_acc,mean_f1,ci_f1`    |
//! | `sweep.csv`   | `n,mean_acc,ci_acc,mean_f1,ci_f1`       |
//!
//! `summary` is the `mean±ci` string with four decimals.

use std::fmt::Write as _;

use xdomain_core::protocol::FoldOutcome;
use xdomain_core::stats::{format_mean_ci, FoldReport};
use xdomain_core::train::LossMask;

pub const HISTORY_HEADER: &str = "# run\tfold\tepoch\tmetric\tvalue\n";
pub const SUMMARY_HEADER: &str = "metric,mean,ci95,summary\n";
pub const FOLDS_HEADER: &str = "run,fold,seed,accuracy,f1\n";
pub const ABLATE_HEADER: &str = "mask,mean_acc,ci_acc,mean_f1,ci_f1\n";
pub const SWEEP_HEADER: &str = "n,mean_acc,ci_acc,mean_f1,ci_f1\n";

/// Appends the history lines of `folds`.
pub fn history_lines(out: &mut String, run_id: &str, folds: &[FoldOutcome]) {
    for f in folds {
        for e in &f.history {
            let m = &e.mean;
            let metrics = [
                ("lr", e.lr),
                ("steps", e.steps as f64),
                ("l_c", m.l_c),
                ("l_cp", m.l_cp),
                ("l_cd", m.l_cd),
                ("l_overall", m.l_overall),
            ];
            for (name, v) in metrics {
                let _ = writeln!(out, "{run_id}\t{}\t{}\t{name}\t{v}", f.fold, e.epoch);
            }
        }
        let _ = writeln!(out, "{run_id}\t{}\t-\taccuracy\t{}", f.fold, f.metrics.accuracy);
        let _ = writeln!(out, "{run_id}\t{}\t-\tf1\t{}", f.fold, f.metrics.f1);
    }
}

pub fn fold_lines(out: &mut String, run_id: &str, folds: &[FoldOutcome]) {
    for f in folds {
        let _ = writeln!(
            out,
            "{run_id},{},{},{},{}",
            f.fold, f.seed, f.metrics.accuracy, f.metrics.f1
        );
    }
}

pub fn summary_table(report: &FoldReport) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    let rows = [
        ("accuracy", report.mean_accuracy, report.ci95_accuracy),
        ("f1", report.mean_f1, report.ci95_f1),
    ];
    for (name, mean, ci) in rows {
        let _ = writeln!(out, "{name},{mean},{ci},{}", format_mean_ci(mean, ci));
    }
    out
}

fn report_columns(r: &FoldReport) -> String {
    format!("{},{},{},{}", r.mean_accuracy, r.ci95_accuracy, r.mean_f1, r.ci95_f1)
}

pub fn ablate_table(rows: &[(LossMask, FoldReport)]) -> String {
    let mut out = String::from(ABLATE_HEADER);
    for (mask, r) in rows {
        let _ = writeln!(out, "{},{}", mask.label(), report_columns(r));
    }
    out
}

pub fn sweep_table(rows: &[(usize, FoldReport)]) -> String {
    let mut out = String::from(SWEEP_HEADER);
    for (n, r) in rows {
        let _ = writeln!(out, "{n},{}", report_columns(r));
    }
    out
}
