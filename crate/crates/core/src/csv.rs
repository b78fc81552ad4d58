//! CSV output.
//!
//! Numbers are written with Rust's shortest round-trip formatting, so every
//! value parses back to the identical `f64`. Lines end in `\n`.

use std::fmt::Write as _;

use crate::fit::{FitResult, SummaryRow};
use crate::gradients::GradCheckResult;
use crate::losses::LossKind;
use crate::profiler::SweepRow;

pub const SWEEP_HEADER: &str = "x_center,iou,huber,squared,iou_loss,smooth_iou";
pub const TRAJECTORY_HEADER: &str = "step,loss,mean_iou";
pub const SUMMARY_HEADER: &str = "loss_kind,mean_final_iou,stddev_final_iou,mean_initial_iou";
pub const GRADCHECK_HEADER: &str = "loss,max_relative_error,num_points_checked,num_skipped_near_kink,passed";

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from(SWEEP_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.x_center, r.iou, r.huber, r.squared, r.iou_loss, r.smooth_iou
        );
    }
    s
}

pub fn trajectory_csv(result: &FitResult) -> String {
    let mut s = String::from(TRAJECTORY_HEADER);
    s.push('\n');
    for (step, (loss, iou)) in result.loss_trajectory.iter().zip(&result.iou_trajectory).enumerate() {
        let _ = writeln!(s, "{step},{loss},{iou}");
    }
    s
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut s = String::from(SUMMARY_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            r.loss_kind, r.mean_final_iou, r.stddev_final_iou, r.mean_initial_iou
        );
    }
    s
}

pub fn gradcheck_csv(results: &[(LossKind, GradCheckResult)]) -> String {
    let mut s = String::from(GRADCHECK_HEADER);
    s.push('\n');
    for (kind, r) in results {
        let _ = writeln!(
            s,
            "{kind},{},{},{},{}",
            r.max_relative_error,
            r.num_points_checked,
            r.num_skipped_near_kink,
            r.passed()
        );
    }
    s
}
