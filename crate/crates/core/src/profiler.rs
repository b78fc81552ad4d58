//! Sliding-box loss profiles.
//!
//! A predicted box of fixed size is slid horizontally across a target box
//! and every loss is evaluated at each position. The default geometry uses
//! 20×20 boxes centered at y = 40 with the target centered at (40, 40), so
//! overlap begins at x = 20, peaks at x = 40 and ends at x = 60.

use crate::geometry::{iou, BBox};
use crate::losses::{huber_box, iou_loss, smooth_iou_batch, squared_box, HuberParams};
use crate::{BoxBatch, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepConfig {
    pub target: BBox,
    pub pred_width: f64,
    pub pred_height: f64,
    pub y_center: f64,
    pub x_center_start: f64,
    pub x_center_end: f64,
    pub num_samples: usize,
    pub delta: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            target: BBox::new(30.0, 30.0, 50.0, 50.0).expect("valid default target"),
            pred_width: 20.0,
            pred_height: 20.0,
            y_center: 40.0,
            x_center_start: 0.0,
            x_center_end: 80.0,
            num_samples: 161,
            delta: 1.0,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParam(msg));
        if !(self.pred_width.is_finite() && self.pred_width > 0.0) {
            return bad(format!("pred_width must be > 0, got {}", self.pred_width));
        }
        if !(self.pred_height.is_finite() && self.pred_height > 0.0) {
            return bad(format!("pred_height must be > 0, got {}", self.pred_height));
        }
        if !(self.x_center_start.is_finite() && self.x_center_end.is_finite() && self.y_center.is_finite()) {
            return bad("sweep centers must be finite".into());
        }
        if self.x_center_end <= self.x_center_start {
            return bad(format!(
                "x_center_end ({}) must exceed x_center_start ({})",
                self.x_center_end, self.x_center_start
            ));
        }
        if self.num_samples < 2 {
            return bad(format!("num_samples must be >= 2, got {}", self.num_samples));
        }
        HuberParams::new(self.delta)?;
        Ok(())
    }

    /// The `i`-th evenly spaced center.
    pub fn x_center(&self, i: usize) -> f64 {
        let span = self.x_center_end - self.x_center_start;
        self.x_center_start + span * i as f64 / (self.num_samples - 1) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub x_center: f64,
    pub huber: f64,
    pub squared: f64,
    pub iou_loss: f64,
    pub smooth_iou: f64,
    pub iou: f64,
}

/// Column of a sweep selected for analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossColumn {
    Huber,
    Squared,
    IouLoss,
    SmoothIou,
}

impl LossColumn {
    pub fn of(&self, row: &SweepRow) -> f64 {
        match self {
            LossColumn::Huber => row.huber,
            LossColumn::Squared => row.squared,
            LossColumn::IouLoss => row.iou_loss,
            LossColumn::SmoothIou => row.smooth_iou,
        }
    }
}

fn sweep_sized(config: &SweepConfig, width: f64, height: f64) -> Result<Vec<SweepRow>> {
    config.validate()?;
    let params = HuberParams::new(config.delta)?;
    let target = config.target;
    (0..config.num_samples)
        .map(|i| {
            let x_center = config.x_center(i);
            let pred = BBox::from_center(x_center, config.y_center, width, height)?;
            // a batch of one: λ is this pair's IoU
            let smooth = smooth_iou_batch(&BoxBatch::new(vec![pred], vec![target])?, params);
            Ok(SweepRow {
                x_center,
                huber: huber_box(&pred, &target, params),
                squared: squared_box(&pred, &target),
                iou_loss: iou_loss(&pred, &target),
                smooth_iou: smooth.reduced_loss,
                iou: iou(&pred, &target),
            })
        })
        .collect()
}

pub fn sweep(config: &SweepConfig) -> Result<Vec<SweepRow>> {
    sweep_sized(config, config.pred_width, config.pred_height)
}

/// Sweep with the predicted box scaled by `scale` in both dimensions.
pub fn sweep_mismatch(config: &SweepConfig, scale: f64) -> Result<Vec<SweepRow>> {
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::InvalidParam(format!("mismatch scale must be > 0, got {scale}")));
    }
    sweep_sized(config, scale * config.pred_width, scale * config.pred_height)
}

/// One sweep per δ, in the order given.
pub fn delta_study(config: &SweepConfig, deltas: &[f64]) -> Result<Vec<(f64, Vec<SweepRow>)>> {
    if deltas.is_empty() {
        return Err(Error::InvalidParam("delta study needs at least one delta".into()));
    }
    deltas
        .iter()
        .map(|&delta| Ok((delta, sweep(&SweepConfig { delta, ..*config })?)))
        .collect()
}

/// All index triples `i < j < k` where the selected column lies strictly
/// above the chord between rows `i` and `k` at row `j` (by more than 1e-9).
///
/// The chord weight is taken from the x positions, so rows need only be
/// sorted by `x_center`.
pub fn convexity_violations(rows: &[SweepRow], column: LossColumn) -> Vec<(usize, usize, usize)> {
    let mut out = Vec::new();
    for i in 0..rows.len() {
        for k in i + 2..rows.len() {
            let (xi, xk) = (rows[i].x_center, rows[k].x_center);
            let (fi, fk) = (column.of(&rows[i]), column.of(&rows[k]));
            for (j, row) in rows.iter().enumerate().take(k).skip(i + 1) {
                let t = (xk - row.x_center) / (xk - xi);
                if column.of(row) > t * fi + (1.0 - t) * fk + 1e-9 {
                    out.push((i, j, k));
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row_at(rows: &[SweepRow], x: f64) -> SweepRow {
        *rows.iter().find(|r| r.x_center == x).expect("grid point present")
    }

    #[test]
    fn default_grid_hits_breakpoints() {
        let c = SweepConfig::default();
        assert_eq!(c.x_center(0), 0.0);
        assert_eq!(c.x_center(40), 20.0);
        assert_eq!(c.x_center(80), 40.0);
        assert_eq!(c.x_center(120), 60.0);
        assert_eq!(c.x_center(160), 80.0);
        assert_eq!(c.x_center(1), 0.5);
    }

    #[test]
    fn default_sweep_examples() {
        let rows = sweep(&SweepConfig::default()).unwrap();
        assert_eq!(rows.len(), 161);

        let mid = row_at(&rows, 40.0);
        assert_eq!((mid.iou, mid.iou_loss, mid.huber, mid.squared, mid.smooth_iou), (1.0, 0.0, 0.0, 0.0, 0.0));

        let far = row_at(&rows, 10.0);
        assert_eq!((far.iou, far.iou_loss), (0.0, 1.0));
        // λ = 0 so Smooth IoU equals Huber: 2·(1·30 − 0.5)
        assert_eq!(far.smooth_iou, far.huber);
        assert_eq!(far.huber, 59.0);

        let third = row_at(&rows, 50.0);
        assert_eq!(third.iou, 200.0 / 600.0);
        assert!((third.iou_loss - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn mismatch_examples() {
        let c = SweepConfig::default();
        let rows = sweep_mismatch(&c, 0.75).unwrap();
        assert_eq!(row_at(&rows, 40.0).iou, 0.5625);
        let edge = row_at(&rows, 0.0);
        assert_eq!(edge.iou, 0.0);
        assert_eq!(edge.smooth_iou, edge.huber);

        assert_eq!(sweep_mismatch(&c, 1.0).unwrap(), sweep(&c).unwrap());
        assert!(sweep_mismatch(&c, 0.0).is_err());
    }

    #[test]
    fn delta_study_examples() {
        let c = SweepConfig::default();
        let study = delta_study(&c, &[1.0, 1.5, 2.0]).unwrap();
        assert_eq!(study.len(), 3);
        for (_, rows) in &study {
            assert_eq!(row_at(rows, 40.0).huber, 0.0);
            assert_eq!(row_at(rows, 20.0).iou, 0.0);
            assert!(row_at(rows, 20.5).iou > 0.0);
        }
        // |z| = 1.5 on both x coordinates: linear under δ=1, quadratic under δ=2
        let h1 = row_at(&study[0].1, 41.5).huber;
        let h2 = row_at(&study[2].1, 41.5).huber;
        assert_eq!(h1, 2.0 * (1.5 - 0.5));
        assert_eq!(h2, 2.0 * 0.5 * 1.5 * 1.5);
        assert_ne!(h1, h2);
        assert!(delta_study(&c, &[]).is_err());
    }

    #[test]
    fn config_validation() {
        let ok = SweepConfig::default();
        assert!(SweepConfig { num_samples: 1, ..ok }.validate().is_err());
        assert!(SweepConfig { x_center_end: 0.0, ..ok }.validate().is_err());
        assert!(SweepConfig { pred_width: 0.0, ..ok }.validate().is_err());
        assert!(SweepConfig { delta: -1.0, ..ok }.validate().is_err());
    }

    #[test]
    fn convexity_detector() {
        let rows = sweep(&SweepConfig::default()).unwrap();
        assert!(!convexity_violations(&rows, LossColumn::IouLoss).is_empty());
        assert!(convexity_violations(&rows, LossColumn::Huber).is_empty());
        assert!(convexity_violations(&rows, LossColumn::Squared).is_empty());
    }

    #[test]
    fn default_sweep_row_properties() {
        let rows = sweep(&SweepConfig::default()).unwrap();
        let n = rows.len();
        for (i, r) in rows.iter().enumerate() {
            let m = rows[n - 1 - i];
            for col in [LossColumn::Huber, LossColumn::Squared, LossColumn::IouLoss, LossColumn::SmoothIou] {
                assert!((col.of(r) - col.of(&m)).abs() <= 1e-9, "mirror at {}", r.x_center);
            }
            assert!((r.iou_loss - (1.0 - r.iou)).abs() <= 1e-12);
            let (lo, hi) = (r.huber.min(r.iou_loss), r.huber.max(r.iou_loss));
            assert!(r.smooth_iou >= lo && r.smooth_iou <= hi);
            if r.x_center <= 20.0 || r.x_center >= 60.0 {
                assert_eq!(r.iou_loss, 1.0);
                assert_eq!(r.smooth_iou, r.huber);
            } else {
                assert!(r.iou_loss < 1.0);
            }
        }
    }
}
