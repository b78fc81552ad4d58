//! Per-example and batch losses: Huber, squared, IoU and Smooth IoU.
//!
//! Box-level Huber and squared losses sum the per-coordinate terms over the
//! four corner coordinates `(xmin, ymin, xmax, ymax)`. Batch losses reduce by
//! the arithmetic mean.

use std::fmt;
use std::str::FromStr;

use crate::geometry::{iou, BBox, BoxBatch};
use crate::{Error, Result};

/// Threshold `δ` separating the quadratic and linear branches of Huber.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HuberParams {
    delta: f64,
}

impl HuberParams {
    pub fn new(delta: f64) -> Result<Self> {
        if !(delta.is_finite() && delta > 0.0) {
            return Err(Error::InvalidParam(format!("delta must be finite and > 0, got {delta}")));
        }
        Ok(Self { delta })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }
}

impl Default for HuberParams {
    fn default() -> Self {
        Self { delta: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LossKind {
    Huber,
    Squared,
    Iou,
    SmoothIou,
}

impl LossKind {
    pub const ALL: [LossKind; 4] = [LossKind::Huber, LossKind::Squared, LossKind::Iou, LossKind::SmoothIou];

    pub fn name(&self) -> &'static str {
        match self {
            LossKind::Huber => "huber",
            LossKind::Squared => "squared",
            LossKind::Iou => "iou",
            LossKind::SmoothIou => "smooth_iou",
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "huber" => Ok(LossKind::Huber),
            "squared" => Ok(LossKind::Squared),
            "iou" => Ok(LossKind::Iou),
            "smooth_iou" => Ok(LossKind::SmoothIou),
            other => Err(Error::InvalidParam(format!("unknown loss kind '{other}'"))),
        }
    }
}

/// Result of evaluating a loss over a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub per_example_loss: Vec<f64>,
    pub per_example_iou: Vec<f64>,
    /// Blend weight. For Smooth IoU this is the batch mean IoU; the other
    /// kinds report 0 (Huber, squared) or 1 (IoU).
    pub lambda: f64,
    pub reduced_loss: f64,
}

/// Scalar Huber loss: `½z²` for `|z| < δ`, else `δ|z| − ½δ²`.
pub fn huber_scalar(z: f64, params: HuberParams) -> f64 {
    let d = params.delta;
    let a = z.abs();
    if a < d {
        0.5 * z * z
    } else {
        d * a - 0.5 * d * d
    }
}

pub fn huber_box(pred: &BBox, target: &BBox, params: HuberParams) -> f64 {
    pred.coords()
        .iter()
        .zip(target.coords())
        .map(|(p, t)| huber_scalar(p - t, params))
        .sum()
}

pub fn squared_box(pred: &BBox, target: &BBox) -> f64 {
    pred.coords()
        .iter()
        .zip(target.coords())
        .map(|(p, t)| 0.5 * (p - t) * (p - t))
        .sum()
}

pub fn iou_loss(pred: &BBox, target: &BBox) -> f64 {
    1.0 - iou(pred, target)
}

/// `λ·iou_loss + (1 − λ)·huber` for one example with a given weight.
pub(crate) fn blend(lambda: f64, iou_term: f64, huber_term: f64) -> f64 {
    lambda * iou_term + (1.0 - lambda) * huber_term
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Smooth IoU over a batch.
///
/// The weight λ is the mean IoU of the whole batch and is shared by every
/// example: `loss_k = λ(1 − IoU_k) + (1 − λ)·Huber_k`.
pub fn smooth_iou_batch(batch: &BoxBatch, params: HuberParams) -> LossReport {
    let ious: Vec<f64> = batch.pairs().map(|(p, t)| iou(p, t)).collect();
    let hubers: Vec<f64> = batch.pairs().map(|(p, t)| huber_box(p, t, params)).collect();
    let lambda = mean(&ious);
    let per_example_loss: Vec<f64> = ious
        .iter()
        .zip(&hubers)
        .map(|(i, h)| blend(lambda, 1.0 - i, *h))
        .collect();
    LossReport {
        reduced_loss: mean(&per_example_loss),
        per_example_loss,
        per_example_iou: ious,
        lambda,
    }
}

/// Evaluates any loss kind over a batch.
pub fn loss_batch(batch: &BoxBatch, kind: LossKind, params: HuberParams) -> LossReport {
    if kind == LossKind::SmoothIou {
        return smooth_iou_batch(batch, params);
    }
    let per_example_iou: Vec<f64> = batch.pairs().map(|(p, t)| iou(p, t)).collect();
    let (per_example_loss, lambda): (Vec<f64>, f64) = match kind {
        LossKind::Huber => (batch.pairs().map(|(p, t)| huber_box(p, t, params)).collect(), 0.0),
        LossKind::Squared => (batch.pairs().map(|(p, t)| squared_box(p, t)).collect(), 0.0),
        LossKind::Iou => (per_example_iou.iter().map(|i| 1.0 - i).collect(), 1.0),
        LossKind::SmoothIou => unreachable!(),
    };
    LossReport {
        reduced_loss: mean(&per_example_loss),
        per_example_loss,
        per_example_iou,
        lambda,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(xmin: f64, ymin: f64, xmax: f64, ymax: f64) -> BBox {
        BBox::new(xmin, ymin, xmax, ymax).unwrap()
    }

    fn unit() -> BBox {
        b(0.0, 0.0, 10.0, 10.0)
    }

    #[test]
    fn huber_scalar_examples() {
        let p = HuberParams::default();
        assert_eq!(huber_scalar(0.0, p), 0.0);
        assert_eq!(huber_scalar(0.5, p), 0.125);
        assert_eq!(huber_scalar(2.0, p), 1.5);
        assert_eq!(huber_scalar(-2.0, p), 1.5);
    }

    #[test]
    fn huber_continuous_at_delta() {
        for d in [0.3, 1.0, 1.5, 2.0, 7.25] {
            let p = HuberParams::new(d).unwrap();
            let half_sq = 0.5 * d * d;
            assert_eq!(huber_scalar(d, p), d * d - half_sq);
            assert_eq!(huber_scalar(d, p), half_sq);
            assert_eq!(huber_scalar(-d, p), half_sq);
        }
    }

    #[test]
    fn huber_params_validation() {
        assert!(HuberParams::new(0.0).is_err());
        assert!(HuberParams::new(-1.0).is_err());
        assert!(HuberParams::new(f64::NAN).is_err());
        assert_eq!(HuberParams::default().delta(), 1.0);
    }

    #[test]
    fn box_loss_examples() {
        let p = HuberParams::default();
        assert_eq!(huber_box(&unit(), &unit(), p), 0.0);
        assert_eq!(huber_box(&b(0.5, 0.0, 10.5, 10.0), &unit(), p), 0.25);
        assert_eq!(huber_box(&b(20.0, 0.0, 30.0, 10.0), &unit(), p), 39.0);

        assert_eq!(squared_box(&unit(), &unit()), 0.0);
        assert_eq!(squared_box(&b(0.5, 0.0, 10.5, 10.0), &unit()), 0.25);
        assert_eq!(squared_box(&b(20.0, 0.0, 30.0, 10.0), &unit()), 400.0);

        assert_eq!(iou_loss(&unit(), &unit()), 0.0);
        assert_eq!(iou_loss(&b(20.0, 0.0, 30.0, 10.0), &unit()), 1.0);
        assert_eq!(iou_loss(&b(5.0, 0.0, 15.0, 10.0), &unit()), 1.0 - 1.0 / 3.0);
    }

    #[test]
    fn smooth_iou_single_identical_pair() {
        let batch = BoxBatch::new(vec![unit()], vec![unit()]).unwrap();
        let r = smooth_iou_batch(&batch, HuberParams::default());
        assert_eq!(r.lambda, 1.0);
        assert_eq!(r.per_example_loss, vec![0.0]);
        assert_eq!(r.reduced_loss, 0.0);
    }

    #[test]
    fn smooth_iou_all_disjoint_is_mean_huber() {
        let p = HuberParams::default();
        let preds = vec![b(20.0, 0.0, 30.0, 10.0), b(-40.0, 3.0, -20.0, 9.0)];
        let targets = vec![unit(), unit()];
        let batch = BoxBatch::new(preds.clone(), targets.clone()).unwrap();
        let r = smooth_iou_batch(&batch, p);
        assert_eq!(r.lambda, 0.0);
        let h = loss_batch(&batch, LossKind::Huber, p);
        assert_eq!(r.per_example_loss, h.per_example_loss);
        assert_eq!(r.reduced_loss, h.reduced_loss);
    }

    #[test]
    fn smooth_iou_mixed_pair_of_two() {
        let batch = BoxBatch::new(
            vec![unit(), b(20.0, 0.0, 30.0, 10.0)],
            vec![unit(), unit()],
        )
        .unwrap();
        let r = smooth_iou_batch(&batch, HuberParams::default());
        // recomposed by hand: λ = (1 + 0)/2; A = 0; B = 0.5·1 + 0.5·39
        let lambda = (1.0 + 0.0) / 2.0;
        let loss_b = lambda * 1.0 + (1.0 - lambda) * 39.0;
        assert_eq!(r.lambda, 0.5);
        assert_eq!(r.per_example_loss, vec![0.0, loss_b]);
        assert_eq!(loss_b, 20.0);
        assert_eq!(r.reduced_loss, 10.0);
        assert_eq!(loss_batch(&batch, LossKind::SmoothIou, HuberParams::default()).reduced_loss, 10.0);
    }

    #[test]
    fn loss_batch_dispatch_conventions() {
        let p = HuberParams::default();
        let same = BoxBatch::new(vec![unit()], vec![unit()]).unwrap();
        let apart = BoxBatch::new(vec![b(20.0, 0.0, 30.0, 10.0)], vec![unit()]).unwrap();

        let r = loss_batch(&same, LossKind::Huber, p);
        assert_eq!((r.reduced_loss, r.lambda), (0.0, 0.0));
        assert_eq!(r.per_example_iou, vec![1.0]);

        let r = loss_batch(&apart, LossKind::Iou, p);
        assert_eq!((r.reduced_loss, r.lambda), (1.0, 1.0));

        let r = loss_batch(&apart, LossKind::Squared, p);
        assert_eq!((r.reduced_loss, r.lambda), (400.0, 0.0));
        assert_eq!(r.per_example_iou, vec![0.0]);
    }

    #[test]
    fn loss_kind_names_round_trip() {
        for k in LossKind::ALL {
            assert_eq!(k.name().parse::<LossKind>().unwrap(), k);
        }
        assert!("l1".parse::<LossKind>().is_err());
    }
}
