//! Analytic gradients of the box losses with respect to the predicted box,
//! and a central-difference checker.
//!
//! Targets are constants. For Smooth IoU the batch weight λ is held fixed,
//! so the gradient of example `k` is `λ·∇IoU-loss_k + (1 − λ)·∇Huber_k`.
//!
//! Conventions at non-differentiable points:
//! - Huber at `|z| = δ` takes the linear-branch slope `δ·sign(z)`.
//! - IoU loss at coordinate ties (`x̂min = xmin`, ...) treats the predicted
//!   edge as the binding one.
//! - IoU loss with no overlap returns the exact zero vector, and so does an
//!   exact match of prediction and target.

use std::ops::{Add, Mul};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::{area, iou, raw_overlap, BBox, BoxBatch};
use crate::losses::{blend, huber_box, iou_loss, squared_box, HuberParams, LossKind};
use crate::{Error, Result};

/// Derivative of a scalar loss with respect to `(xmin, ymin, xmax, ymax)` of
/// the predicted box.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GradVector {
    pub d_xmin: f64,
    pub d_ymin: f64,
    pub d_xmax: f64,
    pub d_ymax: f64,
}

impl GradVector {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self {
            d_xmin: a[0],
            d_ymin: a[1],
            d_xmax: a[2],
            d_ymax: a[3],
        }
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.d_xmin, self.d_ymin, self.d_xmax, self.d_ymax]
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

impl Add for GradVector {
    type Output = GradVector;

    fn add(self, rhs: GradVector) -> GradVector {
        let (a, b) = (self.to_array(), rhs.to_array());
        GradVector::from_array([a[0] + b[0], a[1] + b[1], a[2] + b[2], a[3] + b[3]])
    }
}

impl Mul<GradVector> for f64 {
    type Output = GradVector;

    fn mul(self, rhs: GradVector) -> GradVector {
        GradVector::from_array(rhs.to_array().map(|v| self * v))
    }
}

pub fn grad_huber(pred: &BBox, target: &BBox, params: HuberParams) -> GradVector {
    let d = params.delta();
    let p = pred.coords();
    let t = target.coords();
    GradVector::from_array(std::array::from_fn(|i| {
        let z = p[i] - t[i];
        if z.abs() < d {
            z
        } else {
            d * z.signum()
        }
    }))
}

pub fn grad_squared(pred: &BBox, target: &BBox) -> GradVector {
    let p = pred.coords();
    let t = target.coords();
    GradVector::from_array(std::array::from_fn(|i| p[i] - t[i]))
}

/// Gradient of `1 − IoU(pred, target)` by the quotient rule.
pub fn grad_iou_loss(pred: &BBox, target: &BBox) -> GradVector {
    let (iw, ih) = raw_overlap(pred, target);
    if iw <= 0.0 || ih <= 0.0 {
        return GradVector::zero();
    }
    // exact match is the global minimum; zero is a valid subgradient there
    if pred == target {
        return GradVector::zero();
    }
    let inter = iw * ih;
    let union = area(pred) + area(target) - inter;
    if union <= 0.0 {
        return GradVector::zero();
    }

    let (pw, ph) = (pred.width(), pred.height());
    let d_area = [-ph, -pw, ph, pw];

    let ind = |c: bool| if c { 1.0 } else { 0.0 };
    let d_iw = [
        -ind(pred.xmin() >= target.xmin()),
        0.0,
        ind(pred.xmax() <= target.xmax()),
        0.0,
    ];
    let d_ih = [
        0.0,
        -ind(pred.ymin() >= target.ymin()),
        0.0,
        ind(pred.ymax() <= target.ymax()),
    ];

    let u2 = union * union;
    GradVector::from_array(std::array::from_fn(|i| {
        let d_inter = ih * d_iw[i] + iw * d_ih[i];
        let d_union = d_area[i] - d_inter;
        -(union * d_inter - inter * d_union) / u2
    }))
}

/// Smooth IoU gradient for one example under a fixed blend weight.
pub fn grad_smooth_iou_frozen(pred: &BBox, target: &BBox, lambda: f64, params: HuberParams) -> GradVector {
    lambda * grad_iou_loss(pred, target) + (1.0 - lambda) * grad_huber(pred, target, params)
}

/// Gradient of example `k`'s Smooth IoU loss, with λ the batch mean IoU.
pub fn grad_smooth_iou(batch: &BoxBatch, k: usize, params: HuberParams) -> Result<GradVector> {
    let (pred, target) = batch.pair(k)?;
    Ok(grad_smooth_iou_frozen(pred, target, batch.mean_iou(), params))
}

/// Per-example gradient for any loss kind. `lambda` is only read for
/// Smooth IoU.
pub fn grad_example(kind: LossKind, pred: &BBox, target: &BBox, lambda: f64, params: HuberParams) -> GradVector {
    match kind {
        LossKind::Huber => grad_huber(pred, target, params),
        LossKind::Squared => grad_squared(pred, target),
        LossKind::Iou => grad_iou_loss(pred, target),
        LossKind::SmoothIou => grad_smooth_iou_frozen(pred, target, lambda, params),
    }
}

fn loss_example(kind: LossKind, pred: &BBox, target: &BBox, lambda: f64, params: HuberParams) -> f64 {
    match kind {
        LossKind::Huber => huber_box(pred, target, params),
        LossKind::Squared => squared_box(pred, target),
        LossKind::Iou => iou_loss(pred, target),
        LossKind::SmoothIou => blend(lambda, iou_loss(pred, target), huber_box(pred, target, params)),
    }
}

/// How the checker places predicted boxes relative to their targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OverlapRegime {
    Disjoint,
    Partial,
    Nested,
    /// Same size as the target, shifted in both axes while still overlapping.
    Shifted,
    /// Each sample picks one of the other four regimes uniformly.
    Mixed,
}

impl std::str::FromStr for OverlapRegime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "disjoint" => Ok(Self::Disjoint),
            "partial" => Ok(Self::Partial),
            "nested" => Ok(Self::Nested),
            "shifted" => Ok(Self::Shifted),
            "mixed" => Ok(Self::Mixed),
            other => Err(Error::InvalidParam(format!("unknown overlap regime '{other}'"))),
        }
    }
}

impl std::fmt::Display for OverlapRegime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Disjoint => "disjoint",
            Self::Partial => "partial",
            Self::Nested => "nested",
            Self::Shifted => "shifted",
            Self::Mixed => "mixed",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerConfig {
    pub regime: OverlapRegime,
    pub samples: usize,
    pub seed: u64,
    pub params: HuberParams,
    /// Number of pairs per Smooth IoU batch; the first pair is checked and
    /// the rest only contribute to λ.
    pub batch_size: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            regime: OverlapRegime::Mixed,
            samples: 1000,
            seed: 0,
            params: HuberParams::default(),
            batch_size: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckResult {
    pub max_relative_error: f64,
    pub num_points_checked: usize,
    pub num_skipped_near_kink: usize,
    pub tolerance: f64,
}

impl GradCheckResult {
    pub fn passed(&self) -> bool {
        self.max_relative_error < self.tolerance
    }
}

const FRAME: f64 = 100.0;
const MAX_DRAWS_PER_SAMPLE: usize = 100;
const MIN_SIDE: f64 = 4.0;
const MAX_SIDE: f64 = 30.0;

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

fn random_box(rng: &mut ChaCha8Rng) -> BBox {
    let w = uniform(rng, MIN_SIDE, MAX_SIDE);
    let h = uniform(rng, MIN_SIDE, MAX_SIDE);
    let x = uniform(rng, 0.0, FRAME - w);
    let y = uniform(rng, 0.0, FRAME - h);
    BBox::new(x, y, x + w, y + h).expect("sampled box is valid")
}

/// Samples a `(pred, target)` pair in the given regime.
pub(crate) fn sample_pair(rng: &mut ChaCha8Rng, regime: OverlapRegime) -> (BBox, BBox) {
    let target = random_box(rng);
    let (tw, th) = (target.width(), target.height());
    let (tcx, tcy) = target.center();
    let pred = match regime {
        OverlapRegime::Mixed => {
            let pick = match rng.random_range(0..4) {
                0 => OverlapRegime::Disjoint,
                1 => OverlapRegime::Partial,
                2 => OverlapRegime::Nested,
                _ => OverlapRegime::Shifted,
            };
            return sample_pair(rng, pick);
        }
        OverlapRegime::Disjoint => {
            let w = uniform(rng, MIN_SIDE, MAX_SIDE);
            let h = uniform(rng, MIN_SIDE, MAX_SIDE);
            let gap = uniform(rng, 0.5, 20.0);
            let along = uniform(rng, -1.0, 1.0);
            match rng.random_range(0..4) {
                0 => BBox::from_center(target.xmax() + gap + w / 2.0, tcy + along * th, w, h),
                1 => BBox::from_center(target.xmin() - gap - w / 2.0, tcy + along * th, w, h),
                2 => BBox::from_center(tcx + along * tw, target.ymax() + gap + h / 2.0, w, h),
                _ => BBox::from_center(tcx + along * tw, target.ymin() - gap - h / 2.0, w, h),
            }
        }
        OverlapRegime::Partial => loop {
            let w = uniform(rng, MIN_SIDE, MAX_SIDE);
            let h = uniform(rng, MIN_SIDE, MAX_SIDE);
            let dx = uniform(rng, -1.0, 1.0) * (tw + w) / 2.0;
            let dy = uniform(rng, -1.0, 1.0) * (th + h) / 2.0;
            let p = BBox::from_center(tcx + dx, tcy + dy, w, h).expect("positive size");
            if iou(&p, &target) > 0.0 && !p.contains(&target) && !target.contains(&p) {
                break Ok(p);
            }
        },
        OverlapRegime::Nested => {
            let fx = uniform(rng, 0.3, 0.9);
            let fy = uniform(rng, 0.3, 0.9);
            let (iw, ih) = (tw * fx, th * fy);
            let ox = uniform(rng, 0.0, tw - iw);
            let oy = uniform(rng, 0.0, th - ih);
            let inner = BBox::new(
                target.xmin() + ox,
                target.ymin() + oy,
                target.xmin() + ox + iw,
                target.ymin() + oy + ih,
            )
            .expect("inner box valid");
            if rng.random::<bool>() {
                Ok(inner)
            } else {
                // prediction encloses the target instead
                let grow = |rng: &mut ChaCha8Rng| uniform(rng, 0.5, 10.0);
                BBox::new(
                    target.xmin() - grow(rng),
                    target.ymin() - grow(rng),
                    target.xmax() + grow(rng),
                    target.ymax() + grow(rng),
                )
            }
        }
        OverlapRegime::Shifted => {
            let sign = |rng: &mut ChaCha8Rng| if rng.random::<bool>() { 1.0 } else { -1.0 };
            let dx = sign(rng) * uniform(rng, 0.05, 0.9) * tw;
            let dy = sign(rng) * uniform(rng, 0.05, 0.9) * th;
            target.translate(dx, dy)
        }
    }
    .expect("sampled prediction is valid");
    (pred, target)
}

fn near_huber_kink(pred: &BBox, target: &BBox, delta: f64, margin: f64) -> bool {
    pred.coords()
        .iter()
        .zip(target.coords())
        .any(|(p, t)| ((p - t).abs() - delta).abs() < margin)
}

fn near_iou_kink(pred: &BBox, target: &BBox, margin: f64) -> bool {
    let (rw, rh) = raw_overlap(pred, target);
    pred.coords()
        .iter()
        .zip(target.coords())
        .any(|(p, t)| (p - t).abs() < margin)
        || rw.abs() < margin
        || rh.abs() < margin
}

/// Compares analytic gradients against central differences on random pairs.
///
/// Draws pairs until `sampler.samples` points have been checked. Points within
/// `10·step` of a kink of the loss are skipped and counted separately.
/// The relative error of a component is `|analytic − numeric| / max(1, |numeric|)`.
pub fn finite_diff_check(
    kind: LossKind,
    sampler: &SamplerConfig,
    tolerance: f64,
    step: f64,
) -> Result<GradCheckResult> {
    if !(1e-7..=1e-3).contains(&step) {
        return Err(Error::InvalidParam(format!("step must lie in [1e-7, 1e-3], got {step}")));
    }
    if sampler.batch_size == 0 {
        return Err(Error::InvalidParam("sampler batch_size must be >= 1".into()));
    }
    if !(tolerance.is_finite() && tolerance > 0.0) {
        return Err(Error::InvalidParam(format!("tolerance must be > 0, got {tolerance}")));
    }
    let params = sampler.params;
    let margin = 10.0 * step;
    let mut rng = ChaCha8Rng::seed_from_u64(sampler.seed);
    let mut result = GradCheckResult {
        max_relative_error: 0.0,
        num_points_checked: 0,
        num_skipped_near_kink: 0,
        tolerance,
    };

    let max_draws = sampler.samples.saturating_mul(MAX_DRAWS_PER_SAMPLE).max(1);
    let mut draws = 0usize;
    while result.num_points_checked < sampler.samples {
        draws += 1;
        if draws > max_draws {
            return Err(Error::InvalidParam(format!(
                "gave up after {max_draws} draws with only {} non-kink points",
                result.num_points_checked
            )));
        }
        let (pred, target) = sample_pair(&mut rng, sampler.regime);
        let lambda = if kind == LossKind::SmoothIou {
            let mut preds = vec![pred];
            let mut targets = vec![target];
            for _ in 1..sampler.batch_size {
                let (p, t) = sample_pair(&mut rng, sampler.regime);
                preds.push(p);
                targets.push(t);
            }
            BoxBatch::new(preds, targets)?.mean_iou()
        } else {
            0.0
        };

        let kink = match kind {
            LossKind::Huber => near_huber_kink(&pred, &target, params.delta(), margin),
            LossKind::Squared => false,
            LossKind::Iou => near_iou_kink(&pred, &target, margin),
            LossKind::SmoothIou => {
                near_huber_kink(&pred, &target, params.delta(), margin) || near_iou_kink(&pred, &target, margin)
            }
        };
        if kink {
            result.num_skipped_near_kink += 1;
            continue;
        }

        let analytic = grad_example(kind, &pred, &target, lambda, params).to_array();
        let base = pred.coords();
        for (i, a) in analytic.iter().enumerate() {
            let mut plus = base;
            let mut minus = base;
            plus[i] += step;
            minus[i] -= step;
            let lp = loss_example(kind, &BBox::from_coords(plus)?, &target, lambda, params);
            let lm = loss_example(kind, &BBox::from_coords(minus)?, &target, lambda, params);
            let numeric = (lp - lm) / (2.0 * step);
            let rel = (a - numeric).abs() / numeric.abs().max(1.0);
            result.max_relative_error = result.max_relative_error.max(rel);
        }
        result.num_points_checked += 1;
    }
    Ok(result)
}
