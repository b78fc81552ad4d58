//! Axis-aligned boxes, areas, overlap and intersection-over-union.
//!
//! Coordinates are continuous reals: a box covers `[xmin, xmax] × [ymin, ymax]`
//! and its area is `(xmax − xmin)(ymax − ymin)` with no pixel-inclusive `+1`.
//! Zero-width or zero-height boxes are valid; inverted boxes are rejected.

use crate::{Error, Result};

/// Axis-aligned rectangle in corner form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    xmin: f64,
    ymin: f64,
    xmax: f64,
    ymax: f64,
}

impl BBox {
    pub fn new(xmin: f64, ymin: f64, xmax: f64, ymax: f64) -> Result<Self> {
        if ![xmin, ymin, xmax, ymax].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidBox(format!(
                "non-finite coordinate in ({xmin}, {ymin}, {xmax}, {ymax})"
            )));
        }
        if xmax < xmin || ymax < ymin {
            return Err(Error::InvalidBox(format!(
                "inverted box ({xmin}, {ymin}, {xmax}, {ymax})"
            )));
        }
        Ok(Self { xmin, ymin, xmax, ymax })
    }

    /// Builds a box from `[xmin, ymin, xmax, ymax]`.
    pub fn from_coords(c: [f64; 4]) -> Result<Self> {
        Self::new(c[0], c[1], c[2], c[3])
    }

    /// Box of the given size centered at `(cx, cy)`.
    pub fn from_center(cx: f64, cy: f64, width: f64, height: f64) -> Result<Self> {
        Self::new(
            cx - width / 2.0,
            cy - height / 2.0,
            cx + width / 2.0,
            cy + height / 2.0,
        )
    }

    pub fn xmin(&self) -> f64 {
        self.xmin
    }

    pub fn ymin(&self) -> f64 {
        self.ymin
    }

    pub fn xmax(&self) -> f64 {
        self.xmax
    }

    pub fn ymax(&self) -> f64 {
        self.ymax
    }

    pub fn width(&self) -> f64 {
        self.xmax - self.xmin
    }

    pub fn height(&self) -> f64 {
        self.ymax - self.ymin
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.xmin + self.xmax) / 2.0, (self.ymin + self.ymax) / 2.0)
    }

    /// Corner coordinates in `[xmin, ymin, xmax, ymax]` order, the same order
    /// used by [`GradVector`](crate::GradVector).
    pub fn coords(&self) -> [f64; 4] {
        [self.xmin, self.ymin, self.xmax, self.ymax]
    }

    /// Multiplies every coordinate by `s`.
    pub fn scale(&self, s: f64) -> Result<Self> {
        if !(s.is_finite() && s > 0.0) {
            return Err(Error::InvalidParam(format!("scale factor must be positive, got {s}")));
        }
        Self::new(self.xmin * s, self.ymin * s, self.xmax * s, self.ymax * s)
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Result<Self> {
        Self::new(self.xmin + dx, self.ymin + dy, self.xmax + dx, self.ymax + dy)
    }

    pub fn contains(&self, other: &BBox) -> bool {
        self.xmin <= other.xmin
            && self.ymin <= other.ymin
            && self.xmax >= other.xmax
            && self.ymax >= other.ymax
    }

    pub fn to_yxhw(&self) -> YxhwBox {
        YxhwBox {
            y1: self.ymin,
            x1: self.xmin,
            h: self.height(),
            w: self.width(),
        }
    }
}

/// Rectangle given as top-left corner plus size, `(y1, x1, h, w)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YxhwBox {
    pub y1: f64,
    pub x1: f64,
    pub h: f64,
    pub w: f64,
}

impl YxhwBox {
    pub fn new(y1: f64, x1: f64, h: f64, w: f64) -> Self {
        Self { y1, x1, h, w }
    }
}

/// Converts `(y1, x1, h, w)` to corner form `(x1, y1, x1 + w, y1 + h)`.
pub fn transform(b: YxhwBox) -> Result<BBox> {
    if !(b.h.is_finite() && b.w.is_finite() && b.y1.is_finite() && b.x1.is_finite()) {
        return Err(Error::InvalidBox(format!("non-finite yxhw box {b:?}")));
    }
    if b.h < 0.0 || b.w < 0.0 {
        return Err(Error::InvalidBox(format!(
            "negative size h={} w={} in yxhw box",
            b.h, b.w
        )));
    }
    BBox::new(b.x1, b.y1, b.x1 + b.w, b.y1 + b.h)
}

pub fn area(b: &BBox) -> f64 {
    b.width() * b.height()
}

/// Signed overlap lengths `(min(xmax) − max(xmin), min(ymax) − max(ymin))`
/// before clamping at zero. Negative values measure the gap between the boxes.
pub(crate) fn raw_overlap(a: &BBox, b: &BBox) -> (f64, f64) {
    (
        a.xmax.min(b.xmax) - a.xmin.max(b.xmin),
        a.ymax.min(b.ymax) - a.ymin.max(b.ymin),
    )
}

/// Intersection width and height, each clamped at zero.
pub fn intersection_dims(a: &BBox, b: &BBox) -> (f64, f64) {
    let (w, h) = raw_overlap(a, b);
    (w.max(0.0), h.max(0.0))
}

/// Intersection over union, clamped to `[0, 1]`.
///
/// When both boxes are degenerate the union is zero and the result is 0.
/// The expression is symmetric in its arguments bit-for-bit.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let (iw, ih) = intersection_dims(a, b);
    let inter = iw * ih;
    let union = area(a) + area(b) - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Grid-rasterized IoU estimate.
///
/// Lays a `resolution × resolution` grid of cell centers over the joint
/// bounding hull of the two boxes and counts the centers falling inside each
/// box (half-open membership `[min, max)`, so boxes that merely touch share
/// no cells). Identical boxes give exactly 1 and disjoint boxes exactly 0.
/// Intended as a slow, independent check of [`iou`].
pub fn iou_pixel_oracle(a: &BBox, b: &BBox, resolution: usize) -> f64 {
    let resolution = resolution.max(1);
    let x0 = a.xmin.min(b.xmin);
    let x1 = a.xmax.max(b.xmax);
    let y0 = a.ymin.min(b.ymin);
    let y1 = a.ymax.max(b.ymax);
    if x1 <= x0 || y1 <= y0 {
        return 0.0;
    }
    let dx = (x1 - x0) / resolution as f64;
    let dy = (y1 - y0) / resolution as f64;
    let inside = |bx: &BBox, x: f64, y: f64| x >= bx.xmin && x < bx.xmax && y >= bx.ymin && y < bx.ymax;

    let mut in_both = 0u64;
    let mut in_either = 0u64;
    for j in 0..resolution {
        let y = y0 + (j as f64 + 0.5) * dy;
        for i in 0..resolution {
            let x = x0 + (i as f64 + 0.5) * dx;
            let ia = inside(a, x, y);
            let ib = inside(b, x, y);
            in_both += u64::from(ia && ib);
            in_either += u64::from(ia || ib);
        }
    }
    if in_either == 0 {
        0.0
    } else {
        in_both as f64 / in_either as f64
    }
}

/// Index-aligned predicted and target boxes.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxBatch {
    predicted: Vec<BBox>,
    target: Vec<BBox>,
}

impl BoxBatch {
    pub fn new(predicted: Vec<BBox>, target: Vec<BBox>) -> Result<Self> {
        if predicted.len() != target.len() {
            return Err(Error::LengthMismatch {
                predicted: predicted.len(),
                target: target.len(),
            });
        }
        if predicted.is_empty() {
            return Err(Error::EmptyBatch);
        }
        Ok(Self { predicted, target })
    }

    /// Builds a batch from `(y1, x1, h, w)` boxes, converting both sides.
    pub fn from_yxhw(predicted: &[YxhwBox], target: &[YxhwBox]) -> Result<Self> {
        let p = predicted.iter().map(|b| transform(*b)).collect::<Result<Vec<_>>>()?;
        let t = target.iter().map(|b| transform(*b)).collect::<Result<Vec<_>>>()?;
        Self::new(p, t)
    }

    pub fn len(&self) -> usize {
        self.predicted.len()
    }

    /// Always false; an empty batch cannot be constructed.
    pub fn is_empty(&self) -> bool {
        self.predicted.is_empty()
    }

    pub fn predicted(&self) -> &[BBox] {
        &self.predicted
    }

    pub fn target(&self) -> &[BBox] {
        &self.target
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&BBox, &BBox)> + '_ {
        self.predicted.iter().zip(self.target.iter())
    }

    pub fn pair(&self, k: usize) -> Result<(&BBox, &BBox)> {
        match (self.predicted.get(k), self.target.get(k)) {
            (Some(p), Some(t)) => Ok((p, t)),
            _ => Err(Error::IndexOutOfRange { index: k, len: self.len() }),
        }
    }

    pub fn mean_iou(&self) -> f64 {
        self.pairs().map(|(p, t)| iou(p, t)).sum::<f64>() / self.len() as f64
    }
}
