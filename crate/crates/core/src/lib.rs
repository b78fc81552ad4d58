//! Bounding-box localization losses.
//!
//! The crate provides the Huber, squared, IoU and Smooth IoU losses for
//! axis-aligned boxes, their analytic gradients with respect to the predicted
//! box, 1-D loss-profile sweeps, and a synthetic box-regression harness that
//! optimizes box coordinates directly under any of the losses.
//!
//! Smooth IoU blends the two ends of the spectrum:
//!
//! ```text
//! loss_k = λ · (1 − IoU_k) + (1 − λ) · Huber_k,    λ = mean_k IoU_k
//! ```
//!
//! where λ is recomputed for every minibatch and treated as a constant when
//! differentiating.
//!
//! ```
//! use boxloss::{smooth_iou_batch, BBox, BoxBatch, HuberParams};
//!
//! let same = BBox::new(0.0, 0.0, 10.0, 10.0).unwrap();
//! let far = BBox::new(20.0, 0.0, 30.0, 10.0).unwrap();
//! let batch = BoxBatch::new(vec![same, far], vec![same, same]).unwrap();
//! let report = smooth_iou_batch(&batch, HuberParams::default());
//! assert_eq!(report.lambda, 0.5);
//! assert_eq!(report.reduced_loss, 10.0);
//! ```

pub mod cli;
pub mod config;
pub mod csv;
mod error;
pub mod fit;
pub mod geometry;
pub mod gradients;
pub mod losses;
pub mod profiler;

pub use error::{Error, Result};
pub use fit::{
    compare_losses, fit, generate_dataset, Comparison, FitConfig, FitRegime, FitResult,
    OptimizerKind, Perturbation, RunRecord, SummaryRow,
};
pub use geometry::{area, intersection_dims, iou, iou_pixel_oracle, transform, BBox, BoxBatch, YxhwBox};
pub use gradients::{
    finite_diff_check, grad_huber, grad_iou_loss, grad_smooth_iou, grad_squared, GradCheckResult,
    GradVector, OverlapRegime, SamplerConfig,
};
pub use losses::{
    huber_box, huber_scalar, iou_loss, loss_batch, smooth_iou_batch, squared_box, HuberParams,
    LossKind, LossReport,
};
pub use profiler::{
    convexity_violations, delta_study, sweep, sweep_mismatch, LossColumn, SweepConfig, SweepRow,
};
