//! Synthetic box regression.
//!
//! Predicted boxes are free parameters fitted directly to their targets by
//! gradient descent under one of the losses, and localization quality is
//! tracked as the mean IoU over the dataset.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::geometry::{iou, BBox, BoxBatch};
use crate::gradients::grad_example;
use crate::losses::{loss_batch, HuberParams, LossKind};
use crate::{Error, Result};

const MAX_RESAMPLE_ATTEMPTS: usize = 10_000;
const RMSPROP_EPS: f64 = 1e-8;

/// Constraint on the initial overlap between each prediction and its target.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitRegime {
    Overlapping,
    Disjoint,
    Mixed,
}

impl FromStr for FitRegime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "overlapping" => Ok(Self::Overlapping),
            "disjoint" => Ok(Self::Disjoint),
            "mixed" => Ok(Self::Mixed),
            other => Err(Error::InvalidParam(format!("unknown fit regime '{other}'"))),
        }
    }
}

impl fmt::Display for FitRegime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Overlapping => "overlapping",
            Self::Disjoint => "disjoint",
            Self::Mixed => "mixed",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    PlainGd,
    /// `s ← ρs + (1 − ρ)g²`, `p ← p − lr·g / (√s + 1e-8)`.
    RmspropLike,
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "plain_gd" => Ok(Self::PlainGd),
            "rmsprop_like" => Ok(Self::RmspropLike),
            other => Err(Error::InvalidParam(format!("unknown optimizer '{other}'"))),
        }
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::PlainGd => "plain_gd",
            Self::RmspropLike => "rmsprop_like",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Perturbation {
    /// Std-dev of the center shift, in units of the target's width/height.
    pub translation_sigma: f64,
    /// Std-dev of the log size factor.
    pub scale_sigma: f64,
    pub regime: FitRegime,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitConfig {
    pub num_pairs: usize,
    pub frame: BBox,
    pub target_size_range: (f64, f64),
    pub perturbation: Perturbation,
    pub loss_kind: LossKind,
    pub delta: f64,
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub momentum_or_decay: f64,
    pub steps: usize,
    pub seed: u64,
    pub batch_size: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            num_pairs: 50,
            frame: BBox::new(0.0, 0.0, 100.0, 100.0).expect("valid frame"),
            target_size_range: (10.0, 30.0),
            perturbation: Perturbation {
                translation_sigma: 0.5,
                scale_sigma: 0.2,
                regime: FitRegime::Mixed,
            },
            loss_kind: LossKind::SmoothIou,
            delta: 1.0,
            optimizer: OptimizerKind::RmspropLike,
            learning_rate: 0.05,
            momentum_or_decay: 0.9,
            steps: 500,
            seed: 0,
            batch_size: 50,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParam(msg));
        if self.num_pairs == 0 {
            return bad("num_pairs must be >= 1".into());
        }
        if self.batch_size == 0 || self.batch_size > self.num_pairs {
            return bad(format!(
                "batch_size must lie in [1, num_pairs={}], got {}",
                self.num_pairs, self.batch_size
            ));
        }
        if self.steps == 0 {
            return bad("steps must be >= 1".into());
        }
        let (lo, hi) = self.target_size_range;
        if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi) {
            return bad(format!("target_size_range must satisfy 0 < min <= max, got ({lo}, {hi})"));
        }
        if hi > self.frame.width() || hi > self.frame.height() {
            return bad(format!("target size {hi} does not fit in the frame"));
        }
        let p = &self.perturbation;
        if !(p.translation_sigma.is_finite() && p.translation_sigma >= 0.0) {
            return bad(format!("translation_sigma must be >= 0, got {}", p.translation_sigma));
        }
        if !(p.scale_sigma.is_finite() && p.scale_sigma >= 0.0) {
            return bad(format!("scale_sigma must be >= 0, got {}", p.scale_sigma));
        }
        HuberParams::new(self.delta)?;
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!("learning_rate must be > 0, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.momentum_or_decay) {
            return bad(format!("momentum_or_decay must lie in [0, 1), got {}", self.momentum_or_decay));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub mean_iou_initial: f64,
    pub mean_iou_final: f64,
    /// Reduced loss over the full dataset; entry 0 is before the first step.
    pub loss_trajectory: Vec<f64>,
    pub iou_trajectory: Vec<f64>,
    pub final_predictions: Vec<BBox>,
    pub diverged: bool,
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Samples targets inside the frame and perturbed predictions.
///
/// Deterministic in `config.seed`. In the disjoint and overlapping regimes the
/// center shift is redrawn until the pair satisfies the constraint.
pub fn generate_dataset(config: &FitConfig) -> Result<BoxBatch> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (lo, hi) = config.target_size_range;
    let frame = config.frame;
    let p = config.perturbation;

    let mut predicted = Vec::with_capacity(config.num_pairs);
    let mut target = Vec::with_capacity(config.num_pairs);
    for pair in 0..config.num_pairs {
        let w = uniform(&mut rng, lo, hi);
        let h = uniform(&mut rng, lo, hi);
        let x0 = uniform(&mut rng, frame.xmin(), frame.xmax() - w);
        let y0 = uniform(&mut rng, frame.ymin(), frame.ymax() - h);
        let t = BBox::new(x0, y0, x0 + w, y0 + h)?;

        let pw = w * (p.scale_sigma * normal(&mut rng)).exp();
        let ph = h * (p.scale_sigma * normal(&mut rng)).exp();

        let mut attempts = 0;
        let pred = loop {
            attempts += 1;
            let dx = p.translation_sigma * w * normal(&mut rng);
            let dy = p.translation_sigma * h * normal(&mut rng);
            let (gx, gy) = ((pw - w) / 2.0, (ph - h) / 2.0);
            let cand = BBox::new(t.xmin() + dx - gx, t.ymin() + dy - gy, t.xmax() + dx + gx, t.ymax() + dy + gy)?;
            let ok = match p.regime {
                FitRegime::Mixed => true,
                FitRegime::Disjoint => iou(&cand, &t) == 0.0,
                FitRegime::Overlapping => iou(&cand, &t) > 0.0,
            };
            if ok {
                break cand;
            }
            if attempts >= MAX_RESAMPLE_ATTEMPTS {
                return Err(Error::Infeasible { pair, attempts });
            }
        };
        predicted.push(pred);
        target.push(t);
    }
    BoxBatch::new(predicted, target)
}

/// Collapses an inverted extent to its midpoint.
fn project(c: &mut [f64; 4]) {
    for (lo, hi) in [(0, 2), (1, 3)] {
        if c[hi] < c[lo] {
            let mid = (c[lo] + c[hi]) / 2.0;
            c[lo] = mid;
            c[hi] = mid;
        }
    }
}

/// Runs gradient descent on the predicted boxes.
///
/// Each step takes the next `batch_size` pairs of a seed-shuffled order
/// (wrapping around), computes per-pair gradients (Smooth IoU uses the
/// minibatch mean IoU as a frozen λ), updates and projects. After every step
/// the reduced loss and mean IoU over the full dataset are recorded.
pub fn fit(config: &FitConfig) -> Result<FitResult> {
    let data = generate_dataset(config)?;
    run_fit(config, &data)
}

fn run_fit(config: &FitConfig, data: &BoxBatch) -> Result<FitResult> {
    let params = HuberParams::new(config.delta)?;
    let n = data.len();
    let targets = data.target();
    let mut preds: Vec<BBox> = data.predicted().to_vec();
    let mut sq_avg = vec![[0.0f64; 4]; n];

    let mut order: Vec<usize> = (0..n).collect();
    let mut order_rng = ChaCha8Rng::seed_from_u64(config.seed);
    order_rng.set_stream(1);
    order.shuffle(&mut order_rng);

    let record = |preds: &[BBox]| -> Result<(f64, f64)> {
        let batch = BoxBatch::new(preds.to_vec(), targets.to_vec())?;
        let r = loss_batch(&batch, config.loss_kind, params);
        let mean_iou = r.per_example_iou.iter().sum::<f64>() / n as f64;
        Ok((r.reduced_loss, mean_iou))
    };

    let (loss0, iou0) = record(&preds)?;
    let mut loss_trajectory = vec![loss0];
    let mut iou_trajectory = vec![iou0];
    let mut diverged = false;
    let mut cursor = 0usize;

    for _ in 0..config.steps {
        if diverged {
            loss_trajectory.push(*loss_trajectory.last().unwrap());
            iou_trajectory.push(*iou_trajectory.last().unwrap());
            continue;
        }
        let idx: Vec<usize> = (0..config.batch_size).map(|i| order[(cursor + i) % n]).collect();
        cursor = (cursor + config.batch_size) % n;

        let lambda = idx.iter().map(|&k| iou(&preds[k], &targets[k])).sum::<f64>() / idx.len() as f64;

        let mut updated = Vec::with_capacity(idx.len());
        for &k in &idx {
            let g = grad_example(config.loss_kind, &preds[k], &targets[k], lambda, params).to_array();
            let mut c = preds[k].coords();
            match config.optimizer {
                OptimizerKind::PlainGd => {
                    for i in 0..4 {
                        c[i] -= config.learning_rate * g[i];
                    }
                }
                OptimizerKind::RmspropLike => {
                    let rho = config.momentum_or_decay;
                    let s = &mut sq_avg[k];
                    for i in 0..4 {
                        s[i] = rho * s[i] + (1.0 - rho) * g[i] * g[i];
                        c[i] -= config.learning_rate * g[i] / (s[i].sqrt() + RMSPROP_EPS);
                    }
                }
            }
            if !c.iter().all(|v| v.is_finite()) {
                diverged = true;
                break;
            }
            project(&mut c);
            updated.push((k, BBox::from_coords(c)?));
        }
        if diverged {
            loss_trajectory.push(*loss_trajectory.last().unwrap());
            iou_trajectory.push(*iou_trajectory.last().unwrap());
            continue;
        }
        for (k, b) in updated {
            preds[k] = b;
        }

        let (l, m) = record(&preds)?;
        loss_trajectory.push(l);
        iou_trajectory.push(m);
    }

    Ok(FitResult {
        mean_iou_initial: iou_trajectory[0],
        mean_iou_final: *iou_trajectory.last().unwrap(),
        loss_trajectory,
        iou_trajectory,
        final_predictions: preds,
        diverged,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub loss_kind: LossKind,
    pub mean_final_iou: f64,
    /// Population standard deviation across seeds.
    pub stddev_final_iou: f64,
    pub mean_initial_iou: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub loss_kind: LossKind,
    pub seed: u64,
    pub result: FitResult,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub rows: Vec<SummaryRow>,
    pub runs: Vec<RunRecord>,
}

/// Runs every loss kind on the datasets of seeds `config.seed .. config.seed + num_seeds`.
///
/// A seed's dataset is generated once and shared by all kinds, so initial
/// boxes are identical across kinds.
pub fn compare_losses(config: &FitConfig, kinds: &[LossKind], num_seeds: usize) -> Result<Comparison> {
    if kinds.is_empty() {
        return Err(Error::InvalidParam("compare needs at least one loss kind".into()));
    }
    if num_seeds == 0 {
        return Err(Error::InvalidParam("num_seeds must be >= 1".into()));
    }
    let mut runs = Vec::with_capacity(kinds.len() * num_seeds);
    for s in 0..num_seeds as u64 {
        let seed = config.seed.wrapping_add(s);
        let base = FitConfig { seed, ..*config };
        let data = generate_dataset(&base)?;
        for &kind in kinds {
            let cfg = FitConfig { loss_kind: kind, ..base };
            runs.push(RunRecord {
                loss_kind: kind,
                seed,
                result: run_fit(&cfg, &data)?,
            });
        }
    }

    let rows = kinds
        .iter()
        .map(|&kind| {
            let finals: Vec<f64> = runs
                .iter()
                .filter(|r| r.loss_kind == kind)
                .map(|r| r.result.mean_iou_final)
                .collect();
            let initials: Vec<f64> = runs
                .iter()
                .filter(|r| r.loss_kind == kind)
                .map(|r| r.result.mean_iou_initial)
                .collect();
            let m = finals.len() as f64;
            let mean = finals.iter().sum::<f64>() / m;
            let var = finals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m;
            SummaryRow {
                loss_kind: kind,
                mean_final_iou: mean,
                stddev_final_iou: var.sqrt(),
                mean_initial_iou: initials.iter().sum::<f64>() / m,
            }
        })
        .collect();
    Ok(Comparison { rows, runs })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(kind: LossKind, regime: FitRegime) -> FitConfig {
        FitConfig {
            num_pairs: 20,
            steps: 100,
            batch_size: 5,
            loss_kind: kind,
            perturbation: Perturbation {
                translation_sigma: if regime == FitRegime::Disjoint { 2.0 } else { 0.3 },
                scale_sigma: 0.1,
                regime,
            },
            ..FitConfig::default()
        }
    }

    #[test]
    fn zero_perturbation_gives_identity() {
        let cfg = FitConfig {
            perturbation: Perturbation {
                translation_sigma: 0.0,
                scale_sigma: 0.0,
                regime: FitRegime::Mixed,
            },
            ..FitConfig::default()
        };
        let data = generate_dataset(&cfg).unwrap();
        assert_eq!(data.predicted(), data.target());
        assert_eq!(data.mean_iou(), 1.0);
    }

    #[test]
    fn disjoint_regime_is_disjoint() {
        let data = generate_dataset(&small(LossKind::Huber, FitRegime::Disjoint)).unwrap();
        assert!(data.pairs().all(|(p, t)| iou(p, t) == 0.0));
        let data = generate_dataset(&small(LossKind::Huber, FitRegime::Overlapping)).unwrap();
        assert!(data.pairs().all(|(p, t)| iou(p, t) > 0.0));
    }

    #[test]
    fn infeasible_regime_is_reported() {
        let mut cfg = small(LossKind::Huber, FitRegime::Disjoint);
        cfg.perturbation.translation_sigma = 0.0;
        assert!(matches!(generate_dataset(&cfg), Err(Error::Infeasible { pair: 0, .. })));
    }

    #[test]
    fn same_seed_same_dataset() {
        let cfg = small(LossKind::Huber, FitRegime::Mixed);
        let a = generate_dataset(&cfg).unwrap();
        let b = generate_dataset(&cfg).unwrap();
        for (x, y) in a.predicted().iter().zip(b.predicted()) {
            assert_eq!(x.coords().map(f64::to_bits), y.coords().map(f64::to_bits));
        }
        let c = generate_dataset(&FitConfig { seed: 1, ..cfg }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn validation_errors() {
        let ok = FitConfig::default();
        assert!(FitConfig { batch_size: 51, ..ok }.validate().is_err());
        assert!(FitConfig { steps: 0, ..ok }.validate().is_err());
        assert!(FitConfig { learning_rate: 0.0, ..ok }.validate().is_err());
        assert!(FitConfig { momentum_or_decay: 1.0, ..ok }.validate().is_err());
        assert!(FitConfig { target_size_range: (5.0, 2.0), ..ok }.validate().is_err());
        assert!(FitConfig { target_size_range: (5.0, 200.0), ..ok }.validate().is_err());
        assert!(ok.validate().is_ok());
    }

    #[test]
    fn trajectories_have_steps_plus_one_entries() {
        let r = fit(&small(LossKind::SmoothIou, FitRegime::Mixed)).unwrap();
        assert_eq!(r.loss_trajectory.len(), 101);
        assert_eq!(r.iou_trajectory.len(), 101);
        assert!(r.iou_trajectory.iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(!r.diverged);
    }

    #[test]
    fn iou_loss_cannot_leave_the_plateau() {
        let cfg = small(LossKind::Iou, FitRegime::Disjoint);
        let start = generate_dataset(&cfg).unwrap();
        for opt in [OptimizerKind::PlainGd, OptimizerKind::RmspropLike] {
            let r = fit(&FitConfig { optimizer: opt, ..cfg }).unwrap();
            assert!(r.iou_trajectory.iter().all(|&v| v == 0.0));
            assert_eq!(r.final_predictions, start.predicted());
        }
    }

    #[test]
    fn smooth_iou_first_step_matches_huber_when_disjoint() {
        let cfg = FitConfig { steps: 1, ..small(LossKind::SmoothIou, FitRegime::Disjoint) };
        let s = fit(&cfg).unwrap();
        let h = fit(&FitConfig { loss_kind: LossKind::Huber, ..cfg }).unwrap();
        for (a, b) in s.final_predictions.iter().zip(&h.final_predictions) {
            assert_eq!(a.coords().map(f64::to_bits), b.coords().map(f64::to_bits));
        }
    }

    #[test]
    fn huber_improves_overlapping_pairs() {
        let cfg = FitConfig {
            num_pairs: 50,
            steps: 500,
            learning_rate: 0.05,
            loss_kind: LossKind::Huber,
            perturbation: Perturbation {
                translation_sigma: 0.3,
                scale_sigma: 0.1,
                regime: FitRegime::Overlapping,
            },
            ..FitConfig::default()
        };
        let r = fit(&cfg).unwrap();
        assert!(r.mean_iou_final > r.mean_iou_initial, "{} -> {}", r.mean_iou_initial, r.mean_iou_final);
    }

    #[test]
    fn fit_is_deterministic() {
        for opt in [OptimizerKind::PlainGd, OptimizerKind::RmspropLike] {
            let cfg = FitConfig { optimizer: opt, ..small(LossKind::SmoothIou, FitRegime::Mixed) };
            let a = fit(&cfg).unwrap();
            let b = fit(&cfg).unwrap();
            assert_eq!(
                a.loss_trajectory.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                b.loss_trajectory.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
            );
            assert_eq!(a, b);
        }
    }

    #[test]
    fn projection_collapses_inverted_extents() {
        let mut c = [5.0, 1.0, 3.0, 2.0];
        project(&mut c);
        assert_eq!(c, [4.0, 1.0, 4.0, 2.0]);
    }

    #[test]
    fn comparison_rows() {
        let cfg = small(LossKind::Huber, FitRegime::Mixed);
        let cmp = compare_losses(&cfg, &[LossKind::Huber, LossKind::SmoothIou], 3).unwrap();
        assert_eq!(cmp.rows.len(), 2);
        assert_eq!(cmp.runs.len(), 6);
        assert_eq!(cmp.rows[0].mean_initial_iou, cmp.rows[1].mean_initial_iou);

        let one = compare_losses(&cfg, &[LossKind::SmoothIou], 1).unwrap();
        let direct = fit(&FitConfig { loss_kind: LossKind::SmoothIou, ..cfg }).unwrap();
        assert_eq!(one.rows[0].mean_final_iou, direct.mean_iou_final);
        assert_eq!(one.rows[0].stddev_final_iou, 0.0);

        let dis = small(LossKind::Iou, FitRegime::Disjoint);
        let cmp = compare_losses(&dis, &[LossKind::Iou], 2).unwrap();
        assert_eq!(cmp.rows[0].mean_final_iou, 0.0);
        assert_eq!(cmp.rows[0].mean_initial_iou, 0.0);
    }
}
