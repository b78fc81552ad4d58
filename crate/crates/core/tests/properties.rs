use boxloss::*;
use proptest::prelude::*;

fn bbox() -> impl Strategy<Value = BBox> {
    (-100.0..100.0f64, -100.0..100.0f64, 0.0..50.0f64, 0.0..50.0f64)
        .prop_map(|(x, y, w, h)| BBox::new(x, y, x + w, y + h).unwrap())
}

fn solid_bbox() -> impl Strategy<Value = BBox> {
    (-50.0..50.0f64, -50.0..50.0f64, 0.5..40.0f64, 0.5..40.0f64)
        .prop_map(|(x, y, w, h)| BBox::new(x, y, x + w, y + h).unwrap())
}

// multiples of 1/8 with small magnitude: every subtraction involved is exact
fn dyadic() -> impl Strategy<Value = f64> {
    (-800i32..800).prop_map(|n| n as f64 / 8.0)
}

fn batch() -> impl Strategy<Value = BoxBatch> {
    (1usize..8)
        .prop_flat_map(|k| (prop::collection::vec(solid_bbox(), k), prop::collection::vec(solid_bbox(), k)))
        .prop_map(|(p, t)| BoxBatch::new(p, t).unwrap())
}

proptest! {
    #[test]
    fn iou_bounded_and_symmetric(a in bbox(), b in bbox()) {
        let v = iou(&a, &b);
        prop_assert!((0.0..=1.0).contains(&v));
        prop_assert_eq!(v, iou(&b, &a));
    }

    #[test]
    fn iou_of_self_is_one(a in solid_bbox()) {
        prop_assert_eq!(iou(&a, &a), 1.0);
    }

    #[test]
    fn iou_invariant_to_shared_similarity(
        a in solid_bbox(), b in solid_bbox(), s in 0.1..10.0f64, dx in -100.0..100.0f64, dy in -100.0..100.0f64,
    ) {
        let v = iou(&a, &b);
        let scaled = iou(&a.scale(s).unwrap(), &b.scale(s).unwrap());
        let moved = iou(&a.translate(dx, dy).unwrap(), &b.translate(dx, dy).unwrap());
        prop_assert!((v - scaled).abs() <= 1e-12 * v.max(1e-300) + 1e-15);
        prop_assert!((v - moved).abs() <= 1e-12 * v.max(1e-300) + 1e-12);
    }

    #[test]
    fn transform_round_trip(y in dyadic(), x in dyadic(), h in 0u32..400, w in 0u32..400) {
        let b = YxhwBox { y1: y, x1: x, h: h as f64 / 8.0, w: w as f64 / 8.0 };
        let c = transform(b).unwrap();
        prop_assert_eq!(c.to_yxhw(), b);
    }

    #[test]
    fn huber_below_squared(z in -1e3..1e3f64, delta in 0.01..10.0f64) {
        let p = HuberParams::new(delta).unwrap();
        let h = huber_scalar(z, p);
        let s = 0.5 * z * z;
        prop_assert!(h <= s);
        prop_assert_eq!(h == s, z.abs() <= delta);
    }

    #[test]
    fn smooth_iou_between_its_parts(b in batch()) {
        let p = HuberParams::default();
        let r = smooth_iou_batch(&b, p);
        prop_assert!((0.0..=1.0).contains(&r.lambda));
        for (k, (pr, t)) in b.pairs().enumerate() {
            let (i, h) = (iou_loss(pr, t), huber_box(pr, t, p));
            let lo = i.min(h) * (1.0 - 1e-12);
            let hi = i.max(h) * (1.0 + 1e-12);
            prop_assert!(r.per_example_loss[k] >= lo && r.per_example_loss[k] <= hi);
            prop_assert!(r.per_example_loss[k] >= 0.0);
        }
    }

    #[test]
    fn smooth_iou_permutation_equivariant(b in batch(), rot in 0usize..8) {
        let p = HuberParams::default();
        let k = b.len();
        let r = rot % k;
        let mut pred = b.predicted().to_vec();
        let mut tgt = b.target().to_vec();
        pred.rotate_left(r);
        tgt.rotate_left(r);
        let shuffled = BoxBatch::new(pred, tgt).unwrap();
        let a = smooth_iou_batch(&b, p);
        let c = smooth_iou_batch(&shuffled, p);
        prop_assert!((a.lambda - c.lambda).abs() <= 1e-12);
        for i in 0..k {
            prop_assert!((a.per_example_loss[(i + r) % k] - c.per_example_loss[i]).abs() <= 1e-9);
        }
    }

    #[test]
    fn iou_gradient_zero_without_overlap(a in solid_bbox(), gap in 0.0..20.0f64) {
        let b = a.translate(a.width() + gap, 0.0).unwrap();
        prop_assert_eq!(grad_iou_loss(&b, &a), GradVector::zero());
    }
}
