use eitnet_core::detection::{
    bifpn_fuse, crop_region, detection_loss, grid_anchors, level_attention, match_anchors, nms, predict_boxes,
    BoundingBox, FeaturePyramid, FusionWeights,
};
use eitnet_core::{SeedRng, Tensor};
use proptest::prelude::*;

/// Integer-cornered box as `(x0, y0, x1, y1)`.
fn arb_int_box() -> impl Strategy<Value = (i32, i32, i32, i32)> {
    (0i32..12, 0i32..12, 1i32..8, 1i32..8).prop_map(|(x, y, w, h)| (x, y, x + w, y + h))
}

fn to_box(c: (i32, i32, i32, i32)) -> BoundingBox {
    BoundingBox::from_corners(c.0 as f64, c.1 as f64, c.2 as f64, c.3 as f64)
}

/// IoU by counting unit cells covered by each box.
fn cell_count_iou(a: (i32, i32, i32, i32), b: (i32, i32, i32, i32)) -> f64 {
    let (mut inter, mut union) = (0u32, 0u32);
    for y in 0..24 {
        for x in 0..24 {
            let ia = x >= a.0 && x < a.2 && y >= a.1 && y < a.3;
            let ib = x >= b.0 && x < b.2 && y >= b.1 && y < b.3;
            inter += u32::from(ia && ib);
            union += u32::from(ia || ib);
        }
    }
    inter as f64 / union as f64
}

fn scored_boxes() -> impl Strategy<Value = Vec<BoundingBox>> {
    prop::collection::vec((arb_int_box(), 0.0f64..1.0, 0u32..3), 0..12)
        .prop_map(|v| v.into_iter().map(|(c, s, k)| to_box(c).with_score(s, k)).collect())
}

#[test]
fn half_overlap_against_two_thresholds() {
    // 3x1 boxes shifted by one: intersection 2, union 4
    let a = BoundingBox::from_corners(0.0, 0.0, 3.0, 1.0).with_score(0.9, 0);
    let b = BoundingBox::from_corners(1.0, 0.0, 4.0, 1.0).with_score(0.8, 0);
    assert_eq!(a.iou(&b), 0.5);
    let kept = nms(&[b, a], 0.4);
    assert_eq!(kept.len(), 1);
    assert_eq!(kept[0].score, 0.9);
    assert_eq!(nms(&[a, b], 0.6).len(), 2);
}

#[test]
fn prediction_at_zero_logits_is_half_the_anchor() {
    let anchors = grid_anchors(2, 3, 4.0, (6.0, 8.0));
    let fused = Tensor::randn(&[5, 2, 3], 1.0, &mut SeedRng::new(1));
    let w = Tensor::zeros(&[5, 4]);
    let boxes = predict_boxes(&fused, &w, &Tensor::zeros(&[4]), &anchors).unwrap();
    for (b, a) in boxes.iter().zip(&anchors) {
        assert_eq!(b.coords(), a.coords().map(|v| 0.5 * v));
    }
    let saturated = predict_boxes(&fused, &w, &Tensor::full(&[4], 50.0), &anchors).unwrap();
    for (b, a) in saturated.iter().zip(&anchors) {
        assert_eq!(b.coords(), a.coords());
    }
    assert!(predict_boxes(&fused, &w, &Tensor::zeros(&[4]), &anchors[..5]).is_err());
}

#[test]
fn even_scores_cost_ln_two() {
    let b = BoundingBox::new(5.0, 5.0, 2.0, 2.0);
    let parts = detection_loss(&[vec![0.5, 0.5]], &[0], &[b], &[b], 1.0).unwrap();
    assert!((parts.total() - 2f64.ln()).abs() < 1e-15);
    assert_eq!(parts.reg, 0.0);
}

#[test]
fn zero_weight_leaves_classification_only() {
    let p = BoundingBox::new(5.0, 5.0, 2.0, 2.0);
    let t = BoundingBox::new(9.0, 1.0, 4.0, 3.0);
    let scores = [vec![0.2, 0.8], vec![0.6, 0.4]];
    let parts = detection_loss(&scores, &[1, 0], &[p], &[t], 0.0).unwrap();
    let want = -(0.8f64.ln() + 0.6f64.ln()) / 2.0;
    assert!((parts.total() - want).abs() < 1e-15);
    assert!(parts.reg > 0.0);
    // coordinate gaps 4, 4, 2, 1: smooth-L1 gives 3.5, 3.5, 1.5, 0.5
    assert!((parts.reg - 9.0 / 4.0).abs() < 1e-15);
    assert!(detection_loss(&scores, &[1, 0], &[p], &[t], -1.0).is_err());
    assert!(detection_loss(&[], &[], &[], &[], 1.0).is_err());
    assert!(detection_loss(&scores, &[2, 0], &[p], &[t], 1.0).is_err());
}

#[test]
fn crop_of_a_checkerboard() {
    let (h, w) = (6, 6);
    let board: Vec<f64> = (0..h * w).map(|i| ((i / w + i % w) % 2) as f64).collect();
    let frame = Tensor::new(vec![1, h, w], board).unwrap();
    let crop = crop_region(&frame, &BoundingBox::from_corners(1.0, 2.0, 4.0, 4.0), (2, 3)).unwrap();
    assert_eq!(crop.shape(), &[1, 2, 3]);
    assert_eq!(crop.data(), &[1.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
    // a box hanging off the frame is clamped to it
    let edge = crop_region(&frame, &BoundingBox::from_corners(4.0, 4.0, 9.0, 9.0), (2, 2)).unwrap();
    assert_eq!(edge.data(), &[0.0, 1.0, 1.0, 0.0]);
    assert!(crop_region(&frame, &BoundingBox::from_corners(7.0, 7.0, 9.0, 9.0), (2, 2)).is_err());
}

#[test]
fn clip_crop_applies_to_every_frame() {
    let clip = Tensor::randn(&[2, 3, 5, 5], 1.0, &mut SeedRng::new(4));
    let b = BoundingBox::from_corners(1.0, 1.0, 4.0, 3.0);
    let crop = crop_region(&clip, &b, (2, 3)).unwrap();
    assert_eq!(crop.shape(), &[2, 3, 2, 3]);
    for c in 0..2 {
        for t in 0..3 {
            for y in 0..2 {
                for x in 0..3 {
                    assert_eq!(crop.at(&[c, t, y, x]), clip.at(&[c, t, 1 + y, 1 + x]));
                }
            }
        }
    }
}

#[test]
fn level_attention_divides_with_offset() {
    let cur = Tensor::from_vec(vec![1.0, -2.0, 0.0]);
    let prev = Tensor::from_vec(vec![1.0, 3.0, 0.0]);
    let a = level_attention(&cur, &prev, 1.0).unwrap();
    assert_eq!(a.data(), &[0.5, -0.5, 0.0]);
    assert!(level_attention(&cur, &Tensor::zeros(&[2]), 1.0).is_err());
}

#[test]
fn fusion_rejects_mismatched_inputs() {
    let l = vec![Tensor::zeros(&[1, 2, 2]), Tensor::zeros(&[1, 2, 2])];
    assert!(bifpn_fuse(&FeaturePyramid::new(l.clone()).unwrap(), &FusionWeights::uniform(3)).is_err());
    assert!(FusionWeights::new(vec![1.0, -1.0], 1e-4).is_err());
    let odd = vec![Tensor::zeros(&[1, 2, 2]), Tensor::zeros(&[1, 1, 1])];
    if let Ok(p) = FeaturePyramid::new(odd) {
        assert!(bifpn_fuse(&p, &FusionWeights::uniform(2)).is_err());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn iou_matches_cell_counting(a in arb_int_box(), b in arb_int_box()) {
        let (ba, bb) = (to_box(a), to_box(b));
        let iou = ba.iou(&bb);
        prop_assert!((iou - cell_count_iou(a, b)).abs() < 1e-12);
        prop_assert_eq!(iou, bb.iou(&ba));
        prop_assert!((0.0..=1.0).contains(&iou));
        prop_assert_eq!(ba.iou(&ba), 1.0);
    }

    #[test]
    fn nms_keeps_a_sparse_ranked_subset(boxes in scored_boxes(), thr in 0.05f64..0.95) {
        let kept = nms(&boxes, thr);
        prop_assert!(kept.iter().all(|k| boxes.contains(k)));
        for (i, a) in kept.iter().enumerate() {
            for b in &kept[i + 1..] {
                prop_assert!(a.iou(b) <= thr);
                prop_assert!(a.score >= b.score);
            }
        }
        // every suppressed box overlaps a kept box of at least its score
        for b in boxes.iter().filter(|b| !kept.contains(b)) {
            prop_assert!(kept.iter().any(|k| k.score >= b.score && k.iou(b) > thr));
        }
        if let Some(top) = boxes.iter().map(|b| b.score).reduce(f64::max) {
            prop_assert_eq!(kept[0].score, top);
        }
        prop_assert_eq!(nms(&kept, thr), kept);
    }

    #[test]
    fn matching_is_one_to_one_and_overlapping(anchors in prop::collection::vec(arb_int_box(), 0..8), targets in prop::collection::vec(arb_int_box(), 0..8)) {
        let (a, t): (Vec<_>, Vec<_>) = (anchors.into_iter().map(to_box).collect(), targets.into_iter().map(to_box).collect());
        let pairs = match_anchors(&a, &t);
        let mut seen_a = std::collections::BTreeSet::new();
        let mut seen_t = std::collections::BTreeSet::new();
        for &(i, j) in &pairs {
            prop_assert!(seen_a.insert(i) && seen_t.insert(j));
            prop_assert!(a[i].iou(&t[j]) > 0.0);
        }
        prop_assert!(pairs.len() <= a.len().min(t.len()));
    }

    #[test]
    fn fusion_matches_weighted_loop(seed in any::<u64>(), n in 2usize..5, raw in prop::collection::vec(0.0f64..3.0, 5)) {
        let mut rng = SeedRng::new(seed);
        let levels: Vec<Tensor> = (0..n).map(|_| Tensor::randn(&[2, 3, 3], 1.0, &mut rng)).collect();
        let weights = FusionWeights::new(raw[..n].to_vec(), 1e-4).unwrap();
        let fused = bifpn_fuse(&FeaturePyramid::new(levels.clone()).unwrap(), &weights).unwrap();
        let total: f64 = raw[..n].iter().sum::<f64>() + 1e-4;
        for k in 0..fused.len() {
            let want: f64 = levels.iter().zip(&raw).map(|(l, w)| w / total * l.data()[k]).sum();
            prop_assert!((fused.data()[k] - want).abs() <= 1e-12);
            // normalised weights are non-negative and sum below one
            let lo = levels.iter().map(|l| l.data()[k]).fold(0.0f64, f64::min);
            let hi = levels.iter().map(|l| l.data()[k]).fold(0.0f64, f64::max);
            prop_assert!(fused.data()[k] >= lo - 1e-12 && fused.data()[k] <= hi + 1e-12);
        }
    }

    #[test]
    fn loss_grows_with_box_error(gap in 0.0f64..20.0, extra in 0.01f64..5.0) {
        let t = BoundingBox::new(10.0, 10.0, 4.0, 4.0);
        let near = BoundingBox::new(10.0 + gap, 10.0, 4.0, 4.0);
        let far = BoundingBox::new(10.0 + gap + extra, 10.0, 4.0, 4.0);
        let s = [vec![0.3, 0.7]];
        let a = detection_loss(&s, &[1], &[near], &[t], 1.0).unwrap().total();
        let b = detection_loss(&s, &[1], &[far], &[t], 1.0).unwrap().total();
        prop_assert!(a < b);
    }
}
