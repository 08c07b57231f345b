use peace::backend::LogitMap;
use peace::fusion::{drop_negatives, fuse_stack, softmax_fuse, CollapseMode, LogitStack};
use peace::metrics::{iou, BinaryMask};
use proptest::prelude::*;

fn stack_strategy() -> impl Strategy<Value = (LogitStack, usize)> {
    (1usize..8, 1u32..6, 1u32..6).prop_flat_map(|(k, w, h)| {
        (
            proptest::collection::vec(
                proptest::collection::vec(-30.0f32..30.0, (w * h) as usize),
                k,
            ),
            1..=k,
        )
            .prop_map(move |(chs, x)| {
                let maps = chs
                    .into_iter()
                    .map(|v| LogitMap::new(w, h, v).unwrap())
                    .collect();
                (LogitStack::new(maps).unwrap(), x)
            })
    })
}

proptest! {
    #[test]
    fn heatmap_values_are_probabilities((stack, x) in stack_strategy()) {
        let k = stack.len();
        let sum = fuse_stack(&stack, x, k - x, CollapseMode::Sum).unwrap();
        let max = fuse_stack(&stack, x, k - x, CollapseMode::Max).unwrap();
        for (s, m) in sum.values.iter().zip(&max.values) {
            prop_assert!((0.0..=1.0 + 1e-12).contains(s));
            prop_assert!(*m <= *s + 1e-12);
        }
        if x == k {
            prop_assert!(sum.values.iter().all(|v| (v - 1.0).abs() < 1e-9));
        }
    }

    #[test]
    fn fused_channels_partition_unity((stack, x) in stack_strategy()) {
        let fused = softmax_fuse(&stack).unwrap();
        let n = fused.channels[0].len();
        for p in 0..n {
            let s: f64 = fused.channels.iter().map(|c| c[p]).sum();
            prop_assert!((s - 1.0).abs() < 1e-9);
        }
        let pos = drop_negatives(&fused, x, stack.len() - x).unwrap();
        prop_assert_eq!(&pos.channels[..], &fused.channels[..x]);
    }

    #[test]
    fn iou_is_symmetric_and_bounded(a in proptest::collection::vec(any::<bool>(), 36), b in proptest::collection::vec(any::<bool>(), 36)) {
        let ma = BinaryMask::new(6, 6, a).unwrap();
        let mb = BinaryMask::new(6, 6, b).unwrap();
        let ab = iou(&ma, &mb).unwrap();
        prop_assert_eq!(ab, iou(&mb, &ma).unwrap());
        prop_assert!((0.0..=1.0).contains(&ab));
        if ma.count() > 0 {
            prop_assert_eq!(iou(&ma, &ma).unwrap(), 1.0);
        }
    }
}
