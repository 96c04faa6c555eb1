use std::collections::VecDeque;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use arc_core::dataset::{stratified_split, DatasetIndex, LabeledImage, Record, Split};
use arc_core::nn::layers::{softmax, ParamMut};
use arc_core::nn::{Checkpoint, Network, NetworkSpec};
use arc_core::preprocess::enhance::Histogram;
use arc_core::preprocess::{find_contours, morph_close, BinaryMask};
use arc_core::raster::{pad_square_resize, rotate, rotate_quarter_turns, to_luma};
use arc_core::train::{evaluate, AmsGrad, AmsGradConfig, Schedule};
use arc_core::Raster;

fn raster(max_side: usize, channels: usize) -> impl Strategy<Value = Raster> {
    (1..=max_side, 1..=max_side).prop_flat_map(move |(h, w)| {
        proptest::collection::vec(any::<u8>(), h * w * channels)
            .prop_map(move |data| Raster::new(h, w, channels, data).unwrap())
    })
}

fn mask(max_side: usize) -> impl Strategy<Value = BinaryMask> {
    (1..=max_side, 1..=max_side, 0.05f64..0.7).prop_flat_map(|(h, w, p)| {
        proptest::collection::vec(proptest::bool::weighted(p), h * w)
            .prop_map(move |bits| BinaryMask::from_bits(h, w, bits))
    })
}

fn components(m: &BinaryMask) -> usize {
    let (h, w) = (m.height(), m.width());
    let mut seen = vec![false; h * w];
    let mut n = 0;
    for start in 0..h * w {
        if !m.bits()[start] || seen[start] {
            continue;
        }
        n += 1;
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(i) = queue.pop_front() {
            let (r, c) = ((i / w) as isize, (i % w) as isize);
            for dr in -1..=1 {
                for dc in -1..=1 {
                    let (rr, cc) = (r + dr, c + dc);
                    if rr < 0 || cc < 0 || rr >= h as isize || cc >= w as isize {
                        continue;
                    }
                    let j = rr as usize * w + cc as usize;
                    if m.bits()[j] && !seen[j] {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                }
            }
        }
    }
    n
}

proptest! {
    #[test]
    fn quarter_turns_invert(img in raster(12, 3), k in 0u8..4) {
        let back = rotate_quarter_turns(&rotate_quarter_turns(&img, k), (4 - k) % 4);
        prop_assert_eq!(&back, &img);
        let angle = 90.0 * k as f64;
        prop_assert_eq!(rotate(&rotate(&img, angle, 0), -angle, 0), img);
    }

    #[test]
    fn pad_square_resize_is_square_with_dark_corners(img in raster(40, 3), side in 1usize..160) {
        let out = pad_square_resize(&img, side).unwrap();
        prop_assert_eq!((out.height(), out.width(), out.channels()), (side, side, 3));
        let (h, w) = (img.height(), img.width());
        // both padding bands are present and the resize only upsamples
        if h.abs_diff(w) >= 2 && side >= h.max(w) {
            for (r, c) in [(0, 0), (0, side - 1), (side - 1, 0), (side - 1, side - 1)] {
                prop_assert_eq!(out.pixel(r, c), &[0, 0, 0]);
            }
        }
    }

    #[test]
    fn luma_is_monotone(px in any::<[u8; 3]>(), ch in 0usize..3, bump in 1u8..=255) {
        let mut raised = px;
        raised[ch] = raised[ch].saturating_add(bump);
        let before = to_luma(&Raster::new(1, 1, 3, px.to_vec()).unwrap()).unwrap();
        let after = to_luma(&Raster::new(1, 1, 3, raised.to_vec()).unwrap()).unwrap();
        prop_assert!(after.data()[0] >= before.data()[0]);
    }

    #[test]
    fn closing_is_extensive_and_idempotent(m in mask(16)) {
        let c = morph_close(&m);
        for (r, col) in m.foreground() {
            prop_assert!(c.get(r, col));
        }
        prop_assert_eq!(morph_close(&c), c);
    }

    #[test]
    fn one_contour_per_component(m in mask(16)) {
        prop_assert_eq!(find_contours(&m).len(), components(&m));
    }

    #[test]
    fn histogram_integral_properties(luma in proptest::collection::vec(any::<u8>(), 1..400)) {
        let h = Histogram::of_luma(&luma);
        prop_assert_eq!(h.integral[0], 0.0);
        for i in 1..256 {
            prop_assert!(h.integral[i] >= h.integral[i - 1]);
        }
        prop_assert!((h.integral[255] + h.normalized[255] - 255.0).abs() < 1e-9);
    }

    #[test]
    fn softmax_ignores_constant_shift(z in proptest::collection::vec(-64i32..64, 2..12), s in -64i32..64) {
        // quarter-integer values keep every shifted logit exact
        let z: Vec<f64> = z.iter().map(|&v| v as f64 / 4.0).collect();
        let shifted: Vec<f64> = z.iter().map(|v| v + s as f64 / 4.0).collect();
        let (p, q) = (softmax(&z), softmax(&shifted));
        for (a, b) in p.iter().zip(&q) {
            prop_assert!((a - b).abs() < 1e-15);
        }
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn split_is_a_partition(counts in proptest::collection::vec(3usize..40, 1..6), seed in any::<u64>()) {
        let records = counts
            .iter()
            .enumerate()
            .flat_map(|(k, &n)| (0..n).map(move |i| Record {
                path: format!("{k}/{i}.png").into(),
                item_id: k,
                split: None,
            }))
            .collect();
        let index = DatasetIndex { records };
        let tagged = stratified_split(&index, counts.len(), (0.65, 0.25, 0.10), seed).unwrap();
        prop_assert_eq!(tagged.len(), index.len());
        let sizes: Vec<usize> = Split::ALL.iter().map(|&s| tagged.split(s).count()).collect();
        prop_assert_eq!(sizes.iter().sum::<usize>(), index.len());
        for (k, &n) in counts.iter().enumerate() {
            let train = tagged.split(Split::Train).filter(|r| r.item_id == k).count();
            prop_assert!((train as f64 - 0.65 * n as f64).abs() < 1.0);
        }
    }

    #[test]
    fn amsgrad_max_second_moment_never_decreases(grads in proptest::collection::vec(-10.0f64..10.0, 1..200)) {
        let mut opt = AmsGrad::<f64>::new(AmsGradConfig::default());
        let mut value = [0.5];
        let mut prev = 0.0;
        for g in grads {
            let grad = [g];
            opt.step(vec![ParamMut { name: "p", value: &mut value, grad: &grad, decay: true }], 0.001).unwrap();
            prop_assert!(opt.vhat[0][0] >= opt.v[0][0]);
            prop_assert!(opt.vhat[0][0] >= prev);
            prev = opt.vhat[0][0];
        }
    }

    #[test]
    fn lr_never_increases(history in proptest::collection::vec(0.0f64..3.0, 0..30), epoch in 0u32..60) {
        let s = Schedule::default();
        prop_assert!(s.lr_at(epoch + 1, &history) <= s.lr_at(epoch, &history));
        prop_assert!(s.lr_at(epoch, &history) > 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn evaluation_ignores_order(seed in any::<u64>()) {
        let spec = NetworkSpec::downsized();
        let net: Network<f32> = Network::seeded(spec.clone(), seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let items: Vec<LabeledImage> = (0..12)
            .map(|i| {
                let data = (0..20 * 20 * 3).map(|_| rand::Rng::random(&mut rng)).collect();
                LabeledImage { image: Raster::new(20, 20, 3, data).unwrap(), label: i % spec.classes }
            })
            .collect();
        let mut reversed = items.clone();
        reversed.reverse();
        let a = evaluate(&net, &items, 5).unwrap();
        let b = evaluate(&net, &reversed, 7).unwrap();
        prop_assert_eq!(a.matrix, b.matrix);
    }

    #[test]
    fn checkpoint_round_trip_is_byte_stable(seed in any::<u64>()) {
        let net: Network<f32> = Network::seeded(NetworkSpec::downsized(), seed).unwrap();
        let bytes = Checkpoint::from_network(&net, 1, seed, Default::default()).unwrap().to_bytes().unwrap();
        let back = Checkpoint::read_from(&bytes[..]).unwrap();
        let again = Checkpoint::from_network(&back.to_network::<f32>().unwrap(), 1, seed, Default::default()).unwrap();
        prop_assert_eq!(again.to_bytes().unwrap(), bytes);
    }
}
