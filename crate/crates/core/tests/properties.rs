mod common;

use proptest::prelude::*;
use rand_distr::{Distribution, Normal};
use safechance::calibration::{ece, fit, pav, BinScheme, CalKind, ScoredSample};
use safechance::conformal::{adaptive_bin, quantile_index};
use safechance::harness::{TensorData, TensorFile};
use safechance::predictors::kl_standard_normal;
use safechance::rng::seeded;
use safechance::sim::{Observation, FRAME_PIXELS};
use safechance::uda::{augment, photometric, AugKind, AugMagnitudes, Augmentation};

fn frame() -> impl Strategy<Value = Observation> {
    prop::collection::vec(0.0f64..=1.0, FRAME_PIXELS).prop_map(Observation::from_pixels)
}

fn samples(min: usize, max: usize) -> impl Strategy<Value = Vec<ScoredSample>> {
    prop::collection::vec((0.0f64..=1.0, any::<bool>()), min..max)
        .prop_map(|v| v.into_iter().map(|(s, l)| ScoredSample::new(s, l)).collect())
}

fn aug_kind() -> impl Strategy<Value = AugKind> {
    prop::sample::select(AugKind::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn augmentations_keep_frames_valid(y in frame(), kind in aug_kind(), seed in any::<u64>()) {
        let out = augment(&y, &Augmentation::new(kind, &AugMagnitudes::default(), seed));
        prop_assert!(out.is_valid());
    }

    #[test]
    fn photometric_shift_keeps_frames_valid(y in frame(), b in -1.0f64..1.0, c in 0.0f64..3.0) {
        prop_assert!(photometric(&y, b, c).is_valid());
    }

    #[test]
    fn calibrators_map_into_unit_interval(s in samples(20, 120)) {
        for kind in CalKind::ALL {
            let Ok(c) = fit(kind, &s, 10) else { continue };
            for x in s.iter().map(|x| x.score).chain([0.0, 0.5, 1.0]) {
                let p = c.apply(x);
                prop_assert!((0.0..=1.0).contains(&p), "{kind:?} gave {p}");
            }
        }
    }

    #[test]
    fn isotonic_is_monotone(s in samples(20, 120)) {
        let c = fit(CalKind::Isotonic, &s, 10).unwrap();
        let mut prev = f64::NEG_INFINITY;
        for i in 0..=200 {
            let p = c.apply(f64::from(i) / 200.0);
            prop_assert!(p >= prev - 1e-12);
            prev = p;
        }
    }

    #[test]
    fn pav_is_monotone_and_keeps_the_weighted_mean(
        v in prop::collection::vec((-5.0f64..5.0, 0.01f64..5.0), 1..60)
    ) {
        let (ys, ws): (Vec<f64>, Vec<f64>) = v.into_iter().unzip();
        let fit = pav(&ys, &ws);
        prop_assert!(fit.windows(2).all(|w| w[0] <= w[1] + 1e-12));
        let before: f64 = ys.iter().zip(&ws).map(|(y, w)| y * w).sum();
        let after: f64 = fit.iter().zip(&ws).map(|(y, w)| y * w).sum();
        prop_assert!((before - after).abs() < 1e-9 * (1.0 + before.abs()));
    }

    #[test]
    fn ece_lies_in_unit_interval(s in samples(1, 200), q in 1usize..20) {
        for scheme in [BinScheme::EqualWidth, BinScheme::EqualCount] {
            let e = ece(&s, q.min(s.len()), scheme).unwrap();
            prop_assert!((0.0..=1.0).contains(&e));
        }
    }

    #[test]
    fn adaptive_bins_are_equal_count_and_sorted(s in samples(10, 300), q in 1usize..10) {
        let b = adaptive_bin(&s, q).unwrap();
        prop_assert_eq!(b.bins.len(), q);
        prop_assert_eq!(b.discarded, s.len() % q);
        let flat: Vec<f64> = b.bins.iter().flatten().map(|x| x.score).collect();
        prop_assert!(flat.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(b.bins.iter().all(|bin| bin.len() == s.len() / q));
    }

    #[test]
    fn quantile_index_is_the_ceiling(m in 1usize..5000, a in 1u32..50) {
        let alpha = f64::from(a) / 100.0;
        let k = quantile_index(m, alpha);
        // Exact in integers: k = ceil((m + 1)(100 - a) / 100).
        let num = (m + 1) * (100 - a as usize);
        prop_assert_eq!(k, num.div_ceil(100));
    }

    #[test]
    fn tensor_files_roundtrip(dims in prop::collection::vec(1u32..6, 0..4), seed in any::<u64>()) {
        let n: usize = dims.iter().map(|&d| d as usize).product();
        let mut rng = seeded(seed);
        let f32s: Vec<f32> = (0..n).map(|_| rand::Rng::random::<f32>(&mut rng) * 200.0 - 100.0).collect();
        let u8s: Vec<u8> = (0..n).map(|i| (i * 37 % 256) as u8).collect();
        for data in [TensorData::F32(f32s), TensorData::U8(u8s)] {
            let t = TensorFile::new(dims.clone(), data).unwrap();
            let bytes = t.to_bytes();
            let back = TensorFile::from_bytes(&bytes).unwrap();
            prop_assert_eq!(&back, &t);
            prop_assert_eq!(back.to_bytes(), bytes);
        }
    }
}

#[test]
fn kl_matches_monte_carlo() {
    let mean = [0.3, -0.8, 1.1];
    let log_var = [-0.5, 0.4, 0.0];
    let exact = kl_standard_normal(&mean, &log_var);
    let mut rng = seeded(11);
    let std = Normal::new(0.0, 1.0).unwrap();
    let n = 400_000;
    let mut total = 0.0;
    for _ in 0..n {
        // log q(z) - log p(z) for z ~ q.
        for j in 0..3 {
            let e: f64 = std.sample(&mut rng);
            let z = mean[j] + (0.5 * log_var[j]).exp() * e;
            total += -0.5 * log_var[j] - 0.5 * e * e + 0.5 * z * z;
        }
    }
    let mc = total / f64::from(n);
    assert!((mc - exact).abs() < 0.01, "mc {mc} vs closed form {exact}");
}

#[test]
fn corrupt_tensor_files_are_rejected() {
    let t = TensorFile::new(vec![2, 2], TensorData::U8(vec![1, 2, 3, 4])).unwrap();
    let bytes = t.to_bytes();
    assert!(TensorFile::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(TensorFile::from_bytes(&bad).is_err());
}
