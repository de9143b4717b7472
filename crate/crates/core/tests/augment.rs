use autodiff::RngStream;
use fplab::augment::fmix::{apply_mask, mask_autocorrelation};
use fplab::augment::geometry::flip_horizontal;
use fplab::augment::{fmix_mask, fmix_mix_with_lambda, AugmentOp, BinaryMask, FmixConfig, Pipeline};
use fplab::{Image, ImageSample, Label};
use proptest::prelude::*;
use rayon::prelude::*;

fn random_sample(seed: u64, size: usize, label: Label) -> ImageSample {
    let mut rng = RngStream::new(seed, 77);
    let img = Image::gray(size, size, (0..size * size).map(|_| rng.uniform()).collect()).unwrap();
    let mut s = ImageSample::new(img, label);
    s.meta.subject = seed as u32;
    s.meta.impression = 3;
    s
}

fn bytes(img: &Image) -> Vec<u8> {
    img.data.iter().flat_map(|v| v.to_le_bytes()).collect()
}

#[test]
fn all_skips_leave_the_sample_untouched() {
    let s = random_sample(1, 32, Label::Spoof);
    let mut p = Pipeline::new(AugmentOp::strong_defaults());
    p.probability = 0.0;
    for seed in 0..20 {
        let (out, log) = p.apply(&s, &mut RngStream::new(seed, 0));
        assert!(log.is_empty());
        assert_eq!(out, s);
    }
}

#[test]
fn hflip_is_an_involution() {
    let s = random_sample(2, 17, Label::Live);
    assert_eq!(flip_horizontal(&flip_horizontal(&s.image)), s.image);
    let mut p = Pipeline::new(vec![AugmentOp::HFlip]);
    p.probability = 1.0;
    let once = p.apply(&s, &mut RngStream::new(0, 0)).0;
    let twice = p.apply(&once, &mut RngStream::new(0, 0)).0;
    assert_ne!(once.image, s.image);
    assert_eq!(twice, s);
}

#[test]
fn pipeline_is_identical_across_thread_counts() {
    let samples: Vec<ImageSample> = (0..24).map(|i| random_sample(i, 32, Label::Live)).collect();
    let p = Pipeline::new(AugmentOp::strong_defaults());
    let run = |threads: usize| -> Vec<Vec<u8>> {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            samples
                .par_iter()
                .enumerate()
                .map(|(i, s)| bytes(&p.apply(s, &mut RngStream::new(99, i as u64)).0.image))
                .collect()
        })
    };
    let one = run(1);
    assert_eq!(one, run(4));
    assert_eq!(one, run(1));
}

#[test]
fn invalid_ranges_are_rejected() {
    assert!(AugmentOp::Contrast { min: 1.2, max: 0.8 }.validate().is_err());
    assert!(AugmentOp::Crop { min_area: 0.0 }.validate().is_err());
    assert!(AugmentOp::Rotate { max_degrees: 200.0 }.validate().is_err());
    let mut p = Pipeline::new(AugmentOp::strong_defaults());
    assert!(p.validate().is_ok());
    p.probability = 1.5;
    assert!(p.validate().is_err());
}

fn params_in_range(op: &AugmentOp, params: &[f32], side: f32) -> bool {
    let within = |v: f32, lo: f32, hi: f32| v >= lo && v <= hi;
    match *op {
        AugmentOp::HFlip | AugmentOp::VFlip => params.is_empty(),
        AugmentOp::Translate { max_fraction } => params.iter().all(|&d| d.abs() <= max_fraction * side),
        AugmentOp::Crop { min_area } => params.is_empty() || within(params[0], min_area, 1.0),
        AugmentOp::Affine {
            max_shear,
            min_scale,
            max_scale,
        } => params[0].abs() <= max_shear && within(params[1], min_scale, max_scale),
        AugmentOp::Rotate { max_degrees } => params[0].abs() <= max_degrees,
        AugmentOp::Brightness { max_delta } => params[0].abs() <= max_delta,
        AugmentOp::Contrast { min, max } => within(params[0], min, max),
    }
}

proptest! {
    #[test]
    fn drawn_parameters_stay_in_range(seed in any::<u64>(), stream in 0u64..1000) {
        let s = random_sample(seed % 31, 24, Label::Spoof);
        let ops = AugmentOp::strong_defaults();
        let mut p = Pipeline::new(ops.clone());
        p.probability = 1.0;
        let (out, log) = p.apply(&s, &mut RngStream::new(seed, stream));
        prop_assert_eq!(out.image.shape(), s.image.shape());
        prop_assert_eq!(out.label, s.label);
        prop_assert_eq!(&out.meta, &s.meta);
        prop_assert!(out.image.data.iter().all(|v| (0.0..=1.0).contains(v)));
        for applied in &log {
            let op = ops.iter().find(|o| o.name() == applied.name).unwrap();
            prop_assert!(params_in_range(op, &applied.params, 24.0), "{:?} {:?}", op, applied.params);
        }
    }

    #[test]
    fn output_depends_only_on_input_and_stream(seed in any::<u64>()) {
        let s = random_sample(seed % 7, 16, Label::Live);
        let p = Pipeline::new(AugmentOp::strong_defaults());
        let a = p.apply(&s, &mut RngStream::new(seed, 3));
        let b = p.apply(&s, &mut RngStream::new(seed, 3));
        prop_assert_eq!(a, b);
    }

    #[test]
    fn fmix_keeps_shape_and_target_sums_to_one(seed in any::<u64>(), lambda in 0.0f32..=1.0) {
        let a = random_sample(1, 16, Label::Live);
        let b = random_sample(2, 16, Label::Spoof);
        let m = fmix_mix_with_lambda(&a, &b, lambda, &FmixConfig::default(), &mut RngStream::new(seed, 0)).unwrap();
        prop_assert_eq!(m.sample.image.shape(), a.image.shape());
        prop_assert!((m.target[0] + m.target[1] - 1.0).abs() < 1e-6);
        prop_assert!((m.target[0] - m.lambda).abs() < 1e-6);
    }
}

#[test]
fn extreme_lambdas_give_constant_masks() {
    let cfg = FmixConfig::default();
    let ones = fmix_mask(16, 16, 1.0, &cfg, &mut RngStream::new(0, 0)).unwrap();
    assert!(ones.bits.iter().all(|&b| b));
    let zeros = fmix_mask(16, 16, 0.0, &cfg, &mut RngStream::new(0, 0)).unwrap();
    assert!(zeros.bits.iter().all(|&b| !b));
    assert!(fmix_mask(16, 16, 1.01, &cfg, &mut RngStream::new(0, 0)).is_err());
    assert!(fmix_mask(16, 16, -0.1, &cfg, &mut RngStream::new(0, 0)).is_err());
}

#[test]
fn popcount_is_exact_over_the_sweep() {
    let cfg = FmixConfig::default();
    for size in [16usize, 32, 64] {
        for step in 0..=10 {
            let lambda = step as f32 / 10.0;
            let mask = fmix_mask(size, size, lambda, &cfg, &mut RngStream::new(step as u64, size as u64)).unwrap();
            let expected = (lambda as f64 * (size * size) as f64).round() as usize;
            assert_eq!(mask.popcount(), expected, "λ={lambda} size={size}");
        }
    }
    let m = fmix_mask(16, 16, 0.25, &cfg, &mut RngStream::new(5, 5)).unwrap();
    assert_eq!(m.popcount(), 64);
}

#[test]
fn masks_are_smoother_than_bernoulli_noise() {
    let cfg = FmixConfig::default();
    let (mut fmix_ac, mut iid_ac) = (0.0, 0.0);
    for seed in 0..100u64 {
        let m = fmix_mask(16, 16, 0.25, &cfg, &mut RngStream::new(seed, 1)).unwrap();
        fmix_ac += mask_autocorrelation(&m);
        let mut rng = RngStream::new(seed, 2);
        let iid = BinaryMask {
            height: 16,
            width: 16,
            bits: (0..256).map(|_| rng.bernoulli(0.25)).collect(),
        };
        iid_ac += mask_autocorrelation(&iid);
    }
    assert!(
        fmix_ac / 100.0 > iid_ac / 100.0 + 0.3,
        "fmix {} iid {}",
        fmix_ac / 100.0,
        iid_ac / 100.0
    );
}

#[test]
fn full_lambda_returns_the_first_sample() {
    let a = random_sample(3, 16, Label::Spoof);
    let b = random_sample(4, 16, Label::Live);
    let m = fmix_mix_with_lambda(&a, &b, 1.0, &FmixConfig::default(), &mut RngStream::new(0, 0)).unwrap();
    assert_eq!(m.sample, a);
    assert_eq!(m.target, Label::Spoof.one_hot());
}

#[test]
fn mixing_a_sample_with_itself_is_a_no_op() {
    let a = random_sample(5, 16, Label::Live);
    for lambda in [0.0, 0.3, 0.77, 1.0] {
        let m = fmix_mix_with_lambda(&a, &a, lambda, &FmixConfig::default(), &mut RngStream::new(1, 0)).unwrap();
        assert_eq!(m.sample.image, a.image);
    }
}

#[test]
fn mixed_mean_is_the_mask_weighted_mean() {
    let a = random_sample(6, 32, Label::Live);
    let b = random_sample(7, 32, Label::Spoof);
    let mask = fmix_mask(32, 32, 0.4, &FmixConfig::default(), &mut RngStream::new(2, 0)).unwrap();
    let mixed = apply_mask(&a.image, &b.image, &mask);
    let expected: f64 = mask
        .bits
        .iter()
        .zip(a.image.data.iter().zip(&b.image.data))
        .map(|(&m, (&x, &y))| if m { x as f64 } else { y as f64 })
        .sum::<f64>()
        / 1024.0;
    assert!((mixed.mean() - expected).abs() < 1e-6);
}

#[test]
fn shape_mismatch_is_an_error() {
    let a = random_sample(1, 16, Label::Live);
    let b = random_sample(1, 8, Label::Live);
    assert!(fmix_mix_with_lambda(&a, &b, 0.5, &FmixConfig::default(), &mut RngStream::new(0, 0)).is_err());
}
