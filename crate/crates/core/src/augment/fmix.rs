//! FMix: mixed-sample augmentation with masks thresholded from
//! low-frequency noise.

use std::f64::consts::TAU;

use autodiff::RngStream;
use rand_distr::{Beta, Distribution};

use crate::error::{invalid, Result};
use crate::image::{Image, ImageSample};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FmixConfig {
    /// Shape of the symmetric Beta(α, α) the mixing ratio is drawn from.
    pub alpha: f32,
    /// Spectral decay power δ.
    pub decay_power: f32,
}

impl Default for FmixConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            decay_power: 3.0,
        }
    }
}

impl FmixConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.decay_power > 0.0) {
            return Err(invalid("fmix alpha and decay power must be positive"));
        }
        Ok(())
    }

    pub fn sample_lambda(&self, rng: &mut RngStream) -> Result<f32> {
        let beta = Beta::new(self.alpha as f64, self.alpha as f64).map_err(|e| invalid(format!("fmix beta: {e}")))?;
        Ok(beta.sample(rng) as f32)
    }
}

/// Row-major `H×W` binary mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    pub height: usize,
    pub width: usize,
    pub bits: Vec<bool>,
}

impl BinaryMask {
    pub fn popcount(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn fraction(&self) -> f32 {
        self.popcount() as f32 / self.bits.len() as f32
    }
}

/// Signed frequency of DFT bin `k` on an `n`-point grid, in cycles/sample.
fn bin_frequency(k: usize, n: usize) -> f64 {
    let k = k as f64;
    let n_f = n as f64;
    if k <= n_f / 2.0 {
        k / n_f
    } else {
        (k - n_f) / n_f
    }
}

/// Inverse DFT along one axis of a complex `rows×cols` grid (axis 1 = columns).
fn idft_axis(re: &mut [f64], im: &mut [f64], rows: usize, cols: usize, along_cols: bool) {
    let n = if along_cols { cols } else { rows };
    let lines = if along_cols { rows } else { cols };
    let (cos_t, sin_t): (Vec<f64>, Vec<f64>) = (0..n)
        .map(|k| ((TAU * k as f64 / n as f64).cos(), (TAU * k as f64 / n as f64).sin()))
        .unzip();
    let mut buf_re = vec![0.0; n];
    let mut buf_im = vec![0.0; n];
    for line in 0..lines {
        let idx = |i: usize| if along_cols { line * cols + i } else { i * cols + line };
        for (x, (br, bi)) in buf_re.iter_mut().zip(buf_im.iter_mut()).enumerate() {
            let (mut sr, mut si) = (0.0, 0.0);
            for k in 0..n {
                let t = (k * x) % n;
                let (c, s) = (cos_t[t], sin_t[t]);
                let (ar, ai) = (re[idx(k)], im[idx(k)]);
                sr += ar * c - ai * s;
                si += ar * s + ai * c;
            }
            *br = sr / n as f64;
            *bi = si / n as f64;
        }
        for x in 0..n {
            re[idx(x)] = buf_re[x];
            im[idx(x)] = buf_im[x];
        }
    }
}

/// Real part of the inverse transform of decay-weighted complex Gaussian noise.
pub fn low_frequency_noise(height: usize, width: usize, decay_power: f32, rng: &mut RngStream) -> Vec<f64> {
    let f0 = (1.0 / height as f64).min(1.0 / width as f64);
    let mut re = vec![0.0; height * width];
    let mut im = vec![0.0; height * width];
    for y in 0..height {
        let fy = bin_frequency(y, height);
        for x in 0..width {
            let fx = bin_frequency(x, width);
            let freq = (fx * fx + fy * fy).sqrt().max(f0);
            let scale = 1.0 / freq.powf(decay_power as f64);
            re[y * width + x] = rng.normal() as f64 * scale;
            im[y * width + x] = rng.normal() as f64 * scale;
        }
    }
    idft_axis(&mut re, &mut im, height, width, true);
    idft_axis(&mut re, &mut im, height, width, false);
    re
}

/// Mask with exactly `round(λ·H·W)` ones at the highest noise values;
/// ties go to the lower row-major index.
pub fn fmix_mask(
    height: usize,
    width: usize,
    lambda: f32,
    config: &FmixConfig,
    rng: &mut RngStream,
) -> Result<BinaryMask> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(invalid(format!("fmix lambda {lambda} outside [0,1]")));
    }
    if height == 0 || width == 0 {
        return Err(invalid("fmix mask needs a non-empty grid"));
    }
    config.validate()?;
    let n = height * width;
    let keep = (lambda as f64 * n as f64).round() as usize;
    let noise = low_frequency_noise(height, width, config.decay_power, rng);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| noise[b].total_cmp(&noise[a]).then(a.cmp(&b)));
    let mut bits = vec![false; n];
    for &i in &order[..keep] {
        bits[i] = true;
    }
    Ok(BinaryMask { height, width, bits })
}

/// FMix output: the mixed image (with `a`'s label and metadata), the soft
/// two-class target and the realized mixing fraction.
#[derive(Debug, Clone, PartialEq)]
pub struct Mixed {
    pub sample: ImageSample,
    pub target: [f32; 2],
    pub lambda: f32,
}

/// Mixes `a` and `b` with λ ~ Beta(α, α).
pub fn fmix_mix(a: &ImageSample, b: &ImageSample, config: &FmixConfig, rng: &mut RngStream) -> Result<Mixed> {
    let lambda = config.sample_lambda(rng)?;
    fmix_mix_with_lambda(a, b, lambda, config, rng)
}

/// Mixes with a given λ: pixels = mask·a + (1−mask)·b, target =
/// λ'·onehot(a) + (1−λ')·onehot(b), λ' the realized mask fraction.
pub fn fmix_mix_with_lambda(
    a: &ImageSample,
    b: &ImageSample,
    lambda: f32,
    config: &FmixConfig,
    rng: &mut RngStream,
) -> Result<Mixed> {
    if !a.image.same_shape(&b.image) {
        return Err(invalid("fmix: images differ in shape"));
    }
    let mask = fmix_mask(a.image.height, a.image.width, lambda, config, rng)?;
    let image = apply_mask(&a.image, &b.image, &mask);
    let lam = mask.fraction();
    let (ta, tb) = (a.label.one_hot(), b.label.one_hot());
    Ok(Mixed {
        sample: ImageSample {
            image,
            label: a.label,
            meta: a.meta.clone(),
        },
        target: [lam * ta[0] + (1.0 - lam) * tb[0], lam * ta[1] + (1.0 - lam) * tb[1]],
        lambda: lam,
    })
}

/// Per-pixel selection: `a` where the mask is set, else `b`; every channel.
pub fn apply_mask(a: &Image, b: &Image, mask: &BinaryMask) -> Image {
    let mut out = a.clone();
    let hw = a.height * a.width;
    for c in 0..a.channels {
        let (pa, pb) = (a.plane(c), b.plane(c));
        let dst = &mut out.data[c * hw..(c + 1) * hw];
        for i in 0..hw {
            dst[i] = if mask.bits[i] { pa[i] } else { pb[i] };
        }
    }
    out
}

/// Lag-1 Pearson autocorrelation over horizontal and vertical neighbours.
pub fn mask_autocorrelation(mask: &BinaryMask) -> f64 {
    let (h, w) = (mask.height, mask.width);
    let v = |y: usize, x: usize| if mask.bits[y * w + x] { 1.0 } else { 0.0 };
    let mut pairs = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if x + 1 < w {
                pairs.push((v(y, x), v(y, x + 1)));
            }
            if y + 1 < h {
                pairs.push((v(y, x), v(y + 1, x)));
            }
        }
    }
    let n = pairs.len() as f64;
    let (ma, mb) = (
        pairs.iter().map(|p| p.0).sum::<f64>() / n,
        pairs.iter().map(|p| p.1).sum::<f64>() / n,
    );
    let cov = pairs.iter().map(|p| (p.0 - ma) * (p.1 - mb)).sum::<f64>() / n;
    let va = pairs.iter().map(|p| (p.0 - ma).powi(2)).sum::<f64>() / n;
    let vb = pairs.iter().map(|p| (p.1 - mb).powi(2)).sum::<f64>() / n;
    if va == 0.0 || vb == 0.0 {
        0.0
    } else {
        cov / (va * vb).sqrt()
    }
}
