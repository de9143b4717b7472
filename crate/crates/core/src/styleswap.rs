//! Style swapping: exchange per-channel mean and standard deviation between
//! two images of the same presentation class.

use autodiff::RngStream;

use crate::error::{invalid, Result};
use crate::image::{Image, Label};

/// Floor applied to every standard deviation.
pub const STD_EPS: f32 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct StyleStats {
    pub mean: Vec<f32>,
    /// Population standard deviation, floored at [`STD_EPS`].
    pub std: Vec<f32>,
}

pub fn compute_stats(x: &Image) -> Result<StyleStats> {
    let hw = x.height * x.width;
    if hw < 2 {
        return Err(invalid("style statistics need at least two pixels per channel"));
    }
    let mut mean = Vec::with_capacity(x.channels);
    let mut std = Vec::with_capacity(x.channels);
    for c in 0..x.channels {
        let p = x.plane(c);
        let m = p.iter().map(|&v| v as f64).sum::<f64>() / hw as f64;
        let var = p.iter().map(|&v| (v as f64 - m).powi(2)).sum::<f64>() / hw as f64;
        mean.push(m as f32);
        std.push((var.sqrt() as f32).max(STD_EPS));
    }
    Ok(StyleStats { mean, std })
}

/// Re-styles `content` with `style`: σ_s·(x − μ_c)/σ_c + μ_s per channel.
pub fn restyle(content: &Image, own: &StyleStats, style: &StyleStats) -> Image {
    let mut out = content.clone();
    for c in 0..content.channels {
        let gain = style.std[c] as f64 / own.std[c] as f64;
        let (mc, ms) = (own.mean[c] as f64, style.mean[c] as f64);
        for v in out.plane_mut(c) {
            *v = ((*v as f64 - mc) * gain + ms) as f32;
        }
    }
    out
}

/// Each output keeps its own content and takes the other's statistics.
pub fn style_swap(a: &Image, b: &Image) -> Result<(Image, Image)> {
    if !a.same_shape(b) {
        return Err(invalid("style swap: images differ in shape"));
    }
    let (sa, sb) = (compute_stats(a)?, compute_stats(b)?);
    Ok((restyle(a, &sa, &sb), restyle(b, &sb, &sa)))
}

/// Swaps styles inside a batch. Samples are paired at random within their
/// own label group (an odd one out stays unpaired) and each pair swaps
/// with probability `p`. Returns the log of pairs that swapped.
pub fn batch_style_swap(
    batch: &mut [Image],
    labels: &[Label],
    p: f32,
    rng: &mut RngStream,
) -> Result<Vec<(usize, usize)>> {
    if batch.len() != labels.len() {
        return Err(invalid("style swap: batch and label counts differ"));
    }
    let mut log = Vec::new();
    for label in [Label::Live, Label::Spoof] {
        let mut group: Vec<usize> = (0..batch.len()).filter(|&i| labels[i] == label).collect();
        rng.shuffle(&mut group);
        for pair in group.chunks_exact(2) {
            if !rng.bernoulli(p) {
                continue;
            }
            let (i, j) = (pair[0], pair[1]);
            let (ai, bj) = style_swap(&batch[i], &batch[j])?;
            batch[i] = ai;
            batch[j] = bj;
            log.push((i, j));
        }
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn img(data: &[f32], h: usize, w: usize) -> Image {
        Image::gray(h, w, data.to_vec()).unwrap()
    }

    #[test]
    fn constant_image_has_floored_std() {
        let s = compute_stats(&Image::filled(1, 4, 4, 0.3)).unwrap();
        assert!((s.mean[0] - 0.3).abs() < 1e-7);
        assert_eq!(s.std[0], STD_EPS);
    }

    #[test]
    fn two_pixel_population_std() {
        let s = compute_stats(&img(&[0.0, 1.0], 1, 2)).unwrap();
        assert_eq!(s.mean[0], 0.5);
        assert_eq!(s.std[0], 0.5);
    }

    #[test]
    fn single_pixel_is_rejected() {
        assert!(compute_stats(&img(&[0.5], 1, 1)).is_err());
    }

    #[test]
    fn stats_ignore_pixel_order() {
        let a = img(&[0.1, 0.9, 0.4, 0.3, 0.7, 0.2], 2, 3);
        let b = img(&[0.3, 0.2, 0.9, 0.1, 0.4, 0.7], 3, 2);
        let (sa, sb) = (compute_stats(&a).unwrap(), compute_stats(&b).unwrap());
        assert!((sa.mean[0] - sb.mean[0]).abs() < 1e-7);
        assert!((sa.std[0] - sb.std[0]).abs() < 1e-7);
    }

    #[test]
    fn swap_with_itself_is_a_fixed_point() {
        let a = img(&[0.1, 0.9, 0.4, 0.3], 2, 2);
        let (a2, _) = style_swap(&a, &a).unwrap();
        for (x, y) in a.data.iter().zip(&a2.data) {
            assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn prescribed_moments_transfer() {
        // ±1 pattern, so μ and σ are exactly the affine parameters
        let base = [1.0f32, -1.0, -1.0, 1.0, 1.0, -1.0, 1.0, -1.0];
        let a = img(&base.map(|v| 0.2 + 0.1 * v), 2, 4);
        let b = img(&base.map(|v| 0.7 - 0.3 * v), 2, 4);
        let (a2, b2) = style_swap(&a, &b).unwrap();
        let (sa, sb) = (compute_stats(&a2).unwrap(), compute_stats(&b2).unwrap());
        assert!((sa.mean[0] - 0.7).abs() < 1e-5 && (sa.std[0] - 0.3).abs() < 1e-5);
        assert!((sb.mean[0] - 0.2).abs() < 1e-5 && (sb.std[0] - 0.1).abs() < 1e-5);
    }

    #[test]
    fn mixed_label_pair_never_swaps() {
        let mut batch = vec![img(&[0.1, 0.9], 1, 2), img(&[0.4, 0.5], 1, 2)];
        let before = batch.clone();
        let log = batch_style_swap(&mut batch, &[Label::Live, Label::Spoof], 1.0, &mut RngStream::new(0, 0)).unwrap();
        assert!(log.is_empty());
        assert_eq!(batch, before);
    }

    #[test]
    fn zero_probability_is_identity() {
        let mut batch: Vec<Image> = (0..6).map(|i| img(&[i as f32 * 0.1, 0.5], 1, 2)).collect();
        let before = batch.clone();
        let labels = [Label::Live; 6];
        let log = batch_style_swap(&mut batch, &labels, 0.0, &mut RngStream::new(1, 0)).unwrap();
        assert!(log.is_empty());
        assert_eq!(batch, before);
    }
}
