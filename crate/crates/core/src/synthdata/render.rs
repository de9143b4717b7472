//! Rendering one impression of a finger through a material and a scanner.

use std::f32::consts::PI;

use autodiff::RngStream;

use crate::error::Result;
use crate::image::{quantize, Image, ImageSample, SampleMeta, Split};
use crate::synthdata::identity::FingerIdentity;
use crate::synthdata::profiles::{MaterialProfile, ScannerProfile};

pub const IMAGE_SIZE: usize = 64;
const MAX_ROTATION_DEG: f32 = 5.0;
const MAX_SHIFT: f32 = 3.0;
const RIDGE_CONTRAST: f32 = 0.35;
const PORE_AMPLITUDE: f32 = 0.3;
const PORE_SIGMA: f32 = 0.6;

/// Placement and bookkeeping of an impression.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpressionInfo {
    pub subject: u32,
    pub finger: u32,
    pub impression: u32,
    pub split: Split,
}

impl Default for ImpressionInfo {
    fn default() -> Self {
        Self {
            subject: 0,
            finger: 0,
            impression: 0,
            split: Split::Train,
        }
    }
}

/// Renders a `IMAGE_SIZE`² impression: the master ridges under a random
/// small rigid placement and pressure, material texture, then the scanner.
/// Pixel values are quantized to 8 bits so files reproduce them exactly.
pub fn render_impression(
    finger: &FingerIdentity,
    scanner: &ScannerProfile,
    material: &MaterialProfile,
    info: &ImpressionInfo,
    rng: &mut RngStream,
) -> Result<ImageSample> {
    scanner.validate()?;
    material.validate()?;
    let s = IMAGE_SIZE;
    let angle = rng.range(-MAX_ROTATION_DEG, MAX_ROTATION_DEG).to_radians();
    let (tx, ty) = (rng.range(-MAX_SHIFT, MAX_SHIFT), rng.range(-MAX_SHIFT, MAX_SHIFT));
    let pressure = rng.range(-0.2, 0.2);
    let (cos, sin) = (angle.cos(), angle.sin());
    let half_img = s as f32 / 2.0;
    let half_master = finger.size as f32 / 2.0;
    let to_master = |x: f32, y: f32| {
        let (dx, dy) = (x - half_img, y - half_img);
        (
            cos * dx - sin * dy + half_master + tx,
            sin * dx + cos * dy + half_master + ty,
        )
    };
    let to_image = |u: f32, v: f32| {
        let (du, dv) = (u - half_master - tx, v - half_master - ty);
        (cos * du + sin * dv + half_img, -sin * du + cos * dv + half_img)
    };

    let mut px = vec![0.0f32; s * s];
    for y in 0..s {
        for x in 0..s {
            let (u, v) = to_master(x as f32, y as f32);
            let r = (finger.ridge_at(u, v) + pressure).clamp(-1.0, 1.0);
            // ridges are dark
            px[y * s + x] = 0.5 - RIDGE_CONTRAST * r;
        }
    }

    let reach = (3.0 * PORE_SIGMA).ceil() as i32;
    for &(pu, pv) in &finger.pores {
        if material.pore_dropout > 0.0 && rng.bernoulli(material.pore_dropout) {
            continue;
        }
        let (cx, cy) = to_image(pu, pv);
        if cx < -3.0 || cy < -3.0 || cx > s as f32 + 3.0 || cy > s as f32 + 3.0 {
            continue;
        }
        for y in (cy.round() as i32 - reach)..=(cy.round() as i32 + reach) {
            for x in (cx.round() as i32 - reach)..=(cx.round() as i32 + reach) {
                if x < 0 || y < 0 || x >= s as i32 || y >= s as i32 {
                    continue;
                }
                let d2 = (x as f32 - cx).powi(2) + (y as f32 - cy).powi(2);
                px[y as usize * s + x as usize] += PORE_AMPLITUDE * (-d2 / (2.0 * PORE_SIGMA * PORE_SIGMA)).exp();
            }
        }
    }

    if material.contrast != 1.0 {
        for v in &mut px {
            *v = 0.5 + material.contrast * (*v - 0.5);
        }
    }
    if material.artifact_amplitude > 0.0 {
        let f = rng.range(material.band_frequency.0, material.band_frequency.1);
        let dir = rng.range(0.0, PI);
        let phase = rng.range(0.0, 2.0 * PI);
        let (dx, dy) = (dir.cos(), dir.sin());
        for y in 0..s {
            for x in 0..s {
                px[y * s + x] +=
                    material.artifact_amplitude * (2.0 * PI * f * (x as f32 * dx + y as f32 * dy) + phase).sin();
            }
        }
    }

    if scanner.blur_radius > 0.0 {
        px = gaussian_blur(&px, s, s, scanner.blur_radius);
    }
    let max_r2 = 2.0 * half_img * half_img;
    for y in 0..s {
        for x in 0..s {
            let v = &mut px[y * s + x];
            let r2 = ((x as f32 + 0.5 - half_img).powi(2) + (y as f32 + 0.5 - half_img).powi(2)) / max_r2;
            *v = (scanner.gain * *v + scanner.offset) * (1.0 - scanner.vignette * r2);
            *v += scanner.noise_sigma * rng.normal();
            *v = quantize(*v) as f32 / 255.0;
        }
    }

    let image = Image::gray(s, s, px)?;
    Ok(ImageSample {
        image,
        label: material.kind.label(),
        meta: SampleMeta {
            subject: info.subject,
            finger: info.finger,
            scanner: scanner.id,
            material: material.kind,
            impression: info.impression,
            split: info.split,
        },
    })
}

/// Separable Gaussian blur with edge clamping.
pub fn gaussian_blur(plane: &[f32], height: usize, width: usize, sigma: f32) -> Vec<f32> {
    let reach = (3.0 * sigma).ceil() as i32;
    let mut k: Vec<f32> = (-reach..=reach)
        .map(|d| (-(d * d) as f32 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f32 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= total);
    let mut tmp = vec![0.0f32; plane.len()];
    for y in 0..height {
        for x in 0..width {
            let mut acc = 0.0;
            for (i, &w) in k.iter().enumerate() {
                let xx = (x as i32 + i as i32 - reach).clamp(0, width as i32 - 1) as usize;
                acc += w * plane[y * width + xx];
            }
            tmp[y * width + x] = acc;
        }
    }
    let mut out = vec![0.0f32; plane.len()];
    for y in 0..height {
        for x in 0..width {
            let mut acc = 0.0;
            for (i, &w) in k.iter().enumerate() {
                let yy = (y as i32 + i as i32 - reach).clamp(0, height as i32 - 1) as usize;
                acc += w * tmp[yy * width + x];
            }
            out[y * width + x] = acc;
        }
    }
    out
}

/// Fraction of spectral energy (DC excluded) at radial frequencies of at
/// least `cutoff` cycles per pixel, via a direct separable DFT.
pub fn band_energy_ratio(image: &Image, cutoff: f32) -> f64 {
    let (h, w) = (image.height, image.width);
    let plane = image.plane(0);
    let mean = plane.iter().map(|&v| v as f64).sum::<f64>() / plane.len() as f64;
    let tw = |n: usize| -> Vec<(f64, f64)> {
        (0..n)
            .map(|k| {
                let a = -2.0 * std::f64::consts::PI * k as f64 / n as f64;
                (a.cos(), a.sin())
            })
            .collect()
    };
    let (twh, tww) = (tw(h), tw(w));
    // rows
    let mut rows = vec![(0.0f64, 0.0f64); h * w];
    for y in 0..h {
        for kx in 0..w {
            let (mut re, mut im) = (0.0, 0.0);
            for x in 0..w {
                let v = plane[y * w + x] as f64 - mean;
                let (c, s) = tww[(kx * x) % w];
                re += v * c;
                im += v * s;
            }
            rows[y * w + kx] = (re, im);
        }
    }
    let (mut high, mut total) = (0.0f64, 0.0f64);
    for ky in 0..h {
        for kx in 0..w {
            let (mut re, mut im) = (0.0, 0.0);
            for y in 0..h {
                let (a, b) = rows[y * w + kx];
                let (c, s) = twh[(ky * y) % h];
                re += a * c - b * s;
                im += a * s + b * c;
            }
            if kx == 0 && ky == 0 {
                continue;
            }
            let e = re * re + im * im;
            let fy = ky.min(h - ky) as f32 / h as f32;
            let fx = kx.min(w - kx) as f32 / w as f32;
            total += e;
            if (fx * fx + fy * fy).sqrt() >= cutoff {
                high += e;
            }
        }
    }
    if total == 0.0 {
        0.0
    } else {
        high / total
    }
}
