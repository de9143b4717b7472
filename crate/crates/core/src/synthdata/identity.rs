//! Finger identities: a smooth orientation field and the master ridge
//! pattern grown from it.

use autodiff::rng::mix;
use autodiff::RngStream;

use std::f32::consts::PI;

pub const DEFAULT_RIDGE_FREQUENCY: f32 = 0.11;
/// Side of the master ridge image; impressions are cut from its centre.
pub const MASTER_SIZE: usize = 96;
const COARSE_GRID: usize = 4;
const GABOR_ITERATIONS: usize = 8;
const ORIENTATION_BINS: usize = 16;

/// A synthetic finger. Everything is a pure function of the identity seed.
#[derive(Debug, Clone, PartialEq)]
pub struct FingerIdentity {
    pub seed: u64,
    pub ridge_frequency: f32,
    pub size: usize,
    /// Ridge direction per master pixel, in `[0, π)`.
    pub orientation: Vec<f32>,
    /// Ridge signal in `[-1, 1]`; positive on ridges.
    pub ridges: Vec<f32>,
    /// Sweat-pore centres in master coordinates, all on ridges.
    pub pores: Vec<(f32, f32)>,
}

pub fn synth_finger(seed: u64) -> FingerIdentity {
    synth_finger_with(seed, DEFAULT_RIDGE_FREQUENCY, MASTER_SIZE)
}

pub fn synth_finger_with(seed: u64, ridge_frequency: f32, size: usize) -> FingerIdentity {
    let orientation = orientation_field(seed, size);
    let ridges = grow_ridges(seed, size, ridge_frequency, &orientation);
    let pores = place_pores(seed, size, &ridges);
    FingerIdentity {
        seed,
        ridge_frequency,
        size,
        orientation,
        ridges,
        pores,
    }
}

/// Angle of a random coarse vector field in doubled-angle form, upsampled
/// with smooth interpolation.
pub fn orientation_field(seed: u64, size: usize) -> Vec<f32> {
    let mut rng = RngStream::new(mix(seed, 0x0f1e), 0);
    let g = COARSE_GRID;
    let coarse: Vec<(f32, f32)> = (0..g * g)
        .map(|_| {
            let a = rng.range(0.0, 2.0 * PI);
            (a.cos(), a.sin())
        })
        .collect();
    let smooth = |t: f32| t * t * (3.0 - 2.0 * t);
    let mut out = Vec::with_capacity(size * size);
    for y in 0..size {
        for x in 0..size {
            let gy = y as f32 / (size - 1).max(1) as f32 * (g - 1) as f32;
            let gx = x as f32 / (size - 1).max(1) as f32 * (g - 1) as f32;
            let (y0, x0) = ((gy as usize).min(g - 2), (gx as usize).min(g - 2));
            let (ty, tx) = (smooth(gy - y0 as f32), smooth(gx - x0 as f32));
            let at = |yy: usize, xx: usize| coarse[yy * g + xx];
            let lerp = |a: (f32, f32), b: (f32, f32), t: f32| (a.0 + (b.0 - a.0) * t, a.1 + (b.1 - a.1) * t);
            let top = lerp(at(y0, x0), at(y0, x0 + 1), tx);
            let bottom = lerp(at(y0 + 1, x0), at(y0 + 1, x0 + 1), tx);
            let (c, s) = lerp(top, bottom, ty);
            let mut theta = 0.5 * s.atan2(c);
            if theta < 0.0 {
                theta += PI;
            }
            if theta >= PI {
                theta -= PI;
            }
            out.push(theta);
        }
    }
    out
}

/// Circular correlation of two orientation fields, `mean cos 2(θ₁−θ₂)`.
pub fn field_correlation(a: &[f32], b: &[f32]) -> f64 {
    let n = a.len().min(b.len()).max(1);
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (2.0 * (x - y) as f64).cos())
        .sum::<f64>()
        / n as f64
}

fn gabor_bank(freq: f32) -> (usize, Vec<Vec<f32>>) {
    let half = 6usize;
    let side = 2 * half + 1;
    let sigma = 0.45 / freq;
    let bank = (0..ORIENTATION_BINS)
        .map(|b| {
            let theta = (b as f32 + 0.5) * PI / ORIENTATION_BINS as f32;
            // across-ridge unit vector
            let (nx, ny) = (-theta.sin(), theta.cos());
            let mut k = Vec::with_capacity(side * side);
            for dy in -(half as i32)..=half as i32 {
                for dx in -(half as i32)..=half as i32 {
                    let (fx, fy) = (dx as f32, dy as f32);
                    let env = (-(fx * fx + fy * fy) / (2.0 * sigma * sigma)).exp();
                    k.push(env * (2.0 * PI * freq * (fx * nx + fy * ny)).cos());
                }
            }
            let mean = k.iter().sum::<f32>() / k.len() as f32;
            let norm = k.iter().map(|v| (v - mean).abs()).sum::<f32>();
            k.iter().map(|v| (v - mean) / norm).collect()
        })
        .collect();
    (half, bank)
}

/// Noise sharpened into ridges by repeated orientation-adaptive Gabor
/// filtering; minutiae arise where the flow cannot stay consistent.
fn grow_ridges(seed: u64, size: usize, freq: f32, orientation: &[f32]) -> Vec<f32> {
    let mut rng = RngStream::new(mix(seed, 0x71d6), 0);
    let mut r: Vec<f32> = (0..size * size).map(|_| rng.range(-1.0, 1.0)).collect();
    let (half, bank) = gabor_bank(freq);
    let side = 2 * half + 1;
    let bins: Vec<usize> = orientation
        .iter()
        .map(|&t| ((t / PI * ORIENTATION_BINS as f32) as usize).min(ORIENTATION_BINS - 1))
        .collect();
    let mut next = vec![0.0f32; size * size];
    for _ in 0..GABOR_ITERATIONS {
        for y in 0..size {
            for x in 0..size {
                let k = &bank[bins[y * size + x]];
                let mut acc = 0.0f32;
                for ky in 0..side {
                    let yy = (y + ky).saturating_sub(half).min(size - 1);
                    let row = &r[yy * size..(yy + 1) * size];
                    let krow = &k[ky * side..(ky + 1) * side];
                    for (kx, &w) in krow.iter().enumerate() {
                        let xx = (x + kx).saturating_sub(half).min(size - 1);
                        acc += w * row[xx];
                    }
                }
                next[y * size + x] = acc;
            }
        }
        let rms = (next.iter().map(|v| v * v).sum::<f32>() / next.len() as f32)
            .sqrt()
            .max(1e-12);
        for (dst, &v) in r.iter_mut().zip(&next) {
            *dst = (2.5 * v / rms).tanh();
        }
    }
    r
}

fn place_pores(seed: u64, size: usize, ridges: &[f32]) -> Vec<(f32, f32)> {
    let mut rng = RngStream::new(mix(seed, 0x9035), 0);
    let target = size * size / 40;
    let mut pores = Vec::with_capacity(target);
    for _ in 0..target * 4 {
        if pores.len() == target {
            break;
        }
        let (x, y) = (rng.range(0.0, size as f32 - 1.0), rng.range(0.0, size as f32 - 1.0));
        if ridges[y.round() as usize * size + x.round() as usize] > 0.6 {
            pores.push((x, y));
        }
    }
    pores
}

impl FingerIdentity {
    /// Bilinear sample of the ridge signal, clamped at the border.
    pub fn ridge_at(&self, x: f32, y: f32) -> f32 {
        crate::augment::geometry::sample_bilinear(&self.ridges, self.size, self.size, x, y)
    }
}
