//! Harris keypoints with gradient-orientation histogram descriptors.

use std::f32::consts::PI;

use crate::image::Image;

pub const DESCRIPTOR_LEN: usize = 32;
/// Descriptor neighbourhood is `(2·RADIUS+1)²`, clipped at the patch edge.
const RADIUS: usize = 4;
/// Keypoints keep this far from the border, where gradients are one-sided.
const MARGIN: usize = 2;
const ORIENT_BINS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeypointConfig {
    pub max_keypoints: usize,
    pub nms_radius: usize,
    pub harris_k: f32,
    /// Box radius for smoothing the structure tensor.
    pub window_radius: usize,
    /// Responses below this fraction of the patch maximum are ignored.
    pub min_relative_response: f32,
}

impl Default for KeypointConfig {
    fn default() -> Self {
        Self {
            max_keypoints: 16,
            nms_radius: 3,
            harris_k: 0.04,
            window_radius: 1,
            min_relative_response: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KeypointDescriptor {
    pub x: f32,
    pub y: f32,
    /// Local ridge direction, in `[0, π)`.
    pub theta: f32,
    /// 2×2 spatial cells × 8 gradient-direction bins, L2-normalized.
    pub descriptor: [f32; DESCRIPTOR_LEN],
}

fn gradients(img: &Image) -> (Vec<f32>, Vec<f32>) {
    let (h, w) = (img.height, img.width);
    let p = img.plane(0);
    let at = |y: usize, x: usize| p[y * w + x];
    let mut gx = vec![0.0f32; h * w];
    let mut gy = vec![0.0f32; h * w];
    for y in 0..h {
        for x in 0..w {
            let (xl, xr) = (x.saturating_sub(1), (x + 1).min(w - 1));
            let (yu, yd) = (y.saturating_sub(1), (y + 1).min(h - 1));
            gx[y * w + x] = (at(y, xr) - at(y, xl)) / (xr - xl).max(1) as f32;
            gy[y * w + x] = (at(yd, x) - at(yu, x)) / (yd - yu).max(1) as f32;
        }
    }
    (gx, gy)
}

fn box_smooth(v: &[f32], h: usize, w: usize, r: usize) -> Vec<f32> {
    let mut out = vec![0.0f32; v.len()];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            let mut n = 0;
            for yy in y.saturating_sub(r)..=(y + r).min(h - 1) {
                for xx in x.saturating_sub(r)..=(x + r).min(w - 1) {
                    acc += v[yy * w + xx];
                    n += 1;
                }
            }
            out[y * w + x] = acc / n as f32;
        }
    }
    out
}

/// Top-`K` Harris corners after non-maximum suppression; ties go to
/// row-major order.
pub fn extract_keypoints(patch: &Image, cfg: &KeypointConfig) -> Vec<KeypointDescriptor> {
    let (h, w) = (patch.height, patch.width);
    if h < 2 * MARGIN + 1 || w < 2 * MARGIN + 1 || cfg.max_keypoints == 0 {
        return Vec::new();
    }
    let (gx, gy) = gradients(patch);
    let prod = |a: &[f32], b: &[f32]| a.iter().zip(b).map(|(x, y)| x * y).collect::<Vec<_>>();
    let sxx = box_smooth(&prod(&gx, &gx), h, w, cfg.window_radius);
    let syy = box_smooth(&prod(&gy, &gy), h, w, cfg.window_radius);
    let sxy = box_smooth(&prod(&gx, &gy), h, w, cfg.window_radius);
    let response: Vec<f32> = (0..h * w)
        .map(|i| {
            let tr = sxx[i] + syy[i];
            sxx[i] * syy[i] - sxy[i] * sxy[i] - cfg.harris_k * tr * tr
        })
        .collect();
    let max_r = response.iter().copied().fold(0.0f32, f32::max);
    if !(max_r > 1e-9) {
        return Vec::new();
    }
    let floor = max_r * cfg.min_relative_response;
    let r = cfg.nms_radius as isize;
    let mut candidates = Vec::new();
    for y in MARGIN..h - MARGIN {
        for x in MARGIN..w - MARGIN {
            let v = response[y * w + x];
            if v <= floor {
                continue;
            }
            let mut is_max = true;
            'nms: for dy in -r..=r {
                for dx in -r..=r {
                    let (yy, xx) = (y as isize + dy, x as isize + dx);
                    if (dy, dx) == (0, 0) || yy < 0 || xx < 0 || yy >= h as isize || xx >= w as isize {
                        continue;
                    }
                    let o = response[yy as usize * w + xx as usize];
                    // equal neighbours: the earlier row-major one survives
                    let earlier = (dy, dx) < (0, 0);
                    if o > v || (o == v && earlier) {
                        is_max = false;
                        break 'nms;
                    }
                }
            }
            if is_max {
                candidates.push((v, y * w + x));
            }
        }
    }
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    candidates.truncate(cfg.max_keypoints);
    candidates
        .into_iter()
        .filter_map(|(_, i)| {
            let (y, x) = (i / w, i % w);
            let descriptor = describe(&gx, &gy, h, w, y, x)?;
            // structure-tensor angle is the gradient direction; ridges run across it
            let grad_dir = 0.5 * (2.0 * sxy[i]).atan2(sxx[i] - syy[i]);
            let mut theta = grad_dir + PI / 2.0;
            theta = theta.rem_euclid(PI);
            if theta >= PI {
                theta = 0.0;
            }
            Some(KeypointDescriptor {
                x: x as f32,
                y: y as f32,
                theta,
                descriptor,
            })
        })
        .collect()
}

fn describe(gx: &[f32], gy: &[f32], h: usize, w: usize, cy: usize, cx: usize) -> Option<[f32; DESCRIPTOR_LEN]> {
    let mut d = [0.0f32; DESCRIPTOR_LEN];
    let r = RADIUS as isize;
    for dy in -r..=r {
        for dx in -r..=r {
            let (y, x) = (cy as isize + dy, cx as isize + dx);
            if y < 0 || x < 0 || y >= h as isize || x >= w as isize {
                continue;
            }
            let i = y as usize * w + x as usize;
            let (a, b) = (gx[i], gy[i]);
            let mag = (a * a + b * b).sqrt();
            if mag == 0.0 {
                continue;
            }
            let dir = b.atan2(a).rem_euclid(2.0 * PI);
            let bin = ((dir / (2.0 * PI) * ORIENT_BINS as f32) as usize).min(ORIENT_BINS - 1);
            let cell = usize::from(dy > 0) * 2 + usize::from(dx > 0);
            d[cell * ORIENT_BINS + bin] += mag;
        }
    }
    let norm = d.iter().map(|v| v * v).sum::<f32>().sqrt();
    if !(norm > 0.0) {
        return None;
    }
    d.iter_mut().for_each(|v| *v /= norm);
    Some(d)
}
