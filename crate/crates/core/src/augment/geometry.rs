//! Inverse-mapped geometric warps with bilinear sampling and edge clamping.

use crate::image::Image;

/// 2×3 affine map from output pixel centres to input coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Affine {
    pub m: [[f32; 3]; 2],
}

impl Affine {
    pub fn identity() -> Self {
        Self {
            m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
        }
    }

    /// Maps output → input for a transform described about the image centre:
    /// input = A·(output − c) + c + t.
    pub fn about_center(a: [[f32; 2]; 2], shift: [f32; 2], height: usize, width: usize) -> Self {
        let cx = (width as f32 - 1.0) / 2.0;
        let cy = (height as f32 - 1.0) / 2.0;
        Self {
            m: [
                [a[0][0], a[0][1], cx + shift[0] - a[0][0] * cx - a[0][1] * cy],
                [a[1][0], a[1][1], cy + shift[1] - a[1][0] * cx - a[1][1] * cy],
            ],
        }
    }
}

pub fn sample_bilinear(plane: &[f32], height: usize, width: usize, x: f32, y: f32) -> f32 {
    let x = x.clamp(0.0, (width - 1) as f32);
    let y = y.clamp(0.0, (height - 1) as f32);
    let (x0, y0) = (x.floor() as usize, y.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(width - 1), (y0 + 1).min(height - 1));
    let (fx, fy) = (x - x0 as f32, y - y0 as f32);
    let top = plane[y0 * width + x0] * (1.0 - fx) + plane[y0 * width + x1] * fx;
    let bottom = plane[y1 * width + x0] * (1.0 - fx) + plane[y1 * width + x1] * fx;
    top * (1.0 - fy) + bottom * fy
}

pub fn warp(image: &Image, map: &Affine) -> Image {
    let (h, w) = (image.height, image.width);
    let mut out = Image::filled(image.channels, h, w, 0.0);
    for c in 0..image.channels {
        let src = image.plane(c);
        let dst = out.plane_mut(c);
        for y in 0..h {
            for x in 0..w {
                let (xf, yf) = (x as f32, y as f32);
                let sx = map.m[0][0] * xf + map.m[0][1] * yf + map.m[0][2];
                let sy = map.m[1][0] * xf + map.m[1][1] * yf + map.m[1][2];
                dst[y * w + x] = sample_bilinear(src, h, w, sx, sy);
            }
        }
    }
    out
}

pub fn flip_horizontal(image: &Image) -> Image {
    let mut out = image.clone();
    for c in 0..image.channels {
        let src = image.plane(c);
        let dst = out.plane_mut(c);
        for y in 0..image.height {
            for x in 0..image.width {
                dst[y * image.width + x] = src[y * image.width + (image.width - 1 - x)];
            }
        }
    }
    out
}

pub fn flip_vertical(image: &Image) -> Image {
    let mut out = image.clone();
    for c in 0..image.channels {
        let src = image.plane(c);
        let dst = out.plane_mut(c);
        for y in 0..image.height {
            let sy = image.height - 1 - y;
            dst[y * image.width..(y + 1) * image.width].copy_from_slice(&src[sy * image.width..(sy + 1) * image.width]);
        }
    }
    out
}
