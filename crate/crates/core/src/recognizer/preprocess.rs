//! Block-wise local contrast normalization and patch splitting.

use crate::error::{invalid, Result};
use crate::image::Image;

pub const BLOCK: usize = 16;
/// Standard deviations below this count as structureless.
pub const FLAT_STD: f32 = 1e-2;
const CLAMP: f32 = 3.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Preprocessed {
    pub image: Image,
    /// Every block is (nearly) constant.
    pub low_quality: bool,
}

/// Normalizes each pixel by block mean and standard deviation interpolated
/// bilinearly between 16×16 block centres, clamps to [−3, 3] and maps that
/// range onto [0, 1].
pub fn preprocess(image: &Image) -> Result<Preprocessed> {
    if image.channels != 1 {
        return Err(invalid("preprocess expects a grayscale image"));
    }
    let (h, w) = (image.height, image.width);
    let (by, bx) = (h.div_ceil(BLOCK), w.div_ceil(BLOCK));
    let plane = image.plane(0);
    let mut means = vec![0.0f32; by * bx];
    let mut stds = vec![0.0f32; by * bx];
    let mut flat = true;
    for j in 0..by {
        for i in 0..bx {
            let (y0, y1) = (j * BLOCK, ((j + 1) * BLOCK).min(h));
            let (x0, x1) = (i * BLOCK, ((i + 1) * BLOCK).min(w));
            let n = ((y1 - y0) * (x1 - x0)) as f64;
            let (mut s, mut s2) = (0.0f64, 0.0f64);
            for y in y0..y1 {
                for &v in &plane[y * w + x0..y * w + x1] {
                    s += v as f64;
                    s2 += (v as f64) * (v as f64);
                }
            }
            let mean = s / n;
            let std = (s2 / n - mean * mean).max(0.0).sqrt() as f32;
            means[j * bx + i] = mean as f32;
            stds[j * bx + i] = std;
            if std >= FLAT_STD {
                flat = false;
            }
        }
    }
    let interp = |grid: &[f32], y: usize, x: usize| {
        let fy = ((y as f32 + 0.5) / BLOCK as f32 - 0.5).clamp(0.0, (by - 1) as f32);
        let fx = ((x as f32 + 0.5) / BLOCK as f32 - 0.5).clamp(0.0, (bx - 1) as f32);
        crate::augment::geometry::sample_bilinear(grid, by, bx, fx, fy)
    };
    let mut out = vec![0.0f32; h * w];
    for y in 0..h {
        for x in 0..w {
            let mu = interp(&means, y, x);
            let sigma = interp(&stds, y, x).max(FLAT_STD);
            let z = ((plane[y * w + x] - mu) / sigma).clamp(-CLAMP, CLAMP);
            out[y * w + x] = (z + CLAMP) / (2.0 * CLAMP);
        }
    }
    Ok(Preprocessed {
        image: Image::gray(h, w, out)?,
        low_quality: flat,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatchGrid {
    pub rows: usize,
    pub cols: usize,
    /// Fraction of a patch shared with its neighbour, in `[0, 1)`.
    pub overlap: f32,
}

impl Default for PatchGrid {
    fn default() -> Self {
        Self {
            rows: 3,
            cols: 3,
            overlap: 0.25,
        }
    }
}

/// Patches narrower than this cannot hold a keypoint neighbourhood.
pub const MIN_PATCH: usize = 9;

#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub row: usize,
    pub col: usize,
    pub y0: usize,
    pub x0: usize,
    pub image: Image,
}

impl PatchGrid {
    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(invalid("patch grid needs at least one row and column"));
        }
        if !(0.0..1.0).contains(&self.overlap) {
            return Err(invalid(format!("patch overlap {} outside [0,1)", self.overlap)));
        }
        Ok(())
    }

    /// Patch side and start offsets along one axis; the first patch starts
    /// at 0 and the last ends at the border.
    fn axis(&self, len: usize, n: usize) -> (usize, Vec<usize>) {
        let size = (len as f64 / (n as f64 - (n as f64 - 1.0) * self.overlap as f64)).ceil() as usize;
        let size = size.min(len);
        let starts = (0..n)
            .map(|i| {
                if n == 1 {
                    0
                } else {
                    ((i * (len - size)) as f64 / (n - 1) as f64).round() as usize
                }
            })
            .collect();
        (size, starts)
    }
}

pub fn split_patches(image: &Image, grid: &PatchGrid) -> Result<Vec<Patch>> {
    grid.validate()?;
    let (ph, ys) = grid.axis(image.height, grid.rows);
    let (pw, xs) = grid.axis(image.width, grid.cols);
    if ph < MIN_PATCH || pw < MIN_PATCH {
        return Err(invalid(format!(
            "{}x{} image is too small for a {}x{} patch grid",
            image.height, image.width, grid.rows, grid.cols
        )));
    }
    let mut out = Vec::with_capacity(grid.rows * grid.cols);
    for (r, &y0) in ys.iter().enumerate() {
        for (c, &x0) in xs.iter().enumerate() {
            out.push(Patch {
                row: r,
                col: c,
                y0,
                x0,
                image: image.crop(y0, x0, ph, pw)?,
            });
        }
    }
    Ok(out)
}
