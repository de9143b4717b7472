//! Raw row-major kernels shared by forward and backward passes.

use crate::error::{invalid, Result};

/// `c[m×n] += a[m×k] · b[k×n]`
pub fn gemm_nn(m: usize, k: usize, n: usize, a: &[f32], b: &[f32], c: &mut [f32]) {
    for i in 0..m {
        let c_row = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for (cv, bv) in c_row.iter_mut().zip(b_row) {
                *cv += aip * bv;
            }
        }
    }
}

/// `c[m×n] += a[m×k] · b[n×k]ᵀ`
pub fn gemm_nt(m: usize, k: usize, n: usize, a: &[f32], b: &[f32], c: &mut [f32]) {
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        for j in 0..n {
            c[i * n + j] += dot(a_row, &b[j * k..(j + 1) * k]);
        }
    }
}

/// `c[m×n] += a[k×m]ᵀ · b[k×n]`
pub fn gemm_tn(m: usize, k: usize, n: usize, a: &[f32], b: &[f32], c: &mut [f32]) {
    for p in 0..k {
        let b_row = &b[p * n..(p + 1) * n];
        for i in 0..m {
            let api = a[p * m + i];
            if api == 0.0 {
                continue;
            }
            let c_row = &mut c[i * n..(i + 1) * n];
            for (cv, bv) in c_row.iter_mut().zip(b_row) {
                *cv += api * bv;
            }
        }
    }
}

/// Eight-lane dot product; the fixed lane split keeps results reproducible.
pub fn dot(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = [0.0f32; 8];
    let chunks = a.len() / 8;
    for c in 0..chunks {
        let (ac, bc) = (&a[c * 8..c * 8 + 8], &b[c * 8..c * 8 + 8]);
        for l in 0..8 {
            acc[l] += ac[l] * bc[l];
        }
    }
    let mut tail = 0.0;
    for i in chunks * 8..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[4]) + (acc[1] + acc[5]) + (acc[2] + acc[6]) + (acc[3] + acc[7]) + tail
}

/// Static shape information for a 2-D convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub batch: usize,
    pub in_channels: usize,
    pub height: usize,
    pub width: usize,
    pub filters: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub padding: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeometry {
    pub fn new(x_shape: &[usize], w_shape: &[usize], stride: usize, padding: usize) -> Result<Self> {
        if x_shape.len() != 4 || w_shape.len() != 4 {
            return Err(invalid("conv2d", "expected NCHW input and FCkk weights"));
        }
        if x_shape[1] != w_shape[1] {
            return Err(invalid(
                "conv2d",
                format!("input has {} channels, kernel expects {}", x_shape[1], w_shape[1]),
            ));
        }
        if stride == 0 {
            return Err(invalid("conv2d", "stride must be positive"));
        }
        let (h, w) = (x_shape[2], x_shape[3]);
        let (kh, kw) = (w_shape[2], w_shape[3]);
        if kh > h + 2 * padding || kw > w + 2 * padding {
            return Err(invalid("conv2d", "kernel larger than padded input"));
        }
        if padding >= kh.max(kw) {
            return Err(invalid("conv2d", "padding must be smaller than the kernel"));
        }
        Ok(Self {
            batch: x_shape[0],
            in_channels: x_shape[1],
            height: h,
            width: w,
            filters: w_shape[0],
            kernel_h: kh,
            kernel_w: kw,
            stride,
            padding,
            out_h: (h + 2 * padding - kh) / stride + 1,
            out_w: (w + 2 * padding - kw) / stride + 1,
        })
    }

    pub fn patch_len(&self) -> usize {
        self.in_channels * self.kernel_h * self.kernel_w
    }

    pub fn out_pixels(&self) -> usize {
        self.out_h * self.out_w
    }

    pub fn out_shape(&self) -> [usize; 4] {
        [self.batch, self.filters, self.out_h, self.out_w]
    }

    #[inline]
    fn source(&self, oy: usize, ky: usize, ox: usize, kx: usize) -> Option<(usize, usize)> {
        let iy = (oy * self.stride + ky) as isize - self.padding as isize;
        let ix = (ox * self.stride + kx) as isize - self.padding as isize;
        if iy < 0 || ix < 0 || iy >= self.height as isize || ix >= self.width as isize {
            None
        } else {
            Some((iy as usize, ix as usize))
        }
    }
}

/// Unfolds one image `[C,H,W]` into `[C·kh·kw, out_h·out_w]`.
pub fn im2col(g: &ConvGeometry, image: &[f32], cols: &mut [f32]) {
    let p = g.out_pixels();
    for c in 0..g.in_channels {
        let plane = &image[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ky in 0..g.kernel_h {
            for kx in 0..g.kernel_w {
                let row = (c * g.kernel_h + ky) * g.kernel_w + kx;
                let dst = &mut cols[row * p..(row + 1) * p];
                for oy in 0..g.out_h {
                    for ox in 0..g.out_w {
                        dst[oy * g.out_w + ox] = match g.source(oy, ky, ox, kx) {
                            Some((iy, ix)) => plane[iy * g.width + ix],
                            None => 0.0,
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters columns back onto `[C,H,W]`.
pub fn col2im(g: &ConvGeometry, cols: &[f32], image: &mut [f32]) {
    let p = g.out_pixels();
    for c in 0..g.in_channels {
        let plane = &mut image[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ky in 0..g.kernel_h {
            for kx in 0..g.kernel_w {
                let row = (c * g.kernel_h + ky) * g.kernel_w + kx;
                let src = &cols[row * p..(row + 1) * p];
                for oy in 0..g.out_h {
                    for ox in 0..g.out_w {
                        if let Some((iy, ix)) = g.source(oy, ky, ox, kx) {
                            plane[iy * g.width + ix] += src[oy * g.out_w + ox];
                        }
                    }
                }
            }
        }
    }
}

/// Explicit-loop cross-correlation, the reference path for the im2col kernel.
pub fn conv2d_direct(g: &ConvGeometry, x: &[f32], w: &[f32]) -> Vec<f32> {
    let mut out = vec![0.0f32; g.batch * g.filters * g.out_pixels()];
    for n in 0..g.batch {
        for f in 0..g.filters {
            for oy in 0..g.out_h {
                for ox in 0..g.out_w {
                    let mut acc = 0.0f64;
                    for c in 0..g.in_channels {
                        for ky in 0..g.kernel_h {
                            for kx in 0..g.kernel_w {
                                if let Some((iy, ix)) = g.source(oy, ky, ox, kx) {
                                    let xv = x[((n * g.in_channels + c) * g.height + iy) * g.width + ix];
                                    let wv = w[((f * g.in_channels + c) * g.kernel_h + ky) * g.kernel_w + kx];
                                    acc += xv as f64 * wv as f64;
                                }
                            }
                        }
                    }
                    out[((n * g.filters + f) * g.out_h + oy) * g.out_w + ox] = acc as f32;
                }
            }
        }
    }
    out
}

/// im2col + GEMM forward. Returns the output and the unfolded columns of
/// every sample (kept for the weight gradient).
pub fn conv2d_im2col(g: &ConvGeometry, x: &[f32], w: &[f32]) -> (Vec<f32>, Vec<f32>) {
    let (pl, p) = (g.patch_len(), g.out_pixels());
    let in_len = g.in_channels * g.height * g.width;
    let mut cols = vec![0.0f32; g.batch * pl * p];
    let mut out = vec![0.0f32; g.batch * g.filters * p];
    for n in 0..g.batch {
        let col = &mut cols[n * pl * p..(n + 1) * pl * p];
        im2col(g, &x[n * in_len..(n + 1) * in_len], col);
        gemm_nn(
            g.filters,
            pl,
            p,
            w,
            col,
            &mut out[n * g.filters * p..(n + 1) * g.filters * p],
        );
    }
    (out, cols)
}
