//! Matrix-product and im2col kernels shared by the dense and convolution layers.

use crate::error::{dim_err, Result};

/// `c ← a·b + beta·c` for row/column-strided views.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
    (rsc, csc): (usize, usize),
) {
    if m == 0 || n == 0 {
        return;
    }
    debug_assert!(k == 0 || (m - 1) * rsa + (k - 1) * csa < a.len());
    debug_assert!(k == 0 || (k - 1) * rsb + (n - 1) * csb < b.len());
    debug_assert!((m - 1) * rsc + (n - 1) * csc < c.len());
    // SAFETY: the debug assertions above spell out the bounds contract; every
    // caller derives strides from the slice shapes it passes in.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}

/// Geometry of a same-padded 2D convolution over `[C, H, W]` maps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub h: usize,
    pub w: usize,
    pub oh: usize,
    pub ow: usize,
}

impl ConvGeom {
    pub fn new(cin: usize, cout: usize, k: usize, stride: usize, h: usize, w: usize) -> Result<Self> {
        if cin == 0 || cout == 0 || k == 0 || stride == 0 {
            return dim_err("convolution sizes must be positive");
        }
        if k % 2 == 0 {
            return dim_err(format!("kernel size {k} must be odd"));
        }
        let pad = k / 2;
        if h + 2 * pad < k || w + 2 * pad < k {
            return dim_err(format!("{h}x{w} map is smaller than kernel {k}"));
        }
        let oh = (h + 2 * pad - k) / stride + 1;
        let ow = (w + 2 * pad - k) / stride + 1;
        Ok(Self { cin, cout, k, stride, pad, h, w, oh, ow })
    }

    /// Rows of the unfolded patch matrix.
    pub fn patch_len(&self) -> usize {
        self.cin * self.k * self.k
    }

    pub fn in_len(&self) -> usize {
        self.cin * self.h * self.w
    }

    pub fn out_pixels(&self) -> usize {
        self.oh * self.ow
    }
}

/// Unfolds a batch into a `[cin·k·k, batch·oh·ow]` patch matrix.
pub(crate) fn im2col(x: &[f64], batch: usize, g: &ConvGeom) -> Vec<f64> {
    let p = g.out_pixels();
    let bp = batch * p;
    let mut cols = vec![0.0; g.patch_len() * bp];
    for c in 0..g.cin {
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (c * g.k + ky) * g.k + kx;
                let dst = &mut cols[row * bp..(row + 1) * bp];
                for b in 0..batch {
                    let src = &x[b * g.in_len() + c * g.h * g.w..][..g.h * g.w];
                    for oy in 0..g.oh {
                        let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                        if iy < 0 || iy >= g.h as isize {
                            continue;
                        }
                        let src_row = &src[iy as usize * g.w..][..g.w];
                        let dst_row = &mut dst[b * p + oy * g.ow..][..g.ow];
                        for (ox, d) in dst_row.iter_mut().enumerate() {
                            let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                            if ix >= 0 && ix < g.w as isize {
                                *d = src_row[ix as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: folds patch gradients back onto the input maps.
pub(crate) fn col2im(dcols: &[f64], batch: usize, g: &ConvGeom) -> Vec<f64> {
    let p = g.out_pixels();
    let bp = batch * p;
    let mut dx = vec![0.0; batch * g.in_len()];
    for c in 0..g.cin {
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (c * g.k + ky) * g.k + kx;
                let src = &dcols[row * bp..(row + 1) * bp];
                for b in 0..batch {
                    let dst = &mut dx[b * g.in_len() + c * g.h * g.w..][..g.h * g.w];
                    for oy in 0..g.oh {
                        let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                        if iy < 0 || iy >= g.h as isize {
                            continue;
                        }
                        let src_row = &src[b * p + oy * g.ow..][..g.ow];
                        let dst_row = &mut dst[iy as usize * g.w..][..g.w];
                        for (ox, s) in src_row.iter().enumerate() {
                            let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                            if ix >= 0 && ix < g.w as isize {
                                dst_row[ix as usize] += s;
                            }
                        }
                    }
                }
            }
        }
    }
    dx
}
