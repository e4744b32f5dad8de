//! Low-level kernels shared by the layers: GEMM and the im2col/col2im pair.

/// Row-major matrix view descriptor: `(data, transposed)`.
///
/// `c (m x n) = alpha * op(a) (m x k) * op(b) (k x n) + beta * c`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_trans: bool,
    b: &[f64],
    b_trans: bool,
    c: &mut [f64],
    accumulate: bool,
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if a_trans { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_trans { (1, k as isize) } else { (n as isize, 1) };
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: slice lengths are checked above against the dimensions, and the
    // strides describe exactly those row-major (or transposed) layouts.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Geometry of a 2-D sliding window over one image.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Window {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl Window {
    pub fn new(channels: usize, height: usize, width: usize, kernel: usize, stride: usize, pad: usize) -> Option<Self> {
        let span_h = (height + 2 * pad).checked_sub(kernel)?;
        let span_w = (width + 2 * pad).checked_sub(kernel)?;
        Some(Window {
            channels,
            height,
            width,
            kernel,
            stride,
            pad,
            out_h: span_h / stride + 1,
            out_w: span_w / stride + 1,
        })
    }

    pub fn rows(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    pub fn cols(&self) -> usize {
        self.out_h * self.out_w
    }
}

/// Unfolds `image` (`channels x height x width`) into `cols`
/// (`channels*k*k` rows, `out_h*out_w` columns); out-of-bounds taps read zero.
pub(crate) fn im2col(image: &[f64], win: &Window, cols: &mut [f64]) {
    let Window { channels, height, width, kernel, stride, pad, out_h, out_w } = *win;
    let ncols = out_h * out_w;
    for c in 0..channels {
        let plane = &image[c * height * width..(c + 1) * height * width];
        for ki in 0..kernel {
            for kj in 0..kernel {
                let row = (c * kernel + ki) * kernel + kj;
                let dst = &mut cols[row * ncols..(row + 1) * ncols];
                for oy in 0..out_h {
                    let iy = (oy * stride + ki) as isize - pad as isize;
                    let line = &mut dst[oy * out_w..(oy + 1) * out_w];
                    if iy < 0 || iy >= height as isize {
                        line.fill(0.0);
                        continue;
                    }
                    let src = &plane[iy as usize * width..(iy as usize + 1) * width];
                    for (ox, v) in line.iter_mut().enumerate() {
                        let ix = (ox * stride + kj) as isize - pad as isize;
                        *v = if ix < 0 || ix >= width as isize { 0.0 } else { src[ix as usize] };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters-and-adds `cols` back into `image`.
pub(crate) fn col2im(cols: &[f64], win: &Window, image: &mut [f64]) {
    let Window { channels, height, width, kernel, stride, pad, out_h, out_w } = *win;
    let ncols = out_h * out_w;
    for c in 0..channels {
        let plane = &mut image[c * height * width..(c + 1) * height * width];
        for ki in 0..kernel {
            for kj in 0..kernel {
                let row = (c * kernel + ki) * kernel + kj;
                let src = &cols[row * ncols..(row + 1) * ncols];
                for oy in 0..out_h {
                    let iy = (oy * stride + ki) as isize - pad as isize;
                    if iy < 0 || iy >= height as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * width..(iy as usize + 1) * width];
                    for ox in 0..out_w {
                        let ix = (ox * stride + kj) as isize - pad as isize;
                        if ix >= 0 && ix < width as isize {
                            dst[ix as usize] += src[oy * out_w + ox];
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gemm_matches_naive_for_all_transpose_combinations() {
        let (m, k, n) = (3, 4, 5);
        let a: Vec<f64> = (0..m * k).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..k * n).map(|i| (i as f64 * 0.11).cos()).collect();
        let at = |i: usize, j: usize, tr: bool| if tr { a[j * m + i] } else { a[i * k + j] };
        let bt = |i: usize, j: usize, tr: bool| if tr { b[j * k + i] } else { b[i * n + j] };
        for &(ta, tb) in &[(false, false), (true, false), (false, true), (true, true)] {
            let mut c = vec![1.0; m * n];
            gemm(m, k, n, &a, ta, &b, tb, &mut c, true);
            for i in 0..m {
                for j in 0..n {
                    let want: f64 = 1.0 + (0..k).map(|p| at(i, p, ta) * bt(p, j, tb)).sum::<f64>();
                    assert!((c[i * n + j] - want).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        // <im2col(x), y> == <x, col2im(y)> for any x, y.
        let win = Window::new(2, 5, 5, 3, 2, 1).unwrap();
        let x: Vec<f64> = (0..2 * 25).map(|i| (i as f64).sin()).collect();
        let y: Vec<f64> = (0..win.rows() * win.cols()).map(|i| (i as f64 * 0.3).cos()).collect();
        let mut cols = vec![0.0; win.rows() * win.cols()];
        im2col(&x, &win, &mut cols);
        let mut back = vec![0.0; x.len()];
        col2im(&y, &win, &mut back);
        let lhs: f64 = cols.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }
}
