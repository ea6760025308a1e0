//! Raw numeric kernels behind the graph ops: GEMM and im2col/col2im.

/// `c = a · b + beta · c` where `a` is logically `m×k` and `b` is `k×n`.
/// `a_t`/`b_t` mean the operand is stored transposed (row-major).
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(m: usize, k: usize, n: usize, a: &[f64], a_t: bool, b: &[f64], b_t: bool, c: &mut [f64], beta: f64) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.iter_mut().for_each(|x| *x *= beta);
        return;
    }
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the slices cover exactly the m×k, k×n and m×n index ranges
    // implied by the strides above (asserted in debug builds).
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

/// Geometry of a 2-D sliding window over one `[channels, h, w]` image.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Window {
    pub channels: usize,
    pub h: usize,
    pub w: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub padding: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl Window {
    pub fn col_rows(&self) -> usize {
        self.channels * self.kh * self.kw
    }

    pub fn col_cols(&self) -> usize {
        self.out_h * self.out_w
    }

    #[inline]
    fn for_each_tap(&self, mut f: impl FnMut(usize, usize)) {
        let ncols = self.col_cols();
        for c in 0..self.channels {
            for i in 0..self.kh {
                for j in 0..self.kw {
                    let row = (c * self.kh + i) * self.kw + j;
                    for oy in 0..self.out_h {
                        let y = (oy * self.stride + i) as isize - self.padding as isize;
                        if y < 0 || y >= self.h as isize {
                            continue;
                        }
                        for ox in 0..self.out_w {
                            let x = (ox * self.stride + j) as isize - self.padding as isize;
                            if x < 0 || x >= self.w as isize {
                                continue;
                            }
                            let src = (c * self.h + y as usize) * self.w + x as usize;
                            f(row * ncols + oy * self.out_w + ox, src);
                        }
                    }
                }
            }
        }
    }
}

/// Unfolds `image` (`[channels, h, w]`) into `cols` (`[channels·kh·kw, out_h·out_w]`).
pub(crate) fn im2col(image: &[f64], win: &Window, cols: &mut [f64]) {
    cols.iter_mut().for_each(|x| *x = 0.0);
    win.for_each_tap(|dst, src| cols[dst] = image[src]);
}

/// Adjoint of [`im2col`]: scatters `cols` back, accumulating into `image`.
pub(crate) fn col2im(cols: &[f64], win: &Window, image: &mut [f64]) {
    win.for_each_tap(|dst, src| image[src] += cols[dst]);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gemm_matches_naive() {
        let (m, k, n) = (3, 4, 2);
        let a: Vec<f64> = (0..m * k).map(|i| i as f64 * 0.5 - 1.0).collect();
        let b: Vec<f64> = (0..k * n).map(|i| (i as f64).sin()).collect();
        let mut c = vec![0.0; m * n];
        gemm(m, k, n, &a, false, &b, false, &mut c, 0.0);
        for i in 0..m {
            for j in 0..n {
                let want: f64 = (0..k).map(|p| a[i * k + p] * b[p * n + j]).sum();
                assert!((c[i * n + j] - want).abs() < 1e-12);
            }
        }
        // a^T stored as k×m
        let at: Vec<f64> = (0..k * m).map(|idx| a[(idx % m) * k + idx / m]).collect();
        let mut c2 = vec![0.0; m * n];
        gemm(m, k, n, &at, true, &b, false, &mut c2, 0.0);
        assert_eq!(c, c2);
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        let win = Window { channels: 2, h: 5, w: 4, kh: 3, kw: 2, stride: 2, padding: 1, out_h: 3, out_w: 3 };
        let x: Vec<f64> = (0..2 * 5 * 4).map(|i| (i as f64 * 0.37).cos()).collect();
        let y: Vec<f64> = (0..win.col_rows() * win.col_cols()).map(|i| (i as f64 * 0.11).sin()).collect();
        let mut cols = vec![0.0; y.len()];
        im2col(&x, &win, &mut cols);
        let lhs: f64 = cols.iter().zip(&y).map(|(a, b)| a * b).sum();
        let mut back = vec![0.0; x.len()];
        col2im(&y, &win, &mut back);
        let rhs: f64 = back.iter().zip(&x).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
