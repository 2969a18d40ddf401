//! Lowering of the convolution family onto GEMM.

use super::Float;

/// `c (m×n) = op(a) · op(b)`, added to `c` when `accumulate`.
///
/// `a` is stored `m×k` (or `k×m` when `trans_a`), `b` is stored `k×n`
/// (or `n×k` when `trans_b`), all row-major.
#[allow(clippy::too_many_arguments)]
pub(crate) fn matmul<F: Float>(
    m: usize,
    k: usize,
    n: usize,
    a: &[F],
    trans_a: bool,
    b: &[F],
    trans_b: bool,
    c: &mut [F],
    accumulate: bool,
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        if !accumulate {
            c[..m * n].iter_mut().for_each(|v| *v = F::zero());
        }
        return;
    }
    let (rsa, csa) = if trans_a { (1, m) } else { (k, 1) };
    let (rsb, csb) = if trans_b { (1, k) } else { (n, 1) };
    let beta = if accumulate { F::one() } else { F::zero() };
    // SAFETY: the asserts above bound every index the strides can reach, and
    // `c` is a distinct mutable slice.
    unsafe {
        F::gemm(
            m,
            k,
            n,
            F::one(),
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Geometry of a strided, zero-padded window sweep over a `c×h×w` image
/// producing an `oh×ow` grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Window {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub oh: usize,
    pub ow: usize,
}

impl Window {
    pub fn col_rows(&self) -> usize {
        self.c * self.kh * self.kw
    }

    pub fn col_cols(&self) -> usize {
        self.oh * self.ow
    }

    /// 1×1, stride 1, no padding: the column matrix is the image itself.
    pub fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.pad == 0
    }

    #[inline]
    fn src_index(&self, o: usize, k: usize, extent: usize) -> Option<usize> {
        let i = (o * self.stride + k) as isize - self.pad as isize;
        (i >= 0 && (i as usize) < extent).then_some(i as usize)
    }

    /// Unfolds `img` (`c×h×w`) into `col` (`c·kh·kw × oh·ow`).
    pub fn im2col<F: Float>(&self, img: &[F], col: &mut [F]) {
        let (oh, ow) = (self.oh, self.ow);
        for ch in 0..self.c {
            for ki in 0..self.kh {
                for kj in 0..self.kw {
                    let row = ((ch * self.kh + ki) * self.kw + kj) * oh * ow;
                    for oy in 0..oh {
                        let dst = &mut col[row + oy * ow..row + (oy + 1) * ow];
                        let Some(iy) = self.src_index(oy, ki, self.h) else {
                            dst.iter_mut().for_each(|v| *v = F::zero());
                            continue;
                        };
                        let src = &img[(ch * self.h + iy) * self.w..(ch * self.h + iy + 1) * self.w];
                        for (ox, d) in dst.iter_mut().enumerate() {
                            *d = match self.src_index(ox, kj, self.w) {
                                Some(ix) => src[ix],
                                None => F::zero(),
                            };
                        }
                    }
                }
            }
        }
    }

    /// Adjoint of [`Window::im2col`]: scatters `col` back into `img` additively.
    pub fn col2im<F: Float>(&self, col: &[F], img: &mut [F]) {
        let (oh, ow) = (self.oh, self.ow);
        for ch in 0..self.c {
            for ki in 0..self.kh {
                for kj in 0..self.kw {
                    let row = ((ch * self.kh + ki) * self.kw + kj) * oh * ow;
                    for oy in 0..oh {
                        let Some(iy) = self.src_index(oy, ki, self.h) else {
                            continue;
                        };
                        let src = &col[row + oy * ow..row + (oy + 1) * ow];
                        let dst = &mut img[(ch * self.h + iy) * self.w..(ch * self.h + iy + 1) * self.w];
                        for (ox, &s) in src.iter().enumerate() {
                            if let Some(ix) = self.src_index(ox, kj, self.w) {
                                dst[ix] += s;
                            }
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
    fn im2col_and_col2im_are_adjoint() {
        let win = Window {
            c: 2,
            h: 5,
            w: 4,
            kh: 3,
            kw: 2,
            stride: 2,
            pad: 1,
            oh: 3,
            ow: 3,
        };
        let img: Vec<f64> = (0..40).map(|i| (i as f64 * 0.37).sin()).collect();
        let probe: Vec<f64> = (0..win.col_rows() * win.col_cols())
            .map(|i| (i as f64 * 0.11).cos())
            .collect();
        let mut col = vec![0.0; probe.len()];
        win.im2col(&img, &mut col);
        let mut back = vec![0.0; img.len()];
        win.col2im(&probe, &mut back);
        let lhs: f64 = col.iter().zip(&probe).map(|(a, b)| a * b).sum();
        let rhs: f64 = img.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn matmul_transposes() {
        // a = [[1,2],[3,4]], b = [[5,6],[7,8]]
        let a = [1.0f64, 2.0, 3.0, 4.0];
        let b = [5.0f64, 6.0, 7.0, 8.0];
        let mut c = [0.0; 4];
        matmul(2, 2, 2, &a, false, &b, false, &mut c, false);
        assert_eq!(c, [19.0, 22.0, 43.0, 50.0]);
        matmul(2, 2, 2, &a, true, &b, false, &mut c, false);
        assert_eq!(c, [26.0, 30.0, 38.0, 44.0]);
        matmul(2, 2, 2, &a, false, &b, true, &mut c, true);
        assert_eq!(c, [26.0 + 17.0, 30.0 + 23.0, 38.0 + 39.0, 44.0 + 53.0]);
    }
}
