//! Batched kernels. Images are NHWC; dense weights are stored out × in.

use super::Real;

/// 3×3 convolution geometry with stride 2 and zero padding 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub h: usize,
    pub w: usize,
    pub c: usize,
    pub oc: usize,
}

pub(crate) const KERNEL: usize = 3;
pub(crate) const STRIDE: usize = 2;
pub(crate) const PAD: usize = 1;

impl ConvGeom {
    pub fn oh(&self) -> usize {
        (self.h + 2 * PAD - KERNEL) / STRIDE + 1
    }

    pub fn ow(&self) -> usize {
        (self.w + 2 * PAD - KERNEL) / STRIDE + 1
    }

    /// Width of one im2col row.
    pub fn patch(&self) -> usize {
        KERNEL * KERNEL * self.c
    }

    fn for_each_tap(&self, mut f: impl FnMut(usize, usize, usize)) {
        // f(out_pixel, tap, in_pixel) for every in-bounds tap
        let (oh, ow) = (self.oh(), self.ow());
        for oy in 0..oh {
            for ox in 0..ow {
                for ky in 0..KERNEL {
                    let iy = (oy * STRIDE + ky) as isize - PAD as isize;
                    if iy < 0 || iy >= self.h as isize {
                        continue;
                    }
                    for kx in 0..KERNEL {
                        let ix = (ox * STRIDE + kx) as isize - PAD as isize;
                        if ix < 0 || ix >= self.w as isize {
                            continue;
                        }
                        f(oy * ow + ox, ky * KERNEL + kx, iy as usize * self.w + ix as usize);
                    }
                }
            }
        }
    }
}

pub(crate) fn im2col<T: Real>(g: &ConvGeom, batch: usize, input: &[T], cols: &mut Vec<T>) {
    let pix_out = g.oh() * g.ow();
    let patch = g.patch();
    cols.clear();
    cols.resize(batch * pix_out * patch, T::ZERO);
    let in_stride = g.h * g.w * g.c;
    for b in 0..batch {
        let src = &input[b * in_stride..(b + 1) * in_stride];
        let dst = &mut cols[b * pix_out * patch..(b + 1) * pix_out * patch];
        g.for_each_tap(|o, tap, i| {
            let d = o * patch + tap * g.c;
            dst[d..d + g.c].copy_from_slice(&src[i * g.c..(i + 1) * g.c]);
        });
    }
}

pub(crate) fn col2im<T: Real>(g: &ConvGeom, batch: usize, cols: &[T], out: &mut Vec<T>) {
    let pix_out = g.oh() * g.ow();
    let patch = g.patch();
    let in_stride = g.h * g.w * g.c;
    out.clear();
    out.resize(batch * in_stride, T::ZERO);
    for b in 0..batch {
        let src = &cols[b * pix_out * patch..(b + 1) * pix_out * patch];
        let dst = &mut out[b * in_stride..(b + 1) * in_stride];
        g.for_each_tap(|o, tap, i| {
            let s = o * patch + tap * g.c;
            for ch in 0..g.c {
                dst[i * g.c + ch] += src[s + ch];
            }
        });
    }
}

/// `y[m×n] = x[m×k] · wᵀ + b`, with `w` stored n×k.
pub(crate) fn dense_forward<T: Real>(x: &[T], m: usize, k: usize, w: &[T], bias: &[T], y: &mut Vec<T>) {
    let n = bias.len();
    y.clear();
    y.reserve(m * n);
    for _ in 0..m {
        y.extend_from_slice(bias);
    }
    T::gemm(m, k, n, T::ONE, x, (k as isize, 1), w, (1, k as isize), T::ONE, y, (n as isize, 1));
}

/// Accumulates `dw += dyᵀ·x` and `db += Σ dy`, then optionally writes
/// `dx = dy·w`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn dense_backward<T: Real>(
    x: &[T],
    m: usize,
    k: usize,
    w: &[T],
    dy: &[T],
    dw: &mut [T],
    db: &mut [T],
    dx: Option<&mut Vec<T>>,
) {
    let n = db.len();
    T::gemm(n, m, k, T::ONE, dy, (1, n as isize), x, (k as isize, 1), T::ONE, dw, (k as isize, 1));
    for row in dy.chunks_exact(n) {
        for (d, &g) in db.iter_mut().zip(row) {
            *d += g;
        }
    }
    if let Some(dx) = dx {
        dx.clear();
        dx.resize(m * k, T::ZERO);
        T::gemm(m, n, k, T::ONE, dy, (n as isize, 1), w, (k as isize, 1), T::ZERO, dx, (k as isize, 1));
    }
}

pub(crate) fn relu_inplace<T: Real>(v: &mut [T]) {
    for x in v {
        if !(*x > T::ZERO) {
            *x = T::ZERO;
        }
    }
}

/// Zeroes gradient entries where the activation was clipped.
pub(crate) fn relu_mask<T: Real>(activation: &[T], grad: &mut [T]) {
    for (g, &a) in grad.iter_mut().zip(activation) {
        if !(a > T::ZERO) {
            *g = T::ZERO;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_conv(g: &ConvGeom, x: &[f64], w: &[f64], b: &[f64]) -> Vec<f64> {
        let (oh, ow) = (g.oh(), g.ow());
        let mut out = vec![0.0; oh * ow * g.oc];
        for oy in 0..oh {
            for ox in 0..ow {
                for o in 0..g.oc {
                    let mut s = b[o];
                    for ky in 0..3 {
                        for kx in 0..3 {
                            let iy = (oy * 2 + ky) as isize - 1;
                            let ix = (ox * 2 + kx) as isize - 1;
                            if iy < 0 || ix < 0 || iy >= g.h as isize || ix >= g.w as isize {
                                continue;
                            }
                            for c in 0..g.c {
                                let xi = (iy as usize * g.w + ix as usize) * g.c + c;
                                let wi = o * g.patch() + (ky * 3 + kx) * g.c + c;
                                s += x[xi] * w[wi];
                            }
                        }
                    }
                    out[(oy * ow + ox) * g.oc + o] = s;
                }
            }
        }
        out
    }

    #[test]
    fn im2col_conv_matches_direct() {
        let g = ConvGeom { h: 7, w: 6, c: 2, oc: 3 };
        let x: Vec<f64> = (0..g.h * g.w * g.c).map(|i| ((i * 37) % 11) as f64 - 5.0).collect();
        let w: Vec<f64> = (0..g.oc * g.patch()).map(|i| ((i * 13) % 7) as f64 * 0.1 - 0.3).collect();
        let b = vec![0.5, -1.0, 0.25];
        let mut cols = Vec::new();
        im2col(&g, 1, &x, &mut cols);
        let mut y = Vec::new();
        dense_forward(&cols, g.oh() * g.ow(), g.patch(), &w, &b, &mut y);
        let direct = naive_conv(&g, &x, &w, &b);
        assert_eq!(g.oh(), 4);
        assert_eq!(g.ow(), 3);
        for (a, e) in y.iter().zip(&direct) {
            assert!((a - e).abs() < 1e-12);
        }
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        // <im2col(x), c> == <x, col2im(c)>
        let g = ConvGeom { h: 5, w: 5, c: 3, oc: 1 };
        let x: Vec<f64> = (0..2 * 75).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut cols = Vec::new();
        im2col(&g, 2, &x, &mut cols);
        let c: Vec<f64> = (0..cols.len()).map(|i| (i as f64 * 0.11).cos()).collect();
        let mut back = Vec::new();
        col2im(&g, 2, &c, &mut back);
        let lhs: f64 = cols.iter().zip(&c).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn dense_backward_matches_definition() {
        let (m, k, n) = (3, 4, 2);
        let x: Vec<f64> = (0..m * k).map(|i| i as f64 * 0.1).collect();
        let w: Vec<f64> = (0..n * k).map(|i| 0.2 - i as f64 * 0.05).collect();
        let dy: Vec<f64> = (0..m * n).map(|i| i as f64 - 2.0).collect();
        let mut dw = vec![0.0; n * k];
        let mut db = vec![0.0; n];
        let mut dx = Vec::new();
        dense_backward(&x, m, k, &w, &dy, &mut dw, &mut db, Some(&mut dx));
        for j in 0..n {
            for l in 0..k {
                let e: f64 = (0..m).map(|i| dy[i * n + j] * x[i * k + l]).sum();
                assert!((dw[j * k + l] - e).abs() < 1e-12);
            }
            assert_eq!(db[j], (0..m).map(|i| dy[i * n + j]).sum::<f64>());
        }
        for i in 0..m {
            for l in 0..k {
                let e: f64 = (0..n).map(|j| dy[i * n + j] * w[j * k + l]).sum();
                assert!((dx[i * k + l] - e).abs() < 1e-12);
            }
        }
    }
}
