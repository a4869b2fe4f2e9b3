//! Numeric kernels behind the tape operations. All loops run in a fixed
//! order so results are bit-reproducible.

use crate::real::Real;
use crate::tensor::Nhwc;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub input: Nhwc,
    pub out_h: usize,
    pub out_w: usize,
    pub k: usize,
    pub cout: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvGeom {
    pub fn output(&self) -> Nhwc {
        self.input.with(self.out_h, self.out_w, self.cout)
    }

    /// Input row/col feeding output index `o` through kernel tap `t`.
    #[inline]
    fn src(&self, o: usize, t: usize, limit: usize) -> Option<usize> {
        let pos = (o * self.stride + t) as isize - self.padding as isize;
        (pos >= 0 && (pos as usize) < limit).then_some(pos as usize)
    }
}

pub(crate) fn conv_forward<S: Real>(g: &ConvGeom, x: &[S], w: &[S], bias: Option<&[S]>, out: &mut [S]) {
    let Nhwc { n, h, w: iw, c: cin, .. } = g.input;
    let cout = g.cout;
    for b in 0..n {
        for oy in 0..g.out_h {
            for ox in 0..g.out_w {
                let o0 = ((b * g.out_h + oy) * g.out_w + ox) * cout;
                let acc = &mut out[o0..o0 + cout];
                match bias {
                    Some(bv) => acc.copy_from_slice(bv),
                    None => acc.fill(S::zero()),
                }
                for ky in 0..g.k {
                    let Some(iy) = g.src(oy, ky, h) else { continue };
                    for kx in 0..g.k {
                        let Some(ix) = g.src(ox, kx, iw) else { continue };
                        let i0 = ((b * h + iy) * iw + ix) * cin;
                        let w0 = (ky * g.k + kx) * cin * cout;
                        for ci in 0..cin {
                            let xv = x[i0 + ci];
                            let row = &w[w0 + ci * cout..w0 + (ci + 1) * cout];
                            for (a, &wv) in acc.iter_mut().zip(row) {
                                *a += xv * wv;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Accumulates gradients of a convolution. Any of the outputs may be skipped.
pub(crate) fn conv_backward<S: Real>(
    g: &ConvGeom,
    x: &[S],
    w: &[S],
    gout: &[S],
    mut gx: Option<&mut [S]>,
    mut gw: Option<&mut [S]>,
    mut gb: Option<&mut [S]>,
) {
    let Nhwc { n, h, w: iw, c: cin, .. } = g.input;
    let cout = g.cout;
    for b in 0..n {
        for oy in 0..g.out_h {
            for ox in 0..g.out_w {
                let o0 = ((b * g.out_h + oy) * g.out_w + ox) * cout;
                let go = &gout[o0..o0 + cout];
                if let Some(gb) = gb.as_deref_mut() {
                    for (a, &v) in gb.iter_mut().zip(go) {
                        *a += v;
                    }
                }
                for ky in 0..g.k {
                    let Some(iy) = g.src(oy, ky, h) else { continue };
                    for kx in 0..g.k {
                        let Some(ix) = g.src(ox, kx, iw) else { continue };
                        let i0 = ((b * h + iy) * iw + ix) * cin;
                        let w0 = (ky * g.k + kx) * cin * cout;
                        for ci in 0..cin {
                            let r0 = w0 + ci * cout;
                            if let Some(gx) = gx.as_deref_mut() {
                                let row = &w[r0..r0 + cout];
                                let mut dot = S::zero();
                                for (&a, &b) in row.iter().zip(go) {
                                    dot += a * b;
                                }
                                gx[i0 + ci] += dot;
                            }
                            if let Some(gw) = gw.as_deref_mut() {
                                let xv = x[i0 + ci];
                                for (a, &v) in gw[r0..r0 + cout].iter_mut().zip(go) {
                                    *a += xv * v;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

/// `out[n, o] = sum_i x[n, i] * w[i, o] + b[o]`
pub(crate) fn dense_forward<S: Real>(x: &[S], w: &[S], b: &[S], rows: usize, inp: usize, outp: usize, out: &mut [S]) {
    for r in 0..rows {
        let acc = &mut out[r * outp..(r + 1) * outp];
        acc.copy_from_slice(b);
        for i in 0..inp {
            let xv = x[r * inp + i];
            for (a, &wv) in acc.iter_mut().zip(&w[i * outp..(i + 1) * outp]) {
                *a += xv * wv;
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn dense_backward<S: Real>(
    x: &[S],
    w: &[S],
    gout: &[S],
    rows: usize,
    inp: usize,
    outp: usize,
    mut gx: Option<&mut [S]>,
    mut gw: Option<&mut [S]>,
    mut gb: Option<&mut [S]>,
) {
    for r in 0..rows {
        let go = &gout[r * outp..(r + 1) * outp];
        if let Some(gb) = gb.as_deref_mut() {
            for (a, &v) in gb.iter_mut().zip(go) {
                *a += v;
            }
        }
        for i in 0..inp {
            let row = i * outp..(i + 1) * outp;
            if let Some(gx) = gx.as_deref_mut() {
                let mut dot = S::zero();
                for (&a, &b) in w[row.clone()].iter().zip(go) {
                    dot += a * b;
                }
                gx[r * inp + i] += dot;
            }
            if let Some(gw) = gw.as_deref_mut() {
                let xv = x[r * inp + i];
                for (a, &v) in gw[row].iter_mut().zip(go) {
                    *a += xv * v;
                }
            }
        }
    }
}

/// Per-channel mean and biased variance of a channels-last buffer.
pub(crate) fn channel_moments<S: Real>(x: &[S], c: usize) -> (alloc::vec::Vec<S>, alloc::vec::Vec<S>) {
    let m = x.len() / c;
    let mut mean = alloc::vec![S::zero(); c];
    for row in x.chunks_exact(c) {
        for (a, &v) in mean.iter_mut().zip(row) {
            *a += v;
        }
    }
    let inv_m = S::one() / S::of(m as f64);
    mean.iter_mut().for_each(|v| *v *= inv_m);
    let mut var = alloc::vec![S::zero(); c];
    for row in x.chunks_exact(c) {
        for ((a, &v), &mu) in var.iter_mut().zip(row).zip(&mean) {
            let d = v - mu;
            *a += d * d;
        }
    }
    var.iter_mut().for_each(|v| *v *= inv_m);
    (mean, var)
}

#[inline]
pub(crate) fn sigmoid<S: Real>(x: S) -> S {
    if x >= S::zero() {
        S::one() / (S::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (S::one() + e)
    }
}
