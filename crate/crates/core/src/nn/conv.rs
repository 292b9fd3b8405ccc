//! 1-D convolution and transposed convolution on `[B, C, L]` tensors.

use super::graph::{Graph, Var};
use super::tensor::{Mat, MatMut, Real};
use crate::error::{Error, Result};

/// Range of `l in 0..n_idx` with `l * s + off` inside `0..n_tgt`.
#[inline]
fn valid(n_idx: usize, n_tgt: usize, s: usize, off: isize) -> (usize, usize) {
    let lo = if off < 0 { ((-off) as usize).div_ceil(s) } else { 0 };
    let last = n_tgt as isize - 1 - off;
    let hi = if last < 0 { 0 } else { n_idx.min(last as usize / s + 1) };
    (lo, hi.max(lo))
}

/// `dst[l] += src[l * s + off]`
#[inline]
fn gather<T: Real>(src: &[T], dst: &mut [T], s: usize, off: isize) {
    let (lo, hi) = valid(dst.len(), src.len(), s, off);
    if lo == hi {
        return;
    }
    let start = (lo as isize * s as isize + off) as usize;
    if s == 1 {
        add_to(&src[start..start + hi - lo], &mut dst[lo..hi]);
    } else {
        for (j, d) in dst[lo..hi].iter_mut().enumerate() {
            *d += src[start + j * s];
        }
    }
}

/// `dst[l * s + off] += src[l]`
#[inline]
fn scatter<T: Real>(src: &[T], dst: &mut [T], s: usize, off: isize) {
    let (lo, hi) = valid(src.len(), dst.len(), s, off);
    if lo == hi {
        return;
    }
    let start = (lo as isize * s as isize + off) as usize;
    if s == 1 {
        add_to(&src[lo..hi], &mut dst[start..start + hi - lo]);
    } else {
        for (j, &v) in src[lo..hi].iter().enumerate() {
            dst[start + j * s] += v;
        }
    }
}

#[inline]
fn add_to<T: Real>(src: &[T], dst: &mut [T]) {
    dst.iter_mut().zip(src).for_each(|(d, &v)| *d += v);
}

/// Output length of a convolution.
pub fn conv_out_len(len: usize, kernel: usize, stride: usize, dilation: usize, pad_left: usize, pad_right: usize) -> Option<usize> {
    let span = dilation * (kernel - 1) + 1;
    let padded = len + pad_left + pad_right;
    (padded >= span).then(|| (padded - span) / stride + 1)
}

/// Output length of a transposed convolution.
pub fn conv_transpose_out_len(len: usize, kernel: usize, stride: usize, dilation: usize, padding: usize, output_padding: usize) -> Option<usize> {
    let full = (len - 1) * stride + dilation * (kernel - 1) + output_padding + 1;
    (full > 2 * padding).then(|| full - 2 * padding)
}

impl<T: Real> Graph<T> {
    fn conv_bias_check(&self, b: Option<Var>, co: usize) -> Result<()> {
        if let Some(b) = b {
            if self.shape(b) != [co] {
                return Err(Error::shape(format!("conv bias {:?} for {co} output channels", self.shape(b))));
            }
        }
        Ok(())
    }

    /// Cross-correlation with weight `[Co, Ci, K]`, explicit left/right
    /// zero padding (left-only padding gives a causal convolution).
    #[allow(clippy::too_many_arguments)]
    pub fn conv1d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, dilation: usize, pad_left: usize, pad_right: usize) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        if xs.len() != 3 || ws.len() != 3 || xs[1] != ws[1] {
            return Err(Error::shape(format!("conv1d: input {xs:?} (want [B, Ci, L]), weight {ws:?} (want [Co, Ci, K])")));
        }
        if stride == 0 || dilation == 0 {
            return Err(Error::shape("conv1d: stride and dilation must be >= 1"));
        }
        let (bn, ci, l) = (xs[0], xs[1], xs[2]);
        let (co, k) = (ws[0], ws[2]);
        self.conv_bias_check(b, co)?;
        let lout = conv_out_len(l, k, stride, dilation, pad_left, pad_right)
            .ok_or_else(|| Error::shape(format!("conv1d: input length {l} shorter than kernel span")))?;
        let cik = ci * k;
        let im2col = move |src: &[T], bi: usize, cols: &mut [T]| {
            cols.fill(T::zero());
            for i in 0..ci {
                let xrow = &src[(bi * ci + i) * l..(bi * ci + i + 1) * l];
                for kk in 0..k {
                    let off = (kk * dilation) as isize - pad_left as isize;
                    gather(xrow, &mut cols[(i * k + kk) * lout..(i * k + kk + 1) * lout], stride, off);
                }
            }
        };
        let (xv, wv) = (self.value(x), self.value(w));
        let mut out = vec![T::zero(); bn * co * lout];
        let mut cols = vec![T::zero(); cik * lout];
        for bi in 0..bn {
            im2col(xv, bi, &mut cols);
            T::gemm(
                Mat::rows(wv, co, cik),
                Mat::rows(&cols, cik, lout),
                T::zero(),
                MatMut::rows(&mut out[bi * co * lout..(bi + 1) * co * lout], co, lout),
            );
        }
        if let Some(b) = b {
            let bv = self.value(b);
            for bi in 0..bn {
                for o in 0..co {
                    out[(bi * co + o) * lout..(bi * co + o + 1) * lout].iter_mut().for_each(|v| *v += bv[o]);
                }
            }
        }
        let mut parents = vec![x, w];
        parents.extend(b);
        Ok(self.push(vec![bn, co, lout], out, &parents, move |n, g, gr| {
            let (xv, wv) = (&n[x.0].data, &n[w.0].data);
            let mut cols = vec![T::zero(); cik * lout];
            if gr.wants(x) {
                let dx = gr.acc(x);
                for bi in 0..bn {
                    T::gemm(
                        Mat::rows(wv, co, cik).t(),
                        Mat::rows(&g[bi * co * lout..(bi + 1) * co * lout], co, lout),
                        T::zero(),
                        MatMut::rows(&mut cols, cik, lout),
                    );
                    for i in 0..ci {
                        let dxrow = &mut dx[(bi * ci + i) * l..(bi * ci + i + 1) * l];
                        for kk in 0..k {
                            let off = (kk * dilation) as isize - pad_left as isize;
                            scatter(&cols[(i * k + kk) * lout..(i * k + kk + 1) * lout], dxrow, stride, off);
                        }
                    }
                }
            }
            if gr.wants(w) {
                let dw = gr.acc(w);
                for bi in 0..bn {
                    im2col(xv, bi, &mut cols);
                    T::gemm(
                        Mat::rows(&g[bi * co * lout..(bi + 1) * co * lout], co, lout),
                        Mat::rows(&cols, cik, lout).t(),
                        T::one(),
                        MatMut::rows(dw, co, cik),
                    );
                }
            }
            if let Some(b) = b {
                if gr.wants(b) {
                    let db = gr.acc(b);
                    for bi in 0..bn {
                        for o in 0..co {
                            db[o] += g[(bi * co + o) * lout..(bi * co + o + 1) * lout].iter().copied().sum::<T>();
                        }
                    }
                }
            }
        }))
    }

    /// Transposed convolution with weight `[Ci, Co, K]`.
    #[allow(clippy::too_many_arguments)]
    pub fn conv_transpose1d(
        &mut self,
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
        dilation: usize,
        padding: usize,
        output_padding: usize,
    ) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        if xs.len() != 3 || ws.len() != 3 || xs[1] != ws[0] {
            return Err(Error::shape(format!(
                "conv_transpose1d: input {xs:?} (want [B, Ci, L]), weight {ws:?} (want [Ci, Co, K])"
            )));
        }
        if stride == 0 || dilation == 0 {
            return Err(Error::shape("conv_transpose1d: stride and dilation must be >= 1"));
        }
        if output_padding >= stride.max(dilation) {
            return Err(Error::shape("conv_transpose1d: output_padding must be smaller than stride or dilation"));
        }
        let (bn, ci, l) = (xs[0], xs[1], xs[2]);
        let (co, k) = (ws[1], ws[2]);
        self.conv_bias_check(b, co)?;
        let lout = conv_transpose_out_len(l, k, stride, dilation, padding, output_padding)
            .ok_or_else(|| Error::shape("conv_transpose1d: padding removes the whole output"))?;
        let cok = co * k;
        let (xv, wv) = (self.value(x), self.value(w));
        let mut out = vec![T::zero(); bn * co * lout];
        let mut cols = vec![T::zero(); cok * l];
        for bi in 0..bn {
            T::gemm(Mat::rows(wv, ci, cok).t(), Mat::rows(&xv[bi * ci * l..(bi + 1) * ci * l], ci, l), T::zero(), MatMut::rows(&mut cols, cok, l));
            for o in 0..co {
                let orow = &mut out[(bi * co + o) * lout..(bi * co + o + 1) * lout];
                for kk in 0..k {
                    let off = (kk * dilation) as isize - padding as isize;
                    scatter(&cols[(o * k + kk) * l..(o * k + kk + 1) * l], orow, stride, off);
                }
            }
        }
        if let Some(b) = b {
            let bv = self.value(b);
            for bi in 0..bn {
                for o in 0..co {
                    out[(bi * co + o) * lout..(bi * co + o + 1) * lout].iter_mut().for_each(|v| *v += bv[o]);
                }
            }
        }
        let mut parents = vec![x, w];
        parents.extend(b);
        Ok(self.push(vec![bn, co, lout], out, &parents, move |n, g, gr| {
            let (xv, wv) = (&n[x.0].data, &n[w.0].data);
            let mut gcols = vec![T::zero(); cok * l];
            let (want_x, want_w) = (gr.wants(x), gr.wants(w));
            if want_x || want_w {
                for bi in 0..bn {
                    gcols.fill(T::zero());
                    for o in 0..co {
                        let grow = &g[(bi * co + o) * lout..(bi * co + o + 1) * lout];
                        for kk in 0..k {
                            let off = (kk * dilation) as isize - padding as isize;
                            gather(grow, &mut gcols[(o * k + kk) * l..(o * k + kk + 1) * l], stride, off);
                        }
                    }
                    if want_x {
                        let dx = &mut gr.acc(x)[bi * ci * l..(bi + 1) * ci * l];
                        T::gemm(Mat::rows(wv, ci, cok), Mat::rows(&gcols, cok, l), T::one(), MatMut::rows(dx, ci, l));
                    }
                    if want_w {
                        let xb = Mat::rows(&xv[bi * ci * l..(bi + 1) * ci * l], ci, l);
                        T::gemm(xb, Mat::rows(&gcols, cok, l).t(), T::one(), MatMut::rows(gr.acc(w), ci, cok));
                    }
                }
            }
            if let Some(b) = b {
                if gr.wants(b) {
                    let db = gr.acc(b);
                    for bi in 0..bn {
                        for o in 0..co {
                            db[o] += g[(bi * co + o) * lout..(bi * co + o + 1) * lout].iter().copied().sum::<T>();
                        }
                    }
                }
            }
        }))
    }
}
