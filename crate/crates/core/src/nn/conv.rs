//! Direct convolution kernels shared by conv2d and conv3d.
//!
//! Inputs are zero-padded into a scratch buffer; for each kernel tap the output is an
//! axpy over a contiguous span of that buffer, evaluated in the padded row layout and
//! cropped afterwards. Strided convolutions run the stride-1 kernel and subsample.

use crate::scalar::Scalar;

const CHUNK: usize = 2048;

#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeom {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: [usize; 3],
    pub stride: [usize; 3],
    pub pad: [usize; 3],
    pub in_sp: [usize; 3],
}

impl ConvGeom {
    pub fn new_2d(
        in_ch: usize,
        out_ch: usize,
        k: usize,
        stride: usize,
        pad: usize,
        hw: [usize; 2],
    ) -> Self {
        ConvGeom {
            in_ch,
            out_ch,
            kernel: [1, k, k],
            stride: [1, stride, stride],
            pad: [0, pad, pad],
            in_sp: [1, hw[0], hw[1]],
        }
    }

    pub fn new_3d(
        in_ch: usize,
        out_ch: usize,
        k: usize,
        stride: usize,
        pad: usize,
        xyz: [usize; 3],
    ) -> Self {
        ConvGeom {
            in_ch,
            out_ch,
            kernel: [k; 3],
            stride: [stride; 3],
            pad: [pad; 3],
            in_sp: xyz,
        }
    }

    fn padded(&self) -> [usize; 3] {
        [0, 1, 2].map(|a| self.in_sp[a] + 2 * self.pad[a])
    }

    /// Stride-1 output extent over the padded input.
    fn full_out(&self) -> [usize; 3] {
        let p = self.padded();
        [0, 1, 2].map(|a| p[a] - self.kernel[a] + 1)
    }

    pub fn out_sp(&self) -> [usize; 3] {
        let f = self.full_out();
        [0, 1, 2].map(|a| (f[a] - 1) / self.stride[a] + 1)
    }

    fn plane(&self) -> usize {
        let p = self.padded();
        p[1] * p[2]
    }

    fn row(&self) -> usize {
        self.padded()[2]
    }

    fn padded_len(&self) -> usize {
        self.padded().iter().product()
    }

    /// Length of the padded-layout span covering every stride-1 output position.
    fn span(&self) -> usize {
        let f = self.full_out();
        (f[0] - 1) * self.plane() + (f[1] - 1) * self.row() + f[2]
    }

    fn taps(&self) -> Vec<usize> {
        let (plane, row) = (self.plane(), self.row());
        let mut taps = Vec::with_capacity(self.kernel.iter().product());
        for kz in 0..self.kernel[0] {
            for ky in 0..self.kernel[1] {
                for kx in 0..self.kernel[2] {
                    taps.push(kz * plane + ky * row + kx);
                }
            }
        }
        taps
    }

    fn in_len(&self) -> usize {
        self.in_sp.iter().product()
    }

    pub fn out_len(&self) -> usize {
        self.out_sp().iter().product()
    }

    /// Padded-layout position of each (strided) output element, in row-major order.
    fn out_positions(&self) -> Vec<usize> {
        let o = self.out_sp();
        let (plane, row) = (self.plane(), self.row());
        let mut pos = Vec::with_capacity(self.out_len());
        for z in 0..o[0] {
            for y in 0..o[1] {
                for x in 0..o[2] {
                    pos.push(
                        z * self.stride[0] * plane + y * self.stride[1] * row + x * self.stride[2],
                    );
                }
            }
        }
        pos
    }

    fn pad_input<T: Scalar>(&self, input: &[T]) -> Vec<T> {
        let p = self.padded();
        let s = self.in_sp;
        let mut buf = vec![T::zero(); self.in_ch * self.padded_len()];
        for c in 0..self.in_ch {
            let src = &input[c * self.in_len()..(c + 1) * self.in_len()];
            let dst = &mut buf[c * self.padded_len()..(c + 1) * self.padded_len()];
            for z in 0..s[0] {
                for y in 0..s[1] {
                    let so = (z * s[1] + y) * s[2];
                    let d = ((z + self.pad[0]) * p[1] + y + self.pad[1]) * p[2] + self.pad[2];
                    dst[d..d + s[2]].copy_from_slice(&src[so..so + s[2]]);
                }
            }
        }
        buf
    }
}

#[inline]
fn axpy<T: Scalar>(acc: &mut [T], w: T, x: &[T]) {
    for (a, &b) in acc.iter_mut().zip(x) {
        *a += w * b;
    }
}

/// `acc[q] += w0 x[q] + w1 x[q+1] + w2 x[q+2]`: three adjacent taps in one pass.
#[inline]
fn axpy3<T: Scalar>(acc: &mut [T], w: [T; 3], x: &[T]) {
    let n = acc.len();
    let (x0, x1, x2) = (&x[..n], &x[1..n + 1], &x[2..n + 2]);
    for q in 0..n {
        acc[q] += w[0] * x0[q] + w[1] * x1[q] + w[2] * x2[q];
    }
}

/// Dot product with independent partial sums so it vectorizes; the summation order is
/// fixed, so results are reproducible.
#[inline]
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    const LANES: usize = 16;
    let mut part = [T::zero(); LANES];
    let ca = a.chunks_exact(LANES);
    let cb = b.chunks_exact(LANES);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (xa, xb) in ca.zip(cb) {
        for l in 0..LANES {
            part[l] += xa[l] * xb[l];
        }
    }
    let mut tail = T::zero();
    for (&x, &y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    part.iter().copied().sum::<T>() + tail
}

/// Three dot products `sum_q a[q] x[q + t]` for `t = 0, 1, 2`.
#[inline]
fn dot3<T: Scalar>(a: &[T], x: &[T]) -> [T; 3] {
    let n = a.len();
    [dot(a, &x[..n]), dot(a, &x[1..n + 1]), dot(a, &x[2..n + 2])]
}

pub(crate) fn forward<T: Scalar>(g: &ConvGeom, input: &[T], weight: &[T], bias: &[T]) -> Vec<T> {
    let padded = g.pad_input(input);
    let plen = g.padded_len();
    let span = g.span();
    let taps = g.taps();
    let ntap = taps.len();
    let positions = g.out_positions();
    let kw = g.kernel[2];
    let mut out = vec![T::zero(); g.out_ch * positions.len()];
    let mut acc = vec![T::zero(); span];
    for co in 0..g.out_ch {
        acc.iter_mut().for_each(|a| *a = T::zero());
        let mut start = 0;
        while start < span {
            let end = (start + CHUNK).min(span);
            let a = &mut acc[start..end];
            for ci in 0..g.in_ch {
                let src = &padded[ci * plen..(ci + 1) * plen];
                let w = &weight[(co * g.in_ch + ci) * ntap..(co * g.in_ch + ci + 1) * ntap];
                if kw == 3 {
                    for (r, &off) in taps.iter().step_by(3).enumerate() {
                        axpy3(a, [w[3 * r], w[3 * r + 1], w[3 * r + 2]], &src[start + off..end + off + 2]);
                    }
                } else {
                    for (t, &off) in taps.iter().enumerate() {
                        if w[t] != T::zero() {
                            axpy(a, w[t], &src[start + off..end + off]);
                        }
                    }
                }
            }
            start = end;
        }
        let dst = &mut out[co * positions.len()..(co + 1) * positions.len()];
        for (d, &p) in dst.iter_mut().zip(&positions) {
            *d = acc[p] + bias[co];
        }
    }
    out
}

/// Accumulates weight/bias gradients and, when requested, returns the input gradient.
pub(crate) fn backward<T: Scalar>(
    g: &ConvGeom,
    input: &[T],
    weight: &[T],
    dout: &[T],
    dweight: &mut [T],
    dbias: &mut [T],
    want_input_grad: bool,
) -> Option<Vec<T>> {
    let padded = g.pad_input(input);
    let plen = g.padded_len();
    let span = g.span();
    let taps = g.taps();
    let ntap = taps.len();
    let positions = g.out_positions();
    let nout = positions.len();
    let mut dpad = if want_input_grad {
        vec![T::zero(); g.in_ch * plen]
    } else {
        Vec::new()
    };
    let kw = g.kernel[2];
    // dacc lives at offset 2 so fused three-tap passes can read two zeros on either side.
    let mut dacc_pad = vec![T::zero(); span + 4];
    for co in 0..g.out_ch {
        let d = &dout[co * nout..(co + 1) * nout];
        dbias[co] += d.iter().copied().sum::<T>();
        if d.iter().all(|&x| x == T::zero()) {
            continue;
        }
        dacc_pad.iter_mut().for_each(|a| *a = T::zero());
        for (&p, &v) in positions.iter().zip(d) {
            dacc_pad[p + 2] = v;
        }
        let mut start = 0;
        while start < span {
            let end = (start + CHUNK).min(span);
            let len = end - start;
            let dacc = &dacc_pad[start + 2..end + 2];
            for ci in 0..g.in_ch {
                let src = &padded[ci * plen..(ci + 1) * plen];
                let base = (co * g.in_ch + ci) * ntap;
                if kw == 3 {
                    for (r, &off) in taps.iter().step_by(3).enumerate() {
                        let o = off + start;
                        let [d0, d1, d2] = dot3(dacc, &src[o..o + len + 2]);
                        dweight[base + 3 * r] += d0;
                        dweight[base + 3 * r + 1] += d1;
                        dweight[base + 3 * r + 2] += d2;
                    }
                } else {
                    for (t, &off) in taps.iter().enumerate() {
                        dweight[base + t] += dot(dacc, &src[off + start..off + end]);
                    }
                }
                if want_input_grad {
                    let dst = &mut dpad[ci * plen..(ci + 1) * plen];
                    if kw == 3 {
                        // Each output index r gathers dacc[r], dacc[r - 1], dacc[r - 2].
                        let ext = &dacc_pad[start..end + 4];
                        for (r, &off) in taps.iter().step_by(3).enumerate() {
                            let w = [
                                weight[base + 3 * r + 2],
                                weight[base + 3 * r + 1],
                                weight[base + 3 * r],
                            ];
                            let o = off + start;
                            if end == span {
                                axpy3(&mut dst[o..o + len + 2], w, ext);
                            } else {
                                axpy3(&mut dst[o..o + len], w, &ext[..len + 2]);
                            }
                        }
                    } else {
                        for (t, &off) in taps.iter().enumerate() {
                            let w = weight[base + t];
                            if w != T::zero() {
                                axpy(&mut dst[off + start..off + end], w, dacc);
                            }
                        }
                    }
                }
            }
            start = end;
        }
    }
    if !want_input_grad {
        return None;
    }
    let p = g.padded();
    let s = g.in_sp;
    let mut dinput = vec![T::zero(); g.in_ch * g.in_len()];
    for c in 0..g.in_ch {
        let src = &dpad[c * plen..(c + 1) * plen];
        let dst = &mut dinput[c * g.in_len()..(c + 1) * g.in_len()];
        for z in 0..s[0] {
            for y in 0..s[1] {
                let d = (z * s[1] + y) * s[2];
                let so = ((z + g.pad[0]) * p[1] + y + g.pad[1]) * p[2] + g.pad[2];
                dst[d..d + s[2]].copy_from_slice(&src[so..so + s[2]]);
            }
        }
    }
    Some(dinput)
}
