//! Feature-map primitives with hand-written backward passes.

use super::scalar::{gemm, Scalar};

/// A stack of `n` feature maps, each `c×h×w`, stored as `[n][c][h][w]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Maps<T> {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> Maps<T> {
    pub fn zeros(n: usize, c: usize, h: usize, w: usize) -> Self {
        Self {
            n,
            c,
            h,
            w,
            data: vec![T::zero(); n * c * h * w],
        }
    }

    pub fn from_vec(n: usize, c: usize, h: usize, w: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), n * c * h * w, "map buffer length");
        Self { n, c, h, w, data }
    }

    pub fn hw(&self) -> usize {
        self.h * self.w
    }

    pub fn entry_len(&self) -> usize {
        self.c * self.h * self.w
    }

    pub fn entry(&self, e: usize) -> &[T] {
        let len = self.entry_len();
        &self.data[e * len..(e + 1) * len]
    }

    pub fn entry_mut(&mut self, e: usize) -> &mut [T] {
        let len = self.entry_len();
        &mut self.data[e * len..(e + 1) * len]
    }

    pub fn same_shape(&self, other: &Maps<T>) -> bool {
        (self.n, self.c, self.h, self.w) == (other.n, other.c, other.h, other.w)
    }
}

/// Copies rows of `k×k` neighbourhoods (zero padded, stride 1) into
/// `cols[(ci*k + ky)*k + kx][y*w + x]`.
fn im2col<T: Scalar>(input: &[T], c: usize, h: usize, w: usize, k: usize, cols: &mut [T]) {
    let pad = (k / 2) as isize;
    let hw = h * w;
    for ci in 0..c {
        let plane = &input[ci * hw..(ci + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let dst = &mut cols[row * hw..(row + 1) * hw];
                let dx = kx as isize - pad;
                let dy = ky as isize - pad;
                let x_lo = (-dx).max(0) as usize;
                let x_hi = (w as isize - dx).min(w as isize).max(0) as usize;
                for y in 0..h {
                    let sy = y as isize + dy;
                    let out = &mut dst[y * w..(y + 1) * w];
                    if sy < 0 || sy >= h as isize || x_lo >= x_hi {
                        out.fill(T::zero());
                        continue;
                    }
                    let src = &plane[sy as usize * w..(sy as usize + 1) * w];
                    out[..x_lo].fill(T::zero());
                    out[x_hi..].fill(T::zero());
                    let s0 = (x_lo as isize + dx) as usize;
                    out[x_lo..x_hi].copy_from_slice(&src[s0..s0 + (x_hi - x_lo)]);
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters column gradients back onto the input.
fn col2im<T: Scalar>(cols: &[T], c: usize, h: usize, w: usize, k: usize, out: &mut [T]) {
    let pad = (k / 2) as isize;
    let hw = h * w;
    for ci in 0..c {
        let plane = &mut out[ci * hw..(ci + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let src = &cols[row * hw..(row + 1) * hw];
                let dx = kx as isize - pad;
                let dy = ky as isize - pad;
                let x_lo = (-dx).max(0) as usize;
                let x_hi = (w as isize - dx).min(w as isize).max(0) as usize;
                if x_lo >= x_hi {
                    continue;
                }
                for y in 0..h {
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let s0 = (x_lo as isize + dx) as usize;
                    let dst = &mut plane[sy as usize * w + s0..sy as usize * w + s0 + (x_hi - x_lo)];
                    for (d, s) in dst.iter_mut().zip(&src[y * w + x_lo..y * w + x_hi]) {
                        *d += *s;
                    }
                }
            }
        }
    }
}

/// Same-padded stride-1 convolution applied to every map in the stack.
/// `weight` is `[out_c][in_c][k][k]`.
pub fn conv_forward<T: Scalar>(input: &Maps<T>, weight: &[T], bias: Option<&[T]>, out_c: usize, k: usize) -> Maps<T> {
    let kk = input.c * k * k;
    assert_eq!(weight.len(), out_c * kk, "conv weight size");
    let hw = input.hw();
    let mut out = Maps::zeros(input.n, out_c, input.h, input.w);
    let mut cols = if k == 1 { Vec::new() } else { vec![T::zero(); kk * hw] };
    for e in 0..input.n {
        let src = input.entry(e);
        let cols_ref: &[T] = if k == 1 {
            src
        } else {
            im2col(src, input.c, input.h, input.w, k, &mut cols);
            &cols
        };
        let dst = out.entry_mut(e);
        gemm(out_c, kk, hw, weight, false, cols_ref, false, dst, false);
        if let Some(b) = bias {
            for (o, &bo) in b.iter().enumerate() {
                for v in &mut dst[o * hw..(o + 1) * hw] {
                    *v += bo;
                }
            }
        }
    }
    out
}

/// Accumulates weight (and bias) gradients and returns the input gradient
/// when requested.
#[allow(clippy::too_many_arguments)]
pub fn conv_backward<T: Scalar>(
    input: &Maps<T>,
    weight: &[T],
    dout: &Maps<T>,
    k: usize,
    dweight: &mut [T],
    dbias: Option<&mut [T]>,
    need_input_grad: bool,
) -> Option<Maps<T>> {
    let out_c = dout.c;
    let kk = input.c * k * k;
    let hw = input.hw();
    let mut cols = if k == 1 { Vec::new() } else { vec![T::zero(); kk * hw] };
    let mut dcols = vec![T::zero(); if need_input_grad && k != 1 { kk * hw } else { 0 }];
    let mut dinput = need_input_grad.then(|| Maps::zeros(input.n, input.c, input.h, input.w));
    for e in 0..input.n {
        let src = input.entry(e);
        let cols_ref: &[T] = if k == 1 {
            src
        } else {
            im2col(src, input.c, input.h, input.w, k, &mut cols);
            &cols
        };
        let g = dout.entry(e);
        gemm(out_c, hw, kk, g, false, cols_ref, true, dweight, true);
        if let Some(di) = dinput.as_mut() {
            if k == 1 {
                gemm(kk, out_c, hw, weight, true, g, false, di.entry_mut(e), false);
            } else {
                gemm(kk, out_c, hw, weight, true, g, false, &mut dcols, false);
                col2im(&dcols, input.c, input.h, input.w, k, di.entry_mut(e));
            }
        }
    }
    if let Some(db) = dbias {
        for e in 0..dout.n {
            let g = dout.entry(e);
            for (o, d) in db.iter_mut().enumerate() {
                *d += g[o * hw..(o + 1) * hw].iter().copied().sum::<T>();
            }
        }
    }
    dinput
}

pub fn leaky_relu<T: Scalar>(x: T, slope: T) -> T {
    if x > T::zero() {
        x
    } else {
        x * slope
    }
}

/// Per-location LayerNorm statistics kept for the backward pass.
#[derive(Clone, Debug)]
pub struct NormCache<T> {
    pub xhat: Maps<T>,
    pub inv_std: Vec<T>,
}

/// `LayerNorm(LeakyReLU(pre))`, normalizing over channels independently at
/// each spatial location of each map.
pub fn act_norm_forward<T: Scalar>(
    pre: &Maps<T>,
    slope: T,
    gamma: &[T],
    beta: &[T],
    eps: T,
) -> (Maps<T>, NormCache<T>) {
    let (c, hw) = (pre.c, pre.hw());
    let inv_c = T::one() / T::from_usize(c).unwrap();
    let mut xhat = Maps::zeros(pre.n, c, pre.h, pre.w);
    let mut out = Maps::zeros(pre.n, c, pre.h, pre.w);
    let mut inv_std = vec![T::zero(); pre.n * hw];
    let mut mean = vec![T::zero(); hw];
    let mut var = vec![T::zero(); hw];
    for e in 0..pre.n {
        let src = pre.entry(e);
        let xh = xhat.entry_mut(e);
        for (dst, s) in xh.iter_mut().zip(src) {
            *dst = leaky_relu(*s, slope);
        }
        mean.fill(T::zero());
        var.fill(T::zero());
        for ch in 0..c {
            for (m, v) in mean.iter_mut().zip(&xh[ch * hw..(ch + 1) * hw]) {
                *m += *v;
            }
        }
        for m in &mut mean {
            *m *= inv_c;
        }
        for ch in 0..c {
            for ((s, v), m) in var.iter_mut().zip(&xh[ch * hw..(ch + 1) * hw]).zip(&mean) {
                let d = *v - *m;
                *s += d * d;
            }
        }
        let is = &mut inv_std[e * hw..(e + 1) * hw];
        for (i, s) in is.iter_mut().zip(&var) {
            *i = T::one() / (*s * inv_c + eps).sqrt();
        }
        for ch in 0..c {
            let plane = &mut xh[ch * hw..(ch + 1) * hw];
            for ((v, m), i) in plane.iter_mut().zip(&mean).zip(is.iter()) {
                *v = (*v - *m) * *i;
            }
        }
        let o = out.entry_mut(e);
        for ch in 0..c {
            let (g, b) = (gamma[ch], beta[ch]);
            for (dst, v) in o[ch * hw..(ch + 1) * hw].iter_mut().zip(&xh[ch * hw..(ch + 1) * hw]) {
                *dst = *v * g + b;
            }
        }
    }
    (out, NormCache { xhat, inv_std })
}

/// Backward of [`act_norm_forward`]; returns the gradient w.r.t. `pre`.
pub fn act_norm_backward<T: Scalar>(
    pre: &Maps<T>,
    cache: &NormCache<T>,
    dout: &Maps<T>,
    slope: T,
    gamma: &[T],
    dgamma: &mut [T],
    dbeta: &mut [T],
) -> Maps<T> {
    let (c, hw) = (pre.c, pre.hw());
    let inv_c = T::one() / T::from_usize(c).unwrap();
    let mut dpre = Maps::zeros(pre.n, c, pre.h, pre.w);
    let mut sum_g = vec![T::zero(); hw];
    let mut sum_gx = vec![T::zero(); hw];
    for e in 0..pre.n {
        let g = dout.entry(e);
        let xh = cache.xhat.entry(e);
        let dp = dpre.entry_mut(e);
        sum_g.fill(T::zero());
        sum_gx.fill(T::zero());
        for ch in 0..c {
            let gam = gamma[ch];
            let (mut dg, mut db) = (T::zero(), T::zero());
            let gs = &g[ch * hw..(ch + 1) * hw];
            let xs = &xh[ch * hw..(ch + 1) * hw];
            let dxh = &mut dp[ch * hw..(ch + 1) * hw];
            for p in 0..hw {
                dg += gs[p] * xs[p];
                db += gs[p];
                let d = gs[p] * gam;
                dxh[p] = d;
                sum_g[p] += d;
                sum_gx[p] += d * xs[p];
            }
            dgamma[ch] += dg;
            dbeta[ch] += db;
        }
        let is = &cache.inv_std[e * hw..(e + 1) * hw];
        let src = pre.entry(e);
        for ch in 0..c {
            let xs = &xh[ch * hw..(ch + 1) * hw];
            let ps = &src[ch * hw..(ch + 1) * hw];
            let d = &mut dp[ch * hw..(ch + 1) * hw];
            for p in 0..hw {
                let da = is[p] * (d[p] - sum_g[p] * inv_c - xs[p] * sum_gx[p] * inv_c);
                d[p] = if ps[p] > T::zero() { da } else { da * slope };
            }
        }
    }
    dpre
}

/// Sampling table for one axis of a half-pixel-centred bilinear resize.
fn axis_weights(in_n: usize, out_n: usize) -> Vec<(usize, usize, f64)> {
    let scale = in_n as f64 / out_n as f64;
    (0..out_n)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(in_n - 1);
            let i1 = (i0 + 1).min(in_n - 1);
            (i0, i1, src - i0 as f64)
        })
        .collect()
}

/// Bilinear resize of one plane (`align_corners = false` convention).
pub fn resize_plane<T: Scalar>(src: &[T], h: usize, w: usize, out_h: usize, out_w: usize) -> Vec<T> {
    let rows = axis_weights(h, out_h);
    let cols = axis_weights(w, out_w);
    let mut tmp = vec![T::zero(); h * out_w];
    for y in 0..h {
        let line = &src[y * w..(y + 1) * w];
        for (x, &(c0, c1, t)) in cols.iter().enumerate() {
            let t = T::lit(t);
            tmp[y * out_w + x] = line[c0] * (T::one() - t) + line[c1] * t;
        }
    }
    let mut out = vec![T::zero(); out_h * out_w];
    for (y, &(r0, r1, t)) in rows.iter().enumerate() {
        let t = T::lit(t);
        for x in 0..out_w {
            out[y * out_w + x] = tmp[r0 * out_w + x] * (T::one() - t) + tmp[r1 * out_w + x] * t;
        }
    }
    out
}

/// Adjoint of [`resize_plane`].
fn resize_plane_backward<T: Scalar>(dout: &[T], h: usize, w: usize, out_h: usize, out_w: usize, din: &mut [T]) {
    let rows = axis_weights(h, out_h);
    let cols = axis_weights(w, out_w);
    let mut tmp = vec![T::zero(); h * out_w];
    for (y, &(r0, r1, t)) in rows.iter().enumerate() {
        let t = T::lit(t);
        for x in 0..out_w {
            let g = dout[y * out_w + x];
            tmp[r0 * out_w + x] += g * (T::one() - t);
            tmp[r1 * out_w + x] += g * t;
        }
    }
    for y in 0..h {
        for (x, &(c0, c1, t)) in cols.iter().enumerate() {
            let t = T::lit(t);
            let g = tmp[y * out_w + x];
            din[y * w + c0] += g * (T::one() - t);
            din[y * w + c1] += g * t;
        }
    }
}

pub fn resize_forward<T: Scalar>(input: &Maps<T>, out_h: usize, out_w: usize) -> Maps<T> {
    let mut out = Maps::zeros(input.n, input.c, out_h, out_w);
    let (hw, ohw) = (input.hw(), out_h * out_w);
    for plane in 0..input.n * input.c {
        let r = resize_plane(&input.data[plane * hw..(plane + 1) * hw], input.h, input.w, out_h, out_w);
        out.data[plane * ohw..(plane + 1) * ohw].copy_from_slice(&r);
    }
    out
}

pub fn resize_backward<T: Scalar>(dout: &Maps<T>, in_h: usize, in_w: usize) -> Maps<T> {
    let mut din = Maps::zeros(dout.n, dout.c, in_h, in_w);
    let (hw, ohw) = (in_h * in_w, dout.hw());
    for plane in 0..dout.n * dout.c {
        resize_plane_backward(
            &dout.data[plane * ohw..(plane + 1) * ohw],
            in_h,
            in_w,
            dout.h,
            dout.w,
            &mut din.data[plane * hw..(plane + 1) * hw],
        );
    }
    din
}

/// Channel concatenation `[a || b]` per map.
pub fn concat_channels<T: Scalar>(a: &Maps<T>, b: &Maps<T>) -> Maps<T> {
    assert_eq!((a.n, a.h, a.w), (b.n, b.h, b.w), "concat shapes");
    let mut out = Maps::zeros(a.n, a.c + b.c, a.h, a.w);
    for e in 0..a.n {
        let dst = out.entry_mut(e);
        let (left, right) = dst.split_at_mut(a.entry_len());
        left.copy_from_slice(a.entry(e));
        right.copy_from_slice(b.entry(e));
    }
    out
}

/// Splits a gradient of a channel concatenation back into its two parts.
pub fn split_channels<T: Scalar>(g: &Maps<T>, a_c: usize) -> (Maps<T>, Maps<T>) {
    let b_c = g.c - a_c;
    let mut a = Maps::zeros(g.n, a_c, g.h, g.w);
    let mut b = Maps::zeros(g.n, b_c, g.h, g.w);
    let split = a_c * g.hw();
    for e in 0..g.n {
        let src = g.entry(e);
        a.entry_mut(e).copy_from_slice(&src[..split]);
        b.entry_mut(e).copy_from_slice(&src[split..]);
    }
    (a, b)
}

pub fn add_assign<T: Scalar>(dst: &mut Maps<T>, src: &Maps<T>) {
    assert!(dst.same_shape(src), "add shapes");
    for (d, s) in dst.data.iter_mut().zip(&src.data) {
        *d += *s;
    }
}

/// Cross convolution of one target map stack against every context entry,
/// computing the target half once and broadcasting it.
pub fn cross_conv_partitioned<T: Scalar>(
    q: &Maps<T>,
    v: &Maps<T>,
    target_weight: &[T],
    context_weight: &[T],
    bias: &[T],
    out_c: usize,
    k: usize,
) -> Maps<T> {
    let zq = conv_forward(q, target_weight, Some(bias), out_c, k);
    let mut out = conv_forward(v, context_weight, None, out_c, k);
    for e in 0..out.n {
        for (dst, s) in out.entry_mut(e).iter_mut().zip(&zq.data) {
            *dst += *s;
        }
    }
    out
}

/// Cross convolution by concatenating `[q, v_i]` along channels and applying
/// the joined kernel to each entry separately.
pub fn cross_conv_concatenated<T: Scalar>(
    q: &Maps<T>,
    v: &Maps<T>,
    target_weight: &[T],
    context_weight: &[T],
    bias: &[T],
    out_c: usize,
    k: usize,
) -> Maps<T> {
    let kk = k * k;
    let (qc, vc) = (q.c, v.c);
    let mut joined = Vec::with_capacity(out_c * (qc + vc) * kk);
    for o in 0..out_c {
        joined.extend_from_slice(&target_weight[o * qc * kk..(o + 1) * qc * kk]);
        joined.extend_from_slice(&context_weight[o * vc * kk..(o + 1) * vc * kk]);
    }
    let mut out = Maps::zeros(v.n, out_c, v.h, v.w);
    for e in 0..v.n {
        let ve = Maps::from_vec(1, vc, v.h, v.w, v.entry(e).to_vec());
        let pair = concat_channels(q, &ve);
        let z = conv_forward(&pair, &joined, Some(bias), out_c, k);
        out.entry_mut(e).copy_from_slice(&z.data);
    }
    out
}
