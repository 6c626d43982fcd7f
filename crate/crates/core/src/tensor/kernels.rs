//! Raw numeric kernels over row-major `f64` buffers.
//!
//! Nothing here knows about autodiff; the graph layer in `autograd` calls
//! these and wraps the results. Every kernel visits its reduction terms in a
//! fixed order, including the rayon-parallel ones (parallelism is only over
//! independent output blocks), so results are bit-reproducible.

use rayon::prelude::*;

/// Below this many multiply-adds a kernel stays on the calling thread.
const PAR_THRESHOLD: usize = 1 << 16;

pub fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let n = a.len().max(b.len());
    let mut out = vec![0; n];
    for i in 0..n {
        let da = if i + a.len() >= n { a[i + a.len() - n] } else { 1 };
        let db = if i + b.len() >= n { b[i + b.len() - n] } else { 1 };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return None,
        };
    }
    Some(out)
}

/// Strides of `shape` viewed inside `out_shape`, zero on broadcast axes.
fn broadcast_strides(shape: &[usize], out_shape: &[usize]) -> Vec<usize> {
    let n = out_shape.len();
    let mut strides = vec![0; n];
    let mut acc = 1;
    for i in (0..shape.len()).rev() {
        let oi = i + n - shape.len();
        strides[oi] = if shape[i] == 1 && out_shape[oi] != 1 { 0 } else { acc };
        acc *= shape[i];
    }
    strides
}

/// Visits every output position with the matching input offsets.
fn for_each_pair(
    out_shape: &[usize],
    sa: &[usize],
    sb: &[usize],
    mut f: impl FnMut(usize, usize, usize),
) {
    let total: usize = out_shape.iter().product();
    if total == 0 {
        return;
    }
    if out_shape.is_empty() {
        f(0, 0, 0);
        return;
    }
    let nd = out_shape.len();
    let inner = out_shape[nd - 1];
    let (ia_step, ib_step) = (sa[nd - 1], sb[nd - 1]);
    let mut idx = vec![0usize; nd];
    let mut out = 0;
    loop {
        let mut oa = 0;
        let mut ob = 0;
        for d in 0..nd - 1 {
            oa += idx[d] * sa[d];
            ob += idx[d] * sb[d];
        }
        for j in 0..inner {
            f(out, oa + j * ia_step, ob + j * ib_step);
            out += 1;
        }
        if nd == 1 {
            return;
        }
        let mut d = nd - 2;
        loop {
            idx[d] += 1;
            if idx[d] < out_shape[d] {
                break;
            }
            idx[d] = 0;
            if d == 0 {
                return;
            }
            d -= 1;
        }
    }
}

pub fn binary(
    a: &[f64],
    a_shape: &[usize],
    b: &[f64],
    b_shape: &[usize],
    out_shape: &[usize],
    f: impl Fn(f64, f64) -> f64,
) -> Vec<f64> {
    if a_shape == b_shape {
        return a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect();
    }
    if b.len() == 1 {
        let y = b[0];
        return a.iter().map(|&x| f(x, y)).collect();
    }
    if a.len() == 1 {
        let x = a[0];
        return b.iter().map(|&y| f(x, y)).collect();
    }
    let total: usize = out_shape.iter().product();
    let mut out = vec![0.0; total];
    let sa = broadcast_strides(a_shape, out_shape);
    let sb = broadcast_strides(b_shape, out_shape);
    for_each_pair(out_shape, &sa, &sb, |o, ia, ib| out[o] = f(a[ia], b[ib]));
    out
}

/// Reads `x` (shape `x_shape`) broadcast out to `out_shape`.
pub fn broadcast_to(x: &[f64], x_shape: &[usize], out_shape: &[usize]) -> Vec<f64> {
    let total: usize = out_shape.iter().product();
    if x.len() == 1 {
        return vec![x[0]; total];
    }
    let mut out = vec![0.0; total];
    let sx = broadcast_strides(x_shape, out_shape);
    let zero = vec![0; out_shape.len()];
    for_each_pair(out_shape, &sx, &zero, |o, ix, _| out[o] = x[ix]);
    out
}

/// Sums `x` down to `target`, the inverse of [`broadcast_to`].
pub fn sum_to_shape(x: &[f64], x_shape: &[usize], target: &[usize]) -> Vec<f64> {
    let total: usize = target.iter().product();
    let mut out = vec![0.0; total];
    if total == 1 {
        out[0] = x.iter().sum();
        return out;
    }
    let st = broadcast_strides(target, x_shape);
    let zero = vec![0; x_shape.len()];
    for_each_pair(x_shape, &st, &zero, |i, it, _| out[it] += x[i]);
    out
}

pub fn permute(x: &[f64], shape: &[usize], axes: &[usize]) -> (Vec<usize>, Vec<f64>) {
    let out_shape: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
    let mut in_strides = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        in_strides[i] = in_strides[i + 1] * shape[i + 1];
    }
    let strides: Vec<usize> = axes.iter().map(|&a| in_strides[a]).collect();
    let zero = vec![0; shape.len()];
    let mut out = vec![0.0; x.len()];
    for_each_pair(&out_shape, &strides, &zero, |o, ix, _| out[o] = x[ix]);
    (out_shape, out)
}

/// `a (n×k) · b (k×m)`.
pub fn matmul(a: &[f64], b: &[f64], n: usize, k: usize, m: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * m];
    let row = |(i, orow): (usize, &mut [f64])| {
        let arow = &a[i * k..(i + 1) * k];
        for (p, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * m..(p + 1) * m];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    };
    if n * k * m >= PAR_THRESHOLD && n > 1 {
        out.par_chunks_mut(m).enumerate().for_each(row);
    } else {
        out.chunks_mut(m).enumerate().for_each(row);
    }
    out
}

/// `aᵀ · b` for `a (k×n)`, `b (k×m)`.
fn matmul_at_b(a: &[f64], b: &[f64], k: usize, n: usize, m: usize, out: &mut [f64]) {
    for p in 0..k {
        let arow = &a[p * n..(p + 1) * n];
        let brow = &b[p * m..(p + 1) * m];
        for (i, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let orow = &mut out[i * m..(i + 1) * m];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

/// `a · bᵀ` for `a (n×k)`, `b (m×k)`, accumulated into `out`.
fn matmul_a_bt(a: &[f64], b: &[f64], n: usize, k: usize, m: usize, out: &mut [f64]) {
    for i in 0..n {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..m {
            let brow = &b[j * k..(j + 1) * k];
            let mut s = 0.0;
            for (x, y) in arow.iter().zip(brow) {
                s += x * y;
            }
            out[i * m + j] += s;
        }
    }
}

/// Geometry of a stride-1 2-D convolution over NCHW input.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub o: usize,
    pub kh: usize,
    pub kw: usize,
    pub pad: usize,
}

impl ConvGeom {
    pub fn out_h(&self) -> usize {
        self.h + 2 * self.pad + 1 - self.kh
    }
    pub fn out_w(&self) -> usize {
        self.w + 2 * self.pad + 1 - self.kw
    }
    fn cols_rows(&self) -> usize {
        self.c * self.kh * self.kw
    }
    fn out_hw(&self) -> usize {
        self.out_h() * self.out_w()
    }
    fn work(&self) -> usize {
        self.n * self.o * self.cols_rows() * self.out_hw()
    }
}

fn im2col(x: &[f64], g: &ConvGeom) -> Vec<f64> {
    let (oh, ow) = (g.out_h(), g.out_w());
    let mut cols = vec![0.0; g.cols_rows() * oh * ow];
    for c in 0..g.c {
        let plane = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for a in 0..g.kh {
            for b in 0..g.kw {
                let r = (c * g.kh + a) * g.kw + b;
                let dst = &mut cols[r * oh * ow..(r + 1) * oh * ow];
                for i in 0..oh {
                    let y = i + a;
                    if y < g.pad || y - g.pad >= g.h {
                        continue;
                    }
                    let src = &plane[(y - g.pad) * g.w..(y - g.pad + 1) * g.w];
                    for j in 0..ow {
                        let xx = j + b;
                        if xx >= g.pad && xx - g.pad < g.w {
                            dst[i * ow + j] = src[xx - g.pad];
                        }
                    }
                }
            }
        }
    }
    cols
}

fn col2im(cols: &[f64], g: &ConvGeom, out: &mut [f64]) {
    let (oh, ow) = (g.out_h(), g.out_w());
    for c in 0..g.c {
        let plane = &mut out[c * g.h * g.w..(c + 1) * g.h * g.w];
        for a in 0..g.kh {
            for b in 0..g.kw {
                let r = (c * g.kh + a) * g.kw + b;
                let src = &cols[r * oh * ow..(r + 1) * oh * ow];
                for i in 0..oh {
                    let y = i + a;
                    if y < g.pad || y - g.pad >= g.h {
                        continue;
                    }
                    let dst = &mut plane[(y - g.pad) * g.w..(y - g.pad + 1) * g.w];
                    for j in 0..ow {
                        let xx = j + b;
                        if xx >= g.pad && xx - g.pad < g.w {
                            dst[xx - g.pad] += src[i * ow + j];
                        }
                    }
                }
            }
        }
    }
}

fn per_sample<F>(g: &ConvGeom, sample_len: usize, f: F) -> Vec<f64>
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    let mut out = vec![0.0; g.n * sample_len];
    if g.work() >= PAR_THRESHOLD && g.n > 1 {
        out.par_chunks_mut(sample_len)
            .enumerate()
            .for_each(|(n, chunk)| f(n, chunk));
    } else {
        out.chunks_mut(sample_len)
            .enumerate()
            .for_each(|(n, chunk)| f(n, chunk));
    }
    out
}

/// `y = conv(x, w)`, output `(n, o, out_h, out_w)`.
pub fn conv2d(x: &[f64], w: &[f64], g: &ConvGeom) -> Vec<f64> {
    let in_len = g.c * g.h * g.w;
    let (rows, hw) = (g.cols_rows(), g.out_hw());
    per_sample(g, g.o * hw, |n, out| {
        let cols = im2col(&x[n * in_len..(n + 1) * in_len], g);
        matmul_serial(w, &cols, g.o, rows, hw, out);
    })
}

/// Gradient of `<gy, conv(x, w)>` with respect to `x`.
pub fn conv2d_input_grad(gy: &[f64], w: &[f64], g: &ConvGeom) -> Vec<f64> {
    let in_len = g.c * g.h * g.w;
    let (rows, hw) = (g.cols_rows(), g.out_hw());
    per_sample(g, in_len, |n, out| {
        let gyn = &gy[n * g.o * hw..(n + 1) * g.o * hw];
        let mut dcols = vec![0.0; rows * hw];
        matmul_at_b(w, gyn, g.o, rows, hw, &mut dcols);
        col2im(&dcols, g, out);
    })
}

/// Gradient of `<gy, conv(x, w)>` with respect to `w`.
pub fn conv2d_weight_grad(x: &[f64], gy: &[f64], g: &ConvGeom) -> Vec<f64> {
    let in_len = g.c * g.h * g.w;
    let (rows, hw) = (g.cols_rows(), g.out_hw());
    let wlen = g.o * rows;
    let partials = per_sample(g, wlen, |n, out| {
        let cols = im2col(&x[n * in_len..(n + 1) * in_len], g);
        let gyn = &gy[n * g.o * hw..(n + 1) * g.o * hw];
        matmul_a_bt(gyn, &cols, g.o, hw, rows, out);
    });
    let mut gw = vec![0.0; wlen];
    for chunk in partials.chunks(wlen) {
        for (acc, v) in gw.iter_mut().zip(chunk) {
            *acc += v;
        }
    }
    gw
}

/// `a (n×k) · b (k×m)` accumulated into `out`.
fn matmul_serial(a: &[f64], b: &[f64], n: usize, k: usize, m: usize, out: &mut [f64]) {
    for i in 0..n {
        let orow = &mut out[i * m..(i + 1) * m];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * m..(p + 1) * m];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

/// Flat source index of each window maximum of a 2×2 max-pool (floor
/// division of both spatial dims). Ties resolve to the first position in
/// row-major window order.
pub fn max_pool2d_indices(x: &[f64], shape: &[usize], k: usize) -> (Vec<usize>, Vec<usize>) {
    let (n, c, h, w) = (shape[0], shape[1], shape[2], shape[3]);
    let (oh, ow) = (h / k, w / k);
    let mut idx = Vec::with_capacity(n * c * oh * ow);
    for plane in 0..n * c {
        let base = plane * h * w;
        for i in 0..oh {
            for j in 0..ow {
                let mut best = base + (i * k) * w + j * k;
                for a in 0..k {
                    for b in 0..k {
                        let p = base + (i * k + a) * w + j * k + b;
                        if x[p] > x[best] {
                            best = p;
                        }
                    }
                }
                idx.push(best);
            }
        }
    }
    (vec![n, c, oh, ow], idx)
}
