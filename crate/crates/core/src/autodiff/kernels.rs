//! Raw loops behind the graph operations. Everything here works on flat
//! row-major slices; shape validation happens in the graph layer.

/// `c[m,n] = a[m,k] · b[k,n]`
pub fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (cv, bv) in crow.iter_mut().zip(brow) {
                *cv += aip * bv;
            }
        }
    }
    c
}

/// `out[m,k] = g[m,n] · b[k,n]ᵀ`
pub fn matmul_bt(g: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * k];
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &b[p * n..(p + 1) * n];
            out[i * k + p] = grow.iter().zip(brow).map(|(x, y)| x * y).sum();
        }
    }
    out
}

/// `out[k,n] = a[m,k]ᵀ · g[m,n]`
pub fn matmul_at(a: &[f64], g: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; k * n];
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let orow = &mut out[p * n..(p + 1) * n];
            for (o, gv) in orow.iter_mut().zip(grow) {
                *o += aip * gv;
            }
        }
    }
    out
}

#[derive(Clone, Copy, Debug)]
pub struct ConvDims {
    pub batch: usize,
    pub in_ch: usize,
    pub height: usize,
    pub width: usize,
    pub out_ch: usize,
    pub kh: usize,
    pub kw: usize,
}

impl ConvDims {
    pub fn out_h(&self) -> usize {
        self.height - self.kh + 1
    }
    pub fn out_w(&self) -> usize {
        self.width - self.kw + 1
    }
}

/// Valid-padding, stride-1 cross-correlation.
pub fn conv2d(input: &[f64], kernel: &[f64], bias: &[f64], d: ConvDims) -> Vec<f64> {
    let (oh, ow) = (d.out_h(), d.out_w());
    let plane = oh * ow;
    let mut out = vec![0.0; d.batch * d.out_ch * plane];
    for b in 0..d.batch {
        for o in 0..d.out_ch {
            let dst = &mut out[(b * d.out_ch + o) * plane..(b * d.out_ch + o + 1) * plane];
            dst.iter_mut().for_each(|v| *v = bias[o]);
            for c in 0..d.in_ch {
                let src = &input[(b * d.in_ch + c) * d.height * d.width..][..d.height * d.width];
                let ker = &kernel[(o * d.in_ch + c) * d.kh * d.kw..][..d.kh * d.kw];
                for ki in 0..d.kh {
                    for kj in 0..d.kw {
                        let w = ker[ki * d.kw + kj];
                        for i in 0..oh {
                            let srow = &src[(i + ki) * d.width + kj..][..ow];
                            let drow = &mut dst[i * ow..(i + 1) * ow];
                            for (dv, sv) in drow.iter_mut().zip(srow) {
                                *dv += w * sv;
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Gradients of [`conv2d`] with respect to input, kernel and bias. The input
/// gradient is left empty when `need_input` is false.
pub fn conv2d_backward(input: &[f64], kernel: &[f64], grad_out: &[f64], d: ConvDims, need_input: bool) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let (oh, ow) = (d.out_h(), d.out_w());
    let plane = oh * ow;
    let mut g_in = if need_input { vec![0.0; input.len()] } else { Vec::new() };
    let mut g_k = vec![0.0; kernel.len()];
    let mut g_b = vec![0.0; d.out_ch];
    for b in 0..d.batch {
        for o in 0..d.out_ch {
            let go = &grad_out[(b * d.out_ch + o) * plane..][..plane];
            g_b[o] += go.iter().sum::<f64>();
            for c in 0..d.in_ch {
                let base = (b * d.in_ch + c) * d.height * d.width;
                let src = &input[base..base + d.height * d.width];
                let kbase = (o * d.in_ch + c) * d.kh * d.kw;
                for ki in 0..d.kh {
                    for kj in 0..d.kw {
                        let w = kernel[kbase + ki * d.kw + kj];
                        let mut acc = 0.0;
                        for i in 0..oh {
                            let off = (i + ki) * d.width + kj;
                            let grow = &go[i * ow..(i + 1) * ow];
                            let srow = &src[off..off + ow];
                            acc += grow.iter().zip(srow).map(|(g, s)| g * s).sum::<f64>();
                        }
                        g_k[kbase + ki * d.kw + kj] += acc;
                        if !need_input {
                            continue;
                        }
                        for i in 0..oh {
                            let off = (i + ki) * d.width + kj;
                            let grow = &go[i * ow..(i + 1) * ow];
                            let gin = &mut g_in[base + off..base + off + ow];
                            for (gi, gv) in gin.iter_mut().zip(grow) {
                                *gi += w * gv;
                            }
                        }
                    }
                }
            }
        }
    }
    (g_in, g_k, g_b)
}

/// 2×2 max-pool with stride 2 over `[planes, h, w]`. Returns the pooled
/// values and, per output, the flat input index that won. Ties resolve to
/// the lowest flat index.
pub fn maxpool2(input: &[f64], planes: usize, h: usize, w: usize) -> (Vec<f64>, Vec<usize>) {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(planes * oh * ow);
    let mut arg = Vec::with_capacity(planes * oh * ow);
    for p in 0..planes {
        let base = p * h * w;
        for i in 0..oh {
            for j in 0..ow {
                let candidates = [
                    base + 2 * i * w + 2 * j,
                    base + 2 * i * w + 2 * j + 1,
                    base + (2 * i + 1) * w + 2 * j,
                    base + (2 * i + 1) * w + 2 * j + 1,
                ];
                let mut best = candidates[0];
                for &c in &candidates[1..] {
                    if input[c] > input[best] {
                        best = c;
                    }
                }
                out.push(input[best]);
                arg.push(best);
            }
        }
    }
    (out, arg)
}

/// Zero-pad the two trailing axes of `[planes, h, w]` by `pad` on every side.
pub fn pad2d(input: &[f64], planes: usize, h: usize, w: usize, pad: usize) -> Vec<f64> {
    let (ph, pw) = (h + 2 * pad, w + 2 * pad);
    let mut out = vec![0.0; planes * ph * pw];
    for p in 0..planes {
        for i in 0..h {
            let src = &input[(p * h + i) * w..][..w];
            out[(p * ph + i + pad) * pw + pad..][..w].copy_from_slice(src);
        }
    }
    out
}

pub fn unpad2d(grad: &[f64], planes: usize, h: usize, w: usize, pad: usize) -> Vec<f64> {
    let (ph, pw) = (h + 2 * pad, w + 2 * pad);
    let mut out = vec![0.0; planes * h * w];
    for p in 0..planes {
        for i in 0..h {
            out[(p * h + i) * w..][..w].copy_from_slice(&grad[(p * ph + i + pad) * pw + pad..][..w]);
        }
    }
    out
}

/// Numerically stable `ln(1 + e^x)`.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Row-wise log-softmax of a `[rows, cols]` block.
pub fn log_softmax_rows(x: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        let row = &x[r * cols..(r + 1) * cols];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        for (o, v) in out[r * cols..(r + 1) * cols].iter_mut().zip(row) {
            *o = v - lse;
        }
    }
    out
}
