//! Per-sample kernels on planar (`C×H×W`) buffers. Backward kernels
//! accumulate into their gradient outputs.

/// `C = alpha * A·B + beta * C` with arbitrary strides.
#[allow(clippy::too_many_arguments)]
#[inline]
pub fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    rsa: usize,
    csa: usize,
    b: &[f32],
    rsb: usize,
    csb: usize,
    beta: f32,
    c: &mut [f32],
    rsc: usize,
    csc: usize,
) {
    if m == 0 || n == 0 {
        return;
    }
    if k > 0 {
        assert!((m - 1) * rsa + (k - 1) * csa < a.len(), "gemm: A out of bounds");
        assert!((k - 1) * rsb + (n - 1) * csb < b.len(), "gemm: B out of bounds");
    }
    assert!((m - 1) * rsc + (n - 1) * csc < c.len(), "gemm: C out of bounds");
    // SAFETY: every index touched by sgemm is bounded by the asserts above.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}

/// Spatial geometry of one planar sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Plane {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Plane {
    pub fn new(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
        }
    }

    pub fn area(&self) -> usize {
        self.height * self.width
    }

    pub fn len(&self) -> usize {
        self.channels * self.area()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Unfolds a `k×k` same-padded neighbourhood into rows of `col`
/// (`C·k·k` rows of `H·W` columns).
pub fn im2col(input: &[f32], p: Plane, k: usize, col: &mut Vec<f32>) {
    let (h, w) = (p.height, p.width);
    let pad = k / 2;
    let area = p.area();
    col.clear();
    col.resize(p.channels * k * k * area, 0.0);
    for c in 0..p.channels {
        let src = &input[c * area..(c + 1) * area];
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let dst = &mut col[row * area..(row + 1) * area];
                let x0 = pad.saturating_sub(kx);
                let x1 = (w + pad).saturating_sub(kx).min(w);
                if x0 >= x1 {
                    continue;
                }
                for y in 0..h {
                    let sy = y + ky;
                    if sy < pad || sy - pad >= h {
                        continue;
                    }
                    let sy = sy - pad;
                    let sx0 = x0 + kx - pad;
                    dst[y * w + x0..y * w + x1].copy_from_slice(&src[sy * w + sx0..sy * w + sx0 + (x1 - x0)]);
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: folds `col` back, accumulating into `grad`.
pub fn col2im(col: &[f32], p: Plane, k: usize, grad: &mut [f32]) {
    let (h, w) = (p.height, p.width);
    let pad = k / 2;
    let area = p.area();
    for c in 0..p.channels {
        let dst = &mut grad[c * area..(c + 1) * area];
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let src = &col[row * area..(row + 1) * area];
                let x0 = pad.saturating_sub(kx);
                let x1 = (w + pad).saturating_sub(kx).min(w);
                if x0 >= x1 {
                    continue;
                }
                for y in 0..h {
                    let sy = y + ky;
                    if sy < pad || sy - pad >= h {
                        continue;
                    }
                    let sy = sy - pad;
                    let sx0 = x0 + kx - pad;
                    let d = &mut dst[sy * w + sx0..sy * w + sx0 + (x1 - x0)];
                    for (a, b) in d.iter_mut().zip(&src[y * w + x0..y * w + x1]) {
                        *a += b;
                    }
                }
            }
        }
    }
}

/// Same-padded stride-1 convolution. `weight` is `[out][in][k][k]`.
pub fn conv_forward(
    input: &[f32],
    p: Plane,
    weight: &[f32],
    bias: &[f32],
    out_channels: usize,
    k: usize,
    out: &mut [f32],
    col: &mut Vec<f32>,
) {
    let area = p.area();
    let ck = p.channels * k * k;
    if k == 1 {
        gemm(out_channels, ck, area, weight, ck, 1, input, area, 1, 0.0, out, area, 1);
    } else {
        im2col(input, p, k, col);
        gemm(out_channels, ck, area, weight, ck, 1, col, area, 1, 0.0, out, area, 1);
    }
    for (o, &b) in bias.iter().enumerate() {
        for v in &mut out[o * area..(o + 1) * area] {
            *v += b;
        }
    }
}

/// Backward pass of [`conv_forward`] given the gradient at the
/// pre-activation output.
#[allow(clippy::too_many_arguments)]
pub fn conv_backward(
    input: &[f32],
    p: Plane,
    weight: &[f32],
    out_channels: usize,
    k: usize,
    grad_out: &[f32],
    params: Option<(&mut [f32], &mut [f32])>,
    grad_in: Option<&mut [f32]>,
    col: &mut Vec<f32>,
) {
    let area = p.area();
    let ck = p.channels * k * k;
    if let Some((gw, gb)) = params {
        for (o, b) in gb.iter_mut().enumerate() {
            *b += grad_out[o * area..(o + 1) * area].iter().sum::<f32>();
        }
        let cols: &[f32] = if k == 1 {
            input
        } else {
            im2col(input, p, k, col);
            col
        };
        // dW (O x CK) += dY (O x HW) * col^T (HW x CK)
        gemm(out_channels, area, ck, grad_out, area, 1, cols, 1, area, 1.0, gw, ck, 1);
    }
    if let Some(gi) = grad_in {
        if k == 1 {
            // dX (C x HW) += W^T (C x O) * dY (O x HW)
            gemm(p.channels, out_channels, area, weight, 1, ck, grad_out, area, 1, 1.0, gi, area, 1);
        } else {
            col.clear();
            col.resize(ck * area, 0.0);
            gemm(ck, out_channels, area, weight, 1, ck, grad_out, area, 1, 0.0, col, area, 1);
            col2im(col, p, k, gi);
        }
    }
}

/// Output side length of a max pool.
pub fn pool_output(size: usize, window: usize, stride: usize, same: bool) -> usize {
    if same {
        size.div_ceil(stride)
    } else if size < window {
        0
    } else {
        (size - window) / stride + 1
    }
}

fn pool_window(o: usize, window: usize, stride: usize, same: bool, limit: usize) -> (usize, usize) {
    let start = o as isize * stride as isize - if same { (window / 2) as isize } else { 0 };
    let lo = start.max(0) as usize;
    let hi = ((start + window as isize) as usize).min(limit);
    (lo, hi)
}

/// Max pooling; with `same` the window is centred and padded with -inf.
pub fn maxpool_forward(input: &[f32], p: Plane, window: usize, stride: usize, same: bool, out: &mut [f32]) {
    let oh = pool_output(p.height, window, stride, same);
    let ow = pool_output(p.width, window, stride, same);
    for c in 0..p.channels {
        let src = &input[c * p.area()..(c + 1) * p.area()];
        let dst = &mut out[c * oh * ow..(c + 1) * oh * ow];
        for oy in 0..oh {
            let (y0, y1) = pool_window(oy, window, stride, same, p.height);
            for ox in 0..ow {
                let (x0, x1) = pool_window(ox, window, stride, same, p.width);
                let mut best = f32::NEG_INFINITY;
                for y in y0..y1 {
                    for &v in &src[y * p.width + x0..y * p.width + x1] {
                        if v > best {
                            best = v;
                        }
                    }
                }
                dst[oy * ow + ox] = best;
            }
        }
    }
}

/// Routes each output gradient to the first maximal input of its window.
pub fn maxpool_backward(
    input: &[f32],
    p: Plane,
    window: usize,
    stride: usize,
    same: bool,
    grad_out: &[f32],
    grad_in: &mut [f32],
) {
    let oh = pool_output(p.height, window, stride, same);
    let ow = pool_output(p.width, window, stride, same);
    for c in 0..p.channels {
        let src = &input[c * p.area()..(c + 1) * p.area()];
        let g_out = &grad_out[c * oh * ow..(c + 1) * oh * ow];
        let g_in = &mut grad_in[c * p.area()..(c + 1) * p.area()];
        for oy in 0..oh {
            let (y0, y1) = pool_window(oy, window, stride, same, p.height);
            for ox in 0..ow {
                let g = g_out[oy * ow + ox];
                if g == 0.0 {
                    continue;
                }
                let (x0, x1) = pool_window(ox, window, stride, same, p.width);
                let mut best = f32::NEG_INFINITY;
                let mut at = y0 * p.width + x0;
                for y in y0..y1 {
                    for x in x0..x1 {
                        let v = src[y * p.width + x];
                        if v > best {
                            best = v;
                            at = y * p.width + x;
                        }
                    }
                }
                g_in[at] += g;
            }
        }
    }
}

/// 2×2 stride-2 transposed convolution. `weight` is `[in][out][2][2]`.
pub fn conv_transpose_forward(
    input: &[f32],
    p: Plane,
    weight: &[f32],
    bias: &[f32],
    out_channels: usize,
    out: &mut [f32],
    scratch: &mut Vec<f32>,
) {
    let area = p.area();
    let o4 = out_channels * 4;
    scratch.clear();
    scratch.resize(o4 * area, 0.0);
    // T (O4 x HW) = W^T (O4 x C) * X (C x HW)
    gemm(o4, p.channels, area, weight, 1, o4, input, area, 1, 0.0, scratch, area, 1);
    let ow = p.width * 2;
    let oarea = area * 4;
    for o in 0..out_channels {
        let dst = &mut out[o * oarea..(o + 1) * oarea];
        for q in 0..4 {
            let (dy, dx) = (q / 2, q % 2);
            let src = &scratch[(o * 4 + q) * area..(o * 4 + q + 1) * area];
            for y in 0..p.height {
                let row = (2 * y + dy) * ow;
                for x in 0..p.width {
                    dst[row + 2 * x + dx] = src[y * p.width + x] + bias[o];
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub fn conv_transpose_backward(
    input: &[f32],
    p: Plane,
    weight: &[f32],
    out_channels: usize,
    grad_out: &[f32],
    params: Option<(&mut [f32], &mut [f32])>,
    grad_in: Option<&mut [f32]>,
    scratch: &mut Vec<f32>,
) {
    let area = p.area();
    let o4 = out_channels * 4;
    let ow = p.width * 2;
    let oarea = area * 4;
    scratch.clear();
    scratch.resize(o4 * area, 0.0);
    for o in 0..out_channels {
        let src = &grad_out[o * oarea..(o + 1) * oarea];
        for q in 0..4 {
            let (dy, dx) = (q / 2, q % 2);
            let dst = &mut scratch[(o * 4 + q) * area..(o * 4 + q + 1) * area];
            for y in 0..p.height {
                let row = (2 * y + dy) * ow;
                for x in 0..p.width {
                    dst[y * p.width + x] = src[row + 2 * x + dx];
                }
            }
        }
    }
    if let Some((gw, gb)) = params {
        for (o, b) in gb.iter_mut().enumerate() {
            *b += grad_out[o * oarea..(o + 1) * oarea].iter().sum::<f32>();
        }
        // dW (C x O4) += X (C x HW) * dT^T (HW x O4)
        gemm(p.channels, area, o4, input, area, 1, scratch, 1, area, 1.0, gw, o4, 1);
    }
    if let Some(gi) = grad_in {
        // dX (C x HW) += W (C x O4) * dT (O4 x HW)
        gemm(p.channels, o4, area, weight, o4, 1, scratch, area, 1, 1.0, gi, area, 1);
    }
}

/// Batched dense layer: `Y (N×O) = X (N×I) · Wᵀ + b` with `weight` `[out][in]`.
pub fn dense_forward(input: &[f32], batch: usize, inputs: usize, weight: &[f32], bias: &[f32], out: &mut [f32]) {
    let outputs = bias.len();
    gemm(batch, inputs, outputs, input, inputs, 1, weight, 1, inputs, 0.0, out, outputs, 1);
    for row in out.chunks_exact_mut(outputs) {
        for (v, b) in row.iter_mut().zip(bias) {
            *v += b;
        }
    }
}

pub fn dense_backward(
    input: &[f32],
    batch: usize,
    inputs: usize,
    weight: &[f32],
    outputs: usize,
    grad_out: &[f32],
    params: Option<(&mut [f32], &mut [f32])>,
    grad_in: Option<&mut [f32]>,
) {
    if let Some((gw, gb)) = params {
        for row in grad_out.chunks_exact(outputs) {
            for (b, g) in gb.iter_mut().zip(row) {
                *b += g;
            }
        }
        // dW (O x I) += dY^T (O x N) * X (N x I)
        gemm(outputs, batch, inputs, grad_out, 1, outputs, input, inputs, 1, 1.0, gw, inputs, 1);
    }
    if let Some(gi) = grad_in {
        // dX (N x I) += dY (N x O) * W (O x I)
        gemm(batch, outputs, inputs, grad_out, outputs, 1, weight, inputs, 1, 1.0, gi, inputs, 1);
    }
}
