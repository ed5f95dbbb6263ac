//! Raw numeric kernels behind the tape ops: direct 2-D convolution lowered to
//! GEMM through im2col, and 2x bilinear interpolation. Everything here works
//! on planar row-major buffers and is shared by the autodiff and image paths.

use crate::scalar::Scalar;

/// Output extent of a convolution axis: `floor((n + 2p - k) / s) + 1`.
pub fn conv_out_extent(n: usize, k: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = n + 2 * padding;
    if padded < k {
        return None;
    }
    Some((padded - k) / stride + 1)
}

/// Gathers conv patches of one sample into `col[o][kd]`, `o` over output
/// positions, `kd` over `C*kH*kW`. Out-of-bounds (padding) entries are zero.
#[allow(clippy::too_many_arguments)]
fn im2col<T: Scalar>(
    input: &[T],
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    padding: usize,
    oh: usize,
    ow: usize,
    col: &mut [T],
) {
    let kd = c * kh * kw;
    debug_assert_eq!(col.len(), oh * ow * kd);
    for v in col.iter_mut() {
        *v = T::zero();
    }
    for ch in 0..c {
        let plane = &input[ch * h * w..(ch + 1) * h * w];
        for ky in 0..kh {
            for kx in 0..kw {
                let kd_idx = (ch * kh + ky) * kw + kx;
                for oy in 0..oh {
                    let y = (oy * stride + ky) as isize - padding as isize;
                    if y < 0 || y >= h as isize {
                        continue;
                    }
                    let row = &plane[y as usize * w..(y as usize + 1) * w];
                    let col_row_base = oy * ow;
                    for ox in 0..ow {
                        let x = (ox * stride + kx) as isize - padding as isize;
                        if x < 0 || x >= w as isize {
                            continue;
                        }
                        col[(col_row_base + ox) * kd + kd_idx] = row[x as usize];
                    }
                }
            }
        }
    }
}

/// Scatters `col`-space gradients back onto the input plane stack.
#[allow(clippy::too_many_arguments)]
fn col2im_accumulate<T: Scalar>(
    grad_col: &[T],
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    padding: usize,
    oh: usize,
    ow: usize,
    grad_input: &mut [T],
) {
    let kd = c * kh * kw;
    for ch in 0..c {
        let plane = &mut grad_input[ch * h * w..(ch + 1) * h * w];
        for ky in 0..kh {
            for kx in 0..kw {
                let kd_idx = (ch * kh + ky) * kw + kx;
                for oy in 0..oh {
                    let y = (oy * stride + ky) as isize - padding as isize;
                    if y < 0 || y >= h as isize {
                        continue;
                    }
                    let row = &mut plane[y as usize * w..(y as usize + 1) * w];
                    let col_row_base = oy * ow;
                    for ox in 0..ow {
                        let x = (ox * stride + kx) as isize - padding as isize;
                        if x < 0 || x >= w as isize {
                            continue;
                        }
                        row[x as usize] += grad_col[(col_row_base + ox) * kd + kd_idx];
                    }
                }
            }
        }
    }
}

/// Forward convolution, NCHW input `[n,c,h,w]` with kernel `[f,c,kh,kw]`,
/// producing `[n,f,oh,ow]`.
#[allow(clippy::too_many_arguments)]
pub fn conv2d_forward<T: Scalar>(
    input: &[T],
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    kernel: &[T],
    f: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    padding: usize,
    oh: usize,
    ow: usize,
) -> Vec<T> {
    let kd = c * kh * kw;
    let o = oh * ow;
    let mut col = vec![T::zero(); o * kd];
    let mut out = vec![T::zero(); n * f * o];
    for s in 0..n {
        im2col(
            &input[s * c * h * w..(s + 1) * c * h * w],
            c,
            h,
            w,
            kh,
            kw,
            stride,
            padding,
            oh,
            ow,
            &mut col,
        );
        // out[f][o] = sum_kd kernel[f][kd] * col[o][kd]
        unsafe {
            T::gemm(
                f,
                kd,
                o,
                T::one(),
                kernel.as_ptr(),
                kd as isize,
                1,
                col.as_ptr(),
                1,
                kd as isize,
                T::zero(),
                out[s * f * o..].as_mut_ptr(),
                o as isize,
                1,
            );
        }
    }
    out
}

/// Gradients of [`conv2d_forward`] w.r.t. input and kernel. Either output may
/// be skipped by passing `None`.
#[allow(clippy::too_many_arguments)]
pub fn conv2d_backward<T: Scalar>(
    grad_out: &[T],
    input: &[T],
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    kernel: &[T],
    f: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    padding: usize,
    oh: usize,
    ow: usize,
    mut grad_input: Option<&mut [T]>,
    mut grad_kernel: Option<&mut [T]>,
) {
    let kd = c * kh * kw;
    let o = oh * ow;
    let mut col = vec![T::zero(); o * kd];
    let mut grad_col = vec![T::zero(); o * kd];
    for s in 0..n {
        let g = &grad_out[s * f * o..(s + 1) * f * o];
        if let Some(gk) = grad_kernel.as_deref_mut() {
            im2col(
                &input[s * c * h * w..(s + 1) * c * h * w],
                c,
                h,
                w,
                kh,
                kw,
                stride,
                padding,
                oh,
                ow,
                &mut col,
            );
            // gk[f][kd] += sum_o g[f][o] * col[o][kd]
            unsafe {
                T::gemm(
                    f,
                    o,
                    kd,
                    T::one(),
                    g.as_ptr(),
                    o as isize,
                    1,
                    col.as_ptr(),
                    kd as isize,
                    1,
                    T::one(),
                    gk.as_mut_ptr(),
                    kd as isize,
                    1,
                );
            }
        }
        if let Some(gi) = grad_input.as_deref_mut() {
            // grad_col[o][kd] = sum_f g[f][o] * kernel[f][kd]
            unsafe {
                T::gemm(
                    o,
                    f,
                    kd,
                    T::one(),
                    g.as_ptr(),
                    1,
                    o as isize,
                    kernel.as_ptr(),
                    kd as isize,
                    1,
                    T::zero(),
                    grad_col.as_mut_ptr(),
                    kd as isize,
                    1,
                );
            }
            col2im_accumulate(
                &grad_col,
                c,
                h,
                w,
                kh,
                kw,
                stride,
                padding,
                oh,
                ow,
                &mut gi[s * c * h * w..(s + 1) * c * h * w],
            );
        }
    }
}

/// Per-axis taps for 2x bilinear upsampling with the corners-not-aligned
/// convention: output index `d` samples source coordinate `d/2 - 1/4`,
/// clamped at the borders. Returns `(i0, i1, w0, w1)` per output index.
pub fn up2x_taps<T: Scalar>(n: usize) -> Vec<(usize, usize, T, T)> {
    let q1 = T::lit(0.25);
    let q3 = T::lit(0.75);
    let mut taps = Vec::with_capacity(2 * n);
    for d in 0..2 * n {
        let k = d / 2;
        if d % 2 == 0 {
            // source k - 1/4
            if k == 0 {
                taps.push((0, 0, T::one(), T::zero()));
            } else {
                taps.push((k - 1, k, q1, q3));
            }
        } else {
            // source k + 1/4
            if k + 1 >= n {
                taps.push((n - 1, n - 1, T::one(), T::zero()));
            } else {
                taps.push((k, k + 1, q3, q1));
            }
        }
    }
    taps
}

/// 2x bilinear upsampling of `planes` planar images of `h x w`, yielding
/// `2h x 2w` each.
pub fn up2x_forward<T: Scalar>(input: &[T], planes: usize, h: usize, w: usize) -> Vec<T> {
    let ty = up2x_taps::<T>(h);
    let tx = up2x_taps::<T>(w);
    let (oh, ow) = (2 * h, 2 * w);
    let mut out = vec![T::zero(); planes * oh * ow];
    for p in 0..planes {
        let src = &input[p * h * w..(p + 1) * h * w];
        let dst = &mut out[p * oh * ow..(p + 1) * oh * ow];
        for (oy, &(y0, y1, wy0, wy1)) in ty.iter().enumerate() {
            let r0 = &src[y0 * w..y0 * w + w];
            let r1 = &src[y1 * w..y1 * w + w];
            let drow = &mut dst[oy * ow..(oy + 1) * ow];
            for (ox, &(x0, x1, wx0, wx1)) in tx.iter().enumerate() {
                drow[ox] = wy0 * (wx0 * r0[x0] + wx1 * r0[x1]) + wy1 * (wx0 * r1[x0] + wx1 * r1[x1]);
            }
        }
    }
    out
}

/// Transpose of [`up2x_forward`]: scatters output gradients back to the
/// `h x w` source grid.
pub fn up2x_backward<T: Scalar>(grad_out: &[T], planes: usize, h: usize, w: usize) -> Vec<T> {
    let ty = up2x_taps::<T>(h);
    let tx = up2x_taps::<T>(w);
    let (oh, ow) = (2 * h, 2 * w);
    let mut grad_in = vec![T::zero(); planes * h * w];
    for p in 0..planes {
        let g = &grad_out[p * oh * ow..(p + 1) * oh * ow];
        let dst = &mut grad_in[p * h * w..(p + 1) * h * w];
        for (oy, &(y0, y1, wy0, wy1)) in ty.iter().enumerate() {
            let grow = &g[oy * ow..(oy + 1) * ow];
            for (ox, &(x0, x1, wx0, wx1)) in tx.iter().enumerate() {
                let v = grow[ox];
                dst[y0 * w + x0] += wy0 * wx0 * v;
                dst[y0 * w + x1] += wy0 * wx1 * v;
                dst[y1 * w + x0] += wy1 * wx0 * v;
                dst[y1 * w + x1] += wy1 * wx1 * v;
            }
        }
    }
    grad_in
}
