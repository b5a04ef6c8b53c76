//! Channels-last convolution, dense and activation kernels with their
//! backward passes. All spatial kernels are 3×3 with padding 1.

use rand::Rng;

use crate::scalar::Scalar;

pub(crate) const K: usize = 3;
const PAD: usize = 1;

#[inline]
pub(crate) fn out_dim(n: usize, stride: usize) -> usize {
    (n + 2 * PAD - K) / stride + 1
}

/// Input coordinate for output `o` and tap `k`, or `None` in the padding.
#[inline]
fn tap(o: usize, k: usize, stride: usize, n: usize) -> Option<usize> {
    let i = (o * stride + k).checked_sub(PAD)?;
    (i < n).then_some(i)
}

/// Dense 3×3 convolution. Kernel layout `[ky][kx][cin][cout]`.
pub(crate) fn conv_forward<T: Scalar>(
    input: &[T],
    (h, w, cin): (usize, usize, usize),
    kernel: &[T],
    bias: &[T],
    stride: usize,
) -> Vec<T> {
    let cout = bias.len();
    let (oh, ow) = (out_dim(h, stride), out_dim(w, stride));
    let mut out = vec![T::zero(); oh * ow * cout];
    for oy in 0..oh {
        for ox in 0..ow {
            let o = &mut out[(oy * ow + ox) * cout..][..cout];
            o.copy_from_slice(bias);
            for ky in 0..K {
                let Some(iy) = tap(oy, ky, stride, h) else { continue };
                for kx in 0..K {
                    let Some(ix) = tap(ox, kx, stride, w) else { continue };
                    let px = &input[(iy * w + ix) * cin..][..cin];
                    let kbase = (ky * K + kx) * cin;
                    for (ci, &v) in px.iter().enumerate() {
                        let krow = &kernel[(kbase + ci) * cout..][..cout];
                        for (acc, &k) in o.iter_mut().zip(krow) {
                            *acc += v * k;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Parameter gradients of [`conv_forward`]; the input gradient is not needed
/// because the dense convolution only ever sees pixels.
pub(crate) fn conv_backward_params<T: Scalar>(
    input: &[T],
    (h, w, cin): (usize, usize, usize),
    dout: &[T],
    stride: usize,
    dkernel: &mut [T],
    dbias: &mut [T],
) {
    let cout = dbias.len();
    let (oh, ow) = (out_dim(h, stride), out_dim(w, stride));
    for oy in 0..oh {
        for ox in 0..ow {
            let d = &dout[(oy * ow + ox) * cout..][..cout];
            for (b, &g) in dbias.iter_mut().zip(d) {
                *b += g;
            }
            for ky in 0..K {
                let Some(iy) = tap(oy, ky, stride, h) else { continue };
                for kx in 0..K {
                    let Some(ix) = tap(ox, kx, stride, w) else { continue };
                    let px = &input[(iy * w + ix) * cin..][..cin];
                    let kbase = (ky * K + kx) * cin;
                    for (ci, &v) in px.iter().enumerate() {
                        let krow = &mut dkernel[(kbase + ci) * cout..][..cout];
                        for (acc, &g) in krow.iter_mut().zip(d) {
                            *acc += v * g;
                        }
                    }
                }
            }
        }
    }
}

/// Depthwise 3×3 convolution. Kernel layout `[ky][kx][c]`.
pub(crate) fn depthwise_forward<T: Scalar>(
    input: &[T],
    (h, w, c): (usize, usize, usize),
    kernel: &[T],
    bias: &[T],
    stride: usize,
) -> Vec<T> {
    let (oh, ow) = (out_dim(h, stride), out_dim(w, stride));
    let mut out = vec![T::zero(); oh * ow * c];
    for oy in 0..oh {
        for ox in 0..ow {
            let o = &mut out[(oy * ow + ox) * c..][..c];
            o.copy_from_slice(bias);
            for ky in 0..K {
                let Some(iy) = tap(oy, ky, stride, h) else { continue };
                for kx in 0..K {
                    let Some(ix) = tap(ox, kx, stride, w) else { continue };
                    let px = &input[(iy * w + ix) * c..][..c];
                    let krow = &kernel[(ky * K + kx) * c..][..c];
                    for ((acc, &v), &k) in o.iter_mut().zip(px).zip(krow) {
                        *acc += v * k;
                    }
                }
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn depthwise_backward<T: Scalar>(
    input: &[T],
    (h, w, c): (usize, usize, usize),
    kernel: &[T],
    dout: &[T],
    stride: usize,
    dkernel: &mut [T],
    dbias: &mut [T],
    mut dinput: Option<&mut [T]>,
) {
    let (oh, ow) = (out_dim(h, stride), out_dim(w, stride));
    for oy in 0..oh {
        for ox in 0..ow {
            let d = &dout[(oy * ow + ox) * c..][..c];
            for (b, &g) in dbias.iter_mut().zip(d) {
                *b += g;
            }
            for ky in 0..K {
                let Some(iy) = tap(oy, ky, stride, h) else { continue };
                for kx in 0..K {
                    let Some(ix) = tap(ox, kx, stride, w) else { continue };
                    let off = (iy * w + ix) * c;
                    let px = &input[off..][..c];
                    let kidx = (ky * K + kx) * c;
                    let dk = &mut dkernel[kidx..][..c];
                    for ((acc, &v), &g) in dk.iter_mut().zip(px).zip(d) {
                        *acc += v * g;
                    }
                    if let Some(din) = dinput.as_deref_mut() {
                        let krow = &kernel[kidx..][..c];
                        for ((acc, &k), &g) in din[off..][..c].iter_mut().zip(krow).zip(d) {
                            *acc += k * g;
                        }
                    }
                }
            }
        }
    }
}

/// 1×1 convolution over `npix` pixels. Kernel layout `[cin][cout]`.
pub(crate) fn pointwise_forward<T: Scalar>(input: &[T], cin: usize, kernel: &[T], bias: &[T]) -> Vec<T> {
    let cout = bias.len();
    let npix = input.len() / cin;
    let mut out = vec![T::zero(); npix * cout];
    for (px, o) in input.chunks_exact(cin).zip(out.chunks_exact_mut(cout)) {
        o.copy_from_slice(bias);
        for (ci, &v) in px.iter().enumerate() {
            let krow = &kernel[ci * cout..][..cout];
            for (acc, &k) in o.iter_mut().zip(krow) {
                *acc += v * k;
            }
        }
    }
    out
}

pub(crate) fn pointwise_backward<T: Scalar>(
    input: &[T],
    cin: usize,
    kernel: &[T],
    dout: &[T],
    dkernel: &mut [T],
    dbias: &mut [T],
    dinput: Option<&mut [T]>,
) {
    let cout = dbias.len();
    for (px, d) in input.chunks_exact(cin).zip(dout.chunks_exact(cout)) {
        for (b, &g) in dbias.iter_mut().zip(d) {
            *b += g;
        }
        for (ci, &v) in px.iter().enumerate() {
            let krow = &mut dkernel[ci * cout..][..cout];
            for (acc, &g) in krow.iter_mut().zip(d) {
                *acc += v * g;
            }
        }
    }
    if let Some(din) = dinput {
        for (di, d) in din.chunks_exact_mut(cin).zip(dout.chunks_exact(cout)) {
            for (ci, acc) in di.iter_mut().enumerate() {
                let krow = &kernel[ci * cout..][..cout];
                let mut s = T::zero();
                for (&k, &g) in krow.iter().zip(d) {
                    s += k * g;
                }
                *acc += s;
            }
        }
    }
}

pub(crate) fn relu_inplace<T: Scalar>(x: &mut [T]) {
    for v in x {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
}

/// Zeroes gradient entries whose ReLU output was not positive.
pub(crate) fn relu_backward<T: Scalar>(grad: &mut [T], activated: &[T]) {
    for (g, &a) in grad.iter_mut().zip(activated) {
        if a <= T::zero() {
            *g = T::zero();
        }
    }
}

/// `W x + b` with `W` stored `[out][in]`.
pub(crate) fn dense_forward<T: Scalar>(x: &[T], kernel: &[T], bias: &[T]) -> Vec<T> {
    let n_in = x.len();
    bias.iter()
        .enumerate()
        .map(|(o, &b)| {
            let row = &kernel[o * n_in..][..n_in];
            b + row.iter().zip(x).map(|(&w, &v)| w * v).sum::<T>()
        })
        .collect()
}

pub(crate) fn dense_backward<T: Scalar>(
    x: &[T],
    kernel: &[T],
    dy: &[T],
    dkernel: &mut [T],
    dbias: &mut [T],
    dx: &mut [T],
) {
    let n_in = x.len();
    for (o, &g) in dy.iter().enumerate() {
        dbias[o] += g;
        let row = &kernel[o * n_in..][..n_in];
        let drow = &mut dkernel[o * n_in..][..n_in];
        for i in 0..n_in {
            drow[i] += g * x[i];
            dx[i] += g * row[i];
        }
    }
}

pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Inverted-dropout multipliers: each unit is 0 with probability `rate`,
/// otherwise `1 / (1 - rate)`.
pub fn dropout_mask<T: Scalar, R: Rng + ?Sized>(n: usize, rate: f64, rng: &mut R) -> Vec<T> {
    let keep = T::lit(1.0 / (1.0 - rate));
    (0..n).map(|_| if rng.random::<f64>() < rate { T::zero() } else { keep }).collect()
}

pub(crate) fn apply_mask<T: Scalar>(x: &mut [T], mask: &[T]) {
    for (v, &m) in x.iter_mut().zip(mask) {
        *v *= m;
    }
}
