//! Forward and backward kernels for the feedforward layers. All functions
//! assume shapes were validated by `LayerSpec::output_shape`.

use super::Tensor;

pub(super) fn dense_forward(w: &Tensor, b: &Tensor, x: &Tensor) -> Tensor {
    let out = b.numel();
    let d_in = x.numel();
    let wd = w.data();
    let xd = x.data();
    let mut y = b.data().to_vec();
    for (o, yo) in y.iter_mut().enumerate() {
        let row = &wd[o * d_in..(o + 1) * d_in];
        *yo += row.iter().zip(xd).map(|(wv, xv)| wv * xv).sum::<f64>();
    }
    Tensor::new(vec![out], y).expect("dense output shape")
}

pub(super) fn dense_backward(w: &Tensor, x: &Tensor, dy: &Tensor) -> (Tensor, Tensor, Tensor) {
    let out = dy.numel();
    let d_in = x.numel();
    let wd = w.data();
    let xd = x.data();
    let dyd = dy.data();
    let mut dw = vec![0.0; out * d_in];
    let mut dx = vec![0.0; d_in];
    for o in 0..out {
        let g = dyd[o];
        for i in 0..d_in {
            dw[o * d_in + i] = g * xd[i];
            dx[i] += g * wd[o * d_in + i];
        }
    }
    (
        Tensor::new(vec![out, d_in], dw).expect("dW shape"),
        Tensor::new(vec![out], dyd.to_vec()).expect("db shape"),
        Tensor::new(vec![d_in], dx).expect("dx shape"),
    )
}

pub(super) fn conv1d_forward(
    w: &Tensor,
    b: &Tensor,
    x: &Tensor,
    stride: usize,
    out_shape: &[usize],
) -> Tensor {
    let (oc, out_len) = (out_shape[0], out_shape[1]);
    let (ic, len) = (x.shape()[0], x.shape()[1]);
    let k = w.shape()[2];
    let wd = w.data();
    let xd = x.data();
    let bd = b.data();
    let mut y = vec![0.0; oc * out_len];
    for o in 0..oc {
        for t in 0..out_len {
            let mut acc = bd[o];
            let start = t * stride;
            for c in 0..ic {
                let wrow = &wd[(o * ic + c) * k..(o * ic + c + 1) * k];
                let xrow = &xd[c * len + start..c * len + start + k];
                acc += wrow.iter().zip(xrow).map(|(a, b)| a * b).sum::<f64>();
            }
            y[o * out_len + t] = acc;
        }
    }
    Tensor::new(vec![oc, out_len], y).expect("conv1d output shape")
}

pub(super) fn conv1d_backward(
    w: &Tensor,
    x: &Tensor,
    dy: &Tensor,
    stride: usize,
) -> (Tensor, Tensor, Tensor) {
    let (oc, out_len) = (dy.shape()[0], dy.shape()[1]);
    let (ic, len) = (x.shape()[0], x.shape()[1]);
    let k = w.shape()[2];
    let wd = w.data();
    let xd = x.data();
    let dyd = dy.data();
    let mut dw = vec![0.0; oc * ic * k];
    let mut db = vec![0.0; oc];
    let mut dx = vec![0.0; ic * len];
    for o in 0..oc {
        for t in 0..out_len {
            let g = dyd[o * out_len + t];
            if g == 0.0 {
                continue;
            }
            db[o] += g;
            let start = t * stride;
            for c in 0..ic {
                for j in 0..k {
                    dw[(o * ic + c) * k + j] += g * xd[c * len + start + j];
                    dx[c * len + start + j] += g * wd[(o * ic + c) * k + j];
                }
            }
        }
    }
    (
        Tensor::new(vec![oc, ic, k], dw).expect("conv1d dW"),
        Tensor::new(vec![oc], db).expect("conv1d db"),
        Tensor::new(vec![ic, len], dx).expect("conv1d dx"),
    )
}

pub(super) fn conv2d_forward(
    w: &Tensor,
    b: &Tensor,
    x: &Tensor,
    stride: usize,
    out_shape: &[usize],
) -> Tensor {
    let (oc, oh, ow) = (out_shape[0], out_shape[1], out_shape[2]);
    let (ic, h, wid) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let k = w.shape()[3];
    let wd = w.data();
    let xd = x.data();
    let bd = b.data();
    let mut y = vec![0.0; oc * oh * ow];
    for o in 0..oc {
        for r in 0..oh {
            for cidx in 0..ow {
                let mut acc = bd[o];
                let (r0, c0) = (r * stride, cidx * stride);
                for c in 0..ic {
                    for kr in 0..k {
                        let wrow = &wd[((o * ic + c) * k + kr) * k..((o * ic + c) * k + kr + 1) * k];
                        let xoff = c * h * wid + (r0 + kr) * wid + c0;
                        let xrow = &xd[xoff..xoff + k];
                        acc += wrow.iter().zip(xrow).map(|(a, b)| a * b).sum::<f64>();
                    }
                }
                y[(o * oh + r) * ow + cidx] = acc;
            }
        }
    }
    Tensor::new(vec![oc, oh, ow], y).expect("conv2d output shape")
}

pub(super) fn conv2d_backward(
    w: &Tensor,
    x: &Tensor,
    dy: &Tensor,
    stride: usize,
) -> (Tensor, Tensor, Tensor) {
    let (oc, oh, ow) = (dy.shape()[0], dy.shape()[1], dy.shape()[2]);
    let (ic, h, wid) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let k = w.shape()[3];
    let wd = w.data();
    let xd = x.data();
    let dyd = dy.data();
    let mut dw = vec![0.0; oc * ic * k * k];
    let mut db = vec![0.0; oc];
    let mut dx = vec![0.0; ic * h * wid];
    for o in 0..oc {
        for r in 0..oh {
            for cidx in 0..ow {
                let g = dyd[(o * oh + r) * ow + cidx];
                if g == 0.0 {
                    continue;
                }
                db[o] += g;
                let (r0, c0) = (r * stride, cidx * stride);
                for c in 0..ic {
                    for kr in 0..k {
                        for kc in 0..k {
                            let widx = ((o * ic + c) * k + kr) * k + kc;
                            let xidx = c * h * wid + (r0 + kr) * wid + (c0 + kc);
                            dw[widx] += g * xd[xidx];
                            dx[xidx] += g * wd[widx];
                        }
                    }
                }
            }
        }
    }
    (
        Tensor::new(vec![oc, ic, k, k], dw).expect("conv2d dW"),
        Tensor::new(vec![oc], db).expect("conv2d db"),
        Tensor::new(vec![ic, h, wid], dx).expect("conv2d dx"),
    )
}

/// Non-overlapping max pooling (stride = window size). Returns the pooled
/// tensor and, per output element, the flat input index of its maximum;
/// ties go to the first (row-major) occurrence.
pub(super) fn maxpool2d_forward(x: &Tensor, size: usize, out_shape: &[usize]) -> (Tensor, Vec<usize>) {
    let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (oh, ow) = (out_shape[1], out_shape[2]);
    let xd = x.data();
    let mut y = vec![0.0; c * oh * ow];
    let mut argmax = vec![0usize; c * oh * ow];
    for ch in 0..c {
        for r in 0..oh {
            for cc in 0..ow {
                let mut best = f64::NEG_INFINITY;
                let mut best_idx = 0;
                for kr in 0..size {
                    for kc in 0..size {
                        let idx = ch * h * w + (r * size + kr) * w + (cc * size + kc);
                        if xd[idx] > best {
                            best = xd[idx];
                            best_idx = idx;
                        }
                    }
                }
                let out_idx = (ch * oh + r) * ow + cc;
                y[out_idx] = best;
                argmax[out_idx] = best_idx;
            }
        }
    }
    (
        Tensor::new(out_shape.to_vec(), y).expect("maxpool output shape"),
        argmax,
    )
}

pub(super) fn maxpool2d_backward(input_shape: &[usize], argmax: &[usize], dy: &Tensor) -> Tensor {
    let mut dx = vec![0.0; input_shape.iter().product()];
    for (g, &idx) in dy.data().iter().zip(argmax) {
        dx[idx] += g;
    }
    Tensor::new(input_shape.to_vec(), dx).expect("maxpool dx")
}

pub(super) fn relu_forward(x: &Tensor) -> Tensor {
    let y = x.data().iter().map(|v| v.max(0.0)).collect();
    Tensor::new(x.shape().to_vec(), y).expect("relu shape")
}

pub(super) fn relu_backward(x: &Tensor, dy: &Tensor) -> Tensor {
    let dx = x
        .data()
        .iter()
        .zip(dy.data())
        .map(|(v, g)| if *v > 0.0 { *g } else { 0.0 })
        .collect();
    Tensor::new(x.shape().to_vec(), dx).expect("relu dx")
}

pub(crate) fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

pub(super) fn sigmoid_forward(x: &Tensor) -> Tensor {
    let y = x.data().iter().map(|v| sigmoid(*v)).collect();
    Tensor::new(x.shape().to_vec(), y).expect("sigmoid shape")
}

pub(super) fn sigmoid_backward(y: &Tensor, dy: &Tensor) -> Tensor {
    let dx = y
        .data()
        .iter()
        .zip(dy.data())
        .map(|(s, g)| g * s * (1.0 - s))
        .collect();
    Tensor::new(y.shape().to_vec(), dx).expect("sigmoid dx")
}

pub(super) fn tanh_forward(x: &Tensor) -> Tensor {
    let y = x.data().iter().map(|v| v.tanh()).collect();
    Tensor::new(x.shape().to_vec(), y).expect("tanh shape")
}

pub(super) fn tanh_backward(y: &Tensor, dy: &Tensor) -> Tensor {
    let dx = y
        .data()
        .iter()
        .zip(dy.data())
        .map(|(t, g)| g * (1.0 - t * t))
        .collect();
    Tensor::new(y.shape().to_vec(), dx).expect("tanh dx")
}
