use super::{Scalar, Tensor4};
use crate::error::{Error, Result};

/// Non-overlapping 2×2 max pooling. Returns the pooled tensor and, for each
/// output element, the flat index of the input element that won. Ties go to
/// the first maximum in row-major order within the block.
pub fn maxpool2x2_forward<T: Scalar>(x: &Tensor4<T>) -> Result<(Tensor4<T>, Vec<u32>)> {
    let [n, c, h, w] = x.dims();
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::ShapeMismatch(format!(
            "max pooling needs even dims, got {h}x{w}"
        )));
    }
    if x.len() > u32::MAX as usize {
        return Err(Error::ShapeMismatch(
            "tensor too large for pooling indices".into(),
        ));
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(n * c * oh * ow);
    let mut arg = Vec::with_capacity(n * c * oh * ow);
    let data = x.data();
    for plane in 0..n * c {
        let base = plane * h * w;
        for y in 0..oh {
            for xx in 0..ow {
                let first = base + 2 * y * w + 2 * xx;
                let mut best = first;
                for idx in [first + 1, first + w, first + w + 1] {
                    if data[idx] > data[best] {
                        best = idx;
                    }
                }
                out.push(data[best]);
                arg.push(best as u32);
            }
        }
    }
    Ok((Tensor4::new([n, c, oh, ow], out)?, arg))
}

/// Routes each output gradient to its recorded argmax; the input shape is
/// twice the gradient's spatial size.
pub fn maxpool2x2_backward<T: Scalar>(argmax: &[u32], grad_out: &Tensor4<T>) -> Result<Tensor4<T>> {
    if argmax.len() != grad_out.len() {
        return Err(Error::ShapeMismatch(format!(
            "argmax has {} entries for a gradient of {}",
            argmax.len(),
            grad_out.len()
        )));
    }
    let [n, c, h, w] = grad_out.dims();
    let mut gx = Tensor4::zeros([n, c, 2 * h, 2 * w]);
    let data = gx.data_mut();
    for (&idx, &g) in argmax.iter().zip(grad_out.data()) {
        let slot = data
            .get_mut(idx as usize)
            .ok_or_else(|| Error::ShapeMismatch(format!("argmax index {idx} out of range")))?;
        *slot = *slot + g;
    }
    Ok(gx)
}

/// Nearest-neighbour 2× upsampling.
pub fn upsample2x2_forward<T: Scalar>(x: &Tensor4<T>) -> Tensor4<T> {
    let [n, c, h, w] = x.dims();
    let mut out = Vec::with_capacity(x.len() * 4);
    let mut row = Vec::with_capacity(2 * w);
    for plane in x.data().chunks_exact(h * w) {
        for src in plane.chunks_exact(w) {
            row.clear();
            row.extend(src.iter().flat_map(|&v| [v, v]));
            out.extend_from_slice(&row);
            out.extend_from_slice(&row);
        }
    }
    Tensor4::new([n, c, 2 * h, 2 * w], out).expect("consistent upsample shape")
}

/// Adjoint of [`upsample2x2_forward`]: sums each 2×2 block.
pub fn upsample2x2_backward<T: Scalar>(grad_out: &Tensor4<T>) -> Result<Tensor4<T>> {
    let [n, c, h, w] = grad_out.dims();
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::ShapeMismatch(format!(
            "upsample gradient must have even dims, got {h}x{w}"
        )));
    }
    let (ih, iw) = (h / 2, w / 2);
    let g = grad_out.data();
    let mut out = Vec::with_capacity(n * c * ih * iw);
    for plane in 0..n * c {
        let base = plane * h * w;
        for y in 0..ih {
            for x in 0..iw {
                let i = base + 2 * y * w + 2 * x;
                out.push(g[i] + g[i + 1] + g[i + w] + g[i + w + 1]);
            }
        }
    }
    Tensor4::new([n, c, ih, iw], out)
}
