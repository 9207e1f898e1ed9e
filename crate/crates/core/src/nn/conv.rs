use rand::Rng;

use super::{Activation, Scalar, Tensor4};
use crate::error::{Error, Result};

/// Upper bound on the number of elements in one im2col buffer.
const COL_LIMIT: usize = 1 << 21;

/// Layers with at most this many outputs skip im2col: a GEMM with so few
/// rows is bound by memory traffic on the column buffer, while shifted-row
/// accumulation touches the input only.
const DIRECT_MAX_OUT: usize = 4;

/// 3×3 convolution, stride 1, zero padding 1, followed by an activation.
/// Weights are stored `(out, in, ky, kx)`, which is also the row order of
/// the im2col matrix, so the weight buffer is directly the `out × in·9`
/// GEMM operand.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer<T> {
    in_channels: usize,
    out_channels: usize,
    weights: Vec<T>,
    bias: Vec<T>,
    activation: Activation,
}

/// Gradients of the loss with respect to a convolution's inputs and parameters.
#[derive(Debug, Clone)]
pub struct ConvGrads<T> {
    pub input: Option<Tensor4<T>>,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> ConvLayer<T> {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        weights: Vec<T>,
        bias: Vec<T>,
        activation: Activation,
    ) -> Result<Self> {
        if in_channels == 0 || out_channels == 0 {
            return Err(Error::InvalidParameter(
                "conv channels must be positive".into(),
            ));
        }
        if weights.len() != out_channels * in_channels * 9 || bias.len() != out_channels {
            return Err(Error::ShapeMismatch(format!(
                "conv {in_channels}->{out_channels} needs {} weights and {out_channels} biases, got {} and {}",
                out_channels * in_channels * 9,
                weights.len(),
                bias.len()
            )));
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite conv parameter".into()));
        }
        Ok(Self {
            in_channels,
            out_channels,
            weights,
            bias,
            activation,
        })
    }

    pub fn zeros(in_channels: usize, out_channels: usize, activation: Activation) -> Self {
        Self::new(
            in_channels,
            out_channels,
            vec![T::zero(); out_channels * in_channels * 9],
            vec![T::zero(); out_channels],
            activation,
        )
        .expect("valid zero layer")
    }

    /// Glorot-uniform weights in ±sqrt(6 / (fan_in + fan_out)), zero biases.
    pub fn glorot<R: Rng>(
        in_channels: usize,
        out_channels: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let limit = (6.0 / ((in_channels + out_channels) * 9) as f64).sqrt();
        let weights = (0..out_channels * in_channels * 9)
            .map(|_| T::of_f64(rng.random_range(-limit..limit)))
            .collect();
        Self::new(
            in_channels,
            out_channels,
            weights,
            vec![T::zero(); out_channels],
            activation,
        )
        .expect("valid initialised layer")
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn bias(&self) -> &[T] {
        &self.bias
    }

    pub fn weights_mut(&mut self) -> &mut [T] {
        &mut self.weights
    }

    pub fn bias_mut(&mut self) -> &mut [T] {
        &mut self.bias
    }

    pub fn weight(&self, o: usize, i: usize, ky: usize, kx: usize) -> T {
        self.weights[(o * self.in_channels + i) * 9 + ky * 3 + kx]
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub fn cast<U: Scalar>(&self) -> ConvLayer<U> {
        ConvLayer {
            in_channels: self.in_channels,
            out_channels: self.out_channels,
            weights: self.weights.iter().map(|v| U::of_f64(v.as_f64())).collect(),
            bias: self.bias.iter().map(|v| U::of_f64(v.as_f64())).collect(),
            activation: self.activation,
        }
    }

    fn check_input(&self, x: &Tensor4<T>) -> Result<()> {
        if x.channels() != self.in_channels {
            return Err(Error::ShapeMismatch(format!(
                "conv expects {} input channels, got {}",
                self.in_channels,
                x.channels()
            )));
        }
        Ok(())
    }

    fn rows_per_chunk(&self, width: usize) -> usize {
        (COL_LIMIT / (self.in_channels * 9 * width.max(1))).max(1)
    }

    pub fn forward(&self, x: &Tensor4<T>) -> Result<Tensor4<T>> {
        let mut y = self.preactivation(x)?;
        self.activation.forward(y.data_mut());
        Ok(y)
    }

    /// Convolution plus bias, before the activation.
    pub fn preactivation(&self, x: &Tensor4<T>) -> Result<Tensor4<T>> {
        self.check_input(x)?;
        if self.out_channels <= DIRECT_MAX_OUT {
            return Ok(self.preactivation_direct(x));
        }
        let [n, _, h, w] = x.dims();
        let mut y = Tensor4::zeros([n, self.out_channels, h, w]);
        let k = self.in_channels * 9;
        let total_rows = n * h;
        let step = self.rows_per_chunk(w);
        let mut col = Vec::new();
        let mut buf = Vec::new();
        let mut q0 = 0;
        while q0 < total_rows {
            let q1 = (q0 + step).min(total_rows);
            let ncols = (q1 - q0) * w;
            col.resize(k * ncols, T::zero());
            buf.resize(self.out_channels * ncols, T::zero());
            im2col(x, q0, q1, &mut col);
            T::gemm(
                self.out_channels,
                k,
                ncols,
                T::one(),
                (&self.weights, k as isize, 1),
                (&col, ncols as isize, 1),
                T::zero(),
                (&mut buf, ncols as isize, 1),
            );
            for_rows(q0, q1, h, |q, s, row| {
                let base = (q - q0) * w;
                for o in 0..self.out_channels {
                    let b = self.bias[o];
                    let src = &buf[o * ncols + base..o * ncols + base + w];
                    let off = ((s * self.out_channels + o) * h + row) * w;
                    for (d, &v) in y.data_mut()[off..off + w].iter_mut().zip(src) {
                        *d = v + b;
                    }
                }
            });
            q0 = q1;
        }
        Ok(y)
    }

    /// Backward pass given the forward input `x`, its output `y` and the
    /// loss gradient at the output.
    pub fn backward(
        &self,
        x: &Tensor4<T>,
        y: &Tensor4<T>,
        grad_out: &Tensor4<T>,
    ) -> Result<ConvGrads<T>> {
        self.backward_impl(x, y, grad_out, true)
    }

    pub(crate) fn backward_impl(
        &self,
        x: &Tensor4<T>,
        y: &Tensor4<T>,
        grad_out: &Tensor4<T>,
        need_input: bool,
    ) -> Result<ConvGrads<T>> {
        self.check_input(x)?;
        let [n, _, h, w] = x.dims();
        let out_dims = [n, self.out_channels, h, w];
        y.ensure_dims(out_dims, "conv backward output")?;
        grad_out.ensure_dims(out_dims, "conv backward gradient")?;

        let mut grad_pre = grad_out.clone();
        self.activation.backward(y.data(), grad_pre.data_mut());
        if self.out_channels <= DIRECT_MAX_OUT {
            return Ok(self.backward_direct(x, &grad_pre, need_input));
        }

        let k = self.in_channels * 9;
        let mut gw = vec![T::zero(); self.weights.len()];
        let mut gb = vec![T::zero(); self.out_channels];
        let mut gx = need_input.then(|| Tensor4::zeros(x.dims()));
        let total_rows = n * h;
        let step = self.rows_per_chunk(w);
        let (mut col, mut g, mut gcol) = (Vec::new(), Vec::new(), Vec::new());
        let mut q0 = 0;
        while q0 < total_rows {
            let q1 = (q0 + step).min(total_rows);
            let ncols = (q1 - q0) * w;
            col.resize(k * ncols, T::zero());
            g.resize(self.out_channels * ncols, T::zero());
            im2col(x, q0, q1, &mut col);
            for_rows(q0, q1, h, |q, s, row| {
                let base = (q - q0) * w;
                for o in 0..self.out_channels {
                    let off = ((s * self.out_channels + o) * h + row) * w;
                    g[o * ncols + base..o * ncols + base + w]
                        .copy_from_slice(&grad_pre.data()[off..off + w]);
                }
            });
            for (o, b) in gb.iter_mut().enumerate() {
                *b = g[o * ncols..(o + 1) * ncols]
                    .iter()
                    .fold(*b, |acc, &v| acc + v);
            }
            // dW += G · colᵀ
            T::gemm(
                self.out_channels,
                ncols,
                k,
                T::one(),
                (&g, ncols as isize, 1),
                (&col, 1, ncols as isize),
                T::one(),
                (&mut gw, k as isize, 1),
            );
            if let Some(gx) = gx.as_mut() {
                // dcol = Wᵀ · G
                gcol.resize(k * ncols, T::zero());
                T::gemm(
                    k,
                    self.out_channels,
                    ncols,
                    T::one(),
                    (&self.weights, 1, k as isize),
                    (&g, ncols as isize, 1),
                    T::zero(),
                    (&mut gcol, ncols as isize, 1),
                );
                col2im_add(&gcol, q0, q1, gx);
            }
            q0 = q1;
        }
        Ok(ConvGrads {
            input: gx,
            weights: gw,
            bias: gb,
        })
    }
}

impl<T: Scalar> ConvLayer<T> {
    fn preactivation_direct(&self, x: &Tensor4<T>) -> Tensor4<T> {
        let [n, cin, h, w] = x.dims();
        let hw = h * w;
        let mut y = Tensor4::zeros([n, self.out_channels, h, w]);
        for s in 0..n {
            for o in 0..self.out_channels {
                let dst = &mut y.sample_mut(s)[o * hw..(o + 1) * hw];
                dst.fill(self.bias[o]);
                for i in 0..cin {
                    let src = &x.sample(s)[i * hw..(i + 1) * hw];
                    for_taps(h, w, |tap, y0, yy, xs, xd, len| {
                        let wv = self.weights[(o * cin + i) * 9 + tap];
                        let d = &mut dst[y0 * w + xd..y0 * w + xd + len];
                        let sr = &src[yy * w + xs..yy * w + xs + len];
                        d.iter_mut().zip(sr).for_each(|(a, &b)| *a = *a + wv * b);
                    });
                }
            }
        }
        y
    }

    fn backward_direct(
        &self,
        x: &Tensor4<T>,
        grad_pre: &Tensor4<T>,
        need_input: bool,
    ) -> ConvGrads<T> {
        let [n, cin, h, w] = x.dims();
        let hw = h * w;
        let mut gw = vec![T::zero(); self.weights.len()];
        let mut gb = vec![T::zero(); self.out_channels];
        let mut gx = need_input.then(|| Tensor4::zeros(x.dims()));
        for s in 0..n {
            for (o, gb_o) in gb.iter_mut().enumerate() {
                let g = &grad_pre.sample(s)[o * hw..(o + 1) * hw];
                *gb_o = g.iter().fold(*gb_o, |acc, &v| acc + v);
                for i in 0..cin {
                    let src = &x.sample(s)[i * hw..(i + 1) * hw];
                    let base = (o * cin + i) * 9;
                    for_taps(h, w, |tap, y0, yy, xs, xd, len| {
                        let gr = &g[y0 * w + xd..y0 * w + xd + len];
                        let sr = &src[yy * w + xs..yy * w + xs + len];
                        gw[base + tap] = gr
                            .iter()
                            .zip(sr)
                            .fold(gw[base + tap], |acc, (&a, &b)| acc + a * b);
                    });
                    if let Some(gx) = gx.as_mut() {
                        let dst = &mut gx.sample_mut(s)[i * hw..(i + 1) * hw];
                        for_taps(h, w, |tap, y0, yy, xs, xd, len| {
                            let wv = self.weights[base + tap];
                            let gr = &g[y0 * w + xd..y0 * w + xd + len];
                            let d = &mut dst[yy * w + xs..yy * w + xs + len];
                            d.iter_mut().zip(gr).for_each(|(a, &b)| *a = *a + wv * b);
                        });
                    }
                }
            }
        }
        ConvGrads {
            input: gx,
            weights: gw,
            bias: gb,
        }
    }
}

/// For every tap and output row calls `f(tap, y, source_row, source_x0,
/// dest_x0, len)`, covering the output pixels whose tap lands inside the
/// image.
#[inline]
pub(super) fn for_taps(
    h: usize,
    w: usize,
    mut f: impl FnMut(usize, usize, usize, usize, usize, usize),
) {
    for ky in 0..3 {
        for kx in 0..3 {
            let (xs, xd) = if kx == 0 { (0, 1) } else { (kx - 1, 0) };
            let len = w - usize::from(kx != 1);
            if len == 0 {
                continue;
            }
            let (y_lo, y_hi) = (usize::from(ky == 0), h - usize::from(ky == 2));
            for y in y_lo..y_hi.max(y_lo) {
                f(ky * 3 + kx, y, y + ky - 1, xs, xd, len);
            }
        }
    }
}

/// Calls `f(q, sample, row)` for each global row index `q` in `q0..q1`.
fn for_rows(q0: usize, q1: usize, h: usize, mut f: impl FnMut(usize, usize, usize)) {
    for q in q0..q1 {
        f(q, q / h, q % h);
    }
}

/// Fills `col` (`c·9 × (q1−q0)·w`, row-major) with the zero-padded 3×3
/// neighbourhoods of rows `q0..q1`, where row `q` is row `q % h` of sample
/// `q / h`.
fn im2col<T: Scalar>(x: &Tensor4<T>, q0: usize, q1: usize, col: &mut [T]) {
    let [_, c, h, w] = x.dims();
    let ncols = (q1 - q0) * w;
    let data = x.data();
    for i in 0..c {
        for ky in 0..3 {
            for kx in 0..3 {
                let r = i * 9 + ky * 3 + kx;
                let dst_row = &mut col[r * ncols..(r + 1) * ncols];
                for_rows(q0, q1, h, |q, s, row| {
                    let dst = &mut dst_row[(q - q0) * w..(q - q0 + 1) * w];
                    let yy = row as isize + ky as isize - 1;
                    if yy < 0 || yy >= h as isize {
                        dst.fill(T::zero());
                        return;
                    }
                    let off = ((s * c + i) * h + yy as usize) * w;
                    let src = &data[off..off + w];
                    shift_copy(src, dst, kx);
                });
            }
        }
    }
}

/// `dst[x] = src[x + kx − 1]` with zeros outside the row.
#[inline]
fn shift_copy<T: Scalar>(src: &[T], dst: &mut [T], kx: usize) {
    let w = src.len();
    match kx {
        0 => {
            dst[0] = T::zero();
            dst[1..].copy_from_slice(&src[..w - 1]);
        }
        1 => dst.copy_from_slice(src),
        _ => {
            dst[..w - 1].copy_from_slice(&src[1..]);
            dst[w - 1] = T::zero();
        }
    }
}

/// Adjoint of [`im2col`]: accumulates column gradients into `gx`.
fn col2im_add<T: Scalar>(gcol: &[T], q0: usize, q1: usize, gx: &mut Tensor4<T>) {
    let [_, c, h, w] = gx.dims();
    let ncols = (q1 - q0) * w;
    let data = gx.data_mut();
    for i in 0..c {
        for ky in 0..3 {
            for kx in 0..3 {
                let r = i * 9 + ky * 3 + kx;
                let src_row = &gcol[r * ncols..(r + 1) * ncols];
                for_rows(q0, q1, h, |q, s, row| {
                    let yy = row as isize + ky as isize - 1;
                    if yy < 0 || yy >= h as isize {
                        return;
                    }
                    let src = &src_row[(q - q0) * w..(q - q0 + 1) * w];
                    let off = ((s * c + i) * h + yy as usize) * w;
                    let dst = &mut data[off..off + w];
                    match kx {
                        0 => dst[..w - 1]
                            .iter_mut()
                            .zip(&src[1..])
                            .for_each(|(d, &v)| *d = *d + v),
                        1 => dst.iter_mut().zip(src).for_each(|(d, &v)| *d = *d + v),
                        _ => dst[1..]
                            .iter_mut()
                            .zip(&src[..w - 1])
                            .for_each(|(d, &v)| *d = *d + v),
                    }
                });
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from_seed;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_tensor(dims: [usize; 4], seed: u64) -> Tensor4<f64> {
        let mut rng = rng_from_seed(seed);
        let n = dims.iter().product();
        Tensor4::new(dims, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    fn random_layer(cin: usize, cout: usize, act: Activation, seed: u64) -> ConvLayer<f64> {
        let mut rng = rng_from_seed(seed);
        let w = (0..cin * cout * 9)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let b = (0..cout).map(|_| rng.random_range(-0.5..0.5)).collect();
        ConvLayer::new(cin, cout, w, b, act).unwrap()
    }

    fn center_one() -> ConvLayer<f64> {
        let mut w = vec![0.0; 9];
        w[4] = 1.0;
        ConvLayer::new(1, 1, w, vec![0.0], Activation::None).unwrap()
    }

    /// Six nested loops straight from the definition.
    fn direct(x: &Tensor4<f64>, layer: &ConvLayer<f64>) -> Vec<f64> {
        let [n, cin, h, w] = x.dims();
        let cout = layer.out_channels();
        let mut out = vec![0.0; n * cout * h * w];
        for s in 0..n {
            for o in 0..cout {
                for y in 0..h {
                    for xx in 0..w {
                        let mut acc = layer.bias()[o];
                        for i in 0..cin {
                            for ky in 0..3 {
                                for kx in 0..3 {
                                    let sy = y as isize + ky as isize - 1;
                                    let sx = xx as isize + kx as isize - 1;
                                    if sy >= 0 && sx >= 0 && (sy as usize) < h && (sx as usize) < w
                                    {
                                        acc += layer.weight(o, i, ky, kx)
                                            * x.data()[((s * cin + i) * h + sy as usize) * w
                                                + sx as usize];
                                    }
                                }
                            }
                        }
                        out[((s * cout + o) * h + y) * w + xx] = layer.activation().apply(acc);
                    }
                }
            }
        }
        out
    }

    fn sum_loss(layer: &ConvLayer<f64>, x: &Tensor4<f64>, weights: &Tensor4<f64>) -> f64 {
        layer.forward(x).unwrap().dot(weights)
    }

    #[test]
    fn center_one_kernel_is_exact_identity() {
        let x = random_tensor([2, 1, 5, 7], 1);
        let y = center_one().forward(&x).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn box_kernel_on_constant_loses_mass_at_borders() {
        let c: f64 = 0.9;
        let layer = ConvLayer::new(1, 1, vec![1.0 / 9.0; 9], vec![0.0], Activation::None).unwrap();
        let x = Tensor4::new([1, 1, 5, 5], vec![c; 25]).unwrap();
        let y = layer.forward(&x).unwrap();
        let at = |r: usize, col: usize| y.data()[r * 5 + col];
        assert!((at(2, 2) - c).abs() < 1e-12);
        assert!((at(1, 3) - c).abs() < 1e-12);
        assert!((at(0, 0) - 4.0 * c / 9.0).abs() < 1e-12);
        assert!((at(0, 2) - 6.0 * c / 9.0).abs() < 1e-12);
    }

    #[test]
    fn matches_six_loop_oracle() {
        // 3 outputs run the direct path, 6 the GEMM path
        for cout in [3, 6] {
            let x = random_tensor([1, 2, 4, 4], 3);
            let layer = random_layer(2, cout, Activation::None, 4);
            let y = layer.forward(&x).unwrap();
            for (a, b) in y.data().iter().zip(direct(&x, &layer)) {
                assert!((a - b).abs() < 1e-5);
            }
            let y32 = layer.cast::<f32>().forward(&x.cast::<f32>()).unwrap();
            for (a, b) in y32.data().iter().zip(direct(&x, &layer)) {
                assert!((*a as f64 - b).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn direct_and_gemm_paths_agree() {
        // 5 outputs take the GEMM path; its first 2 rows as a layer take the direct path
        for (h, w) in [(1, 1), (1, 4), (3, 1), (5, 6)] {
            let wide = random_layer(3, 5, Activation::Sigmoid, 60);
            let narrow = ConvLayer::new(
                3,
                2,
                wide.weights()[..2 * 27].to_vec(),
                wide.bias()[..2].to_vec(),
                Activation::Sigmoid,
            )
            .unwrap();
            let x = random_tensor([2, 3, h, w], 61);
            let (yw, yn) = (wide.forward(&x).unwrap(), narrow.forward(&x).unwrap());
            let gw = random_tensor(yw.dims(), 62);
            let mut gn = Tensor4::zeros(yn.dims());
            for s in 0..2 {
                for o in 0..2 {
                    let hw = h * w;
                    gn.sample_mut(s)[o * hw..(o + 1) * hw]
                        .copy_from_slice(&gw.sample(s)[o * hw..(o + 1) * hw]);
                    for (a, b) in yn.sample(s)[o * hw..(o + 1) * hw]
                        .iter()
                        .zip(&yw.sample(s)[o * hw..(o + 1) * hw])
                    {
                        assert!((a - b).abs() < 1e-12);
                    }
                }
            }
            // zero the extra outputs' gradient so both input gradients match
            let mut gw2 = gw.clone();
            for s in 0..2 {
                let hw = h * w;
                gw2.sample_mut(s)[2 * hw..].fill(0.0);
            }
            let a = wide.backward(&x, &yw, &gw2).unwrap();
            let b = narrow.backward(&x, &yn, &gn).unwrap();
            for (p, q) in a.weights[..54].iter().zip(&b.weights) {
                assert!((p - q).abs() < 1e-12);
            }
            for (p, q) in a.bias[..2].iter().zip(&b.bias) {
                assert!((p - q).abs() < 1e-12);
            }
            for (p, q) in a.input.unwrap().data().iter().zip(b.input.unwrap().data()) {
                assert!((p - q).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn channel_mismatch_is_rejected() {
        let layer = random_layer(2, 3, Activation::Relu, 1);
        assert!(layer.forward(&random_tensor([1, 3, 4, 4], 1)).is_err());
        assert!(ConvLayer::<f32>::new(1, 1, vec![0.0; 8], vec![0.0], Activation::None).is_err());
    }

    #[test]
    fn zero_gradient_gives_zero_gradients() {
        let x = random_tensor([1, 2, 4, 4], 5);
        let layer = random_layer(2, 3, Activation::Sigmoid, 6);
        let y = layer.forward(&x).unwrap();
        let g = layer.backward(&x, &y, &Tensor4::zeros(y.dims())).unwrap();
        assert!(g.weights.iter().chain(&g.bias).all(|&v| v == 0.0));
        assert!(g.input.unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_kernel_passes_gradient_through() {
        let x = random_tensor([1, 1, 4, 6], 7);
        let layer = center_one();
        let y = layer.forward(&x).unwrap();
        let go = random_tensor(y.dims(), 8);
        let g = layer.backward(&x, &y, &go).unwrap();
        assert_eq!(g.input.unwrap(), go);
    }

    #[test]
    fn gradients_match_central_differences() {
        let eps = 1e-3;
        let cases = [
            (Activation::None, 3, 10),
            (Activation::Sigmoid, 3, 11),
            (Activation::Relu, 3, 12),
            (Activation::Sigmoid, 6, 13),
            (Activation::Relu, 7, 14),
        ];
        for (act, cout, seed) in cases {
            let x = random_tensor([2, 2, 4, 5], seed);
            let layer = random_layer(2, cout, act, seed + 100);
            let y = layer.forward(&x).unwrap();
            let go = random_tensor(y.dims(), seed + 200);
            let g = layer.backward(&x, &y, &go).unwrap();
            let check = |analytic: f64, numeric: f64| {
                let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
                assert!(rel < 1e-3, "{act:?}: {analytic} vs {numeric}");
            };
            for j in 0..layer.weights().len() {
                let mut p = layer.clone();
                p.weights_mut()[j] += eps;
                let up = sum_loss(&p, &x, &go);
                p.weights_mut()[j] -= 2.0 * eps;
                let down = sum_loss(&p, &x, &go);
                check(g.weights[j], (up - down) / (2.0 * eps));
            }
            for j in 0..layer.bias().len() {
                let mut p = layer.clone();
                p.bias_mut()[j] += eps;
                let up = sum_loss(&p, &x, &go);
                p.bias_mut()[j] -= 2.0 * eps;
                let down = sum_loss(&p, &x, &go);
                check(g.bias[j], (up - down) / (2.0 * eps));
            }
            let gx = g.input.unwrap();
            for j in 0..x.len() {
                let mut xp = x.clone();
                xp.data_mut()[j] += eps;
                let up = sum_loss(&layer, &xp, &go);
                xp.data_mut()[j] -= 2.0 * eps;
                let down = sum_loss(&layer, &xp, &go);
                check(gx.data()[j], (up - down) / (2.0 * eps));
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn linear_conv_is_adjoint(seed in any::<u64>(), h in 1usize..7, w in 1usize..7, cout in 1usize..9) {
            // with no activation the input gradient is the transpose map
            let layer = ConvLayer { bias: vec![0.0; cout], ..random_layer(3, cout, Activation::None, seed) };
            let dx = random_tensor([2, 3, h, w], seed ^ 1);
            let dy = random_tensor([2, cout, h, w], seed ^ 2);
            let jdx = layer.forward(&dx).unwrap();
            let jt = layer.backward(&dx, &jdx, &dy).unwrap().input.unwrap();
            let (lhs, rhs) = (jdx.dot(&dy), dx.dot(&jt));
            prop_assert!((lhs - rhs).abs() <= 1e-4 * lhs.abs().max(rhs.abs()).max(1.0));
        }

        #[test]
        fn forward_is_deterministic(seed in any::<u64>()) {
            let layer = random_layer(2, 4, Activation::Relu, seed).cast::<f32>();
            let x = random_tensor([1, 2, 6, 6], seed ^ 9).cast::<f32>();
            prop_assert_eq!(layer.forward(&x).unwrap(), layer.forward(&x).unwrap());
        }

        #[test]
        fn center_one_identity_on_any_shape(seed in any::<u64>(), h in 1usize..9, w in 1usize..9) {
            let x = random_tensor([1, 1, h, w], seed);
            prop_assert_eq!(center_one().forward(&x).unwrap(), x);
        }
    }
}
