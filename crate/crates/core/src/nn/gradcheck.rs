//! Finite-difference verification of network gradients.
//!
//! Every check runs in f64. A perturbation of one parameter (or input
//! pixel) changes a single channel of one stage output, so the perturbed
//! stage and the next convolution are updated incrementally from cached
//! activations; only the remaining stages are recomputed, and many
//! perturbations are evaluated together as one batch. This keeps an
//! all-parameter check of the full denoiser cheap.
//!
//! Central differences are only exact on smooth pieces of the loss. An
//! entry whose `±ε` evaluations flip the sign of any ReLU pre-activation or
//! change any max-pool winner has crossed a kink; such entries are counted
//! and left out of the error statistic.

use rand::seq::index::sample;
use rayon::prelude::*;

use super::conv::for_taps;
use super::{
    maxpool2x2_forward, mse_loss, upsample2x2_forward, Activation, GradFault, Network, Scalar,
    Stage, Tensor4, Trace,
};
use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng_from_seed};

/// Which gradient entries to compare.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntrySelection {
    All,
    /// At most `per_tensor` entries chosen uniformly without replacement
    /// from each parameter tensor and from the input.
    Sample {
        per_tensor: usize,
        seed: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckConfig {
    /// Central-difference step.
    pub epsilon: f64,
    pub selection: EntrySelection,
    /// Denominator floor of the relative error, so gradients that are zero up
    /// to rounding do not produce spurious ratios.
    pub floor: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-4,
            selection: EntrySelection::All,
            floor: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorCheck {
    pub name: String,
    pub total: usize,
    pub checked: usize,
    /// Entries skipped because a perturbation crossed a kink.
    pub kinks: usize,
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub tensors: Vec<TensorCheck>,
    pub max_rel_error: f64,
    pub checked: usize,
    pub kinks: usize,
}

pub fn grad_check<T: Scalar>(
    net: &Network<T>,
    input: &Tensor4<T>,
    target: &Tensor4<T>,
    config: &GradCheckConfig,
) -> Result<GradCheckReport> {
    grad_check_with_fault(net, input, target, config, None)
}

/// Like [`grad_check`], but the analytic gradients come from a backward pass
/// corrupted by `fault`.
pub fn grad_check_with_fault<T: Scalar>(
    net: &Network<T>,
    input: &Tensor4<T>,
    target: &Tensor4<T>,
    config: &GradCheckConfig,
    fault: Option<GradFault>,
) -> Result<GradCheckReport> {
    if !(config.epsilon > 0.0 && config.floor > 0.0) {
        return Err(Error::InvalidParameter(
            "epsilon and floor must be positive".into(),
        ));
    }
    let net = net.cast::<f64>();
    let x = input.cast::<f64>();
    let target = target.cast::<f64>();
    let trace = net.forward_trace(&x)?;
    let (_, grad_out) = mse_loss(trace.output(), &target)?;
    let grads = net.backward_with_fault(&trace, &grad_out, true, fault)?;
    let pre = net
        .stages()
        .iter()
        .enumerate()
        .map(|(i, s)| match s {
            Stage::Conv(c) => c.preactivation(&trace.inputs[i]).map(Some),
            _ => Ok(None),
        })
        .collect::<Result<Vec<_>>>()?;
    let ctx = Ctx {
        net: &net,
        trace: &trace,
        pre: &pre,
        target: &target,
        eps: config.epsilon,
    };

    let mut tensors = Vec::new();
    let pick = |len: usize, which: u64| -> Vec<usize> {
        match config.selection {
            EntrySelection::All => (0..len).collect(),
            EntrySelection::Sample { per_tensor, seed } => {
                let mut rng = rng_from_seed(derive_seed(seed, 0x6763, which));
                let mut idx = sample(&mut rng, len, per_tensor.min(len)).into_vec();
                idx.sort_unstable();
                idx
            }
        }
    };

    let input_grad = grads.input.as_ref().expect("input gradient requested");
    let entries = pick(x.len(), 0);
    tensors.push(ctx.check_tensor(
        "input".into(),
        x.len(),
        &entries,
        input_grad.data(),
        config.floor,
        |j| ctx.input_plane(j),
        0,
    )?);

    let mut conv_index = 0;
    for (stage, s) in net.stages().iter().enumerate() {
        let Stage::Conv(layer) = s else { continue };
        let (gw, gb) = &grads.layers[conv_index];
        conv_index += 1;
        let w_entries = pick(gw.len(), 2 * conv_index as u64 - 1);
        tensors.push(ctx.check_tensor(
            format!("conv{conv_index}.weights"),
            gw.len(),
            &w_entries,
            gw,
            config.floor,
            |j| ctx.weight_plane(stage, layer.in_channels(), Some(j)),
            stage + 1,
        )?);
        let b_entries = pick(gb.len(), 2 * conv_index as u64);
        tensors.push(ctx.check_tensor(
            format!("conv{conv_index}.bias"),
            gb.len(),
            &b_entries,
            gb,
            config.floor,
            |_| ctx.weight_plane(stage, layer.in_channels(), None),
            stage + 1,
        )?);
    }

    let max_rel_error = tensors.iter().map(|t| t.max_rel_error).fold(0.0, f64::max);
    let checked = tensors.iter().map(|t| t.checked).sum();
    let kinks = tensors.iter().map(|t| t.kinks).sum();
    Ok(GradCheckReport {
        tensors,
        max_rel_error,
        checked,
        kinks,
    })
}

/// A replacement for channel `channel` of some stage output, for every
/// sample of the batch (planes concatenated sample by sample).
struct Plane {
    channel: usize,
    data: Vec<f64>,
    crossed: bool,
}

/// Builds the plane for entry `j` perturbed by the given step.
type PlaneFn<'a> = Box<dyn Fn(usize, f64) -> Plane + Sync + 'a>;

struct Ctx<'a> {
    net: &'a Network<f64>,
    trace: &'a Trace<f64>,
    pre: &'a [Option<Tensor4<f64>>],
    target: &'a Tensor4<f64>,
    eps: f64,
}

fn plane_of(t: &Tensor4<f64>, channel: usize) -> Vec<f64> {
    let [n, c, h, w] = t.dims();
    let hw = h * w;
    let mut out = Vec::with_capacity(n * hw);
    for s in 0..n {
        let off = (s * c + channel) * hw;
        out.extend_from_slice(&t.data()[off..off + hw]);
    }
    out
}

fn relu_flipped(act: Activation, before: &[f64], after: &[f64]) -> bool {
    act == Activation::Relu
        && before
            .iter()
            .zip(after)
            .any(|(&a, &b)| (a > 0.0) != (b > 0.0))
}

impl<'a> Ctx<'a> {
    fn input_plane(&self, j: usize) -> Result<PlaneFn<'a>> {
        let x = &self.trace.inputs[0];
        let [_, c, h, w] = x.dims();
        let hw = h * w;
        let (s, ch, p) = (j / (c * hw), (j / hw) % c, j % hw);
        let base = plane_of(x, ch);
        Ok(Box::new(move |_, delta| {
            let mut data = base.clone();
            data[s * hw + p] += delta;
            Plane {
                channel: ch,
                data,
                crossed: false,
            }
        }))
    }

    /// Perturbation of weight `weight` (flat index) or, when `None`, of the
    /// bias whose index the returned closure receives.
    fn weight_plane(
        &self,
        stage: usize,
        in_channels: usize,
        weight: Option<usize>,
    ) -> Result<PlaneFn<'a>> {
        let Stage::Conv(layer) = &self.net.stages()[stage] else {
            return Err(Error::Architecture(format!(
                "stage {stage} is not a convolution"
            )));
        };
        let act = layer.activation();
        let pre = self.pre[stage]
            .as_ref()
            .expect("conv stage has pre-activation");
        let x = &self.trace.inputs[stage];
        let [n, _, h, w] = x.dims();
        let hw = h * w;
        let finish = move |channel: usize, base: &[f64], mut data: Vec<f64>| {
            let crossed = relu_flipped(act, base, &data);
            data.iter_mut().for_each(|v| *v = act.apply(*v));
            Plane {
                channel,
                data,
                crossed,
            }
        };
        match weight {
            Some(j) => {
                let (o, i, tap) = (j / (in_channels * 9), (j / 9) % in_channels, j % 9);
                let (ky, kx) = (tap / 3, tap % 3);
                let base = plane_of(pre, o);
                let src = plane_of(x, i);
                Ok(Box::new(move |_, delta| {
                    let mut data = base.clone();
                    for s in 0..n {
                        for y in 0..h {
                            let yy = y as isize + ky as isize - 1;
                            if yy < 0 || yy >= h as isize {
                                continue;
                            }
                            for xx in 0..w {
                                let sx = xx as isize + kx as isize - 1;
                                if sx < 0 || sx >= w as isize {
                                    continue;
                                }
                                data[s * hw + y * w + xx] +=
                                    delta * src[s * hw + yy as usize * w + sx as usize];
                            }
                        }
                    }
                    finish(o, &base, data)
                }))
            }
            None => Ok(Box::new(move |o, delta| {
                let base = plane_of(pre, o);
                let data = base.iter().map(|v| v + delta).collect();
                finish(o, &base, data)
            })),
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn check_tensor<F>(
        &self,
        name: String,
        total: usize,
        entries: &[usize],
        analytic: &[f64],
        floor: f64,
        make: F,
        level: usize,
    ) -> Result<TensorCheck>
    where
        F: Fn(usize) -> Result<PlaneFn<'a>> + Sync,
    {
        let per_sample = self
            .trace
            .inputs
            .iter()
            .map(|t| t.len() / t.batch().max(1))
            .max()
            .unwrap_or(1);
        let batch = self.trace.inputs[0].batch();
        let chunk = ((1usize << 22) / (per_sample * batch * 2).max(1)).max(1);
        let numeric: Vec<Option<f64>> = entries
            .par_chunks(chunk)
            .map(|part| -> Result<Vec<Option<f64>>> {
                let mut planes = Vec::with_capacity(part.len() * 2);
                for &j in part {
                    let f = make(j)?;
                    planes.push(f(j, self.eps));
                    planes.push(f(j, -self.eps));
                }
                let losses = self.evaluate(level, planes)?;
                Ok(losses
                    .chunks_exact(2)
                    .map(|pm| {
                        let ((up, c1), (down, c2)) = (pm[0], pm[1]);
                        (!c1 && !c2).then(|| (up - down) / (2.0 * self.eps))
                    })
                    .collect())
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .flatten()
            .collect();

        let mut check = TensorCheck {
            name,
            total,
            checked: 0,
            kinks: 0,
            max_rel_error: 0.0,
            worst_index: 0,
            analytic: 0.0,
            numeric: 0.0,
        };
        for (&j, num) in entries.iter().zip(&numeric) {
            let Some(num) = *num else {
                check.kinks += 1;
                continue;
            };
            check.checked += 1;
            let a = analytic[j];
            let rel = (a - num).abs() / a.abs().max(num.abs()).max(floor);
            let rel = if rel.is_nan() { f64::INFINITY } else { rel };
            if rel > check.max_rel_error {
                check.max_rel_error = rel;
                check.worst_index = j;
                check.analytic = a;
                check.numeric = num;
            }
        }
        Ok(check)
    }

    /// Loss for each plane, where a plane replaces one channel of
    /// `trace.inputs[level]`, together with whether a kink was crossed.
    fn evaluate(&self, level: usize, mut planes: Vec<Plane>) -> Result<Vec<(f64, bool)>> {
        let stages = self.net.stages();
        let mut st = level;
        let [n, _, mut h, mut w] = self.trace.inputs[level].dims();
        // pooling and upsampling act channel by channel
        while st < stages.len() {
            match &stages[st] {
                Stage::MaxPool => {
                    let cached = self.trace.argmax[st].as_deref().expect("pool argmax");
                    let channels = self.trace.inputs[st].channels();
                    for p in &mut planes {
                        let (data, args) = pool_plane(&p.data, n, h, w);
                        p.data = data;
                        p.crossed |= args.iter().enumerate().any(|(k, &a)| {
                            let (s, r) = (k / (h * w / 4), k % (h * w / 4));
                            let c = cached[(s * channels + p.channel) * (h * w / 4) + r] as usize;
                            c - (s * channels + p.channel) * h * w != a - s * h * w
                        });
                    }
                    h /= 2;
                    w /= 2;
                }
                Stage::Upsample => {
                    for p in &mut planes {
                        p.data = upsample_plane(&p.data, n, h, w);
                    }
                    h *= 2;
                    w *= 2;
                }
                Stage::Conv(_) => break,
            }
            st += 1;
        }

        let e = planes.len();
        let mut crossed: Vec<bool> = planes.iter().map(|p| p.crossed).collect();
        let outputs = if st == stages.len() {
            let cached = self.trace.output();
            let mut batch = Vec::with_capacity(e * cached.len());
            for p in &planes {
                let mut t = cached.clone();
                replace_channel(&mut t, p);
                batch.extend_from_slice(t.data());
            }
            let [_, c, oh, ow] = cached.dims();
            Tensor4::new([e * n, c, oh, ow], batch)?
        } else {
            let Stage::Conv(layer) = &stages[st] else {
                unreachable!()
            };
            let cached_in = &self.trace.inputs[st];
            let pre = self.pre[st]
                .as_ref()
                .expect("conv stage has pre-activation");
            let mut batch = Vec::with_capacity(e * pre.len());
            for (k, p) in planes.iter().enumerate() {
                let old = plane_of(cached_in, p.channel);
                let delta: Vec<f64> = p.data.iter().zip(&old).map(|(a, b)| a - b).collect();
                let mut t = pre.clone();
                add_channel_conv(
                    &mut t,
                    layer.weights(),
                    layer.in_channels(),
                    p.channel,
                    &delta,
                );
                crossed[k] |= relu_flipped(layer.activation(), pre.data(), t.data());
                layer.activation().forward(t.data_mut());
                batch.extend_from_slice(t.data());
            }
            let [_, c, ph, pw] = pre.dims();
            let dense = Tensor4::new([e * n, c, ph, pw], batch)?;
            self.forward_tracking(st + 1, dense, &mut crossed)?
        };

        let per_eval = outputs.len() / e;
        let dims = self.target.dims();
        outputs
            .data()
            .chunks_exact(per_eval)
            .zip(crossed)
            .map(|(chunk, c)| {
                let pred = Tensor4::new(dims, chunk.to_vec())?;
                Ok((mse_loss(&pred, self.target)?.0, c))
            })
            .collect()
    }

    /// Runs stages `start..` on a batch of evaluations (each `n` samples
    /// long), flagging evaluations whose ReLU signs or pool winners differ
    /// from the unperturbed pass.
    fn forward_tracking(
        &self,
        start: usize,
        mut cur: Tensor4<f64>,
        crossed: &mut [bool],
    ) -> Result<Tensor4<f64>> {
        let e = crossed.len();
        for (i, stage) in self.net.stages().iter().enumerate().skip(start) {
            cur = match stage {
                Stage::Conv(layer) => {
                    let mut pre = layer.preactivation(&cur)?;
                    if layer.activation() == Activation::Relu {
                        let cached = self.pre[i]
                            .as_ref()
                            .expect("conv stage has pre-activation")
                            .data();
                        for (k, chunk) in pre.data().chunks_exact(cached.len()).enumerate() {
                            crossed[k] |= relu_flipped(Activation::Relu, cached, chunk);
                        }
                    }
                    layer.activation().forward(pre.data_mut());
                    pre
                }
                Stage::MaxPool => {
                    let (y, args) = maxpool2x2_forward(&cur)?;
                    let cached = self.trace.argmax[i].as_deref().expect("pool argmax");
                    let span = cur.len() / e;
                    for (k, chunk) in args.chunks_exact(cached.len()).enumerate() {
                        let offset = (k * span) as u32;
                        crossed[k] |= chunk.iter().zip(cached).any(|(&a, &c)| a - offset != c);
                    }
                    y
                }
                Stage::Upsample => upsample2x2_forward(&cur),
            };
        }
        Ok(cur)
    }
}

fn replace_channel(t: &mut Tensor4<f64>, p: &Plane) {
    let [n, c, h, w] = t.dims();
    let hw = h * w;
    for s in 0..n {
        let off = (s * c + p.channel) * hw;
        t.data_mut()[off..off + hw].copy_from_slice(&p.data[s * hw..(s + 1) * hw]);
    }
}

/// Adds the contribution of a change `delta` in input channel `ci` to the
/// pre-activation `pre` of a 3×3 convolution.
fn add_channel_conv(
    pre: &mut Tensor4<f64>,
    weights: &[f64],
    in_channels: usize,
    ci: usize,
    delta: &[f64],
) {
    let [n, out, h, w] = pre.dims();
    let hw = h * w;
    for s in 0..n {
        let d = &delta[s * hw..(s + 1) * hw];
        for o in 0..out {
            let dst = &mut pre.sample_mut(s)[o * hw..(o + 1) * hw];
            let base = (o * in_channels + ci) * 9;
            for_taps(h, w, |tap, y, yy, xs, xd, len| {
                let wv = weights[base + tap];
                let src = &d[yy * w + xs..yy * w + xs + len];
                let row = &mut dst[y * w + xd..y * w + xd + len];
                row.iter_mut().zip(src).for_each(|(a, &b)| *a += wv * b);
            });
        }
    }
}

/// Pools `n` stacked planes; winners are indices relative to the stack.
fn pool_plane(data: &[f64], n: usize, h: usize, w: usize) -> (Vec<f64>, Vec<usize>) {
    let t = Tensor4::new([n, 1, h, w], data.to_vec()).expect("plane shape");
    let (y, args) = maxpool2x2_forward(&t).expect("even plane");
    (
        y.into_data(),
        args.into_iter().map(|a| a as usize).collect(),
    )
}

fn upsample_plane(data: &[f64], n: usize, h: usize, w: usize) -> Vec<f64> {
    let t = Tensor4::new([n, 1, h, w], data.to_vec()).expect("plane shape");
    upsample2x2_forward(&t).into_data()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{ConvLayer, FaultTarget};
    use crate::seed::rng_from_seed;
    use rand::Rng;

    fn random_tensor(dims: [usize; 4], seed: u64) -> Tensor4<f64> {
        let mut rng = rng_from_seed(seed);
        let n = dims.iter().product();
        Tensor4::new(dims, (0..n).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap()
    }

    fn small_net(seed: u64) -> Network<f64> {
        let mut rng = rng_from_seed(seed);
        let mut conv = |i, o, a| {
            let mut l = ConvLayer::<f64>::glorot(i, o, a, &mut rng);
            for b in l.bias_mut() {
                *b = 0.05;
            }
            Stage::Conv(l)
        };
        Network::new(vec![
            conv(1, 4, Activation::Relu),
            Stage::MaxPool,
            conv(4, 6, Activation::Relu),
            Stage::Upsample,
            conv(6, 1, Activation::Sigmoid),
        ])
        .unwrap()
    }

    #[test]
    fn linear_model_is_exact() {
        let mut rng = rng_from_seed(41);
        let w = (0..18).map(|_| rng.random_range(-1.0..1.0)).collect();
        let layer = ConvLayer::new(1, 2, w, vec![0.1, -0.2], Activation::None).unwrap();
        let net = Network::new(vec![Stage::Conv(layer)]).unwrap();
        let x = random_tensor([1, 1, 6, 6], 42);
        let t = random_tensor([1, 2, 6, 6], 43);
        let r = grad_check(&net, &x, &t, &GradCheckConfig::default()).unwrap();
        assert_eq!(r.checked, 36 + 18 + 2);
        assert!(r.max_rel_error < 1e-6, "{r:?}");
    }

    #[test]
    fn small_network_passes_and_mutations_fail() {
        let net = small_net(44);
        let x = random_tensor([2, 1, 8, 8], 45);
        let t = random_tensor([2, 1, 8, 8], 46);
        let cfg = GradCheckConfig::default();
        let r = grad_check(&net, &x, &t, &cfg).unwrap();
        assert!(r.max_rel_error < 1e-3, "{r:?}");
        assert_eq!(r.checked, x.len() + net.param_count());
        for stage in 0..net.stages().len() {
            let target = match net.stages()[stage] {
                Stage::Conv(_) => FaultTarget::Bias,
                _ => FaultTarget::Input,
            };
            let fault = GradFault {
                stage,
                target,
                factor: 2.0,
            };
            let r = grad_check_with_fault(&net, &x, &t, &cfg, Some(fault)).unwrap();
            assert!(
                r.max_rel_error > 0.1,
                "stage {stage} fault undetected: {r:?}"
            );
        }
    }

    #[test]
    fn incremental_evaluation_agrees_with_full_forward() {
        let net = small_net(47);
        let x = random_tensor([1, 1, 8, 8], 48);
        let t = random_tensor([1, 1, 8, 8], 49);
        let r = grad_check(
            &net,
            &x,
            &t,
            &GradCheckConfig {
                epsilon: 1e-4,
                ..Default::default()
            },
        )
        .unwrap();
        // brute-force differences for a few weights of the middle layer
        let Stage::Conv(mid) = &net.stages()[2] else {
            panic!()
        };
        let trace = net.forward_trace(&x).unwrap();
        let (_, g) = mse_loss(trace.output(), &t).unwrap();
        let grads = net.backward(&trace, &g, false).unwrap();
        let eps = 1e-4;
        for j in [0, 17, 100, mid.weights().len() - 1] {
            let mut p = net.clone();
            p.conv_layers_mut().nth(1).unwrap().weights_mut()[j] += eps;
            let up = mse_loss(&p.forward(&x).unwrap(), &t).unwrap().0;
            p.conv_layers_mut().nth(1).unwrap().weights_mut()[j] -= 2.0 * eps;
            let down = mse_loss(&p.forward(&x).unwrap(), &t).unwrap().0;
            let fd = (up - down) / (2.0 * eps);
            let a = grads.layers[1].0[j];
            assert!(
                (fd - a).abs() <= 1e-4 * a.abs().max(1e-8),
                "{j}: {a} vs {fd}"
            );
        }
        assert!(r.max_rel_error < 1e-3);
    }

    #[test]
    fn sampling_limits_entries() {
        let net = small_net(50);
        let x = random_tensor([1, 1, 8, 8], 51);
        let cfg = GradCheckConfig {
            selection: EntrySelection::Sample {
                per_tensor: 3,
                seed: 1,
            },
            ..Default::default()
        };
        let r = grad_check(&net, &x, &x, &cfg).unwrap();
        assert_eq!(r.tensors.len(), 7);
        assert!(r.tensors.iter().all(|t| t.checked == t.total.min(3)));
        assert_eq!(r.checked, 3 * 6 + 1);
    }
}
