use super::{
    maxpool2x2_backward, maxpool2x2_forward, upsample2x2_backward, upsample2x2_forward, ConvLayer,
    Scalar, Tensor4,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Stage<T> {
    Conv(ConvLayer<T>),
    MaxPool,
    Upsample,
}

/// Which gradient a [`GradFault`] corrupts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaultTarget {
    Weights,
    Bias,
    /// The gradient a stage passes to its input.
    Input,
}

/// Deliberate corruption of one stage's backward pass, used to show that a
/// gradient check catches broken derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradFault {
    pub stage: usize,
    pub target: FaultTarget,
    pub factor: f64,
}

/// Sequential feed-forward network.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    stages: Vec<Stage<T>>,
}

/// Stage inputs recorded during a forward pass; `inputs[i]` feeds stage `i`
/// and the last entry is the network output.
#[derive(Debug, Clone)]
pub struct Trace<T> {
    pub inputs: Vec<Tensor4<T>>,
    pub(crate) argmax: Vec<Option<Vec<u32>>>,
}

impl<T> Trace<T> {
    pub fn output(&self) -> &Tensor4<T> {
        self.inputs.last().expect("trace has an output")
    }
}

/// Per-conv-layer parameter gradients in network order, plus the optional
/// input gradient.
#[derive(Debug, Clone)]
pub struct NetworkGrads<T> {
    pub input: Option<Tensor4<T>>,
    pub layers: Vec<(Vec<T>, Vec<T>)>,
}

impl<T: Scalar> NetworkGrads<T> {
    /// Flat gradient in the same order as [`Network::params_flat`].
    pub fn flatten(&self) -> Vec<T> {
        let mut out = Vec::new();
        for (w, b) in &self.layers {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        out
    }

    /// Elementwise `self += other`; used to reduce sub-batch gradients in a
    /// fixed order.
    pub fn accumulate(&mut self, other: &Self) -> Result<()> {
        if self.layers.len() != other.layers.len() {
            return Err(Error::ShapeMismatch("gradient layer counts differ".into()));
        }
        for ((w, b), (ow, ob)) in self.layers.iter_mut().zip(&other.layers) {
            if w.len() != ow.len() || b.len() != ob.len() {
                return Err(Error::ShapeMismatch("gradient sizes differ".into()));
            }
            w.iter_mut().zip(ow).for_each(|(a, &v)| *a = *a + v);
            b.iter_mut().zip(ob).for_each(|(a, &v)| *a = *a + v);
        }
        Ok(())
    }
}

impl<T: Scalar> Network<T> {
    /// Checks that consecutive convolutions agree on channel counts.
    pub fn new(stages: Vec<Stage<T>>) -> Result<Self> {
        let mut channels: Option<usize> = None;
        for (i, stage) in stages.iter().enumerate() {
            if let Stage::Conv(c) = stage {
                if let Some(ch) = channels {
                    if ch != c.in_channels() {
                        return Err(Error::Architecture(format!(
                            "stage {i} expects {} channels but receives {ch}",
                            c.in_channels()
                        )));
                    }
                }
                channels = Some(c.out_channels());
            }
        }
        Ok(Self { stages })
    }

    pub fn stages(&self) -> &[Stage<T>] {
        &self.stages
    }

    pub fn conv_layers(&self) -> impl Iterator<Item = &ConvLayer<T>> {
        self.stages.iter().filter_map(|s| match s {
            Stage::Conv(c) => Some(c),
            _ => None,
        })
    }

    pub fn conv_layers_mut(&mut self) -> impl Iterator<Item = &mut ConvLayer<T>> {
        self.stages.iter_mut().filter_map(|s| match s {
            Stage::Conv(c) => Some(c),
            _ => None,
        })
    }

    pub fn param_count(&self) -> usize {
        self.conv_layers().map(ConvLayer::param_count).sum()
    }

    /// All parameters, layer by layer, weights before biases.
    pub fn params_flat(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.param_count());
        for c in self.conv_layers() {
            out.extend_from_slice(c.weights());
            out.extend_from_slice(c.bias());
        }
        out
    }

    pub fn set_params_flat(&mut self, params: &[T]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                params.len()
            )));
        }
        if params.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite parameter".into()));
        }
        let mut rest = params;
        for c in self.conv_layers_mut() {
            let (w, tail) = rest.split_at(c.weights().len());
            c.weights_mut().copy_from_slice(w);
            let (b, tail) = tail.split_at(c.bias().len());
            c.bias_mut().copy_from_slice(b);
            rest = tail;
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> Network<U> {
        Network {
            stages: self
                .stages
                .iter()
                .map(|s| match s {
                    Stage::Conv(c) => Stage::Conv(c.cast()),
                    Stage::MaxPool => Stage::MaxPool,
                    Stage::Upsample => Stage::Upsample,
                })
                .collect(),
        }
    }

    pub fn forward(&self, x: &Tensor4<T>) -> Result<Tensor4<T>> {
        self.forward_from(0, x)
    }

    /// Runs stages `start..` on `x`.
    pub fn forward_from(&self, start: usize, x: &Tensor4<T>) -> Result<Tensor4<T>> {
        let mut cur = x.clone();
        for stage in &self.stages[start..] {
            cur = match stage {
                Stage::Conv(c) => c.forward(&cur)?,
                Stage::MaxPool => maxpool2x2_forward(&cur)?.0,
                Stage::Upsample => upsample2x2_forward(&cur),
            };
        }
        Ok(cur)
    }

    pub fn forward_trace(&self, x: &Tensor4<T>) -> Result<Trace<T>> {
        let mut inputs = Vec::with_capacity(self.stages.len() + 1);
        let mut argmax = Vec::with_capacity(self.stages.len());
        inputs.push(x.clone());
        for stage in &self.stages {
            let cur = inputs.last().expect("non-empty");
            let (next, arg) = match stage {
                Stage::Conv(c) => (c.forward(cur)?, None),
                Stage::MaxPool => {
                    let (y, a) = maxpool2x2_forward(cur)?;
                    (y, Some(a))
                }
                Stage::Upsample => (upsample2x2_forward(cur), None),
            };
            inputs.push(next);
            argmax.push(arg);
        }
        Ok(Trace { inputs, argmax })
    }

    pub fn backward(
        &self,
        trace: &Trace<T>,
        grad_out: &Tensor4<T>,
        need_input: bool,
    ) -> Result<NetworkGrads<T>> {
        self.backward_with_fault(trace, grad_out, need_input, None)
    }

    pub fn backward_with_fault(
        &self,
        trace: &Trace<T>,
        grad_out: &Tensor4<T>,
        need_input: bool,
        fault: Option<GradFault>,
    ) -> Result<NetworkGrads<T>> {
        if trace.inputs.len() != self.stages.len() + 1 {
            return Err(Error::ShapeMismatch("trace does not match network".into()));
        }
        grad_out.ensure_dims(trace.output().dims(), "network output gradient")?;
        let scale = |stage: usize, target: FaultTarget, v: &mut [T]| {
            if let Some(f) = fault {
                if f.stage == stage && f.target == target {
                    let k = T::of_f64(f.factor);
                    v.iter_mut().for_each(|x| *x = *x * k);
                }
            }
        };
        let mut layers = Vec::new();
        let mut grad = grad_out.clone();
        for (i, stage) in self.stages.iter().enumerate().rev() {
            let wants_input = need_input || i > 0;
            let mut next = match stage {
                Stage::Conv(c) => {
                    let mut g = c.backward_impl(
                        &trace.inputs[i],
                        &trace.inputs[i + 1],
                        &grad,
                        wants_input,
                    )?;
                    scale(i, FaultTarget::Weights, &mut g.weights);
                    scale(i, FaultTarget::Bias, &mut g.bias);
                    layers.push((g.weights, g.bias));
                    g.input
                }
                Stage::MaxPool => Some(maxpool2x2_backward(
                    trace.argmax[i]
                        .as_deref()
                        .expect("pool stage records argmax"),
                    &grad,
                )?),
                Stage::Upsample => Some(upsample2x2_backward(&grad)?),
            };
            match next.as_mut() {
                Some(g) => scale(i, FaultTarget::Input, g.data_mut()),
                None => break,
            }
            grad = next.expect("checked above");
        }
        layers.reverse();
        Ok(NetworkGrads {
            input: need_input.then_some(grad),
            layers,
        })
    }
}
