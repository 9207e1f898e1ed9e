use std::path::Path;

use crate::error::{Error, Result};
use crate::filters::reflect;
use crate::image::Image;
use crate::nn::{self, Activation, ConvLayer, Network, Stage, Tensor4};
use crate::seed::{derive_seed, rng_from_seed, stream};

/// Channel counts along the convolution chain.
pub const CHANNELS: [usize; 7] = [1, 32, 64, 128, 128, 64, 1];

/// Trainable parameters: `Σ 9·in·out + out` over the six convolutions.
pub const PARAM_COUNT: usize = 314_625;

/// Conv → pool → conv → pool → conv → conv → up → conv → up → conv.
#[derive(Debug, Clone, PartialEq)]
pub struct DdaeModel {
    net: Network<f32>,
}

fn activation_for(layer: usize) -> Activation {
    if layer == CHANNELS.len() - 2 {
        Activation::Sigmoid
    } else {
        Activation::Relu
    }
}

fn assemble(mut convs: Vec<ConvLayer<f32>>) -> Result<Network<f32>> {
    if convs.len() != CHANNELS.len() - 1 {
        return Err(Error::Architecture(format!(
            "expected {} convolutions, found {}",
            CHANNELS.len() - 1,
            convs.len()
        )));
    }
    for (k, c) in convs.iter().enumerate() {
        if c.in_channels() != CHANNELS[k]
            || c.out_channels() != CHANNELS[k + 1]
            || c.activation() != activation_for(k)
        {
            return Err(Error::Architecture(format!(
                "layer {} is {}->{} {:?}, expected {}->{} {:?}",
                k + 1,
                c.in_channels(),
                c.out_channels(),
                c.activation(),
                CHANNELS[k],
                CHANNELS[k + 1],
                activation_for(k)
            )));
        }
    }
    let mut it = convs.drain(..).map(Stage::Conv);
    let mut next = || it.next().expect("six layers");
    let stages = vec![
        next(),
        Stage::MaxPool,
        next(),
        Stage::MaxPool,
        next(),
        next(),
        Stage::Upsample,
        next(),
        Stage::Upsample,
        next(),
    ];
    Network::new(stages)
}

impl DdaeModel {
    /// Glorot-initialised model; the same seed always gives the same weights.
    pub fn build(seed: u64) -> Self {
        let mut rng = rng_from_seed(derive_seed(seed, stream::INIT, 0));
        let convs = (0..CHANNELS.len() - 1)
            .map(|k| ConvLayer::glorot(CHANNELS[k], CHANNELS[k + 1], activation_for(k), &mut rng))
            .collect();
        Self {
            net: assemble(convs).expect("canonical architecture"),
        }
    }

    pub fn from_layers(layers: Vec<ConvLayer<f32>>) -> Result<Self> {
        Ok(Self {
            net: assemble(layers)?,
        })
    }

    pub fn network(&self) -> &Network<f32> {
        &self.net
    }

    pub fn layers(&self) -> Vec<ConvLayer<f32>> {
        self.net.conv_layers().cloned().collect()
    }

    /// Input channels of the first layer followed by every layer's output
    /// channels.
    pub fn channel_chain(&self) -> Vec<usize> {
        let mut chain = vec![self
            .net
            .conv_layers()
            .next()
            .map_or(0, ConvLayer::in_channels)];
        chain.extend(self.net.conv_layers().map(ConvLayer::out_channels));
        chain
    }

    pub fn param_count(&self) -> usize {
        self.net.param_count()
    }

    pub fn params(&self) -> Vec<f32> {
        self.net.params_flat()
    }

    pub fn set_params(&mut self, params: &[f32]) -> Result<()> {
        self.net.set_params_flat(params)
    }

    /// Sets the output layer's bias so that a zero pre-activation maps to
    /// `mean` through the sigmoid.
    pub fn set_output_mean(&mut self, mean: f64) {
        let m = mean.clamp(1e-4, 1.0 - 1e-4);
        let logit = (m / (1.0 - m)).ln() as f32;
        if let Some(last) = self.net.conv_layers_mut().last() {
            last.bias_mut().fill(logit);
        }
    }

    /// Runs the network on an image whose sides are multiples of 4.
    pub fn forward(&self, img: &Image) -> Result<Image> {
        let (w, h) = img.dims();
        if w % 4 != 0 || h % 4 != 0 || w == 0 || h == 0 {
            return Err(Error::ShapeMismatch(format!(
                "{w}x{h} is not a multiple of 4; pad by {}x{} or use denoise",
                (4 - w % 4) % 4,
                (4 - h % 4) % 4
            )));
        }
        self.net.forward(&Tensor4::from_image(img))?.to_image(0)
    }

    /// Forward pass on a batch tensor `(n, 1, h, w)`.
    pub fn forward_batch(&self, x: &Tensor4<f32>) -> Result<Tensor4<f32>> {
        self.net.forward(x)
    }

    /// Reflect-pads to the next multiple of 4, runs the network and crops
    /// back to the original size.
    pub fn denoise(&self, img: &Image) -> Result<Image> {
        let (w, h) = img.dims();
        let (pw, ph) = (w.div_ceil(4) * 4, h.div_ceil(4) * 4);
        if (pw, ph) == (w, h) {
            return self.forward(img);
        }
        let padded = Image::from_fn(pw, ph, |x, y| {
            img.get(reflect(x as isize, w), reflect(y as isize, h))
        })?;
        self.forward(&padded)?.crop(0, 0, w, h)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        nn::encode_layers(&self.layers())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Self::from_layers(nn::decode_layers(bytes)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        nn::save_layers(&self.layers(), path.as_ref())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_layers(nn::load_layers(path.as_ref())?)
    }
}
