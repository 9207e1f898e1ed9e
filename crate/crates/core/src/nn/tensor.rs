use super::Scalar;
use crate::error::{Error, Result};
use crate::image::Image;

/// Dense `(batch, channels, height, width)` tensor, width innermost.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4<T> {
    dims: [usize; 4],
    data: Vec<T>,
}

impl<T: Scalar> Tensor4<T> {
    pub fn new(dims: [usize; 4], data: Vec<T>) -> Result<Self> {
        if data.len() != dims.iter().product::<usize>() {
            return Err(Error::ShapeMismatch(format!(
                "{dims:?} needs {} elements, got {}",
                dims.iter().product::<usize>(),
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: [usize; 4]) -> Self {
        Self {
            dims,
            data: vec![T::zero(); dims.iter().product()],
        }
    }

    /// Batch of single-channel images of equal size.
    pub fn from_images(images: &[&Image]) -> Result<Self> {
        let first = images
            .first()
            .ok_or_else(|| Error::Empty("no images".into()))?;
        let (w, h) = first.dims();
        let mut data = Vec::with_capacity(images.len() * w * h);
        for img in images {
            first.ensure_same_dims(img)?;
            data.extend(img.data().iter().map(|&v| T::of_f64(v as f64)));
        }
        Self::new([images.len(), 1, h, w], data)
    }

    pub fn from_image(img: &Image) -> Self {
        Self::from_images(&[img]).expect("single valid image")
    }

    /// Converts sample `index` of a single-channel tensor back to an image.
    pub fn to_image(&self, index: usize) -> Result<Image> {
        if self.dims[1] != 1 || index >= self.dims[0] {
            return Err(Error::ShapeMismatch(format!(
                "cannot take image {index} from tensor {:?}",
                self.dims
            )));
        }
        let plane = self.dims[2] * self.dims[3];
        let data = self.data[index * plane..(index + 1) * plane]
            .iter()
            .map(|v| v.as_f64() as f32)
            .collect();
        Image::from_clamped(self.dims[3], self.dims[2], data)
    }

    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    pub fn batch(&self) -> usize {
        self.dims[0]
    }

    pub fn channels(&self) -> usize {
        self.dims[1]
    }

    pub fn height(&self) -> usize {
        self.dims[2]
    }

    pub fn width(&self) -> usize {
        self.dims[3]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// Elements of sample `n`.
    pub fn sample(&self, n: usize) -> &[T] {
        let len = self.dims[1] * self.dims[2] * self.dims[3];
        &self.data[n * len..(n + 1) * len]
    }

    pub fn sample_mut(&mut self, n: usize) -> &mut [T] {
        let len = self.dims[1] * self.dims[2] * self.dims[3];
        &mut self.data[n * len..(n + 1) * len]
    }

    pub fn cast<U: Scalar>(&self) -> Tensor4<U> {
        Tensor4 {
            dims: self.dims,
            data: self.data.iter().map(|v| U::of_f64(v.as_f64())).collect(),
        }
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.as_f64() * b.as_f64())
            .sum()
    }

    pub fn ensure_dims(&self, dims: [usize; 4], what: &str) -> Result<()> {
        if self.dims != dims {
            return Err(Error::ShapeMismatch(format!(
                "{what}: expected {dims:?}, got {:?}",
                self.dims
            )));
        }
        Ok(())
    }
}
