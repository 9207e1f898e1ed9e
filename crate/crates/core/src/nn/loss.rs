use super::{Scalar, Tensor4};
use crate::error::{Error, Result};

/// Mean squared error and its gradient `2(pred − target)/count`.
pub fn mse_loss<T: Scalar>(pred: &Tensor4<T>, target: &Tensor4<T>) -> Result<(f64, Tensor4<T>)> {
    if pred.dims() != target.dims() {
        return Err(Error::ShapeMismatch(format!(
            "loss shapes differ: {:?} vs {:?}",
            pred.dims(),
            target.dims()
        )));
    }
    if pred.is_empty() {
        return Err(Error::Empty("empty tensors in loss".into()));
    }
    let count = pred.len() as f64;
    let scale = T::of_f64(2.0 / count);
    let mut sum = 0.0f64;
    let mut grad = Vec::with_capacity(pred.len());
    for (&p, &t) in pred.data().iter().zip(target.data()) {
        let d = p - t;
        sum += d.as_f64() * d.as_f64();
        grad.push(d * scale);
    }
    Ok((sum / count, Tensor4::new(pred.dims(), grad)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from_seed;
    use rand::Rng;

    #[test]
    fn examples() {
        let t = Tensor4::new([1, 1, 2, 2], vec![0.1f32, 0.2, 0.3, 0.4]).unwrap();
        let (l, g) = mse_loss(&t, &t).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.data().iter().all(|&v| v == 0.0));

        let one = Tensor4::new([1, 1, 1, 1], vec![1.0f64]).unwrap();
        let zero = Tensor4::new([1, 1, 1, 1], vec![0.0f64]).unwrap();
        let (l, g) = mse_loss(&one, &zero).unwrap();
        assert_eq!((l, g.data()[0]), (1.0, 2.0));
        assert!(mse_loss(&one, &Tensor4::zeros([1, 1, 1, 2])).is_err());
    }

    #[test]
    fn gradient_matches_differences() {
        let mut rng = rng_from_seed(31);
        let p = Tensor4::new([1, 2, 3, 3], (0..18).map(|_| rng.random::<f64>()).collect()).unwrap();
        let t = Tensor4::new([1, 2, 3, 3], (0..18).map(|_| rng.random::<f64>()).collect()).unwrap();
        let (_, g) = mse_loss(&p, &t).unwrap();
        let eps = 1e-5;
        for j in 0..p.len() {
            let mut q = p.clone();
            q.data_mut()[j] += eps;
            let up = mse_loss(&q, &t).unwrap().0;
            q.data_mut()[j] -= 2.0 * eps;
            let down = mse_loss(&q, &t).unwrap().0;
            let fd = (up - down) / (2.0 * eps);
            assert!((fd - g.data()[j]).abs() <= 1e-4 * fd.abs().max(1e-8));
        }
    }
}
