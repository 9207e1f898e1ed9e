use serde::{Deserialize, Serialize};

use super::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    None,
    Relu,
    Sigmoid,
}

impl Activation {
    #[inline]
    pub fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::None => x,
            Activation::Relu => x.max(T::zero()),
            Activation::Sigmoid => T::one() / (T::one() + (-x).exp()),
        }
    }

    /// Derivative expressed through the activation's output `y`.
    /// ReLU uses 0 at the kink.
    #[inline]
    pub fn derivative_from_output<T: Scalar>(self, y: T) -> T {
        match self {
            Activation::None => T::one(),
            Activation::Relu => {
                if y > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Sigmoid => y * (T::one() - y),
        }
    }

    pub fn forward<T: Scalar>(self, xs: &mut [T]) {
        if self != Activation::None {
            xs.iter_mut().for_each(|x| *x = self.apply(*x));
        }
    }

    /// Multiplies `grad` in place by the derivative at outputs `ys`.
    pub fn backward<T: Scalar>(self, ys: &[T], grad: &mut [T]) {
        if self != Activation::None {
            for (g, &y) in grad.iter_mut().zip(ys) {
                *g = *g * self.derivative_from_output(y);
            }
        }
    }

    pub fn tag(self) -> u8 {
        match self {
            Activation::None => 0,
            Activation::Relu => 1,
            Activation::Sigmoid => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Activation::None),
            1 => Some(Activation::Relu),
            2 => Some(Activation::Sigmoid),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn examples() {
        assert_eq!(Activation::Relu.apply(-5.0f64), 0.0);
        assert_eq!(Activation::Relu.apply(3.0f64), 3.0);
        assert_eq!(Activation::Relu.derivative_from_output(0.0f64), 0.0);
        assert_eq!(Activation::Sigmoid.apply(0.0f64), 0.5);
        assert_eq!(Activation::Sigmoid.derivative_from_output(0.5f64), 0.25);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let mut rng = crate::seed::rng_from_seed(2);
        let eps = 1e-6;
        for act in [Activation::Relu, Activation::Sigmoid, Activation::None] {
            for _ in 0..200 {
                let x: f64 = rng.random_range(-4.0..4.0);
                if act == Activation::Relu && x.abs() < 1e-3 {
                    continue;
                }
                let fd = (act.apply(x + eps) - act.apply(x - eps)) / (2.0 * eps);
                let an = act.derivative_from_output(act.apply(x));
                let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-12);
                assert!(
                    rel < 1e-4 || (fd - an).abs() < 1e-10,
                    "{act:?} at {x}: {fd} vs {an}"
                );
            }
        }
    }

    #[test]
    fn tags_round_trip() {
        for a in [Activation::None, Activation::Relu, Activation::Sigmoid] {
            assert_eq!(Activation::from_tag(a.tag()), Some(a));
        }
        assert_eq!(Activation::from_tag(9), None);
    }
}
