//! Scalar abstraction: the numeric kernel is generic over the float width.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssignOps};
use rand::Rng;
use rand_distr::StandardNormal;

/// Floating-point scalar the toolkit is generic over.
///
/// `f64` is the working type for all quantitative claims (the crate root
/// re-exports `*64` aliases); `f32` is available for bulk storage where
/// tolerances permit.
pub trait Real:
    Float + FromPrimitive + NumAssignOps + Sum + Debug + Display + Send + Sync + 'static
{
    /// Draw a standard-normal sample.
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Draw uniformly from `[0, 1)`.
    fn unit_uniform<R: Rng + ?Sized>(rng: &mut R) -> Self;

    fn two() -> Self {
        Self::one() + Self::one()
    }

    fn half() -> Self {
        Self::one() / Self::two()
    }
}

impl Real for f32 {
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.sample(StandardNormal)
    }

    fn unit_uniform<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.gen()
    }
}

impl Real for f64 {
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.sample(StandardNormal)
    }

    fn unit_uniform<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.gen()
    }
}

/// Convert an `f64` constant into the working scalar type.
#[inline]
pub fn real<F: Real>(v: f64) -> F {
    F::from_f64(v).expect("constant representable in scalar type")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn conversion_round_trips_for_both_widths() {
        assert_eq!(real::<f64>(0.49), 0.49);
        assert_eq!(real::<f32>(1.5), 1.5f32);
        assert!(real::<f64>(f64::INFINITY).is_infinite());
    }

    #[test]
    fn normal_draws_are_deterministic_per_seed() {
        let mut a = ChaCha8Rng::seed_from_u64(7);
        let mut b = ChaCha8Rng::seed_from_u64(7);
        let xs: Vec<f64> = (0..4).map(|_| f64::standard_normal(&mut a)).collect();
        let ys: Vec<f64> = (0..4).map(|_| f64::standard_normal(&mut b)).collect();
        assert_eq!(xs, ys);
    }
}
