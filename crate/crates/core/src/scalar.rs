// SPDX-License-Identifier: Apache-2.0

use std::fmt::Debug;

use num_traits::{FromPrimitive, Num, ToPrimitive};

/// Scalar type able to hold a probability.
///
/// Implemented for `f32`, `f64` and the `num-rational` ratio types. Counts
/// enter through [`Probability::from_count`] so exact types never see a
/// rounded float.
pub trait Probability: Num + Clone + PartialOrd + Debug + Send + Sync {
    fn from_count(n: u64) -> Self;

    /// Lossy conversion for reporting.
    fn to_f64_lossy(&self) -> f64;

    fn ratio(num: u64, den: u64) -> Self {
        Self::from_count(num) / Self::from_count(den)
    }
}

impl<T> Probability for T
where
    T: Num + Clone + PartialOrd + Debug + Send + Sync + FromPrimitive + ToPrimitive,
{
    fn from_count(n: u64) -> Self {
        T::from_u64(n).expect("count representable in scalar type")
    }

    fn to_f64_lossy(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}
