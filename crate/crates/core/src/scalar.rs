use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating point scalar the metric and correlation code is generic over.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Serialize + DeserializeOwned + Send + Sync + 'static
{
    fn from_usize_exact(n: usize) -> Self {
        Self::from_usize(n).expect("usize is representable as a float")
    }

    /// `num / den` for counts, the only division nugget metrics need.
    fn ratio(num: usize, den: usize) -> Self {
        Self::from_usize_exact(num) / Self::from_usize_exact(den)
    }

    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal fits the scalar type")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Arithmetic mean, `None` on an empty input.
pub(crate) fn mean<F: Scalar>(values: impl IntoIterator<Item = F>) -> Option<F> {
    let mut n = 0usize;
    let mut sum = F::zero();
    for v in values {
        sum = sum + v;
        n += 1;
    }
    (n > 0).then(|| sum / F::from_usize_exact(n))
}
