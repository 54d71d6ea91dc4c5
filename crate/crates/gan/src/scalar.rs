use ndarray::LinalgScalar;
use rgb2dem_core::Scalar;

/// Scalar bound for network math: core scalar plus ndarray linear algebra.
pub trait NnScalar: Scalar + LinalgScalar {}

impl<T: Scalar + LinalgScalar> NnScalar for T {}
