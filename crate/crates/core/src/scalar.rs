//! Floating-point lane type used by trainable class accumulators.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real scalar backing class-hypervector lanes during training.
///
/// Implemented for `f32` and `f64`. Encoding stays in exact `i64`
/// arithmetic; only the trained prototypes go through this trait.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Default + Debug + Display + Send + Sync + 'static
{
    /// Width of the little-endian encoding in model files.
    const BYTES: u8;

    fn from_lane(v: i64) -> Self;

    fn write_le(self, out: &mut Vec<u8>);

    /// `bytes` must hold exactly `Self::BYTES` bytes.
    fn read_le(bytes: &[u8]) -> Self;
}

impl Scalar for f64 {
    const BYTES: u8 = 8;

    #[inline]
    fn from_lane(v: i64) -> Self {
        v as f64
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        let mut raw = [0u8; 8];
        raw.copy_from_slice(bytes);
        f64::from_le_bytes(raw)
    }
}

impl Scalar for f32 {
    const BYTES: u8 = 4;

    #[inline]
    fn from_lane(v: i64) -> Self {
        v as f32
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        let mut raw = [0u8; 4];
        raw.copy_from_slice(bytes);
        f32::from_le_bytes(raw)
    }
}
