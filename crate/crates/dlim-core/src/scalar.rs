//! Scalar abstraction: every numeric routine in this crate is generic over
//! the floating-point type through [`Real`].

use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive};

/// Floating-point scalar the simulation runs on: `f32` or `f64`.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + std::fmt::Debug
    + std::fmt::Display
    + std::fmt::LowerExp
    + Send
    + Sync
    + 'static
{
    /// Convert an `f64` constant, panicking only on genuinely
    /// unrepresentable values (never the literals used here).
    fn of(value: f64) -> Self {
        Self::from_f64(value).expect("constant representable in scalar type")
    }

    /// Round-trip into `f64` for reporting and file output.
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("scalar convertible to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Complex amplitude over the crate scalar.
pub type C<T> = Complex<T>;

/// Unit complex number `e^{i angle}`.
#[inline]
pub fn cis<T: Real>(angle: T) -> C<T> {
    let (sin, cos) = angle.sin_cos();
    C::new(cos, sin)
}
