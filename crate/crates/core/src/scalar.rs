//! The scalar abstraction the whole crate is generic over.

use num_traits::{Float, FromPrimitive, NumAssignOps};

/// Floating-point scalar for every numeric routine in this crate: `f32` for
/// training, `f64` for gradient checks and oracles.
pub trait Scalar:
    Float + FromPrimitive + NumAssignOps + std::fmt::Debug + std::fmt::Display + Default + Send + Sync + 'static
{
    /// `C := alpha * A(m x k) * B(k x n) + beta * C`, with arbitrary strides.
    ///
    /// # Safety
    /// Pointers must reference allocations valid for the given dimensions and
    /// strides, with `c` disjoint from `a` and `b`.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );

    /// Shorthand for `Self::from(v).unwrap()` on an `f64` literal.
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable in scalar type")
    }

    /// Narrowing view for 32-bit serialization.
    fn as_f32(self) -> f32 {
        self.to_f32().expect("scalar convertible to f32")
    }
}

impl Scalar for f32 {
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }
}

impl Scalar for f64 {
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }
}
