//! Floating-point element type and strided matrix products.

use std::fmt::Debug;
use std::ops::{AddAssign, MulAssign};

use num_traits::Float;

pub trait Elem: Float + AddAssign + MulAssign + Default + Debug + Send + Sync + 'static {
    /// Byte width, also used as the checkpoint dtype tag.
    const BYTES: u8;

    fn lit(v: f64) -> Self;
    fn as_f64(self) -> f64;
    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;

    /// # Safety
    /// Every index reachable through the given shapes and strides must lie
    /// inside the allocations behind `a`, `b` and `c`, and `c` must not
    /// overlap `a` or `b`.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
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
}

impl Elem for f32 {
    const BYTES: u8 = 4;
    fn lit(v: f64) -> Self {
        v as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes.try_into().expect("4 bytes"))
    }
    unsafe fn gemm_raw(
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
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

impl Elem for f64 {
    const BYTES: u8 = 8;
    fn lit(v: f64) -> Self {
        v
    }
    fn as_f64(self) -> f64 {
        self
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes.try_into().expect("8 bytes"))
    }
    unsafe fn gemm_raw(
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
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

/// Strided matrix view into a flat buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct View {
    pub off: usize,
    pub rows: usize,
    pub cols: usize,
    pub rs: usize,
    pub cs: usize,
}

impl View {
    /// Row-major block starting at `off` with leading dimension `ld`.
    pub fn rm(off: usize, rows: usize, cols: usize, ld: usize) -> Self {
        View { off, rows, cols, rs: ld, cs: 1 }
    }

    /// Dense row-major matrix.
    pub fn dense(rows: usize, cols: usize) -> Self {
        View::rm(0, rows, cols, cols)
    }

    pub fn t(self) -> Self {
        View { off: self.off, rows: self.cols, cols: self.rows, rs: self.cs, cs: self.rs }
    }

    fn end(&self) -> usize {
        if self.rows == 0 || self.cols == 0 {
            self.off
        } else {
            self.off + (self.rows - 1) * self.rs + (self.cols - 1) * self.cs + 1
        }
    }
}

/// `c = alpha · a · b + beta · c` over strided views.
pub fn gemm<E: Elem>(alpha: E, a: &[E], av: View, b: &[E], bv: View, beta: E, c: &mut [E], cv: View) {
    assert_eq!(av.cols, bv.rows, "inner dimensions");
    assert_eq!((cv.rows, cv.cols), (av.rows, bv.cols), "output shape");
    assert!(av.end() <= a.len() && bv.end() <= b.len() && cv.end() <= c.len(), "view out of bounds");
    if cv.rows == 0 || cv.cols == 0 {
        return;
    }
    // SAFETY: bounds checked above; `c` is a unique borrow so it cannot alias `a` or `b`.
    unsafe {
        E::gemm_raw(
            av.rows,
            av.cols,
            bv.cols,
            alpha,
            a.as_ptr().add(av.off),
            av.rs as isize,
            av.cs as isize,
            b.as_ptr().add(bv.off),
            bv.rs as isize,
            bv.cs as isize,
            beta,
            c.as_mut_ptr().add(cv.off),
            cv.rs as isize,
            cv.cs as isize,
        )
    }
}
