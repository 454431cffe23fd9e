use std::fmt::Debug;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point element type the network is generic over.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + AddAssign + SubAssign + MulAssign + Default + Debug + Send + Sync + 'static
{
    /// `C = alpha * A * B + beta * C` on strided row/column views.
    ///
    /// # Safety
    /// Every element addressed through the strides must lie inside its buffer,
    /// and `c` must not alias `a` or `b`.
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

    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("finite f64 converts")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("float converts to f64")
    }
}

impl Real for f32 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

impl Real for f64 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

/// Read-only strided matrix view into a flat buffer.
#[derive(Clone, Copy)]
pub(crate) struct View<'a, T> {
    pub data: &'a [T],
    pub off: usize,
    pub rs: usize,
    pub cs: usize,
}

impl<'a, T> View<'a, T> {
    pub fn new(data: &'a [T], off: usize, rs: usize, cs: usize) -> Self {
        View { data, off, rs, cs }
    }

    /// Row-major with `cols` columns.
    pub fn rows(data: &'a [T], off: usize, cols: usize) -> Self {
        View { data, off, rs: cols, cs: 1 }
    }

    /// Transpose of a row-major matrix with `cols` columns.
    pub fn rows_t(data: &'a [T], off: usize, cols: usize) -> Self {
        View { data, off, rs: 1, cs: cols }
    }
}

fn check(len: usize, off: usize, rows: usize, cols: usize, rs: usize, cs: usize, what: &str) {
    if rows == 0 || cols == 0 {
        return;
    }
    let last = off + (rows - 1) * rs + (cols - 1) * cs;
    assert!(last < len, "gemm {what} view out of bounds: {last} >= {len}");
}

/// Mutable destination for [`gemm`].
pub(crate) struct ViewMut<'a, T> {
    pub data: &'a mut [T],
    pub off: usize,
    pub rs: usize,
    pub cs: usize,
}

impl<'a, T> ViewMut<'a, T> {
    pub fn rows(data: &'a mut [T], off: usize, cols: usize) -> Self {
        ViewMut { data, off, rs: cols, cs: 1 }
    }

    pub fn new(data: &'a mut [T], off: usize, rs: usize, cs: usize) -> Self {
        ViewMut { data, off, rs, cs }
    }
}

/// Bounds-checked `C = alpha * A(m×k) * B(k×n) + beta * C(m×n)`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm<T: Real>(m: usize, k: usize, n: usize, alpha: T, a: View<T>, b: View<T>, beta: T, c: ViewMut<T>) {
    if m == 0 || n == 0 {
        return;
    }
    check(c.data.len(), c.off, m, n, c.rs, c.cs, "C");
    if k == 0 {
        for i in 0..m {
            for j in 0..n {
                let v = &mut c.data[c.off + i * c.rs + j * c.cs];
                *v = if beta == T::zero() { T::zero() } else { *v * beta };
            }
        }
        return;
    }
    check(a.data.len(), a.off, m, k, a.rs, a.cs, "A");
    check(b.data.len(), b.off, k, n, b.rs, b.cs, "B");
    // SAFETY: all three views were bounds-checked above; `c` is a unique borrow
    // so it cannot alias the shared `a` and `b` borrows.
    unsafe {
        T::gemm_raw(
            m,
            k,
            n,
            alpha,
            a.data.as_ptr().add(a.off),
            a.rs as isize,
            a.cs as isize,
            b.data.as_ptr().add(b.off),
            b.rs as isize,
            b.cs as isize,
            beta,
            c.data.as_mut_ptr().add(c.off),
            c.rs as isize,
            c.cs as isize,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(m: usize, k: usize, n: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                c[i * n + j] = (0..k).map(|p| a[i * k + p] * b[p * n + j]).sum();
            }
        }
        c
    }

    #[test]
    fn matches_naive_product() {
        let (m, k, n) = (5, 7, 3);
        let a: Vec<f64> = (0..m * k).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..k * n).map(|i| (i as f64 * 0.11).cos()).collect();
        let mut c = vec![0.0; m * n];
        gemm(m, k, n, 1.0, View::rows(&a, 0, k), View::rows(&b, 0, n), 0.0, ViewMut::rows(&mut c, 0, n));
        for (x, y) in c.iter().zip(naive(m, k, n, &a, &b)) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn transposed_views() {
        let (m, k, n) = (4, 6, 2);
        // a stored as k×m, read transposed.
        let at: Vec<f64> = (0..k * m).map(|i| i as f64 - 3.0).collect();
        let a: Vec<f64> = (0..m * k).map(|idx| at[(idx % k) * m + idx / k]).collect();
        let b: Vec<f64> = (0..k * n).map(|i| 0.5 * i as f64).collect();
        let mut c = vec![1.0; m * n];
        gemm(m, k, n, 1.0, View::rows_t(&at, 0, m), View::rows(&b, 0, n), 1.0, ViewMut::rows(&mut c, 0, n));
        for (x, y) in c.iter().zip(naive(m, k, n, &a, &b)) {
            assert!((x - (y + 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    #[should_panic(expected = "out of bounds")]
    fn rejects_out_of_bounds() {
        let a = vec![0.0f32; 4];
        let mut c = vec![0.0f32; 4];
        gemm(2, 3, 2, 1.0, View::rows(&a, 0, 3), View::rows(&a, 0, 2), 0.0, ViewMut::rows(&mut c, 0, 2));
    }

    #[test]
    fn empty_inner_dimension_scales() {
        let a: Vec<f32> = vec![];
        let mut c = vec![2.0f32; 4];
        gemm(2, 0, 2, 1.0, View::rows(&a, 0, 0), View::rows(&a, 0, 2), 0.5, ViewMut::rows(&mut c, 0, 2));
        assert_eq!(c, vec![1.0; 4]);
    }
}
