//! Floating-point element type and strided matrix products.

use std::fmt::Debug;

/// Element type of model tensors: `f32` for training, `f64` for gradient checks.
pub trait Float:
    num_traits::Float
    + Default
    + Debug
    + Send
    + Sync
    + std::iter::Sum
    + std::ops::AddAssign
    + std::ops::SubAssign
    + std::ops::MulAssign
    + 'static
{
    /// `C <- alpha * A B + beta * C` on raw strided storage.
    ///
    /// # Safety
    /// Every index reachable through the dimensions and strides must be in bounds
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

    fn of(x: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Float for f32 {
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

    fn of(x: f64) -> Self {
        x as f32
    }

    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Float for f64 {
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

    fn of(x: f64) -> Self {
        x
    }

    fn as_f64(self) -> f64 {
        self
    }
}

/// Read-only strided matrix view.
#[derive(Clone, Copy, Debug)]
pub struct View<'a, T> {
    data: &'a [T],
    rows: usize,
    cols: usize,
    rs: usize,
    cs: usize,
}

impl<'a, T: Float> View<'a, T> {
    /// Row-major `rows x cols` matrix at the start of `data`.
    pub fn new(data: &'a [T], rows: usize, cols: usize) -> Self {
        Self::strided(data, rows, cols, cols, 1)
    }

    /// `rows x cols` block whose rows are `row_stride` apart.
    pub fn block(data: &'a [T], rows: usize, cols: usize, row_stride: usize) -> Self {
        Self::strided(data, rows, cols, row_stride, 1)
    }

    fn strided(data: &'a [T], rows: usize, cols: usize, rs: usize, cs: usize) -> Self {
        if rows > 0 && cols > 0 {
            assert!(
                (rows - 1) * rs + (cols - 1) * cs < data.len(),
                "view {rows}x{cols} (rs {rs}, cs {cs}) exceeds {} elements",
                data.len()
            );
        }
        Self { data, rows, cols, rs, cs }
    }

    pub fn t(self) -> Self {
        Self {
            data: self.data,
            rows: self.cols,
            cols: self.rows,
            rs: self.cs,
            cs: self.rs,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }
}

/// `c <- alpha * a b + beta * c`, with `c` a row-major block of row stride `ldc`.
pub fn gemm<T: Float>(a: View<'_, T>, b: View<'_, T>, c: &mut [T], ldc: usize, alpha: T, beta: T) {
    let (m, k, n) = (a.rows, a.cols, b.cols);
    assert_eq!(k, b.rows, "inner dimensions differ");
    if m == 0 || n == 0 {
        return;
    }
    assert!((m - 1) * ldc + n <= c.len(), "output block exceeds buffer");
    if k == 0 {
        for i in 0..m {
            for x in &mut c[i * ldc..i * ldc + n] {
                *x = if beta == T::zero() { T::zero() } else { *x * beta };
            }
        }
        return;
    }
    // SAFETY: both views were bounds-checked on construction, the output block
    // was checked above, and `c` is a distinct mutable borrow.
    unsafe {
        T::gemm_raw(
            m,
            k,
            n,
            alpha,
            a.data.as_ptr(),
            a.rs as isize,
            a.cs as isize,
            b.data.as_ptr(),
            b.rs as isize,
            b.cs as isize,
            beta,
            c.as_mut_ptr(),
            ldc as isize,
            1,
        )
    }
}

/// `a b` for row-major `a: m x k` and `b: k x n`.
pub fn matmul<T: Float>(a: &[T], m: usize, k: usize, b: &[T], n: usize) -> Vec<T> {
    let mut c = vec![T::zero(); m * n];
    gemm(View::new(a, m, k), View::new(b, k, n), &mut c, n, T::one(), T::zero());
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &[f64], m: usize, k: usize, b: &[f64], n: usize) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                c[i * n + j] = (0..k).map(|p| a[i * k + p] * b[p * n + j]).sum();
            }
        }
        c
    }

    #[test]
    fn matches_naive_product_and_transposes() {
        let a: Vec<f64> = (0..12).map(|x| x as f64 * 0.5 - 2.0).collect();
        let b: Vec<f64> = (0..20).map(|x| (x as f64).sin()).collect();
        for (x, y) in matmul(&a, 3, 4, &b, 5).iter().zip(naive(&a, 3, 4, &b, 5)) {
            assert!((x - y).abs() < 1e-12);
        }
        // (b^T a^T) = (a b)^T
        let mut ct = vec![0.0; 15];
        gemm(View::new(&b, 4, 5).t(), View::new(&a, 3, 4).t(), &mut ct, 3, 1.0, 0.0);
        let c = naive(&a, 3, 4, &b, 5);
        for i in 0..3 {
            for j in 0..5 {
                assert!((ct[j * 3 + i] - c[i * 5 + j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn block_views_and_accumulation() {
        // Columns 2..4 of a 3x4 matrix times a 2x2 identity, accumulated twice.
        let a: Vec<f32> = (0..12).map(|x| x as f32).collect();
        let eye = [1.0f32, 0.0, 0.0, 1.0];
        let mut c = vec![0.0f32; 6];
        let v = View::block(&a[2..], 3, 2, 4);
        gemm(v, View::new(&eye, 2, 2), &mut c, 2, 1.0, 0.0);
        gemm(v, View::new(&eye, 2, 2), &mut c, 2, 1.0, 1.0);
        assert_eq!(c, vec![4.0, 6.0, 12.0, 14.0, 20.0, 22.0]);
    }

    #[test]
    #[should_panic]
    fn out_of_bounds_view_panics() {
        let a = [0.0f64; 5];
        let _ = View::new(&a, 2, 3);
    }
}
