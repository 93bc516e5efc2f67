//! Dense numeric kernels shared by the HDC and network code paths.
//!
//! Every reduction here has a fixed association order that depends only on
//! the reduction length, never on batch size or on which caller invoked it.
//! Encoding a sample alone or inside a batch, and scoring it as a network
//! logit or as an HDC similarity, therefore produce bit-identical values.

use num_traits::Float;

/// Scalar type usable by the kernels. Implemented for `f32` (hot paths) and
/// `f64` (gradient checking).
pub trait Real: Float + Default + Send + Sync + std::fmt::Debug + std::iter::Sum + 'static {
    /// `c = alpha * a * b + beta * c` on strided matrices.
    ///
    /// # Safety
    /// All pointers and strides must describe in-bounds matrices of the given
    /// shapes; `c` must not alias `a` or `b`.
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

    fn from_f64(v: f64) -> Self;
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

    fn from_f64(v: f64) -> f32 {
        v as f32
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

    fn from_f64(v: f64) -> f64 {
        v
    }
}

/// Borrowed strided view of a matrix.
#[derive(Clone, Copy, Debug)]
pub struct MatRef<'a, T> {
    data: &'a [T],
    rows: usize,
    cols: usize,
    row_stride: usize,
    col_stride: usize,
}

impl<'a, T> MatRef<'a, T> {
    /// Row-major `rows x cols` view over the front of `data`.
    pub fn row_major(data: &'a [T], rows: usize, cols: usize) -> Self {
        Self::strided(data, rows, cols, cols, 1)
    }

    /// # Panics
    /// When the strides address elements outside `data`.
    pub fn strided(
        data: &'a [T],
        rows: usize,
        cols: usize,
        row_stride: usize,
        col_stride: usize,
    ) -> Self {
        if rows > 0 && cols > 0 {
            let last = (rows - 1) * row_stride + (cols - 1) * col_stride;
            assert!(last < data.len(), "matrix view out of bounds");
        }
        Self {
            data,
            rows,
            cols,
            row_stride,
            col_stride,
        }
    }

    pub fn t(self) -> Self {
        Self {
            data: self.data,
            rows: self.cols,
            cols: self.rows,
            row_stride: self.col_stride,
            col_stride: self.row_stride,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }
}

/// `c = alpha * a * b + beta * c` where `c` is row-major `a.rows x b.cols`.
///
/// # Panics
/// On inner-dimension or output-size mismatch.
pub fn gemm<T: Real>(alpha: T, a: MatRef<'_, T>, b: MatRef<'_, T>, beta: T, c: &mut [T]) {
    assert_eq!(a.cols, b.rows, "gemm inner dimension mismatch");
    let (m, k, n) = (a.rows, a.cols, b.cols);
    assert_eq!(c.len(), m * n, "gemm output size mismatch");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.iter_mut().for_each(|v| *v = if beta == T::zero() { T::zero() } else { beta * *v });
        return;
    }
    // SAFETY: MatRef construction bounds-checked both operands, `c` holds
    // exactly m*n elements, and a shared and a unique borrow cannot alias.
    unsafe {
        T::gemm_raw(
            m,
            k,
            n,
            alpha,
            a.data.as_ptr(),
            a.row_stride as isize,
            a.col_stride as isize,
            b.data.as_ptr(),
            b.row_stride as isize,
            b.col_stride as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        )
    }
}

const LANES: usize = 16;

/// Inner product with sixteen interleaved partial sums reduced as a binary
/// tree.
///
/// # Panics
/// When the slices differ in length.
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    assert_eq!(a.len(), b.len(), "dot length mismatch");
    let mut acc = [T::zero(); LANES];
    let split = a.len() - a.len() % LANES;
    for (x, y) in a[..split]
        .chunks_exact(LANES)
        .zip(b[..split].chunks_exact(LANES))
    {
        for i in 0..LANES {
            acc[i] = acc[i] + x[i] * y[i];
        }
    }
    for (i, (&x, &y)) in a[split..].iter().zip(&b[split..]).enumerate() {
        acc[i] = acc[i] + x * y;
    }
    reduce(acc)
}

fn reduce<T: Real>(mut acc: [T; LANES]) -> T {
    let mut width = LANES;
    while width > 1 {
        width /= 2;
        for i in 0..width {
            acc[i] = acc[i] + acc[i + width];
        }
    }
    acc[0]
}

pub fn norm<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

/// `y += alpha * x`
pub fn axpy<T: Real>(alpha: T, x: &[T], y: &mut [T]) {
    assert_eq!(x.len(), y.len(), "axpy length mismatch");
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi = *yi + alpha * xi;
    }
}

/// Index of the largest value; ties resolve to the lowest index.
pub fn argmax<T: PartialOrd + Copy>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for p in 0..k {
                    c[i * n + j] += a[i * k + p] * b[p * n + j];
                }
            }
        }
        c
    }

    #[test]
    fn gemm_matches_naive_product() {
        let (m, k, n) = (5, 7, 3);
        let a: Vec<f64> = (0..m * k).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..k * n).map(|i| (i as f64 * 0.11).cos()).collect();
        let mut c = vec![0.0; m * n];
        gemm(1.0, MatRef::row_major(&a, m, k), MatRef::row_major(&b, k, n), 0.0, &mut c);
        for (x, y) in c.iter().zip(naive(&a, &b, m, k, n)) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn transposed_view_uses_strides() {
        // a is stored 3x2, used as its 2x3 transpose
        let a = [1.0f64, 4.0, 2.0, 5.0, 3.0, 6.0];
        let b = [1.0f64, 0.0, 1.0];
        let mut c = vec![0.0; 2];
        gemm(1.0, MatRef::row_major(&a, 3, 2).t(), MatRef::row_major(&b, 3, 1), 0.0, &mut c);
        assert_eq!(c, vec![4.0, 10.0]);
    }

    #[test]
    fn gemm_rows_do_not_depend_on_batch_size() {
        let (k, n) = (300, 70);
        let a: Vec<f32> = (0..9 * k).map(|i| ((i * 7919) % 255) as f32 / 255.0).collect();
        let b: Vec<f32> = (0..k * n).map(|i| if (i * 31) % 7 < 3 { 1.0 } else { -1.0 }).collect();
        let mut batch = vec![0.0f32; 9 * n];
        gemm(1.0, MatRef::row_major(&a, 9, k), MatRef::row_major(&b, k, n), 0.0, &mut batch);
        for i in 0..9 {
            let mut single = vec![0.0f32; n];
            let row = &a[i * k..(i + 1) * k];
            gemm(1.0, MatRef::row_major(row, 1, k), MatRef::row_major(&b, k, n), 0.0, &mut single);
            assert_eq!(single, batch[i * n..(i + 1) * n].to_vec());
        }
    }

    #[test]
    fn dot_handles_tails_and_empty() {
        assert_eq!(dot::<f32>(&[], &[]), 0.0);
        let a: Vec<f32> = (1..=19).map(|v| v as f32).collect();
        assert_eq!(dot(&a, &a), (1..=19).map(|v| (v * v) as f32).sum::<f32>());
    }

    #[test]
    fn argmax_prefers_lowest_index_on_ties() {
        assert_eq!(argmax(&[0.0, 0.0, 0.0]), 0);
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[f32::NAN, 1.0]), 0);
    }
}
