//! Bounds-checked wrapper over the strided gemm kernels.

use super::Scalar;

/// A read-only strided matrix view. Strides are in elements and may make
/// rows overlap, which is how the convolution im2col view is expressed.
#[derive(Clone, Copy)]
pub(crate) struct MatRef<'a, T> {
    pub data: &'a [T],
    pub rows: usize,
    pub cols: usize,
    pub row_stride: usize,
    pub col_stride: usize,
}

impl<'a, T> MatRef<'a, T> {
    pub fn row_major(data: &'a [T], rows: usize, cols: usize) -> Self {
        Self { data, rows, cols, row_stride: cols, col_stride: 1 }
    }

    /// Transposed view of a row-major `rows x cols` buffer.
    pub fn transposed(data: &'a [T], rows: usize, cols: usize) -> Self {
        Self { data, rows: cols, cols: rows, row_stride: 1, col_stride: cols }
    }

    fn fits(&self) -> bool {
        if self.rows == 0 || self.cols == 0 {
            return true;
        }
        let last = (self.rows - 1) * self.row_stride + (self.cols - 1) * self.col_stride;
        last < self.data.len()
    }
}

/// `c <- alpha * a b + beta * c` where `c` is row-major `a.rows x b.cols`.
///
/// Panics if any view reaches outside its slice; every call site derives
/// the views from already validated tensor shapes.
pub(crate) fn gemm<T: Scalar>(alpha: T, a: MatRef<'_, T>, b: MatRef<'_, T>, beta: T, c: &mut [T]) {
    let (m, k, n) = (a.rows, a.cols, b.cols);
    assert_eq!(b.rows, k, "gemm inner dimensions differ");
    assert!(a.fits() && b.fits(), "gemm operand view out of bounds");
    assert!(c.len() >= m * n, "gemm output too small");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for v in &mut c[..m * n] {
            *v *= beta;
        }
        return;
    }
    // SAFETY: the asserts above guarantee every addressed element of a, b
    // and c lies inside its slice, and c is exclusively borrowed.
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
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &MatRef<'_, f64>, b: &MatRef<'_, f64>) -> Vec<f64> {
        let mut out = vec![0.0; a.rows * b.cols];
        for i in 0..a.rows {
            for j in 0..b.cols {
                let mut s = 0.0;
                for p in 0..a.cols {
                    s += a.data[i * a.row_stride + p * a.col_stride]
                        * b.data[p * b.row_stride + j * b.col_stride];
                }
                out[i * b.cols + j] = s;
            }
        }
        out
    }

    #[test]
    fn matches_naive_product_with_overlapping_rows() {
        let data: Vec<f64> = (0..20).map(|i| (i as f64 * 0.37).sin()).collect();
        // 6 rows of 5 elements that overlap by 3.
        let a = MatRef { data: &data, rows: 6, cols: 5, row_stride: 2, col_stride: 1 };
        let bd: Vec<f64> = (0..15).map(|i| (i as f64 * 0.11).cos()).collect();
        let b = MatRef::row_major(&bd, 5, 3);
        let mut c = vec![0.0; 18];
        gemm(1.0, a, b, 0.0, &mut c);
        let want = naive(&a, &b);
        for (x, y) in c.iter().zip(&want) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn transposed_view_and_accumulate() {
        let ad: Vec<f64> = (0..12).map(|i| i as f64).collect();
        let a = MatRef::transposed(&ad, 4, 3); // 3 x 4
        let bd: Vec<f64> = (0..8).map(|i| 1.0 + i as f64).collect();
        let b = MatRef::row_major(&bd, 4, 2);
        let mut c = vec![1.0; 6];
        gemm(2.0, a, b, 1.0, &mut c);
        let want = naive(&a, &b);
        for (x, y) in c.iter().zip(&want) {
            assert!((x - (2.0 * y + 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    #[should_panic(expected = "out of bounds")]
    fn rejects_out_of_bounds_view() {
        let d = vec![0.0f32; 4];
        let a = MatRef { data: &d, rows: 3, cols: 2, row_stride: 2, col_stride: 1 };
        let b = MatRef::row_major(&d, 2, 2);
        let mut c = vec![0.0; 6];
        gemm(1.0, a, b, 0.0, &mut c);
    }
}
