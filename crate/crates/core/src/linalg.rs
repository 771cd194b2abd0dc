//! Dense row-major matrices and the small matmul kernels used by every MLP.

use crate::real::Real;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Self { rows, cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Largest absolute elementwise difference.
    pub fn max_abs_diff(&self, other: &Self) -> T {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |m, (a, b)| m.max((*a - *b).abs()))
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn cast<U: Real>(&self) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .map(|v| U::from_f64(v.as_f64()).expect("cast"))
                .collect(),
        }
    }
}

/// Output columns per register block.
const NB: usize = 32;

/// `out[r, :] += sum_k a[r, k] * b[k, :]` for `rows` rows.
///
/// Each output element is formed the same way whatever its position: a
/// product chain over `k` started from zero, then added to `out`. Row and
/// column blocking therefore never change results, so a row computed alone
/// matches the same row computed inside a batch. On x86-64 with AVX2 and FMA
/// the chain uses fused multiply-adds.
pub fn matmul_acc<T: Real>(a: &[T], rows: usize, k: usize, b: &[T], n: usize, out: &mut [T]) {
    assert!(a.len() >= rows * k && b.len() >= k * n && out.len() >= rows * n);
    #[cfg(target_arch = "x86_64")]
    {
        if std::is_x86_feature_detected!("avx512f") && std::is_x86_feature_detected!("fma") {
            // SAFETY: the required CPU features were detected at runtime.
            unsafe { matmul_avx512(a, rows, k, b, n, out) };
            return;
        }
        if std::is_x86_feature_detected!("avx2") && std::is_x86_feature_detected!("fma") {
            // SAFETY: as above.
            unsafe { matmul_avx2(a, rows, k, b, n, out) };
            return;
        }
    }
    matmul_kernel::<T, false>(a, rows, k, b, n, out);
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx512f,fma")]
unsafe fn matmul_avx512<T: Real>(a: &[T], rows: usize, k: usize, b: &[T], n: usize, out: &mut [T]) {
    matmul_kernel::<T, true>(a, rows, k, b, n, out);
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
unsafe fn matmul_avx2<T: Real>(a: &[T], rows: usize, k: usize, b: &[T], n: usize, out: &mut [T]) {
    matmul_kernel::<T, true>(a, rows, k, b, n, out);
}

#[inline(always)]
fn madd<T: Real, const FMA: bool>(x: T, y: T, acc: T) -> T {
    if FMA {
        x.mul_add(y, acc)
    } else {
        acc + x * y
    }
}

#[inline(always)]
fn matmul_kernel<T: Real, const FMA: bool>(a: &[T], rows: usize, k: usize, b: &[T], n: usize, out: &mut [T]) {
    let full = n / NB * NB;
    let mut r = 0;
    while r + 4 <= rows {
        let mut j0 = 0;
        while j0 < full {
            let mut acc = [[T::zero(); NB]; 4];
            for kk in 0..k {
                let brow: &[T; NB] = b[kk * n + j0..kk * n + j0 + NB].try_into().unwrap();
                for (i, acc_row) in acc.iter_mut().enumerate() {
                    let x = a[(r + i) * k + kk];
                    for c in 0..NB {
                        acc_row[c] = madd::<T, FMA>(x, brow[c], acc_row[c]);
                    }
                }
            }
            for (i, acc_row) in acc.iter().enumerate() {
                let o = &mut out[(r + i) * n + j0..(r + i) * n + j0 + NB];
                for c in 0..NB {
                    o[c] += acc_row[c];
                }
            }
            j0 += NB;
        }
        for i in 0..4 {
            column_tail::<T, FMA>(a, r + i, k, b, n, full, out);
        }
        r += 4;
    }
    while r < rows {
        let mut j0 = 0;
        while j0 < full {
            let mut acc = [T::zero(); NB];
            for kk in 0..k {
                let brow: &[T; NB] = b[kk * n + j0..kk * n + j0 + NB].try_into().unwrap();
                let x = a[r * k + kk];
                for c in 0..NB {
                    acc[c] = madd::<T, FMA>(x, brow[c], acc[c]);
                }
            }
            let o = &mut out[r * n + j0..r * n + j0 + NB];
            for c in 0..NB {
                o[c] += acc[c];
            }
            j0 += NB;
        }
        column_tail::<T, FMA>(a, r, k, b, n, full, out);
        r += 1;
    }
}

#[inline(always)]
fn column_tail<T: Real, const FMA: bool>(a: &[T], r: usize, k: usize, b: &[T], n: usize, from: usize, out: &mut [T]) {
    for j in from..n {
        let mut acc = T::zero();
        for kk in 0..k {
            acc = madd::<T, FMA>(a[r * k + kk], b[kk * n + j], acc);
        }
        out[r * n + j] += acc;
    }
}

/// Transpose of a row-major `rows x cols` buffer.
pub fn transpose<T: Copy>(data: &[T], rows: usize, cols: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(data.len());
    for c in 0..cols {
        for r in 0..rows {
            out.push(data[r * cols + c]);
        }
    }
    out
}

#[inline]
pub fn sub3<T: Real>(a: [T; 3], b: [T; 3]) -> [T; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn dot3<T: Real>(a: [T; 3], b: [T; 3]) -> T {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn norm3<T: Real>(a: [T; 3]) -> T {
    dot3(a, a).sqrt()
}
