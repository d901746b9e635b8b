//! Minimal dense row-major matrix with the three matmul orientations the
//! network needs. Kernels are written so the inner loops autovectorize:
//! reductions use an 8-lane accumulator block, updates are unit-stride
//! axpy. Everything is single-threaded and deterministic.

use num_traits::Float;

/// Numeric bound for the whole network: f32 for training, f64 for
/// finite-difference verification.
pub trait Real:
    Float + std::fmt::Debug + std::fmt::Display + std::iter::Sum + Default + Send + Sync + 'static
{
    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl Real for f32 {
    fn from_f64(x: f64) -> f32 {
        x as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    fn from_f64(x: f64) -> f64 {
        x
    }
    fn to_f64(self) -> f64 {
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mat<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Real> Mat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Mat<T> {
        Mat {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn from_rows(rows: Vec<Vec<T>>) -> Mat<T> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend(row);
        }
        Mat { rows: r, cols: c, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Mat<T> {
        let mut m = Mat::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m.data[i * cols + j] = f(i, j);
            }
        }
        m
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.cols + j] = v;
    }

    pub fn fill(&mut self, v: T) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn map_inplace(&mut self, f: impl Fn(T) -> T) {
        self.data.iter_mut().for_each(|x| *x = f(*x));
    }

    /// self += other
    pub fn add_assign(&mut self, other: &Mat<T>) {
        debug_assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + b;
        }
    }

    /// self += scale · other
    pub fn add_scaled(&mut self, other: &Mat<T>, scale: T) {
        debug_assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + scale * b;
        }
    }

    /// Add a 1×cols bias row to every row.
    pub fn add_bias_row(&mut self, bias: &Mat<T>) {
        debug_assert_eq!(bias.rows, 1);
        debug_assert_eq!(bias.cols, self.cols);
        for i in 0..self.rows {
            for (a, &b) in self.row_mut(i).iter_mut().zip(&bias.data) {
                *a = *a + b;
            }
        }
    }

    /// Column sums as a 1×cols matrix.
    pub fn colsum(&self) -> Mat<T> {
        let mut out = Mat::zeros(1, self.cols);
        for i in 0..self.rows {
            for (o, &x) in out.data.iter_mut().zip(self.row(i)) {
                *o = *o + x;
            }
        }
        out
    }

    pub fn scale(&mut self, s: T) {
        self.data.iter_mut().for_each(|x| *x = *x * s);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// dot(a, b) with an 8-wide accumulator block so LLVM can vectorize the
/// reduction without reassociation concerns.
#[inline]
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    const LANES: usize = 8;
    let mut acc = [T::zero(); LANES];
    let chunks = a.len() / LANES;
    for c in 0..chunks {
        let off = c * LANES;
        for l in 0..LANES {
            acc[l] = acc[l] + a[off + l] * b[off + l];
        }
    }
    let mut tail = T::zero();
    for i in chunks * LANES..a.len() {
        tail = tail + a[i] * b[i];
    }
    let mut total = tail;
    for v in acc {
        total = total + v;
    }
    total
}

/// out += s · xs
#[inline]
pub fn axpy<T: Real>(s: T, xs: &[T], out: &mut [T]) {
    debug_assert_eq!(xs.len(), out.len());
    for (o, &x) in out.iter_mut().zip(xs) {
        *o = *o + s * x;
    }
}

/// C = A · Bᵀ — A: m×k, B: n×k, C: m×n. B (a weight matrix, always small)
/// is transposed once so the multiply runs as unit-stride row updates,
/// which vectorize far better than dot-product reductions.
pub fn matmul_nt<T: Real>(a: &Mat<T>, b: &Mat<T>) -> Mat<T> {
    assert_eq!(a.cols, b.cols, "matmul_nt inner dimension");
    let mut bt = Mat::zeros(b.cols, b.rows);
    for j in 0..b.rows {
        for (l, &x) in b.row(j).iter().enumerate() {
            bt.data[l * b.rows + j] = x;
        }
    }
    matmul_nn(a, &bt)
}

/// C = A · B — A: m×k, B: k×n, C: m×n. Row-axpy formulation.
pub fn matmul_nn<T: Real>(a: &Mat<T>, b: &Mat<T>) -> Mat<T> {
    assert_eq!(a.cols, b.rows, "matmul_nn inner dimension");
    let mut out = Mat::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        let or = out.row_mut(i);
        for l in 0..a.cols {
            let s = a.data[i * a.cols + l];
            axpy(s, b.row(l), or);
        }
    }
    out
}

/// C += Aᵀ · B — A: m×k, B: m×n, C: k×n. Used for weight gradients, hence
/// accumulating.
pub fn matmul_tn_acc<T: Real>(a: &Mat<T>, b: &Mat<T>, out: &mut Mat<T>) {
    assert_eq!(a.rows, b.rows, "matmul_tn outer dimension");
    assert_eq!(out.rows, a.cols);
    assert_eq!(out.cols, b.cols);
    for i in 0..a.rows {
        let br = b.row(i);
        for l in 0..a.cols {
            let s = a.data[i * a.cols + l];
            if s != T::zero() {
                axpy(s, br, out.row_mut(l));
            }
        }
    }
}

/// Collect the listed rows of `src` into a new matrix.
pub fn gather_rows<T: Real>(src: &Mat<T>, idx: impl Iterator<Item = usize>) -> Mat<T> {
    let idx: Vec<usize> = idx.collect();
    let mut out = Mat::zeros(idx.len(), src.cols);
    for (i, &r) in idx.iter().enumerate() {
        out.row_mut(i).copy_from_slice(src.row(r));
    }
    out
}

/// dst.row(idx[i]) += src.row(i), in order (deterministic).
pub fn scatter_add_rows<T: Real>(dst: &mut Mat<T>, idx: impl Iterator<Item = usize>, src: &Mat<T>) {
    for (i, r) in idx.enumerate() {
        let off = r * dst.cols;
        for (j, &x) in src.row(i).iter().enumerate() {
            dst.data[off + j] = dst.data[off + j] + x;
        }
    }
}
