use ndarray::linalg::general_mat_mul;
use ndarray::ArrayView2;
use ndarray::ArrayViewMut2;

use super::NumericsError;

/// Dense row-major matrix of `f64`.
///
/// Everything in the model is a matrix: vectors are `1 x n` rows and scalars
/// are `1 x 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, NumericsError> {
        if rows == 0 || cols == 0 {
            return Err(NumericsError::Invalid(format!(
                "shape [{rows}, {cols}] has a zero dimension"
            )));
        }
        if data.len() != rows * cols {
            return Err(NumericsError::Invalid(format!(
                "shape [{rows}, {cols}] needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 0.0)
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        assert!(rows > 0 && cols > 0, "tensor dimensions must be positive");
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            rows: 1,
            cols: 1,
            data: vec![value],
        }
    }

    /// A `1 x n` row vector.
    pub fn row_vector(values: Vec<f64>) -> Self {
        let cols = values.len();
        assert!(cols > 0, "row vector must be non-empty");
        Self {
            rows: 1,
            cols,
            data: values,
        }
    }

    /// Builds a matrix from nested rows; all rows must have equal length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, NumericsError> {
        let cols = rows.first().map(Vec::len).unwrap_or(0);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(NumericsError::Invalid("ragged rows".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn shape(&self) -> [usize; 2] {
        [self.rows, self.cols]
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, value: f64) {
        self.data[r * self.cols + c] = value;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Value of a `1 x 1` tensor.
    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn transpose(&self) -> Tensor {
        let mut data = vec![0.0; self.data.len()];
        for r in 0..self.rows {
            for c in 0..self.cols {
                data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        Tensor {
            rows: self.cols,
            cols: self.rows,
            data,
        }
    }

    /// `self += scale * other`, shapes must agree.
    pub fn add_scaled(&mut self, other: &Tensor, scale: f64) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * b;
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn sq_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    /// Index of the largest entry in row `r`; ties go to the lowest index.
    pub fn argmax_row(&self, r: usize) -> usize {
        let row = self.row(r);
        let mut best = 0;
        for (i, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = i;
            }
        }
        best
    }
}

/// `out = beta * out + op(a) * op(b)`, where `op` optionally transposes.
pub(crate) fn gemm(
    a: &Tensor,
    trans_a: bool,
    b: &Tensor,
    trans_b: bool,
    out: &mut [f64],
    beta: f64,
) {
    let (m, k) = if trans_a { (a.cols, a.rows) } else { (a.rows, a.cols) };
    if m <= SMALL_DIM || k <= SMALL_DIM {
        small_gemm(a, trans_a, b, trans_b, out, beta);
        return;
    }
    let a_view = ArrayView2::from_shape((a.rows, a.cols), &a.data).expect("shape checked");
    let b_view = ArrayView2::from_shape((b.rows, b.cols), &b.data).expect("shape checked");
    let a_view = if trans_a { a_view.reversed_axes() } else { a_view };
    let b_view = if trans_b { b_view.reversed_axes() } else { b_view };
    let (m, n) = (a_view.nrows(), b_view.ncols());
    let mut out_view = ArrayViewMut2::from_shape((m, n), out).expect("output sized by caller");
    general_mat_mul(1.0, &a_view, &b_view, beta, &mut out_view);
}

/// Below this many output rows (or inner dimension) the blocked kernel's
/// packing and tile padding cost more than they save.
const SMALL_DIM: usize = 4;

/// Direct loops for row-vector products and rank-few updates.
fn small_gemm(a: &Tensor, trans_a: bool, b: &Tensor, trans_b: bool, out: &mut [f64], beta: f64) {
    let (m, k) = if trans_a { (a.cols, a.rows) } else { (a.rows, a.cols) };
    let n = if trans_b { b.rows } else { b.cols };
    let a_at = |i: usize, p: usize| if trans_a { a.data[p * a.cols + i] } else { a.data[i * a.cols + p] };
    let mut a_row = vec![0.0; k];
    if beta == 0.0 {
        out.fill(0.0);
    } else if beta != 1.0 {
        out.iter_mut().for_each(|v| *v *= beta);
    }
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        if trans_b {
            // b is n x k: each output entry is a dot product of rows.
            for (p, v) in a_row.iter_mut().enumerate() {
                *v = a_at(i, p);
            }
            for (j, o) in row.iter_mut().enumerate() {
                *o += dot(&a_row, &b.data[j * k..(j + 1) * k]);
            }
        } else {
            for p in 0..k {
                let av = a_at(i, p);
                if av == 0.0 {
                    continue;
                }
                for (o, bv) in row.iter_mut().zip(&b.data[p * n..(p + 1) * n]) {
                    *o += av * bv;
                }
            }
        }
    }
}

/// Dot product with four independent accumulators so it vectorizes.
fn dot(x: &[f64], y: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (xc, yc) = (x.chunks_exact(4), y.chunks_exact(4));
    let tail: f64 = xc.remainder().iter().zip(yc.remainder()).map(|(a, b)| a * b).sum();
    for (a, b) in xc.zip(yc) {
        for l in 0..4 {
            acc[l] += a[l] * b[l];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

pub(crate) fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor, NumericsError> {
    if a.cols != b.rows {
        return Err(NumericsError::Shape {
            op: "matmul",
            lhs: a.shape(),
            rhs: b.shape(),
        });
    }
    let mut data = vec![0.0; a.rows * b.cols];
    gemm(a, false, b, false, &mut data, 0.0);
    Ok(Tensor {
        rows: a.rows,
        cols: b.cols,
        data,
    })
}
