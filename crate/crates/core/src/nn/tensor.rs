use crate::error::{Error, Result};
use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};

/// Dense row-major tensor.
///
/// `data.len()` always equals the product of `shape`; entries stay finite
/// through forward and backward passes (checked by [`TensorBase::assert_finite`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorBase<S> {
    shape: Vec<usize>,
    data: Vec<S>,
}

impl<S: Scalar> TensorBase<S> {
    pub fn new(shape: Vec<usize>, data: Vec<S>) -> Result<Self> {
        let expect: usize = shape.iter().product();
        if data.len() != expect {
            return Err(Error::Dimension {
                op: "tensor construction",
                lhs: shape,
                rhs: vec![data.len()],
            });
        }
        Ok(TensorBase { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        TensorBase {
            shape,
            data: vec![S::zero(); n],
        }
    }

    pub fn filled(shape: Vec<usize>, value: S) -> Self {
        let n = shape.iter().product();
        TensorBase {
            shape,
            data: vec![value; n],
        }
    }

    pub fn scalar(value: S) -> Self {
        TensorBase {
            shape: vec![1],
            data: vec![value],
        }
    }

    /// 2-D tensor from rows.
    pub fn from_rows(rows: &[Vec<S>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(Error::Dimension {
                    op: "from_rows",
                    lhs: vec![c],
                    rhs: vec![row.len()],
                });
            }
            data.extend_from_slice(row);
        }
        TensorBase::new(vec![r, c], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<S> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    pub fn cols(&self) -> usize {
        if self.shape.len() >= 2 {
            self.shape[1]
        } else {
            1
        }
    }

    /// Row `i` of a 2-D tensor.
    pub fn row(&self, i: usize) -> &[S] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn assert_finite(&self, context: &str) -> Result<()> {
        if self.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::contract(format!(
                "non-finite value in tensor ({context})"
            )));
        }
        Ok(())
    }

    /// Squared L2 norm of all entries.
    pub fn sq_norm(&self) -> S {
        self.data.iter().map(|&v| v * v).sum()
    }
}

/// Row-major matrix product `a[m x k] * b[k x n]` into a fresh buffer.
///
/// The i-k-j loop order keeps both operands streaming forward in memory,
/// which the compiler vectorizes; this one routine carries nearly all of
/// the training cost.
pub(crate) fn matmul_raw<S: Scalar>(
    a: &[S],
    b: &[S],
    m: usize,
    k: usize,
    n: usize,
) -> Vec<S> {
    let mut out = vec![S::zero(); m * n];
    matmul_acc(a, b, m, k, n, &mut out);
    out
}

/// `out += a * b`, same layout as [`matmul_raw`].
pub(crate) fn matmul_acc<S: Scalar>(
    a: &[S],
    b: &[S],
    m: usize,
    k: usize,
    n: usize,
    out: &mut [S],
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    for i in 0..m {
        let out_row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == S::zero() {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    }
}

/// `out += a^T * b` where `a` is `[m x k]` and `b` is `[m x n]`; result `[k x n]`.
pub(crate) fn matmul_at_b_acc<S: Scalar>(
    a: &[S],
    b: &[S],
    m: usize,
    k: usize,
    n: usize,
    out: &mut [S],
) {
    debug_assert_eq!(out.len(), k * n);
    for i in 0..m {
        let b_row = &b[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == S::zero() {
                continue;
            }
            let out_row = &mut out[p * n..(p + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    }
}

/// `out += a * b^T` where `a` is `[m x k]` and `b` is `[n x k]`; result `[m x n]`.
pub(crate) fn matmul_a_bt_acc<S: Scalar>(
    a: &[S],
    b: &[S],
    m: usize,
    k: usize,
    n: usize,
    out: &mut [S],
) {
    debug_assert_eq!(out.len(), m * n);
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let out_row = &mut out[i * n..(i + 1) * n];
        for j in 0..n {
            let b_row = &b[j * k..(j + 1) * k];
            let mut acc = S::zero();
            for (&av, &bv) in a_row.iter().zip(b_row) {
                acc += av * bv;
            }
            out_row[j] += acc;
        }
    }
}
