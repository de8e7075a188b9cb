use rand::Rng;

use crate::scalar::Scalar;

use super::tensor::TensorBase;

/// Glorot-uniform weight matrix: entries drawn from
/// `U(-sqrt(6/(fan_in+fan_out)), +sqrt(6/(fan_in+fan_out)))`.
///
/// For a `[rows x cols]` matrix used as `x * W`, fan_in is `rows` and
/// fan_out is `cols`.
pub fn glorot_uniform<S: Scalar, R: Rng>(rows: usize, cols: usize, rng: &mut R) -> TensorBase<S> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| S::from_f64(rng.gen_range(-limit..limit)))
        .collect();
    TensorBase::new(vec![rows, cols], data).expect("rows*cols entries generated")
}

/// Embedding-table initialization: entries from `U(-sqrt(3/cols),
/// +sqrt(3/cols))`, giving every row unit RMS norm regardless of the
/// vocabulary size.
///
/// Glorot's `fan_in = rows` reading shrinks lookup-table rows with the
/// vocabulary, which flattens the attention logits (dot products of two
/// rows) to near zero and stalls training before the attention ever
/// differentiates candidates.
pub fn embedding_uniform<S: Scalar, R: Rng>(
    rows: usize,
    cols: usize,
    rng: &mut R,
) -> TensorBase<S> {
    let limit = (3.0 / cols as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| S::from_f64(rng.gen_range(-limit..limit)))
        .collect();
    TensorBase::new(vec![rows, cols], data).expect("rows*cols entries generated")
}

/// Zero-filled vector, the conventional bias initialization.
pub fn zeros<S: Scalar>(len: usize) -> TensorBase<S> {
    TensorBase::zeros(vec![len])
}
