//! Small dense determinants in column-major layout.

use nalgebra::{DMatrix, Matrix2, Matrix3};

/// Determinant of the `n x n` matrix whose columns are stored consecutively.
pub fn det_cols(cols: &[f64], n: usize) -> f64 {
    debug_assert_eq!(cols.len(), n * n);
    match n {
        0 => 1.0,
        1 => cols[0],
        2 => Matrix2::from_column_slice(cols).determinant(),
        3 => Matrix3::from_column_slice(cols).determinant(),
        _ => DMatrix::from_column_slice(n, n, cols).determinant(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_determinants() {
        assert_eq!(det_cols(&[2.0, 0.0, 0.0, 3.0], 2), 6.0);
        let v = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        assert_eq!(det_cols(&v, 3), 1.0);
        let mut m = vec![0.0; 16];
        for i in 0..4 {
            m[i * 4 + (3 - i)] = 1.0;
        }
        assert!((det_cols(&m, 4) - 1.0).abs() < 1e-12);
    }
}
