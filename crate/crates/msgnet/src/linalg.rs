//! Small dense f64 helpers: Cholesky factorization and triangular inversion.

/// Cholesky-Banachiewicz factorization of a symmetric matrix given row-major.
/// Returns the lower-triangular factor, or `None` if a pivot is not strictly
/// positive.
pub(crate) fn cholesky_f64(n: usize, a: &[f64]) -> Option<Vec<f64>> {
    debug_assert_eq!(a.len(), n * n);
    let mut l = vec![0.0f64; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i * n + j];
            for k in 0..j {
                sum -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if sum <= 0.0 {
                    return None;
                }
                l[i * n + i] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    Some(l)
}

/// Inverse of a lower-triangular matrix by forward substitution.
pub(crate) fn invert_lower_f64(n: usize, l: &[f64]) -> Option<Vec<f64>> {
    let mut inv = vec![0.0f64; n * n];
    for col in 0..n {
        for row in 0..n {
            let rhs = if row == col { 1.0 } else { 0.0 };
            if row < col {
                continue;
            }
            let mut sum = rhs;
            for k in col..row {
                sum -= l[row * n + k] * inv[k * n + col];
            }
            let pivot = l[row * n + row];
            if pivot == 0.0 || !pivot.is_finite() {
                return None;
            }
            inv[row * n + col] = sum / pivot;
        }
    }
    Some(inv)
}

pub(crate) fn matmul_f64(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0f64; m * n];
    for i in 0..m {
        for j in 0..n {
            let mut acc = 0.0;
            for l in 0..k {
                acc += a[i * k + l] * b[l * n + j];
            }
            out[i * n + j] = acc;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factorizes_known_matrix() {
        let a = [4.0, 2.0, 2.0, 5.0];
        let l = cholesky_f64(2, &a).unwrap();
        assert_eq!(l, vec![2.0, 0.0, 1.0, 2.0]);
    }

    #[test]
    fn rejects_indefinite() {
        let a = [1.0, 2.0, 2.0, 1.0];
        assert!(cholesky_f64(2, &a).is_none());
    }

    #[test]
    fn lower_inverse_round_trip() {
        let l = [2.0, 0.0, 0.0, 1.0, 3.0, 0.0, -1.0, 0.5, 4.0];
        let inv = invert_lower_f64(3, &l).unwrap();
        let prod = matmul_f64(&l, &inv, 3, 3, 3);
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((prod[i * 3 + j] - want).abs() < 1e-12);
            }
        }
    }
}
