//! Small dense linear-algebra helpers: symmetric eigendecomposition via
//! cyclic Jacobi rotations. Used by ZCA whitening and by rank diagnostics.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Eigendecomposition of a symmetric matrix `a = E diag(l) E^T`.
///
/// Returns `(eigenvalues, eigenvectors)` where column `j` of the returned
/// matrix is the eigenvector for `eigenvalues[j]`. Values are not sorted.
/// Converges when all off-diagonal magnitudes fall below a scaled threshold;
/// `max_sweeps` bounds the work.
pub fn symmetric_eigen(a: &Tensor, max_sweeps: usize) -> Result<(Vec<f64>, Tensor)> {
    let (n, m) = a.dims2("symmetric_eigen")?;
    if n != m {
        return Err(Error::ShapeMismatch(format!("expected square matrix, got {n}x{m}")));
    }
    a.check_finite("symmetric_eigen input")?;

    let mut mat = a.data().to_vec();
    let mut vecs = vec![0.0; n * n];
    for i in 0..n {
        vecs[i * n + i] = 1.0;
    }

    let scale: f64 = mat.iter().map(|x| x.abs()).fold(0.0, f64::max).max(1.0);
    let tol = 1e-14 * scale;

    for _ in 0..max_sweeps {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in (p + 1)..n {
                off = off.max(mat[p * n + q].abs());
            }
        }
        if off <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = mat[p * n + q];
                if apq.abs() <= tol {
                    continue;
                }
                let app = mat[p * n + p];
                let aqq = mat[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                // Stable rotation: t = sign(theta) / (|theta| + sqrt(theta^2 + 1)).
                let t = if theta >= 0.0 {
                    1.0 / (theta + (theta * theta + 1.0).sqrt())
                } else {
                    -1.0 / (-theta + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                for k in 0..n {
                    let akp = mat[k * n + p];
                    let akq = mat[k * n + q];
                    mat[k * n + p] = c * akp - s * akq;
                    mat[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = mat[p * n + k];
                    let aqk = mat[q * n + k];
                    mat[p * n + k] = c * apk - s * aqk;
                    mat[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = vecs[k * n + p];
                    let vkq = vecs[k * n + q];
                    vecs[k * n + p] = c * vkp - s * vkq;
                    vecs[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }

    let eigvals = (0..n).map(|i| mat[i * n + i]).collect();
    Ok((eigvals, Tensor::new(vec![n, n], vecs)?))
}

/// Singular values of a rank-2 tensor via one-sided Jacobi: columns of a
/// working copy are rotated pairwise until mutually orthogonal, at which
/// point their norms are the singular values. Returned in descending order.
pub fn singular_values(a: &Tensor) -> Result<Vec<f64>> {
    let (m, n) = a.dims2("singular_values")?;
    // Work on the tall orientation so columns have full length.
    let work = if m >= n { a.clone() } else { a.transposed()? };
    let (rows, cols) = work.dims2("singular_values")?;
    let mut w = work.data().to_vec();

    let col_dot = |w: &[f64], p: usize, q: usize| -> f64 {
        let mut s = 0.0;
        for r in 0..rows {
            s += w[r * cols + p] * w[r * cols + q];
        }
        s
    };

    for _ in 0..60 {
        let mut rotated = false;
        for p in 0..cols {
            for q in (p + 1)..cols {
                let app = col_dot(&w, p, p);
                let aqq = col_dot(&w, q, q);
                let apq = col_dot(&w, p, q);
                if apq.abs() <= 1e-30 || apq.abs() <= 1e-16 * (app * aqq).sqrt() {
                    continue;
                }
                rotated = true;
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (theta * theta + 1.0).sqrt())
                } else {
                    -1.0 / (-theta + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for r in 0..rows {
                    let vp = w[r * cols + p];
                    let vq = w[r * cols + q];
                    w[r * cols + p] = c * vp - s * vq;
                    w[r * cols + q] = s * vp + c * vq;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let mut svs: Vec<f64> = (0..cols).map(|c| col_dot(&w, c, c).sqrt()).collect();
    svs.sort_by(|a, b| b.partial_cmp(a).unwrap());
    Ok(svs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngState;

    fn random_symmetric(n: usize, seed: u64) -> Tensor {
        let mut rng = RngState::new(seed);
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let v = rng.next_gaussian();
                data[i * n + j] = v;
                data[j * n + i] = v;
            }
        }
        Tensor::new(vec![n, n], data).unwrap()
    }

    #[test]
    fn reconstructs_the_input_matrix() {
        let a = random_symmetric(12, 5);
        let (vals, vecs) = symmetric_eigen(&a, 100).unwrap();
        // E diag(l) E^T
        let n = 12;
        let mut scaled = vecs.clone();
        for i in 0..n {
            for j in 0..n {
                scaled.data_mut()[i * n + j] = vecs.data()[i * n + j] * vals[j];
            }
        }
        let rebuilt = scaled.matmul_nt(&vecs).unwrap();
        assert!(rebuilt.max_abs_diff(&a).unwrap() < 1e-9);
    }

    #[test]
    fn eigenvectors_are_orthonormal() {
        let a = random_symmetric(9, 6);
        let (_, vecs) = symmetric_eigen(&a, 100).unwrap();
        let gram = vecs.matmul_tn(&vecs).unwrap();
        assert!(gram.max_abs_diff(&Tensor::identity(9)).unwrap() < 1e-10);
    }

    #[test]
    fn diagonal_matrix_is_a_fixed_point() {
        let a = Tensor::new(vec![3, 3], vec![2.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 5.0])
            .unwrap();
        let (mut vals, _) = symmetric_eigen(&a, 100).unwrap();
        vals.sort_by(|x, y| x.partial_cmp(y).unwrap());
        assert_eq!(vals, vec![-1.0, 2.0, 5.0]);
    }

    #[test]
    fn rejects_non_square_input() {
        let a = Tensor::zeros(vec![2, 3]).unwrap();
        assert!(symmetric_eigen(&a, 10).is_err());
    }

    #[test]
    fn singular_values_of_diagonal_matrix() {
        let a = Tensor::new(vec![2, 3], vec![3.0, 0.0, 0.0, 0.0, -4.0, 0.0]).unwrap();
        let svs = singular_values(&a).unwrap();
        assert_eq!(svs.len(), 2);
        assert!((svs[0] - 4.0).abs() < 1e-12);
        assert!((svs[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn singular_values_square_to_gram_eigenvalues() {
        let mut rng = RngState::new(14);
        let a = Tensor::new(
            vec![6, 4],
            (0..24).map(|_| rng.next_gaussian()).collect(),
        )
        .unwrap();
        let svs = singular_values(&a).unwrap();
        let gram = a.matmul_tn(&a).unwrap();
        let (mut evs, _) = symmetric_eigen(&gram, 100).unwrap();
        evs.sort_by(|x, y| y.partial_cmp(x).unwrap());
        for (sv, ev) in svs.iter().zip(evs) {
            assert!((sv * sv - ev).abs() < 1e-9);
        }
    }
}
