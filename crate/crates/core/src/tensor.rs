//! Dense row-major tensors of rank 1 to 4.
//!
//! `Tensor` is the universal value carrier: inputs, activations, weight
//! matrices, convolution kernels and gradients are all tensors of `f64`.
//! There is no broadcasting; elementwise operations require exact shape
//! equality and matrix products validate inner extents.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Builds a tensor, validating rank (1..=4), positive extents and that
    /// the extents multiply out to the data length.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.len() > 4 {
            return Err(Error::ShapeMismatch(format!(
                "rank must be 1..=4, got {}",
                shape.len()
            )));
        }
        if shape.contains(&0) {
            return Err(Error::ShapeMismatch(format!("zero extent in {shape:?}")));
        }
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(Error::ShapeMismatch(format!(
                "shape {shape:?} implies {len} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        let len: usize = shape.iter().product();
        Tensor::new(shape, vec![0.0; len])
    }

    pub fn from_vec(data: Vec<f64>) -> Self {
        let n = data.len();
        Tensor::new(vec![n.max(1)], if n == 0 { vec![0.0] } else { data })
            .expect("rank-1 tensor from vec")
    }

    pub fn filled(shape: Vec<usize>, value: f64) -> Result<Self> {
        let len: usize = shape.iter().product();
        Tensor::new(shape, vec![value; len])
    }

    /// n x n identity matrix.
    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Tensor::new(vec![n, n], data).expect("identity")
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
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

    /// Extents of a rank-2 tensor, with an operation name for error messages.
    pub fn dims2(&self, what: &str) -> Result<(usize, usize)> {
        if self.rank() != 2 {
            return Err(Error::ShapeMismatch(format!(
                "{what}: expected rank-2, got shape {:?}",
                self.shape
            )));
        }
        Ok((self.shape[0], self.shape[1]))
    }

    /// Reinterprets the data under a new shape of equal length.
    pub fn reshaped(&self, shape: Vec<usize>) -> Result<Tensor> {
        Tensor::new(shape, self.data.clone())
    }

    pub fn is_all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Errors if any entry is NaN or infinite.
    pub fn check_finite(&self, what: &str) -> Result<()> {
        if self.is_all_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite(what.to_string()))
        }
    }

    /// Row `i` of a rank-2 tensor.
    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.shape[self.rank() - 1];
        &self.data[i * n..(i + 1) * n]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn scaled(&self, s: f64) -> Tensor {
        self.map(|x| x * s)
    }

    /// Elementwise product; shapes must match exactly.
    pub fn elemwise_mul(&self, other: &Tensor) -> Result<Tensor> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch(format!(
                "elemwise_mul: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a * b)
            .collect();
        Ok(Tensor { shape: self.shape.clone(), data })
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch(format!(
                "add: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a + b)
            .collect();
        Ok(Tensor { shape: self.shape.clone(), data })
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch(format!(
                "sub: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a - b)
            .collect();
        Ok(Tensor { shape: self.shape.clone(), data })
    }

    /// Largest absolute difference between same-shaped tensors.
    pub fn max_abs_diff(&self, other: &Tensor) -> Result<f64> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch(format!(
                "max_abs_diff: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|&x| x * x).sum::<f64>().sqrt()
    }

    /// Transpose of a rank-2 tensor.
    pub fn transposed(&self) -> Result<Tensor> {
        let (m, n) = self.dims2("transpose")?;
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &self.data[i * n..(i + 1) * n];
            for (j, &v) in row.iter().enumerate() {
                out[j * m + i] = v;
            }
        }
        Tensor::new(vec![n, m], out)
    }

    /// Matrix product `self (m x k) . other (k x n)`.
    ///
    /// i-k-j loop order with four output rows per pass: the inner update runs
    /// along contiguous rows of both the output and `other`, and each loaded
    /// row of `other` feeds four FMA streams. Accumulation order per output
    /// element is plain ascending `k`, so results do not depend on the
    /// blocking.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (m, ka) = self.dims2("matmul lhs")?;
        let (kb, n) = other.dims2("matmul rhs")?;
        if ka != kb {
            return Err(Error::ShapeMismatch(format!(
                "matmul: inner extents {ka} vs {kb} (lhs {:?}, rhs {:?})",
                self.shape, other.shape
            )));
        }
        let mut out = vec![0.0; m * n];
        let mut i = 0;
        while i + 4 <= m {
            let a = &self.data[i * ka..(i + 4) * ka];
            let (c01, c23) = out[i * n..(i + 4) * n].split_at_mut(2 * n);
            let (c0, c1) = c01.split_at_mut(n);
            let (c2, c3) = c23.split_at_mut(n);
            for k in 0..ka {
                let brow = &other.data[k * n..(k + 1) * n];
                let (v0, v1) = (a[k], a[ka + k]);
                let (v2, v3) = (a[2 * ka + k], a[3 * ka + k]);
                for j in 0..n {
                    let b = brow[j];
                    c0[j] = b.mul_add(v0, c0[j]);
                    c1[j] = b.mul_add(v1, c1[j]);
                    c2[j] = b.mul_add(v2, c2[j]);
                    c3[j] = b.mul_add(v3, c3[j]);
                }
            }
            i += 4;
        }
        while i < m {
            let arow = &self.data[i * ka..(i + 1) * ka];
            let crow = &mut out[i * n..(i + 1) * n];
            for (k, &aik) in arow.iter().enumerate() {
                let brow = &other.data[k * n..(k + 1) * n];
                for (c, &b) in crow.iter_mut().zip(brow) {
                    *c = b.mul_add(aik, *c);
                }
            }
            i += 1;
        }
        Tensor::new(vec![m, n], out)
    }

    /// `self (m x k) . otherᵀ (k x n)` where `other` is stored `n x k`.
    pub fn matmul_nt(&self, other: &Tensor) -> Result<Tensor> {
        self.matmul(&other.transposed()?)
    }

    /// `selfᵀ (k x m) . other (k x n)`: accumulates one outer product per
    /// shared row, so both inner reads are contiguous.
    pub fn matmul_tn(&self, other: &Tensor) -> Result<Tensor> {
        let (ka, m) = self.dims2("matmul_tn lhs")?;
        let (kb, n) = other.dims2("matmul_tn rhs")?;
        if ka != kb {
            return Err(Error::ShapeMismatch(format!(
                "matmul_tn: shared extents {ka} vs {kb}",
            )));
        }
        let mut out = vec![0.0; m * n];
        let mut k = 0;
        // Four shared rows per pass; each output element still accumulates
        // in ascending k order (sequential FMAs within the block).
        while k + 4 <= ka {
            let a = &self.data[k * m..(k + 4) * m];
            let b = &other.data[k * n..(k + 4) * n];
            let (b0, b1) = b.split_at(n);
            let (b1, b2) = b1.split_at(n);
            let (b2, b3) = b2.split_at(n);
            for i in 0..m {
                let (v0, v1) = (a[i], a[m + i]);
                let (v2, v3) = (a[2 * m + i], a[3 * m + i]);
                let crow = &mut out[i * n..(i + 1) * n];
                for j in 0..n {
                    let mut c = crow[j];
                    c = b0[j].mul_add(v0, c);
                    c = b1[j].mul_add(v1, c);
                    c = b2[j].mul_add(v2, c);
                    c = b3[j].mul_add(v3, c);
                    crow[j] = c;
                }
            }
            k += 4;
        }
        while k < ka {
            let arow = &self.data[k * m..(k + 1) * m];
            let brow = &other.data[k * n..(k + 1) * n];
            for (i, &aki) in arow.iter().enumerate() {
                let crow = &mut out[i * n..(i + 1) * n];
                for (c, &b) in crow.iter_mut().zip(brow) {
                    *c = b.mul_add(aki, *c);
                }
            }
            k += 1;
        }
        Tensor::new(vec![m, n], out)
    }

    /// Adds a rank-1 bias to every row of a rank-2 tensor, in place.
    pub fn add_bias_rows(&mut self, bias: &Tensor) -> Result<()> {
        let (_, n) = self.dims2("add_bias_rows")?;
        if bias.rank() != 1 || bias.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "bias length {} vs row width {n}",
                bias.len()
            )));
        }
        for row in self.data.chunks_exact_mut(n) {
            for (r, &b) in row.iter_mut().zip(&bias.data) {
                *r += b;
            }
        }
        Ok(())
    }

    /// Column sums of a rank-2 tensor.
    pub fn column_sums(&self) -> Result<Tensor> {
        let (_, n) = self.dims2("column_sums")?;
        let mut out = vec![0.0; n];
        for row in self.data.chunks_exact(n) {
            for (o, &v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        Tensor::new(vec![n], out)
    }

    /// Copies the given rows of a rank-2 tensor into a new rank-2 tensor.
    pub fn gather_rows(&self, indices: &[usize]) -> Result<Tensor> {
        let (m, n) = self.dims2("gather_rows")?;
        let mut out = Vec::with_capacity(indices.len() * n);
        for &i in indices {
            if i >= m {
                return Err(Error::ShapeMismatch(format!("row {i} out of {m}")));
            }
            out.extend_from_slice(&self.data[i * n..(i + 1) * n]);
        }
        Tensor::new(vec![indices.len(), n], out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngState;

    fn random_matrix(rows: usize, cols: usize, rng: &mut RngState) -> Tensor {
        let data = (0..rows * cols).map(|_| rng.next_gaussian()).collect();
        Tensor::new(vec![rows, cols], data).unwrap()
    }

    #[test]
    fn constructor_rejects_bad_shapes() {
        assert!(Tensor::new(vec![], vec![]).is_err());
        assert!(Tensor::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::new(vec![2, 0], vec![]).is_err());
        assert!(Tensor::new(vec![1, 1, 1, 1, 1], vec![0.0]).is_err());
    }

    #[test]
    fn matmul_identity_returns_operand() {
        let a = Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let i2 = Tensor::identity(2);
        assert_eq!(i2.matmul(&a).unwrap(), a);
    }

    #[test]
    fn matmul_hand_example() {
        // [[1,2],[3,4]] x [[1],[1]] = [[3],[7]]
        let a = Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Tensor::new(vec![2, 1], vec![1.0, 1.0]).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.shape(), &[2, 1]);
        assert_eq!(c.data(), &[3.0, 7.0]);
    }

    #[test]
    fn matmul_rejects_mismatched_inner_extents() {
        let a = Tensor::zeros(vec![2, 3]).unwrap();
        let b = Tensor::zeros(vec![4, 2]).unwrap();
        assert!(matches!(a.matmul(&b), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn matmul_is_associative_within_tolerance() {
        let mut rng = RngState::new(5);
        for _ in 0..20 {
            let a = random_matrix(4, 6, &mut rng);
            let b = random_matrix(6, 3, &mut rng);
            let c = random_matrix(3, 5, &mut rng);
            let left = a.matmul(&b).unwrap().matmul(&c).unwrap();
            let right = a.matmul(&b.matmul(&c).unwrap()).unwrap();
            assert!(left.max_abs_diff(&right).unwrap() < 1e-9);
        }
    }

    #[test]
    fn matmul_variants_agree_with_plain_matmul() {
        let mut rng = RngState::new(17);
        let a = random_matrix(7, 5, &mut rng);
        let b = random_matrix(4, 5, &mut rng);
        let nt = a.matmul_nt(&b).unwrap();
        let reference = a.matmul(&b.transposed().unwrap()).unwrap();
        assert_eq!(nt, reference);

        let c = random_matrix(5, 7, &mut rng);
        let d = random_matrix(5, 3, &mut rng);
        let tn = c.matmul_tn(&d).unwrap();
        let reference = c.transposed().unwrap().matmul(&d).unwrap();
        assert!(tn.max_abs_diff(&reference).unwrap() < 1e-12);
    }

    #[test]
    fn elemwise_mul_examples() {
        let a = Tensor::from_vec(vec![1.0, 2.0, 3.0]);
        let ones = Tensor::filled(vec![3], 1.0).unwrap();
        let zeros = Tensor::zeros(vec![3]).unwrap();
        assert_eq!(a.elemwise_mul(&ones).unwrap(), a);
        assert_eq!(a.elemwise_mul(&zeros).unwrap(), zeros);

        let b = Tensor::from_vec(vec![2.0, 0.5, -1.0]);
        assert_eq!(a.elemwise_mul(&b).unwrap().data(), &[2.0, 1.0, -3.0]);

        let short = Tensor::from_vec(vec![1.0, 2.0]);
        assert!(a.elemwise_mul(&short).is_err());
    }

    #[test]
    fn finite_check_detects_nan_and_inf() {
        let t = Tensor::from_vec(vec![1.0, f64::NAN]);
        assert!(t.check_finite("test").is_err());
        let t = Tensor::from_vec(vec![f64::INFINITY]);
        assert!(t.check_finite("test").is_err());
        let t = Tensor::from_vec(vec![1.0, -2.0]);
        assert!(t.check_finite("test").is_ok());
    }

    #[test]
    fn transpose_roundtrip() {
        let mut rng = RngState::new(2);
        let a = random_matrix(3, 8, &mut rng);
        assert_eq!(a.transposed().unwrap().transposed().unwrap(), a);
    }

    #[test]
    fn gather_rows_copies_requested_rows() {
        let a = Tensor::new(vec![3, 2], vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        let g = a.gather_rows(&[2, 0]).unwrap();
        assert_eq!(g.data(), &[4.0, 5.0, 0.0, 1.0]);
        assert!(a.gather_rows(&[3]).is_err());
    }
}
