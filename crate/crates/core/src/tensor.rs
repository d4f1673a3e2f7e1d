//! Dense row-major f64 tensors and the reductions the rest of the crate is
//! built on.
//!
//! All reductions accumulate in a fixed ascending index order. There is no
//! tree or SIMD-reassociated summation anywhere in this module, which is what
//! makes whole pipelines bit-reproducible across runs and platforms.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TensorError {
    #[error("shape mismatch in {op}: left {left:?}, right {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("invalid shape {shape:?}: {reason}")]
    BadShape { shape: Vec<usize>, reason: String },
    #[error("expected {expected} data values for shape {shape:?}, got {got}")]
    DataLength {
        shape: Vec<usize>,
        expected: usize,
        got: usize,
    },
    #[error("non-finite value at flat index {index}")]
    NonFinite { index: usize },
    #[error("reduction over an empty set")]
    EmptySet,
}

/// Dense n-dimensional array of f64, row-major (last index fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    /// Build a tensor from a flat row-major buffer, validating length,
    /// positive extents, and finiteness.
    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self, TensorError> {
        if shape.iter().any(|&e| e == 0) {
            return Err(TensorError::BadShape {
                shape: shape.to_vec(),
                reason: "zero extent".into(),
            });
        }
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(TensorError::DataLength {
                shape: shape.to_vec(),
                expected,
                got: data.len(),
            });
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(TensorError::NonFinite { index });
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    /// Internal constructor for values produced by crate arithmetic.
    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor { shape, data }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Tensor::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
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

    /// Reinterpret the buffer under a new shape with the same element count.
    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor, TensorError> {
        let expected: usize = shape.iter().product();
        if expected != self.data.len() || shape.iter().any(|&e| e == 0) {
            return Err(TensorError::ShapeMismatch {
                op: "reshape",
                left: self.shape.clone(),
                right: shape.to_vec(),
            });
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data: self.data.clone(),
        })
    }

    pub fn dims2(&self) -> Result<(usize, usize), TensorError> {
        match self.shape.as_slice() {
            &[r, c] => Ok((r, c)),
            _ => Err(TensorError::BadShape {
                shape: self.shape.clone(),
                reason: "expected a 2-d tensor".into(),
            }),
        }
    }

    /// Row `i` of a 2-d tensor.
    pub fn row(&self, i: usize) -> &[f64] {
        let (_, c) = (self.shape[0], self.shape[1]);
        &self.data[i * c..(i + 1) * c]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let c = self.shape[1];
        &mut self.data[i * c..(i + 1) * c]
    }
}

/// `c[i,j] = Σ_t a[i,t]·b[t,j]` with `t` accumulated in ascending order.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor, TensorError> {
    let (m, ka) = a.dims2()?;
    let (kb, n) = b.dims2()?;
    if ka != kb {
        return Err(TensorError::ShapeMismatch {
            op: "matmul",
            left: a.shape.clone(),
            right: b.shape.clone(),
        });
    }
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let a_row = &a.data[i * ka..(i + 1) * ka];
        let out_row = &mut out[i * n..(i + 1) * n];
        for (t, &a_it) in a_row.iter().enumerate() {
            let b_row = &b.data[t * n..(t + 1) * n];
            for (o, &b_tj) in out_row.iter_mut().zip(b_row) {
                *o += a_it * b_tj;
            }
        }
    }
    Ok(Tensor::from_parts(vec![m, n], out))
}

/// Copies the rows at `indices` (in order, repeats allowed) of a batch tensor
/// whose first axis indexes samples.
pub(crate) fn gather_rows(x: &Tensor, indices: &[usize]) -> Tensor {
    let sample: usize = x.shape()[1..].iter().product();
    let mut shape = x.shape().to_vec();
    shape[0] = indices.len();
    let mut data = Vec::with_capacity(indices.len() * sample);
    for &i in indices {
        data.extend_from_slice(&x.data[i * sample..(i + 1) * sample]);
    }
    Tensor::from_parts(shape, data)
}

/// Per-column mean and the total population variance of an `n×p` row matrix:
/// `var = (1/n) Σ_i ‖rows[i,·] − mean‖²` (divisor `n`).
pub fn reduce_mean_var(rows: &Tensor) -> Result<(Tensor, f64), TensorError> {
    let (n, p) = rows.dims2()?;
    if n == 0 {
        return Err(TensorError::EmptySet);
    }
    let mut mean = vec![0.0; p];
    for i in 0..n {
        for (m, &v) in mean.iter_mut().zip(rows.row(i)) {
            *m += v;
        }
    }
    let inv_n = 1.0 / n as f64;
    for m in mean.iter_mut() {
        *m *= inv_n;
    }
    let mut var = 0.0;
    for i in 0..n {
        let mut sq = 0.0;
        for (&v, &m) in rows.row(i).iter().zip(&mean) {
            let d = v - m;
            sq += d * d;
        }
        var += sq;
    }
    var *= inv_n;
    Ok((Tensor::from_parts(vec![p], mean), var))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;
    use proptest::prelude::*;

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1.0)
    }

    /// Independent matmul oracle: j-outer loop order with Neumaier-compensated
    /// accumulation, a different summation path from the implementation.
    fn matmul_oracle(a: &Tensor, b: &Tensor) -> Tensor {
        let (m, k) = a.dims2().unwrap();
        let (_, n) = b.dims2().unwrap();
        let mut out = vec![0.0; m * n];
        for j in 0..n {
            for i in 0..m {
                let mut sum = 0.0;
                let mut comp = 0.0;
                for t in 0..k {
                    let term = a.data()[i * k + t] * b.data()[t * n + j];
                    let s = sum + term;
                    comp += if sum.abs() >= term.abs() {
                        (sum - s) + term
                    } else {
                        (term - s) + sum
                    };
                    sum = s;
                }
                out[i * n + j] = sum + comp;
            }
        }
        Tensor::from_parts(vec![m, n], out)
    }

    #[test]
    fn matmul_identity_is_noop() {
        let mut rng = SeededRng::new(7);
        let m = rng.gaussian(&[3, 5]);
        let got = matmul(&Tensor::identity(3), &m).unwrap();
        assert_eq!(got, m);
    }

    #[test]
    fn matmul_hand_example() {
        let a = Tensor::from_vec(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Tensor::from_vec(&[2, 1], vec![0.0, 1.0]).unwrap();
        let c = matmul(&a, &b).unwrap();
        assert_eq!(c.data(), &[2.0, 4.0]);
    }

    #[test]
    fn matmul_matches_compensated_oracle() {
        let mut rng = SeededRng::new(42);
        let a = rng.gaussian(&[7, 5]);
        let b = rng.gaussian(&[5, 4]);
        let got = matmul(&a, &b).unwrap();
        let want = matmul_oracle(&a, &b);
        for (g, w) in got.data().iter().zip(want.data()) {
            assert!(rel_err(*g, *w) < 1e-12, "got {g}, want {w}");
        }
    }

    #[test]
    fn matmul_shape_error_carries_both_shapes() {
        let a = Tensor::zeros(&[2, 3]);
        let b = Tensor::zeros(&[4, 2]);
        match matmul(&a, &b) {
            Err(TensorError::ShapeMismatch { left, right, .. }) => {
                assert_eq!(left, vec![2, 3]);
                assert_eq!(right, vec![4, 2]);
            }
            other => panic!("expected shape error, got {other:?}"),
        }
    }

    #[test]
    fn mean_var_single_row_is_point_mass() {
        let v = Tensor::from_vec(&[1, 3], vec![1.0, -2.0, 0.5]).unwrap();
        let (mean, var) = reduce_mean_var(&v).unwrap();
        assert_eq!(mean.data(), &[1.0, -2.0, 0.5]);
        assert_eq!(var, 0.0);
    }

    #[test]
    fn mean_var_hand_example() {
        let rows = Tensor::from_vec(&[2, 1], vec![0.0, 2.0]).unwrap();
        let (mean, var) = reduce_mean_var(&rows).unwrap();
        assert_eq!(mean.data(), &[1.0]);
        assert_eq!(var, 1.0);
    }

    #[test]
    fn mean_var_empty_errors() {
        // Zero-row tensors cannot be constructed through from_vec; exercise
        // the reduction guard directly.
        let t = Tensor {
            shape: vec![0, 3],
            data: vec![],
        };
        assert_eq!(reduce_mean_var(&t).unwrap_err(), TensorError::EmptySet);
    }

    #[test]
    fn mean_var_matches_two_pass_oracle() {
        let mut rng = SeededRng::new(11);
        let rows = rng.gaussian(&[50, 6]);
        let (mean, var) = reduce_mean_var(&rows).unwrap();

        // Two-pass oracle with Neumaier compensation.
        let comp_sum = |it: &mut dyn Iterator<Item = f64>| {
            let (mut s, mut c) = (0.0, 0.0);
            for x in it {
                let t = s + x;
                c += if s.abs() >= x.abs() { (s - t) + x } else { (x - t) + s };
                s = t;
            }
            s + c
        };
        for j in 0..6 {
            let m = comp_sum(&mut (0..50).map(|i| rows.row(i)[j])) / 50.0;
            assert!(rel_err(mean.data()[j], m) < 1e-12);
        }
        let mean_v: Vec<f64> = mean.data().to_vec();
        let v = comp_sum(&mut (0..50).map(|i| {
            rows.row(i)
                .iter()
                .zip(&mean_v)
                .map(|(x, m)| (x - m) * (x - m))
                .sum::<f64>()
        })) / 50.0;
        assert!(rel_err(var, v) < 1e-12);
    }

    #[test]
    fn from_vec_rejects_non_finite() {
        let err = Tensor::from_vec(&[2], vec![1.0, f64::NAN]).unwrap_err();
        assert_eq!(err, TensorError::NonFinite { index: 1 });
    }

    proptest! {
        #[test]
        fn matmul_associative(seed in 0u64..1000) {
            let mut rng = SeededRng::new(seed);
            let scale = 10.0;
            let mut draw = |s: &[usize]| {
                let mut t = rng.gaussian(s);
                for v in t.data_mut() { *v *= scale; }
                t
            };
            let a = draw(&[4, 3]);
            let b = draw(&[3, 5]);
            let c = draw(&[5, 2]);
            let left = matmul(&matmul(&a, &b).unwrap(), &c).unwrap();
            let right = matmul(&a, &matmul(&b, &c).unwrap()).unwrap();
            for (l, r) in left.data().iter().zip(right.data()) {
                prop_assert!(rel_err(*l, *r) < 1e-9);
            }
        }

        #[test]
        fn mean_var_translation(seed in 0u64..1000, c in -100.0f64..100.0) {
            let mut rng = SeededRng::new(seed);
            let rows = rng.gaussian(&[12, 4]);
            let mut shifted = rows.clone();
            for v in shifted.data_mut() { *v += c; }
            let (m0, v0) = reduce_mean_var(&rows).unwrap();
            let (m1, v1) = reduce_mean_var(&shifted).unwrap();
            prop_assert!(rel_err(v0, v1) < 1e-12);
            for (a, b) in m0.data().iter().zip(m1.data()) {
                prop_assert!((a + c - b).abs() < 1e-12);
            }
        }
    }
}
