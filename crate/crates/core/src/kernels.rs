//! Scalar input kernels, the output-structure matrix `B` of a separable
//! kernel `K = k·B`, and kernel-matrix assembly.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dictionary::Dictionary;
use crate::error::{KplError, Result};
use crate::functional::InputPoint;
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum ScalarKernel {
    /// `exp(-‖x - x'‖² / σ²)`
    Gaussian { sigma: f64 },
    /// `exp(-‖x - x'‖ / σ)`
    Laplace { sigma: f64 },
    /// `(1/m) Σ_p exp(-‖x_p - x'_p‖² / σ²)` over the shared rows of matrix inputs.
    IntegralGaussian { sigma: f64 },
}

impl ScalarKernel {
    pub fn sigma(&self) -> f64 {
        match *self {
            ScalarKernel::Gaussian { sigma }
            | ScalarKernel::Laplace { sigma }
            | ScalarKernel::IntegralGaussian { sigma } => sigma,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.sigma();
        if !(s > 0.0) || !s.is_finite() {
            return Err(KplError::invalid(format!("kernel bandwidth must be positive, got {s}")));
        }
        Ok(())
    }

    pub fn eval(&self, x0: &InputPoint, x1: &InputPoint) -> Result<f64> {
        match *self {
            ScalarKernel::Gaussian { sigma } => Ok((-x0.sq_distance(x1)? / (sigma * sigma)).exp()),
            ScalarKernel::Laplace { sigma } => Ok((-x0.sq_distance(x1)?.sqrt() / sigma).exp()),
            ScalarKernel::IntegralGaussian { sigma } => {
                let (a, b) = match (x0, x1) {
                    (InputPoint::Matrix(a), InputPoint::Matrix(b)) => (a, b),
                    _ => {
                        return Err(KplError::invalid(
                            "integral kernel requires matrix-valued inputs",
                        ))
                    }
                };
                if a.shape() != b.shape() {
                    return Err(KplError::invalid(format!(
                        "matrix inputs differ in shape: {:?} vs {:?}",
                        a.shape(),
                        b.shape()
                    )));
                }
                let s2 = sigma * sigma;
                let m = a.nrows();
                let total: f64 = (0..m)
                    .map(|p| {
                        let d2: f64 = (0..a.ncols())
                            .map(|c| (a[(p, c)] - b[(p, c)]).powi(2))
                            .sum();
                        (-d2 / s2).exp()
                    })
                    .sum();
                Ok(total / m as f64)
            }
        }
    }
}

/// `k(x0, x1)` for a scalar kernel.
pub fn eval_kernel(k: &ScalarKernel, x0: &InputPoint, x1: &InputPoint) -> Result<f64> {
    k.eval(x0, x1)
}

/// Symmetric Gram matrix `(k(x_i, x_j))_{i,j}` of the inputs.
pub fn kernel_matrix(k: &ScalarKernel, inputs: &[InputPoint]) -> Result<DMatrix<f64>> {
    if inputs.is_empty() {
        return Err(KplError::invalid("kernel matrix of an empty input list"));
    }
    k.validate()?;
    let first = &inputs[0];
    if let Some(bad) = inputs.iter().position(|x| !x.same_shape(first)) {
        return Err(KplError::invalid(format!("input {bad} has a different shape")));
    }
    let n = inputs.len();
    // upper triangle row by row, in parallel over rows
    let rows: Vec<Result<Vec<f64>>> = par::map_range(n, |i| {
        (i..n).map(|j| k.eval(&inputs[i], &inputs[j])).collect()
    });
    let mut km = DMatrix::<f64>::zeros(n, n);
    for (i, row) in rows.into_iter().enumerate() {
        for (offset, v) in row?.into_iter().enumerate() {
            let j = i + offset;
            km[(i, j)] = v;
            km[(j, i)] = v;
        }
    }
    Ok(km)
}

/// Column vector `(k(x, x_i))_i` against the training inputs.
pub fn kernel_column(k: &ScalarKernel, inputs: &[InputPoint], x: &InputPoint) -> Result<Vec<f64>> {
    inputs.iter().map(|xi| k.eval(x, xi)).collect()
}

/// Cross-kernel matrix `(k(x_a, x'_b))` between query rows and training columns.
pub fn cross_kernel_matrix(
    k: &ScalarKernel,
    queries: &[InputPoint],
    inputs: &[InputPoint],
) -> Result<DMatrix<f64>> {
    let rows: Vec<Result<Vec<f64>>> = par::map_slice(queries, |x| kernel_column(k, inputs, x));
    let mut out = DMatrix::<f64>::zeros(queries.len(), inputs.len());
    for (a, row) in rows.into_iter().enumerate() {
        for (b, v) in row?.into_iter().enumerate() {
            out[(a, b)] = v;
        }
    }
    Ok(out)
}

/// Which output-structure matrix to build.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum OutputStructure {
    Identity,
    /// `diag(b^{-j_l})` over atom scales `j_l`.
    DiagonalScale { b: f64 },
}

/// Build the `d × d` output-structure matrix `B` for a dictionary.
pub fn build_b(variant: &OutputStructure, dict: &Dictionary) -> Result<DMatrix<f64>> {
    let d = dict.dim();
    match *variant {
        OutputStructure::Identity => Ok(DMatrix::identity(d, d)),
        OutputStructure::DiagonalScale { b } => {
            if !(b >= 1.0) || !b.is_finite() {
                return Err(KplError::invalid(format!("scale weight base must be >= 1, got {b}")));
            }
            let scales = dict.scale_index().ok_or_else(|| {
                KplError::invalid("diagonal_scale requires a dictionary with per-atom scales")
            })?;
            Ok(scale_diagonal(b, scales))
        }
    }
}

pub(crate) fn scale_diagonal(b: f64, scales: &[u32]) -> DMatrix<f64> {
    let diag: Vec<f64> = scales.iter().map(|&j| b.powi(-(j as i32))).collect();
    DMatrix::from_diagonal(&nalgebra::DVector::from_vec(diag))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::SymmetricEigen;
    use proptest::prelude::*;

    fn v(x: &[f64]) -> InputPoint {
        InputPoint::vector(x.to_vec()).unwrap()
    }

    #[test]
    fn self_similarity_is_one() {
        let m = InputPoint::matrix(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0])).unwrap();
        for k in [
            ScalarKernel::Gaussian { sigma: 0.7 },
            ScalarKernel::Laplace { sigma: 0.7 },
        ] {
            assert_eq!(k.eval(&v(&[1.0, -2.0]), &v(&[1.0, -2.0])).unwrap(), 1.0);
            assert_eq!(k.eval(&m, &m).unwrap(), 1.0);
        }
        assert_eq!(ScalarKernel::IntegralGaussian { sigma: 0.7 }.eval(&m, &m).unwrap(), 1.0);
    }

    #[test]
    fn gaussian_definition() {
        let k = ScalarKernel::Gaussian { sigma: 1.0 };
        let val = k.eval(&v(&[0.0, 0.0]), &v(&[1.0, 0.0])).unwrap();
        assert!((val - (-1.0f64).exp()).abs() < 1e-15);
        assert!(k.eval(&v(&[0.0]), &v(&[0.0, 1.0])).is_err());
    }

    #[test]
    fn integral_kernel_constant_inputs() {
        let delta: f64 = 0.8;
        let a = InputPoint::matrix(DMatrix::from_element(5, 3, 0.0)).unwrap();
        let mut b = DMatrix::from_element(5, 3, 0.0);
        b.column_mut(0).fill(delta);
        let b = InputPoint::matrix(b).unwrap();
        let k = ScalarKernel::IntegralGaussian { sigma: 1.3 };
        let want = (-delta * delta / (1.3f64 * 1.3)).exp();
        assert!((k.eval(&a, &b).unwrap() - want).abs() < 1e-15);
        assert!(k.eval(&v(&[1.0]), &v(&[1.0])).is_err());
    }

    #[test]
    fn kernel_matrix_examples() {
        let k = ScalarKernel::Gaussian { sigma: 1.0 };
        assert_eq!(kernel_matrix(&k, &[v(&[3.0])]).unwrap(), DMatrix::from_element(1, 1, 1.0));
        assert!(kernel_matrix(&k, &[]).is_err());

        let pts = [v(&[0.0]), v(&[1.0]), v(&[0.0])];
        let km = kernel_matrix(&k, &pts).unwrap();
        assert_eq!(km.row(0), km.row(2));
        assert!(SymmetricEigen::new(km).eigenvalues.min().abs() < 1e-12);

        let sharp = ScalarKernel::Gaussian { sigma: 1e-3 };
        let pts: Vec<_> = (0..5).map(|i| v(&[i as f64])).collect();
        let km = kernel_matrix(&sharp, &pts).unwrap();
        assert!((km - DMatrix::identity(5, 5)).amax() < 1e-12);
    }

    #[test]
    fn build_b_examples() {
        let f = Dictionary::fourier(2).unwrap();
        assert_eq!(build_b(&OutputStructure::Identity, &f).unwrap(), DMatrix::identity(5, 5));
        assert!(build_b(&OutputStructure::DiagonalScale { b: 2.0 }, &f).is_err());

        let b = scale_diagonal(2.0, &[0, 1, 1, 2]);
        let want = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 0.5, 0.5, 0.25]));
        assert_eq!(b, want);
        let w = Dictionary::wavelet(2, 3).unwrap();
        let b1 = build_b(&OutputStructure::DiagonalScale { b: 1.0 }, &w).unwrap();
        assert_eq!(b1, DMatrix::identity(w.dim(), w.dim()));
    }

    proptest! {
        #[test]
        fn kernel_matrices_are_psd(
            pts in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 3), 1..12),
            sigma in 0.1f64..5.0,
            laplace in any::<bool>(),
        ) {
            let k = if laplace { ScalarKernel::Laplace { sigma } } else { ScalarKernel::Gaussian { sigma } };
            let inputs: Vec<_> = pts.iter().map(|p| v(p)).collect();
            let km = kernel_matrix(&k, &inputs).unwrap();
            prop_assert!((&km - km.transpose()).amax() == 0.0);
            for i in 0..km.nrows() { prop_assert_eq!(km[(i, i)], 1.0); }
            let eig = SymmetricEigen::new(km).eigenvalues;
            prop_assert!(eig.min() >= -1e-8 * eig.max());
        }

        #[test]
        fn gaussian_scale_covariance(
            a in prop::collection::vec(-2.0f64..2.0, 4),
            b in prop::collection::vec(-2.0f64..2.0, 4),
            c in 0.1f64..10.0,
            sigma in 0.2f64..4.0,
        ) {
            let scaled = ScalarKernel::Gaussian { sigma }
                .eval(&v(&a.iter().map(|x| c * x).collect::<Vec<_>>()), &v(&b.iter().map(|x| c * x).collect::<Vec<_>>()))
                .unwrap();
            let plain = ScalarKernel::Gaussian { sigma: sigma / c }.eval(&v(&a), &v(&b)).unwrap();
            prop_assert!((scaled - plain).abs() < 1e-12);
        }

        #[test]
        fn integral_kernel_row_permutation(
            vals in prop::collection::vec(-2.0f64..2.0, 12),
            shift in 0usize..4,
        ) {
            let a = DMatrix::from_row_slice(4, 3, &vals);
            let b = DMatrix::from_fn(4, 3, |r, c| vals[(r * 3 + c + 5) % 12]);
            let perm = |m: &DMatrix<f64>| DMatrix::from_fn(4, 3, |r, c| m[((r + shift) % 4, c)]);
            let k = ScalarKernel::IntegralGaussian { sigma: 1.1 };
            let base = k.eval(&InputPoint::matrix(a.clone()).unwrap(), &InputPoint::matrix(b.clone()).unwrap()).unwrap();
            let p = k.eval(&InputPoint::matrix(perm(&a)).unwrap(), &InputPoint::matrix(perm(&b)).unwrap()).unwrap();
            prop_assert!((base - p).abs() < 1e-14);
        }
    }
}
