//! Closed-form ridge fitting of separable-kernel projection models.
//!
//! With `K_X` the input kernel matrix, `G` the dictionary Gram matrix and `B`
//! the output-structure matrix, the representer coefficients `α ∈ R^{d×n}`
//! solve the Stein equation
//!
//! ```text
//! G B α K_X + nλ α = ν
//! ```
//!
//! i.e. `(K_X ⊗ GB + nλ I) vec(α) = vec(ν)`. [`SpectralSolver`] diagonalizes
//! both factors once (`GB` through the symmetric similarity `B^½ G B^½`) so that
//! every λ costs two pairs of matrix products.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::dictionary::{adjoint_values, estimate_gram_per_sample, estimate_nu, gram, Dictionary};
use crate::error::{KplError, Result};
use crate::functional::{InputPoint, PartialSample, Quadrature, SampledFunction};
use crate::kernels::{build_b, kernel_column, kernel_matrix, OutputStructure, ScalarKernel};
use crate::par;

/// Largest `d·n` accepted by the dense per-sample-Gram solver.
pub const DENSE_LIMIT: usize = 5000;

/// Relative threshold below which kernel eigenvalues are treated as zero.
const EIGEN_CLAMP: f64 = 1e-12;

/// The pieces of `(K_X ⊗ GB + nλ I) vec(α) = vec(ν)`.
#[derive(Debug, Clone)]
pub struct StructuredSystem {
    pub kernel: DMatrix<f64>,
    pub gram: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub rhs: DMatrix<f64>,
    pub lambda: f64,
}

impl StructuredSystem {
    pub fn n(&self) -> usize {
        self.kernel.nrows()
    }

    pub fn d(&self) -> usize {
        self.gram.nrows()
    }

    pub fn n_lambda(&self) -> f64 {
        self.n() as f64 * self.lambda
    }

    /// `M = G·B`.
    pub fn m_matrix(&self) -> DMatrix<f64> {
        &self.gram * &self.b
    }

    /// `‖M α K_X + nλ α − ν‖_F / ‖ν‖_F` (absolute residual when `ν = 0`).
    pub fn relative_residual(&self, alpha: &DMatrix<f64>) -> f64 {
        let r = self.m_matrix() * alpha * &self.kernel + alpha * self.n_lambda() - &self.rhs;
        let scale = self.rhs.norm();
        if scale > 0.0 {
            r.norm() / scale
        } else {
            r.norm()
        }
    }
}

fn check_finite(name: &str, m: &DMatrix<f64>) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(KplError::invalid(format!("{name} has non-finite entries")))
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(KplError::invalid(format!("regularization must be positive, got {lambda}")))
    }
}

fn clamp_spectrum(vals: &mut DVector<f64>) {
    let top = vals.iter().cloned().fold(0.0f64, f64::max);
    let floor = EIGEN_CLAMP * top;
    vals.iter_mut().for_each(|v| {
        if *v < floor {
            *v = 0.0;
        }
    });
}

/// Joint eigenbasis of `K_X` and `GB`, reusable across regularization values.
#[derive(Debug, Clone)]
pub struct SpectralSolver {
    n: usize,
    kernel_values: DVector<f64>,
    kernel_vectors: DMatrix<f64>,
    m_values: DVector<f64>,
    /// `V = B^{-½} U`, right eigenvectors of `GB`.
    m_vectors: DMatrix<f64>,
    /// `V^{-1} = Uᵀ B^{½}`.
    m_vectors_inv: DMatrix<f64>,
}

impl SpectralSolver {
    pub fn new(kernel: &DMatrix<f64>, gram: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<Self> {
        let n = kernel.nrows();
        let d = gram.nrows();
        if kernel.ncols() != n || gram.ncols() != d || b.shape() != (d, d) || n == 0 || d == 0 {
            return Err(KplError::invalid(format!(
                "incompatible shapes: K {:?}, G {:?}, B {:?}",
                kernel.shape(),
                gram.shape(),
                b.shape()
            )));
        }
        check_finite("kernel matrix", kernel)?;
        check_finite("gram matrix", gram)?;
        check_finite("output matrix", b)?;

        let ke = SymmetricEigen::new(kernel.clone());
        let mut kernel_values = ke.eigenvalues;
        clamp_spectrum(&mut kernel_values);

        let be = SymmetricEigen::new(b.clone());
        if be.eigenvalues.iter().any(|&v| !(v > 0.0)) {
            return Err(KplError::invalid("output matrix B must be positive definite"));
        }
        let q = &be.eigenvectors;
        let sqrt_d = DMatrix::from_diagonal(&be.eigenvalues.map(f64::sqrt));
        let inv_sqrt_d = DMatrix::from_diagonal(&be.eigenvalues.map(|v| 1.0 / v.sqrt()));
        let b_half = q * sqrt_d * q.transpose();
        let b_inv_half = q * inv_sqrt_d * q.transpose();

        let s = &b_half * gram * &b_half;
        let se = SymmetricEigen::new((&s + s.transpose()) * 0.5);
        let mut m_values = se.eigenvalues;
        clamp_spectrum(&mut m_values);
        let u = se.eigenvectors;

        Ok(Self {
            n,
            kernel_values,
            kernel_vectors: ke.eigenvectors,
            m_values,
            m_vectors: &b_inv_half * &u,
            m_vectors_inv: u.transpose() * &b_half,
        })
    }

    /// Project the right-hand side into the joint eigenbasis.
    fn project(&self, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if rhs.nrows() != self.m_values.len() || rhs.ncols() != self.n {
            return Err(KplError::invalid(format!(
                "right-hand side is {:?}, expected ({}, {})",
                rhs.shape(),
                self.m_values.len(),
                self.n
            )));
        }
        check_finite("right-hand side", rhs)?;
        Ok(&self.m_vectors_inv * rhs * &self.kernel_vectors)
    }

    fn solve_projected(&self, projected: &DMatrix<f64>, lambda: f64) -> DMatrix<f64> {
        let c = self.n as f64 * lambda;
        let scaled = DMatrix::from_fn(projected.nrows(), projected.ncols(), |l, j| {
            projected[(l, j)] / (self.m_values[l] * self.kernel_values[j] + c)
        });
        &self.m_vectors * scaled * self.kernel_vectors.transpose()
    }

    pub fn solve(&self, rhs: &DMatrix<f64>, lambda: f64) -> Result<DMatrix<f64>> {
        check_lambda(lambda)?;
        let projected = self.project(rhs)?;
        Ok(self.solve_projected(&projected, lambda))
    }

    /// Solve for every λ, sharing the projection of the right-hand side.
    pub fn solve_many(&self, rhs: &DMatrix<f64>, lambdas: &[f64]) -> Result<Vec<DMatrix<f64>>> {
        if lambdas.is_empty() {
            return Err(KplError::invalid("empty regularization grid"));
        }
        for &l in lambdas {
            check_lambda(l)?;
        }
        let projected = self.project(rhs)?;
        Ok(par::map_slice(lambdas, |&l| self.solve_projected(&projected, l)))
    }
}

/// Solve `G B α K_X + nλ α = ν` through the joint eigendecomposition.
pub fn solve_stein(sys: &StructuredSystem) -> Result<DMatrix<f64>> {
    check_lambda(sys.lambda)?;
    SpectralSolver::new(&sys.kernel, &sys.gram, &sys.b)?.solve(&sys.rhs, sys.lambda)
}

/// Solve the same system for several λ after a single decomposition.
pub fn solve_multi_lambda(
    kernel: &DMatrix<f64>,
    gram: &DMatrix<f64>,
    b: &DMatrix<f64>,
    rhs: &DMatrix<f64>,
    lambdas: &[f64],
) -> Result<Vec<DMatrix<f64>>> {
    if lambdas.is_empty() {
        return Err(KplError::invalid("empty regularization grid"));
    }
    SpectralSolver::new(kernel, gram, b)?.solve_many(rhs, lambdas)
}

/// Assemble the dense `dn × dn` matrix whose `(i, j)` block is
/// `G_i K_ij B`, plus `nλ` on the diagonal. `vec(α)` stacks columns of α.
pub fn dense_system_matrix(
    kernel: &DMatrix<f64>,
    blocks: &[DMatrix<f64>],
    b: &DMatrix<f64>,
    n_lambda: f64,
) -> DMatrix<f64> {
    let n = kernel.nrows();
    let d = b.nrows();
    let gb: Vec<DMatrix<f64>> = blocks.iter().map(|g| g * b).collect();
    let mut a = DMatrix::<f64>::zeros(d * n, d * n);
    for i in 0..n {
        for j in 0..n {
            let kij = kernel[(i, j)];
            let mut view = a.view_mut((i * d, j * d), (d, d));
            view += &gb[i] * kij;
        }
    }
    for p in 0..d * n {
        a[(p, p)] += n_lambda;
    }
    a
}

/// Dense LU solve of `dense_system_matrix(...) vec(α) = vec(ν)`.
pub fn solve_dense(
    kernel: &DMatrix<f64>,
    blocks: &[DMatrix<f64>],
    b: &DMatrix<f64>,
    rhs: &DMatrix<f64>,
    lambda: f64,
) -> Result<DMatrix<f64>> {
    check_lambda(lambda)?;
    let n = kernel.nrows();
    let d = b.nrows();
    if blocks.len() != n || rhs.shape() != (d, n) {
        return Err(KplError::invalid("dense system shapes do not match"));
    }
    let a = dense_system_matrix(kernel, blocks, b, n as f64 * lambda);
    let v = DVector::from_column_slice(rhs.as_slice());
    let x = a
        .lu()
        .solve(&v)
        .ok_or_else(|| KplError::numeric("dense ridge system is singular"))?;
    Ok(DMatrix::from_column_slice(d, n, x.as_slice()))
}

/// Fitted projection model: predicts `Φ B α k_x(x)`.
#[derive(Debug, Clone)]
pub struct KplModel {
    pub alpha: DMatrix<f64>,
    pub training_inputs: Vec<InputPoint>,
    pub dictionary: Dictionary,
    pub kernel: ScalarKernel,
    pub structure: OutputStructure,
    pub b: DMatrix<f64>,
    pub lambda: f64,
}

impl KplModel {
    pub fn new(
        alpha: DMatrix<f64>,
        training_inputs: Vec<InputPoint>,
        dictionary: Dictionary,
        kernel: ScalarKernel,
        structure: OutputStructure,
        lambda: f64,
    ) -> Result<Self> {
        if alpha.shape() != (dictionary.dim(), training_inputs.len()) {
            return Err(KplError::invalid(format!(
                "coefficients are {:?}, expected ({}, {})",
                alpha.shape(),
                dictionary.dim(),
                training_inputs.len()
            )));
        }
        check_finite("coefficients", &alpha)?;
        let b = build_b(&structure, &dictionary)?;
        Ok(Self {
            alpha,
            training_inputs,
            dictionary,
            kernel,
            structure,
            b,
            lambda,
        })
    }

    pub fn n(&self) -> usize {
        self.training_inputs.len()
    }

    /// Dictionary coefficients `B α k_x(x)` of the prediction at `x`.
    pub fn coefficients(&self, x: &InputPoint) -> Result<DVector<f64>> {
        if let Some(first) = self.training_inputs.first() {
            if !first.same_shape(x) {
                return Err(KplError::invalid(format!(
                    "query shape {:?} does not match training shape {:?}",
                    x.shape(),
                    first.shape()
                )));
            }
        }
        let kx = DVector::from_vec(kernel_column(&self.kernel, &self.training_inputs, x)?);
        Ok(&self.b * (&self.alpha * kx))
    }

    pub fn predict(&self, x: &InputPoint, targets: &[f64]) -> Result<SampledFunction> {
        let u = self.coefficients(x)?;
        crate::dictionary::apply_phi(&self.dictionary, u.as_slice(), targets)
    }

    /// Predictions for several queries, each on its own target locations.
    pub fn predict_many(&self, xs: &[InputPoint], targets: &[&[f64]]) -> Result<Vec<SampledFunction>> {
        if xs.len() != targets.len() {
            return Err(KplError::invalid("one target grid per query is required"));
        }
        let idx: Vec<usize> = (0..xs.len()).collect();
        par::map_slice(&idx, |&i| self.predict(&xs[i], targets[i]))
            .into_iter()
            .collect()
    }
}

/// How the right-hand side and Gram blocks are estimated.
#[derive(Debug, Clone, Copy)]
pub enum RidgeEstimator<'a> {
    /// Outputs observed on the quadrature nodes.
    Full(&'a Quadrature),
    /// Monte-Carlo inner products, exact Gram under the quadrature.
    Plugin(&'a Quadrature),
    /// Per-sample estimated Gram blocks, dense solve.
    PerSampleGram,
}

#[derive(Debug, Clone)]
enum Assembled {
    Structured(StructuredSystem),
    Dense {
        kernel: DMatrix<f64>,
        blocks: Vec<DMatrix<f64>>,
        b: DMatrix<f64>,
        rhs: DMatrix<f64>,
        lambda: f64,
    },
}

/// An assembled ridge system: kernel matrix, Gram and right-hand side are
/// built, only the linear solve remains.
#[derive(Debug, Clone)]
pub struct PreparedRidge {
    system: Assembled,
    inputs: Vec<InputPoint>,
    dictionary: Dictionary,
    kernel: ScalarKernel,
    structure: OutputStructure,
}

impl PreparedRidge {
    pub fn new(
        sample: &PartialSample,
        dict: &Dictionary,
        kernel: &ScalarKernel,
        structure: &OutputStructure,
        estimator: RidgeEstimator<'_>,
        lambda: f64,
    ) -> Result<Self> {
        check_lambda(lambda)?;
        let system = match estimator {
            RidgeEstimator::Full(q) => {
                if !sample.on_grid(q.nodes()) {
                    return Err(KplError::invalid("outputs must be observed on the quadrature nodes"));
                }
                let mut rhs = DMatrix::<f64>::zeros(dict.dim(), sample.len());
                for (i, f) in sample.outputs().iter().enumerate() {
                    rhs.set_column(i, &DVector::from_vec(adjoint_values(dict, f.values(), q)));
                }
                Assembled::Structured(structured(sample, dict, kernel, structure, q, rhs, lambda)?)
            }
            RidgeEstimator::Plugin(q) => {
                let rhs = estimate_nu(dict, sample)?;
                Assembled::Structured(structured(sample, dict, kernel, structure, q, rhs, lambda)?)
            }
            RidgeEstimator::PerSampleGram => {
                let dn = dict.dim() * sample.len();
                if dn > DENSE_LIMIT {
                    return Err(KplError::Capacity(format!(
                        "dense solve of size {dn} exceeds the limit of {DENSE_LIMIT}"
                    )));
                }
                Assembled::Dense {
                    blocks: estimate_gram_per_sample(dict, sample)?,
                    rhs: estimate_nu(dict, sample)?,
                    kernel: kernel_matrix(kernel, sample.inputs())?,
                    b: build_b(structure, dict)?,
                    lambda,
                }
            }
        };
        Ok(Self {
            system,
            inputs: sample.inputs().to_vec(),
            dictionary: dict.clone(),
            kernel: *kernel,
            structure: *structure,
        })
    }

    pub fn solve(self) -> Result<KplModel> {
        let (alpha, lambda) = match &self.system {
            Assembled::Structured(sys) => (solve_stein(sys)?, sys.lambda),
            Assembled::Dense {
                kernel,
                blocks,
                b,
                rhs,
                lambda,
            } => (solve_dense(kernel, blocks, b, rhs, *lambda)?, *lambda),
        };
        KplModel::new(alpha, self.inputs, self.dictionary, self.kernel, self.structure, lambda)
    }
}

fn structured(
    sample: &PartialSample,
    dict: &Dictionary,
    kernel: &ScalarKernel,
    structure: &OutputStructure,
    q: &Quadrature,
    rhs: DMatrix<f64>,
    lambda: f64,
) -> Result<StructuredSystem> {
    Ok(StructuredSystem {
        kernel: kernel_matrix(kernel, sample.inputs())?,
        gram: gram(dict, q).matrix,
        b: build_b(structure, dict)?,
        rhs,
        lambda,
    })
}

/// Ridge fit with every output observed on the quadrature nodes.
pub fn fit_ridge_full(
    sample: &PartialSample,
    dict: &Dictionary,
    kernel: &ScalarKernel,
    structure: &OutputStructure,
    q: &Quadrature,
    lambda: f64,
) -> Result<KplModel> {
    PreparedRidge::new(sample, dict, kernel, structure, RidgeEstimator::Full(q), lambda)?.solve()
}

/// Plug-in ridge fit: Monte-Carlo inner products from each function's own
/// locations, exact Gram matrix under `gram_quadrature`.
pub fn fit_ridge_plugin(
    sample: &PartialSample,
    dict: &Dictionary,
    kernel: &ScalarKernel,
    structure: &OutputStructure,
    gram_quadrature: &Quadrature,
    lambda: f64,
) -> Result<KplModel> {
    PreparedRidge::new(sample, dict, kernel, structure, RidgeEstimator::Plugin(gram_quadrature), lambda)?.solve()
}

/// Ridge fit with per-sample estimated Gram blocks; the square-loss optimum
/// of the empirical risk on the observed points. Dense, `O((dn)³)`.
pub fn fit_ridge_persample_gram(
    sample: &PartialSample,
    dict: &Dictionary,
    kernel: &ScalarKernel,
    structure: &OutputStructure,
    lambda: f64,
) -> Result<KplModel> {
    PreparedRidge::new(sample, dict, kernel, structure, RidgeEstimator::PerSampleGram, lambda)?.solve()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functional::uniform_grid;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_psd(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, n + 2, |_, _| rng.random_range(-1.0..1.0));
        &a * a.transpose() / n as f64
    }

    fn random_system(n: usize, d: usize, lambda: f64, seed: u64) -> StructuredSystem {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let kernel = random_psd(n, &mut rng);
        let gram = random_psd(d, &mut rng);
        let diag: Vec<f64> = (0..d).map(|_| rng.random_range(0.2..1.0)).collect();
        let b = DMatrix::from_diagonal(&DVector::from_vec(diag));
        let rhs = DMatrix::from_fn(d, n, |_, _| rng.random_range(-1.0..1.0));
        StructuredSystem { kernel, gram, b, rhs, lambda }
    }

    fn dense_oracle(sys: &StructuredSystem) -> DMatrix<f64> {
        let blocks = vec![sys.gram.clone(); sys.n()];
        solve_dense(&sys.kernel, &blocks, &sys.b, &sys.rhs, sys.lambda).unwrap()
    }

    #[test]
    fn scalar_case() {
        let one = DMatrix::from_element(1, 1, 1.0);
        let lambda = 0.3;
        let sys = StructuredSystem {
            kernel: one.clone(),
            gram: one.clone(),
            b: one.clone(),
            rhs: DMatrix::from_element(1, 1, 2.5),
            lambda,
        };
        let a = solve_stein(&sys).unwrap();
        assert!((a[(0, 0)] - 2.5 / (1.0 + lambda)).abs() < 1e-15);
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let mut sys = random_system(6, 3, 0.1, 1);
        sys.rhs.fill(0.0);
        assert_eq!(solve_stein(&sys).unwrap().amax(), 0.0);
    }

    #[test]
    fn matches_dense_kronecker_solve() {
        let sys = random_system(20, 7, 1e-3, 7);
        let a = solve_stein(&sys).unwrap();
        let oracle = dense_oracle(&sys);
        assert!((&a - &oracle).norm() / oracle.norm() < 1e-8);
        assert!(sys.relative_residual(&a) < 1e-8);
    }

    #[test]
    fn rejects_bad_inputs() {
        let mut sys = random_system(4, 2, 0.0, 2);
        assert!(solve_stein(&sys).is_err());
        sys.lambda = 0.1;
        sys.rhs[(0, 0)] = f64::NAN;
        assert!(matches!(solve_stein(&sys), Err(KplError::InvalidArgument(_))));
    }

    #[test]
    fn multi_lambda_examples() {
        let sys = random_system(20, 7, 1.0, 3);
        assert!(solve_multi_lambda(&sys.kernel, &sys.gram, &sys.b, &sys.rhs, &[]).is_err());
        let single = solve_multi_lambda(&sys.kernel, &sys.gram, &sys.b, &sys.rhs, &[0.05]).unwrap();
        let fresh = solve_stein(&StructuredSystem { lambda: 0.05, ..sys.clone() }).unwrap();
        assert!((&single[0] - &fresh).amax() < 1e-14);

        let huge = solve_multi_lambda(&sys.kernel, &sys.gram, &sys.b, &sys.rhs, &[1e12]).unwrap();
        assert!(huge[0].norm() < 1e-9);

        let grid: Vec<f64> = (0..20).map(|k| 10f64.powf(-6.0 + 0.3 * k as f64)).collect();
        let many = solve_multi_lambda(&sys.kernel, &sys.gram, &sys.b, &sys.rhs, &grid).unwrap();
        let mut prev = f64::INFINITY;
        for (a, &l) in many.iter().zip(&grid) {
            let fresh = solve_stein(&StructuredSystem { lambda: l, ..sys.clone() }).unwrap();
            assert!((a - &fresh).norm() <= 1e-10 * fresh.norm().max(1.0));
            // monotone shrinkage
            assert!(a.norm() <= prev * (1.0 + 1e-12));
            prev = a.norm();
        }
    }

    fn toy_sample(n: usize, grid: &[f64], seed: u64) -> PartialSample {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut inputs = Vec::new();
        let mut outputs = Vec::new();
        for _ in 0..n {
            let a: f64 = rng.random_range(-1.0..1.0);
            let c: f64 = rng.random_range(-1.0..1.0);
            inputs.push(InputPoint::vector(vec![a, c]).unwrap());
            outputs.push(
                SampledFunction::from_fn(grid, |t| {
                    a * (2.0 * std::f64::consts::PI * t).cos() + c * c + 0.3 * a * c
                })
                .unwrap(),
            );
        }
        PartialSample::new(inputs, outputs).unwrap()
    }

    #[test]
    fn zero_outputs_give_zero_model() {
        let q = Quadrature::uniform(64).unwrap();
        let s = toy_sample(5, q.nodes(), 1);
        let zeros: Vec<_> = s.outputs().iter().map(|f| f.with_values(vec![0.0; f.len()]).unwrap()).collect();
        let s = s.with_outputs(zeros).unwrap();
        let m = fit_ridge_full(
            &s,
            &Dictionary::fourier(2).unwrap(),
            &ScalarKernel::Gaussian { sigma: 1.0 },
            &OutputStructure::Identity,
            &q,
            0.1,
        )
        .unwrap();
        assert_eq!(m.alpha.amax(), 0.0);
        let p = m.predict(&s.inputs()[0], &[0.1, 0.5]).unwrap();
        assert!(p.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn interpolation_limit() {
        let q = Quadrature::uniform(128).unwrap();
        let s = toy_sample(8, q.nodes(), 5);
        let dict = Dictionary::fourier(1).unwrap();
        let m = fit_ridge_full(&s, &dict, &ScalarKernel::Gaussian { sigma: 1.0 }, &OutputStructure::Identity, &q, 1e-10).unwrap();
        let preds: Vec<_> = s.inputs().iter().map(|x| m.predict(x, q.nodes()).unwrap()).collect();
        let err = crate::functional::mse(&preds, s.outputs()).unwrap();
        assert!(err < 1e-6, "training mse {err}");
    }

    #[test]
    fn one_basis_reduction() {
        let q = Quadrature::uniform(200).unwrap();
        let s = toy_sample(12, q.nodes(), 9);
        let dict = Dictionary::fourier(3).unwrap();
        let k = ScalarKernel::Gaussian { sigma: 0.8 };
        let lambda = 1e-3;
        let m = fit_ridge_plugin(&s, &dict, &k, &OutputStructure::Identity, &q, lambda).unwrap();
        let km = kernel_matrix(&k, s.inputs()).unwrap();
        let nu = estimate_nu(&dict, &s).unwrap();
        // the trapezoid gram of low Fourier modes is the identity to round-off
        let reg = &km + DMatrix::identity(12, 12) * (12.0 * lambda);
        let lu = reg.lu();
        for l in 0..dict.dim() {
            let row = lu.solve(&nu.row(l).transpose()).unwrap();
            let diff = (m.alpha.row(l).transpose() - row).amax();
            assert!(diff < 1e-10, "row {l}: {diff}");
        }
    }

    #[test]
    fn plugin_on_grid_equals_full_with_mean_weights() {
        let grid = uniform_grid(50);
        let s = toy_sample(6, &grid, 2);
        let dict = Dictionary::fourier(2).unwrap();
        let k = ScalarKernel::Laplace { sigma: 1.0 };
        let q = Quadrature::mean(&grid).unwrap();
        let a = fit_ridge_plugin(&s, &dict, &k, &OutputStructure::Identity, &q, 0.01).unwrap();
        let b = fit_ridge_full(&s, &dict, &k, &OutputStructure::Identity, &q, 0.01).unwrap();
        assert!((&a.alpha - &b.alpha).amax() < 1e-13);
        // and the per-sample gram variant agrees when blocks equal the exact gram
        let c = fit_ridge_persample_gram(&s, &dict, &k, &OutputStructure::Identity, 0.01).unwrap();
        assert!((&a.alpha - &c.alpha).amax() < 1e-10);
    }

    #[test]
    fn persample_scalar_case_and_guard() {
        let atom = Dictionary::from_grid(vec![0.0, 1.0], DMatrix::from_element(2, 1, 1.0), crate::dictionary::Family::Tabulated).unwrap();
        let s = PartialSample::new(
            vec![InputPoint::vector(vec![0.0]).unwrap()],
            vec![SampledFunction::new(vec![0.42], vec![1.7]).unwrap()],
        )
        .unwrap();
        let m = fit_ridge_persample_gram(&s, &atom, &ScalarKernel::Gaussian { sigma: 1.0 }, &OutputStructure::Identity, 0.25).unwrap();
        assert!((m.alpha[(0, 0)] - 1.7 / 1.25).abs() < 1e-14);

        let big = toy_sample(200, &uniform_grid(5), 1);
        let err = fit_ridge_persample_gram(&big, &Dictionary::fourier(15).unwrap(), &ScalarKernel::Gaussian { sigma: 1.0 }, &OutputStructure::Identity, 0.1);
        assert!(matches!(err, Err(KplError::Capacity(_))));
    }

    #[test]
    fn duplicate_pairs_share_coefficients() {
        let grid = uniform_grid(30);
        let s = toy_sample(5, &grid, 4);
        let idx = [0, 1, 2, 3, 4, 2];
        let s = s.subset(&idx).unwrap();
        let dict = Dictionary::fourier(2).unwrap();
        let q = Quadrature::uniform(200).unwrap();
        let m = fit_ridge_plugin(&s, &dict, &ScalarKernel::Gaussian { sigma: 1.0 }, &OutputStructure::Identity, &q, 1e-3).unwrap();
        assert!((m.alpha.column(2) - m.alpha.column(5)).amax() < 1e-10);
    }

    #[test]
    fn predictions() {
        let dict = Dictionary::fourier(2).unwrap();
        let x = InputPoint::vector(vec![0.5, 0.5]).unwrap();
        let mut alpha = DMatrix::zeros(5, 1);
        let k = ScalarKernel::Gaussian { sigma: 0.1 };
        let zero = KplModel::new(alpha.clone(), vec![x.clone()], dict.clone(), k, OutputStructure::Identity, 1.0).unwrap();
        assert!(zero.predict(&x, &[0.2]).unwrap().values()[0] == 0.0);

        alpha[(0, 0)] = 1.0;
        let m = KplModel::new(alpha, vec![x.clone()], dict, k, OutputStructure::Identity, 1.0).unwrap();
        let p = m.predict(&x, &uniform_grid(7)).unwrap();
        assert!(p.values().iter().all(|&v| (v - 1.0).abs() < 1e-15));

        let far = InputPoint::vector(vec![50.0, -50.0]).unwrap();
        assert!(m.predict(&far, &uniform_grid(7)).unwrap().values().iter().all(|v| v.abs() < 1e-8));
        assert!(m.predict(&InputPoint::vector(vec![1.0]).unwrap(), &[0.1]).is_err());
    }

    #[test]
    fn permutation_equivariance() {
        let grid = uniform_grid(40);
        let s = toy_sample(7, &grid, 11);
        let perm = [3, 0, 6, 1, 5, 2, 4];
        let sp = s.subset(&perm).unwrap();
        let dict = Dictionary::fourier(2).unwrap();
        let k = ScalarKernel::Gaussian { sigma: 1.0 };
        let q = Quadrature::uniform(300).unwrap();
        let a = fit_ridge_plugin(&s, &dict, &k, &OutputStructure::Identity, &q, 1e-2).unwrap();
        let b = fit_ridge_plugin(&sp, &dict, &k, &OutputStructure::Identity, &q, 1e-2).unwrap();
        for (new, &old) in perm.iter().enumerate() {
            assert!((a.alpha.column(old) - b.alpha.column(new)).amax() < 1e-10);
        }
        let x = InputPoint::vector(vec![0.1, -0.3]).unwrap();
        let pa = a.predict(&x, &grid).unwrap();
        let pb = b.predict(&x, &grid).unwrap();
        for (u, v) in pa.values().iter().zip(pb.values()) {
            assert!((u - v).abs() < 1e-10);
        }
    }

    #[test]
    fn full_fit_minimizes_objective() {
        let q = Quadrature::uniform(64).unwrap();
        let s = toy_sample(6, q.nodes(), 21);
        let dict = Dictionary::fourier(2).unwrap();
        let k = ScalarKernel::Gaussian { sigma: 1.0 };
        let lambda = 1e-2;
        let m = fit_ridge_full(&s, &dict, &k, &OutputStructure::Identity, &q, lambda).unwrap();
        let km = kernel_matrix(&k, s.inputs()).unwrap();
        let objective = |alpha: &DMatrix<f64>| {
            let coef = alpha * &km;
            let mut loss = 0.0;
            for (i, f) in s.outputs().iter().enumerate() {
                let pred = crate::dictionary::apply_phi(&dict, coef.column(i).as_slice(), q.nodes()).unwrap();
                let r: Vec<f64> = pred.values().iter().zip(f.values()).map(|(a, b)| a - b).collect();
                loss += q.sq_norm(&r);
            }
            loss / s.len() as f64 + lambda * (alpha.transpose() * alpha * &km).trace()
        };
        let base = objective(&m.alpha);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let scale = 1e-3 * m.alpha.norm();
        for _ in 0..10 {
            let mut dir = DMatrix::from_fn(5, 6, |_, _| rng.random_range(-1.0..1.0));
            dir /= dir.norm();
            assert!(objective(&(&m.alpha + dir * scale)) > base);
        }
    }
}
