//! First-order fitting of projection models under integral losses.
//!
//! For a ground loss `l`, the objective over representer coefficients is
//!
//! ```text
//! (1/n) Σ_i Σ_p w_ip l(y_ip, φ(θ_ip)ᵀ B α k_x(x_i)) + λ tr(K_X αᵀ B α)
//! ```
//!
//! with quadrature weights `w_ip` on a shared grid (full observation) or
//! `1/m_i` on each function's own locations (partial observation).

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dictionary::Dictionary;
use crate::error::{KplError, Result};
use crate::functional::{PartialSample, Quadrature};
use crate::kernels::{build_b, kernel_matrix, OutputStructure, ScalarKernel};
use crate::lbfgs::{self, LbfgsOptions, Status};
use crate::par;
use crate::ridge::KplModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GroundLoss {
    /// `(a - b)²`
    Square,
    /// `(1/γ) log cosh(γ (a - b))`
    Logcosh { gamma: f64 },
}

impl GroundLoss {
    pub fn validate(&self) -> Result<()> {
        match *self {
            GroundLoss::Square => Ok(()),
            GroundLoss::Logcosh { gamma } if gamma > 0.0 && gamma.is_finite() => Ok(()),
            GroundLoss::Logcosh { gamma } => Err(KplError::invalid(format!(
                "logcosh parameter must be positive, got {gamma}"
            ))),
        }
    }

    pub fn value(&self, a: f64, b: f64) -> f64 {
        match *self {
            GroundLoss::Square => (a - b) * (a - b),
            GroundLoss::Logcosh { gamma } => {
                let z = (gamma * (a - b)).abs();
                (z + (-2.0 * z).exp().ln_1p() - std::f64::consts::LN_2) / gamma
            }
        }
    }

    /// `∂l/∂b`.
    pub fn deriv_second(&self, a: f64, b: f64) -> f64 {
        match *self {
            GroundLoss::Square => 2.0 * (b - a),
            GroundLoss::Logcosh { gamma } => (gamma * (b - a)).tanh(),
        }
    }
}

/// One output function as seen by the objective.
#[derive(Debug, Clone)]
struct Observed {
    design: DMatrix<f64>,
    targets: Vec<f64>,
    weights: Vec<f64>,
}

/// Objective and gradient over `α ∈ R^{d×n}` for a fixed data view.
#[derive(Debug, Clone)]
pub struct Objective {
    kernel: DMatrix<f64>,
    b: DMatrix<f64>,
    lambda: f64,
    loss: GroundLoss,
    observed: Vec<Observed>,
    d: usize,
}

impl Objective {
    /// Full observation: every output sampled on the quadrature nodes.
    pub fn full(
        sample: &PartialSample,
        dict: &Dictionary,
        kernel: &ScalarKernel,
        structure: &OutputStructure,
        q: &Quadrature,
        lambda: f64,
        loss: GroundLoss,
    ) -> Result<Self> {
        if !sample.on_grid(q.nodes()) {
            return Err(KplError::invalid("outputs must be observed on the quadrature nodes"));
        }
        let design = dict.design(q.nodes());
        let observed = sample
            .outputs()
            .iter()
            .map(|f| Observed {
                design: design.clone(),
                targets: f.values().to_vec(),
                weights: q.weights().to_vec(),
            })
            .collect();
        Self::assemble(sample, dict, kernel, structure, lambda, loss, observed)
    }

    /// Partial observation: each output averaged over its own locations.
    pub fn partial(
        sample: &PartialSample,
        dict: &Dictionary,
        kernel: &ScalarKernel,
        structure: &OutputStructure,
        lambda: f64,
        loss: GroundLoss,
    ) -> Result<Self> {
        let observed = sample
            .outputs()
            .iter()
            .enumerate()
            .map(|(i, f)| {
                if f.is_empty() {
                    return Err(KplError::invalid(format!("output function {i} has no observations")));
                }
                Ok(Observed {
                    design: dict.design(f.locations()),
                    targets: f.values().to_vec(),
                    weights: vec![1.0 / f.len() as f64; f.len()],
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::assemble(sample, dict, kernel, structure, lambda, loss, observed)
    }

    fn assemble(
        sample: &PartialSample,
        dict: &Dictionary,
        kernel: &ScalarKernel,
        structure: &OutputStructure,
        lambda: f64,
        loss: GroundLoss,
        observed: Vec<Observed>,
    ) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(KplError::invalid(format!("regularization must be positive, got {lambda}")));
        }
        loss.validate()?;
        Ok(Self {
            kernel: kernel_matrix(kernel, sample.inputs())?,
            b: build_b(structure, dict)?,
            lambda,
            loss,
            observed,
            d: dict.dim(),
        })
    }

    pub fn n(&self) -> usize {
        self.observed.len()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    fn check(&self, alpha: &DMatrix<f64>) -> Result<()> {
        if alpha.shape() != (self.d, self.n()) {
            return Err(KplError::invalid(format!(
                "coefficients are {:?}, expected ({}, {})",
                alpha.shape(),
                self.d,
                self.n()
            )));
        }
        if alpha.iter().any(|v| !v.is_finite()) {
            return Err(KplError::invalid("coefficients have non-finite entries"));
        }
        Ok(())
    }

    /// Per-function data term and the columns of `Φ# G(α)`.
    fn loss_terms(&self, coef: &DMatrix<f64>, with_grad: bool) -> Vec<(f64, Vec<f64>)> {
        par::map_range(self.n(), |i| {
            let obs = &self.observed[i];
            let pred = &obs.design * coef.column(i);
            let mut value = 0.0;
            let mut scaled = vec![0.0; obs.targets.len()];
            for p in 0..obs.targets.len() {
                value += obs.weights[p] * self.loss.value(obs.targets[p], pred[p]);
                if with_grad {
                    scaled[p] = obs.weights[p] * self.loss.deriv_second(obs.targets[p], pred[p]);
                }
            }
            let column = if with_grad {
                (obs.design.transpose() * nalgebra::DVector::from_vec(scaled))
                    .iter()
                    .copied()
                    .collect()
            } else {
                Vec::new()
            };
            (value, column)
        })
    }

    /// Objective value at `alpha`.
    pub fn value(&self, alpha: &DMatrix<f64>) -> Result<f64> {
        self.check(alpha)?;
        let ak = alpha * &self.kernel;
        let coef = &self.b * &ak;
        let data: f64 = self.loss_terms(&coef, false).iter().map(|t| t.0).sum();
        let penalty = (&self.b * alpha).component_mul(&ak).sum();
        Ok(data / self.n() as f64 + self.lambda * penalty)
    }

    /// Objective value and gradient at `alpha`.
    pub fn value_and_gradient(&self, alpha: &DMatrix<f64>) -> Result<(f64, DMatrix<f64>)> {
        self.check(alpha)?;
        let ak = alpha * &self.kernel;
        let coef = &self.b * &ak;
        let terms = self.loss_terms(&coef, true);
        let n = self.n();
        let mut adj = DMatrix::<f64>::zeros(self.d, n);
        let mut data = 0.0;
        for (i, (v, col)) in terms.into_iter().enumerate() {
            data += v;
            for (l, c) in col.into_iter().enumerate() {
                adj[(l, i)] = c;
            }
        }
        let b_alpha_k = &self.b * &ak;
        let value = data / n as f64 + self.lambda * (&self.b * alpha).component_mul(&ak).sum();
        let grad = &self.b * adj * &self.kernel / n as f64 + b_alpha_k * (2.0 * self.lambda);
        if let Some(pos) = grad.iter().position(|g| !g.is_finite()) {
            return Err(KplError::numeric(format!(
                "non-finite gradient entry {pos} (objective {value}, max |alpha| {})",
                alpha.amax()
            )));
        }
        Ok((value, grad))
    }

    pub fn gradient(&self, alpha: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(self.value_and_gradient(alpha)?.1)
    }
}

/// Which inner products the iterative fit uses.
#[derive(Debug, Clone, Copy)]
pub enum DataView<'a> {
    Full(&'a Quadrature),
    Partial,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterativeOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub history: usize,
}

impl Default for IterativeOptions {
    fn default() -> Self {
        Self {
            tol: 1e-7,
            max_iter: 2000,
            history: 10,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct IterativeReport {
    pub status: Status,
    pub iterations: usize,
    pub evaluations: usize,
    pub objective: f64,
    pub grad_inf: f64,
    pub trace: Vec<f64>,
}

/// Minimize a prepared objective by limited-memory quasi-Newton from `α = 0`.
///
/// Non-convergence is not an error: the minimizer is returned together with a
/// report whose status says why the run stopped.
pub fn minimize_objective(objective: &Objective, opts: &IterativeOptions) -> Result<(DMatrix<f64>, IterativeReport)> {
    let (d, n) = (objective.d(), objective.n());
    let lopts = LbfgsOptions {
        history: opts.history,
        tol: opts.tol,
        max_iter: opts.max_iter,
        ..LbfgsOptions::default()
    };
    let result = lbfgs::minimize(
        |x| {
            let alpha = DMatrix::from_column_slice(d, n, x);
            match objective.value_and_gradient(&alpha) {
                Ok((v, g)) => (v, g.as_slice().to_vec()),
                Err(_) => (f64::NAN, vec![f64::NAN; x.len()]),
            }
        },
        vec![0.0; d * n],
        &lopts,
    );
    if result.status == Status::NonFinite {
        return Err(KplError::numeric(format!(
            "objective became non-finite after {} iterations",
            result.iterations
        )));
    }
    if result.status != Status::Converged {
        log::warn!(
            "iterative fit stopped with status {:?} after {} iterations (|grad|_inf = {:.3e})",
            result.status,
            result.iterations,
            result.grad_inf
        );
    }
    let alpha = DMatrix::from_column_slice(d, n, &result.x);
    let report = IterativeReport {
        status: result.status,
        iterations: result.iterations,
        evaluations: result.evaluations,
        objective: result.value,
        grad_inf: result.grad_inf,
        trace: result.trace,
    };
    Ok((alpha, report))
}

/// Build the objective for `view` and minimize it.
#[allow(clippy::too_many_arguments)]
pub fn fit_iterative(
    sample: &PartialSample,
    view: DataView<'_>,
    dict: &Dictionary,
    kernel: &ScalarKernel,
    structure: &OutputStructure,
    lambda: f64,
    loss: GroundLoss,
    opts: &IterativeOptions,
) -> Result<(KplModel, IterativeReport)> {
    let objective = match view {
        DataView::Full(q) => Objective::full(sample, dict, kernel, structure, q, lambda, loss)?,
        DataView::Partial => Objective::partial(sample, dict, kernel, structure, lambda, loss)?,
    };
    let (alpha, report) = minimize_objective(&objective, opts)?;
    let model = KplModel::new(
        alpha,
        sample.inputs().to_vec(),
        dict.clone(),
        *kernel,
        *structure,
        lambda,
    )?;
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functional::{uniform_grid, InputPoint, SampledFunction};
    use crate::ridge::{fit_ridge_full, fit_ridge_persample_gram};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ground_loss_invariants() {
        for loss in [GroundLoss::Square, GroundLoss::Logcosh { gamma: 3.0 }] {
            for a in [-2.0, 0.0, 1.5] {
                assert_eq!(loss.value(a, a), 0.0);
                assert_eq!(loss.deriv_second(a, a), 0.0);
                for b in [-1.0, 0.3, 4.0] {
                    assert!(loss.value(a, b) >= 0.0);
                }
            }
        }
        assert_eq!(GroundLoss::Square.value(1.0, 3.0), 4.0);
        assert_eq!(GroundLoss::Square.deriv_second(1.0, 3.0), 4.0);
        let l = GroundLoss::Logcosh { gamma: 2.0 };
        let want = (2.0f64 * 0.7).cosh().ln() / 2.0;
        assert!((l.value(1.0, 0.3) - want).abs() < 1e-15);
        assert!(l.deriv_second(0.0, 1e6).abs() <= 1.0);
        assert!(l.value(0.0, 1e6).is_finite());
        assert!(GroundLoss::Logcosh { gamma: 0.0 }.validate().is_err());
    }

    fn sample(n: usize, grid: &[f64], seed: u64) -> PartialSample {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        for _ in 0..n {
            let a: f64 = rng.random_range(-1.0..1.0);
            xs.push(InputPoint::vector(vec![a, rng.random_range(-1.0..1.0)]).unwrap());
            ys.push(SampledFunction::from_fn(grid, |t| a * (6.0 * t).sin() + 0.2).unwrap());
        }
        PartialSample::new(xs, ys).unwrap()
    }

    #[test]
    fn zero_alpha_values() {
        let q = Quadrature::uniform(40).unwrap();
        let s = sample(4, q.nodes(), 1);
        let dict = Dictionary::fourier(2).unwrap();
        let k = ScalarKernel::Gaussian { sigma: 1.0 };
        let obj = Objective::full(&s, &dict, &k, &OutputStructure::Identity, &q, 0.1, GroundLoss::Square).unwrap();
        let zero = DMatrix::zeros(5, 4);
        let want: f64 = s.outputs().iter().map(|f| q.sq_norm(f.values())).sum::<f64>() / 4.0;
        assert!((obj.value(&zero).unwrap() - want).abs() < 1e-14);

        let zs: Vec<_> = s.outputs().iter().map(|f| f.with_values(vec![0.0; f.len()]).unwrap()).collect();
        let s0 = s.with_outputs(zs).unwrap();
        let obj0 = Objective::full(&s0, &dict, &k, &OutputStructure::Identity, &q, 0.1, GroundLoss::Square).unwrap();
        assert_eq!(obj0.value(&zero).unwrap(), 0.0);

        let mut bad = zero.clone();
        bad[(0, 0)] = f64::NAN;
        assert!(matches!(obj.value(&bad), Err(KplError::InvalidArgument(_))));
    }

    #[test]
    fn gradient_at_ridge_optimum_vanishes() {
        let q = Quadrature::uniform(64).unwrap();
        let s = sample(6, q.nodes(), 2);
        let dict = Dictionary::fourier(2).unwrap();
        let k = ScalarKernel::Gaussian { sigma: 1.0 };
        let m = fit_ridge_full(&s, &dict, &k, &OutputStructure::Identity, &q, 1e-2).unwrap();
        let obj = Objective::full(&s, &dict, &k, &OutputStructure::Identity, &q, 1e-2, GroundLoss::Square).unwrap();
        let g = obj.gradient(&m.alpha).unwrap();
        assert!(g.norm() / m.alpha.norm() < 1e-6);
    }

    #[test]
    fn gradient_when_outputs_match_predictions() {
        let q = Quadrature::uniform(32).unwrap();
        let s = sample(3, q.nodes(), 3);
        let dict = Dictionary::fourier(1).unwrap();
        let k = ScalarKernel::Gaussian { sigma: 1.0 };
        let alpha = DMatrix::from_fn(3, 3, |l, i| 0.1 * (l as f64 - i as f64));
        let model = KplModel::new(alpha.clone(), s.inputs().to_vec(), dict.clone(), k, OutputStructure::Identity, 0.3).unwrap();
        let outs: Vec<_> = s.inputs().iter().map(|x| model.predict(x, q.nodes()).unwrap()).collect();
        let s = s.with_outputs(outs).unwrap();
        let obj = Objective::full(&s, &dict, &k, &OutputStructure::Identity, &q, 0.3, GroundLoss::Logcosh { gamma: 5.0 }).unwrap();
        let km = kernel_matrix(&k, s.inputs()).unwrap();
        let want = &alpha * &km * (2.0 * 0.3);
        assert!((obj.gradient(&alpha).unwrap() - want).amax() < 1e-12);
    }

    #[test]
    fn partial_on_grid_equals_full_with_mean_weights() {
        let grid = uniform_grid(30);
        let s = sample(4, &grid, 4);
        let dict = Dictionary::fourier(2).unwrap();
        let k = ScalarKernel::Gaussian { sigma: 1.0 };
        let q = Quadrature::mean(&grid).unwrap();
        let loss = GroundLoss::Logcosh { gamma: 2.0 };
        let full = Objective::full(&s, &dict, &k, &OutputStructure::Identity, &q, 0.05, loss).unwrap();
        let part = Objective::partial(&s, &dict, &k, &OutputStructure::Identity, 0.05, loss).unwrap();
        let alpha = DMatrix::from_fn(5, 4, |l, i| ((l * 3 + i) as f64).sin());
        let (vf, gf) = full.value_and_gradient(&alpha).unwrap();
        let (vp, gp) = part.value_and_gradient(&alpha).unwrap();
        assert!((vf - vp).abs() < 1e-14);
        assert!((gf - gp).amax() < 1e-14);
    }

    #[test]
    fn single_observation_flat_derivative() {
        // one observation per function, matched exactly: loss column vanishes
        let dict = Dictionary::fourier(1).unwrap();
        let x = InputPoint::vector(vec![0.0]).unwrap();
        let k = ScalarKernel::Gaussian { sigma: 1.0 };
        let alpha = DMatrix::from_column_slice(3, 1, &[0.4, 0.1, -0.2]);
        let model = KplModel::new(alpha.clone(), vec![x.clone()], dict.clone(), k, OutputStructure::Identity, 1.0).unwrap();
        let pred = model.predict(&x, &[0.3]).unwrap();
        let s = PartialSample::new(vec![x], vec![pred]).unwrap();
        let obj = Objective::partial(&s, &dict, &k, &OutputStructure::Identity, 0.5, GroundLoss::Square).unwrap();
        let want = &alpha * (2.0 * 0.5);
        assert!((obj.gradient(&alpha).unwrap() - want).amax() < 1e-14);
    }

    #[test]
    fn converges_to_closed_forms() {
        let q = Quadrature::uniform(50).unwrap();
        let s = sample(6, q.nodes(), 5);
        let dict = Dictionary::fourier(1).unwrap();
        let k = ScalarKernel::Gaussian { sigma: 1.0 };
        let (m, rep) = fit_iterative(&s, DataView::Full(&q), &dict, &k, &OutputStructure::Identity, 1e-2, GroundLoss::Square, &IterativeOptions::default()).unwrap();
        assert_eq!(rep.status, Status::Converged);
        let r = fit_ridge_full(&s, &dict, &k, &OutputStructure::Identity, &q, 1e-2).unwrap();
        assert!((&m.alpha - &r.alpha).norm() / r.alpha.norm() < 1e-4);
        assert!(rep.trace.windows(2).all(|w| w[1] <= w[0]));

        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let outs: Vec<_> = s
            .outputs()
            .iter()
            .map(|f| {
                let keep: Vec<usize> = (0..f.len()).filter(|_| rng.random_bool(0.4)).collect();
                f.select(&keep).unwrap()
            })
            .collect();
        let sp = s.with_outputs(outs).unwrap();
        let (m, _) = fit_iterative(&sp, DataView::Partial, &dict, &k, &OutputStructure::Identity, 1e-2, GroundLoss::Square, &IterativeOptions::default()).unwrap();
        let r = fit_ridge_persample_gram(&sp, &dict, &k, &OutputStructure::Identity, 1e-2).unwrap();
        assert!((&m.alpha - &r.alpha).norm() / r.alpha.norm() < 1e-4);

        let (m, _) = fit_iterative(&s, DataView::Full(&q), &dict, &k, &OutputStructure::Identity, 1e8, GroundLoss::Square, &IterativeOptions::default()).unwrap();
        assert!(m.alpha.norm() < 1e-6);
    }
}
