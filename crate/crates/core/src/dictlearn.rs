//! Dictionary learning by alternating sparse coding and projected block
//! coordinate updates of the atoms.
//!
//! Everything lives on one quadrature grid: `Y` is `m × n` (one output per
//! column), the atoms are `m × d`, and norms are weighted by the quadrature.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::index::sample as sample_indices;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::dictionary::{Dictionary, Family};
use crate::error::{KplError, Result};
use crate::functional::{resample_clamped, PartialSample, Quadrature};
use crate::par;

pub const CODING_TOL: f64 = 1e-8;
pub const CODING_MAX_ITER: usize = 5000;

fn weighted_sq_norm(w: &[f64], v: impl Iterator<Item = f64>) -> f64 {
    w.iter().zip(v).map(|(w, x)| w * x * x).sum()
}

fn check_shapes(y: &DMatrix<f64>, atoms: &DMatrix<f64>, q: &Quadrature) -> Result<()> {
    if y.nrows() != q.len() || atoms.nrows() != q.len() {
        return Err(KplError::invalid(format!(
            "data has {} rows and atoms {} rows for {} quadrature nodes",
            y.nrows(),
            atoms.nrows(),
            q.len()
        )));
    }
    if atoms.ncols() == 0 {
        return Err(KplError::invalid("dictionary has no atoms"));
    }
    if y.iter().chain(atoms.iter()).any(|v| !v.is_finite()) {
        return Err(KplError::invalid("data and atoms must be finite"));
    }
    Ok(())
}

/// `Dᵀ W D` for quadrature weights `W`.
fn weighted_gram(atoms: &DMatrix<f64>, w: &[f64]) -> DMatrix<f64> {
    let mut wd = atoms.clone();
    for (mut row, wp) in wd.row_iter_mut().zip(w) {
        row *= *wp;
    }
    atoms.transpose() * wd
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    v.signum() * (v.abs() - t).max(0.0)
}

/// `‖y - Dβ‖²_q + τ‖β‖₁` written in terms of `G = DᵀWD`, `c = DᵀWy`, `‖y‖²_q`.
fn coding_objective(g: &DMatrix<f64>, c: &DVector<f64>, yy: f64, beta: &DVector<f64>, tau: f64) -> f64 {
    (yy - 2.0 * c.dot(beta) + beta.dot(&(g * beta))).max(0.0) + tau * beta.abs().sum()
}

/// Accelerated proximal gradient for one column, with adaptive restart.
fn fista(
    g: &DMatrix<f64>,
    c: &DVector<f64>,
    yy: f64,
    tau: f64,
    lipschitz: f64,
    start: DVector<f64>,
) -> DVector<f64> {
    if lipschitz <= 0.0 {
        return DVector::zeros(c.len());
    }
    let step = 1.0 / lipschitz;
    let scale = c.amax().max(1e-300);
    let objective = |b: &DVector<f64>, gb: &DVector<f64>| {
        (yy - 2.0 * c.dot(b) + b.dot(gb)).max(0.0) + tau * b.abs().sum()
    };
    let mut x = start.clone();
    let mut gx = g * &x;
    let mut z = x.clone();
    let mut gz = gx.clone();
    let mut t = 1.0f64;
    let mut prev_obj = objective(&x, &gx);
    for _ in 0..CODING_MAX_ITER {
        let grad = (&gz - c) * 2.0;
        let next = (&z - grad * step).map(|v| soft_threshold(v, tau * step));
        let gnext = g * &next;
        let mapping = (&z - &next).amax() * lipschitz;
        let obj = objective(&next, &gnext);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        if obj > prev_obj {
            // restart momentum
            z = x.clone();
            gz = gx.clone();
            t = 1.0;
            continue;
        }
        let momentum = (t - 1.0) / t_next;
        z = &next + (&next - &x) * momentum;
        gz = &gnext + (&gnext - &gx) * momentum;
        x = next;
        gx = gnext;
        t = t_next;
        prev_obj = obj;
        if mapping <= CODING_TOL * scale {
            break;
        }
    }
    // never worse than the warm start
    if coding_objective(g, c, yy, &start, tau) < coding_objective(g, c, yy, &x, tau) {
        start
    } else {
        x
    }
}

/// Solve `min_β ‖y_i - Dβ_i‖²_q + τ‖β_i‖₁` for every column of `y`.
///
/// `warm` (d × n) seeds the iteration; `None` starts from zero.
pub fn sparse_code(
    y: &DMatrix<f64>,
    atoms: &DMatrix<f64>,
    tau: f64,
    q: &Quadrature,
    warm: Option<&DMatrix<f64>>,
) -> Result<DMatrix<f64>> {
    check_shapes(y, atoms, q)?;
    if !(tau >= 0.0) || !tau.is_finite() {
        return Err(KplError::invalid(format!("sparsity weight must be non-negative, got {tau}")));
    }
    let (d, n) = (atoms.ncols(), y.ncols());
    if let Some(w) = warm {
        if w.shape() != (d, n) {
            return Err(KplError::invalid(format!("warm start is {:?}, expected ({d}, {n})", w.shape())));
        }
    }
    let w = q.weights();
    let g = weighted_gram(atoms, w);
    let lipschitz = 2.0 * SymmetricEigen::new(g.clone()).eigenvalues.max().max(0.0);
    let mut wy = y.clone();
    for (mut row, wp) in wy.row_iter_mut().zip(w) {
        row *= *wp;
    }
    let c_all = atoms.transpose() * &wy;

    let columns = par::map_range(n, |i| {
        let c = c_all.column(i).into_owned();
        let yy = weighted_sq_norm(w, y.column(i).iter().copied());
        let start = warm.map_or_else(|| DVector::zeros(d), |b| b.column(i).into_owned());
        fista(&g, &c, yy, tau, lipschitz, start)
    });
    let mut beta = DMatrix::zeros(d, n);
    for (i, col) in columns.into_iter().enumerate() {
        beta.set_column(i, &col);
    }
    Ok(beta)
}

/// One pass of block coordinate descent over the atoms, each projected onto
/// the unit ball of `‖·‖_q`. Atoms with an all-zero coefficient row are kept.
pub fn update_dictionary(
    y: &DMatrix<f64>,
    atoms: &DMatrix<f64>,
    beta: &DMatrix<f64>,
    q: &Quadrature,
) -> Result<DMatrix<f64>> {
    check_shapes(y, atoms, q)?;
    if beta.shape() != (atoms.ncols(), y.ncols()) {
        return Err(KplError::invalid(format!(
            "coefficients are {:?}, expected ({}, {})",
            beta.shape(),
            atoms.ncols(),
            y.ncols()
        )));
    }
    let w = q.weights();
    let mut atoms = atoms.clone();
    let mut resid = y - &atoms * beta;
    for l in 0..atoms.ncols() {
        let b = beta.row(l);
        let usage = b.norm_squared();
        if usage == 0.0 {
            continue;
        }
        let old = atoms.column(l).into_owned();
        // R_l βᵀ / ‖β‖² with R_l = resid + φ_l β_l
        let mut atom = (&resid * b.transpose()) / usage + &old;
        let norm = weighted_sq_norm(w, atom.iter().copied()).sqrt();
        if norm > 1.0 {
            atom /= norm;
        }
        resid -= (&atom - &old) * b;
        atoms.set_column(l, &atom);
    }
    Ok(atoms)
}

/// `(1/n) Σ_i (‖y_i - Dβ_i‖²_q + τ‖β_i‖₁)`.
pub fn dl_objective(y: &DMatrix<f64>, atoms: &DMatrix<f64>, beta: &DMatrix<f64>, tau: f64, q: &Quadrature) -> f64 {
    let resid = y - atoms * beta;
    let w = q.weights();
    let fit: f64 = resid.column_iter().map(|c| weighted_sq_norm(w, c.iter().copied())).sum();
    (fit + tau * beta.abs().sum()) / y.ncols() as f64
}

/// `‖Y - Dβ‖` in the quadrature-weighted Frobenius norm.
pub fn reconstruction_error(y: &DMatrix<f64>, atoms: &DMatrix<f64>, beta: &DMatrix<f64>, q: &Quadrature) -> f64 {
    let resid = y - atoms * beta;
    let w = q.weights();
    resid
        .column_iter()
        .map(|c| weighted_sq_norm(w, c.iter().copied()))
        .sum::<f64>()
        .sqrt()
}

#[derive(Debug, Clone)]
pub struct DlProblem {
    /// Training outputs on the quadrature nodes, one per column.
    pub outputs: DMatrix<f64>,
    pub quadrature: Quadrature,
    pub atoms: usize,
    pub tau: f64,
    pub max_rounds: usize,
    /// Stop once the relative objective decrease of a round falls below this.
    pub tol: f64,
}

impl DlProblem {
    pub fn new(outputs: DMatrix<f64>, quadrature: Quadrature, atoms: usize, tau: f64) -> Result<Self> {
        let p = Self {
            outputs,
            quadrature,
            atoms,
            tau,
            max_rounds: 100,
            tol: 1e-6,
        };
        p.validate()?;
        Ok(p)
    }

    /// Resample every training output onto the quadrature nodes.
    pub fn from_sample(sample: &PartialSample, quadrature: Quadrature, atoms: usize, tau: f64) -> Result<Self> {
        let m = quadrature.len();
        let mut y = DMatrix::zeros(m, sample.len());
        for (i, f) in sample.outputs().iter().enumerate() {
            let r = resample_clamped(f, quadrature.nodes())?;
            y.set_column(i, &DVector::from_column_slice(r.values()));
        }
        Self::new(y, quadrature, atoms, tau)
    }

    fn validate(&self) -> Result<()> {
        if self.outputs.ncols() < 1 {
            return Err(KplError::invalid("dictionary learning needs at least one output"));
        }
        if self.atoms < 1 {
            return Err(KplError::invalid("dictionary learning needs at least one atom"));
        }
        if !(self.tau >= 0.0) || !self.tau.is_finite() {
            return Err(KplError::invalid(format!("sparsity weight must be non-negative, got {}", self.tau)));
        }
        if self.outputs.nrows() != self.quadrature.len() {
            return Err(KplError::invalid("outputs must be sampled on the quadrature nodes"));
        }
        if self.outputs.iter().any(|v| !v.is_finite()) {
            return Err(KplError::invalid("outputs must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DlResult {
    #[serde(skip)]
    pub dictionary: Dictionary,
    #[serde(skip)]
    pub beta: DMatrix<f64>,
    pub objective_trace: Vec<f64>,
    pub rounds: usize,
}

impl DlResult {
    /// Atom values on the training quadrature nodes (`m × d`).
    pub fn atoms(&self) -> &DMatrix<f64> {
        self.dictionary.table().expect("learned dictionaries are tabulated").1
    }
}

fn initial_atoms(p: &DlProblem, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let (m, n) = p.outputs.shape();
    let w = p.quadrature.weights();
    let picks: Vec<usize> = if p.atoms <= n {
        sample_indices(rng, n, p.atoms).into_vec()
    } else {
        log::warn!("learning {} atoms from only {n} outputs", p.atoms);
        (0..p.atoms).map(|l| l % n).collect()
    };
    let mut atoms = DMatrix::zeros(m, p.atoms);
    for (l, &i) in picks.iter().enumerate() {
        let mut col = p.outputs.column(i).into_owned();
        if l >= n {
            // repeated picks get a random perturbation so atoms stay distinct
            for v in col.iter_mut() {
                *v += 1e-3 * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut *rng);
            }
        }
        let mut norm = weighted_sq_norm(w, col.iter().copied()).sqrt();
        if norm < 1e-12 {
            col = DVector::from_fn(m, |_, _| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut *rng));
            norm = weighted_sq_norm(w, col.iter().copied()).sqrt();
        }
        atoms.set_column(l, &(col / norm));
    }
    atoms
}

/// Alternate sparse coding and dictionary updates from seeded data columns.
pub fn learn_dictionary(problem: &DlProblem, seed: u64) -> Result<DlResult> {
    problem.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = &problem.quadrature;
    let y = &problem.outputs;
    let mut atoms = initial_atoms(problem, &mut rng);
    let mut beta: Option<DMatrix<f64>> = None;
    let mut trace = Vec::new();
    let mut rounds = 0;
    // objectives below this are roundoff
    let floor = 1e-14 * y.column_iter().map(|c| weighted_sq_norm(q.weights(), c.iter().copied())).sum::<f64>();
    while rounds < problem.max_rounds {
        let b = sparse_code(y, &atoms, problem.tau, q, beta.as_ref())?;
        atoms = update_dictionary(y, &atoms, &b, q)?;
        let obj = dl_objective(y, &atoms, &b, problem.tau, q);
        beta = Some(b);
        rounds += 1;
        let done = trace
            .last()
            .is_some_and(|&prev: &f64| prev - obj <= problem.tol * prev.abs().max(1e-300));
        trace.push(obj);
        if done || obj <= floor {
            break;
        }
    }
    let beta = beta.unwrap_or_else(|| DMatrix::zeros(problem.atoms, y.ncols()));
    let dictionary = Dictionary::from_grid(
        q.nodes().to_vec(),
        atoms,
        Family::Learned { atoms: problem.atoms },
    )?;
    Ok(DlResult {
        dictionary,
        beta,
        objective_trace: trace,
        rounds,
    })
}
