//! Dictionaries of atoms on `[0, 1]`, the projection operator `u ↦ Σ u_l φ_l`,
//! its adjoint, and Gram-matrix diagnostics.

mod io;
pub mod wavelet;

pub use io::{read_dictionary, write_dictionary};

use std::f64::consts::{PI, SQRT_2};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{KplError, Result};
use crate::functional::{interp_clamped, PartialSample, Quadrature, SampledFunction};
use wavelet::{CascadeTables, WaveletAtom};

/// Resolution of the grid used to L²-normalize non-orthonormal families.
const NORMALIZATION_NODES: usize = 8193;

/// Family tag and parameters, enough to describe (and mostly rebuild) a dictionary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    Fourier {
        frequencies: usize,
    },
    Wavelet {
        vanishing_moments: usize,
        levels: u32,
    },
    Rff {
        lengthscale: f64,
        seed: u64,
        frequencies: Vec<f64>,
    },
    Learned {
        atoms: usize,
    },
    /// Atoms given as grid values by the caller.
    Tabulated,
}

#[derive(Debug, Clone)]
enum Atoms {
    Fourier { frequencies: usize },
    Rff { omegas: Vec<f64> },
    Wavelet {
        tables: Arc<CascadeTables>,
        atoms: Vec<WaveletAtom>,
    },
    /// Column `l` holds atom `l` at `nodes`; evaluated by linear interpolation.
    Grid { nodes: Vec<f64>, values: DMatrix<f64> },
}

/// A finite family of functions `φ = (φ_1, …, φ_d)` evaluable anywhere on `[0, 1]`.
#[derive(Debug, Clone)]
pub struct Dictionary {
    atoms: Atoms,
    family: Family,
    dim: usize,
    scale_index: Option<Vec<u32>>,
}

impl Dictionary {
    /// `{1, √2 cos(2πlθ), √2 sin(2πlθ)}` for `l = 1..=frequencies`.
    pub fn fourier(frequencies: usize) -> Result<Self> {
        if frequencies < 1 {
            return Err(KplError::invalid("fourier dictionary needs at least one frequency"));
        }
        Ok(Self {
            atoms: Atoms::Fourier { frequencies },
            family: Family::Fourier { frequencies },
            dim: 2 * frequencies + 1,
            scale_index: None,
        })
    }

    /// Daubechies scaling and wavelet atoms up to `levels` dilations, folded
    /// onto `[0, 1]` by symmetric reflection and normalized in L².
    pub fn wavelet(vanishing_moments: usize, levels: u32) -> Result<Self> {
        if levels > 16 {
            return Err(KplError::invalid(format!("{levels} dilation levels is too many")));
        }
        let tables = Arc::new(CascadeTables::build(vanishing_moments)?);
        let support = 2 * vanishing_moments - 1;
        let mut atoms = wavelet::enumerate_atoms(support, levels);

        let q = Quadrature::uniform(NORMALIZATION_NODES)?;
        let mut column = vec![0.0; q.len()];
        atoms.retain_mut(|atom| {
            for (c, &t) in column.iter_mut().zip(q.nodes()) {
                *c = atom.folded(&tables, t);
            }
            let norm = q.sq_norm(&column).sqrt();
            if norm < 1e-8 {
                return false;
            }
            atom.norm_factor = 1.0 / norm;
            true
        });
        let scale_index = atoms.iter().map(|a| a.scale).collect();
        Ok(Self {
            dim: atoms.len(),
            atoms: Atoms::Wavelet { tables, atoms },
            family: Family::Wavelet {
                vanishing_moments,
                levels,
            },
            scale_index: Some(scale_index),
        })
    }

    /// Random Fourier features `√2 cos(ω_j θ), √2 sin(ω_j θ)` with
    /// `ω_j ~ N(0, 1/lengthscale²)`, `j = 1..=d/2`.
    pub fn rff(lengthscale: f64, d: usize, seed: u64) -> Result<Self> {
        if d == 0 || !d.is_multiple_of(2) {
            return Err(KplError::invalid(format!("rff dictionary size must be even and positive, got {d}")));
        }
        if !(lengthscale > 0.0) || !lengthscale.is_finite() {
            return Err(KplError::invalid("rff lengthscale must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0 / lengthscale)
            .map_err(|e| KplError::invalid(e.to_string()))?;
        let omegas: Vec<f64> = (0..d / 2).map(|_| normal.sample(&mut rng)).collect();
        Ok(Self::rff_from_frequencies(lengthscale, seed, omegas))
    }

    fn rff_from_frequencies(lengthscale: f64, seed: u64, omegas: Vec<f64>) -> Self {
        Self {
            dim: 2 * omegas.len(),
            family: Family::Rff {
                lengthscale,
                seed,
                frequencies: omegas.clone(),
            },
            atoms: Atoms::Rff { omegas },
            scale_index: None,
        }
    }

    /// Atoms given by their values (`nodes.len() × d`) on sorted nodes.
    pub fn from_grid(nodes: Vec<f64>, values: DMatrix<f64>, family: Family) -> Result<Self> {
        if nodes.is_empty() || values.nrows() != nodes.len() || values.ncols() == 0 {
            return Err(KplError::invalid(format!(
                "atom table is {}x{} for {} nodes",
                values.nrows(),
                values.ncols(),
                nodes.len()
            )));
        }
        if nodes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(KplError::invalid("atom nodes must be strictly increasing"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(KplError::invalid("atom values must be finite"));
        }
        Ok(Self {
            dim: values.ncols(),
            atoms: Atoms::Grid { nodes, values },
            family,
            scale_index: None,
        })
    }

    /// Rebuild from family metadata alone (not possible for tabulated atoms).
    pub fn from_family(family: &Family) -> Result<Self> {
        match family {
            Family::Fourier { frequencies } => Self::fourier(*frequencies),
            Family::Wavelet {
                vanishing_moments,
                levels,
            } => Self::wavelet(*vanishing_moments, *levels),
            Family::Rff {
                lengthscale,
                seed,
                frequencies,
            } => Ok(Self::rff_from_frequencies(*lengthscale, *seed, frequencies.clone())),
            Family::Learned { .. } | Family::Tabulated => Err(KplError::invalid(
                "tabulated dictionaries cannot be rebuilt from metadata",
            )),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn scale_index(&self) -> Option<&[u32]> {
        self.scale_index.as_deref()
    }

    pub fn is_tabulated(&self) -> bool {
        matches!(self.atoms, Atoms::Grid { .. })
    }

    /// Grid nodes and atom table for tabulated dictionaries.
    pub fn table(&self) -> Option<(&[f64], &DMatrix<f64>)> {
        match &self.atoms {
            Atoms::Grid { nodes, values } => Some((nodes, values)),
            _ => None,
        }
    }

    /// Write `φ(θ)` into `out` (length `d`).
    pub fn eval_into(&self, theta: f64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dim);
        match &self.atoms {
            Atoms::Fourier { frequencies } => {
                out[0] = 1.0;
                for l in 1..=*frequencies {
                    let arg = 2.0 * PI * l as f64 * theta;
                    out[2 * l - 1] = SQRT_2 * arg.cos();
                    out[2 * l] = SQRT_2 * arg.sin();
                }
            }
            Atoms::Rff { omegas } => {
                for (j, w) in omegas.iter().enumerate() {
                    out[2 * j] = SQRT_2 * (w * theta).cos();
                    out[2 * j + 1] = SQRT_2 * (w * theta).sin();
                }
            }
            Atoms::Wavelet { tables, atoms } => {
                for (o, atom) in out.iter_mut().zip(atoms) {
                    *o = atom.norm_factor * atom.folded(tables, theta);
                }
            }
            Atoms::Grid { nodes, values } => {
                for (l, o) in out.iter_mut().enumerate() {
                    let col = values.column(l);
                    *o = interp_clamped(nodes, col.as_slice(), theta);
                }
            }
        }
    }

    pub fn eval(&self, theta: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(theta, &mut out);
        out
    }

    /// Design matrix with rows `φ(θ_p)ᵀ` (`locations.len() × d`).
    pub fn design(&self, locations: &[f64]) -> DMatrix<f64> {
        let mut mat = DMatrix::<f64>::zeros(locations.len(), self.dim);
        let mut row = vec![0.0; self.dim];
        for (p, &t) in locations.iter().enumerate() {
            self.eval_into(t, &mut row);
            for (l, v) in row.iter().enumerate() {
                mat[(p, l)] = *v;
            }
        }
        mat
    }

    /// Tabulate on `nodes` as a new grid dictionary with the given family tag.
    pub fn tabulate(&self, nodes: &[f64], family: Family) -> Result<Dictionary> {
        Dictionary::from_grid(nodes.to_vec(), self.design(nodes), family)
    }
}

/// `Σ_l u_l φ_l` evaluated at `targets`.
pub fn apply_phi(dict: &Dictionary, u: &[f64], targets: &[f64]) -> Result<SampledFunction> {
    if u.len() != dict.dim() {
        return Err(KplError::invalid(format!(
            "coefficient vector has length {}, dictionary has {} atoms",
            u.len(),
            dict.dim()
        )));
    }
    let mut row = vec![0.0; dict.dim()];
    let values = targets
        .iter()
        .map(|&t| {
            dict.eval_into(t, &mut row);
            row.iter().zip(u).map(|(a, b)| a * b).sum()
        })
        .collect();
    SampledFunction::new(targets.to_vec(), values)
}

/// Quadrature inner products `(⟨φ_l, g⟩)_l` for `g` sampled on the nodes.
pub fn adjoint_phi(dict: &Dictionary, g: &SampledFunction, q: &Quadrature) -> Result<Vec<f64>> {
    if !g.same_grid(q.nodes()) {
        return Err(KplError::invalid("function is not sampled on the quadrature nodes"));
    }
    Ok(adjoint_values(dict, g.values(), q))
}

pub(crate) fn adjoint_values(dict: &Dictionary, values: &[f64], q: &Quadrature) -> Vec<f64> {
    let mut out = vec![0.0; dict.dim()];
    let mut row = vec![0.0; dict.dim()];
    for ((&t, &w), &v) in q.nodes().iter().zip(q.weights()).zip(values) {
        dict.eval_into(t, &mut row);
        let wv = w * v;
        out.iter_mut().zip(&row).for_each(|(o, r)| *o += wv * r);
    }
    out
}

/// Symmetric matrix of atom inner products under a quadrature rule.
#[derive(Debug, Clone)]
pub struct GramMatrix {
    pub matrix: DMatrix<f64>,
    pub quadrature: Quadrature,
}

/// Gram matrix `(⟨φ_l, φ_s⟩_q)_{l,s}`, symmetrized.
pub fn gram(dict: &Dictionary, q: &Quadrature) -> GramMatrix {
    let design = dict.design(q.nodes());
    let mut weighted = design.clone();
    for (p, w) in q.weights().iter().enumerate() {
        weighted.row_mut(p).scale_mut(*w);
    }
    let g = design.transpose() * weighted;
    GramMatrix {
        matrix: symmetrize(&g),
        quadrature: q.clone(),
    }
}

pub(crate) fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Monte-Carlo estimates `ν_{li} = (1/m_i) Σ_p ŷ_{ip} φ_l(θ_{ip})` (`d × n`).
pub fn estimate_nu(dict: &Dictionary, sample: &PartialSample) -> Result<DMatrix<f64>> {
    let d = dict.dim();
    let mut nu = DMatrix::<f64>::zeros(d, sample.len());
    let mut row = vec![0.0; d];
    for (i, f) in sample.outputs().iter().enumerate() {
        if f.is_empty() {
            return Err(KplError::invalid(format!("output function {i} has no observations")));
        }
        let inv_m = 1.0 / f.len() as f64;
        for (&t, &y) in f.locations().iter().zip(f.values()) {
            dict.eval_into(t, &mut row);
            for l in 0..d {
                nu[(l, i)] += inv_m * y * row[l];
            }
        }
    }
    Ok(nu)
}

/// Per-sample Gram estimates `(1/m_i) Σ_p φ(θ_{ip}) φ(θ_{ip})ᵀ`.
pub fn estimate_gram_per_sample(dict: &Dictionary, sample: &PartialSample) -> Result<Vec<DMatrix<f64>>> {
    sample
        .outputs()
        .iter()
        .enumerate()
        .map(|(i, f)| {
            if f.is_empty() {
                return Err(KplError::invalid(format!("output function {i} has no observations")));
            }
            let design = dict.design(f.locations());
            let g = design.transpose() * &design / f.len() as f64;
            Ok(symmetrize(&g))
        })
        .collect()
}

/// Tight empirical Riesz constants and the coefficient vectors attaining them.
#[derive(Debug, Clone)]
pub struct RieszBounds {
    pub lower: f64,
    pub upper: f64,
    pub lower_vector: DVector<f64>,
    pub upper_vector: DVector<f64>,
}

/// `(√λ_min(G), √λ_max(G))` for the Gram matrix under `q`.
pub fn riesz_bounds(dict: &Dictionary, q: &Quadrature) -> RieszBounds {
    let g = gram(dict, q).matrix;
    let eig = SymmetricEigen::new(g);
    let (mut imin, mut imax) = (0, 0);
    for (i, &v) in eig.eigenvalues.iter().enumerate() {
        if v < eig.eigenvalues[imin] {
            imin = i;
        }
        if v > eig.eigenvalues[imax] {
            imax = i;
        }
    }
    RieszBounds {
        lower: eig.eigenvalues[imin].max(0.0).sqrt(),
        upper: eig.eigenvalues[imax].max(0.0).sqrt(),
        lower_vector: eig.eigenvectors.column(imin).into_owned(),
        upper_vector: eig.eigenvectors.column(imax).into_owned(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functional::{uniform_grid, InputPoint};

    fn max_offdiag_identity_err(g: &DMatrix<f64>) -> f64 {
        let n = g.nrows();
        let mut worst: f64 = 0.0;
        for r in 0..n {
            for c in 0..n {
                let want = if r == c { 1.0 } else { 0.0 };
                worst = worst.max((g[(r, c)] - want).abs());
            }
        }
        worst
    }

    fn two_atom_linear() -> Dictionary {
        // atoms 1 and (1+θ)/‖1+θ‖ with ‖1+θ‖² = 7/3
        let nodes = uniform_grid(3);
        let norm = (7.0f64 / 3.0).sqrt();
        let values = DMatrix::from_fn(3, 2, |p, l| if l == 0 { 1.0 } else { (1.0 + nodes[p]) / norm });
        Dictionary::from_grid(nodes, values, Family::Tabulated).unwrap()
    }

    #[test]
    fn fourier_basics() {
        let d = Dictionary::fourier(1).unwrap();
        assert_eq!(d.dim(), 3);
        let v = d.eval(0.0);
        assert_eq!(v, vec![1.0, SQRT_2, 0.0]);
        assert_eq!(Dictionary::fourier(15).unwrap().dim(), 31);
        assert!(Dictionary::fourier(0).is_err());

        let g = gram(&d, &Quadrature::uniform(1000).unwrap()).matrix;
        assert!(max_offdiag_identity_err(&g) < 1e-3);
        let g2 = gram(&Dictionary::fourier(2).unwrap(), &Quadrature::uniform(1000).unwrap()).matrix;
        assert!(max_offdiag_identity_err(&g2) < 1e-3);
    }

    #[test]
    fn haar_wavelet_level_zero() {
        let d = Dictionary::wavelet(1, 0).unwrap();
        assert_eq!(d.dim(), 2);
        assert_eq!(d.scale_index().unwrap(), &[0, 0]);
        // closed-form Haar oracle
        for &t in &[0.1, 0.3, 0.49] {
            assert!((d.eval(t)[1] - 1.0).abs() < 1e-3);
        }
        for &t in &[0.51, 0.8, 0.99] {
            assert!((d.eval(t)[1] + 1.0).abs() < 1e-3);
        }
        let g = gram(&d, &Quadrature::uniform(4001).unwrap()).matrix;
        assert!(max_offdiag_identity_err(&g) < 1e-3, "{g}");
    }

    #[test]
    fn wavelet_configurations() {
        let d = Dictionary::wavelet(3, 4).unwrap();
        let scales = d.scale_index().unwrap();
        assert_eq!(scales.len(), d.dim());
        assert_eq!(*scales.iter().max().unwrap(), 4);
        let q = Quadrature::uniform(4001).unwrap();
        let g = gram(&d, &q).matrix;
        for l in 0..d.dim() {
            assert!((g[(l, l)] - 1.0).abs() < 1e-2);
        }
        assert!(Dictionary::wavelet(6, 2).is_err());
        assert!(Dictionary::wavelet(0, 2).is_err());
    }

    #[test]
    fn rff_properties() {
        let a = Dictionary::rff(0.3, 10, 42).unwrap();
        let b = Dictionary::rff(0.3, 10, 42).unwrap();
        for &t in &[0.0, 0.2, 0.77] {
            assert_eq!(a.eval(t), b.eval(t));
        }
        let v = a.eval(0.0);
        for j in 0..5 {
            assert_eq!(v[2 * j], SQRT_2);
            assert_eq!(v[2 * j + 1], 0.0);
        }
        let flat = Dictionary::rff(1e8, 100, 3).unwrap();
        for &t in &[0.0, 0.5, 1.0] {
            let v = flat.eval(t);
            for j in 0..50 {
                assert!((v[2 * j] - SQRT_2).abs() < 1e-6);
                assert!(v[2 * j + 1].abs() < 1e-6);
            }
        }
        assert!(Dictionary::rff(1.0, 7, 0).is_err());
    }

    #[test]
    fn gram_duplicate_and_linear_atoms() {
        let nodes = uniform_grid(50);
        let vals = DMatrix::from_fn(50, 2, |p, _| (3.0 * nodes[p]).sin());
        let dup = Dictionary::from_grid(nodes, vals, Family::Tabulated).unwrap();
        let q = Quadrature::uniform(500).unwrap();
        let eig = SymmetricEigen::new(gram(&dup, &q).matrix).eigenvalues;
        assert!(eig.min().abs() < 1e-10);
        assert!(riesz_bounds(&dup, &q).lower < 1e-4);

        // analytic oracle: ⟨1, (1+θ)⟩ / ‖1+θ‖ = 1.5 / √(7/3)
        let want = 1.5 / (7.0f64 / 3.0).sqrt();
        let q = Quadrature::uniform(2001).unwrap();
        let g = gram(&two_atom_linear(), &q).matrix;
        assert!((g[(0, 1)] - want).abs() < 1e-3);
        assert!((g[(0, 1)] - 0.9819).abs() < 1e-3);

        let rb = riesz_bounds(&two_atom_linear(), &q);
        assert!((rb.lower - (1.0 - want).sqrt()).abs() < 1e-2);
        assert!((rb.upper - (1.0 + want).sqrt()).abs() < 1e-2);
    }

    #[test]
    fn apply_and_adjoint() {
        let d = Dictionary::fourier(1).unwrap();
        let targets = uniform_grid(11);
        let one = apply_phi(&d, &[1.0, 0.0, 0.0], &targets).unwrap();
        assert!(one.values().iter().all(|&v| v == 1.0));
        let zero = apply_phi(&d, &[0.0; 3], &targets).unwrap();
        assert!(zero.values().iter().all(|&v| v == 0.0));
        let cosine = apply_phi(&d, &[0.0, 1.0, 0.0], &targets).unwrap();
        for (&t, &v) in targets.iter().zip(cosine.values()) {
            assert!((v - SQRT_2 * (2.0 * PI * t).cos()).abs() < 1e-14);
        }
        assert!(apply_phi(&d, &[1.0], &targets).is_err());

        let q = Quadrature::uniform(1000).unwrap();
        let u = [0.3, -1.2, 0.7];
        let g = apply_phi(&d, &u, q.nodes()).unwrap();
        let back = adjoint_phi(&d, &g, &q).unwrap();
        for (a, b) in back.iter().zip(u) {
            assert!((a - b).abs() < 1e-3);
        }
        let z = SampledFunction::zeros(q.nodes()).unwrap();
        assert_eq!(adjoint_phi(&d, &z, &q).unwrap(), vec![0.0; 3]);

        let g = SampledFunction::from_fn(q.nodes(), |t| 3.0 + SQRT_2 * (2.0 * PI * t).cos()).unwrap();
        let c = adjoint_phi(&d, &g, &q).unwrap();
        assert!((c[0] - 3.0).abs() < 1e-3 && (c[1] - 1.0).abs() < 1e-3 && c[2].abs() < 1e-3);

        let wrong = SampledFunction::zeros(&uniform_grid(10)).unwrap();
        assert!(adjoint_phi(&d, &wrong, &q).is_err());
    }

    #[test]
    fn adjoint_of_apply_is_gram() {
        let nodes = uniform_grid(40);
        let vals = DMatrix::from_fn(40, 3, |p, l| (nodes[p] * (l + 1) as f64).exp());
        let d = Dictionary::from_grid(nodes, vals, Family::Tabulated).unwrap();
        let q = Quadrature::uniform(300).unwrap();
        let g = gram(&d, &q).matrix;
        let u = [0.5, -0.25, 1.5];
        let f = apply_phi(&d, &u, q.nodes()).unwrap();
        let lhs = adjoint_phi(&d, &f, &q).unwrap();
        let rhs = &g * DVector::from_row_slice(&u);
        for l in 0..3 {
            assert!((lhs[l] - rhs[l]).abs() < 1e-8);
        }
    }

    fn single(locs: Vec<f64>, vals: Vec<f64>) -> PartialSample {
        PartialSample::new(
            vec![InputPoint::vector(vec![0.0]).unwrap()],
            vec![SampledFunction::new(locs, vals).unwrap()],
        )
        .unwrap()
    }

    #[test]
    fn estimate_nu_examples() {
        let constant = Dictionary::from_grid(vec![0.0, 1.0], DMatrix::from_element(2, 1, 1.0), Family::Tabulated).unwrap();
        let s = single(vec![0.2, 0.6], vec![2.0, 4.0]);
        assert_eq!(estimate_nu(&constant, &s).unwrap()[(0, 0)], 3.0);
        let z = single(vec![0.2, 0.6], vec![0.0, 0.0]);
        assert_eq!(estimate_nu(&constant, &z).unwrap()[(0, 0)], 0.0);

        let blocks = estimate_gram_per_sample(&constant, &s).unwrap();
        assert_eq!(blocks[0][(0, 0)], 1.0);

        let f = Dictionary::fourier(1).unwrap();
        let one = single(vec![0.3], vec![1.0]);
        let b = &estimate_gram_per_sample(&f, &one).unwrap()[0];
        let phi = DVector::from_vec(f.eval(0.3));
        assert!((b - &phi * phi.transpose()).norm() < 1e-14);
    }

    #[test]
    fn estimate_nu_matches_mean_adjoint_on_grid() {
        let d = Dictionary::fourier(3).unwrap();
        let grid = uniform_grid(257);
        let vals: Vec<f64> = grid.iter().map(|t| (5.0 * t).sin() + t).collect();
        let s = single(grid.clone(), vals.clone());
        let nu = estimate_nu(&d, &s).unwrap();
        let q = Quadrature::mean(&grid).unwrap();
        let adj = adjoint_phi(&d, &SampledFunction::new(grid, vals).unwrap(), &q).unwrap();
        for l in 0..d.dim() {
            assert!((nu[(l, 0)] - adj[l]).abs() < 1e-13);
        }
    }

    #[test]
    fn riesz_vectors_attain_bounds() {
        let q = Quadrature::uniform(2001).unwrap();
        let d = two_atom_linear();
        let rb = riesz_bounds(&d, &q);
        assert!(rb.lower <= rb.upper);
        for (u, want) in [(&rb.lower_vector, rb.lower), (&rb.upper_vector, rb.upper)] {
            let f = apply_phi(&d, u.as_slice(), q.nodes()).unwrap();
            let ratio = q.sq_norm(f.values()).sqrt() / u.norm();
            assert!((ratio - want).abs() < 1e-6);
        }
        let f = riesz_bounds(&Dictionary::fourier(4).unwrap(), &q);
        assert!((f.lower - 1.0).abs() < 1e-3 && (f.upper - 1.0).abs() < 1e-3);
    }
}
