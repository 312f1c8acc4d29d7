//! Discretized functions on the unit interval, training samples, and
//! quadrature-based L² inner products.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{KplError, Result};

const LOCATION_SLACK: f64 = 1e-12;

/// A scalar function observed at strictly increasing locations in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledFunction {
    locations: Vec<f64>,
    values: Vec<f64>,
}

impl SampledFunction {
    pub fn new(locations: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if locations.is_empty() {
            return Err(KplError::invalid("sampled function needs at least one location"));
        }
        if locations.len() != values.len() {
            return Err(KplError::invalid(format!(
                "{} locations but {} values",
                locations.len(),
                values.len()
            )));
        }
        for &t in &locations {
            if !t.is_finite() || !(-LOCATION_SLACK..=1.0 + LOCATION_SLACK).contains(&t) {
                return Err(KplError::invalid(format!("location {t} not in [0, 1]")));
            }
        }
        if locations.windows(2).any(|w| w[1] <= w[0]) {
            return Err(KplError::invalid("locations must be strictly increasing"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(KplError::invalid("function values must be finite"));
        }
        Ok(Self { locations, values })
    }

    /// Evaluate `f` on the given locations.
    pub fn from_fn(locations: &[f64], f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = locations.iter().map(|&t| f(t)).collect();
        Self::new(locations.to_vec(), values)
    }

    pub fn zeros(locations: &[f64]) -> Result<Self> {
        Self::new(locations.to_vec(), vec![0.0; locations.len()])
    }

    pub fn locations(&self) -> &[f64] {
        &self.locations
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    /// Same locations, values replaced.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(self.locations.clone(), values)
    }

    /// Keep the observations at the given (sorted, unique) indices.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        Self::new(
            indices.iter().map(|&i| self.locations[i]).collect(),
            indices.iter().map(|&i| self.values[i]).collect(),
        )
    }

    pub fn span(&self) -> (f64, f64) {
        (self.locations[0], self.locations[self.locations.len() - 1])
    }

    /// Piecewise-linear value at `t`; constant beyond the observed span.
    pub fn eval_clamped(&self, t: f64) -> f64 {
        interp_clamped(&self.locations, &self.values, t)
    }

    /// True when `other` is sampled on exactly the same locations.
    pub fn same_grid(&self, locations: &[f64]) -> bool {
        same_locations(&self.locations, locations)
    }
}

pub(crate) fn same_locations(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= LOCATION_SLACK)
}

/// Linear interpolation on sorted `xs`, clamped to the end values outside.
pub(crate) fn interp_clamped(xs: &[f64], ys: &[f64], t: f64) -> f64 {
    let n = xs.len();
    if n == 1 || t <= xs[0] {
        return ys[0];
    }
    if t >= xs[n - 1] {
        return ys[n - 1];
    }
    // first index with xs[i] > t
    let hi = xs.partition_point(|&x| x <= t);
    let lo = hi - 1;
    let w = (t - xs[lo]) / (xs[hi] - xs[lo]);
    ys[lo] + w * (ys[hi] - ys[lo])
}

/// Piecewise-linear interpolation of `f` at `targets`.
pub fn resample(f: &SampledFunction, targets: &[f64]) -> Result<SampledFunction> {
    let (lo, hi) = f.span();
    for &t in targets {
        if t < lo - LOCATION_SLACK || t > hi + LOCATION_SLACK {
            return Err(KplError::OutOfRange {
                location: t,
                low: lo,
                high: hi,
            });
        }
    }
    let values = targets.iter().map(|&t| f.eval_clamped(t)).collect();
    SampledFunction::new(targets.to_vec(), values)
}

/// Like [`resample`] but extends the end values beyond the observed span.
pub fn resample_clamped(f: &SampledFunction, targets: &[f64]) -> Result<SampledFunction> {
    let values = targets.iter().map(|&t| f.eval_clamped(t)).collect();
    SampledFunction::new(targets.to_vec(), values)
}

/// An input point: a plain vector, or a matrix of channel values (rows are
/// shared locations, columns are channels) for vector-valued input functions.
#[derive(Debug, Clone, PartialEq)]
pub enum InputPoint {
    Vector(Vec<f64>),
    Matrix(DMatrix<f64>),
}

impl InputPoint {
    pub fn vector(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(KplError::invalid("empty input vector"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(KplError::invalid("input entries must be finite"));
        }
        Ok(InputPoint::Vector(values))
    }

    pub fn matrix(values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(KplError::invalid("matrix input needs at least one row and column"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(KplError::invalid("input entries must be finite"));
        }
        Ok(InputPoint::Matrix(values))
    }

    /// (rows, cols); vectors report `(len, 1)`.
    pub fn shape(&self) -> (usize, usize) {
        match self {
            InputPoint::Vector(v) => (v.len(), 1),
            InputPoint::Matrix(m) => (m.nrows(), m.ncols()),
        }
    }

    pub fn is_matrix(&self) -> bool {
        matches!(self, InputPoint::Matrix(_))
    }

    /// Entries in a flat slice (column-major for matrices).
    pub fn as_slice(&self) -> &[f64] {
        match self {
            InputPoint::Vector(v) => v,
            InputPoint::Matrix(m) => m.as_slice(),
        }
    }

    pub fn same_shape(&self, other: &InputPoint) -> bool {
        self.is_matrix() == other.is_matrix() && self.shape() == other.shape()
    }

    /// Squared Euclidean (Frobenius) distance.
    pub fn sq_distance(&self, other: &InputPoint) -> Result<f64> {
        if !self.same_shape(other) {
            return Err(KplError::invalid(format!(
                "input shapes differ: {:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(self
            .as_slice()
            .iter()
            .zip(other.as_slice())
            .map(|(a, b)| (a - b) * (a - b))
            .sum())
    }
}

/// Inputs paired with partially observed output functions.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialSample {
    inputs: Vec<InputPoint>,
    outputs: Vec<SampledFunction>,
}

impl PartialSample {
    pub fn new(inputs: Vec<InputPoint>, outputs: Vec<SampledFunction>) -> Result<Self> {
        if inputs.is_empty() {
            return Err(KplError::invalid("sample needs at least one pair"));
        }
        if inputs.len() != outputs.len() {
            return Err(KplError::invalid(format!(
                "{} inputs but {} outputs",
                inputs.len(),
                outputs.len()
            )));
        }
        Ok(Self { inputs, outputs })
    }

    pub fn inputs(&self) -> &[InputPoint] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[SampledFunction] {
        &self.outputs
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn into_parts(self) -> (Vec<InputPoint>, Vec<SampledFunction>) {
        (self.inputs, self.outputs)
    }

    pub fn with_outputs(&self, outputs: Vec<SampledFunction>) -> Result<Self> {
        Self::new(self.inputs.clone(), outputs)
    }

    pub fn with_inputs(&self, inputs: Vec<InputPoint>) -> Result<Self> {
        Self::new(inputs, self.outputs.clone())
    }

    /// Sub-sample at the given indices (in that order).
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        Self::new(
            indices.iter().map(|&i| self.inputs[i].clone()).collect(),
            indices.iter().map(|&i| self.outputs[i].clone()).collect(),
        )
    }

    /// True if every output is observed on exactly `locations`.
    pub fn on_grid(&self, locations: &[f64]) -> bool {
        self.outputs.iter().all(|f| f.same_grid(locations))
    }
}

/// Quadrature rule on `[0, 1]` with positive weights summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quadrature {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl Quadrature {
    pub fn new(nodes: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if nodes.is_empty() || nodes.len() != weights.len() {
            return Err(KplError::invalid("quadrature needs matching, non-empty nodes and weights"));
        }
        if nodes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(KplError::invalid("quadrature nodes must be strictly increasing"));
        }
        if nodes
            .iter()
            .any(|&t| !(-LOCATION_SLACK..=1.0 + LOCATION_SLACK).contains(&t))
        {
            return Err(KplError::invalid("quadrature nodes must lie in [0, 1]"));
        }
        if weights.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
            return Err(KplError::invalid("quadrature weights must be positive"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(KplError::invalid(format!("quadrature weights sum to {total}, not 1")));
        }
        Ok(Self { nodes, weights })
    }

    /// Trapezoidal weights on arbitrary sorted nodes, renormalized to sum to one.
    pub fn trapezoid(nodes: &[f64]) -> Result<Self> {
        let m = nodes.len();
        if m == 1 {
            return Self::new(nodes.to_vec(), vec![1.0]);
        }
        if nodes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(KplError::invalid("quadrature nodes must be strictly increasing"));
        }
        let mut w = vec![0.0; m];
        for p in 0..m - 1 {
            let h = 0.5 * (nodes[p + 1] - nodes[p]);
            w[p] += h;
            w[p + 1] += h;
        }
        normalize_weights(&mut w);
        Self::new(nodes.to_vec(), w)
    }

    /// Trapezoid rule on `m` equispaced nodes covering `[0, 1]`.
    pub fn uniform(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(KplError::invalid("quadrature needs at least one node"));
        }
        Self::trapezoid(&uniform_grid(m))
    }

    /// Equal weights `1/m` on the given nodes (Monte-Carlo averaging).
    pub fn mean(nodes: &[f64]) -> Result<Self> {
        let m = nodes.len();
        if m == 0 {
            return Err(KplError::invalid("quadrature needs at least one node"));
        }
        let mut w = vec![1.0 / m as f64; m];
        normalize_weights(&mut w);
        Self::new(nodes.to_vec(), w)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Σ_p w_p f_p for values already evaluated on the nodes.
    pub fn integrate(&self, values: &[f64]) -> Result<f64> {
        if values.len() != self.nodes.len() {
            return Err(KplError::invalid(format!(
                "{} values for {} quadrature nodes",
                values.len(),
                self.nodes.len()
            )));
        }
        Ok(self.weights.iter().zip(values).map(|(w, v)| w * v).sum())
    }

    /// Weighted squared norm of node values.
    pub fn sq_norm(&self, values: &[f64]) -> f64 {
        self.weights.iter().zip(values).map(|(w, v)| w * v * v).sum()
    }
}

fn normalize_weights(w: &mut [f64]) {
    // Kahan-free two-pass renormalization; the residual is well below 1e-12.
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    let total: f64 = w.iter().sum();
    let last = w.len() - 1;
    w[last] += 1.0 - total;
}

/// `m` equispaced points from 0 to 1 inclusive (`[0.5]` when `m == 1`).
pub fn uniform_grid(m: usize) -> Vec<f64> {
    match m {
        0 => Vec::new(),
        1 => vec![0.5],
        _ => (0..m).map(|p| p as f64 / (m - 1) as f64).collect(),
    }
}

/// `m` equispaced points on `[low, high]` inclusive.
pub fn linspace(low: f64, high: f64, m: usize) -> Vec<f64> {
    match m {
        0 => Vec::new(),
        1 => vec![low],
        _ => (0..m)
            .map(|p| low + (high - low) * p as f64 / (m - 1) as f64)
            .collect(),
    }
}

/// Quadrature inner product of two functions sampled on the quadrature nodes.
pub fn inner_product(f: &SampledFunction, g: &SampledFunction, q: &Quadrature) -> Result<f64> {
    if f.len() != q.len() || g.len() != q.len() {
        return Err(KplError::invalid(format!(
            "functions of length {} and {} against {} quadrature nodes",
            f.len(),
            g.len(),
            q.len()
        )));
    }
    if !f.same_grid(q.nodes()) || !g.same_grid(q.nodes()) {
        return Err(KplError::invalid("functions are not sampled on the quadrature nodes"));
    }
    Ok(q
        .weights()
        .iter()
        .zip(f.values().iter().zip(g.values()))
        .map(|(w, (a, b))| w * a * b)
        .sum())
}

/// Mean over functions of the mean squared residual at the observed
/// locations. Predictions are linearly interpolated onto each observation grid.
pub fn mse(predictions: &[SampledFunction], observations: &[SampledFunction]) -> Result<f64> {
    if predictions.is_empty() || observations.is_empty() {
        return Err(KplError::invalid("mse of empty lists"));
    }
    if predictions.len() != observations.len() {
        return Err(KplError::invalid(format!(
            "{} predictions for {} observations",
            predictions.len(),
            observations.len()
        )));
    }
    let mut total = 0.0;
    for (pred, obs) in predictions.iter().zip(observations) {
        let fitted = if pred.same_grid(obs.locations()) {
            pred.values().to_vec()
        } else {
            resample(pred, obs.locations())?.values().to_vec()
        };
        let sq: f64 = fitted
            .iter()
            .zip(obs.values())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        total += sq / obs.len() as f64;
    }
    Ok(total / observations.len() as f64)
}

/// Signal-to-noise ratio: mean absolute observed value divided by `sigma`.
pub fn snr(sample: &PartialSample, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(KplError::invalid(format!("sigma must be positive, got {sigma}")));
    }
    let n = sample.len() as f64;
    let total: f64 = sample
        .outputs()
        .iter()
        .map(|f| f.values().iter().map(|v| v.abs()).sum::<f64>() / f.len() as f64)
        .sum();
    Ok(total / (sigma * n))
}

/// Affine map from an interval `[low, high]` onto `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainMap {
    pub low: f64,
    pub high: f64,
}

impl DomainMap {
    pub fn new(low: f64, high: f64) -> Result<Self> {
        if !(high > low) || !low.is_finite() || !high.is_finite() {
            return Err(KplError::invalid(format!("bad domain [{low}, {high}]")));
        }
        Ok(Self { low, high })
    }

    pub fn unit() -> Self {
        Self { low: 0.0, high: 1.0 }
    }

    pub fn to_unit(&self, t: f64) -> f64 {
        ((t - self.low) / (self.high - self.low)).clamp(0.0, 1.0)
    }

    pub fn from_unit(&self, u: f64) -> f64 {
        self.low + u * (self.high - self.low)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn ones(q: &Quadrature) -> SampledFunction {
        SampledFunction::from_fn(q.nodes(), |_| 1.0).unwrap()
    }

    #[test]
    fn rejects_bad_functions() {
        assert!(SampledFunction::new(vec![], vec![]).is_err());
        assert!(SampledFunction::new(vec![0.2, 0.1], vec![1.0, 2.0]).is_err());
        assert!(SampledFunction::new(vec![0.2, 1.5], vec![1.0, 2.0]).is_err());
        assert!(SampledFunction::new(vec![0.2], vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn quadrature_weights_sum_to_one() {
        for m in [1, 2, 7, 200, 1001] {
            let q = Quadrature::uniform(m).unwrap();
            assert!((q.weights().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            let q = Quadrature::mean(&uniform_grid(m)).unwrap();
            assert!((q.weights().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn inner_product_constants() {
        let q = Quadrature::trapezoid(&[0.0, 0.1, 0.5, 0.9, 1.0]).unwrap();
        let one = ones(&q);
        let zero = SampledFunction::zeros(q.nodes()).unwrap();
        assert!((inner_product(&one, &one, &q).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(inner_product(&one, &zero, &q).unwrap(), 0.0);
    }

    #[test]
    fn inner_product_sine() {
        let q = Quadrature::uniform(1000).unwrap();
        let f = SampledFunction::from_fn(q.nodes(), |t| 2f64.sqrt() * (2.0 * PI * t).sin()).unwrap();
        // high-resolution oracle: midpoint rule with 10^6 cells
        let cells = 1_000_000;
        let oracle: f64 = (0..cells)
            .map(|k| {
                let t = (k as f64 + 0.5) / cells as f64;
                2.0 * (2.0 * PI * t).sin().powi(2)
            })
            .sum::<f64>()
            / cells as f64;
        assert!((oracle - 1.0).abs() < 1e-9);
        assert!((inner_product(&f, &f, &q).unwrap() - oracle).abs() < 1e-3);
    }

    #[test]
    fn inner_product_length_mismatch() {
        let q = Quadrature::uniform(10).unwrap();
        let f = SampledFunction::zeros(&uniform_grid(11)).unwrap();
        assert!(matches!(
            inner_product(&f, &f, &q),
            Err(KplError::InvalidArgument(_))
        ));
    }

    #[test]
    fn resample_examples() {
        let f = SampledFunction::new(vec![0.0, 1.0], vec![0.0, 2.0]).unwrap();
        assert_eq!(resample(&f, &[0.5]).unwrap().values(), &[1.0]);

        let g = SampledFunction::new(vec![0.1, 0.4, 0.7], vec![3.0, -1.0, 2.0]).unwrap();
        assert_eq!(resample(&g, g.locations()).unwrap(), g);

        let grid = uniform_grid(200);
        let sq = SampledFunction::from_fn(&grid, |t| t * t).unwrap();
        let v = resample(&sq, &[0.3]).unwrap().values()[0];
        assert!((v - 0.09).abs() < 5e-3);

        assert!(matches!(
            resample(&g, &[0.05]),
            Err(KplError::OutOfRange { .. })
        ));
    }

    #[test]
    fn mse_examples() {
        let a = SampledFunction::new(vec![0.0, 1.0], vec![1.0, -1.0]).unwrap();
        let z = SampledFunction::new(vec![0.0, 1.0], vec![0.0, 0.0]).unwrap();
        assert_eq!(mse(std::slice::from_ref(&a), std::slice::from_ref(&a)).unwrap(), 0.0);
        assert_eq!(mse(std::slice::from_ref(&a), std::slice::from_ref(&z)).unwrap(), 1.0);

        // per-function MSEs 0.2 and 0.4
        let loc: Vec<f64> = uniform_grid(5);
        let obs = SampledFunction::zeros(&loc).unwrap();
        let p1 = SampledFunction::new(loc.clone(), vec![1.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let p2 = SampledFunction::new(loc.clone(), vec![1.0, 1.0, 0.0, 0.0, 0.0]).unwrap();
        let v = mse(&[p1, p2], &[obs.clone(), obs]).unwrap();
        assert!((v - 0.3).abs() < 1e-15);
        assert!(mse(&[], &[]).is_err());
    }

    #[test]
    fn snr_examples() {
        let x = InputPoint::vector(vec![0.0]).unwrap();
        let f = SampledFunction::new(vec![0.0, 0.5, 1.0], vec![1.0, -1.0, 1.0]).unwrap();
        let s = PartialSample::new(vec![x.clone()], vec![f]).unwrap();
        assert!((snr(&s, 0.5).unwrap() - 2.0).abs() < 1e-15);

        let z = SampledFunction::zeros(&[0.0, 1.0]).unwrap();
        let s0 = PartialSample::new(vec![x.clone()], vec![z]).unwrap();
        assert_eq!(snr(&s0, 1.0).unwrap(), 0.0);

        let g = SampledFunction::new(vec![0.0, 1.0], vec![1.0, 3.0]).unwrap();
        let s1 = PartialSample::new(vec![x], vec![g]).unwrap();
        assert_eq!(snr(&s1, 1.0).unwrap(), 2.0);
        assert!(snr(&s1, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn inner_product_bilinear_symmetric(
            a in prop::collection::vec(-5.0f64..5.0, 17),
            b in prop::collection::vec(-5.0f64..5.0, 17),
            c in -3.0f64..3.0,
        ) {
            let q = Quadrature::uniform(17).unwrap();
            let f = SampledFunction::new(q.nodes().to_vec(), a.clone()).unwrap();
            let g = SampledFunction::new(q.nodes().to_vec(), b.clone()).unwrap();
            let fg = inner_product(&f, &g, &q).unwrap();
            prop_assert!((fg - inner_product(&g, &f, &q).unwrap()).abs() < 1e-12);
            prop_assert!(inner_product(&f, &f, &q).unwrap() >= 0.0);
            let scaled = f.with_values(a.iter().zip(&b).map(|(x, y)| c * x + y).collect()).unwrap();
            let lhs = inner_product(&scaled, &g, &q).unwrap();
            let rhs = c * fg + inner_product(&g, &g, &q).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-9);
        }

        #[test]
        fn mse_permutation_invariant(
            vals in prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 4), 2..6),
            rot in 0usize..6,
        ) {
            let loc = uniform_grid(4);
            let preds: Vec<_> = vals.iter().map(|v| SampledFunction::new(loc.clone(), v.clone()).unwrap()).collect();
            let obs: Vec<_> = vals.iter().map(|v| SampledFunction::new(loc.clone(), v.iter().map(|x| x * 0.5).collect()).unwrap()).collect();
            let base = mse(&preds, &obs).unwrap();
            let k = rot % preds.len();
            let mut p2 = preds.clone(); p2.rotate_left(k);
            let mut o2 = obs.clone(); o2.rotate_left(k);
            prop_assert!((base - mse(&p2, &o2).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn resample_exact_on_piecewise_linear(
            vals in prop::collection::vec(-3.0f64..3.0, 6),
            targets in prop::collection::vec(0.0f64..1.0, 1..10),
        ) {
            let loc = uniform_grid(6);
            let f = SampledFunction::new(loc.clone(), vals.clone()).unwrap();
            let mut t = targets.clone();
            t.sort_by(|a, b| a.partial_cmp(b).unwrap());
            t.dedup();
            let r = resample(&f, &t).unwrap();
            for (x, y) in t.iter().zip(r.values()) {
                // exact piecewise-linear evaluation
                let k = ((x * 5.0).floor() as usize).min(4);
                let w = x * 5.0 - k as f64;
                let exact = vals[k] * (1.0 - w) + vals[k + 1] * w;
                prop_assert!((exact - y).abs() < 1e-12);
            }
        }
    }
}
