//! Synthetic toy data, corruption injectors, preprocessing and cross-validation.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::seq::index::sample as sample_indices;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{KplError, Result};
use crate::functional::{
    linspace, resample_clamped, uniform_grid, InputPoint, PartialSample, SampledFunction,
};
use crate::par;

/// Cardinal cubic B-spline on `[0, 4]`.
pub fn b4(z: f64) -> f64 {
    if !(0.0..4.0).contains(&z) {
        return 0.0;
    }
    let v = if z < 1.0 {
        z * z * z
    } else if z < 2.0 {
        -3.0 * z * z * z + 12.0 * z * z - 12.0 * z + 4.0
    } else if z < 3.0 {
        3.0 * z * z * z - 24.0 * z * z + 60.0 * z - 44.0
    } else {
        (4.0 - z).powi(3)
    };
    v / 6.0
}

/// `B4(4ζ + 2)`: width one, centered at zero.
pub fn b4_centered(z: f64) -> f64 {
    b4(4.0 * z + 2.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyConfig {
    pub lengthscales: Vec<f64>,
    pub input_noise: f64,
    pub input_grid: usize,
    pub output_grid: usize,
    pub input_span: (f64, f64),
    pub gp_seed: u64,
    pub sample_seed: u64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            lengthscales: vec![0.1, 0.25, 0.1, 0.25],
            input_noise: 0.07,
            input_grid: 200,
            output_grid: 200,
            input_span: (0.0, 5.0),
            gp_seed: 0,
            sample_seed: 1,
        }
    }
}

impl ToyConfig {
    pub fn r(&self) -> usize {
        self.lengthscales.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.lengthscales.is_empty() || self.lengthscales.iter().any(|b| !(*b > 0.0) || !b.is_finite()) {
            return Err(KplError::invalid("toy lengthscales must be positive and non-empty"));
        }
        if !(self.input_noise >= 0.0) || !self.input_noise.is_finite() {
            return Err(KplError::invalid(format!("input noise must be >= 0, got {}", self.input_noise)));
        }
        if self.input_grid < 2 || self.output_grid < 2 {
            return Err(KplError::invalid("toy grids need at least two points"));
        }
        let (lo, hi) = self.input_span;
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(KplError::invalid("toy input span must be an increasing finite interval"));
        }
        Ok(())
    }
}

/// Toy generator with its Gaussian process paths drawn once and held fixed.
#[derive(Debug, Clone)]
pub struct ToyGenerator {
    config: ToyConfig,
    input_grid: Vec<f64>,
    output_grid: Vec<f64>,
    /// `output_grid × r`
    paths: DMatrix<f64>,
    /// `input_grid × r`, noiseless input atoms `B̄4(ζ - t)`
    splines: DMatrix<f64>,
}

const GP_JITTER: f64 = 1e-10;

impl ToyGenerator {
    pub fn new(config: ToyConfig) -> Result<Self> {
        config.validate()?;
        let output_grid = uniform_grid(config.output_grid);
        let input_grid = linspace(config.input_span.0, config.input_span.1, config.input_grid);
        let r = config.r();
        let m = output_grid.len();
        let mut rng = ChaCha8Rng::seed_from_u64(config.gp_seed);
        let mut paths = DMatrix::zeros(m, r);
        for (t, &b) in config.lengthscales.iter().enumerate() {
            let cov = DMatrix::from_fn(m, m, |i, j| {
                let d = output_grid[i] - output_grid[j];
                (-(d * d) / (b * b)).exp() + if i == j { GP_JITTER } else { 0.0 }
            });
            let chol = Cholesky::new(cov).ok_or_else(|| {
                KplError::numeric(format!("covariance of path {t} (lengthscale {b}) is not positive definite"))
            })?;
            let z = DVector::from_fn(m, |_, _| StandardNormal.sample(&mut rng));
            paths.set_column(t, &(chol.l() * z));
        }
        let splines = DMatrix::from_fn(input_grid.len(), r, |p, t| b4_centered(input_grid[p] - (t + 1) as f64));
        Ok(Self {
            config,
            input_grid,
            output_grid,
            paths,
            splines,
        })
    }

    pub fn config(&self) -> &ToyConfig {
        &self.config
    }

    pub fn output_grid(&self) -> &[f64] {
        &self.output_grid
    }

    pub fn input_grid(&self) -> &[f64] {
        &self.input_grid
    }

    pub fn draw_coefficients(&self, rng: &mut impl Rng) -> Vec<f64> {
        (0..self.config.r()).map(|_| rng.random_range(-1.0..=1.0)).collect()
    }

    /// Noiseless input curve on the input grid.
    pub fn clean_input(&self, coefficients: &[f64]) -> Vec<f64> {
        (&self.splines * DVector::from_column_slice(coefficients)).iter().copied().collect()
    }

    /// Output function on the output grid.
    pub fn output(&self, coefficients: &[f64]) -> SampledFunction {
        let v = &self.paths * DVector::from_column_slice(coefficients);
        SampledFunction::new(self.output_grid.clone(), v.iter().copied().collect())
            .expect("toy outputs live on a valid grid")
    }

    /// Build a sample from explicit coefficient vectors; input noise comes from `rng`.
    pub fn sample_with_coefficients(&self, coefficients: &[Vec<f64>], rng: &mut impl Rng) -> Result<PartialSample> {
        let noise = Normal::new(0.0, self.config.input_noise).map_err(|e| KplError::invalid(e.to_string()))?;
        let mut inputs = Vec::with_capacity(coefficients.len());
        let mut outputs = Vec::with_capacity(coefficients.len());
        for a in coefficients {
            if a.len() != self.config.r() {
                return Err(KplError::invalid(format!(
                    "expected {} coefficients, got {}",
                    self.config.r(),
                    a.len()
                )));
            }
            let mut x = self.clean_input(a);
            if self.config.input_noise > 0.0 {
                x.iter_mut().for_each(|v| *v += noise.sample(rng));
            }
            inputs.push(InputPoint::vector(x)?);
            outputs.push(self.output(a));
        }
        PartialSample::new(inputs, outputs)
    }

    pub fn sample(&self, n: usize, rng: &mut impl Rng) -> Result<PartialSample> {
        if n == 0 {
            return Err(KplError::invalid("toy sample size must be at least 1"));
        }
        let coefs: Vec<Vec<f64>> = (0..n).map(|_| self.draw_coefficients(rng)).collect();
        self.sample_with_coefficients(&coefs, rng)
    }
}

/// `n` toy pairs from the configured seeds.
pub fn generate_toy(config: &ToyConfig, n: usize) -> Result<PartialSample> {
    let generator = ToyGenerator::new(config.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.sample_seed);
    generator.sample(n, &mut rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Corruption {
    LocalOutliers { fraction: f64 },
    LabelNoise { fraction: f64 },
    Missing { fraction: f64 },
    LocalNoise { sigma: f64 },
}

impl Corruption {
    pub fn name(&self) -> &'static str {
        match self {
            Corruption::LocalOutliers { .. } => "local_outliers",
            Corruption::LabelNoise { .. } => "label_noise",
            Corruption::Missing { .. } => "missing",
            Corruption::LocalNoise { .. } => "local_noise",
        }
    }

    pub fn level(&self) -> f64 {
        match *self {
            Corruption::LocalOutliers { fraction }
            | Corruption::LabelNoise { fraction }
            | Corruption::Missing { fraction } => fraction,
            Corruption::LocalNoise { sigma } => sigma,
        }
    }

    /// Same kind at another level.
    pub fn with_level(&self, level: f64) -> Self {
        match self {
            Corruption::LocalOutliers { .. } => Corruption::LocalOutliers { fraction: level },
            Corruption::LabelNoise { .. } => Corruption::LabelNoise { fraction: level },
            Corruption::Missing { .. } => Corruption::Missing { fraction: level },
            Corruption::LocalNoise { .. } => Corruption::LocalNoise { sigma: level },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.level();
        match self {
            Corruption::LocalNoise { .. } if !(v >= 0.0) || !v.is_finite() => {
                Err(KplError::invalid(format!("noise level must be >= 0, got {v}")))
            }
            Corruption::LocalNoise { .. } => Ok(()),
            _ if !(0.0..=1.0).contains(&v) => Err(KplError::invalid(format!(
                "{} fraction must lie in [0, 1], got {v}",
                self.name()
            ))),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorruptionSpec {
    #[serde(flatten)]
    pub kind: Corruption,
    pub seed: u64,
}

fn count_of(fraction: f64, total: usize) -> usize {
    ((fraction * total as f64).round() as usize).min(total)
}

/// Corrupt the outputs of `sample`; inputs are never touched.
///
/// Label noise draws replacement outputs from `source`, which must then be given.
pub fn corrupt(sample: &PartialSample, spec: &CorruptionSpec, source: Option<&ToyGenerator>) -> Result<PartialSample> {
    spec.kind.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let outputs = sample.outputs();
    let new_outputs: Vec<SampledFunction> = match spec.kind {
        Corruption::LocalOutliers { fraction } => outputs
            .iter()
            .map(|f| {
                let k = count_of(fraction, f.len());
                if k == 0 {
                    return Ok(f.clone());
                }
                let (lo, hi) = f
                    .values()
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
                let mut values = f.values().to_vec();
                for p in sample_indices(&mut rng, f.len(), k) {
                    values[p] = if hi > lo { rng.random_range(lo..=hi) } else { lo };
                }
                f.with_values(values)
            })
            .collect::<Result<_>>()?,
        Corruption::LabelNoise { fraction } => {
            let k = count_of(fraction, outputs.len());
            let mut out = outputs.to_vec();
            if k > 0 {
                let generator = source.ok_or_else(|| {
                    KplError::invalid("label noise needs the toy generator as a source of replacement outputs")
                })?;
                for i in sample_indices(&mut rng, outputs.len(), k) {
                    let a = generator.draw_coefficients(&mut rng);
                    let fresh = generator.output(&a);
                    out[i] = resample_clamped(&fresh, outputs[i].locations())?;
                }
            }
            out
        }
        Corruption::Missing { fraction } => outputs
            .iter()
            .map(|f| {
                let m = f.len();
                let mut drop = count_of(fraction, m);
                if drop >= m {
                    log::warn!("missing fraction {fraction} would empty a function of {m} observations; keeping one");
                    drop = m - 1;
                }
                let mut keep = sample_indices(&mut rng, m, m - drop).into_vec();
                keep.sort_unstable();
                f.select(&keep)
            })
            .collect::<Result<_>>()?,
        Corruption::LocalNoise { sigma } => {
            if sigma == 0.0 {
                outputs.to_vec()
            } else {
                let noise = Normal::new(0.0, sigma).map_err(|e| KplError::invalid(e.to_string()))?;
                outputs
                    .iter()
                    .map(|f| f.with_values(f.values().iter().map(|v| v + noise.sample(&mut rng)).collect()))
                    .collect::<Result<_>>()?
            }
        }
    };
    sample.with_outputs(new_outputs)
}

/// Pointwise mean of training outputs on the union of their locations.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputCentering {
    mean: SampledFunction,
}

impl OutputCentering {
    pub fn fit(train: &PartialSample) -> Result<Self> {
        if train.is_empty() {
            return Err(KplError::invalid("cannot center with an empty training set"));
        }
        let mut grid: Vec<f64> = train.outputs().iter().flat_map(|f| f.locations().iter().copied()).collect();
        grid.sort_by(f64::total_cmp);
        grid.dedup();
        let mut acc = vec![0.0; grid.len()];
        for f in train.outputs() {
            for (a, t) in acc.iter_mut().zip(&grid) {
                *a += f.eval_clamped(*t);
            }
        }
        let n = train.len() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        Ok(Self {
            mean: SampledFunction::new(grid, acc)?,
        })
    }

    /// Rebuild from a stored mean function.
    pub fn from_mean(mean: SampledFunction) -> Self {
        Self { mean }
    }

    pub fn mean(&self) -> &SampledFunction {
        &self.mean
    }

    fn shift(&self, f: &SampledFunction, sign: f64) -> Result<SampledFunction> {
        let values = f
            .values()
            .iter()
            .zip(f.locations())
            .map(|(v, t)| v + sign * self.mean.eval_clamped(*t))
            .collect();
        f.with_values(values)
    }

    pub fn center(&self, sample: &PartialSample) -> Result<PartialSample> {
        let outs = sample
            .outputs()
            .iter()
            .map(|f| self.shift(f, -1.0))
            .collect::<Result<Vec<_>>>()?;
        sample.with_outputs(outs)
    }

    /// Add the mean back to predictions.
    pub fn restore(&self, predictions: &[SampledFunction]) -> Result<Vec<SampledFunction>> {
        predictions.iter().map(|f| self.shift(f, 1.0)).collect()
    }
}

/// Center `apply_to` with the mean of `train`; returns the centered sample and the mean.
pub fn center_outputs(train: &PartialSample, apply_to: &PartialSample) -> Result<(PartialSample, SampledFunction)> {
    let c = OutputCentering::fit(train)?;
    Ok((c.center(apply_to)?, c.mean.clone()))
}

/// Per-channel mean and standard deviation of matrix-valued inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelScaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ChannelScaler {
    /// Channels are the columns of each input matrix; statistics pool every
    /// training sample and location, with an `N - 1` denominator.
    pub fn fit(train: &[InputPoint]) -> Result<Self> {
        let first = train.first().ok_or_else(|| KplError::invalid("no training inputs to standardize"))?;
        let InputPoint::Matrix(m0) = first else {
            return Err(KplError::invalid("channel standardization needs matrix-valued inputs"));
        };
        let k = m0.ncols();
        let mut sum = vec![0.0; k];
        let mut count = 0usize;
        for x in train {
            let InputPoint::Matrix(m) = x else {
                return Err(KplError::invalid("channel standardization needs matrix-valued inputs"));
            };
            if m.ncols() != k {
                return Err(KplError::invalid(format!("inputs have {} and {} channels", k, m.ncols())));
            }
            for (c, s) in sum.iter_mut().enumerate() {
                *s += m.column(c).sum();
            }
            count += m.nrows();
        }
        if count < 2 {
            return Err(KplError::invalid("channel standardization needs at least two entries per channel"));
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
        let mut ss = vec![0.0; k];
        for x in train {
            if let InputPoint::Matrix(m) = x {
                for (c, acc) in ss.iter_mut().enumerate() {
                    *acc += m.column(c).iter().map(|v| (v - mean[c]).powi(2)).sum::<f64>();
                }
            }
        }
        let std = ss
            .iter()
            .enumerate()
            .map(|(c, s)| {
                let sd = (s / (count - 1) as f64).sqrt();
                if sd > 0.0 {
                    sd
                } else {
                    log::warn!("channel {c} has zero variance; using unit scale");
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn apply(&self, inputs: &[InputPoint]) -> Result<Vec<InputPoint>> {
        inputs
            .iter()
            .map(|x| match x {
                InputPoint::Matrix(m) if m.ncols() == self.mean.len() => {
                    let z = DMatrix::from_fn(m.nrows(), m.ncols(), |r, c| (m[(r, c)] - self.mean[c]) / self.std[c]);
                    InputPoint::matrix(z)
                }
                _ => Err(KplError::invalid(format!(
                    "expected matrix inputs with {} channels",
                    self.mean.len()
                ))),
            })
            .collect()
    }
}

/// Standardize `apply_to` with statistics of `train`.
pub fn standardize_channels(train: &[InputPoint], apply_to: &[InputPoint]) -> Result<Vec<InputPoint>> {
    ChannelScaler::fit(train)?.apply(apply_to)
}

/// Seeded random partition of `0..n` into sorted `(train, test)` index lists.
pub fn split_indices(n: usize, n_test: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n_test == 0 || n_test >= n {
        return Err(KplError::invalid(format!("test size {n_test} must be in 1..{n}")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (test, train) = idx.split_at(n_test);
    let mut train = train.to_vec();
    let mut test = test.to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Seeded random split into `(train, test)` with `n_test` held out.
pub fn train_test_split(sample: &PartialSample, n_test: usize, seed: u64) -> Result<(PartialSample, PartialSample)> {
    let (train, test) = split_indices(sample.len(), n_test, seed)?;
    Ok((sample.subset(&train)?, sample.subset(&test)?))
}

/// Fold label of every sample, balanced and seeded.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut label = vec![0; n];
    for (pos, &i) in idx.iter().enumerate() {
        label[i] = pos % folds;
    }
    label
}

#[derive(Debug, Clone, Serialize)]
pub struct CvOutcome {
    pub best: usize,
    /// `scores[c][f]`: held-out score of config `c` on fold `f` (NaN if the fit failed).
    pub scores: Vec<Vec<f64>>,
    pub mean_scores: Vec<f64>,
}

/// K-fold cross-validation over `configs`.
///
/// `score(config, train, held_out)` returns the held-out error. Lower mean wins;
/// exact ties go to the config with the larger `strength` (stronger regularization).
pub fn kfold_cv<C, S, F>(
    sample: &PartialSample,
    folds: usize,
    seed: u64,
    configs: &[C],
    strength: S,
    score: F,
) -> Result<CvOutcome>
where
    C: Sync,
    S: Fn(&C) -> f64,
    F: Fn(&C, &PartialSample, &PartialSample) -> Result<f64> + Sync,
{
    if configs.is_empty() {
        return Err(KplError::invalid("cross-validation grid is empty"));
    }
    if folds < 2 || sample.len() < folds {
        return Err(KplError::invalid(format!(
            "need 2 <= folds <= n, got {folds} folds for {} samples",
            sample.len()
        )));
    }
    let labels = fold_assignment(sample.len(), folds, seed);
    let splits = (0..folds)
        .map(|f| {
            let train: Vec<usize> = (0..sample.len()).filter(|&i| labels[i] != f).collect();
            let test: Vec<usize> = (0..sample.len()).filter(|&i| labels[i] == f).collect();
            Ok((sample.subset(&train)?, sample.subset(&test)?))
        })
        .collect::<Result<Vec<_>>>()?;

    let cells = par::map_range(configs.len() * folds, |cell| {
        let (c, f) = (cell / folds, cell % folds);
        match score(&configs[c], &splits[f].0, &splits[f].1) {
            Ok(v) if v.is_finite() => v,
            Ok(_) => f64::NAN,
            Err(e) => {
                log::warn!("config {c} failed on fold {f}: {e}");
                f64::NAN
            }
        }
    });
    let scores: Vec<Vec<f64>> = cells.chunks(folds).map(|c| c.to_vec()).collect();
    let mean_scores: Vec<f64> = scores.iter().map(|s| s.iter().sum::<f64>() / folds as f64).collect();

    let mut best: Option<usize> = None;
    for (c, &m) in mean_scores.iter().enumerate() {
        if m.is_nan() {
            continue;
        }
        best = match best {
            None => Some(c),
            Some(b) if m < mean_scores[b] || (m == mean_scores[b] && strength(&configs[c]) > strength(&configs[b])) => {
                Some(c)
            }
            keep => keep,
        };
    }
    let best = best.ok_or_else(|| KplError::numeric("every cross-validation fit failed"))?;
    Ok(CvOutcome {
        best,
        scores,
        mean_scores,
    })
}
