//! Functional Nadaraya-Watson kernel estimator.

use crate::error::{KplError, Result};
use crate::functional::{resample_clamped, InputPoint, PartialSample, SampledFunction};

/// Distance between inputs: Euclidean for vectors, discretized L² (rows are
/// locations, averaged uniformly) for matrix-valued input functions.
pub fn semi_metric(a: &InputPoint, b: &InputPoint) -> Result<f64> {
    let sq = a.sq_distance(b)?;
    Ok(match a {
        InputPoint::Vector(_) => sq.sqrt(),
        InputPoint::Matrix(m) => (sq / m.nrows() as f64).sqrt(),
    })
}

#[derive(Debug, Clone)]
pub struct KeModel {
    bandwidth: f64,
    train: PartialSample,
}

impl KeModel {
    pub fn new(train: PartialSample, bandwidth: f64) -> Result<Self> {
        if !(bandwidth > 0.0) {
            return Err(KplError::invalid(format!("bandwidth must be positive, got {bandwidth}")));
        }
        if train.is_empty() {
            return Err(KplError::invalid("kernel estimator needs at least one training pair"));
        }
        Ok(Self { bandwidth, train })
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn training_sample(&self) -> &PartialSample {
        &self.train
    }

    /// Window weights `exp(-(S/h)²)`, rescaled so the nearest input has weight one.
    ///
    /// The rescaling cancels in the normalized average; when every raw weight
    /// would underflow it leaves exactly the nearest neighbours.
    fn weights(&self, x: &InputPoint) -> Result<Vec<f64>> {
        let dists = self
            .train
            .inputs()
            .iter()
            .map(|xi| semi_metric(x, xi))
            .collect::<Result<Vec<_>>>()?;
        let nearest = dists.iter().cloned().fold(f64::INFINITY, f64::min);
        let h2 = self.bandwidth * self.bandwidth;
        Ok(dists
            .iter()
            .map(|d| {
                if *d == nearest {
                    1.0
                } else {
                    (-(d * d - nearest * nearest) / h2).exp()
                }
            })
            .collect())
    }

    pub fn predict(&self, x: &InputPoint, targets: &[f64]) -> Result<SampledFunction> {
        let w = self.weights(x)?;
        let total: f64 = w.iter().sum();
        let mut acc = vec![0.0; targets.len()];
        for (wi, y) in w.iter().zip(self.train.outputs()) {
            if *wi == 0.0 {
                continue;
            }
            let r = resample_clamped(y, targets)?;
            for (a, v) in acc.iter_mut().zip(r.values()) {
                *a += wi * v;
            }
        }
        acc.iter_mut().for_each(|a| *a /= total);
        SampledFunction::new(targets.to_vec(), acc)
    }
}

pub fn ke_predict(model: &KeModel, x: &InputPoint, targets: &[f64]) -> Result<SampledFunction> {
    model.predict(x, targets)
}
