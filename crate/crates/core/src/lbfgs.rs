//! Limited-memory BFGS with a strong-Wolfe line search.

use std::collections::VecDeque;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbfgsOptions {
    pub history: usize,
    /// Stop when `‖∇f‖_∞` falls below this.
    pub tol: f64,
    pub max_iter: usize,
    pub c1: f64,
    pub c2: f64,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self {
            history: 10,
            tol: 1e-7,
            max_iter: 2000,
            c1: 1e-4,
            c2: 0.9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Converged,
    MaxIterations,
    /// No step satisfying the Wolfe conditions could be found; usually means
    /// the iterate is optimal to working precision.
    LineSearchFailed,
    NonFinite,
}

#[derive(Debug, Clone)]
pub struct LbfgsResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_inf: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub status: Status,
    /// Objective value after every accepted iteration (starting point first).
    pub trace: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

struct Probe {
    step: f64,
    value: f64,
    slope: f64,
    x: Vec<f64>,
    grad: Vec<f64>,
}

struct Search<'a, F> {
    f: &'a mut F,
    x: &'a [f64],
    dir: &'a [f64],
    f0: f64,
    slope0: f64,
    c1: f64,
    c2: f64,
    evaluations: usize,
}

impl<F: FnMut(&[f64]) -> (f64, Vec<f64>)> Search<'_, F> {
    fn probe(&mut self, step: f64) -> Probe {
        let x: Vec<f64> = self.x.iter().zip(self.dir).map(|(a, d)| a + step * d).collect();
        let (value, grad) = (self.f)(&x);
        self.evaluations += 1;
        let slope = dot(&grad, self.dir);
        Probe { step, value, slope, x, grad }
    }

    fn armijo(&self, p: &Probe) -> bool {
        p.value.is_finite() && p.value <= self.f0 + self.c1 * p.step * self.slope0
    }

    fn curvature(&self, p: &Probe) -> bool {
        p.slope.abs() <= -self.c2 * self.slope0
    }

    fn run(&mut self, initial: f64) -> Option<Probe> {
        let mut prev = Probe {
            step: 0.0,
            value: self.f0,
            slope: self.slope0,
            x: self.x.to_vec(),
            grad: Vec::new(),
        };
        let mut step = initial;
        for i in 0..40 {
            let p = self.probe(step);
            if !self.armijo(&p) || (i > 0 && p.value >= prev.value) {
                return self.zoom(prev, p);
            }
            if self.curvature(&p) {
                return Some(p);
            }
            if p.slope >= 0.0 {
                return self.zoom(p, prev);
            }
            step *= 2.0;
            prev = p;
        }
        None
    }

    fn zoom(&mut self, mut lo: Probe, mut hi: Probe) -> Option<Probe> {
        let mut best: Option<Probe> = None;
        for _ in 0..50 {
            let (a, b) = (lo.step, hi.step);
            let width = (b - a).abs();
            if width <= 1e-16 * a.abs().max(b.abs()).max(1e-300) {
                break;
            }
            let mut t = cubic_min(&lo, &hi).unwrap_or(0.5 * (a + b));
            let (left, right) = (a.min(b), a.max(b));
            let guard = 0.1 * width;
            if !(t > left + guard && t < right - guard) {
                t = 0.5 * (a + b);
            }
            let p = self.probe(t);
            if !self.armijo(&p) || p.value >= lo.value {
                hi = p;
            } else {
                if self.curvature(&p) {
                    return Some(p);
                }
                if p.slope * (hi.step - lo.step) >= 0.0 {
                    hi = std::mem::replace(&mut lo, p);
                } else {
                    lo = p;
                }
                if best.as_ref().is_none_or(|q| lo.value < q.value) {
                    best = Some(Probe {
                        step: lo.step,
                        value: lo.value,
                        slope: lo.slope,
                        x: lo.x.clone(),
                        grad: lo.grad.clone(),
                    });
                }
            }
        }
        // Accept a sufficient-decrease point even without the curvature condition.
        best.filter(|p| p.step > 0.0)
    }
}

fn cubic_min(a: &Probe, b: &Probe) -> Option<f64> {
    let d1 = a.slope + b.slope - 3.0 * (a.value - b.value) / (a.step - b.step);
    let disc = d1 * d1 - a.slope * b.slope;
    if !(disc >= 0.0) {
        return None;
    }
    let d2 = (b.step - a.step).signum() * disc.sqrt();
    let t = b.step - (b.step - a.step) * (b.slope + d2 - d1) / (b.slope - a.slope + 2.0 * d2);
    t.is_finite().then_some(t)
}

/// Minimize `f` (returning value and gradient) from `x0`.
pub fn minimize<F>(mut f: F, x0: Vec<f64>, opts: &LbfgsOptions) -> LbfgsResult
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let mut x = x0;
    let (mut value, mut grad) = f(&x);
    let mut evaluations = 1;
    let mut trace = vec![value];
    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.history);

    let mut iterations = 0;
    let status = loop {
        if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            break Status::NonFinite;
        }
        if inf_norm(&grad) < opts.tol {
            break Status::Converged;
        }
        if iterations >= opts.max_iter {
            break Status::MaxIterations;
        }

        // two-loop recursion
        let mut dir: Vec<f64> = grad.iter().map(|g| -g).collect();
        let mut alphas = Vec::with_capacity(pairs.len());
        for (s, y, rho) in pairs.iter().rev() {
            let a = rho * dot(s, &dir);
            dir.iter_mut().zip(y).for_each(|(d, yy)| *d -= a * yy);
            alphas.push(a);
        }
        if let Some((s, y, _)) = pairs.back() {
            let gamma = dot(s, y) / dot(y, y);
            dir.iter_mut().for_each(|d| *d *= gamma);
        }
        for ((s, y, rho), a) in pairs.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &dir);
            dir.iter_mut().zip(s).for_each(|(d, ss)| *d += (a - b) * ss);
        }
        let mut slope = dot(&grad, &dir);
        if !(slope < 0.0) {
            pairs.clear();
            dir = grad.iter().map(|g| -g).collect();
            slope = dot(&grad, &dir);
        }
        let initial = if pairs.is_empty() {
            (1.0 / dot(&grad, &grad).sqrt()).min(1.0)
        } else {
            1.0
        };

        let mut search = Search {
            f: &mut f,
            x: &x,
            dir: &dir,
            f0: value,
            slope0: slope,
            c1: opts.c1,
            c2: opts.c2,
            evaluations: 0,
        };
        let found = search.run(initial);
        evaluations += search.evaluations;
        let Some(p) = found else {
            if pairs.is_empty() {
                break Status::LineSearchFailed;
            }
            // retry once along steepest descent with fresh memory
            pairs.clear();
            continue;
        };

        let s: Vec<f64> = p.x.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = p.grad.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() && sy > 0.0 {
            if pairs.len() == opts.history {
                pairs.pop_front();
            }
            pairs.push_back((s, y, 1.0 / sy));
        }
        x = p.x;
        value = p.value;
        grad = p.grad;
        trace.push(value);
        iterations += 1;
    };

    LbfgsResult {
        grad_inf: inf_norm(&grad),
        x,
        value,
        iterations,
        evaluations,
        status,
        trace,
    }
}
