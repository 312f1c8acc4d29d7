//! Data loading, fitting and scoring shared by the subcommands.

use std::path::{Path, PathBuf};
use std::time::Instant;

use kpl::baselines::KeModel;
use kpl::datasets::{generate_toy, split_indices, ChannelScaler, OutputCentering, ToyGenerator};
use kpl::dictionary::{read_dictionary, Dictionary};
use kpl::dictlearn::{learn_dictionary, DlProblem};
use kpl::functional::{mse, uniform_grid, DomainMap, InputPoint, PartialSample, Quadrature, SampledFunction};
use kpl::io::{
    join_sample, load_model, read_inputs_csv, read_outputs_csv, save_model, write_inputs_csv, write_outputs_csv,
    InputKind,
};
use kpl::iterative::{minimize_objective, IterativeOptions, IterativeReport, Objective};
use kpl::ridge::{KplModel, PreparedRidge, RidgeEstimator};
use serde::{Deserialize, Serialize};

use crate::config::{DataConfig, DictionarySpec, LambdaSpec, MethodConfig, MethodKind, ViewChoice};
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone)]
pub struct Dataset {
    pub train: PartialSample,
    pub train_ids: Vec<i64>,
    pub test: Option<PartialSample>,
    pub test_ids: Vec<i64>,
    pub domain: DomainMap,
    pub generator: Option<ToyGenerator>,
    pub prep: Preprocessing,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Preprocessing {
    pub center: bool,
    pub standardize: bool,
}

/// Load or draw the data. Toy draws use `seed` as the sample seed.
pub fn load_data(cfg: &DataConfig, seed: u64) -> CliResult<Dataset> {
    match cfg {
        DataConfig::Toy {
            n_train,
            n_test,
            toy,
            center,
        } => {
            let mut toy = toy.clone();
            toy.sample_seed = seed;
            let all = generate_toy(&toy, n_train + n_test)?;
            let train_idx: Vec<usize> = (0..*n_train).collect();
            let test_idx: Vec<usize> = (*n_train..n_train + n_test).collect();
            let test = if *n_test > 0 { Some(all.subset(&test_idx)?) } else { None };
            Ok(Dataset {
                train: all.subset(&train_idx)?,
                train_ids: train_idx.iter().map(|&i| i as i64).collect(),
                test,
                test_ids: test_idx.iter().map(|&i| i as i64).collect(),
                domain: DomainMap::unit(),
                generator: Some(ToyGenerator::new(toy)?),
                prep: Preprocessing {
                    center: *center,
                    standardize: false,
                },
            })
        }
        DataConfig::Csv {
            train_inputs,
            train_outputs,
            test_inputs,
            test_outputs,
            n_test,
            input_kind,
            center,
            standardize,
        } => {
            let prep = Preprocessing {
                center: *center,
                standardize: *standardize,
            };
            let (ids, inputs) = read_inputs_csv(train_inputs, *input_kind)?;
            let outputs = read_outputs_csv(train_outputs, None)?;
            let domain = outputs.domain;
            let sample = join_sample(&ids, inputs, &outputs)?;
            if let (Some(ti), Some(to)) = (test_inputs, test_outputs) {
                let (tids, tin) = read_inputs_csv(ti, *input_kind)?;
                let tout = read_outputs_csv(to, Some(domain))?;
                let test = join_sample(&tids, tin, &tout)?;
                return Ok(Dataset {
                    train: sample,
                    train_ids: ids,
                    test: Some(test),
                    test_ids: tids,
                    domain,
                    generator: None,
                    prep,
                });
            }
            if *n_test == 0 {
                return Ok(Dataset {
                    train: sample,
                    train_ids: ids,
                    test: None,
                    test_ids: Vec::new(),
                    domain,
                    generator: None,
                    prep,
                });
            }
            if *n_test >= sample.len() {
                return Err(CliError::Input(format!(
                    "n_test = {n_test} leaves no training data out of {} samples",
                    sample.len()
                )));
            }
            let (train_idx, test_idx) = split_indices(sample.len(), *n_test, seed)?;
            Ok(Dataset {
                train: sample.subset(&train_idx)?,
                train_ids: train_idx.iter().map(|&i| ids[i]).collect(),
                test: Some(sample.subset(&test_idx)?),
                test_ids: test_idx.iter().map(|&i| ids[i]).collect(),
                domain,
                generator: None,
                prep,
            })
        }
    }
}

/// One tunable value of a method.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "param", content = "value", rename_all = "snake_case")]
pub enum Param {
    Lambda(f64),
    /// Constant of the `c √d / √n` schedule.
    C(f64),
    Bandwidth(f64),
}

impl Param {
    pub fn name(&self) -> &'static str {
        match self {
            Param::Lambda(_) => "lambda",
            Param::C(_) => "c",
            Param::Bandwidth(_) => "bandwidth",
        }
    }

    pub fn value(&self) -> f64 {
        match *self {
            Param::Lambda(v) | Param::C(v) | Param::Bandwidth(v) => v,
        }
    }

    /// Regularization actually used for `n` training pairs and `d` atoms.
    pub fn lambda(&self, n: usize, d: usize) -> Option<f64> {
        match *self {
            Param::Lambda(l) => Some(l),
            Param::C(c) => Some(c * (d as f64).sqrt() / (n as f64).sqrt()),
            Param::Bandwidth(_) => None,
        }
    }
}

pub fn params(method: &MethodConfig) -> Vec<Param> {
    if let Some(h) = &method.bandwidth {
        return h.values().into_iter().map(Param::Bandwidth).collect();
    }
    match &method.lambda {
        Some(LambdaSpec::Fixed(v)) => v.values().into_iter().map(Param::Lambda).collect(),
        Some(LambdaSpec::Scheduled(s)) => s.c.values().into_iter().map(Param::C).collect(),
        None => Vec::new(),
    }
}

/// Number of atoms the method's dictionary will have, without learning it.
pub fn dictionary_dim(method: &MethodConfig) -> CliResult<Option<usize>> {
    Ok(match &method.dictionary {
        None => None,
        Some(DictionarySpec::Learned { atoms, path: None, .. }) => Some(*atoms),
        Some(spec) => Some(fixed_dictionary(spec)?.expect("fixed family").dim()),
    })
}

fn stem(path: &Path) -> PathBuf {
    if path.extension().is_some_and(|e| e == "json" || e == "csv") {
        path.with_extension("")
    } else {
        path.to_path_buf()
    }
}

/// Dictionaries that do not depend on the training data.
fn fixed_dictionary(spec: &DictionarySpec) -> CliResult<Option<Dictionary>> {
    Ok(Some(match spec {
        DictionarySpec::Fourier { frequencies } => Dictionary::fourier(*frequencies)?,
        DictionarySpec::Wavelet {
            vanishing_moments,
            levels,
        } => Dictionary::wavelet(*vanishing_moments, *levels)?,
        DictionarySpec::Rff {
            lengthscale,
            atoms,
            seed,
        } => Dictionary::rff(*lengthscale, *atoms, *seed)?,
        DictionarySpec::File { path } | DictionarySpec::Learned { path: Some(path), .. } => {
            read_dictionary(&stem(path))?
        }
        DictionarySpec::Learned { path: None, .. } => return Ok(None),
    }))
}

fn build_dictionary(spec: &DictionarySpec, train: &PartialSample, nodes: usize, seed: u64) -> CliResult<Dictionary> {
    if let Some(d) = fixed_dictionary(spec)? {
        return Ok(d);
    }
    let DictionarySpec::Learned {
        atoms,
        tau,
        max_rounds,
        tol,
        ..
    } = spec
    else {
        unreachable!("only learned dictionaries depend on the data")
    };
    let q = Quadrature::trapezoid(&uniform_grid(nodes))?;
    let mut problem = DlProblem::from_sample(train, q, *atoms, *tau)?;
    problem.max_rounds = *max_rounds;
    problem.tol = *tol;
    Ok(learn_dictionary(&problem, seed)?.dictionary)
}

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct Timings {
    /// Centering, scaling, dictionary, kernel matrix, Gram and right-hand side.
    pub preprocess_s: f64,
    /// The linear solve or the quasi-Newton run.
    pub fit_s: f64,
    pub predict_s: f64,
}

#[derive(Debug, Clone)]
pub enum Predictor {
    Kpl(Box<KplModel>),
    Ke(KeModel),
}

#[derive(Debug, Clone)]
pub struct Fitted {
    pub method: String,
    pub kind: MethodKind,
    pub param: Option<Param>,
    pub lambda: Option<f64>,
    pub predictor: Predictor,
    pub centering: Option<OutputCentering>,
    pub scaler: Option<ChannelScaler>,
    pub timings: Timings,
    pub solver: Option<IterativeReport>,
}

/// Every output observed on one shared grid, if any.
fn shared_grid(sample: &PartialSample) -> Option<Vec<f64>> {
    let grid = sample.outputs().first()?.locations().to_vec();
    sample.on_grid(&grid).then_some(grid)
}

pub fn fit(method: &MethodConfig, param: Param, train: &PartialSample, prep: Preprocessing, seed: u64) -> CliResult<Fitted> {
    let start = Instant::now();
    let centering = if prep.center { Some(OutputCentering::fit(train)?) } else { None };
    let scaler = if prep.standardize { Some(ChannelScaler::fit(train.inputs())?) } else { None };
    let mut sample = match &centering {
        Some(c) => c.center(train)?,
        None => train.clone(),
    };
    if let Some(s) = &scaler {
        sample = sample.with_inputs(s.apply(sample.inputs())?)?;
    }
    let finish = |predictor, lambda, preprocess_s, fit_s, solver| Fitted {
        method: method.label(),
        kind: method.kind,
        param: Some(param),
        lambda,
        predictor,
        centering: centering.clone(),
        scaler: scaler.clone(),
        timings: Timings {
            preprocess_s,
            fit_s,
            predict_s: 0.0,
        },
        solver,
    };

    if let Param::Bandwidth(h) = param {
        let pre = start.elapsed().as_secs_f64();
        let t = Instant::now();
        let ke = KeModel::new(sample, h)?;
        return Ok(finish(Predictor::Ke(ke), None, pre, t.elapsed().as_secs_f64(), None));
    }

    let spec = method
        .dictionary
        .as_ref()
        .ok_or_else(|| CliError::Config(format!("method {:?} has no dictionary", method.label())))?;
    let dict = build_dictionary(spec, &sample, method.quadrature_nodes, seed)?;
    let lambda = param.lambda(sample.len(), dict.dim()).expect("regularized method");
    let structure = method.structure();
    let gram_q = Quadrature::trapezoid(&uniform_grid(method.quadrature_nodes))?;

    if method.kind == MethodKind::Iterative {
        let grid = shared_grid(&sample);
        let objective = match (method.view, grid) {
            (ViewChoice::Partial, _) | (ViewChoice::Auto, None) => {
                Objective::partial(&sample, &dict, &method.kernel, &structure, lambda, method.loss())?
            }
            (ViewChoice::Full, None) => {
                return Err(CliError::Input("full view needs every output on one shared grid".into()))
            }
            (_, Some(g)) => {
                let q = Quadrature::trapezoid(&g)?;
                Objective::full(&sample, &dict, &method.kernel, &structure, &q, lambda, method.loss())?
            }
        };
        let pre = start.elapsed().as_secs_f64();
        let mut opts = IterativeOptions::default();
        if let Some(t) = method.tol {
            opts.tol = t;
        }
        if let Some(m) = method.max_iter {
            opts.max_iter = m;
        }
        let t = Instant::now();
        let (alpha, report) = minimize_objective(&objective, &opts)?;
        let model = KplModel::new(alpha, sample.inputs().to_vec(), dict, method.kernel, structure, lambda)?;
        return Ok(finish(
            Predictor::Kpl(Box::new(model)),
            Some(lambda),
            pre,
            t.elapsed().as_secs_f64(),
            Some(report),
        ));
    }

    let full_q;
    let estimator = match method.kind {
        MethodKind::RidgePlugin | MethodKind::OneBe => RidgeEstimator::Plugin(&gram_q),
        MethodKind::RidgePersample => RidgeEstimator::PerSampleGram,
        MethodKind::RidgeFull => {
            let g = shared_grid(&sample)
                .ok_or_else(|| CliError::Input("ridge_full needs every output on one shared grid".into()))?;
            full_q = Quadrature::trapezoid(&g)?;
            RidgeEstimator::Full(&full_q)
        }
        MethodKind::Iterative | MethodKind::Ke => unreachable!("handled above"),
    };
    let prepared = PreparedRidge::new(&sample, &dict, &method.kernel, &structure, estimator, lambda)?;
    let pre = start.elapsed().as_secs_f64();
    let t = Instant::now();
    let model = prepared.solve()?;
    Ok(finish(Predictor::Kpl(Box::new(model)), Some(lambda), pre, t.elapsed().as_secs_f64(), None))
}

impl Fitted {
    /// Predictions in the original output units.
    pub fn predict(&self, inputs: &[InputPoint], targets: &[&[f64]]) -> CliResult<Vec<SampledFunction>> {
        let scaled;
        let inputs = match &self.scaler {
            Some(s) => {
                scaled = s.apply(inputs)?;
                &scaled[..]
            }
            None => inputs,
        };
        let preds = match &self.predictor {
            Predictor::Kpl(m) => m.predict_many(inputs, targets)?,
            Predictor::Ke(m) => inputs
                .iter()
                .zip(targets)
                .map(|(x, t)| m.predict(x, t))
                .collect::<kpl::Result<Vec<_>>>()?,
        };
        Ok(match &self.centering {
            Some(c) => c.restore(&preds)?,
            None => preds,
        })
    }

    /// Mean squared error at the observed locations of `sample`.
    pub fn score(&self, sample: &PartialSample) -> CliResult<f64> {
        let targets: Vec<&[f64]> = sample.outputs().iter().map(|f| f.locations()).collect();
        let preds = self.predict(sample.inputs(), &targets)?;
        Ok(mse(&preds, sample.outputs())?)
    }

    /// Score and record the time spent predicting.
    pub fn timed_score(&mut self, sample: &PartialSample) -> CliResult<f64> {
        let t = Instant::now();
        let s = self.score(sample);
        self.timings.predict_s += t.elapsed().as_secs_f64();
        s
    }
}

/// Fit and score on held-out data, failures turned into errors for the caller.
pub fn fit_and_score(
    method: &MethodConfig,
    param: Param,
    train: &PartialSample,
    test: &PartialSample,
    prep: Preprocessing,
    seed: u64,
) -> CliResult<f64> {
    fit(method, param, train, prep, seed)?.score(test)
}

#[derive(Debug, Serialize, Deserialize)]
struct SavedHeader {
    method: String,
    kind: MethodKind,
    lambda: Option<f64>,
    bandwidth: Option<f64>,
    input_kind: InputKind,
    centered: bool,
    scaler: Option<ChannelScaler>,
}

const HEADER: &str = "predictor.json";

pub fn save_fitted(f: &Fitted, dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir)?;
    let unit = DomainMap::unit();
    let (bandwidth, input_kind) = match &f.predictor {
        Predictor::Kpl(m) => {
            save_model(m, dir)?;
            (None, kind_of(&m.training_inputs))
        }
        Predictor::Ke(m) => {
            let train = m.training_sample();
            let ids: Vec<i64> = (0..train.len() as i64).collect();
            write_inputs_csv(&dir.join("inputs.csv"), &ids, train.inputs())?;
            write_outputs_csv(&dir.join("outputs.csv"), &ids, train.outputs(), &unit)?;
            (Some(m.bandwidth()), kind_of(train.inputs()))
        }
    };
    if let Some(c) = &f.centering {
        write_outputs_csv(&dir.join("output_mean.csv"), &[0], std::slice::from_ref(c.mean()), &unit)?;
    }
    let header = SavedHeader {
        method: f.method.clone(),
        kind: f.kind,
        lambda: f.lambda,
        bandwidth,
        input_kind,
        centered: f.centering.is_some(),
        scaler: f.scaler.clone(),
    };
    std::fs::write(dir.join(HEADER), serde_json::to_string_pretty(&header)?)?;
    Ok(())
}

fn kind_of(inputs: &[InputPoint]) -> InputKind {
    match inputs.first() {
        Some(InputPoint::Matrix(_)) => InputKind::Matrix,
        _ => InputKind::Vector,
    }
}

pub fn load_fitted(dir: &Path) -> CliResult<Fitted> {
    let text = std::fs::read_to_string(dir.join(HEADER))
        .map_err(|e| CliError::Input(format!("{}: {e}", dir.join(HEADER).display())))?;
    let header: SavedHeader = serde_json::from_str(&text)?;
    let unit = Some(DomainMap::unit());
    let predictor = match header.bandwidth {
        Some(h) => {
            let (ids, inputs) = read_inputs_csv(&dir.join("inputs.csv"), header.input_kind)?;
            let outputs = read_outputs_csv(&dir.join("outputs.csv"), unit)?;
            Predictor::Ke(KeModel::new(join_sample(&ids, inputs, &outputs)?, h)?)
        }
        None => Predictor::Kpl(Box::new(load_model(dir)?)),
    };
    let centering = if header.centered {
        let t = read_outputs_csv(&dir.join("output_mean.csv"), unit)?;
        let mean = t
            .functions
            .into_iter()
            .next()
            .ok_or_else(|| CliError::Input("empty output_mean.csv".into()))?;
        Some(OutputCentering::from_mean(mean))
    } else {
        None
    };
    Ok(Fitted {
        method: header.method,
        kind: header.kind,
        param: None,
        lambda: header.lambda,
        predictor,
        centering,
        scaler: header.scaler,
        timings: Timings::default(),
        solver: None,
    })
}
