//! Experiment configuration (TOML).
//!
//! Every table rejects unknown keys. Relative paths resolve against the
//! directory holding the config file.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use kpl::datasets::{Corruption, ToyConfig};
use kpl::io::InputKind;
use kpl::iterative::GroundLoss;
use kpl::kernels::{OutputStructure, ScalarKernel};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed; every random draw derives from it.
    #[serde(default)]
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub data: Option<DataConfig>,
    /// Shorthand for a single entry of `methods`.
    pub method: Option<MethodConfig>,
    #[serde(default)]
    pub methods: Vec<MethodConfig>,
    #[serde(default)]
    pub cv: CvConfig,
    pub robustness: Option<RobustnessConfig>,
    pub dictlearn: Option<DictLearnConfig>,
    pub predict: Option<PredictConfig>,
    pub evaluate: Option<EvaluateConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataConfig {
    Toy {
        n_train: usize,
        #[serde(default = "default_n_test")]
        n_test: usize,
        #[serde(default)]
        toy: ToyConfig,
        #[serde(default)]
        center: bool,
    },
    Csv {
        train_inputs: PathBuf,
        train_outputs: PathBuf,
        test_inputs: Option<PathBuf>,
        test_outputs: Option<PathBuf>,
        /// Held-out count when no test files are given; 0 keeps everything for training.
        #[serde(default)]
        n_test: usize,
        #[serde(default)]
        input_kind: InputKind,
        #[serde(default)]
        center: bool,
        #[serde(default)]
        standardize: bool,
    },
}

fn default_n_test() -> usize {
    100
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MethodKind {
    #[serde(rename = "ridge_plugin")]
    RidgePlugin,
    #[serde(rename = "ridge_persample")]
    RidgePersample,
    #[serde(rename = "ridge_full")]
    RidgeFull,
    #[serde(rename = "iterative")]
    Iterative,
    #[serde(rename = "ke")]
    Ke,
    /// Plug-in ridge with `B = I`, one scalar problem per atom.
    #[serde(rename = "1be")]
    OneBe,
}

impl MethodKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            MethodKind::RidgePlugin => "ridge_plugin",
            MethodKind::RidgePersample => "ridge_persample",
            MethodKind::RidgeFull => "ridge_full",
            MethodKind::Iterative => "iterative",
            MethodKind::Ke => "ke",
            MethodKind::OneBe => "1be",
        }
    }
}

/// A single value or a list of values.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(f64),
    Many(Vec<f64>),
}

impl OneOrMany {
    pub fn values(&self) -> Vec<f64> {
        match self {
            OneOrMany::One(v) => vec![*v],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    /// `λ = c √d / √n`
    SqrtDOverN,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum LambdaSpec {
    Fixed(OneOrMany),
    Scheduled(ScheduleSpec),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    pub schedule: Schedule,
    pub c: OneOrMany,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum DictionarySpec {
    Fourier {
        frequencies: usize,
    },
    Wavelet {
        #[serde(default = "default_vm")]
        vanishing_moments: usize,
        levels: u32,
    },
    Rff {
        lengthscale: f64,
        atoms: usize,
        #[serde(default)]
        seed: u64,
    },
    /// Learned from the training outputs of each fit, or loaded from `path`.
    Learned {
        #[serde(default = "default_atoms")]
        atoms: usize,
        #[serde(default = "default_tau")]
        tau: f64,
        #[serde(default = "default_rounds")]
        max_rounds: usize,
        #[serde(default = "default_dl_tol")]
        tol: f64,
        path: Option<PathBuf>,
    },
    /// Any dictionary written by `dictlearn` or `fit` (`<path>.json`).
    File {
        path: PathBuf,
    },
}

fn default_vm() -> usize {
    1
}
fn default_atoms() -> usize {
    30
}
fn default_tau() -> f64 {
    1e-3
}
fn default_rounds() -> usize {
    100
}
fn default_dl_tol() -> f64 {
    1e-6
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViewChoice {
    /// Full view when every output shares one grid, partial otherwise.
    #[default]
    Auto,
    Full,
    Partial,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodConfig {
    pub name: Option<String>,
    pub kind: MethodKind,
    pub lambda: Option<LambdaSpec>,
    pub bandwidth: Option<OneOrMany>,
    #[serde(default = "default_kernel")]
    pub kernel: ScalarKernel,
    pub structure: Option<OutputStructure>,
    pub dictionary: Option<DictionarySpec>,
    pub loss: Option<GroundLoss>,
    #[serde(default)]
    pub view: ViewChoice,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    /// Trapezoid nodes on [0, 1] for the Gram matrix and learned dictionaries.
    #[serde(default = "default_nodes")]
    pub quadrature_nodes: usize,
}

fn default_kernel() -> ScalarKernel {
    ScalarKernel::Gaussian { sigma: 1.0 }
}
fn default_nodes() -> usize {
    200
}

impl MethodConfig {
    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.kind.as_str().to_string())
    }

    pub fn structure(&self) -> OutputStructure {
        self.structure.unwrap_or(OutputStructure::Identity)
    }

    pub fn loss(&self) -> GroundLoss {
        self.loss.unwrap_or(GroundLoss::Square)
    }

    fn validate(&self) -> CliResult<()> {
        let label = self.label();
        let bad = |msg: String| Err(CliError::Config(format!("method {label:?}: {msg}")));
        if label.is_empty() || !label.chars().all(|c| c.is_ascii_alphanumeric() || "_-.".contains(c)) {
            return bad("name may only contain letters, digits, '_', '-' and '.'".into());
        }
        self.kernel.validate().or_else(|e| bad(e.to_string()))?;
        if let Some(loss) = &self.loss {
            loss.validate().or_else(|e| bad(e.to_string()))?;
            if !matches!(self.kind, MethodKind::Iterative) && *loss != GroundLoss::Square {
                return bad("only the iterative solver accepts a non-square loss".into());
            }
        }
        if let Some(OutputStructure::DiagonalScale { b }) = self.structure {
            if !(b > 0.0) || !b.is_finite() {
                return bad(format!("scale base must be positive, got {b}"));
            }
        }
        if self.quadrature_nodes < 2 {
            return bad("quadrature_nodes must be at least 2".into());
        }
        if let Some(t) = self.tol {
            if !(t > 0.0) {
                return bad(format!("tol must be positive, got {t}"));
            }
        }
        if self.kind == MethodKind::Ke {
            let Some(h) = &self.bandwidth else {
                return bad("kernel estimator needs a bandwidth".into());
            };
            check_grid("bandwidth", &h.values()).or_else(bad)?;
            if self.lambda.is_some() || self.dictionary.is_some() {
                return bad("kernel estimator takes no lambda or dictionary".into());
            }
            return Ok(());
        }
        if self.bandwidth.is_some() {
            return bad("bandwidth only applies to kind = \"ke\"".into());
        }
        if self.kind == MethodKind::OneBe && !matches!(self.structure(), OutputStructure::Identity) {
            return bad("1be fixes the output structure to the identity".into());
        }
        match &self.lambda {
            None => return bad("lambda is required".into()),
            Some(LambdaSpec::Fixed(v)) => check_grid("lambda", &v.values()).or_else(bad)?,
            Some(LambdaSpec::Scheduled(s)) => check_grid("c", &s.c.values()).or_else(bad)?,
        }
        match &self.dictionary {
            None => return bad("dictionary is required".into()),
            Some(DictionarySpec::Fourier { frequencies: 0 }) => return bad("fourier needs at least one frequency".into()),
            Some(DictionarySpec::Rff { lengthscale, atoms, .. }) if !(*lengthscale > 0.0) || *atoms == 0 => {
                return bad("rff needs a positive lengthscale and at least one atom".into())
            }
            Some(DictionarySpec::Learned { atoms, tau, max_rounds, tol, .. })
                if *atoms == 0 || !(*tau >= 0.0) || *max_rounds == 0 || !(*tol >= 0.0) =>
            {
                return bad("learned dictionary needs atoms >= 1, tau >= 0, max_rounds >= 1, tol >= 0".into())
            }
            _ => {}
        }
        Ok(())
    }
}

fn check_grid(what: &str, values: &[f64]) -> Result<(), String> {
    if values.is_empty() {
        return Err(format!("{what} grid is empty"));
    }
    match values.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
        Some(v) => Err(format!("{what} values must be positive and finite, got {v}")),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CvConfig {
    #[serde(default = "default_folds")]
    pub folds: usize,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self { folds: default_folds() }
    }
}

fn default_folds() -> usize {
    5
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorruptionKind {
    LocalOutliers,
    LabelNoise,
    Missing,
    LocalNoise,
}

impl CorruptionKind {
    pub fn at(&self, level: f64) -> Corruption {
        match self {
            CorruptionKind::LocalOutliers => Corruption::LocalOutliers { fraction: level },
            CorruptionKind::LabelNoise => Corruption::LabelNoise { fraction: level },
            CorruptionKind::Missing => Corruption::Missing { fraction: level },
            CorruptionKind::LocalNoise => Corruption::LocalNoise { sigma: level },
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobustnessConfig {
    pub corruption: CorruptionKind,
    pub levels: Vec<f64>,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
}

fn default_repeats() -> usize {
    10
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DictLearnConfig {
    #[serde(default = "default_atoms")]
    pub atoms: usize,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_rounds")]
    pub max_rounds: usize,
    #[serde(default = "default_dl_tol")]
    pub tol: f64,
    #[serde(default = "default_nodes")]
    pub quadrature_nodes: usize,
}

impl Default for DictLearnConfig {
    fn default() -> Self {
        Self {
            atoms: default_atoms(),
            tau: default_tau(),
            max_rounds: default_rounds(),
            tol: default_dl_tol(),
            quadrature_nodes: default_nodes(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictConfig {
    pub model: PathBuf,
    pub inputs: PathBuf,
    #[serde(default)]
    pub input_kind: InputKind,
    /// Predict on the locations of these outputs (matched by sample id)...
    pub targets: Option<PathBuf>,
    /// ...or on a uniform grid of this many points.
    pub grid: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateConfig {
    pub predictions: PathBuf,
    pub observations: PathBuf,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, base: &Path) -> CliResult<Self> {
        let mut cfg: ExperimentConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        if let Some(m) = cfg.method.take() {
            cfg.methods.insert(0, m);
        }
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(o) = self.out.as_mut() {
            fix(o);
        }
        if let Some(DataConfig::Csv {
            train_inputs,
            train_outputs,
            test_inputs,
            test_outputs,
            ..
        }) = self.data.as_mut()
        {
            fix(train_inputs);
            fix(train_outputs);
            test_inputs.iter_mut().for_each(fix);
            test_outputs.iter_mut().for_each(fix);
        }
        for m in &mut self.methods {
            match m.dictionary.as_mut() {
                Some(DictionarySpec::File { path }) => fix(path),
                Some(DictionarySpec::Learned { path: Some(path), .. }) => fix(path),
                _ => {}
            }
        }
        if let Some(p) = self.predict.as_mut() {
            fix(&mut p.model);
            fix(&mut p.inputs);
            p.targets.iter_mut().for_each(fix);
        }
        if let Some(e) = self.evaluate.as_mut() {
            fix(&mut e.predictions);
            fix(&mut e.observations);
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        match &self.data {
            Some(DataConfig::Toy { n_train, toy, .. }) => {
                if *n_train == 0 {
                    return Err(CliError::Config("data.n_train must be at least 1".into()));
                }
                toy.validate().map_err(|e| CliError::Config(format!("data.toy: {e}")))?;
            }
            Some(DataConfig::Csv {
                test_inputs,
                test_outputs,
                n_test,
                ..
            }) => {
                if test_inputs.is_some() != test_outputs.is_some() {
                    return Err(CliError::Config("test_inputs and test_outputs go together".into()));
                }
                if test_inputs.is_some() && *n_test > 0 {
                    return Err(CliError::Config("n_test only applies without test files".into()));
                }
            }
            None => {}
        }
        let mut names = BTreeSet::new();
        for m in &self.methods {
            m.validate()?;
            if !names.insert(m.label()) {
                return Err(CliError::Config(format!("duplicate method name {:?}", m.label())));
            }
        }
        if self.cv.folds < 2 {
            return Err(CliError::Config("cv.folds must be at least 2".into()));
        }
        if let Some(r) = &self.robustness {
            if r.levels.is_empty() || r.repeats == 0 {
                return Err(CliError::Config("robustness needs levels and repeats >= 1".into()));
            }
            for &l in &r.levels {
                r.corruption.at(l).validate().map_err(|e| CliError::Config(format!("robustness: {e}")))?;
            }
        }
        if let Some(d) = &self.dictlearn {
            if d.atoms == 0 || !(d.tau >= 0.0) || d.max_rounds == 0 || !(d.tol >= 0.0) || d.quadrature_nodes < 2 {
                return Err(CliError::Config(
                    "dictlearn needs atoms >= 1, tau >= 0, max_rounds >= 1, tol >= 0, quadrature_nodes >= 2".into(),
                ));
            }
        }
        if let Some(p) = &self.predict {
            if p.targets.is_some() == p.grid.is_some() {
                return Err(CliError::Config("predict needs exactly one of targets or grid".into()));
            }
            if p.grid.is_some_and(|m| m < 2) {
                return Err(CliError::Config("predict.grid must be at least 2".into()));
            }
        }
        Ok(())
    }

    /// The configured data section, or a config error naming `command`.
    pub fn data(&self, command: &str) -> CliResult<&DataConfig> {
        self.data
            .as_ref()
            .ok_or_else(|| CliError::Config(format!("{command} needs a [data] table")))
    }

    pub fn require_methods(&self, command: &str) -> CliResult<()> {
        if self.methods.is_empty() {
            return Err(CliError::Config(format!("{command} needs at least one method")));
        }
        Ok(())
    }
}
