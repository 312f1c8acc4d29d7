//! One function per subcommand. Each validates and loads everything it needs
//! before creating any output, so configuration and input errors leave the
//! output directory untouched.

use std::io::Write;
use std::path::{Path, PathBuf};

use kpl::datasets::{corrupt, fold_assignment, kfold_cv, CorruptionSpec};
use kpl::dictionary::{gram, riesz_bounds, write_dictionary};
use kpl::dictlearn::{learn_dictionary, DlProblem};
use kpl::functional::{mse, resample_clamped, snr, uniform_grid, PartialSample, Quadrature, SampledFunction};
use kpl::io::{read_inputs_csv, read_outputs_csv, write_inputs_csv, write_outputs_csv};
use kpl::par;
use serde::Serialize;
use serde_json::json;

use crate::config::{CorruptionKind, DataConfig, ExperimentConfig, MethodConfig};
use crate::error::{CliError, CliResult};
use crate::pipeline::{
    dictionary_dim, fit, fit_and_score, load_data, load_fitted, params, save_fitted, Dataset, Param, Preprocessing,
};

fn create_out(out: &Path) -> CliResult<()> {
    std::fs::create_dir_all(out).map_err(|e| CliError::Input(format!("cannot create {}: {e}", out.display())))
}

fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn require_test(data: &Dataset, command: &str) -> CliResult<PartialSample> {
    data.test
        .clone()
        .ok_or_else(|| CliError::Config(format!("{command} needs test data (n_test > 0 or test files)")))
}

pub fn generate_toy(cfg: &ExperimentConfig, out: &Path) -> CliResult<()> {
    if !matches!(cfg.data("generate-toy")?, DataConfig::Toy { .. }) {
        return Err(CliError::Config("generate-toy needs data.source = \"toy\"".into()));
    }
    let data = load_data(cfg.data("generate-toy")?, cfg.seed)?;
    create_out(out)?;
    write_inputs_csv(&out.join("train_inputs.csv"), &data.train_ids, data.train.inputs())?;
    write_outputs_csv(&out.join("train_outputs.csv"), &data.train_ids, data.train.outputs(), &data.domain)?;
    if let Some(test) = &data.test {
        write_inputs_csv(&out.join("test_inputs.csv"), &data.test_ids, test.inputs())?;
        write_outputs_csv(&out.join("test_outputs.csv"), &data.test_ids, test.outputs(), &data.domain)?;
    }
    log::info!("wrote {} training and {} test pairs to {}", data.train.len(), data.test_ids.len(), out.display());
    Ok(())
}

#[derive(Debug, Serialize)]
struct Selection {
    candidates: Vec<Param>,
    mean_scores: Vec<f64>,
}

/// Pick one parameter by cross-validation when the method has several.
fn select(
    method: &MethodConfig,
    train: &PartialSample,
    prep: Preprocessing,
    folds: usize,
    seed: u64,
) -> CliResult<(Param, Option<Selection>)> {
    let cands = params(method);
    if cands.len() == 1 {
        return Ok((cands[0], None));
    }
    let outcome = kfold_cv(train, folds, seed, &cands, |p| p.value(), |p, tr, te| {
        fit_and_score(method, *p, tr, te, prep, seed).map_err(into_core)
    })?;
    Ok((
        cands[outcome.best],
        Some(Selection {
            candidates: cands,
            mean_scores: outcome.mean_scores,
        }),
    ))
}

fn into_core(e: CliError) -> kpl::KplError {
    match e {
        CliError::Core(e) => e,
        other => kpl::KplError::InvalidArgument(other.to_string()),
    }
}

pub fn run_fit(cfg: &ExperimentConfig, out: &Path) -> CliResult<()> {
    cfg.require_methods("fit")?;
    let data = load_data(cfg.data("fit")?, cfg.seed)?;
    create_out(out)?;
    let mut entries = Vec::new();
    for method in &cfg.methods {
        let (param, selection) = select(method, &data.train, data.prep, cfg.cv.folds, cfg.seed)?;
        let mut fitted = fit(method, param, &data.train, data.prep, cfg.seed)?;
        let train_mse = fitted.timed_score(&data.train)?;
        let test_mse = match &data.test {
            Some(t) => Some(fitted.timed_score(t)?),
            None => None,
        };
        let dir = out.join(method.label());
        save_fitted(&fitted, &dir)?;
        let solver = fitted.solver.as_ref().map(|r| {
            json!({
                "status": r.status,
                "iterations": r.iterations,
                "evaluations": r.evaluations,
                "objective": r.objective,
                "grad_inf": r.grad_inf,
            })
        });
        log::info!("{}: train MSE {train_mse:.4e}", method.label());
        entries.push(json!({
            "method": method.label(),
            "kind": method.kind,
            "param": param,
            "lambda": fitted.lambda,
            "model_dir": dir.file_name().map(|s| s.to_string_lossy().into_owned()),
            "train_mse": train_mse,
            "test_mse": test_mse,
            "timings": fitted.timings,
            "solver": solver,
            "selection": selection,
        }));
    }
    let report = json!({
        "seed": cfg.seed,
        "n_train": data.train.len(),
        "n_test": data.test_ids.len(),
        "methods": entries,
    });
    write_json(&out.join("report.json"), &report)
}

pub fn run_predict(cfg: &ExperimentConfig, out: &Path) -> CliResult<()> {
    let p = cfg
        .predict
        .as_ref()
        .ok_or_else(|| CliError::Config("predict needs a [predict] table".into()))?;
    let model = load_fitted(&p.model)?;
    let (ids, inputs) = read_inputs_csv(&p.inputs, p.input_kind)?;
    let (targets, domain): (Vec<Vec<f64>>, _) = match (&p.targets, p.grid) {
        (Some(path), _) => {
            let table = read_outputs_csv(path, None)?;
            let locs = ids
                .iter()
                .map(|id| {
                    table
                        .ids
                        .iter()
                        .position(|t| t == id)
                        .map(|k| table.functions[k].locations().to_vec())
                        .ok_or_else(|| CliError::Input(format!("no target locations for sample {id}")))
                })
                .collect::<CliResult<Vec<_>>>()?;
            (locs, table.domain)
        }
        (None, Some(m)) => (vec![uniform_grid(m); ids.len()], kpl::functional::DomainMap::unit()),
        (None, None) => unreachable!("validated"),
    };
    let refs: Vec<&[f64]> = targets.iter().map(|t| t.as_slice()).collect();
    let preds = model.predict(&inputs, &refs)?;
    create_out(out)?;
    write_outputs_csv(&out.join("predictions.csv"), &ids, &preds, &domain)?;
    Ok(())
}

pub fn run_evaluate(cfg: &ExperimentConfig, out: &Path) -> CliResult<()> {
    let e = cfg
        .evaluate
        .as_ref()
        .ok_or_else(|| CliError::Config("evaluate needs an [evaluate] table".into()))?;
    let obs = read_outputs_csv(&e.observations, None)?;
    let pred = read_outputs_csv(&e.predictions, Some(obs.domain))?;
    let mut paired = Vec::with_capacity(obs.ids.len());
    for (id, f) in obs.ids.iter().zip(&obs.functions) {
        let k = pred
            .ids
            .iter()
            .position(|p| p == id)
            .ok_or_else(|| CliError::Input(format!("no prediction for sample {id}")))?;
        paired.push(resample_clamped(&pred.functions[k], f.locations())?);
    }
    let value = mse(&paired, &obs.functions)?;
    create_out(out)?;
    let points: usize = obs.functions.iter().map(SampledFunction::len).sum();
    write_json(
        &out.join("evaluation.json"),
        &json!({ "mse": value, "functions": obs.ids.len(), "points": points }),
    )?;
    println!("mse {value:e}");
    Ok(())
}

struct Candidate<'a> {
    method: &'a MethodConfig,
    param: Param,
}

pub fn run_cv(cfg: &ExperimentConfig, out: &Path) -> CliResult<()> {
    cfg.require_methods("cv")?;
    let data = load_data(cfg.data("cv")?, cfg.seed)?;
    let folds = cfg.cv.folds;
    let dims = cfg
        .methods
        .iter()
        .map(dictionary_dim)
        .collect::<CliResult<Vec<_>>>()?;
    let cands: Vec<Candidate> = cfg
        .methods
        .iter()
        .flat_map(|m| params(m).into_iter().map(move |param| Candidate { method: m, param }))
        .collect();
    create_out(out)?;
    let outcome = kfold_cv(&data.train, folds, cfg.seed, &cands, |c| c.param.value(), |c, tr, te| {
        fit_and_score(c.method, c.param, tr, te, data.prep, cfg.seed).map_err(into_core)
    })?;

    let n = data.train.len();
    let labels = fold_assignment(n, folds, cfg.seed);
    let fold_train: Vec<usize> = (0..folds).map(|f| labels.iter().filter(|&&l| l != f).count()).collect();
    let dim_of = |c: &Candidate| {
        let k = cfg.methods.iter().position(|m| std::ptr::eq(m, c.method)).expect("candidate method");
        dims[k]
    };
    let lambda_at = |c: &Candidate, n: usize| -> String {
        match (c.param, dim_of(c)) {
            (Param::Bandwidth(_), _) | (_, None) => String::new(),
            (p, Some(d)) => p.lambda(n, d).map(|l| l.to_string()).unwrap_or_default(),
        }
    };

    let mut w = csv::Writer::from_path(out.join("cv_scores.csv"))?;
    w.write_record(["candidate", "method", "kind", "param", "value", "lambda", "fold", "mse"])?;
    for (ci, c) in cands.iter().enumerate() {
        for (f, &n_fold) in fold_train.iter().enumerate() {
            w.write_record([
                ci.to_string(),
                c.method.label(),
                c.method.kind.as_str().to_string(),
                c.param.name().to_string(),
                c.param.value().to_string(),
                lambda_at(c, n_fold),
                f.to_string(),
                outcome.scores[ci][f].to_string(),
            ])?;
        }
    }
    w.flush()?;

    let best = &cands[outcome.best];
    write_json(
        &out.join("best.json"),
        &json!({
            "candidate": outcome.best,
            "method": best.method.label(),
            "kind": best.method.kind,
            "param": best.param.name(),
            "value": best.param.value(),
            "lambda": lambda_at(best, n).parse::<f64>().ok(),
            "mean_mse": outcome.mean_scores[outcome.best],
            "folds": folds,
            "n_train": n,
        }),
    )
}

fn spread(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, std)
}

/// Seed of the corruption draw for repeat `r`, shared by every level so that
/// levels differ only in strength.
fn corruption_seed(seed: u64, r: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(r as u64 + 1)
}

pub fn run_robustness(cfg: &ExperimentConfig, out: &Path) -> CliResult<()> {
    cfg.require_methods("robustness")?;
    let rob = cfg
        .robustness
        .as_ref()
        .ok_or_else(|| CliError::Config("robustness needs a [robustness] table".into()))?;
    let data_cfg = cfg.data("robustness")?;
    if rob.corruption == CorruptionKind::LabelNoise && !matches!(data_cfg, DataConfig::Toy { .. }) {
        return Err(CliError::Config("label noise draws from the toy generator; use toy data".into()));
    }
    let datasets = (0..rob.repeats)
        .map(|r| load_data(data_cfg, cfg.seed.wrapping_add(r as u64)))
        .collect::<CliResult<Vec<_>>>()?;
    let tests = datasets
        .iter()
        .map(|d| require_test(d, "robustness"))
        .collect::<CliResult<Vec<_>>>()?;
    create_out(out)?;

    let (levels, methods, repeats) = (rob.levels.len(), cfg.methods.len(), rob.repeats);
    let cells = par::map_range(levels * methods * repeats, |cell| {
        let (li, rest) = (cell / (methods * repeats), cell % (methods * repeats));
        let (mi, r) = (rest / repeats, rest % repeats);
        let data = &datasets[r];
        let spec = CorruptionSpec {
            kind: rob.corruption.at(rob.levels[li]),
            seed: corruption_seed(cfg.seed, r),
        };
        let method = &cfg.methods[mi];
        corrupt(&data.train, &spec, data.generator.as_ref())
            .map_err(CliError::from)
            .and_then(|train| {
                let (param, _) = select(method, &train, data.prep, cfg.cv.folds, cfg.seed)?;
                fit_and_score(method, param, &train, &tests[r], data.prep, cfg.seed)
            })
            .map_err(|e| e.to_string())
    });

    let mut w = csv::Writer::from_path(out.join("robustness.csv"))?;
    w.write_record(["corruption", "level", "snr", "method", "mean_mse", "std_mse", "n_ok", "error"])?;
    for (li, &level) in rob.levels.iter().enumerate() {
        let snr_col = if rob.corruption == CorruptionKind::LocalNoise {
            let vals: Vec<f64> = datasets
                .iter()
                .map(|d| if level > 0.0 { snr(&d.train, level).unwrap_or(f64::NAN) } else { f64::INFINITY })
                .collect();
            spread(&vals).0.to_string()
        } else {
            String::new()
        };
        for (mi, method) in cfg.methods.iter().enumerate() {
            let runs = &cells[(li * methods + mi) * repeats..(li * methods + mi + 1) * repeats];
            let ok: Vec<f64> = runs.iter().filter_map(|r| r.as_ref().ok().copied()).collect();
            let error = runs.iter().find_map(|r| r.as_ref().err().cloned()).unwrap_or_default();
            if !error.is_empty() {
                log::warn!("{} at level {level}: {error}", method.label());
            }
            let (mean, std) = if ok.is_empty() { (f64::NAN, f64::NAN) } else { spread(&ok) };
            w.write_record([
                corruption_name(rob.corruption).to_string(),
                level.to_string(),
                snr_col.clone(),
                method.label(),
                mean.to_string(),
                std.to_string(),
                ok.len().to_string(),
                error,
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn corruption_name(kind: CorruptionKind) -> &'static str {
    kind.at(0.0).name()
}

pub fn run_dictlearn(cfg: &ExperimentConfig, out: &Path) -> CliResult<()> {
    let data = load_data(cfg.data("dictlearn")?, cfg.seed)?;
    let dl = cfg.dictlearn.clone().unwrap_or_default();
    let train = if data.prep.center {
        kpl::datasets::OutputCentering::fit(&data.train)?.center(&data.train)?
    } else {
        data.train.clone()
    };
    let nodes = uniform_grid(dl.quadrature_nodes);
    let q = Quadrature::trapezoid(&nodes)?;
    let mut problem = DlProblem::from_sample(&train, q.clone(), dl.atoms, dl.tau)?;
    problem.max_rounds = dl.max_rounds;
    problem.tol = dl.tol;
    create_out(out)?;
    let result = learn_dictionary(&problem, cfg.seed)?;
    write_dictionary(&result.dictionary, &out.join("dictionary"), &nodes)?;

    let mut trace = std::fs::File::create(out.join("trace.csv"))?;
    writeln!(trace, "round,objective")?;
    for (k, v) in result.objective_trace.iter().enumerate() {
        writeln!(trace, "{},{v}", k + 1)?;
    }
    let bounds = riesz_bounds(&result.dictionary, &q);
    let g = gram(&result.dictionary, &q).matrix;
    write_json(
        &out.join("dictlearn.json"),
        &json!({
            "atoms": dl.atoms,
            "tau": dl.tau,
            "rounds": result.rounds,
            "objective": result.objective_trace.last(),
            "riesz_lower": bounds.lower,
            "riesz_upper": bounds.upper,
            "gram_trace": g.trace(),
            "quadrature_nodes": dl.quadrature_nodes,
        }),
    )
}

/// Output directory: `--out` wins over the config's `out`.
pub fn out_dir(cfg: &ExperimentConfig, flag: Option<&PathBuf>) -> CliResult<PathBuf> {
    flag.cloned()
        .or_else(|| cfg.out.clone())
        .ok_or_else(|| CliError::Config("no output directory: set `out` or pass --out".into()))
}
