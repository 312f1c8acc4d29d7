//! CSV formats for functional data and fitted-model persistence.
//!
//! * outputs: long format `sample_id, theta, value`; empty or NaN values are
//!   dropped, which is how partially observed functions are read.
//! * vector inputs: one row per sample, `sample_id, x_0, x_1, …`.
//! * matrix inputs: `sample_id, theta, c1, …, ck`, one row per location.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dictionary::{read_dictionary, write_dictionary};
use crate::error::{KplError, Result};
use crate::functional::{uniform_grid, DomainMap, InputPoint, PartialSample, SampledFunction};
use crate::kernels::{OutputStructure, ScalarKernel};
use crate::ridge::KplModel;

fn parse_f64(s: &str, what: &str) -> Result<f64> {
    let t = s.trim();
    t.parse::<f64>()
        .map_err(|e| KplError::Parse(format!("{what} {t:?}: {e}")))
}

fn parse_id(s: &str) -> Result<i64> {
    let t = s.trim();
    t.parse::<i64>()
        .map_err(|e| KplError::Parse(format!("sample_id {t:?}: {e}")))
}

fn column_index(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| KplError::Parse(format!("missing column {name:?}")))
}

/// Output functions read from a long-format CSV, ordered by sample id.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputTable {
    pub ids: Vec<i64>,
    pub functions: Vec<SampledFunction>,
    /// Map from the file's location scale onto `[0, 1]`.
    pub domain: DomainMap,
}

/// Read long-format outputs. Without an explicit `domain`, locations already
/// inside `[0, 1]` are kept and anything else is mapped by its observed range.
pub fn read_outputs_csv(path: &Path, domain: Option<DomainMap>) -> Result<OutputTable> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    let (ci, ct, cv) = (
        column_index(&headers, "sample_id")?,
        column_index(&headers, "theta")?,
        column_index(&headers, "value")?,
    );
    let mut groups: BTreeMap<i64, Vec<(f64, f64)>> = BTreeMap::new();
    for rec in r.records() {
        let rec = rec?;
        let id = parse_id(&rec[ci])?;
        let theta = parse_f64(&rec[ct], "theta")?;
        let raw = rec[cv].trim();
        let entry = groups.entry(id).or_default();
        if raw.is_empty() {
            continue;
        }
        let value = parse_f64(raw, "value")?;
        if value.is_nan() {
            continue;
        }
        if !theta.is_finite() || !value.is_finite() {
            return Err(KplError::Parse(format!("non-finite observation for sample {id}")));
        }
        entry.push((theta, value));
    }
    if groups.is_empty() {
        return Err(KplError::Parse(format!("{} has no observations", path.display())));
    }
    let domain = match domain {
        Some(d) => d,
        None => {
            let (lo, hi) = groups
                .values()
                .flatten()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), (t, _)| (a.min(*t), b.max(*t)));
            if lo >= 0.0 && hi <= 1.0 {
                DomainMap::unit()
            } else {
                DomainMap::new(lo, hi)?
            }
        }
    };
    let mut ids = Vec::with_capacity(groups.len());
    let mut functions = Vec::with_capacity(groups.len());
    for (id, mut obs) in groups {
        if obs.is_empty() {
            return Err(KplError::Parse(format!("sample {id} has no observed values")));
        }
        obs.sort_by(|a, b| a.0.total_cmp(&b.0));
        if obs.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(KplError::Parse(format!("sample {id} repeats a location")));
        }
        let (locs, vals): (Vec<f64>, Vec<f64>) = obs.into_iter().map(|(t, v)| (domain.to_unit(t), v)).unzip();
        functions.push(
            SampledFunction::new(locs, vals).map_err(|e| KplError::Parse(format!("sample {id}: {e}")))?,
        );
        ids.push(id);
    }
    Ok(OutputTable { ids, functions, domain })
}

pub fn write_outputs_csv(path: &Path, ids: &[i64], functions: &[SampledFunction], domain: &DomainMap) -> Result<()> {
    if ids.len() != functions.len() {
        return Err(KplError::invalid("one id per function is required"));
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["sample_id", "theta", "value"])?;
    for (id, f) in ids.iter().zip(functions) {
        for (t, v) in f.locations().iter().zip(f.values()) {
            w.write_record(&[id.to_string(), domain.from_unit(*t).to_string(), v.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputKind {
    #[default]
    Vector,
    Matrix,
}

pub fn read_inputs_csv(path: &Path, kind: InputKind) -> Result<(Vec<i64>, Vec<InputPoint>)> {
    match kind {
        InputKind::Vector => read_vector_inputs(path),
        InputKind::Matrix => read_matrix_inputs(path),
    }
}

fn read_vector_inputs(path: &Path) -> Result<(Vec<i64>, Vec<InputPoint>)> {
    let mut r = csv::Reader::from_path(path)?;
    let width = r.headers()?.len();
    if width < 2 {
        return Err(KplError::Parse("vector inputs need sample_id and at least one feature".into()));
    }
    let mut ids = Vec::new();
    let mut points = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let id = parse_id(&rec[0])?;
        let x = rec
            .iter()
            .skip(1)
            .map(|s| parse_f64(s, "input"))
            .collect::<Result<Vec<_>>>()?;
        points.push(InputPoint::vector(x).map_err(|e| KplError::Parse(format!("sample {id}: {e}")))?);
        ids.push(id);
    }
    Ok((ids, points))
}

fn read_matrix_inputs(path: &Path) -> Result<(Vec<i64>, Vec<InputPoint>)> {
    let mut r = csv::Reader::from_path(path)?;
    let k = r.headers()?.len().saturating_sub(2);
    if k == 0 {
        return Err(KplError::Parse("matrix inputs need sample_id, theta and channel columns".into()));
    }
    let mut groups: BTreeMap<i64, Vec<(f64, Vec<f64>)>> = BTreeMap::new();
    for rec in r.records() {
        let rec = rec?;
        let id = parse_id(&rec[0])?;
        let theta = parse_f64(&rec[1], "theta")?;
        let row = rec
            .iter()
            .skip(2)
            .map(|s| parse_f64(s, "channel"))
            .collect::<Result<Vec<_>>>()?;
        groups.entry(id).or_default().push((theta, row));
    }
    let mut ids = Vec::new();
    let mut points = Vec::new();
    for (id, mut rows) in groups {
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        let m = DMatrix::from_fn(rows.len(), k, |p, c| rows[p].1[c]);
        points.push(InputPoint::matrix(m).map_err(|e| KplError::Parse(format!("sample {id}: {e}")))?);
        ids.push(id);
    }
    Ok((ids, points))
}

/// Write inputs in the format matching their kind; matrix rows get evenly
/// spaced locations in `[0, 1]`.
pub fn write_inputs_csv(path: &Path, ids: &[i64], inputs: &[InputPoint]) -> Result<()> {
    if ids.len() != inputs.len() {
        return Err(KplError::invalid("one id per input is required"));
    }
    let Some(first) = inputs.first() else {
        return Err(KplError::invalid("no inputs to write"));
    };
    let mut w = csv::Writer::from_path(path)?;
    match first {
        InputPoint::Vector(v) => {
            let mut header = vec!["sample_id".to_string()];
            header.extend((0..v.len()).map(|j| format!("x_{j}")));
            w.write_record(&header)?;
            for (id, x) in ids.iter().zip(inputs) {
                if !x.same_shape(first) {
                    return Err(KplError::invalid("inputs have mixed shapes"));
                }
                let mut rec = vec![id.to_string()];
                rec.extend(x.as_slice().iter().map(|v| v.to_string()));
                w.write_record(&rec)?;
            }
        }
        InputPoint::Matrix(m0) => {
            let mut header = vec!["sample_id".to_string(), "theta".to_string()];
            header.extend((1..=m0.ncols()).map(|c| format!("c{c}")));
            w.write_record(&header)?;
            let grid = uniform_grid(m0.nrows());
            for (id, x) in ids.iter().zip(inputs) {
                let InputPoint::Matrix(m) = x else {
                    return Err(KplError::invalid("inputs have mixed shapes"));
                };
                if m.shape() != m0.shape() {
                    return Err(KplError::invalid("inputs have mixed shapes"));
                }
                for (p, t) in grid.iter().enumerate() {
                    let mut rec = vec![id.to_string(), t.to_string()];
                    rec.extend(m.row(p).iter().map(|v| v.to_string()));
                    w.write_record(&rec)?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Pair inputs with outputs by sample id, in input order.
pub fn join_sample(ids: &[i64], inputs: Vec<InputPoint>, outputs: &OutputTable) -> Result<PartialSample> {
    let index: BTreeMap<i64, usize> = outputs.ids.iter().enumerate().map(|(k, id)| (*id, k)).collect();
    if index.len() != ids.len() {
        return Err(KplError::Parse(format!(
            "{} input samples but {} output samples",
            ids.len(),
            index.len()
        )));
    }
    let funcs = ids
        .iter()
        .map(|id| {
            index
                .get(id)
                .map(|&k| outputs.functions[k].clone())
                .ok_or_else(|| KplError::Parse(format!("sample {id} has inputs but no outputs")))
        })
        .collect::<Result<Vec<_>>>()?;
    PartialSample::new(inputs, funcs)
}

fn write_matrix_csv(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    for row in m.row_iter() {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

fn read_matrix_csv(path: &Path, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).from_path(path)?;
    let mut flat = Vec::with_capacity(rows * cols);
    let mut seen = 0;
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != cols {
            return Err(KplError::Parse(format!("{}: row has {} entries, expected {cols}", path.display(), rec.len())));
        }
        for s in rec.iter() {
            flat.push(parse_f64(s, "entry")?);
        }
        seen += 1;
    }
    if seen != rows {
        return Err(KplError::Parse(format!("{}: {seen} rows, expected {rows}", path.display())));
    }
    Ok(DMatrix::from_row_slice(rows, cols, &flat))
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelHeader {
    kernel: ScalarKernel,
    structure: OutputStructure,
    lambda: f64,
    d: usize,
    n: usize,
    input_kind: InputKind,
}

/// Save to `dir`: `model.json`, `alpha.csv` (d × n), `inputs.csv` and
/// `dictionary.{csv,json}`.
pub fn save_model(model: &KplModel, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let input_kind = match model.training_inputs.first() {
        Some(InputPoint::Matrix(_)) => InputKind::Matrix,
        _ => InputKind::Vector,
    };
    let header = ModelHeader {
        kernel: model.kernel,
        structure: model.structure,
        lambda: model.lambda,
        d: model.dictionary.dim(),
        n: model.n(),
        input_kind,
    };
    std::fs::write(dir.join("model.json"), serde_json::to_string_pretty(&header)?)?;
    write_matrix_csv(&dir.join("alpha.csv"), &model.alpha)?;
    let ids: Vec<i64> = (0..model.n() as i64).collect();
    write_inputs_csv(&dir.join("inputs.csv"), &ids, &model.training_inputs)?;
    write_dictionary(&model.dictionary, &dir.join("dictionary"), &uniform_grid(201))?;
    Ok(())
}

pub fn load_model(dir: &Path) -> Result<KplModel> {
    let header: ModelHeader = serde_json::from_str(&std::fs::read_to_string(dir.join("model.json"))?)?;
    let alpha = read_matrix_csv(&dir.join("alpha.csv"), header.d, header.n)?;
    let (_, inputs) = read_inputs_csv(&dir.join("inputs.csv"), header.input_kind)?;
    let dictionary = read_dictionary(&dir.join("dictionary"))?;
    KplModel::new(alpha, inputs, dictionary, header.kernel, header.structure, header.lambda)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionary::Dictionary;
    use std::io::Write;

    fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        std::fs::File::create(&p).unwrap().write_all(body.as_bytes()).unwrap();
        p
    }

    #[test]
    fn long_csv_drops_missing_values() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "y.csv",
            "sample_id,theta,value\n1,0.5,2\n1,0.0,1\n1,1.0,NaN\n0,0.2,\n0,0.4,3\n",
        );
        let t = read_outputs_csv(&p, None).unwrap();
        assert_eq!(t.ids, vec![0, 1]);
        assert_eq!(t.functions[0].locations(), &[0.4]);
        assert_eq!(t.functions[1].locations(), &[0.0, 0.5]);
        assert_eq!(t.functions[1].values(), &[1.0, 2.0]);
        assert_eq!(t.domain, DomainMap::unit());
    }

    #[test]
    fn long_csv_maps_domain_and_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "y.csv", "sample_id,theta,value\n3,10,0.25\n3,20,-1.5\n3,15,0.1\n");
        let t = read_outputs_csv(&p, None).unwrap();
        assert_eq!(t.functions[0].locations(), &[0.0, 0.5, 1.0]);
        let out = dir.path().join("back.csv");
        write_outputs_csv(&out, &t.ids, &t.functions, &t.domain).unwrap();
        assert_eq!(read_outputs_csv(&out, None).unwrap(), t);
    }

    #[test]
    fn malformed_rows() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "y.csv", "sample_id,theta,value\nx,0.1,1\n");
        assert!(matches!(read_outputs_csv(&p, None), Err(KplError::Parse(_))));
        let p = write(dir.path(), "z.csv", "sample_id,theta,value\n1,0.1,1\n1,0.1,2\n");
        assert!(read_outputs_csv(&p, None).is_err());
        let p = write(dir.path(), "w.csv", "sample_id,theta,value\n1,0.1,\n");
        assert!(read_outputs_csv(&p, None).is_err());
        let p = write(dir.path(), "v.csv", "id,theta,value\n1,0.1,1\n");
        assert!(read_outputs_csv(&p, None).is_err());
    }

    #[test]
    fn inputs_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let vecs = vec![InputPoint::vector(vec![0.1, -2.0]).unwrap(), InputPoint::vector(vec![1.0 / 3.0, 4.0]).unwrap()];
        let p = dir.path().join("x.csv");
        write_inputs_csv(&p, &[5, 7], &vecs).unwrap();
        assert_eq!(read_inputs_csv(&p, InputKind::Vector).unwrap(), (vec![5, 7], vecs));

        let mats = vec![
            InputPoint::matrix(DMatrix::from_fn(3, 2, |r, c| (r * 2 + c) as f64 / 7.0)).unwrap(),
            InputPoint::matrix(DMatrix::from_fn(3, 2, |r, c| (r + c) as f64 - 0.5)).unwrap(),
        ];
        let p = dir.path().join("m.csv");
        write_inputs_csv(&p, &[0, 1], &mats).unwrap();
        assert_eq!(read_inputs_csv(&p, InputKind::Matrix).unwrap(), (vec![0, 1], mats));
    }

    #[test]
    fn model_round_trip() {
        let grid = uniform_grid(9);
        let xs: Vec<InputPoint> = (0..3).map(|i| InputPoint::vector(vec![i as f64 * 0.7]).unwrap()).collect();
        let alpha = DMatrix::from_fn(5, 3, |l, i| (l as f64 - i as f64) / 3.0);
        let m = KplModel::new(
            alpha,
            xs.clone(),
            Dictionary::fourier(2).unwrap(),
            ScalarKernel::Gaussian { sigma: 0.9 },
            OutputStructure::Identity,
            0.01,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_model(&m, dir.path()).unwrap();
        let back = load_model(dir.path()).unwrap();
        assert_eq!(back.alpha, m.alpha);
        for x in &xs {
            assert_eq!(back.predict(x, &grid).unwrap(), m.predict(x, &grid).unwrap());
        }
    }
}
