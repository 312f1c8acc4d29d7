use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{Dictionary, Family};
use crate::error::{KplError, Result};

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    #[serde(flatten)]
    family: Family,
    d: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scale_index: Option<Vec<u32>>,
    atoms_csv: String,
}

fn with_ext(stem: &Path, ext: &str) -> PathBuf {
    let mut name = stem.as_os_str().to_owned();
    name.push(".");
    name.push(ext);
    PathBuf::from(name)
}

/// Write `<stem>.csv` (columns `theta, atom_0, …`) and `<stem>.json`.
///
/// Tabulated dictionaries are written on their own nodes; other families are
/// tabulated on `nodes` for inspection but reload from their metadata.
pub fn write_dictionary(dict: &Dictionary, stem: &Path, nodes: &[f64]) -> Result<()> {
    let csv_path = with_ext(stem, "csv");
    let json_path = with_ext(stem, "json");
    let (grid, values) = match dict.table() {
        Some((n, v)) => (n.to_vec(), v.clone()),
        None => (nodes.to_vec(), dict.design(nodes)),
    };

    let mut w = csv::Writer::from_path(&csv_path)?;
    let mut header = vec!["theta".to_string()];
    header.extend((0..dict.dim()).map(|l| format!("atom_{l}")));
    w.write_record(&header)?;
    for (p, t) in grid.iter().enumerate() {
        let mut rec = vec![format!("{t:e}")];
        rec.extend((0..dict.dim()).map(|l| format!("{:e}", values[(p, l)])));
        w.write_record(&rec)?;
    }
    w.flush()?;

    let sidecar = Sidecar {
        family: dict.family().clone(),
        d: dict.dim(),
        scale_index: dict.scale_index().map(|s| s.to_vec()),
        atoms_csv: csv_path
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
    };
    std::fs::write(&json_path, serde_json::to_string_pretty(&sidecar)?)?;
    Ok(())
}

/// Load a dictionary written by [`write_dictionary`] from `<stem>.json`.
pub fn read_dictionary(stem: &Path) -> Result<Dictionary> {
    let json_path = with_ext(stem, "json");
    let sidecar: Sidecar = serde_json::from_str(&std::fs::read_to_string(&json_path)?)?;
    if !matches!(sidecar.family, Family::Learned { .. } | Family::Tabulated) {
        let dict = Dictionary::from_family(&sidecar.family)?;
        if dict.dim() != sidecar.d {
            return Err(KplError::Parse(format!(
                "dictionary metadata declares {} atoms, rebuilt {}",
                sidecar.d,
                dict.dim()
            )));
        }
        return Ok(dict);
    }

    let csv_path = json_path
        .parent()
        .map(|p| p.join(&sidecar.atoms_csv))
        .unwrap_or_else(|| PathBuf::from(&sidecar.atoms_csv));
    let mut r = csv::Reader::from_path(&csv_path)?;
    let mut nodes = Vec::new();
    let mut flat = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != sidecar.d + 1 {
            return Err(KplError::Parse(format!(
                "atom row has {} columns, expected {}",
                rec.len(),
                sidecar.d + 1
            )));
        }
        let mut fields = rec.iter().map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| KplError::Parse(format!("{s:?}: {e}")))
        });
        nodes.push(fields.next().unwrap()?);
        for v in fields {
            flat.push(v?);
        }
    }
    let values = DMatrix::from_row_slice(nodes.len(), sidecar.d, &flat);
    Dictionary::from_grid(nodes, values, sidecar.family)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionary::gram;
    use crate::functional::{uniform_grid, Quadrature};

    #[test]
    fn learned_round_trip_preserves_gram() {
        let nodes = uniform_grid(30);
        let values = DMatrix::from_fn(30, 4, |p, l| ((l + 1) as f64 * nodes[p]).cos());
        let d = Dictionary::from_grid(nodes.clone(), values, Family::Learned { atoms: 4 }).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("dict");
        write_dictionary(&d, &stem, &nodes).unwrap();
        let back = read_dictionary(&stem).unwrap();
        let q = Quadrature::uniform(101).unwrap();
        let diff = gram(&d, &q).matrix - gram(&back, &q).matrix;
        assert!(diff.norm() < 1e-12);
    }

    #[test]
    fn rff_reloads_from_metadata() {
        let d = Dictionary::rff(0.2, 6, 9).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("rff");
        write_dictionary(&d, &stem, &uniform_grid(5)).unwrap();
        let back = read_dictionary(&stem).unwrap();
        assert_eq!(d.eval(0.37), back.eval(0.37));
    }
}
