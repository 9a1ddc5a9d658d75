//! `.fld` files: raw little-endian `f64` samples plus a JSON sidecar.
//!
//! Layout is component-major, then time slice, then row-major space. The
//! sidecar carries `{dim, N, L, n_t, label}` and optionally `T` and
//! `components`; the slice count follows from the file length.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field, GridSpec, VectorField};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FldHeader {
    pub dim: usize,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "L")]
    pub l: f64,
    pub n_t: usize,
    pub label: String,
    #[serde(rename = "T", default, skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub components: Option<usize>,
}

impl FldHeader {
    pub fn grid(&self) -> Result<GridSpec> {
        GridSpec::new(self.dim, self.l, self.n, self.t.unwrap_or(1.0), self.n_t)
    }
}

/// `path` with `.json` appended.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn write_f64s(path: &Path, values: &[f64]) -> Result<()> {
    let mut bytes = Vec::with_capacity(values.len() * 8);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_f64s(path: &Path) -> Result<Vec<f64>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Format(format!(
            "{}: length {} is not a multiple of 8",
            path.display(),
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

fn write_components(path: &Path, comps: &[&Field], label: &str) -> Result<[PathBuf; 2]> {
    let grid = comps[0].grid();
    let mut data = Vec::with_capacity(comps.len() * comps[0].data().len());
    for c in comps {
        data.extend_from_slice(c.data());
    }
    write_f64s(path, &data)?;
    let header = FldHeader {
        dim: grid.dim,
        n: grid.n(),
        l: grid.side_length,
        n_t: grid.time_steps,
        label: label.to_string(),
        t: Some(grid.time_horizon),
        components: (comps.len() > 1).then_some(comps.len()),
    };
    let side = sidecar_path(path);
    write_json(&side, &header)?;
    Ok([path.to_path_buf(), side])
}

/// Write a scalar field; returns the data and sidecar paths.
pub fn write_field(path: &Path, f: &Field) -> Result<[PathBuf; 2]> {
    write_components(path, &[f], &f.label)
}

pub fn write_vector_field(path: &Path, v: &VectorField, label: &str) -> Result<[PathBuf; 2]> {
    let comps: Vec<&Field> = v.components().iter().collect();
    write_components(path, &comps, label)
}

/// Read every component stored in `path`.
pub fn read_components(path: &Path) -> Result<(FldHeader, Vec<Field>)> {
    let side = sidecar_path(path);
    let header: FldHeader = read_json(&side)?;
    let grid = header.grid()?;
    let data = read_f64s(path)?;
    let n_comp = header.components.unwrap_or(1).max(1);
    let per_slice = grid.n_points() * n_comp;
    if data.is_empty() || data.len() % per_slice != 0 {
        return Err(Error::Format(format!(
            "{}: {} samples do not fill {} components of {} points",
            path.display(),
            data.len(),
            n_comp,
            grid.n_points()
        )));
    }
    let n_slices = data.len() / per_slice;
    let chunk = n_slices * grid.n_points();
    let fields = data
        .chunks_exact(chunk)
        .enumerate()
        .map(|(i, c)| {
            let label = if n_comp > 1 {
                format!("{}[{i}]", header.label)
            } else {
                header.label.clone()
            };
            Field::from_data(&grid, n_slices, c.to_vec(), label)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((header, fields))
}

pub fn read_field(path: &Path) -> Result<Field> {
    let (_, mut fields) = read_components(path)?;
    if fields.len() != 1 {
        return Err(Error::Format(format!(
            "{}: expected one component, found {}",
            path.display(),
            fields.len()
        )));
    }
    Ok(fields.remove(0))
}

pub fn read_vector_field(path: &Path) -> Result<VectorField> {
    let (_, fields) = read_components(path)?;
    VectorField::new(fields, false)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let g = GridSpec::new(2, 3.0, 8, 0.5, 4).unwrap();
        let f = Field::from_fn_t(&g, "wave", |t, x| t + x[0].sin() * x[1]);
        let p = dir.path().join("f.fld");
        let [data, side] = write_field(&p, &f).unwrap();
        assert_eq!(data, p);
        assert!(side.ends_with("f.fld.json"));
        let back = read_field(&p).unwrap();
        assert_eq!(back, f);
        let json: serde_json::Value = read_json(&side).unwrap();
        for key in ["dim", "N", "L", "n_t", "label"] {
            assert!(json.get(key).is_some(), "missing {key}");
        }
    }

    #[test]
    fn vector_roundtrip_and_static() {
        let dir = tempfile::tempdir().unwrap();
        let g = GridSpec::new(2, 1.0, 4, 1.0, 3).unwrap();
        let v = VectorField::new(
            vec![
                Field::from_fn(&g, "a", |x| x[0]),
                Field::from_fn(&g, "b", |x| x[1]),
            ],
            true,
        )
        .unwrap();
        let p = dir.path().join("v.fld");
        write_vector_field(&p, &v, "v").unwrap();
        let back = read_vector_field(&p).unwrap();
        assert!(back.is_static());
        assert_eq!(back.component(1).data(), v.component(1).data());
    }

    #[test]
    fn truncated_file_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let g = GridSpec::new(1, 1.0, 8, 1.0, 1).unwrap();
        let p = dir.path().join("t.fld");
        write_field(&p, &Field::zeros(&g, 1, "z")).unwrap();
        std::fs::write(&p, [0u8; 24]).unwrap();
        assert!(matches!(read_field(&p), Err(Error::Format(_))));
        let missing = dir.path().join("nope.fld");
        match read_field(&missing) {
            Err(Error::Io { path, .. }) => assert!(path.contains("nope.fld.json")),
            other => panic!("{other:?}"),
        }
    }
}
