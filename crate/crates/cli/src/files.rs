use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::Array2;
use prior_distill::tensor::{load_tensor, save_tensor, Tensor, TensorData};
use prior_distill::{Error, FeatureMap, Instance};

use crate::error::{CliError, Result};

pub const BATCH_FILES: [&str; 4] = ["f_v.dsdp", "f_g.dsdp", "t.dsdp", "f_c.dsdp"];
pub const LABELS_FILE: &str = "labels.tsv";

fn load(path: &Path) -> Result<Tensor> {
    load_tensor(path).map_err(|e| match e {
        Error::IoFailure(source) => CliError::io(path, source),
        other => CliError::Malformed { path: path.to_path_buf(), msg: other.to_string() },
    })
}

fn save(path: &Path, t: &Tensor) -> Result<()> {
    save_tensor(path, t).map_err(|e| match e {
        Error::IoFailure(source) => CliError::io(path, source),
        other => other.into(),
    })
}

/// Loads an `N×D` matrix, or an `H×W×D` grid flattened row-major.
pub fn load_feature_map(path: &Path) -> Result<FeatureMap> {
    let t = load(path)?;
    let values = match t.data {
        TensorData::F64(v) => v,
        TensorData::U8(_) => return Err(CliError::Config(format!("{}: expected f64 features", path.display()))),
    };
    let fm = match *t.dims.as_slice() {
        [n, d] => FeatureMap::new(Array2::from_shape_vec((n as usize, d as usize), values).expect("checked"))?,
        [h, w, d] => {
            let data = Array2::from_shape_vec(((h * w) as usize, d as usize), values).expect("checked");
            FeatureMap::with_grid(data, h as usize, w as usize)?
        }
        ref dims => {
            return Err(CliError::Config(format!("{}: expected 2 or 3 dimensions, found {dims:?}", path.display())))
        }
    };
    Ok(fm)
}

pub fn save_feature_map(path: &Path, f: &FeatureMap) -> Result<()> {
    let mut t = Tensor::from_matrix(f.data());
    if let Some((h, w)) = f.grid() {
        t.dims = vec![h as u64, w as u64, f.dim() as u64];
    }
    save(path, &t)
}

pub fn save_matrix(path: &Path, m: &Array2<f64>) -> Result<()> {
    save(path, &Tensor::from_matrix(m))
}

pub fn save_mask(path: &Path, m: &Array2<bool>) -> Result<()> {
    save(path, &Tensor::from_mask(m))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

/// `row_index<TAB>image_id<TAB>category_id` lines, returned in row order.
pub fn read_labels(path: &Path) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let malformed =
        |line: usize, msg: &str| CliError::Malformed { path: path.to_path_buf(), msg: format!("line {line}: {msg}") };
    let mut rows: Vec<Option<(String, String)>> = Vec::new();
    for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let fields: Vec<&str> = line.split('\t').collect();
        let [idx, image, category] = fields[..] else {
            return Err(malformed(n + 1, "expected three tab-separated fields"));
        };
        let idx: usize = idx.trim().parse().map_err(|_| malformed(n + 1, "row index is not an integer"))?;
        if idx >= rows.len() {
            rows.resize(idx + 1, None);
        }
        if rows[idx].replace((image.to_string(), category.to_string())).is_some() {
            return Err(malformed(n + 1, "duplicate row index"));
        }
    }
    rows.into_iter()
        .enumerate()
        .map(|(i, r)| {
            r.ok_or_else(|| CliError::Malformed { path: path.to_path_buf(), msg: format!("row {i} missing") })
        })
        .collect()
}

pub fn write_labels<'a>(path: &Path, rows: impl Iterator<Item = (&'a str, &'a str)>) -> Result<()> {
    let mut s = String::new();
    for (i, (image, category)) in rows.enumerate() {
        writeln!(s, "{i}\t{image}\t{category}").unwrap();
    }
    write_text(path, &s)
}

fn load_rows(path: &Path) -> Result<Array2<f64>> {
    let fm = load_feature_map(path)?;
    Ok(fm.into_data())
}

/// Reads `f_v`, `f_g`, `t`, `f_c` and the label sidecar from `dir`.
pub fn load_batch(dir: &Path) -> Result<Vec<Instance>> {
    let mats = BATCH_FILES.iter().map(|f| load_rows(&dir.join(f))).collect::<Result<Vec<_>>>()?;
    let shape = mats[0].dim();
    if let Some((name, m)) = BATCH_FILES.iter().zip(&mats).find(|(_, m)| m.dim() != shape) {
        return Err(CliError::Config(format!("{name} has shape {:?}, f_v.dsdp has {shape:?}", m.dim())));
    }
    let labels = read_labels(&dir.join(LABELS_FILE))?;
    if labels.len() != shape.0 {
        return Err(CliError::Config(format!("{LABELS_FILE} lists {} rows, features have {}", labels.len(), shape.0)));
    }
    let row = |m: &Array2<f64>, i: usize| m.row(i).to_vec();
    labels
        .into_iter()
        .enumerate()
        .map(|(i, (image, category))| {
            Ok(Instance::new(row(&mats[0], i), row(&mats[1], i), row(&mats[2], i), row(&mats[3], i), image, category)?)
        })
        .collect()
}

pub fn save_batch(dir: &Path, batch: &[Instance]) -> Result<()> {
    create_dir(dir)?;
    let d = batch.first().map_or(0, Instance::dim);
    let stack = |pick: fn(&Instance) -> &Vec<f64>| {
        Array2::from_shape_vec((batch.len(), d), batch.iter().flat_map(|b| pick(b).clone()).collect()).expect("uniform")
    };
    save_matrix(&dir.join("f_v.dsdp"), &stack(|b| &b.f_v))?;
    save_matrix(&dir.join("f_g.dsdp"), &stack(|b| &b.f_g))?;
    save_matrix(&dir.join("t.dsdp"), &stack(|b| &b.t))?;
    save_matrix(&dir.join("f_c.dsdp"), &stack(|b| &b.f_c))?;
    write_labels(&dir.join(LABELS_FILE), batch.iter().map(|b| (b.image_id.as_str(), b.category_id.as_str())))
}
