//! Dataset directory layout and file formats.
//!
//! A dataset directory holds:
//! - `features.csv`: one headerless row of decimals per sample
//! - `labels.txt`: the class name of each sample, one per line
//! - `semantics.csv`: one row per class, seen classes then unseen, in split order
//! - `split.json`: `{"seen": [...], "unseen": [...]}` plus optional `"seen_test"`,
//!   sample indices of seen-class rows held out for generalised evaluation

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use hzsl_core::hierarchy::SemanticTable;
use hzsl_core::pipeline::Dataset;
use hzsl_core::Matrix;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const FEATURES: &str = "features.csv";
pub const LABELS: &str = "labels.txt";
pub const SEMANTICS: &str = "semantics.csv";
pub const SPLIT: &str = "split.json";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Split {
    pub seen: Vec<String>,
    pub unseen: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub seen_test: Vec<usize>,
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))
}

pub fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::usage(format!("cannot write {}: {e}", path.display())))
}

pub fn parse_csv(text: &str, path: &Path) -> Result<Matrix, CliError> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|v| {
                v.trim().parse::<f64>().map_err(|_| {
                    CliError::usage(format!("{}: line {}: `{}` is not a number", path.display(), ln + 1, v.trim()))
                })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(CliError::usage(format!(
                    "{}: line {} has {} columns, expected {}",
                    path.display(),
                    ln + 1,
                    row.len(),
                    first.len()
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::usage(format!("{}: no rows", path.display())));
    }
    Matrix::from_rows(&rows).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

pub fn format_csv(m: &Matrix) -> String {
    let mut out = String::with_capacity(m.rows() * m.cols() * 20);
    for row in m.row_iter() {
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            let _ = write!(out, "{v}");
        }
        out.push('\n');
    }
    out
}

pub fn load_dataset(dir: &Path) -> Result<Dataset, CliError> {
    let split_path = dir.join(SPLIT);
    let split: Split = serde_json::from_str(&read_text(&split_path)?)
        .map_err(|e| CliError::usage(format!("{}: {e}", split_path.display())))?;
    let names: Vec<String> = split.seen.iter().chain(&split.unseen).cloned().collect();
    let mut set = HashSet::new();
    for n in &names {
        if !set.insert(n.as_str()) {
            return Err(CliError::usage(format!("{}: class `{n}` listed twice", split_path.display())));
        }
    }

    let sem_path = dir.join(SEMANTICS);
    let vectors = parse_csv(&read_text(&sem_path)?, &sem_path)?;
    if vectors.rows() != names.len() {
        return Err(CliError::usage(format!(
            "{}: {} rows but the split lists {} classes",
            sem_path.display(),
            vectors.rows(),
            names.len()
        )));
    }
    let semantics = SemanticTable::new(names, vectors, split.seen.len())
        .map_err(|e| CliError::usage(format!("{}: {e}", sem_path.display())))?;

    let labels_path = dir.join(LABELS);
    let labels = read_text(&labels_path)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .enumerate()
        .map(|(i, name)| {
            semantics.index_of(name).ok_or_else(|| {
                CliError::usage(format!("{}: line {}: unknown class `{name}`", labels_path.display(), i + 1))
            })
        })
        .collect::<Result<Vec<usize>, _>>()?;

    let feat_path = dir.join(FEATURES);
    let features = parse_csv(&read_text(&feat_path)?, &feat_path)?;
    if features.rows() != labels.len() {
        return Err(CliError::usage(format!(
            "{} has {} rows but {} has {} labels",
            feat_path.display(),
            features.rows(),
            labels_path.display(),
            labels.len()
        )));
    }
    Dataset::new(semantics, features, labels, split.seen_test)
        .map_err(|e| CliError::usage(format!("{}: {e}", dir.display())))
}

pub fn write_dataset(dir: &Path, data: &Dataset) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::usage(format!("cannot create {}: {e}", dir.display())))?;
    let sem = &data.semantics;
    let names = sem.names();
    write_file(&dir.join(FEATURES), format_csv(&data.features))?;
    let labels: String = data.labels.iter().map(|&c| format!("{}\n", names[c])).collect();
    write_file(&dir.join(LABELS), labels)?;
    write_file(&dir.join(SEMANTICS), format_csv(sem.vectors()))?;
    let split = Split {
        seen: names[..sem.seen_count()].to_vec(),
        unseen: names[sem.seen_count()..].to_vec(),
        seen_test: data.seen_test.clone(),
    };
    let json = serde_json::to_string_pretty(&split).expect("split serialises");
    write_file(&dir.join(SPLIT), json + "\n")
}

/// `model.bin` → `model.params.json`.
pub fn sidecar_path(model: &Path) -> PathBuf {
    model.with_extension("params.json")
}
