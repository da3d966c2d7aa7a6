//! UCI ADULT census records.
//!
//! Gender and age are removed from the inputs and become sensitive labels,
//! leaving 12 input fields. Records from `adult.data` and `adult.test` are
//! pooled, then a seeded draw picks the train/val and test samples.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{Column, Field, FieldKind, FieldSpec, SensitiveFeature, Split, VerticalDataset, UNK};
use crate::rng::stream;
use crate::{Error, Result};

const COLUMNS: [&str; 15] = [
    "age",
    "workclass",
    "fnlwgt",
    "education",
    "education-num",
    "marital-status",
    "occupation",
    "relationship",
    "race",
    "sex",
    "capital-gain",
    "capital-loss",
    "hours-per-week",
    "native-country",
    "income",
];

/// The 12 model inputs, in file order.
pub const ADULT_INPUT_FIELDS: [&str; 12] = [
    "workclass",
    "fnlwgt",
    "education",
    "education-num",
    "marital-status",
    "occupation",
    "relationship",
    "race",
    "capital-gain",
    "capital-loss",
    "hours-per-week",
    "native-country",
];

const NUMERIC: [&str; 5] = ["fnlwgt", "education-num", "capital-gain", "capital-loss", "hours-per-week"];

/// Class names of [`bucketize_age`].
pub const AGE_BUCKETS: [&str; 5] = ["17-30", "31-44", "45-58", "59-72", "73-90"];

/// Five equal-width buckets over [17, 90]: `[17,31) [31,45) [45,59) [59,73) [73,90]`.
/// Ages below 17 fall in the first bucket and ages above 90 in the last.
pub fn bucketize_age(age: f64) -> Result<usize> {
    if !(0.0..=130.0).contains(&age) {
        return Err(Error::Data(format!("age {age} outside [0, 130]")));
    }
    let bucket = ((age - 17.0) / 14.0).floor();
    Ok(bucket.clamp(0.0, 4.0) as usize)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdultOptions {
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub seed: u64,
}

impl Default for AdultOptions {
    fn default() -> Self {
        Self {
            train: 18_000,
            val: 2_000,
            test: 10_000,
            seed: 2022,
        }
    }
}

struct Record {
    values: Vec<String>,
    age: f64,
    income: usize,
}

fn parse_file(path: &Path, out: &mut Vec<Record>) -> Result<()> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let name = path.display().to_string();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('|') {
            continue;
        }
        let perr = |msg: String| Error::Parse {
            path: name.clone(),
            line: lineno + 1,
            msg,
        };
        let tokens: Vec<&str> = line.split(',').map(str::trim).collect();
        if tokens.len() != COLUMNS.len() {
            return Err(perr(format!("expected {} columns, found {}", COLUMNS.len(), tokens.len())));
        }
        let age: f64 = tokens[0]
            .parse()
            .map_err(|_| perr(format!("age `{}` is not a number", tokens[0])))?;
        for (col, tok) in COLUMNS.iter().zip(&tokens) {
            if NUMERIC.contains(col) && tok.parse::<f64>().is_err() {
                return Err(perr(format!("{col} `{tok}` is not a number")));
            }
        }
        let income = match tokens[14].trim_end_matches('.') {
            "<=50K" => 0,
            ">50K" => 1,
            other => return Err(perr(format!("unknown income label `{other}`"))),
        };
        out.push(Record {
            values: tokens.iter().map(|t| t.to_string()).collect(),
            age,
            income,
        });
    }
    Ok(())
}

fn source_files(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_dir() {
        let files: Vec<PathBuf> = ["adult.data", "adult.test"]
            .iter()
            .map(|f| path.join(f))
            .filter(|p| p.exists())
            .collect();
        if files.is_empty() {
            return Err(Error::io(
                path.join("adult.data"),
                std::io::Error::new(std::io::ErrorKind::NotFound, "no adult.data or adult.test"),
            ));
        }
        Ok(files)
    } else if path.exists() {
        Ok(vec![path.to_path_buf()])
    } else {
        Err(Error::io(path, std::io::Error::new(std::io::ErrorKind::NotFound, "file not found")))
    }
}

/// Loads a single ADULT file, or `adult.data` + `adult.test` from a directory.
pub fn load_adult(path: &Path, opts: &AdultOptions) -> Result<VerticalDataset> {
    let mut records = Vec::new();
    for f in source_files(path)? {
        parse_file(&f, &mut records)?;
    }
    let wanted = opts.train + opts.val + opts.test;
    if opts.train == 0 || opts.test == 0 {
        return Err(Error::Config("train and test sizes must be positive".into()));
    }
    if records.len() < wanted {
        return Err(Error::Data(format!(
            "{} records available, {wanted} requested",
            records.len()
        )));
    }
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.shuffle(&mut stream(opts.seed, "adult/sample"));
    order.truncate(wanted);
    let split: Vec<Split> = (0..wanted)
        .map(|i| {
            if i < opts.train {
                Split::Train
            } else if i < opts.train + opts.val {
                Split::Val
            } else {
                Split::Test
            }
        })
        .collect();
    let rows: Vec<&Record> = order.iter().map(|&i| &records[i]).collect();
    let ids: Vec<u64> = order.iter().map(|&i| i as u64 + 1).collect();

    let mut fields = Vec::new();
    for name in ADULT_INPUT_FIELDS {
        let col = COLUMNS.iter().position(|c| *c == name).expect("known column");
        if NUMERIC.contains(&name) {
            let raw: Vec<f64> = rows
                .iter()
                .map(|r| r.values[col].parse().expect("validated while parsing"))
                .collect();
            fields.push(Field {
                spec: FieldSpec {
                    name: name.to_string(),
                    kind: FieldKind::Numeric,
                },
                column: Column::Numeric(standardize(&raw, &split)),
            });
        } else {
            let train_values: BTreeSet<&str> = rows
                .iter()
                .zip(&split)
                .filter(|(_, s)| **s == Split::Train)
                .map(|(r, _)| r.values[col].as_str())
                .collect();
            let mut vocab = vec![UNK.to_string()];
            vocab.extend(train_values.iter().map(|s| s.to_string()));
            let lookup: HashMap<&str, u32> = train_values
                .iter()
                .enumerate()
                .map(|(i, v)| (*v, i as u32 + 1))
                .collect();
            let values = rows
                .iter()
                .map(|r| lookup.get(r.values[col].as_str()).copied().unwrap_or(0))
                .collect();
            fields.push(Field {
                spec: FieldSpec {
                    name: name.to_string(),
                    kind: FieldKind::Categorical { vocab },
                },
                column: Column::Categorical(values),
            });
        }
    }

    let sex_col = COLUMNS.iter().position(|c| *c == "sex").expect("known column");
    let gender = rows
        .iter()
        .map(|r| match r.values[sex_col].as_str() {
            "Female" => Ok(0),
            "Male" => Ok(1),
            other => Err(Error::Data(format!("unknown sex value `{other}`"))),
        })
        .collect::<Result<Vec<_>>>()?;
    let age = rows
        .iter()
        .map(|r| bucketize_age(r.age))
        .collect::<Result<Vec<_>>>()?;

    let ds = VerticalDataset {
        ids,
        fields,
        task_name: "income".into(),
        task_classes: vec!["<=50K".into(), ">50K".into()],
        task_labels: rows.iter().map(|r| r.income).collect(),
        sensitive: vec![
            SensitiveFeature {
                name: "gender".into(),
                classes: vec!["Female".into(), "Male".into()],
                labels: gender,
            },
            SensitiveFeature {
                name: "age".into(),
                classes: AGE_BUCKETS.iter().map(|s| s.to_string()).collect(),
                labels: age,
            },
        ],
        split,
    };
    ds.validate()?;
    Ok(ds)
}

/// Standardizes with the train-split mean and (population) standard deviation.
pub(crate) fn standardize(raw: &[f64], split: &[Split]) -> Vec<f64> {
    let train: Vec<f64> = raw
        .iter()
        .zip(split)
        .filter(|(_, s)| **s == Split::Train)
        .map(|(v, _)| *v)
        .collect();
    let n = train.len().max(1) as f64;
    let mean = train.iter().sum::<f64>() / n;
    let var = train.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = if var > 0.0 { var.sqrt() } else { 1.0 };
    raw.iter().map(|v| (v - mean) / std).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn age_bucket_boundaries() {
        assert_eq!(bucketize_age(17.0).unwrap(), 0);
        assert_eq!(bucketize_age(30.0).unwrap(), 0);
        assert_eq!(bucketize_age(31.0).unwrap(), 1);
        assert_eq!(bucketize_age(45.0).unwrap(), 2);
        assert_eq!(bucketize_age(59.0).unwrap(), 3);
        assert_eq!(bucketize_age(73.0).unwrap(), 4);
        assert_eq!(bucketize_age(89.0).unwrap(), 4);
        assert_eq!(bucketize_age(90.0).unwrap(), 4);
        assert!(bucketize_age(131.0).is_err());
        assert!(bucketize_age(-1.0).is_err());
    }

    #[test]
    fn standardization_uses_train_rows_only() {
        let raw = [1.0, 2.0, 3.0, 100.0];
        let split = [Split::Train, Split::Train, Split::Train, Split::Test];
        let z = standardize(&raw, &split);
        let mean = z[..3].iter().sum::<f64>() / 3.0;
        let var = z[..3].iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 3.0;
        assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-12);
        assert!(z[3] > 10.0);
    }
}
