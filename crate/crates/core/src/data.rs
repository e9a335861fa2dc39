//! Classification datasets: seeded synthetic presets and CSV ingestion.

use std::collections::BTreeSet;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::nn::Matrix;
use crate::rng::rng_from_seed;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    features: Matrix,
    labels: Vec<usize>,
    num_classes: usize,
    splits: Splits,
}

impl Dataset {
    /// Validates label range and that the splits partition `0..n`.
    pub fn new(
        name: impl Into<String>,
        features: Matrix,
        labels: Vec<usize>,
        num_classes: usize,
        splits: Splits,
    ) -> Result<Self> {
        let n = features.rows();
        if labels.len() != n {
            return Err(Error::shape("Dataset labels", n, labels.len()));
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::LabelOutOfRange { label, num_classes });
        }
        let mut seen = vec![false; n];
        for &i in splits.train.iter().chain(&splits.val).chain(&splits.test) {
            if i >= n || std::mem::replace(&mut seen[i], true) {
                return Err(Error::Config(format!("splits must partition 0..{n}; index {i} repeated or out of range")));
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Config(format!("splits must cover 0..{n}")));
        }
        Ok(Self {
            name: name.into(),
            features,
            labels,
            num_classes,
            splits,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn splits(&self) -> &Splits {
        &self.splits
    }

    /// Classes missing from the train or validation split.
    pub fn missing_classes(&self) -> Vec<usize> {
        let present = |idx: &[usize]| idx.iter().map(|&i| self.labels[i]).collect::<BTreeSet<_>>();
        let (train, val) = (present(&self.splits.train), present(&self.splits.val));
        (0..self.num_classes)
            .filter(|c| !train.contains(c) || !val.contains(c))
            .collect()
    }

    /// Features and labels of the given rows.
    pub fn gather(&self, indices: &[usize]) -> Result<(Matrix, Vec<usize>)> {
        let x = self.features.select_rows(indices)?;
        Ok((x, indices.iter().map(|&i| self.labels[i]).collect()))
    }
}

/// Per-class 70/15/15 split after a seeded shuffle, so every class with at
/// least three examples lands in every split.
pub fn stratified_split(labels: &[usize], num_classes: usize, seed: u64) -> Splits {
    let mut rng = rng_from_seed(seed);
    let mut splits = Splits::default();
    for class in 0..num_classes {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut rng);
        let n = idx.len();
        let n_val = ((n as f64) * 0.15).round().max(if n >= 3 { 1.0 } else { 0.0 }) as usize;
        let n_test = n_val.min(n.saturating_sub(n_val + 1));
        let n_train = n - n_val - n_test;
        splits.train.extend_from_slice(&idx[..n_train]);
        splits.val.extend_from_slice(&idx[n_train..n_train + n_val]);
        splits.test.extend_from_slice(&idx[n_train + n_val..]);
    }
    splits.train.sort_unstable();
    splits.val.sort_unstable();
    splits.test.sort_unstable();
    splits
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SyntheticPreset {
    /// 10 well-separated Gaussian classes in 16 dimensions.
    BlobsEasy,
    /// 10 classes with overlapping means that differ mainly in spread (6000 rows).
    BlobsHard,
    /// 3 concentric rings in a random plane of a 16-dimensional space.
    Rings,
}

impl SyntheticPreset {
    pub fn name(self) -> &'static str {
        match self {
            SyntheticPreset::BlobsEasy => "blobs-easy",
            SyntheticPreset::BlobsHard => "blobs-hard",
            SyntheticPreset::Rings => "rings",
        }
    }
}

impl FromStr for SyntheticPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "blobs-easy" => Ok(SyntheticPreset::BlobsEasy),
            "blobs-hard" => Ok(SyntheticPreset::BlobsHard),
            "rings" => Ok(SyntheticPreset::Rings),
            other => Err(Error::UnknownPreset(other.to_string())),
        }
    }
}

const SYNTH_DIM: usize = 16;
const SYNTH_ROWS: usize = 3000;

pub fn generate_synthetic(preset: &str, seed: u64) -> Result<Dataset> {
    Ok(synthetic(preset.parse()?, seed))
}

pub fn synthetic(preset: SyntheticPreset, seed: u64) -> Dataset {
    let mut rng = rng_from_seed(seed);
    let std_normal = Normal::new(0.0, 1.0).expect("valid normal");
    let (num_classes, rows): (usize, Vec<(Vec<f64>, usize)>) = match preset {
        SyntheticPreset::BlobsEasy => {
            let k = 10;
            let means: Vec<Vec<f64>> = (0..k)
                .map(|_| (0..SYNTH_DIM).map(|_| 2.0 * std_normal.sample(&mut rng)).collect())
                .collect();
            let rows = (0..SYNTH_ROWS)
                .map(|i| {
                    let c = i % k;
                    let x = means[c].iter().map(|m| m + std_normal.sample(&mut rng)).collect();
                    (x, c)
                })
                .collect();
            (k, rows)
        }
        SyntheticPreset::BlobsHard => {
            // Nearly shared means; classes differ mainly in spread, so the
            // best boundary is quadratic and depth/nonlinearity pay off.
            let k = 10;
            let means: Vec<Vec<f64>> = (0..k)
                .map(|_| (0..SYNTH_DIM).map(|_| 0.3 * std_normal.sample(&mut rng)).collect())
                .collect();
            let rows = (0..2 * SYNTH_ROWS)
                .map(|i| {
                    let c = i % k;
                    let spread = 0.5 * 5f64.powf(c as f64 / (k - 1) as f64);
                    let x = means[c]
                        .iter()
                        .map(|mu| mu + spread * std_normal.sample(&mut rng))
                        .collect();
                    (x, c)
                })
                .collect();
            (k, rows)
        }
        SyntheticPreset::Rings => {
            let k = 3;
            let (u, v) = random_plane(SYNTH_DIM, &mut rng, &std_normal);
            let rows = (0..SYNTH_ROWS)
                .map(|i| {
                    let c = i % k;
                    let radius = 1.0 + c as f64 + 0.15 * std_normal.sample(&mut rng);
                    let angle = rng.random_range(0.0..std::f64::consts::TAU);
                    let (a, b) = (radius * angle.cos(), radius * angle.sin());
                    let x = (0..SYNTH_DIM)
                        .map(|j| a * u[j] + b * v[j] + 0.1 * std_normal.sample(&mut rng))
                        .collect();
                    (x, c)
                })
                .collect();
            (k, rows)
        }
    };
    let labels: Vec<usize> = rows.iter().map(|(_, c)| *c).collect();
    let features = Matrix::new(
        rows.len(),
        SYNTH_DIM,
        rows.into_iter().flat_map(|(x, _)| x).collect(),
    )
    .expect("synthetic rows have fixed width");
    let splits = stratified_split(&labels, num_classes, seed ^ 0x5EED_5EED);
    Dataset::new(preset.name(), features, labels, num_classes, splits).expect("synthetic dataset is well formed")
}

/// Orthonormal pair spanning a random plane.
fn random_plane<R: Rng>(d: usize, rng: &mut R, normal: &Normal<f64>) -> (Vec<f64>, Vec<f64>) {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let u: Vec<f64> = (0..d).map(|_| normal.sample(rng)).collect();
    let nu = norm(&u);
    let u: Vec<f64> = u.iter().map(|x| x / nu).collect();
    let mut v: Vec<f64> = (0..d).map(|_| normal.sample(rng)).collect();
    let dot: f64 = u.iter().zip(&v).map(|(a, b)| a * b).sum();
    v.iter_mut().zip(&u).for_each(|(x, ui)| *x -= dot * ui);
    let nv = norm(&v);
    (u, v.iter().map(|x| x / nv).collect())
}

/// Result of [`load_csv`], including any label remapping that took place.
#[derive(Debug, Clone)]
pub struct CsvLoad {
    pub dataset: Dataset,
    /// `original_labels[new]` is the label as written in the file; present only
    /// when the file's labels were not already `0..k`.
    pub label_map: Option<Vec<usize>>,
    pub warnings: Vec<String>,
}

/// Reads `f0,..,f{d-1},label[,split]`. Without a split column the rows are split
/// 70/15/15 per class with `split_seed`.
pub fn load_csv(path: &Path, split_seed: u64) -> Result<CsvLoad> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text, path.file_stem().and_then(|s| s.to_str()).unwrap_or("csv"), split_seed)
}

pub fn parse_csv(text: &str, name: &str, split_seed: u64) -> Result<CsvLoad> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut records = reader.records();
    let header = match records.next() {
        None => return Err(Error::EmptyDataset("csv file is empty".into())),
        Some(r) => r?,
    };
    let cols: Vec<&str> = header.iter().collect();
    let has_split = cols.last() == Some(&"split");
    let n_feat = cols.len().saturating_sub(if has_split { 2 } else { 1 });
    let header_ok = n_feat > 0
        && cols[n_feat] == "label"
        && cols[..n_feat]
            .iter()
            .enumerate()
            .all(|(i, c)| *c == format!("f{i}"));
    if !header_ok {
        return Err(Error::Parse {
            line: 1,
            message: "expected header `f0,...,f{d-1},label[,split]`".into(),
        });
    }

    let mut features = Vec::new();
    let mut raw_labels = Vec::new();
    let mut split_tags = Vec::new();
    for record in records {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != cols.len() {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, found {}", cols.len(), record.len()),
            });
        }
        for (j, cell) in record.iter().take(n_feat).enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                line,
                message: format!("f{j} = `{cell}` is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line,
                    message: format!("f{j} is not finite"),
                });
            }
            features.push(v);
        }
        let label: usize = record[n_feat].parse().map_err(|_| Error::Parse {
            line,
            message: format!("label `{}` is not a nonnegative integer", &record[n_feat]),
        })?;
        raw_labels.push(label);
        if has_split {
            let tag = &record[n_feat + 1];
            if !matches!(tag, "train" | "val" | "test") {
                return Err(Error::Parse {
                    line,
                    message: format!("split `{tag}` must be train, val or test"),
                });
            }
            split_tags.push(tag.to_string());
        }
    }
    if raw_labels.is_empty() {
        return Err(Error::EmptyDataset("csv file has a header but no rows".into()));
    }

    let distinct: Vec<usize> = raw_labels.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    let contiguous = distinct.iter().enumerate().all(|(i, &l)| i == l);
    let mut warnings = Vec::new();
    let (labels, label_map) = if contiguous {
        (raw_labels, None)
    } else {
        warnings.push(format!("labels {distinct:?} remapped to 0..{}", distinct.len()));
        let labels = raw_labels
            .iter()
            .map(|l| distinct.binary_search(l).expect("label is in distinct set"))
            .collect();
        (labels, Some(distinct.clone()))
    };
    let num_classes = distinct.len();
    let n = labels.len();
    let splits = if has_split {
        let pick = |tag: &str| (0..n).filter(|&i| split_tags[i] == tag).collect();
        Splits {
            train: pick("train"),
            val: pick("val"),
            test: pick("test"),
        }
    } else {
        stratified_split(&labels, num_classes, split_seed)
    };
    let dataset = Dataset::new(
        name,
        Matrix::new(n, n_feat, features)?,
        labels,
        num_classes,
        splits,
    )?;
    let missing = dataset.missing_classes();
    if !missing.is_empty() {
        warnings.push(format!("classes {missing:?} are missing from the train or val split"));
    }
    Ok(CsvLoad {
        dataset,
        label_map,
        warnings,
    })
}

/// Writes every row with an explicit split column.
pub fn save_csv(dataset: &Dataset, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    let d = dataset.input_dim();
    let mut header: Vec<String> = (0..d).map(|j| format!("f{j}")).collect();
    header.push("label".into());
    header.push("split".into());
    writer.write_record(&header)?;
    let mut tags = vec![""; dataset.len()];
    for (tag, idx) in [
        ("train", &dataset.splits.train),
        ("val", &dataset.splits.val),
        ("test", &dataset.splits.test),
    ] {
        for &i in idx {
            tags[i] = tag;
        }
    }
    for i in 0..dataset.len() {
        let mut row: Vec<String> = dataset.features.row(i).iter().map(|v| format!("{v:?}")).collect();
        row.push(dataset.labels[i].to_string());
        row.push(tags[i].to_string());
        writer.write_record(&row)?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_is_deterministic() {
        for preset in ["blobs-easy", "blobs-hard", "rings"] {
            let a = generate_synthetic(preset, 3).unwrap();
            assert_eq!(a, generate_synthetic(preset, 3).unwrap());
            assert_ne!(a.features(), generate_synthetic(preset, 4).unwrap().features());
            assert!(a.missing_classes().is_empty());
            assert_eq!(a.input_dim(), 16);
        }
        assert!(matches!(generate_synthetic("moons", 1), Err(Error::UnknownPreset(_))));
    }

    #[test]
    fn splits_partition_rows() {
        let d = generate_synthetic("rings", 9).unwrap();
        let s = d.splits();
        assert_eq!(s.train.len() + s.val.len() + s.test.len(), d.len());
        assert_eq!(d.num_classes(), 3);
        let bad = Splits {
            train: vec![0, 1],
            val: vec![1],
            test: vec![],
        };
        assert!(Dataset::new("x", Matrix::zeros(2, 1), vec![0, 0], 1, bad).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let text = "f0,f1,label\n1.5,-2,0\n0.25,3,1\n7,8,1\n";
        let load = parse_csv(text, "toy", 0).unwrap();
        assert!(load.label_map.is_none());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("toy.csv");
        save_csv(&load.dataset, &path).unwrap();
        let again = load_csv(&path, 0).unwrap();
        assert_eq!(again.dataset.features(), load.dataset.features());
        assert_eq!(again.dataset.labels(), load.dataset.labels());
        assert_eq!(again.dataset.splits(), load.dataset.splits());
    }

    #[test]
    fn csv_errors() {
        assert!(matches!(parse_csv("", "e", 0), Err(Error::EmptyDataset(_))));
        assert!(matches!(
            parse_csv("1,2,0\n3,4,1\n", "e", 0),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            parse_csv("f0,label\n1,0\nx,1\n", "e", 0),
            Err(Error::Parse { line: 3, .. })
        ));
        assert!(matches!(
            parse_csv("f0,label\n1,0\n2\n", "e", 0),
            Err(Error::Parse { line: 3, .. })
        ));
    }

    #[test]
    fn sparse_labels_are_remapped() {
        let load = parse_csv("f0,label\n1,0\n2,2\n3,5\n4,5\n", "r", 0).unwrap();
        assert_eq!(load.label_map, Some(vec![0, 2, 5]));
        assert_eq!(load.dataset.labels(), &[0, 1, 2, 2]);
        assert_eq!(load.dataset.num_classes(), 3);
        assert!(!load.warnings.is_empty());
    }
}
