//! Labelled datasets, the synthetic Gaussian-blob generator and the dataset CSV format.
//!
//! CSV layout: header `f0,...,f{d-1},true_label,observed_label`, one row per sample.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Batch, Matrix};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub features: Matrix,
    pub true_labels: Vec<usize>,
    pub observed_labels: Vec<usize>,
    pub num_classes: usize,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        features: Matrix,
        true_labels: Vec<usize>,
        observed_labels: Vec<usize>,
        num_classes: usize,
    ) -> Result<Self> {
        let n = features.rows();
        if true_labels.len() != n || observed_labels.len() != n {
            return Err(Error::shape(format!(
                "{n} feature rows, {} true labels, {} observed labels",
                true_labels.len(),
                observed_labels.len()
            )));
        }
        if num_classes < 2 {
            return Err(Error::config("a dataset needs at least two classes"));
        }
        if let Some(&bad) = true_labels.iter().chain(&observed_labels).find(|&&y| y >= num_classes) {
            return Err(Error::config(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        Ok(Self {
            name: name.into(),
            features,
            true_labels,
            observed_labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.true_labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.true_labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn is_clean(&self, i: usize) -> bool {
        self.true_labels[i] == self.observed_labels[i]
    }

    pub fn clean_mask(&self) -> Vec<bool> {
        (0..self.len()).map(|i| self.is_clean(i)).collect()
    }

    pub fn clean_fraction(&self) -> f64 {
        if self.is_empty() {
            return 1.0;
        }
        self.clean_mask().iter().filter(|&&c| c).count() as f64 / self.len() as f64
    }

    /// Same samples with observed labels replaced.
    pub fn with_observed(&self, observed_labels: Vec<usize>) -> Result<Self> {
        Dataset::new(
            self.name.clone(),
            self.features.clone(),
            self.true_labels.clone(),
            observed_labels,
            self.num_classes,
        )
    }

    /// Minibatch of the listed samples, labelled with their observed labels.
    pub fn batch(&self, ids: &[usize]) -> Result<Batch> {
        if let Some(&bad) = ids.iter().find(|&&i| i >= self.len()) {
            return Err(Error::Index {
                index: bad,
                len: self.len(),
            });
        }
        let labels = ids.iter().map(|&i| self.observed_labels[i]).collect();
        Batch::new(ids.to_vec(), self.features.select_rows(ids), labels)
    }

    /// Rows `range` as a new dataset.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Result<Self> {
        let ids: Vec<usize> = range.collect();
        Dataset::new(
            self.name.clone(),
            self.features.select_rows(&ids),
            ids.iter().map(|&i| self.true_labels[i]).collect(),
            ids.iter().map(|&i| self.observed_labels[i]).collect(),
            self.num_classes,
        )
    }
}

/// Parameters of the Gaussian-blob generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlobSpec {
    pub k: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub dim: usize,
    /// Radius of the circle the class means sit on.
    pub radius: f64,
    /// Per-coordinate standard deviation around each mean.
    pub spread: f64,
    pub seed: u64,
}

impl BlobSpec {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::config("blobs need k >= 2"));
        }
        if self.dim < 2 {
            return Err(Error::config("blobs need dim >= 2"));
        }
        if self.n_train < self.k || self.n_test < self.k {
            return Err(Error::config("n_train and n_test must be at least k"));
        }
        if !(self.spread > 0.0 && self.spread.is_finite()) {
            return Err(Error::config("spread must be positive"));
        }
        if !(self.radius >= 0.0 && self.radius.is_finite()) {
            return Err(Error::config("radius must be non-negative"));
        }
        Ok(())
    }
}

/// A train/test pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Dataset,
    pub test: Dataset,
}

/// `k` Gaussian clusters with means evenly spaced on a circle of radius
/// `radius` in the first two coordinates; remaining coordinates are pure noise.
/// Classes are balanced (sample `i` has class `i mod k`) and labels are clean.
pub fn make_blobs(spec: &BlobSpec) -> Result<Split> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.spread).map_err(|e| Error::config(format!("spread: {e}")))?;
    let means: Vec<[f64; 2]> = (0..spec.k)
        .map(|c| {
            let angle = std::f64::consts::TAU * c as f64 / spec.k as f64;
            [spec.radius * angle.cos(), spec.radius * angle.sin()]
        })
        .collect();

    let mut draw = |n: usize, name: &str| -> Result<Dataset> {
        let mut data = Vec::with_capacity(n * spec.dim);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let c = i % spec.k;
            for j in 0..spec.dim {
                let centre = means[c].get(j).copied().unwrap_or(0.0);
                data.push(centre + noise.sample(&mut rng));
            }
            labels.push(c);
        }
        Dataset::new(
            name,
            Matrix::from_vec(n, spec.dim, data)?,
            labels.clone(),
            labels,
            spec.k,
        )
    };
    let train = draw(spec.n_train, "blobs-train")?;
    let test = draw(spec.n_test, "blobs-test")?;
    Ok(Split { train, test })
}

fn csv_header(dim: usize) -> Vec<String> {
    let mut h: Vec<String> = (0..dim).map(|j| format!("f{j}")).collect();
    h.push("true_label".into());
    h.push("observed_label".into());
    h
}

pub fn write_dataset_csv<W: std::io::Write>(dataset: &Dataset, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(csv_header(dataset.dim()))?;
    let mut record = Vec::with_capacity(dataset.dim() + 2);
    for i in 0..dataset.len() {
        record.clear();
        record.extend(dataset.features.row(i).iter().map(|v| v.to_string()));
        record.push(dataset.true_labels[i].to_string());
        record.push(dataset.observed_labels[i].to_string());
        w.write_record(&record)?;
    }
    w.flush().map_err(|e| Error::io("<dataset csv>", e))?;
    Ok(())
}

pub fn save_dataset(dataset: &Dataset, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_dataset_csv(dataset, std::io::BufWriter::new(file))
}

/// Reads a dataset CSV. `num_classes` defaults to one more than the largest label.
pub fn read_dataset_csv<R: std::io::Read>(
    input: R,
    name: &str,
    num_classes: Option<usize>,
) -> Result<Dataset> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    let cols = header.len();
    if cols < 3 {
        return Err(Error::config("dataset CSV needs at least one feature and two label columns"));
    }
    let dim = cols - 2;
    let expected = csv_header(dim);
    if header.iter().ne(expected.iter().map(String::as_str)) {
        return Err(Error::config(format!(
            "unexpected dataset header {:?}, expected {:?}",
            header.iter().collect::<Vec<_>>(),
            expected
        )));
    }
    let mut data = Vec::new();
    let mut true_labels = Vec::new();
    let mut observed = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = |what: &str| Error::config(format!("row {}: bad {what}", line + 1));
        for j in 0..dim {
            let v: f64 = rec[j].trim().parse().map_err(|_| bad("feature"))?;
            data.push(v);
        }
        true_labels.push(rec[dim].trim().parse::<usize>().map_err(|_| bad("true_label"))?);
        observed.push(rec[dim + 1].trim().parse::<usize>().map_err(|_| bad("observed_label"))?);
    }
    let k = match num_classes {
        Some(k) => k,
        None => true_labels.iter().chain(&observed).max().map_or(2, |m| (m + 1).max(2)),
    };
    let n = true_labels.len();
    Dataset::new(name, Matrix::from_vec(n, dim, data)?, true_labels, observed, k)
}

pub fn load_dataset(path: &Path, num_classes: Option<usize>) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map_or_else(|| "dataset".to_string(), |s| s.to_string_lossy().into_owned());
    read_dataset_csv(std::io::BufReader::new(file), &name, num_classes)
}
