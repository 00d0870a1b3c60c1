//! Datasets: synthetic generators, CSV ingestion and stratified splitting.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::Matrix;
use crate::rng::Rng;

/// Features, dense labels `0..num_classes` and per-feature `(min, max)` ranges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    features: Matrix,
    labels: Vec<usize>,
    num_classes: usize,
    feature_ranges: Vec<(f64, f64)>,
}

impl Dataset {
    /// Validates the invariants and records the feature ranges of `features`.
    pub fn new(features: Matrix, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        let ranges = column_ranges(&features);
        Self::with_ranges(features, labels, num_classes, ranges)
    }

    /// Like [`Dataset::new`] but keeps externally recorded ranges, e.g. those
    /// of the source a split was drawn from.
    pub fn with_ranges(
        features: Matrix,
        labels: Vec<usize>,
        num_classes: usize,
        feature_ranges: Vec<(f64, f64)>,
    ) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::shape(format!(
                "{} feature rows but {} labels",
                features.rows(),
                labels.len()
            )));
        }
        if feature_ranges.len() != features.cols() {
            return Err(Error::shape("one (min, max) range per feature column required"));
        }
        if !features.is_finite() {
            return Err(Error::data("non-finite feature value"));
        }
        let mut counts = vec![0usize; num_classes];
        for (i, &y) in labels.iter().enumerate() {
            if y >= num_classes {
                return Err(Error::data(format!(
                    "label {y} at row {i} is out of range for {num_classes} classes"
                )));
            }
            counts[y] += 1;
        }
        if let Some(c) = counts.iter().position(|&n| n == 0) {
            return Err(Error::data(format!("class {c} has no samples")));
        }
        Ok(Self {
            features,
            labels,
            num_classes,
            feature_ranges,
        })
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn feature_ranges(&self) -> &[(f64, f64)] {
        &self.feature_ranges
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dims(&self) -> usize {
        self.features.cols()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    fn subset(&self, idx: &[usize]) -> Result<Dataset> {
        Dataset::with_ranges(
            self.features.select_rows(idx),
            idx.iter().map(|&i| self.labels[i]).collect(),
            self.num_classes,
            self.feature_ranges.clone(),
        )
    }
}

fn column_ranges(m: &Matrix) -> Vec<(f64, f64)> {
    (0..m.cols())
        .map(|c| {
            m.iter_rows().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
                (lo.min(r[c]), hi.max(r[c]))
            })
        })
        .collect()
}

/// Regular-simplex class centers with pairwise distance `distance`.
///
/// With `dims >= k - 1` the centers are the Helmert-basis coordinates of the
/// standard simplex. Lower dimensions cannot hold an equidistant set; there
/// the centers sit on a regular polygon (adjacent distance `distance`) in the
/// first two axes, or on a line for `dims == 1`.
fn simplex_centers(k: usize, dims: usize, distance: f64) -> Vec<Vec<f64>> {
    let mut centers = vec![vec![0.0; dims]; k];
    if dims + 1 >= k {
        // Helmert contrast j (1-based): entries 1/sqrt(j(j+1)) for the first j
        // classes, -j/sqrt(j(j+1)) for class j, 0 after. Projected vertices are
        // sqrt(2) apart.
        let scale = distance / std::f64::consts::SQRT_2;
        for j in 1..k {
            let norm = ((j * (j + 1)) as f64).sqrt();
            for (c, center) in centers.iter_mut().enumerate() {
                let v = match c.cmp(&j) {
                    std::cmp::Ordering::Less => 1.0 / norm,
                    std::cmp::Ordering::Equal => -(j as f64) / norm,
                    std::cmp::Ordering::Greater => 0.0,
                };
                center[j - 1] = scale * v;
            }
        }
    } else if dims >= 2 {
        let radius = distance / (2.0 * (std::f64::consts::PI / k as f64).sin());
        for (c, center) in centers.iter_mut().enumerate() {
            let angle = 2.0 * std::f64::consts::PI * c as f64 / k as f64;
            center[0] = radius * angle.cos();
            center[1] = radius * angle.sin();
        }
    } else {
        for (c, center) in centers.iter_mut().enumerate() {
            center[0] = distance * c as f64;
        }
    }
    centers
}

/// Isotropic Gaussian blobs; class centers `4 × spread` apart.
pub fn gen_blobs(num_classes: usize, samples_per_class: usize, dims: usize, spread: f64, seed: u64) -> Result<Dataset> {
    gen_blobs_separated(num_classes, samples_per_class, dims, spread, 4.0 * spread, seed)
}

/// Gaussian blobs with an explicit distance between class centers.
pub fn gen_blobs_separated(
    num_classes: usize,
    samples_per_class: usize,
    dims: usize,
    spread: f64,
    center_distance: f64,
    seed: u64,
) -> Result<Dataset> {
    if num_classes < 2 || dims == 0 || samples_per_class == 0 {
        return Err(Error::config(
            "blobs need num_classes >= 2, dims >= 1 and samples_per_class >= 1",
        ));
    }
    if !(spread >= 0.0 && spread.is_finite()) || !(center_distance >= 0.0 && center_distance.is_finite()) {
        return Err(Error::config("blob spread and center distance must be finite and >= 0"));
    }
    let centers = simplex_centers(num_classes, dims, center_distance);
    let mut rng = Rng::new(seed);
    let mut data = Vec::with_capacity(num_classes * samples_per_class * dims);
    let mut labels = Vec::with_capacity(num_classes * samples_per_class);
    for (c, center) in centers.iter().enumerate() {
        for _ in 0..samples_per_class {
            for &mu in center {
                data.push(mu + spread * rng.normal());
            }
            labels.push(c);
        }
    }
    Dataset::new(Matrix::new(labels.len(), dims, data)?, labels, num_classes)
}

/// Concentric 2-D rings of radius `1, 2, …` with Gaussian radial noise;
/// the label is the ring index.
pub fn gen_rings(num_rings: usize, samples_per_ring: usize, noise: f64, seed: u64) -> Result<Dataset> {
    if num_rings == 0 || samples_per_ring == 0 {
        return Err(Error::config("rings need num_rings >= 1 and samples_per_ring >= 1"));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::config("ring noise must be finite and >= 0"));
    }
    let mut rng = Rng::new(seed);
    let mut data = Vec::with_capacity(num_rings * samples_per_ring * 2);
    let mut labels = Vec::with_capacity(num_rings * samples_per_ring);
    for ring in 0..num_rings {
        for _ in 0..samples_per_ring {
            let angle = rng.uniform_range(0.0, 2.0 * std::f64::consts::PI);
            let radius = (ring + 1) as f64 + noise * rng.normal();
            data.push(radius * angle.cos());
            data.push(radius * angle.sin());
            labels.push(ring);
        }
    }
    Dataset::new(Matrix::new(labels.len(), 2, data)?, labels, num_rings)
}

/// Reads a headered CSV. Every column except `label_column` is a feature.
/// Labels are integers, remapped to `0..m` in ascending order.
pub fn load_csv(path: impl AsRef<Path>, label_column: &str) -> Result<Dataset> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let label_idx = headers
        .iter()
        .position(|h| h.trim() == label_column)
        .ok_or_else(|| Error::Cell {
            path: path.to_owned(),
            row: 1,
            column: label_column.to_owned(),
            reason: "label column not found in header".into(),
        })?;
    let feature_cols: Vec<usize> = (0..headers.len()).filter(|&i| i != label_idx).collect();

    let mut data = Vec::new();
    let mut raw_labels = Vec::new();
    for (i, record) in reader.records().enumerate() {
        // Line numbers are 1-based and the header is line 1.
        let row = i + 2;
        let record = record.map_err(|e| csv_error(path, e))?;
        if record.len() != headers.len() {
            return Err(Error::Cell {
                path: path.to_owned(),
                row,
                column: String::new(),
                reason: format!("expected {} fields, found {}", headers.len(), record.len()),
            });
        }
        let cell_err = |col: usize, reason: String| Error::Cell {
            path: path.to_owned(),
            row,
            column: headers[col].to_owned(),
            reason,
        };
        for &c in &feature_cols {
            let text = record[c].trim();
            let v: f64 = text
                .parse()
                .map_err(|_| cell_err(c, format!("`{text}` is not a number")))?;
            if !v.is_finite() {
                return Err(cell_err(c, format!("`{text}` is not finite")));
            }
            data.push(v);
        }
        let text = record[label_idx].trim();
        let y: i64 = text
            .parse()
            .map_err(|_| cell_err(label_idx, format!("`{text}` is not an integer label")))?;
        raw_labels.push(y);
    }
    if raw_labels.is_empty() {
        return Err(Error::data(format!("{} has no data rows", path.display())));
    }

    let mut distinct = raw_labels.clone();
    distinct.sort_unstable();
    distinct.dedup();
    let labels = raw_labels
        .iter()
        .map(|y| distinct.binary_search(y).expect("label present"))
        .collect();
    Dataset::new(
        Matrix::new(raw_labels.len(), feature_cols.len(), data)?,
        labels,
        distinct.len(),
    )
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let row = e.position().map_or(0, |p| p.line() as usize);
    Error::Cell {
        path: path.to_owned(),
        row,
        column: String::new(),
        reason: e.to_string(),
    }
}

/// Writes features as `x0, x1, …` followed by `label_column`.
pub fn write_csv(dataset: &Dataset, path: impl AsRef<Path>, label_column: &str) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut header: Vec<String> = (0..dataset.dims()).map(|i| format!("x{i}")).collect();
    header.push(label_column.to_owned());
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    for (row, &y) in dataset.features().iter_rows().zip(dataset.labels()) {
        // `{}` on f64 prints the shortest representation that parses back exactly.
        let mut rec: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        rec.push(y.to_string());
        w.write_record(&rec).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitDataset {
    pub train: Dataset,
    pub test: Dataset,
    pub split_seed: u64,
    pub test_fraction: f64,
}

/// Stratified split: each class contributes `round(test_fraction × n_c)`
/// samples to the test side, clamped so both sides keep at least one.
pub fn split(dataset: &Dataset, test_fraction: f64, seed: u64) -> Result<SplitDataset> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::config(format!(
            "test_fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let root = Rng::new(seed);
    let mut is_test = vec![false; dataset.len()];
    for c in 0..dataset.num_classes() {
        let mut members: Vec<usize> = (0..dataset.len()).filter(|&i| dataset.labels()[i] == c).collect();
        if members.len() < 2 {
            return Err(Error::data(format!(
                "class {c} has {} sample(s); stratified splitting needs at least 2",
                members.len()
            )));
        }
        let n_test = ((test_fraction * members.len() as f64).round() as usize).clamp(1, members.len() - 1);
        root.child(&format!("class/{c}")).shuffle(&mut members);
        for &i in &members[..n_test] {
            is_test[i] = true;
        }
    }
    let (test_idx, train_idx): (Vec<usize>, Vec<usize>) = (0..dataset.len()).partition(|&i| is_test[i]);
    Ok(SplitDataset {
        train: dataset.subset(&train_idx)?,
        test: dataset.subset(&test_idx)?,
        split_seed: seed,
        test_fraction,
    })
}
