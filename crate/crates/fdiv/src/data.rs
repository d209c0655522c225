//! Datasets: synthetic Gaussian mixtures with analytic posteriors, CSV
//! ingestion and metrics serialization.

use crate::error::{Error, Result};
use crate::seed::derive_rng;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

/// Where a dataset came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Provenance {
    Synthetic(GaussianMixtureSpec),
    File(PathBuf),
}

/// An in-memory labeled dataset with row-major features.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub features: Vec<f64>,
    pub labels: Vec<usize>,
    pub n: usize,
    pub d: usize,
    pub k: usize,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn feature_row(&self, i: usize) -> &[f64] {
        &self.features[i * self.d..(i + 1) * self.d]
    }

    /// Replace the labels (e.g. with a noisy version).
    pub fn with_labels(&self, labels: Vec<usize>) -> Result<Dataset> {
        if labels.len() != self.n {
            return Err(Error::Dimension(format!(
                "{} labels for {} rows",
                labels.len(),
                self.n
            )));
        }
        Ok(Dataset {
            labels,
            ..self.clone()
        })
    }
}

/// Isotropic shared-variance Gaussian mixture. Keeping the covariance
/// shared and spherical makes the posterior a one-line softmax, which is
/// what the exact Bayes references in the oracle tests lean on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixtureSpec {
    pub k: usize,
    pub d: usize,
    pub means: Vec<Vec<f64>>,
    pub sigma: f64,
    pub priors: Vec<f64>,
    pub n: usize,
    pub seed: u64,
}

impl GaussianMixtureSpec {
    /// The standard two-class benchmark: means ±(separation, 0, ..., 0),
    /// unit variance, balanced priors.
    pub fn two_class(d: usize, separation: f64, n: usize, seed: u64) -> GaussianMixtureSpec {
        let mut mean_pos = vec![0.0; d];
        let mut mean_neg = vec![0.0; d];
        mean_pos[0] = separation;
        mean_neg[0] = -separation;
        GaussianMixtureSpec {
            k: 2,
            d,
            means: vec![mean_pos, mean_neg],
            sigma: 1.0,
            priors: vec![0.5, 0.5],
            n,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.k < 2 || self.means.len() != self.k || self.priors.len() != self.k {
            return Err(Error::Constraint(format!(
                "means/priors must have k = {} entries",
                self.k
            )));
        }
        if self.means.iter().any(|m| m.len() != self.d) {
            return Err(Error::Dimension("mean dimension mismatch".to_string()));
        }
        if !(self.sigma > 0.0) {
            return Err(Error::Constraint("sigma must be positive".to_string()));
        }
        let s: f64 = self.priors.iter().sum();
        if (s - 1.0).abs() > 1e-9 || self.priors.iter().any(|&p| p < 0.0) {
            return Err(Error::InvalidDistribution(format!("priors sum to {s}")));
        }
        if self.n == 0 {
            return Err(Error::Constraint("n must be positive".to_string()));
        }
        Ok(())
    }
}

/// Closed-form posterior of a Gaussian mixture:
/// P(Y = k | x) ∝ prior_k · exp(−‖x − μ_k‖² / 2σ²).
#[derive(Debug, Clone)]
pub struct GaussianPosterior {
    spec: GaussianMixtureSpec,
}

impl GaussianPosterior {
    pub fn posterior(&self, x: &[f64]) -> Vec<f64> {
        let s = &self.spec;
        let mut logw: Vec<f64> = s
            .means
            .iter()
            .zip(&s.priors)
            .map(|(mu, &pr)| {
                let d2: f64 = x.iter().zip(mu).map(|(a, b)| (a - b) * (a - b)).sum();
                pr.max(1e-300).ln() - d2 / (2.0 * s.sigma * s.sigma)
            })
            .collect();
        let m = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for w in logw.iter_mut() {
            *w = (*w - m).exp();
            total += *w;
        }
        logw.iter().map(|w| w / total).collect()
    }

    pub fn bayes_class(&self, x: &[f64]) -> usize {
        let post = self.posterior(x);
        let mut best = 0;
        for (i, &p) in post.iter().enumerate().skip(1) {
            if p > post[best] {
                best = i;
            }
        }
        best
    }
}

/// Sample a dataset from the mixture; deterministic per spec seed. Also
/// returns the closed-form posterior for Bayes references.
pub fn generate_gaussian_mixture(
    spec: &GaussianMixtureSpec,
) -> Result<(Dataset, GaussianPosterior)> {
    spec.validate()?;
    let mut rng = derive_rng(spec.seed, &[0x676d69]);
    let mut features = Vec::with_capacity(spec.n * spec.d);
    let mut labels = Vec::with_capacity(spec.n);
    let mut cdf = Vec::with_capacity(spec.k);
    let mut acc = 0.0;
    for &p in &spec.priors {
        acc += p;
        cdf.push(acc);
    }
    for _ in 0..spec.n {
        let u: f64 = rng.gen();
        let y = cdf.iter().position(|&c| u < c).unwrap_or(spec.k - 1);
        labels.push(y);
        for j in 0..spec.d {
            let z: f64 = standard_normal(&mut rng);
            features.push(spec.means[y][j] + spec.sigma * z);
        }
    }
    let dataset = Dataset {
        features,
        labels,
        n: spec.n,
        d: spec.d,
        k: spec.k,
        provenance: Provenance::Synthetic(spec.clone()),
    };
    Ok((dataset, GaussianPosterior { spec: spec.clone() }))
}

/// Box-Muller; two uniforms per normal keeps the stream layout simple and
/// reproducible.
fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = rng.gen::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Load a dataset from CSV with a header row. The label column is the last
/// one unless named explicitly; labels must be 0..K-1 with every class
/// present.
pub fn load_csv(path: impl AsRef<Path>, label_column: Option<&str>) -> Result<Dataset> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::Parse {
            context: format!("opening {}", path.display()),
            message: e.to_string(),
        })?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Parse {
            context: format!("{} header", path.display()),
            message: e.to_string(),
        })?
        .clone();
    let label_idx = match label_column {
        Some(name) => headers.iter().position(|h| h == name).ok_or_else(|| Error::Parse {
            context: format!("{} header", path.display()),
            message: format!("no column named {name:?}"),
        })?,
        None => headers.len().checked_sub(1).ok_or_else(|| Error::Parse {
            context: format!("{} header", path.display()),
            message: "empty header".to_string(),
        })?,
    };
    let d = headers.len() - 1;
    if d == 0 {
        return Err(Error::Parse {
            context: path.display().to_string(),
            message: "no feature columns".to_string(),
        });
    }
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (rowno, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse {
            context: format!("{} row {}", path.display(), rowno + 2),
            message: e.to_string(),
        })?;
        if record.len() != headers.len() {
            return Err(Error::Parse {
                context: format!("{} row {}", path.display(), rowno + 2),
                message: format!("{} fields, expected {}", record.len(), headers.len()),
            });
        }
        for (col, field) in record.iter().enumerate() {
            if col == label_idx {
                let y: usize = field.trim().parse().map_err(|_| Error::Parse {
                    context: format!("{} row {}", path.display(), rowno + 2),
                    message: format!("label {field:?} is not a class index"),
                })?;
                labels.push(y);
            } else {
                let x: f64 = field.trim().parse().map_err(|_| Error::Parse {
                    context: format!("{} row {}", path.display(), rowno + 2),
                    message: format!("feature {field:?} is not numeric"),
                })?;
                if x.is_nan() {
                    return Err(Error::Parse {
                        context: format!("{} row {}", path.display(), rowno + 2),
                        message: "NaN feature".to_string(),
                    });
                }
                features.push(x);
            }
        }
    }
    if labels.is_empty() {
        return Err(Error::InvalidDistribution("empty dataset".to_string()));
    }
    let k = labels.iter().max().unwrap() + 1;
    let mut present = vec![false; k];
    for &y in &labels {
        present[y] = true;
    }
    let missing: Vec<String> = present
        .iter()
        .enumerate()
        .filter_map(|(c, &p)| (!p).then(|| c.to_string()))
        .collect();
    if !missing.is_empty() {
        return Err(Error::InvalidDistribution(format!(
            "labels are non-contiguous; missing classes: {}",
            missing.join(", ")
        )));
    }
    Ok(Dataset {
        n: labels.len(),
        d,
        k,
        features,
        labels,
        provenance: Provenance::File(path.to_path_buf()),
    })
}

/// A single metric value. Floats are serialized with 17 significant digits
/// so they round-trip losslessly through text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MetricValue {
    Int(i64),
    Float(f64),
    Text(String),
}

impl MetricValue {
    pub fn render(&self) -> String {
        match self {
            MetricValue::Float(x) => format_float(*x),
            MetricValue::Int(i) => i.to_string(),
            MetricValue::Text(s) => s.clone(),
        }
    }
}

/// 17 significant digits: enough for a lossless f64 round-trip.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

pub type MetricRecord = BTreeMap<String, MetricValue>;

/// Write records as CSV with a union-of-keys header in sorted (stable)
/// column order, or as JSON lines when the path ends in `.jsonl`.
pub fn save_metrics(path: impl AsRef<Path>, records: &[MetricRecord]) -> Result<()> {
    let path = path.as_ref();
    let jsonl = path
        .extension()
        .map(|e| e.eq_ignore_ascii_case("jsonl"))
        .unwrap_or(false);
    let mut file = std::fs::File::create(path).map_err(|source| Error::Io {
        context: format!("creating {}", path.display()),
        source,
    })?;
    let io_err = |source| Error::Io {
        context: format!("writing {}", path.display()),
        source,
    };
    if jsonl {
        for r in records {
            let line = serde_json::to_string(r).expect("metric records are serializable");
            writeln!(file, "{line}").map_err(io_err)?;
        }
        return Ok(());
    }
    let mut columns: Vec<&str> = Vec::new();
    for r in records {
        for key in r.keys() {
            if !columns.contains(&key.as_str()) {
                columns.push(key);
            }
        }
    }
    columns.sort_unstable();
    let mut writer = csv::Writer::from_writer(file);
    writer
        .write_record(&columns)
        .map_err(|e| Error::Parse {
            context: path.display().to_string(),
            message: e.to_string(),
        })?;
    for r in records {
        let row: Vec<String> = columns
            .iter()
            .map(|c| r.get(*c).map(MetricValue::render).unwrap_or_default())
            .collect();
        writer.write_record(&row).map_err(|e| Error::Parse {
            context: path.display().to_string(),
            message: e.to_string(),
        })?;
    }
    writer.flush().map_err(io_err)?;
    Ok(())
}

/// Read back a metrics CSV produced by [`save_metrics`].
pub fn load_metrics(path: impl AsRef<Path>) -> Result<Vec<MetricRecord>> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Parse {
        context: format!("opening {}", path.display()),
        message: e.to_string(),
    })?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Parse {
            context: path.display().to_string(),
            message: e.to_string(),
        })?
        .clone();
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse {
            context: path.display().to_string(),
            message: e.to_string(),
        })?;
        let mut map = MetricRecord::new();
        for (h, field) in headers.iter().zip(record.iter()) {
            if field.is_empty() {
                continue;
            }
            let value = if let Ok(i) = field.parse::<i64>() {
                MetricValue::Int(i)
            } else if let Ok(x) = field.parse::<f64>() {
                MetricValue::Float(x)
            } else {
                MetricValue::Text(field.to_string())
            };
            map.insert(h.to_string(), value);
        }
        out.push(map);
    }
    Ok(out)
}

/// Deterministic shuffle-split into (train, test) parts.
pub fn train_test_split(data: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(0.0 < test_fraction && test_fraction < 1.0) {
        return Err(Error::Constraint(format!(
            "test fraction {test_fraction} outside (0, 1)"
        )));
    }
    let mut idx: Vec<usize> = (0..data.n).collect();
    let mut rng = derive_rng(seed, &[0x73706c6974]);
    for i in (1..idx.len()).rev() {
        let j = rng.gen_range(0..=i);
        idx.swap(i, j);
    }
    let n_test = ((data.n as f64) * test_fraction).round().max(1.0) as usize;
    let n_test = n_test.min(data.n - 1);
    let take = |ids: &[usize]| Dataset {
        features: ids
            .iter()
            .flat_map(|&i| data.feature_row(i).iter().copied())
            .collect(),
        labels: ids.iter().map(|&i| data.labels[i]).collect(),
        n: ids.len(),
        d: data.d,
        k: data.k,
        provenance: data.provenance.clone(),
    };
    Ok((take(&idx[n_test..]), take(&idx[..n_test])))
}
