//! Label-noise transition matrices.
//!
//! A transition matrix is a K × K row-stochastic table with
//! T[i][j] = P(noisy = j | clean = i). Three structured families carry the
//! decoupling analysis — binary, uniform off-diagonal and sparse pairs —
//! and a general family covers file-loaded matrices.
//!
//! Binary class order is fixed globally: the paper's +1 maps to index 0
//! and −1 to index 1.

use crate::error::{Error, Result};
use crate::joint::JointDistribution;
use crate::seed::derive_rng;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

const ROW_SUM_EXACT: f64 = 1e-6;
/// Rows off by more than the exact tolerance but within this band are
/// renormalized with a logged warning; the appendix matrices are printed
/// at 2–4 decimals and a few rows are off at the 1e-2 level.
const ROW_SUM_RENORM: f64 = 0.02;

/// One flipping pair of the sparse noise model: labels `lo` and `hi`
/// exchange with rates `rate_lo_hi` = P(hi | lo) and `rate_hi_lo` = P(lo | hi).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairFlip {
    pub lo: usize,
    pub hi: usize,
    pub rate_lo_hi: f64,
    pub rate_hi_lo: f64,
}

/// Structural metadata attached to a transition matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum NoiseStructure {
    Binary { e_plus: f64, e_minus: f64 },
    UniformOffDiagonal { rates: Vec<f64> },
    SparsePairs { pairs: Vec<PairFlip> },
    General,
}

/// A validated row-stochastic K × K label-noise model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionMatrix {
    k: usize,
    rows: Vec<f64>,
    structure: NoiseStructure,
}

impl TransitionMatrix {
    /// Binary noise with e_plus = P(noisy=-1 | clean=+1) and
    /// e_minus = P(noisy=+1 | clean=-1); requires e_plus + e_minus < 1.
    pub fn binary(e_plus: f64, e_minus: f64) -> Result<TransitionMatrix> {
        for e in [e_plus, e_minus] {
            if !(0.0..1.0).contains(&e) {
                return Err(Error::Constraint(format!("rate {e} outside [0, 1)")));
            }
        }
        if e_plus + e_minus >= 1.0 {
            return Err(Error::Constraint(format!(
                "e_plus + e_minus = {} must be < 1",
                e_plus + e_minus
            )));
        }
        Ok(TransitionMatrix {
            k: 2,
            rows: vec![1.0 - e_plus, e_plus, e_minus, 1.0 - e_minus],
            structure: NoiseStructure::Binary { e_plus, e_minus },
        })
    }

    /// Uniform off-diagonal noise: T[i][j] = rates[j] for i ≠ j, diagonal
    /// completes each row; requires Σ rates < 1. `binary(e+, e-)` equals
    /// `uniform_offdiagonal(&[e-, e+])` under the global class order.
    pub fn uniform_offdiagonal(rates: &[f64]) -> Result<TransitionMatrix> {
        let k = rates.len();
        if k < 2 {
            return Err(Error::Constraint("need at least two classes".to_string()));
        }
        if rates.iter().any(|&e| !(0.0..1.0).contains(&e)) {
            return Err(Error::Constraint("each rate must lie in [0, 1)".to_string()));
        }
        let total: f64 = rates.iter().sum();
        if total >= 1.0 {
            return Err(Error::Constraint(format!(
                "sum of off-diagonal rates {total} must be < 1"
            )));
        }
        let mut rows = vec![0.0; k * k];
        for i in 0..k {
            for j in 0..k {
                rows[i * k + j] = if i == j {
                    1.0 - (total - rates[i])
                } else {
                    rates[j]
                };
            }
        }
        Ok(TransitionMatrix {
            k,
            rows,
            structure: NoiseStructure::UniformOffDiagonal {
                rates: rates.to_vec(),
            },
        })
    }

    /// Sparse-pair noise: labels flip only within disjoint class pairs.
    /// Classes not covered by any pair keep identity rows. Requires
    /// `lo < hi`, disjoint pairs and per-pair rate sums < 1.
    pub fn sparse_pairs(pairs: &[PairFlip], k: usize) -> Result<TransitionMatrix> {
        if k < 2 {
            return Err(Error::Constraint("need at least two classes".to_string()));
        }
        if k % 2 != 0 {
            return Err(Error::Constraint(format!(
                "sparse noise requires an even class count, got {k}"
            )));
        }
        if pairs.is_empty() {
            return Err(Error::Constraint("no pairs given".to_string()));
        }
        let mut seen = vec![false; k];
        let mut rows = vec![0.0; k * k];
        for i in 0..k {
            rows[i * k + i] = 1.0;
        }
        for p in pairs {
            if p.lo >= p.hi || p.hi >= k {
                return Err(Error::Constraint(format!(
                    "pair ({}, {}) must satisfy lo < hi < {k}",
                    p.lo, p.hi
                )));
            }
            if seen[p.lo] || seen[p.hi] {
                return Err(Error::Constraint(format!(
                    "pairs overlap at class {}",
                    if seen[p.lo] { p.lo } else { p.hi }
                )));
            }
            seen[p.lo] = true;
            seen[p.hi] = true;
            if !(0.0..1.0).contains(&p.rate_lo_hi) || !(0.0..1.0).contains(&p.rate_hi_lo) {
                return Err(Error::Constraint("pair rates must lie in [0, 1)".to_string()));
            }
            if p.rate_lo_hi + p.rate_hi_lo >= 1.0 {
                return Err(Error::Constraint(format!(
                    "pair ({}, {}): rate sum {} must be < 1",
                    p.lo,
                    p.hi,
                    p.rate_lo_hi + p.rate_hi_lo
                )));
            }
            rows[p.lo * k + p.lo] = 1.0 - p.rate_lo_hi;
            rows[p.lo * k + p.hi] = p.rate_lo_hi;
            rows[p.hi * k + p.hi] = 1.0 - p.rate_hi_lo;
            rows[p.hi * k + p.lo] = p.rate_hi_lo;
        }
        Ok(TransitionMatrix {
            k,
            rows,
            structure: NoiseStructure::SparsePairs {
                pairs: pairs.to_vec(),
            },
        })
    }

    /// Random sparse model: partition the K classes into K/2 pairs at
    /// random and draw each pair's rates from `rate_choices`. Deterministic
    /// per seed.
    pub fn random_sparse(
        k: usize,
        rate_choices: &[(f64, f64)],
        seed: u64,
    ) -> Result<TransitionMatrix> {
        if k % 2 != 0 || k < 2 {
            return Err(Error::Constraint(format!("need an even class count, got {k}")));
        }
        if rate_choices.is_empty() {
            return Err(Error::Constraint("no rate choices given".to_string()));
        }
        let mut rng = derive_rng(seed, &[0x737061727365]);
        let mut classes: Vec<usize> = (0..k).collect();
        // Fisher-Yates
        for i in (1..k).rev() {
            let j = rng.gen_range(0..=i);
            classes.swap(i, j);
        }
        let mut pairs = Vec::with_capacity(k / 2);
        for chunk in classes.chunks(2) {
            let (a, b) = (chunk[0].min(chunk[1]), chunk[0].max(chunk[1]));
            let (r1, r2) = rate_choices[rng.gen_range(0..rate_choices.len())];
            pairs.push(PairFlip {
                lo: a,
                hi: b,
                rate_lo_hi: r1,
                rate_hi_lo: r2,
            });
        }
        pairs.sort_by_key(|p| p.lo);
        TransitionMatrix::sparse_pairs(&pairs, k)
    }

    /// Validate an arbitrary table as a `General` matrix. Row sums within
    /// 1e-6 of 1 pass as-is; sums off by up to 0.02 are renormalized with a
    /// warning (printed-table rounding); anything worse is rejected with
    /// the offending row named.
    pub fn from_rows(table: Vec<Vec<f64>>) -> Result<TransitionMatrix> {
        let k = table.len();
        if k < 2 || table.iter().any(|r| r.len() != k) {
            return Err(Error::Dimension(format!(
                "transition matrix must be square with K >= 2, got {k} rows"
            )));
        }
        let mut rows = Vec::with_capacity(k * k);
        for (i, row) in table.iter().enumerate() {
            if row.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
                return Err(Error::Constraint(format!(
                    "row {i} has entries outside [0, 1]"
                )));
            }
            let sum: f64 = row.iter().sum();
            let drift = (sum - 1.0).abs();
            if drift > ROW_SUM_RENORM {
                return Err(Error::Constraint(format!(
                    "row {i} sums to {sum}, outside the renormalization band"
                )));
            }
            if drift > ROW_SUM_EXACT {
                log::warn!("transition row {i} sums to {sum}; renormalizing");
            }
            rows.extend(row.iter().map(|&x| x / sum));
        }
        Ok(TransitionMatrix {
            k,
            rows,
            structure: NoiseStructure::General,
        })
    }

    /// Load a matrix from a CSV file (K rows of K comma-separated floats)
    /// or a JSON file (`{"k": K, "rows": [[...], ...]}` or a bare nested
    /// array), dispatching on the extension.
    pub fn from_file(path: impl AsRef<Path>) -> Result<TransitionMatrix> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            context: format!("reading transition matrix {}", path.display()),
            source,
        })?;
        let is_json = path
            .extension()
            .map(|e| e.eq_ignore_ascii_case("json"))
            .unwrap_or(false);
        if is_json {
            TransitionMatrix::from_json_str(&text)
        } else {
            TransitionMatrix::from_csv_str(&text)
        }
    }

    pub fn from_csv_str(text: &str) -> Result<TransitionMatrix> {
        let mut table = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let row: Result<Vec<f64>> = line
                .split(',')
                .map(|tok| {
                    tok.trim().parse::<f64>().map_err(|e| Error::Parse {
                        context: format!("transition CSV line {}", lineno + 1),
                        message: format!("{tok:?}: {e}"),
                    })
                })
                .collect();
            table.push(row?);
        }
        TransitionMatrix::from_rows(table)
    }

    pub fn from_json_str(text: &str) -> Result<TransitionMatrix> {
        #[derive(Deserialize)]
        struct Wire {
            rows: Vec<Vec<f64>>,
        }
        let table = if let Ok(w) = serde_json::from_str::<Wire>(text) {
            w.rows
        } else {
            serde_json::from_str::<Vec<Vec<f64>>>(text).map_err(|e| Error::Parse {
                context: "transition JSON".to_string(),
                message: e.to_string(),
            })?
        };
        TransitionMatrix::from_rows(table)
    }

    /// A matrix bundled with the crate, by name (see [`bundled_names`]).
    pub fn bundled(name: &str) -> Result<TransitionMatrix> {
        let text = bundled_csv(name).ok_or_else(|| Error::Parse {
            context: "bundled matrix".to_string(),
            message: format!(
                "unknown name {name:?}; available: {}",
                bundled_names().join(", ")
            ),
        })?;
        TransitionMatrix::from_csv_str(text)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn prob(&self, from: usize, to: usize) -> f64 {
        self.rows[from * self.k + to]
    }

    pub fn row(&self, from: usize) -> &[f64] {
        &self.rows[from * self.k..(from + 1) * self.k]
    }

    pub fn structure(&self) -> &NoiseStructure {
        &self.structure
    }

    /// Resample each label independently from its transition row.
    /// Deterministic for a fixed seed.
    pub fn apply_noise(&self, labels: &[usize], seed: u64) -> Result<Vec<usize>> {
        let mut rng = derive_rng(seed, &[0x6e6f697365]);
        let mut out = Vec::with_capacity(labels.len());
        for &y in labels {
            if y >= self.k {
                return Err(Error::Dimension(format!(
                    "label {y} out of range for {} classes",
                    self.k
                )));
            }
            let u: f64 = rng.gen();
            let row = self.row(y);
            let mut acc = 0.0;
            let mut picked = self.k - 1;
            for (j, &p) in row.iter().enumerate() {
                acc += p;
                if u < acc {
                    picked = j;
                    break;
                }
            }
            out.push(picked);
        }
        Ok(out)
    }

    /// Push a clean joint through the noise analytically:
    /// noisy[i][j] = Σ_k clean[i][k] · T[k][j]. The h-marginal is unchanged.
    pub fn corrupt_joint(&self, clean: &JointDistribution) -> Result<JointDistribution> {
        if clean.k_y() != self.k {
            return Err(Error::Dimension(format!(
                "joint has {} label classes, matrix has {}",
                clean.k_y(),
                self.k
            )));
        }
        let mut rows = Vec::with_capacity(clean.k_h());
        for i in 0..clean.k_h() {
            let mut row = vec![0.0; self.k];
            for (kk, &mass) in clean.row(i).iter().enumerate() {
                if mass == 0.0 {
                    continue;
                }
                for (j, slot) in row.iter_mut().enumerate() {
                    *slot += mass * self.prob(kk, j);
                }
            }
            rows.push(row);
        }
        JointDistribution::from_rows(rows)
    }
}

macro_rules! bundled_matrices {
    ($($name:literal),+ $(,)?) => {
        /// Names of the transition matrices bundled with the crate.
        pub fn bundled_names() -> Vec<&'static str> {
            vec![$($name),+]
        }

        fn bundled_csv(name: &str) -> Option<&'static str> {
            match name {
                $($name => Some(include_str!(concat!("../data/", $name, ".csv"))),)+
                _ => None,
            }
        }
    };
}

bundled_matrices!(
    "mnist_sparse_low",
    "mnist_sparse_high",
    "mnist_uniform_low",
    "mnist_uniform_high",
    "cifar10_sparse_low",
    "cifar10_sparse_high",
    "cifar10_uniform_low",
    "cifar10_uniform_high",
    "cifar10_random_low",
    "cifar10_random_high",
);

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn assert_row_stochastic(t: &TransitionMatrix) {
        for i in 0..t.k() {
            let s: f64 = t.row(i).iter().sum();
            assert!((s - 1.0).abs() < 1e-12, "row {i} sums to {s}");
            assert!(t.row(i).iter().all(|&x| (0.0..=1.0).contains(&x)));
        }
    }

    #[test]
    fn binary_examples() {
        let id = TransitionMatrix::binary(0.0, 0.0).unwrap();
        assert_eq!(id.row(0), &[1.0, 0.0]);
        let t = TransitionMatrix::binary(0.2, 0.2).unwrap();
        assert_eq!(t.row(0), &[0.8, 0.2]);
        assert_eq!(t.row(1), &[0.2, 0.8]);
        assert!(TransitionMatrix::binary(0.6, 0.5).is_err());
    }

    #[test]
    fn binary_equals_uniform_with_swapped_rates() {
        let b = TransitionMatrix::binary(0.3, 0.1).unwrap();
        let u = TransitionMatrix::uniform_offdiagonal(&[0.1, 0.3]).unwrap();
        assert_eq!(b.rows, u.rows);
    }

    #[test]
    fn uniform_examples() {
        let t = TransitionMatrix::uniform_offdiagonal(&[0.2, 0.2]).unwrap();
        assert_eq!(t.row(0), &[0.8, 0.2]);
        let t3 = TransitionMatrix::uniform_offdiagonal(&[0.1, 0.1, 0.1]).unwrap();
        assert_abs_diff_eq!(t3.prob(0, 0), 0.8, epsilon = 1e-15);
        assert_abs_diff_eq!(t3.prob(1, 0), 0.1, epsilon = 1e-15);
        assert_row_stochastic(&t3);
        assert!(TransitionMatrix::uniform_offdiagonal(&[0.1; 10]).is_err());
    }

    #[test]
    fn sparse_examples() {
        let t = TransitionMatrix::sparse_pairs(
            &[PairFlip { lo: 0, hi: 1, rate_lo_hi: 0.3, rate_hi_lo: 0.2 }],
            2,
        )
        .unwrap();
        assert_eq!(t.row(0), &[0.7, 0.3]);
        assert_eq!(t.row(1), &[0.2, 0.8]);

        let t4 = TransitionMatrix::sparse_pairs(
            &[
                PairFlip { lo: 0, hi: 1, rate_lo_hi: 0.3, rate_hi_lo: 0.2 },
                PairFlip { lo: 2, hi: 3, rate_lo_hi: 0.3, rate_hi_lo: 0.2 },
            ],
            4,
        )
        .unwrap();
        assert_eq!(t4.row(2), &[0.0, 0.0, 0.7, 0.3]);
        assert_row_stochastic(&t4);

        // overlapping pairs and inadmissible rates are rejected
        assert!(TransitionMatrix::sparse_pairs(
            &[
                PairFlip { lo: 0, hi: 1, rate_lo_hi: 0.1, rate_hi_lo: 0.1 },
                PairFlip { lo: 1, hi: 2, rate_lo_hi: 0.1, rate_hi_lo: 0.1 },
            ],
            4
        )
        .is_err());
        assert!(TransitionMatrix::sparse_pairs(
            &[PairFlip { lo: 0, hi: 1, rate_lo_hi: 0.6, rate_hi_lo: 0.5 }],
            2
        )
        .is_err());
    }

    #[test]
    fn unpaired_classes_keep_identity_rows() {
        let t = TransitionMatrix::sparse_pairs(
            &[PairFlip { lo: 0, hi: 1, rate_lo_hi: 0.3, rate_hi_lo: 0.2 }],
            4,
        )
        .unwrap();
        assert_eq!(t.row(2), &[0.0, 0.0, 1.0, 0.0]);
        assert_eq!(t.row(3), &[0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn csv_loading_and_validation() {
        let t = TransitionMatrix::from_csv_str("0.9,0.1\n0.2,0.8\n").unwrap();
        assert_eq!(*t.structure(), NoiseStructure::General);
        assert_eq!(t.prob(0, 1), 0.1);
        // a row summing to 0.9 is outside the renormalization band
        assert!(TransitionMatrix::from_csv_str("0.8,0.1\n0.2,0.8\n").is_err());
        // mild printed-table drift renormalizes
        let t = TransitionMatrix::from_csv_str("0.51,0.5\n0.0,1.0\n").unwrap();
        assert_abs_diff_eq!(t.row(0).iter().sum::<f64>(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn bundled_matrices_load() {
        for name in bundled_names() {
            let t = TransitionMatrix::bundled(name).unwrap();
            assert_eq!(t.k(), 10, "{name}");
            assert_row_stochastic(&t);
        }
        // appendix block structure of the CIFAR-10 sparse-high matrix
        let t = TransitionMatrix::bundled("cifar10_sparse_high").unwrap();
        assert_eq!(t.row(0)[..2], [0.4, 0.6]);
        assert_eq!(t.row(1)[..2], [0.2, 0.8]);
        assert!(TransitionMatrix::bundled("nope").is_err());
    }

    #[test]
    fn random_sparse_generator() {
        let choices = [(0.05, 0.75), (0.1, 0.70), (0.15, 0.65), (0.2, 0.6)];
        let t = TransitionMatrix::random_sparse(10, &choices, 42).unwrap();
        assert_row_stochastic(&t);
        match t.structure() {
            NoiseStructure::SparsePairs { pairs } => {
                assert_eq!(pairs.len(), 5);
                let mut covered: Vec<usize> =
                    pairs.iter().flat_map(|p| [p.lo, p.hi]).collect();
                covered.sort_unstable();
                assert_eq!(covered, (0..10).collect::<Vec<_>>());
            }
            other => panic!("unexpected structure {other:?}"),
        }
        let t2 = TransitionMatrix::random_sparse(10, &choices, 42).unwrap();
        assert_eq!(t, t2);
    }

    #[test]
    fn apply_noise_identity_and_determinism() {
        let labels: Vec<usize> = (0..100).map(|i| i % 3).collect();
        let id = TransitionMatrix::uniform_offdiagonal(&[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(id.apply_noise(&labels, 5).unwrap(), labels);

        let t = TransitionMatrix::uniform_offdiagonal(&[0.1, 0.1, 0.1]).unwrap();
        let a = t.apply_noise(&labels, 7).unwrap();
        let b = t.apply_noise(&labels, 7).unwrap();
        assert_eq!(a, b);
        assert_ne!(t.apply_noise(&labels, 8).unwrap(), a);
    }

    #[test]
    fn apply_noise_flip_fraction() {
        let t = TransitionMatrix::binary(0.2, 0.2).unwrap();
        let labels = vec![0usize; 100_000];
        let noisy = t.apply_noise(&labels, 123).unwrap();
        let flipped = noisy.iter().filter(|&&y| y == 1).count() as f64 / 1e5;
        assert!(
            (flipped - 0.2).abs() < 0.004,
            "flip fraction {flipped} outside 3-sigma band"
        );
    }

    #[test]
    fn corrupt_joint_examples() {
        let clean =
            JointDistribution::from_rows(vec![vec![0.5, 0.0], vec![0.0, 0.5]]).unwrap();
        let t = TransitionMatrix::from_rows(vec![vec![0.8, 0.2], vec![0.3, 0.7]]).unwrap();
        let noisy = t.corrupt_joint(&clean).unwrap();
        assert_abs_diff_eq!(noisy.cell(0, 0), 0.4, epsilon = 1e-15);
        assert_abs_diff_eq!(noisy.cell(0, 1), 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(noisy.cell(1, 0), 0.15, epsilon = 1e-15);
        assert_abs_diff_eq!(noisy.cell(1, 1), 0.35, epsilon = 1e-15);
        // h-marginal is untouched
        assert_eq!(noisy.h_marginal(), clean.h_marginal());

        let id = TransitionMatrix::binary(0.0, 0.0).unwrap();
        assert_eq!(id.corrupt_joint(&clean).unwrap(), clean);
    }

    #[test]
    fn corrupt_composes_like_matrix_product() {
        let clean = JointDistribution::from_rows(vec![
            vec![0.20, 0.05, 0.05],
            vec![0.10, 0.30, 0.05],
            vec![0.05, 0.05, 0.15],
        ])
        .unwrap();
        let t1 = TransitionMatrix::uniform_offdiagonal(&[0.1, 0.05, 0.2]).unwrap();
        let t2 = TransitionMatrix::uniform_offdiagonal(&[0.05, 0.1, 0.02]).unwrap();
        let twice = t2.corrupt_joint(&t1.corrupt_joint(&clean).unwrap()).unwrap();

        let mut product = vec![vec![0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                for m in 0..3 {
                    product[i][j] += t1.prob(i, m) * t2.prob(m, j);
                }
            }
        }
        let composed = TransitionMatrix::from_rows(product).unwrap();
        let once = composed.corrupt_joint(&clean).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_abs_diff_eq!(once.cell(i, j), twice.cell(i, j), epsilon = 1e-12);
            }
        }
    }
}
