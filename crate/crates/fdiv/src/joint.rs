//! Joint distributions of (classifier output, label) and variational tables.
//!
//! A [`JointDistribution`] is a K_h × K_y probability table; its product of
//! marginals is recomputed on demand so there is a single source of truth.
//! A [`VariationalTable`] is a table of variational values g(y, y′), each
//! validated against the conjugate domain of its divergence — on a finite
//! outcome space the variational function of the dual form is exactly such
//! a table.

use crate::divergence::{divergence_closed_form, Divergence};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

const SUM_GATE: f64 = 1e-9;

/// An immutable K_h × K_y probability table with cached marginals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "JointWire", into = "JointWire")]
pub struct JointDistribution {
    cells: Vec<f64>,
    k_h: usize,
    k_y: usize,
    h_marginal: Vec<f64>,
    y_marginal: Vec<f64>,
}

/// Wire format: row-major cells plus both dimensions.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct JointWire {
    k_h: usize,
    k_y: usize,
    cells: Vec<Vec<f64>>,
}

impl TryFrom<JointWire> for JointDistribution {
    type Error = Error;
    fn try_from(w: JointWire) -> Result<Self> {
        if w.cells.len() != w.k_h || w.cells.iter().any(|r| r.len() != w.k_y) {
            return Err(Error::Dimension(format!(
                "cell table does not match declared dims {}x{}",
                w.k_h, w.k_y
            )));
        }
        JointDistribution::from_rows(w.cells)
    }
}

impl From<JointDistribution> for JointWire {
    fn from(j: JointDistribution) -> JointWire {
        JointWire {
            k_h: j.k_h,
            k_y: j.k_y,
            cells: (0..j.k_h).map(|i| j.row(i).to_vec()).collect(),
        }
    }
}

impl JointDistribution {
    /// Build from nested rows. Cells must be nonnegative and sum to 1
    /// within 1e-9; drift inside the gate is renormalized exactly, larger
    /// drift is rejected so upstream bugs cannot hide behind normalization.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let k_h = rows.len();
        if k_h == 0 {
            return Err(Error::InvalidDistribution("empty table".to_string()));
        }
        let k_y = rows[0].len();
        if k_y == 0 || rows.iter().any(|r| r.len() != k_y) {
            return Err(Error::InvalidDistribution(
                "rows must be nonempty and equal length".to_string(),
            ));
        }
        let mut cells = Vec::with_capacity(k_h * k_y);
        for row in &rows {
            for &c in row {
                if !(c >= 0.0) || !c.is_finite() {
                    return Err(Error::InvalidDistribution(format!(
                        "cell {c} is not a probability"
                    )));
                }
                cells.push(c);
            }
        }
        let sum: f64 = cells.iter().sum();
        if (sum - 1.0).abs() > SUM_GATE {
            return Err(Error::InvalidDistribution(format!(
                "cells sum to {sum}, beyond the {SUM_GATE} tolerance gate"
            )));
        }
        for c in &mut cells {
            *c /= sum;
        }
        let mut h_marginal = vec![0.0; k_h];
        let mut y_marginal = vec![0.0; k_y];
        for i in 0..k_h {
            for j in 0..k_y {
                h_marginal[i] += cells[i * k_y + j];
                y_marginal[j] += cells[i * k_y + j];
            }
        }
        Ok(JointDistribution {
            cells,
            k_h,
            k_y,
            h_marginal,
            y_marginal,
        })
    }

    pub fn k_h(&self) -> usize {
        self.k_h
    }

    pub fn k_y(&self) -> usize {
        self.k_y
    }

    pub fn cell(&self, i: usize, j: usize) -> f64 {
        self.cells[i * self.k_y + j]
    }

    pub fn cells(&self) -> &[f64] {
        &self.cells
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.cells[i * self.k_y..(i + 1) * self.k_y]
    }

    pub fn h_marginal(&self) -> &[f64] {
        &self.h_marginal
    }

    pub fn y_marginal(&self) -> &[f64] {
        &self.y_marginal
    }

    /// The product of marginals as a table of the same shape: cell (i, j)
    /// is h_marginal[i] · y_marginal[j].
    pub fn product_of_marginals(&self) -> JointDistribution {
        let mut cells = Vec::with_capacity(self.k_h * self.k_y);
        for i in 0..self.k_h {
            for j in 0..self.k_y {
                cells.push(self.h_marginal[i] * self.y_marginal[j]);
            }
        }
        JointDistribution {
            cells,
            k_h: self.k_h,
            k_y: self.k_y,
            h_marginal: self.h_marginal.clone(),
            y_marginal: self.y_marginal.clone(),
        }
    }

    /// Apply a permutation to the h axis (rows); the product marginal
    /// permutes consistently, which is why every D_f here is invariant
    /// under relabeling the classifier's outputs.
    pub fn permute_h(&self, perm: &[usize]) -> Result<JointDistribution> {
        if perm.len() != self.k_h {
            return Err(Error::Dimension("permutation length != k_h".to_string()));
        }
        let rows = perm.iter().map(|&i| self.row(i).to_vec()).collect();
        JointDistribution::from_rows(rows)
    }
}

/// Empirical joint of hard predictions and labels: cell (i, j) counts
/// pairs with prediction i and label j, divided by N.
pub fn estimate_joint(
    predictions: &[usize],
    labels: &[usize],
    k: usize,
) -> Result<JointDistribution> {
    if predictions.len() != labels.len() {
        return Err(Error::Dimension(format!(
            "{} predictions vs {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::InvalidDistribution(
            "cannot estimate a joint from zero samples".to_string(),
        ));
    }
    let mut counts = vec![0u64; k * k];
    for (&p, &l) in predictions.iter().zip(labels) {
        if p >= k || l >= k {
            return Err(Error::Dimension(format!(
                "index ({p}, {l}) out of range for {k} classes"
            )));
        }
        counts[p * k + l] += 1;
    }
    let n = predictions.len() as f64;
    let rows = (0..k)
        .map(|i| (0..k).map(|j| counts[i * k + j] as f64 / n).collect())
        .collect();
    JointDistribution::from_rows(rows)
}

/// A table of variational values validated against one divergence's
/// conjugate domain.
#[derive(Debug, Clone)]
pub struct VariationalTable {
    divergence: Divergence,
    values: Vec<f64>,
    k_h: usize,
    k_y: usize,
}

impl VariationalTable {
    pub fn from_rows(divergence: Divergence, rows: Vec<Vec<f64>>) -> Result<Self> {
        let k_h = rows.len();
        let k_y = rows.first().map_or(0, |r| r.len());
        if k_h == 0 || k_y == 0 || rows.iter().any(|r| r.len() != k_y) {
            return Err(Error::Dimension(
                "variational table must be rectangular and nonempty".to_string(),
            ));
        }
        let dom = divergence.conjugate_domain();
        let mut values = Vec::with_capacity(k_h * k_y);
        for row in &rows {
            for &u in row {
                if !dom.contains(u) {
                    return Err(Error::Domain {
                        what: "variational value",
                        value: u,
                        bound: dom.describe(),
                    });
                }
                values.push(u);
            }
        }
        Ok(VariationalTable {
            divergence,
            values,
            k_h,
            k_y,
        })
    }

    /// The per-cell optimal table g*(p, q) for a joint against its product
    /// of marginals. Cells where joint and product both vanish carry the
    /// neutral value f′(1) (they contribute nothing either way); a cell
    /// where exactly one side vanishes has no finite optimum and errors.
    pub fn optimal_for(divergence: Divergence, joint: &JointDistribution) -> Result<Self> {
        let product = joint.product_of_marginals();
        let mut rows = Vec::with_capacity(joint.k_h());
        for i in 0..joint.k_h() {
            let mut row = Vec::with_capacity(joint.k_y());
            for j in 0..joint.k_y() {
                let (p, q) = (joint.cell(i, j), product.cell(i, j));
                let u = if p == 0.0 && q == 0.0 {
                    divergence.optimal_variational(1.0, 1.0)?
                } else {
                    divergence.optimal_variational(p, q)?
                };
                row.push(u);
            }
            rows.push(row);
        }
        VariationalTable::from_rows(divergence, rows)
    }

    pub fn divergence(&self) -> Divergence {
        self.divergence
    }

    pub fn k_h(&self) -> usize {
        self.k_h
    }

    pub fn k_y(&self) -> usize {
        self.k_y
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.k_y + j]
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.k_h).map(move |i| self.value(i, j))
    }
}

/// The variational difference d_f(h, g) = E_P[g] − E_Q[f*(g)], where Q is
/// the product of P's marginals. Computed on a noisy joint this is the
/// noisy variational difference.
pub fn variational_difference(
    div: Divergence,
    joint: &JointDistribution,
    g: &VariationalTable,
) -> Result<f64> {
    if g.divergence() != div {
        return Err(Error::Dimension(format!(
            "variational table was validated for {}, not {}",
            g.divergence().name(),
            div.name()
        )));
    }
    if g.k_h() != joint.k_h() || g.k_y() != joint.k_y() {
        return Err(Error::Dimension(format!(
            "table {}x{} vs joint {}x{}",
            g.k_h(),
            g.k_y(),
            joint.k_h(),
            joint.k_y()
        )));
    }
    let hm = joint.h_marginal();
    let ym = joint.y_marginal();
    let mut expect_p = 0.0;
    let mut expect_q = 0.0;
    for i in 0..joint.k_h() {
        for j in 0..joint.k_y() {
            let u = g.value(i, j);
            expect_p += joint.cell(i, j) * u;
            expect_q += hm[i] * ym[j] * div.conjugate_unchecked(u);
        }
    }
    Ok(expect_p - expect_q)
}

/// f-mutual information M_f(h(X); Y): the closed-form divergence between
/// the joint and its product of marginals.
pub fn f_mutual_information(div: Divergence, joint: &JointDistribution) -> f64 {
    divergence_closed_form(div, joint)
}

/// FIT measure: P(h = h_class | R = label_class) / P(h = h_class), which
/// equals joint(h, y) / (h_marginal · y_marginal). Equals 1 everywhere for
/// a classifier independent of the labels.
pub fn fit_measure(joint: &JointDistribution, h_class: usize, label_class: usize) -> Result<f64> {
    if h_class >= joint.k_h() || label_class >= joint.k_y() {
        return Err(Error::Dimension(format!(
            "class pair ({h_class}, {label_class}) outside {}x{}",
            joint.k_h(),
            joint.k_y()
        )));
    }
    let denom = joint.h_marginal()[h_class] * joint.y_marginal()[label_class];
    if denom == 0.0 {
        return Err(Error::InvalidDistribution(format!(
            "FIT undefined: zero marginal at (h={h_class}, y={label_class})"
        )));
    }
    Ok(joint.cell(h_class, label_class) / denom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn example_joint() -> JointDistribution {
        JointDistribution::from_rows(vec![vec![0.4, 0.1], vec![0.1, 0.4]]).unwrap()
    }

    #[test]
    fn estimate_counts() {
        let j = estimate_joint(&[0, 1], &[0, 1], 2).unwrap();
        assert_eq!(j.cell(0, 0), 0.5);
        assert_eq!(j.cell(0, 1), 0.0);
        assert_eq!(j.cell(1, 1), 0.5);

        let j = estimate_joint(&[0, 0, 0, 0], &[0, 1, 0, 1], 2).unwrap();
        assert_eq!(j.row(0), &[0.5, 0.5]);
        assert_eq!(j.row(1), &[0.0, 0.0]);

        assert!(estimate_joint(&[], &[], 2).is_err());
        assert!(estimate_joint(&[2], &[0], 2).is_err());
    }

    #[test]
    fn product_examples() {
        let j = example_joint();
        let q = j.product_of_marginals();
        for i in 0..2 {
            for jj in 0..2 {
                assert_abs_diff_eq!(q.cell(i, jj), 0.25, epsilon = 1e-15);
            }
        }
        // point mass is its own product
        let pm = JointDistribution::from_rows(vec![vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap();
        assert_eq!(pm.product_of_marginals().cells(), pm.cells());
        // idempotence on product distributions
        let qq = q.product_of_marginals();
        assert_eq!(qq.cells(), q.cells());
    }

    #[test]
    fn sum_gate() {
        assert!(JointDistribution::from_rows(vec![vec![0.5, 0.4]]).is_err());
        // tiny drift is renormalized exactly
        let j = JointDistribution::from_rows(vec![vec![0.5 + 3e-10, 0.5]]).unwrap();
        assert_abs_diff_eq!(j.cells().iter().sum::<f64>(), 1.0, epsilon = 1e-15);
        assert!(JointDistribution::from_rows(vec![vec![-0.1, 1.1]]).is_err());
    }

    #[test]
    fn variational_difference_examples() {
        let j = example_joint();
        let g = VariationalTable::from_rows(
            Divergence::TotalVariation,
            vec![vec![0.5, -0.5], vec![-0.5, 0.5]],
        )
        .unwrap();
        assert_abs_diff_eq!(
            variational_difference(Divergence::TotalVariation, &j, &g).unwrap(),
            0.3,
            epsilon = 1e-12
        );

        // g identically 0 for TV: both expectations vanish
        let zero =
            VariationalTable::from_rows(Divergence::TotalVariation, vec![vec![0.0; 2]; 2]).unwrap();
        assert_eq!(
            variational_difference(Divergence::TotalVariation, &j, &zero).unwrap(),
            0.0
        );

        // KL with g = 1 on an independent joint: E_P[1] - E_Q[e^0] = 0
        let indep = JointDistribution::from_rows(vec![vec![0.25; 2]; 2]).unwrap();
        let ones = VariationalTable::from_rows(Divergence::Kl, vec![vec![1.0; 2]; 2]).unwrap();
        assert_abs_diff_eq!(
            variational_difference(Divergence::Kl, &indep, &ones).unwrap(),
            0.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn optimal_table_attains_closed_form() {
        let j = example_joint();
        for div in Divergence::ALL {
            let g = VariationalTable::optimal_for(div, &j).unwrap();
            let d = variational_difference(div, &j, &g).unwrap();
            let target = f_mutual_information(div, &j);
            let tol = if div == Divergence::Jeffrey { 1e-6 } else { 1e-9 };
            assert!(
                (d - target).abs() <= tol,
                "{}: variational {d} vs closed form {target}",
                div.name()
            );
        }
    }

    #[test]
    fn table_rejects_out_of_domain_values() {
        assert!(VariationalTable::from_rows(
            Divergence::TotalVariation,
            vec![vec![0.6, 0.0], vec![0.0, 0.0]]
        )
        .is_err());
        assert!(VariationalTable::from_rows(Divergence::ReverseKl, vec![vec![0.0]]).is_err());
    }

    #[test]
    fn fit_examples() {
        let indep = JointDistribution::from_rows(vec![vec![0.25; 2]; 2]).unwrap();
        for y in 0..2 {
            for yp in 0..2 {
                assert_abs_diff_eq!(fit_measure(&indep, y, yp).unwrap(), 1.0, epsilon = 1e-12);
            }
        }
        let diag = JointDistribution::from_rows(vec![vec![0.5, 0.0], vec![0.0, 0.5]]).unwrap();
        assert_abs_diff_eq!(fit_measure(&diag, 0, 0).unwrap(), 2.0, epsilon = 1e-12);
        assert_eq!(fit_measure(&diag, 0, 1).unwrap(), 0.0);

        let degenerate =
            JointDistribution::from_rows(vec![vec![0.5, 0.5], vec![0.0, 0.0]]).unwrap();
        assert!(fit_measure(&degenerate, 1, 0).is_err());
    }

    #[test]
    fn fit_total_probability() {
        let j = JointDistribution::from_rows(vec![
            vec![0.10, 0.05, 0.03],
            vec![0.04, 0.30, 0.08],
            vec![0.06, 0.04, 0.30],
        ])
        .unwrap();
        for y in 0..3 {
            let total: f64 = (0..3)
                .map(|yp| fit_measure(&j, y, yp).unwrap() * j.y_marginal()[yp])
                .sum();
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn json_roundtrip() {
        let j = example_joint();
        let s = serde_json::to_string(&j).unwrap();
        assert!(s.contains("\"k_h\":2"));
        let back: JointDistribution = serde_json::from_str(&s).unwrap();
        assert_eq!(back, j);
    }
}
