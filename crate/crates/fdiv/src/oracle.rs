//! Brute-force ground truth on tiny finite instances.
//!
//! A [`FiniteInstance`] is a distribution over (X, Y) with finitely many
//! feature atoms and explicit posteriors, small enough that every
//! classifier h: atoms → classes can be enumerated. That turns "argmax
//! over all h" into an exact computation and gives independent oracles for
//! the optimality and robustness claims, plus grid-based suprema that
//! cross-check the closed-form conjugates and the variational form.

use crate::divergence::{divergence_closed_form, Divergence};
use crate::error::{Error, Result};
use crate::joint::JointDistribution;
use crate::noise::TransitionMatrix;

const MAX_ATOMS: usize = 12;
const ENUMERATION_BOUND: u64 = 1 << 24;
const TIE_TOLERANCE: f64 = 1e-12;

/// One feature atom: its prior mass and the label posterior at it.
#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub prior: f64,
    pub posterior: Vec<f64>,
}

/// A finite-support distribution over (X, Y).
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteInstance {
    atoms: Vec<Atom>,
    k: usize,
}

/// A total map from atoms to predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TabularClassifier {
    pub assignment: Vec<usize>,
}

impl FiniteInstance {
    pub fn new(atoms: Vec<Atom>, k: usize) -> Result<Self> {
        if atoms.is_empty() || atoms.len() > MAX_ATOMS {
            return Err(Error::Constraint(format!(
                "atom count {} outside 1..={MAX_ATOMS}",
                atoms.len()
            )));
        }
        if k < 2 {
            return Err(Error::Constraint("need at least two classes".to_string()));
        }
        let prior_sum: f64 = atoms.iter().map(|a| a.prior).sum();
        if (prior_sum - 1.0).abs() > 1e-9 || atoms.iter().any(|a| a.prior < 0.0) {
            return Err(Error::InvalidDistribution(format!(
                "atom priors sum to {prior_sum}"
            )));
        }
        for (i, a) in atoms.iter().enumerate() {
            if a.posterior.len() != k {
                return Err(Error::Dimension(format!(
                    "atom {i} posterior has {} entries, expected {k}",
                    a.posterior.len()
                )));
            }
            let s: f64 = a.posterior.iter().sum();
            if (s - 1.0).abs() > 1e-9 || a.posterior.iter().any(|&p| p < 0.0) {
                return Err(Error::InvalidDistribution(format!(
                    "atom {i} posterior sums to {s}"
                )));
            }
        }
        Ok(FiniteInstance { atoms, k })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_atoms(&self) -> usize {
        self.atoms.len()
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    /// The label marginal P(Y = j) = Σ_x P(X = x) P(Y = j | X = x).
    pub fn label_marginal(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.k];
        for a in &self.atoms {
            for (j, &p) in a.posterior.iter().enumerate() {
                m[j] += a.prior * p;
            }
        }
        m
    }

    /// Per-atom argmax of the posterior, ties broken toward the lowest
    /// class index.
    pub fn bayes_optimal(&self) -> TabularClassifier {
        let assignment = self
            .atoms
            .iter()
            .map(|a| argmax_lowest(&a.posterior))
            .collect();
        TabularClassifier { assignment }
    }

    /// The same instance with Y replaced by the Bayes-optimal label Y*
    /// (point-mass posteriors at the per-atom argmax).
    pub fn with_bayes_labels(&self) -> FiniteInstance {
        let atoms = self
            .atoms
            .iter()
            .map(|a| {
                let mut posterior = vec![0.0; self.k];
                posterior[argmax_lowest(&a.posterior)] = 1.0;
                Atom {
                    prior: a.prior,
                    posterior,
                }
            })
            .collect();
        FiniteInstance {
            atoms,
            k: self.k,
        }
    }

    /// Accuracy of a classifier under the instance distribution.
    pub fn accuracy(&self, h: &TabularClassifier) -> f64 {
        self.atoms
            .iter()
            .zip(&h.assignment)
            .map(|(a, &c)| a.prior * a.posterior[c])
            .sum()
    }
}

fn argmax_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// All K^n classifiers in lexicographic order of their assignment vectors.
pub fn enumerate_classifiers(
    instance: &FiniteInstance,
) -> Result<impl Iterator<Item = TabularClassifier>> {
    let n = instance.n_atoms();
    let k = instance.k();
    let total = (k as f64).powi(n as i32);
    if total > ENUMERATION_BOUND as f64 {
        return Err(Error::EnumerationBound {
            requested: total,
            bound: ENUMERATION_BOUND as f64,
        });
    }
    let total = total as u64;
    Ok((0..total).map(move |mut code| {
        let mut assignment = vec![0usize; n];
        for slot in assignment.iter_mut() {
            *slot = (code % k as u64) as usize;
            code /= k as u64;
        }
        TabularClassifier { assignment }
    }))
}

/// Joint distribution of (h(X), Y) induced by a classifier:
/// cell (i, j) = Σ_{x : h(x) = i} P(X = x) P(Y = j | X = x).
pub fn induced_joint(instance: &FiniteInstance, h: &TabularClassifier) -> JointDistribution {
    let k = instance.k();
    let mut rows = vec![vec![0.0; k]; k];
    for (a, &c) in instance.atoms().iter().zip(&h.assignment) {
        for (j, &p) in a.posterior.iter().enumerate() {
            rows[c][j] += a.prior * p;
        }
    }
    JointDistribution::from_rows(rows).expect("induced joint is a distribution")
}

/// The full argmax set of D_f over all classifiers, with ties within
/// 1e-12 of the maximum, against clean labels or (when `t` is given) the
/// noise-corrupted joint. Divergences that blow up on empty cells may tie
/// at +inf; the comparison handles that explicitly.
pub fn df_maximizer(
    div: Divergence,
    instance: &FiniteInstance,
    t: Option<&TransitionMatrix>,
) -> Result<Vec<TabularClassifier>> {
    let mut best = f64::NEG_INFINITY;
    let mut arg: Vec<(TabularClassifier, f64)> = Vec::new();
    for h in enumerate_classifiers(instance)? {
        let mut joint = induced_joint(instance, &h);
        if let Some(t) = t {
            joint = t.corrupt_joint(&joint)?;
        }
        let value = divergence_closed_form(div, &joint);
        if value > best {
            best = value;
        }
        arg.push((h, value));
    }
    let keep = |v: f64| {
        if best.is_infinite() {
            v.is_infinite()
        } else {
            v >= best - TIE_TOLERANCE
        }
    };
    Ok(arg
        .into_iter()
        .filter_map(|(h, v)| keep(v).then_some(h))
        .collect())
}

/// True iff the noisy argmax set equals the clean argmax set.
pub fn robustness_verdict(
    div: Divergence,
    instance: &FiniteInstance,
    t: &TransitionMatrix,
) -> Result<bool> {
    let clean = df_maximizer(div, instance, None)?;
    let noisy = df_maximizer(div, instance, Some(t))?;
    Ok(clean == noisy) // both are in enumeration order
}

/// Confidence filter: for every label class there is at most one predicted
/// class strictly positively correlated with it (each column of
/// joint − product sums to zero, so the remaining entries are then all
/// non-positive). Used by the multi-class optimality check.
pub fn is_confident(joint: &JointDistribution) -> bool {
    let product = joint.product_of_marginals();
    for j in 0..joint.k_y() {
        let positives = (0..joint.k_h())
            .filter(|&i| joint.cell(i, j) - product.cell(i, j) > TIE_TOLERANCE)
            .count();
        if positives > 1 {
            return false;
        }
    }
    true
}

/// A value computed by a grid oracle together with its certified tolerance.
#[derive(Debug, Clone, Copy)]
pub struct OracleValue {
    pub value: f64,
    pub tolerance: f64,
}

/// The standard geometric evaluation grid for conjugate suprema:
/// `points` nodes spread geometrically over [lo, hi], with v = 1 appended
/// exactly (f(1) = 0 anchors every generator there, and the total-variation
/// supremum sits at that kink).
#[derive(Debug, Clone, Copy)]
pub struct GeometricGrid {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl GeometricGrid {
    pub fn standard() -> GeometricGrid {
        GeometricGrid {
            lo: 1e-6,
            hi: 1e3,
            points: 10_000,
        }
    }

    fn nodes(&self) -> Vec<f64> {
        let ratio = (self.hi / self.lo).ln() / (self.points - 1) as f64;
        let mut v: Vec<f64> = (0..self.points)
            .map(|i| self.lo * (ratio * i as f64).exp())
            .collect();
        v.push(1.0);
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v.dedup();
        v
    }
}

/// Certified upper bound on sup − φ(v_best) for a concave φ sampled on a
/// sorted grid with interior argmax at index `best`. Secant slopes bound
/// the one-sided derivatives, so the suprema over the two neighbor cells
/// are capped by the secant-line intersections.
fn concave_gap_bound(vs: &[f64], phis: &[f64], best: usize) -> f64 {
    debug_assert!(best > 0 && best + 1 < vs.len());
    let slope = |a: usize, b: usize| (phis[b] - phis[a]) / (vs[b] - vs[a]);
    // cell [v_best, v_best+1]: bounded by the line of slope s(left secant)
    // from v_best and the line of slope s(right-right secant) from v_best+1
    let mut gap: f64 = 0.0;
    {
        let s_in = slope(best - 1, best);
        if s_in > 0.0 {
            let cap = if best + 2 < vs.len() {
                let s_out = slope(best + 1, best + 2);
                // intersection of the two bounding lines
                let num = phis[best + 1] - phis[best] + s_out * (vs[best] - vs[best + 1]);
                let dv = if s_in != s_out { (num / (s_in - s_out)).clamp(0.0, vs[best + 1] - vs[best]) } else { vs[best + 1] - vs[best] };
                s_in * dv
            } else {
                s_in * (vs[best + 1] - vs[best])
            };
            gap = gap.max(cap);
        }
    }
    {
        let s_in = slope(best, best + 1); // negative or zero going right
        if s_in < 0.0 {
            let cap = if best >= 2 {
                let s_out = slope(best - 2, best - 1);
                let num = phis[best - 1] - phis[best] + s_out * (vs[best] - vs[best - 1]);
                let dv = if s_out != s_in { (num / (s_in - s_out)).clamp(-(vs[best] - vs[best - 1]), 0.0) } else { -(vs[best] - vs[best - 1]) };
                s_in * dv
            } else {
                -s_in * (vs[best] - vs[best - 1])
            };
            gap = gap.max(cap);
        }
    }
    gap.max(0.0)
}

/// Grid supremum of u·v − f(v), an independent check of the closed-form
/// conjugate. `u` must lie in the interior of dom(f*) so the maximizer is
/// interior to the grid.
pub fn conjugate_oracle(div: Divergence, u: f64, grid: &GeometricGrid) -> Result<OracleValue> {
    let dom = div.conjugate_domain();
    if !dom.contains(u) {
        return Err(Error::Domain {
            what: "conjugate oracle",
            value: u,
            bound: dom.describe(),
        });
    }
    let vs = grid.nodes();
    let phis: Vec<f64> = vs
        .iter()
        .map(|&v| u * v - div.f(v).expect("grid is positive"))
        .collect();
    let mut best = 0;
    for (i, &p) in phis.iter().enumerate() {
        if p > phis[best] {
            best = i;
        }
    }
    if best == 0 || best + 1 == vs.len() {
        return Err(Error::Constraint(format!(
            "grid argmax at the boundary (v = {}); enlarge the grid",
            vs[best]
        )));
    }
    Ok(OracleValue {
        value: phis[best],
        tolerance: concave_gap_bound(&vs, &phis, best),
    })
}

/// Grid supremum of the variational difference over per-cell values.
///
/// The objective Σ_ij p_ij·g_ij − q_ij·f*(g_ij) is separable in the g_ij,
/// so each cell is maximized independently over a grid spanning the
/// optimal values implied by the joint's ratio range. Requires a strictly
/// positive joint. Never exceeds the closed form; `tolerance` certifies
/// how far below it can sit.
pub fn variational_sup_oracle(
    div: Divergence,
    joint: &JointDistribution,
    points_per_cell: usize,
) -> Result<OracleValue> {
    let product = joint.product_of_marginals();
    let mut ratios = Vec::with_capacity(joint.cells().len());
    for (p, q) in joint.cells().iter().zip(product.cells()) {
        if !(*p > 0.0) {
            return Err(Error::ZeroCell { p: *p, q: *q });
        }
        ratios.push(p / q);
    }
    let r_lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min) * 0.5;
    let r_hi = ratios.iter().cloned().fold(0.0f64, f64::max) * 2.0;
    // grid in u spans the optimal values g*(r) over the padded ratio range,
    // widened a little so every per-cell optimum is interior and clamped
    // back strictly inside the conjugate domain
    let g_lo = div.optimal_variational(r_lo, 1.0)?;
    let g_hi = div.optimal_variational(r_hi, 1.0)?;
    let pad = 0.05 + 0.1 * (g_hi - g_lo);
    let dom = div.conjugate_domain();
    let u_lo = {
        let padded = g_lo - pad;
        if padded >= dom.lower {
            padded
        } else if dom.lower_closed {
            dom.lower
        } else {
            0.5 * (g_lo + dom.lower)
        }
    };
    let u_hi = {
        let padded = g_hi + pad;
        if padded <= dom.upper {
            padded
        } else if dom.upper_closed {
            dom.upper
        } else {
            0.5 * (g_hi + dom.upper)
        }
    };
    let us: Vec<f64> = (0..points_per_cell)
        .map(|i| u_lo + (u_hi - u_lo) * i as f64 / (points_per_cell - 1) as f64)
        .collect();
    let fstars: Vec<f64> = us.iter().map(|&u| div.conjugate_unchecked(u)).collect();

    let mut total = 0.0;
    let mut tolerance = 0.0;
    for (p, q) in joint.cells().iter().zip(product.cells()) {
        let phis: Vec<f64> = us
            .iter()
            .zip(&fstars)
            .map(|(&u, &fs)| p * u - q * fs)
            .collect();
        let mut best = 0;
        for (i, &v) in phis.iter().enumerate() {
            if v > phis[best] {
                best = i;
            }
        }
        if best == 0 || best + 1 == us.len() {
            // Total variation's per-cell objective (p - q)·u is linear, so
            // the supremum over the closed domain [-1/2, 1/2] sits at a grid
            // endpoint and the grid value is exact. Any other divergence
            // peaking at the boundary means the grid missed the optimum.
            if div == Divergence::TotalVariation {
                total += phis[best];
                continue;
            }
            return Err(Error::Constraint(
                "cell argmax at the grid boundary; widen the value grid".to_string(),
            ));
        }
        total += phis[best];
        tolerance += concave_gap_bound(&us, &phis, best);
    }
    Ok(OracleValue {
        value: total,
        tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn two_atom_instance() -> FiniteInstance {
        FiniteInstance::new(
            vec![
                Atom { prior: 0.5, posterior: vec![0.8, 0.2] },
                Atom { prior: 0.5, posterior: vec![0.2, 0.8] },
            ],
            2,
        )
        .unwrap()
    }

    #[test]
    fn enumeration_counts_and_bound() {
        assert_eq!(enumerate_classifiers(&two_atom_instance()).unwrap().count(), 4);

        let three = FiniteInstance::new(
            vec![
                Atom { prior: 0.4, posterior: vec![1.0, 0.0, 0.0] },
                Atom { prior: 0.3, posterior: vec![0.0, 1.0, 0.0] },
                Atom { prior: 0.3, posterior: vec![0.0, 0.0, 1.0] },
            ],
            3,
        )
        .unwrap();
        assert_eq!(enumerate_classifiers(&three).unwrap().count(), 27);

        // 12 atoms at K = 4 would be 4^12 = 2^24 exactly; K = 8 overflows
        let atoms: Vec<Atom> = (0..12)
            .map(|_| Atom { prior: 1.0 / 12.0, posterior: vec![0.125; 8] })
            .collect();
        let big = FiniteInstance::new(atoms, 8).unwrap();
        assert!(matches!(
            enumerate_classifiers(&big).err(),
            Some(Error::EnumerationBound { .. })
        ));
    }

    #[test]
    fn induced_joint_example() {
        let inst = two_atom_instance();
        let identity = TabularClassifier { assignment: vec![0, 1] };
        let j = induced_joint(&inst, &identity);
        assert_abs_diff_eq!(j.cell(0, 0), 0.4, epsilon = 1e-15);
        assert_abs_diff_eq!(j.cell(0, 1), 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(j.cell(1, 0), 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(j.cell(1, 1), 0.4, epsilon = 1e-15);

        // constant classifier: one nonzero row equal to the label prior
        let constant = TabularClassifier { assignment: vec![0, 0] };
        let j = induced_joint(&inst, &constant);
        assert_eq!(j.row(0), inst.label_marginal().as_slice());
        assert_eq!(j.row(1), &[0.0, 0.0]);
    }

    #[test]
    fn bayes_examples() {
        let inst = two_atom_instance();
        let bayes = inst.bayes_optimal();
        assert_eq!(bayes.assignment, vec![0, 1]);
        assert_abs_diff_eq!(inst.accuracy(&bayes), 0.8, epsilon = 1e-15);

        // uniform posteriors break ties toward the lowest class
        let flat = FiniteInstance::new(
            vec![Atom { prior: 1.0, posterior: vec![0.5, 0.5] }],
            2,
        )
        .unwrap();
        assert_eq!(flat.bayes_optimal().assignment, vec![0]);

        let star = inst.with_bayes_labels();
        assert_eq!(star.atoms()[0].posterior, vec![1.0, 0.0]);
        assert_abs_diff_eq!(star.accuracy(&star.bayes_optimal()), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn tv_maximizer_is_bayes_and_flip() {
        let inst = two_atom_instance();
        let set = df_maximizer(Divergence::TotalVariation, &inst, None).unwrap();
        assert_eq!(set.len(), 2);
        assert!(set.contains(&TabularClassifier { assignment: vec![0, 1] }));
        assert!(set.contains(&TabularClassifier { assignment: vec![1, 0] }));
        let j = induced_joint(&inst, &set[0]);
        assert_abs_diff_eq!(
            divergence_closed_form(Divergence::TotalVariation, &j),
            0.3,
            epsilon = 1e-12
        );
    }

    #[test]
    fn single_atom_everything_ties_at_zero() {
        let inst = FiniteInstance::new(
            vec![Atom { prior: 1.0, posterior: vec![0.6, 0.4] }],
            2,
        )
        .unwrap();
        let set = df_maximizer(Divergence::Kl, &inst, None).unwrap();
        assert_eq!(set.len(), 2); // h(X) constant makes h and Y independent
    }

    #[test]
    fn tv_robust_under_binary_noise() {
        let inst = two_atom_instance();
        let t = TransitionMatrix::binary(0.2, 0.2).unwrap();
        assert!(robustness_verdict(Divergence::TotalVariation, &inst, &t).unwrap());
        let t = TransitionMatrix::binary(0.0, 0.0).unwrap();
        assert!(robustness_verdict(Divergence::Kl, &inst, &t).unwrap());
    }

    #[test]
    fn conjugate_oracle_matches_closed_form() {
        let grid = GeometricGrid::standard();
        let cases: &[(Divergence, f64)] = &[
            (Divergence::TotalVariation, 0.3),
            (Divergence::PearsonChi2, 2.0),
            (Divergence::Kl, 1.0),
        ];
        for &(div, u) in cases {
            let o = conjugate_oracle(div, u, &grid).unwrap();
            let exact = div.conjugate(u).unwrap();
            assert!(
                (o.value - exact).abs() <= o.tolerance.max(1e-12),
                "{} at u={u}: oracle {} vs exact {exact}, tol {}",
                div.name(),
                o.value,
                o.tolerance
            );
            assert!(o.tolerance <= 1e-3);
            assert!(o.value <= exact + 1e-12, "grid sup cannot exceed the true sup");
        }
    }

    #[test]
    fn variational_oracle_sandwich() {
        let joint =
            JointDistribution::from_rows(vec![vec![0.4, 0.1], vec![0.1, 0.4]]).unwrap();
        for div in Divergence::ALL {
            let o = variational_sup_oracle(div, &joint, 4001).unwrap();
            let exact = divergence_closed_form(div, &joint);
            assert!(
                o.value <= exact + 1e-9,
                "{}: oracle {} above closed form {exact}",
                div.name(),
                o.value
            );
            assert!(
                exact <= o.value + o.tolerance,
                "{}: closed form {exact} above oracle {} + tol {}",
                div.name(),
                o.value,
                o.tolerance
            );
        }
    }

    #[test]
    fn variational_oracle_refinement_shrinks_error() {
        let joint =
            JointDistribution::from_rows(vec![vec![0.35, 0.15], vec![0.05, 0.45]]).unwrap();
        let coarse = variational_sup_oracle(Divergence::Kl, &joint, 501).unwrap();
        let fine = variational_sup_oracle(Divergence::Kl, &joint, 4001).unwrap();
        let exact = divergence_closed_form(Divergence::Kl, &joint);
        assert!((exact - fine.value) <= (exact - coarse.value) + 1e-15);
    }
}
