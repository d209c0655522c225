//! Decoupling of the noisy variational difference.
//!
//! For the structured noise families the noisy variational difference is an
//! exact affine function of the clean one,
//!
//! d̃_f(h, g) = (1 − Σe) · d_f(h, g) + Bias_f(h, g),
//!
//! which is what makes the f-divergence objectives analyzable under label
//! noise. The bias is a linear combination of per-label-class delta terms
//! Δ^y(h, g) = E_X[g(h(X), y)] − E_X[f*(g(h(X), y))]:
//!
//! - binary: Bias = e₊ · Δ^(class 1) + e₋ · Δ^(class 0);
//! - uniform off-diagonal: Bias = Σ_j e_j · Δ^j;
//! - sparse pairs: Bias = Σ_pairs e_p1 · Δ_c^(hi) + e_p2 · Δ_c^(lo), where
//!   Δ_c restricts the first expectation to the event {Y ∈ pair c} and
//!   weights the second by P(Y ∈ pair c). For K = 2 the restriction is
//!   vacuous and the sparse form collapses to the binary one; for K > 2 the
//!   unrestricted combination is *not* an identity (the restriction term is
//!   a covariance between the classifier output and pair membership, which
//!   only vanishes when they are independent). Both Σ_i P(h = i, Y ∈ c)
//!   and P(Y ∈ c) are invariant under within-pair label noise, so the bias
//!   is computable from the clean joint or the noisy joint alike.
//!
//! Total variation has f*(u) = u, so every unrestricted Δ^y vanishes
//! identically and the binary/uniform bias is exactly zero for any g.

use crate::divergence::Divergence;
use crate::error::{Error, Result};
use crate::joint::{variational_difference, JointDistribution, VariationalTable};
use crate::noise::{NoiseStructure, PairFlip, TransitionMatrix};
use serde::{Deserialize, Serialize};

/// Outcome of one decoupling check.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecouplingReport {
    /// d_f(h, g) on the clean joint.
    pub clean_difference: f64,
    /// d̃_f(h, g) on the noisy joint.
    pub noisy_difference: f64,
    /// 1 − Σe for the matrix structure.
    pub shrink_factor: f64,
    /// Bias_f(h, g).
    pub bias: f64,
    /// |noisy − (shrink · clean + bias)|.
    pub residual: f64,
}

/// Δ^y(h, g) = Σ_i P(h = i) · (g[i][y] − f*(g[i][y])).
pub fn delta_term(
    div: Divergence,
    g: &VariationalTable,
    h_marginal: &[f64],
    label_class: usize,
) -> Result<f64> {
    if g.divergence() != div {
        return Err(Error::Dimension(format!(
            "table validated for {}, not {}",
            g.divergence().name(),
            div.name()
        )));
    }
    if h_marginal.len() != g.k_h() || label_class >= g.k_y() {
        return Err(Error::Dimension(format!(
            "marginal len {} / class {label_class} vs table {}x{}",
            h_marginal.len(),
            g.k_h(),
            g.k_y()
        )));
    }
    let mut total = 0.0;
    for (i, &w) in h_marginal.iter().enumerate() {
        let u = g.value(i, label_class);
        total += w * (u - div.conjugate_unchecked(u));
    }
    Ok(total)
}

/// Pair-restricted delta for the sparse structure:
/// Σ_i P(h = i, Y ∈ pair) · g[i][y] − P(Y ∈ pair) · Σ_i P(h = i) · f*(g[i][y]).
fn pair_delta_term(
    div: Divergence,
    g: &VariationalTable,
    joint: &JointDistribution,
    pair: &PairFlip,
    label_class: usize,
) -> f64 {
    let hm = joint.h_marginal();
    let pair_mass = joint.y_marginal()[pair.lo] + joint.y_marginal()[pair.hi];
    let mut expect_g = 0.0;
    let mut expect_fstar = 0.0;
    for i in 0..joint.k_h() {
        let in_pair = joint.cell(i, pair.lo) + joint.cell(i, pair.hi);
        let u = g.value(i, label_class);
        expect_g += in_pair * u;
        expect_fstar += hm[i] * div.conjugate_unchecked(u);
    }
    expect_g - pair_mass * expect_fstar
}

fn require_square(joint: &JointDistribution, t: &TransitionMatrix) -> Result<()> {
    if joint.k_y() != t.k() {
        return Err(Error::Dimension(format!(
            "joint has {} label classes, matrix has {}",
            joint.k_y(),
            t.k()
        )));
    }
    Ok(())
}

/// Bias_f(h, g) for a supported transition structure. The structural data
/// it reads from `joint` (h-marginal; pair-block masses) is invariant under
/// the noise itself, so passing the clean joint or the corresponding noisy
/// joint yields the same value.
pub fn bias_term(
    div: Divergence,
    g: &VariationalTable,
    joint: &JointDistribution,
    t: &TransitionMatrix,
) -> Result<f64> {
    require_square(joint, t)?;
    match t.structure() {
        NoiseStructure::Binary { e_plus, e_minus } => {
            let hm = joint.h_marginal();
            Ok(e_plus * delta_term(div, g, hm, 1)? + e_minus * delta_term(div, g, hm, 0)?)
        }
        NoiseStructure::UniformOffDiagonal { rates } => {
            let hm = joint.h_marginal();
            let mut bias = 0.0;
            for (j, &e) in rates.iter().enumerate() {
                if e != 0.0 {
                    bias += e * delta_term(div, g, hm, j)?;
                }
            }
            Ok(bias)
        }
        NoiseStructure::SparsePairs { pairs } => {
            if g.k_h() != joint.k_h() || g.k_y() != joint.k_y() {
                return Err(Error::Dimension("table shape vs joint".to_string()));
            }
            let mut bias = 0.0;
            for p in pairs {
                bias += p.rate_lo_hi * pair_delta_term(div, g, joint, p, p.hi)
                    + p.rate_hi_lo * pair_delta_term(div, g, joint, p, p.lo);
            }
            Ok(bias)
        }
        NoiseStructure::General => Err(Error::UnsupportedStructure(
            "bias is only defined for binary, uniform off-diagonal and sparse-pair noise"
                .to_string(),
        )),
    }
}

/// The shrink factor 1 − Σe of a supported structure. For sparse pairs the
/// per-pair rate sums must agree (a single factor does not otherwise exist).
pub fn shrink_factor(t: &TransitionMatrix) -> Result<f64> {
    match t.structure() {
        NoiseStructure::Binary { e_plus, e_minus } => Ok(1.0 - e_plus - e_minus),
        NoiseStructure::UniformOffDiagonal { rates } => Ok(1.0 - rates.iter().sum::<f64>()),
        NoiseStructure::SparsePairs { pairs } => {
            let first = pairs[0].rate_lo_hi + pairs[0].rate_hi_lo;
            for p in pairs {
                if ((p.rate_lo_hi + p.rate_hi_lo) - first).abs() > 1e-12 {
                    return Err(Error::UnsupportedStructure(
                        "sparse pairs with differing rate sums admit no single shrink factor"
                            .to_string(),
                    ));
                }
            }
            Ok(1.0 - first)
        }
        NoiseStructure::General => Err(Error::UnsupportedStructure(
            "no shrink factor for a general transition matrix".to_string(),
        )),
    }
}

/// Evaluate both sides of the decoupling identity for one
/// (clean joint, transition, variational table) triple.
pub fn decoupling_check(
    div: Divergence,
    clean: &JointDistribution,
    t: &TransitionMatrix,
    g: &VariationalTable,
) -> Result<DecouplingReport> {
    let shrink = shrink_factor(t)?;
    let noisy = t.corrupt_joint(clean)?;
    let clean_difference = variational_difference(div, clean, g)?;
    let noisy_difference = variational_difference(div, &noisy, g)?;
    let bias = bias_term(div, g, clean, t)?;
    let residual = (noisy_difference - (shrink * clean_difference + bias)).abs();
    Ok(DecouplingReport {
        clean_difference,
        noisy_difference,
        shrink_factor: shrink,
        bias,
        residual,
    })
}

/// The bias-corrected noisy variational difference d̃_f(h, g) − Bias_f(h, g).
/// When `noisy` was produced from some clean joint by `t`, this equals
/// shrink · d_f(h, g) exactly, so maximizing it recovers the clean argmax.
pub fn bias_corrected_difference(
    div: Divergence,
    noisy: &JointDistribution,
    t: &TransitionMatrix,
    g: &VariationalTable,
) -> Result<f64> {
    shrink_factor(t)?;
    let d_noisy = variational_difference(div, noisy, g)?;
    let bias = bias_term(div, g, noisy, t)?;
    Ok(d_noisy - bias)
}

/// |Bias| at the noisy-optimal variational table, over a grid of symmetric
/// binary rates. Returns (ε = 1 − 2e, |Bias(g̃*)|) pairs; on the fixed test
/// families |Bias| vanishes like ε², so the log-log slope sits near 2.
pub fn bias_scaling_probe(
    div: Divergence,
    clean: &JointDistribution,
    symmetric_rates: &[f64],
) -> Result<Vec<(f64, f64)>> {
    if clean.k_y() != 2 || clean.k_h() != 2 {
        return Err(Error::Dimension(
            "the scaling probe wants a binary joint".to_string(),
        ));
    }
    let mut out = Vec::with_capacity(symmetric_rates.len());
    for &e in symmetric_rates {
        if !(0.0..0.5).contains(&e) {
            return Err(Error::Constraint(format!(
                "symmetric rate {e} must lie in [0, 0.5)"
            )));
        }
        let t = TransitionMatrix::binary(e, e)?;
        let noisy = t.corrupt_joint(clean)?;
        let g_noisy_opt = VariationalTable::optimal_for(div, &noisy)?;
        let bias = bias_term(div, &g_noisy_opt, clean, &t)?;
        out.push((1.0 - 2.0 * e, bias.abs()));
    }
    Ok(out)
}

/// Least-squares slope of ln(y) against ln(x).
pub fn log_log_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(x, y) in points {
        let (lx, ly) = (x.ln(), y.ln());
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

/// Membership in the overfitting set: true iff min_y FIT(h = y, R = y) on
/// the given joint is at least `reference_fit`.
pub fn hstar_membership(joint: &JointDistribution, reference_fit: f64) -> Result<bool> {
    let k = joint.k_h().min(joint.k_y());
    let mut min_fit = f64::INFINITY;
    for y in 0..k {
        min_fit = min_fit.min(crate::joint::fit_measure(joint, y, y)?);
    }
    Ok(min_fit >= reference_fit)
}

/// True iff `t` is non-increasing as a function of |x − 1| on each side of
/// x = 1, sampled over `grid` (values below 1 and values at or above 1 are
/// checked separately). Tolerance 1e-12.
pub fn monotone_t_condition<F: Fn(f64) -> f64>(t: F, grid: &[f64]) -> bool {
    let mut below: Vec<f64> = grid.iter().copied().filter(|&x| x > 0.0 && x < 1.0).collect();
    let mut above: Vec<f64> = grid.iter().copied().filter(|&x| x >= 1.0).collect();
    below.sort_by(|a, b| a.partial_cmp(b).unwrap());
    above.sort_by(|a, b| a.partial_cmp(b).unwrap());
    // on (0, 1), |x - 1| falls as x rises, so t must be non-decreasing
    for w in below.windows(2) {
        if t(w[1]) < t(w[0]) - 1e-12 {
            return false;
        }
    }
    // on [1, inf), |x - 1| rises with x, so t must be non-increasing
    for w in above.windows(2) {
        if t(w[1]) > t(w[0]) + 1e-12 {
            return false;
        }
    }
    true
}

/// The per-cell value g̃* − f*(g̃*) as a function of the joint-to-product
/// ratio, used by the conditional-robustness analysis. Jeffrey has no
/// documented form and returns `None`; total variation's is identically 0.
pub fn fit_response(div: Divergence) -> Option<fn(f64) -> f64> {
    match div {
        Divergence::TotalVariation => Some(|_x| 0.0),
        Divergence::JensenShannon => Some(|x| (4.0 * x / ((1.0 + x) * (1.0 + x))).ln()),
        Divergence::SquaredHellinger => Some(|x| 2.0 - x.sqrt() - 1.0 / x.sqrt()),
        Divergence::PearsonChi2 => Some(|x| -(x - 1.0) * (x - 1.0)),
        Divergence::NeymanChi2 => Some(|x| {
            let r = 1.0 / x - 1.0;
            -r * r
        }),
        Divergence::Kl => Some(|x| 1.0 + x.ln() - x),
        Divergence::ReverseKl => Some(|x| 1.0 - x.ln() - 1.0 / x),
        Divergence::Jeffrey => None,
    }
}
