//! The divergence catalog: eight f-divergences with their generators,
//! Fenchel conjugates, optimal variational values and output activations.
//!
//! Every divergence is described by a convex generator f with f(1) = 0,
//!
//! D_f(P‖Q) = Σ_z q(z) f(p(z)/q(z)),
//!
//! together with the conjugate f*(u) = sup_v { u·v − f(v) } on its domain,
//! the per-cell optimal variational value g*(p, q) = f′(p/q), and a total
//! activation g_f that maps any finite score into dom(f*).
//!
//! All logarithms are natural; divergences are reported in nats.

use crate::error::{Error, Result};
use crate::joint::JointDistribution;
use crate::special::lambert_w_of_exp;
use serde::{Deserialize, Serialize};
use std::f64::consts::LN_2;

/// One of the eight supported f-divergences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Divergence {
    TotalVariation,
    JensenShannon,
    SquaredHellinger,
    PearsonChi2,
    NeymanChi2,
    Kl,
    ReverseKl,
    Jeffrey,
}

/// The domain of a Fenchel conjugate: an interval, possibly unbounded,
/// with each finite endpoint either open or closed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConjugateDomain {
    pub lower: f64,
    pub upper: f64,
    pub lower_closed: bool,
    pub upper_closed: bool,
}

impl ConjugateDomain {
    pub fn contains(&self, u: f64) -> bool {
        if u.is_nan() {
            return false;
        }
        let above = if self.lower_closed { u >= self.lower } else { u > self.lower };
        let below = if self.upper_closed { u <= self.upper } else { u < self.upper };
        above && below
    }

    pub fn describe(&self) -> String {
        let lo = if self.lower == f64::NEG_INFINITY {
            "(-inf".to_string()
        } else if self.lower_closed {
            format!("[{}", self.lower)
        } else {
            format!("({}", self.lower)
        };
        let hi = if self.upper == f64::INFINITY {
            "+inf)".to_string()
        } else if self.upper_closed {
            format!("{}]", self.upper)
        } else {
            format!("{})", self.upper)
        };
        format!("{lo}, {hi}")
    }
}

/// Display-oriented description of one catalog row.
#[derive(Debug, Clone, Serialize)]
pub struct CatalogRow {
    pub name: String,
    pub generator: String,
    pub conjugate: String,
    pub conjugate_domain: String,
    pub optimal_variational: String,
    pub activation: String,
}

impl Divergence {
    pub const ALL: [Divergence; 8] = [
        Divergence::TotalVariation,
        Divergence::JensenShannon,
        Divergence::SquaredHellinger,
        Divergence::PearsonChi2,
        Divergence::NeymanChi2,
        Divergence::Kl,
        Divergence::ReverseKl,
        Divergence::Jeffrey,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Divergence::TotalVariation => "total-variation",
            Divergence::JensenShannon => "jensen-shannon",
            Divergence::SquaredHellinger => "squared-hellinger",
            Divergence::PearsonChi2 => "pearson-chi2",
            Divergence::NeymanChi2 => "neyman-chi2",
            Divergence::Kl => "kl",
            Divergence::ReverseKl => "reverse-kl",
            Divergence::Jeffrey => "jeffrey",
        }
    }

    /// Parse a divergence name; accepts the canonical kebab-case names and
    /// a few common short forms.
    pub fn parse(s: &str) -> Result<Divergence> {
        let key = s.trim().to_ascii_lowercase();
        Ok(match key.as_str() {
            "total-variation" | "tv" => Divergence::TotalVariation,
            "jensen-shannon" | "js" => Divergence::JensenShannon,
            "squared-hellinger" | "sh" | "hellinger" => Divergence::SquaredHellinger,
            "pearson-chi2" | "pearson" | "ps" => Divergence::PearsonChi2,
            "neyman-chi2" | "neyman" => Divergence::NeymanChi2,
            "kl" => Divergence::Kl,
            "reverse-kl" | "rkl" => Divergence::ReverseKl,
            "jeffrey" | "jf" => Divergence::Jeffrey,
            _ => {
                return Err(Error::Parse {
                    context: "divergence name".to_string(),
                    message: format!(
                        "unknown divergence {s:?}; valid names: {}",
                        Divergence::ALL.map(|d| d.name()).join(", ")
                    ),
                })
            }
        })
    }

    /// Generator f(v) on v ≥ 0, with v = 0 taken as the right limit
    /// (which is +inf for Neyman χ², reverse KL and Jeffrey).
    pub fn f(self, v: f64) -> Result<f64> {
        if v.is_nan() || v < 0.0 {
            return Err(Error::Domain {
                what: "generator f",
                value: v,
                bound: "[0, +inf)".to_string(),
            });
        }
        if v == 0.0 {
            return Ok(self.f_at_zero());
        }
        Ok(match self {
            Divergence::TotalVariation => 0.5 * (v - 1.0).abs(),
            Divergence::JensenShannon => v * v.ln() - (v + 1.0) * ((v + 1.0) / 2.0).ln(),
            Divergence::SquaredHellinger => {
                let s = v.sqrt() - 1.0;
                s * s
            }
            Divergence::PearsonChi2 => (v - 1.0) * (v - 1.0),
            Divergence::NeymanChi2 => (1.0 - v) * (1.0 - v) / v,
            Divergence::Kl => v * v.ln(),
            Divergence::ReverseKl => -v.ln(),
            Divergence::Jeffrey => (v - 1.0) * v.ln(),
        })
    }

    /// Right limit of f at v = 0. Finite for TV, JS, squared Hellinger,
    /// Pearson and KL; +inf for Neyman, reverse KL and Jeffrey.
    pub fn f_at_zero(self) -> f64 {
        match self {
            Divergence::TotalVariation => 0.5,
            Divergence::JensenShannon => LN_2,
            Divergence::SquaredHellinger => 1.0,
            Divergence::PearsonChi2 => 1.0,
            Divergence::NeymanChi2 => f64::INFINITY,
            Divergence::Kl => 0.0,
            Divergence::ReverseKl => f64::INFINITY,
            Divergence::Jeffrey => f64::INFINITY,
        }
    }

    /// lim_{v→∞} f(v)/v, the weight a p > 0, q = 0 cell carries in the
    /// closed form. Finite for TV, JS, squared Hellinger, Neyman and
    /// reverse KL; +inf for Pearson, KL and Jeffrey.
    pub fn slope_at_infinity(self) -> f64 {
        match self {
            Divergence::TotalVariation => 0.5,
            Divergence::JensenShannon => LN_2,
            Divergence::SquaredHellinger => 1.0,
            Divergence::PearsonChi2 => f64::INFINITY,
            Divergence::NeymanChi2 => 1.0,
            Divergence::Kl => f64::INFINITY,
            Divergence::ReverseKl => 0.0,
            Divergence::Jeffrey => f64::INFINITY,
        }
    }

    pub fn conjugate_domain(self) -> ConjugateDomain {
        match self {
            Divergence::TotalVariation => ConjugateDomain {
                lower: -0.5,
                upper: 0.5,
                lower_closed: true,
                upper_closed: true,
            },
            Divergence::JensenShannon => ConjugateDomain {
                lower: f64::NEG_INFINITY,
                upper: LN_2,
                lower_closed: false,
                upper_closed: false,
            },
            Divergence::SquaredHellinger | Divergence::NeymanChi2 => ConjugateDomain {
                lower: f64::NEG_INFINITY,
                upper: 1.0,
                lower_closed: false,
                upper_closed: false,
            },
            Divergence::PearsonChi2 | Divergence::Kl | Divergence::Jeffrey => ConjugateDomain {
                lower: f64::NEG_INFINITY,
                upper: f64::INFINITY,
                lower_closed: false,
                upper_closed: false,
            },
            Divergence::ReverseKl => ConjugateDomain {
                lower: f64::NEG_INFINITY,
                upper: 0.0,
                lower_closed: false,
                upper_closed: false,
            },
        }
    }

    /// Fenchel conjugate f*(u). Errors when u lies outside dom(f*); the
    /// error names the violated bound, which is the guard that keeps
    /// variational scores valid.
    pub fn conjugate(self, u: f64) -> Result<f64> {
        let dom = self.conjugate_domain();
        if !dom.contains(u) {
            return Err(Error::Domain {
                what: "conjugate f*",
                value: u,
                bound: dom.describe(),
            });
        }
        Ok(self.conjugate_unchecked(u))
    }

    /// f*(u) without the domain check. Callers must guarantee u ∈ dom(f*).
    pub fn conjugate_unchecked(self, u: f64) -> f64 {
        match self {
            Divergence::TotalVariation => u,
            Divergence::JensenShannon => -(2.0 - u.exp()).ln(),
            Divergence::SquaredHellinger => u / (1.0 - u),
            Divergence::PearsonChi2 => 0.25 * u * u + u,
            Divergence::NeymanChi2 => 2.0 - 2.0 * (1.0 - u).sqrt(),
            Divergence::Kl => (u - 1.0).exp(),
            Divergence::ReverseKl => -1.0 - (-u).ln(),
            Divergence::Jeffrey => {
                let w = lambert_w_of_exp(1.0 - u);
                w + 1.0 / w + u - 2.0
            }
        }
    }

    /// Derivative of the conjugate, d f*(u)/du, on the domain interior.
    pub fn conjugate_deriv(self, u: f64) -> f64 {
        match self {
            Divergence::TotalVariation => 1.0,
            Divergence::JensenShannon => {
                let e = u.exp();
                e / (2.0 - e)
            }
            Divergence::SquaredHellinger => {
                let d = 1.0 - u;
                1.0 / (d * d)
            }
            Divergence::PearsonChi2 => 0.5 * u + 1.0,
            Divergence::NeymanChi2 => 1.0 / (1.0 - u).sqrt(),
            Divergence::Kl => (u - 1.0).exp(),
            Divergence::ReverseKl => -1.0 / u,
            Divergence::Jeffrey => 1.0 / lambert_w_of_exp(1.0 - u),
        }
    }

    /// Optimal variational value g*(p, q) = f′(p/q) for one outcome cell.
    ///
    /// Errors with [`Error::ZeroCell`] when either mass vanishes; callers
    /// fall back to the closed-form edge conventions there.
    pub fn optimal_variational(self, p: f64, q: f64) -> Result<f64> {
        if !(p > 0.0) || !(q > 0.0) {
            return Err(Error::ZeroCell { p, q });
        }
        let r = p / q;
        Ok(match self {
            Divergence::TotalVariation => {
                if r > 1.0 {
                    0.5
                } else if r < 1.0 {
                    -0.5
                } else {
                    0.0
                }
            }
            Divergence::JensenShannon => (2.0 * p / (p + q)).ln(),
            Divergence::SquaredHellinger => 1.0 - (q / p).sqrt(),
            Divergence::PearsonChi2 => 2.0 * (r - 1.0),
            Divergence::NeymanChi2 => 1.0 - (q / p) * (q / p),
            Divergence::Kl => 1.0 + r.ln(),
            Divergence::ReverseKl => -q / p,
            Divergence::Jeffrey => 1.0 + r.ln() - q / p,
        })
    }

    /// Output activation g_f: a total map from any finite score into
    /// dom(f*). Open upper endpoints are saturated a hair inside so the
    /// conjugate of an activation value is always finite.
    pub fn activation(self, v: f64) -> f64 {
        match self {
            Divergence::TotalVariation => 0.5 * v.tanh(),
            Divergence::JensenShannon => (LN_2 - (-v).exp().ln_1p()).min(LN_2 - 1e-12),
            Divergence::SquaredHellinger | Divergence::NeymanChi2 => {
                (1.0 - v.exp()).min(1.0 - 1e-12)
            }
            Divergence::PearsonChi2 | Divergence::Kl | Divergence::Jeffrey => v,
            Divergence::ReverseKl => (-v.exp()).min(-1e-300),
        }
    }

    /// Derivative of the activation at v (zero wherever the saturation in
    /// [`Divergence::activation`] is active).
    pub fn activation_deriv(self, v: f64) -> f64 {
        match self {
            Divergence::TotalVariation => {
                let t = v.tanh();
                0.5 * (1.0 - t * t)
            }
            Divergence::JensenShannon => {
                if LN_2 - (-v).exp().ln_1p() > LN_2 - 1e-12 {
                    0.0
                } else {
                    1.0 / (1.0 + v.exp())
                }
            }
            Divergence::SquaredHellinger | Divergence::NeymanChi2 => {
                if 1.0 - v.exp() > 1.0 - 1e-12 {
                    0.0
                } else {
                    -v.exp()
                }
            }
            Divergence::PearsonChi2 | Divergence::Kl | Divergence::Jeffrey => 1.0,
            Divergence::ReverseKl => {
                if -v.exp() > -1e-300 {
                    0.0
                } else {
                    -v.exp()
                }
            }
        }
    }

    /// Display strings for the `catalog` listing.
    pub fn catalog_row(self) -> CatalogRow {
        let (generator, conjugate, optimal, activation) = match self {
            Divergence::TotalVariation => (
                "|v - 1| / 2",
                "u",
                "sign(p/q - 1) / 2",
                "tanh(v) / 2",
            ),
            Divergence::JensenShannon => (
                "v ln v - (v + 1) ln((v + 1)/2)",
                "-ln(2 - e^u)",
                "ln(2p / (p + q))",
                "ln(2 / (1 + e^-v))",
            ),
            Divergence::SquaredHellinger => (
                "(sqrt(v) - 1)^2",
                "u / (1 - u)",
                "1 - sqrt(q/p)",
                "1 - e^v",
            ),
            Divergence::PearsonChi2 => ("(v - 1)^2", "u^2/4 + u", "2(p/q - 1)", "v"),
            Divergence::NeymanChi2 => (
                "(1 - v)^2 / v",
                "2 - 2 sqrt(1 - u)",
                "1 - (q/p)^2",
                "1 - e^v",
            ),
            Divergence::Kl => ("v ln v", "e^(u - 1)", "1 + ln(p/q)", "v"),
            Divergence::ReverseKl => ("-ln v", "-1 - ln(-u)", "-q/p", "-e^v"),
            Divergence::Jeffrey => (
                "(v - 1) ln v",
                "W(e^(1-u)) + 1/W(e^(1-u)) + u - 2",
                "1 + ln(p/q) - q/p",
                "v",
            ),
        };
        CatalogRow {
            name: self.name().to_string(),
            generator: generator.to_string(),
            conjugate: conjugate.to_string(),
            conjugate_domain: self.conjugate_domain().describe(),
            optimal_variational: optimal.to_string(),
            activation: activation.to_string(),
        }
    }
}

/// Closed-form divergence between paired cell masses, with the standard
/// edge conventions: a (0, 0) cell contributes nothing, a (0, q) cell
/// contributes q·f(0), and a (p, 0) cell contributes p·lim f(v)/v. Either
/// limit may be +inf, in which case the sum is +inf.
pub fn divergence_from_cells<I>(div: Divergence, cells: I) -> f64
where
    I: IntoIterator<Item = (f64, f64)>,
{
    let mut total = 0.0;
    for (p, q) in cells {
        let term = if q > 0.0 {
            if p > 0.0 {
                q * div.f(p / q).expect("positive ratio")
            } else {
                let f0 = div.f_at_zero();
                if f0 == 0.0 {
                    0.0
                } else {
                    q * f0
                }
            }
        } else if p > 0.0 {
            let slope = div.slope_at_infinity();
            if slope == 0.0 {
                0.0
            } else {
                p * slope
            }
        } else {
            0.0
        };
        total += term;
        if total.is_infinite() {
            return f64::INFINITY;
        }
    }
    total
}

/// D_f between a joint distribution and its own product of marginals,
/// i.e. the f-mutual information of the table. Returns +inf when an edge
/// convention diverges (possible for Neyman χ², reverse KL and Jeffrey on
/// tables with empty cells).
pub fn divergence_closed_form(div: Divergence, joint: &JointDistribution) -> f64 {
    let product = joint.product_of_marginals();
    divergence_from_cells(
        div,
        joint
            .cells()
            .iter()
            .copied()
            .zip(product.cells().iter().copied()),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn generator_is_zero_at_one() {
        for div in Divergence::ALL {
            assert_eq!(div.f(1.0).unwrap(), 0.0, "{}", div.name());
        }
    }

    #[test]
    fn generator_examples() {
        assert_eq!(Divergence::TotalVariation.f(3.0).unwrap(), 1.0);
        assert_eq!(Divergence::PearsonChi2.f(0.5).unwrap(), 0.25);
        assert!(Divergence::Kl.f(-1.0).is_err());
    }

    #[test]
    fn conjugate_examples() {
        assert_eq!(Divergence::TotalVariation.conjugate(0.3).unwrap(), 0.3);
        assert_eq!(Divergence::PearsonChi2.conjugate(2.0).unwrap(), 3.0);
        assert_abs_diff_eq!(
            Divergence::JensenShannon.conjugate(0.0).unwrap(),
            0.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn conjugate_rejects_out_of_domain() {
        let err = Divergence::TotalVariation.conjugate(0.6).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("0.5"), "error should carry the bound: {msg}");
        assert!(Divergence::JensenShannon.conjugate(LN_2).is_err());
        assert!(Divergence::ReverseKl.conjugate(0.0).is_err());
        assert!(Divergence::SquaredHellinger.conjugate(1.0).is_err());
    }

    #[test]
    fn optimal_variational_examples() {
        assert_eq!(
            Divergence::TotalVariation.optimal_variational(0.4, 0.25).unwrap(),
            0.5
        );
        assert_abs_diff_eq!(
            Divergence::Kl.optimal_variational(0.25, 0.25).unwrap(),
            1.0,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            Divergence::PearsonChi2.optimal_variational(0.4, 0.25).unwrap(),
            1.2,
            epsilon = 1e-12
        );
        assert!(matches!(
            Divergence::Kl.optimal_variational(0.0, 0.25),
            Err(Error::ZeroCell { .. })
        ));
    }

    #[test]
    fn activation_examples() {
        assert_eq!(Divergence::TotalVariation.activation(0.0), 0.0);
        assert_abs_diff_eq!(Divergence::JensenShannon.activation(0.0), 0.0, epsilon = 1e-15);
        assert_eq!(Divergence::ReverseKl.activation(0.0), -1.0);
    }

    #[test]
    fn activation_stays_inside_domain_at_extremes() {
        for div in Divergence::ALL {
            let dom = div.conjugate_domain();
            for &v in &[-1e9, -800.0, -40.0, 0.0, 40.0, 800.0, 1e9] {
                let u = div.activation(v);
                assert!(
                    dom.contains(u),
                    "{}: activation({v}) = {u} left {}",
                    div.name(),
                    dom.describe()
                );
                // the conjugate of an activation value must stay finite
                assert!(div.conjugate_unchecked(u).is_finite());
            }
        }
    }

    #[test]
    fn conjugate_deriv_matches_finite_differences() {
        let us: &[(Divergence, f64)] = &[
            (Divergence::TotalVariation, 0.2),
            (Divergence::JensenShannon, 0.3),
            (Divergence::SquaredHellinger, 0.5),
            (Divergence::PearsonChi2, 1.5),
            (Divergence::NeymanChi2, 0.5),
            (Divergence::Kl, 0.7),
            (Divergence::ReverseKl, -0.8),
            (Divergence::Jeffrey, 0.9),
        ];
        for &(div, u) in us {
            let h = 1e-6;
            let fd = (div.conjugate_unchecked(u + h) - div.conjugate_unchecked(u - h)) / (2.0 * h);
            let an = div.conjugate_deriv(u);
            assert!(
                (fd - an).abs() <= 1e-6 * an.abs().max(1.0),
                "{}: f*'({u}) analytic {an} vs fd {fd}",
                div.name()
            );
        }
    }

    #[test]
    fn edge_conventions() {
        // p = 0, q > 0: q * f(0)
        let v = divergence_from_cells(Divergence::JensenShannon, [(0.0, 0.5), (1.0, 0.5)]);
        assert!(v.is_finite());
        assert!(divergence_from_cells(Divergence::NeymanChi2, [(0.0, 0.5), (1.0, 0.5)]).is_infinite());
        assert!(divergence_from_cells(Divergence::ReverseKl, [(0.0, 0.5), (1.0, 0.5)]).is_infinite());
        assert!(divergence_from_cells(Divergence::Jeffrey, [(0.0, 0.5), (1.0, 0.5)]).is_infinite());
        // p > 0, q = 0: p * f'(inf)
        assert!(divergence_from_cells(Divergence::Kl, [(0.5, 0.0), (0.5, 1.0)]).is_infinite());
        assert!(divergence_from_cells(Divergence::PearsonChi2, [(0.5, 0.0), (0.5, 1.0)]).is_infinite());
        let tv = divergence_from_cells(Divergence::TotalVariation, [(0.5, 0.0), (0.5, 1.0)]);
        assert_abs_diff_eq!(tv, 0.5, epsilon = 1e-12); // 0.5 * f'(inf) + 1.0 * f(0.5)
        // (0, 0) cells contribute nothing even for divergences with infinite edges
        assert_eq!(divergence_from_cells(Divergence::ReverseKl, [(0.0, 0.0)]), 0.0);
    }

    #[test]
    fn closed_form_examples() {
        let joint =
            JointDistribution::from_rows(vec![vec![0.4, 0.1], vec![0.1, 0.4]]).unwrap();
        assert_abs_diff_eq!(
            divergence_closed_form(Divergence::TotalVariation, &joint),
            0.3,
            epsilon = 1e-12
        );
        let expected_kl = 0.8 * 1.6f64.ln() + 0.2 * 0.4f64.ln();
        assert_abs_diff_eq!(
            divergence_closed_form(Divergence::Kl, &joint),
            expected_kl,
            epsilon = 1e-12
        );
        // the perfect balanced classifier
        let diag = JointDistribution::from_rows(vec![vec![0.5, 0.0], vec![0.0, 0.5]]).unwrap();
        assert_abs_diff_eq!(
            divergence_closed_form(Divergence::TotalVariation, &diag),
            0.5,
            epsilon = 1e-12
        );
    }

    #[test]
    fn closed_form_zero_on_product() {
        for div in Divergence::ALL {
            let joint = JointDistribution::from_rows(vec![
                vec![0.06, 0.14],
                vec![0.24, 0.56],
            ])
            .unwrap();
            let d = divergence_closed_form(div, &joint);
            assert!(d.abs() < 1e-12, "{}: D on product = {d}", div.name());
        }
    }

    #[test]
    fn parse_and_names_roundtrip() {
        for div in Divergence::ALL {
            assert_eq!(Divergence::parse(div.name()).unwrap(), div);
        }
        assert!(Divergence::parse("banana").is_err());
    }
}
