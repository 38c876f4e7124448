//! Divert/accept decisions under the two-action loss model.
//!
//! A sample either continues to the melter (accept) or is pulled to slag
//! (divert). Diverting costs a flat Λ₀; accepting costs Λ₁ when the
//! sample's true log contamination exceeds the threshold ĉ, else nothing.
//! With posterior mixture `m` over the contamination, the expected losses
//! are Λ₀ versus Λ₁·P(c > ĉ | m), so the optimal action diverts exactly
//! when the posterior tail mass beats the cost ratio Λ₀/Λ₁.
//!
//! The tail probability is a weighted sum of Gaussian survival values;
//! [`survival`] keeps full relative precision far into the tail (where
//! the naive `1 − Φ(z)` is identically zero) because policies with small
//! cost ratios live exactly there.

use crate::compiler::Policy;
use crate::error::Result;
use crate::mixture::GaussianMixture;

/// What the diverter gate does with a sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    /// Pull the sample to the slag stream.
    Divert,
    /// Let the sample continue to the melter feed.
    Accept,
}

impl std::fmt::Display for Action {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Action::Divert => write!(f, "divert"),
            Action::Accept => write!(f, "accept"),
        }
    }
}

// ── Gaussian survival function ───────────────────────────────────────────

/// Upper-tail probability `P(Z > z)` for standard normal `Z`, accurate in
/// relative terms across the whole range.
///
/// Three regimes: the complementary error function carries the bulk
/// (`|z| ≤ 8`); deep right tails (`z > 8`) use the Mills-ratio asymptotic
/// series `φ(z)/z · Σ (−1)^k (2k−1)!!/z^{2k}`, truncated at its smallest
/// term, where erfc has already underflowed in its argument scaling; and
/// deep left tails reflect through `1 − survival(−z)`.
pub fn survival(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    if z < -8.0 {
        return 1.0 - survival(-z);
    }
    if z <= 8.0 {
        return 0.5 * libm::erfc(z / std::f64::consts::SQRT_2);
    }
    // Mills asymptotic: the alternating series' error is below its first
    // omitted term, so stopping at the smallest term maximizes accuracy
    // (≲ 7e-13 relative at z = 8, shrinking fast beyond).
    let inv_sq = 1.0 / (z * z);
    let phi = (-0.5 * z * z).exp() / std::f64::consts::TAU.sqrt();
    let mut sum = 1.0;
    let mut term = 1.0;
    let mut k = 1u32;
    loop {
        let next = term * (2 * k - 1) as f64 * inv_sq;
        if next >= term {
            break; // series started diverging
        }
        term = next;
        sum += if k % 2 == 1 { -term } else { term };
        if term < 1e-17 {
            break;
        }
        k += 1;
    }
    phi / z * sum
}

/// Posterior probability that the quantity exceeds `c_hat` under the
/// mixture: `Σ_k π_k · P(Z > (ĉ − μ_k)/σ_k)`.
pub fn tail_prob(m: &GaussianMixture, c_hat: f64) -> f64 {
    let total: f64 = m
        .components()
        .iter()
        .map(|c| c.weight * survival((c_hat - c.mean) / c.variance.sqrt()))
        .sum();
    total.clamp(0.0, 1.0)
}

// ── Decisions ────────────────────────────────────────────────────────────

/// Expected loss of taking `action` against the posterior `m`.
pub fn expected_loss(action: Action, m: &GaussianMixture, p: &Policy) -> f64 {
    match action {
        Action::Divert => p.divert_cost,
        Action::Accept => p.error_cost * tail_prob(m, p.c_hat),
    }
}

/// The loss-minimizing action: divert exactly when
/// `Λ₁ · P(c > ĉ) > Λ₀` (strict — ties accept).
pub fn decide(m: &GaussianMixture, p: &Policy) -> Action {
    if p.error_cost * tail_prob(m, p.c_hat) > p.divert_cost {
        Action::Divert
    } else {
        Action::Accept
    }
}

/// [`decide`] with policy validation, for untrusted policies.
pub fn decide_checked(m: &GaussianMixture, p: &Policy) -> Result<Action> {
    p.check()?;
    Ok(decide(m, p))
}

// ── Tests ────────────────────────────────────────────────────────────────

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixture::MixtureComponent;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;

    fn mixture(parts: &[(f64, f64, f64)]) -> GaussianMixture {
        GaussianMixture::new(
            parts
                .iter()
                .map(|&(weight, mean, variance)| MixtureComponent {
                    weight,
                    mean,
                    variance,
                    source: vec![],
                })
                .collect(),
        )
        .unwrap()
    }

    // Reference values computed with 50-digit arithmetic in an
    // independent implementation, rounded to f64.
    #[test]
    fn survival_matches_high_precision_references() {
        assert_relative_eq!(survival(0.0), 0.5, max_relative = 1e-15);
        assert_relative_eq!(
            survival(0.5),
            0.3085375387259868963623,
            max_relative = 1e-14
        );
        assert_relative_eq!(
            survival(1.5),
            0.06680720126885806600449,
            max_relative = 1e-14
        );
        assert_relative_eq!(
            survival(-3.0),
            0.9986501019683699054733,
            max_relative = 1e-14
        );
        assert_relative_eq!(
            survival(8.0),
            6.220960574271784123516e-16,
            max_relative = 1e-13
        );
        assert_relative_eq!(
            survival(10.0),
            7.619853024160526065973e-24,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            survival(20.0),
            2.753624118606233695076e-89,
            max_relative = 1e-12
        );
        assert_abs_diff_eq!(survival(-10.0), 1.0, epsilon = 1e-15);
        assert!(survival(f64::NAN).is_nan());
    }

    #[test]
    fn survival_is_continuous_across_the_asymptotic_switch() {
        // The erfc and Mills branches must meet smoothly at z = 8.
        let below = survival(8.0 - 1e-9);
        let above = survival(8.0 + 1e-9);
        assert_relative_eq!(below, above, max_relative = 1e-6);
        // And the branch point itself sits between its neighbors.
        assert!(survival(7.999) > survival(8.0));
        assert!(survival(8.0) > survival(8.001));
    }

    #[test]
    fn survival_is_strictly_decreasing_and_bounded() {
        let mut prev = survival(-12.0);
        let mut z = -12.0;
        while z <= 40.0 {
            z += 0.25;
            let cur = survival(z);
            assert!(cur <= prev, "survival rose at z = {z}");
            assert!((0.0..=1.0).contains(&cur));
            prev = cur;
        }
        // φ(z) itself leaves f64 range near z ≈ 38.6; up to there the
        // deep tail must stay strictly positive.
        assert!(survival(37.0) > 0.0, "deep tail must not flush to zero");
    }

    #[test]
    fn tail_prob_reads_off_frozen_mixture_value() {
        // 0.3·N(3, 1) + 0.7·N(−1.5, 1) at ĉ = 0:
        // 0.3·Q(−3) + 0.7·Q(1.5).
        let m = mixture(&[(0.3, 3.0, 1.0), (0.7, -1.5, 1.0)]);
        assert_relative_eq!(
            tail_prob(&m, 0.0),
            0.3463600714787116178452,
            max_relative = 1e-13
        );
    }

    #[test]
    fn symmetric_cases_split_the_tail_in_half() {
        let m = mixture(&[(1.0, 0.0, 1.0)]);
        assert_abs_diff_eq!(tail_prob(&m, 0.0), 0.5, epsilon = 1e-15);
        let twin = mixture(&[(0.5, -2.0, 1.0), (0.5, 2.0, 1.0)]);
        assert_abs_diff_eq!(tail_prob(&twin, 0.0), 0.5, epsilon = 1e-14);
    }

    #[test]
    fn tail_prob_is_monotone_in_the_threshold() {
        let m = mixture(&[(0.4, -1.0, 0.5), (0.6, 2.0, 3.0)]);
        let mut prev = 1.0;
        for i in 0..200 {
            let c = -10.0 + 20.0 * i as f64 / 199.0;
            let t = tail_prob(&m, c);
            assert!(t <= prev + 1e-15);
            prev = t;
        }
    }

    #[test]
    fn expected_loss_reads_off_frozen_value() {
        let m = mixture(&[(0.3, 3.0, 1.0), (0.7, -1.5, 1.0)]);
        let p = Policy::new(0.0, 0.25, 10.0).unwrap();
        assert_abs_diff_eq!(expected_loss(Action::Divert, &m, &p), 0.25, epsilon = 0.0);
        assert_relative_eq!(
            expected_loss(Action::Accept, &m, &p),
            3.463600714787116178452,
            max_relative = 1e-13
        );
        assert_eq!(decide(&m, &p), Action::Divert);
    }

    #[test]
    fn ties_accept() {
        // P(c > ĉ) = 0.5 exactly; costs tuned so Λ₁·0.5 == Λ₀.
        let m = mixture(&[(1.0, 0.0, 1.0)]);
        let p = Policy::new(0.0, 0.5, 1.0).unwrap();
        assert_eq!(decide(&m, &p), Action::Accept);
        let cheaper = Policy::new(0.0, 0.4999999, 1.0).unwrap();
        assert_eq!(decide(&m, &cheaper), Action::Divert);
    }

    #[test]
    fn action_serializes_lowercase() {
        assert_eq!(serde_json::to_string(&Action::Divert).unwrap(), "\"divert\"");
        assert_eq!(Action::Accept.to_string(), "accept");
        let back: Action = serde_json::from_str("\"accept\"").unwrap();
        assert_eq!(back, Action::Accept);
    }

    // ── Properties ──────────────────────────────────────────────────────

    fn arb_mixture() -> impl Strategy<Value = GaussianMixture> {
        proptest::collection::vec(
            (0.05f64..1.0, -6.0f64..6.0, 0.05f64..4.0),
            1..5,
        )
        .prop_map(|parts| {
            GaussianMixture::from_unnormalized(
                parts
                    .iter()
                    .map(|&(weight, mean, variance)| MixtureComponent {
                        weight,
                        mean,
                        variance,
                        source: vec![],
                    })
                    .collect(),
            )
            .unwrap()
        })
    }

    fn arb_policy() -> impl Strategy<Value = Policy> {
        (-4.0f64..4.0, 0.0f64..2.0, 0.01f64..5.0)
            .prop_map(|(c_hat, divert_cost, error_cost)| Policy {
                c_hat,
                divert_cost,
                error_cost,
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(256))]

        #[test]
        fn tail_prob_stays_in_unit_interval(m in arb_mixture(), c in -20.0f64..20.0) {
            let t = tail_prob(&m, c);
            prop_assert!((0.0..=1.0).contains(&t));
        }

        #[test]
        fn decide_minimizes_expected_loss(m in arb_mixture(), p in arb_policy()) {
            let chosen = decide(&m, &p);
            let divert = expected_loss(Action::Divert, &m, &p);
            let accept = expected_loss(Action::Accept, &m, &p);
            let best = divert.min(accept);
            prop_assert!(
                expected_loss(chosen, &m, &p) <= best + 1e-12,
                "chose {chosen} with losses divert={divert} accept={accept}"
            );
            // Strict preference must be honored exactly.
            if accept < divert {
                prop_assert_eq!(chosen, Action::Accept);
            }
            if divert < accept {
                prop_assert_eq!(chosen, Action::Divert);
            }
        }

        #[test]
        fn positive_rescaling_never_changes_the_decision(
            m in arb_mixture(),
            p in arb_policy(),
            scale in 1e-6f64..1e6,
        ) {
            let scaled = Policy {
                c_hat: p.c_hat,
                divert_cost: p.divert_cost * scale,
                error_cost: p.error_cost * scale,
            };
            prop_assert_eq!(decide(&m, &p), decide(&m, &scaled));
        }

        #[test]
        fn reflection_identity_holds(z in -12.0f64..12.0) {
            let sum = survival(z) + survival(-z);
            prop_assert!((sum - 1.0).abs() < 1e-13, "Q(z)+Q(−z) = {sum}");
        }
    }
}
