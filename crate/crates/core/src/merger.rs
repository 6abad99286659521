//! Virial scaling of dissipationless mergers.
//!
//! For an initial system accreting mass M_a = η·M_i whose material has mean
//! square speed ε·⟨v_i²⟩, energy conservation under virial equilibrium fixes
//! the final-to-initial ratios of mean square speed, gravitational radius,
//! and density as functions of (η, ε) alone.

use serde::Serialize;

use crate::error::{Error, Result};

/// Accreted-to-initial mass ratio η and mean-square-speed ratio ε.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MergerParams {
    pub eta: f64,
    pub epsilon: f64,
}

impl MergerParams {
    pub fn new(eta: f64, epsilon: f64) -> Result<Self> {
        if !(eta.is_finite() && eta >= 0.0) {
            return Err(Error::InvalidMergerParams(format!(
                "eta must be finite and >= 0, got {eta}"
            )));
        }
        if !(epsilon.is_finite() && epsilon >= 0.0) {
            return Err(Error::InvalidMergerParams(format!(
                "epsilon must be finite and >= 0, got {epsilon}"
            )));
        }
        Ok(MergerParams { eta, epsilon })
    }
}

/// Final-to-initial ratios after the merger.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MergerRatios {
    /// ⟨v_f²⟩ / ⟨v_i²⟩
    pub v2_ratio: f64,
    /// r_{g,f} / r_{g,i}
    pub size_ratio: f64,
    /// ρ_f / ρ_i
    pub density_ratio: f64,
}

/// Evaluates the three ratios. With ηε = η·ε:
/// v² scales as (1+ηε)/(1+η), size as (1+η)²/(1+ηε), density as
/// (1+ηε)³/(1+η)⁵.
pub fn merger_ratios(params: &MergerParams) -> Result<MergerRatios> {
    let p = MergerParams::new(params.eta, params.epsilon)?;
    let one_eta = 1.0 + p.eta;
    let one_etaeps = 1.0 + p.eta * p.epsilon;
    Ok(MergerRatios {
        v2_ratio: one_etaeps / one_eta,
        size_ratio: one_eta * one_eta / one_etaeps,
        density_ratio: one_etaeps.powi(3) / one_eta.powi(5),
    })
}

/// Solves (1+η)²/(1+ηε) = target for the smallest non-negative η.
///
/// The quadratic η² + (2 − target·ε)η + (1 − target) = 0 is solved in the
/// cancellation-free order; round-trips through [`merger_ratios`] to 1e-12.
pub fn invert_for_eta(size_ratio_target: f64, epsilon: f64) -> Result<f64> {
    if !(size_ratio_target.is_finite() && size_ratio_target > 0.0) {
        return Err(Error::InvalidMergerParams(format!(
            "target size ratio must be finite and > 0, got {size_ratio_target}"
        )));
    }
    if !(epsilon.is_finite() && epsilon >= 0.0) {
        return Err(Error::InvalidMergerParams(format!(
            "epsilon must be finite and >= 0, got {epsilon}"
        )));
    }
    let b = 2.0 - size_ratio_target * epsilon;
    let c = 1.0 - size_ratio_target;
    let disc = b * b - 4.0 * c;
    if disc < 0.0 {
        return Err(Error::NoMergerSolution(size_ratio_target));
    }
    let sq = disc.sqrt();
    // Subtract like signs first, recover the partner root from the product.
    let q = if b >= 0.0 { (-b - sq) / 2.0 } else { (-b + sq) / 2.0 };
    let partner = if q != 0.0 { c / q } else { -b - q };
    let (lo, hi) = if q <= partner { (q, partner) } else { (partner, q) };
    for root in [lo, hi] {
        if root >= -1e-12 {
            return Ok(root.max(0.0));
        }
    }
    Err(Error::NoMergerSolution(size_ratio_target))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn ratios(eta: f64, epsilon: f64) -> MergerRatios {
        merger_ratios(&MergerParams { eta, epsilon }).unwrap()
    }

    #[test]
    fn equal_mass_equal_speed_merger() {
        let r = ratios(1.0, 1.0);
        assert_eq!(r.v2_ratio, 1.0);
        assert_eq!(r.size_ratio, 2.0);
        assert_eq!(r.density_ratio, 0.25);
    }

    #[test]
    fn equal_mass_cold_accretion() {
        let r = ratios(1.0, 0.0);
        assert_eq!(r.v2_ratio, 0.5);
        assert_eq!(r.size_ratio, 4.0);
        assert_eq!(r.density_ratio, 1.0 / 32.0);
    }

    #[test]
    fn no_accretion_is_identity() {
        for epsilon in [0.0, 0.3, 1.0, 7.5] {
            let r = ratios(0.0, epsilon);
            assert_eq!((r.v2_ratio, r.size_ratio, r.density_ratio), (1.0, 1.0, 1.0));
        }
    }

    #[test]
    fn virial_identities_on_random_draws() {
        let mut rng = crate::seeding::rng_from_seed(5150);
        for _ in 0..1000 {
            let eta = rng.random::<f64>() * 5.0;
            let epsilon = rng.random::<f64>() * 2.0;
            let r = ratios(eta, epsilon);
            let one_eta = 1.0 + eta;
            let tol = 1e-12 * one_eta;
            assert!((r.v2_ratio * r.size_ratio - one_eta).abs() <= tol);
            assert!((r.density_ratio * r.size_ratio.powi(3) - one_eta).abs() <= tol);
        }
    }

    #[test]
    fn size_ratio_monotone_in_eta_below_unity_epsilon() {
        for epsilon in [0.0, 0.4, 0.9] {
            let mut prev = ratios(0.0, epsilon).size_ratio;
            for step in 1..=50 {
                let cur = ratios(step as f64 * 0.1, epsilon).size_ratio;
                assert!(cur > prev, "epsilon {epsilon} step {step}");
                prev = cur;
            }
        }
    }

    #[test]
    fn inversion_examples() {
        assert_eq!(invert_for_eta(4.0, 0.0).unwrap(), 1.0);
        assert_eq!(invert_for_eta(1.0, 0.0).unwrap(), 0.0);
        assert_eq!(invert_for_eta(1.0, 0.7).unwrap(), 0.0);
        assert_eq!(invert_for_eta(2.0, 1.0).unwrap(), 1.0);
    }

    #[test]
    fn inversion_round_trips() {
        let mut rng = crate::seeding::rng_from_seed(61);
        for _ in 0..1000 {
            let eta = rng.random::<f64>() * 5.0;
            let epsilon = rng.random::<f64>() * 2.0;
            let target = ratios(eta, epsilon).size_ratio;
            let back = invert_for_eta(target, epsilon).unwrap();
            assert!(
                (back - eta).abs() <= 1e-12 * (1.0 + eta),
                "eta {eta} epsilon {epsilon} back {back}"
            );
        }
    }

    #[test]
    fn unreachable_target_errors() {
        assert!(matches!(
            invert_for_eta(0.5, 0.0),
            Err(Error::NoMergerSolution(_))
        ));
        assert!(invert_for_eta(-1.0, 0.0).is_err());
        assert!(merger_ratios(&MergerParams { eta: -0.1, epsilon: 0.0 }).is_err());
    }
}
