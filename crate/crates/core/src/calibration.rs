//! Scalar calibration formulas linking the record statistics to the
//! physical parameters: measurement strength, dephasing rate, photon-number
//! calibration from the Stark shift, and the efficiency fit.
//!
//! Everything here is a pure function; the identities tying the formulas
//! together (`γτ = S(1−η)/(8η)` at infinite T₂*, `S = ΔV²/σ²` round trips)
//! are enforced by tests.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::PhysicalParams;
use crate::scalar::{real, Real};

/// Summary of the derived measurement scales for one duration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport<F> {
    /// Dimensionless measurement strength S at the requested duration.
    pub s: F,
    /// Total transverse dephasing rate (1/s).
    pub gamma: F,
    /// Per-component record standard deviation, `ΔV/√S` (infinite at S = 0).
    pub sigma: F,
    /// Equatorial phase kick per intracavity photon, `4χ/κ` (rad).
    pub phase_per_photon: F,
    /// Efficiency recovered from a strength-vs-photon-number fit, if one ran.
    pub fitted_eta: Option<F>,
}

/// Result of regressing measurement strength against photon number.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EtaFit<F> {
    pub eta: F,
    /// Fitted strength-per-photon slope.
    pub slope: F,
    /// Euclidean norm of the per-point residuals.
    pub residual_norm: F,
}

/// Detected measurement strength `S = 64 τ χ² n̄ η / κ`.
///
/// Linear in duration, photon number, and efficiency; quadratic in the
/// coupling rate.
pub fn measurement_strength<F: Real>(params: &PhysicalParams<F>, tau: F) -> Result<F> {
    Ok(full_measurement_strength(params, tau)? * params.eta)
}

/// Measurement strength of the full (unit-efficiency) record,
/// `64 τ χ² n̄ / κ`. This is the information rate the environment sees;
/// the detector only keeps the `η` fraction of it.
pub fn full_measurement_strength<F: Real>(params: &PhysicalParams<F>, tau: F) -> Result<F> {
    if !(tau >= F::zero()) {
        return Err(Error::InvalidParams(format!(
            "tau = {tau} must be non-negative"
        )));
    }
    Ok(real::<F>(64.0) * tau * params.chi * params.chi * params.nbar / params.kappa)
}

/// Strength measured from record histograms: `S = ΔV²/σ²`.
pub fn strength_from_histograms<F: Real>(delta_v: F, sigma: F) -> Result<F> {
    if !(sigma > F::zero()) {
        return Err(Error::InvalidParams(format!(
            "sigma = {sigma} must be positive"
        )));
    }
    let ratio = delta_v / sigma;
    Ok(ratio * ratio)
}

/// Per-component record width implied by a strength: `σ = ΔV/√S`.
pub fn sigma_for_strength<F: Real>(delta_v: F, s: F) -> Result<F> {
    if !(s > F::zero()) {
        return Err(Error::InvalidParams(format!("s = {s} must be positive")));
    }
    Ok(delta_v / s.sqrt())
}

/// Transverse dephasing rate `γ = 8 χ² n̄ (1−η)/κ + 1/T₂*`.
pub fn dephasing_rate<F: Real>(params: &PhysicalParams<F>) -> F {
    measurement_dephasing_rate(params) + params.t2_star.recip()
}

/// Measurement-induced part of the dephasing rate, `8 χ² n̄ (1−η)/κ`:
/// the information rate lost to the undetected signal fraction.
pub fn measurement_dephasing_rate<F: Real>(params: &PhysicalParams<F>) -> F {
    real::<F>(8.0) * params.chi * params.chi * params.nbar * (F::one() - params.eta) / params.kappa
}

/// Photon number from the measured AC Stark shift. Each intracavity photon
/// shifts the qubit frequency by `2|χ|`, so `n̄ = |Δω| / (2|χ|)`.
pub fn nbar_from_stark<F: Real>(stark_shift: F, chi: F) -> Result<F> {
    if chi == F::zero() {
        return Err(Error::InvalidParams("chi = 0 cannot be inverted".into()));
    }
    Ok(stark_shift.abs() / (F::two() * chi.abs()))
}

/// Mean equatorial phase kick per photon entering the cavity, `4χ/κ`.
pub fn phase_per_photon<F: Real>(chi: F, kappa: F) -> Result<F> {
    if !(kappa > F::zero()) {
        return Err(Error::InvalidParams(format!(
            "kappa = {kappa} must be positive"
        )));
    }
    Ok(real::<F>(4.0) * chi / kappa)
}

/// Least-squares slope of `(n̄, S)` points through the origin, converted to
/// an efficiency via `S/n̄ = 64 τ χ² η / κ`.
///
/// The regression is forced through the origin because zero photons carry
/// zero information.
pub fn fit_eta<F: Real>(points: &[(F, F)], tau: F, chi: F, kappa: F) -> Result<EtaFit<F>> {
    if points.len() < 2 {
        return Err(Error::DegenerateFit(format!(
            "need at least 2 points, got {}",
            points.len()
        )));
    }
    let first = points[0].0;
    if points.iter().all(|&(n, _)| n == first) {
        return Err(Error::DegenerateFit(
            "all points share the same photon number".into(),
        ));
    }
    if !(tau > F::zero()) || chi == F::zero() || !(kappa > F::zero()) {
        return Err(Error::DegenerateFit(format!(
            "unit slope 64τχ²/κ undefined for tau = {tau}, chi = {chi}, kappa = {kappa}"
        )));
    }
    let mut num = F::zero();
    let mut den = F::zero();
    for &(n, s) in points {
        num += n * s;
        den += n * n;
    }
    if den == F::zero() {
        return Err(Error::DegenerateFit("all photon numbers are zero".into()));
    }
    let slope = num / den;
    let residual_norm = points
        .iter()
        .map(|&(n, s)| {
            let r = s - slope * n;
            r * r
        })
        .sum::<F>()
        .sqrt();
    let unit_slope = real::<F>(64.0) * tau * chi * chi / kappa;
    Ok(EtaFit {
        eta: slope / unit_slope,
        slope,
        residual_norm,
    })
}

/// Assemble the full calibration summary for one measurement duration.
pub fn calibration_report<F: Real>(
    params: &PhysicalParams<F>,
    tau: F,
    delta_v: F,
) -> Result<CalibrationReport<F>> {
    params.validate()?;
    if !(delta_v > F::zero()) {
        return Err(Error::InvalidParams(format!(
            "delta_v = {delta_v} must be positive"
        )));
    }
    let s = measurement_strength(params, tau)?;
    let sigma = if s > F::zero() {
        sigma_for_strength(delta_v, s)?
    } else {
        F::infinity()
    };
    Ok(CalibrationReport {
        s,
        gamma: dephasing_rate(params),
        sigma,
        phase_per_photon: phase_per_photon(params.chi, params.kappa)?,
        fitted_eta: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;
    use std::f64::consts::TAU;

    fn params(nbar: f64, eta: f64, t2_star: f64) -> PhysicalParams<f64> {
        PhysicalParams::from_ordinary_frequencies(-0.49e6, 10.8e6, nbar, eta, t2_star).unwrap()
    }

    // Independent route: evaluate the strength formula from scratch.
    fn strength_by_hand(tau: f64, nbar: f64, eta: f64) -> f64 {
        let chi = TAU * -0.49e6;
        let kappa = TAU * 10.8e6;
        64.0 * tau * chi * chi * nbar * eta / kappa
    }

    #[test]
    fn strength_at_quoted_operating_points() {
        let s = measurement_strength(&params(0.4, 0.49, 20e-6), 1.8e-6).unwrap();
        assert_relative_eq!(s, strength_by_hand(1.8e-6, 0.4, 0.49), max_relative = 1e-14);
        assert_abs_diff_eq!(s, 3.15, epsilon = 5e-3);

        let s46 = measurement_strength(&params(0.46, 0.49, 20e-6), 1.8e-6).unwrap();
        assert_abs_diff_eq!(s46, 3.62, epsilon = 1e-2);
    }

    #[test]
    fn strength_vanishes_without_photons() {
        assert_eq!(
            measurement_strength(&params(0.0, 0.49, 20e-6), 1.8e-6).unwrap(),
            0.0
        );
    }

    #[test]
    fn negative_tau_rejected() {
        assert!(measurement_strength(&params(0.4, 0.49, 20e-6), -1e-9).is_err());
    }

    #[test]
    fn histogram_strength_examples() {
        assert_eq!(strength_from_histograms(1.0, 1.0f64).unwrap(), 1.0);
        // sigma chosen as ΔV/√S at S = 3.145
        assert_abs_diff_eq!(
            strength_from_histograms(1.0, 0.5639f64).unwrap(),
            1.0 / (0.5639 * 0.5639),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            strength_from_histograms(1.0, 0.5639f64).unwrap(),
            3.145,
            epsilon = 1e-3
        );
        assert!(strength_from_histograms(1.0, 0.0f64).is_err());
    }

    #[test]
    fn sigma_examples() {
        assert_eq!(sigma_for_strength(1.0, 4.0f64).unwrap(), 0.5);
        assert_abs_diff_eq!(
            sigma_for_strength(1.0, 3.15f64).unwrap(),
            1.0 / 3.15f64.sqrt(),
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(sigma_for_strength(1.0, 3.15f64).unwrap(), 0.5634, epsilon = 1e-4);
        // linear in ΔV
        assert_abs_diff_eq!(
            sigma_for_strength(2.0, 3.15f64).unwrap(),
            2.0 / 3.15f64.sqrt(),
            epsilon = 1e-15
        );
        assert!(sigma_for_strength(1.0, 0.0f64).is_err());
    }

    #[test]
    fn dephasing_rate_at_quoted_operating_point() {
        // Independent route: both terms by hand.
        let chi = TAU * -0.49e6;
        let kappa = TAU * 10.8e6;
        let meas = 8.0 * chi * chi * 0.4 * (1.0 - 0.49) / kappa;
        let expected = meas + 1.0 / 20e-6;
        let gamma = dephasing_rate(&params(0.4, 0.49, 20e-6));
        assert_relative_eq!(gamma, expected, max_relative = 1e-14);
        assert_abs_diff_eq!(gamma, 2.78e5, epsilon = 1e3);
        assert_abs_diff_eq!(meas, 2.28e5, epsilon = 1e3);
    }

    #[test]
    fn dephasing_vanishes_for_perfect_detection_without_environment() {
        assert_eq!(dephasing_rate(&params(0.4, 1.0, f64::INFINITY)), 0.0);
    }

    #[test]
    fn dephasing_is_environmental_only_without_photons() {
        assert_relative_eq!(
            dephasing_rate(&params(0.0, 0.49, 20e-6)),
            5.0e4,
            max_relative = 1e-12
        );
    }

    #[test]
    fn stark_inversion_recovers_photon_numbers() {
        let chi = TAU * -0.49e6;
        assert_relative_eq!(
            nbar_from_stark(TAU * 0.392e6, chi).unwrap(),
            0.4,
            max_relative = 1e-12
        );
        assert_eq!(nbar_from_stark(0.0, chi).unwrap(), 0.0);
        assert_relative_eq!(
            nbar_from_stark(TAU * 0.4508e6, chi).unwrap(),
            0.46,
            max_relative = 1e-12
        );
        assert!(nbar_from_stark(1.0, 0.0f64).is_err());
    }

    #[test]
    fn eta_fit_recovers_exact_synthetic_slopes() {
        let chi = TAU * -0.49e6;
        let kappa = TAU * 10.8e6;
        let tau = 1.8e-6;
        let unit_slope = 64.0 * tau * chi * chi / kappa;
        let make = |eta: f64| -> Vec<(f64, f64)> {
            [0.1, 0.2, 0.3, 0.4, 0.46]
                .iter()
                .map(|&n| (n, unit_slope * eta * n))
                .collect()
        };

        let fit = fit_eta(&make(0.49), tau, chi, kappa).unwrap();
        assert_relative_eq!(fit.eta, 0.49, max_relative = 1e-12);
        assert_abs_diff_eq!(fit.residual_norm, 0.0, epsilon = 1e-9);

        let fit = fit_eta(&make(1.0), tau, chi, kappa).unwrap();
        assert_relative_eq!(fit.eta, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn eta_fit_rejects_degenerate_points() {
        let chi = TAU * -0.49e6;
        let kappa = TAU * 10.8e6;
        assert!(fit_eta(&[(0.4, 3.15)], 1.8e-6, chi, kappa).is_err());
        assert!(fit_eta(&[(0.4, 3.15), (0.4, 3.15)], 1.8e-6, chi, kappa).is_err());
    }

    #[test]
    fn phase_per_photon_examples() {
        let v = phase_per_photon(TAU * -0.49e6, TAU * 10.8e6).unwrap();
        assert_relative_eq!(v, 4.0 * -0.49 / 10.8, max_relative = 1e-12);
        assert_abs_diff_eq!(v, -0.1815, epsilon = 1e-4);
        assert_eq!(phase_per_photon(0.0, 1.0f64).unwrap(), 0.0);
        assert!(phase_per_photon(1.0, 0.0f64).is_err());
    }

    #[test]
    fn report_handles_zero_strength() {
        let r = calibration_report(&params(0.0, 0.49, 20e-6), 1.8e-6, 1.0).unwrap();
        assert_eq!(r.s, 0.0);
        assert!(r.sigma.is_infinite());
    }

    #[test]
    fn works_in_single_precision() {
        let p =
            PhysicalParams::<f32>::from_ordinary_frequencies(-0.49e6, 10.8e6, 0.4, 0.49, 20e-6)
                .unwrap();
        let s = measurement_strength(&p, 1.8e-6f32).unwrap();
        assert!((s - 3.154).abs() < 1e-3);
    }

    proptest! {
        // γτ = S(1−η)/(8η) exactly when the environmental term is disabled.
        #[test]
        fn gamma_tau_identity(
            chi_mhz in -5.0..5.0f64,
            kappa_mhz in 0.5..50.0f64,
            nbar in 0.0..10.0f64,
            eta in 0.01..1.0f64,
            tau_us in 0.0..10.0f64,
        ) {
            let p = PhysicalParams::from_ordinary_frequencies(
                chi_mhz * 1e6, kappa_mhz * 1e6, nbar, eta, f64::INFINITY).unwrap();
            let tau = tau_us * 1e-6;
            let lhs = dephasing_rate(&p) * tau;
            let s = measurement_strength(&p, tau).unwrap();
            let rhs = s * (1.0 - eta) / (8.0 * eta);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1e-30));
        }

        // strength_from_histograms ∘ sigma_for_strength is the identity.
        #[test]
        fn strength_round_trip(delta_v in 0.01..100.0f64, s in 1e-6..1e6f64) {
            let sigma = sigma_for_strength(delta_v, s).unwrap();
            let back = strength_from_histograms(delta_v, sigma).unwrap();
            prop_assert!((back - s).abs() <= 1e-12 * s);
        }

        // Exact scaling structure: linear in τ, n̄, η; quadratic in χ.
        #[test]
        fn strength_scaling(
            chi_mhz in 0.05..5.0f64,
            kappa_mhz in 0.5..50.0f64,
            nbar in 0.01..10.0f64,
            eta in 0.01..0.5f64,
            tau_us in 0.01..10.0f64,
            scale in 0.1..2.0f64,
        ) {
            let base = PhysicalParams::from_ordinary_frequencies(
                chi_mhz * 1e6, kappa_mhz * 1e6, nbar, eta, f64::INFINITY).unwrap();
            let tau = tau_us * 1e-6;
            let s0 = measurement_strength(&base, tau).unwrap();

            let tau_scaled = measurement_strength(&base, tau * scale).unwrap();
            prop_assert!((tau_scaled - s0 * scale).abs() <= 1e-12 * s0.max(tau_scaled));

            let nbar_scaled = measurement_strength(
                &PhysicalParams { nbar: nbar * scale, ..base }, tau).unwrap();
            prop_assert!((nbar_scaled - s0 * scale).abs() <= 1e-12 * s0.max(nbar_scaled));

            let eta_scaled = measurement_strength(
                &PhysicalParams { eta: eta * scale.min(1.9), ..base }, tau).unwrap();
            let expected = s0 * scale.min(1.9);
            prop_assert!((eta_scaled - expected).abs() <= 1e-12 * s0.max(expected));

            let chi_scaled = measurement_strength(
                &PhysicalParams { chi: base.chi * scale, ..base }, tau).unwrap();
            let expected = s0 * scale * scale;
            prop_assert!((chi_scaled - expected).abs() <= 1e-11 * s0.max(expected));
        }

        // 4χ/κ is odd in χ.
        #[test]
        fn phase_per_photon_odd(chi in -10.0..10.0f64, kappa in 0.1..10.0f64) {
            let plus = phase_per_photon(chi, kappa).unwrap();
            let minus = phase_per_photon(-chi, kappa).unwrap();
            prop_assert_eq!(plus, -minus);
        }
    }
}
