//! Bayesian state estimation from integrated measurement records.
//!
//! The filter sees only `(V_m, S, ΔV, γ, τ)` — never the simulator's latent
//! series. For Z-records the posterior over the measurement eigenstates is a
//! two-component Gaussian mixture whose log-odds are additive in the record,
//! so cumulative single-shot updates and stepwise segment updates are the
//! same map; [`sequential_equivalence_check`] verifies that identity on real
//! records. [`conditional_oracle`] numerically computes the true-state
//! conditional mean implied by the generative model, as an independent check
//! on the closed-form update.

use serde::{Deserialize, Serialize};

use crate::calibration::{dephasing_rate, full_measurement_strength, measurement_strength};
use crate::error::{Error, Result};
use crate::model::{
    BlochVector, MeasurementConfig, MeasurementRecord, PhysicalParams, Quadrature,
    TrajectoryEstimate,
};
use crate::scalar::{real, Real};

/// Log-odds (arctanh) arguments are clamped at this magnitude; tanh already
/// saturates to ±1 well inside it in either float width, so the clamp only
/// keeps projective-limit records from producing non-finite intermediates.
pub const LOG_ODDS_CLAMP: f64 = 30.0;

/// Relative tolerance for the adaptive Gauss-density integration in
/// [`conditional_oracle`]; chosen so results are stable well below the 1e-6
/// the oracle promises.
const ORACLE_REL_TOL: f64 = 1e-9;

pub(crate) fn clamp_log_odds<F: Real>(arg: F) -> F {
    let cap = real::<F>(LOG_ODDS_CLAMP);
    arg.max(-cap).min(cap)
}

/// Clamped arctanh of an initial `z`: the log-odds the filter starts from.
pub(crate) fn initial_log_odds<F: Real>(z0: F) -> F {
    let cap = real::<F>(LOG_ODDS_CLAMP);
    if z0 >= F::one() {
        cap
    } else if z0 <= -F::one() {
        -cap
    } else {
        z0.atanh().max(-cap).min(cap)
    }
}

fn check_update_inputs<F: Real>(s: F, delta_v: F, gamma: F, tau: F) -> Result<()> {
    if !(s >= F::zero()) {
        return Err(Error::InvalidParams(format!("strength {s} must be ≥ 0")));
    }
    if !(delta_v > F::zero()) {
        return Err(Error::InvalidParams(format!("delta_v {delta_v} must be > 0")));
    }
    if !(gamma >= F::zero()) {
        return Err(Error::InvalidParams(format!("gamma {gamma} must be ≥ 0")));
    }
    if !(tau >= F::zero()) {
        return Err(Error::InvalidParams(format!("tau {tau} must be ≥ 0")));
    }
    Ok(())
}

/// Posterior probability of the `|0⟩` eigenstate given an integrated record
/// value, for Gaussian likelihoods separated by `ΔV` with variance `ΔV²/s`.
///
/// A zero strength is a flat likelihood: the prior is returned unchanged.
/// Certainty is absorbing: priors 0 and 1 are fixed points.
pub fn bayes_posterior<F: Real>(prior_p0: F, v_m: F, delta_v: F, s: F) -> Result<F> {
    if !(prior_p0 >= F::zero() && prior_p0 <= F::one()) {
        return Err(Error::InvalidParams(format!(
            "prior {prior_p0} must lie in [0, 1]"
        )));
    }
    check_update_inputs(s, delta_v, F::zero(), F::zero())?;
    if s == F::zero() || prior_p0 == F::zero() || prior_p0 == F::one() {
        return Ok(prior_p0);
    }
    let z0 = F::two() * prior_p0 - F::one();
    let arg = clamp_log_odds(initial_log_odds(z0) + v_m * s / (F::two() * delta_v));
    Ok((F::one() + arg.tanh()) * F::half())
}

/// Z-measurement update: collapse along z by the record log-odds, shrink the
/// transverse part onto the dephasing envelope.
///
/// `z = tanh(arctanh(z₀) + V_m·S/(2ΔV))`; the transverse magnitude becomes
/// `√(1−z²)·q₀·e^(−γτ)` along the initial transverse direction, where
/// `q₀ = r₀/√(1−z₀²)` is the coherence fraction the initial state already
/// had. Keeping the `q₀` factor makes the update compose: applying it
/// segment by segment equals one cumulative application.
pub fn update_z<F: Real>(
    v_m: F,
    s: F,
    delta_v: F,
    gamma: F,
    tau: F,
    initial: &BlochVector<F>,
) -> Result<BlochVector<F>> {
    check_update_inputs(s, delta_v, gamma, tau)?;
    let z0 = initial.z();
    let r0 = initial.transverse();

    let planar = F::one() - z0 * z0;
    let q0 = if planar <= F::zero() || r0 == F::zero() {
        if r0 > real(1e-6) {
            return Err(Error::InvalidState(format!(
                "initial state has |z| = 1 with transverse part {r0}"
            )));
        }
        F::zero()
    } else {
        (r0 / planar.sqrt()).min(F::one())
    };
    let (dir_x, dir_y) = if r0 > F::zero() {
        (initial.x() / r0, initial.y() / r0)
    } else {
        (F::one(), F::zero())
    };

    let arg = clamp_log_odds(initial_log_odds(z0) + v_m * s / (F::two() * delta_v));
    let z = arg.tanh();
    let r = (F::one() - z * z).max(F::zero()).sqrt() * q0 * (-gamma * tau).exp();
    BlochVector::new(r * dir_x, r * dir_y, z)
}

/// φ-measurement update: rotate the equatorial phase by the inferred kick
/// `θ = S·V_m/(2ΔV)` (with `x ↦ cos`, `y ↦ −sin` sign convention) and shrink
/// the transverse magnitude by `e^(−γτ)`. `z` is untouched.
pub fn update_phi<F: Real>(
    v_m: F,
    s: F,
    delta_v: F,
    gamma: F,
    tau: F,
    initial: &BlochVector<F>,
) -> Result<BlochVector<F>> {
    check_update_inputs(s, delta_v, gamma, tau)?;
    let theta = s * v_m / (F::two() * delta_v);
    let (sin, cos) = theta.sin_cos();
    let decay = (-gamma * tau).exp();
    BlochVector::new(
        (initial.x() * cos + initial.y() * sin) * decay,
        (initial.y() * cos - initial.x() * sin) * decay,
        initial.z(),
    )
}

/// Infer the full quantum trajectory from one record: at each grid time the
/// cumulative integrated value is fed through the single-shot update with
/// the strength and dephasing accrued up to that time. Entry 0 is the
/// prepared state at τ = 0.
pub fn trajectory<F: Real>(
    record: &MeasurementRecord<F>,
    params: &PhysicalParams<F>,
    config: &MeasurementConfig<F>,
) -> Result<TrajectoryEstimate<F>> {
    if record.quadrature() != config.quadrature {
        return Err(Error::QuadratureMismatch {
            expected: config.quadrature,
            found: record.quadrature(),
        });
    }
    if (record.step() - config.step).abs() > config.step * real(1e-9) {
        return Err(Error::OffGrid(format!(
            "record step {} differs from config step {}",
            record.step(),
            config.step
        )));
    }
    params.validate()?;

    let gamma = dephasing_rate(params);
    let initial = config.initial_state;
    let n = record.len();
    let mut times = Vec::with_capacity(n + 1);
    let mut bloch = Vec::with_capacity(n + 1);
    times.push(F::zero());
    bloch.push(initial);
    for k in 0..n {
        let tau = record.time(k);
        let s = measurement_strength(params, tau)?;
        let v_m = record.integrated()[k];
        let state = match config.quadrature {
            Quadrature::Z => update_z(v_m, s, config.delta_v, gamma, tau, &initial)?,
            Quadrature::Phi => update_phi(v_m, s, config.delta_v, gamma, tau, &initial)?,
        };
        times.push(tau);
        bloch.push(state);
    }
    let purity = bloch.iter().map(|b| b.purity()).collect();
    Ok(TrajectoryEstimate {
        quadrature: config.quadrature,
        initial,
        gamma,
        times,
        bloch,
        purity,
    })
}

/// Run the Z filter two ways — single-shot on the cumulative record, and
/// stepwise on per-segment increments composed through the update — and
/// return the largest Bloch-component deviation. Gaussian likelihoods
/// multiply, so log-odds add and the two routes agree to floating-point
/// precision (contract: < 1e-10).
pub fn sequential_equivalence_check<F: Real>(
    record: &MeasurementRecord<F>,
    params: &PhysicalParams<F>,
    config: &MeasurementConfig<F>,
) -> Result<F> {
    if record.quadrature() != Quadrature::Z || config.quadrature != Quadrature::Z {
        return Err(Error::QuadratureMismatch {
            expected: Quadrature::Z,
            found: record.quadrature(),
        });
    }
    let single = trajectory(record, params, config)?;
    let gamma = dephasing_rate(params);
    let dt = record.step();
    let s_dt = measurement_strength(params, dt)?;

    let mut state = config.initial_state;
    let mut max_dev = F::zero();
    for (k, &v) in record.instantaneous().iter().enumerate() {
        state = update_z(v, s_dt, config.delta_v, gamma, dt, &state)?;
        let reference = &single.bloch[k + 1];
        let dev = (state.x() - reference.x())
            .abs()
            .max((state.y() - reference.y()).abs())
            .max((state.z() - reference.z()).abs());
        max_dev = max_dev.max(dev);
    }
    Ok(max_dev)
}

/// Adaptive Simpson integration of `g` against a normal density — doubles
/// the panel count until the estimate stabilizes.
fn gaussian_expectation<F: Real>(
    g: impl Fn(F) -> F,
    mean: F,
    sd: F,
    resolution: usize,
) -> Result<F> {
    if sd == F::zero() {
        return Ok(g(mean));
    }
    let half_width = real::<F>(10.0) * sd;
    let lo = mean - half_width;
    let hi = mean + half_width;
    let norm = (real::<F>(2.0 * std::f64::consts::PI)).sqrt() * sd;
    let density = |x: F| {
        let u = (x - mean) / sd;
        (-u * u * F::half()).exp()
    };

    let simpson = |n: usize| -> F {
        let h = (hi - lo) / real::<F>(n as f64);
        let mut acc = g(lo) * density(lo) + g(hi) * density(hi);
        for i in 1..n {
            let x = lo + h * real::<F>(i as f64);
            let w = if i % 2 == 1 { real::<F>(4.0) } else { F::two() };
            acc += w * g(x) * density(x);
        }
        acc * h / real::<F>(3.0) / norm
    };

    let mut n = resolution.max(8).next_power_of_two();
    let mut prev = simpson(n);
    for _ in 0..14 {
        n *= 2;
        let next = simpson(n);
        if (next - prev).abs() <= real::<F>(ORACLE_REL_TOL) * (F::one() + next.abs()) {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::IntegrationDiverged(format!(
        "no convergence after {n} panels"
    )))
}

/// Numerical oracle for the Z-mode conditional true state.
///
/// Under the generative model, the latent full-record mean `Ȳ` given a
/// detected value `V_m` and eigenstate `c` is normal with mean
/// `m_c + η(V_m − m_c)` and variance `(1−η)·ΔV²/S_full(τ)`. The oracle
/// integrates the pure-state quantities `tanh` and `sech` of the full
/// log-odds over that law, mixing eigenstates with their detected-record
/// posterior weights, and multiplies the transverse part by the
/// environmental factor `e^(−τ/T₂*)`. The prepared state is +x.
///
/// `E[z|V_m]` must equal `tanh(V_m·S/(2ΔV))` identically (the posterior
/// mean is a tower of conditional expectations); the transverse component
/// is what the closed-form update approximates, and callers compare the two
/// to measure that gap.
pub fn conditional_oracle<F: Real>(
    v_m: F,
    params: &PhysicalParams<F>,
    tau: F,
    delta_v: F,
    resolution: usize,
) -> Result<BlochVector<F>> {
    params.validate()?;
    if !(delta_v > F::zero()) {
        return Err(Error::InvalidParams(format!("delta_v {delta_v} must be > 0")));
    }
    if resolution < 2 {
        return Err(Error::IntegrationDiverged(format!(
            "resolution {resolution} too small"
        )));
    }
    let s_full = full_measurement_strength(params, tau)?;
    if !(s_full > F::zero()) {
        return Err(Error::InvalidParams(
            "zero full-record strength: conditional law undefined".into(),
        ));
    }
    let s_det = s_full * params.eta;
    let a = s_full / (F::two() * delta_v);

    let p_plus = (F::one() + clamp_log_odds(v_m * s_det / (F::two() * delta_v)).tanh()) * F::half();
    let cond_sd = ((F::one() - params.eta).max(F::zero()) * delta_v * delta_v / s_full).sqrt();

    let mut e_z = F::zero();
    let mut e_sech = F::zero();
    for (weight, sign) in [(p_plus, F::one()), (F::one() - p_plus, -F::one())] {
        let m_c = sign * delta_v * F::half();
        let mean = m_c + params.eta * (v_m - m_c);
        e_z += weight * gaussian_expectation(|y| (a * y).tanh(), mean, cond_sd, resolution)?;
        e_sech += weight
            * gaussian_expectation(|y| (a * y).cosh().recip(), mean, cond_sd, resolution)?;
    }

    let env = (-tau / params.t2_star).exp();
    BlochVector::new(e_sech * env, F::zero(), e_z)
}

/// Times at which a trajectory has returned to within `delta` of its
/// (dephasing-envelope-adjusted) initial state after having wandered more
/// than `2·delta` away — partial collapses that the subsequent record
/// undid. Reporting only; hysteresis prevents double-counting a single
/// return.
pub fn reversal_detector<F: Real>(traj: &TrajectoryEstimate<F>, delta: F) -> Vec<F> {
    let mut events = Vec::new();
    let mut armed = false;
    for (k, state) in traj.bloch.iter().enumerate().skip(1) {
        let decay = (-traj.gamma * traj.times[k]).exp();
        let reference = BlochVector::new(
            traj.initial.x() * decay,
            traj.initial.y() * decay,
            traj.initial.z(),
        )
        .expect("envelope stays inside the Bloch ball");
        let dist = state.distance(&reference);
        if dist > F::two() * delta {
            armed = true;
        } else if armed && dist < delta {
            events.push(traj.times[k]);
            armed = false;
        }
    }
    events
}

/// Largest per-step Bloch deviation between a filtered trajectory and the
/// simulator's true state — meaningful when the filter is exact (η = 1,
/// infinite T₂*).
pub fn max_deviation_from_truth<F: Real>(
    traj: &TrajectoryEstimate<F>,
    truth: &[BlochVector<F>],
) -> F {
    traj.bloch
        .iter()
        .skip(1)
        .zip(truth)
        .map(|(a, b)| {
            (a.x() - b.x())
                .abs()
                .max((a.y() - b.y()).abs())
                .max((a.z() - b.z()).abs())
        })
        .fold(F::zero(), F::max)
}

/// Comparison summary between two trajectories on the same grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisDeviation<F> {
    pub rms: F,
    pub max_abs: F,
}
