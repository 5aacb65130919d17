//! Built-in validation suite: eight statistical and exact criteria that the
//! simulator, filter, and reconstruction layers must satisfy together.
//!
//! `Scale::full()` runs the criteria at their contractual sample sizes and
//! thresholds; `Scale::quick()` is a reduced-scale smoke mode with loosened
//! statistics, marked as such in its output lines.

use std::f64::consts::TAU;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use weakmeas::calibration::{
    dephasing_rate, fit_eta, measurement_strength, strength_from_histograms,
};
use weakmeas::filter::{
    conditional_oracle, max_deviation_from_truth, sequential_equivalence_check, trajectory,
    update_z,
};
use weakmeas::model::{BlochVector, MeasurementConfig, PhysicalParams};
use weakmeas::simulator::{
    run_experiment, simulate_phi_record, simulate_z_record, substream_seed, ExperimentPlan,
    StreamRole,
};
use weakmeas::tomography::{compare, correlation_curves, reconstruct_trajectory};
use weakmeas::{MeasurementConfig64, PhysicalParams64, Quadrature, TomographyAxis};

pub const CRITERIA_COUNT: usize = 8;

const STEP: f64 = 16e-9;
const FULL_DURATION: f64 = 1.792e-6; // 112 steps
const READOUT_FIDELITY: f64 = 0.95;

/// Sample sizes and thresholds for one run of the suite.
#[derive(Debug, Clone)]
pub struct Scale {
    pub quick: bool,
    reps_tomography: usize,
    bins: usize,
    min_count: usize,
    reps_reconstruction_z: usize,
    reps_reconstruction_phi: usize,
    reconstruction_refs: usize,
    hist_samples: usize,
    martingale_samples: usize,
    decay_samples: usize,
    se_mult: f64,
    extreme_z: f64,
    rms_bound: f64,
    coverage_min: f64,
}

impl Scale {
    /// Contractual scale: every threshold as specified.
    pub fn full() -> Self {
        Self {
            quick: false,
            reps_tomography: 200_000,
            bins: 25,
            min_count: 200,
            reps_reconstruction_z: 336_000,
            reps_reconstruction_phi: 252_000,
            reconstruction_refs: 5,
            hist_samples: 20_000,
            martingale_samples: 100_000,
            decay_samples: 30_000,
            se_mult: 3.0,
            extreme_z: 0.9,
            rms_bound: 0.1,
            coverage_min: 0.5,
        }
    }

    /// Reduced-scale smoke mode; informational only.
    pub fn quick() -> Self {
        Self {
            quick: true,
            reps_tomography: 24_000,
            bins: 15,
            min_count: 60,
            reps_reconstruction_z: 50_400,
            reps_reconstruction_phi: 33_600,
            reconstruction_refs: 2,
            hist_samples: 4_000,
            martingale_samples: 10_000,
            decay_samples: 6_000,
            se_mult: 4.0,
            extreme_z: 0.8,
            rms_bound: 0.2,
            coverage_min: 0.3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CriterionResult {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    pub details: String,
    pub seconds: f64,
}

impl CriterionResult {
    pub fn line(&self, quick: bool) -> String {
        format!(
            "{} criterion {}{}: {} ({:.1}s) — {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            if quick { " [quick scale]" } else { "" },
            self.name,
            self.seconds,
            self.details
        )
    }
}

pub fn criterion_name(id: usize) -> &'static str {
    match id {
        1 => "z-record conditional tomography matches the closed-form update",
        2 => "phi-record conditional tomography matches the closed-form update",
        3 => "ensemble-reconstructed trajectories agree with single-record filtering",
        4 => "efficiency recovered from a histogram calibration sweep",
        5 => "conditional-mean oracle agrees with the closed-form update",
        6 => "exact identities: sequential filtering, dephasing-strength relation, lossless tracking",
        7 => "statistical properties: filter martingale, ensemble decay rate, purity bound",
        8 => "bit-identical datasets and reports across worker counts",
        _ => "unknown",
    }
}

pub fn run_criterion(id: usize, scale: &Scale, base_seed: u64) -> CriterionResult {
    let start = Instant::now();
    let (passed, details) = match id {
        1 => z_mode_tomography(scale, base_seed),
        2 => phi_mode_tomography(scale, base_seed),
        3 => reconstruction_agreement(scale, base_seed),
        4 => efficiency_sweep(scale, base_seed),
        5 => oracle_agreement(),
        6 => exact_identities(base_seed),
        7 => statistical_properties(scale, base_seed),
        8 => worker_determinism(base_seed),
        _ => (false, format!("criterion {id} does not exist")),
    };
    CriterionResult {
        id,
        name: criterion_name(id),
        passed,
        details,
        seconds: start.elapsed().as_secs_f64(),
    }
}

pub fn run_all(scale: &Scale, base_seed: u64, only: Option<&[usize]>) -> Vec<CriterionResult> {
    (1..=CRITERIA_COUNT)
        .filter(|id| only.map(|ids| ids.contains(id)).unwrap_or(true))
        .map(|id| run_criterion(id, scale, base_seed))
        .collect()
}

fn operating_params(nbar: f64) -> PhysicalParams64 {
    PhysicalParams::from_ordinary_frequencies(-0.49e6, 10.8e6, nbar, 0.49, 20e-6)
        .expect("operating-point parameters are valid")
}

fn base_config(quadrature: Quadrature, duration: f64) -> MeasurementConfig64 {
    MeasurementConfig::new(quadrature, duration, STEP, 1.0, BlochVector::plus_x())
        .expect("base configuration is valid")
}

fn single_duration_plan(reps: usize, duration: f64) -> ExperimentPlan<f64> {
    ExperimentPlan::new(
        reps,
        vec![duration],
        TomographyAxis::ALL.to_vec(),
        READOUT_FIDELITY,
        true,
    )
    .expect("plan is valid")
}

fn grid_plan(reps: usize, duration: f64) -> ExperimentPlan<f64> {
    let steps = (duration / STEP).round() as usize;
    ExperimentPlan::new(
        reps,
        (1..=steps).map(|i| i as f64 * STEP).collect(),
        TomographyAxis::ALL.to_vec(),
        READOUT_FIDELITY,
        true,
    )
    .expect("plan is valid")
}

/// Shared core of criteria 1 and 2: binned conditional tomography against
/// the closed-form curves.
struct TomographyCheck {
    qualifying: usize,
    matched: usize,
    extreme_low_z: f64,
    extreme_high_z: f64,
    z_flat_violations: usize,
}

fn binned_tomography_check(
    quadrature: Quadrature,
    nbar: f64,
    scale: &Scale,
    seed: u64,
) -> Result<TomographyCheck, String> {
    let params = operating_params(nbar);
    let config = base_config(quadrature, FULL_DURATION);
    let plan = single_duration_plan(scale.reps_tomography, FULL_DURATION);
    let ds = run_experiment(&plan, &params, &config, seed).map_err(|e| e.to_string())?;
    let table = correlation_curves(&ds, scale.bins, READOUT_FIDELITY).map_err(|e| e.to_string())?;

    let mut check = TomographyCheck {
        qualifying: 0,
        matched: 0,
        extreme_low_z: f64::NAN,
        extreme_high_z: f64::NAN,
        z_flat_violations: 0,
    };
    let mut low_center = f64::INFINITY;
    let mut high_center = f64::NEG_INFINITY;
    for bin in &table.bins {
        if bin.counts.iter().any(|&c| c < scale.min_count) {
            continue;
        }
        check.qualifying += 1;
        let mut all_match = true;
        for axis in TomographyAxis::ALL {
            let est = bin.empirical[axis.index()].expect("qualifying bin has data");
            let th = bin.theory.component(axis);
            // in φ mode the z criterion is flatness, handled separately
            if quadrature == Quadrature::Phi && axis == TomographyAxis::Z {
                if est.mean.abs() >= scale.se_mult * est.std_err {
                    check.z_flat_violations += 1;
                }
                continue;
            }
            if (est.mean - th).abs() > scale.se_mult * est.std_err {
                all_match = false;
            }
        }
        if all_match {
            check.matched += 1;
        }
        let z_est = bin.empirical[TomographyAxis::Z.index()]
            .expect("qualifying bin has data")
            .mean;
        if bin.center < low_center {
            low_center = bin.center;
            check.extreme_low_z = z_est;
        }
        if bin.center > high_center {
            high_center = bin.center;
            check.extreme_high_z = z_est;
        }
    }
    Ok(check)
}

fn z_mode_tomography(scale: &Scale, base_seed: u64) -> (bool, String) {
    let check = match binned_tomography_check(Quadrature::Z, 0.4, scale, base_seed ^ 0xA1) {
        Ok(c) => c,
        Err(e) => return (false, e),
    };
    if check.qualifying < 5 {
        return (
            false,
            format!("only {} qualifying bins", check.qualifying),
        );
    }
    let fraction = check.matched as f64 / check.qualifying as f64;
    let extremes_ok =
        check.extreme_high_z > scale.extreme_z && check.extreme_low_z < -scale.extreme_z;
    let passed = fraction >= 0.95 && extremes_ok;
    (
        passed,
        format!(
            "{}/{} qualifying bins within {}·SE ({:.1}%); extreme-bin z = {:.3}/{:.3} (need |z| > {})",
            check.matched,
            check.qualifying,
            scale.se_mult,
            100.0 * fraction,
            check.extreme_low_z,
            check.extreme_high_z,
            scale.extreme_z
        ),
    )
}

fn phi_mode_tomography(scale: &Scale, base_seed: u64) -> (bool, String) {
    let check = match binned_tomography_check(Quadrature::Phi, 0.46, scale, base_seed ^ 0xA2) {
        Ok(c) => c,
        Err(e) => return (false, e),
    };
    if check.qualifying < 5 {
        return (
            false,
            format!("only {} qualifying bins", check.qualifying),
        );
    }
    let fraction = check.matched as f64 / check.qualifying as f64;
    let passed = fraction >= 0.95 && check.z_flat_violations == 0;
    (
        passed,
        format!(
            "{}/{} qualifying bins within {}·SE on x/y ({:.1}%); z flat in all but {} bins",
            check.matched,
            check.qualifying,
            scale.se_mult,
            100.0 * fraction,
            check.z_flat_violations
        ),
    )
}

fn reconstruction_agreement(scale: &Scale, base_seed: u64) -> (bool, String) {
    let mut lines = Vec::new();
    let mut all_ok = true;

    let mut run_mode = |quadrature: Quadrature,
                        reps: usize,
                        n_refs: usize,
                        seed: u64|
     -> Result<(), String> {
        let params = operating_params(0.4);
        let config = base_config(quadrature, FULL_DURATION);
        let plan = grid_plan(reps, FULL_DURATION);
        let ds = run_experiment(&plan, &params, &config, seed).map_err(|e| e.to_string())?;

        for r in 0..n_refs {
            let ref_seed = substream_seed(seed ^ 0x5EED, r as u64, StreamRole::Record);
            let (record, _) = match quadrature {
                Quadrature::Z => simulate_z_record(&params, &config, ref_seed),
                Quadrature::Phi => simulate_phi_record(&params, &config, ref_seed),
            }
            .map_err(|e| e.to_string())?;
            let traj = trajectory(&record, &params, &config).map_err(|e| e.to_string())?;
            let recon =
                reconstruct_trajectory(&ds, &record, None, scale.min_count, READOUT_FIDELITY)
                    .map_err(|e| e.to_string())?;
            let ok_points = recon.points.iter().filter(|p| p.ok).count();
            let coverage = ok_points as f64 / recon.points.len() as f64;
            let report = compare(&traj, &recon).map_err(|e| e.to_string())?;
            let rms = report.max_rms();
            let mode_ok = coverage >= scale.coverage_min
                && ok_points >= 30.min(recon.points.len())
                && rms < scale.rms_bound;
            all_ok &= mode_ok;
            lines.push(format!(
                "{}-ref {} ({}): coverage {}/{} pts, max rms {:.3}",
                match quadrature {
                    Quadrature::Z => "z",
                    Quadrature::Phi => "phi",
                },
                r,
                if mode_ok { "ok" } else { "FAIL" },
                ok_points,
                recon.points.len(),
                rms
            ));
        }
        Ok(())
    };

    if let Err(e) = run_mode(
        Quadrature::Z,
        scale.reps_reconstruction_z,
        scale.reconstruction_refs,
        base_seed ^ 0xA3,
    ) {
        return (false, e);
    }
    if let Err(e) = run_mode(
        Quadrature::Phi,
        scale.reps_reconstruction_phi,
        1,
        base_seed ^ 0xA4,
    ) {
        return (false, e);
    }
    (all_ok, lines.join("; "))
}

fn efficiency_sweep(scale: &Scale, base_seed: u64) -> (bool, String) {
    let chi = TAU * -0.49e6;
    let kappa = TAU * 10.8e6;
    let nbars = [0.1, 0.2, 0.3, 0.4, 0.46];
    let mut points = Vec::with_capacity(nbars.len());

    for (idx, &nbar) in nbars.iter().enumerate() {
        let params = operating_params(nbar);
        let collect = |initial: BlochVector<f64>, salt: u64| -> Result<Vec<f64>, String> {
            let config = MeasurementConfig::new(
                Quadrature::Z,
                FULL_DURATION,
                STEP,
                1.0,
                initial,
            )
            .map_err(|e| e.to_string())?;
            (0..scale.hist_samples)
                .map(|i| {
                    let seed = substream_seed(
                        base_seed ^ 0xA5 ^ ((idx as u64) << 8) ^ salt,
                        i as u64,
                        StreamRole::Record,
                    );
                    simulate_z_record(&params, &config, seed)
                        .map(|(record, _)| record.final_integrated().expect("non-empty"))
                        .map_err(|e| e.to_string())
                })
                .collect()
        };
        let upper = match collect(BlochVector::plus_z(), 0x10000) {
            Ok(v) => v,
            Err(e) => return (false, e),
        };
        let lower = match collect(BlochVector::minus_z(), 0x20000) {
            Ok(v) => v,
            Err(e) => return (false, e),
        };

        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let m_up = mean(&upper);
        let m_lo = mean(&lower);
        let pooled_var = (variance(&upper, m_up) * (upper.len() - 1) as f64
            + variance(&lower, m_lo) * (lower.len() - 1) as f64)
            / ((upper.len() + lower.len() - 2) as f64);
        let delta_v_est = m_up - m_lo;
        let s = match strength_from_histograms(delta_v_est, pooled_var.sqrt()) {
            Ok(s) => s,
            Err(e) => return (false, e.to_string()),
        };
        points.push((nbar, s));
    }

    let fit = match fit_eta(&points, FULL_DURATION, chi, kappa) {
        Ok(f) => f,
        Err(e) => return (false, e.to_string()),
    };
    let slope_expected = 64.0 * FULL_DURATION * chi * chi * 0.49 / kappa;
    let eta_err = (fit.eta - 0.49).abs();
    let slope_err = (fit.slope / slope_expected - 1.0).abs();
    let eta_tol = if scale.quick { 0.05 } else { 0.02 };
    let slope_tol = if scale.quick { 0.05 } else { 0.02 };
    (
        eta_err <= eta_tol && slope_err <= slope_tol,
        format!(
            "fitted eta {:.4} (true 0.49, |err| {:.4} ≤ {eta_tol}); slope off by {:.2}% (≤ {:.0}%)",
            fit.eta,
            eta_err,
            100.0 * slope_err,
            100.0 * slope_tol
        ),
    )
}

fn variance(v: &[f64], mean: f64) -> f64 {
    v.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / (v.len() - 1) as f64
}

fn oracle_agreement() -> (bool, String) {
    let params = operating_params(0.4);
    let delta_v = 1.0;

    // z: exact tower identity at the contractual probe points
    let tau = FULL_DURATION;
    let s_det = measurement_strength(&params, tau).expect("valid");
    let mut max_z_gap: f64 = 0.0;
    for v in [0.0, 0.5, -0.5, 1.0, -1.0] {
        let oracle = match conditional_oracle(v, &params, tau, delta_v, 512) {
            Ok(o) => o,
            Err(e) => return (false, e.to_string()),
        };
        max_z_gap = max_z_gap.max((oracle.z() - (v * s_det / (2.0 * delta_v)).tanh()).abs());
    }

    // x: compare to the closed form over durations with S ≤ 4
    let gamma = dephasing_rate(&params);
    let mut max_x_gap: f64 = 0.0;
    for tau in [0.448e-6, 0.896e-6, 1.344e-6, 1.792e-6, 2.24e-6] {
        let s = measurement_strength(&params, tau).expect("valid");
        assert!(s <= 4.0, "probe duration exceeds the S ≤ 4 regime");
        let mut v = -2.0;
        while v <= 2.0 + 1e-12 {
            let oracle = match conditional_oracle(v, &params, tau, delta_v, 512) {
                Ok(o) => o,
                Err(e) => return (false, e.to_string()),
            };
            let z = (v * s / (2.0 * delta_v)).tanh();
            let closed = (1.0 - z * z).sqrt() * (-gamma * tau).exp();
            max_x_gap = max_x_gap.max((oracle.x() - closed).abs());
            v += 0.25;
        }
    }

    (
        max_z_gap <= 1e-6 && max_x_gap < 0.02,
        format!(
            "max |E[z|V]−tanh| = {max_z_gap:.2e} (≤ 1e-6); max transverse gap {max_x_gap:.2e} (< 0.02)"
        ),
    )
}

fn exact_identities(base_seed: u64) -> (bool, String) {
    let params = operating_params(0.4);
    let config = base_config(Quadrature::Z, FULL_DURATION);

    // (a) single-shot vs stepwise filtering on 100 records
    let mut max_seq: f64 = 0.0;
    for i in 0..100 {
        let seed = substream_seed(base_seed ^ 0xA6, i, StreamRole::Record);
        let (record, _) = match simulate_z_record(&params, &config, seed) {
            Ok(r) => r,
            Err(e) => return (false, e.to_string()),
        };
        match sequential_equivalence_check(&record, &params, &config) {
            Ok(dev) => max_seq = max_seq.max(dev),
            Err(e) => return (false, e.to_string()),
        }
    }

    // (b) γτ = S(1−η)/(8η) at infinite T₂*, randomized parameters
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed ^ 0xB6);
    let mut max_rel: f64 = 0.0;
    for _ in 0..1000 {
        let chi = TAU * 1e6 * (rng.gen_range(0.05..5.0) * if rng.gen::<bool>() { 1.0 } else { -1.0 });
        let kappa = TAU * 1e6 * rng.gen_range(0.5..50.0);
        let nbar = rng.gen_range(0.0..10.0);
        let eta = rng.gen_range(0.01..1.0);
        let tau = rng.gen_range(0.0..10.0) * 1e-6;
        let p = PhysicalParams::new(chi, kappa, nbar, eta, f64::INFINITY).expect("valid draw");
        let lhs = dephasing_rate(&p) * tau;
        let s = measurement_strength(&p, tau).expect("valid draw");
        let rhs = s * (1.0 - eta) / (8.0 * eta);
        let rel = (lhs - rhs).abs() / lhs.abs().max(1e-300);
        if lhs != 0.0 || rhs != 0.0 {
            max_rel = max_rel.max(rel);
        }
    }

    // (c) lossless tracking at η = 1, infinite T₂*
    let lossless =
        PhysicalParams::from_ordinary_frequencies(-0.49e6, 10.8e6, 0.4, 1.0, f64::INFINITY)
            .expect("valid");
    let mut max_track: f64 = 0.0;
    for i in 0..50 {
        let seed = substream_seed(base_seed ^ 0xC6, i, StreamRole::Record);
        let (record, trace) = match simulate_z_record(&lossless, &config, seed) {
            Ok(r) => r,
            Err(e) => return (false, e.to_string()),
        };
        let traj = match trajectory(&record, &lossless, &config) {
            Ok(t) => t,
            Err(e) => return (false, e.to_string()),
        };
        max_track = max_track.max(max_deviation_from_truth(&traj, &trace.bloch));
    }

    (
        max_seq < 1e-10 && max_rel <= 1e-12 && max_track < 1e-12,
        format!(
            "sequential dev {max_seq:.2e} (< 1e-10); identity rel dev {max_rel:.2e} (≤ 1e-12); lossless tracking dev {max_track:.2e} (< 1e-12)"
        ),
    )
}

fn statistical_properties(scale: &Scale, base_seed: u64) -> (bool, String) {
    let params = operating_params(0.4);
    let config = base_config(Quadrature::Z, FULL_DURATION);
    let delta_v = config.delta_v;
    let gamma = dephasing_rate(&params);
    let n = scale.martingale_samples;
    let steps = config.steps();
    let probe: Vec<usize> = (1..=10).map(|i| i * steps / 10 - 1).collect();

    // filter martingale: E[z(τ)] = z₀ = 0 within 3·SE at 10 time points;
    // purity bound enforced on everything we touch
    let mut sums = vec![0.0; probe.len()];
    let mut sumsq = vec![0.0; probe.len()];
    let mut max_purity: f64 = 0.0;
    for i in 0..n {
        let seed = substream_seed(base_seed ^ 0xA7, i as u64, StreamRole::Record);
        let (record, trace) = match simulate_z_record(&params, &config, seed) {
            Ok(r) => r,
            Err(e) => return (false, e.to_string()),
        };
        for state in &trace.bloch {
            max_purity = max_purity.max(state.purity());
        }
        for (j, &k) in probe.iter().enumerate() {
            let tau = record.time(k);
            let s = measurement_strength(&params, tau).expect("valid");
            let state = match update_z(
                record.integrated()[k],
                s,
                delta_v,
                gamma,
                tau,
                &config.initial_state,
            ) {
                Ok(st) => st,
                Err(e) => return (false, e.to_string()),
            };
            max_purity = max_purity.max(state.purity());
            sums[j] += state.z();
            sumsq[j] += state.z() * state.z();
        }
    }
    let mut max_pull: f64 = 0.0;
    for j in 0..probe.len() {
        let mean = sums[j] / n as f64;
        let var = (sumsq[j] / n as f64 - mean * mean).max(1e-300);
        let se = (var / n as f64).sqrt();
        max_pull = max_pull.max(mean.abs() / se);
    }
    let martingale_ok = max_pull < 3.0;

    // unconditioned φ-mode coherence decay: fit rate against 8χ²n̄/κ + 1/T₂*
    let phi_config = base_config(Quadrature::Phi, FULL_DURATION);
    let m = scale.decay_samples;
    let mut x_mean = vec![0.0; steps];
    for i in 0..m {
        let seed = substream_seed(base_seed ^ 0xB7, i as u64, StreamRole::Record);
        let (_, trace) = match simulate_phi_record(&params, &phi_config, seed) {
            Ok(r) => r,
            Err(e) => return (false, e.to_string()),
        };
        for (k, state) in trace.bloch.iter().enumerate() {
            x_mean[k] += state.x();
            max_purity = max_purity.max(state.purity());
        }
    }
    for v in &mut x_mean {
        *v /= m as f64;
    }
    // least squares of ln(x̄) vs τ over the usable range
    let mut sx = 0.0;
    let mut sy = 0.0;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut count = 0.0;
    for (k, &x) in x_mean.iter().enumerate() {
        if x <= 0.05 {
            continue;
        }
        let t = (k + 1) as f64 * STEP;
        let y = x.ln();
        sx += t;
        sy += y;
        sxx += t * t;
        sxy += t * y;
        count += 1.0;
    }
    let rate = -(count * sxy - sx * sy) / (count * sxx - sx * sx);
    let expected_rate = 8.0 * params.chi * params.chi * params.nbar / params.kappa
        + 1.0 / params.t2_star;
    let rate_err = (rate / expected_rate - 1.0).abs();
    let rate_ok = rate_err < 0.05;

    let purity_ok = max_purity <= 1.0 + 1e-9;

    (
        martingale_ok && rate_ok && purity_ok,
        format!(
            "martingale max |mean|/SE = {max_pull:.2} (< 3); decay rate off by {:.2}% (< 5%); max purity − 1 = {:.2e} (≤ 1e-9)",
            100.0 * rate_err,
            max_purity - 1.0
        ),
    )
}

fn worker_determinism(base_seed: u64) -> (bool, String) {
    let params = operating_params(0.4);
    let duration = 0.512e-6; // 32 grid points
    let config = base_config(Quadrature::Z, duration);
    let plan = grid_plan(3_000, duration);

    let build = || -> Result<(Vec<u8>, Vec<u8>), String> {
        let ds = run_experiment(&plan, &params, &config, base_seed ^ 0xA8)
            .map_err(|e| e.to_string())?;
        let (record, _) = simulate_z_record(&params, &config, base_seed ^ 0xB8)
            .map_err(|e| e.to_string())?;
        let traj = trajectory(&record, &params, &config).map_err(|e| e.to_string())?;
        let recon = reconstruct_trajectory(&ds, &record, None, 20, READOUT_FIDELITY)
            .map_err(|e| e.to_string())?;
        let report = compare(&traj, &recon).map_err(|e| e.to_string())?;
        Ok((
            serde_json::to_vec(&ds).expect("dataset serializes"),
            serde_json::to_vec(&report).expect("report serializes"),
        ))
    };

    let run_in_pool = |threads: usize| -> Result<(Vec<u8>, Vec<u8>), String> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| e.to_string())?;
        pool.install(build)
    };

    let single = match run_in_pool(1) {
        Ok(v) => v,
        Err(e) => return (false, e),
    };
    let multi = match run_in_pool(4) {
        Ok(v) => v,
        Err(e) => return (false, e),
    };
    let repeat = match run_in_pool(4) {
        Ok(v) => v,
        Err(e) => return (false, e),
    };

    let identical = single == multi && multi == repeat;
    (
        identical,
        format!(
            "dataset bytes {} and report bytes {} across 1/4/4-worker runs",
            if single.0 == multi.0 && multi.0 == repeat.0 {
                "identical"
            } else {
                "DIFFER"
            },
            if single.1 == multi.1 && multi.1 == repeat.1 {
                "identical"
            } else {
                "DIFFER"
            }
        ),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    // Full-scale runs live in the dedicated acceptance suite; here we keep
    // the cheap exact criteria as ordinary unit coverage.
    #[test]
    fn oracle_and_identities_pass_at_any_scale() {
        let r5 = run_criterion(5, &Scale::quick(), 7);
        assert!(r5.passed, "{}", r5.details);
        let r6 = run_criterion(6, &Scale::quick(), 7);
        assert!(r6.passed, "{}", r6.details);
    }

    #[test]
    fn criterion_names_are_stable() {
        for id in 1..=CRITERIA_COUNT {
            assert_ne!(criterion_name(id), "unknown");
        }
    }
}
