//! Ensemble-side validation: conditional tomographic averages binned by
//! integrated record value, correlation curves against the closed-form
//! updates, and full trajectory reconstruction by record matching.
//!
//! Binning and averaging are pure reductions over immutable datasets;
//! per-axis means combine associatively by count weighting, so any parallel
//! merge order gives the same result.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::calibration::{dephasing_rate, measurement_strength};
use crate::error::{Error, Result};
use crate::filter::{update_phi, update_z};
use crate::model::{
    BlochVector, EnsembleDataset, MeasurementRecord, Quadrature, TomographyAxis,
    TrajectoryEstimate,
};
use crate::scalar::{real, Real};

/// Default minimum per-axis count for a reconstruction point to be trusted.
pub const DEFAULT_MIN_COUNT: usize = 200;

/// Initial matching half-width as a fraction of the record spread at τ.
pub const DEFAULT_EPSILON_FRACTION: f64 = 0.1;

/// Adaptive widening multiplies the initial window by at most this factor.
pub const MAX_EPSILON_WIDENING: f64 = 4.0;

/// Tomography outcomes matched by one record-value window, split by axis.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MatchedSubset {
    by_axis: [Vec<i8>; 3],
}

impl MatchedSubset {
    pub fn push(&mut self, axis: TomographyAxis, result: i8) {
        self.by_axis[axis.index()].push(result);
    }

    pub fn outcomes(&self, axis: TomographyAxis) -> &[i8] {
        &self.by_axis[axis.index()]
    }

    pub fn count(&self, axis: TomographyAxis) -> usize {
        self.by_axis[axis.index()].len()
    }

    pub fn min_axis_count(&self) -> usize {
        self.by_axis.iter().map(Vec::len).min().unwrap_or(0)
    }

    pub fn total(&self) -> usize {
        self.by_axis.iter().map(Vec::len).sum()
    }
}

/// Fidelity-corrected mean of one axis partition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisEstimate<F> {
    pub mean: F,
    pub std_err: F,
    pub count: usize,
}

/// Fidelity-corrected conditional means for all three axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionalMeans<F> {
    pub by_axis: [AxisEstimate<F>; 3],
}

impl<F: Real> ConditionalMeans<F> {
    pub fn axis(&self, axis: TomographyAxis) -> &AxisEstimate<F> {
        &self.by_axis[axis.index()]
    }

    pub fn mean_vector(&self) -> (F, F, F) {
        (
            self.by_axis[0].mean,
            self.by_axis[1].mean,
            self.by_axis[2].mean,
        )
    }
}

fn axis_estimate<F: Real>(outcomes: &[i8], correction: F) -> AxisEstimate<F> {
    let n = outcomes.len();
    let sum: i64 = outcomes.iter().map(|&r| r as i64).sum();
    let raw = real::<F>(sum as f64) / real::<F>(n as f64);
    // SE of a ±1 mean before correction: √((1−m²)/N)
    let se_raw = ((F::one() - raw * raw).max(F::zero()) / real::<F>(n as f64)).sqrt();
    AxisEstimate {
        mean: raw / correction,
        std_err: se_raw / correction,
        count: n,
    }
}

fn check_fidelity<F: Real>(readout_fidelity: F) -> Result<F> {
    if !(readout_fidelity > F::half() && readout_fidelity <= F::one()) {
        return Err(Error::InvalidParams(format!(
            "readout fidelity {readout_fidelity} must lie in (0.5, 1]"
        )));
    }
    Ok(F::two() * readout_fidelity - F::one())
}

/// Select every repetition whose record was measured for `tau` and whose
/// integrated value at `tau` lies within `±epsilon` of `target_v`,
/// partitioned by tomography axis.
///
/// In a mixed-duration dataset only repetitions whose tomography pulse fired
/// at `tau` carry usable outcomes for that time, so the duration must match
/// as well as the record value.
pub fn bin_records<F: Real>(
    dataset: &EnsembleDataset<F>,
    tau: F,
    target_v: F,
    epsilon: F,
) -> Result<MatchedSubset> {
    let step = dataset.config().step;
    let index = grid_index(tau, step)?;
    let mut subset = MatchedSubset::default();
    for (record, outcome) in dataset.entries() {
        if record.len() != index + 1 {
            continue;
        }
        let v = record.integrated()[index];
        if (v - target_v).abs() <= epsilon {
            subset.push(outcome.axis, outcome.result);
        }
    }
    Ok(subset)
}

fn grid_index<F: Real>(tau: F, step: F) -> Result<usize> {
    let ratio = tau / step;
    let rounded = ratio.round();
    if (ratio - rounded).abs() > real::<F>(1e-9) * (rounded.abs() + F::one()) || rounded < F::one()
    {
        return Err(Error::OffGrid(format!(
            "tau {tau} is not a positive multiple of step {step}"
        )));
    }
    let k = rounded
        .to_usize()
        .ok_or_else(|| Error::OffGrid(format!("tau {tau} out of range")))?;
    Ok(k - 1)
}

/// Average the matched ±1 outcomes per axis and invert the readout bit-flip
/// channel: means and standard errors are divided by `2F − 1`.
pub fn conditional_tomography<F: Real>(
    subset: &MatchedSubset,
    readout_fidelity: F,
) -> Result<ConditionalMeans<F>> {
    let correction = check_fidelity(readout_fidelity)?;
    let mut by_axis = Vec::with_capacity(3);
    for axis in TomographyAxis::ALL {
        let outcomes = subset.outcomes(axis);
        if outcomes.is_empty() {
            return Err(Error::EmptyBin(format!("no outcomes on axis {axis:?}")));
        }
        if outcomes.len() < DEFAULT_MIN_COUNT {
            log::warn!(
                "axis {axis:?} has only {} outcomes; conditional mean is noisy",
                outcomes.len()
            );
        }
        by_axis.push(axis_estimate(outcomes, correction));
    }
    Ok(ConditionalMeans {
        by_axis: [by_axis[0], by_axis[1], by_axis[2]],
    })
}

/// One bin of a correlation table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationBin<F> {
    pub center: F,
    pub counts: [usize; 3],
    /// Corrected conditional means, present per axis when the bin has data.
    pub empirical: [Option<AxisEstimate<F>>; 3],
    /// Closed-form update evaluated at the bin center.
    pub theory: BlochVector<F>,
}

/// Conditional tomography vs integrated record value at a single duration,
/// with the closed-form curves alongside for overlay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationTable<F> {
    pub tau: F,
    pub s: F,
    pub gamma: F,
    pub bins: Vec<CorrelationBin<F>>,
}

/// Bin the dataset's integrated record values into `n_bins` equal-width
/// bins, average tomography outcomes per bin and axis, and evaluate the
/// closed-form update at each bin center.
pub fn correlation_curves<F: Real>(
    dataset: &EnsembleDataset<F>,
    n_bins: usize,
    readout_fidelity: F,
) -> Result<CorrelationTable<F>> {
    if n_bins < 3 {
        return Err(Error::InvalidConfig(format!(
            "n_bins = {n_bins} must be at least 3"
        )));
    }
    let correction = check_fidelity(readout_fidelity)?;
    if dataset.is_empty() {
        return Err(Error::InvalidConfig("empty dataset".into()));
    }

    let lens: Vec<usize> = dataset.entries().iter().map(|(r, _)| r.len()).collect();
    let common = lens[0];
    if common == 0 || lens.iter().any(|&l| l != common) {
        return Err(Error::InvalidConfig(
            "correlation curves need a single-duration dataset".into(),
        ));
    }

    let values: Vec<F> = dataset
        .entries()
        .iter()
        .map(|(r, _)| r.final_integrated().expect("non-empty record"))
        .collect();
    let mut lo = values[0];
    let mut hi = values[0];
    for &v in &values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !(hi > lo) {
        return Err(Error::InvalidConfig(
            "record values are all identical; nothing to bin".into(),
        ));
    }
    let width = (hi - lo) / real::<F>(n_bins as f64);

    let mut sums = vec![[0i64; 3]; n_bins];
    let mut counts = vec![[0usize; 3]; n_bins];
    for (&v, (_, outcome)) in values.iter().zip(dataset.entries()) {
        let mut idx = ((v - lo) / width)
            .floor()
            .to_usize()
            .unwrap_or(n_bins - 1);
        if idx >= n_bins {
            idx = n_bins - 1; // the maximum lands in the last bin
        }
        sums[idx][outcome.axis.index()] += outcome.result as i64;
        counts[idx][outcome.axis.index()] += 1;
    }

    let params = dataset.params();
    let config = dataset.config();
    let tau = real::<F>(common as f64) * config.step;
    let s = measurement_strength(params, tau)?;
    let gamma = dephasing_rate(params);

    let mut bins = Vec::with_capacity(n_bins);
    for b in 0..n_bins {
        let center = lo + width * (real::<F>(b as f64) + F::half());
        let mut empirical = [None; 3];
        for (a, slot) in empirical.iter_mut().enumerate() {
            let n = counts[b][a];
            if n > 0 {
                let raw = real::<F>(sums[b][a] as f64) / real::<F>(n as f64);
                let se_raw = ((F::one() - raw * raw).max(F::zero()) / real::<F>(n as f64)).sqrt();
                *slot = Some(AxisEstimate {
                    mean: raw / correction,
                    std_err: se_raw / correction,
                    count: n,
                });
            }
        }
        let theory = match config.quadrature {
            Quadrature::Z => update_z(center, s, config.delta_v, gamma, tau, &config.initial_state)?,
            Quadrature::Phi => {
                update_phi(center, s, config.delta_v, gamma, tau, &config.initial_state)?
            }
        };
        bins.push(CorrelationBin {
            center,
            counts: counts[b],
            empirical,
            theory,
        });
    }

    Ok(CorrelationTable { tau, s, gamma, bins })
}

/// One reconstructed time point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionPoint<F> {
    pub tau: F,
    /// Record value of the reference trajectory at this time.
    pub target_v: F,
    /// Matching half-width actually used (after any adaptive widening).
    pub epsilon: F,
    pub counts: [usize; 3],
    /// Conditional means when every axis matched at least one outcome.
    pub estimate: Option<ConditionalMeans<F>>,
    /// True when every axis reached the requested minimum count.
    pub ok: bool,
}

/// Ensemble reconstruction of one reference trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructedTrajectory<F> {
    pub reference_seed: u64,
    pub min_count: usize,
    pub points: Vec<ReconstructionPoint<F>>,
}

impl<F: Real> ReconstructedTrajectory<F> {
    pub fn ok_points(&self) -> impl Iterator<Item = &ReconstructionPoint<F>> {
        self.points.iter().filter(|p| p.ok)
    }
}

/// Reconstruct the trajectory of `reference` from the ensemble: at each grid
/// time, match repetitions measured for that duration whose record value
/// lies within `±ε` of the reference value, and average their tomography
/// outcomes.
///
/// With `epsilon = None` the window starts at 0.1 of the record spread at
/// that time and doubles (at most twice) until every axis reaches
/// `min_count`; the window actually used is recorded per point. Points that
/// still miss `min_count` are emitted with `ok = false`.
pub fn reconstruct_trajectory<F: Real>(
    dataset: &EnsembleDataset<F>,
    reference: &MeasurementRecord<F>,
    epsilon: Option<F>,
    min_count: usize,
    readout_fidelity: F,
) -> Result<ReconstructedTrajectory<F>> {
    check_fidelity(readout_fidelity)?;
    let config = dataset.config();
    if reference.quadrature() != config.quadrature {
        return Err(Error::QuadratureMismatch {
            expected: config.quadrature,
            found: reference.quadrature(),
        });
    }
    if (reference.step() - config.step).abs() > config.step * real(1e-9) {
        return Err(Error::OffGrid(format!(
            "reference step {} differs from dataset step {}",
            reference.step(),
            config.step
        )));
    }
    if min_count == 0 {
        return Err(Error::InvalidConfig("min_count must be ≥ 1".into()));
    }

    // Index the dataset by duration once; every grid time then only scans
    // its own candidates.
    let mut by_len: HashMap<usize, Vec<usize>> = HashMap::new();
    for (i, (record, _)) in dataset.entries().iter().enumerate() {
        by_len.entry(record.len()).or_default().push(i);
    }

    let mut points = Vec::with_capacity(reference.len());
    for k in 0..reference.len() {
        let tau = reference.time(k);
        let target = reference.integrated()[k];
        let candidates = by_len.get(&(k + 1)).map(Vec::as_slice).unwrap_or(&[]);

        let values: Vec<F> = candidates
            .iter()
            .map(|&i| dataset.entries()[i].0.integrated()[k])
            .collect();

        let base_epsilon = match epsilon {
            Some(e) => e,
            None => real::<F>(DEFAULT_EPSILON_FRACTION) * spread(&values),
        };

        let max_eps = base_epsilon * real::<F>(MAX_EPSILON_WIDENING);
        let mut eps = base_epsilon;
        let subset = loop {
            let mut subset = MatchedSubset::default();
            for (&i, &v) in candidates.iter().zip(&values) {
                if (v - target).abs() <= eps {
                    let outcome = &dataset.entries()[i].1;
                    subset.push(outcome.axis, outcome.result);
                }
            }
            if subset.min_axis_count() >= min_count || epsilon.is_some() {
                break subset;
            }
            let wider = eps * F::two();
            // `!(wider > eps)` stops a degenerate window (no spread, no
            // candidates) from doubling in place forever.
            if !(wider > eps) || wider > max_eps * (F::one() + real(1e-12)) {
                break subset;
            }
            eps = wider;
        };

        let ok = subset.min_axis_count() >= min_count;
        let estimate = if subset.min_axis_count() > 0 {
            Some(conditional_tomography(&subset, readout_fidelity)?)
        } else {
            None
        };
        points.push(ReconstructionPoint {
            tau,
            target_v: target,
            epsilon: eps,
            counts: [
                subset.count(TomographyAxis::X),
                subset.count(TomographyAxis::Y),
                subset.count(TomographyAxis::Z),
            ],
            estimate,
            ok,
        });
    }

    if !points.iter().any(|p| p.ok) {
        return Err(Error::Starved(format!(
            "no time point reached {min_count} matched outcomes per axis"
        )));
    }
    Ok(ReconstructedTrajectory {
        reference_seed: reference.seed(),
        min_count,
        points,
    })
}

fn spread<F: Real>(values: &[F]) -> F {
    if values.len() < 2 {
        return F::zero();
    }
    let n = real::<F>(values.len() as f64);
    let mean = values.iter().copied().sum::<F>() / n;
    let var = values
        .iter()
        .map(|&v| (v - mean) * (v - mean))
        .sum::<F>()
        / (n - F::one());
    var.max(F::zero()).sqrt()
}

/// Per-axis deviation statistics between a filter trajectory and its
/// ensemble reconstruction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisComparison<F> {
    pub rms: F,
    pub max_abs: F,
    /// Mean of `(deviation/SE)²`; near 1 when deviations are statistical.
    pub chi2_reduced: F,
}

/// Comparison report over the trusted (ok-flagged) reconstruction points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport<F> {
    pub points_compared: usize,
    pub by_axis: [AxisComparison<F>; 3],
}

impl<F: Real> ComparisonReport<F> {
    pub fn max_rms(&self) -> F {
        self.by_axis
            .iter()
            .map(|a| a.rms)
            .fold(F::zero(), F::max)
    }
}

/// Compare a filter trajectory against an ensemble reconstruction on the
/// same grid. Deviations are accumulated only over `ok` points.
pub fn compare<F: Real>(
    filter_traj: &TrajectoryEstimate<F>,
    reconstruction: &ReconstructedTrajectory<F>,
) -> Result<ComparisonReport<F>> {
    if filter_traj.bloch.len() != reconstruction.points.len() + 1 {
        return Err(Error::InvalidConfig(format!(
            "grid mismatch: filter has {} states for {} reconstruction points",
            filter_traj.bloch.len(),
            reconstruction.points.len()
        )));
    }
    let tol = real::<F>(1e-9);
    let mut sums = [F::zero(); 3];
    let mut maxes = [F::zero(); 3];
    let mut chi2 = [F::zero(); 3];
    let mut n = 0usize;
    for (k, point) in reconstruction.points.iter().enumerate() {
        if (filter_traj.times[k + 1] - point.tau).abs() > tol * (point.tau.abs() + F::one()) {
            return Err(Error::InvalidConfig(format!(
                "grid mismatch at index {k}: filter time {} vs reconstruction {}",
                filter_traj.times[k + 1],
                point.tau
            )));
        }
        if !point.ok {
            continue;
        }
        let estimate = point
            .estimate
            .as_ref()
            .expect("ok points carry estimates");
        let state = &filter_traj.bloch[k + 1];
        n += 1;
        for axis in TomographyAxis::ALL {
            let a = axis.index();
            let est = estimate.by_axis[a];
            let dev = est.mean - state.component(axis);
            sums[a] += dev * dev;
            maxes[a] = maxes[a].max(dev.abs());
            let se = est.std_err.max(real(1e-12));
            chi2[a] += (dev / se) * (dev / se);
        }
    }
    if n == 0 {
        return Err(Error::Starved(
            "no trusted points to compare".into(),
        ));
    }
    let nf = real::<F>(n as f64);
    let by_axis = [0, 1, 2].map(|a| AxisComparison {
        rms: (sums[a] / nf).sqrt(),
        max_abs: maxes[a],
        chi2_reduced: chi2[a] / nf,
    });
    Ok(ComparisonReport {
        points_compared: n,
        by_axis,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{MeasurementConfig, PhysicalParams, TomographyOutcome};
    use crate::simulator::{
        run_experiment, simulate_repetition, tomography_pulse_and_readout, ExperimentPlan,
    };
    use approx::assert_abs_diff_eq;

    fn paper_params(nbar: f64) -> PhysicalParams<f64> {
        PhysicalParams::from_ordinary_frequencies(-0.49e6, 10.8e6, nbar, 0.49, 20e-6).unwrap()
    }

    fn z_config(duration: f64) -> MeasurementConfig<f64> {
        MeasurementConfig::new(Quadrature::Z, duration, 16e-9, 1.0, BlochVector::plus_x()).unwrap()
    }

    fn small_dataset(reps: usize, duration: f64, seed: u64) -> EnsembleDataset<f64> {
        let plan = ExperimentPlan::new(
            reps,
            vec![duration],
            TomographyAxis::ALL.to_vec(),
            0.95,
            true,
        )
        .unwrap();
        run_experiment(&plan, &paper_params(0.4), &z_config(duration), seed).unwrap()
    }

    #[test]
    fn infinite_window_matches_everything() {
        let ds = small_dataset(300, 0.256e-6, 1);
        let subset = bin_records(&ds, 0.256e-6, 0.0, f64::INFINITY).unwrap();
        assert_eq!(subset.total(), 300);
    }

    #[test]
    fn zero_window_matches_nothing_on_continuous_data() {
        let ds = small_dataset(300, 0.256e-6, 2);
        let subset = bin_records(&ds, 0.256e-6, 0.0, 0.0).unwrap();
        assert_eq!(subset.total(), 0);
    }

    #[test]
    fn off_grid_tau_is_rejected() {
        let ds = small_dataset(30, 0.256e-6, 3);
        assert!(bin_records(&ds, 0.2561e-6, 0.0, 1.0).is_err());
        assert!(bin_records(&ds, 0.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn conditional_tomography_examples() {
        let mut subset = MatchedSubset::default();
        for _ in 0..10 {
            subset.push(TomographyAxis::X, 1);
            subset.push(TomographyAxis::Y, -1);
            subset.push(TomographyAxis::Z, 1);
        }
        // all +1 on z at perfect fidelity
        let means = conditional_tomography(&subset, 1.0).unwrap();
        assert_eq!(means.axis(TomographyAxis::Z).mean, 1.0);
        assert_eq!(means.axis(TomographyAxis::Z).std_err, 0.0);

        // raw mean 0.45 corrected by 1/0.9 at F = 0.95
        let mut mixed = MatchedSubset::default();
        for i in 0..40 {
            let r = if i < 29 { 1 } else { -1 };
            mixed.push(TomographyAxis::X, r);
            mixed.push(TomographyAxis::Y, r);
            mixed.push(TomographyAxis::Z, r);
        }
        let raw = (29.0 - 11.0) / 40.0;
        let means = conditional_tomography(&mixed, 0.95).unwrap();
        assert_abs_diff_eq!(means.axis(TomographyAxis::X).mean, raw / 0.9, epsilon = 1e-12);
        assert_abs_diff_eq!(raw, 0.45, epsilon = 1e-12);
        assert_abs_diff_eq!(means.axis(TomographyAxis::X).mean, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn empty_axis_partition_is_an_error() {
        let mut subset = MatchedSubset::default();
        subset.push(TomographyAxis::X, 1);
        assert!(matches!(
            conditional_tomography(&subset, 0.95),
            Err(Error::EmptyBin(_))
        ));
    }

    #[test]
    fn fidelity_correction_round_trips_in_expectation() {
        // flip outcomes of a known state with probability 1−F, then correct
        let state: BlochVector<f64> = BlochVector::new(0.457, 0.0, 0.657).unwrap();
        let n = 30_000;
        let mut subset = MatchedSubset::default();
        for seed in 0..n {
            for axis in TomographyAxis::ALL {
                let o = tomography_pulse_and_readout(&state, axis, 0.95, 1.0, seed * 3 + axis.index() as u64);
                subset.push(axis, o.result);
            }
        }
        let means = conditional_tomography(&subset, 0.95).unwrap();
        for axis in TomographyAxis::ALL {
            let est = means.axis(axis);
            let truth = state.component(axis);
            assert!(
                (est.mean - truth).abs() < 3.0 * est.std_err + 1e-9,
                "axis {axis:?}: {} vs {truth}",
                est.mean
            );
        }
    }

    #[test]
    fn aggregation_is_associative_by_count_weighting() {
        let mut all = MatchedSubset::default();
        let mut parts: Vec<MatchedSubset> = vec![MatchedSubset::default(), MatchedSubset::default()];
        for i in 0..100i64 {
            let r = if i % 3 == 0 { 1 } else { -1 };
            for axis in TomographyAxis::ALL {
                all.push(axis, r);
                parts[(i % 2) as usize].push(axis, r);
            }
        }
        let whole = conditional_tomography(&all, 0.95).unwrap();
        let a = conditional_tomography(&parts[0], 0.95).unwrap();
        let b = conditional_tomography(&parts[1], 0.95).unwrap();
        for axis in TomographyAxis::ALL {
            let na = a.axis(axis).count as f64;
            let nb = b.axis(axis).count as f64;
            let combined = (a.axis(axis).mean * na + b.axis(axis).mean * nb) / (na + nb);
            assert_abs_diff_eq!(whole.axis(axis).mean, combined, epsilon = 1e-12);
        }
    }

    #[test]
    fn correlation_curves_require_a_single_duration() {
        let plan = ExperimentPlan::new(
            60,
            vec![0.128e-6, 0.256e-6],
            TomographyAxis::ALL.to_vec(),
            0.95,
            true,
        )
        .unwrap();
        let ds = run_experiment(&plan, &paper_params(0.4), &z_config(0.256e-6), 5).unwrap();
        assert!(correlation_curves(&ds, 5, 0.95).is_err());
    }

    #[test]
    fn correlation_curves_reject_too_few_bins() {
        let ds = small_dataset(60, 0.256e-6, 6);
        assert!(correlation_curves(&ds, 2, 0.95).is_err());
    }

    #[test]
    fn correlation_bin_count_preserved() {
        let ds = small_dataset(500, 0.256e-6, 7);
        let table = correlation_curves(&ds, 8, 0.95).unwrap();
        assert_eq!(table.bins.len(), 8);
        let total: usize = table.bins.iter().map(|b| b.counts.iter().sum::<usize>()).sum();
        assert_eq!(total, 500);
    }

    #[test]
    fn reconstruction_against_exact_filter() {
        // At η = 1 and infinite T₂* the filter is exact, so a reconstruction
        // from matching records must agree within statistics.
        let params =
            PhysicalParams::from_ordinary_frequencies(-0.49e6, 10.8e6, 0.4, 1.0, f64::INFINITY)
                .unwrap();
        let duration = 0.128e-6; // 8 grid points
        let config = z_config(duration);
        let durations: Vec<f64> = (1..=8).map(|i| i as f64 * 16e-9).collect();
        let plan = ExperimentPlan::new(
            24_000,
            durations,
            TomographyAxis::ALL.to_vec(),
            0.95,
            true,
        )
        .unwrap();
        let ds = run_experiment(&plan, &params, &config, 11).unwrap();

        let (reference, _, _) = simulate_repetition(&plan, &params, &config, 999, 7).unwrap();
        assert_eq!(reference.len(), 8);
        let traj = crate::filter::trajectory(&reference, &params, &config).unwrap();
        let recon = reconstruct_trajectory(&ds, &reference, None, 50, 0.95).unwrap();
        let report = compare(&traj, &recon).unwrap();
        assert!(report.points_compared > 0);
        // all deviations statistical: χ² should be O(1), rms small
        assert!(report.max_rms() < 0.2, "rms {:?}", report.by_axis);
    }

    #[test]
    fn reconstruction_fixed_epsilon_is_recorded() {
        let ds = small_dataset(900, 0.128e-6, 13);
        let (reference, _, _) = simulate_repetition(
            &ExperimentPlan::new(1, vec![0.128e-6], TomographyAxis::ALL.to_vec(), 0.95, true)
                .unwrap(),
            &paper_params(0.4),
            &z_config(0.128e-6),
            777,
            0,
        )
        .unwrap();
        let recon = reconstruct_trajectory(&ds, &reference, Some(0.25), 1, 0.95).unwrap();
        for p in &recon.points {
            assert_eq!(p.epsilon, 0.25);
        }
    }

    #[test]
    fn starved_reconstruction_is_an_error() {
        let ds = small_dataset(30, 0.128e-6, 17);
        let (reference, _, _) = simulate_repetition(
            &ExperimentPlan::new(1, vec![0.128e-6], TomographyAxis::ALL.to_vec(), 0.95, true)
                .unwrap(),
            &paper_params(0.4),
            &z_config(0.128e-6),
            778,
            0,
        )
        .unwrap();
        assert!(matches!(
            reconstruct_trajectory(&ds, &reference, None, 1000, 0.95),
            Err(Error::Starved(_))
        ));
    }

    #[test]
    fn compare_of_identical_inputs_is_zero() {
        // build a reconstruction whose means exactly equal the filter values
        let params = paper_params(0.4);
        let config = z_config(0.048e-6);
        let record = MeasurementRecord::from_instantaneous(
            1,
            Quadrature::Z,
            16e-9,
            vec![0.3, -0.2, 0.1],
        )
        .unwrap();
        let traj = crate::filter::trajectory(&record, &params, &config).unwrap();
        let points = (0..3)
            .map(|k| {
                let state = &traj.bloch[k + 1];
                let by_axis = [state.x(), state.y(), state.z()].map(|m| AxisEstimate {
                    mean: m,
                    std_err: 0.01,
                    count: 500,
                });
                ReconstructionPoint {
                    tau: traj.times[k + 1],
                    target_v: record.integrated()[k],
                    epsilon: 0.1,
                    counts: [500; 3],
                    estimate: Some(ConditionalMeans { by_axis }),
                    ok: true,
                }
            })
            .collect();
        let recon = ReconstructedTrajectory {
            reference_seed: 1,
            min_count: 200,
            points,
        };
        let report = compare(&traj, &recon).unwrap();
        assert_eq!(report.points_compared, 3);
        for axis in report.by_axis {
            assert_eq!(axis.rms, 0.0);
            assert_eq!(axis.max_abs, 0.0);
            assert_eq!(axis.chi2_reduced, 0.0);
        }
    }

    #[test]
    fn compare_rejects_grid_mismatch() {
        let params = paper_params(0.4);
        let config = z_config(0.048e-6);
        let record = MeasurementRecord::from_instantaneous(
            1,
            Quadrature::Z,
            16e-9,
            vec![0.3, -0.2, 0.1],
        )
        .unwrap();
        let traj = crate::filter::trajectory(&record, &params, &config).unwrap();
        let recon = ReconstructedTrajectory::<f64> {
            reference_seed: 1,
            min_count: 200,
            points: vec![],
        };
        assert!(compare(&traj, &recon).is_err());
    }

    #[test]
    fn dataset_invariants_survive_bin_and_average_path() {
        // entries share config identity through EnsembleDataset validation
        let ds = small_dataset(90, 0.128e-6, 19);
        let outcome: &TomographyOutcome<f64> = &ds.entries()[0].1;
        assert!(outcome.result == 1 || outcome.result == -1);
    }
}
