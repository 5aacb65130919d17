//! Run configuration: the user-facing TOML schema with the experimental
//! units (MHz, μs, ns) at the boundary and SI internally.
//!
//! Defaults match the operating point every quantitative check in this
//! repository is calibrated against: χ/2π = −0.49 MHz, κ/2π = 10.8 MHz,
//! n̄ = 0.4, η = 0.49, T₂* = 20 μs, 16 ns steps, 95% readout fidelity.

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use weakmeas::model::{BlochVector, MeasurementConfig, PhysicalParams};
use weakmeas::simulator::ExperimentPlan;
use weakmeas::{Quadrature, TomographyAxis};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub params: ParamsSection,
    pub measurement: MeasurementSection,
    pub plan: PlanSection,
    pub run: RunSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            params: ParamsSection::default(),
            measurement: MeasurementSection::default(),
            plan: PlanSection::default(),
            run: RunSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParamsSection {
    /// Dispersive shift χ/2π in MHz (may be negative).
    pub chi_mhz: f64,
    /// Cavity linewidth κ/2π in MHz.
    pub kappa_mhz: f64,
    pub nbar: f64,
    pub eta: f64,
    /// Environmental dephasing time in μs; `inf` disables it.
    pub t2_star_us: f64,
}

impl Default for ParamsSection {
    fn default() -> Self {
        Self {
            chi_mhz: -0.49,
            kappa_mhz: 10.8,
            nbar: 0.4,
            eta: 0.49,
            t2_star_us: 20.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeasurementSection {
    pub quadrature: Quadrature,
    pub duration_us: f64,
    pub step_ns: f64,
    pub delta_v: f64,
    /// Initial Bloch vector when heralding is disabled.
    pub initial_state: [f64; 3],
}

impl Default for MeasurementSection {
    fn default() -> Self {
        Self {
            quadrature: Quadrature::Z,
            duration_us: 1.792,
            step_ns: 16.0,
            delta_v: 1.0,
            initial_state: [1.0, 0.0, 0.0],
        }
    }
}

/// How measurement durations are assigned across repetitions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DurationMode {
    /// Every repetition measures for the full configured duration.
    Final,
    /// Repetitions cycle through every grid time up to the configured
    /// duration — what trajectory reconstruction needs.
    Grid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlanSection {
    pub repetitions: usize,
    pub duration_mode: DurationMode,
    pub readout_fidelity: f64,
    pub herald: bool,
    /// Resource guard on `repetitions × steps`.
    pub step_cap: u64,
}

impl Default for PlanSection {
    fn default() -> Self {
        Self {
            repetitions: 10_000,
            duration_mode: DurationMode::Final,
            readout_fidelity: 0.95,
            herald: true,
            step_cap: weakmeas::simulator::DEFAULT_STEP_CAP,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FileFormat {
    Csv,
    Bin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub seed: u64,
    pub format: FileFormat,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            seed: 1,
            format: FileFormat::Csv,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> anyhow::Result<Self> {
        toml::from_str(text).context("parsing run configuration")
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the canonical TOML serialization.
    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.to_toml().as_bytes());
        hex_string(&hasher.finalize())
    }

    pub fn physical_params(&self) -> anyhow::Result<PhysicalParams<f64>> {
        let p = &self.params;
        Ok(PhysicalParams::from_ordinary_frequencies(
            p.chi_mhz * 1e6,
            p.kappa_mhz * 1e6,
            p.nbar,
            p.eta,
            p.t2_star_us * 1e-6,
        )?)
    }

    /// SI measurement config; durations off the step grid are snapped down
    /// to it with a warning (the core itself rejects misaligned input).
    pub fn measurement_config(&self) -> anyhow::Result<MeasurementConfig<f64>> {
        let m = &self.measurement;
        let step = m.step_ns * 1e-9;
        if !(step > 0.0) {
            bail!("step_ns = {} must be positive", m.step_ns);
        }
        let requested = m.duration_us * 1e-6;
        if !(requested >= 0.0) {
            bail!("duration_us = {} must be non-negative", m.duration_us);
        }
        let steps = (requested / step + 1e-9).floor();
        let duration = steps * step;
        if (duration - requested).abs() > 1e-9 * requested.max(step) {
            log::warn!(
                "duration {} us is off the {} ns grid; snapped down to {} us",
                m.duration_us,
                m.step_ns,
                duration * 1e6
            );
        }
        let [x, y, z] = m.initial_state;
        let initial = BlochVector::new(x, y, z)?;
        Ok(MeasurementConfig::new(
            m.quadrature,
            duration,
            step,
            m.delta_v,
            initial,
        )?)
    }

    pub fn experiment_plan(
        &self,
        config: &MeasurementConfig<f64>,
    ) -> anyhow::Result<ExperimentPlan<f64>> {
        let durations = match self.plan.duration_mode {
            DurationMode::Final => vec![config.duration],
            DurationMode::Grid => {
                let steps = config.steps();
                if steps == 0 {
                    bail!("grid duration mode needs a non-zero duration");
                }
                (1..=steps).map(|i| i as f64 * config.step).collect()
            }
        };
        Ok(ExperimentPlan::new(
            self.plan.repetitions,
            durations,
            TomographyAxis::ALL.to_vec(),
            self.plan.readout_fidelity,
            self.plan.herald,
        )?
        .with_step_cap(self.plan.step_cap))
    }
}

pub fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn defaults_match_the_operating_point() {
        let config = RunConfig::default();
        let params = config.physical_params().unwrap();
        assert_relative_eq!(params.chi, -2.0 * std::f64::consts::PI * 0.49e6);
        assert_relative_eq!(params.kappa, 2.0 * std::f64::consts::PI * 10.8e6);
        assert_eq!(params.nbar, 0.4);
        assert_eq!(params.eta, 0.49);
        assert_relative_eq!(params.t2_star, 20e-6);
        let meas = config.measurement_config().unwrap();
        assert_eq!(meas.steps(), 112);
        assert_eq!(meas.delta_v, 1.0);
    }

    #[test]
    fn toml_round_trip_is_lossless() {
        let mut config = RunConfig::default();
        config.params.nbar = 0.46;
        config.measurement.quadrature = Quadrature::Phi;
        config.plan.duration_mode = DurationMode::Grid;
        config.run.seed = 99;
        let text = config.to_toml();
        let back = RunConfig::from_toml(&text).unwrap();
        assert_eq!(config, back);
        assert_eq!(config.hash(), back.hash());
    }

    #[test]
    fn infinite_t2_star_round_trips() {
        let mut config = RunConfig::default();
        config.params.t2_star_us = f64::INFINITY;
        let back = RunConfig::from_toml(&config.to_toml()).unwrap();
        assert!(back.params.t2_star_us.is_infinite());
        assert!(back.physical_params().unwrap().t2_star.is_infinite());
    }

    #[test]
    fn off_grid_duration_snaps_down() {
        let mut config = RunConfig::default();
        config.measurement.duration_us = 1.8; // 112.5 steps
        let meas = config.measurement_config().unwrap();
        assert_eq!(meas.steps(), 112);
        assert_relative_eq!(meas.duration, 112.0 * 16e-9, max_relative = 1e-12);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(RunConfig::from_toml("[params]\nchii_mhz = 1.0\n").is_err());
    }

    #[test]
    fn grid_mode_covers_every_step() {
        let mut config = RunConfig::default();
        config.measurement.duration_us = 0.064;
        config.plan.duration_mode = DurationMode::Grid;
        let meas = config.measurement_config().unwrap();
        let plan = config.experiment_plan(&meas).unwrap();
        assert_eq!(plan.measure_durations.len(), 4);
        assert_relative_eq!(plan.measure_durations[3], 64e-9, max_relative = 1e-12);
    }

    #[test]
    fn hash_distinguishes_configs() {
        let a = RunConfig::default();
        let mut b = RunConfig::default();
        b.run.seed = 2;
        assert_ne!(a.hash(), b.hash());
    }
}
