//! Domain types shared by the simulator, filter, and reconstruction layers.
//!
//! All types are immutable after construction and safe to share across
//! threads. Constructors validate their invariants; [`validate`] re-checks a
//! `(params, config)` pair that may have been built by deserialization.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{real, Real};

/// Slack allowed on the Bloch-ball norm bound `x² + y² + z² ≤ 1`.
pub const NORM_TOL: f64 = 1e-9;

/// Dispersive-regime threshold: `|chi|/kappa` above this raises a warning.
pub const DISPERSIVE_RATIO_WARN: f64 = 0.2;

/// Which field quadrature is amplified, i.e. what the record reveals.
///
/// `Z` records carry qubit-state information (collapse toward the poles);
/// `Phi` records carry photon-number information (phase diffusion along the
/// equator).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quadrature {
    Z,
    Phi,
}

/// Cartesian axis probed by a tomography pulse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TomographyAxis {
    X,
    Y,
    Z,
}

impl TomographyAxis {
    pub const ALL: [TomographyAxis; 3] = [TomographyAxis::X, TomographyAxis::Y, TomographyAxis::Z];

    pub fn index(self) -> usize {
        match self {
            TomographyAxis::X => 0,
            TomographyAxis::Y => 1,
            TomographyAxis::Z => 2,
        }
    }
}

/// Qubit state estimate: expectation values of the three Pauli operators.
///
/// Invariant: every component lies in `[-1, 1]` and the squared norm does not
/// exceed `1 + NORM_TOL`. Pure states sit on the unit sphere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlochVector<F> {
    x: F,
    y: F,
    z: F,
}

impl<F: Real> BlochVector<F> {
    pub fn new(x: F, y: F, z: F) -> Result<Self> {
        let v = Self { x, y, z };
        v.validate()?;
        Ok(v)
    }

    /// Re-check the norm bound (useful after deserialization).
    pub fn validate(&self) -> Result<()> {
        // the stated 1e-9 slack assumes f64; narrower scalars get a few ulp
        let bound = F::one() + real::<F>(NORM_TOL).max(F::epsilon() * real(32.0));
        for (name, c) in [("x", self.x), ("y", self.y), ("z", self.z)] {
            if !c.is_finite() || c.abs() > bound {
                return Err(Error::InvalidState(format!(
                    "Bloch component {name} = {c} outside [-1, 1]"
                )));
            }
        }
        if self.purity() > bound {
            return Err(Error::InvalidState(format!(
                "Bloch norm² = {} exceeds 1",
                self.purity()
            )));
        }
        Ok(())
    }

    pub fn plus_x() -> Self {
        Self {
            x: F::one(),
            y: F::zero(),
            z: F::zero(),
        }
    }

    pub fn plus_z() -> Self {
        Self {
            x: F::zero(),
            y: F::zero(),
            z: F::one(),
        }
    }

    pub fn minus_z() -> Self {
        Self {
            x: F::zero(),
            y: F::zero(),
            z: -F::one(),
        }
    }

    pub fn x(&self) -> F {
        self.x
    }

    pub fn y(&self) -> F {
        self.y
    }

    pub fn z(&self) -> F {
        self.z
    }

    /// Squared norm `x² + y² + z²`; 1 for pure states.
    pub fn purity(&self) -> F {
        self.x * self.x + self.y * self.y + self.z * self.z
    }

    /// Magnitude of the equatorial (x, y) part.
    pub fn transverse(&self) -> F {
        self.x.hypot(self.y)
    }

    pub fn component(&self, axis: TomographyAxis) -> F {
        match axis {
            TomographyAxis::X => self.x,
            TomographyAxis::Y => self.y,
            TomographyAxis::Z => self.z,
        }
    }

    /// Euclidean distance to another state on/inside the Bloch ball.
    pub fn distance(&self, other: &Self) -> F {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        let dz = self.z - other.z;
        (dx * dx + dy * dy + dz * dz).sqrt()
    }
}

/// Physical constants of the dispersive readout chain, in SI units.
///
/// `chi` and `kappa` are angular frequencies (rad/s). `t2_star` may be
/// infinite to disable environmental dephasing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams<F> {
    /// Dispersive coupling rate (rad/s, may be negative).
    pub chi: F,
    /// Cavity decay rate (rad/s, > 0).
    pub kappa: F,
    /// Mean intracavity photon number (≥ 0).
    pub nbar: F,
    /// Quantum efficiency of the detection chain, in (0, 1].
    pub eta: F,
    /// Environmental dephasing time (s, > 0 or infinite).
    pub t2_star: F,
}

impl<F: Real> PhysicalParams<F> {
    pub fn new(chi: F, kappa: F, nbar: F, eta: F, t2_star: F) -> Result<Self> {
        let p = Self {
            chi,
            kappa,
            nbar,
            eta,
            t2_star,
        };
        p.validate()?;
        Ok(p)
    }

    /// Build from ordinary (non-angular) frequencies in Hz; multiplies by 2π.
    pub fn from_ordinary_frequencies(chi_hz: F, kappa_hz: F, nbar: F, eta: F, t2_star: F) -> Result<Self> {
        let two_pi = real::<F>(std::f64::consts::TAU);
        Self::new(chi_hz * two_pi, kappa_hz * two_pi, nbar, eta, t2_star)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.chi.is_finite() {
            return Err(Error::InvalidParams(format!("chi = {} not finite", self.chi)));
        }
        if !(self.kappa > F::zero()) || !self.kappa.is_finite() {
            return Err(Error::InvalidParams(format!(
                "kappa = {} must be positive and finite",
                self.kappa
            )));
        }
        if !(self.nbar >= F::zero()) || !self.nbar.is_finite() {
            return Err(Error::InvalidParams(format!(
                "nbar = {} must be non-negative",
                self.nbar
            )));
        }
        if !(self.eta > F::zero() && self.eta <= F::one()) {
            return Err(Error::InvalidParams(format!(
                "eta = {} must lie in (0, 1]",
                self.eta
            )));
        }
        if !(self.t2_star > F::zero()) {
            return Err(Error::InvalidParams(format!(
                "t2_star = {} must be positive (or infinite)",
                self.t2_star
            )));
        }
        Ok(())
    }

    /// True when `|chi|/kappa` is large enough that the dispersive
    /// approximation behind the record model becomes questionable.
    pub fn dispersive_warning(&self) -> bool {
        self.chi.abs() / self.kappa > real(DISPERSIVE_RATIO_WARN)
    }
}

/// Configuration of one continuous measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementConfig<F> {
    pub quadrature: Quadrature,
    /// Total measurement duration (s); must be an integer multiple of `step`.
    pub duration: F,
    /// Digitization step (s).
    pub step: F,
    /// Separation of the two record distributions, in arbitrary voltage
    /// units. Only the ratio `ΔV²/σ²` is physical; 1.0 is the conventional
    /// normalization.
    pub delta_v: F,
    pub initial_state: BlochVector<F>,
}

impl<F: Real> MeasurementConfig<F> {
    pub fn new(
        quadrature: Quadrature,
        duration: F,
        step: F,
        delta_v: F,
        initial_state: BlochVector<F>,
    ) -> Result<Self> {
        let c = Self {
            quadrature,
            duration,
            step,
            delta_v,
            initial_state,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step > F::zero()) || !self.step.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "step = {} must be positive",
                self.step
            )));
        }
        if !(self.delta_v > F::zero()) || !self.delta_v.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "delta_v = {} must be positive",
                self.delta_v
            )));
        }
        if !(self.duration >= F::zero()) || !self.duration.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "duration = {} must be non-negative",
                self.duration
            )));
        }
        let ratio = self.duration / self.step;
        let steps = ratio.round();
        let tol = F::epsilon() * real::<F>(64.0) * (steps + F::one());
        if (ratio - steps).abs() > tol {
            return Err(Error::InvalidConfig(format!(
                "duration {} is not an integer multiple of step {} ({} steps)",
                self.duration, self.step, ratio
            )));
        }
        self.initial_state.validate()
    }

    /// Number of digitization steps covered by `duration`.
    pub fn steps(&self) -> usize {
        (self.duration / self.step)
            .round()
            .to_usize()
            .expect("step count fits usize")
    }

    /// Same configuration truncated/extended to a different duration.
    pub fn with_duration(&self, duration: F) -> Result<Self> {
        Self::new(
            self.quadrature,
            duration,
            self.step,
            self.delta_v,
            self.initial_state,
        )
    }
}

/// Validate a parameter/configuration pair, warning (without failing) when
/// the dispersive-regime assumption is strained.
pub fn validate<F: Real>(
    params: PhysicalParams<F>,
    config: MeasurementConfig<F>,
) -> Result<(PhysicalParams<F>, MeasurementConfig<F>)> {
    params.validate()?;
    config.validate()?;
    if params.dispersive_warning() {
        log::warn!(
            "|chi|/kappa = {} exceeds {}; dispersive record model is strained",
            params.chi.abs() / params.kappa,
            DISPERSIVE_RATIO_WARN
        );
    }
    Ok((params, config))
}

/// One digitized measurement record.
///
/// `integrated[k]` is the running mean of `instantaneous[..=k]`, i.e. the
/// discrete form of `V_m(τ) = (1/τ)∫₀^τ V(t) dt` on the grid
/// `τ_k = (k + 1)·step`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord<F> {
    seed: u64,
    quadrature: Quadrature,
    step: F,
    instantaneous: Vec<F>,
    integrated: Vec<F>,
}

impl<F: Real> MeasurementRecord<F> {
    /// Build a record from the instantaneous series, computing the running
    /// mean.
    pub fn from_instantaneous(
        seed: u64,
        quadrature: Quadrature,
        step: F,
        instantaneous: Vec<F>,
    ) -> Result<Self> {
        if !(step > F::zero()) {
            return Err(Error::InvalidConfig(format!("step = {step} must be positive")));
        }
        let integrated = running_mean(&instantaneous);
        Ok(Self {
            seed,
            quadrature,
            step,
            instantaneous,
            integrated,
        })
    }

    /// Re-assemble a record from stored series, checking their consistency.
    pub fn from_series(
        seed: u64,
        quadrature: Quadrature,
        step: F,
        instantaneous: Vec<F>,
        integrated: Vec<F>,
    ) -> Result<Self> {
        if instantaneous.len() != integrated.len() {
            return Err(Error::InvalidState(format!(
                "series lengths differ: {} instantaneous vs {} integrated",
                instantaneous.len(),
                integrated.len()
            )));
        }
        let record = Self::from_instantaneous(seed, quadrature, step, instantaneous)?;
        let tol = real::<F>(1e-12);
        for (k, (&stored, &recomputed)) in integrated.iter().zip(&record.integrated).enumerate() {
            let scale = F::one().max(recomputed.abs());
            if (stored - recomputed).abs() > tol * scale {
                return Err(Error::InvalidState(format!(
                    "integrated[{k}] = {stored} is not the running mean ({recomputed})"
                )));
            }
        }
        Ok(record)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn quadrature(&self) -> Quadrature {
        self.quadrature
    }

    pub fn step(&self) -> F {
        self.step
    }

    pub fn len(&self) -> usize {
        self.instantaneous.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instantaneous.is_empty()
    }

    pub fn duration(&self) -> F {
        self.time_at(self.len())
    }

    /// Grid time `τ_k = (k + 1)·step` for index `k`; `time_at(0)` is one step.
    fn time_at(&self, k: usize) -> F {
        real::<F>(k as f64) * self.step
    }

    pub fn time(&self, k: usize) -> F {
        self.time_at(k + 1)
    }

    pub fn times(&self) -> Vec<F> {
        (0..self.len()).map(|k| self.time(k)).collect()
    }

    pub fn instantaneous(&self) -> &[F] {
        &self.instantaneous
    }

    pub fn integrated(&self) -> &[F] {
        &self.integrated
    }

    pub fn final_integrated(&self) -> Option<F> {
        self.integrated.last().copied()
    }
}

fn running_mean<F: Real>(values: &[F]) -> Vec<F> {
    let mut sum = F::zero();
    values
        .iter()
        .enumerate()
        .map(|(k, &v)| {
            sum += v;
            sum / real::<F>((k + 1) as f64)
        })
        .collect()
}

/// Which measurement eigenstate a Z-record collapses toward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EigenstateLabel {
    Zero,
    One,
}

impl EigenstateLabel {
    /// Sign of the `z` component of the eigenstate: `Zero` ↦ +1.
    pub fn sign<F: Real>(self) -> F {
        match self {
            EigenstateLabel::Zero => F::one(),
            EigenstateLabel::One => -F::one(),
        }
    }
}

/// Hidden ground truth carried alongside a simulated record.
///
/// The latent series exist so the environment is an explicit, inspectable
/// noise source rather than an implicit one: `full_integrated` is the
/// running mean the detector would have seen at unit efficiency, and the
/// three phase series decompose the accrued equatorial phase by origin.
/// Series that do not apply to a quadrature are left empty (`eigenstate`
/// and `full_integrated` are Z-only; the detected/undetected phase walks
/// are φ-only).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueStateTrace<F> {
    pub eigenstate: Option<EigenstateLabel>,
    pub full_integrated: Vec<F>,
    pub phase_detected: Vec<F>,
    pub phase_undetected: Vec<F>,
    pub phase_environment: Vec<F>,
    /// Pure true state at each grid time.
    pub bloch: Vec<BlochVector<F>>,
}

/// Outcome of one projective readout along a Cartesian axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TomographyOutcome<F> {
    pub axis: TomographyAxis,
    /// ±1 eigenvalue assignment.
    pub result: i8,
    /// Duration of the weak measurement that preceded this readout.
    pub measure_duration: F,
}

impl<F: Real> TomographyOutcome<F> {
    pub fn new(axis: TomographyAxis, result: i8, measure_duration: F) -> Result<Self> {
        if result != 1 && result != -1 {
            return Err(Error::InvalidState(format!(
                "tomography result {result} must be ±1"
            )));
        }
        Ok(Self {
            axis,
            result,
            measure_duration,
        })
    }
}

/// Time-indexed Bloch-vector estimate inferred from one record.
///
/// `times[0] = 0` holds the prepared state; entry `k + 1` is the estimate
/// conditioned on the record integrated up to `τ_k`. `gamma` and the initial
/// state are carried so downstream consumers can rebuild the no-information
/// dephasing envelope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryEstimate<F> {
    pub quadrature: Quadrature,
    pub initial: BlochVector<F>,
    /// Total dephasing rate applied to the transverse components (1/s).
    pub gamma: F,
    pub times: Vec<F>,
    pub bloch: Vec<BlochVector<F>>,
    /// Squared Bloch norm at each time.
    pub purity: Vec<F>,
}

/// Many repetitions of (record, tomography outcome) taken under one
/// parameter set; the raw material for conditional tomography.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleDataset<F> {
    params: PhysicalParams<F>,
    config: MeasurementConfig<F>,
    entries: Vec<(MeasurementRecord<F>, TomographyOutcome<F>)>,
}

impl<F: Real> EnsembleDataset<F> {
    pub fn new(
        params: PhysicalParams<F>,
        config: MeasurementConfig<F>,
        entries: Vec<(MeasurementRecord<F>, TomographyOutcome<F>)>,
    ) -> Result<Self> {
        params.validate()?;
        config.validate()?;
        let max_steps = config.steps();
        let step_tol = config.step * real::<F>(1e-9);
        for (k, (record, outcome)) in entries.iter().enumerate() {
            if record.quadrature() != config.quadrature {
                return Err(Error::QuadratureMismatch {
                    expected: config.quadrature,
                    found: record.quadrature(),
                });
            }
            if (record.step() - config.step).abs() > step_tol {
                return Err(Error::InvalidState(format!(
                    "entry {k}: record step {} differs from config step {}",
                    record.step(),
                    config.step
                )));
            }
            if record.len() > max_steps {
                return Err(Error::InvalidState(format!(
                    "entry {k}: record length {} exceeds configured duration",
                    record.len()
                )));
            }
            if (outcome.measure_duration - record.duration()).abs() > step_tol {
                return Err(Error::InvalidState(format!(
                    "entry {k}: outcome duration {} does not match record duration {}",
                    outcome.measure_duration,
                    record.duration()
                )));
            }
        }
        Ok(Self {
            params,
            config,
            entries,
        })
    }

    pub fn params(&self) -> &PhysicalParams<F> {
        &self.params
    }

    pub fn config(&self) -> &MeasurementConfig<F> {
        &self.config
    }

    pub fn entries(&self) -> &[(MeasurementRecord<F>, TomographyOutcome<F>)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
