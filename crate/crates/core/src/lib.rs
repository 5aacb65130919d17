//! Weak-measurement simulation and Bayesian trajectory estimation for a
//! dispersively monitored two-level system.
//!
//! The crate has three layers:
//!
//! - [`simulator`] generates synthetic measurement records together with a
//!   hidden pure true state: the full experimental sequence of herald,
//!   preparation, continuous record, and projective tomography readout.
//! - [`filter`] inverts a record into a quantum trajectory using only the
//!   integrated signal, the measurement strength, and the dephasing rate —
//!   never the simulator's latents.
//! - [`tomography`] validates the filter the way the experiment would:
//!   conditional tomographic averages over ensemble members whose records
//!   match a target value.
//!
//! [`calibration`] holds the scalar formulas tying record statistics to
//! physical parameters, and [`model`] the shared domain types.
//!
//! All numeric code is generic over the scalar type through
//! [`scalar::Real`]; the `*64` aliases below fix `f64`, which every
//! quantitative tolerance in the test suite assumes.
//!
//! # Example
//!
//! ```
//! use weakmeas::{BlochVector64, MeasurementConfig64, PhysicalParams64, Quadrature};
//!
//! let params = PhysicalParams64::from_ordinary_frequencies(
//!     -0.49e6, 10.8e6, 0.4, 0.49, 20e-6).unwrap();
//! let config = MeasurementConfig64::new(
//!     Quadrature::Z, 1.792e-6, 16e-9, 1.0, BlochVector64::plus_x()).unwrap();
//!
//! let (record, truth) = weakmeas::simulator::simulate_z_record(&params, &config, 7).unwrap();
//! let trajectory = weakmeas::filter::trajectory(&record, &params, &config).unwrap();
//! assert_eq!(trajectory.bloch.len(), truth.bloch.len() + 1);
//! ```

pub mod calibration;
pub mod error;
pub mod filter;
pub mod model;
pub mod scalar;
pub mod simulator;
pub mod tomography;

pub use error::{Error, Result};
pub use model::{EigenstateLabel, Quadrature, TomographyAxis};
pub use scalar::{real, Real};

pub type BlochVector64 = model::BlochVector<f64>;
pub type PhysicalParams64 = model::PhysicalParams<f64>;
pub type MeasurementConfig64 = model::MeasurementConfig<f64>;
pub type MeasurementRecord64 = model::MeasurementRecord<f64>;
pub type TrueStateTrace64 = model::TrueStateTrace<f64>;
pub type TomographyOutcome64 = model::TomographyOutcome<f64>;
pub type TrajectoryEstimate64 = model::TrajectoryEstimate<f64>;
pub type EnsembleDataset64 = model::EnsembleDataset<f64>;
pub type ExperimentPlan64 = simulator::ExperimentPlan<f64>;
pub type CalibrationReport64 = calibration::CalibrationReport<f64>;
pub type EtaFit64 = calibration::EtaFit<f64>;
pub type CorrelationTable64 = tomography::CorrelationTable<f64>;
pub type ReconstructedTrajectory64 = tomography::ReconstructedTrajectory<f64>;
pub type ComparisonReport64 = tomography::ComparisonReport<f64>;
