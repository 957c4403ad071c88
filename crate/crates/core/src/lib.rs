//! Few-photon scattering engine for one-dimensional waveguides coupled to
//! driven three-level emitters: exact single-photon transport, two-photon
//! Lippmann-Schwinger scattering with hardcore-boson regularization, inelastic
//! power spectra, photon-photon correlation functions, and an independent
//! discretized-waveguide oracle.

pub mod analytic;
pub mod effective;
pub mod model;
pub mod numerics;
pub mod observables;
pub mod rational;
pub mod lattice;
pub mod retarded;
pub mod series;
pub mod sparse;
pub mod single_photon;
pub mod two_photon;

pub use effective::{Channel, EffectiveModel};
pub use model::{load_config, validate, ModelError, SystemConfig, Topology, ValidatedConfig};
pub use series::CurveSeries;
pub use single_photon::{solve_single, time_delay, transmission_curve, SinglePhotonSolution};
pub use two_photon::{g0_matrix, scatter_two, t_matrix, PairChannel, TwoPhotonSolution};
