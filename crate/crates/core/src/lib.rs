//! Persistence analysis of end-of-day share-price panels.
//!
//! Share prices are mapped onto Ising spins relative to a base day, the
//! density of never-flipped spins `R(t)` is measured per window and averaged,
//! and its algebraic decay is fitted with one or two power laws. A ±1
//! random-walk null model with an exact survival oracle checks the pipeline.
//!
//! Modules, in pipeline order:
//!
//! - [`ingest`]: CSV parsing and partition into quarterly windows
//! - [`model`]: spin mapping, first-flip detection, `R(t)`
//! - [`fitting`] and [`bootstrap`]: log-log power-law fits and their uncertainty
//! - [`synthetic`]: simulated walk panels, exact survival, reference curves
//! - [`report`]: the `analyze` / `simulate` / `oracle` commands

pub mod bootstrap;
pub mod error;
pub mod fitting;
pub mod ingest;
pub mod model;
pub mod report;
pub mod synthetic;

pub use error::{FitError, IngestError, ModelError, SynthError};
pub use fitting::{fit_double_power_law, fit_power_law, DoublePowerLawFit, SegmentFit};
pub use ingest::{parse_eod_csv, partition_windows, PanelDataset, PartitionConfig, WindowScheme};
pub use model::{
    average_curves, build_spin_trajectory, map_to_spin, persistence_curve, PersistenceCurve,
    PriceSeries, SampleWindow, Spin, SpinTrajectory,
};
pub use synthetic::{exact_survival, reference_curve, simulate_walk_panel, StepModel, WalkConfig};
