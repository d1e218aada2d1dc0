//! Fully Bayesian activation mapping for complex-valued fMRI.
//!
//! The centerpiece is a parcel-parallel Gibbs/Metropolis-Hastings sampler for
//! the polar model
//!
//! ```text
//! y_v = A(γ_v) X Λ_v β_v + ε_v,   ε_v ~ N(0, σ_v² I_{2T}),
//! ```
//!
//! where each voxel's 2T-vector stacks the real and imaginary series, β_v and
//! γ_v are magnitude and phase coefficients with spike-and-slab indicators
//! (λ_v, ω_v), and the indicators share a sparse spatial Gaussian prior over
//! each parcel. The crate also provides the magnitude-only and Cartesian
//! real-and-imaginary baseline samplers, a synthetic-data simulator built on
//! a double-gamma HRF, classification/estimation metrics, and dense
//! brute-force reference implementations used by the test suites.

pub mod baselines;
pub mod error;
pub mod metrics;
pub mod model;
pub mod reference;
pub mod sampler;
pub mod simulator;
pub mod spatial;
mod util;

pub use baselines::{
    cvri_config, derived_estimates, magnitude_series, mo_config, run_cvri, run_mo,
    DerivedEstimates,
};
pub use error::{Error, Result};
pub use metrics::{
    aggregate, auc, combined_active, combined_scores, confusion, report, slope, union_truth,
    AggregateReport, ConfusionCounts, MetricSummary, MetricsReport,
};
pub use model::{
    arctan4, build_design, phase_basis, polar_mean, wrap_angle, ComplexImageSeries, DesignPair,
    PolarCoefficients,
};
pub use sampler::{run_chain, PosteriorSummary, SamplerConfig, VoxelState};
pub use simulator::{
    double_gamma_hrf, expected_bold, make_stimulus, random_truth_maps, simulate_signal,
    single_simulation_truth, strength_map, Assignment, HrfParams, MapCharacteristics, RegionShape,
    RegionSpec, SimConfig, StimulusSpec, TruthMaps,
};
pub use spatial::{parcellate, Neighborhood, ParcelGraph, Parcellation};
