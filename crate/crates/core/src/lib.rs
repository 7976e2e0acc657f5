//! Finite-dimensional simulator for a contexts/modalities account of quantum
//! measurement.
//!
//! A *context* is an orthonormal basis of a finite-dimensional Hilbert space and
//! a *modality* is one of its basis vectors. The crate computes Born-rule
//! transition probabilities between contexts, contrasts reversible (amplitude
//! sum) and irreversible (probability sum) round trips through an intermediate
//! context, models QND measurements through a meter whose state overlaps set
//! the measurement strength, and samples stochastic trajectories to estimate
//! their entropy production.
//!
//! Modules, bottom-up:
//!
//! - [`hilbert`]: contexts, projectors, context-change unitaries, Haar sampling.
//! - [`measurement`]: Born rule, distribution propagation, return probabilities.
//! - [`qnd`]: Gram matrices, meter states, entangling map, reduced states.
//! - [`trajectory`]: forward/backward path probabilities and entropy production.

pub mod error;
pub mod hilbert;
pub mod measurement;
pub mod qnd;
pub mod trajectory;

pub use error::{Error, Result};
pub use hilbert::{
    build_context, context_change_unitary, haar_random_unitary, projector, CMatrix, Context,
    ContextSpec, MatrixSpec, Modality, Projector, UnitaryMatrix,
};
pub use measurement::{
    born_probability, interference_return, irreversible_return, irreversible_return_matrix,
    propagate, reversible_return, transition_amplitudes, transition_matrix,
    ProbabilityDistribution, TransitionAmplitudes, TransitionMatrix,
};
pub use qnd::{
    entangle, gram_uniform, meter_chain_reduced_state, meter_return_probability,
    meter_states_from_gram, post_measurement_state, reduced_system_state, CompositeState,
    DensityMatrix, GramMatrix, GramSpec, MeterStates,
};
pub use trajectory::{
    backward_log_prob, entropy_production, exact_ensemble, forward_log_prob,
    mean_entropy_production, meter_protocol_entropy, sample_trajectory, shannon_entropy,
    ExactEnsemble, Protocol, Trajectory, TrajectoryEnsembleStats,
};

/// Tolerance applied when validating caller-supplied objects.
pub const INPUT_TOL: f64 = 1e-10;

/// Tolerance applied to objects this crate constructs itself.
pub const SELF_TOL: f64 = 1e-12;
