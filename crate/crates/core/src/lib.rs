//! Two clocking excitations hopping on an open spin chain of length `s`,
//! driving an ancilla qubit through the noncommuting gates `σ₁` (link `a`)
//! and `σ₃` (link `b`).
//!
//! The crate is organised bottom-up:
//!
//! * [`lattice`]: the triangular pair lattice `{(x1, x2) : 1 ≤ x1 < x2 ≤ s}`
//!   and its dense lexicographic indexing.
//! * [`hamiltonian`]: the reduced hopping matrix on the invariant subspace,
//!   the explicit two-excitation operator with the register, and the checks
//!   tying the two together.
//! * [`propagator`]: exact spectral evolution from `|(1,2),+1⟩`.
//! * [`process`]: the time-dependent jump rates whose one-time law is
//!   `|ψ_t|²`, and a seeded first-order sampler of the jump process.
//! * [`stats`]: first-passage and sojourn statistics with bootstrap support.

pub mod error;
pub mod fmt;
pub mod hamiltonian;
pub mod lattice;
pub mod process;
pub mod propagator;
pub mod stats;

pub use error::{Error, Result};
pub use hamiltonian::{
    build_reduced, build_sector, embed_plus, flipped_edges, verify_conservation,
    ConservationReport, DressingSign, ReducedHamiltonian, SectorHamiltonian,
};
pub use lattice::{enumerate_sites, neighbours, ChainConfig, PairState, SiteIndexing};
pub use process::{
    continuity_residual, ensemble, rate_field, read_trajectories, sample_trajectory,
    write_trajectories, Ensemble, Jump, RateField, SamplerSettings, Trajectory, TrajectoryFormat,
    WaveTable,
};
pub use propagator::{
    amplitude_series, evolve, initial_state, probability_profile, AmplitudeSample, Evolution,
    PsiGrid, SpectralDecomposition, Wavefunction,
};
pub use stats::{
    bootstrap_difference, conditional_cdfs, first_passage_time, sojourn_time, BootstrapInterval,
    ConditionalCdfs, EmpiricalCdf, PassageRecord, SampleSummary,
};

pub use nalgebra::Complex;

/// Complex amplitude type used throughout.
pub type C64 = Complex<f64>;
