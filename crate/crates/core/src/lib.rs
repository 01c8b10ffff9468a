//! Numerical laboratory for alpha-stable McKean-Vlasov dynamics with
//! Besov-rough convolution kernels: parameter feasibility, thermic Besov
//! norms, mollified Fokker-Planck fixed points with Gronwall envelopes, and
//! interacting-particle cross-validation.

pub mod acceptance;
pub mod besov;
pub mod error;
pub mod exponents;
pub mod fokker_planck;
pub mod grid;
pub mod io;
pub mod kernels;
pub mod params;
pub mod pipeline;
pub mod particles;
pub mod spectral;
pub mod stable;

pub use besov::{BesovSpec, NormResult, WeightSpec};
pub use error::{Error, Result};
pub use fokker_planck::{DensityPath, GronwallFit, SolverConfig};
pub use grid::{Grid, GridFunction};
pub use kernels::{Kernel, KernelSpec, MollifierReport};
pub use params::{ConditionReport, DerivedQuantities, ParameterSet};
pub use particles::{ParticleEnsemble, Trajectory, YoungReconstruction};
