//! Period lattices, monodromy and Maslov indices of integrable systems,
//! with the exact integer lattice constructions built on them.
//!
//! * [`systems`]: the system interface and the built-in model systems.
//! * [`flow`]: the joint flow of the generators and fibre tracking.
//! * [`lattice`]: period lattice detection, continuation and monodromy.
//! * [`maslov`]: Maslov indices of lattice cycles on `R^{2n}`.
//! * [`latalg`]: Smith/Hermite forms, kernel chains, circle actions and the
//!   mapping torus.

pub mod error;
pub mod flow;
pub mod latalg;
pub mod lattice;
pub mod maslov;
pub(crate) mod serde_util;
pub mod systems;

pub use error::{Error, Result};
pub use flow::{flow, track_fiber_point, FlowResult, Tolerances};
pub use latalg::{
    free_circle_action, gl2z_conjugacy_invariant, kernel_chain, mapping_torus_check, primitive_section,
    smith_normal_form, verify_rho_invariance, CircleActionSection, IntMatrix, RhoFunctional, SublatticeChain,
};
pub use lattice::{
    continue_basis, detect_lattice_basis, monodromy, BasisTrajectory, DetectOptions, LatticeBasis, LoopPath,
    MonodromyMatrix,
};
pub use maslov::{
    lagrangian_frame, maslov_cycles, maslov_index, maslov_vector, MaslovSampling, MaslovVector, SymplecticStructure,
};
pub use systems::{builtin_system, IntegrableSystem, PhasePoint};
