//! Exact integer lattice algebra: normal forms, kernel chains of integer
//! functionals, circle-action sections, the mapping torus identification
//! and conjugacy invariants of monodromy matrices.

mod chain;
mod intmat;
mod normal_form;
mod sections;
mod torus;

pub use chain::{kernel_chain, verify_rho_invariance, ChainLevel, RhoFunctional, RhoInvarianceReport, SublatticeChain};
pub use intmat::{normalize_sign, to_big, to_i64_vec, vec_gcd, IntMatrix};
pub use normal_form::{column_hnf, hnf_pivots, hnf_solve, smith_normal_form, SmithForm};
pub use sections::{free_circle_action, primitive_section, CircleActionSection, FreeActionOptions, FreeActionReport};
pub use torus::{gl2z_conjugacy_invariant, mapping_torus_check, ConjugacyClass, MappingTorusReport};
