//! Propagator exponent and prefactor, semiclassical purity and its
//! canonical-limit counterpart.

mod action;
mod canonical;
mod hessians;
mod purity;

pub use action::{
    action_integrals, prefactor, prefactor_series, semiclassical_propagator_real, ActionBundle, Direction, Prefactor,
    CAUSTIC_THRESHOLD,
};
pub use canonical::{canonical_purity, contraction_checks, CanonicalPurityInputs, ContractionReport, ContractionRow};
pub use hessians::{action_hessians_from_stability, endpoint_weights, stability_from_action_hessians, ActionHessians, EndpointWeights};
pub use purity::{aux_determinants, gaussian_a1a2, purity_sc, purity_sc_raw, AuxDeterminants, PuritySc, IMAG_RESIDUAL_LIMIT};
