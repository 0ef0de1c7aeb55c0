//! Phase-space solver for a kinetic Fokker–Planck model of vessel-tip
//! density coupled to a reaction–diffusion equation for an angiogenic
//! factor, with executable checks of the model's a-priori bounds.

// `!(x > y)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod cli;
pub mod error;
pub mod grid;
pub mod kernels;
pub mod linfp;
pub mod oracle;
pub mod params;
pub mod picard;
pub mod taf;
pub mod vintegrals;

pub use error::{Error, Result};
pub use grid::{
    integrate_phase, lp_norm, FieldKind, PhaseField, PhaseGrid, SpaceGrid, SpatialField,
};
pub use params::{validate_params, FluxMode, GridSpec, ModelParams};
