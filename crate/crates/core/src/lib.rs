//! Thin-film flow with power-law slip: full-order rescaled Navier-Stokes
//! solver on the dilated domain, the limit Reynolds-type solver, and the
//! post-processing that compares them.

pub mod analysis;
pub mod error;
pub mod field;
pub mod fullorder;
pub mod geometry;
pub mod operators;
pub mod params;
pub mod profile;
pub mod reynolds;
pub mod sparse;

pub use error::{Error, Result};
pub use field::{norms, Field, FieldKind, Restriction};
pub use fullorder::{solve_full, BottomStencil, EnergyBalance, FullOptions, FullOrderSolution};
pub use geometry::{ForcingPreset, Grid3, HeightField, HeightPreset, ReducedDim, ReducedGrid};
pub use params::{classify_regime, FluidParams, Regime, RegimeKind, SlipLaw};
pub use profile::{slip_traction, solve_profile, ProfileSolution};
