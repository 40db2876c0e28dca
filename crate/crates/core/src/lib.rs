//! Inverse microstructure design for dual-phase steel.
//!
//! Phase-field simulation produces martensite microstructures, a
//! crystal-plasticity FEM solver rates their strength and ductility, and
//! neural surrogates (a WGAN generator and a CNN regressor) support a search
//! of the generator's latent space for the best microstructure.

pub mod cpfem;
pub mod dataset;
pub mod error;
pub mod micro;
pub mod mode;
pub mod nn;
pub mod phasefield;
pub mod pipeline;
pub mod rng;
pub mod search;

pub use error::{Error, Result};
pub use micro::{label_pixels, Field2, MicrostructureImage, Phase};
pub use mode::{DeformationMode, MechanicalProps};
pub use rng::Rng;
