//! Spatially coupled sparse superposition codes (SC-SPARCs) over the AWGN
//! channel.
//!
//! The crate covers the whole pipeline: base-matrix construction
//! ([`params`]), message vectors and error metrics ([`message`]), dense and
//! FFT-based design operators ([`design`]), the channel ([`channel`]), state
//! evolution and decoding-progression predictions ([`state_evolution`]), the
//! AMP decoder ([`amp`]), a compressed-sensing AMP variant ([`cs_amp`]) and a
//! batch experiment harness ([`harness`]).

pub mod amp;
pub mod channel;
pub mod cs_amp;
pub mod design;
pub mod error;
pub mod harness;
pub mod message;
pub mod params;
pub mod rng;
pub mod state_evolution;

pub use design::{BlockLayout, DenseDesign, Design, DftDesign, Field, OperatorKind, ScaledAdjoint, Scalar};
pub use error::{Error, Result};
pub use message::{MessageVector, Nmse, SoftEstimate};
pub use params::{BaseMatrix, CouplingParams, LengthRounding, SparcParams};
