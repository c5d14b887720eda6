//! State evolution for SC-SPARC decoding.
//!
//! [`run_se`] is the finite-M recursion driven by a Monte-Carlo estimate of
//! the section expectation; [`asymptotic_se`] is its large-M limit, and
//! [`progression_report`] collects the closed-form wave-speed predictions.

mod asymptotic;
mod expectation;
mod progression;
mod recursion;

pub use asymptotic::{asymptotic_se, asymptotic_se_banded, AsymptoticTrajectory};
pub use expectation::{mc_expectation, Estimate, SectionExpectation, DEFAULT_SAMPLES};
pub use progression::{default_t_max, f_m_delta, lemma1_bounds, progression_report, ProgressionReport};
pub use recursion::{
    run_se, se_phi, se_step, se_tau, SeConfig, SeModel, SeStep, SeStopReason, SeStopRule, SeTrajectory,
};
