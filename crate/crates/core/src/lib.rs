//! Data-efficient statistical verification of parametric Markov decision
//! processes.
//!
//! The crate follows a three-phase procedure: parameter synthesis computes a
//! feasible-region map over the parameter space; experiment design selects
//! memoryless strategies that maximise predicted confidence gain and traces
//! are simulated under them; Bayesian inference over transition counts turns
//! the data into parameter posteriors, and the posterior mass of the feasible
//! region is the output confidence that the underlying system satisfies the
//! property.

pub mod confidence;
pub mod design;
pub mod harness;
pub mod inference;
pub mod model;
pub mod pctl;
pub mod rng;
pub mod simulate;
pub mod synth;
pub mod transform;

pub use model::{parse_model, print_model, Mdp, ParamPoint, Pmdp};
pub use pctl::{parse_property, Property};
