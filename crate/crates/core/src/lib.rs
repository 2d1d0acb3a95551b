//! Prism-type hidden variable models of three-photon GHZ correlations.
//!
//! * [`enumerate`]: the 729 hidden tuples, the GHZ constraint filter and the
//!   48-element space.
//! * [`discrete`]: exact rational conditional probabilities and expectations.
//! * [`continuous`]: the continuum model, its window kernel and density solver.
//! * [`simulate`]: event-by-event Monte Carlo with detector errors and
//!   post-selection.
//! * [`cli`]: the `ghz-prism` command line.

pub mod cli;
pub mod config;
pub mod continuous;
pub mod discrete;
pub mod enumerate;
pub mod par;
pub mod simulate;
pub mod types;

pub use par::Execution;
