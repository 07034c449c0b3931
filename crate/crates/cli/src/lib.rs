//! Scenario-driven front end for the `pseudomode` toolkit.

pub mod error;
pub mod pipeline;
pub mod scenario;

pub use error::{CliError, Stage};
pub use pipeline::Run;
pub use scenario::{load, Loaded, Scenario};
