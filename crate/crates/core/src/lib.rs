//! Few-mode pseudomode fitting of structured spectral densities, with a
//! Markovian correction for the residual and exact reference solvers.

pub mod error;
pub mod fitmodel;
pub mod io;
pub mod lindblad;
pub mod lm;
pub mod markov;
pub mod ode;
pub mod oracle;
pub mod par;
pub mod quad;
pub mod sparse;
pub mod specdens;
pub mod units;

pub use error::{Error, Result};
pub use fitmodel::{fit, FewModeModel, FitOptions, FitReport, FitWindow, Weighting};
pub use markov::{MarkovParams, ValidityReport};
pub use par::Exec;
pub use specdens::SpectralDensity;
pub use units::Units;
