//! Probability of food security: panel construction, conditional-moment
//! estimation, gamma survival probabilities, threshold calibration and
//! food-security dynamics.

pub mod calendar;
pub mod error;
pub mod dynamics;
pub mod dynasty;
pub mod gamma;
pub mod glm;
pub mod ingest;
pub mod pfs;
pub mod special;
pub mod stats;
pub mod synth;
pub mod threshold;

pub use calendar::WaveCalendar;
pub use error::{Error, Result};
pub use gamma::{gamma_from_moments, gamma_survival, GammaParams};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
