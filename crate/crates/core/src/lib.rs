pub mod calibration;
pub mod constants;
pub mod doppler;
pub mod error;
pub mod estimation;
pub mod floquet;
pub mod linalg;
pub mod model;
pub mod observables;
pub mod oracle;
pub mod units;

pub use error::{Error, Result};
pub use floquet::{HarmonicSolution, TimeDomainOptions};
pub use model::{AtomSystem, ComplexRates, DriveConfig, Harmonics1};
