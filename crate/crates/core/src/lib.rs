pub mod augmentation;
pub mod cfe;
pub mod colorimetry;
pub mod dataio;
pub mod error;
pub mod estimator;
pub mod eval;
pub mod histogram;

pub use error::{Error, Result};
