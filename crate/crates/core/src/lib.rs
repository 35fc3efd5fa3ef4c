//! Streaming detection and location of abrupt changes in the volatility of
//! univariate and multivariate time series.
//!
//! * [`afcd`]: adaptive convex combination of fast and slow volatility filters.
//! * [`cafcd`]: cooperative multichannel variant sharing one convex weight.
//! * [`vce`]: change location from the differenced volatility filter.
//! * [`glr`]: sliding-window GLR baseline.
//! * [`synth`], [`eval`], [`analysis`]: scenario generation, metrics and
//!   numerical oracles.

pub mod afcd;
pub mod analysis;
pub mod cafcd;
pub mod detector;
pub mod error;
pub mod eval;
pub mod filters;
pub mod glr;
pub mod io;
pub mod plot;
pub mod synth;
pub mod vce;

pub use afcd::{Afcd, AfcdConfig, MuNormalization};
pub use cafcd::{Cafcd, CafcdConfig};
pub use detector::{DetectionEvent, Detector};
pub use error::{Error, Result};
pub use filters::{VolatilityFilter, WeightScheme, WeightVector};
pub use glr::{Glr, GlrConfig};
pub use synth::{Scenario, SynthConfig};
pub use vce::VceConfig;
