//! Terrain-based longitudinal localization from active-suspension sensor data.
//!
//! The pipeline, end to end:
//!
//! 1. [`quarter_car`] simulates each wheel corner over a synthetic road and
//!    produces the suspension sensor streams (and identifies model parameters
//!    back from them).
//! 2. [`reconstruction`] inverts the wheel dynamics to recover road height
//!    as a function of time.
//! 3. [`resample`] converts time-indexed profiles to a uniform distance grid.
//! 4. [`pitch`] combines the four corners into a chassis pitch profile and
//!    differentiates it with respect to distance.
//! 5. [`terrain_map`] holds the crowd-sourced master height profile on a
//!    road graph and merges new drives into it.
//! 6. [`localizer`] matches a trailing buffer of live pitch against the
//!    master profile in real time, falling back to dead reckoning.
//!
//! [`matching`] carries the cross-correlation machinery used by both map
//! building and localization, and [`scenario`] wires everything into the
//! reference synthetic experiment used by the CLI and the acceptance suite.

pub mod error;
pub mod fsutil;
pub mod localizer;
pub mod matching;
pub mod pitch;
pub mod quarter_car;
pub mod reconstruction;
pub mod resample;
pub mod scenario;
pub mod terrain_map;
mod textio;

pub use error::{Error, Result};

pub use localizer::{Estimate, Localizer, LocalizerConfig, MasterPitch, Status};
pub use matching::{CorrelationResult, Correlator};
pub use pitch::{CornerProfiles, VehicleGeometry};
pub use quarter_car::{QuarterCarParams, QuarterCarState, RoadInput, SensorStream};
pub use reconstruction::{ReconstructionConfig, TimeProfile};
pub use resample::{DistanceProfile, Units};
pub use terrain_map::{GpsPoint, GraphMap, MasterProfile, Stretch, TerrainMap};

