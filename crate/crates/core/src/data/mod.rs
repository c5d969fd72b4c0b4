//! Dataset records, route splitting, feature encoding and mobility matrices.

pub mod features;
pub mod io;
pub mod mobility;
pub mod schema;
pub mod split;

pub use features::{EncodedSample, FeatureStats, Target};
pub use io::{parse_dataset, read_dataset, write_dataset, AoiTable};
pub use mobility::MobilityTensors;
pub use schema::{DayContext, DayRecord, Kind, Package, Sample, Truth, Weather};
pub use split::{route_segments, split_routes, Segment};
