//! Deterministic synthetic datasets and their file formats.

pub mod events;
pub mod io;
pub mod points;

pub use events::{generate_event_dataset, integrate_frames, Event, EventCloudSample, EventDataset, EventDatasetConfig};
pub use points::{
    generate_point_dataset, stack_points, PointCloudSample, PointDataset, PointDatasetConfig, PRIMITIVES,
};
