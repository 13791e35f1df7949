//! Data pipeline: protocol metadata, tracked-point ingestion, MLS smoothing,
//! spline resampling, synthetic generation, storage and splits.

mod dataset;
mod mls;
mod protocol;
mod spline;
mod split;
mod synthetic;
mod tracked;

pub use dataset::{Dataset, Manifest, SampleMeta, DATASET_FORMAT_VERSION, MANIFEST_FILE, SAMPLES_FILE};
pub use mls::{cubic_spline_weight, mls_smooth, mls_smooth_values, nodal_spacing, shape_functions, MlsConfig};
pub use protocol::{protocol, protocol_table, ProtocolSpec};
pub use spline::{spline_matrix, spline_resample, spline_resample_to, tracked_extent, CubicSpline};
pub use split::{split_study, study_indices, study_protocols};
pub use synthetic::{edge_stretches, empirical_lipschitz, generate_synthetic, ramp, SyntheticConfig, SyntheticOperator};
pub use tracked::{
    frames_to_samples, ingest_tracked_csv, parse_tracked_csv, ring_nodes, write_tracked_csv, ScatteredSample,
    TrackedFrames,
};
