//! Watershed series: loading, validation, scaling, windowing and synthesis.

mod normalize;
mod series;
mod synthetic;
mod window;

pub use normalize::Normalizer;
pub use series::{load_series, parse_timestamp, split_chronological, HydroSeries, SeriesSchema, TIMESTAMP_FORMAT};
pub use synthetic::{generate_synthetic, unit_hydrograph, SyntheticConfig};
pub use window::{make_windows, window_count, WindowConfig, WindowedSample};
