//! Series ingestion, calendar alignment, scaling, windowing and splitting.

mod align;
mod fetch;
mod manifest;
mod scale;
mod series;
mod synthetic;
mod windows;

pub use align::{align, Aligned};
pub use fetch::{cache_path, fetch_http};
pub use manifest::{ChannelSpec, DatasetManifest, Role};
pub use scale::{fit_apply_minmax, MinMaxScaler};
pub(crate) use series::csv_io;
pub use series::{load_csv, parse_csv, write_csv, RawSeries};
pub use synthetic::{synthetic_series, SyntheticConfig};
pub use windows::{make_windows, Sample, Split, WindowPlan, WindowedDataset};
