//! Experiment runner: datasets, the mask × method grid, tables and error maps.
//!
//! A grid run is driven by an [`ExperimentConfig`], usually read from TOML:
//!
//! ```
//! use ganrecon::bench::{ExperimentConfig, Method};
//!
//! let cfg = ExperimentConfig::from_toml_str(r#"
//!     seed = 7
//!     methods = ["zf", "tv"]
//!
//!     [dataset]
//!     kind = "phantom"
//!     size = 32
//!
//!     [[masks]]
//!     scheme = "cartesian"
//!     targets = [2, 4]
//! "#).unwrap();
//! assert_eq!(cfg.methods, vec![Method::Zf, Method::Tv]);
//! assert_eq!(cfg.cell_count(), 4);
//! ```

mod config;
mod data;
mod grid;
mod table;

pub use config::{
    DatasetConfig, ExperimentConfig, FilesDataset, LearnedSection, MaskConfig, Method, PhantomDataset,
    DEFAULT_ERROR_VMAX,
};
pub use data::{ingest, load_dataset, stacks, Anatomy, Dataset, Volume};
pub use grid::{cell_dir_name, error_map, run_grid, save_error_map, GridOutput};
pub use table::{format_table, method_label, scheme_label};
