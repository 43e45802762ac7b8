//! Serialization: array containers, dataset layout, reports and run configs.

pub mod config;
pub mod container;
pub mod layout;
pub mod report;

pub use config::{BaselineConfig, DataConfig, EvaluationConfig, RunConfig, UnitMode};
pub use container::{read_array, write_array, Array, ArrayData};
pub use report::{format_sig6, Cell, Table};
