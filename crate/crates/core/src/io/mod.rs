//! Dataset ingestion, model files and CSV reports.

pub mod idx;
pub mod model_file;
pub mod report;

pub use idx::{load_idx, Dataset};
pub use model_file::{load_model, save_model};
pub use report::{read_report, write_report};
