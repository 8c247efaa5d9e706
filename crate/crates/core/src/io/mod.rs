//! File formats: graph specs, dataset CSV and reports.

pub mod data;
pub mod report;
pub mod spec;

pub use data::{dataset_from_str, dataset_to_string, read_dataset, write_dataset};
pub use report::{emit_report, parse_machine_report, Format, Report};
pub use spec::{parse_graph_spec, serialize_graph_spec, GraphSpec, TaggingBlock};
