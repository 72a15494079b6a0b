//! CIFAR-10 batches, image files and report tables.

mod cifar;
mod image;
mod report;
mod synthetic;

pub use cifar::{
    class_index, load_cifar10_batch, natural_images, write_cifar10_batch, Cifar10Batch, Cifar10Record, CIFAR_SHAPE, CLASS_NAMES,
    PIXELS, RECORD_BYTES,
};
pub use image::{encode_ppm, read_float_image, write_float_image, write_image};
pub use report::{
    read_csv_report, read_json_report, report_rows, write_report, write_rows, ArchitectureAudit, JsonReport, ReportFormat,
    ReportRow, RunOutcome, COLUMNS, SCHEMA_VERSION,
};
pub use synthetic::{synthetic_image, synthetic_images};
