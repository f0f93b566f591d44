//! Case files, checkpoints and diagnostic exports.

pub mod case;
pub mod checkpoint;
pub mod export;

pub use case::{parse_case, parse_case_str, write_case, Case, DSHAPE, DSHAPE_CASE};
pub use checkpoint::{read_checkpoint, write_checkpoint, CheckpointData};
