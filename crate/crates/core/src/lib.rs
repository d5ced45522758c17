pub mod dedup;
pub mod io;
pub mod preprocess;
pub mod quality;
pub mod record;
pub mod report;
pub mod text;
pub mod fluency;
pub mod safety;
pub mod scorer;
pub mod cot;
pub mod runner;

pub use io::{CorpusError, JsonlWriter, RecordReader};
pub use record::DocumentRecord;
pub use report::{RunManifest, StageFailure, StageReport};
pub use runner::{load_config, run_pipeline, validate_config, PipelineConfig, RunOptions, RunOutcome};
pub use scorer::Scorer;
