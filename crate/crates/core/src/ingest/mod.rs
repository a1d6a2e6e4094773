//! Reading event files, prediction logs and run directories.

pub mod catalog;
pub mod event;
pub mod frame;
pub mod predictions;

pub use catalog::{
    discover_runs, is_event_file, load_run, FileWarning, IngestError, Ingestor, Run, RunCatalog, RunHealth, CONFIG_FILE,
};
pub use event::{decode_event, decode_scalar_event, DecodeError, ScalarEvent};
pub use frame::{read_record_stream, FrameError, FrameReader, MaskedCrc, RecordFrame};
pub use predictions::{
    parse_prediction_log, BBox, Env, GtBox, LineError, Outcome, ParsedLog, PredBox, PredictionRecord, Task,
    PREDICTIONS_FILE,
};
