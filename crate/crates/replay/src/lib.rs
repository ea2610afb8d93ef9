//! Record/replay of raw channel bytes and bus envelopes in a single
//! little-endian log file, with byte-offset-bearing parse errors and a
//! timeline cursor for playback.

pub mod format;
pub mod reader;
pub mod replayer;
pub mod slice;
pub mod writer;

pub use format::{
    ChannelDef, Direction, LogFile, LogHeader, LogRecord, ReplayError, FORMAT_VERSION, MAGIC,
    PARTIAL_MARKER_CHANNEL,
};
pub use reader::{read_log, read_log_path};
pub use replayer::{realtime_interval, Replayer};
pub use slice::log_slice;
pub use writer::{log_to_bytes, write_log, LogWriter, Recorder};
