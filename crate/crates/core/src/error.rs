use thiserror::Error;

/// Errors raised by the protocol state machines and the simulator.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("malformed frame: {0}")]
    Frame(String),
    #[error("invalid padding")]
    Padding,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("counter exhausted")]
    CounterExhausted,
    #[error("sequence number exhausted")]
    SequenceExhausted,
    #[error("key chain exhausted at interval {0}")]
    ChainExhausted(u64),
    #[error("broadcast buffer full ({0} packets)")]
    BufferOverflow(usize),
    #[error("key disclosure for interval {0} does not verify against the chain")]
    KeyRejected(u32),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("all {0} uses of emergency message {1} are exhausted")]
    UsesExhausted(u16, u16),
    #[error("no unused commitment of message {0} expires late enough")]
    NoValidWindow(u16),
    #[error("adversary script error: {0}")]
    Script(String),
}

impl Error {
    /// Short upper-case token used in transcripts.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Frame(_) => "FRAME",
            Error::Padding => "PADDING",
            Error::InvalidArgument(_) => "INVALID_ARGUMENT",
            Error::CounterExhausted => "COUNTER_EXHAUSTED",
            Error::SequenceExhausted => "SEQUENCE_EXHAUSTED",
            Error::ChainExhausted(_) => "CHAIN_EXHAUSTED",
            Error::BufferOverflow(_) => "BUFFER_OVERFLOW",
            Error::KeyRejected(_) => "KEY_REJECTED",
            Error::Protocol(_) => "PROTOCOL",
            Error::UsesExhausted(..) => "USES_EXHAUSTED",
            Error::NoValidWindow(_) => "NO_VALID_WINDOW",
            Error::Script(_) => "SCRIPT",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
