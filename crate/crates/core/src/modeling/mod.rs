//! Statistical models over session sequences.

pub mod collocation;
pub mod ngram;

pub use collocation::{extract_collocations, g_squared, pmi, CollocationStat, Measure, PairCounts};
pub use ngram::{train_ngram, NgramCounts, NgramModel, Token, DEFAULT_K};

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("model order must be at least 1, got {0}")]
    InvalidOrder(usize),
    #[error("smoothing constant must be positive and finite, got {0}")]
    InvalidSmoothing(f64),
    #[error("corpus contains no sessions")]
    EmptyCorpus,
    #[error("symbol U+{:04X} is not in the dictionary", u32::from(*.0))]
    UnknownSymbol(char),
    #[error("sessions were encoded with dictionary {sessions} but the model uses {model}")]
    DictionaryMismatch { sessions: String, model: String },
    #[error("malformed model file: {0}")]
    Format(String),
    #[error("model i/o: {0}")]
    Io(#[source] std::io::Error),
}
