//! Event detection and sentiment analysis over timestamped tweet corpora.
//!
//! The crate is organised as a pipeline:
//!
//! * [`corpus`] parses Sentiment140-style CSV files and draws stratified subsets.
//! * [`preprocess`] turns raw tweets into token streams (MT, PT, CT, SCT, SFE).
//! * [`vectorize`] builds sparse document-term matrices, CBOW embeddings and
//!   loads externally computed dense embeddings.
//! * [`events`] finds bursty events with MABED, online LDA and Peaky Topics.
//! * [`classifiers`] trains the sentiment models behind one predict contract.
//! * [`ensemble`] runs every detector and every model and majority-votes the
//!   results per tweet and per event.
//! * [`evaluation`] scores predictions and runs stratified k-fold validation.

pub mod classifiers;
pub mod container;
pub mod corpus;
pub mod ensemble;
mod error;
pub mod evaluation;
pub mod events;
pub mod preprocess;
pub mod seed;
pub mod vectorize;

pub use corpus::{Corpus, SentimentLabel, Tweet};
pub use error::{Error, Result};
pub use preprocess::{PipelineKind, PipelineSpec, TokenizedDoc};
