//! News text to sentiment bars: hashed n-gram features, a regularized
//! linear sentence classifier, document scores and intraday aggregation.

pub mod bars;
pub mod classifier;
pub mod features;
pub mod score;

pub use bars::{aggregate_bars, EmptyBarPolicy, SentimentBar, SessionCalendar};
pub use classifier::{cross_validate, train, ClassifierModel, Label, Loss, Regularizer, SentenceExample, TrainConfig};
pub use features::{split_sentences, tokenize, FeatureHasher, SparseVector};
pub use score::{score_document, score_from_counts, DocumentScore};
