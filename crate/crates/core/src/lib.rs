//! Emoji diffusion and cross-version emoji interpretation.
//!
//! The crate segments emojis against a versioned lexicon, tracks their
//! spread over time, scores sentiment, and uses a classifier trained on
//! pre-cutoff emojis to explain (and stand in for) newer ones.

pub mod annotate;
pub mod classifier;
pub mod corpus;
pub mod diffusion;
pub mod interpret;
pub mod lexicon;
pub mod output;
pub mod pipeline;
pub mod sentiment;
pub mod substitute;

pub use classifier::{Classifier, LabeledDataset, LabeledItem, NaiveBayes, Prediction, PredictionFile};
pub use corpus::synth::{generate, SynthCorpus, SynthSpec};
pub use corpus::{Corpus, Granularity, Post, TimeBucket, Token, TokenizedPost};
pub use interpret::{SalienceTable, SurrogateRanking, SurrogateReport, TargetSet};
pub use lexicon::{EmojiEntry, EmojiId, EmojiStatus, EmojiVersion, Lexicon, VersionCutoff};
pub use output::OutputHeader;
pub use pipeline::{run_pipeline, Manifest, PipelineConfig, PipelineKind};
pub use sentiment::{Polarity, Scorer};
pub use substitute::{EvalReport, Mode, SubstitutionPolicy};
