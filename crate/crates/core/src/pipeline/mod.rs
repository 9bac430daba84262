//! Ingestion, deduplication, persistence, monitoring and the end-to-end replay run.

pub mod dedup;
pub mod ingest;
pub mod monitor;
pub mod run;
pub mod store;

pub use dedup::{dedup, DedupMode, DedupResult};
pub use ingest::{ingest, IngestOptions, IngestOutcome, IngestRecord, RejectReason, Rejection};
pub use monitor::{monitor_tweet, monitor_user, trend, Clock, FakeClock, MonitorJob, SystemClock, TimeSeries, Trend};
pub use run::{run_pipeline, RunSummary};
pub use store::Store;

use crate::error::Result;
use crate::model::{extract_tweet_features, Tweet, TweetFeatures, UserProfile};
use crate::scoring::{tweet_credibility, FormulaWeights};
use crate::sentiment::{word_sentiment, WordLexicon};
use crate::text::Stopwords;

/// Feature extraction plus the weighted tweet formula.
#[derive(Debug, Clone)]
pub struct TweetScorer {
    pub stopwords: Stopwords,
    pub lexicon: WordLexicon,
    pub weights: FormulaWeights,
}

impl Default for TweetScorer {
    fn default() -> Self {
        TweetScorer {
            stopwords: Stopwords::english(),
            lexicon: WordLexicon::english(),
            weights: FormulaWeights::default(),
        }
    }
}

impl TweetScorer {
    pub fn features(&self, tweet: &Tweet, author: &UserProfile) -> TweetFeatures {
        extract_tweet_features(tweet, author, &self.stopwords, |w| {
            word_sentiment(w, &self.lexicon)
        })
    }

    pub fn score(&self, tweet: &Tweet, author: &UserProfile) -> Result<f64> {
        tweet_credibility(&self.features(tweet, author), &self.weights)
    }
}
