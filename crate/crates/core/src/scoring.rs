//! Closed-form credibility formulas for tweets and users.
//!
//! Both scores are weighted sums of features in [0, 1]. With non-negative weights that
//! sum to one the result also lies in [0, 1].

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{TweetFeatures, UserFeatures};
use crate::sentiment::SentimentLabel;

const SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FormulaWeights {
    pub w_r: f64,
    pub w_f: f64,
    pub w_w: f64,
    pub w_s: f64,
    pub w_l: f64,
    pub w_u: f64,
    pub w_d: f64,
    pub w_v: f64,
    pub w_g: f64,
    pub w_c: f64,
    pub w_a20: f64,
    /// When false, weight vectors that do not sum to one are accepted.
    #[serde(default = "yes")]
    pub enforce_unit_sum: bool,
}

fn yes() -> bool {
    true
}

impl Default for FormulaWeights {
    fn default() -> Self {
        FormulaWeights {
            w_r: 0.1,
            w_f: 0.3,
            w_w: 0.5,
            w_s: 0.1,
            w_l: 0.01,
            w_u: 0.01,
            w_d: 0.03,
            w_v: 0.1,
            w_g: 0.08,
            w_c: 0.07,
            w_a20: 0.7,
            enforce_unit_sum: true,
        }
    }
}

impl FormulaWeights {
    pub fn tweet_weights(&self) -> [f64; 4] {
        [self.w_r, self.w_f, self.w_w, self.w_s]
    }

    pub fn user_weights(&self) -> [f64; 7] {
        [
            self.w_l, self.w_u, self.w_d, self.w_v, self.w_g, self.w_c, self.w_a20,
        ]
    }

    fn check(&self, which: &str, ws: &[f64]) -> Result<()> {
        if let Some(w) = ws.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::InvalidWeights(format!(
                "{which} weight {w} is negative or not finite"
            )));
        }
        let sum: f64 = ws.iter().sum();
        if self.enforce_unit_sum && (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidWeights(format!(
                "{which} weights sum to {sum}, expected 1"
            )));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.check("tweet", &self.tweet_weights())?;
        self.check("user", &self.user_weights())
    }

    /// Reads `key = value` lines (`w_r`, ..., `w_a20`, `enforce_unit_sum`). Unlisted keys keep
    /// their defaults; `#` starts a comment.
    pub fn parse(content: &str) -> Result<Self> {
        let mut w = FormulaWeights::default();
        for (lineno, line) in content.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse("weights", lineno + 1, "expected key=value"))?;
            let (key, value) = (key.trim(), value.trim());
            if key == "enforce_unit_sum" {
                w.enforce_unit_sum = value
                    .parse()
                    .map_err(|_| Error::parse("weights", lineno + 1, "expected true/false"))?;
                continue;
            }
            let slot = match key.strip_prefix("weights.").unwrap_or(key) {
                "w_r" => &mut w.w_r,
                "w_f" => &mut w.w_f,
                "w_w" => &mut w.w_w,
                "w_s" => &mut w.w_s,
                "w_l" => &mut w.w_l,
                "w_u" => &mut w.w_u,
                "w_d" => &mut w.w_d,
                "w_v" => &mut w.w_v,
                "w_g" => &mut w.w_g,
                "w_c" => &mut w.w_c,
                "w_a20" => &mut w.w_a20,
                other => {
                    return Err(Error::parse(
                        "weights",
                        lineno + 1,
                        format!("unknown weight {other:?}"),
                    ))
                }
            };
            *slot = value
                .parse()
                .map_err(|_| Error::parse("weights", lineno + 1, format!("bad number {value:?}")))?;
        }
        w.validate()?;
        Ok(w)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&content)
    }
}

/// Per-token contribution to the sentiment term.
pub fn sentiment_weight(label: SentimentLabel) -> f64 {
    match label {
        SentimentLabel::VeryNegative => 0.75,
        SentimentLabel::Negative => 0.50,
        SentimentLabel::Neutral => 0.00,
        SentimentLabel::Positive => 0.25,
        SentimentLabel::VeryPositive => 0.50,
    }
}

/// Mean token weight; 0 for no tokens.
pub fn sentiment_term(labels: &[SentimentLabel]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    labels.iter().map(|l| sentiment_weight(*l)).sum::<f64>() / labels.len() as f64
}

pub fn tweet_credibility(f: &TweetFeatures, w: &FormulaWeights) -> Result<f64> {
    w.check("tweet", &w.tweet_weights())?;
    Ok(w.w_r * f.retweets_score
        + w.w_f * f.favorites_score
        + w.w_w * f.relevant_words_ratio
        + w.w_s * f.sentiment_score)
}

pub fn user_credibility(u: &UserFeatures, w: &FormulaWeights) -> Result<f64> {
    w.check("user", &w.user_weights())?;
    Ok(w.w_l * u.u_location as f64
        + w.w_u * u.u_url as f64
        + w.w_d * u.u_description as f64
        + w.w_v * u.u_verified as f64
        + w.w_g * u.u_geo as f64
        + w.w_c * u.u_age_ratio
        + w.w_a20 * u.u_avg_last20)
}
