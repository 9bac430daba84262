//! Domain records and feature extraction shared by every scoring path.

use chrono::{DateTime, Months, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scoring::sentiment_term;
use crate::sentiment::SentimentLabel;
use crate::text::{tokens, Stopwords, Token};

/// Fraction of an author's followers assumed to see a post without any amplification.
pub const REACH_FRACTION: f64 = 0.03;

/// Number of profile tweets retained per user.
pub const RECENT_TWEETS_CAPACITY: usize = 40;

/// Number of most recent tweet scores averaged into the user score.
pub const LAST_N_SCORES: usize = 20;

/// The platform's public launch (2006-07-15T00:00:00Z); the age ratio is measured from here.
pub fn platform_epoch() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2006, 7, 15, 0, 0, 0).unwrap()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGeoPoint")]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

#[derive(Deserialize)]
struct RawGeoPoint {
    lat: f64,
    lon: f64,
}

impl TryFrom<RawGeoPoint> for GeoPoint {
    type Error = Error;

    fn try_from(raw: RawGeoPoint) -> Result<Self> {
        GeoPoint::new(raw.lat, raw.lon)
    }
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self> {
        if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
            return Err(Error::InvalidInput(format!(
                "geo point out of range: lat={lat}, lon={lon}"
            )));
        }
        Ok(GeoPoint { lat, lon })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tweet {
    pub id: String,
    pub text: String,
    pub author_id: String,
    pub retweets_no: u64,
    pub favorites_no: u64,
    pub creation_date: DateTime<Utc>,
    #[serde(default)]
    pub geo: Option<GeoPoint>,
    pub language: String,
    #[serde(default)]
    pub is_retweet: bool,
    #[serde(default)]
    pub hashtags: Vec<String>,
}

impl Tweet {
    pub fn validate(&self) -> Result<()> {
        if let Some(bad) = self.hashtags.iter().find(|h| !h.starts_with('#')) {
            return Err(Error::InvalidInput(format!(
                "tweet {}: hashtag {bad:?} does not start with '#'",
                self.id
            )));
        }
        Ok(())
    }

    /// Retweet by flag or by the conventional `RT @` text prefix.
    pub fn looks_like_retweet(&self) -> bool {
        self.is_retweet || self.text.starts_with("RT @")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserProfile {
    pub id: String,
    pub has_location: bool,
    pub has_description: bool,
    pub has_url: bool,
    pub has_geo: bool,
    pub is_verified: bool,
    pub creation_date: DateTime<Utc>,
    pub followers_no: u64,
    /// Most recent first.
    #[serde(default)]
    pub recent_tweets: Vec<String>,
}

impl UserProfile {
    pub fn validate(&self) -> Result<()> {
        if self.recent_tweets.len() > RECENT_TWEETS_CAPACITY {
            return Err(Error::InvalidInput(format!(
                "user {}: {} recent tweets exceeds capacity {RECENT_TWEETS_CAPACITY}",
                self.id,
                self.recent_tweets.len()
            )));
        }
        if self.creation_date < platform_epoch() {
            return Err(Error::InvalidInput(format!(
                "user {}: creation date {} precedes the platform launch",
                self.id, self.creation_date
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TweetFeatures {
    pub retweets_score: f64,
    pub favorites_score: f64,
    pub relevant_words_ratio: f64,
    pub sentiment_score: f64,
    #[serde(default)]
    pub hashtag_count: u32,
    #[serde(default)]
    pub hashtag_chars: u32,
    #[serde(default)]
    pub words_no: u32,
    #[serde(default)]
    pub characters_no: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct UserFeatures {
    pub u_location: u8,
    pub u_url: u8,
    pub u_description: u8,
    pub u_verified: u8,
    pub u_geo: u8,
    pub u_age_ratio: f64,
    pub u_avg_last20: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Credible,
    NotCredible,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Credible => "credible",
            Verdict::NotCredible => "not_credible",
        }
    }
}

impl std::str::FromStr for Verdict {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "credible" | "Credible" | "1" => Ok(Verdict::Credible),
            "not_credible" | "NotCredible" | "0" => Ok(Verdict::NotCredible),
            other => Err(Error::InvalidInput(format!("unknown verdict {other:?}"))),
        }
    }
}

/// `count / (REACH_FRACTION * followers)` clamped to [0, 1]; zero followers give 0.
fn reach_score(count: u64, followers: u64) -> f64 {
    if followers == 0 {
        return 0.0;
    }
    let reachable = REACH_FRACTION * followers as f64;
    (count as f64 / reachable).min(1.0)
}

pub fn extract_tweet_features<F>(
    tweet: &Tweet,
    author: &UserProfile,
    stopwords: &Stopwords,
    sentiment_fn: F,
) -> TweetFeatures
where
    F: Fn(&str) -> SentimentLabel,
{
    let mut total = 0usize;
    let mut relevant = 0usize;
    let mut labels = Vec::new();
    for token in tokens(&tweet.text) {
        total += 1;
        if let Token::Word(w) = token {
            labels.push(sentiment_fn(w));
            if !stopwords.contains(w) {
                relevant += 1;
            }
        }
    }
    let relevant_words_ratio = if total == 0 {
        0.0
    } else {
        relevant as f64 / total as f64
    };

    TweetFeatures {
        retweets_score: reach_score(tweet.retweets_no, author.followers_no),
        favorites_score: reach_score(tweet.favorites_no, author.followers_no),
        relevant_words_ratio,
        sentiment_score: sentiment_term(&labels),
        hashtag_count: tweet.hashtags.len() as u32,
        hashtag_chars: tweet
            .hashtags
            .iter()
            .map(|h| h.strip_prefix('#').unwrap_or(h).chars().count() as u32)
            .sum(),
        words_no: relevant as u32,
        characters_no: tweet.text.chars().count() as u32,
    }
}

/// Fractional calendar months from `from` to `to` (`from <= to`).
///
/// The whole part is the largest `k` such that `from + k months <= to`, where adding months
/// keeps the day-of-month and clamps to the last day of shorter months. The remainder is the
/// elapsed fraction of the following month step, `(to - start_k) / (start_{k+1} - start_k)`.
pub fn months_between(from: DateTime<Utc>, to: DateTime<Utc>) -> f64 {
    use chrono::Datelike;
    if to <= from {
        return 0.0;
    }
    let add = |k: u32| from.checked_add_months(Months::new(k)).expect("date in range");
    let estimate =
        (to.year() - from.year()) * 12 + to.month() as i32 - from.month() as i32;
    let mut k = estimate.max(0) as u32;
    while k > 0 && add(k) > to {
        k -= 1;
    }
    while add(k + 1) <= to {
        k += 1;
    }
    let start = add(k);
    let next = add(k + 1);
    let step = (next - start).num_milliseconds() as f64;
    let elapsed = (to - start).num_milliseconds() as f64;
    k as f64 + elapsed / step
}

pub fn extract_user_features(
    user: &UserProfile,
    now: DateTime<Utc>,
    last20_scores: &[f64],
) -> Result<UserFeatures> {
    if now < user.creation_date {
        return Err(Error::InvalidInput(format!(
            "user {}: evaluation time {now} precedes account creation {}",
            user.id, user.creation_date
        )));
    }
    if last20_scores.len() > LAST_N_SCORES {
        return Err(Error::InvalidInput(format!(
            "{} recent scores supplied, at most {LAST_N_SCORES} allowed",
            last20_scores.len()
        )));
    }
    if let Some(bad) = last20_scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
        return Err(Error::InvalidInput(format!("tweet score {bad} outside [0, 1]")));
    }

    let platform_months = months_between(platform_epoch(), now);
    let account_months = months_between(user.creation_date, now);
    let u_age_ratio = if platform_months <= 0.0 {
        1.0
    } else {
        (account_months / platform_months).clamp(0.0, 1.0)
    };
    let u_avg_last20 = if last20_scores.is_empty() {
        0.0
    } else {
        last20_scores.iter().sum::<f64>() / last20_scores.len() as f64
    };

    Ok(UserFeatures {
        u_location: user.has_location as u8,
        u_url: user.has_url as u8,
        u_description: user.has_description as u8,
        u_verified: user.is_verified as u8,
        u_geo: user.has_geo as u8,
        u_age_ratio,
        u_avg_last20,
    })
}


#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;
    use proptest::prelude::*;

    fn neutral(_: &str) -> SentimentLabel {
        SentimentLabel::Neutral
    }

    #[test]
    fn zero_engagement_scores_zero() {
        let f = extract_tweet_features(&tweet("hello"), &user(1000), &Stopwords::english(), neutral);
        assert_eq!(f.retweets_score, 0.0);
        assert_eq!(f.favorites_score, 0.0);
    }

    #[test]
    fn retweet_score_uses_reachable_followers() {
        let mut t = tweet("hello");
        t.retweets_no = 30;
        let f = extract_tweet_features(&t, &user(10_000), &Stopwords::english(), neutral);
        // 30 / (0.03 * 10000) = 30 / 300
        assert!((f.retweets_score - 0.1).abs() < 1e-15);
    }

    #[test]
    fn reach_scores_clamp_and_zero_followers() {
        let mut t = tweet("hello");
        t.retweets_no = 1_000;
        t.favorites_no = 5;
        let f = extract_tweet_features(&t, &user(100), &Stopwords::english(), neutral);
        assert_eq!(f.retweets_score, 1.0);
        // 5 / 3 before clamping
        assert_eq!(f.favorites_score, 1.0);
        let f = extract_tweet_features(&t, &user(0), &Stopwords::english(), neutral);
        assert_eq!((f.retweets_score, f.favorites_score), (0.0, 0.0));
    }

    #[test]
    fn all_stopwords_ratio_zero() {
        let sw = Stopwords::from_words(["the", "of", "a"]);
        let f = extract_tweet_features(&tweet("the of a"), &user(1), &sw, neutral);
        assert_eq!(f.relevant_words_ratio, 0.0);
        assert_eq!(f.words_no, 0);
    }

    #[test]
    fn empty_text_ratio_zero() {
        let f = extract_tweet_features(&tweet(""), &user(1), &Stopwords::english(), neutral);
        assert_eq!(f.relevant_words_ratio, 0.0);
        assert_eq!(f.characters_no, 0);
        assert_eq!(f.sentiment_score, 0.0);
    }

    #[test]
    fn punctuation_counts_in_denominator() {
        let sw = Stopwords::from_words(["the"]);
        let f = extract_tweet_features(&tweet("the attack !!! london"), &user(1), &sw, neutral);
        assert!((f.relevant_words_ratio - 0.5).abs() < 1e-15);
        assert_eq!(f.words_no, 2);
    }

    #[test]
    fn hashtag_features() {
        let mut t = tweet("news #London #attack");
        t.hashtags = vec!["#London".into(), "#attack".into()];
        let f = extract_tweet_features(&t, &user(1), &Stopwords::english(), neutral);
        assert_eq!(f.hashtag_count, 2);
        assert_eq!(f.hashtag_chars, 12);
        assert_eq!(f.characters_no, 20);
    }

    #[test]
    fn sentiment_from_tokens() {
        let lookup = |w: &str| {
            if w == "kill" {
                SentimentLabel::VeryNegative
            } else {
                SentimentLabel::Neutral
            }
        };
        let f = extract_tweet_features(&tweet("kill bill"), &user(1), &Stopwords::english(), lookup);
        assert!((f.sentiment_score - 0.375).abs() < 1e-15);
    }

    #[test]
    fn retweet_detection() {
        let mut t = tweet("RT @nasa: launch");
        assert!(t.looks_like_retweet());
        t.text = "launch".into();
        assert!(!t.looks_like_retweet());
        t.is_retweet = true;
        assert!(t.looks_like_retweet());
    }

    #[test]
    fn validation() {
        let mut t = tweet("x");
        t.hashtags = vec!["nohash".into()];
        assert!(t.validate().is_err());
        let mut u = user(1);
        u.creation_date = Utc.with_ymd_and_hms(2006, 7, 14, 23, 59, 59).unwrap();
        assert!(u.validate().is_err());
        u.creation_date = platform_epoch();
        assert!(u.validate().is_ok());
        u.recent_tweets = (0..41).map(|i| i.to_string()).collect();
        assert!(u.validate().is_err());
        assert!(GeoPoint::new(91.0, 0.0).is_err());
        assert!(GeoPoint::new(0.0, -180.0).is_ok());
        assert!(serde_json::from_str::<GeoPoint>(r#"{"lat":0,"lon":200}"#).is_err());
    }

    #[test]
    fn months_between_rules() {
        let d = |y, m, day| Utc.with_ymd_and_hms(y, m, day, 0, 0, 0).unwrap();
        assert_eq!(months_between(d(2006, 7, 15), d(2026, 7, 15)), 240.0);
        assert_eq!(months_between(d(2020, 1, 31), d(2020, 2, 29)), 1.0);
        // Jan 31 + 1 month clamps to Feb 29, + 2 months is Mar 31: Mar 1 is 1 day into a 31-day step.
        let m = months_between(d(2020, 1, 31), d(2020, 3, 1));
        assert!((m - (1.0 + 1.0 / 31.0)).abs() < 1e-12, "{m}");
        // Half of July 2020 (31 days) from the 1st.
        let mid = Utc.with_ymd_and_hms(2020, 7, 16, 12, 0, 0).unwrap();
        assert!((months_between(d(2020, 7, 1), mid) - 0.5).abs() < 1e-12);
        assert_eq!(months_between(d(2020, 1, 1), d(2019, 1, 1)), 0.0);
    }

    #[test]
    fn age_ratio_cases() {
        let now = Utc.with_ymd_and_hms(2026, 7, 15, 0, 0, 0).unwrap();
        let mut u = user(10);
        u.creation_date = platform_epoch();
        assert_eq!(extract_user_features(&u, now, &[]).unwrap().u_age_ratio, 1.0);
        // 120 of 240 months.
        u.creation_date = Utc.with_ymd_and_hms(2016, 7, 15, 0, 0, 0).unwrap();
        let f = extract_user_features(&u, now, &[]).unwrap();
        assert_eq!(f.u_age_ratio, 0.5);
        assert_eq!(f.u_avg_last20, 0.0);
        assert_eq!(
            (f.u_location, f.u_url, f.u_description, f.u_verified, f.u_geo),
            (1, 1, 0, 0, 0)
        );
    }

    #[test]
    fn user_features_errors() {
        let u = user(10);
        let before = Utc.with_ymd_and_hms(2009, 1, 1, 0, 0, 0).unwrap();
        assert!(extract_user_features(&u, before, &[]).is_err());
        let now = Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap();
        assert!(extract_user_features(&u, now, &[0.5; 21]).is_err());
        assert!(extract_user_features(&u, now, &[1.5]).is_err());
        let f = extract_user_features(&u, now, &[0.2, 0.4]).unwrap();
        assert!((f.u_avg_last20 - 0.3).abs() < 1e-15);
    }

    #[test]
    fn serde_defaults() {
        let json = r#"{"id":"1","text":"hi","author_id":"u","retweets_no":1,"favorites_no":2,
            "creation_date":"2017-03-22T10:00:00Z","language":"en"}"#;
        let t: Tweet = serde_json::from_str(json).unwrap();
        assert!(t.geo.is_none() && t.hashtags.is_empty() && !t.is_retweet);
    }

    fn arb_text() -> impl Strategy<Value = String> {
        proptest::collection::vec(
            prop_oneof![
                Just("the".to_string()),
                Just("of".to_string()),
                Just("!!".to_string()),
                "[a-zA-Z]{1,8}",
                "[#@]?[a-z]{0,5}[.,:]?",
            ],
            0..20,
        )
        .prop_map(|ws| ws.join(" "))
    }

    proptest! {
        #[test]
        fn features_in_range(
            text in arb_text(),
            rt in 0u64..1_000_000,
            fav in 0u64..1_000_000,
            followers in 0u64..10_000_000,
        ) {
            let mut t = tweet(&text);
            t.retweets_no = rt;
            t.favorites_no = fav;
            let lookup = |w: &str| match w.len() % 5 {
                0 => SentimentLabel::VeryNegative,
                1 => SentimentLabel::Negative,
                2 => SentimentLabel::Neutral,
                3 => SentimentLabel::Positive,
                _ => SentimentLabel::VeryPositive,
            };
            let sw = Stopwords::english();
            let f = extract_tweet_features(&t, &user(followers), &sw, lookup);
            prop_assert!((0.0..=1.0).contains(&f.retweets_score));
            prop_assert!((0.0..=1.0).contains(&f.favorites_score));
            prop_assert!((0.0..=1.0).contains(&f.relevant_words_ratio));
            prop_assert!((0.0..=1.0).contains(&f.sentiment_score));
            let again = extract_tweet_features(&t, &user(followers), &sw, lookup);
            prop_assert_eq!(
                (f.retweets_score.to_bits(), f.relevant_words_ratio.to_bits(), f.sentiment_score.to_bits()),
                (again.retweets_score.to_bits(), again.relevant_words_ratio.to_bits(), again.sentiment_score.to_bits())
            );
        }

        #[test]
        fn removing_stopword_never_lowers_ratio(text in arb_text(), idx in 0usize..20) {
            let sw = Stopwords::english();
            let parts: Vec<&str> = text.split_whitespace().collect();
            let stop_positions: Vec<usize> = parts
                .iter()
                .enumerate()
                .filter(|(_, p)| sw.contains(p))
                .map(|(i, _)| i)
                .collect();
            prop_assume!(!stop_positions.is_empty());
            let drop = stop_positions[idx % stop_positions.len()];
            let reduced: Vec<&str> = parts
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != drop)
                .map(|(_, p)| *p)
                .collect();
            let before = extract_tweet_features(&tweet(&text), &user(1), &sw, neutral);
            let after = extract_tweet_features(&tweet(&reduced.join(" ")), &user(1), &sw, neutral);
            prop_assert!(after.relevant_words_ratio >= before.relevant_words_ratio);
        }
    }
}
