//! Timed credibility monitors and trend labelling.

use std::sync::Mutex;

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};

use super::store::Store;
use super::TweetScorer;
use crate::error::{Error, Result};
use crate::model::{extract_user_features, LAST_N_SCORES};
use crate::scoring::user_credibility;

pub const DEFAULT_INTERVAL_MINUTES: i64 = 60;
pub const DEFAULT_FLAT_EPSILON: f64 = 0.005;

pub trait Clock {
    fn now(&self) -> DateTime<Utc>;
    /// Blocks until `now() >= t`.
    fn sleep_until(&self, t: DateTime<Utc>);
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }

    fn sleep_until(&self, t: DateTime<Utc>) {
        if let Ok(wait) = (t - Utc::now()).to_std() {
            std::thread::sleep(wait);
        }
    }
}

/// Manually driven clock; sleeping jumps straight to the target time.
#[derive(Debug)]
pub struct FakeClock {
    now: Mutex<DateTime<Utc>>,
}

impl FakeClock {
    pub fn new(start: DateTime<Utc>) -> Self {
        FakeClock {
            now: Mutex::new(start),
        }
    }

    pub fn advance(&self, by: Duration) {
        *self.now.lock().unwrap() += by;
    }
}

impl Clock for FakeClock {
    fn now(&self) -> DateTime<Utc> {
        *self.now.lock().unwrap()
    }

    fn sleep_until(&self, t: DateTime<Utc>) {
        let mut now = self.now.lock().unwrap();
        if *now < t {
            *now = t;
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    samples: Vec<(DateTime<Utc>, f64)>,
}

impl TimeSeries {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_samples(samples: Vec<(DateTime<Utc>, f64)>) -> Result<Self> {
        let mut s = TimeSeries::new();
        for (t, v) in samples {
            s.push(t, v)?;
        }
        Ok(s)
    }

    /// Timestamps must strictly increase and values lie in [0, 1].
    pub fn push(&mut self, at: DateTime<Utc>, value: f64) -> Result<()> {
        if let Some((last, _)) = self.samples.last() {
            if at <= *last {
                return Err(Error::InvalidInput(format!(
                    "sample at {at} does not follow {last}"
                )));
            }
        }
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::InvalidInput(format!("sample value {value} outside [0, 1]")));
        }
        self.samples.push((at, value));
        Ok(())
    }

    pub fn samples(&self) -> &[(DateTime<Utc>, f64)] {
        &self.samples
    }

    pub fn values(&self) -> Vec<f64> {
        self.samples.iter().map(|(_, v)| *v).collect()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["timestamp", "score"])?;
        for (t, v) in &self.samples {
            w.write_record([t.to_rfc3339(), v.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("series", e))?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let mut s = TimeSeries::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let bad = |m: String| Error::parse("series", i + 2, m);
            let t = rec
                .get(0)
                .and_then(|v| DateTime::parse_from_rfc3339(v).ok())
                .ok_or_else(|| bad("bad timestamp".into()))?
                .with_timezone(&Utc);
            let v: f64 = rec
                .get(1)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| bad("bad score".into()))?;
            s.push(t, v).map_err(|e| bad(e.to_string()))?;
        }
        Ok(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum MonitorTarget {
    Tweet(String),
    User(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonitorJob {
    pub target: MonitorTarget,
    pub interval: Duration,
    pub samples: TimeSeries,
}

fn run_ticks(
    target: MonitorTarget,
    interval: Duration,
    clock: &dyn Clock,
    ticks: usize,
    mut sample: impl FnMut(DateTime<Utc>) -> Result<f64>,
) -> Result<MonitorJob> {
    if interval <= Duration::zero() {
        return Err(Error::InvalidInput("monitor interval must be positive".into()));
    }
    let start = clock.now();
    let mut samples = TimeSeries::new();
    for i in 0..ticks {
        clock.sleep_until(start + interval * i as i32);
        let now = clock.now();
        samples.push(now, sample(now)?)?;
    }
    Ok(MonitorJob {
        target,
        interval,
        samples,
    })
}

/// Scores the tweet's latest stored snapshot at each of `ticks` ticks, the first one
/// immediately. Snapshots stored after a tick's time are not visible to that tick.
pub fn monitor_tweet(
    store: &Store,
    tweet_id: &str,
    interval: Duration,
    clock: &dyn Clock,
    ticks: usize,
    scorer: &TweetScorer,
) -> Result<MonitorJob> {
    if !store.has_tweet(tweet_id) {
        return Err(Error::UnknownId {
            kind: "tweet",
            id: tweet_id.into(),
        });
    }
    run_ticks(MonitorTarget::Tweet(tweet_id.into()), interval, clock, ticks, |now| {
        let tweet = store
            .get_tweet_at(tweet_id, now)
            .or_else(|| store.tweet_snapshots(tweet_id).first().map(|(_, t)| *t))
            .expect("tweet present");
        let author = store
            .get_user_at(&tweet.author_id, now)
            .or_else(|| store.get_user(&tweet.author_id))
            .ok_or_else(|| Error::UnknownId {
                kind: "user",
                id: tweet.author_id.clone(),
            })?;
        scorer.score(tweet, author)
    })
}

/// User credibility at each tick, averaging the scores of the user's 20 newest stored tweets.
pub fn monitor_user(
    store: &Store,
    user_id: &str,
    interval: Duration,
    clock: &dyn Clock,
    ticks: usize,
    scorer: &TweetScorer,
) -> Result<MonitorJob> {
    if !store.has_user(user_id) {
        return Err(Error::UnknownId {
            kind: "user",
            id: user_id.into(),
        });
    }
    run_ticks(MonitorTarget::User(user_id.into()), interval, clock, ticks, |now| {
        let user = store
            .get_user_at(user_id, now)
            .or_else(|| store.get_user(user_id))
            .expect("user present");
        let scores = store
            .list_recent_at(user_id, LAST_N_SCORES, now)
            .into_iter()
            .map(|t| scorer.score(t, user))
            .collect::<Result<Vec<f64>>>()?;
        let features = extract_user_features(user, now.max(user.creation_date), &scores)?;
        user_credibility(&features, &scorer.weights)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Trend {
    Constant,
    Growing,
    Decreasing,
    Mixed,
}

impl Trend {
    pub fn as_str(self) -> &'static str {
        match self {
            Trend::Constant => "Constant",
            Trend::Growing => "Growing",
            Trend::Decreasing => "Decreasing",
            Trend::Mixed => "Mixed",
        }
    }
}

/// Shape of a score series. Steps within `flat_epsilon` are treated as noise.
pub fn trend(values: &[f64], flat_epsilon: f64) -> Result<Trend> {
    if values.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "trend needs at least 2 samples, got {}",
            values.len()
        )));
    }
    if !(flat_epsilon >= 0.0) {
        return Err(Error::InvalidInput("flat epsilon must be non-negative".into()));
    }
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    if max - min <= flat_epsilon {
        return Ok(Trend::Constant);
    }
    let net = values[values.len() - 1] - values[0];
    let deltas = || values.windows(2).map(|w| w[1] - w[0]);
    if net > flat_epsilon && deltas().all(|d| d >= -flat_epsilon) {
        Ok(Trend::Growing)
    } else if net < -flat_epsilon && deltas().all(|d| d <= flat_epsilon) {
        Ok(Trend::Decreasing)
    } else {
        Ok(Trend::Mixed)
    }
}
