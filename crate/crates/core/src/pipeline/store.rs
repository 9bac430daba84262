//! Append-only JSON-lines store for tweet and user snapshots and the score log.
//!
//! Each open appends to a fresh segment file `segment-NNNNNN.jsonl`; earlier segments are
//! never rewritten. The in-memory index is rebuilt from all segments on open.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Tweet, UserProfile};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreEntry {
    pub at: DateTime<Utc>,
    pub tweet_id: String,
    pub author_id: String,
    pub score: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Entry {
    Tweet { at: DateTime<Utc>, tweet: Tweet },
    User { at: DateTime<Utc>, user: UserProfile },
    Score(ScoreEntry),
}

#[derive(Debug, Default)]
struct Index {
    tweets: HashMap<String, BTreeMap<DateTime<Utc>, Tweet>>,
    users: HashMap<String, BTreeMap<DateTime<Utc>, UserProfile>>,
    /// Tweet ids per author.
    authored: HashMap<String, Vec<String>>,
    scores: HashMap<String, Vec<ScoreEntry>>,
}

impl Index {
    fn apply(&mut self, entry: Entry) -> Result<()> {
        match entry {
            Entry::Tweet { at, tweet } => {
                let snapshots = self.tweets.entry(tweet.id.clone()).or_default();
                if snapshots.contains_key(&at) {
                    return Err(duplicate("tweet", &tweet.id, at));
                }
                if snapshots.is_empty() {
                    self.authored
                        .entry(tweet.author_id.clone())
                        .or_default()
                        .push(tweet.id.clone());
                }
                snapshots.insert(at, tweet);
            }
            Entry::User { at, user } => {
                let snapshots = self.users.entry(user.id.clone()).or_default();
                if snapshots.contains_key(&at) {
                    return Err(duplicate("user", &user.id, at));
                }
                snapshots.insert(at, user);
            }
            Entry::Score(s) => self.scores.entry(s.tweet_id.clone()).or_default().push(s),
        }
        Ok(())
    }
}

fn duplicate(kind: &str, id: &str, at: DateTime<Utc>) -> Error {
    Error::InvalidInput(format!("{kind} {id} already has a snapshot at {at}"))
}

/// Latest snapshot at or before `at`.
fn as_of<T>(snapshots: &BTreeMap<DateTime<Utc>, T>, at: DateTime<Utc>) -> Option<&T> {
    snapshots.range(..=at).next_back().map(|(_, v)| v)
}

/// Single-writer store. Readers share `&Store`; writers need `&mut Store`.
#[derive(Debug)]
pub struct Store {
    dir: PathBuf,
    segment: PathBuf,
    file: Option<File>,
    index: Index,
}

fn segment_number(path: &Path) -> Option<u64> {
    path.file_name()?
        .to_str()?
        .strip_prefix("segment-")?
        .strip_suffix(".jsonl")?
        .parse()
        .ok()
}

impl Store {
    /// Opens or creates the store in `dir`.
    pub fn open(dir: impl AsRef<Path>) -> Result<Store> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let mut segments: Vec<(u64, PathBuf)> = fs::read_dir(&dir)
            .map_err(|e| Error::io(&dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter_map(|p| segment_number(&p).map(|n| (n, p)))
            .collect();
        segments.sort();

        let mut index = Index::default();
        for (_, path) in &segments {
            let file = File::open(path).map_err(|e| Error::io(path, e))?;
            for (i, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(|e| Error::io(path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                let entry: Entry = serde_json::from_str(&line)
                    .map_err(|e| Error::parse(path.display().to_string(), i + 1, e.to_string()))?;
                index.apply(entry)?;
            }
        }
        let next = segments.last().map_or(0, |(n, _)| n + 1);
        let segment = dir.join(format!("segment-{next:06}.jsonl"));
        Ok(Store {
            dir,
            segment,
            file: None,
            index,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn append(&mut self, entry: &Entry) -> Result<()> {
        if self.file.is_none() {
            let f = OpenOptions::new()
                .create(true)
                .append(true)
                .open(&self.segment)
                .map_err(|e| Error::io(&self.segment, e))?;
            self.file = Some(f);
        }
        let mut line = serde_json::to_vec(entry)?;
        line.push(b'\n');
        let file = self.file.as_mut().expect("segment opened above");
        file.write_all(&line)
            .and_then(|_| file.flush())
            .map_err(|e| Error::io(&self.segment, e))
    }

    fn write(&mut self, entry: Entry) -> Result<()> {
        match &entry {
            Entry::Tweet { at, tweet } => {
                tweet.validate()?;
                if self.has_tweet_snapshot(&tweet.id, *at) {
                    return Err(duplicate("tweet", &tweet.id, *at));
                }
            }
            Entry::User { at, user } => {
                user.validate()?;
                if self.has_user_snapshot(&user.id, *at) {
                    return Err(duplicate("user", &user.id, *at));
                }
            }
            Entry::Score(s) => {
                if !(0.0..=1.0).contains(&s.score) {
                    return Err(Error::InvalidInput(format!("score {} outside [0, 1]", s.score)));
                }
            }
        }
        self.append(&entry)?;
        self.index.apply(entry)
    }

    /// Stores a snapshot of `tweet` taken at `at`. Each (id, time) pair is written once.
    pub fn put_tweet(&mut self, at: DateTime<Utc>, tweet: Tweet) -> Result<()> {
        self.write(Entry::Tweet { at, tweet })
    }

    pub fn put_user(&mut self, at: DateTime<Utc>, user: UserProfile) -> Result<()> {
        self.write(Entry::User { at, user })
    }

    pub fn append_score(&mut self, entry: ScoreEntry) -> Result<()> {
        self.write(Entry::Score(entry))
    }

    /// Newest snapshot.
    pub fn get_tweet(&self, id: &str) -> Option<&Tweet> {
        self.index.tweets.get(id)?.values().next_back()
    }

    pub fn get_tweet_at(&self, id: &str, at: DateTime<Utc>) -> Option<&Tweet> {
        as_of(self.index.tweets.get(id)?, at)
    }

    pub fn get_user(&self, id: &str) -> Option<&UserProfile> {
        self.index.users.get(id)?.values().next_back()
    }

    pub fn get_user_at(&self, id: &str, at: DateTime<Utc>) -> Option<&UserProfile> {
        as_of(self.index.users.get(id)?, at)
    }

    pub fn has_tweet(&self, id: &str) -> bool {
        self.index.tweets.contains_key(id)
    }

    pub fn has_user(&self, id: &str) -> bool {
        self.index.users.contains_key(id)
    }

    pub fn has_tweet_snapshot(&self, id: &str, at: DateTime<Utc>) -> bool {
        self.index.tweets.get(id).is_some_and(|s| s.contains_key(&at))
    }

    pub fn has_user_snapshot(&self, id: &str, at: DateTime<Utc>) -> bool {
        self.index.users.get(id).is_some_and(|s| s.contains_key(&at))
    }

    /// Time of the newest snapshot of a tweet or user, whichever `id` names.
    pub fn latest_snapshot_time(&self, id: &str) -> Option<DateTime<Utc>> {
        let t = self.index.tweets.get(id).and_then(|s| s.keys().next_back());
        let u = self.index.users.get(id).and_then(|s| s.keys().next_back());
        t.max(u).copied()
    }

    pub fn tweet_snapshots(&self, id: &str) -> Vec<(DateTime<Utc>, &Tweet)> {
        self.index
            .tweets
            .get(id)
            .map(|s| s.iter().map(|(k, v)| (*k, v)).collect())
            .unwrap_or_default()
    }

    pub fn scores(&self, tweet_id: &str) -> &[ScoreEntry] {
        self.index.scores.get(tweet_id).map_or(&[], Vec::as_slice)
    }

    /// The author's `n` newest tweets (latest snapshots), newest first by creation date.
    pub fn list_recent(&self, user_id: &str, n: usize) -> Vec<&Tweet> {
        self.list_recent_at(user_id, n, DateTime::<Utc>::MAX_UTC)
    }

    /// As [`Store::list_recent`], seeing only snapshots stored at or before `at`.
    pub fn list_recent_at(&self, user_id: &str, n: usize, at: DateTime<Utc>) -> Vec<&Tweet> {
        let Some(ids) = self.index.authored.get(user_id) else {
            return Vec::new();
        };
        let mut tweets: Vec<&Tweet> = ids
            .iter()
            .filter_map(|id| self.get_tweet_at(id, at))
            .collect();
        tweets.sort_by(|a, b| {
            b.creation_date
                .cmp(&a.creation_date)
                .then_with(|| b.id.cmp(&a.id))
        });
        tweets.truncate(n);
        tweets
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::{tweet, user};
    use chrono::{Duration, TimeZone};

    fn t0() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2017, 4, 1, 12, 0, 0).unwrap()
    }

    fn authored(i: i64) -> Tweet {
        let mut t = tweet(&format!("post number {i}"));
        t.id = format!("t{i:02}");
        t.author_id = "u1".into();
        t.creation_date = t0() + Duration::minutes(i);
        t
    }

    #[test]
    fn round_trip_and_write_once() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = Store::open(dir.path()).unwrap();
        let t = authored(1);
        s.put_tweet(t0(), t.clone()).unwrap();
        assert_eq!(s.get_tweet("t01"), Some(&t));
        assert!(s.put_tweet(t0(), t.clone()).is_err());
        let mut later = t.clone();
        later.favorites_no += 5;
        s.put_tweet(t0() + Duration::hours(1), later.clone()).unwrap();
        assert_eq!(s.get_tweet("t01"), Some(&later));
        assert_eq!(s.get_tweet_at("t01", t0() + Duration::minutes(59)), Some(&t));
        assert_eq!(s.get_tweet_at("t01", t0() - Duration::minutes(1)), None);
        assert!(s.get_tweet("nope").is_none());
    }

    #[test]
    fn list_recent_newest_first() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = Store::open(dir.path()).unwrap();
        for i in 0..25 {
            s.put_tweet(t0(), authored(i)).unwrap();
        }
        let recent = s.list_recent("u1", 20);
        let ids: Vec<&str> = recent.iter().map(|t| t.id.as_str()).collect();
        let expected: Vec<String> = (5..25).rev().map(|i| format!("t{i:02}")).collect();
        assert_eq!(ids, expected);
        assert!(s.list_recent("u2", 20).is_empty());
    }

    #[test]
    fn durable_across_reopen() {
        let dir = tempfile::tempdir().unwrap();
        {
            let mut s = Store::open(dir.path()).unwrap();
            s.put_tweet(t0(), authored(1)).unwrap();
            let mut u = user(500);
            u.id = "u1".into();
            s.put_user(t0(), u).unwrap();
            s.append_score(ScoreEntry {
                at: t0(),
                tweet_id: "t01".into(),
                author_id: "u1".into(),
                score: 0.5,
            })
            .unwrap();
        }
        let mut s = Store::open(dir.path()).unwrap();
        assert!(s.has_tweet("t01") && s.has_user("u1"));
        assert_eq!(s.scores("t01").len(), 1);
        assert!(s.put_tweet(t0(), authored(1)).is_err());
        s.put_tweet(t0(), authored(2)).unwrap();
        drop(s);
        let s = Store::open(dir.path()).unwrap();
        assert_eq!(s.list_recent("u1", 10).len(), 2);
        let segments = fs::read_dir(dir.path()).unwrap().count();
        assert_eq!(segments, 2);
    }

    #[test]
    fn corrupt_segment_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("segment-000000.jsonl"), "{\"kind\":\"tweet\"\n").unwrap();
        let err = Store::open(dir.path()).unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
    }

    #[test]
    fn rejects_bad_score() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = Store::open(dir.path()).unwrap();
        let bad = ScoreEntry {
            at: t0(),
            tweet_id: "x".into(),
            author_id: "u".into(),
            score: 1.5,
        };
        assert!(s.append_score(bad).is_err());
    }
}
