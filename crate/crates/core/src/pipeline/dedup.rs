//! Near-duplicate removal on tweet text.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::model::Tweet;
use crate::simtext::{group_similar, AlignmentParams, Algorithm};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DedupMode {
    /// Jaro-Winkler, threshold 0.92.
    RealTime,
    /// Smith-Waterman, threshold 0.90.
    Offline,
}

impl DedupMode {
    pub fn algorithm(self) -> Algorithm {
        match self {
            DedupMode::RealTime => Algorithm::JaroWinkler,
            DedupMode::Offline => Algorithm::SmithWaterman,
        }
    }

    pub fn default_threshold(self) -> f64 {
        match self {
            DedupMode::RealTime => 0.92,
            DedupMode::Offline => 0.90,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DedupMode::RealTime => "realtime",
            DedupMode::Offline => "offline",
        }
    }
}

impl FromStr for DedupMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "realtime" => Ok(DedupMode::RealTime),
            "offline" => Ok(DedupMode::Offline),
            _ => Err(Error::InvalidInput(format!(
                "unknown dedup mode {s:?} (expected realtime or offline)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DedupResult {
    /// Member indices per group, in input order.
    pub groups: Vec<Vec<usize>>,
    /// One index per group: the member with the earliest creation date, ties to the lower index.
    pub representatives: Vec<usize>,
    /// Group number of every input index.
    pub group_of: Vec<usize>,
}

impl DedupResult {
    pub fn write_groups_csv<W: std::io::Write>(&self, tweets: &[&Tweet], out: W) -> crate::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["tweet_id", "group", "representative_id"])?;
        for (i, t) in tweets.iter().enumerate() {
            let g = self.group_of[i];
            w.write_record([
                t.id.as_str(),
                &g.to_string(),
                &tweets[self.representatives[g]].id,
            ])?;
        }
        w.flush().map_err(|e| Error::io("groups", e))?;
        Ok(())
    }
}

/// Groups `tweets` by text similarity; `threshold` defaults to the mode's own.
pub fn dedup(tweets: &[&Tweet], mode: DedupMode, threshold: Option<f64>) -> DedupResult {
    let texts: Vec<&str> = tweets.iter().map(|t| t.text.as_str()).collect();
    let groups = group_similar(
        &texts,
        mode.algorithm(),
        threshold.unwrap_or(mode.default_threshold()),
        &AlignmentParams::default(),
    );
    let mut group_of = vec![0; tweets.len()];
    let mut representatives = Vec::with_capacity(groups.len());
    for (g, members) in groups.iter().enumerate() {
        for &m in members {
            group_of[m] = g;
        }
        let rep = members
            .iter()
            .copied()
            .min_by_key(|&m| (tweets[m].creation_date, m))
            .expect("groups are non-empty");
        representatives.push(rep);
    }
    DedupResult {
        groups,
        representatives,
        group_of,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::tweet;

    fn tweets(texts: &[&str]) -> Vec<Tweet> {
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let mut tw = tweet(t);
                tw.id = format!("t{i}");
                tw.creation_date += chrono::Duration::minutes(10 - i as i64);
                tw
            })
            .collect()
    }

    #[test]
    fn retweet_collapses_offline() {
        let original = "Breaking: bridge closed after the storm, avoid the north road";
        let ts = tweets(&[original, &format!("RT @news: {original}")]);
        let refs: Vec<&Tweet> = ts.iter().collect();
        let r = dedup(&refs, DedupMode::Offline, None);
        assert_eq!(r.groups, vec![vec![0, 1]]);
        // The retweet was created earlier in this fixture, so it represents the group.
        assert_eq!(r.representatives, vec![1]);
    }

    #[test]
    fn distinct_corpus_is_identity() {
        let ts = tweets(&["apples are red", "the sky is blue today", "32 trains late"]);
        let refs: Vec<&Tweet> = ts.iter().collect();
        for mode in [DedupMode::Offline, DedupMode::RealTime] {
            let r = dedup(&refs, mode, None);
            assert_eq!(r.group_of, vec![0, 1, 2]);
            assert_eq!(r.representatives, vec![0, 1, 2]);
        }
    }

    #[test]
    fn groups_partition_and_contain_representative() {
        let ts = tweets(&["aaaa bbbb", "aaaa bbbc", "zzzz", "aaaa bbbb", "zzzy"]);
        let refs: Vec<&Tweet> = ts.iter().collect();
        let r = dedup(&refs, DedupMode::RealTime, Some(0.8));
        let mut seen: Vec<usize> = r.groups.concat();
        seen.sort();
        assert_eq!(seen, (0..5).collect::<Vec<_>>());
        for (g, rep) in r.representatives.iter().enumerate() {
            assert!(r.groups[g].contains(rep));
        }
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("real-time".parse::<DedupMode>().unwrap(), DedupMode::RealTime);
        assert_eq!("Offline".parse::<DedupMode>().unwrap(), DedupMode::Offline);
        assert!("batch".parse::<DedupMode>().is_err());
    }
}
