//! JSON-lines ingest with the language, geo and topic filters.
//!
//! Lines flow from a reader thread through a bounded queue to a pool of filter workers and
//! back through a second bounded queue. Results are put back in line order, so the outcome
//! does not depend on the number of workers.

use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;
use std::sync::Arc;

use crossbeam_channel::bounded;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Tweet, UserProfile};
use crate::sentiment::{topic_filter, translate, TopicKeywordList, TopicSection, Translator};

/// One line of the ingest file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestRecord {
    pub tweet: Tweet,
    pub author: UserProfile,
    /// Ground truth, 1 = credible.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<u8>,
    /// Annotator mark with the opposite polarity, 1 = not credible.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotation: Option<u8>,
}

impl IngestRecord {
    pub fn validate(&self) -> Result<()> {
        self.tweet.validate()?;
        self.author.validate()?;
        if self.tweet.author_id != self.author.id {
            return Err(Error::InvalidInput(format!(
                "tweet {} names author {} but carries profile {}",
                self.tweet.id, self.tweet.author_id, self.author.id
            )));
        }
        self.credibility_label().map(|_| ())
    }

    /// Label with 1 = credible, from `label` or the inverted `annotation`.
    pub fn credibility_label(&self) -> Result<Option<u8>> {
        let from_annotation = match self.annotation {
            None => None,
            Some(a @ (0 | 1)) => Some(1 - a),
            Some(a) => return Err(Error::InvalidInput(format!("annotation {a} is not 0 or 1"))),
        };
        match (self.label, from_annotation) {
            (Some(l), _) if l > 1 => Err(Error::InvalidInput(format!("label {l} is not 0 or 1"))),
            (Some(l), Some(a)) if l != a => Err(Error::InvalidInput(
                "label and annotation disagree".into(),
            )),
            (Some(l), _) => Ok(Some(l)),
            (None, a) => Ok(a),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RejectReason {
    /// Not parseable as an ingest record.
    Malformed,
    /// Parsed but failed validation.
    Invalid,
    Language,
    NoGeo,
    NoTopic,
    /// The translator failed for a language without its own keyword list.
    Translation,
}

impl RejectReason {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectReason::Malformed => "Malformed",
            RejectReason::Invalid => "Invalid",
            RejectReason::Language => "Language",
            RejectReason::NoGeo => "NoGeo",
            RejectReason::NoTopic => "NoTopic",
            RejectReason::Translation => "Translation",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Rejection {
    /// 1-based line number in the source.
    pub line: usize,
    pub reason: RejectReason,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Accepted {
    pub line: usize,
    pub record: IngestRecord,
    /// Empty when no topic list was supplied.
    pub topics: BTreeSet<TopicSection>,
}

#[derive(Clone)]
pub struct IngestOptions {
    /// Lower-case language codes. Empty admits every language.
    pub languages: BTreeSet<String>,
    pub require_geo: bool,
    pub topics: Option<TopicKeywordList>,
    /// Used for languages missing from `topics`; without one the English list is applied
    /// to the original text.
    pub translator: Option<Arc<dyn Translator + Send + Sync>>,
    pub threads: usize,
    pub queue_capacity: usize,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            languages: BTreeSet::new(),
            require_geo: false,
            topics: None,
            translator: None,
            threads: 1,
            queue_capacity: 256,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IngestOutcome {
    pub accepted: Vec<Accepted>,
    pub rejections: Vec<Rejection>,
    /// Non-blank lines read.
    pub lines_read: usize,
}

impl IngestOutcome {
    pub fn rejections_by_reason(&self) -> BTreeMap<RejectReason, usize> {
        let mut out = BTreeMap::new();
        for r in &self.rejections {
            *out.entry(r.reason).or_insert(0) += 1;
        }
        out
    }

    pub fn write_rejections_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["line", "reason", "detail"])?;
        for r in &self.rejections {
            w.write_record([r.line.to_string().as_str(), r.reason.as_str(), &r.detail])?;
        }
        w.flush().map_err(|e| Error::io("rejections", e))?;
        Ok(())
    }
}

const ENGLISH: &str = "en";

fn filter_line(line: usize, raw: &str, opts: &IngestOptions) -> std::result::Result<Accepted, Rejection> {
    let reject = |reason, detail: String| Rejection { line, reason, detail };
    let record: IngestRecord = serde_json::from_str(raw)
        .map_err(|e| reject(RejectReason::Malformed, e.to_string()))?;
    record
        .validate()
        .map_err(|e| reject(RejectReason::Invalid, e.to_string()))?;

    let language = record.tweet.language.to_lowercase();
    if !opts.languages.is_empty() && !opts.languages.contains(&language) {
        return Err(reject(RejectReason::Language, language));
    }
    if opts.require_geo && record.tweet.geo.is_none() {
        return Err(reject(RejectReason::NoGeo, String::new()));
    }

    let mut topics = BTreeSet::new();
    if let Some(list) = &opts.topics {
        let found = if list.has_language(&language) {
            topic_filter(&record.tweet.text, list, &language)
        } else {
            let text = match &opts.translator {
                Some(t) => translate(&record.tweet.text, &language, ENGLISH, t.as_ref())
                    .map_err(|e| reject(RejectReason::Translation, e.to_string()))?,
                None => record.tweet.text.clone(),
            };
            topic_filter(&text, list, ENGLISH)
        };
        topics = found.map_err(|e| reject(RejectReason::NoTopic, e.to_string()))?;
        if topics.is_empty() {
            return Err(reject(RejectReason::NoTopic, String::new()));
        }
    }
    Ok(Accepted { line, record, topics })
}

/// Filters every non-blank line of `source`. Bad lines are logged, never fatal; only a
/// read failure aborts.
pub fn ingest<R: BufRead + Send>(source: R, opts: &IngestOptions) -> Result<IngestOutcome> {
    let workers = opts.threads.max(1);
    let capacity = opts.queue_capacity.max(1);
    let (line_tx, line_rx) = bounded::<(usize, String)>(capacity);
    let (out_tx, out_rx) = bounded::<std::result::Result<Accepted, Rejection>>(capacity);

    std::thread::scope(|s| {
        let reader = s.spawn(move || -> std::io::Result<usize> {
            let mut read = 0;
            for (i, line) in source.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                read += 1;
                if line_tx.send((i + 1, line)).is_err() {
                    break;
                }
            }
            Ok(read)
        });
        for _ in 0..workers {
            let rx = line_rx.clone();
            let tx = out_tx.clone();
            s.spawn(move || {
                for (n, line) in rx {
                    if tx.send(filter_line(n, &line, opts)).is_err() {
                        break;
                    }
                }
            });
        }
        drop(line_rx);
        drop(out_tx);

        let mut results: Vec<_> = out_rx.iter().collect();
        let lines_read = reader
            .join()
            .expect("reader thread panicked")
            .map_err(|e| Error::io("ingest source", e))?;
        results.sort_by_key(|r| match r {
            Ok(a) => a.line,
            Err(r) => r.line,
        });
        let mut outcome = IngestOutcome {
            lines_read,
            ..Default::default()
        };
        for r in results {
            match r {
                Ok(a) => outcome.accepted.push(a),
                Err(r) => outcome.rejections.push(r),
            }
        }
        Ok(outcome)
    })
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::IngestRecord;
    use crate::model::GeoPoint;
    use chrono::{TimeZone, Utc};

    pub fn record(id: usize, text: &str, lang: &str, geo: Option<(f64, f64)>) -> IngestRecord {
        let author = format!("u{}", id % 7);
        IngestRecord {
            tweet: crate::model::Tweet {
                id: format!("t{id}"),
                text: text.into(),
                author_id: author.clone(),
                retweets_no: (id % 5) as u64,
                favorites_no: (id % 3) as u64,
                creation_date: Utc.with_ymd_and_hms(2017, 3, 1, 0, 0, 0).unwrap()
                    + chrono::Duration::minutes(id as i64),
                geo: geo.map(|(lat, lon)| GeoPoint::new(lat, lon).unwrap()),
                language: lang.into(),
                is_retweet: false,
                hashtags: vec![],
            },
            author: crate::model::UserProfile {
                id: author,
                has_location: true,
                has_description: id % 2 == 0,
                has_url: false,
                has_geo: true,
                is_verified: false,
                creation_date: Utc.with_ymd_and_hms(2012, 5, 1, 0, 0, 0).unwrap(),
                followers_no: 100 + id as u64,
                recent_tweets: vec![],
            },
            label: None,
            annotation: None,
        }
    }

    pub fn line(r: &IngestRecord) -> String {
        serde_json::to_string(r).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::{line, record};
    use super::*;
    use std::io::Cursor;

    fn opts() -> IngestOptions {
        IngestOptions {
            languages: ["en", "de"].iter().map(|s| s.to_string()).collect(),
            require_geo: true,
            topics: Some(TopicKeywordList::english_sample()),
            ..Default::default()
        }
    }

    fn run(lines: &[String], opts: &IngestOptions) -> IngestOutcome {
        ingest(Cursor::new(lines.join("\n")), opts).unwrap()
    }

    #[test]
    fn filters_and_reasons() {
        let lines = vec![
            line(&record(1, "troops attack the city", "en", Some((40.0, -100.0)))),
            line(&record(2, "troops attack the city", "en", None)),
            line(&record(3, "troupes attaque la ville", "fr", Some((46.0, 2.0)))),
            "{not json".to_string(),
            String::new(),
            line(&record(5, "lovely weather today", "en", Some((40.0, -100.0)))),
        ];
        let out = run(&lines, &opts());
        assert_eq!(out.lines_read, 5);
        assert_eq!(out.accepted.len() + out.rejections.len(), out.lines_read);
        assert_eq!(out.accepted.len(), 1);
        assert!(out.accepted[0].topics.contains(&TopicSection::FightAndAttack));
        let reasons: Vec<_> = out.rejections.iter().map(|r| (r.line, r.reason)).collect();
        assert_eq!(
            reasons,
            vec![
                (2, RejectReason::NoGeo),
                (3, RejectReason::Language),
                (4, RejectReason::Malformed),
                (6, RejectReason::NoTopic),
            ]
        );
        assert_eq!(out.rejections_by_reason().values().sum::<usize>(), 4);
    }

    #[test]
    fn invalid_record_rejected() {
        let mut r = record(1, "attack", "en", Some((1.0, 1.0)));
        r.tweet.author_id = "someone-else".into();
        let out = run(&[line(&r)], &opts());
        assert_eq!(out.rejections[0].reason, RejectReason::Invalid);
    }

    #[test]
    fn untranslated_language_uses_english_list() {
        let mut o = opts();
        o.languages.insert("tr".into());
        let out = run(&[line(&record(1, "attack haberleri", "tr", Some((39.0, 35.0))))], &o);
        assert_eq!(out.accepted.len(), 1);

        let mut table = crate::sentiment::TableTranslator::default();
        table.table.insert("saldiri".into(), "attack".into());
        o.translator = Some(Arc::new(table));
        let out = run(
            &[
                line(&record(1, "saldiri", "tr", Some((39.0, 35.0)))),
                line(&record(2, "bilinmeyen", "tr", Some((39.0, 35.0)))),
            ],
            &o,
        );
        assert_eq!(out.accepted.len(), 1);
        assert_eq!(out.rejections[0].reason, RejectReason::Translation);
    }

    #[test]
    fn thread_count_does_not_change_outcome() {
        let lines: Vec<String> = (0..300)
            .map(|i| match i % 4 {
                0 => line(&record(i, "refugees attack", "en", Some((10.0, 10.0)))),
                1 => line(&record(i, "refugees", "de", None)),
                2 => format!("garbage {i}"),
                _ => line(&record(i, "nothing here", "en", Some((10.0, 10.0)))),
            })
            .collect();
        let mut o = opts();
        o.queue_capacity = 3;
        let one = run(&lines, &o);
        o.threads = 4;
        let four = run(&lines, &o);
        assert_eq!(one, four);
        assert_eq!(one.accepted.len(), 75);
    }

    #[test]
    fn label_polarity() {
        let mut r = record(1, "x", "en", None);
        assert_eq!(r.credibility_label().unwrap(), None);
        r.annotation = Some(0);
        assert_eq!(r.credibility_label().unwrap(), Some(1));
        r.label = Some(0);
        assert!(r.credibility_label().is_err());
        r.label = Some(1);
        assert_eq!(r.credibility_label().unwrap(), Some(1));
        r.annotation = Some(3);
        assert!(r.credibility_label().is_err());
    }

    #[test]
    fn no_filters_accepts_everything_valid() {
        let out = run(&[line(&record(1, "anything", "xx", None))], &IngestOptions::default());
        assert_eq!(out.accepted.len(), 1);
        assert!(out.accepted[0].topics.is_empty());
    }
}
