//! Replay run: ingest, dedup, score, country assignment, regional statistics and maps.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::BufRead;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dedup::dedup;
use super::ingest::{ingest, IngestOptions};
use super::TweetScorer;
use crate::config::{EngineConfig, TopicSource};
use crate::error::{Error, Result};
use crate::geostats::{
    aggregate, assign_country, cluster_points, clusters_geojson, heatmap, heatmap_geojson,
    write_region_csv, ContinentMap, CountryAssignment, CountryBoundaries, HeatmapClass, Level,
    UNASSIGNED,
};
use crate::model::{GeoPoint, Verdict};
use crate::scoring::FormulaWeights;
use crate::sentiment::{
    classify_text, LexiconProvider, SentimentLabel, TopicKeywordList, TriggerLexicon, WordLexicon,
};
use crate::text::Stopwords;

/// Lexicons, boundaries and lookup tables used by a run.
#[derive(Debug, Clone)]
pub struct RunResources {
    pub scorer: TweetScorer,
    pub provider: LexiconProvider,
    pub triggers: TriggerLexicon,
    pub topics: Option<TopicKeywordList>,
    pub boundaries: CountryBoundaries,
    pub continents: ContinentMap,
}

impl RunResources {
    /// Loads the files named in `cfg`, falling back to the bundled data.
    pub fn from_config(cfg: &EngineConfig) -> Result<Self> {
        let lexicon = match &cfg.lexicon {
            Some(p) => WordLexicon::load(p)?,
            None => WordLexicon::english(),
        };
        let stopwords = match &cfg.stopwords {
            Some(p) => Stopwords::load(p)?,
            None => Stopwords::english(),
        };
        Ok(RunResources {
            scorer: TweetScorer {
                stopwords,
                lexicon: lexicon.clone(),
                weights: cfg.weights.clone(),
            },
            provider: LexiconProvider::new(lexicon),
            triggers: TriggerLexicon::default(),
            topics: match &cfg.topics {
                None => None,
                Some(TopicSource::Bundled) => Some(TopicKeywordList::english_sample()),
                Some(TopicSource::File(p)) => Some(TopicKeywordList::load(p)?),
            },
            boundaries: match &cfg.boundaries {
                Some(p) => CountryBoundaries::load(p)?,
                None => CountryBoundaries::bundled(),
            },
            continents: match &cfg.continents {
                Some(p) => ContinentMap::load(p)?,
                None => ContinentMap::bundled(),
            },
        })
    }

    pub fn weights(&self) -> &FormulaWeights {
        &self.scorer.weights
    }
}

/// One scored representative, as written to `scored.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredRow {
    pub tweet_id: String,
    pub author_id: String,
    pub created_at: DateTime<Utc>,
    pub score: f64,
    pub verdict: Verdict,
    pub sentiment: SentimentLabel,
    pub country: String,
    pub lat: Option<f64>,
    pub lon: Option<f64>,
    pub group_size: usize,
    pub label: Option<u8>,
}

impl ScoredRow {
    pub fn geo(&self) -> Option<GeoPoint> {
        match (self.lat, self.lon) {
            (Some(lat), Some(lon)) => GeoPoint::new(lat, lon).ok(),
            _ => None,
        }
    }

    pub fn country(&self) -> CountryAssignment {
        if self.country == UNASSIGNED {
            CountryAssignment::Unassigned
        } else {
            CountryAssignment::Country(self.country.clone())
        }
    }

    pub fn write_csv<W: std::io::Write>(rows: &[ScoredRow], out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in rows {
            w.serialize(r)?;
        }
        w.flush().map_err(|e| Error::io("scored", e))?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(input: R) -> Result<Vec<ScoredRow>> {
        csv::Reader::from_reader(input)
            .deserialize()
            .map(|r| r.map_err(Error::from))
            .collect()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Vec<ScoredRow>> {
        let path = path.as_ref();
        let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub lines_read: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub rejected_by_reason: BTreeMap<String, usize>,
    pub groups: usize,
    pub credible: usize,
    pub not_credible: usize,
    pub excluded_countries: Vec<String>,
    pub excluded_continents: Vec<String>,
    pub outputs: Vec<String>,
}

pub const OUTPUT_FILES: [&str; 8] = [
    "rejections.csv",
    "groups.csv",
    "scored.csv",
    "stats_country.csv",
    "stats_continent.csv",
    "heatmap.geojson",
    "clusters.geojson",
    "summary.json",
];

fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    let path: PathBuf = dir.join(name);
    fs::write(&path, bytes).map_err(|e| Error::io(&path, e))
}

/// Runs the whole chain over `source` and writes [`OUTPUT_FILES`] into `out_dir`.
///
/// Outputs depend only on the input, the configuration and the resources: the thread count
/// changes how work is spread, never what is written.
pub fn run_pipeline<R: BufRead + Send>(
    source: R,
    out_dir: &Path,
    cfg: &EngineConfig,
    res: &RunResources,
) -> Result<RunSummary> {
    cfg.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let opts = IngestOptions {
        languages: cfg.languages.clone(),
        require_geo: cfg.require_geo,
        topics: res.topics.clone(),
        translator: None,
        threads: cfg.threads,
        queue_capacity: cfg.queue_capacity,
    };
    let ingested = ingest(source, &opts)?;
    let records: Vec<_> = ingested.accepted.iter().map(|a| &a.record).collect();
    let tweets: Vec<_> = records.iter().map(|r| &r.tweet).collect();

    let groups = dedup(&tweets, cfg.dedup_mode, Some(cfg.dedup_threshold()));
    let mut reps: Vec<(usize, usize)> = groups
        .representatives
        .iter()
        .enumerate()
        .map(|(g, &i)| (i, groups.groups[g].len()))
        .collect();
    reps.sort();

    struct Scored {
        score: f64,
        sentiment: SentimentLabel,
        located: Option<String>,
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads.max(1))
        .build()
        .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
    let scored: Vec<Scored> = pool.install(|| {
        reps.par_iter()
            .map(|&(i, _)| {
                let r = records[i];
                Ok(Scored {
                    score: res.scorer.score(&r.tweet, &r.author)?,
                    sentiment: classify_text(&r.tweet.text, &res.provider, &res.triggers)?,
                    located: r
                        .tweet
                        .geo
                        .and_then(|g| res.boundaries.locate(g).map(str::to_string)),
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;

    // Country assignment looks at each author's earlier posts, so it runs in input order.
    let mut history: HashMap<&str, Vec<String>> = HashMap::new();
    let mut rows = Vec::with_capacity(reps.len());
    for (&(i, group_size), s) in reps.iter().zip(&scored) {
        let r = records[i];
        let country = match r.tweet.geo {
            None => CountryAssignment::Unassigned,
            Some(g) => {
                let recent = history.entry(r.tweet.author_id.as_str()).or_default();
                let assigned = assign_country(g, &res.boundaries, recent, cfg.border_epsilon_km)?;
                if let Some(c) = &s.located {
                    recent.insert(0, c.clone());
                    recent.truncate(crate::geostats::RECENT_COUNTRIES);
                }
                assigned
            }
        };
        rows.push(ScoredRow {
            tweet_id: r.tweet.id.clone(),
            author_id: r.tweet.author_id.clone(),
            created_at: r.tweet.creation_date,
            score: s.score,
            verdict: crate::classifier::verdict_for(s.score, cfg.verdict_threshold),
            sentiment: s.sentiment,
            country: country.id().to_string(),
            lat: r.tweet.geo.map(|g| g.lat),
            lon: r.tweet.geo.map(|g| g.lon),
            group_size,
            label: r.credibility_label()?,
        });
    }

    let mut buf = Vec::new();
    ingested.write_rejections_csv(&mut buf)?;
    write_file(out_dir, "rejections.csv", &buf)?;

    let mut buf = Vec::new();
    groups.write_groups_csv(&tweets, &mut buf)?;
    write_file(out_dir, "groups.csv", &buf)?;

    let mut buf = Vec::new();
    ScoredRow::write_csv(&rows, &mut buf)?;
    write_file(out_dir, "scored.csv", &buf)?;

    let by_country: Vec<_> = rows.iter().map(|r| (r.country(), r.verdict)).collect();
    let mut excluded = Vec::new();
    for (level, name) in [(Level::Country, "stats_country.csv"), (Level::Continent, "stats_continent.csv")] {
        let report = aggregate(&by_country, level, cfg.min_count, &res.continents);
        let mut buf = Vec::new();
        write_region_csv(&report.regions, &mut buf)?;
        write_file(out_dir, name, &buf)?;
        excluded.push(report.excluded.into_iter().map(|r| r.region).collect::<Vec<_>>());
    }

    let located: Vec<(GeoPoint, Verdict)> = rows
        .iter()
        .filter_map(|r| r.geo().map(|g| (g, r.verdict)))
        .collect();
    let grid = heatmap(&located, cfg.cell_size_deg, HeatmapClass::Both)?;
    write_file(out_dir, "heatmap.geojson", &serde_json::to_vec_pretty(&heatmap_geojson(&grid))?)?;

    let moods: Vec<(GeoPoint, SentimentLabel)> = rows
        .iter()
        .filter_map(|r| r.geo().map(|g| (g, r.sentiment)))
        .collect();
    let clusters = cluster_points(&moods, cfg.cell_size_deg)?;
    write_file(
        out_dir,
        "clusters.geojson",
        &serde_json::to_vec_pretty(&clusters_geojson(&clusters))?,
    )?;

    let credible = rows.iter().filter(|r| r.verdict == Verdict::Credible).count();
    let excluded_continents = excluded.pop().unwrap_or_default();
    let excluded_countries = excluded.pop().unwrap_or_default();
    let summary = RunSummary {
        lines_read: ingested.lines_read,
        accepted: ingested.accepted.len(),
        rejected: ingested.rejections.len(),
        rejected_by_reason: ingested
            .rejections_by_reason()
            .into_iter()
            .map(|(k, v)| (k.as_str().to_string(), v))
            .collect(),
        groups: groups.groups.len(),
        credible,
        not_credible: rows.len() - credible,
        excluded_countries,
        excluded_continents,
        outputs: OUTPUT_FILES.iter().map(|s| s.to_string()).collect(),
    };
    write_file(out_dir, "summary.json", &serde_json::to_vec_pretty(&summary)?)?;
    Ok(summary)
}
