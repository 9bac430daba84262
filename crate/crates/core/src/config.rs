//! Flat `key = value` engine configuration.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::geostats::{DEFAULT_BORDER_EPSILON_KM, DEFAULT_MIN_COUNT};
use crate::pipeline::dedup::DedupMode;
use crate::scoring::FormulaWeights;

/// Languages kept by the first ingest filter unless configured otherwise.
pub const DEFAULT_LANGUAGES: [&str; 6] = ["en", "de", "fr", "el", "tr", "it"];

#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    /// Empty means every language passes.
    pub languages: BTreeSet<String>,
    pub require_geo: bool,
    /// Topic keyword file; `None` disables the topic filter.
    pub topics: Option<TopicSource>,
    pub dedup_mode: DedupMode,
    pub smith_waterman_threshold: f64,
    pub jaro_winkler_threshold: f64,
    pub verdict_threshold: f64,
    pub border_epsilon_km: f64,
    pub cell_size_deg: f64,
    pub min_count: usize,
    pub flat_epsilon: f64,
    pub seed: u64,
    pub threads: usize,
    pub queue_capacity: usize,
    pub weights: FormulaWeights,
    pub stopwords: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub boundaries: Option<PathBuf>,
    pub continents: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TopicSource {
    Bundled,
    File(PathBuf),
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            languages: DEFAULT_LANGUAGES.iter().map(|s| s.to_string()).collect(),
            require_geo: true,
            topics: None,
            dedup_mode: DedupMode::Offline,
            smith_waterman_threshold: 0.90,
            jaro_winkler_threshold: 0.92,
            verdict_threshold: 0.6,
            border_epsilon_km: DEFAULT_BORDER_EPSILON_KM,
            cell_size_deg: 1.0,
            min_count: DEFAULT_MIN_COUNT,
            flat_epsilon: 0.005,
            seed: 0,
            threads: 1,
            queue_capacity: 256,
            weights: FormulaWeights::default(),
            stopwords: None,
            lexicon: None,
            boundaries: None,
            continents: None,
        }
    }
}

fn parse_bool(v: &str) -> Option<bool> {
    match v {
        "true" | "yes" | "1" => Some(true),
        "false" | "no" | "0" => Some(false),
        _ => None,
    }
}

impl EngineConfig {
    /// Unknown keys are rejected. Relative paths are resolved against `base`.
    pub fn parse(content: &str, base: Option<&Path>) -> Result<Self> {
        let mut cfg = EngineConfig::default();
        let mut weight_lines = String::new();
        let path = |v: &str| match base {
            Some(b) if Path::new(v).is_relative() => b.join(v),
            _ => PathBuf::from(v),
        };
        for (i, line) in content.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |msg: &str| Error::parse("config", i + 1, msg);
            let (key, value) = line.split_once('=').ok_or_else(|| bad("expected key=value"))?;
            let (key, value) = (key.trim(), value.trim());
            let num = || value.parse::<f64>().map_err(|_| bad(&format!("bad number for {key}")));
            let int = || value.parse::<usize>().map_err(|_| bad(&format!("bad integer for {key}")));
            match key {
                "languages" => {
                    cfg.languages = value
                        .split(',')
                        .map(|s| s.trim().to_lowercase())
                        .filter(|s| !s.is_empty() && s != "*")
                        .collect()
                }
                "require_geo" => {
                    cfg.require_geo = parse_bool(value).ok_or_else(|| bad("expected true/false"))?
                }
                "topics" => {
                    cfg.topics = match value {
                        "" | "none" => None,
                        "bundled" => Some(TopicSource::Bundled),
                        v => Some(TopicSource::File(path(v))),
                    }
                }
                "dedup.mode" => cfg.dedup_mode = value.parse()?,
                "dedup.threshold.smith_waterman" => cfg.smith_waterman_threshold = num()?,
                "dedup.threshold.jaro_winkler" => cfg.jaro_winkler_threshold = num()?,
                "verdict_threshold" => cfg.verdict_threshold = num()?,
                "border_epsilon_km" => cfg.border_epsilon_km = num()?,
                "cell_size_deg" => cfg.cell_size_deg = num()?,
                "min_count" => cfg.min_count = int()?,
                "flat_epsilon" => cfg.flat_epsilon = num()?,
                "seed" => cfg.seed = value.parse().map_err(|_| bad("bad seed"))?,
                "threads" => cfg.threads = int()?.max(1),
                "queue_capacity" => cfg.queue_capacity = int()?.max(1),
                "stopwords" => cfg.stopwords = Some(path(value)),
                "lexicon" => cfg.lexicon = Some(path(value)),
                "boundaries" => cfg.boundaries = Some(path(value)),
                "continents" => cfg.continents = Some(path(value)),
                k if k.starts_with("weights.") => {
                    weight_lines.push_str(&format!("{} = {value}\n", &k["weights.".len()..]));
                }
                other => return Err(bad(&format!("unknown key {other:?}"))),
            }
        }
        cfg.weights = FormulaWeights::parse(&weight_lines)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&content, path.parent())
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::InvalidInput(format!("{name} {v} outside [0, 1]")))
            }
        };
        unit("smith-waterman threshold", self.smith_waterman_threshold)?;
        unit("jaro-winkler threshold", self.jaro_winkler_threshold)?;
        if !(self.verdict_threshold > 0.0 && self.verdict_threshold < 1.0) {
            return Err(Error::InvalidInput(format!(
                "verdict threshold {} outside (0, 1)",
                self.verdict_threshold
            )));
        }
        if !(self.cell_size_deg > 0.0) || !(self.border_epsilon_km >= 0.0) || !(self.flat_epsilon >= 0.0) {
            return Err(Error::InvalidInput(
                "cell size must be positive; border and flat epsilons non-negative".into(),
            ));
        }
        self.weights.validate()
    }

    pub fn dedup_threshold(&self) -> f64 {
        match self.dedup_mode {
            DedupMode::Offline => self.smith_waterman_threshold,
            DedupMode::RealTime => self.jaro_winkler_threshold,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_full() {
        let cfg = EngineConfig::parse(
            "# engine\nlanguages = en, TR\nrequire_geo = no\ntopics = kw.tsv\n\
             dedup.mode = realtime\nseed = 7\nthreads = 4\nweights.w_r = 0.2\nweights.w_w = 0.4\n",
            Some(Path::new("/etc/credence")),
        )
        .unwrap();
        assert_eq!(cfg.languages.iter().cloned().collect::<Vec<_>>(), vec!["en", "tr"]);
        assert!(!cfg.require_geo);
        assert_eq!(cfg.topics, Some(TopicSource::File("/etc/credence/kw.tsv".into())));
        assert_eq!(cfg.dedup_mode, DedupMode::RealTime);
        assert_eq!(cfg.dedup_threshold(), 0.92);
        assert_eq!((cfg.seed, cfg.threads), (7, 4));
        assert_eq!(cfg.weights.w_r, 0.2);
    }

    #[test]
    fn defaults_and_errors() {
        let cfg = EngineConfig::parse("", None).unwrap();
        assert_eq!(cfg, EngineConfig::default());
        assert_eq!(cfg.dedup_threshold(), 0.90);
        assert!(EngineConfig::parse("bogus = 1", None).is_err());
        assert!(EngineConfig::parse("seed", None).is_err());
        assert!(EngineConfig::parse("verdict_threshold = 1.5", None).is_err());
        assert!(EngineConfig::parse("weights.w_r = 0.9", None).is_err());
        assert!(EngineConfig::parse("dedup.mode = sometimes", None).is_err());
        let any = EngineConfig::parse("languages = *", None).unwrap();
        assert!(any.languages.is_empty());
    }
}
