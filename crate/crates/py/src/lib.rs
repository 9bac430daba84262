//! Python bindings: similarity measures, credibility formulas, the neural classifier,
//! trend labelling and the replay pipeline.

use std::collections::HashMap;
use std::io::Cursor;
use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use credence_core::classifier::{
    self, build_datasets, ConfigId, FeatureConfig, NnModel, NnTopology, TrainOptions,
    TrainingRecord,
};
use credence_core::config::EngineConfig;
use credence_core::model::{TweetFeatures, UserFeatures};
use credence_core::pipeline::run::RunResources;
use credence_core::pipeline::{self, IngestRecord, TweetScorer};
use credence_core::scoring::{self, FormulaWeights};
use credence_core::sentiment::SentimentLabel;
use credence_core::simtext::{self, AlignmentParams, Algorithm};
use credence_core::Error;

fn py_err(e: Error) -> PyErr {
    if e.is_io() {
        PyIOError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn algorithm(name: &str) -> PyResult<Algorithm> {
    name.parse().map_err(py_err)
}

fn params(match_score: f64, mismatch: f64, gap: f64) -> PyResult<AlignmentParams> {
    AlignmentParams::new(match_score, mismatch, gap).map_err(py_err)
}

fn weights(w: Option<HashMap<String, f64>>) -> PyResult<FormulaWeights> {
    let Some(w) = w else {
        return Ok(FormulaWeights::default());
    };
    let mut keys: Vec<_> = w.into_iter().collect();
    keys.sort_by(|a, b| a.0.cmp(&b.0));
    let text: String = keys.iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
    FormulaWeights::parse(&text).map_err(py_err)
}

fn field(d: &HashMap<String, f64>, key: &str) -> PyResult<f64> {
    d.get(key)
        .copied()
        .ok_or_else(|| PyValueError::new_err(format!("missing feature {key:?}")))
}

fn tweet_features(d: &HashMap<String, f64>) -> PyResult<TweetFeatures> {
    let count = |k: &str| d.get(k).copied().unwrap_or(0.0) as u32;
    Ok(TweetFeatures {
        retweets_score: field(d, "retweets_score")?,
        favorites_score: field(d, "favorites_score")?,
        relevant_words_ratio: field(d, "relevant_words_ratio")?,
        sentiment_score: field(d, "sentiment_score")?,
        hashtag_count: count("hashtag_count"),
        hashtag_chars: count("hashtag_chars"),
        words_no: count("words_no"),
        characters_no: count("characters_no"),
    })
}

#[pyfunction]
fn levenshtein(a: &str, b: &str) -> usize {
    simtext::levenshtein(a, b)
}

#[pyfunction]
#[pyo3(signature = (a, b, match_score=1.0, mismatch=-1.0, gap=-1.0))]
fn needleman_wunsch(a: &str, b: &str, match_score: f64, mismatch: f64, gap: f64) -> PyResult<f64> {
    Ok(simtext::needleman_wunsch(a, b, &params(match_score, mismatch, gap)?))
}

#[pyfunction]
#[pyo3(signature = (a, b, match_score=1.0, mismatch=-1.0, gap=-1.0))]
fn smith_waterman(a: &str, b: &str, match_score: f64, mismatch: f64, gap: f64) -> PyResult<f64> {
    Ok(simtext::smith_waterman(a, b, &params(match_score, mismatch, gap)?))
}

#[pyfunction]
fn jaro_winkler(a: &str, b: &str) -> f64 {
    simtext::jaro_winkler(a, b)
}

/// Similarity in [0, 1] under `algorithm` (levenshtein, needleman-wunsch, jaro-winkler,
/// smith-waterman).
#[pyfunction]
fn similarity(algorithm_name: &str, a: &str, b: &str) -> PyResult<f64> {
    Ok(simtext::normalized_similarity(
        algorithm(algorithm_name)?,
        a,
        b,
        &AlignmentParams::default(),
    ))
}

#[pyfunction]
fn group_similar(texts: Vec<String>, algorithm_name: &str, threshold: f64) -> PyResult<Vec<Vec<usize>>> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(PyValueError::new_err("threshold must lie in [0, 1]"));
    }
    Ok(simtext::group_similar(
        &texts,
        algorithm(algorithm_name)?,
        threshold,
        &AlignmentParams::default(),
    ))
}

/// Weighted tweet credibility from a feature dict.
#[pyfunction]
#[pyo3(signature = (features, weights=None))]
fn tweet_credibility(features: HashMap<String, f64>, weights: Option<HashMap<String, f64>>) -> PyResult<f64> {
    scoring::tweet_credibility(&tweet_features(&features)?, &self::weights(weights)?).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (features, weights=None))]
fn user_credibility(features: HashMap<String, f64>, weights: Option<HashMap<String, f64>>) -> PyResult<f64> {
    let flag = |k: &str| -> PyResult<u8> {
        match field(&features, k)? {
            v if v == 0.0 => Ok(0),
            v if v == 1.0 => Ok(1),
            v => Err(PyValueError::new_err(format!("{k} must be 0 or 1, got {v}"))),
        }
    };
    let f = UserFeatures {
        u_location: flag("u_location")?,
        u_url: flag("u_url")?,
        u_description: flag("u_description")?,
        u_verified: flag("u_verified")?,
        u_geo: flag("u_geo")?,
        u_age_ratio: field(&features, "u_age_ratio")?,
        u_avg_last20: field(&features, "u_avg_last20")?,
    };
    scoring::user_credibility(&f, &self::weights(weights)?).map_err(py_err)
}

/// Mean weight of per-token grades (vneg, neg, neu, pos, vpos).
#[pyfunction]
fn sentiment_term(grades: Vec<String>) -> PyResult<f64> {
    let labels = grades
        .iter()
        .map(|g| g.parse::<SentimentLabel>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(py_err)?;
    Ok(scoring::sentiment_term(&labels))
}

/// Credibility of one ingest record (JSON text) with the bundled lexicons.
#[pyfunction]
fn score_record(json: &str) -> PyResult<f64> {
    let r: IngestRecord =
        serde_json_from_str(json)?;
    r.validate().map_err(py_err)?;
    TweetScorer::default().score(&r.tweet, &r.author).map_err(py_err)
}

fn serde_json_from_str<T: for<'de> serde::Deserialize<'de>>(s: &str) -> PyResult<T> {
    serde_json::from_str(s).map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pyfunction]
#[pyo3(signature = (n_samples, n_inputs, n_outputs=1, alpha=2.0))]
fn hidden_upper_bound(n_samples: usize, n_inputs: usize, n_outputs: usize, alpha: f64) -> PyResult<usize> {
    classifier::hidden_upper_bound(n_samples, n_inputs, n_outputs, alpha).map_err(py_err)
}

/// "Constant", "Growing", "Decreasing" or "Mixed".
#[pyfunction]
#[pyo3(signature = (values, flat_epsilon=0.005))]
fn trend(values: Vec<f64>, flat_epsilon: f64) -> PyResult<&'static str> {
    pipeline::trend(&values, flat_epsilon).map(|t| t.as_str()).map_err(py_err)
}

/// Runs the full replay pipeline and returns the run summary as JSON text.
#[pyfunction]
#[pyo3(signature = (input_path, out_dir, config_path=None, threads=None))]
fn run_pipeline(
    input_path: PathBuf,
    out_dir: PathBuf,
    config_path: Option<PathBuf>,
    threads: Option<usize>,
) -> PyResult<String> {
    let mut cfg = match config_path {
        Some(p) => EngineConfig::load(p).map_err(py_err)?,
        None => EngineConfig::default(),
    };
    if let Some(t) = threads {
        cfg.threads = t.max(1);
    }
    let res = RunResources::from_config(&cfg).map_err(py_err)?;
    let input = std::fs::read(&input_path).map_err(|e| py_err(Error::io(&input_path, e)))?;
    let summary = pipeline::run_pipeline(Cursor::new(input), &out_dir, &cfg, &res).map_err(py_err)?;
    serde_json::to_string(&summary).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// The one-hidden-layer credibility network.
#[pyclass(name = "Classifier", module = "credence")]
struct PyClassifier {
    model: NnModel,
}

fn records(samples: &[HashMap<String, f64>]) -> PyResult<Vec<TrainingRecord>> {
    samples
        .iter()
        .map(|s| {
            let label = match field(s, "label")? {
                v if v == 0.0 => 0,
                v if v == 1.0 => 1,
                v => return Err(PyValueError::new_err(format!("label must be 0 or 1, got {v}"))),
            };
            Ok(TrainingRecord {
                features: tweet_features(s)?,
                is_retweet: s.get("is_retweet").is_some_and(|v| *v != 0.0),
                label,
            })
        })
        .collect()
}

#[pymethods]
impl PyClassifier {
    /// Trains on feature dicts carrying a `label` (1 = credible) and optional `is_retweet`.
    /// Returns the classifier and the holdout accuracy (None when the holdout is empty).
    #[staticmethod]
    #[pyo3(signature = (samples, config="C1", hidden=13, iterations=100_000, learning_rate=0.1, seed=0))]
    fn train(
        samples: Vec<HashMap<String, f64>>,
        config: &str,
        hidden: usize,
        iterations: usize,
        learning_rate: f64,
        seed: u64,
    ) -> PyResult<(PyClassifier, Option<f64>)> {
        let config = FeatureConfig::new(config.parse::<ConfigId>().map_err(py_err)?);
        let (train, holdout) = build_datasets(&config, &records(&samples)?, seed);
        let opts = TrainOptions {
            iterations,
            learning_rate,
            seed,
            record_every: 0,
        };
        let model = classifier::train(&train, &NnTopology::new(config.width(), hidden), &opts)
            .map_err(py_err)?;
        let accuracy = if holdout.is_empty() {
            None
        } else {
            Some(
                classifier::evaluate(&model, &holdout.examples, classifier::DEFAULT_THRESHOLD)
                    .map_err(py_err)?
                    .accuracy,
            )
        };
        Ok((PyClassifier { model }, accuracy))
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyClassifier {
            model: NnModel::load(path).map_err(py_err)?,
        })
    }

    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        Ok(PyClassifier {
            model: NnModel::from_text(text).map_err(py_err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.model.save(path).map_err(py_err)
    }

    fn to_text(&self) -> String {
        self.model.to_text()
    }

    fn predict(&self, features: HashMap<String, f64>) -> PyResult<f64> {
        Ok(self.model.predict_features(&tweet_features(&features)?))
    }

    /// "credible" when the score is strictly above `threshold`.
    #[pyo3(signature = (features, threshold=0.6))]
    fn classify(&self, features: HashMap<String, f64>, threshold: f64) -> PyResult<&'static str> {
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(PyValueError::new_err("threshold must lie in (0, 1)"));
        }
        let score = self.predict(features)?;
        Ok(classifier::verdict_for(score, threshold).as_str())
    }

    #[getter]
    fn config(&self) -> String {
        self.model.config.id.to_string()
    }

    #[getter]
    fn hidden(&self) -> usize {
        self.model.topology.n_hidden
    }
}

#[pymodule]
fn credence(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(levenshtein, m)?)?;
    m.add_function(wrap_pyfunction!(needleman_wunsch, m)?)?;
    m.add_function(wrap_pyfunction!(smith_waterman, m)?)?;
    m.add_function(wrap_pyfunction!(jaro_winkler, m)?)?;
    m.add_function(wrap_pyfunction!(similarity, m)?)?;
    m.add_function(wrap_pyfunction!(group_similar, m)?)?;
    m.add_function(wrap_pyfunction!(tweet_credibility, m)?)?;
    m.add_function(wrap_pyfunction!(user_credibility, m)?)?;
    m.add_function(wrap_pyfunction!(sentiment_term, m)?)?;
    m.add_function(wrap_pyfunction!(score_record, m)?)?;
    m.add_function(wrap_pyfunction!(hidden_upper_bound, m)?)?;
    m.add_function(wrap_pyfunction!(trend, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    m.add_class::<PyClassifier>()?;
    Ok(())
}
