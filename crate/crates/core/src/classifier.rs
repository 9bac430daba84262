//! Single-hidden-layer feedforward credibility classifier.
//!
//! Both layers use the logistic sigmoid. Training minimizes `0.5 * (output - label)^2` by
//! plain SGD, one uniformly drawn example per step, from a seeded uniform initialization in
//! `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`. Label 1 means credible.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{TweetFeatures, Verdict};

pub const DEFAULT_THRESHOLD: f64 = 0.6;
pub const DEFAULT_HIDDEN: usize = 13;
pub const DEFAULT_ITERATIONS: usize = 100_000;
pub const DEFAULT_LEARNING_RATE: f64 = 0.1;

const FORMAT_HEADER: &str = "credence-nn";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConfigId {
    C1,
    C2,
    C3,
    C4,
    C5,
    C6,
}

impl ConfigId {
    pub const ALL: [ConfigId; 6] = [
        ConfigId::C1,
        ConfigId::C2,
        ConfigId::C3,
        ConfigId::C4,
        ConfigId::C5,
        ConfigId::C6,
    ];
}

impl fmt::Display for ConfigId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for ConfigId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ConfigId::ALL
            .into_iter()
            .find(|c| c.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidInput(format!("unknown feature configuration {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FeatureKind {
    RetweetsScore,
    FavoritesScore,
    RelevantWordsRatio,
    SentimentScore,
    HashtagChars,
    HashtagCount,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub id: ConfigId,
    pub features: Vec<FeatureKind>,
    pub exclude_retweets_from_training: bool,
}

impl FeatureConfig {
    pub fn new(id: ConfigId) -> Self {
        use FeatureKind::*;
        let basic = [RetweetsScore, FavoritesScore, RelevantWordsRatio];
        let with_sentiment = [RetweetsScore, FavoritesScore, RelevantWordsRatio, SentimentScore];
        let features: Vec<FeatureKind> = match id {
            ConfigId::C1 | ConfigId::C2 => basic.to_vec(),
            ConfigId::C3 => with_sentiment.to_vec(),
            ConfigId::C4 => [&with_sentiment[..], &[HashtagChars]].concat(),
            ConfigId::C5 => [&with_sentiment[..], &[HashtagCount]].concat(),
            ConfigId::C6 => [&basic[..], &[HashtagCount, HashtagChars]].concat(),
        };
        FeatureConfig {
            id,
            features,
            exclude_retweets_from_training: id == ConfigId::C2,
        }
    }

    pub fn width(&self) -> usize {
        self.features.len()
    }
}

/// Training-set maxima for the hashtag features, which are scaled to `value / max`
/// (counts start at 0) and clamped to [0, 1] at inference.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FeatureScaling {
    pub max_hashtag_count: f64,
    pub max_hashtag_chars: f64,
}

impl FeatureScaling {
    pub fn fit<'a>(features: impl IntoIterator<Item = &'a TweetFeatures>) -> Self {
        features
            .into_iter()
            .fold(FeatureScaling::default(), |s, f| FeatureScaling {
                max_hashtag_count: s.max_hashtag_count.max(f.hashtag_count as f64),
                max_hashtag_chars: s.max_hashtag_chars.max(f.hashtag_chars as f64),
            })
    }
}

fn scale(value: f64, max: f64) -> f64 {
    if max <= 0.0 {
        0.0
    } else {
        (value / max).clamp(0.0, 1.0)
    }
}

pub fn select_features(config: &FeatureConfig, scaling: &FeatureScaling, f: &TweetFeatures) -> Vec<f64> {
    config
        .features
        .iter()
        .map(|k| match k {
            FeatureKind::RetweetsScore => f.retweets_score,
            FeatureKind::FavoritesScore => f.favorites_score,
            FeatureKind::RelevantWordsRatio => f.relevant_words_ratio,
            FeatureKind::SentimentScore => f.sentiment_score,
            FeatureKind::HashtagChars => scale(f.hashtag_chars as f64, scaling.max_hashtag_chars),
            FeatureKind::HashtagCount => scale(f.hashtag_count as f64, scaling.max_hashtag_count),
        })
        .collect()
}

/// `floor(n_samples / (alpha * (n_inputs + n_outputs)))`, at least 1.
pub fn hidden_upper_bound(
    n_samples: usize,
    n_inputs: usize,
    n_outputs: usize,
    alpha: f64,
) -> Result<usize> {
    if !(2.0..=10.0).contains(&alpha) {
        return Err(Error::InvalidInput(format!("alpha {alpha} outside [2, 10]")));
    }
    if n_samples == 0 || n_inputs == 0 || n_outputs == 0 {
        return Err(Error::InvalidInput("sample, input and output counts must be positive".into()));
    }
    let bound = (n_samples as f64 / (alpha * (n_inputs + n_outputs) as f64)).floor() as usize;
    Ok(bound.max(1))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NnTopology {
    pub n_inputs: usize,
    pub n_hidden: usize,
    pub n_outputs: usize,
    pub n_samples_hint: Option<usize>,
    pub alpha: f64,
}

impl NnTopology {
    pub fn new(n_inputs: usize, n_hidden: usize) -> Self {
        NnTopology {
            n_inputs,
            n_hidden,
            n_outputs: 1,
            n_samples_hint: None,
            alpha: 2.0,
        }
    }

    /// Largest hidden layer allowed for `n_samples` training examples.
    pub fn bounded(n_inputs: usize, n_samples: usize, alpha: f64) -> Result<Self> {
        let n_hidden = hidden_upper_bound(n_samples, n_inputs, 1, alpha)?;
        Ok(NnTopology {
            n_inputs,
            n_hidden,
            n_outputs: 1,
            n_samples_hint: Some(n_samples),
            alpha,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_inputs == 0 || self.n_hidden == 0 {
            return Err(Error::InvalidInput("layer sizes must be positive".into()));
        }
        if self.n_outputs != 1 {
            return Err(Error::InvalidInput(format!(
                "exactly one output neuron supported, got {}",
                self.n_outputs
            )));
        }
        if !(2.0..=10.0).contains(&self.alpha) {
            return Err(Error::InvalidInput(format!("alpha {} outside [2, 10]", self.alpha)));
        }
        if let Some(samples) = self.n_samples_hint {
            let bound = hidden_upper_bound(samples, self.n_inputs, self.n_outputs, self.alpha)?;
            if self.n_hidden > bound {
                return Err(Error::InvalidInput(format!(
                    "{} hidden neurons exceeds the bound {bound} for {samples} samples",
                    self.n_hidden
                )));
            }
        }
        Ok(())
    }

    /// Total number of weights and biases.
    pub fn param_count(&self) -> usize {
        self.n_hidden * self.n_inputs + 2 * self.n_hidden + 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub features: Vec<f64>,
    /// 1 = credible, 0 = not credible.
    pub label: u8,
}

impl LabeledExample {
    pub fn new(features: Vec<f64>, label: u8) -> Result<Self> {
        if label > 1 {
            return Err(Error::InvalidInput(format!("label {label} is not 0 or 1")));
        }
        Ok(LabeledExample { features, label })
    }
}

/// A tweet's features with its retweet flag and label, before projection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingRecord {
    pub features: TweetFeatures,
    pub is_retweet: bool,
    pub label: u8,
}

/// Projected examples plus the configuration and scaling that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub config: FeatureConfig,
    pub scaling: FeatureScaling,
    pub examples: Vec<LabeledExample>,
}

impl Dataset {
    pub fn from_examples(config: FeatureConfig, examples: Vec<LabeledExample>) -> Self {
        Dataset {
            config,
            scaling: FeatureScaling::default(),
            examples,
        }
    }

    pub fn project(config: &FeatureConfig, scaling: FeatureScaling, records: &[TrainingRecord]) -> Self {
        let examples = records
            .iter()
            .map(|r| LabeledExample {
                features: select_features(config, &scaling, &r.features),
                label: r.label,
            })
            .collect();
        Dataset {
            config: config.clone(),
            scaling,
            examples,
        }
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }
}

/// Seeded shuffle, then the first two thirds train and the rest is held out.
pub fn split_holdout<T: Clone>(items: &[T], seed: u64) -> (Vec<T>, Vec<T>) {
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = items.len() - items.len() / 3;
    let pick = |ix: &[usize]| ix.iter().map(|&i| items[i].clone()).collect();
    (pick(&order[..n_train]), pick(&order[n_train..]))
}

/// Splits 2:1, drops retweets from the training side when the configuration asks for it,
/// and fits the hashtag scaling on what remains for training.
pub fn build_datasets(
    config: &FeatureConfig,
    records: &[TrainingRecord],
    seed: u64,
) -> (Dataset, Dataset) {
    let (mut train, holdout) = split_holdout(records, seed);
    if config.exclude_retweets_from_training {
        train.retain(|r| !r.is_retweet);
    }
    let scaling = FeatureScaling::fit(train.iter().map(|r| &r.features));
    (
        Dataset::project(config, scaling, &train),
        Dataset::project(config, scaling, &holdout),
    )
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

#[derive(Debug, Clone, PartialEq)]
pub struct NnModel {
    pub topology: NnTopology,
    pub config: FeatureConfig,
    pub scaling: FeatureScaling,
    pub rng_seed: u64,
    /// `[W1 (n_hidden x n_inputs, row-major), b1, W2, b2]`.
    params: Vec<f64>,
}

impl NnModel {
    pub fn zeros(topology: NnTopology, config: FeatureConfig, scaling: FeatureScaling) -> Result<Self> {
        topology.validate()?;
        if config.width() != topology.n_inputs {
            return Err(Error::DimensionMismatch {
                expected: topology.n_inputs,
                actual: config.width(),
            });
        }
        Ok(NnModel {
            params: vec![0.0; topology.param_count()],
            topology,
            config,
            scaling,
            rng_seed: 0,
        })
    }

    fn initialize(&mut self, rng: &mut ChaCha8Rng) {
        let (ni, nh) = (self.topology.n_inputs, self.topology.n_hidden);
        let r1 = 1.0 / (ni as f64).sqrt();
        let r2 = 1.0 / (nh as f64).sqrt();
        let split = nh * ni + nh;
        for (k, p) in self.params.iter_mut().enumerate() {
            let r = if k < split { r1 } else { r2 };
            *p = rng.random_range(-r..=r);
        }
    }

    /// Seeded initial parameters, as `train` would start from.
    pub fn initialized(
        topology: NnTopology,
        config: FeatureConfig,
        scaling: FeatureScaling,
        seed: u64,
    ) -> Result<Self> {
        let mut model = Self::zeros(topology, config, scaling)?;
        model.rng_seed = seed;
        model.initialize(&mut ChaCha8Rng::seed_from_u64(seed));
        Ok(model)
    }

    pub fn from_params(
        topology: NnTopology,
        config: FeatureConfig,
        scaling: FeatureScaling,
        params: Vec<f64>,
    ) -> Result<Self> {
        let mut model = Self::zeros(topology, config, scaling)?;
        if params.len() != model.params.len() {
            return Err(Error::DimensionMismatch {
                expected: model.params.len(),
                actual: params.len(),
            });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidInput("model parameters must be finite".into()));
        }
        model.params = params;
        Ok(model)
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    fn layout(&self) -> (usize, usize, usize, usize) {
        let (ni, nh) = (self.topology.n_inputs, self.topology.n_hidden);
        let b1 = nh * ni;
        let w2 = b1 + nh;
        let b2 = w2 + nh;
        (ni, nh, w2, b2)
    }

    pub fn w1(&self) -> &[f64] {
        let (ni, nh, _, _) = self.layout();
        &self.params[..nh * ni]
    }

    pub fn b1(&self) -> &[f64] {
        let (ni, nh, w2, _) = self.layout();
        &self.params[nh * ni..w2]
    }

    pub fn w2(&self) -> &[f64] {
        let (_, _, w2, b2) = self.layout();
        &self.params[w2..b2]
    }

    pub fn b2(&self) -> f64 {
        self.params[self.layout().3]
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.topology.n_inputs {
            return Err(Error::DimensionMismatch {
                expected: self.topology.n_inputs,
                actual: x.len(),
            });
        }
        Ok(())
    }

    /// Hidden activations (written to `hidden`) and the output.
    fn forward(&self, x: &[f64], hidden: &mut [f64]) -> f64 {
        let (ni, nh, w2, b2) = self.layout();
        let (w1, rest) = self.params.split_at(nh * ni);
        let b1 = &rest[..nh];
        for (j, h) in hidden.iter_mut().enumerate() {
            let row = &w1[j * ni..(j + 1) * ni];
            let z: f64 = row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b1[j];
            *h = sigmoid(z);
        }
        let z2: f64 = self.params[w2..b2]
            .iter()
            .zip(hidden.iter())
            .map(|(w, h)| w * h)
            .sum::<f64>()
            + self.params[b2];
        sigmoid(z2)
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        self.check_input(x)?;
        let mut hidden = vec![0.0; self.topology.n_hidden];
        Ok(self.forward(x, &mut hidden))
    }

    pub fn predict_features(&self, f: &TweetFeatures) -> f64 {
        let x = select_features(&self.config, &self.scaling, f);
        let mut hidden = vec![0.0; self.topology.n_hidden];
        self.forward(&x, &mut hidden)
    }

    /// Squared-error loss `0.5 * (y - target)^2` and its gradient (same layout as the params).
    pub fn loss_and_gradient(&self, x: &[f64], target: f64) -> Result<(f64, Vec<f64>)> {
        self.check_input(x)?;
        let mut grad = vec![0.0; self.params.len()];
        let mut hidden = vec![0.0; self.topology.n_hidden];
        let loss = self.backprop(x, target, &mut hidden, &mut grad);
        Ok((loss, grad))
    }

    fn backprop(&self, x: &[f64], target: f64, hidden: &mut [f64], grad: &mut [f64]) -> f64 {
        let (ni, nh, w2, b2) = self.layout();
        let y = self.forward(x, hidden);
        let delta_out = (y - target) * y * (1.0 - y);
        for j in 0..nh {
            let h = hidden[j];
            grad[w2 + j] = delta_out * h;
            let delta_h = delta_out * self.params[w2 + j] * h * (1.0 - h);
            grad[nh * ni + j] = delta_h;
            for k in 0..ni {
                grad[j * ni + k] = delta_h * x[k];
            }
        }
        grad[b2] = delta_out;
        0.5 * (y - target) * (y - target)
    }

    pub fn mean_squared_error(&self, data: &[LabeledExample]) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::InvalidInput("empty dataset".into()));
        }
        let mut hidden = vec![0.0; self.topology.n_hidden];
        let mut total = 0.0;
        for ex in data {
            self.check_input(&ex.features)?;
            let y = self.forward(&ex.features, &mut hidden);
            total += (y - ex.label as f64).powi(2);
        }
        Ok(total / data.len() as f64)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let t = &self.topology;
        out.push_str(&format!("{FORMAT_HEADER} {FORMAT_VERSION}\n"));
        out.push_str(&format!("config {}\n", self.config.id));
        out.push_str(&format!("topology {} {} {}\n", t.n_inputs, t.n_hidden, t.n_outputs));
        out.push_str(&format!("seed {}\n", self.rng_seed));
        out.push_str(&format!(
            "scaling {} {}\n",
            self.scaling.max_hashtag_count, self.scaling.max_hashtag_chars
        ));
        out.push_str(&format!("params {}\n", self.params.len()));
        for p in &self.params {
            // Display for f64 is the shortest representation that parses back exactly.
            out.push_str(&format!("{p}\n"));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let err = |line: usize, msg: &str| Error::parse("model", line, msg);
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
        let mut field = |name: &str| -> Result<(usize, Vec<String>)> {
            let (no, line) = lines.next().ok_or_else(|| err(0, "unexpected end of file"))?;
            let mut parts = line.split_whitespace();
            if parts.next() != Some(name) {
                return Err(err(no, &format!("expected `{name}`")));
            }
            Ok((no, parts.map(str::to_string).collect()))
        };
        let num = |no: usize, s: &str| -> Result<f64> {
            s.parse().map_err(|_| err(no, &format!("bad number {s:?}")))
        };
        let int = |no: usize, s: &str| -> Result<usize> {
            s.parse().map_err(|_| err(no, &format!("bad integer {s:?}")))
        };

        let (no, v) = field(FORMAT_HEADER)?;
        if v.first().map(String::as_str) != Some(&FORMAT_VERSION.to_string()) {
            return Err(err(no, "unsupported model format version"));
        }
        let (no, v) = field("config")?;
        let config = FeatureConfig::new(
            v.first()
                .ok_or_else(|| err(no, "missing config id"))?
                .parse()?,
        );
        let (no, v) = field("topology")?;
        if v.len() != 3 {
            return Err(err(no, "expected three layer sizes"));
        }
        let mut topology = NnTopology::new(int(no, &v[0])?, int(no, &v[1])?);
        topology.n_outputs = int(no, &v[2])?;
        let (no, v) = field("seed")?;
        let seed: u64 = v
            .first()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| err(no, "bad seed"))?;
        let (no, v) = field("scaling")?;
        if v.len() != 2 {
            return Err(err(no, "expected two scaling maxima"));
        }
        let scaling = FeatureScaling {
            max_hashtag_count: num(no, &v[0])?,
            max_hashtag_chars: num(no, &v[1])?,
        };
        let (no, v) = field("params")?;
        let count = int(no, v.first().ok_or_else(|| err(no, "missing count"))?)?;
        let mut params = Vec::with_capacity(count);
        for (no, line) in lines.by_ref() {
            if line.is_empty() {
                continue;
            }
            params.push(num(no, line)?);
        }
        if params.len() != count {
            return Err(err(0, &format!("expected {count} parameters, found {}", params.len())));
        }
        let mut model = NnModel::from_params(topology, config, scaling, params)?;
        model.rng_seed = seed;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainOptions {
    pub iterations: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Record the training-set MSE every this many iterations (0 disables).
    pub record_every: usize,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            iterations: DEFAULT_ITERATIONS,
            learning_rate: DEFAULT_LEARNING_RATE,
            seed: 0,
            record_every: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: NnModel,
    /// Training MSE sampled every `record_every` iterations.
    pub loss_history: Vec<f64>,
}

pub fn train(data: &Dataset, topology: &NnTopology, opts: &TrainOptions) -> Result<NnModel> {
    let opts = TrainOptions {
        record_every: 0,
        ..*opts
    };
    train_with_history(data, topology, &opts).map(|o| o.model)
}

pub fn train_with_history(
    data: &Dataset,
    topology: &NnTopology,
    opts: &TrainOptions,
) -> Result<TrainOutcome> {
    if data.is_empty() {
        return Err(Error::InvalidInput("cannot train on an empty dataset".into()));
    }
    if !(opts.learning_rate > 0.0) {
        return Err(Error::InvalidInput(format!(
            "learning rate must be positive, got {}",
            opts.learning_rate
        )));
    }
    if let Some(bad) = data.examples.iter().find(|e| e.features.len() != topology.n_inputs) {
        return Err(Error::DimensionMismatch {
            expected: topology.n_inputs,
            actual: bad.features.len(),
        });
    }
    let mut model = NnModel::zeros(*topology, data.config.clone(), data.scaling)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    model.rng_seed = opts.seed;
    model.initialize(&mut rng);

    let mut grad = vec![0.0; model.params.len()];
    let mut hidden = vec![0.0; topology.n_hidden];
    let mut loss_history = Vec::new();
    for it in 0..opts.iterations {
        let ex = &data.examples[rng.random_range(0..data.examples.len())];
        model.backprop(&ex.features, ex.label as f64, &mut hidden, &mut grad);
        for (p, g) in model.params.iter_mut().zip(&grad) {
            *p -= opts.learning_rate * g;
        }
        if opts.record_every > 0 && (it + 1) % opts.record_every == 0 {
            loss_history.push(model.mean_squared_error(&data.examples)?);
        }
    }
    Ok(TrainOutcome {
        model,
        loss_history,
    })
}

/// Credible iff `score > threshold` (strictly above).
pub fn verdict_for(score: f64, threshold: f64) -> Verdict {
    if score > threshold {
        Verdict::Credible
    } else {
        Verdict::NotCredible
    }
}

pub fn classify(model: &NnModel, features: &[f64], threshold: f64) -> Result<Verdict> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidInput(format!("threshold {threshold} outside (0, 1)")));
    }
    Ok(verdict_for(model.predict(features)?, threshold))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub true_positive: usize,
    pub false_positive: usize,
    pub true_negative: usize,
    pub false_negative: usize,
}

impl Metrics {
    pub fn from_counts(tp: usize, fp: usize, tn: usize, fn_: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        Metrics {
            accuracy: ratio(tp + tn, tp + fp + tn + fn_),
            precision: ratio(tp, tp + fp),
            recall: ratio(tp, tp + fn_),
            true_positive: tp,
            false_positive: fp,
            true_negative: tn,
            false_negative: fn_,
        }
    }

    pub fn total(&self) -> usize {
        self.true_positive + self.false_positive + self.true_negative + self.false_negative
    }
}

/// Credible is the positive class.
pub fn evaluate(model: &NnModel, data: &[LabeledExample], threshold: f64) -> Result<Metrics> {
    if data.is_empty() {
        return Err(Error::InvalidInput("cannot evaluate on an empty dataset".into()));
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for ex in data {
        let predicted = classify(model, &ex.features, threshold)? == Verdict::Credible;
        match (predicted, ex.label == 1) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    Ok(Metrics::from_counts(tp, fp, tn, fn_))
}

/// Largest relative disagreement between backpropagated and central-difference gradients of
/// the squared-error loss, `|a - n| / max(1e-8, |a| + |n|)` over all parameters.
pub fn gradient_check(model: &NnModel, features: &[f64], target: f64, epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon <= 1e-2) {
        return Err(Error::InvalidInput(format!("epsilon {epsilon} outside (0, 1e-2]")));
    }
    let (_, analytic) = model.loss_and_gradient(features, target)?;
    let mut probe = model.clone();
    let mut hidden = vec![0.0; model.topology.n_hidden];
    let mut loss_at = |m: &NnModel| {
        let y = m.forward(features, &mut hidden);
        0.5 * (y - target) * (y - target)
    };
    let mut worst = 0.0f64;
    for k in 0..model.params.len() {
        let orig = probe.params[k];
        probe.params[k] = orig + epsilon;
        let plus = loss_at(&probe);
        probe.params[k] = orig - epsilon;
        let minus = loss_at(&probe);
        probe.params[k] = orig;
        let numeric = (plus - minus) / (2.0 * epsilon);
        let rel = (analytic[k] - numeric).abs() / (analytic[k].abs() + numeric.abs()).max(1e-8);
        worst = worst.max(rel);
    }
    Ok(worst)
}

pub fn gradient_check_example(model: &NnModel, example: &LabeledExample, epsilon: f64) -> Result<f64> {
    gradient_check(model, &example.features, example.label as f64, epsilon)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::{prop_assert, proptest};

    fn cfg(n: usize) -> FeatureConfig {
        // Raw-vector tests only care about the width.
        match n {
            3 => FeatureConfig::new(ConfigId::C1),
            4 => FeatureConfig::new(ConfigId::C3),
            _ => FeatureConfig::new(ConfigId::C5),
        }
    }

    fn random_model(ni: usize, nh: usize, seed: u64) -> NnModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let topo = NnTopology::new(ni, nh);
        let params = (0..topo.param_count()).map(|_| rng.random_range(-1.5..1.5)).collect();
        NnModel::from_params(topo, cfg(ni), FeatureScaling::default(), params).unwrap()
    }

    fn features() -> TweetFeatures {
        TweetFeatures {
            retweets_score: 0.1,
            favorites_score: 0.2,
            relevant_words_ratio: 0.7,
            sentiment_score: 0.25,
            hashtag_count: 2,
            hashtag_chars: 10,
            words_no: 5,
            characters_no: 40,
        }
    }

    #[test]
    fn hidden_bound_examples() {
        assert_eq!(hidden_upper_bound(1200, 5, 1, 10.0).unwrap(), 20);
        assert_eq!(hidden_upper_bound(600, 5, 1, 2.0).unwrap(), 50);
        assert_eq!(hidden_upper_bound(6, 5, 1, 2.0).unwrap(), 1);
        assert!(hidden_upper_bound(600, 5, 1, 1.9).is_err());
        assert!(hidden_upper_bound(600, 5, 1, 10.5).is_err());
        assert!(hidden_upper_bound(0, 5, 1, 2.0).is_err());
    }

    #[test]
    fn topology_validation() {
        let mut t = NnTopology::new(5, 13);
        assert!(t.validate().is_ok());
        t.n_samples_hint = Some(600);
        t.alpha = 10.0; // bound = 10
        assert!(t.validate().is_err());
        t.n_hidden = 10;
        assert!(t.validate().is_ok());
        t.n_outputs = 2;
        assert!(t.validate().is_err());
        let b = NnTopology::bounded(5, 1200, 10.0).unwrap();
        assert_eq!(b.n_hidden, 20);
    }

    #[test]
    fn configurations() {
        use FeatureKind::*;
        assert_eq!(
            FeatureConfig::new(ConfigId::C1).features,
            vec![RetweetsScore, FavoritesScore, RelevantWordsRatio]
        );
        assert!(FeatureConfig::new(ConfigId::C2).exclude_retweets_from_training);
        assert!(ConfigId::ALL
            .iter()
            .filter(|c| **c != ConfigId::C2)
            .all(|c| !FeatureConfig::new(*c).exclude_retweets_from_training));
        assert_eq!(FeatureConfig::new(ConfigId::C4).features.last(), Some(&HashtagChars));
        assert_eq!(FeatureConfig::new(ConfigId::C5).features.last(), Some(&HashtagCount));
        assert_eq!(
            FeatureConfig::new(ConfigId::C6).features,
            vec![RetweetsScore, FavoritesScore, RelevantWordsRatio, HashtagCount, HashtagChars]
        );
        assert_eq!("c5".parse::<ConfigId>().unwrap(), ConfigId::C5);
        assert!("C7".parse::<ConfigId>().is_err());
    }

    #[test]
    fn feature_selection() {
        let scaling = FeatureScaling {
            max_hashtag_count: 4.0,
            max_hashtag_chars: 20.0,
        };
        let f = features();
        let c1 = select_features(&FeatureConfig::new(ConfigId::C1), &scaling, &f);
        assert_eq!(c1, vec![0.1, 0.2, 0.7]);
        let c3 = select_features(&FeatureConfig::new(ConfigId::C3), &scaling, &f);
        assert_eq!(c3, [&c1[..], &[0.25]].concat());
        let c5 = select_features(&FeatureConfig::new(ConfigId::C5), &scaling, &f);
        assert_eq!(c5[4], 0.5);
        let none = TweetFeatures {
            hashtag_count: 0,
            ..f
        };
        let c5 = select_features(&FeatureConfig::new(ConfigId::C5), &scaling, &none);
        assert_eq!(c5[4], 0.0);
        // Beyond the training maximum clamps.
        let many = TweetFeatures {
            hashtag_chars: 100,
            ..f
        };
        assert_eq!(select_features(&FeatureConfig::new(ConfigId::C4), &scaling, &many)[4], 1.0);
        assert_eq!(
            select_features(&FeatureConfig::new(ConfigId::C4), &FeatureScaling::default(), &many)[4],
            0.0
        );
    }

    fn tiny_dataset() -> Dataset {
        let examples = (0..20)
            .map(|i| {
                let x = i as f64 / 20.0;
                LabeledExample::new(vec![x, 1.0 - x, 0.5], (x > 0.5) as u8).unwrap()
            })
            .collect();
        Dataset::from_examples(FeatureConfig::new(ConfigId::C1), examples)
    }

    #[test]
    fn zero_iterations_is_initialization() {
        let data = tiny_dataset();
        let topo = NnTopology::new(3, 4);
        let opts = TrainOptions {
            iterations: 0,
            seed: 9,
            ..Default::default()
        };
        let trained = train(&data, &topo, &opts).unwrap();
        let init = NnModel::initialized(topo, data.config.clone(), data.scaling, 9).unwrap();
        assert_eq!(trained, init);
        let r = 1.0 / 3f64.sqrt();
        assert!(init.w1().iter().all(|w| w.abs() <= r));
        assert!(init.w2().iter().all(|w| w.abs() <= 0.5));
    }

    #[test]
    fn training_is_deterministic() {
        let data = tiny_dataset();
        let topo = NnTopology::new(3, 4);
        let opts = TrainOptions {
            iterations: 2_000,
            seed: 3,
            ..Default::default()
        };
        let a = train(&data, &topo, &opts).unwrap();
        let b = train(&data, &topo, &opts).unwrap();
        assert_eq!(
            a.params().iter().map(|p| p.to_bits()).collect::<Vec<_>>(),
            b.params().iter().map(|p| p.to_bits()).collect::<Vec<_>>()
        );
        let c = train(&data, &topo, &TrainOptions { seed: 4, ..opts }).unwrap();
        assert_ne!(a.params(), c.params());
    }

    #[test]
    fn training_errors() {
        let topo = NnTopology::new(3, 4);
        let empty = Dataset::from_examples(FeatureConfig::new(ConfigId::C1), vec![]);
        assert!(train(&empty, &topo, &TrainOptions::default()).is_err());
        let mut data = tiny_dataset();
        assert!(train(&data, &topo, &TrainOptions { learning_rate: 0.0, ..Default::default() }).is_err());
        data.examples[3].features.push(1.0);
        assert!(matches!(
            train(&data, &topo, &TrainOptions::default()),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(LabeledExample::new(vec![], 2).is_err());
    }

    #[test]
    fn zero_model_predicts_half() {
        let m = NnModel::zeros(NnTopology::new(3, 5), cfg(3), FeatureScaling::default()).unwrap();
        assert_eq!(m.predict(&[0.3, -2.0, 9.0]).unwrap(), 0.5);
        assert_eq!(classify(&m, &[0.0; 3], DEFAULT_THRESHOLD).unwrap(), Verdict::NotCredible);
        assert!(m.predict(&[0.0; 4]).is_err());
        assert!(classify(&m, &[0.0; 3], 1.0).is_err());
    }

    #[test]
    fn threshold_is_strict() {
        assert_eq!(verdict_for(0.6, 0.6), Verdict::NotCredible);
        assert_eq!(verdict_for(0.61, 0.6), Verdict::Credible);
        assert_eq!(verdict_for(0.5, 0.6), Verdict::NotCredible);
        assert_eq!(verdict_for(f64::from_bits(0.6f64.to_bits() + 1), 0.6), Verdict::Credible);
    }

    #[test]
    fn single_hidden_unit_is_monotone() {
        let topo = NnTopology::new(3, 1);
        let m = NnModel::from_params(topo, cfg(3), FeatureScaling::default(), vec![0.8, 1.2, 0.5, -0.3, 2.0, -1.0])
            .unwrap();
        let base = [0.2, 0.4, 0.6];
        let y0 = m.predict(&base).unwrap();
        for k in 0..3 {
            let mut x = base;
            x[k] += 0.1;
            assert!(m.predict(&x).unwrap() > y0);
        }
    }

    #[test]
    fn evaluation_counts() {
        let m = NnModel::zeros(NnTopology::new(3, 2), cfg(3), FeatureScaling::default()).unwrap();
        let data: Vec<_> = (0..7).map(|_| LabeledExample::new(vec![0.1, 0.2, 0.3], 1).unwrap()).collect();
        let metrics = evaluate(&m, &data, DEFAULT_THRESHOLD).unwrap();
        assert_eq!(metrics.accuracy, 0.0);
        assert_eq!(metrics.false_negative, 7);
        assert_eq!(metrics.total(), 7);
        assert_eq!(metrics.precision, 0.0);
        assert!(evaluate(&m, &[], DEFAULT_THRESHOLD).is_err());
    }

    #[test]
    fn perfect_model_on_training_set() {
        // Output = sigmoid(10 * (2 * sigmoid(20 * (x0 - 0.5)) - 1)): x0 > 0.5 maps near 1.
        let topo = NnTopology::new(3, 1);
        let m = NnModel::from_params(topo, cfg(3), FeatureScaling::default(), vec![20.0, 0.0, 0.0, -10.0, 20.0, -10.0])
            .unwrap();
        let data: Vec<_> = [0.0, 0.1, 0.3, 0.7, 0.9, 1.0]
            .iter()
            .map(|&x| LabeledExample::new(vec![x, 0.0, 0.0], (x > 0.5) as u8).unwrap())
            .collect();
        let metrics = evaluate(&m, &data, DEFAULT_THRESHOLD).unwrap();
        assert_eq!(metrics.accuracy, 1.0);
        assert_eq!((metrics.precision, metrics.recall), (1.0, 1.0));
    }

    #[test]
    fn gradient_check_random_models() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for s in 0..20 {
            let m = random_model(4, 3, s);
            let x: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..1.0)).collect();
            let err = gradient_check(&m, &x, (s % 2) as f64, 1e-5).unwrap();
            assert!(err < 1e-4, "seed {s}: {err}");
        }
        let m = random_model(4, 3, 0);
        assert!(gradient_check(&m, &[0.0; 4], 1.0, 0.1).is_err());
        assert!(gradient_check(&m, &[0.0; 4], 1.0, 0.0).is_err());
    }

    #[test]
    fn gradient_check_at_stationary_point() {
        let m = NnModel::zeros(NnTopology::new(3, 2), cfg(3), FeatureScaling::default()).unwrap();
        let (loss, grad) = m.loss_and_gradient(&[0.4, 0.1, 0.9], 0.5).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.iter().all(|g| *g == 0.0));
        let err = gradient_check(&m, &[0.4, 0.1, 0.9], 0.5, 1e-5).unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn gradient_error_shrinks_with_epsilon() {
        let m = random_model(3, 4, 5);
        let x = [0.3, 0.8, 0.1];
        let coarse = gradient_check(&m, &x, 1.0, 1e-2).unwrap();
        let mid = gradient_check(&m, &x, 1.0, 1e-3).unwrap();
        let fine = gradient_check(&m, &x, 1.0, 1e-5).unwrap();
        assert!(coarse > mid && mid > fine, "{coarse} {mid} {fine}");
    }

    #[test]
    fn hidden_permutation_symmetry() {
        let m = random_model(3, 4, 8);
        let perm = [2usize, 0, 3, 1];
        let (w1, b1, w2) = (m.w1(), m.b1(), m.w2());
        let mut params = Vec::new();
        for &j in &perm {
            params.extend_from_slice(&w1[j * 3..(j + 1) * 3]);
        }
        params.extend(perm.iter().map(|&j| b1[j]));
        params.extend(perm.iter().map(|&j| w2[j]));
        params.push(m.b2());
        let permuted = NnModel::from_params(m.topology, m.config.clone(), m.scaling, params).unwrap();
        for x in [[0.1, 0.2, 0.3], [0.9, 0.0, 0.5], [1.0, 1.0, 1.0]] {
            let (a, b) = (m.predict(&x).unwrap(), permuted.predict(&x).unwrap());
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn text_round_trip_bit_exact() {
        let mut m = random_model(5, 6, 21);
        m.rng_seed = 21;
        m.scaling = FeatureScaling {
            max_hashtag_count: 7.0,
            max_hashtag_chars: 0.1 + 0.2,
        };
        let text = m.to_text();
        assert!(text.starts_with("credence-nn 1\nconfig C5\ntopology 5 6 1\nseed 21\n"));
        let back = NnModel::from_text(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_text(), text);
        assert!(back
            .params()
            .iter()
            .zip(m.params())
            .all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn text_format_errors() {
        let text = random_model(3, 2, 1).to_text();
        assert!(NnModel::from_text(&text.replace("credence-nn 1", "credence-nn 2")).is_err());
        assert!(NnModel::from_text(&text.replace("config C1", "config C9")).is_err());
        let truncated: String = text.lines().take(8).map(|l| format!("{l}\n")).collect();
        assert!(NnModel::from_text(&truncated).is_err());
        assert!(NnModel::from_text(&text.replace("topology 3 2 1", "topology 4 2 1")).is_err());
        assert!(NnModel::from_text("").is_err());
    }

    #[test]
    fn holdout_split() {
        let items: Vec<usize> = (0..30).collect();
        let (train, hold) = split_holdout(&items, 1);
        assert_eq!((train.len(), hold.len()), (20, 10));
        let mut all: Vec<usize> = train.iter().chain(&hold).copied().collect();
        all.sort_unstable();
        assert_eq!(all, items);
        assert_eq!(split_holdout(&items, 1), (train, hold));
    }

    #[test]
    fn retweet_exclusion_applies_to_training_only() {
        let records: Vec<TrainingRecord> = (0..30)
            .map(|i| TrainingRecord {
                features: TweetFeatures {
                    hashtag_count: i,
                    ..features()
                },
                is_retweet: i % 2 == 0,
                label: (i % 3 == 0) as u8,
            })
            .collect();
        let (t1, h1) = build_datasets(&FeatureConfig::new(ConfigId::C1), &records, 5);
        let (t2, h2) = build_datasets(&FeatureConfig::new(ConfigId::C2), &records, 5);
        assert_eq!(t1.len(), 20);
        assert!(t2.len() < t1.len());
        assert_eq!(h1.examples, h2.examples);
        let (t5, _) = build_datasets(&FeatureConfig::new(ConfigId::C5), &records, 5);
        assert!(t5.scaling.max_hashtag_count > 0.0);
        assert!(t5.examples.iter().all(|e| (0.0..=1.0).contains(&e.features[4])));
    }

    proptest! {
        #[test]
        fn output_strictly_inside_unit_interval(
            seed in 0u64..1000,
            x in proptest::array::uniform3(-5.0f64..5.0),
        ) {
            let m = random_model(3, 4, seed);
            let y = m.predict(&x).unwrap();
            prop_assert!(y > 0.0 && y < 1.0);
        }
    }
}
