use std::path::Path;

use chrono::Duration;
use serde::{Deserialize, Serialize};

use credence_core::classifier::{
    build_datasets, evaluate, hidden_upper_bound, select_features, split_holdout, train,
    verdict_for, ConfigId, FeatureConfig, LabeledExample, NnModel, NnTopology, TrainOptions,
    TrainingRecord, DEFAULT_HIDDEN, DEFAULT_THRESHOLD,
};
use credence_core::config::{EngineConfig, TopicSource};
use credence_core::geostats::{
    aggregate, cluster_points, clusters_geojson, heatmap, heatmap_geojson, html_page,
    write_region_csv, ContinentMap, CountryAssignment, HeatmapClass, Level, UNASSIGNED,
};
use credence_core::model::{extract_user_features, GeoPoint, TweetFeatures, UserFeatures, UserProfile, Verdict};
use credence_core::pipeline::dedup::DedupMode;
use credence_core::pipeline::run::RunResources;
use credence_core::pipeline::store::ScoreEntry;
use credence_core::pipeline::{
    dedup, ingest, monitor_tweet, monitor_user, run_pipeline, trend, Clock, FakeClock,
    IngestOptions, IngestRecord, Store, SystemClock, TimeSeries, TweetScorer,
};
use credence_core::scoring::{tweet_credibility, user_credibility, FormulaWeights};
use credence_core::sentiment::{SentimentLabel, TopicKeywordList, WordLexicon};
use credence_core::simtext::{bench, write_bench_csv, AlignmentParams, Algorithm, BenchOptions, PairSampling};
use credence_core::text::Stopwords;
use credence_core::Error;

use crate::io::{emit, is_csv, open, parse_list, parse_time, read_to_string, usage, CmdResult};
use crate::{
    BenchSimArgs, ClassArg, Cli, ClustersArgs, Command, DedupArgs, EvalArgs, Format, HeatmapArgs,
    IngestArgs, LevelArg, ModeArg, MonitorArgs, PredictArgs, RunArgs, ScoreTweetArgs,
    ScoreUserArgs, StatsArgs, TrainArgs, TrendArgs,
};

pub fn dispatch(cli: Cli) -> CmdResult {
    let cfg = match &cli.config_file {
        Some(p) => EngineConfig::load(p)?,
        None => EngineConfig::default(),
    };
    let ctx = Ctx { cfg, format: cli.format };
    match cli.command {
        Command::Ingest(a) => ctx.ingest(a),
        Command::Dedup(a) => ctx.dedup(a),
        Command::ScoreTweet(a) => ctx.score_tweet(a),
        Command::ScoreUser(a) => ctx.score_user(a),
        Command::Train(a) => ctx.train(a),
        Command::Eval(a) => ctx.eval(a),
        Command::Predict(a) => ctx.predict(a),
        Command::BenchSim(a) => ctx.bench_sim(a),
        Command::Stats(a) => ctx.stats(a),
        Command::Clusters(a) => ctx.clusters(a),
        Command::Heatmap(a) => ctx.heatmap(a),
        Command::Monitor(a) => ctx.monitor(a),
        Command::Trend(a) => ctx.trend(a),
        Command::Run(a) => ctx.run(a),
    }
}

struct Ctx {
    cfg: EngineConfig,
    format: Option<Format>,
}

fn json_line<T: Serialize + ?Sized>(value: &T) -> CmdResult<Vec<u8>> {
    let mut v = serde_json::to_vec(value)?;
    v.push(b'\n');
    Ok(v)
}

fn mode_of(m: ModeArg) -> DedupMode {
    match m {
        ModeArg::Realtime => DedupMode::RealTime,
        ModeArg::Offline => DedupMode::Offline,
    }
}

fn topic_source(s: &str) -> TopicSource {
    match s {
        "bundled" => TopicSource::Bundled,
        p => TopicSource::File(p.into()),
    }
}

fn read_records(path: &Path) -> CmdResult<Vec<IngestRecord>> {
    let text = read_to_string(path)?;
    let name = path.display().to_string();
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let r: IngestRecord = serde_json::from_str(line)
            .map_err(|e| Error::parse(name.clone(), i + 1, e.to_string()))?;
        r.validate()
            .map_err(|e| Error::parse(name.clone(), i + 1, e.to_string()))?;
        out.push(r);
    }
    Ok(out)
}

/// One row of a feature table.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct FeatureRow {
    #[serde(default)]
    id: Option<String>,
    retweets_score: f64,
    favorites_score: f64,
    relevant_words_ratio: f64,
    sentiment_score: f64,
    #[serde(default)]
    hashtag_count: u32,
    #[serde(default)]
    hashtag_chars: u32,
    #[serde(default)]
    words_no: u32,
    #[serde(default)]
    characters_no: u32,
    #[serde(default)]
    is_retweet: bool,
    #[serde(default)]
    label: Option<u8>,
}

#[derive(Debug, Clone)]
struct Sample {
    id: String,
    features: TweetFeatures,
    is_retweet: bool,
    label: Option<u8>,
}

impl Sample {
    fn labelled(&self) -> CmdResult<TrainingRecord> {
        match self.label {
            Some(label @ (0 | 1)) => Ok(TrainingRecord {
                features: self.features,
                is_retweet: self.is_retweet,
                label,
            }),
            Some(l) => Err(Error::InvalidInput(format!("sample {}: label {l} is not 0 or 1", self.id)).into()),
            None => Err(Error::InvalidInput(format!("sample {} has no label", self.id)).into()),
        }
    }
}

impl Ctx {
    fn weights(&self, path: &Option<std::path::PathBuf>) -> CmdResult<FormulaWeights> {
        Ok(match path {
            Some(p) => FormulaWeights::load(p)?,
            None => self.cfg.weights.clone(),
        })
    }

    fn scorer(&self) -> CmdResult<TweetScorer> {
        Ok(TweetScorer {
            stopwords: match &self.cfg.stopwords {
                Some(p) => Stopwords::load(p)?,
                None => Stopwords::english(),
            },
            lexicon: match &self.cfg.lexicon {
                Some(p) => WordLexicon::load(p)?,
                None => WordLexicon::english(),
            },
            weights: self.cfg.weights.clone(),
        })
    }

    fn samples(&self, path: &Path) -> CmdResult<Vec<Sample>> {
        if is_csv(path) {
            let mut rdr = csv::Reader::from_reader(open(path)?);
            let mut out = Vec::new();
            for (i, row) in rdr.deserialize::<FeatureRow>().enumerate() {
                let r = row?;
                out.push(Sample {
                    id: r.id.unwrap_or_else(|| i.to_string()),
                    features: TweetFeatures {
                        retweets_score: r.retweets_score,
                        favorites_score: r.favorites_score,
                        relevant_words_ratio: r.relevant_words_ratio,
                        sentiment_score: r.sentiment_score,
                        hashtag_count: r.hashtag_count,
                        hashtag_chars: r.hashtag_chars,
                        words_no: r.words_no,
                        characters_no: r.characters_no,
                    },
                    is_retweet: r.is_retweet,
                    label: r.label,
                });
            }
            return Ok(out);
        }
        let scorer = self.scorer()?;
        read_records(path)?
            .into_iter()
            .map(|r| {
                Ok(Sample {
                    id: r.tweet.id.clone(),
                    features: scorer.features(&r.tweet, &r.author),
                    is_retweet: r.tweet.looks_like_retweet(),
                    label: r.credibility_label()?,
                })
            })
            .collect()
    }

    fn ingest(&self, a: IngestArgs) -> CmdResult {
        let mut cfg = self.cfg.clone();
        if let Some(l) = &a.languages {
            cfg = EngineConfig::parse(&format!("languages = {l}"), None)
                .map(|c| EngineConfig { languages: c.languages, ..cfg })?;
        }
        if a.require_geo {
            cfg.require_geo = true;
        }
        if a.allow_missing_geo {
            cfg.require_geo = false;
        }
        if let Some(t) = &a.topics {
            cfg.topics = Some(topic_source(t));
        }
        let topics = match &cfg.topics {
            None => None,
            Some(TopicSource::Bundled) => Some(TopicKeywordList::english_sample()),
            Some(TopicSource::File(p)) => Some(TopicKeywordList::load(p)?),
        };
        let snapshot_at = a.snapshot_at.as_deref().map(parse_time).transpose()?;
        let opts = IngestOptions {
            languages: cfg.languages.clone(),
            require_geo: cfg.require_geo,
            topics,
            translator: None,
            threads: a.threads.unwrap_or(cfg.threads),
            queue_capacity: cfg.queue_capacity,
        };
        let outcome = ingest(open(&a.input)?, &opts)?;

        let mut accepted = Vec::new();
        for acc in &outcome.accepted {
            accepted.extend(json_line(&acc.record)?);
        }
        emit(a.output.as_ref(), &accepted)?;
        if let Some(p) = &a.rejections {
            let mut buf = Vec::new();
            outcome.write_rejections_csv(&mut buf)?;
            emit(Some(p), &buf)?;
        }

        let mut stored = 0usize;
        if let Some(dir) = &a.store {
            let scorer = self.scorer()?;
            let mut store = Store::open(dir)?;
            for acc in &outcome.accepted {
                let r = &acc.record;
                let at = snapshot_at.unwrap_or(r.tweet.creation_date);
                if !store.has_user_snapshot(&r.author.id, at) {
                    store.put_user(at, r.author.clone())?;
                }
                if store.has_tweet_snapshot(&r.tweet.id, at) {
                    continue;
                }
                store.put_tweet(at, r.tweet.clone())?;
                store.append_score(ScoreEntry {
                    at,
                    tweet_id: r.tweet.id.clone(),
                    author_id: r.author.id.clone(),
                    score: scorer.score(&r.tweet, &r.author)?,
                })?;
                stored += 1;
            }
        }

        let summary = serde_json::json!({
            "lines_read": outcome.lines_read,
            "accepted": outcome.accepted.len(),
            "rejected": outcome.rejections.len(),
            "rejected_by_reason": outcome
                .rejections_by_reason()
                .into_iter()
                .map(|(k, v)| (k.as_str().to_string(), v))
                .collect::<std::collections::BTreeMap<_, _>>(),
            "stored": stored,
        });
        eprintln!("{summary}");
        Ok(())
    }

    fn dedup(&self, a: DedupArgs) -> CmdResult {
        let records = read_records(&a.input)?;
        let mode = a.mode.map(mode_of).unwrap_or(self.cfg.dedup_mode);
        let threshold = match a.threshold {
            Some(t) if !(0.0..=1.0).contains(&t) => {
                return Err(usage(format!("threshold {t} outside [0, 1]")))
            }
            Some(t) => t,
            None if mode == self.cfg.dedup_mode => self.cfg.dedup_threshold(),
            None => mode.default_threshold(),
        };
        let tweets: Vec<_> = records.iter().map(|r| &r.tweet).collect();
        let result = dedup(&tweets, mode, Some(threshold));
        let mut reps = result.representatives.clone();
        reps.sort();
        let mut out = Vec::new();
        for i in reps {
            out.extend(json_line(&records[i])?);
        }
        emit(a.output.as_ref(), &out)?;
        if let Some(p) = &a.groups {
            let mut buf = Vec::new();
            result.write_groups_csv(&tweets, &mut buf)?;
            emit(Some(p), &buf)?;
        }
        Ok(())
    }

    fn print_value(&self, name: &str, value: f64) -> CmdResult {
        let bytes = match self.format {
            Some(Format::Csv) => format!("{name}\n{value}\n").into_bytes(),
            _ => json_line(&value)?,
        };
        emit(None, &bytes)
    }

    fn score_tweet(&self, a: ScoreTweetArgs) -> CmdResult {
        let weights = self.weights(&a.weights)?;
        let score = if let Some(p) = &a.features {
            let f: TweetFeatures = serde_json::from_str(&read_to_string(p)?)?;
            tweet_credibility(&f, &weights)?
        } else {
            let p = a.record.as_ref().expect("clap enforces one source");
            let r: IngestRecord = serde_json::from_str(&read_to_string(p)?)?;
            r.validate()?;
            let scorer = TweetScorer { weights, ..self.scorer()? };
            scorer.score(&r.tweet, &r.author)?
        };
        self.print_value("score", score)
    }

    fn score_user(&self, a: ScoreUserArgs) -> CmdResult {
        let weights = self.weights(&a.weights)?;
        let features: UserFeatures = if let Some(p) = &a.features {
            serde_json::from_str(&read_to_string(p)?)?
        } else {
            let p = a.user.as_ref().expect("clap enforces one source");
            let user: UserProfile = serde_json::from_str(&read_to_string(p)?)?;
            user.validate()?;
            let now = parse_time(a.now.as_deref().expect("clap requires --now"))?;
            let scores: Vec<f64> = match &a.scores {
                Some(s) => parse_list(s, "score")?,
                None => Vec::new(),
            };
            extract_user_features(&user, now, &scores)?
        };
        self.print_value("score", user_credibility(&features, &weights)?)
    }

    fn train(&self, a: TrainArgs) -> CmdResult {
        let config = FeatureConfig::new(a.config.parse::<ConfigId>().map_err(|e| usage(e.to_string()))?);
        let seed = a.seed.unwrap_or(self.cfg.seed);
        let records = self
            .samples(&a.data)?
            .iter()
            .map(Sample::labelled)
            .collect::<CmdResult<Vec<_>>>()?;
        let (train_set, holdout) = build_datasets(&config, &records, seed);
        let hidden = match a.alpha {
            Some(alpha) => hidden_upper_bound(train_set.len().max(1), config.width(), 1, alpha)?,
            None => a.hidden.unwrap_or(DEFAULT_HIDDEN),
        };
        let topology = NnTopology::new(config.width(), hidden);
        let opts = TrainOptions {
            iterations: a.iterations,
            learning_rate: a.learning_rate,
            seed,
            record_every: 0,
        };
        let model = train(&train_set, &topology, &opts)?;
        model.save(&a.output)?;
        let metrics = if holdout.is_empty() {
            None
        } else {
            Some(evaluate(&model, &holdout.examples, DEFAULT_THRESHOLD)?)
        };
        let report = serde_json::json!({
            "config": config.id.to_string(),
            "hidden": hidden,
            "train_size": train_set.len(),
            "holdout_size": holdout.len(),
            "holdout": metrics,
        });
        emit(None, &json_line(&report)?)
    }

    fn threshold(&self, t: Option<f64>) -> CmdResult<f64> {
        let t = t.unwrap_or(self.cfg.verdict_threshold);
        if t > 0.0 && t < 1.0 {
            Ok(t)
        } else {
            Err(usage(format!("threshold {t} outside (0, 1)")))
        }
    }

    fn eval(&self, a: EvalArgs) -> CmdResult {
        let threshold = self.threshold(a.threshold)?;
        let model = NnModel::load(&a.model)?;
        let mut records = self
            .samples(&a.data)?
            .iter()
            .map(Sample::labelled)
            .collect::<CmdResult<Vec<_>>>()?;
        if let Some(seed) = a.holdout_seed {
            records = split_holdout(&records, seed).1;
        }
        let examples = records
            .iter()
            .map(|r| LabeledExample::new(select_features(&model.config, &model.scaling, &r.features), r.label))
            .collect::<Result<Vec<_>, _>>()?;
        let m = evaluate(&model, &examples, threshold)?;
        let bytes = match self.format {
            Some(Format::Csv) => {
                let mut w = csv::Writer::from_writer(Vec::new());
                w.serialize(m)?;
                w.into_inner().map_err(|e| usage(e.to_string()))?
            }
            _ => json_line(&m)?,
        };
        emit(None, &bytes)
    }

    fn predict(&self, a: PredictArgs) -> CmdResult {
        let threshold = self.threshold(a.threshold)?;
        let model = NnModel::load(&a.model)?;
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["id", "score", "verdict"])?;
        for s in self.samples(&a.input)? {
            let score = model.predict_features(&s.features);
            w.write_record([s.id.as_str(), &score.to_string(), verdict_for(score, threshold).as_str()])?;
        }
        let bytes = w.into_inner().map_err(|e| usage(e.to_string()))?;
        emit(a.output.as_ref(), &bytes)
    }

    fn bench_sim(&self, a: BenchSimArgs) -> CmdResult {
        let texts: Vec<String> = if a.input.extension().is_some_and(|e| e == "jsonl") {
            read_records(&a.input)?.into_iter().map(|r| r.tweet.text).collect()
        } else {
            read_to_string(&a.input)?
                .lines()
                .filter(|l| !l.trim().is_empty())
                .map(str::to_string)
                .collect()
        };
        let sampling = match a.pairs.as_str() {
            "auto" => PairSampling::Auto,
            "all" => PairSampling::All,
            n => PairSampling::Sample(n.parse().map_err(|_| usage(format!("bad --pairs {n:?}")))?),
        };
        let algorithms: Vec<Algorithm> = match &a.algorithms {
            Some(list) => list
                .split(',')
                .map(|s| s.trim().parse::<Algorithm>().map_err(|e| usage(e.to_string())))
                .collect::<CmdResult<_>>()?,
            None => Algorithm::ALL.to_vec(),
        };
        let params = AlignmentParams::new(a.match_score, a.mismatch, a.gap)?;
        let opts = BenchOptions {
            threshold: a.threshold,
            sampling,
            seed: a.seed.unwrap_or(self.cfg.seed),
            threads: a.threads,
            algorithms,
        };
        let reports = bench(&texts, &params, &opts)?;
        let bytes = match self.format {
            Some(Format::Json) => json_line(&reports)?,
            _ => {
                let mut buf = Vec::new();
                write_bench_csv(&reports, &mut buf)?;
                buf
            }
        };
        emit(a.output.as_ref(), &bytes)
    }

    fn stats(&self, a: StatsArgs) -> CmdResult {
        #[derive(Deserialize)]
        struct Row {
            country: String,
            verdict: Verdict,
        }
        let mut rdr = csv::Reader::from_reader(open(&a.input)?);
        let mut records = Vec::new();
        for row in rdr.deserialize::<Row>() {
            let r = row?;
            let c = if r.country.is_empty() || r.country == UNASSIGNED {
                CountryAssignment::Unassigned
            } else {
                CountryAssignment::Country(r.country)
            };
            records.push((c, r.verdict));
        }
        let continents = match a.continents.as_ref().or(self.cfg.continents.as_ref()) {
            Some(p) => ContinentMap::load(p)?,
            None => ContinentMap::bundled(),
        };
        let level = match a.level {
            LevelArg::Country => Level::Country,
            LevelArg::Continent => Level::Continent,
        };
        let report = aggregate(&records, level, a.min_count.unwrap_or(self.cfg.min_count), &continents);
        let bytes = match self.format {
            Some(Format::Json) => json_line(&report)?,
            _ => {
                let mut buf = Vec::new();
                write_region_csv(&report.regions, &mut buf)?;
                buf
            }
        };
        emit(a.output.as_ref(), &bytes)
    }

    fn cell_size(&self, c: Option<f64>) -> f64 {
        c.unwrap_or(self.cfg.cell_size_deg)
    }

    fn clusters(&self, a: ClustersArgs) -> CmdResult {
        #[derive(Deserialize)]
        struct Row {
            lat: Option<f64>,
            lon: Option<f64>,
            sentiment: SentimentLabel,
        }
        let mut points = Vec::new();
        for row in csv::Reader::from_reader(open(&a.input)?).deserialize::<Row>() {
            let r = row?;
            if let (Some(lat), Some(lon)) = (r.lat, r.lon) {
                points.push((GeoPoint::new(lat, lon)?, r.sentiment));
            }
        }
        let clusters = cluster_points(&points, self.cell_size(a.cell_size))?;
        let geojson = clusters_geojson(&clusters);
        if let Some(p) = &a.html {
            emit(Some(p), html_page("Sentiment clusters", &geojson).as_bytes())?;
        }
        emit(a.output.as_ref(), &serde_json::to_vec_pretty(&geojson)?)
    }

    fn heatmap(&self, a: HeatmapArgs) -> CmdResult {
        #[derive(Deserialize)]
        struct Row {
            lat: Option<f64>,
            lon: Option<f64>,
            verdict: Verdict,
        }
        let mut points = Vec::new();
        for row in csv::Reader::from_reader(open(&a.input)?).deserialize::<Row>() {
            let r = row?;
            if let (Some(lat), Some(lon)) = (r.lat, r.lon) {
                points.push((GeoPoint::new(lat, lon)?, r.verdict));
            }
        }
        let which = match a.class {
            ClassArg::Credible => HeatmapClass::Credible,
            ClassArg::NotCredible => HeatmapClass::NotCredible,
            ClassArg::Both => HeatmapClass::Both,
        };
        let grid = heatmap(&points, self.cell_size(a.cell_size), which)?;
        let geojson = heatmap_geojson(&grid);
        if let Some(p) = &a.html {
            emit(Some(p), html_page("Credibility heatmap", &geojson).as_bytes())?;
        }
        emit(a.output.as_ref(), &serde_json::to_vec_pretty(&geojson)?)
    }

    fn monitor(&self, a: MonitorArgs) -> CmdResult {
        if a.interval_mins <= 0 {
            return Err(usage("--interval-mins must be positive"));
        }
        let store = Store::open(&a.store)?;
        let scorer = self.scorer()?;
        let interval = Duration::minutes(a.interval_mins);
        let target = a.tweet.as_deref().or(a.user.as_deref()).expect("clap requires a target");
        let fake;
        let system = SystemClock;
        let clock: &dyn Clock = if a.wall_clock {
            &system
        } else {
            let start = match &a.start {
                Some(s) => parse_time(s)?,
                None => store.latest_snapshot_time(target).ok_or_else(|| Error::UnknownId {
                    kind: if a.tweet.is_some() { "tweet" } else { "user" },
                    id: target.to_string(),
                })?,
            };
            fake = FakeClock::new(start);
            &fake
        };
        let job = match &a.tweet {
            Some(id) => monitor_tweet(&store, id, interval, clock, a.ticks, &scorer)?,
            None => monitor_user(&store, target, interval, clock, a.ticks, &scorer)?,
        };
        let bytes = match self.format {
            Some(Format::Json) => {
                let rows: Vec<_> = job
                    .samples
                    .samples()
                    .iter()
                    .map(|(t, v)| serde_json::json!({"timestamp": t.to_rfc3339(), "score": v}))
                    .collect();
                json_line(&rows)?
            }
            _ => {
                let mut buf = Vec::new();
                job.samples.write_csv(&mut buf)?;
                buf
            }
        };
        emit(a.output.as_ref(), &bytes)
    }

    fn trend(&self, a: TrendArgs) -> CmdResult {
        let values = match (&a.values, &a.input) {
            (Some(v), _) => parse_list::<f64>(v, "score")?,
            (None, Some(p)) => TimeSeries::read_csv(open(p)?)?.values(),
            (None, None) => unreachable!("clap requires a series"),
        };
        let t = trend(&values, a.flat_epsilon.unwrap_or(self.cfg.flat_epsilon))?;
        let bytes = match self.format {
            Some(Format::Csv) => format!("trend\n{}\n", t.as_str()).into_bytes(),
            _ => json_line(t.as_str())?,
        };
        emit(None, &bytes)
    }

    fn run(&self, a: RunArgs) -> CmdResult {
        let mut cfg = self.cfg.clone();
        if let Some(t) = a.threads {
            cfg.threads = t.max(1);
        }
        if let Some(m) = a.mode {
            cfg.dedup_mode = mode_of(m);
        }
        if let Some(n) = a.min_count {
            cfg.min_count = n;
        }
        if let Some(t) = &a.topics {
            cfg.topics = Some(topic_source(t));
        }
        let res = RunResources::from_config(&cfg)?;
        let summary = run_pipeline(open(&a.input)?, &a.out_dir, &cfg, &res)?;
        emit(None, &json_line(&summary)?)
    }
}
