//! Character-level similarity measures for near-duplicate detection.
//!
//! All kernels work on Unicode scalar values, not bytes. [`normalized_similarity`] maps
//! every measure onto [0, 1] so one grouping threshold can be used for any of them.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const WINKLER_PREFIX: usize = 4;
const WINKLER_SCALE: f64 = 0.1;

/// Corpora at or above this size are benchmarked on sampled pairs under [`PairSampling::Auto`].
pub const FULL_PAIRS_LIMIT: usize = 2_500;
pub const SAMPLED_PAIRS: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Algorithm {
    Levenshtein,
    NeedlemanWunsch,
    JaroWinkler,
    SmithWaterman,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [
        Algorithm::Levenshtein,
        Algorithm::NeedlemanWunsch,
        Algorithm::JaroWinkler,
        Algorithm::SmithWaterman,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Levenshtein => "levenshtein",
            Algorithm::NeedlemanWunsch => "needleman-wunsch",
            Algorithm::JaroWinkler => "jaro-winkler",
            Algorithm::SmithWaterman => "smith-waterman",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase().replace('_', "-");
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == key || a.name().replace('-', "") == key)
            .ok_or_else(|| Error::InvalidInput(format!("unknown similarity algorithm {s:?}")))
    }
}

/// Scoring for the two alignment measures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlignmentParams {
    pub match_score: f64,
    pub mismatch_penalty: f64,
    pub gap_penalty: f64,
}

impl Default for AlignmentParams {
    fn default() -> Self {
        AlignmentParams {
            match_score: 1.0,
            mismatch_penalty: -1.0,
            gap_penalty: -1.0,
        }
    }
}

impl AlignmentParams {
    pub fn new(match_score: f64, mismatch_penalty: f64, gap_penalty: f64) -> Result<Self> {
        let p = AlignmentParams {
            match_score,
            mismatch_penalty,
            gap_penalty,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.match_score > 0.0) || !(self.mismatch_penalty <= 0.0) || !(self.gap_penalty <= 0.0)
        {
            return Err(Error::InvalidInput(format!(
                "alignment params need match > 0, mismatch <= 0, gap <= 0; got {self:?}"
            )));
        }
        Ok(())
    }

    #[inline]
    fn substitution(&self, x: char, y: char) -> f64 {
        if x == y {
            self.match_score
        } else {
            self.mismatch_penalty
        }
    }
}

fn chars(s: &str) -> Vec<char> {
    s.chars().collect()
}

pub fn levenshtein(a: &str, b: &str) -> usize {
    levenshtein_chars(&chars(a), &chars(b))
}

pub fn levenshtein_chars(a: &[char], b: &[char]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    let mut row: Vec<usize> = (0..=b.len()).collect();
    for (i, &ca) in a.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, &cb) in b.iter().enumerate() {
            let sub = diag + (ca != cb) as usize;
            diag = row[j + 1];
            row[j + 1] = sub.min(diag + 1).min(row[j] + 1);
        }
    }
    row[b.len()]
}

/// Optimal global alignment score.
pub fn needleman_wunsch(a: &str, b: &str, p: &AlignmentParams) -> f64 {
    needleman_wunsch_chars(&chars(a), &chars(b), p)
}

pub fn needleman_wunsch_chars(a: &[char], b: &[char], p: &AlignmentParams) -> f64 {
    let gap = p.gap_penalty;
    let mut row: Vec<f64> = (0..=b.len()).map(|j| j as f64 * gap).collect();
    for (i, &ca) in a.iter().enumerate() {
        let mut diag = row[0];
        let mut left = (i + 1) as f64 * gap;
        row[0] = left;
        for (j, &cb) in b.iter().enumerate() {
            let up = row[j + 1];
            let best = fmax(fmax(diag + p.substitution(ca, cb), up + gap), left + gap);
            diag = up;
            row[j + 1] = best;
            left = best;
        }
    }
    row[b.len()]
}

/// Plain comparison max; alignment scores are never NaN because parameters are validated finite.
#[inline(always)]
fn fmax(x: f64, y: f64) -> f64 {
    if x > y {
        x
    } else {
        y
    }
}

/// Optimal local alignment score, never negative.
pub fn smith_waterman(a: &str, b: &str, p: &AlignmentParams) -> f64 {
    smith_waterman_chars(&chars(a), &chars(b), p)
}

pub fn smith_waterman_chars(a: &[char], b: &[char], p: &AlignmentParams) -> f64 {
    let gap = p.gap_penalty;
    let mut row = vec![0.0f64; b.len() + 1];
    let mut best = 0.0f64;
    for &ca in a {
        let mut diag = 0.0;
        let mut left = 0.0;
        for (j, &cb) in b.iter().enumerate() {
            let up = row[j + 1];
            // Only `left` depends on the previous cell, so it is folded in last.
            let h = fmax(fmax(fmax(diag + p.substitution(ca, cb), up + gap), 0.0), left + gap);
            diag = up;
            row[j + 1] = h;
            left = h;
            best = fmax(best, h);
        }
    }
    best
}

pub fn jaro_winkler(a: &str, b: &str) -> f64 {
    jaro_winkler_chars(&chars(a), &chars(b))
}

/// Jaro similarity plus a boost of 0.1 per common-prefix character, up to four characters.
pub fn jaro_winkler_chars(a: &[char], b: &[char]) -> f64 {
    let jaro = jaro_chars(a, b);
    let prefix = a
        .iter()
        .zip(b)
        .take(WINKLER_PREFIX)
        .take_while(|(x, y)| x == y)
        .count();
    jaro + prefix as f64 * WINKLER_SCALE * (1.0 - jaro)
}

pub fn jaro_chars(a: &[char], b: &[char]) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let window = (a.len().max(b.len()) / 2).saturating_sub(1);
    let (matches, half_transpositions) = if a.len() <= 128 && b.len() <= 128 {
        jaro_counts_bitset(a, b, window)
    } else {
        jaro_counts_scan(a, b, window)
    };
    if matches == 0 {
        return 0.0;
    }
    let m = matches as f64;
    let t = (half_transpositions / 2) as f64;
    (m / a.len() as f64 + m / b.len() as f64 + (m - t) / m) / 3.0
}

fn low_bits(k: usize) -> u128 {
    if k >= 128 {
        u128::MAX
    } else {
        (1u128 << k) - 1
    }
}

/// Matching via per-character position masks of `b`. Each character of `a` takes the lowest
/// free position in its window, the same choice the scanning version makes.
fn jaro_counts_bitset(a: &[char], b: &[char], window: usize) -> (usize, usize) {
    let mut ascii = [0u128; 128];
    let mut other: Vec<(char, u128)> = Vec::new();
    for (j, &c) in b.iter().enumerate() {
        if (c as u32) < 128 {
            ascii[c as usize] |= 1 << j;
        } else if let Some(entry) = other.iter_mut().find(|e| e.0 == c) {
            entry.1 |= 1 << j;
        } else {
            other.push((c, 1 << j));
        }
    }
    let positions = |c: char| -> u128 {
        if (c as u32) < 128 {
            ascii[c as usize]
        } else {
            other.iter().find(|e| e.0 == c).map_or(0, |e| e.1)
        }
    };
    let mut b_used = 0u128;
    let mut a_used = 0u128;
    for (i, &ca) in a.iter().enumerate() {
        let lo = i.saturating_sub(window);
        let hi = (i + window + 1).min(b.len());
        if lo >= hi {
            continue;
        }
        let free = positions(ca) & !b_used & low_bits(hi) & !low_bits(lo);
        if free != 0 {
            b_used |= free & free.wrapping_neg();
            a_used |= 1 << i;
        }
    }
    let matches = a_used.count_ones() as usize;
    let mut half_transpositions = 0;
    let (mut ai, mut bj) = (a_used, b_used);
    while ai != 0 {
        let i = ai.trailing_zeros() as usize;
        let j = bj.trailing_zeros() as usize;
        if a[i] != b[j] {
            half_transpositions += 1;
        }
        ai &= ai - 1;
        bj &= bj - 1;
    }
    (matches, half_transpositions)
}

fn jaro_counts_scan(a: &[char], b: &[char], window: usize) -> (usize, usize) {
    let mut a_matched = vec![false; a.len()];
    let mut b_matched = vec![false; b.len()];
    let mut matches = 0usize;
    for (i, &ca) in a.iter().enumerate() {
        let lo = i.saturating_sub(window);
        let hi = (i + window + 1).min(b.len());
        for j in lo..hi {
            if !b_matched[j] && b[j] == ca {
                a_matched[i] = true;
                b_matched[j] = true;
                matches += 1;
                break;
            }
        }
    }
    let mut half_transpositions = 0usize;
    let mut k = 0usize;
    for (i, &ca) in a.iter().enumerate() {
        if !a_matched[i] {
            continue;
        }
        while !b_matched[k] {
            k += 1;
        }
        if ca != b[k] {
            half_transpositions += 1;
        }
        k += 1;
    }
    (matches, half_transpositions)
}

/// Similarity on [0, 1] for any measure.
///
/// Levenshtein: `1 - d / max(|a|, |b|)`. Alignments: `score / (match * min(|a|, |b|))`,
/// clamped. Jaro-Winkler is already on [0, 1]. Two empty strings are fully similar.
pub fn normalized_similarity(algorithm: Algorithm, a: &str, b: &str, p: &AlignmentParams) -> f64 {
    normalized_similarity_chars(algorithm, &chars(a), &chars(b), p)
}

pub fn normalized_similarity_chars(
    algorithm: Algorithm,
    a: &[char],
    b: &[char],
    p: &AlignmentParams,
) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    match algorithm {
        Algorithm::Levenshtein => {
            let longest = a.len().max(b.len());
            1.0 - levenshtein_chars(a, b) as f64 / longest as f64
        }
        Algorithm::JaroWinkler => jaro_winkler_chars(a, b),
        Algorithm::NeedlemanWunsch | Algorithm::SmithWaterman => {
            let shortest = a.len().min(b.len());
            if shortest == 0 {
                return 0.0;
            }
            let score = if algorithm == Algorithm::SmithWaterman {
                smith_waterman_chars(a, b, p)
            } else {
                needleman_wunsch_chars(a, b, p)
            };
            (score / (p.match_score * shortest as f64)).clamp(0.0, 1.0)
        }
    }
}

/// Greedy first-fit grouping. Each text joins the first group whose representative (first
/// member) is at least `threshold` similar, otherwise it opens a new group. Groups and their
/// members are in input order.
pub fn group_similar<S: AsRef<str>>(
    texts: &[S],
    algorithm: Algorithm,
    threshold: f64,
    p: &AlignmentParams,
) -> Vec<Vec<usize>> {
    let encoded: Vec<Vec<char>> = texts.iter().map(|t| chars(t.as_ref())).collect();
    group_by(encoded.len(), threshold, |i, j| {
        normalized_similarity_chars(algorithm, &encoded[i], &encoded[j], p)
    })
}

fn group_by(n: usize, threshold: f64, mut sim: impl FnMut(usize, usize) -> f64) -> Vec<Vec<usize>> {
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for i in 0..n {
        match groups.iter_mut().find(|g| sim(g[0], i) >= threshold) {
            Some(g) => g.push(i),
            None => groups.push(vec![i]),
        }
    }
    groups
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimilarityReport {
    pub algorithm: Algorithm,
    pub pairs_evaluated: usize,
    pub wall_time: Duration,
    pub groups_found: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairSampling {
    /// All pairs below [`FULL_PAIRS_LIMIT`] texts, otherwise [`SAMPLED_PAIRS`] sampled pairs.
    Auto,
    All,
    Sample(usize),
}

#[derive(Debug, Clone)]
pub struct BenchOptions {
    pub threshold: f64,
    pub sampling: PairSampling,
    pub seed: u64,
    /// Worker threads for pair evaluation; `None` uses the global pool.
    pub threads: Option<usize>,
    pub algorithms: Vec<Algorithm>,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions {
            threshold: 0.9,
            sampling: PairSampling::Auto,
            seed: 0,
            threads: None,
            algorithms: Algorithm::ALL.to_vec(),
        }
    }
}

enum Pairs {
    All,
    Sampled(Vec<(u32, u32)>),
}

fn sample_pairs(n: usize, count: usize, seed: u64) -> Vec<(u32, u32)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let i = rng.random_range(0..n);
            let mut j = rng.random_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            (i.min(j) as u32, i.max(j) as u32)
        })
        .collect()
}

/// Times each measure over the same pair set and counts groups at `opts.threshold`.
///
/// Only pair evaluation is timed. Under full-pair evaluation the grouping reuses the
/// computed similarities; under sampling it runs [`group_similar`] separately.
pub fn bench<S: AsRef<str> + Sync>(
    texts: &[S],
    p: &AlignmentParams,
    opts: &BenchOptions,
) -> Result<Vec<SimilarityReport>> {
    if texts.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "similarity benchmark needs at least 2 texts, got {}",
            texts.len()
        )));
    }
    p.validate()?;
    let n = texts.len();
    let encoded: Vec<Vec<char>> = texts.iter().map(|t| chars(t.as_ref())).collect();
    let pairs = match opts.sampling {
        PairSampling::All => Pairs::All,
        PairSampling::Auto if n < FULL_PAIRS_LIMIT => Pairs::All,
        PairSampling::Auto => Pairs::Sampled(sample_pairs(n, SAMPLED_PAIRS, opts.seed)),
        PairSampling::Sample(k) => Pairs::Sampled(sample_pairs(n, k, opts.seed)),
    };
    let pool = match opts.threads {
        Some(t) => Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(t.max(1))
                .build()
                .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?,
        ),
        None => None,
    };
    let run = |f: &(dyn Fn() -> SimilarityReport + Sync)| match &pool {
        Some(pool) => pool.install(f),
        None => f(),
    };

    let mut reports = Vec::with_capacity(opts.algorithms.len());
    for &algorithm in &opts.algorithms {
        let sim = |i: usize, j: usize| normalized_similarity_chars(algorithm, &encoded[i], &encoded[j], p);
        let report = run(&|| match &pairs {
            Pairs::All => {
                let start = Instant::now();
                // Row i holds similarities to texts i+1..n.
                let rows: Vec<Vec<f64>> = (0..n)
                    .into_par_iter()
                    .map(|i| (i + 1..n).map(|j| sim(i, j)).collect())
                    .collect();
                let wall_time = start.elapsed();
                let groups = group_by(n, opts.threshold, |rep, i| rows[rep][i - rep - 1]);
                SimilarityReport {
                    algorithm,
                    pairs_evaluated: n * (n - 1) / 2,
                    wall_time,
                    groups_found: groups.len(),
                }
            }
            Pairs::Sampled(sampled) => {
                let start = Instant::now();
                let checksum: f64 = sampled
                    .par_iter()
                    .map(|&(i, j)| sim(i as usize, j as usize))
                    .sum();
                let wall_time = start.elapsed();
                std::hint::black_box(checksum);
                let groups = group_by(n, opts.threshold, sim);
                SimilarityReport {
                    algorithm,
                    pairs_evaluated: sampled.len(),
                    wall_time,
                    groups_found: groups.len(),
                }
            }
        });
        reports.push(report);
    }
    Ok(reports)
}

/// `algorithm,pairs,wall_ms,groups` with a header row.
pub fn write_bench_csv<W: std::io::Write>(reports: &[SimilarityReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["algorithm", "pairs", "wall_ms", "groups"])?;
    for r in reports {
        w.write_record([
            r.algorithm.name().to_string(),
            r.pairs_evaluated.to_string(),
            format!("{:.3}", r.wall_time.as_secs_f64() * 1e3),
            r.groups_found.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<bench csv>", e))?;
    Ok(())
}
