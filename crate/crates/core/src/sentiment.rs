//! Sentiment labels, lexicon lookups, the neutral-override trigger lists, topic keyword
//! filtering and a translator hook.
//!
//! External sentiment and translation services are modelled as traits. The built-in
//! [`LexiconProvider`] classifies text from a five-grade word list so the engine runs
//! without network access.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::words;

const DEFAULT_LEXICON: &str = include_str!("../data/sentiment_en.tsv");
const DEFAULT_TOPICS: &str = include_str!("../data/topics_en.tsv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SentimentLabel {
    VeryNegative,
    Negative,
    Neutral,
    Positive,
    VeryPositive,
}

impl SentimentLabel {
    pub fn grade(self) -> &'static str {
        match self {
            SentimentLabel::VeryNegative => "vneg",
            SentimentLabel::Negative => "neg",
            SentimentLabel::Neutral => "neu",
            SentimentLabel::Positive => "pos",
            SentimentLabel::VeryPositive => "vpos",
        }
    }

    /// Collapse to the three text-level grades.
    pub fn coarse(self) -> SentimentLabel {
        match self {
            SentimentLabel::VeryNegative | SentimentLabel::Negative => SentimentLabel::Negative,
            SentimentLabel::Neutral => SentimentLabel::Neutral,
            SentimentLabel::Positive | SentimentLabel::VeryPositive => SentimentLabel::Positive,
        }
    }

    fn polarity(self) -> i32 {
        match self {
            SentimentLabel::VeryNegative => -2,
            SentimentLabel::Negative => -1,
            SentimentLabel::Neutral => 0,
            SentimentLabel::Positive => 1,
            SentimentLabel::VeryPositive => 2,
        }
    }
}

impl FromStr for SentimentLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "vneg" | "VeryNegative" => SentimentLabel::VeryNegative,
            "neg" | "Negative" => SentimentLabel::Negative,
            "neu" | "Neutral" => SentimentLabel::Neutral,
            "pos" | "Positive" => SentimentLabel::Positive,
            "vpos" | "VeryPositive" => SentimentLabel::VeryPositive,
            other => return Err(Error::InvalidInput(format!("unknown sentiment grade {other:?}"))),
        })
    }
}

impl fmt::Display for SentimentLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.grade())
    }
}

/// Five-grade word lexicon, keyed by lowercased word.
#[derive(Debug, Clone, Default)]
pub struct WordLexicon {
    entries: HashMap<String, SentimentLabel>,
}

impl WordLexicon {
    /// `word<TAB>grade` lines; grades are `vneg`, `neg`, `neu`, `pos`, `vpos`.
    pub fn parse(content: &str) -> Result<Self> {
        let mut entries = HashMap::new();
        for (i, line) in content.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (word, grade) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse("lexicon", i + 1, "expected word<TAB>grade"))?;
            let grade = grade
                .trim()
                .parse()
                .map_err(|e: Error| Error::parse("lexicon", i + 1, e.to_string()))?;
            entries.insert(word.trim().to_lowercase(), grade);
        }
        Ok(WordLexicon { entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&content)
    }

    pub fn english() -> Self {
        Self::parse(DEFAULT_LEXICON).expect("bundled lexicon is well formed")
    }

    pub fn insert(&mut self, word: &str, label: SentimentLabel) {
        self.entries.insert(word.to_lowercase(), label);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<SentimentLabel> {
        self.entries
            .get(token)
            .or_else(|| self.entries.get(&token.to_lowercase()))
            .copied()
    }
}

/// Lexicon label for `token`, Neutral when absent. Case-insensitive.
pub fn word_sentiment(token: &str, lexicon: &WordLexicon) -> SentimentLabel {
    lexicon.get(token).unwrap_or(SentimentLabel::Neutral)
}

/// A text-level sentiment service returning Negative, Neutral or Positive.
pub trait SentimentProvider {
    fn classify(&self, text: &str) -> Result<SentimentLabel>;

    /// Providers that cannot be called concurrently return false; see [`Serialized`].
    fn is_reentrant(&self) -> bool {
        true
    }
}

/// Sums word polarities (vneg = -2 ... vpos = +2) and reports the sign.
#[derive(Debug, Clone, Default)]
pub struct LexiconProvider {
    pub lexicon: WordLexicon,
}

impl LexiconProvider {
    pub fn new(lexicon: WordLexicon) -> Self {
        LexiconProvider { lexicon }
    }
}

impl SentimentProvider for LexiconProvider {
    fn classify(&self, text: &str) -> Result<SentimentLabel> {
        let total: i32 = words(text)
            .map(|w| word_sentiment(&w, &self.lexicon).polarity())
            .sum();
        Ok(match total.signum() {
            -1 => SentimentLabel::Negative,
            1 => SentimentLabel::Positive,
            _ => SentimentLabel::Neutral,
        })
    }
}

/// Wraps a provider so that at most one call runs at a time.
pub struct Serialized<P> {
    inner: Mutex<P>,
}

impl<P> Serialized<P> {
    pub fn new(inner: P) -> Self {
        Serialized {
            inner: Mutex::new(inner),
        }
    }
}

impl<P: SentimentProvider> SentimentProvider for Serialized<P> {
    fn classify(&self, text: &str) -> Result<SentimentLabel> {
        let guard = self
            .inner
            .lock()
            .map_err(|_| Error::Provider("provider lock poisoned".into()))?;
        guard.classify(text)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TriggerLexicon {
    negative: HashSet<String>,
    positive: HashSet<String>,
}

impl Default for TriggerLexicon {
    fn default() -> Self {
        TriggerLexicon::new(
            [
                "silly", "death", "fuck", "kill", "bad", "lose", "fucking", "block", "incident",
                "protest",
            ],
            ["great", "champion", "good", "inspiring", "thank"],
        )
        .expect("default trigger lists are disjoint")
    }
}

impl TriggerLexicon {
    pub fn new<N, P, S1, S2>(negative: N, positive: P) -> Result<Self>
    where
        N: IntoIterator<Item = S1>,
        P: IntoIterator<Item = S2>,
        S1: AsRef<str>,
        S2: AsRef<str>,
    {
        let negative: HashSet<String> = negative
            .into_iter()
            .map(|w| w.as_ref().to_lowercase())
            .collect();
        let positive: HashSet<String> = positive
            .into_iter()
            .map(|w| w.as_ref().to_lowercase())
            .collect();
        if let Some(w) = negative.intersection(&positive).next() {
            return Err(Error::InvalidInput(format!(
                "trigger {w:?} is both negative and positive"
            )));
        }
        Ok(TriggerLexicon { negative, positive })
    }

    pub fn negative(&self) -> &HashSet<String> {
        &self.negative
    }

    pub fn positive(&self) -> &HashSet<String> {
        &self.positive
    }
}

/// Provider label, with Neutral results re-read through the trigger lists. Negative
/// triggers win over positive ones.
pub fn classify_text(
    text: &str,
    provider: &dyn SentimentProvider,
    lexicon: &TriggerLexicon,
) -> Result<SentimentLabel> {
    let label = provider.classify(text)?.coarse();
    if label != SentimentLabel::Neutral {
        return Ok(label);
    }
    let mut positive = false;
    for w in words(text) {
        if lexicon.negative.contains(&w) {
            return Ok(SentimentLabel::Negative);
        }
        positive |= lexicon.positive.contains(&w);
    }
    Ok(if positive {
        SentimentLabel::Positive
    } else {
        SentimentLabel::Neutral
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TopicSection {
    #[serde(rename = "NATO")]
    Nato,
    #[serde(rename = "EU")]
    Eu,
    FightAndAttack,
    Civilian,
    Peace,
    RefugeeCrisis,
}

impl TopicSection {
    pub const ALL: [TopicSection; 6] = [
        TopicSection::Nato,
        TopicSection::Eu,
        TopicSection::FightAndAttack,
        TopicSection::Civilian,
        TopicSection::Peace,
        TopicSection::RefugeeCrisis,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TopicSection::Nato => "NATO",
            TopicSection::Eu => "EU",
            TopicSection::FightAndAttack => "FightAndAttack",
            TopicSection::Civilian => "Civilian",
            TopicSection::Peace => "Peace",
            TopicSection::RefugeeCrisis => "RefugeeCrisis",
        }
    }
}

impl FromStr for TopicSection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TopicSection::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown topic section {s:?}")))
    }
}

impl fmt::Display for TopicSection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Keyword sets per language and section.
#[derive(Debug, Clone, Default)]
pub struct TopicKeywordList {
    languages: HashMap<String, HashMap<TopicSection, HashSet<String>>>,
}

impl TopicKeywordList {
    /// `section<TAB>language<TAB>word` lines. Every language must cover all six sections.
    pub fn parse(content: &str) -> Result<Self> {
        let mut languages: HashMap<String, HashMap<TopicSection, HashSet<String>>> =
            HashMap::new();
        for (i, line) in content.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split('\t');
            let (Some(section), Some(lang), Some(word), None) =
                (parts.next(), parts.next(), parts.next(), parts.next())
            else {
                return Err(Error::parse("topics", i + 1, "expected section<TAB>language<TAB>word"));
            };
            let section: TopicSection = section
                .trim()
                .parse()
                .map_err(|e: Error| Error::parse("topics", i + 1, e.to_string()))?;
            languages
                .entry(lang.trim().to_lowercase())
                .or_default()
                .entry(section)
                .or_default()
                .insert(word.trim().to_lowercase());
        }
        for (lang, sections) in &languages {
            if let Some(missing) = TopicSection::ALL.iter().find(|s| !sections.contains_key(s)) {
                return Err(Error::InvalidInput(format!(
                    "topic list for {lang:?} lacks section {missing}"
                )));
            }
        }
        Ok(TopicKeywordList { languages })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&content)
    }

    /// Small bundled English sample covering all six sections.
    pub fn english_sample() -> Self {
        Self::parse(DEFAULT_TOPICS).expect("bundled topic list is well formed")
    }

    pub fn languages(&self) -> impl Iterator<Item = &str> {
        self.languages.keys().map(String::as_str)
    }

    pub fn has_language(&self, language: &str) -> bool {
        self.languages.contains_key(&language.to_lowercase())
    }
}

/// Sections whose keywords occur as whole tokens in `text` (case-insensitive).
pub fn topic_filter(
    text: &str,
    topics: &TopicKeywordList,
    language: &str,
) -> Result<BTreeSet<TopicSection>> {
    let sections = topics
        .languages
        .get(&language.to_lowercase())
        .ok_or_else(|| Error::UnknownId {
            kind: "language",
            id: language.to_string(),
        })?;
    let tokens: HashSet<String> = words(text).collect();
    Ok(sections
        .iter()
        .filter(|(_, kw)| !kw.is_disjoint(&tokens))
        .map(|(s, _)| *s)
        .collect())
}

pub trait Translator {
    fn translate(&self, text: &str, from: &str, to: &str) -> Result<String>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityTranslator;

impl Translator for IdentityTranslator {
    fn translate(&self, text: &str, _from: &str, _to: &str) -> Result<String> {
        Ok(text.to_string())
    }
}

/// Whole-text lookup table; unknown texts are an error.
#[derive(Debug, Clone, Default)]
pub struct TableTranslator {
    pub table: HashMap<String, String>,
}

impl Translator for TableTranslator {
    fn translate(&self, text: &str, from: &str, to: &str) -> Result<String> {
        self.table
            .get(text)
            .cloned()
            .ok_or_else(|| Error::Translator(format!("no {from}->{to} entry for {text:?}")))
    }
}

pub fn translate(
    text: &str,
    from_language: &str,
    to_language: &str,
    translator: &dyn Translator,
) -> Result<String> {
    if from_language.eq_ignore_ascii_case(to_language) {
        return Ok(text.to_string());
    }
    translator.translate(text, from_language, to_language)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::cell::Cell;

    struct Fixed(SentimentLabel);

    impl SentimentProvider for Fixed {
        fn classify(&self, _: &str) -> Result<SentimentLabel> {
            Ok(self.0)
        }
    }

    struct Failing;

    impl SentimentProvider for Failing {
        fn classify(&self, _: &str) -> Result<SentimentLabel> {
            Err(Error::Provider("service unavailable".into()))
        }
    }

    #[test]
    fn neutral_override() {
        let lex = TriggerLexicon::default();
        let neutral = Fixed(SentimentLabel::Neutral);
        assert_eq!(
            classify_text("they will kill us", &neutral, &lex).unwrap(),
            SentimentLabel::Negative
        );
        assert_eq!(
            classify_text("they will kill us", &Fixed(SentimentLabel::Positive), &lex).unwrap(),
            SentimentLabel::Positive
        );
        assert_eq!(
            classify_text("weather today", &neutral, &lex).unwrap(),
            SentimentLabel::Neutral
        );
        assert_eq!(
            classify_text("Great match, Champion!", &neutral, &lex).unwrap(),
            SentimentLabel::Positive
        );
        // Negative wins when both appear, regardless of order.
        assert_eq!(
            classify_text("great protest", &neutral, &lex).unwrap(),
            SentimentLabel::Negative
        );
    }

    #[test]
    fn provider_failure_is_not_neutral() {
        let err = classify_text("x", &Failing, &TriggerLexicon::default()).unwrap_err();
        assert!(matches!(err, Error::Provider(_)));
    }

    #[test]
    fn trigger_sets_must_be_disjoint() {
        assert!(TriggerLexicon::new(["bad"], ["Bad"]).is_err());
    }

    #[test]
    fn word_lookup() {
        let mut lex = WordLexicon::default();
        lex.insert("terrible", SentimentLabel::VeryNegative);
        lex.insert("kill", SentimentLabel::VeryNegative);
        assert_eq!(word_sentiment("absent", &lex), SentimentLabel::Neutral);
        assert_eq!(word_sentiment("terrible", &lex), SentimentLabel::VeryNegative);
        assert_eq!(word_sentiment("Kill", &lex), word_sentiment("kill", &lex));
    }

    #[test]
    fn lexicon_file() {
        let lex = WordLexicon::parse("# c\ngood\tpos\nAwful\tvneg\n").unwrap();
        assert_eq!(lex.len(), 2);
        assert_eq!(word_sentiment("awful", &lex), SentimentLabel::VeryNegative);
        assert!(WordLexicon::parse("good pos").is_err());
        assert!(WordLexicon::parse("good\tmeh").is_err());
        assert!(WordLexicon::english().len() > 50);
    }

    #[test]
    fn lexicon_provider() {
        let p = LexiconProvider::new(WordLexicon::english());
        assert_eq!(p.classify("a wonderful day").unwrap(), SentimentLabel::Positive);
        assert_eq!(p.classify("a terrible day").unwrap(), SentimentLabel::Negative);
        assert_eq!(p.classify("a day").unwrap(), SentimentLabel::Neutral);
        let s = Serialized::new(p);
        assert_eq!(s.classify("a terrible day").unwrap(), SentimentLabel::Negative);
    }

    #[test]
    fn topics() {
        let topics = TopicKeywordList::english_sample();
        let hit = topic_filter("Another ATTACK in London", &topics, "en").unwrap();
        assert_eq!(hit.into_iter().collect::<Vec<_>>(), vec![TopicSection::FightAndAttack]);
        assert!(topic_filter("sunny weather", &topics, "en").unwrap().is_empty());
        let two = topic_filter("refugees fleeing the attack", &topics, "en").unwrap();
        assert!(two.contains(&TopicSection::FightAndAttack));
        assert!(two.contains(&TopicSection::RefugeeCrisis));
        assert!(matches!(
            topic_filter("attack", &topics, "xx"),
            Err(Error::UnknownId { .. })
        ));
    }

    #[test]
    fn topic_file_requires_all_sections() {
        assert!(TopicKeywordList::parse("Peace\ten\tpeace\n").is_err());
        assert!(TopicKeywordList::parse("Nonsense\ten\tx\n").is_err());
        assert!(TopicKeywordList::parse("Peace\ten\n").is_err());
    }

    struct Counting<'a>(&'a Cell<usize>);

    impl Translator for Counting<'_> {
        fn translate(&self, text: &str, _: &str, _: &str) -> Result<String> {
            self.0.set(self.0.get() + 1);
            Ok(text.to_uppercase())
        }
    }

    #[test]
    fn translation() {
        assert_eq!(translate("hallo", "de", "en", &IdentityTranslator).unwrap(), "hallo");
        let calls = Cell::new(0);
        assert_eq!(translate("same", "en", "EN", &Counting(&calls)).unwrap(), "same");
        assert_eq!(calls.get(), 0);
        let mut table = TableTranslator::default();
        table.table.insert("hola".into(), "hello".into());
        assert_eq!(translate("hola", "es", "en", &table).unwrap(), "hello");
        assert!(matches!(
            translate("adios", "es", "en", &table),
            Err(Error::Translator(_))
        ));
    }

    fn label() -> impl Strategy<Value = SentimentLabel> {
        prop_oneof![
            Just(SentimentLabel::Negative),
            Just(SentimentLabel::Neutral),
            Just(SentimentLabel::Positive),
        ]
    }

    proptest! {
        #[test]
        fn override_only_widens_neutral(
            provided in label(),
            ws in proptest::collection::vec("(kill|great|good|bad|news|city|[a-z]{1,6})", 0..10),
        ) {
            let text = ws.join(" ");
            let lex = TriggerLexicon::default();
            let out = classify_text(&text, &Fixed(provided), &lex).unwrap();
            if provided != SentimentLabel::Neutral {
                prop_assert_eq!(out, provided);
            }
            prop_assert_eq!(out, classify_text(&text, &Fixed(provided), &lex).unwrap());
        }

        #[test]
        fn topic_filter_case_and_duplicates(
            ws in proptest::collection::vec("(attack|peace|nato|refugee|civilian|union|[a-z]{1,6})", 0..10),
        ) {
            let topics = TopicKeywordList::english_sample();
            let text = ws.join(" ");
            let base = topic_filter(&text, &topics, "en").unwrap();
            prop_assert_eq!(&base, &topic_filter(&text.to_uppercase(), &topics, "en").unwrap());
            let doubled = format!("{text} {text}");
            prop_assert_eq!(&base, &topic_filter(&doubled, &topics, "en").unwrap());
        }
    }
}
