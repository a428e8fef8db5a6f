//! Per-member measures and the canonical team-level feature vector.
//!
//! Features are computed per roster member first (over the whole transcript
//! or any time window), then reduced to team statistics. The canonical
//! computational vector has 42 entries in a fixed registry order; the 20
//! human-label columns `hl_01..hl_20` can be appended.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::lexicon::WORD_CHOICE_CATEGORIES;
use crate::lexicon::{count_category, tokenize, CategoryLexicon, LexiconSet, TokenStream};
use crate::transcript::Transcript;
use crate::Result;

/// The five per-member measures reduced to team statistics.
const STAT_BASES: [&str; 5] = [
    "msg_count",
    "word_count",
    "polarity",
    "subjectivity",
    "readability",
];

/// Canonical names of the 42 computational features, in output order.
pub const REGISTRY: [&str; 42] = [
    "msg_count_mean",
    "msg_count_min",
    "msg_count_max",
    "msg_count_std",
    "word_count_mean",
    "word_count_min",
    "word_count_max",
    "word_count_std",
    "polarity_mean",
    "polarity_min",
    "polarity_max",
    "polarity_std",
    "subjectivity_mean",
    "subjectivity_min",
    "subjectivity_max",
    "subjectivity_std",
    "readability_mean",
    "readability_min",
    "readability_max",
    "readability_std",
    "tfidf_cosine_mean",
    "liwc_anger",
    "liwc_anxiety",
    "liwc_sadness",
    "liwc_articles",
    "liwc_conjunctions",
    "liwc_prepositions",
    "liwc_inclusive",
    "liwc_exclusive",
    "liwc_quantifiers",
    "liwc_certainty",
    "liwc_discrepancies",
    "liwc_negation",
    "liwc_tentativeness",
    "liwc_first_singular",
    "liwc_first_plural",
    "liwc_second_person",
    "liwc_indefinite_pronouns",
    "liwc_adverbs",
    "liwc_social",
    "argue_count",
    "pseudonym_refs",
];

/// Names of the 20 optional human-label columns.
pub const HUMAN_LABEL_NAMES: [&str; 20] = [
    "hl_01", "hl_02", "hl_03", "hl_04", "hl_05", "hl_06", "hl_07", "hl_08", "hl_09", "hl_10",
    "hl_11", "hl_12", "hl_13", "hl_14", "hl_15", "hl_16", "hl_17", "hl_18", "hl_19", "hl_20",
];

/// Which feature columns an analysis uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSubset {
    Computational,
    Human,
    All,
}

impl std::fmt::Display for FeatureSubset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FeatureSubset::Computational => "computational",
            FeatureSubset::Human => "human",
            FeatureSubset::All => "all",
        })
    }
}

/// A time window over a transcript, `[start, end)` in seconds.
///
/// The final instant of the interaction belongs to the last window: when the
/// window end reaches the transcript duration the end becomes inclusive, so
/// a `[0, duration]` window is exactly the full transcript.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub start: f64,
    /// `None` means "until the end of the interaction".
    pub end: Option<f64>,
}

impl Window {
    pub fn full() -> Window {
        Window {
            start: 0.0,
            end: None,
        }
    }

    pub fn range(start: f64, end: f64) -> Window {
        Window {
            start,
            end: Some(end),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.start < 0.0 || !self.start.is_finite() {
            return Err(Error::validation(format!(
                "window start must be >= 0, got {}",
                self.start
            )));
        }
        if let Some(end) = self.end {
            if !(end.is_finite() && end > self.start) {
                return Err(Error::validation(format!(
                    "window end {end} must exceed start {}",
                    self.start
                )));
            }
        }
        Ok(())
    }

    pub fn contains(&self, timestamp: f64, duration: f64) -> bool {
        if timestamp < self.start {
            return false;
        }
        let end = self.end.unwrap_or(duration);
        timestamp < end || (end >= duration && timestamp <= end)
    }

    pub fn describe(&self) -> String {
        match self.end {
            Some(end) => format!("[{}, {})", self.start, end),
            None => format!("[{}, end]", self.start),
        }
    }
}

/// All of one member's messages in a window, tokenized per message.
/// Bigrams and the sentiment negation lookback never cross messages.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MemberDocument {
    pub messages: Vec<TokenStream>,
}

impl MemberDocument {
    pub fn total_tokens(&self) -> usize {
        self.messages.iter().map(TokenStream::len).sum()
    }

    pub fn total_sentences(&self) -> usize {
        self.messages.iter().map(TokenStream::sentences).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.total_tokens() == 0
    }
}

/// Per-member measures over one window.
#[derive(Debug, Clone, PartialEq)]
pub struct MemberMeasures {
    pub member_id: String,
    pub message_count: usize,
    pub word_count: usize,
    pub polarity: f64,
    pub subjectivity: f64,
    pub readability: f64,
    pub document: MemberDocument,
}

/// Mean polarity/subjectivity of sentiment-lexicon matches in one token
/// stream. A match immediately preceded by a negation-category token has its
/// polarity sign flipped. `(0, 0)` when nothing matches.
pub fn sentiment(
    tokens: &TokenStream,
    sentiment_lex: &CategoryLexicon,
    negation: &CategoryLexicon,
) -> (f64, f64) {
    let mut matches = Vec::new();
    sentiment_matches(tokens, sentiment_lex, negation, &mut matches);
    mean_sentiment(&matches)
}

fn sentiment_matches(
    tokens: &TokenStream,
    sentiment_lex: &CategoryLexicon,
    negation: &CategoryLexicon,
    out: &mut Vec<(f64, f64)>,
) {
    for (i, token) in tokens.tokens.iter().enumerate() {
        let Some(entry) = sentiment_lex.lookup(token) else {
            continue;
        };
        let mut polarity = entry.polarity.unwrap_or(0.0);
        let subjectivity = entry.subjectivity.unwrap_or(0.0);
        if i > 0 && negation.matches(&tokens.tokens[i - 1]) {
            polarity = -polarity;
        }
        out.push((polarity, subjectivity));
    }
}

fn mean_sentiment(matches: &[(f64, f64)]) -> (f64, f64) {
    if matches.is_empty() {
        return (0.0, 0.0);
    }
    let n = matches.len() as f64;
    let pol: f64 = matches.iter().map(|(p, _)| p).sum();
    let subj: f64 = matches.iter().map(|(_, s)| s).sum();
    (pol / n, subj / n)
}

fn document_sentiment(
    doc: &MemberDocument,
    sentiment_lex: &CategoryLexicon,
    negation: &CategoryLexicon,
) -> (f64, f64) {
    let mut matches = Vec::new();
    for stream in &doc.messages {
        sentiment_matches(stream, sentiment_lex, negation, &mut matches);
    }
    mean_sentiment(&matches)
}

const DALE_CHALL_DIFFICULT_WEIGHT: f64 = 0.1579;
const DALE_CHALL_SENTENCE_WEIGHT: f64 = 0.0496;
const DALE_CHALL_ADJUSTMENT: f64 = 3.6365;
const DALE_CHALL_THRESHOLD: f64 = 0.05;

fn is_pure_number(token: &str) -> bool {
    token.chars().all(char::is_numeric)
}

/// Readability score of one token stream. A token is difficult when it is
/// neither on the easy-word list nor a pure number. Empty input scores 0.
pub fn dale_chall(tokens: &TokenStream, easy_words: &CategoryLexicon) -> f64 {
    dale_chall_counts(
        tokens.len(),
        tokens.sentences(),
        tokens
            .tokens
            .iter()
            .filter(|t| !easy_words.matches(t) && !is_pure_number(t))
            .count(),
    )
}

/// Readability over a member's whole document (tokens and sentences summed
/// across messages).
pub fn dale_chall_document(doc: &MemberDocument, easy_words: &CategoryLexicon) -> f64 {
    let difficult = doc
        .messages
        .iter()
        .flat_map(|s| s.tokens.iter())
        .filter(|t| !easy_words.matches(t) && !is_pure_number(t))
        .count();
    dale_chall_counts(doc.total_tokens(), doc.total_sentences(), difficult)
}

fn dale_chall_counts(words: usize, sentences: usize, difficult: usize) -> f64 {
    if words == 0 || sentences == 0 {
        return 0.0;
    }
    let words = words as f64;
    let fraction = difficult as f64 / words;
    let mut score = DALE_CHALL_DIFFICULT_WEIGHT * (100.0 * fraction)
        + DALE_CHALL_SENTENCE_WEIGHT * (words / sentences as f64);
    if fraction > DALE_CHALL_THRESHOLD {
        score += DALE_CHALL_ADJUSTMENT;
    }
    score
}

/// Compute per-member measures for every roster member over one window.
/// Members silent in the window get zero counts, neutral sentiment, and
/// readability 0. A window with no messages from anyone is an error.
pub fn member_measures(
    transcript: &Transcript,
    window: &Window,
    lexicons: &LexiconSet,
) -> Result<Vec<MemberMeasures>> {
    window.validate()?;
    let sentiment_lex = lexicons.category("sentiment")?;
    let negation = lexicons.category("negation")?;
    let easy_words = lexicons.category("easy_words")?;

    let mut docs: Vec<MemberDocument> = vec![MemberDocument::default(); transcript.roster.len()];
    let mut message_counts = vec![0usize; transcript.roster.len()];
    let member_index: HashMap<&str, usize> = transcript
        .roster
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();

    let mut any = false;
    for msg in &transcript.messages {
        if !window.contains(msg.timestamp, transcript.duration) {
            continue;
        }
        any = true;
        let idx = member_index[msg.sender.as_str()];
        message_counts[idx] += 1;
        docs[idx].messages.push(tokenize(&msg.text));
    }
    if !any {
        return Err(Error::degenerate(format!(
            "window {} of team {:?} contains no messages",
            window.describe(),
            transcript.team_id
        )));
    }

    Ok(transcript
        .roster
        .iter()
        .zip(docs)
        .zip(message_counts)
        .map(|((member_id, document), message_count)| {
            let (polarity, subjectivity) = document_sentiment(&document, sentiment_lex, negation);
            let readability = dale_chall_document(&document, easy_words);
            MemberMeasures {
                member_id: member_id.clone(),
                message_count,
                word_count: document.total_tokens(),
                polarity,
                subjectivity,
                readability,
                document,
            }
        })
        .collect())
}

/// Mean cosine similarity of the members' TF-IDF vectors over unigrams and
/// bigrams. Pairs where either vector is all-zero contribute 0.
pub fn tfidf_team_similarity(documents: &[MemberDocument]) -> Result<f64> {
    let n = documents.len();
    if n < 2 {
        return Err(Error::degenerate(
            "TF-IDF similarity needs at least 2 members",
        ));
    }
    let vectors: Vec<BTreeMap<String, f64>> = documents.iter().map(term_frequencies).collect();

    let mut doc_freq: BTreeMap<&str, usize> = BTreeMap::new();
    for vector in &vectors {
        for term in vector.keys() {
            *doc_freq.entry(term).or_insert(0) += 1;
        }
    }
    let n_f = n as f64;
    let idf = |term: &str| ((1.0 + n_f) / (1.0 + doc_freq[term] as f64)).ln() + 1.0;

    let weighted: Vec<BTreeMap<String, f64>> = vectors
        .iter()
        .map(|vector| {
            let mut weighted: BTreeMap<String, f64> = vector
                .iter()
                .map(|(term, tf)| (term.clone(), tf * idf(term)))
                .collect();
            let norm: f64 = weighted.values().map(|w| w * w).sum::<f64>().sqrt();
            if norm > 0.0 {
                weighted.values_mut().for_each(|w| *w /= norm);
            }
            weighted
        })
        .collect();

    let mut similarities = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            similarities.push(dot(&weighted[i], &weighted[j]));
        }
    }
    // summed in sorted order so member permutation cannot change a bit
    let pairs = similarities.len() as f64;
    similarities.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(similarities.iter().sum::<f64>() / pairs)
}

fn term_frequencies(doc: &MemberDocument) -> BTreeMap<String, f64> {
    let mut tf: BTreeMap<String, f64> = BTreeMap::new();
    for stream in &doc.messages {
        for token in &stream.tokens {
            *tf.entry(token.clone()).or_insert(0.0) += 1.0;
        }
        for pair in stream.tokens.windows(2) {
            *tf.entry(format!("{} {}", pair[0], pair[1])).or_insert(0.0) += 1.0;
        }
    }
    tf
}

fn dot(a: &BTreeMap<String, f64>, b: &BTreeMap<String, f64>) -> f64 {
    // iterate the smaller map; BTreeMap order keeps summation deterministic
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    small
        .iter()
        .filter_map(|(term, w)| large.get(term).map(|v| w * v))
        .sum()
}

/// Total mentions of *other* roster members' identifiers in the window.
/// Matching is over tokenized text, case-insensitive; self-mentions do not
/// count.
pub fn pseudonym_refs(transcript: &Transcript, window: &Window) -> Result<usize> {
    window.validate()?;
    let member_index: HashMap<&str, usize> = transcript
        .roster
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    let patterns: Vec<(usize, Vec<String>)> = transcript
        .roster
        .iter()
        .enumerate()
        .map(|(i, id)| (i, tokenize(id).tokens))
        .filter(|(_, tokens)| !tokens.is_empty())
        .collect();

    let mut count = 0usize;
    for msg in &transcript.messages {
        if !window.contains(msg.timestamp, transcript.duration) {
            continue;
        }
        let sender = member_index[msg.sender.as_str()];
        let tokens = tokenize(&msg.text).tokens;
        for (member, pattern) in &patterns {
            if *member == sender {
                continue;
            }
            count += count_subsequence(&tokens, pattern);
        }
    }
    Ok(count)
}

fn count_subsequence(tokens: &[String], pattern: &[String]) -> usize {
    if pattern.is_empty() || tokens.len() < pattern.len() {
        return 0;
    }
    let mut count = 0;
    let mut i = 0;
    while i + pattern.len() <= tokens.len() {
        if tokens[i..i + pattern.len()]
            .iter()
            .zip(pattern)
            .all(|(a, b)| a == b)
        {
            count += 1;
            i += pattern.len();
        } else {
            i += 1;
        }
    }
    count
}

/// The canonical computational feature vector: the 42 registry values in
/// registry order, all finite.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    values: Vec<f64>,
}

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<FeatureVector> {
        if values.len() != REGISTRY.len() {
            return Err(Error::validation(format!(
                "feature vector has {} entries, registry expects {}",
                values.len(),
                REGISTRY.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::validation(format!(
                "feature {} is not finite",
                REGISTRY[i]
            )));
        }
        Ok(FeatureVector { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        REGISTRY
            .iter()
            .position(|n| *n == name)
            .map(|i| self.values[i])
    }
}

/// Mean/min/max/population-std. Values are sorted before summation so the
/// result is bit-identical under any permutation of the members.
fn stats(values: &[f64]) -> (f64, f64, f64, f64) {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len() as f64;
    let mean = sorted.iter().sum::<f64>() / n;
    let min = sorted[0];
    let max = sorted[sorted.len() - 1];
    let var = sorted.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, min, max, var.sqrt())
}

/// Assemble the 42-entry team feature vector for one window.
///
/// With `rates`, the 21 count features (word-choice categories, argue
/// markers, pseudonym references) are reported per 100 team words instead of
/// as raw counts.
pub fn team_features(
    transcript: &Transcript,
    window: &Window,
    lexicons: &LexiconSet,
    rates: bool,
) -> Result<FeatureVector> {
    let members = member_measures(transcript, window, lexicons)?;

    let mut values = Vec::with_capacity(REGISTRY.len());
    for base in STAT_BASES {
        let per_member: Vec<f64> = members
            .iter()
            .map(|m| match base {
                "msg_count" => m.message_count as f64,
                "word_count" => m.word_count as f64,
                "polarity" => m.polarity,
                "subjectivity" => m.subjectivity,
                "readability" => m.readability,
                _ => unreachable!(),
            })
            .collect();
        let (mean, min, max, std) = stats(&per_member);
        values.extend_from_slice(&[mean, min, max, std]);
    }

    let documents: Vec<MemberDocument> = members.iter().map(|m| m.document.clone()).collect();
    values.push(tfidf_team_similarity(&documents)?);

    let total_words: usize = members.iter().map(|m| m.word_count).sum();
    let scale = |count: usize| -> f64 {
        if rates {
            if total_words == 0 {
                0.0
            } else {
                count as f64 / total_words as f64 * 100.0
            }
        } else {
            count as f64
        }
    };

    for category in WORD_CHOICE_CATEGORIES {
        let lex = lexicons.category(category)?;
        let count: usize = documents
            .iter()
            .flat_map(|d| d.messages.iter())
            .map(|s| count_category(s, lex))
            .sum();
        values.push(scale(count));
    }

    let argue = lexicons.category("argue")?;
    let argue_count: usize = documents
        .iter()
        .flat_map(|d| d.messages.iter())
        .map(|s| count_category(s, argue))
        .sum();
    values.push(scale(argue_count));

    values.push(scale(pseudonym_refs(transcript, window)?));

    FeatureVector::new(values)
}

// ---------------------------------------------------------------------------
// Feature matrices (CSV)
// ---------------------------------------------------------------------------

/// A named feature matrix: one row per team. The CSV form has `team_id`
/// first, then the feature columns.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub feature_names: Vec<String>,
    pub team_ids: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl FeatureMatrix {
    pub fn from_team_vectors(entries: Vec<(String, FeatureVector)>) -> FeatureMatrix {
        FeatureMatrix {
            feature_names: REGISTRY.iter().map(|s| s.to_string()).collect(),
            team_ids: entries.iter().map(|(id, _)| id.clone()).collect(),
            rows: entries.into_iter().map(|(_, v)| v.values).collect(),
        }
    }

    pub fn n_teams(&self) -> usize {
        self.team_ids.len()
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|n| n == name)
    }

    /// Append the 20 human-label columns, matched by team id. Every team in
    /// the matrix must have labels.
    pub fn append_human_labels(&mut self, labels: &[(String, Vec<f64>)]) -> Result<()> {
        let by_team: HashMap<&str, &Vec<f64>> = labels
            .iter()
            .map(|(id, values)| (id.as_str(), values))
            .collect();
        let mut appended: Vec<&Vec<f64>> = Vec::with_capacity(self.team_ids.len());
        for id in &self.team_ids {
            let values = by_team
                .get(id.as_str())
                .ok_or_else(|| Error::validation(format!("no aggregated labels for team {id:?}")))?;
            if values.len() != HUMAN_LABEL_NAMES.len() {
                return Err(Error::validation(format!(
                    "team {id:?} has {} label values, expected {}",
                    values.len(),
                    HUMAN_LABEL_NAMES.len()
                )));
            }
            appended.push(values);
        }
        for (row, values) in self.rows.iter_mut().zip(appended) {
            row.extend_from_slice(values);
        }
        self.feature_names
            .extend(HUMAN_LABEL_NAMES.iter().map(|s| s.to_string()));
        Ok(())
    }

    /// Restrict to a feature subset. `Computational` requires all 42
    /// registry columns; `Human` requires all 20 label columns.
    pub fn subset(&self, subset: FeatureSubset) -> Result<FeatureMatrix> {
        let wanted: Vec<&str> = match subset {
            FeatureSubset::All => return Ok(self.clone()),
            FeatureSubset::Computational => REGISTRY.to_vec(),
            FeatureSubset::Human => HUMAN_LABEL_NAMES.to_vec(),
        };
        let mut indices = Vec::with_capacity(wanted.len());
        for name in &wanted {
            let idx = self.column(name).ok_or_else(|| {
                Error::validation(format!(
                    "feature matrix lacks column {name:?} required by subset {subset}"
                ))
            })?;
            indices.push(idx);
        }
        Ok(FeatureMatrix {
            feature_names: wanted.iter().map(|s| s.to_string()).collect(),
            team_ids: self.team_ids.clone(),
            rows: self
                .rows
                .iter()
                .map(|row| indices.iter().map(|&i| row[i]).collect())
                .collect(),
        })
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("team_id");
        for name in &self.feature_names {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for (id, row) in self.team_ids.iter().zip(&self.rows) {
            out.push_str(id);
            for value in row {
                out.push(',');
                out.push_str(&value.to_string());
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut writer = BufWriter::new(file);
        writer
            .write_all(self.to_csv_string().as_bytes())
            .map_err(|e| Error::io(path, e))?;
        writer.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<FeatureMatrix> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let display = path.display().to_string();
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::parse(&display, 1, "empty feature CSV"))?;
        let mut columns = header.split(',');
        if columns.next() != Some("team_id") {
            return Err(Error::parse(&display, 1, "first column must be team_id"));
        }
        let feature_names: Vec<String> = columns.map(str::to_string).collect();
        if feature_names.is_empty() {
            return Err(Error::parse(&display, 1, "no feature columns"));
        }
        let mut team_ids = Vec::new();
        let mut rows = Vec::new();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let line_no = i + 1;
            let mut fields = line.split(',');
            let team_id = fields
                .next()
                .ok_or_else(|| Error::parse(&display, line_no, "missing team_id"))?
                .to_string();
            let mut row = Vec::with_capacity(feature_names.len());
            for field in fields {
                let value: f64 = field.parse().map_err(|_| {
                    Error::parse(&display, line_no, format!("invalid number {field:?}"))
                })?;
                if !value.is_finite() {
                    return Err(Error::parse(&display, line_no, "non-finite feature value"));
                }
                row.push(value);
            }
            if row.len() != feature_names.len() {
                return Err(Error::parse(
                    &display,
                    line_no,
                    format!(
                        "row has {} values, header has {} columns",
                        row.len(),
                        feature_names.len()
                    ),
                ));
            }
            team_ids.push(team_id);
            rows.push(row);
        }
        Ok(FeatureMatrix {
            feature_names,
            team_ids,
            rows,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexicon::LexiconSet;
    use crate::transcript::{ChatMessage, Condition, Transcript};
    use proptest::prelude::*;

    fn set() -> LexiconSet {
        LexiconSet::bundled()
    }

    fn transcript(messages: Vec<(&str, f64, &str)>) -> Transcript {
        Transcript {
            team_id: "team".into(),
            round: 1,
            condition: Condition::Masked,
            roster: vec!["Person1".into(), "Person2".into(), "Person3".into()],
            messages: messages
                .into_iter()
                .map(|(sender, timestamp, text)| ChatMessage {
                    sender: sender.into(),
                    timestamp,
                    text: text.into(),
                })
                .collect(),
            duration: 600.0,
        }
    }

    #[test]
    fn member_measures_counts_messages_and_words() {
        let t = transcript(vec![
            ("Person1", 1.0, "hi there"),
            ("Person1", 2.0, "ok"),
            ("Person2", 3.0, "fine"),
        ]);
        let measures = member_measures(&t, &Window::full(), &set()).unwrap();
        assert_eq!(measures[0].message_count, 2);
        assert_eq!(measures[0].word_count, 3);
        assert_eq!(measures[1].message_count, 1);
        // silent roster member gets zero measures
        assert_eq!(measures[2].message_count, 0);
        assert_eq!(measures[2].word_count, 0);
        assert_eq!(measures[2].polarity, 0.0);
        assert_eq!(measures[2].subjectivity, 0.0);
        assert_eq!(measures[2].readability, 0.0);
        assert!(measures[2].document.is_empty());
    }

    #[test]
    fn window_is_half_open_except_at_duration() {
        let t = transcript(vec![
            ("Person1", 10.0, "early"),
            ("Person2", 70.0, "at the boundary"),
            ("Person3", 600.0, "final instant"),
        ]);
        let w = Window::range(0.0, 70.0);
        let m = member_measures(&t, &w, &set()).unwrap();
        assert_eq!(m.iter().map(|x| x.message_count).sum::<usize>(), 1);

        // end == duration includes the final instant, matching the full window
        let w600 = Window::range(0.0, 600.0);
        let full = member_measures(&t, &Window::full(), &set()).unwrap();
        let ranged = member_measures(&t, &w600, &set()).unwrap();
        assert_eq!(full, ranged);
        assert_eq!(full.iter().map(|x| x.message_count).sum::<usize>(), 3);
    }

    #[test]
    fn empty_window_is_an_error() {
        let t = transcript(vec![("Person1", 500.0, "late")]);
        let err = member_measures(&t, &Window::range(0.0, 100.0), &set()).unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn sentiment_mean_and_default() {
        let lexicons = set();
        let sent = lexicons.category("sentiment").unwrap();
        let neg = lexicons.category("negation").unwrap();
        // all matches share polarity 0.8 -> mean 0.8
        let (p, _) = sentiment(&tokenize("great stuff great"), sent, neg);
        assert!((p - 0.8).abs() < 1e-12);
        // no matches -> neutral
        assert_eq!(
            sentiment(&tokenize("the plan is here"), sent, neg),
            (0.0, 0.0)
        );
    }

    #[test]
    fn sentiment_negation_flips_polarity() {
        let lexicons = set();
        let sent = lexicons.category("sentiment").unwrap();
        let neg = lexicons.category("negation").unwrap();
        let (p, s) = sentiment(&tokenize("not good"), sent, neg);
        assert!((p - (-0.7)).abs() < 1e-12);
        assert!((s - 0.6).abs() < 1e-12);
    }

    #[test]
    fn negation_lookback_does_not_cross_messages() {
        let lexicons = set();
        let doc = MemberDocument {
            messages: vec![tokenize("not"), tokenize("good")],
        };
        let (p, _) = document_sentiment(
            &doc,
            lexicons.category("sentiment").unwrap(),
            lexicons.category("negation").unwrap(),
        );
        assert!((p - 0.7).abs() < 1e-12);
    }

    #[test]
    fn dale_chall_hand_values() {
        let lexicons = set();
        let easy = lexicons.category("easy_words").unwrap();
        // ten easy words, one sentence: 0.0496 * 10
        let stream = tokenize("we can go to the place and talk a lot.");
        assert_eq!(stream.len(), 10);
        assert_eq!(stream.sentences(), 1);
        let easy_only = dale_chall(&stream, easy);
        assert!((easy_only - 0.496).abs() < 1e-12, "{easy_only}");

        // ten words, one sentence, two difficult:
        // 0.1579*20 + 0.0496*10 + 3.6365
        let stream = tokenize("we can go to the quorum and deliberate a lot.");
        assert_eq!(stream.len(), 10);
        let two_difficult = dale_chall(&stream, easy);
        let expected = 0.1579 * 20.0 + 0.0496 * 10.0 + 3.6365;
        assert!((two_difficult - expected).abs() < 1e-12, "{two_difficult}");

        // degenerate: empty document scores 0
        assert_eq!(dale_chall(&tokenize(""), easy), 0.0);
        // pure numbers are never difficult
        let nums = dale_chall(&tokenize("7 42 100"), easy);
        assert!((nums - 0.0496 * 3.0).abs() < 1e-12);
    }

    fn doc(texts: &[&str]) -> MemberDocument {
        MemberDocument {
            messages: texts.iter().map(|t| tokenize(t)).collect(),
        }
    }

    #[test]
    fn tfidf_identical_documents_score_one() {
        let docs = vec![doc(&["we agree on this"]), doc(&["we agree on this"])];
        let sim = tfidf_team_similarity(&docs).unwrap();
        assert!((sim - 1.0).abs() < 1e-12, "{sim}");
    }

    #[test]
    fn tfidf_disjoint_vocabulary_scores_zero() {
        let docs = vec![doc(&["alpha beta"]), doc(&["gamma delta"])];
        assert_eq!(tfidf_team_similarity(&docs).unwrap(), 0.0);
    }

    #[test]
    fn tfidf_matches_hand_oracle() {
        // members "a b" and "a c": shared unigram "a" with df=2, everything
        // else df=1; idf(a) = ln(3/3)+1 = 1, idf(other) = ln(3/2)+1
        let docs = vec![doc(&["a b"]), doc(&["a c"])];
        let idf_rare: f64 = (3.0f64 / 2.0).ln() + 1.0;
        let norm_sq = 1.0 + 2.0 * idf_rare * idf_rare; // a + {b|c} + bigram
        let expected = 1.0 / norm_sq; // dot = 1*1 / (norm*norm)
        let sim = tfidf_team_similarity(&docs).unwrap();
        assert!((sim - expected).abs() < 1e-9, "{sim} vs {expected}");
    }

    #[test]
    fn tfidf_empty_member_contributes_zero_pairs() {
        let docs = vec![doc(&["hello there"]), doc(&["hello there"]), doc(&[])];
        // pair (0,1) = 1, pairs with the empty doc = 0; mean = 1/3
        let sim = tfidf_team_similarity(&docs).unwrap();
        assert!((sim - 1.0 / 3.0).abs() < 1e-12);
        assert!(tfidf_team_similarity(&docs[..1]).is_err());
    }

    #[test]
    fn pseudonym_refs_counts_others_only() {
        let t = transcript(vec![
            ("Person1", 1.0, "I agree with person2"),
            ("Person1", 2.0, "person1 here"),
            ("Person3", 3.0, "ok"),
        ]);
        assert_eq!(pseudonym_refs(&t, &Window::full()).unwrap(), 1);

        let none = transcript(vec![("Person1", 1.0, "nobody mentioned")]);
        assert_eq!(pseudonym_refs(&none, &Window::full()).unwrap(), 0);
    }

    #[test]
    fn team_features_statistics() {
        let mut messages = Vec::new();
        for i in 0..3 {
            messages.push(("Person1", i as f64, "one two"));
        }
        for i in 0..5 {
            messages.push(("Person2", 10.0 + i as f64, "one two"));
        }
        messages.push(("Person3", 20.0, "one two"));
        let t = transcript(messages);
        let v = team_features(&t, &Window::full(), &set(), false).unwrap();
        assert_eq!(v.get("msg_count_mean").unwrap(), 3.0);
        assert_eq!(v.get("msg_count_min").unwrap(), 1.0);
        assert_eq!(v.get("msg_count_max").unwrap(), 5.0);
        // population std of [3,5,1]
        let std = ((0.0 + 4.0 + 4.0) / 3.0f64).sqrt();
        assert!((v.get("msg_count_std").unwrap() - std).abs() < 1e-12);
    }

    #[test]
    fn team_features_full_window_equals_explicit_range() {
        let t = transcript(vec![
            ("Person1", 0.0, "but either way you should decide"),
            ("Person2", 300.0, "no idea, sadly"),
            ("Person3", 600.0, "good point!"),
        ]);
        let lexicons = set();
        let full = team_features(&t, &Window::full(), &lexicons, false).unwrap();
        let ranged = team_features(&t, &Window::range(0.0, 600.0), &lexicons, false).unwrap();
        assert_eq!(full, ranged);
    }

    #[test]
    fn team_features_rates_mode_scales_counts() {
        let t = transcript(vec![
            ("Person1", 1.0, "but but but but"),
            ("Person2", 2.0, "one two three four"),
            ("Person3", 3.0, "five six seven eight"),
        ]);
        let lexicons = set();
        let raw = team_features(&t, &Window::full(), &lexicons, false).unwrap();
        let rated = team_features(&t, &Window::full(), &lexicons, true).unwrap();
        assert_eq!(raw.get("liwc_exclusive").unwrap(), 4.0);
        // 4 matches of 12 words -> 33.33 per 100 words
        let expected = 4.0 / 12.0 * 100.0;
        assert!((rated.get("liwc_exclusive").unwrap() - expected).abs() < 1e-9);
        // statistics are unaffected by rates mode
        assert_eq!(raw.get("msg_count_mean"), rated.get("msg_count_mean"));
    }

    #[test]
    fn extraction_is_deterministic() {
        let t = transcript(vec![
            ("Person1", 1.0, "maybe we should vote?"),
            ("Person2", 2.0, "great idea, person1"),
            ("Person3", 3.0, "i disagree but ok"),
        ]);
        let lexicons = set();
        let a = team_features(&t, &Window::full(), &lexicons, false).unwrap();
        let b = team_features(&t, &Window::full(), &lexicons, false).unwrap();
        let bits_a: Vec<u64> = a.values().iter().map(|v| v.to_bits()).collect();
        let bits_b: Vec<u64> = b.values().iter().map(|v| v.to_bits()).collect();
        assert_eq!(bits_a, bits_b);
    }

    #[test]
    fn feature_matrix_csv_round_trip() {
        let t = transcript(vec![
            ("Person1", 1.0, "but you never know"),
            ("Person2", 2.0, "true. so true!"),
            ("Person3", 3.0, "ok then"),
        ]);
        let lexicons = set();
        let v = team_features(&t, &Window::full(), &lexicons, false).unwrap();
        let matrix = FeatureMatrix::from_team_vectors(vec![("team".into(), v)]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("features.csv");
        matrix.write_csv(&path).unwrap();
        let reloaded = FeatureMatrix::read_csv(&path).unwrap();
        assert_eq!(matrix, reloaded);
        let csv = matrix.to_csv_string();
        let first_line = csv.lines().next().unwrap();
        assert!(first_line.starts_with("team_id,msg_count_mean,"));
        assert!(first_line.ends_with(",argue_count,pseudonym_refs"));
    }

    #[test]
    fn subset_selection() {
        let mut matrix = FeatureMatrix {
            feature_names: REGISTRY.iter().map(|s| s.to_string()).collect(),
            team_ids: vec!["t1".into()],
            rows: vec![vec![0.0; 42]],
        };
        assert!(matrix.subset(FeatureSubset::Computational).is_ok());
        assert!(matrix.subset(FeatureSubset::Human).is_err());
        let labels = vec![("t1".to_string(), vec![3.0; 20])];
        matrix.append_human_labels(&labels).unwrap();
        assert_eq!(matrix.feature_names.len(), 62);
        let human = matrix.subset(FeatureSubset::Human).unwrap();
        assert_eq!(human.feature_names.len(), 20);
        assert_eq!(human.rows[0], vec![3.0; 20]);
    }

    proptest! {
        #[test]
        fn registry_stats_are_ordered(seed in 0u64..500) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let phrases = [
                "we could try that",
                "but i doubt it",
                "you never know",
                "sounds sad honestly",
                "great plan!",
                "what do you think?",
            ];
            let n_msgs = rng.random_range(3..15);
            let senders = ["Person1", "Person2", "Person3"];
            let messages: Vec<(&str, f64, &str)> = (0..n_msgs)
                .map(|i| {
                    let s = senders[rng.random_range(0..3)];
                    let p = phrases[rng.random_range(0..phrases.len())];
                    (s, i as f64, p)
                })
                .collect();
            let t = transcript(messages);
            let v = team_features(&t, &Window::full(), &set(), false).unwrap();
            for base in STAT_BASES {
                let mean = v.get(&format!("{base}_mean")).unwrap();
                let min = v.get(&format!("{base}_min")).unwrap();
                let max = v.get(&format!("{base}_max")).unwrap();
                let std = v.get(&format!("{base}_std")).unwrap();
                prop_assert!(min <= mean + 1e-12);
                prop_assert!(mean <= max + 1e-12);
                prop_assert!(std >= 0.0);
            }
            let tfidf = v.get("tfidf_cosine_mean").unwrap();
            prop_assert!((0.0..=1.0 + 1e-12).contains(&tfidf));
        }

        #[test]
        fn counts_monotone_as_window_grows(seed in 0u64..200) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let senders = ["Person1", "Person2", "Person3"];
            let mut messages: Vec<(&str, f64, &str)> = (0..20)
                .map(|_| {
                    let s = senders[rng.random_range(0..3)];
                    let ts = rng.random_range(0.0..600.0);
                    (s, ts, "but you should maybe stop")
                })
                .collect();
            messages.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
            let t = transcript(messages);
            let lexicons = set();
            let mut last: Option<Vec<f64>> = None;
            for end in [150.0, 300.0, 450.0, 600.0] {
                let Ok(v) = team_features(&t, &Window::range(0.0, end), &lexicons, false) else {
                    continue;
                };
                let counts: Vec<f64> =
                    ["liwc_exclusive", "liwc_second_person", "argue_count", "pseudonym_refs"]
                        .iter()
                        .map(|n| v.get(n).unwrap())
                        .collect();
                if let Some(prev) = last.replace(counts.clone()) {
                    for (now, before) in counts.iter().zip(&prev) {
                        prop_assert!(now >= before);
                    }
                }
            }
        }

        #[test]
        fn member_permutation_invariance(seed in 0u64..200) {
            use rand::{Rng, SeedableRng};
            use rand::seq::SliceRandom;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let senders = ["Person1", "Person2", "Person3"];
            let base: Vec<(String, f64, String)> = (0..12)
                .map(|i| {
                    let s = senders[rng.random_range(0..3)];
                    (s.to_string(), i as f64, format!("message number {i} from {s}"))
                })
                .collect();
            let make = |roster: Vec<String>, messages: &[(String, f64, String)]| Transcript {
                team_id: "team".into(),
                round: 1,
                condition: Condition::Masked,
                roster,
                messages: messages
                    .iter()
                    .map(|(s, ts, tx)| ChatMessage {
                        sender: s.clone(),
                        timestamp: *ts,
                        text: tx.clone(),
                    })
                    .collect(),
                duration: 600.0,
            };
            let roster: Vec<String> = senders.iter().map(|s| s.to_string()).collect();
            let mut shuffled = roster.clone();
            shuffled.shuffle(&mut rng);
            let a = team_features(&make(roster, &base), &Window::full(), &set(), false).unwrap();
            let b = team_features(&make(shuffled, &base), &Window::full(), &set(), false).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
