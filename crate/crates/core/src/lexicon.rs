//! Category lexicons and tokenization.
//!
//! Text is normalized the same way everywhere: canonical decomposition with
//! combining marks removed, lowercased, tokens are maximal runs of
//! letters/digits/apostrophes, sentence boundaries at runs of `.` `!` `?`.
//! No stop-word removal, no stemming.
//!
//! A lexicon file is UTF-8 text: first line `#name: <category>`, an optional
//! `#type: sentiment` line, then one entry per line. Entries are literal
//! tokens or prefix patterns with a single trailing `*`. Sentiment entries
//! carry tab-separated polarity and subjectivity. Other `#` lines are
//! comments.

use std::collections::HashMap;
use std::path::Path;

use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

use crate::error::Error;
use crate::Result;

/// The 19 word-choice categories, in feature-registry order.
pub const WORD_CHOICE_CATEGORIES: [&str; 19] = [
    "anger",
    "anxiety",
    "sadness",
    "articles",
    "conjunctions",
    "prepositions",
    "inclusive",
    "exclusive",
    "quantifiers",
    "certainty",
    "discrepancies",
    "negation",
    "tentativeness",
    "first_singular",
    "first_plural",
    "second_person",
    "indefinite_pronouns",
    "adverbs",
    "social",
];

/// Categories every lexicon directory must provide: the 19 word-choice
/// categories plus the argue markers, the sentiment lexicon, and the
/// readability easy-word list.
pub const REQUIRED_CATEGORIES: [&str; 22] = [
    "anger",
    "anxiety",
    "sadness",
    "articles",
    "conjunctions",
    "prepositions",
    "inclusive",
    "exclusive",
    "quantifiers",
    "certainty",
    "discrepancies",
    "negation",
    "tentativeness",
    "first_singular",
    "first_plural",
    "second_person",
    "indefinite_pronouns",
    "adverbs",
    "social",
    "argue",
    "sentiment",
    "easy_words",
];

/// One lexicon entry: a literal token or a prefix pattern, with sentiment
/// weights when the owning lexicon is a sentiment lexicon.
#[derive(Debug, Clone, PartialEq)]
pub struct LexiconEntry {
    pub term: String,
    pub prefix: bool,
    pub polarity: Option<f64>,
    pub subjectivity: Option<f64>,
}

/// A named word/prefix list matched against tokens. Matching is
/// case-insensitive by construction: entries and tokens are both lowercase.
#[derive(Debug, Clone)]
pub struct CategoryLexicon {
    name: String,
    sentiment: bool,
    entries: Vec<LexiconEntry>,
    exact: HashMap<String, usize>,
    /// Prefix patterns ordered longest-first so `lookup` is deterministic.
    prefixes: Vec<(String, usize)>,
}

impl CategoryLexicon {
    pub fn new(name: impl Into<String>, sentiment: bool, entries: Vec<LexiconEntry>) -> Result<Self> {
        let name = name.into();
        if entries.is_empty() {
            return Err(Error::validation(format!("lexicon {name:?} has no entries")));
        }
        let mut exact = HashMap::new();
        let mut prefixes: Vec<(String, usize)> = Vec::new();
        for (i, entry) in entries.iter().enumerate() {
            validate_entry(&name, entry)?;
            if entry.prefix {
                prefixes.push((entry.term.clone(), i));
            } else {
                exact.insert(entry.term.clone(), i);
            }
        }
        prefixes.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then(a.0.cmp(&b.0)));
        Ok(CategoryLexicon {
            name,
            sentiment,
            entries,
            exact,
            prefixes,
        })
    }

    /// Build from plain literal terms (no prefixes, no sentiment).
    pub fn from_terms(name: impl Into<String>, terms: &[&str]) -> Result<Self> {
        let entries = terms
            .iter()
            .map(|t| {
                let (term, prefix) = match t.strip_suffix('*') {
                    Some(stem) => (stem.to_string(), true),
                    None => (t.to_string(), false),
                };
                LexiconEntry {
                    term,
                    prefix,
                    polarity: None,
                    subjectivity: None,
                }
            })
            .collect();
        Self::new(name, false, entries)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn is_sentiment(&self) -> bool {
        self.sentiment
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[LexiconEntry] {
        &self.entries
    }

    /// Does any entry match this (lowercase) token?
    pub fn matches(&self, token: &str) -> bool {
        self.lookup(token).is_some()
    }

    /// The matching entry, if any. Exact entries win over prefixes; among
    /// prefixes the longest wins.
    pub fn lookup(&self, token: &str) -> Option<&LexiconEntry> {
        if let Some(&i) = self.exact.get(token) {
            return Some(&self.entries[i]);
        }
        self.prefixes
            .iter()
            .find(|(stem, _)| token.starts_with(stem.as_str()))
            .map(|&(_, i)| &self.entries[i])
    }
}

fn validate_entry(lexicon: &str, entry: &LexiconEntry) -> Result<()> {
    let ctx = |msg: String| Error::validation(format!("lexicon {lexicon:?}: {msg}"));
    if entry.term.is_empty() {
        return Err(ctx("empty entry".into()));
    }
    if entry.term.chars().any(char::is_whitespace) {
        return Err(ctx(format!("entry {:?} contains whitespace", entry.term)));
    }
    if entry.term.contains('*') {
        return Err(ctx(format!(
            "entry {:?} has a wildcard away from the end; only a single trailing * is allowed",
            entry.term
        )));
    }
    if let Some(p) = entry.polarity {
        if !(-1.0..=1.0).contains(&p) {
            return Err(ctx(format!("polarity {p} out of [-1,1] for {:?}", entry.term)));
        }
    }
    if let Some(s) = entry.subjectivity {
        if !(0.0..=1.0).contains(&s) {
            return Err(ctx(format!(
                "subjectivity {s} out of [0,1] for {:?}",
                entry.term
            )));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Tokenization
// ---------------------------------------------------------------------------

/// Ordered lowercase tokens of one text, with sentence boundaries and the
/// source character offset of each token.
///
/// `sentence_ends[i]` is the token index one past the last token of sentence
/// `i`; the indices are strictly increasing and the last one equals
/// `tokens.len()` whenever any tokens exist.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TokenStream {
    pub tokens: Vec<String>,
    pub sentence_ends: Vec<usize>,
    pub offsets: Vec<usize>,
}

impl TokenStream {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn sentences(&self) -> usize {
        self.sentence_ends.len()
    }
}

fn is_token_char(c: char) -> bool {
    c.is_alphanumeric() || c == '\''
}

/// Normalize and tokenize one text. Accents are stripped via canonical
/// decomposition + combining-mark removal, everything is lowercased, and
/// U+2019 is folded to a plain apostrophe so contractions keep one spelling.
pub fn tokenize(text: &str) -> TokenStream {
    let mut stream = TokenStream::default();
    let mut current = String::new();
    let mut current_start = 0usize;

    let flush = |current: &mut String, start: usize, stream: &mut TokenStream| {
        if current.is_empty() {
            return;
        }
        let trimmed = current.trim_matches('\'');
        if trimmed.chars().any(|c| c.is_alphanumeric()) {
            stream.tokens.push(trimmed.to_string());
            stream.offsets.push(start);
        }
        current.clear();
    };

    for (idx, src_ch) in text.chars().enumerate() {
        let folded = if src_ch == '\u{2019}' { '\'' } else { src_ch };
        for decomposed in std::iter::once(folded).nfd() {
            if is_combining_mark(decomposed) {
                continue;
            }
            for ch in decomposed.to_lowercase() {
                if is_token_char(ch) {
                    if current.is_empty() {
                        current_start = idx;
                    }
                    current.push(ch);
                } else {
                    flush(&mut current, current_start, &mut stream);
                    if matches!(ch, '.' | '!' | '?') {
                        let n = stream.tokens.len();
                        if stream.sentence_ends.last().copied().unwrap_or(0) < n {
                            stream.sentence_ends.push(n);
                        }
                    }
                }
            }
        }
    }
    flush(&mut current, current_start, &mut stream);
    let n = stream.tokens.len();
    if stream.sentence_ends.last().copied().unwrap_or(0) < n {
        stream.sentence_ends.push(n);
    }
    stream
}

/// Number of tokens matching any entry of the lexicon. Each token occurrence
/// counts at most once per category, however many entries it matches.
pub fn count_category(tokens: &TokenStream, lex: &CategoryLexicon) -> usize {
    tokens.tokens.iter().filter(|t| lex.matches(t)).count()
}

// ---------------------------------------------------------------------------
// Lexicon sets
// ---------------------------------------------------------------------------

/// The full set of category lexicons used by feature extraction. Immutable
/// after load; matching is pure and safe to share across threads.
#[derive(Debug, Clone)]
pub struct LexiconSet {
    lexicons: Vec<CategoryLexicon>,
    index: HashMap<String, usize>,
}

macro_rules! bundled_sources {
    ($($file:literal),* $(,)?) => {
        [$( ($file, include_str!(concat!("../lexicons/", $file))) ),*]
    };
}

/// Bundled lexicon files, embedded at compile time.
const BUNDLED: [(&str, &str); 22] = bundled_sources![
    "anger.txt",
    "anxiety.txt",
    "sadness.txt",
    "articles.txt",
    "conjunctions.txt",
    "prepositions.txt",
    "inclusive.txt",
    "exclusive.txt",
    "quantifiers.txt",
    "certainty.txt",
    "discrepancies.txt",
    "negation.txt",
    "tentativeness.txt",
    "first_singular.txt",
    "first_plural.txt",
    "second_person.txt",
    "indefinite_pronouns.txt",
    "adverbs.txt",
    "social.txt",
    "argue.txt",
    "sentiment.txt",
    "easy_words.txt",
];

impl LexiconSet {
    /// The bundled default lexicons: the 19 word-choice categories plus
    /// argue, sentiment, and easy words.
    pub fn bundled() -> LexiconSet {
        Self::from_sources(BUNDLED.iter().map(|&(name, text)| (name.to_string(), text.to_string())))
            .expect("bundled lexicons are valid")
    }

    /// Load every file in a directory as one lexicon each and validate that
    /// all required categories are present.
    pub fn load_dir(path: &Path) -> Result<LexiconSet> {
        let mut sources = Vec::new();
        let entries = std::fs::read_dir(path).map_err(|e| Error::io(path, e))?;
        let mut files: Vec<std::path::PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .collect();
        files.sort();
        for file in files {
            let text = std::fs::read_to_string(&file).map_err(|e| Error::io(&file, e))?;
            sources.push((file.display().to_string(), text));
        }
        Self::from_sources(sources.into_iter())
    }

    fn from_sources(sources: impl Iterator<Item = (String, String)>) -> Result<LexiconSet> {
        let mut lexicons = Vec::new();
        let mut index = HashMap::new();
        for (source, text) in sources {
            let lex = parse_lexicon_file(&source, &text)?;
            if index.contains_key(lex.name()) {
                return Err(Error::validation(format!(
                    "duplicate lexicon category {:?} (in {source})",
                    lex.name()
                )));
            }
            index.insert(lex.name().to_string(), lexicons.len());
            lexicons.push(lex);
        }
        let set = LexiconSet { lexicons, index };
        for required in REQUIRED_CATEGORIES {
            if set.get(required).is_none() {
                return Err(Error::validation(format!(
                    "lexicon directory is missing required category {required:?}"
                )));
            }
        }
        if !set.category("sentiment")?.is_sentiment() {
            return Err(Error::validation(
                "category \"sentiment\" must be declared with #type: sentiment",
            ));
        }
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.lexicons.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lexicons.is_empty()
    }

    pub fn names(&self) -> Vec<&str> {
        self.lexicons.iter().map(|l| l.name()).collect()
    }

    pub fn get(&self, name: &str) -> Option<&CategoryLexicon> {
        self.index.get(name).map(|&i| &self.lexicons[i])
    }

    /// Like [`get`](Self::get) but an error for categories the pipeline
    /// requires.
    pub fn category(&self, name: &str) -> Result<&CategoryLexicon> {
        self.get(name)
            .ok_or_else(|| Error::validation(format!("missing lexicon category {name:?}")))
    }
}

fn parse_lexicon_file(source: &str, text: &str) -> Result<CategoryLexicon> {
    let mut name: Option<String> = None;
    let mut sentiment = false;
    let mut entries = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim_end();
        if line.trim().is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("#name:") {
            if name.is_some() {
                return Err(Error::parse(source, line_no, "repeated #name header"));
            }
            name = Some(rest.trim().to_string());
            continue;
        }
        if let Some(rest) = line.strip_prefix("#type:") {
            match rest.trim() {
                "sentiment" => sentiment = true,
                other => {
                    return Err(Error::parse(
                        source,
                        line_no,
                        format!("unknown lexicon type {other:?}"),
                    ))
                }
            }
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        if name.is_none() {
            return Err(Error::parse(
                source,
                line_no,
                "entry before the #name: header",
            ));
        }
        let entry = parse_entry(source, line_no, line, sentiment)?;
        entries.push(entry);
    }
    let name = name.ok_or_else(|| Error::parse(source, 1, "missing #name: header"))?;
    let lex = CategoryLexicon::new(name, sentiment, entries).map_err(|e| match e {
        Error::Validation(msg) => Error::parse(source, 1, msg),
        other => other,
    })?;
    Ok(lex)
}

fn parse_entry(source: &str, line_no: usize, line: &str, sentiment: bool) -> Result<LexiconEntry> {
    let fields: Vec<&str> = line.split('\t').collect();
    let (raw_term, polarity, subjectivity) = match fields.as_slice() {
        [term] => (*term, None, None),
        [term, pol, subj] if sentiment => {
            let pol: f64 = pol.trim().parse().map_err(|_| {
                Error::parse(source, line_no, format!("invalid polarity {pol:?}"))
            })?;
            let subj: f64 = subj.trim().parse().map_err(|_| {
                Error::parse(source, line_no, format!("invalid subjectivity {subj:?}"))
            })?;
            (*term, Some(pol), Some(subj))
        }
        _ => {
            return Err(Error::parse(
                source,
                line_no,
                format!("malformed entry {line:?}"),
            ))
        }
    };
    let raw_term = raw_term.trim();
    if raw_term.chars().any(char::is_whitespace) {
        return Err(Error::parse(
            source,
            line_no,
            format!("entry {raw_term:?} contains whitespace"),
        ));
    }
    let (term, prefix) = match raw_term.strip_suffix('*') {
        Some(stem) => (stem.to_lowercase(), true),
        None => (raw_term.to_lowercase(), false),
    };
    let entry = LexiconEntry {
        term,
        prefix,
        polarity,
        subjectivity,
    };
    validate_entry(source, &entry).map_err(|e| match e {
        Error::Validation(msg) => Error::parse(source, line_no, msg),
        other => other,
    })?;
    Ok(entry)
}
