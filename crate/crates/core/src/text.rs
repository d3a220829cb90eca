//! Tokenization, stopword filtering, n-gram vocabularies and TF-IDF.
//!
//! Weights follow the smoothed-free form
//!
//! ```text
//! tf(t, d)  = count(t in d) / |d|
//! idf(t)    = ln(n / df(t)) + 1
//! w(t, d)   = tf(t, d) · idf(t)
//! ```
//!
//! where `|d|` counts every n-gram term the analyzer produced for `d`.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

use crate::linalg::CscMatrix;

/// The bundled 318-word English stopword list, one word per line.
pub const ENGLISH_STOPWORDS: &str = include_str!("../data/stopwords_en.txt");

#[derive(Debug, Error)]
pub enum TextError {
    #[error("invalid n-gram range ({lo}, {hi}): need 1 <= lo <= hi")]
    InvalidNgramRange { lo: usize, hi: usize },
    #[error("min_df must be at least 1")]
    InvalidMinDf,
    #[error("vocabulary is empty after stopword and min_df filtering")]
    EmptyVocabulary,
    #[error("document is empty")]
    EmptyDocument,
    #[error("term `{0}` is not in the vocabulary")]
    UnknownTerm(String),
    #[error("dimension mismatch: vocabulary built from {expected} documents, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StopWords(HashSet<String>);

impl StopWords {
    pub fn english() -> Self {
        Self::parse(ENGLISH_STOPWORDS)
    }

    pub fn none() -> Self {
        Self(HashSet::new())
    }

    /// One word per line; blank lines and surrounding whitespace ignored.
    pub fn parse(text: &str) -> Self {
        Self(text.lines().map(str::trim).filter(|l| !l.is_empty()).map(str::to_lowercase).collect())
    }

    pub fn from_file(path: &Path) -> Result<Self, TextError> {
        Ok(Self::parse(&std::fs::read_to_string(path)?))
    }

    pub fn contains(&self, word: &str) -> bool {
        self.0.contains(word)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl<S: AsRef<str>> FromIterator<S> for StopWords {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        Self(iter.into_iter().map(|s| s.as_ref().to_lowercase()).collect())
    }
}

/// Inclusive range of n-gram lengths.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NgramRange {
    lo: usize,
    hi: usize,
}

impl NgramRange {
    pub fn new(lo: usize, hi: usize) -> Result<Self, TextError> {
        if lo == 0 || lo > hi {
            return Err(TextError::InvalidNgramRange { lo, hi });
        }
        Ok(Self { lo, hi })
    }

    pub fn lo(&self) -> usize {
        self.lo
    }

    pub fn hi(&self) -> usize {
        self.hi
    }
}

impl Default for NgramRange {
    fn default() -> Self {
        Self { lo: 1, hi: 2 }
    }
}

/// Contiguous n-grams of `tokens` for every length in `range`, shorter
/// n-grams first, each group in text order.
pub fn ngrams<S: AsRef<str>>(tokens: &[S], range: NgramRange) -> Vec<String> {
    let mut out = Vec::new();
    for n in range.lo..=range.hi {
        if n > tokens.len() {
            break;
        }
        for w in tokens.windows(n) {
            let mut gram = String::from(w[0].as_ref());
            for t in &w[1..] {
                gram.push(' ');
                gram.push_str(t.as_ref());
            }
            out.push(gram);
        }
    }
    out
}

/// Splits on non-alphanumeric characters and emits the n-grams in `range`.
///
/// ```
/// use redfactor::text::{tokenize, NgramRange};
/// let grams = tokenize("buy msft now", NgramRange::new(1, 2).unwrap());
/// assert_eq!(grams, ["buy", "msft", "now", "buy msft", "msft now"]);
/// ```
pub fn tokenize(body: &str, range: NgramRange) -> Vec<String> {
    let words: Vec<&str> = body.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()).collect();
    ngrams(&words, range)
}

/// `count(term in doc) / len(doc)`.
pub fn term_frequency<S: AsRef<str>>(doc: &[S], term: &str) -> Result<f64, TextError> {
    if doc.is_empty() {
        return Err(TextError::EmptyDocument);
    }
    let count = doc.iter().filter(|t| t.as_ref() == term).count();
    Ok(count as f64 / doc.len() as f64)
}

/// Ordered term list with document frequencies.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    terms: Vec<String>,
    df: Vec<usize>,
    n_docs: usize,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Builds a vocabulary from term lists (already analyzed), keeping terms
    /// with `df >= min_df`. Terms are sorted lexicographically.
    pub fn from_term_docs<S: AsRef<str>>(docs: &[Vec<S>], min_df: usize) -> Result<Self, TextError> {
        if min_df == 0 {
            return Err(TextError::InvalidMinDf);
        }
        let mut df: BTreeMap<&str, usize> = BTreeMap::new();
        for doc in docs {
            let unique: HashSet<&str> = doc.iter().map(AsRef::as_ref).collect();
            for t in unique {
                *df.entry(t).or_default() += 1;
            }
        }
        let (terms, df): (Vec<String>, Vec<usize>) =
            df.into_iter().filter(|&(_, n)| n >= min_df).map(|(t, n)| (t.to_string(), n)).unzip();
        if terms.is_empty() {
            return Err(TextError::EmptyVocabulary);
        }
        let index = terms.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Ok(Self { terms, df, n_docs: docs.len(), index })
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn index_of(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    pub fn document_frequency(&self, term: &str) -> Option<usize> {
        self.index_of(term).map(|i| self.df[i])
    }

    pub fn document_frequencies(&self) -> &[usize] {
        &self.df
    }

    /// Writes the `index,term,df` sidecar for a matrix dump.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), TextError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["index", "term", "df"]).map_err(csv_io)?;
        for (i, (t, df)) in self.terms.iter().zip(&self.df).enumerate() {
            w.write_record([i.to_string(), t.clone(), df.to_string()]).map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_io(e: csv::Error) -> TextError {
    TextError::Io(std::io::Error::other(e))
}

/// `ln(n / df(t)) + 1`.
pub fn inverse_document_frequency(vocab: &Vocabulary, term: &str) -> Result<f64, TextError> {
    let df = vocab.document_frequency(term).ok_or_else(|| TextError::UnknownTerm(term.to_string()))?;
    Ok(idf(vocab.n_docs, df))
}

fn idf(n_docs: usize, df: usize) -> f64 {
    (n_docs as f64 / df as f64).ln() + 1.0
}

/// Sparse `terms × documents` TF-IDF matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct TermDocumentMatrix {
    weights: CscMatrix,
    doc_ids: Vec<String>,
}

impl TermDocumentMatrix {
    pub fn new(weights: CscMatrix, doc_ids: Vec<String>) -> Self {
        assert_eq!(weights.cols(), doc_ids.len(), "one id per document column");
        Self { weights, doc_ids }
    }

    pub fn weights(&self) -> &CscMatrix {
        &self.weights
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn n_terms(&self) -> usize {
        self.weights.rows()
    }

    pub fn n_docs(&self) -> usize {
        self.weights.cols()
    }

    pub fn with_doc_ids(self, doc_ids: Vec<String>) -> Self {
        Self::new(self.weights, doc_ids)
    }

    /// Writes `term_index,doc_index,weight` triplets.
    pub fn write_triplets_csv<W: Write>(&self, out: W) -> Result<(), TextError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["term_index", "doc_index", "weight"]).map_err(csv_io)?;
        for (i, j, v) in self.weights.triplets() {
            w.write_record([i.to_string(), j.to_string(), format!("{v:?}")]).map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Builds the TF-IDF matrix for analyzed term lists. Columns follow `docs`;
/// a document with no terms yields an all-zero column.
pub fn tfidf_matrix<S: AsRef<str> + Sync>(docs: &[Vec<S>], vocab: &Vocabulary) -> Result<TermDocumentMatrix, TextError> {
    if docs.len() != vocab.n_docs {
        return Err(TextError::DimensionMismatch { expected: vocab.n_docs, got: docs.len() });
    }
    let columns: Vec<Vec<(usize, f64)>> = docs
        .par_iter()
        .map(|doc| {
            if doc.is_empty() {
                return Vec::new();
            }
            let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
            for t in doc {
                if let Some(i) = vocab.index_of(t.as_ref()) {
                    *counts.entry(i).or_default() += 1;
                }
            }
            let len = doc.len() as f64;
            counts.into_iter().map(|(i, c)| (i, (c as f64 / len) * idf(vocab.n_docs, vocab.df[i]))).collect()
        })
        .collect();
    let ids = (0..docs.len()).map(|i| i.to_string()).collect();
    Ok(TermDocumentMatrix::new(CscMatrix::from_columns(vocab.len(), columns), ids))
}

/// Text → term list pipeline: split into words, drop stopword unigrams, then
/// form n-grams over the remaining word stream.
#[derive(Debug, Clone)]
pub struct Vectorizer {
    stopwords: StopWords,
    ngram_range: NgramRange,
    min_df: usize,
}

impl Default for Vectorizer {
    fn default() -> Self {
        Self { stopwords: StopWords::english(), ngram_range: NgramRange::default(), min_df: 2 }
    }
}

impl Vectorizer {
    pub fn new(stopwords: StopWords, ngram_range: NgramRange, min_df: usize) -> Result<Self, TextError> {
        if min_df == 0 {
            return Err(TextError::InvalidMinDf);
        }
        Ok(Self { stopwords, ngram_range, min_df })
    }

    pub fn ngram_range(&self) -> NgramRange {
        self.ngram_range
    }

    pub fn min_df(&self) -> usize {
        self.min_df
    }

    pub fn stopwords(&self) -> &StopWords {
        &self.stopwords
    }

    /// Stopword removal followed by n-gram formation on word tokens.
    pub fn terms_from_tokens<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<String> {
        let kept: Vec<&str> = tokens.iter().map(AsRef::as_ref).filter(|t| !self.stopwords.contains(t)).collect();
        ngrams(&kept, self.ngram_range)
    }

    pub fn analyze(&self, body: &str) -> Vec<String> {
        self.terms_from_tokens(&tokenize(body, NgramRange { lo: 1, hi: 1 }))
    }

    /// Vocabulary over word-token documents.
    pub fn build_vocabulary<S: AsRef<str>>(&self, token_docs: &[Vec<S>]) -> Result<Vocabulary, TextError> {
        let term_docs: Vec<Vec<String>> = token_docs.iter().map(|d| self.terms_from_tokens(d)).collect();
        Vocabulary::from_term_docs(&term_docs, self.min_df)
    }

    /// Analyzes `bodies`, builds the vocabulary, and returns both with the
    /// TF-IDF matrix.
    pub fn fit_transform<S: AsRef<str> + Sync>(&self, bodies: &[S]) -> Result<(Vocabulary, TermDocumentMatrix), TextError> {
        let term_docs: Vec<Vec<String>> = bodies.par_iter().map(|b| self.analyze(b.as_ref())).collect();
        let vocab = Vocabulary::from_term_docs(&term_docs, self.min_df)?;
        let matrix = tfidf_matrix(&term_docs, &vocab)?;
        Ok((vocab, matrix))
    }
}
