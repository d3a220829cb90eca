use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::IngestError;

/// A tracked stock: its symbol plus common names that count as a mention.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TickerSpec {
    symbol: String,
    aliases: Vec<String>,
}

impl TickerSpec {
    /// Symbol and aliases are lowercased; empty aliases are dropped.
    pub fn new(symbol: &str, aliases: &[&str]) -> Result<Self, IngestError> {
        Self::from_parts(symbol.to_string(), aliases.iter().map(|a| a.to_string()).collect())
    }

    pub fn from_parts(symbol: String, aliases: Vec<String>) -> Result<Self, IngestError> {
        let symbol = normalize_text(&symbol);
        if symbol.is_empty() {
            return Err(IngestError::InvalidTicker("empty symbol".into()));
        }
        let mut aliases: Vec<String> =
            aliases.iter().map(|a| normalize_text(a)).filter(|a| !a.is_empty()).collect();
        aliases.sort();
        aliases.dedup();
        Ok(Self { symbol, aliases })
    }

    pub fn symbol(&self) -> &str {
        &self.symbol
    }

    pub fn aliases(&self) -> &[String] {
        &self.aliases
    }
}

/// Lowercases, drops every non-ASCII or non-printable character, and
/// collapses whitespace runs to single spaces.
///
/// Accented letters are deleted rather than transliterated: `"Café"` becomes
/// `"caf"`.
///
/// ```
/// use redfactor::ingest::normalize_text;
/// assert_eq!(normalize_text("Big OOF TSLA 🚀"), "big oof tsla");
/// assert_eq!(normalize_text("Café  ROCKS"), "caf rocks");
/// ```
pub fn normalize_text(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    let mut pending_space = false;
    for ch in raw.chars() {
        if ch.is_whitespace() {
            pending_space = true;
        } else if ch.is_ascii_graphic() {
            if pending_space && !out.is_empty() {
                out.push(' ');
            }
            pending_space = false;
            out.push(ch.to_ascii_lowercase());
        }
    }
    out
}

fn words(body: &str) -> Vec<&str> {
    body.split(|c: char| !c.is_ascii_alphanumeric()).filter(|w| !w.is_empty()).collect()
}

fn contains_phrase(haystack: &[&str], phrase: &[&str]) -> bool {
    !phrase.is_empty() && haystack.windows(phrase.len()).any(|w| w == phrase)
}

/// Symbols whose ticker or any alias occurs in `body` as a whole word (or a
/// whole run of words, for multi-word aliases).
pub fn detect_mentions(body: &str, universe: &[TickerSpec]) -> BTreeSet<String> {
    let tokens = words(body);
    universe
        .iter()
        .filter(|spec| {
            std::iter::once(spec.symbol.as_str())
                .chain(spec.aliases.iter().map(String::as_str))
                .any(|name| contains_phrase(&tokens, &words(name)))
        })
        .map(|spec| spec.symbol.clone())
        .collect()
}
