//! Raw documents to filtered, normalized sentence instances.
//!
//! Normalization lowercases, maps every digit to `0` and puts single spaces
//! between words and punctuation. Sentence splitting is rule based on the
//! normalized token stream. Keyword and part-of-speech filters then narrow
//! the corpus, and [`split_validation`] carves out a seeded held-out sample.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::ops::Range;
use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub doc_type: String,
    pub year: i32,
    pub raw_text: String,
}

/// One normalized sentence.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Instance {
    pub id: String,
    pub doc_id: String,
    pub text: String,
}

impl Instance {
    pub fn new(id: impl Into<String>, doc_id: impl Into<String>, text: impl Into<String>) -> Self {
        Instance { id: id.into(), doc_id: doc_id.into(), text: text.into() }
    }

    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.text.split(' ').filter(|t| !t.is_empty())
    }

    /// Byte ranges of the space-separated word and punctuation tokens.
    pub fn token_spans(&self) -> Vec<Range<usize>> {
        let mut spans = Vec::new();
        let mut start = None;
        for (i, c) in self.text.char_indices() {
            match (c == ' ', start) {
                (true, Some(s)) => {
                    spans.push(s..i);
                    start = None;
                }
                (false, None) => start = Some(i),
                _ => {}
            }
        }
        if let Some(s) = start {
            spans.push(s..self.text.len());
        }
        spans
    }
}

const UNICODE_PUNCT: &[char] = &[
    '–', '—', '‐', '‑', '‒', '“', '”', '„', '‘', '’', '‚', '«', '»', '‹', '›', '…', '§', '•', '·', '′',
    '″', '¡', '¿',
];

fn is_punct(c: char) -> bool {
    c.is_ascii_punctuation() || UNICODE_PUNCT.contains(&c)
}

fn is_hyphen(c: char) -> bool {
    c == '-'
}

/// Lowercase, replace digits with `0`, split punctuation off words.
///
/// Punctuation stays attached when it sits between two digits
/// (`0000:00`, `0000/00`, `0,0`), and a hyphen stays attached to an
/// adjacent letter (`mor-`, `e-post`). Runs of the same punctuation
/// character form one token.
pub fn normalize(text: &str) -> String {
    let lowered: String = text
        .chars()
        .flat_map(char::to_lowercase)
        .map(|c| if c.is_numeric() { '0' } else { c })
        .collect();

    let mut tokens: Vec<String> = Vec::new();
    for chunk in lowered.split_whitespace() {
        let chars: Vec<char> = chunk.chars().collect();
        let mut word = String::new();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            if !is_punct(c) {
                word.push(c);
                i += 1;
                continue;
            }
            let prev = i.checked_sub(1).map(|j| chars[j]);
            let next = chars.get(i + 1).copied();
            let between_digits = prev.is_some_and(|p| p == '0') && next.is_some_and(|n| n == '0');
            let word_char = |x: Option<char>| x.is_some_and(|x| !is_punct(x));
            let attached_hyphen = is_hyphen(c) && (word_char(prev) || word_char(next));
            if between_digits || attached_hyphen {
                word.push(c);
                i += 1;
                continue;
            }
            if !word.is_empty() {
                tokens.push(std::mem::take(&mut word));
            }
            let mut run = String::new();
            while i < chars.len() && chars[i] == c {
                run.push(c);
                i += 1;
            }
            tokens.push(run);
        }
        if !word.is_empty() {
            tokens.push(word);
        }
    }
    tokens.join(" ")
}

/// Tokens after which a `.` does not end a sentence.
const ABBREVIATIONS: &[&str] = &[
    "bl", "ca", "dvs", "enl", "etc", "ex", "fl", "jfr", "kap", "mfl", "nr", "obs", "osv", "prop",
    "resp", "sek", "st", "tex", "vs",
];

fn is_terminal(token: &str) -> bool {
    !token.is_empty() && token.chars().all(|c| matches!(c, '.' | '!' | '?' | '…'))
}

fn is_closer(token: &str) -> bool {
    !token.is_empty() && token.chars().all(|c| matches!(c, '"' | '\'' | '”' | '’' | '»' | ')' | ']'))
}

fn ends_sentence(tokens: &[&str], i: usize) -> bool {
    let tok = tokens[i];
    if !is_terminal(tok) {
        return false;
    }
    if tok != "." {
        return true;
    }
    match i.checked_sub(1).map(|j| tokens[j]) {
        Some(prev) => {
            let single_letter = prev.chars().count() == 1 && prev.chars().all(char::is_alphabetic);
            !(single_letter || ABBREVIATIONS.contains(&prev))
        }
        None => true,
    }
}

/// Normalizes the document and splits it into sentences.
///
/// Blank lines are hard boundaries. Inside a paragraph a sentence ends at
/// `.`, `!`, `?` or `…` tokens (plus any closing quotes/brackets), except a
/// `.` that follows a single letter or a known abbreviation.
pub fn split_sentences(doc: &Document) -> Vec<Instance> {
    let mut sentences: Vec<String> = Vec::new();
    let paragraphs = doc.raw_text.split("\n\n").flat_map(|p| p.split("\r\n\r\n"));
    for para in paragraphs {
        let norm = normalize(para);
        let tokens: Vec<&str> = norm.split(' ').filter(|t| !t.is_empty()).collect();
        let mut start = 0;
        let mut i = 0;
        while i < tokens.len() {
            if ends_sentence(&tokens, i) {
                let mut end = i + 1;
                while end < tokens.len() && is_closer(tokens[end]) {
                    end += 1;
                }
                sentences.push(tokens[start..end].join(" "));
                start = end;
                i = end;
            } else {
                i += 1;
            }
        }
        if start < tokens.len() {
            sentences.push(tokens[start..].join(" "));
        }
    }
    sentences
        .into_iter()
        .enumerate()
        .map(|(idx, text)| Instance::new(format!("{}:{idx}", doc.id), doc.id.clone(), text))
        .collect()
}

fn normalized_keywords(keywords: &[String]) -> Result<HashSet<String>> {
    let set: HashSet<String> =
        keywords.iter().map(|k| normalize(k)).filter(|k| !k.is_empty()).collect();
    if set.is_empty() {
        return Err(Error::Invalid("keyword list is empty".into()));
    }
    Ok(set)
}

/// Keeps instances containing at least one keyword as a whole token.
pub fn keyword_filter(instances: &[Instance], keywords: &[String]) -> Result<Vec<Instance>> {
    let set = normalized_keywords(keywords)?;
    Ok(instances
        .iter()
        .filter(|inst| inst.tokens().any(|t| set.contains(t)))
        .cloned()
        .collect())
}

/// Part-of-speech tags for instance tokens, from any external tagger.
pub trait PosSource {
    fn tags(&self, instance_id: &str) -> Option<&[String]>;
}

/// Tags read from a tab-separated sidecar: `instance_id`, `token_index`, `tag`.
#[derive(Debug, Clone, Default)]
pub struct PosSidecar {
    tags: HashMap<String, Vec<String>>,
}

impl PosSidecar {
    pub fn from_tsv(src: &str) -> Result<Self> {
        let mut raw: HashMap<String, BTreeMap<usize, String>> = HashMap::new();
        for (lineno, line) in src.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split('\t');
            let (Some(id), Some(idx), Some(tag)) = (parts.next(), parts.next(), parts.next()) else {
                return Err(Error::format(
                    "pos sidecar",
                    format!("line {}: expected 3 tab-separated fields", lineno + 1),
                ));
            };
            let idx: usize = idx.trim().parse().map_err(|_| {
                Error::format("pos sidecar", format!("line {}: bad token index `{idx}`", lineno + 1))
            })?;
            raw.entry(id.to_string()).or_default().insert(idx, tag.trim().to_string());
        }
        let mut tags = HashMap::with_capacity(raw.len());
        for (id, by_index) in raw {
            if by_index.keys().copied().ne(0..by_index.len()) {
                return Err(Error::format(
                    "pos sidecar",
                    format!("token indices for `{id}` are not contiguous from 0"),
                ));
            }
            tags.insert(id, by_index.into_values().collect());
        }
        Ok(PosSidecar { tags })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_tsv(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn insert(&mut self, instance_id: impl Into<String>, tags: Vec<String>) {
        self.tags.insert(instance_id.into(), tags);
    }
}

impl PosSource for PosSidecar {
    fn tags(&self, instance_id: &str) -> Option<&[String]> {
        self.tags.get(instance_id).map(Vec::as_slice)
    }
}

/// Tags counted as nouns: `NOUN` (universal) and `NN` (SUC), including
/// feature-suffixed forms like `NN.UTR.SIN.IND.NOM`.
pub const DEFAULT_NOUN_TAGS: &[&str] = &["NOUN", "NN"];

fn is_noun_tag(tag: &str, noun_tags: &[&str]) -> bool {
    noun_tags.iter().any(|n| {
        tag.eq_ignore_ascii_case(n)
            || (tag.len() > n.len()
                && tag[..n.len()].eq_ignore_ascii_case(n)
                && matches!(tag.as_bytes()[n.len()], b'.' | b'|' | b'_' | b':'))
    })
}

/// Keeps instances where at least one keyword token is tagged as a noun.
pub fn pos_filter(
    instances: &[Instance],
    keywords: &[String],
    pos: &dyn PosSource,
    noun_tags: &[&str],
) -> Result<Vec<Instance>> {
    let set = normalized_keywords(keywords)?;
    let mut missing = Vec::new();
    let mut mismatched = Vec::new();
    let mut kept = Vec::new();
    for inst in instances {
        let Some(tags) = pos.tags(&inst.id) else {
            missing.push(inst.id.clone());
            continue;
        };
        let tokens: Vec<&str> = inst.tokens().collect();
        if tokens.len() != tags.len() {
            mismatched.push(format!("{} ({} tokens, {} tags)", inst.id, tokens.len(), tags.len()));
            continue;
        }
        let noun_hit = tokens
            .iter()
            .zip(tags)
            .any(|(tok, tag)| set.contains(*tok) && is_noun_tag(tag, noun_tags));
        if noun_hit {
            kept.push(inst.clone());
        }
    }
    if !missing.is_empty() {
        return Err(Error::Invalid(format!(
            "missing part-of-speech annotation for: {}",
            missing.join(", ")
        )));
    }
    if !mismatched.is_empty() {
        return Err(Error::Invalid(format!("tag/token count mismatch: {}", mismatched.join(", "))));
    }
    Ok(kept)
}

/// Seeded sample of `n` instances, disjoint from `exclude_ids`.
///
/// Both outputs keep corpus order. Excluded instances appear in neither.
pub fn split_validation(
    instances: &[Instance],
    n: usize,
    seed: u64,
    exclude_ids: &HashSet<String>,
) -> Result<(Vec<Instance>, Vec<Instance>)> {
    let pool: Vec<&Instance> = instances.iter().filter(|i| !exclude_ids.contains(&i.id)).collect();
    if n > pool.len() {
        return Err(Error::Invalid(format!(
            "validation size {n} exceeds the {} eligible instances",
            pool.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = vec![false; pool.len()];
    for idx in sample(&mut rng, pool.len(), n) {
        chosen[idx] = true;
    }
    let (mut validation, mut remainder) = (Vec::with_capacity(n), Vec::with_capacity(pool.len() - n));
    for (inst, picked) in pool.into_iter().zip(chosen) {
        if picked {
            validation.push(inst.clone());
        } else {
            remainder.push(inst.clone());
        }
    }
    Ok((validation, remainder))
}

/// Reads a corpus directory.
///
/// With a `manifest.tsv` (`id`, `type`, `year`, `path` relative to the
/// directory, optional header) documents come in manifest order; otherwise
/// every `*.txt` file is a document, ordered by file name, with type
/// `unknown` and year 0.
pub fn load_corpus(dir: impl AsRef<Path>) -> Result<Vec<Document>> {
    let dir = dir.as_ref();
    let manifest = dir.join("manifest.tsv");
    let mut docs = Vec::new();
    if manifest.exists() {
        let src = fs::read_to_string(&manifest).map_err(|e| Error::io(&manifest, e))?;
        for (lineno, line) in src.lines().enumerate() {
            let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
            if line.trim().is_empty() || line.starts_with('#') || (lineno == 0 && fields[0] == "id") {
                continue;
            }
            let [id, doc_type, year, path] = fields[..] else {
                return Err(Error::format(
                    "corpus manifest",
                    format!("line {}: expected 4 tab-separated fields", lineno + 1),
                ));
            };
            let year = year.parse().map_err(|_| {
                Error::format("corpus manifest", format!("line {}: bad year `{year}`", lineno + 1))
            })?;
            let p = dir.join(path);
            let raw_text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
            docs.push(Document { id: id.into(), doc_type: doc_type.into(), year, raw_text });
        }
    } else {
        let mut paths: Vec<_> = fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "txt"))
            .collect();
        paths.sort();
        for p in paths {
            let id = p.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            let raw_text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
            docs.push(Document { id, doc_type: "unknown".into(), year: 0, raw_text });
        }
    }
    let mut ids = HashSet::new();
    for d in &docs {
        if !ids.insert(d.id.as_str()) {
            return Err(Error::Invalid(format!("duplicate document id `{}`", d.id)));
        }
    }
    Ok(docs)
}

/// One keyword per line; blank lines and `#` comments ignored.
pub fn parse_keywords(src: &str) -> Vec<String> {
    src.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect()
}

pub fn read_instances(path: impl AsRef<Path>) -> Result<Vec<Instance>> {
    crate::io::read_jsonl(path)
}

pub fn write_instances(path: impl AsRef<Path>, instances: &[Instance]) -> Result<()> {
    crate::io::write_jsonl(path, instances)
}
