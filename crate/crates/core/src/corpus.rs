//! Corpus formats and splits.
//!
//! Annotated corpora are one token per line, `surface<TAB>TAG`, with a blank
//! line between sentences. Cohort files use the same layout with one or
//! more space-separated tags after the tab. Lines starting with `#` are
//! comments in both.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{read_to_string, Error, Result};
use crate::tagset::{TagId, TagSet};

/// Orthographic shape of a surface form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Shape {
    Lower,
    Capitalized,
    AllCaps,
    Other,
}

impl Shape {
    /// `walk` is lower, `Walk` capitalized, `NATO` all-caps; anything not
    /// starting with a letter (`3.14`, `'em`) is other. A single capital
    /// letter (`I`, `A`) counts as capitalized.
    pub fn of(surface: &str) -> Shape {
        let Some(first) = surface.chars().next() else {
            return Shape::Other;
        };
        if !first.is_alphabetic() {
            return Shape::Other;
        }
        let mut letters = 0usize;
        let mut all_upper = true;
        for c in surface.chars().filter(|c| c.is_alphabetic()) {
            letters += 1;
            all_upper &= c.is_uppercase();
        }
        if all_upper && letters >= 2 {
            Shape::AllCaps
        } else if first.is_uppercase() {
            Shape::Capitalized
        } else {
            Shape::Lower
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Token {
    pub surface: String,
    pub shape: Shape,
}

impl Token {
    pub fn new(surface: impl Into<String>) -> Self {
        let surface = surface.into();
        let shape = Shape::of(&surface);
        Token { surface, shape }
    }
}

/// A gold-tagged sentence. `tokens` and `gold` have equal, non-zero length.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotatedSentence {
    pub tokens: Vec<Token>,
    pub gold: Vec<TagId>,
}

impl AnnotatedSentence {
    pub fn new(tokens: Vec<Token>, gold: Vec<TagId>) -> Self {
        assert_eq!(tokens.len(), gold.len(), "token/tag arity mismatch");
        assert!(!tokens.is_empty(), "empty sentence");
        AnnotatedSentence { tokens, gold }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Token, TagId)> {
        self.tokens.iter().zip(self.gold.iter().copied())
    }
}

/// A token with its candidate analyses and, after tagging, the retained
/// subset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cohort {
    pub token: Token,
    pub candidates: Vec<TagId>,
    pub retained: Vec<TagId>,
}

impl Cohort {
    pub fn new(token: Token, candidates: Vec<TagId>) -> Self {
        Cohort {
            token,
            candidates,
            retained: Vec::new(),
        }
    }
}

pub fn word_count(corpus: &[AnnotatedSentence]) -> usize {
    corpus.iter().map(AnnotatedSentence::len).sum()
}

/// Splits lines into sentences of `(line number, line)` records, dropping
/// comments and treating runs of blank lines as one break.
fn sentence_blocks(text: &str) -> Vec<Vec<(usize, &str)>> {
    let mut blocks = Vec::new();
    let mut current = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches(['\r', '\n']);
        if line.starts_with('#') {
            continue;
        }
        if line.trim().is_empty() {
            if !current.is_empty() {
                blocks.push(std::mem::take(&mut current));
            }
            continue;
        }
        current.push((i + 1, line));
    }
    if !current.is_empty() {
        blocks.push(current);
    }
    blocks
}

pub fn parse_annotated(
    text: &str,
    source_name: &str,
    tagset: &TagSet,
) -> Result<Vec<AnnotatedSentence>> {
    let mut corpus = Vec::new();
    for block in sentence_blocks(text) {
        let mut tokens = Vec::with_capacity(block.len());
        let mut gold = Vec::with_capacity(block.len());
        for (lineno, line) in block {
            let (surface, rest) = line.split_once('\t').ok_or_else(|| {
                Error::parse(source_name, lineno, "expected `surface<TAB>TAG`")
            })?;
            let mut fields = rest.split_whitespace();
            let symbol = fields
                .next()
                .ok_or_else(|| Error::parse(source_name, lineno, "missing tag"))?;
            if fields.next().is_some() {
                return Err(Error::parse(
                    source_name,
                    lineno,
                    "more than one tag on an annotated line",
                ));
            }
            if surface.is_empty() {
                return Err(Error::parse(source_name, lineno, "empty surface form"));
            }
            let tag = tagset.get(symbol).ok_or_else(|| {
                Error::parse(source_name, lineno, format!("unknown tag `{symbol}`"))
            })?;
            tokens.push(Token::new(surface));
            gold.push(tag);
        }
        corpus.push(AnnotatedSentence { tokens, gold });
    }
    Ok(corpus)
}

pub fn read_annotated(path: &Path, tagset: &TagSet) -> Result<Vec<AnnotatedSentence>> {
    parse_annotated(&read_to_string(path)?, &path.display().to_string(), tagset)
}

pub fn write_annotated(corpus: &[AnnotatedSentence], tagset: &TagSet) -> String {
    let mut out = String::new();
    for (i, sentence) in corpus.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        for (token, tag) in sentence.iter() {
            let _ = writeln!(out, "{}\t{}", token.surface, tagset.symbol(tag));
        }
    }
    out
}

pub fn parse_cohorts(text: &str, source_name: &str, tagset: &TagSet) -> Result<Vec<Vec<Cohort>>> {
    let mut sentences = Vec::new();
    for block in sentence_blocks(text) {
        let mut sentence = Vec::with_capacity(block.len());
        for (lineno, line) in block {
            let (surface, rest) = line.split_once('\t').ok_or_else(|| {
                Error::parse(source_name, lineno, "expected `surface<TAB>TAG ...`")
            })?;
            let mut candidates = Vec::new();
            for symbol in rest.split_whitespace() {
                let tag = tagset.get(symbol).ok_or_else(|| {
                    Error::parse(source_name, lineno, format!("unknown tag `{symbol}`"))
                })?;
                if !candidates.contains(&tag) {
                    candidates.push(tag);
                }
            }
            if candidates.is_empty() {
                return Err(Error::parse(source_name, lineno, "cohort with no tags"));
            }
            sentence.push(Cohort::new(Token::new(surface), candidates));
        }
        sentences.push(sentence);
    }
    Ok(sentences)
}

pub fn read_cohorts(path: &Path, tagset: &TagSet) -> Result<Vec<Vec<Cohort>>> {
    parse_cohorts(&read_to_string(path)?, &path.display().to_string(), tagset)
}

/// Writes cohorts; with `retained` set the tag list is the retained set
/// (tagger output), otherwise the candidate set.
pub fn write_cohorts(sentences: &[Vec<Cohort>], tagset: &TagSet, retained: bool) -> String {
    let mut out = String::new();
    for (i, sentence) in sentences.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        for cohort in sentence {
            let tags = if retained {
                &cohort.retained
            } else {
                &cohort.candidates
            };
            out.push_str(&cohort.token.surface);
            out.push('\t');
            for (j, &tag) in tags.iter().enumerate() {
                if j > 0 {
                    out.push(' ');
                }
                out.push_str(tagset.symbol(tag));
            }
            out.push('\n');
        }
    }
    out
}

/// One token of morphological-analyser output with its multi-feature
/// readings, before tag conversion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Analysis {
    pub surface: String,
    pub readings: Vec<Vec<String>>,
}

/// Reads analyser blocks: an unindented token line (optionally written
/// `"<walk>"`) followed by indented reading lines of space-separated
/// features. Blank lines separate sentences.
pub fn parse_analyses(text: &str, source_name: &str) -> Result<Vec<Vec<Analysis>>> {
    let mut sentences = Vec::new();
    for block in sentence_blocks(text) {
        let mut sentence: Vec<Analysis> = Vec::new();
        for (lineno, line) in block {
            if line.starts_with([' ', '\t']) {
                let current = sentence.last_mut().ok_or_else(|| {
                    Error::parse(source_name, lineno, "reading before any token line")
                })?;
                current
                    .readings
                    .push(line.split_whitespace().map(str::to_string).collect());
            } else {
                let word = line.trim();
                let surface = word
                    .strip_prefix("\"<")
                    .and_then(|w| w.strip_suffix(">\""))
                    .unwrap_or(word);
                if let Some(prev) = sentence.last() {
                    if prev.readings.is_empty() {
                        return Err(Error::parse(
                            source_name,
                            lineno - 1,
                            format!("token `{}` has no readings", prev.surface),
                        ));
                    }
                }
                sentence.push(Analysis {
                    surface: surface.to_string(),
                    readings: Vec::new(),
                });
            }
        }
        if let Some(last) = sentence.last() {
            if last.readings.is_empty() {
                return Err(Error::parse(
                    source_name,
                    0,
                    format!("token `{}` has no readings", last.surface),
                ));
            }
        }
        sentences.push(sentence);
    }
    Ok(sentences)
}

/// Train / held-out partition of a corpus at sentence granularity.
#[derive(Debug, Clone)]
pub struct CorpusSplit {
    pub train: Vec<AnnotatedSentence>,
    pub held_out: Vec<AnnotatedSentence>,
    pub seed: u64,
}

fn shuffled(corpus: &[AnnotatedSentence], seed: u64) -> Vec<AnnotatedSentence> {
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    order.into_iter().map(|i| corpus[i].clone()).collect()
}

/// Smallest prefix of `sentences` holding at least `words` tokens (or all
/// of them).
fn prefix_for(sentences: &[AnnotatedSentence], words: usize) -> usize {
    let mut count = 0;
    for (i, s) in sentences.iter().enumerate() {
        if count >= words {
            return i;
        }
        count += s.len();
    }
    sentences.len()
}

/// Sets aside roughly `held_out_words` words (whole sentences, after a
/// seeded shuffle) and keeps the rest for training.
pub fn split(corpus: &[AnnotatedSentence], held_out_words: usize, seed: u64) -> CorpusSplit {
    let mut all = shuffled(corpus, seed);
    let cut = prefix_for(&all, held_out_words);
    let train = all.split_off(cut);
    CorpusSplit {
        train,
        held_out: all,
        seed,
    }
}

/// An evaluation slice plus nested training slices. Slice `i` is the first
/// `cuts[i]` sentences of `pool`, so every slice contains the smaller ones.
#[derive(Debug, Clone)]
pub struct LearningCurveSplit {
    pub eval: Vec<AnnotatedSentence>,
    pub pool: Vec<AnnotatedSentence>,
    pub cuts: Vec<usize>,
    pub seed: u64,
}

impl LearningCurveSplit {
    pub fn slice(&self, i: usize) -> &[AnnotatedSentence] {
        &self.pool[..self.cuts[i]]
    }

    pub fn len(&self) -> usize {
        self.cuts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cuts.is_empty()
    }
}

pub fn split_for_learning_curve(
    corpus: &[AnnotatedSentence],
    sizes: &[usize],
    eval_words: usize,
    seed: u64,
) -> Result<LearningCurveSplit> {
    if sizes.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::invalid("sizes", "training sizes must be ascending"));
    }
    let available = word_count(corpus);
    let needed = eval_words + sizes.last().copied().unwrap_or(0);
    if needed > available {
        return Err(Error::InsufficientCorpus { needed, available });
    }
    let CorpusSplit {
        train: pool,
        held_out: eval,
        ..
    } = split(corpus, eval_words, seed);
    let cuts = sizes.iter().map(|&n| prefix_for(&pool, n)).collect();
    Ok(LearningCurveSplit {
        eval,
        pool,
        cuts,
        seed,
    })
}
