//! Tag-pair state space and smoothed trigram transitions.
//!
//! A trigram tagger is a first-order HMM over states `(previous tag,
//! current tag)`. A transition `(a, b) -> (b', c)` is only possible when
//! `b = b'`, and then has probability `P(c | a, b)`. Sentences are padded
//! with a reserved boundary label: two at the start, one at the end.
//!
//! `P(c | a, b)` is smoothed with the same blending rule as the lexicon,
//! trigram <- bigram <- unigram <- uniform, at strength `k`.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::corpus::AnnotatedSentence;
use crate::error::{Error, Result};
use crate::serial::{self, Lines};
use crate::tagset::{TagId, TagSet};

/// A tag or the sentence boundary. Stored as an index where `n_tags` is
/// the boundary.
pub type Label = Option<TagId>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StateId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateSpace {
    n_tags: usize,
}

impl StateSpace {
    pub fn new(n_tags: usize) -> Self {
        StateSpace { n_tags }
    }

    /// Number of labels including the boundary.
    #[inline]
    pub fn labels(&self) -> usize {
        self.n_tags + 1
    }

    #[inline]
    pub fn boundary(&self) -> usize {
        self.n_tags
    }

    pub fn len(&self) -> usize {
        self.labels() * self.labels()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn label_index(&self, label: Label) -> usize {
        label.map_or(self.n_tags, TagId::index)
    }

    #[inline]
    pub fn label(&self, index: usize) -> Label {
        (index < self.n_tags).then_some(TagId(index as u32))
    }

    pub fn state(&self, prev: Label, cur: Label) -> StateId {
        StateId(self.label_index(prev) * self.labels() + self.label_index(cur))
    }

    pub fn prev(&self, s: StateId) -> Label {
        self.label(s.0 / self.labels())
    }

    pub fn cur(&self, s: StateId) -> Label {
        self.label(s.0 % self.labels())
    }

    /// The tag emitted in state `s`; distinct states may emit the same tag.
    pub fn emit_tag(&self, s: StateId) -> Label {
        self.cur(s)
    }

    pub fn is_allowed(&self, from: StateId, to: StateId) -> bool {
        self.cur(from) == self.prev(to)
    }

    pub fn iter(&self) -> impl Iterator<Item = StateId> {
        (0..self.len()).map(StateId)
    }

    fn check(&self, s: StateId) -> Result<()> {
        if s.0 < self.len() {
            Ok(())
        } else {
            Err(Error::UnknownState(s.0))
        }
    }
}

/// Raw trigram counts over padded sentences. Counts from separate shards
/// combine with [`TrigramCounts::merge`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TrigramCounts {
    n_tags: usize,
    counts: HashMap<(u32, u32, u32), u64>,
}

impl TrigramCounts {
    pub fn new(n_tags: usize) -> Self {
        TrigramCounts {
            n_tags,
            counts: HashMap::new(),
        }
    }

    pub fn add_sentence(&mut self, tags: &[TagId]) {
        let b = self.n_tags as u32;
        let padded: Vec<u32> = [b, b]
            .into_iter()
            .chain(tags.iter().map(|t| t.0))
            .chain([b])
            .collect();
        for w in padded.windows(3) {
            *self.counts.entry((w[0], w[1], w[2])).or_insert(0) += 1;
        }
    }

    pub fn add_corpus(&mut self, corpus: &[AnnotatedSentence]) {
        for sentence in corpus {
            self.add_sentence(&sentence.gold);
        }
    }

    pub fn merge(&mut self, other: &TrigramCounts) {
        assert_eq!(self.n_tags, other.n_tags, "tag set sizes differ");
        for (&key, &n) in &other.counts {
            *self.counts.entry(key).or_insert(0) += n;
        }
    }

    pub fn get(&self, a: usize, b: usize, c: usize) -> u64 {
        self.counts
            .get(&(a as u32, b as u32, c as u32))
            .copied()
            .unwrap_or(0)
    }

    fn sorted(&self) -> Vec<((u32, u32, u32), u64)> {
        let mut v: Vec<_> = self.counts.iter().map(|(&k, &n)| (k, n)).collect();
        v.sort_unstable();
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionModel {
    space: StateSpace,
    strength: f64,
    trigrams: TrigramCounts,
    /// c(a, b) = sum over c of c(a, b, c), indexed a * L + b
    contexts: Vec<u64>,
    /// smoothed P(c | b), indexed b * L + c
    bigram: Vec<f64>,
}

impl TransitionModel {
    pub fn train(corpus: &[AnnotatedSentence], tagset: &TagSet, strength: f64) -> Result<Self> {
        for sentence in corpus {
            if let Some(bad) = sentence.gold.iter().find(|t| t.index() >= tagset.len()) {
                return Err(Error::UnknownTag(bad.to_string()));
            }
        }
        let mut counts = TrigramCounts::new(tagset.len());
        counts.add_corpus(corpus);
        Self::from_counts(counts, strength)
    }

    pub fn from_counts(trigrams: TrigramCounts, strength: f64) -> Result<Self> {
        if !(strength >= 0.0 && strength.is_finite()) {
            return Err(Error::invalid("k-trans", "must be a finite non-negative number"));
        }
        let space = StateSpace::new(trigrams.n_tags);
        let l = space.labels();
        let mut contexts = vec![0u64; l * l];
        let mut pairs = vec![0u64; l * l];
        let mut singles = vec![0u64; l];
        let mut heads = vec![0u64; l];
        for ((a, b, c), n) in trigrams.sorted() {
            let (a, b, c) = (a as usize, b as usize, c as usize);
            contexts[a * l + b] += n;
            pairs[b * l + c] += n;
            heads[b] += n;
            singles[c] += n;
        }
        let total: u64 = singles.iter().sum();

        let smooth = |count: u64, parent: f64, denom_count: u64| -> f64 {
            let denom = denom_count as f64 + strength;
            if denom == 0.0 {
                parent
            } else {
                (count as f64 + strength * parent) / denom
            }
        };
        let uniform = 1.0 / l as f64;
        let unigram: Vec<f64> = singles
            .iter()
            .map(|&n| smooth(n, uniform, total))
            .collect();
        let mut bigram = vec![0.0; l * l];
        for b in 0..l {
            for c in 0..l {
                bigram[b * l + c] = smooth(pairs[b * l + c], unigram[c], heads[b]);
            }
        }
        Ok(TransitionModel {
            space,
            strength,
            trigrams,
            contexts,
            bigram,
        })
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn strength(&self) -> f64 {
        self.strength
    }

    pub fn counts(&self) -> &TrigramCounts {
        &self.trigrams
    }

    /// `P(next | prev2, prev)` by label index.
    #[inline]
    pub fn prob_index(&self, a: usize, b: usize, c: usize) -> f64 {
        let l = self.space.labels();
        let parent = self.bigram[b * l + c];
        let denom = self.contexts[a * l + b] as f64 + self.strength;
        if denom == 0.0 {
            parent
        } else {
            (self.trigrams.get(a, b, c) as f64 + self.strength * parent) / denom
        }
    }

    /// `P(next | prev2, prev)`; `None` is the boundary.
    pub fn prob(&self, prev2: Label, prev: Label, next: Label) -> f64 {
        let s = &self.space;
        self.prob_index(s.label_index(prev2), s.label_index(prev), s.label_index(next))
    }

    /// `p_ij`: zero for structurally disallowed pairs.
    pub fn transition_prob(&self, from: StateId, to: StateId) -> Result<f64> {
        self.space.check(from)?;
        self.space.check(to)?;
        if !self.space.is_allowed(from, to) {
            return Ok(0.0);
        }
        let l = self.space.labels();
        Ok(self.prob_index(from.0 / l, from.0 % l, to.0 % l))
    }

    pub const HEADER: &'static str = "ambitag-trans v1";

    pub fn write_to(&self, out: &mut String, tagset: &TagSet) {
        let name = |i: u32| -> &str {
            if i as usize == self.space.boundary() {
                "<s>"
            } else {
                tagset.symbol(TagId(i))
            }
        };
        let _ = writeln!(out, "{}", Self::HEADER);
        let sorted = self.trigrams.sorted();
        let _ = writeln!(
            out,
            "config {} {} {}",
            serial::float(self.strength),
            self.space.n_tags,
            sorted.len()
        );
        for ((a, b, c), n) in sorted {
            let logp = self.prob_index(a as usize, b as usize, c as usize).ln();
            let _ = writeln!(
                out,
                "t {} {} {} {} {}",
                name(a),
                name(b),
                name(c),
                n,
                serial::float(logp)
            );
        }
    }

    pub fn read_from(lines: &mut Lines<'_>, tagset: &TagSet) -> Result<Self> {
        lines.expect_exact(Self::HEADER)?;
        let f = lines.fields("config", 3)?;
        let strength = lines.float(f[0])?;
        let n_tags: usize = lines.int(f[1])?;
        let entries: usize = lines.int(f[2])?;
        if n_tags != tagset.len() {
            return Err(lines.error("transition section does not match the tag set"));
        }
        let index = |s: &str| -> Option<u32> {
            if s == "<s>" {
                Some(n_tags as u32)
            } else {
                tagset.get(s).map(|t| t.0)
            }
        };
        let mut counts = TrigramCounts::new(n_tags);
        let mut logps = Vec::with_capacity(entries);
        for _ in 0..entries {
            let f = lines.fields("t", 5)?;
            let mut key = [0u32; 3];
            for (slot, sym) in key.iter_mut().zip(&f[..3]) {
                *slot = index(sym).ok_or_else(|| lines.error(format!("unknown tag `{sym}`")))?;
            }
            let n: u64 = lines.int(f[3])?;
            counts.counts.insert((key[0], key[1], key[2]), n);
            logps.push((key, lines.float(f[4])?));
        }
        let model = Self::from_counts(counts, strength)?;
        for ([a, b, c], logp) in logps {
            let expect = model.prob_index(a as usize, b as usize, c as usize).ln();
            if (expect - logp).abs() > 1e-9 * expect.abs().max(1.0) {
                return Err(lines.error("stored log-probability disagrees with counts"));
            }
        }
        Ok(model)
    }
}
