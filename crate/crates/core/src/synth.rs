//! Synthetic corpora from a known trigram HMM.
//!
//! Real annotated corpora are not bundled, so end-to-end checks train on
//! text sampled from an HMM whose parameters are known exactly. Words have
//! small ambiguity classes, Zipf-like frequencies and tag-typical suffixes,
//! so unknown words in held-out text are both present and guessable.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{AnnotatedSentence, Cohort, Token};
use crate::decoder::SequenceModel;
use crate::error::{read_to_string, Error, Result};
use crate::ngram::{Label, StateSpace};
use crate::serial::{self, Lines};
use crate::tagset::{TagId, TagSet};

/// Shape of a randomly drawn HMM.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub n_tags: usize,
    pub vocabulary: usize,
    /// Largest ambiguity class.
    pub max_ambiguity: usize,
    pub mean_sentence_length: f64,
    /// Exponent of the rank-frequency law.
    pub zipf_exponent: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_tags: 10,
            vocabulary: 3000,
            max_ambiguity: 3,
            mean_sentence_length: 15.0,
            zipf_exponent: 1.0,
            seed: 1,
        }
    }
}

const SUFFIXES: [&str; 16] = [
    "ing", "ed", "s", "ly", "er", "ion", "al", "ic", "ous", "en", "ist", "ful", "ive", "ent", "um",
    "ix",
];
const ONSETS: &[u8] = b"bdfgklmnprstvz";
const VOWELS: &[u8] = b"aeiou";

/// Emission distributions are stored per word: `P(word | tag)` for every
/// tag in the word's ambiguity class.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticHmm {
    tagset: TagSet,
    /// `P(c | a, b)` indexed `(a * L + b) * L + c`, boundary last.
    transitions: Vec<f64>,
    words: Vec<(String, Vec<(TagId, f64)>)>,
    index: HashMap<String, usize>,
}

impl SyntheticHmm {
    pub fn random(spec: &SynthSpec) -> Result<Self> {
        if spec.n_tags == 0 || spec.vocabulary < spec.n_tags {
            return Err(Error::invalid("vocabulary", "needs at least one word per tag"));
        }
        if spec.max_ambiguity == 0 || spec.mean_sentence_length < 1.0 {
            return Err(Error::invalid(
                "synth",
                "ambiguity and sentence length must be at least 1",
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let n = spec.n_tags;
        let l = n + 1;
        let tagset = TagSet::from_symbols((0..n).map(|i| format!("T{i}")));

        let end = 1.0 / spec.mean_sentence_length;
        let mut transitions = vec![0.0; l * l * l];
        for a in 0..l {
            for b in 0..l {
                let row = &mut transitions[(a * l + b) * l..(a * l + b + 1) * l];
                let weights: Vec<f64> = (0..n).map(|_| rng.gen::<f64>().powi(4) + 1e-3).collect();
                let total: f64 = weights.iter().sum();
                let start = a == n && b == n;
                let keep = if start { 1.0 } else { 1.0 - end };
                for (c, w) in weights.iter().enumerate() {
                    row[c] = keep * w / total;
                }
                row[n] = if start { 0.0 } else { end };
            }
        }

        // ambiguity classes: the first `n` words cover every tag once
        let mut classes: Vec<Vec<TagId>> = Vec::with_capacity(spec.vocabulary);
        for w in 0..spec.vocabulary {
            let main = if w < n { w } else { rng.gen_range(0..n) };
            let mut class = vec![TagId(main as u32)];
            let mut extra = 0;
            while extra + 1 < spec.max_ambiguity.min(n) && rng.gen_bool(0.35) {
                extra += 1;
                let t = TagId(rng.gen_range(0..n) as u32);
                if !class.contains(&t) {
                    class.push(t);
                }
            }
            classes.push(class);
        }

        let mut seen = BTreeSet::new();
        let mut surfaces = Vec::with_capacity(spec.vocabulary);
        for class in &classes {
            let main = class[0].index();
            let suffix = if rng.gen_bool(0.8) {
                SUFFIXES[main % SUFFIXES.len()]
            } else {
                SUFFIXES[rng.gen_range(0..SUFFIXES.len())]
            };
            loop {
                let syllables = rng.gen_range(1..=3);
                let mut stem = String::new();
                for _ in 0..syllables {
                    stem.push(ONSETS[rng.gen_range(0..ONSETS.len())] as char);
                    stem.push(VOWELS[rng.gen_range(0..VOWELS.len())] as char);
                }
                let surface = format!("{stem}{suffix}");
                if seen.insert(surface.clone()) {
                    surfaces.push(surface);
                    break;
                }
            }
        }

        // P(word | tag) proportional to the word's Zipf weight and a random
        // share of it for each tag in its class
        let mut mass = vec![0.0; n];
        let mut raw: Vec<Vec<(TagId, f64)>> = Vec::with_capacity(spec.vocabulary);
        for (rank, class) in classes.iter().enumerate() {
            let zipf = 1.0 / ((rank + 1) as f64).powf(spec.zipf_exponent);
            let shares: Vec<f64> = (0..class.len())
                .map(|i| if i == 0 { 1.0 } else { rng.gen_range(0.05..0.8) })
                .collect();
            let entry: Vec<(TagId, f64)> = class
                .iter()
                .zip(&shares)
                .map(|(&t, s)| {
                    mass[t.index()] += zipf * s;
                    (t, zipf * s)
                })
                .collect();
            raw.push(entry);
        }
        let words = surfaces
            .into_iter()
            .zip(raw)
            .map(|(surface, mut entry)| {
                for (t, p) in &mut entry {
                    *p /= mass[t.index()];
                }
                entry.sort_by_key(|e| e.0);
                (surface, entry)
            })
            .collect();
        Self::new(tagset, transitions, words)
    }

    fn new(
        tagset: TagSet,
        transitions: Vec<f64>,
        words: Vec<(String, Vec<(TagId, f64)>)>,
    ) -> Result<Self> {
        let n = tagset.len();
        let l = n + 1;
        let bad = |m: String| Error::invalid("hmm", m);
        for a in 0..l {
            for b in 0..l {
                if b == n && a != n {
                    continue;
                }
                let sum: f64 = transitions[(a * l + b) * l..(a * l + b + 1) * l].iter().sum();
                if (sum - 1.0).abs() > 1e-9 {
                    return Err(bad(format!("transition row ({a}, {b}) sums to {sum}")));
                }
            }
        }
        let mut per_tag = vec![0.0; n];
        let mut index = HashMap::with_capacity(words.len());
        for (i, (surface, entry)) in words.iter().enumerate() {
            if index.insert(surface.clone(), i).is_some() {
                return Err(bad(format!("word `{surface}` listed twice")));
            }
            for &(t, p) in entry {
                per_tag[t.index()] += p;
            }
        }
        for (t, sum) in per_tag.iter().enumerate() {
            if (sum - 1.0).abs() > 1e-9 {
                return Err(bad(format!("emissions of tag {} sum to {sum}", tagset.symbol(TagId(t as u32)))));
            }
        }
        Ok(SyntheticHmm {
            tagset,
            transitions,
            words,
            index,
        })
    }

    pub fn tagset(&self) -> &TagSet {
        &self.tagset
    }

    pub fn vocabulary(&self) -> usize {
        self.words.len()
    }

    /// Ambiguity class of a word, or `None` if it is not in the vocabulary.
    pub fn class_of(&self, surface: &str) -> Option<Vec<TagId>> {
        self.index
            .get(surface)
            .map(|&i| self.words[i].1.iter().map(|e| e.0).collect())
    }

    fn row(&self, a: usize, b: usize) -> &[f64] {
        let l = self.tagset.len() + 1;
        &self.transitions[(a * l + b) * l..(a * l + b + 1) * l]
    }

    /// Samples sentences until at least `words` tokens have been produced.
    /// Sentences are cut at 200 tokens.
    pub fn generate(&self, words: usize, seed: u64) -> Result<Vec<AnnotatedSentence>> {
        let n = self.tagset.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut by_tag: Vec<(Vec<usize>, Vec<f64>)> = vec![(Vec::new(), Vec::new()); n];
        for (i, (_, entry)) in self.words.iter().enumerate() {
            for &(t, p) in entry {
                by_tag[t.index()].0.push(i);
                by_tag[t.index()].1.push(p);
            }
        }
        let emit: Vec<(Vec<usize>, WeightedIndex<f64>)> = by_tag
            .into_iter()
            .map(|(ids, ps)| {
                let dist = WeightedIndex::new(&ps)
                    .map_err(|e| Error::invalid("hmm", format!("emission table: {e}")))?;
                Ok((ids, dist))
            })
            .collect::<Result<_>>()?;
        let l = n + 1;
        let mut rows: HashMap<(usize, usize), WeightedIndex<f64>> = HashMap::new();
        let mut corpus = Vec::new();
        let mut produced = 0;
        while produced < words {
            let (mut a, mut b) = (n, n);
            let mut tokens = Vec::new();
            let mut gold = Vec::new();
            while tokens.len() < 200 {
                let dist = match rows.get(&(a, b)) {
                    Some(d) => d,
                    None => {
                        let d = WeightedIndex::new(self.row(a, b))
                            .map_err(|e| Error::invalid("hmm", format!("transition row: {e}")))?;
                        rows.entry((a, b)).or_insert(d)
                    }
                };
                let c = dist.sample(&mut rng);
                debug_assert!(c < l);
                if c == n {
                    break;
                }
                let (ids, d) = &emit[c];
                let w = ids[d.sample(&mut rng)];
                tokens.push(Token::new(self.words[w].0.clone()));
                gold.push(TagId(c as u32));
                (a, b) = (b, c);
            }
            produced += tokens.len();
            corpus.push(AnnotatedSentence::new(tokens, gold));
        }
        Ok(corpus)
    }

    /// Cohorts whose candidates are each word's ambiguity class.
    pub fn cohorts(&self, sentence: &AnnotatedSentence) -> Result<Vec<Cohort>> {
        sentence
            .tokens
            .iter()
            .map(|tok| {
                let class = self.class_of(&tok.surface).ok_or_else(|| {
                    Error::invalid("hmm", format!("word `{}` is not in the vocabulary", tok.surface))
                })?;
                Ok(Cohort::new(tok.clone(), class))
            })
            .collect()
    }

    pub const HEADER: &'static str = "ambitag-hmm v1";

    pub fn to_text(&self) -> String {
        let n = self.tagset.len();
        let l = n + 1;
        let name = |i: usize| if i == n { "<s>" } else { self.tagset.symbol(TagId(i as u32)) };
        let mut out = String::new();
        let _ = writeln!(out, "{}", Self::HEADER);
        let _ = write!(out, "tags {}", n);
        for tag in self.tagset.iter() {
            let _ = write!(out, " {}", tag.symbol);
        }
        out.push('\n');
        let nonzero: Vec<usize> = (0..self.transitions.len())
            .filter(|&i| self.transitions[i] > 0.0)
            .collect();
        let _ = writeln!(out, "transitions {}", nonzero.len());
        for i in nonzero {
            let (ab, c) = (i / l, i % l);
            let _ = writeln!(
                out,
                "t {} {} {} {}",
                name(ab / l),
                name(ab % l),
                name(c),
                serial::float(self.transitions[i])
            );
        }
        let _ = writeln!(out, "words {}", self.words.len());
        for (surface, entry) in &self.words {
            let _ = write!(out, "w {}", serial::escape(surface));
            for (t, p) in entry {
                let _ = write!(out, " {}={}", self.tagset.symbol(*t), serial::float(*p));
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str, source_name: &str) -> Result<Self> {
        let mut lines = Lines::new(text, source_name);
        lines.expect_exact(Self::HEADER)?;
        let line = lines.next_line()?;
        let mut parts = line.split_whitespace();
        if parts.next() != Some("tags") {
            return Err(lines.error("expected `tags` line"));
        }
        let n: usize = lines.int(parts.next().unwrap_or(""))?;
        let symbols: Vec<&str> = parts.collect();
        if symbols.len() != n {
            return Err(lines.error(format!("`tags` announces {n} tags, lists {}", symbols.len())));
        }
        let tagset = TagSet::from_symbols(symbols.iter().copied());
        if tagset.len() != n {
            return Err(lines.error("duplicate tag symbols"));
        }
        let l = n + 1;
        let index = |lines: &Lines, s: &str| -> Result<usize> {
            if s == "<s>" {
                Ok(n)
            } else {
                tagset
                    .get(s)
                    .map(TagId::index)
                    .ok_or_else(|| lines.error(format!("unknown tag `{s}`")))
            }
        };
        let count: usize = {
            let f = lines.fields("transitions", 1)?;
            lines.int(f[0])?
        };
        let mut transitions = vec![0.0; l * l * l];
        for _ in 0..count {
            let f = lines.fields("t", 4)?;
            let (a, b, c) = (index(&lines, f[0])?, index(&lines, f[1])?, index(&lines, f[2])?);
            transitions[(a * l + b) * l + c] = lines.float(f[3])?;
        }
        let count: usize = {
            let f = lines.fields("words", 1)?;
            lines.int(f[0])?
        };
        let mut words = Vec::with_capacity(count);
        for _ in 0..count {
            let line = lines.next_line()?;
            let mut parts = line.split_whitespace();
            if parts.next() != Some("w") {
                return Err(lines.error("expected `w` line"));
            }
            let surface = serial::unescape(parts.next().unwrap_or(""))
                .map_err(|m| lines.error(m))?;
            let mut entry = Vec::new();
            for item in parts {
                let (sym, p) = item
                    .split_once('=')
                    .ok_or_else(|| lines.error(format!("expected TAG=PROB, found `{item}`")))?;
                let t = index(&lines, sym)?;
                if t == n {
                    return Err(lines.error("the boundary cannot emit words"));
                }
                entry.push((TagId(t as u32), lines.float(p)?));
            }
            if entry.is_empty() {
                return Err(lines.error(format!("word `{surface}` has no tags")));
            }
            entry.sort_by_key(|e| e.0);
            words.push((surface, entry));
        }
        Self::new(tagset, transitions, words)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&read_to_string(path)?, &path.display().to_string())
    }

    pub fn state_space(&self) -> StateSpace {
        StateSpace::new(self.tagset.len())
    }
}

impl SequenceModel for SyntheticHmm {
    fn n_tags(&self) -> usize {
        self.tagset.len()
    }

    fn transition(&self, prev2: Label, prev: Label, next: TagId) -> f64 {
        let n = self.tagset.len();
        let ix = |x: Label| x.map_or(n, TagId::index);
        self.row(ix(prev2), ix(prev))[next.index()]
    }

    fn emissions(&self, token: &Token, tags: &[TagId]) -> Result<Vec<f64>> {
        let i = *self.index.get(&token.surface).ok_or_else(|| {
            Error::invalid("hmm", format!("word `{}` is not in the vocabulary", token.surface))
        })?;
        let entry = &self.words[i].1;
        Ok(tags
            .iter()
            .map(|t| entry.iter().find(|e| e.0 == *t).map_or(0.0, |e| e.1))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthSpec {
        SynthSpec {
            n_tags: 4,
            vocabulary: 40,
            seed: 3,
            ..SynthSpec::default()
        }
    }

    #[test]
    fn random_model_is_normalized_and_deterministic() {
        let hmm = SyntheticHmm::random(&small()).unwrap();
        assert_eq!(hmm, SyntheticHmm::random(&small()).unwrap());
        assert_eq!(hmm.vocabulary(), 40);
        assert_ne!(hmm, SyntheticHmm::random(&SynthSpec { seed: 4, ..small() }).unwrap());
    }

    #[test]
    fn text_round_trip() {
        let hmm = SyntheticHmm::random(&small()).unwrap();
        let text = hmm.to_text();
        let again = SyntheticHmm::from_text(&text, "h").unwrap();
        assert_eq!(again, hmm);
        assert_eq!(again.to_text(), text);
        let broken: String = text
            .lines()
            .map(|l| {
                if l.starts_with("t <s> <s> T0 ") {
                    "t <s> <s> T0 9e-1".to_string()
                } else {
                    l.to_string()
                }
            })
            .collect::<Vec<_>>()
            .join("\n");
        assert!(SyntheticHmm::from_text(&broken, "h").is_err());
    }

    #[test]
    fn generated_text_follows_the_model() {
        let hmm = SyntheticHmm::random(&small()).unwrap();
        let corpus = hmm.generate(2000, 9).unwrap();
        let words: usize = corpus.iter().map(|s| s.len()).sum();
        assert!(words >= 2000);
        assert_eq!(corpus, hmm.generate(2000, 9).unwrap());
        for s in &corpus {
            assert!(!s.is_empty());
            for (tok, tag) in s.iter() {
                assert!(hmm.class_of(&tok.surface).unwrap().contains(&tag));
            }
            let cohorts = hmm.cohorts(s).unwrap();
            assert_eq!(cohorts.len(), s.len());
        }
    }

    #[test]
    fn hand_written_model() {
        let text = "ambitag-hmm v1\ntags 1 X\ntransitions 3\nt <s> <s> X 1\nt <s> X <s> 1\nt X X <s> 1\nwords 1\nw a X=1\n";
        let hmm = SyntheticHmm::from_text(text, "h").unwrap();
        let corpus = hmm.generate(5, 0).unwrap();
        assert!(corpus.iter().all(|s| s.len() == 1));
        let missing = text.replace("t X X <s> 1\n", "").replace("transitions 3", "transitions 2");
        assert!(SyntheticHmm::from_text(&missing, "h").is_err());
    }
}
