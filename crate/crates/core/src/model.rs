//! A trained tagger: lexicon plus transitions, with file persistence.

use std::collections::HashMap;
use std::path::Path;

use crate::corpus::{AnnotatedSentence, Cohort, Token};
use crate::decoder::SequenceModel;
use crate::error::{read_to_string, Error, Result};
use crate::lexmodel::{LexicalModel, SmoothingConfig};
use crate::ngram::{Label, TransitionModel};
use crate::serial::Lines;
use crate::tagset::{TagId, TagSet};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lexical: SmoothingConfig,
    /// Blend strength for tag trigrams.
    pub transition_strength: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lexical: SmoothingConfig::default(),
            transition_strength: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub lexicon: LexicalModel,
    pub transitions: TransitionModel,
}

impl Model {
    pub fn train(corpus: &[AnnotatedSentence], tagset: &TagSet, config: &TrainConfig) -> Result<Self> {
        Ok(Model {
            lexicon: LexicalModel::train(corpus, tagset, config.lexical.clone())?,
            transitions: TransitionModel::train(corpus, tagset, config.transition_strength)?,
        })
    }

    pub fn tagset(&self) -> &TagSet {
        self.lexicon.tagset()
    }

    pub fn config(&self) -> TrainConfig {
        TrainConfig {
            lexical: self.lexicon.config().clone(),
            transition_strength: self.transitions.strength(),
        }
    }

    /// Serialized form; parsing it back gives an identical model.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        self.lexicon.write_to(&mut out);
        self.transitions.write_to(&mut out, self.lexicon.tagset());
        out
    }

    pub fn from_text(text: &str, source_name: &str) -> Result<Self> {
        let mut lines = Lines::new(text, source_name);
        let lexicon = LexicalModel::read_from(&mut lines)?;
        let transitions = TransitionModel::read_from(&mut lines, lexicon.tagset())?;
        if let Some(extra) = lines.peek_line() {
            let extra = extra.to_string();
            lines.next_line()?;
            return Err(lines.error(format!("unexpected trailing line `{extra}`")));
        }
        Ok(Model { lexicon, transitions })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&read_to_string(path)?, &path.display().to_string())
    }

    /// Cohorts for a token sequence, with candidates from `source`.
    pub fn cohorts<'a>(
        &self,
        tokens: impl IntoIterator<Item = &'a Token>,
        source: &CandidateSource,
    ) -> Vec<Cohort> {
        tokens
            .into_iter()
            .map(|token| Cohort::new(token.clone(), source.candidates(self, token)))
            .collect()
    }
}

impl SequenceModel for Model {
    fn n_tags(&self) -> usize {
        self.lexicon.tagset().len()
    }

    fn transition(&self, prev2: Label, prev: Label, next: TagId) -> f64 {
        self.transitions.prob(prev2, prev, Some(next))
    }

    fn emissions(&self, token: &Token, tags: &[TagId]) -> Result<Vec<f64>> {
        let all = self.lexicon.converse_all(token)?;
        Ok(tags.iter().map(|t| all[t.index()]).collect())
    }
}

/// Where a word's candidate tags come from.
#[derive(Debug, Clone, Default)]
pub enum CandidateSource {
    /// The support of the lexicon's tag distribution.
    #[default]
    Lexicon,
    /// A fixed ambiguity-class dictionary; words it lacks fall back to the
    /// lexicon.
    Dictionary(Dictionary),
}

impl CandidateSource {
    pub fn candidates(&self, model: &Model, token: &Token) -> Vec<TagId> {
        match self {
            CandidateSource::Dictionary(d) => match d.get(&token.surface) {
                Some(tags) => tags.to_vec(),
                None => model.lexicon.candidate_tags(token),
            },
            CandidateSource::Lexicon => model.lexicon.candidate_tags(token),
        }
    }
}

/// Surface form to candidate tags, as produced by a morphological analyser.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Dictionary {
    entries: HashMap<String, Vec<TagId>>,
}

impl Dictionary {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `tags` to the entry of `surface`, keeping tag order sorted.
    pub fn insert(&mut self, surface: &str, tags: impl IntoIterator<Item = TagId>) {
        let entry = self.entries.entry(surface.to_string()).or_default();
        entry.extend(tags);
        entry.sort_unstable();
        entry.dedup();
    }

    /// Union of the candidate sets seen for each surface.
    pub fn from_cohorts(sentences: &[Vec<Cohort>]) -> Self {
        let mut d = Dictionary::new();
        for cohort in sentences.iter().flatten() {
            d.insert(&cohort.token.surface, cohort.candidates.iter().copied());
        }
        d
    }

    pub fn get(&self, surface: &str) -> Option<&[TagId]> {
        self.entries.get(surface).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
