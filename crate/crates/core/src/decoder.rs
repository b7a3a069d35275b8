//! Forward-backward posteriors, Viterbi decoding and threshold retention
//! over the tag-pair lattice of one sentence.
//!
//! Only states whose current tag is among the token's candidates are
//! active. Forward and backward values are rescaled to unit sum at each
//! position with a shared scale; Viterbi scores are kept as logarithms.
//! There is no transition into the closing boundary: the backward values
//! of the last position are all one.

use rayon::prelude::*;

use crate::corpus::{Cohort, Token};
use crate::error::{Error, Result};
use crate::ngram::{Label, StateId, StateSpace};
use crate::tagset::TagId;

/// What the decoder needs from a tagging model.
pub trait SequenceModel {
    /// Number of tags; label `n_tags` is the sentence boundary.
    fn n_tags(&self) -> usize;

    /// `P(next | prev2, prev)`.
    fn transition(&self, prev2: Label, prev: Label, next: TagId) -> f64;

    /// Emission weights for `tags` at `token`, in the same order. Any
    /// per-token constant factor cancels out of posteriors and Viterbi.
    fn emissions(&self, token: &Token, tags: &[TagId]) -> Result<Vec<f64>>;
}

impl<M: SequenceModel + ?Sized> SequenceModel for &M {
    fn n_tags(&self) -> usize {
        (**self).n_tags()
    }
    fn transition(&self, prev2: Label, prev: Label, next: TagId) -> f64 {
        (**self).transition(prev2, prev, next)
    }
    fn emissions(&self, token: &Token, tags: &[TagId]) -> Result<Vec<f64>> {
        (**self).emissions(token, tags)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    /// Best tag per word from the most probable tag sequence.
    #[default]
    Viterbi,
    /// Best tag per word from its own posterior, independently per word.
    Posterior,
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "viterbi" => Ok(Mode::Viterbi),
            "posterior" => Ok(Mode::Posterior),
            other => Err(Error::invalid(
                "mode",
                format!("`{other}` is neither `viterbi` nor `posterior`"),
            )),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Viterbi => "viterbi",
            Mode::Posterior => "posterior",
        })
    }
}

/// Candidates and emission weights for every position of a sentence.
struct Lattice {
    space: StateSpace,
    /// sorted, deduplicated candidate tags per position
    tags: Vec<Vec<TagId>>,
    emit: Vec<Vec<f64>>,
}

impl Lattice {
    fn build<M: SequenceModel>(model: &M, sentence: &[Cohort]) -> Result<Self> {
        let n_tags = model.n_tags();
        let mut tags = Vec::with_capacity(sentence.len());
        let mut emit = Vec::with_capacity(sentence.len());
        for cohort in sentence {
            let mut cands = cohort.candidates.clone();
            cands.sort_unstable();
            cands.dedup();
            if cands.is_empty() {
                return Err(Error::invalid(
                    "cohort",
                    format!("token `{}` has no candidate tags", cohort.token.surface),
                ));
            }
            if let Some(bad) = cands.iter().find(|t| t.index() >= n_tags) {
                return Err(Error::UnknownTag(bad.to_string()));
            }
            emit.push(model.emissions(&cohort.token, &cands)?);
            tags.push(cands);
        }
        Ok(Lattice {
            space: StateSpace::new(n_tags),
            tags,
            emit,
        })
    }

    fn len(&self) -> usize {
        self.tags.len()
    }

    /// Labels that can precede position `t`.
    fn prev_labels(&self, t: usize) -> Vec<Label> {
        if t == 0 {
            vec![None]
        } else {
            self.tags[t - 1].iter().map(|&x| Some(x)).collect()
        }
    }

    fn width(&self, t: usize) -> usize {
        self.tags[t].len()
    }

    /// Active states at `t`, in ascending global id: previous label outer,
    /// current tag inner.
    fn states(&self, t: usize) -> Vec<StateId> {
        let mut out = Vec::new();
        for prev in self.prev_labels(t) {
            for &cur in &self.tags[t] {
                out.push(self.space.state(prev, Some(cur)));
            }
        }
        out
    }
}

/// Scaled forward and backward tables for one sentence.
#[derive(Debug, Clone)]
pub struct Trellis {
    space: StateSpace,
    tags: Vec<Vec<TagId>>,
    states: Vec<Vec<StateId>>,
    alpha: Vec<Vec<f64>>,
    beta: Vec<Vec<f64>>,
    scales: Vec<f64>,
}

impl Trellis {
    pub fn new<M: SequenceModel>(model: &M, sentence: &[Cohort]) -> Result<Self> {
        Self::on(model, Lattice::build(model, sentence)?, sentence)
    }

    fn on<M: SequenceModel>(model: &M, lattice: Lattice, sentence: &[Cohort]) -> Result<Self> {
        let (alpha, scales) = forward(model, &lattice, sentence)?;
        let beta = backward(model, &lattice, &scales);
        Ok(Trellis {
            space: lattice.space,
            states: (0..lattice.len()).map(|t| lattice.states(t)).collect(),
            tags: lattice.tags,
            alpha,
            beta,
            scales,
        })
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn states(&self, t: usize) -> &[StateId] {
        &self.states[t]
    }

    pub fn candidates(&self, t: usize) -> &[TagId] {
        &self.tags[t]
    }

    pub fn alpha(&self, t: usize) -> &[f64] {
        &self.alpha[t]
    }

    pub fn beta(&self, t: usize) -> &[f64] {
        &self.beta[t]
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    /// Log of the summed weight of all paths.
    pub fn log_likelihood(&self) -> f64 {
        self.scales.iter().map(|c| c.ln()).sum()
    }

    /// State posteriors at `t`, aligned with [`Trellis::states`].
    pub fn gamma(&self, t: usize) -> Vec<f64> {
        let mut g: Vec<f64> = self.alpha[t]
            .iter()
            .zip(&self.beta[t])
            .map(|(a, b)| a * b)
            .collect();
        let total: f64 = g.iter().sum();
        for x in &mut g {
            *x /= total;
        }
        g
    }

    /// Tag posteriors at `t`, aligned with [`Trellis::candidates`].
    pub fn tag_posteriors(&self, t: usize) -> Vec<f64> {
        let width = self.tags[t].len();
        let mut out = vec![0.0; width];
        for (k, g) in self.gamma(t).into_iter().enumerate() {
            out[k % width] += g;
        }
        out
    }
}

fn dead(sentence: &[Cohort], t: usize) -> Error {
    Error::DeadLattice {
        position: t + 1,
        token: sentence[t].token.surface.clone(),
    }
}

fn forward<M: SequenceModel>(
    model: &M,
    lat: &Lattice,
    sentence: &[Cohort],
) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let mut alpha: Vec<Vec<f64>> = Vec::with_capacity(lat.len());
    let mut scales = Vec::with_capacity(lat.len());
    for t in 0..lat.len() {
        let width = lat.width(t);
        let mut cur = Vec::with_capacity(lat.prev_labels(t).len() * width);
        if t == 0 {
            for (j, &tag) in lat.tags[0].iter().enumerate() {
                cur.push(model.transition(None, None, tag) * lat.emit[0][j]);
            }
        } else {
            let before = lat.prev_labels(t - 1);
            let prev_width = lat.width(t - 1);
            for (i, &mid) in lat.tags[t - 1].iter().enumerate() {
                for (j, &tag) in lat.tags[t].iter().enumerate() {
                    let mut sum = 0.0;
                    for (h, &first) in before.iter().enumerate() {
                        let a = alpha[t - 1][h * prev_width + i];
                        if a != 0.0 {
                            sum += a * model.transition(first, Some(mid), tag);
                        }
                    }
                    cur.push(sum * lat.emit[t][j]);
                }
            }
        }
        let scale: f64 = cur.iter().sum();
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(dead(sentence, t));
        }
        for x in &mut cur {
            *x /= scale;
        }
        alpha.push(cur);
        scales.push(scale);
    }
    Ok((alpha, scales))
}

fn backward<M: SequenceModel>(model: &M, lat: &Lattice, scales: &[f64]) -> Vec<Vec<f64>> {
    let n = lat.len();
    let mut beta = vec![Vec::new(); n];
    if n == 0 {
        return beta;
    }
    beta[n - 1] = vec![1.0; lat.prev_labels(n - 1).len() * lat.width(n - 1)];
    for t in (0..n - 1).rev() {
        let width = lat.width(t);
        let next_width = lat.width(t + 1);
        let mut cur = Vec::with_capacity(lat.prev_labels(t).len() * width);
        for first in lat.prev_labels(t) {
            for (i, &mid) in lat.tags[t].iter().enumerate() {
                let mut sum = 0.0;
                for (j, &tag) in lat.tags[t + 1].iter().enumerate() {
                    sum += model.transition(first, Some(mid), tag)
                        * lat.emit[t + 1][j]
                        * beta[t + 1][i * next_width + j];
                }
                cur.push(sum / scales[t + 1]);
            }
        }
        beta[t] = cur;
    }
    beta
}

/// The single most probable tag sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct ViterbiPath {
    pub tags: Vec<TagId>,
    /// Natural log of the path weight.
    pub log_score: f64,
}

/// Exact ties keep the predecessor with the smallest state id, and the
/// final state with the smallest id.
pub fn viterbi<M: SequenceModel>(model: &M, sentence: &[Cohort]) -> Result<ViterbiPath> {
    let lat = Lattice::build(model, sentence)?;
    viterbi_on(model, &lat, sentence)
}

fn viterbi_on<M: SequenceModel>(model: &M, lat: &Lattice, sentence: &[Cohort]) -> Result<ViterbiPath> {
    let n = lat.len();
    if n == 0 {
        return Ok(ViterbiPath {
            tags: Vec::new(),
            log_score: 0.0,
        });
    }
    let mut delta: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut back: Vec<Vec<usize>> = Vec::with_capacity(n);
    for t in 0..n {
        let mut cur = Vec::new();
        let mut ptr = Vec::new();
        if t == 0 {
            for (j, &tag) in lat.tags[0].iter().enumerate() {
                cur.push((model.transition(None, None, tag) * lat.emit[0][j]).ln());
                ptr.push(0);
            }
        } else {
            let before = lat.prev_labels(t - 1);
            let prev_width = lat.width(t - 1);
            for (i, &mid) in lat.tags[t - 1].iter().enumerate() {
                for (j, &tag) in lat.tags[t].iter().enumerate() {
                    let mut best = f64::NEG_INFINITY;
                    let mut arg = 0;
                    for (h, &first) in before.iter().enumerate() {
                        let k = h * prev_width + i;
                        let score = delta[t - 1][k] + model.transition(first, Some(mid), tag).ln();
                        if score > best {
                            best = score;
                            arg = k;
                        }
                    }
                    cur.push(best + lat.emit[t][j].ln());
                    ptr.push(arg);
                }
            }
        }
        if cur.iter().all(|&d| d == f64::NEG_INFINITY) {
            return Err(dead(sentence, t));
        }
        delta.push(cur);
        back.push(ptr);
    }
    let last = &delta[n - 1];
    let mut k = 0;
    for (s, &d) in last.iter().enumerate() {
        if d > last[k] {
            k = s;
        }
    }
    let log_score = last[k];
    let mut tags = vec![TagId(0); n];
    for t in (0..n).rev() {
        tags[t] = lat.tags[t][k % lat.width(t)];
        k = back[t][k];
    }
    Ok(ViterbiPath { tags, log_score })
}

/// Posteriors and the Viterbi tag for one word, before thresholding.
#[derive(Debug, Clone, PartialEq)]
pub struct WordPosterior {
    /// Candidate tags with their posteriors, in tag order.
    pub posteriors: Vec<(TagId, f64)>,
    pub viterbi_tag: TagId,
    /// Posterior argmax; ties go to the lower tag index.
    pub posterior_tag: TagId,
}

impl WordPosterior {
    pub fn posterior(&self, tag: TagId) -> f64 {
        self.posteriors
            .iter()
            .find(|(t, _)| *t == tag)
            .map_or(0.0, |&(_, p)| p)
    }

    pub fn best(&self, mode: Mode) -> TagId {
        match mode {
            Mode::Viterbi => self.viterbi_tag,
            Mode::Posterior => self.posterior_tag,
        }
    }

    /// Tags with posterior at least `threshold`, plus the mode's best tag,
    /// most probable first.
    pub fn retain(&self, threshold: f64, mode: Mode) -> Vec<TagId> {
        let best = self.best(mode);
        let mut kept: Vec<(TagId, f64)> = self
            .posteriors
            .iter()
            .copied()
            .filter(|&(t, p)| p >= threshold || t == best)
            .collect();
        kept.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        kept.into_iter().map(|(t, _)| t).collect()
    }
}

/// Everything needed to apply any threshold to a sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub words: Vec<WordPosterior>,
    pub viterbi_log_score: f64,
    pub log_likelihood: f64,
}

impl Decoded {
    pub fn retain(&self, threshold: f64, mode: Mode) -> TaggingResult {
        TaggingResult {
            retained: self
                .words
                .iter()
                .map(|w| w.retain(threshold, mode))
                .collect(),
            threshold,
            mode,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaggingResult {
    pub retained: Vec<Vec<TagId>>,
    pub threshold: f64,
    pub mode: Mode,
}

impl TaggingResult {
    /// Writes the retained sets into the cohorts.
    pub fn apply(&self, sentence: &mut [Cohort]) {
        for (cohort, kept) in sentence.iter_mut().zip(&self.retained) {
            cohort.retained = kept.clone();
        }
    }
}

pub fn decode<M: SequenceModel>(model: &M, sentence: &[Cohort]) -> Result<Decoded> {
    let lat = Lattice::build(model, sentence)?;
    let path = viterbi_on(model, &lat, sentence)?;
    let trellis = Trellis::on(model, lat, sentence)?;
    let words = (0..trellis.len())
        .map(|t| {
            let tags = trellis.candidates(t);
            let post = trellis.tag_posteriors(t);
            let mut arg = 0;
            for (k, &p) in post.iter().enumerate() {
                if p > post[arg] {
                    arg = k;
                }
            }
            WordPosterior {
                posteriors: tags.iter().copied().zip(post.iter().copied()).collect(),
                viterbi_tag: path.tags[t],
                posterior_tag: tags[arg],
            }
        })
        .collect();
    Ok(Decoded {
        words,
        viterbi_log_score: path.log_score,
        log_likelihood: trellis.log_likelihood(),
    })
}

pub fn check_threshold(threshold: f64) -> Result<()> {
    if (0.0..=1.0).contains(&threshold) {
        Ok(())
    } else {
        Err(Error::invalid("threshold", format!("{threshold} is outside [0, 1]")))
    }
}

pub fn tag_with_threshold<M: SequenceModel>(
    model: &M,
    sentence: &[Cohort],
    threshold: f64,
    mode: Mode,
) -> Result<TaggingResult> {
    check_threshold(threshold)?;
    Ok(decode(model, sentence)?.retain(threshold, mode))
}

/// Decodes sentences in parallel; results keep input order.
pub fn decode_all<M: SequenceModel + Sync>(model: &M, sentences: &[Vec<Cohort>]) -> Vec<Result<Decoded>> {
    sentences.par_iter().map(|s| decode(model, s)).collect()
}
