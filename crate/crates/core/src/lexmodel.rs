//! Lexical probabilities from a reverse-suffix trie.
//!
//! Every training word is inserted spelled backwards, so words sharing a
//! suffix share a path from the root. Each node aggregates the tag counts
//! of all words below it; word-terminal nodes additionally keep the word's
//! own counts. A word's tag distribution is obtained by blending counts
//! along the path with [`blend`]:
//!
//! ```text
//! P_node(x) = (c(node, x) + k * P_parent(x)) / (c(node) + k)
//! ```
//!
//! starting from the uniform distribution above the root. Known words use
//! their own counts and the first `known_lookup_levels` branching
//! ancestors; unknown words use the longest matching suffix and every
//! branching node above it, then mix in the distribution of their
//! orthographic class (capitalized, all-caps, or infrequent words).
//!
//! The decoder does not use `P(tag | word)` directly but the converse
//! lexical probability `P(tag | word) / P(tag)`, which differs from
//! `P(word | tag)` only by the factor `P(word)`. That factor is constant
//! across the tags of one position and cancels in both posteriors and the
//! Viterbi argmax.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use crate::corpus::{AnnotatedSentence, Shape, Token};
use crate::error::{Error, Result};
use crate::serial::{self, Lines};
use crate::tagset::{TagClass, TagId, TagSet};

#[derive(Debug, Clone, PartialEq)]
pub struct SmoothingConfig {
    /// Blend strength `k`; 0 disables smoothing.
    pub strength: f64,
    /// Branching ancestors consulted for known words.
    pub known_lookup_levels: usize,
    /// Words seen at most this often feed the infrequent-word distribution.
    pub infrequent_cutoff: u64,
    /// Words seen at least this often are treated as known.
    pub known_threshold: u64,
    /// Tags with probability at or below this are not candidates.
    pub support_epsilon: f64,
    /// Weight of the orthographic-class distribution for unknown words.
    pub unknown_class_weight: f64,
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        SmoothingConfig {
            strength: 1.0,
            known_lookup_levels: 2,
            infrequent_cutoff: 3,
            known_threshold: 1,
            support_epsilon: 0.0,
            unknown_class_weight: 0.5,
        }
    }
}

impl SmoothingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.strength >= 0.0 && self.strength.is_finite()) {
            return Err(Error::invalid("k-lex", "must be a finite non-negative number"));
        }
        if !(0.0..=1.0).contains(&self.unknown_class_weight) {
            return Err(Error::invalid("unknown-class-weight", "must lie in [0, 1]"));
        }
        if !(0.0..1.0).contains(&self.support_epsilon) {
            return Err(Error::invalid("support-epsilon", "must lie in [0, 1)"));
        }
        if self.known_threshold == 0 {
            return Err(Error::invalid("known-threshold", "must be at least 1"));
        }
        Ok(())
    }
}

/// Sparse tag counts, sorted by tag.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TagCounts {
    entries: Vec<(TagId, u64)>,
    total: u64,
}

impl TagCounts {
    pub fn add(&mut self, tag: TagId, n: u64) {
        match self.entries.binary_search_by_key(&tag, |e| e.0) {
            Ok(i) => self.entries[i].1 += n,
            Err(i) => self.entries.insert(i, (tag, n)),
        }
        self.total += n;
    }

    pub fn merge(&mut self, other: &TagCounts) {
        for &(tag, n) in &other.entries {
            self.add(tag, n);
        }
    }

    pub fn get(&self, tag: TagId) -> u64 {
        self.entries
            .binary_search_by_key(&tag, |e| e.0)
            .map(|i| self.entries[i].1)
            .unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = (TagId, u64)> + '_ {
        self.entries.iter().copied()
    }
}

/// One blending step: `(c(x) + k * parent(x)) / (c + k)` for every `x` in
/// `support`, zero elsewhere. With no counts and `k = 0` the parent is
/// returned (restricted to `support`).
pub fn blend(counts: &TagCounts, parent: &[f64], strength: f64, support: &[TagId]) -> Vec<f64> {
    let denom = counts.total() as f64 + strength;
    let mut out = vec![0.0; parent.len()];
    if denom == 0.0 {
        for &tag in support {
            out[tag.index()] = parent[tag.index()];
        }
        return out;
    }
    for &tag in support {
        out[tag.index()] = strength * parent[tag.index()];
    }
    for (tag, n) in counts.iter() {
        out[tag.index()] += n as f64;
    }
    for &tag in support {
        out[tag.index()] /= denom;
    }
    out
}

fn uniform(n_tags: usize, support: &[TagId]) -> Vec<f64> {
    let mut out = vec![0.0; n_tags];
    if !support.is_empty() {
        let p = 1.0 / support.len() as f64;
        for &tag in support {
            out[tag.index()] = p;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuffixTrieNode {
    /// Character consumed from the word end to reach this node; `None` at
    /// the root.
    pub ch: Option<char>,
    pub parent: Option<u32>,
    pub children: BTreeMap<char, u32>,
    /// Counts of the word ending exactly here; `None` unless word-terminal.
    pub own: Option<TagCounts>,
    /// Counts of every word whose reversed spelling passes through here.
    pub aggregate: TagCounts,
}

impl SuffixTrieNode {
    fn new(ch: Option<char>, parent: Option<u32>) -> Self {
        SuffixTrieNode {
            ch,
            parent,
            children: BTreeMap::new(),
            own: None,
            aggregate: TagCounts::default(),
        }
    }

    pub fn is_branching(&self) -> bool {
        self.children.len() >= 2 || self.own.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ClassDistribution {
    Capitalized,
    AllCaps,
    Infrequent,
}

impl ClassDistribution {
    pub const ALL: [ClassDistribution; 3] = [
        ClassDistribution::Capitalized,
        ClassDistribution::AllCaps,
        ClassDistribution::Infrequent,
    ];

    fn for_shape(shape: Shape) -> Self {
        match shape {
            Shape::Capitalized => ClassDistribution::Capitalized,
            Shape::AllCaps => ClassDistribution::AllCaps,
            Shape::Lower | Shape::Other => ClassDistribution::Infrequent,
        }
    }

    fn name(self) -> &'static str {
        match self {
            ClassDistribution::Capitalized => "capitalized",
            ClassDistribution::AllCaps => "all-caps",
            ClassDistribution::Infrequent => "infrequent",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LexicalModel {
    tagset: TagSet,
    config: SmoothingConfig,
    nodes: Vec<SuffixTrieNode>,
    /// surface -> terminal node
    terminals: HashMap<String, u32>,
    /// Exact-match table for tokens annotated with punctuation tags.
    punctuation: BTreeMap<String, TagCounts>,
    /// P(tag | class of tag): word tags sum to 1, punctuation tags sum to 1.
    priors: Vec<f64>,
    class_dists: [Vec<f64>; 3],
}

const ROOT: u32 = 0;

impl LexicalModel {
    pub fn train(
        corpus: &[AnnotatedSentence],
        tagset: &TagSet,
        config: SmoothingConfig,
    ) -> Result<Self> {
        config.validate()?;
        let mut words: BTreeMap<&str, TagCounts> = BTreeMap::new();
        let mut punctuation: BTreeMap<String, TagCounts> = BTreeMap::new();
        for sentence in corpus {
            for (token, tag) in sentence.iter() {
                if tag.index() >= tagset.len() {
                    return Err(Error::UnknownTag(tag.to_string()));
                }
                match tagset.class(tag) {
                    TagClass::Word => words.entry(&token.surface).or_default().add(tag, 1),
                    TagClass::Punctuation => punctuation
                        .entry(token.surface.clone())
                        .or_default()
                        .add(tag, 1),
                }
            }
        }

        let mut model = LexicalModel {
            tagset: tagset.clone(),
            nodes: vec![SuffixTrieNode::new(None, None)],
            terminals: HashMap::new(),
            punctuation,
            priors: Vec::new(),
            class_dists: Default::default(),
            config,
        };
        for (surface, counts) in &words {
            model.insert(surface, counts);
        }
        model.renumber_depth_first();

        let mut class_counts: [TagCounts; 3] = Default::default();
        for (surface, counts) in &words {
            let shape = Shape::of(surface);
            if shape == Shape::Capitalized {
                class_counts[0].merge(counts);
            }
            if shape == Shape::AllCaps {
                class_counts[1].merge(counts);
            }
            if counts.total() <= model.config.infrequent_cutoff {
                class_counts[2].merge(counts);
            }
        }
        model.derive_distributions(&class_counts);
        Ok(model)
    }

    fn insert(&mut self, surface: &str, counts: &TagCounts) {
        let mut node = ROOT;
        self.nodes[ROOT as usize].aggregate.merge(counts);
        for ch in surface.chars().rev() {
            node = match self.nodes[node as usize].children.get(&ch) {
                Some(&child) => child,
                None => {
                    let id = self.nodes.len() as u32;
                    self.nodes.push(SuffixTrieNode::new(Some(ch), Some(node)));
                    self.nodes[node as usize].children.insert(ch, id);
                    id
                }
            };
            self.nodes[node as usize].aggregate.merge(counts);
        }
        self.nodes[node as usize]
            .own
            .get_or_insert_with(TagCounts::default)
            .merge(counts);
        self.terminals.insert(surface.to_string(), node);
    }

    /// Node ids in depth-first order, children by character, so that the
    /// trie dump and reload produce identical arenas.
    fn renumber_depth_first(&mut self) {
        let mut order = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![ROOT];
        while let Some(id) = stack.pop() {
            order.push(id);
            stack.extend(self.nodes[id as usize].children.values().rev());
        }
        let mut new_id = vec![0u32; self.nodes.len()];
        for (new, &old) in order.iter().enumerate() {
            new_id[old as usize] = new as u32;
        }
        let mut old_nodes: Vec<Option<SuffixTrieNode>> =
            std::mem::take(&mut self.nodes).into_iter().map(Some).collect();
        self.nodes = order
            .iter()
            .map(|&old| {
                let mut node = old_nodes[old as usize].take().expect("visited once");
                node.parent = node.parent.map(|p| new_id[p as usize]);
                for child in node.children.values_mut() {
                    *child = new_id[*child as usize];
                }
                node
            })
            .collect();
        for id in self.terminals.values_mut() {
            *id = new_id[*id as usize];
        }
    }

    fn derive_distributions(&mut self, class_counts: &[TagCounts; 3]) {
        let n = self.tagset.len();
        let k = self.config.strength;
        let words = self.tagset.word_tags();
        let puncts = self.tagset.punctuation_tags();

        let word_priors = blend(&self.nodes[ROOT as usize].aggregate, &uniform(n, words), k, words);
        let mut punct_total = TagCounts::default();
        for counts in self.punctuation.values() {
            punct_total.merge(counts);
        }
        let punct_priors = blend(&punct_total, &uniform(n, puncts), k, puncts);
        let mut priors = word_priors;
        for &tag in puncts {
            priors[tag.index()] = punct_priors[tag.index()];
        }
        for (i, counts) in class_counts.iter().enumerate() {
            self.class_dists[i] = blend(counts, &priors, k, words);
        }
        self.priors = priors;
    }

    pub fn tagset(&self) -> &TagSet {
        &self.tagset
    }

    pub fn config(&self) -> &SmoothingConfig {
        &self.config
    }

    pub fn priors(&self) -> &[f64] {
        &self.priors
    }

    pub fn class_distribution(&self, class: ClassDistribution) -> &[f64] {
        &self.class_dists[class as usize]
    }

    pub fn nodes(&self) -> &[SuffixTrieNode] {
        &self.nodes
    }

    pub fn root(&self) -> &SuffixTrieNode {
        &self.nodes[ROOT as usize]
    }

    /// Number of training occurrences of `surface` (word or punctuation).
    pub fn word_count(&self, surface: &str) -> u64 {
        let word = self
            .terminals
            .get(surface)
            .and_then(|&n| self.nodes[n as usize].own.as_ref())
            .map_or(0, TagCounts::total);
        let punct = self.punctuation.get(surface).map_or(0, TagCounts::total);
        word + punct
    }

    /// Whether `surface` occurred in the training data at all.
    pub fn is_seen(&self, surface: &str) -> bool {
        self.word_count(surface) > 0
    }

    /// Node reached by following the reversed spelling of `surface`.
    pub fn find(&self, surface: &str) -> Option<&SuffixTrieNode> {
        let mut node = ROOT;
        for ch in surface.chars().rev() {
            node = *self.nodes[node as usize].children.get(&ch)?;
        }
        Some(&self.nodes[node as usize])
    }

    fn punctuation_counts(&self, surface: &str) -> Option<&TagCounts> {
        let punct = self.punctuation.get(surface)?;
        let word = self
            .terminals
            .get(surface)
            .and_then(|&n| self.nodes[n as usize].own.as_ref())
            .map_or(0, TagCounts::total);
        (punct.total() > word).then_some(punct)
    }

    /// `P(tag | word)` over the whole tag set. Word-like tokens get a
    /// distribution over word tags, punctuation over punctuation tags.
    pub fn tag_distribution(&self, token: &Token) -> Vec<f64> {
        let k = self.config.strength;
        let surface = token.surface.as_str();
        if let Some(counts) = self.punctuation_counts(surface) {
            return blend(counts, &self.priors, k, self.tagset.punctuation_tags());
        }
        let words = self.tagset.word_tags();
        if !surface.chars().any(char::is_alphanumeric)
            && !self.terminals.contains_key(surface)
            && !self.tagset.punctuation_tags().is_empty()
        {
            // unseen symbol string: punctuation prior
            let mut dist = vec![0.0; self.tagset.len()];
            for &tag in self.tagset.punctuation_tags() {
                dist[tag.index()] = self.priors[tag.index()];
            }
            return dist;
        }

        let known = self.terminals.get(surface).copied().filter(|&n| {
            self.nodes[n as usize]
                .own
                .as_ref()
                .is_some_and(|c| c.total() >= self.config.known_threshold)
        });
        match known {
            Some(terminal) => {
                let mut dist = self.word_priors();
                for counts in self.known_chain(terminal) {
                    dist = blend(counts, &dist, k, words);
                }
                dist
            }
            None => {
                let mut dist = self.word_priors();
                for counts in self.unknown_chain(surface) {
                    dist = blend(counts, &dist, k, words);
                }
                let w = self.config.unknown_class_weight;
                let class = &self.class_dists[ClassDistribution::for_shape(token.shape) as usize];
                for &tag in words {
                    let i = tag.index();
                    dist[i] = (1.0 - w) * dist[i] + w * class[i];
                }
                dist
            }
        }
    }

    fn word_priors(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.priors.len()];
        for &tag in self.tagset.word_tags() {
            out[tag.index()] = self.priors[tag.index()];
        }
        out
    }

    /// Counts to blend for a known word, most general first. The root is
    /// already folded into the priors.
    fn known_chain(&self, terminal: u32) -> Vec<&TagCounts> {
        let node = &self.nodes[terminal as usize];
        let mut chain = vec![node.own.as_ref().expect("terminal node")];
        let mut levels = 0;
        let mut cur = node.parent;
        while let Some(id) = cur {
            if id == ROOT || levels >= self.config.known_lookup_levels {
                break;
            }
            let n = &self.nodes[id as usize];
            if n.is_branching() {
                chain.push(&n.aggregate);
                levels += 1;
            }
            cur = n.parent;
        }
        chain.reverse();
        chain
    }

    /// Longest matching suffix and all branching nodes above it, most
    /// general first, root excluded.
    fn unknown_chain(&self, surface: &str) -> Vec<&TagCounts> {
        let mut path = Vec::new();
        let mut node = ROOT;
        for ch in surface.chars().rev() {
            match self.nodes[node as usize].children.get(&ch) {
                Some(&child) => {
                    node = child;
                    path.push(child);
                }
                None => break,
            }
        }
        let deepest = path.pop();
        let mut chain: Vec<&TagCounts> = path
            .into_iter()
            .map(|id| &self.nodes[id as usize])
            .filter(|n| n.is_branching())
            .map(|n| &n.aggregate)
            .collect();
        if let Some(id) = deepest {
            chain.push(&self.nodes[id as usize].aggregate);
        }
        chain
    }

    /// Converse lexical probabilities `P(tag | word) / P(tag)` for every
    /// tag, indexed by tag.
    pub fn converse_all(&self, token: &Token) -> Result<Vec<f64>> {
        let mut dist = self.tag_distribution(token);
        for (i, p) in dist.iter_mut().enumerate() {
            let prior = self.priors[i];
            if prior > 0.0 {
                *p /= prior;
            } else if *p > 0.0 {
                return Err(Error::InconsistentPrior(
                    self.tagset.symbol(TagId(i as u32)).to_string(),
                ));
            }
        }
        Ok(dist)
    }

    pub fn converse_lexical_prob(&self, token: &Token, tag: TagId) -> Result<f64> {
        let dist = self.tag_distribution(token);
        let (p, prior) = (dist[tag.index()], self.priors[tag.index()]);
        if prior > 0.0 {
            Ok(p / prior)
        } else if p > 0.0 {
            Err(Error::InconsistentPrior(self.tagset.symbol(tag).to_string()))
        } else {
            Ok(0.0)
        }
    }

    /// Tags whose probability exceeds the support epsilon, in tag order.
    pub fn candidate_tags(&self, token: &Token) -> Vec<TagId> {
        let eps = self.config.support_epsilon;
        self.tag_distribution(token)
            .iter()
            .enumerate()
            .filter(|&(_, &p)| p > eps)
            .map(|(i, _)| TagId(i as u32))
            .collect()
    }

    // ---- serialization ----

    pub const HEADER: &'static str = "ambitag-lex v1";

    pub fn write_to(&self, out: &mut String) {
        let c = &self.config;
        let _ = writeln!(out, "{}", Self::HEADER);
        let _ = writeln!(
            out,
            "config {} {} {} {} {} {}",
            serial::float(c.strength),
            c.known_lookup_levels,
            c.infrequent_cutoff,
            c.known_threshold,
            serial::float(c.support_epsilon),
            serial::float(c.unknown_class_weight),
        );
        let _ = writeln!(out, "tags {}", self.tagset.len());
        for tag in self.tagset.iter() {
            let _ = writeln!(out, "tag {}", tag.symbol);
        }
        for tag in self.tagset.iter() {
            let _ = writeln!(out, "prior {} {}", tag.symbol, serial::float(self.priors[tag.index.index()]));
        }
        for class in ClassDistribution::ALL {
            let dist = &self.class_dists[class as usize];
            let _ = write!(out, "class {}", class.name());
            for p in dist {
                let _ = write!(out, " {}", serial::float(*p));
            }
            out.push('\n');
        }
        let _ = writeln!(out, "punctuation {}", self.punctuation.len());
        for (surface, counts) in &self.punctuation {
            let _ = writeln!(out, "p {} {}", serial::escape(surface), write_counts(counts));
        }
        let _ = writeln!(out, "trie {}", self.nodes.len());
        self.dump_node(ROOT, 0, out);
    }

    fn dump_node(&self, id: u32, depth: usize, out: &mut String) {
        let node = &self.nodes[id as usize];
        let ch = node.ch.map_or("-".to_string(), |c| format!("{:x}", c as u32));
        let own = node.own.as_ref().map_or("-".to_string(), write_counts);
        let _ = writeln!(
            out,
            "n {depth} {ch} {own} {}",
            write_counts(&node.aggregate)
        );
        for &child in node.children.values() {
            self.dump_node(child, depth + 1, out);
        }
    }

    pub fn read_from(lines: &mut Lines<'_>) -> Result<Self> {
        lines.expect_exact(Self::HEADER)?;
        let f = lines.fields("config", 6)?;
        let config = SmoothingConfig {
            strength: lines.float(f[0])?,
            known_lookup_levels: lines.int(f[1])?,
            infrequent_cutoff: lines.int(f[2])?,
            known_threshold: lines.int(f[3])?,
            support_epsilon: lines.float(f[4])?,
            unknown_class_weight: lines.float(f[5])?,
        };
        let n: usize = {
            let f = lines.fields("tags", 1)?;
            lines.int(f[0])?
        };
        let mut symbols = Vec::with_capacity(n);
        for _ in 0..n {
            symbols.push(lines.fields("tag", 1)?[0].to_string());
        }
        let tagset = TagSet::from_symbols(symbols);
        if tagset.len() != n {
            return Err(lines.error("duplicate tag symbol"));
        }
        let mut priors = vec![0.0; n];
        for tag in tagset.iter() {
            let f = lines.fields("prior", 2)?;
            if f[0] != tag.symbol {
                return Err(lines.error(format!("expected prior for {}", tag.symbol)));
            }
            priors[tag.index.index()] = lines.float(f[1])?;
        }
        let mut class_dists: [Vec<f64>; 3] = Default::default();
        for class in ClassDistribution::ALL {
            let f = lines.fields("class", n + 1)?;
            if f[0] != class.name() {
                return Err(lines.error(format!("expected class {}", class.name())));
            }
            class_dists[class as usize] = f[1..]
                .iter()
                .map(|s| lines.float(s))
                .collect::<Result<_>>()?;
        }
        let count: usize = {
            let f = lines.fields("punctuation", 1)?;
            lines.int(f[0])?
        };
        let mut punctuation = BTreeMap::new();
        for _ in 0..count {
            let f = lines.fields("p", 2)?;
            let surface = serial::unescape(f[0]).map_err(|m| lines.error(m))?;
            let counts = read_counts(f[1], n).map_err(|m| lines.error(m))?;
            punctuation.insert(surface, counts);
        }
        let node_count: usize = {
            let f = lines.fields("trie", 1)?;
            lines.int(f[0])?
        };
        let mut nodes: Vec<SuffixTrieNode> = Vec::with_capacity(node_count);
        let mut stack: Vec<u32> = Vec::new();
        for _ in 0..node_count {
            let f = lines.fields("n", 4)?;
            let depth: usize = lines.int(f[0])?;
            let id = nodes.len() as u32;
            let (ch, parent) = if depth == 0 {
                if id != ROOT || f[1] != "-" {
                    return Err(lines.error("misplaced root node"));
                }
                (None, None)
            } else {
                if depth > stack.len() {
                    return Err(lines.error("trie depth skips a level"));
                }
                stack.truncate(depth);
                let code = u32::from_str_radix(f[1], 16).map_err(|_| lines.error("bad character code"))?;
                let ch = char::from_u32(code).ok_or_else(|| lines.error("bad character code"))?;
                let parent = *stack.last().expect("depth >= 1");
                if nodes[parent as usize].children.insert(ch, id).is_some() {
                    return Err(lines.error("duplicate child"));
                }
                (Some(ch), Some(parent))
            };
            let own = match f[2] {
                "-" => None,
                s => Some(read_counts(s, n).map_err(|m| lines.error(m))?),
            };
            let aggregate = read_counts(f[3], n).map_err(|m| lines.error(m))?;
            nodes.push(SuffixTrieNode {
                ch,
                parent,
                children: BTreeMap::new(),
                own,
                aggregate,
            });
            stack.push(id);
        }
        if nodes.is_empty() {
            return Err(lines.error("empty trie"));
        }

        let mut terminals = HashMap::new();
        for (id, node) in nodes.iter().enumerate() {
            if node.own.is_some() {
                let mut surface = String::new();
                let mut cur = Some(id as u32);
                while let Some(c) = cur {
                    let n = &nodes[c as usize];
                    if let Some(ch) = n.ch {
                        surface.push(ch);
                    }
                    cur = n.parent;
                }
                terminals.insert(surface, id as u32);
            }
        }
        config.validate()?;
        Ok(LexicalModel {
            tagset,
            config,
            nodes,
            terminals,
            punctuation,
            priors,
            class_dists,
        })
    }
}

fn write_counts(counts: &TagCounts) -> String {
    if counts.is_empty() {
        return "0".to_string();
    }
    let mut s = String::new();
    for (i, (tag, n)) in counts.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        let _ = write!(s, "{}:{}", tag.0, n);
    }
    s
}

fn read_counts(field: &str, n_tags: usize) -> std::result::Result<TagCounts, String> {
    let mut counts = TagCounts::default();
    if field == "0" {
        return Ok(counts);
    }
    for pair in field.split(',') {
        let (t, c) = pair
            .split_once(':')
            .ok_or_else(|| format!("bad count pair `{pair}`"))?;
        let t: u32 = t.parse().map_err(|_| format!("bad tag index `{t}`"))?;
        let c: u64 = c.parse().map_err(|_| format!("bad count `{c}`"))?;
        if t as usize >= n_tags {
            return Err(format!("tag index {t} out of range"));
        }
        counts.add(TagId(t), c);
    }
    Ok(counts)
}

#[cfg(test)]
mod tests {
    use super::*;

    const EPS: f64 = 1e-12;

    fn sentence(pairs: &[(&str, u32)]) -> AnnotatedSentence {
        AnnotatedSentence::new(
            pairs.iter().map(|(w, _)| Token::new(*w)).collect(),
            pairs.iter().map(|&(_, t)| TagId(t)).collect(),
        )
    }

    fn config(k: f64) -> SmoothingConfig {
        SmoothingConfig {
            strength: k,
            ..SmoothingConfig::default()
        }
    }

    #[test]
    fn blending_rule_hand_example() {
        // tags {A, B}; root A:3 B:1; node "s" A:0 B:2; k = 1
        let support = [TagId(0), TagId(1)];
        let mut root = TagCounts::default();
        root.add(TagId(0), 3);
        root.add(TagId(1), 1);
        let p_root = blend(&root, &uniform(2, &support), 1.0, &support);
        assert!((p_root[0] - 0.7).abs() < EPS);
        assert!((p_root[1] - 0.3).abs() < EPS);

        let mut s = TagCounts::default();
        s.add(TagId(1), 2);
        let p_s = blend(&s, &p_root, 1.0, &support);
        assert!((p_s[0] - 0.7 / 3.0).abs() < EPS);
        assert!((p_s[1] - 2.3 / 3.0).abs() < EPS);
    }

    #[test]
    fn converse_hand_example() {
        let ts = TagSet::from_symbols(["A", "B"]);
        let corpus = vec![sentence(&[("x", 0), ("y", 0), ("z", 0), ("u", 1)])];
        let mut model = LexicalModel::train(&corpus, &ts, config(1.0)).unwrap();
        // stand-in for the P(B | w) = 0.7667 estimate against prior 0.25
        model.priors = vec![0.75, 0.25];
        let a = 2.3 / 3.0 / model.priors[1];
        assert!((a - 3.066_666_666_666_667).abs() < 1e-12);
    }

    #[test]
    fn single_word_corpus() {
        let ts = TagSet::from_symbols(["N-NOM-SG"]);
        let model = LexicalModel::train(&[sentence(&[("walk", 0)])], &ts, config(1.0)).unwrap();
        let path: Vec<char> = {
            let mut node = model.find("walk").unwrap();
            let mut chars = vec![];
            while let Some(c) = node.ch {
                chars.push(c);
                node = &model.nodes[node.parent.unwrap() as usize];
            }
            chars
        };
        assert_eq!(path, vec!['w', 'a', 'l', 'k']);
        assert_eq!(model.nodes().len(), 5);
        assert!((model.priors()[0] - 1.0).abs() < EPS);
    }

    #[test]
    fn priors_are_relative_frequencies_without_smoothing() {
        let ts = TagSet::from_symbols(["A", "B"]);
        let corpus = vec![sentence(&[("a", 0), ("b", 0), ("c", 0), ("d", 1)])];
        let model = LexicalModel::train(&corpus, &ts, config(0.0)).unwrap();
        assert!((model.priors()[0] - 0.75).abs() < EPS);
        assert!((model.priors()[1] - 0.25).abs() < EPS);
    }

    #[test]
    fn empty_corpus_gives_uniform_priors() {
        let ts = TagSet::from_symbols(["A", "B", "C", "@comma"]);
        for k in [0.0, 1.0] {
            let model = LexicalModel::train(&[], &ts, config(k)).unwrap();
            for i in 0..3 {
                assert!((model.priors()[i] - 1.0 / 3.0).abs() < EPS);
            }
            assert!((model.priors()[3] - 1.0).abs() < EPS);
            // converse of a uniform model is unity
            for t in 0..3 {
                let a = model
                    .converse_lexical_prob(&Token::new("anything"), TagId(t))
                    .unwrap();
                assert!((a - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn unsmoothed_known_word() {
        let ts = TagSet::from_symbols(["T", "U"]);
        let words: Vec<_> = (0..100).map(|_| ("word", 0)).chain([("other", 1)]).collect();
        let model = LexicalModel::train(&[sentence(&words)], &ts, config(0.0)).unwrap();
        let dist = model.tag_distribution(&Token::new("word"));
        assert_eq!(dist[0], 1.0);
        assert_eq!(model.candidate_tags(&Token::new("word")), vec![TagId(0)]);
        assert_eq!(
            model.converse_lexical_prob(&Token::new("word"), TagId(1)).unwrap(),
            0.0
        );
    }

    #[test]
    fn unseen_word_without_suffix_match() {
        let ts = TagSet::from_symbols(["A", "B"]);
        let corpus = vec![sentence(&[("aa", 0), ("ab", 1), ("ba", 0)])];
        let cfg = SmoothingConfig {
            unknown_class_weight: 0.0,
            ..config(1.0)
        };
        let model = LexicalModel::train(&corpus, &ts, cfg).unwrap();
        // root A:2 B:1 blended with uniform, k = 1
        let dist = model.tag_distribution(&Token::new("zzz"));
        assert!((dist[0] - 2.5 / 4.0).abs() < EPS);
        assert!((dist[1] - 1.5 / 4.0).abs() < EPS);
    }

    #[test]
    fn unknown_words_get_every_word_tag() {
        let ts = TagSet::from_symbols(["A", "B", "C", "@fullstop"]);
        let corpus = vec![sentence(&[("walks", 0), ("talks", 0), ("run", 1), (".", 3)])];
        let model = LexicalModel::train(&corpus, &ts, config(1.0)).unwrap();
        assert_eq!(
            model.candidate_tags(&Token::new("balks")),
            vec![TagId(0), TagId(1), TagId(2)]
        );
        assert_eq!(model.candidate_tags(&Token::new(".")), vec![TagId(3)]);
        assert!(model.is_seen("."));
        assert!(!model.is_seen("balks"));
    }

    #[test]
    fn suffix_evidence_shifts_unknown_words() {
        let ts = TagSet::from_symbols(["N", "V"]);
        let corpus = vec![sentence(&[
            ("nation", 0),
            ("station", 0),
            ("relation", 0),
            ("run", 1),
            ("walk", 1),
            ("talk", 1),
        ])];
        let model = LexicalModel::train(&corpus, &ts, config(1.0)).unwrap();
        // priors 0.5/0.5; branching "n" (N:3 V:1) -> 0.7; "ation" (N:3)
        // -> (3 + 0.7) / 4 = 0.925; half-and-half with the infrequent-word
        // distribution (0.5) gives 0.7125.
        let d = model.tag_distribution(&Token::new("creation"));
        assert!((d[0] - 0.7125).abs() < EPS, "{d:?}");
        let d = model.tag_distribution(&Token::new("stalk"));
        assert!(d[1] > d[0], "{d:?}");
    }

    #[test]
    fn known_words_only_look_a_few_branching_points_up() {
        let ts = TagSet::from_symbols(["N", "V"]);
        // "xab" has branching ancestors "b" (children a, c) and root.
        let corpus = vec![sentence(&[("xab", 0), ("yab", 1), ("cb", 1), ("cb", 1)])];
        let levels = |l| SmoothingConfig {
            known_lookup_levels: l,
            ..config(1.0)
        };
        let m0 = LexicalModel::train(&corpus, &ts, levels(0)).unwrap();
        let m1 = LexicalModel::train(&corpus, &ts, levels(1)).unwrap();
        let support = ts.word_tags();
        let mut own = TagCounts::default();
        own.add(TagId(0), 1);
        let expect0 = blend(&own, m0.priors(), 1.0, support);
        assert_eq!(m0.tag_distribution(&Token::new("xab")), expect0);
        // one level: node "ab" (children x, y) sits between
        let ab = &m1.find("ab").unwrap().aggregate;
        let expect1 = blend(&own, &blend(ab, m1.priors(), 1.0, support), 1.0, support);
        assert_eq!(m1.tag_distribution(&Token::new("xab")), expect1);
    }

    #[test]
    fn class_distributions() {
        let ts = TagSet::from_symbols(["PROPER", "COMMON", "ABBR"]);
        let corpus = vec![sentence(&[
            ("Smith", 0),
            ("Jones", 0),
            ("dog", 1),
            ("dog", 1),
            ("dog", 1),
            ("dog", 1),
            ("NATO", 2),
        ])];
        let model = LexicalModel::train(&corpus, &ts, config(1.0)).unwrap();
        let cap = model.class_distribution(ClassDistribution::Capitalized);
        assert!(cap[0] > 0.6);
        let caps = model.class_distribution(ClassDistribution::AllCaps);
        assert!(caps[2] > 0.4);
        // dog is above the infrequent cutoff
        let inf = model.class_distribution(ClassDistribution::Infrequent);
        assert!(inf[1] < inf[0]);
        for class in ClassDistribution::ALL {
            let s: f64 = model.class_distribution(class).iter().sum();
            assert!((s - 1.0).abs() < EPS);
        }
        let d = model.tag_distribution(&Token::new("Brown"));
        assert!(d[0] > d[1]);
    }

    #[test]
    fn inconsistent_prior_is_reported() {
        let ts = TagSet::from_symbols(["A", "B"]);
        let mut model = LexicalModel::train(&[], &ts, config(1.0)).unwrap();
        model.priors = vec![1.0, 0.0];
        assert!(matches!(
            model.converse_lexical_prob(&Token::new("q"), TagId(1)),
            Err(Error::InconsistentPrior(_))
        ));
    }

    #[test]
    fn serialization_round_trip() {
        let ts = TagSet::from_symbols(["A", "B", "@comma"]);
        let corpus = vec![
            sentence(&[("Walk", 0), ("walks", 1), (",", 2), ("a b", 0)]),
            sentence(&[("ÉTÉ", 1), ("walk", 0), ("%x", 1)]),
        ];
        let model = LexicalModel::train(&corpus, &ts, config(0.7)).unwrap();
        let mut text = String::new();
        model.write_to(&mut text);
        let mut lines = Lines::new(&text, "model");
        let again = LexicalModel::read_from(&mut lines).unwrap();
        assert_eq!(model, again);
        let mut text2 = String::new();
        again.write_to(&mut text2);
        assert_eq!(text, text2);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn corpus_strategy() -> impl Strategy<Value = Vec<AnnotatedSentence>> {
            prop::collection::vec(
                prop::collection::vec(("[a-cA-C]{1,5}", 0u32..4), 1..8),
                0..6,
            )
            .prop_map(|sents| {
                sents
                    .into_iter()
                    .map(|pairs| {
                        let (words, tags): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
                        AnnotatedSentence::new(
                            words.into_iter().map(Token::new).collect(),
                            tags.into_iter().map(TagId).collect(),
                        )
                    })
                    .collect()
            })
        }

        fn tagset() -> TagSet {
            TagSet::from_symbols(["A", "B", "C", "D", "@comma"])
        }

        proptest! {
            #[test]
            fn distributions_normalize(
                corpus in corpus_strategy(),
                query in "[a-dA-D]{1,6}",
                k in 0.0f64..5.0,
                levels in 0usize..4,
            ) {
                let cfg = SmoothingConfig { strength: k, known_lookup_levels: levels, ..SmoothingConfig::default() };
                let model = LexicalModel::train(&corpus, &tagset(), cfg).unwrap();
                let words = tagset().word_tags().to_vec();
                let prior_sum: f64 = words.iter().map(|t| model.priors()[t.index()]).sum();
                prop_assert!((prior_sum - 1.0).abs() < 1e-12);
                let token = Token::new(query);
                let dist = model.tag_distribution(&token);
                prop_assert!((dist.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                // normalization through the converse form
                if k > 0.0 || !corpus.is_empty() {
                    if let Ok(conv) = model.converse_all(&token) {
                        let s: f64 = words.iter().map(|t| model.priors()[t.index()] * conv[t.index()]).sum();
                        prop_assert!((s - 1.0).abs() < 1e-12);
                    }
                }
            }

            #[test]
            fn no_omissions_with_smoothing(corpus in corpus_strategy(), k in 0.01f64..5.0) {
                let cfg = SmoothingConfig { strength: k, ..SmoothingConfig::default() };
                let model = LexicalModel::train(&corpus, &tagset(), cfg).unwrap();
                for sentence in &corpus {
                    for (token, _) in sentence.iter() {
                        prop_assert_eq!(model.candidate_tags(token), tagset().word_tags().to_vec());
                    }
                }
            }

            #[test]
            fn stronger_blending_moves_toward_parent(
                counts in prop::collection::vec(0u64..20, 4),
                parent in prop::collection::vec(0.01f64..1.0, 4),
                k1 in 0.0f64..10.0,
                dk in 0.0f64..10.0,
            ) {
                let support: Vec<TagId> = (0..4).map(TagId).collect();
                let z: f64 = parent.iter().sum();
                let parent: Vec<f64> = parent.iter().map(|p| p / z).collect();
                let mut c = TagCounts::default();
                for (i, &n) in counts.iter().enumerate() {
                    c.add(TagId(i as u32), n);
                }
                let kl = |p: &[f64]| -> f64 {
                    p.iter().zip(&parent).filter(|(a, _)| **a > 0.0).map(|(a, b)| a * (a / b).ln()).sum()
                };
                let d1 = kl(&blend(&c, &parent, k1, &support));
                let d2 = kl(&blend(&c, &parent, k1 + dk, &support));
                prop_assert!(d2 <= d1 + 1e-12);
            }
        }
    }
}
