//! The reduced tag inventory and conversion of multipart morphological
//! readings into single tags.
//!
//! A reading such as `walk <SV> <SVO> V PRES -SG3 VFIN` is reduced to one
//! symbol (`V-PRES-BASE`) by a table of [`ConversionRule`]s. The table is
//! data, not code: the shipped rules live in `data/engcg-reduced.rules`
//! and can be replaced wholesale.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use crate::corpus::{Cohort, Token};
use crate::error::{read_to_string, Error, Result};

/// Shipped inventory (reduced EngCG tag set).
pub const DEFAULT_TAGSET: &str = include_str!("../data/engcg-reduced.tags");
/// Shipped conversion rules for [`DEFAULT_TAGSET`].
pub const DEFAULT_RULES: &str = include_str!("../data/engcg-reduced.rules");

/// Documented size of the reduced inventory, used when reporting how the
/// loaded inventory compares.
pub const DOCUMENTED_WORD_TAGS: usize = 80;
pub const DOCUMENTED_PUNCTUATION_TAGS: usize = 17;

/// Stable integer handle of a tag within its [`TagSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TagId(pub u32);

impl TagId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TagClass {
    Word,
    Punctuation,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tag {
    pub symbol: String,
    pub class: TagClass,
    pub index: TagId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TagSet {
    tags: Vec<Tag>,
    lookup: HashMap<String, TagId>,
    word_tags: Vec<TagId>,
    punctuation_tags: Vec<TagId>,
}

impl TagSet {
    /// Parses an inventory: one symbol per line, `#` comments, blank lines
    /// ignored. Repeated symbols collapse onto their first occurrence.
    pub fn parse(source: &str) -> Result<Self> {
        Self::parse_named(source, "<tagset>")
    }

    pub fn parse_named(source: &str, source_name: &str) -> Result<Self> {
        let mut symbols = Vec::new();
        for (lineno, raw) in source.lines().enumerate() {
            let line = strip_comment(raw).trim();
            if line.is_empty() {
                continue;
            }
            if line.chars().any(char::is_whitespace) {
                return Err(Error::parse(
                    source_name,
                    lineno + 1,
                    format!("tag symbol `{line}` contains whitespace"),
                ));
            }
            symbols.push(line.to_string());
        }
        if symbols.is_empty() {
            return Err(Error::EmptyInventory);
        }
        Ok(Self::from_symbols(symbols))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::parse_named(&read_to_string(path)?, &path.display().to_string())
    }

    /// The shipped reduced EngCG inventory.
    pub fn default_engcg() -> Self {
        Self::parse_named(DEFAULT_TAGSET, "engcg-reduced.tags").expect("shipped inventory parses")
    }

    /// Builds a tag set from symbols; `@`-prefixed symbols are punctuation.
    pub fn from_symbols<I, S>(symbols: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut set = TagSet {
            tags: Vec::new(),
            lookup: HashMap::new(),
            word_tags: Vec::new(),
            punctuation_tags: Vec::new(),
        };
        for symbol in symbols {
            let symbol = symbol.into();
            if set.lookup.contains_key(&symbol) {
                continue;
            }
            let index = TagId(set.tags.len() as u32);
            let class = if symbol.starts_with('@') {
                set.punctuation_tags.push(index);
                TagClass::Punctuation
            } else {
                set.word_tags.push(index);
                TagClass::Word
            };
            set.lookup.insert(symbol.clone(), index);
            set.tags.push(Tag {
                symbol,
                class,
                index,
            });
        }
        set
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn get(&self, symbol: &str) -> Option<TagId> {
        self.lookup.get(symbol).copied()
    }

    pub fn resolve(&self, symbol: &str) -> Result<TagId> {
        self.get(symbol)
            .ok_or_else(|| Error::UnknownTag(symbol.to_string()))
    }

    pub fn tag(&self, id: TagId) -> &Tag {
        &self.tags[id.index()]
    }

    pub fn symbol(&self, id: TagId) -> &str {
        &self.tags[id.index()].symbol
    }

    pub fn class(&self, id: TagId) -> TagClass {
        self.tags[id.index()].class
    }

    pub fn iter(&self) -> impl Iterator<Item = &Tag> {
        self.tags.iter()
    }

    pub fn word_tags(&self) -> &[TagId] {
        &self.word_tags
    }

    pub fn punctuation_tags(&self) -> &[TagId] {
        &self.punctuation_tags
    }

    pub fn class_tags(&self, class: TagClass) -> &[TagId] {
        match class {
            TagClass::Word => &self.word_tags,
            TagClass::Punctuation => &self.punctuation_tags,
        }
    }

    pub fn count(&self, class: TagClass) -> usize {
        self.class_tags(class).len()
    }

    /// One-paragraph summary comparing the loaded class counts with the
    /// documented inventory size.
    pub fn inventory_report(&self) -> String {
        let words = self.count(TagClass::Word);
        let punct = self.count(TagClass::Punctuation);
        let note = |have: usize, documented: usize| match have.cmp(&documented) {
            std::cmp::Ordering::Equal => "matches documented count".to_string(),
            std::cmp::Ordering::Greater => format!("{} more than documented", have - documented),
            std::cmp::Ordering::Less => format!("{} fewer than documented", documented - have),
        };
        format!(
            "{words} word tags (documented: {DOCUMENTED_WORD_TAGS}, {}), \
             {punct} punctuation tags (documented: {DOCUMENTED_PUNCTUATION_TAGS}, {})",
            note(words, DOCUMENTED_WORD_TAGS),
            note(punct, DOCUMENTED_PUNCTUATION_TAGS),
        )
    }

    /// Serialized inventory, one symbol per line; [`TagSet::parse`] of the
    /// result reproduces `self`.
    pub fn to_inventory_string(&self) -> String {
        let mut out = String::new();
        for tag in &self.tags {
            out.push_str(&tag.symbol);
            out.push('\n');
        }
        out
    }
}

fn strip_comment(line: &str) -> &str {
    // whole-line comments only; symbols may contain `#`
    if line.trim_start().starts_with('#') {
        ""
    } else {
        line
    }
}

/// One row of the conversion table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConversionRule {
    /// Sorted, deduplicated feature symbols.
    pub pattern: Vec<String>,
    pub output: TagId,
    pub priority: i32,
}

impl ConversionRule {
    fn matches(&self, features: &[&str]) -> bool {
        self.pattern
            .iter()
            .all(|f| features.binary_search(&f.as_str()).is_ok())
    }
}

#[derive(Debug, Clone)]
pub struct RuleSet {
    rules: Vec<ConversionRule>,
}

/// Angle-bracketed features carry subcategorization frames and never
/// influence the reduced tag.
fn is_subcategorization(feature: &str) -> bool {
    feature.len() >= 2 && feature.starts_with('<') && feature.ends_with('>')
}

fn unquote(feature: &str) -> &str {
    if feature.len() >= 2 && feature.starts_with('"') && feature.ends_with('"') {
        &feature[1..feature.len() - 1]
    } else {
        feature
    }
}

fn normalize_features<'a, I>(features: I) -> Vec<&'a str>
where
    I: IntoIterator<Item = &'a str>,
{
    let mut out: Vec<&str> = features
        .into_iter()
        .filter(|f| !is_subcategorization(f))
        .map(unquote)
        .filter(|f| !f.is_empty())
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

impl RuleSet {
    pub fn parse(source: &str, tagset: &TagSet) -> Result<Self> {
        Self::parse_named(source, "<rules>", tagset)
    }

    pub fn parse_named(source: &str, source_name: &str, tagset: &TagSet) -> Result<Self> {
        let mut rules: Vec<ConversionRule> = Vec::new();
        let mut outputs: HashMap<Vec<String>, TagId> = HashMap::new();

        for (lineno, raw) in source.lines().enumerate() {
            let lineno = lineno + 1;
            let line = strip_comment(raw).trim();
            if line.is_empty() {
                continue;
            }
            let (lhs, rhs) = line
                .split_once("->")
                .ok_or_else(|| Error::parse(source_name, lineno, "expected `FEATURES -> TAG`"))?;
            let pattern: Vec<String> = normalize_features(lhs.split_whitespace())
                .into_iter()
                .map(str::to_string)
                .collect();
            if pattern.is_empty() {
                return Err(Error::parse(source_name, lineno, "rule has no features"));
            }
            let mut rhs = rhs.split_whitespace();
            let symbol = rhs
                .next()
                .ok_or_else(|| Error::parse(source_name, lineno, "rule has no output tag"))?;
            let output = tagset.get(symbol).ok_or_else(|| {
                Error::parse(source_name, lineno, format!("unknown output tag `{symbol}`"))
            })?;
            let priority = match rhs.next() {
                None => 0,
                Some(p) => p.parse::<i32>().map_err(|_| {
                    Error::parse(source_name, lineno, format!("bad priority `{p}`"))
                })?,
            };
            if let Some(extra) = rhs.next() {
                return Err(Error::parse(
                    source_name,
                    lineno,
                    format!("unexpected trailing `{extra}`"),
                ));
            }

            if let Some(&prev) = outputs.get(&pattern) {
                if prev != output {
                    return Err(Error::parse(
                        source_name,
                        lineno,
                        format!(
                            "pattern `{}` already maps to {}",
                            pattern.join(" "),
                            tagset.symbol(prev)
                        ),
                    ));
                }
            }
            outputs.insert(pattern.clone(), output);
            if rules
                .iter()
                .any(|r| r.pattern == pattern && r.priority == priority)
            {
                continue;
            }
            rules.push(ConversionRule {
                pattern,
                output,
                priority,
            });
        }
        Ok(RuleSet { rules })
    }

    pub fn from_path(path: &Path, tagset: &TagSet) -> Result<Self> {
        Self::parse_named(&read_to_string(path)?, &path.display().to_string(), tagset)
    }

    /// The shipped rule table; `tagset` must contain every shipped output.
    pub fn default_engcg(tagset: &TagSet) -> Result<Self> {
        Self::parse_named(DEFAULT_RULES, "engcg-reduced.rules", tagset)
    }

    pub fn rules(&self) -> &[ConversionRule] {
        &self.rules
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    /// Reduces one multipart reading to a single tag.
    pub fn convert_reading<S: AsRef<str>>(&self, reading: &[S], tagset: &TagSet) -> Result<TagId> {
        let features = normalize_features(reading.iter().map(AsRef::as_ref));
        let verbatim = || {
            reading
                .iter()
                .map(AsRef::as_ref)
                .collect::<Vec<_>>()
                .join(" ")
        };

        let mut best: Option<&ConversionRule> = None;
        let mut rival: Option<&ConversionRule> = None;
        for rule in self.rules.iter().filter(|r| r.matches(&features)) {
            let key = (rule.priority, rule.pattern.len());
            match best {
                None => best = Some(rule),
                Some(b) => {
                    let best_key = (b.priority, b.pattern.len());
                    if key > best_key {
                        best = Some(rule);
                        rival = None;
                    } else if key == best_key && rule.output != b.output {
                        rival = Some(rule);
                    }
                }
            }
        }
        match (best, rival) {
            (None, _) => Err(Error::NoMatchingRule(verbatim())),
            (Some(b), Some(r)) => Err(Error::AmbiguousReading {
                reading: verbatim(),
                first: tagset.symbol(b.output).to_string(),
                second: tagset.symbol(r.output).to_string(),
            }),
            (Some(b), None) => Ok(b.output),
        }
    }

    /// Converts every reading of a token; the candidate set keeps the first
    /// occurrence order of the reduced tags.
    pub fn convert_cohort<S: AsRef<str>>(
        &self,
        token: &str,
        readings: &[Vec<S>],
        tagset: &TagSet,
    ) -> Result<Cohort> {
        if readings.is_empty() {
            return Err(Error::NoMatchingRule(format!("{token} (no readings)")));
        }
        let mut candidates: Vec<TagId> = Vec::with_capacity(readings.len());
        for reading in readings {
            let tag = self.convert_reading(reading, tagset)?;
            if !candidates.contains(&tag) {
                candidates.push(tag);
            }
        }
        Ok(Cohort::new(Token::new(token), candidates))
    }
}

impl fmt::Display for TagId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn walk_readings() -> Vec<Vec<&'static str>> {
        vec![
            vec!["walk", "<SV>", "<SVO>", "V", "SUBJUNCTIVE", "VFIN"],
            vec!["walk", "<SV>", "<SVO>", "V", "IMP", "VFIN"],
            vec!["walk", "<SV>", "<SVO>", "V", "INF"],
            vec!["walk", "<SV>", "<SVO>", "V", "PRES", "-SG3", "VFIN"],
            vec!["walk", "N", "NOM", "SG"],
        ]
    }

    #[test]
    fn shipped_inventory_counts() {
        let ts = TagSet::default_engcg();
        assert_eq!(ts.count(TagClass::Punctuation), 17);
        assert_eq!(ts.count(TagClass::Word), 83);
        assert_eq!(ts.iter().filter(|t| t.symbol == "@rparen").count(), 1);
        let report = ts.inventory_report();
        assert!(report.contains("83 word tags (documented: 80, 3 more than documented)"));
        assert!(report.contains("17 punctuation tags (documented: 17, matches"));
    }

    #[test]
    fn minimal_and_duplicate_inventories() {
        let ts = TagSet::parse("N-NOM-SG\n").unwrap();
        assert_eq!(ts.len(), 1);
        assert_eq!(ts.class(TagId(0)), TagClass::Word);

        let ts = TagSet::parse("@comma\nN\n@comma\n").unwrap();
        assert_eq!(ts.len(), 2);
        assert_eq!(ts.get("@comma"), Some(TagId(0)));
        assert_eq!(ts.get("N"), Some(TagId(1)));
    }

    #[test]
    fn inventory_errors() {
        assert!(matches!(TagSet::parse(""), Err(Error::EmptyInventory)));
        assert!(matches!(
            TagSet::parse("# only a comment\n\n"),
            Err(Error::EmptyInventory)
        ));
        match TagSet::parse("A\nN NOM\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn indices_follow_positions() {
        let ts = TagSet::default_engcg();
        for (i, tag) in ts.iter().enumerate() {
            assert_eq!(tag.index, TagId(i as u32));
            assert_eq!(ts.get(&tag.symbol), Some(tag.index));
        }
    }

    #[test]
    fn inventory_round_trip() {
        let ts = TagSet::default_engcg();
        let again = TagSet::parse(&ts.to_inventory_string()).unwrap();
        assert_eq!(ts, again);
    }

    #[test]
    fn walk_readings_convert() {
        let ts = TagSet::default_engcg();
        let rules = RuleSet::default_engcg(&ts).unwrap();
        let got: Vec<&str> = walk_readings()
            .iter()
            .map(|r| ts.symbol(rules.convert_reading(r, &ts).unwrap()))
            .collect();
        assert_eq!(
            got,
            ["V-SUBJUNCTIVE", "V-IMP", "V-INF", "V-PRES-BASE", "N-NOM-SG"]
        );

        let cohort = rules.convert_cohort("walk", &walk_readings(), &ts).unwrap();
        assert_eq!(cohort.candidates.len(), 5);
        assert_eq!(cohort.token.surface, "walk");
    }

    #[test]
    fn single_and_merged_readings() {
        let ts = TagSet::default_engcg();
        let rules = RuleSet::default_engcg(&ts).unwrap();
        let one = rules
            .convert_cohort("walk", &[vec!["walk", "V", "INF"]], &ts)
            .unwrap();
        assert_eq!(one.candidates, vec![ts.get("V-INF").unwrap()]);

        // Both readings contain {V, PRES, -SG3}; the extra VFIN and the
        // subcategorization frame do not select a different rule.
        let merged = rules
            .convert_cohort(
                "walk",
                &[
                    vec!["walk", "<SV>", "V", "PRES", "-SG3", "VFIN"],
                    vec!["walk", "<SVO>", "V", "PRES", "-SG3"],
                ],
                &ts,
            )
            .unwrap();
        assert_eq!(merged.candidates, vec![ts.get("V-PRES-BASE").unwrap()]);
    }

    #[test]
    fn lemma_rules_are_more_specific() {
        let ts = TagSet::default_engcg();
        let rules = RuleSet::default_engcg(&ts).unwrap();
        let is = rules
            .convert_reading(&["\"be\"", "<SV>", "V", "PRES", "SG3", "VFIN"], &ts)
            .unwrap();
        assert_eq!(ts.symbol(is), "BE-PRES-IS");
        let walks = rules
            .convert_reading(&["walk", "V", "PRES", "SG3", "VFIN"], &ts)
            .unwrap();
        assert_eq!(ts.symbol(walks), "V-PRES-SG3");
        let who = rules
            .convert_reading(&["who", "PRON", "WH", "NOM", "SG/PL"], &ts)
            .unwrap();
        assert_eq!(ts.symbol(who), "PRON-WH");
    }

    #[test]
    fn every_shipped_tag_has_a_rule() {
        let ts = TagSet::default_engcg();
        let rules = RuleSet::default_engcg(&ts).unwrap();
        for tag in ts.iter() {
            assert!(
                rules.rules().iter().any(|r| r.output == tag.index),
                "no rule produces {}",
                tag.symbol
            );
        }
    }

    #[test]
    fn unmatched_reading_is_reported_verbatim() {
        let ts = TagSet::default_engcg();
        let rules = RuleSet::default_engcg(&ts).unwrap();
        match rules.convert_reading(&["xyzzy", "FOO", "BAR"], &ts) {
            Err(Error::NoMatchingRule(r)) => assert_eq!(r, "xyzzy FOO BAR"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn priority_then_specificity() {
        let ts = TagSet::parse("X\nY\nZ\n").unwrap();
        let rules = RuleSet::parse("A -> X\nA B -> Y\nB -> Z 5\n", &ts).unwrap();
        assert_eq!(rules.convert_reading(&["A", "B"], &ts).unwrap(), TagId(2));
        let rules = RuleSet::parse("A -> X\nA B -> Y\n", &ts).unwrap();
        assert_eq!(rules.convert_reading(&["A", "B"], &ts).unwrap(), TagId(1));
        assert_eq!(rules.convert_reading(&["A"], &ts).unwrap(), TagId(0));
    }

    #[test]
    fn residual_ties() {
        let ts = TagSet::parse("X\nY\n").unwrap();
        // identical pattern, different output: rejected at load
        assert!(RuleSet::parse("A B -> X\nB A -> Y\n", &ts).is_err());
        // same output twice is fine
        assert!(RuleSet::parse("A B -> X\nB A -> X\n", &ts).is_ok());
        // different patterns tie only on a reading containing both
        let rules = RuleSet::parse("A B -> X\nA C -> Y\n", &ts).unwrap();
        assert!(rules.convert_reading(&["A", "B"], &ts).is_ok());
        assert!(matches!(
            rules.convert_reading(&["A", "B", "C"], &ts),
            Err(Error::AmbiguousReading { .. })
        ));
    }

    #[test]
    fn rule_file_errors() {
        let ts = TagSet::parse("X\n").unwrap();
        assert!(matches!(
            RuleSet::parse("A B X\n", &ts),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            RuleSet::parse("\nA -> Q\n", &ts),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(RuleSet::parse("A -> X high\n", &ts).is_err());
    }
}
