//! Command-line front end: run configuration and subcommands.
//!
//! Settings come from built-in defaults, then an optional `key = value`
//! config file, then command-line flags. Every report starts with the
//! effective settings as `#` comment lines.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::corpus::{self, Cohort};
use crate::decoder::{self, Mode};
use crate::error::{read_to_string, Error, Result};
use crate::evalstats::{self, AgreementTest, ReportFormat};
use crate::lexmodel::SmoothingConfig;
use crate::model::{CandidateSource, Dictionary, Model, TrainConfig};
use crate::synth::{SynthSpec, SyntheticHmm};
use crate::tagset::{RuleSet, TagSet};

/// Every setting a command may read.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub k_lex: f64,
    pub k_trans: f64,
    pub levels: usize,
    pub infrequent_cutoff: u64,
    pub known_threshold: u64,
    pub support_epsilon: f64,
    pub unknown_class_weight: f64,
    pub threshold: f64,
    pub mode: Mode,
    pub seed: u64,
    pub format: ReportFormat,
    pub tagset: Option<PathBuf>,
    pub rules: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let lex = SmoothingConfig::default();
        RunConfig {
            k_lex: lex.strength,
            k_trans: TrainConfig::default().transition_strength,
            levels: lex.known_lookup_levels,
            infrequent_cutoff: lex.infrequent_cutoff,
            known_threshold: lex.known_threshold,
            support_epsilon: lex.support_epsilon,
            unknown_class_weight: lex.unknown_class_weight,
            threshold: 1.0,
            mode: Mode::Viterbi,
            seed: 0,
            format: ReportFormat::Table,
            tagset: None,
            rules: None,
            model: None,
            out: None,
        }
    }
}

fn format_name(f: ReportFormat) -> &'static str {
    match f {
        ReportFormat::Table => "table",
        ReportFormat::Csv => "csv",
    }
}

impl RunConfig {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            lexical: SmoothingConfig {
                strength: self.k_lex,
                known_lookup_levels: self.levels,
                infrequent_cutoff: self.infrequent_cutoff,
                known_threshold: self.known_threshold,
                support_epsilon: self.support_epsilon,
                unknown_class_weight: self.unknown_class_weight,
            },
            transition_strength: self.k_trans,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.train_config().lexical.validate()?;
        if !(self.k_trans >= 0.0 && self.k_trans.is_finite()) {
            return Err(Error::invalid("k-trans", "must be a finite non-negative number"));
        }
        decoder::check_threshold(self.threshold)
    }

    /// `key = value` lines; [`RunConfig::parse`] reads them back exactly.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        put("k_lex", self.k_lex.to_string());
        put("k_trans", self.k_trans.to_string());
        put("levels", self.levels.to_string());
        put("infrequent_cutoff", self.infrequent_cutoff.to_string());
        put("known_threshold", self.known_threshold.to_string());
        put("support_epsilon", self.support_epsilon.to_string());
        put("unknown_class_weight", self.unknown_class_weight.to_string());
        put("threshold", self.threshold.to_string());
        put("mode", self.mode.to_string());
        put("seed", self.seed.to_string());
        put("format", format_name(self.format).to_string());
        for (k, v) in [
            ("tagset", &self.tagset),
            ("rules", &self.rules),
            ("model", &self.model),
            ("out", &self.out),
        ] {
            if let Some(p) = v {
                put(k, p.display().to_string());
            }
        }
        out
    }

    /// Applies `key = value` lines on top of `self`. `#` starts a comment
    /// line; unknown keys are errors.
    pub fn parse(mut self, text: &str, source_name: &str) -> Result<Self> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |m: String| Error::parse(source_name, i + 1, m);
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, found `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            fn num<T: std::str::FromStr>(v: &str) -> std::result::Result<T, String> {
                v.parse().map_err(|_| format!("bad value `{v}`"))
            }
            let r: std::result::Result<(), String> = (|| {
                match key {
                    "k_lex" => self.k_lex = num(value)?,
                    "k_trans" => self.k_trans = num(value)?,
                    "levels" => self.levels = num(value)?,
                    "infrequent_cutoff" => self.infrequent_cutoff = num(value)?,
                    "known_threshold" => self.known_threshold = num(value)?,
                    "support_epsilon" => self.support_epsilon = num(value)?,
                    "unknown_class_weight" => self.unknown_class_weight = num(value)?,
                    "threshold" => self.threshold = num(value)?,
                    "mode" => self.mode = value.parse().map_err(|e: Error| e.to_string())?,
                    "seed" => self.seed = num(value)?,
                    "format" => self.format = value.parse().map_err(|e: Error| e.to_string())?,
                    "tagset" => self.tagset = Some(value.into()),
                    "rules" => self.rules = Some(value.into()),
                    "model" => self.model = Some(value.into()),
                    "out" => self.out = Some(value.into()),
                    other => return Err(format!("unknown key `{other}`")),
                }
                Ok(())
            })();
            r.map_err(err)?;
        }
        Ok(self)
    }

    fn apply(&mut self, g: &GlobalArgs) {
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = &g.$field {
                    self.$field = v.clone();
                }
            )*};
        }
        set!(k_lex, k_trans, levels, infrequent_cutoff, known_threshold, support_epsilon, unknown_class_weight, threshold, mode, seed, format);
        for (slot, v) in [
            (&mut self.tagset, &g.tagset),
            (&mut self.rules, &g.rules),
            (&mut self.model, &g.model),
            (&mut self.out, &g.out),
        ] {
            if v.is_some() {
                slot.clone_from(v);
            }
        }
    }

    fn header(&self, command: &str) -> String {
        let mut out = format!("# ambitag {command}\n");
        for line in self.to_text().lines() {
            let _ = writeln!(out, "# {line}");
        }
        out
    }

    fn tagset(&self) -> Result<TagSet> {
        match &self.tagset {
            Some(p) => TagSet::from_path(p),
            None => Ok(TagSet::default_engcg()),
        }
    }

    fn load_model(&self) -> Result<Model> {
        let path = self
            .model
            .as_deref()
            .ok_or_else(|| Error::invalid("model", "this command needs --model"))?;
        Model::load(path)
    }
}

#[derive(Debug, Parser)]
#[command(name = "ambitag", version, about = "Trigram HMM tagger with threshold-controlled multi-tag output")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Flat `key = value` settings file; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Tag inventory (defaults to the shipped reduced EngCG set).
    #[arg(long, global = true)]
    pub tagset: Option<PathBuf>,
    /// Reading-to-tag conversion rules.
    #[arg(long, global = true)]
    pub rules: Option<PathBuf>,
    /// Model file to write (train) or read.
    #[arg(long, global = true)]
    pub model: Option<PathBuf>,
    /// Keep tags whose posterior is at least this.
    #[arg(long, global = true)]
    pub threshold: Option<f64>,
    /// `viterbi` or `posterior`: which tag is always kept.
    #[arg(long, global = true)]
    pub mode: Option<Mode>,
    /// Lexical smoothing strength.
    #[arg(long, global = true)]
    pub k_lex: Option<f64>,
    /// Tag-trigram smoothing strength.
    #[arg(long, global = true)]
    pub k_trans: Option<f64>,
    /// Branching suffix levels consulted for known words.
    #[arg(long, global = true)]
    pub levels: Option<usize>,
    #[arg(long, global = true)]
    pub infrequent_cutoff: Option<u64>,
    #[arg(long, global = true)]
    pub known_threshold: Option<u64>,
    #[arg(long, global = true)]
    pub support_epsilon: Option<f64>,
    #[arg(long, global = true)]
    pub unknown_class_weight: Option<f64>,
    /// Seed for shuffling and synthetic generation.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output file (default: standard output).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// `table` or `csv`.
    #[arg(long, global = true)]
    pub format: Option<ReportFormat>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model from an annotated corpus.
    Train {
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Tag a cohort file.
    Tag {
        #[arg(long)]
        input: PathBuf,
        /// One tag per word (threshold 1).
        #[arg(long)]
        full: bool,
        /// Report failing sentences and keep going.
        #[arg(long)]
        continue_on_error: bool,
    },
    /// Score the model on an annotated corpus.
    Eval {
        #[arg(long)]
        corpus: PathBuf,
        /// Cohort file supplying candidate sets by surface form.
        #[arg(long)]
        cohorts: Option<PathBuf>,
    },
    /// Error rate against ambiguity over several thresholds.
    Sweep {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        cohorts: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "1,0.5,0.2,0.1,0.05,0.01,0")]
        thresholds: Vec<f64>,
    },
    /// Full-disambiguation error against training size.
    Curve {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        sizes: Vec<usize>,
        #[arg(long)]
        eval_words: usize,
        #[arg(long)]
        cohorts: Option<PathBuf>,
    },
    /// Annotator-agreement test, from counts or from two annotations.
    Agree {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        p0: f64,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long)]
        observed: Option<f64>,
        #[arg(long, requires = "right")]
        left: Option<PathBuf>,
        #[arg(long, requires = "left")]
        right: Option<PathBuf>,
        /// List every differing position.
        #[arg(long)]
        list: bool,
    },
    /// Convert analyser readings into single-tag cohorts.
    Convert {
        #[arg(long)]
        input: PathBuf,
    },
    /// Print the tag inventory summary.
    Inventory,
    /// Sample an annotated corpus from a trigram HMM.
    GenSynth {
        /// HMM file; without it a random HMM is drawn from --seed.
        #[arg(long)]
        hmm: Option<PathBuf>,
        #[arg(long, default_value_t = 10_000)]
        words: usize,
        #[arg(long, default_value_t = 10)]
        tags: usize,
        #[arg(long, default_value_t = 3000)]
        vocabulary: usize,
        #[arg(long)]
        cohorts_out: Option<PathBuf>,
        #[arg(long)]
        hmm_out: Option<PathBuf>,
        #[arg(long)]
        tagset_out: Option<PathBuf>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Train { .. } => "train",
            Command::Tag { .. } => "tag",
            Command::Eval { .. } => "eval",
            Command::Sweep { .. } => "sweep",
            Command::Curve { .. } => "curve",
            Command::Agree { .. } => "agree",
            Command::Convert { .. } => "convert",
            Command::Inventory => "inventory",
            Command::GenSynth { .. } => "gen-synth",
        }
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn emit(config: &RunConfig, text: &str) -> Result<()> {
    match &config.out {
        Some(p) => write_file(p, text),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .map_err(|e| Error::io("<stdout>", e))
        }
    }
}

fn candidate_source(cohorts: Option<&Path>, tagset: &TagSet) -> Result<CandidateSource> {
    Ok(match cohorts {
        Some(p) => CandidateSource::Dictionary(Dictionary::from_cohorts(&corpus::read_cohorts(p, tagset)?)),
        None => CandidateSource::Lexicon,
    })
}

/// Resolves settings and runs one command, returning its standard output
/// (or writing it to `--out`).
pub fn execute(cli: &Cli) -> Result<()> {
    let mut config = RunConfig::default();
    if let Some(path) = &cli.global.config {
        config = config.parse(&read_to_string(path)?, &path.display().to_string())?;
    }
    config.apply(&cli.global);
    config.validate()?;
    let header = config.header(cli.command.name());

    match &cli.command {
        Command::Train { corpus: path } => {
            let tagset = config.tagset()?;
            let corpus = corpus::read_annotated(path, &tagset)?;
            let model = Model::train(&corpus, &tagset, &config.train_config())?;
            let out = config
                .model
                .as_deref()
                .ok_or_else(|| Error::invalid("model", "train needs --model for the output file"))?;
            model.save(out)?;
            let mut used: Vec<_> = corpus.iter().flat_map(|s| s.gold.iter().copied()).collect();
            used.sort_unstable();
            used.dedup();
            let text = format!(
                "{header}sentences {}\nwords {}\ntags used {} of {}\nmodel {}\n",
                corpus.len(),
                corpus::word_count(&corpus),
                used.len(),
                tagset.len(),
                out.display()
            );
            emit(&RunConfig { out: None, ..config }, &text)
        }
        Command::Tag {
            input,
            full,
            continue_on_error,
        } => {
            let model = config.load_model()?;
            let threshold = if *full { 1.0 } else { config.threshold };
            let mut sentences = corpus::read_cohorts(input, model.tagset())?;
            let decoded = decoder::decode_all(&model, &sentences);
            for (i, (sentence, result)) in sentences.iter_mut().zip(decoded).enumerate() {
                match result {
                    Ok(d) => d.retain(threshold, config.mode).apply(sentence),
                    Err(e) if *continue_on_error => {
                        eprintln!("sentence {}: {e}", i + 1);
                        for c in sentence.iter_mut() {
                            c.retained = c.candidates.clone();
                        }
                    }
                    Err(e) => return Err(e),
                }
            }
            emit(&config, &corpus::write_cohorts(&sentences, model.tagset(), true))
        }
        Command::Eval { corpus: path, cohorts } => {
            let model = config.load_model()?;
            let gold = corpus::read_annotated(path, model.tagset())?;
            let source = candidate_source(cohorts.as_deref(), model.tagset())?;
            let report = evalstats::evaluate(&model, &gold, &source, config.threshold, config.mode)?;
            let mut text = header;
            text.push_str(&evalstats::render_report(&report, config.format));
            if config.format == ReportFormat::Table && report.words > 0 {
                let h = evalstats::binomial_ci_halfwidth(report.error_rate, report.words, 0.95)?;
                let _ = writeln!(text, "95% interval     ±{:.2}%", 100.0 * h);
            }
            emit(&config, &text)
        }
        Command::Sweep {
            corpus: path,
            cohorts,
            thresholds,
        } => {
            let model = config.load_model()?;
            let gold = corpus::read_annotated(path, model.tagset())?;
            let source = candidate_source(cohorts.as_deref(), model.tagset())?;
            let table = evalstats::tradeoff_sweep(&model, &gold, &source, thresholds, config.mode)?;
            emit(&config, &format!("{header}{}", table.render(config.format)))
        }
        Command::Curve {
            corpus: path,
            sizes,
            eval_words,
            cohorts,
        } => {
            let tagset = config.tagset()?;
            let corpus = corpus::read_annotated(path, &tagset)?;
            let split = corpus::split_for_learning_curve(&corpus, sizes, *eval_words, config.seed)?;
            let source = candidate_source(cohorts.as_deref(), &tagset)?;
            let points = evalstats::learning_curve(&split, &tagset, &config.train_config(), &source, config.mode)?;
            emit(&config, &format!("{header}{}", evalstats::render_curve(&points, config.format)))
        }
        Command::Agree {
            n,
            p0,
            alpha,
            observed,
            left,
            right,
            list,
        } => {
            let mut text = header;
            let (n, observed) = match (left, right) {
                (Some(l), Some(r)) => {
                    let tagset = config.tagset()?;
                    let a = corpus::read_annotated(l, &tagset)?;
                    let b = corpus::read_annotated(r, &tagset)?;
                    let d = evalstats::disagreement_rate(&a, &b)?;
                    let _ = writeln!(text, "differences {} of {}", d.differences.len(), d.words);
                    if *list {
                        text.push_str(&d.listing(&tagset));
                    }
                    (d.words, Some(d.rate))
                }
                _ => (
                    n.ok_or_else(|| Error::invalid("n", "give --n or --left/--right"))?,
                    *observed,
                ),
            };
            let critical = evalstats::agreement_critical_rate(n, *p0, *alpha)?;
            let _ = writeln!(text, "n {n}\np0 {p0}\nalpha {alpha}\ncritical rate {critical:.4}");
            if let Some(obs) = observed {
                let test = AgreementTest::run(n, *p0, *alpha, obs)?;
                let _ = writeln!(
                    text,
                    "observed {:.6}\n{}",
                    obs,
                    if test.reject {
                        "reject: disagreement is significantly below p0"
                    } else {
                        "cannot reject"
                    }
                );
            }
            emit(&config, &text)
        }
        Command::Convert { input } => {
            let tagset = config.tagset()?;
            let rules = match &config.rules {
                Some(p) => RuleSet::from_path(p, &tagset)?,
                None => RuleSet::default_engcg(&tagset)?,
            };
            let analyses = corpus::parse_analyses(&read_to_string(input)?, &input.display().to_string())?;
            let cohorts: Vec<Vec<Cohort>> = analyses
                .iter()
                .map(|s| {
                    s.iter()
                        .map(|a| rules.convert_cohort(&a.surface, &a.readings, &tagset))
                        .collect::<Result<_>>()
                })
                .collect::<Result<_>>()?;
            emit(&config, &corpus::write_cohorts(&cohorts, &tagset, false))
        }
        Command::Inventory => {
            let tagset = config.tagset()?;
            emit(&config, &format!("{}\n", tagset.inventory_report().trim_end()))
        }
        Command::GenSynth {
            hmm,
            words,
            tags,
            vocabulary,
            cohorts_out,
            hmm_out,
            tagset_out,
        } => {
            let hmm = match hmm {
                Some(p) => SyntheticHmm::load(p)?,
                None => SyntheticHmm::random(&SynthSpec {
                    n_tags: *tags,
                    vocabulary: *vocabulary,
                    seed: config.seed,
                    ..SynthSpec::default()
                })?,
            };
            let corpus = hmm.generate(*words, config.seed)?;
            if let Some(p) = cohorts_out {
                let cohorts = corpus.iter().map(|s| hmm.cohorts(s)).collect::<Result<Vec<_>>>()?;
                write_file(p, &corpus::write_cohorts(&cohorts, hmm.tagset(), false))?;
            }
            if let Some(p) = hmm_out {
                write_file(p, &hmm.to_text())?;
            }
            if let Some(p) = tagset_out {
                write_file(p, &hmm.tagset().to_inventory_string())?;
            }
            emit(&config, &corpus::write_annotated(&corpus, hmm.tagset()))
        }
    }
}

/// Entry point for the binary: parses `args`, runs, and maps errors to
/// exit codes (1 internal, 2 input validation).
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn config_file_and_flag_precedence() {
        let file = "# comment\nk_lex = 0.5\nthreshold = 0.2\nmode = posterior\n";
        let config = RunConfig::default().parse(file, "cfg").unwrap();
        assert_eq!((config.k_lex, config.threshold, config.mode), (0.5, 0.2, Mode::Posterior));
        let cli = Cli::try_parse_from(["ambitag", "--threshold", "0.7", "inventory"]).unwrap();
        let mut c = config.clone();
        c.apply(&cli.global);
        assert_eq!((c.k_lex, c.threshold), (0.5, 0.7));
    }

    #[test]
    fn config_errors_carry_lines() {
        let err = RunConfig::default().parse("k_lex = 1\ncolour = red\n", "cfg").unwrap_err();
        assert!(err.to_string().starts_with("cfg:2:"), "{err}");
        assert!(RunConfig::default().parse("seed = -1\n", "cfg").is_err());
        assert!(RunConfig::default().parse("just words\n", "cfg").is_err());
        let bad = RunConfig {
            threshold: 1.5,
            ..RunConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    fn config_strategy() -> impl Strategy<Value = RunConfig> {
        (
            (0.0f64..10.0, 0.0f64..10.0, 0usize..6, 0u64..10, 1u64..5),
            (0.0f64..0.5, 0.0f64..=1.0, 0.0f64..=1.0, any::<bool>(), any::<u64>(), any::<bool>()),
            proptest::option::of("[a-z/]{1,12}"),
        )
            .prop_map(|((k_lex, k_trans, levels, cutoff, known), (eps, w, th, post, seed, csv), path)| RunConfig {
                k_lex,
                k_trans,
                levels,
                infrequent_cutoff: cutoff,
                known_threshold: known,
                support_epsilon: eps,
                unknown_class_weight: w,
                threshold: th,
                mode: if post { Mode::Posterior } else { Mode::Viterbi },
                seed,
                format: if csv { ReportFormat::Csv } else { ReportFormat::Table },
                tagset: path.clone().map(PathBuf::from),
                rules: None,
                model: path.map(PathBuf::from),
                out: None,
            })
    }

    proptest! {
        #[test]
        fn config_round_trips(config in config_strategy()) {
            let again = RunConfig::default().parse(&config.to_text(), "cfg").unwrap();
            prop_assert_eq!(again, config);
        }
    }
}
