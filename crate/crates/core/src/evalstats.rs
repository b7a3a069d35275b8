//! Scoring, error-rate/ambiguity sweeps, learning curves and the
//! normal-approximation statistics used to read them.
//!
//! A word counts as an error when its gold tag is missing from the
//! retained set, so a tagger may trade ambiguity for accuracy.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::corpus::{AnnotatedSentence, Cohort, LearningCurveSplit};
use crate::decoder::{self, Decoded, Mode};
use crate::error::{Error, Result};
use crate::lexmodel::LexicalModel;
use crate::model::{CandidateSource, Model, TrainConfig};
use crate::tagset::{TagId, TagSet};

/// Mergeable counts behind an [`EvalReport`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Tally {
    pub words: usize,
    pub errors: usize,
    pub retained: usize,
    pub unseen_errors: usize,
    pub omissions: usize,
}

impl Tally {
    pub fn merge(self, other: Tally) -> Tally {
        Tally {
            words: self.words + other.words,
            errors: self.errors + other.errors,
            retained: self.retained + other.retained,
            unseen_errors: self.unseen_errors + other.unseen_errors,
            omissions: self.omissions + other.omissions,
        }
    }

    fn rate(&self, n: usize) -> f64 {
        if self.words == 0 {
            0.0
        } else {
            n as f64 / self.words as f64
        }
    }

    pub fn report(&self) -> EvalReport {
        EvalReport {
            words: self.words,
            errors: self.errors,
            error_rate: self.rate(self.errors),
            ambiguity: if self.words == 0 { 1.0 } else { self.rate(self.retained) },
            unseen_word_error_rate: self.rate(self.unseen_errors),
            lexical_omission_rate: self.rate(self.omissions),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    pub words: usize,
    pub errors: usize,
    pub error_rate: f64,
    /// Mean retained tags per word.
    pub ambiguity: f64,
    /// Errors at words absent from the training lexicon, over all words.
    pub unseen_word_error_rate: f64,
    /// Words whose gold tag is not a candidate, over all words.
    pub lexical_omission_rate: f64,
}

fn mismatch(sentence: usize, token: usize, message: impl Into<String>) -> Error {
    Error::Mismatch {
        sentence: sentence + 1,
        token: token + 1,
        message: message.into(),
    }
}

fn check_parallel(gold: &[AnnotatedSentence], output: &[Vec<Cohort>]) -> Result<()> {
    if gold.len() != output.len() {
        let at = gold.len().min(output.len());
        return Err(mismatch(
            at,
            0,
            format!("{} gold sentences against {} tagged", gold.len(), output.len()),
        ));
    }
    for (i, (g, o)) in gold.iter().zip(output).enumerate() {
        for (j, ((token, _), cohort)) in g.iter().zip(o).enumerate() {
            if token.surface != cohort.token.surface {
                return Err(mismatch(
                    i,
                    j,
                    format!("`{}` against `{}`", token.surface, cohort.token.surface),
                ));
            }
        }
        if g.len() != o.len() {
            return Err(mismatch(
                i,
                g.len().min(o.len()),
                format!("{} gold tokens against {} tagged", g.len(), o.len()),
            ));
        }
    }
    Ok(())
}

/// Scores tagged cohorts (candidates and retained sets filled in) against
/// the gold corpus. `lexicon` decides which words count as unseen.
pub fn score(
    gold: &[AnnotatedSentence],
    output: &[Vec<Cohort>],
    lexicon: &LexicalModel,
) -> Result<EvalReport> {
    check_parallel(gold, output)?;
    let tally = gold
        .iter()
        .zip(output)
        .flat_map(|(g, o)| g.iter().zip(o))
        .fold(Tally::default(), |acc, ((token, gold_tag), cohort)| {
            let error = !cohort.retained.contains(&gold_tag);
            acc.merge(Tally {
                words: 1,
                errors: error as usize,
                retained: cohort.retained.len(),
                unseen_errors: (error && !lexicon.is_seen(&token.surface)) as usize,
                omissions: !cohort.candidates.contains(&gold_tag) as usize,
            })
        });
    Ok(tally.report())
}

/// Decodes every gold sentence once, with candidates from `source`.
/// Results keep corpus order.
pub fn decode_corpus(
    model: &Model,
    gold: &[AnnotatedSentence],
    source: &CandidateSource,
) -> Result<Vec<(Vec<Cohort>, Decoded)>> {
    gold.par_iter()
        .map(|s| {
            let cohorts = model.cohorts(s.tokens.iter(), source);
            let decoded = decoder::decode(model, &cohorts)?;
            Ok((cohorts, decoded))
        })
        .collect()
}

fn score_decoded(
    gold: &[AnnotatedSentence],
    decoded: &[(Vec<Cohort>, Decoded)],
    lexicon: &LexicalModel,
    threshold: f64,
    mode: Mode,
) -> Result<EvalReport> {
    let tagged: Vec<Vec<Cohort>> = decoded
        .iter()
        .map(|(cohorts, d)| {
            let mut c = cohorts.clone();
            d.retain(threshold, mode).apply(&mut c);
            c
        })
        .collect();
    score(gold, &tagged, lexicon)
}

/// Tags `gold`'s tokens at one threshold and scores the result.
pub fn evaluate(
    model: &Model,
    gold: &[AnnotatedSentence],
    source: &CandidateSource,
    threshold: f64,
    mode: Mode,
) -> Result<EvalReport> {
    decoder::check_threshold(threshold)?;
    let decoded = decode_corpus(model, gold, source)?;
    score_decoded(gold, &decoded, &model.lexicon, threshold, mode)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TradeoffRow {
    pub threshold: f64,
    pub report: EvalReport,
}

/// Error rate against ambiguity, one row per threshold, thresholds
/// descending (ambiguity ascending).
#[derive(Debug, Clone, PartialEq)]
pub struct TradeoffTable {
    pub mode: Mode,
    pub rows: Vec<TradeoffRow>,
}

/// Posteriors are computed once per sentence; each threshold only
/// re-selects retained tags.
pub fn tradeoff_sweep(
    model: &Model,
    gold: &[AnnotatedSentence],
    source: &CandidateSource,
    thresholds: &[f64],
    mode: Mode,
) -> Result<TradeoffTable> {
    for &t in thresholds {
        decoder::check_threshold(t)?;
    }
    let mut thresholds = thresholds.to_vec();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let decoded = decode_corpus(model, gold, source)?;
    let rows = thresholds
        .par_iter()
        .map(|&threshold| {
            Ok(TradeoffRow {
                threshold,
                report: score_decoded(gold, &decoded, &model.lexicon, threshold, mode)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(TradeoffTable { mode, rows })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub train_words: usize,
    pub report: EvalReport,
}

/// Full-disambiguation error on the evaluation slice after training on
/// each nested slice of the pool.
pub fn learning_curve(
    split: &LearningCurveSplit,
    tagset: &TagSet,
    config: &TrainConfig,
    source: &CandidateSource,
    mode: Mode,
) -> Result<Vec<CurvePoint>> {
    (0..split.len())
        .into_par_iter()
        .map(|i| {
            let train = split.slice(i);
            let model = Model::train(train, tagset, config)?;
            Ok(CurvePoint {
                train_words: crate::corpus::word_count(train),
                report: evaluate(&model, &split.eval, source, 1.0, mode)?,
            })
        })
        .collect()
}

/// Standard normal quantile, by Acklam's rational approximation (relative
/// error below 1.2e-9).
pub fn normal_quantile(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e1,
        2.209460984245205e2,
        -2.759285104469687e2,
        1.383577518672690e2,
        -3.066479806614716e1,
        2.506628277459239,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e1,
        1.615858368580409e2,
        -1.556989798598866e2,
        6.680131188771972e1,
        -1.328068155288572e1,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-3,
        -3.223964580411365e-1,
        -2.400758277161838,
        -2.549732539343734,
        4.374664141464968,
        2.938163982698783,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-3,
        3.224671290700398e-1,
        2.445134137142996,
        3.754408661907416,
    ];
    const LOW: f64 = 0.02425;

    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    if p < LOW {
        tail((-2.0 * p.ln()).sqrt())
    } else if p > 1.0 - LOW {
        -tail((-2.0 * (1.0 - p).ln()).sqrt())
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    }
}

fn check_open_unit(name: &'static str, x: f64) -> Result<()> {
    if x > 0.0 && x < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(name, format!("{x} is outside (0, 1)")))
    }
}

/// Half-width of the normal-approximation confidence interval for a rate
/// `rate` observed over `n` trials.
pub fn binomial_ci_halfwidth(rate: f64, n: usize, level: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::invalid("rate", format!("{rate} is outside [0, 1]")));
    }
    if n == 0 {
        return Err(Error::invalid("n", "needs at least one trial"));
    }
    check_open_unit("level", level)?;
    let z = normal_quantile(1.0 - (1.0 - level) / 2.0);
    Ok(z * (rate * (1.0 - rate) / n as f64).sqrt())
}

/// Largest observed disagreement rate over `n` items at which the null
/// hypothesis "true rate is `p0`" is rejected at level `alpha`.
pub fn agreement_critical_rate(n: usize, p0: f64, alpha: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("n", "needs at least one item"));
    }
    check_open_unit("p0", p0)?;
    check_open_unit("alpha", alpha)?;
    Ok(p0 + normal_quantile(alpha) * (p0 * (1.0 - p0) / n as f64).sqrt())
}

/// One-sided test of "annotators disagree at rate at least `p0`".
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgreementTest {
    pub n: usize,
    pub p0: f64,
    pub alpha: f64,
    pub critical_rate: f64,
    pub observed: f64,
    pub reject: bool,
}

impl AgreementTest {
    pub fn run(n: usize, p0: f64, alpha: f64, observed: f64) -> Result<Self> {
        let critical_rate = agreement_critical_rate(n, p0, alpha)?;
        Ok(AgreementTest {
            n,
            p0,
            alpha,
            critical_rate,
            observed,
            reject: observed <= critical_rate,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Difference {
    /// 1-based sentence and token numbers.
    pub sentence: usize,
    pub token: usize,
    pub surface: String,
    pub left: TagId,
    pub right: TagId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Disagreement {
    pub words: usize,
    pub rate: f64,
    pub differences: Vec<Difference>,
}

impl Disagreement {
    pub fn listing(&self, tagset: &TagSet) -> String {
        let mut out = String::new();
        for d in &self.differences {
            let _ = writeln!(
                out,
                "{}:{}\t{}\t{}\t{}",
                d.sentence,
                d.token,
                d.surface,
                tagset.symbol(d.left),
                tagset.symbol(d.right)
            );
        }
        out
    }
}

/// Positions where two annotations of the same tokens differ.
pub fn disagreement_rate(a: &[AnnotatedSentence], b: &[AnnotatedSentence]) -> Result<Disagreement> {
    if a.len() != b.len() {
        return Err(mismatch(
            a.len().min(b.len()),
            0,
            format!("{} sentences against {}", a.len(), b.len()),
        ));
    }
    let mut words = 0;
    let mut differences = Vec::new();
    for (i, (x, y)) in a.iter().zip(b).enumerate() {
        if x.len() != y.len() {
            return Err(mismatch(
                i,
                x.len().min(y.len()),
                format!("{} tokens against {}", x.len(), y.len()),
            ));
        }
        for (j, ((tx, gx), (ty, gy))) in x.iter().zip(y.iter()).enumerate() {
            if tx.surface != ty.surface {
                return Err(mismatch(i, j, format!("`{}` against `{}`", tx.surface, ty.surface)));
            }
            words += 1;
            if gx != gy {
                differences.push(Difference {
                    sentence: i + 1,
                    token: j + 1,
                    surface: tx.surface.clone(),
                    left: gx,
                    right: gy,
                });
            }
        }
    }
    let rate = if words == 0 {
        0.0
    } else {
        differences.len() as f64 / words as f64
    };
    Ok(Disagreement {
        words,
        rate,
        differences,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReportFormat {
    #[default]
    Table,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "table" => Ok(ReportFormat::Table),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(Error::invalid("format", format!("`{other}` is neither `table` nor `csv`"))),
        }
    }
}

fn percent(x: f64) -> String {
    format!("{:.2}%", 100.0 * x)
}

pub fn render_report(report: &EvalReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Csv => format!(
            "words,errors,error_rate,ambiguity,unseen_word_error_rate,lexical_omission_rate\n{},{},{},{},{},{}\n",
            report.words,
            report.errors,
            report.error_rate,
            report.ambiguity,
            report.unseen_word_error_rate,
            report.lexical_omission_rate
        ),
        ReportFormat::Table => format!(
            "words            {}\nerrors           {}\nerror rate       {}\ntags/word        {:.3}\nunseen words     {}\nlexical omission {}\n",
            report.words,
            report.errors,
            percent(report.error_rate),
            report.ambiguity,
            percent(report.unseen_word_error_rate),
            percent(report.lexical_omission_rate)
        ),
    }
}

impl TradeoffTable {
    pub fn render(&self, format: ReportFormat) -> String {
        let mut out = String::new();
        match format {
            ReportFormat::Csv => {
                out.push_str("threshold,ambiguity,error_rate\n");
                for r in &self.rows {
                    let _ = writeln!(out, "{},{},{}", r.threshold, r.report.ambiguity, r.report.error_rate);
                }
            }
            ReportFormat::Table => {
                let _ = writeln!(out, "{:>9}  {:>9}  {:>8}", "threshold", "tags/word", "error");
                for r in &self.rows {
                    let _ = writeln!(
                        out,
                        "{:>9.4}  {:>9.3}  {:>8}",
                        r.threshold,
                        r.report.ambiguity,
                        percent(r.report.error_rate)
                    );
                }
            }
        }
        out
    }
}

pub fn render_curve(points: &[CurvePoint], format: ReportFormat) -> String {
    let mut out = String::new();
    match format {
        ReportFormat::Csv => {
            out.push_str("train_words,error_rate\n");
            for p in points {
                let _ = writeln!(out, "{},{}", p.train_words, p.report.error_rate);
            }
        }
        ReportFormat::Table => {
            let _ = writeln!(out, "{:>11}  {:>8}", "train words", "error");
            for p in points {
                let _ = writeln!(out, "{:>11}  {:>8}", p.train_words, percent(p.report.error_rate));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{parse_annotated, Token};
    use crate::lexmodel::SmoothingConfig;

    fn tags() -> TagSet {
        TagSet::from_symbols(["D", "N", "V"])
    }

    /// Ten words; every cohort retains only the first listed candidate.
    fn fixture() -> (Vec<AnnotatedSentence>, Vec<Vec<Cohort>>, LexicalModel) {
        let ts = tags();
        let train = parse_annotated("a\tD\ncat\tN\nsat\tV\ndog\tN\nran\tV\n", "t", &ts).unwrap();
        let lex = LexicalModel::train(&train, &ts, SmoothingConfig::default()).unwrap();
        let gold = parse_annotated(
            "a\tD\ncat\tN\nsat\tV\n\na\tD\ndog\tN\nran\tV\n\na\tD\nyak\tN\nsat\tV\ndog\tN\n",
            "g",
            &ts,
        )
        .unwrap();
        // planted: "sat" (seen) tagged N at 3:3, "yak" (unseen) tagged V at 3:2
        let wrong = [(2, 1, 2), (2, 2, 1)];
        let output = gold
            .iter()
            .enumerate()
            .map(|(i, s)| {
                s.iter()
                    .enumerate()
                    .map(|(j, (tok, g))| {
                        let tag = wrong
                            .iter()
                            .find(|w| (w.0, w.1) == (i, j))
                            .map_or(g, |w| TagId(w.2));
                        let mut c = Cohort::new(tok.clone(), vec![tag]);
                        c.retained = vec![tag];
                        c
                    })
                    .collect()
            })
            .collect();
        (gold, output, lex)
    }

    #[test]
    fn planted_errors() {
        let (gold, output, lex) = fixture();
        let r = score(&gold, &output, &lex).unwrap();
        assert_eq!((r.words, r.errors), (10, 2));
        assert_eq!(r.error_rate, 0.2);
        assert_eq!(r.unseen_word_error_rate, 0.1);
        assert_eq!(r.lexical_omission_rate, 0.2);
        assert_eq!(r.ambiguity, 1.0);
    }

    #[test]
    fn perfect_output_and_permutation() {
        let (gold, mut output, lex) = fixture();
        for c in output.iter_mut().flatten() {
            c.retained = vec![TagId(0), TagId(1), TagId(2)];
        }
        let r = score(&gold, &output, &lex).unwrap();
        assert_eq!(r.error_rate, 0.0);
        assert_eq!(r.ambiguity, 3.0);

        let (gold, output, lex) = fixture();
        let base = score(&gold, &output, &lex).unwrap();
        let (mut g2, mut o2) = (gold.clone(), output.clone());
        g2.reverse();
        o2.reverse();
        assert_eq!(score(&g2, &o2, &lex).unwrap(), base);
    }

    #[test]
    fn tally_rates() {
        let t = Tally { words: 55_000, errors: 1, retained: 55_000, ..Tally::default() };
        assert_eq!(t.report().error_rate, 1.0 / 55_000.0);
    }

    #[test]
    fn mismatches_are_located() {
        let (gold, mut output, lex) = fixture();
        output[1][2].token = Token::new("walked");
        match score(&gold, &output, &lex) {
            Err(Error::Mismatch { sentence, token, .. }) => assert_eq!((sentence, token), (2, 3)),
            other => panic!("{other:?}"),
        }
        output[1].pop();
        assert!(score(&gold, &output[..1], &lex).is_err());
    }

    /// Standard normal CDF by Simpson integration of the density.
    fn cdf(x: f64) -> f64 {
        let lo = -12.0;
        let n = 20_000;
        let h = (x - lo) / n as f64;
        let f = |t: f64| (-t * t / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let mut s = f(lo) + f(x);
        for i in 1..n {
            s += f(lo + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    #[test]
    fn quantile_inverts_the_cdf() {
        for p in [1e-6, 0.001, 0.02, 0.05, 0.3, 0.5, 0.7, 0.95, 0.975, 0.999] {
            let q = normal_quantile(p);
            assert!((cdf(q) - p).abs() < 1e-8 * p.max(1e-2), "p={p}");
        }
        assert_eq!(normal_quantile(0.5), 0.0);
        assert!((normal_quantile(0.975) - 1.959964).abs() < 1e-6);
        assert!((normal_quantile(0.05) + 1.6449).abs() < 1e-4);
    }

    #[test]
    fn confidence_halfwidths() {
        let a = binomial_ci_halfwidth(0.0472, 55_000, 0.95).unwrap();
        assert!((a - 0.00177).abs() < 5e-6, "{a}");
        let b = binomial_ci_halfwidth(0.0351, 35_000, 0.95).unwrap();
        assert!((b - 0.00193).abs() < 5e-6, "{b}");
        assert_eq!(binomial_ci_halfwidth(0.0, 10, 0.95).unwrap(), 0.0);
        assert!(binomial_ci_halfwidth(0.1, 0, 0.95).is_err());
    }

    #[test]
    fn agreement_test() {
        let c = agreement_critical_rate(55_000, 0.03, 0.05).unwrap();
        assert!((c - 0.0288).abs() < 1e-4, "{c}");
        let t = AgreementTest::run(55_000, 0.008, 0.05, 0.007).unwrap();
        assert!((t.critical_rate - 0.007375).abs() < 1e-6, "{}", t.critical_rate);
        assert!(t.reject);
        assert!(!AgreementTest::run(55_000, 0.008, 0.05, 0.0074).unwrap().reject);
        assert_eq!(agreement_critical_rate(100, 0.2, 0.5).unwrap(), 0.2);
        assert!(agreement_critical_rate(100, 0.0, 0.05).is_err());
    }

    #[test]
    fn disagreement() {
        let ts = tags();
        let words: String = (0..1000).map(|i| format!("w{i}\tN\n")).collect();
        let a = parse_annotated(&words, "a", &ts).unwrap();
        let mut b = a.clone();
        for k in 0..7 {
            b[0].gold[k * 100 + 3] = TagId(2);
        }
        let d = disagreement_rate(&a, &b).unwrap();
        assert_eq!(d.rate, 0.007);
        assert_eq!(d.differences.len(), 7);
        assert_eq!(d.differences[0].token, 4);
        assert!(d.listing(&ts).starts_with("1:4\tw3\tN\tV\n"));
        assert_eq!(disagreement_rate(&a, &a).unwrap().rate, 0.0);
        b[0].tokens[5] = Token::new("other");
        assert!(disagreement_rate(&a, &b).is_err());
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn halfwidth_scales_with_root_n(p in 0.0f64..=1.0, n in 1usize..1_000_000) {
                let a = binomial_ci_halfwidth(p, n, 0.95).unwrap();
                let b = binomial_ci_halfwidth(p, 4 * n, 0.95).unwrap();
                prop_assert!((b - a / 2.0).abs() < 1e-12);
            }

            #[test]
            fn critical_rate_is_monotone(n in 10usize..100_000, p0 in 0.01f64..0.2, alpha in 0.01f64..0.49) {
                let base = agreement_critical_rate(n, p0, alpha).unwrap();
                prop_assert!(agreement_critical_rate(n, p0, alpha + 0.01).unwrap() > base);
                prop_assert!(agreement_critical_rate(n * 2, p0, alpha).unwrap() > base);
                prop_assert!(agreement_critical_rate(n, p0 + 0.001, alpha).unwrap() > base);
            }

            #[test]
            fn quantile_is_increasing(p in 1e-9f64..0.999, dp in 1e-6f64..1e-3) {
                prop_assert!(normal_quantile((p + dp).min(1.0 - 1e-12)) >= normal_quantile(p));
            }
        }
    }
}
