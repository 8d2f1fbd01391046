//! Attachment scoring and paired significance testing.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::treebank::{Sentence, Treebank};

#[derive(Debug, Clone, Copy)]
pub struct ScoreOptions {
    /// Leave punctuation tokens out of every count.
    pub exclude_punct: bool,
}

impl Default for ScoreOptions {
    fn default() -> Self {
        ScoreOptions { exclude_punct: true }
    }
}

/// Counts for one key in a precision/recall breakdown.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PrfCounts {
    pub gold: u64,
    pub predicted: u64,
    pub correct: u64,
}

impl PrfCounts {
    pub fn precision(&self) -> f64 {
        if self.predicted == 0 {
            0.0
        } else {
            100.0 * self.correct as f64 / self.predicted as f64
        }
    }

    pub fn recall(&self) -> f64 {
        if self.gold == 0 {
            0.0
        } else {
            100.0 * self.correct as f64 / self.gold as f64
        }
    }

    pub fn f1(&self) -> f64 {
        let p = self.precision();
        let r = self.recall();
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AccuracyCounts {
    pub correct: u64,
    pub total: u64,
}

impl AccuracyCounts {
    pub fn accuracy(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            100.0 * self.correct as f64 / self.total as f64
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Evaluation {
    pub total_tokens: u64,
    pub scored_tokens: u64,
    pub uas_correct: u64,
    pub las_correct: u64,
    /// Labeled attachment broken down by dependency label.
    pub per_label: BTreeMap<String, PrfCounts>,
    /// Head attachment accuracy by the modifier's tag.
    pub per_modifier_pos: BTreeMap<String, AccuracyCounts>,
    /// Attachment precision/recall by the tag of the chosen head.
    pub per_head_pos: BTreeMap<String, PrfCounts>,
}

impl Evaluation {
    pub fn uas(&self) -> f64 {
        if self.scored_tokens == 0 {
            0.0
        } else {
            100.0 * self.uas_correct as f64 / self.scored_tokens as f64
        }
    }

    pub fn las(&self) -> f64 {
        if self.scored_tokens == 0 {
            0.0
        } else {
            100.0 * self.las_correct as f64 / self.scored_tokens as f64
        }
    }
}

fn is_punct(form: &str, upos: &str) -> bool {
    upos == "PUNCT"
        || upos == "."
        || (!form.is_empty() && form.chars().all(|c| c.is_ascii_punctuation()))
}

fn check_aligned(gold: &Treebank, pred: &Treebank) -> Result<()> {
    if gold.sentences.len() != pred.sentences.len() {
        return Err(Error::data(format!(
            "treebanks have {} and {} sentences",
            gold.sentences.len(),
            pred.sentences.len()
        )));
    }
    for (i, (g, p)) in gold.sentences.iter().zip(pred.sentences.iter()).enumerate() {
        if g.len() != p.len() {
            return Err(Error::data(format!(
                "sentence {}: gold has {} tokens, prediction has {}",
                i + 1,
                g.len(),
                p.len()
            )));
        }
    }
    Ok(())
}

fn head_pos_of(sentence: &Sentence, head: usize) -> Result<String> {
    if head == 0 {
        return Ok("ROOT".to_string());
    }
    if head > sentence.len() {
        return Err(Error::data(format!("head index {} out of range", head)));
    }
    Ok(sentence.token(head).upos.clone())
}

/// Scores `pred` against `gold` token by token. Tokens without a gold head
/// are never scored; tokens without a predicted head count as wrong.
pub fn score(gold: &Treebank, pred: &Treebank, options: &ScoreOptions) -> Result<Evaluation> {
    check_aligned(gold, pred)?;
    let mut eval = Evaluation::default();
    for (g, p) in gold.sentences.iter().zip(pred.sentences.iter()) {
        for (gt, pt) in g.tokens.iter().zip(p.tokens.iter()) {
            eval.total_tokens += 1;
            if options.exclude_punct && is_punct(&gt.form, &gt.upos) {
                continue;
            }
            let Some(gold_head) = gt.head else { continue };
            eval.scored_tokens += 1;
            let head_correct = pt.head == Some(gold_head);
            if head_correct {
                eval.uas_correct += 1;
            }
            let gold_label = gt.deprel.as_deref().unwrap_or("");
            let label_correct = head_correct && pt.deprel.as_deref() == Some(gold_label);
            if label_correct {
                eval.las_correct += 1;
            }

            let entry = eval.per_label.entry(gold_label.to_string()).or_default();
            entry.gold += 1;
            if label_correct {
                entry.correct += 1;
            }
            if let Some(pl) = pt.deprel.as_deref() {
                eval.per_label.entry(pl.to_string()).or_default().predicted += 1;
            }

            let acc = eval.per_modifier_pos.entry(gt.upos.clone()).or_default();
            acc.total += 1;
            if head_correct {
                acc.correct += 1;
            }

            let gold_head_pos = head_pos_of(g, gold_head)?;
            let entry = eval.per_head_pos.entry(gold_head_pos).or_default();
            entry.gold += 1;
            if head_correct {
                entry.correct += 1;
            }
            if let Some(ph) = pt.head {
                let pred_head_pos = head_pos_of(p, ph)?;
                eval.per_head_pos.entry(pred_head_pos).or_default().predicted += 1;
            }
        }
    }
    Ok(eval)
}

/// Human-readable report.
pub fn render_text(eval: &Evaluation) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "tokens scored: {} of {}\n",
        eval.scored_tokens, eval.total_tokens
    ));
    out.push_str(&format!(
        "UAS: {:.2} ({}/{})\n",
        eval.uas(),
        eval.uas_correct,
        eval.scored_tokens
    ));
    out.push_str(&format!(
        "LAS: {:.2} ({}/{})\n",
        eval.las(),
        eval.las_correct,
        eval.scored_tokens
    ));
    out.push_str("\nby label (precision / recall / f1, gold count):\n");
    for (label, c) in &eval.per_label {
        out.push_str(&format!(
            "  {:<12} {:>6.2} {:>6.2} {:>6.2}  {}\n",
            label,
            c.precision(),
            c.recall(),
            c.f1(),
            c.gold
        ));
    }
    out.push_str("\nby modifier tag (attachment accuracy):\n");
    for (pos, c) in &eval.per_modifier_pos {
        out.push_str(&format!(
            "  {:<12} {:>6.2}  {}/{}\n",
            pos,
            c.accuracy(),
            c.correct,
            c.total
        ));
    }
    out.push_str("\nby head tag (precision / recall / f1, gold count):\n");
    for (pos, c) in &eval.per_head_pos {
        out.push_str(&format!(
            "  {:<12} {:>6.2} {:>6.2} {:>6.2}  {}\n",
            pos,
            c.precision(),
            c.recall(),
            c.f1(),
            c.gold
        ));
    }
    out
}

/// Machine-readable report: one tab-separated record per line.
pub fn render_tsv(eval: &Evaluation) -> String {
    let mut out = String::new();
    out.push_str(&format!("summary\ttotal_tokens\t{}\n", eval.total_tokens));
    out.push_str(&format!("summary\tscored_tokens\t{}\n", eval.scored_tokens));
    out.push_str(&format!("summary\tuas_correct\t{}\n", eval.uas_correct));
    out.push_str(&format!("summary\tlas_correct\t{}\n", eval.las_correct));
    out.push_str(&format!("summary\tuas\t{:.4}\n", eval.uas()));
    out.push_str(&format!("summary\tlas\t{:.4}\n", eval.las()));
    for (label, c) in &eval.per_label {
        out.push_str(&format!(
            "label\t{}\t{:.4}\t{:.4}\t{:.4}\t{}\t{}\t{}\n",
            label,
            c.precision(),
            c.recall(),
            c.f1(),
            c.gold,
            c.predicted,
            c.correct
        ));
    }
    for (pos, c) in &eval.per_modifier_pos {
        out.push_str(&format!(
            "modifier_pos\t{}\t{:.4}\t{}\t{}\n",
            pos,
            c.accuracy(),
            c.correct,
            c.total
        ));
    }
    for (pos, c) in &eval.per_head_pos {
        out.push_str(&format!(
            "head_pos\t{}\t{:.4}\t{:.4}\t{:.4}\t{}\t{}\t{}\n",
            pos,
            c.precision(),
            c.recall(),
            c.f1(),
            c.gold,
            c.predicted,
            c.correct
        ));
    }
    out
}

/// Per-token paired attachment outcomes of two predictions against one gold.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PairedCounts {
    pub both: u64,
    /// First correct, second wrong.
    pub only_first: u64,
    /// Second correct, first wrong.
    pub only_second: u64,
    pub neither: u64,
}

/// Tallies per-token agreement of two predictions against the gold trees.
/// Correctness is head attachment; with `labeled` the dependency label must
/// match as well.
pub fn paired_counts(
    gold: &Treebank,
    first: &Treebank,
    second: &Treebank,
    options: &ScoreOptions,
    labeled: bool,
) -> Result<PairedCounts> {
    check_aligned(gold, first)?;
    check_aligned(gold, second)?;
    let mut counts = PairedCounts::default();
    for ((g, a), b) in gold
        .sentences
        .iter()
        .zip(first.sentences.iter())
        .zip(second.sentences.iter())
    {
        for ((gt, at), bt) in g.tokens.iter().zip(a.tokens.iter()).zip(b.tokens.iter()) {
            if options.exclude_punct && is_punct(&gt.form, &gt.upos) {
                continue;
            }
            let Some(gold_head) = gt.head else { continue };
            let mut a_ok = at.head == Some(gold_head);
            let mut b_ok = bt.head == Some(gold_head);
            if labeled {
                a_ok = a_ok && at.deprel == gt.deprel;
                b_ok = b_ok && bt.deprel == gt.deprel;
            }
            match (a_ok, b_ok) {
                (true, true) => counts.both += 1,
                (true, false) => counts.only_first += 1,
                (false, true) => counts.only_second += 1,
                (false, false) => counts.neither += 1,
            }
        }
    }
    Ok(counts)
}

/// Two-sided exact binomial test on the discordant pair counts. Returns the
/// probability of a split at least this lopsided under a fair coin.
pub fn mcnemar_exact(only_first: u64, only_second: u64) -> f64 {
    let n = only_first + only_second;
    if n == 0 || only_first == only_second {
        return 1.0;
    }
    let k = only_first.min(only_second);
    // ln i! for i in 0..=n.
    let mut ln_fact = Vec::with_capacity(n as usize + 1);
    ln_fact.push(0.0f64);
    for i in 1..=n {
        ln_fact.push(ln_fact[i as usize - 1] + (i as f64).ln());
    }
    let ln_half_n = n as f64 * 0.5f64.ln();
    // log-sum-exp over the lower tail.
    let terms: Vec<f64> = (0..=k)
        .map(|i| {
            ln_fact[n as usize] - ln_fact[i as usize] - ln_fact[(n - i) as usize] + ln_half_n
        })
        .collect();
    let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = terms.iter().map(|t| (t - max).exp()).sum();
    let log_tail = max + sum.ln();
    let p = 2.0 * log_tail.exp();
    p.min(1.0)
}

/// Complementary error function, accurate to about 1.5e-7 for x >= 0.
fn erfc(x: f64) -> f64 {
    let t = 1.0 / (1.0 + 0.3275911 * x);
    let poly = t
        * (0.254829592
            + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
    poly * (-x * x).exp()
}

/// Chi-squared approximation with continuity correction; one degree of
/// freedom, so the p-value reduces to a complementary error function.
pub fn mcnemar_chi2(only_first: u64, only_second: u64) -> f64 {
    let n = only_first + only_second;
    if n == 0 {
        return 1.0;
    }
    let d = (only_first as f64 - only_second as f64).abs();
    let num = (d - 1.0).max(0.0);
    let x = num * num / n as f64;
    erfc((x / 2.0).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::treebank::Sentence;

    fn bank(rows: &[&[(&str, &str, usize, &str)]]) -> Treebank {
        Treebank {
            language: "xx".to_string(),
            sentences: rows.iter().map(|r| Sentence::from_rows("xx", r)).collect(),
        }
    }

    fn gold_bank() -> Treebank {
        bank(&[
            &[
                ("the", "DET", 2, "det"),
                ("cat", "NOUN", 3, "nsubj"),
                ("sleeps", "VERB", 0, "root"),
                (".", "PUNCT", 3, "punct"),
            ],
            &[("dogs", "NOUN", 2, "nsubj"), ("bark", "VERB", 0, "root")],
        ])
    }

    #[test]
    fn counts_match_hand_scoring() {
        let gold = gold_bank();
        // First sentence: head of "the" wrong; label of "cat" wrong.
        let pred = bank(&[
            &[
                ("the", "DET", 3, "det"),
                ("cat", "NOUN", 3, "dobj"),
                ("sleeps", "VERB", 0, "root"),
                (".", "PUNCT", 3, "punct"),
            ],
            &[("dogs", "NOUN", 2, "nsubj"), ("bark", "VERB", 0, "root")],
        ]);
        let eval = score(&gold, &pred, &ScoreOptions { exclude_punct: true }).unwrap();
        assert_eq!(eval.total_tokens, 6);
        assert_eq!(eval.scored_tokens, 5);
        assert_eq!(eval.uas_correct, 4);
        assert_eq!(eval.las_correct, 3);
        assert!((eval.uas() - 80.0).abs() < 1e-9);
        assert!((eval.las() - 60.0).abs() < 1e-9);

        let det = eval.per_label.get("det").unwrap();
        assert_eq!((det.gold, det.predicted, det.correct), (1, 1, 0));
        let nsubj = eval.per_label.get("nsubj").unwrap();
        assert_eq!((nsubj.gold, nsubj.predicted, nsubj.correct), (2, 1, 1));
        let dobj = eval.per_label.get("dobj").unwrap();
        assert_eq!((dobj.gold, dobj.predicted, dobj.correct), (0, 1, 0));
        assert!((dobj.precision() - 0.0).abs() < 1e-9);

        let noun = eval.per_modifier_pos.get("NOUN").unwrap();
        assert_eq!((noun.correct, noun.total), (2, 2));
        let det_pos = eval.per_modifier_pos.get("DET").unwrap();
        assert_eq!((det_pos.correct, det_pos.total), (0, 1));

        let verb_heads = eval.per_head_pos.get("VERB").unwrap();
        // Gold heads tagged VERB: cat->sleeps, dogs->bark. Predicted: the,
        // cat, dogs. Correct: cat, dogs.
        assert_eq!((verb_heads.gold, verb_heads.predicted, verb_heads.correct), (2, 3, 2));
        let root_heads = eval.per_head_pos.get("ROOT").unwrap();
        assert_eq!((root_heads.gold, root_heads.predicted, root_heads.correct), (2, 2, 2));
    }

    #[test]
    fn punctuation_toggle_changes_scored_set() {
        let gold = gold_bank();
        let eval = score(&gold, &gold, &ScoreOptions { exclude_punct: false }).unwrap();
        assert_eq!(eval.scored_tokens, 6);
        assert_eq!(eval.uas_correct, 6);
        assert!((eval.uas() - 100.0).abs() < 1e-9);
    }

    #[test]
    fn shape_mismatch_names_the_sentence() {
        let gold = gold_bank();
        let pred = bank(&[
            &[
                ("the", "DET", 2, "det"),
                ("cat", "NOUN", 3, "nsubj"),
                ("sleeps", "VERB", 0, "root"),
                (".", "PUNCT", 3, "punct"),
            ],
            &[("dogs", "NOUN", 2, "nsubj")],
        ]);
        let err = score(&gold, &pred, &ScoreOptions::default()).unwrap_err();
        assert!(err.to_string().contains("sentence 2"));
    }

    #[test]
    fn renders_are_stable() {
        let gold = gold_bank();
        let eval = score(&gold, &gold, &ScoreOptions::default()).unwrap();
        let text = render_text(&eval);
        assert!(text.contains("UAS: 100.00"));
        assert!(text.contains("nsubj"));
        let tsv = render_tsv(&eval);
        assert!(tsv.contains("summary\tuas\t100.0000"));
        assert!(tsv.contains("label\tnsubj\t"));
        assert!(tsv.contains("modifier_pos\tNOUN\t"));
    }

    #[test]
    fn paired_counts_split_tokens_four_ways() {
        let gold = gold_bank();
        let first = bank(&[
            &[
                ("the", "DET", 2, "det"),
                ("cat", "NOUN", 1, "nsubj"),
                ("sleeps", "VERB", 0, "root"),
                (".", "PUNCT", 3, "punct"),
            ],
            &[("dogs", "NOUN", 2, "nsubj"), ("bark", "VERB", 0, "root")],
        ]);
        let second = bank(&[
            &[
                ("the", "DET", 3, "det"),
                ("cat", "NOUN", 3, "nsubj"),
                ("sleeps", "VERB", 0, "root"),
                (".", "PUNCT", 3, "punct"),
            ],
            &[("dogs", "NOUN", 2, "nsubj"), ("bark", "VERB", 0, "dep")],
        ]);
        let c = paired_counts(&gold, &first, &second, &ScoreOptions::default(), false).unwrap();
        assert_eq!(c.both, 3);
        assert_eq!(c.only_first, 1);
        assert_eq!(c.only_second, 1);
        assert_eq!(c.neither, 0);
        // Labeled counting demotes the mislabeled but correctly attached token.
        let c = paired_counts(&gold, &first, &second, &ScoreOptions::default(), true).unwrap();
        assert_eq!(c.both, 2);
        assert_eq!(c.only_first, 2);
        assert_eq!(c.only_second, 1);
        assert_eq!(c.neither, 0);
    }

    #[test]
    fn exact_test_matches_hand_computed_tail() {
        // Lower tail of Binomial(10, 1/2) up to 1, doubled:
        // 2 * (1 + 10) / 1024.
        let p = mcnemar_exact(1, 9);
        assert!((p - 0.021484375).abs() < 1e-12);
        assert_eq!(mcnemar_exact(9, 1), p);
        assert_eq!(mcnemar_exact(0, 0), 1.0);
        assert_eq!(mcnemar_exact(5, 5), 1.0);
        // Large counts stay finite and in range.
        let p = mcnemar_exact(5000, 5200);
        assert!(p > 0.0 && p < 1.0);
    }

    #[test]
    fn chi2_variant_tracks_reference_values() {
        assert_eq!(mcnemar_chi2(0, 0), 1.0);
        assert!((mcnemar_chi2(5, 5) - 1.0).abs() < 1e-6);
        // (|1-9|-1)^2/10 = 4.9; reference erfc(sqrt(2.45)) from a math
        // library.
        let p = mcnemar_chi2(1, 9);
        assert!((p - 0.026856695507524425).abs() < 1e-6);
    }
}
