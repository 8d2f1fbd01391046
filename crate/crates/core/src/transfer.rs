//! Cross-lingual transfer: source selection, lexicalization, projection of
//! trees through word alignments, and the staged retraining loops.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use crate::alignment::BilingualLexicon;
use crate::error::{Error, Result};
use crate::learning::{decode_sentence, parse_treebank, train, Model, TrainOptions, TrainReport};
use crate::scoring::{ClusterContext, FamilySet};
use crate::transition::Constraints;
use crate::treebank::{is_projective, validate_tree, write_sentence, Sentence, Treebank};

/// Word-order features used to judge typological closeness.
pub const WALS_FEATURES: [&str; 6] = ["82A", "83A", "85A", "86A", "87A", "88A"];

pub const DEFAULT_SELECT_THRESHOLD: usize = 4;

/// Per-language values for the features in [`WALS_FEATURES`].
#[derive(Debug, Clone, Default)]
pub struct WalsTable {
    values: BTreeMap<String, BTreeMap<String, String>>,
}

impl WalsTable {
    pub fn languages(&self) -> impl Iterator<Item = &str> {
        self.values.keys().map(String::as_str)
    }

    pub fn contains(&self, lang: &str) -> bool {
        self.values.contains_key(lang)
    }

    pub fn value(&self, lang: &str, feature: &str) -> Option<&str> {
        self.values.get(lang).and_then(|m| m.get(feature)).map(String::as_str)
    }

    /// Number of features where both languages have a value and the values
    /// agree.
    pub fn shared_features(&self, a: &str, b: &str) -> usize {
        WALS_FEATURES
            .iter()
            .filter(|f| match (self.value(a, f), self.value(b, f)) {
                (Some(x), Some(y)) => x == y,
                _ => false,
            })
            .count()
    }

    /// Languages sharing at least `threshold` feature values with the
    /// target, sorted by name.
    pub fn select_sources(&self, target: &str, threshold: usize) -> Result<Vec<String>> {
        if !self.contains(target) {
            return Err(Error::data(format!("language {} not in the typology table", target)));
        }
        Ok(self
            .values
            .keys()
            .filter(|l| l.as_str() != target)
            .filter(|l| self.shared_features(target, l) >= threshold)
            .cloned()
            .collect())
    }
}

/// Reads a comma-separated table: a `lang` column plus one column per
/// feature in [`WALS_FEATURES`], in any order. Empty cells mean the value
/// is unknown.
pub fn read_wals<R: BufRead>(reader: R, source_name: &str) -> Result<WalsTable> {
    let mut lines = reader.lines();
    let header = match lines.next() {
        Some(h) => h?,
        None => return Err(Error::parse(source_name, 1, "empty table")),
    };
    let columns: Vec<&str> = header.trim_end().split(',').collect();
    if columns.first() != Some(&"lang") {
        return Err(Error::parse(source_name, 1, "first column must be lang"));
    }
    for c in &columns[1..] {
        if !WALS_FEATURES.contains(c) {
            return Err(Error::parse(source_name, 1, format!("unknown feature column {}", c)));
        }
    }
    let mut table = WalsTable::default();
    for (i, line) in lines.enumerate() {
        let line = line?;
        let lineno = i + 2;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.trim_end().split(',').collect();
        if cells.len() != columns.len() {
            return Err(Error::parse(
                source_name,
                lineno,
                format!("expected {} cells, found {}", columns.len(), cells.len()),
            ));
        }
        let lang = cells[0].trim();
        if lang.is_empty() {
            return Err(Error::parse(source_name, lineno, "empty language name"));
        }
        let entry = table.values.entry(lang.to_string()).or_default();
        for (c, v) in columns[1..].iter().zip(&cells[1..]) {
            let v = v.trim();
            if !v.is_empty() {
                entry.insert(c.to_string(), v.to_string());
            }
        }
    }
    Ok(table)
}

pub fn write_wals<W: Write>(writer: &mut W, table: &WalsTable) -> Result<()> {
    write!(writer, "lang")?;
    for f in WALS_FEATURES {
        write!(writer, ",{}", f)?;
    }
    writeln!(writer)?;
    for (lang, values) in &table.values {
        write!(writer, "{}", lang)?;
        for f in WALS_FEATURES {
            write!(writer, ",{}", values.get(f).map(String::as_str).unwrap_or(""))?;
        }
        writeln!(writer)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LexStats {
    pub translated: usize,
    /// Known words whose best translation is empty.
    pub untranslatable: usize,
    /// Words absent from the lexicon.
    pub missing: usize,
}

/// Fills each token's lexical value with its translation. Tokens the
/// lexicon cannot translate keep no lexical value.
pub fn lexicalize(treebank: &mut Treebank, lexicon: &BilingualLexicon) -> Result<LexStats> {
    if lexicon.src_lang != treebank.language {
        return Err(Error::data(format!(
            "lexicon translates {}, treebank is {}",
            lexicon.src_lang, treebank.language
        )));
    }
    let mut stats = LexStats::default();
    for sentence in &mut treebank.sentences {
        for token in &mut sentence.tokens {
            match lexicon.translate(&token.form) {
                Some(t) => {
                    token.lexform = Some(t.to_string());
                    stats.translated += 1;
                }
                None => {
                    token.lexform = None;
                    if lexicon.contains(&token.form) {
                        stats.untranslatable += 1;
                    } else {
                        stats.missing += 1;
                    }
                }
            }
        }
    }
    Ok(stats)
}

/// Sets each token's lexical value to its own form, for same-language
/// training and parsing.
pub fn lexicalize_identity(treebank: &mut Treebank) {
    for sentence in &mut treebank.sentences {
        for token in &mut sentence.tokens {
            token.lexform = Some(token.form.clone());
        }
    }
}

/// A target sentence with heads copied over an alignment; possibly
/// incomplete.
#[derive(Debug, Clone)]
pub struct PartialTree {
    pub sentence: Sentence,
    pub attached: usize,
    pub total: usize,
    pub full_projective: bool,
}

/// Recomputes the bookkeeping fields from the sentence's annotations.
pub fn partial_from_sentence(sentence: Sentence) -> PartialTree {
    let attached = sentence.annotated_count();
    let total = sentence.len();
    let full_projective = attached == total
        && total > 0
        && validate_tree(&sentence, true).is_ok()
        && is_projective(&sentence).unwrap_or(false);
    PartialTree { sentence, attached, total, full_projective }
}

/// Copies the source tree onto the target sentence through one-to-one
/// alignment links (`(source, target)` pairs, zero-based). Tokens whose
/// source is unaligned, or whose source's head is unaligned, stay headless.
/// If several tokens end up attached to the root, only the leftmost keeps
/// its head.
pub fn project(
    source: &Sentence,
    target: &Sentence,
    links: &[(usize, usize)],
) -> Result<PartialTree> {
    let mut src_to_tgt: BTreeMap<usize, usize> = BTreeMap::new();
    let mut seen_tgt: BTreeSet<usize> = BTreeSet::new();
    for &(s, t) in links {
        if s >= source.len() || t >= target.len() {
            return Err(Error::data(format!("alignment link {}-{} out of range", s, t)));
        }
        if src_to_tgt.insert(s, t).is_some() || !seen_tgt.insert(t) {
            return Err(Error::data(format!(
                "alignment link {}-{} reuses a token: alignments not intersected",
                s, t
            )));
        }
    }
    let mut sentence = target.clone();
    for token in &mut sentence.tokens {
        token.head = None;
        token.deprel = None;
    }
    for (&s, &t) in &src_to_tgt {
        let src_token = source.token(s + 1);
        let Some(src_head) = src_token.head else { continue };
        let projected_head = if src_head == 0 {
            Some(0)
        } else {
            src_to_tgt.get(&(src_head - 1)).map(|&k| k + 1)
        };
        let Some(head) = projected_head else { continue };
        if head == t + 1 {
            continue;
        }
        let target_token = &mut sentence.tokens[t];
        target_token.head = Some(head);
        target_token.deprel = src_token.deprel.clone();
    }
    let mut roots: Vec<usize> = sentence
        .tokens
        .iter()
        .filter(|tok| tok.head == Some(0))
        .map(|tok| tok.index)
        .collect();
    if roots.len() > 1 {
        roots.sort_unstable();
        log::debug!("projection produced {} root attachments, keeping token {}", roots.len(), roots[0]);
        for tok in &mut sentence.tokens {
            if tok.head == Some(0) && tok.index != roots[0] {
                tok.head = None;
                tok.deprel = None;
            }
        }
    }
    Ok(partial_from_sentence(sentence))
}

/// Density tiers, highest first. The first tier must be 100 and means a
/// complete, well-formed projective tree; lower tiers are attachment
/// percentages.
pub const DEFAULT_TIERS: [u32; 4] = [100, 90, 80, 70];

pub fn check_tiers(tiers: &[u32]) -> Result<()> {
    if tiers.first() != Some(&100) {
        return Err(Error::usage("density tiers must start at 100"));
    }
    if tiers.windows(2).any(|w| w[0] <= w[1]) {
        return Err(Error::usage("density tiers must strictly decrease"));
    }
    if tiers.iter().any(|&t| t == 0) {
        return Err(Error::usage("density tiers must be positive"));
    }
    Ok(())
}

/// The first tier the tree qualifies for, or none. Tier 100 requires a
/// complete projective tree, not just full attachment.
pub fn assign_tier(tree: &PartialTree, tiers: &[u32]) -> Option<u32> {
    if tree.total == 0 {
        return None;
    }
    for &tier in tiers {
        if tier == 100 {
            if tree.full_projective {
                return Some(tier);
            }
        } else if 100 * tree.attached as u64 >= tier as u64 * tree.total as u64 {
            return Some(tier);
        }
    }
    None
}

/// Writes partial trees with a density comment line per sentence.
pub fn write_partial_trees<W: Write>(writer: &mut W, trees: &[PartialTree]) -> Result<()> {
    for tree in trees {
        let comment = format!(
            "density={}/{} full_projective={}",
            tree.attached, tree.total, tree.full_projective
        );
        write_sentence(writer, &tree.sentence, &[comment])?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct DensityOptions {
    pub tiers: Vec<u32>,
    pub families: FamilySet,
    pub train: TrainOptions,
}

#[derive(Debug, Clone)]
pub struct StageReport {
    pub tier: u32,
    pub added: usize,
    pub pool: usize,
    pub train: Option<TrainReport>,
}

/// Staged training over projected trees. The first stage trains on the seed
/// trees plus the complete projective tier. Each later stage completes the
/// next tier's partial trees with the previous model decoding under
/// constraints, adds them to the pool, and retrains from scratch.
///
/// Completed trees can carry several root attachments, so single-root
/// validation is disabled throughout.
pub fn density_train(
    seed_trees: &[Sentence],
    partials: &[PartialTree],
    language: &str,
    clusters: &ClusterContext,
    options: &DensityOptions,
) -> Result<(Model, Vec<StageReport>)> {
    check_tiers(&options.tiers)?;
    let mut label_set: BTreeSet<String> = BTreeSet::new();
    for s in seed_trees {
        for t in &s.tokens {
            if let Some(d) = &t.deprel {
                label_set.insert(d.clone());
            }
        }
    }
    for p in partials {
        for t in &p.sentence.tokens {
            if let Some(d) = &t.deprel {
                label_set.insert(d.clone());
            }
        }
    }

    let mut by_tier: BTreeMap<u32, Vec<&PartialTree>> = BTreeMap::new();
    for p in partials {
        if let Some(tier) = assign_tier(p, &options.tiers) {
            by_tier.entry(tier).or_default().push(p);
        }
    }

    let mut pool: Vec<Sentence> = seed_trees.to_vec();
    pool.extend(
        by_tier
            .get(&100)
            .into_iter()
            .flatten()
            .map(|p| p.sentence.clone()),
    );
    if pool.is_empty() {
        return Err(Error::data("no seed or complete projective trees to start from"));
    }

    let base_options = TrainOptions {
        require_single_root: false,
        extra_labels: label_set.iter().cloned().collect(),
        ..options.train.clone()
    };
    let train_pool = |pool: &[Sentence], stage: usize| -> Result<(Model, TrainReport)> {
        let bank = Treebank { language: language.to_string(), sentences: pool.to_vec() };
        let stage_options = TrainOptions {
            seed: base_options.seed + stage as u64,
            ..base_options.clone()
        };
        train(&bank, options.families, clusters, &stage_options)
    };

    let (mut model, first_report) = train_pool(&pool, 0)?;
    let mut stages = vec![StageReport {
        tier: options.tiers[0],
        added: pool.len() - seed_trees.len(),
        pool: pool.len(),
        train: Some(first_report),
    }];

    for (stage, &tier) in options.tiers.iter().enumerate().skip(1) {
        let candidates = by_tier.get(&tier).map(Vec::as_slice).unwrap_or(&[]);
        if candidates.is_empty() {
            log::info!("tier {}: no partial trees, keeping previous model", tier);
            stages.push(StageReport { tier, added: 0, pool: pool.len(), train: None });
            continue;
        }
        for p in candidates {
            let mut labels = model.labels.clone();
            let constraints = Constraints::from_partial(&p.sentence, &mut labels);
            let outcome =
                decode_sentence(&model, &p.sentence, clusters, Some(&constraints), None)?;
            pool.push(outcome.tree);
        }
        let (next, report) = train_pool(&pool, stage)?;
        model = next;
        stages.push(StageReport {
            tier,
            added: candidates.len(),
            pool: pool.len(),
            train: Some(report),
        });
    }
    Ok((model, stages))
}

/// Parses the target corpus with a source-trained model, then retrains on
/// its own output with the target's words available as lexical values.
pub fn self_train(
    base: &Model,
    target: &Treebank,
    clusters: &ClusterContext,
    families: FamilySet,
    options: &TrainOptions,
) -> Result<(Model, TrainReport)> {
    let mut parsed = parse_treebank(base, target, clusters, 1)?;
    lexicalize_identity(&mut parsed);
    let retrain_options = TrainOptions { require_single_root: false, ..options.clone() };
    train(&parsed, families, clusters, &retrain_options)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn fixture_wals() -> WalsTable {
        read_wals(Cursor::new(crate::synth::FIXTURE_WALS_CSV), "test").unwrap()
    }

    #[test]
    fn source_selection_matches_hand_counts() {
        let table = fixture_wals();
        assert_eq!(table.shared_features("en", "de"), 4);
        assert_eq!(table.shared_features("en", "es"), 3);
        let expect: &[(&str, &[&str])] = &[
            ("en", &["de", "fr", "pt", "sv"]),
            ("de", &["en", "fr", "pt"]),
            ("es", &["fr", "it", "pt"]),
            ("fr", &["de", "en", "es", "it", "pt", "sv"]),
            ("it", &["es", "fr", "pt"]),
            ("pt", &["de", "en", "es", "fr", "it", "sv"]),
            ("sv", &["en", "fr", "pt"]),
        ];
        for (target, sources) in expect {
            let got = table.select_sources(target, DEFAULT_SELECT_THRESHOLD).unwrap();
            assert_eq!(&got, sources, "sources for {}", target);
        }
        assert!(table.select_sources("zz", 4).is_err());
    }

    #[test]
    fn wals_round_trip_preserves_missing_cells() {
        let csv = "lang,82A,83A,85A,86A,87A,88A\nxx,SV,,Prepositions,,AN,\n";
        let table = read_wals(Cursor::new(csv), "test").unwrap();
        assert_eq!(table.value("xx", "82A"), Some("SV"));
        assert_eq!(table.value("xx", "83A"), None);
        let mut out = Vec::new();
        write_wals(&mut out, &table).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), csv);
    }

    #[test]
    fn wals_rejects_malformed_tables() {
        assert!(read_wals(Cursor::new("tongue,82A\nxx,SV\n"), "t").is_err());
        assert!(read_wals(Cursor::new("lang,99Z\nxx,SV\n"), "t").is_err());
        let short = "lang,82A,83A,85A,86A,87A,88A\nxx,SV\n";
        assert!(read_wals(Cursor::new(short), "t").is_err());
    }

    #[test]
    fn lexicalize_fills_and_counts() {
        let mut bank = Treebank {
            language: "en".to_string(),
            sentences: vec![Sentence::from_rows(
                "en",
                &[
                    ("the", "DET", 2, "det"),
                    ("cat", "NOUN", 3, "nsubj"),
                    ("sleeps", "VERB", 0, "root"),
                ],
            )],
        };
        let mut lex = BilingualLexicon::new("en", "fr");
        lex.insert("the", Some("le"));
        lex.insert("cat", Some("chat"));
        lex.insert("sleeps", None);
        let stats = lexicalize(&mut bank, &lex).unwrap();
        assert_eq!(stats, LexStats { translated: 2, untranslatable: 1, missing: 0 });
        let tokens = &bank.sentences[0].tokens;
        assert_eq!(tokens[0].lexform.as_deref(), Some("le"));
        assert_eq!(tokens[2].lexform, None);

        let wrong = BilingualLexicon::new("de", "fr");
        assert!(lexicalize(&mut bank, &wrong).is_err());
    }

    fn src_sentence() -> Sentence {
        Sentence::from_rows(
            "en",
            &[
                ("the", "DET", 2, "det"),
                ("cat", "NOUN", 3, "nsubj"),
                ("sleeps", "VERB", 0, "root"),
            ],
        )
    }

    fn bare_target(forms: &[(&str, &str)]) -> Sentence {
        let mut s = Sentence::new("fr");
        for (i, (form, pos)) in forms.iter().enumerate() {
            s.tokens.push(crate::treebank::Token::new(i + 1, form, pos));
        }
        s
    }

    #[test]
    fn projection_copies_heads_through_links() {
        let src = src_sentence();
        let tgt = bare_target(&[("le", "DET"), ("chat", "NOUN"), ("dort", "VERB")]);
        let pt = project(&src, &tgt, &[(0, 0), (1, 1), (2, 2)]).unwrap();
        assert_eq!(pt.attached, 3);
        assert_eq!(pt.total, 3);
        assert!(pt.full_projective);
        let heads: Vec<Option<usize>> = pt.sentence.tokens.iter().map(|t| t.head).collect();
        assert_eq!(heads, vec![Some(2), Some(3), Some(0)]);
        assert_eq!(pt.sentence.tokens[0].deprel.as_deref(), Some("det"));
    }

    #[test]
    fn projection_follows_reordered_links() {
        let src = src_sentence();
        let tgt = bare_target(&[("chat", "NOUN"), ("le", "DET"), ("dort", "VERB")]);
        // the->2, cat->1, sleeps->3 (zero-based links).
        let pt = project(&src, &tgt, &[(0, 1), (1, 0), (2, 2)]).unwrap();
        let heads: Vec<Option<usize>> = pt.sentence.tokens.iter().map(|t| t.head).collect();
        // "chat" heads "le"; "dort" is root; "chat" attaches to "dort".
        assert_eq!(heads, vec![Some(3), Some(1), Some(0)]);
        assert_eq!(pt.attached, 3);
        assert!(pt.full_projective);
    }

    #[test]
    fn projection_leaves_unaligned_tokens_headless() {
        let src = src_sentence();
        let tgt = bare_target(&[("le", "DET"), ("chat", "NOUN"), ("dort", "VERB"), ("bien", "ADV")]);
        let pt = project(&src, &tgt, &[(1, 1), (2, 2)]).unwrap();
        let heads: Vec<Option<usize>> = pt.sentence.tokens.iter().map(|t| t.head).collect();
        assert_eq!(heads, vec![None, Some(3), Some(0), None]);
        assert_eq!(pt.attached, 2);
        assert_eq!(pt.total, 4);
        assert!(!pt.full_projective);
    }

    #[test]
    fn projection_rejects_reused_tokens() {
        let src = src_sentence();
        let tgt = bare_target(&[("le", "DET"), ("chat", "NOUN")]);
        let err = project(&src, &tgt, &[(0, 0), (1, 0)]).unwrap_err();
        assert!(err.to_string().contains("not intersected"));
        let err = project(&src, &tgt, &[(0, 0), (0, 1)]).unwrap_err();
        assert!(err.to_string().contains("not intersected"));
    }

    #[test]
    fn projection_keeps_only_leftmost_root() {
        // A source with two root attachments (as completed trees can have).
        let mut src = Sentence::from_rows(
            "en",
            &[
                ("a", "NOUN", 0, "root"),
                ("b", "VERB", 0, "root"),
            ],
        );
        src.tokens[0].deprel = Some("dep".to_string());
        let tgt = bare_target(&[("x", "NOUN"), ("y", "VERB")]);
        let pt = project(&src, &tgt, &[(0, 0), (1, 1)]).unwrap();
        let heads: Vec<Option<usize>> = pt.sentence.tokens.iter().map(|t| t.head).collect();
        assert_eq!(heads, vec![Some(0), None]);
    }

    #[test]
    fn tier_assignment_uses_density_and_shape() {
        let tiers = DEFAULT_TIERS;
        let full = project(
            &src_sentence(),
            &bare_target(&[("le", "DET"), ("chat", "NOUN"), ("dort", "VERB")]),
            &[(0, 0), (1, 1), (2, 2)],
        )
        .unwrap();
        assert_eq!(assign_tier(&full, &tiers), Some(100));

        // 9 of 10 attached: misses 100, lands at 90.
        let mut rows = vec![("v", "VERB", 0, "root")];
        for i in 2..=10 {
            rows.push(("n", "NOUN", if i <= 9 { 1 } else { 0 }, "dep"));
        }
        let mut s = Sentence::from_rows("fr", &rows);
        s.tokens[9].head = None;
        s.tokens[9].deprel = None;
        let pt = partial_from_sentence(s);
        assert_eq!((pt.attached, pt.total), (9, 10));
        assert_eq!(assign_tier(&pt, &tiers), Some(90));

        // Fully attached but non-projective: crossing arcs keep it out of
        // tier 100.
        let s = Sentence::from_rows(
            "fr",
            &[
                ("a", "NOUN", 3, "dep"),
                ("b", "NOUN", 4, "dep"),
                ("c", "VERB", 0, "root"),
                ("d", "NOUN", 3, "dep"),
            ],
        );
        let pt = partial_from_sentence(s);
        assert_eq!((pt.attached, pt.total), (4, 4));
        assert!(!pt.full_projective);
        assert_eq!(assign_tier(&pt, &tiers), Some(90));

        // 6 of 10 is below every tier.
        let mut rows = vec![("v", "VERB", 0, "root")];
        for _ in 2..=10 {
            rows.push(("n", "NOUN", 1, "dep"));
        }
        let mut s = Sentence::from_rows("fr", &rows);
        for i in 6..10 {
            s.tokens[i].head = None;
        }
        let pt = partial_from_sentence(s);
        assert_eq!(assign_tier(&pt, &tiers), None);

        assert!(check_tiers(&[90, 80]).is_err());
        assert!(check_tiers(&[100, 80, 80]).is_err());
        assert!(check_tiers(&[100, 90, 80]).is_ok());
    }

    #[test]
    fn density_training_requires_a_complete_stage() {
        let tgt = bare_target(&[("le", "DET"), ("chat", "NOUN"), ("dort", "VERB")]);
        let pt = project(&src_sentence(), &tgt, &[(1, 1), (2, 2)]).unwrap();
        let options = DensityOptions {
            tiers: DEFAULT_TIERS.to_vec(),
            families: FamilySet::delexicalized(),
            train: TrainOptions::default(),
        };
        let err = density_train(&[], &[pt], "fr", &ClusterContext::none(), &options).unwrap_err();
        assert!(err.to_string().contains("no seed or complete"));
    }

    #[test]
    fn density_training_completes_lower_tiers() {
        // Complete trees: DET NOUN VERB with left attachments.
        let full_targets = [
            ["le", "chat", "dort"],
            ["un", "chien", "court"],
            ["la", "vache", "mange"],
        ];
        let mut partials = Vec::new();
        for forms in &full_targets {
            let tgt = bare_target(&[(forms[0], "DET"), (forms[1], "NOUN"), (forms[2], "VERB")]);
            partials.push(project(&src_sentence(), &tgt, &[(0, 0), (1, 1), (2, 2)]).unwrap());
        }
        // One 75% tree: four tokens, determiner unaligned.
        let tgt = bare_target(&[("ce", "DET"), ("chat", "NOUN"), ("dort", "VERB"), ("vite", "ADV")]);
        let src = Sentence::from_rows(
            "en",
            &[
                ("this", "DET", 2, "det"),
                ("cat", "NOUN", 3, "nsubj"),
                ("sleeps", "VERB", 0, "root"),
                ("fast", "ADV", 3, "advmod"),
            ],
        );
        let pt = project(&src, &tgt, &[(1, 1), (2, 2), (3, 3)]).unwrap();
        assert_eq!(assign_tier(&pt, &DEFAULT_TIERS), Some(70));
        partials.push(pt);

        let options = DensityOptions {
            tiers: DEFAULT_TIERS.to_vec(),
            families: FamilySet::delexicalized(),
            train: TrainOptions { epochs: 6, ..TrainOptions::default() },
        };
        let (model, stages) =
            density_train(&[], &partials, "fr", &ClusterContext::none(), &options).unwrap();
        assert_eq!(stages.len(), 4);
        assert_eq!(stages[0].tier, 100);
        assert_eq!(stages[0].added, 3);
        assert_eq!(stages[1].added, 0);
        assert!(stages[1].train.is_none());
        assert_eq!(stages[3].tier, 70);
        assert_eq!(stages[3].added, 1);
        assert_eq!(stages[3].pool, 4);

        // The completed tree kept its constrained arcs, so the final model
        // parses the simple pattern.
        let probe = bare_target(&[("le", "DET"), ("chien", "NOUN"), ("mange", "VERB")]);
        let parsed =
            crate::learning::parse_sentence(&model, &probe, &ClusterContext::none(), None)
                .unwrap();
        let heads: Vec<Option<usize>> = parsed.tokens.iter().map(|t| t.head).collect();
        assert_eq!(heads, vec![Some(2), Some(3), Some(0)]);
    }

    #[test]
    fn self_training_keeps_the_pattern_and_adds_lexical_values() {
        let toy = Treebank {
            language: "xx".to_string(),
            sentences: vec![
                Sentence::from_rows(
                    "xx",
                    &[
                        ("the", "DET", 2, "det"),
                        ("cat", "NOUN", 3, "nsubj"),
                        ("sleeps", "VERB", 0, "root"),
                    ],
                ),
                Sentence::from_rows("xx", &[("cats", "NOUN", 2, "nsubj"), ("sleep", "VERB", 0, "root")]),
            ],
        };
        let (base, _) = train(
            &toy,
            FamilySet::delexicalized(),
            &ClusterContext::none(),
            &TrainOptions { epochs: 6, ..TrainOptions::default() },
        )
        .unwrap();
        let unlabeled = Treebank {
            language: "yy".to_string(),
            sentences: vec![
                bare_target(&[("un", "DET"), ("chien", "NOUN"), ("court", "VERB")]),
                bare_target(&[("chiens", "NOUN"), ("courent", "VERB")]),
            ],
        };
        let (model, report) = self_train(
            &base,
            &unlabeled,
            &ClusterContext::none(),
            FamilySet::full(),
            &TrainOptions { epochs: 6, ..TrainOptions::default() },
        )
        .unwrap();
        assert_eq!(report.examples, 2);
        let probe = bare_target(&[("un", "DET"), ("chat", "NOUN"), ("dort", "VERB")]);
        let parsed =
            crate::learning::parse_sentence(&model, &probe, &ClusterContext::none(), None)
                .unwrap();
        let heads: Vec<Option<usize>> = parsed.tokens.iter().map(|t| t.head).collect();
        assert_eq!(heads, vec![Some(2), Some(3), Some(0)]);
        // Lexical weights exist because the parsed corpus carried its own
        // forms as lexical values.
        assert!(model
            .weights
            .averaged_entries()
            .iter()
            .any(|(id, _)| (100..200).contains(&id.template)));
    }

    #[test]
    fn partial_trees_serialize_with_density_comments() {
        let tgt = bare_target(&[("le", "DET"), ("chat", "NOUN"), ("dort", "VERB"), ("x", "ADV")]);
        let pt = project(&src_sentence(), &tgt, &[(0, 0), (1, 1), (2, 2)]).unwrap();
        let mut out = Vec::new();
        write_partial_trees(&mut out, &[pt.clone()]).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("# density=3/4 full_projective=false\n"));
        let bank = crate::treebank::read_conllu(
            Cursor::new(text),
            "fr",
            "test",
            &crate::treebank::ReadOptions::default(),
        )
        .unwrap();
        let again = partial_from_sentence(bank.sentences[0].clone());
        assert_eq!(again.attached, pt.attached);
        assert_eq!(again.total, pt.total);
        assert_eq!(again.full_projective, pt.full_projective);
    }
}
