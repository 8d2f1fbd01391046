//! Deterministic synthetic data generators backing the acceptance
//! experiments and the bundled fixtures.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::alignment::{BilingualLexicon, LexiconSet, ParallelCorpus};
use crate::alphabet::Alphabet;
use crate::error::{Error, Result};
use crate::transition::{config_to_tree, Action, Configuration};
use crate::treebank::{MonolingualCorpus, Sentence, Token, Treebank};

fn pick<'a, T>(rng: &mut ChaCha8Rng, items: &'a [T]) -> &'a T {
    &items[rng.random_range(0..items.len())]
}

/// Random projective trees built by walking random legal transitions until
/// the parser halts; unattached tokens end up on the root.
pub fn random_projective_trees(count: usize, max_len: usize, seed: u64) -> Result<Vec<Sentence>> {
    if max_len == 0 {
        return Err(Error::usage("sentence length bound must be positive"));
    }
    let tags = ["NOUN", "VERB", "DET", "ADJ", "ADV", "ADP"];
    let mut labels = Alphabet::new();
    for l in ["la", "lb", "lc"] {
        labels.intern(l);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trees = Vec::with_capacity(count);
    for _ in 0..count {
        let n = rng.random_range(1..=max_len);
        let mut sentence = Sentence::new("syn");
        for i in 1..=n {
            let tag = *pick(&mut rng, &tags);
            sentence.tokens.push(Token::new(i, &format!("w{}", i), tag));
        }
        let mut config = Configuration::new(&sentence);
        while !config.is_terminal() {
            let legal = config.legal_actions(None)?;
            let (kind, _) = *pick(&mut rng, &legal);
            let label = if kind.is_arc() {
                Some(rng.random_range(0..labels.len() as u32))
            } else {
                None
            };
            config = config.apply(Action { kind, label })?;
        }
        trees.push(config_to_tree(&config, &labels, "la")?);
    }
    Ok(trees)
}

/// A small deterministic grammar: attachment follows from the tag sequence
/// alone, so a tag-only model can learn it exactly.
pub fn grammar_treebank(count: usize, seed: u64) -> Result<Treebank> {
    let dets = ["the", "a", "this", "every"];
    let nouns = ["cat", "dog", "bird", "cow", "horse", "mouse", "fox", "owl"];
    let verbs = ["sleeps", "runs", "sings", "eats", "sees", "waits"];
    let advs = ["fast", "often", "quietly"];
    let adps = ["near", "under", "with"];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen: BTreeSet<String> = BTreeSet::new();
    let mut sentences = Vec::with_capacity(count);
    let mut attempts = 0usize;
    while sentences.len() < count {
        attempts += 1;
        if attempts > count * 200 {
            return Err(Error::internal("grammar vocabulary exhausted before reaching count"));
        }
        let pattern = rng.random_range(0..6u32);
        let rows: Vec<(&str, &str, usize, &str)> = match pattern {
            0 => vec![
                (*pick(&mut rng, &dets), "DET", 2, "det"),
                (*pick(&mut rng, &nouns), "NOUN", 3, "nsubj"),
                (*pick(&mut rng, &verbs), "VERB", 0, "root"),
            ],
            1 => vec![
                (*pick(&mut rng, &dets), "DET", 2, "det"),
                (*pick(&mut rng, &nouns), "NOUN", 3, "nsubj"),
                (*pick(&mut rng, &verbs), "VERB", 0, "root"),
                (*pick(&mut rng, &advs), "ADV", 3, "advmod"),
            ],
            2 => vec![
                (*pick(&mut rng, &dets), "DET", 2, "det"),
                (*pick(&mut rng, &nouns), "NOUN", 3, "nsubj"),
                (*pick(&mut rng, &verbs), "VERB", 0, "root"),
                (*pick(&mut rng, &dets), "DET", 5, "det"),
                (*pick(&mut rng, &nouns), "NOUN", 3, "dobj"),
            ],
            3 => vec![
                (*pick(&mut rng, &dets), "DET", 2, "det"),
                (*pick(&mut rng, &nouns), "NOUN", 3, "nsubj"),
                (*pick(&mut rng, &verbs), "VERB", 0, "root"),
                (*pick(&mut rng, &adps), "ADP", 3, "adpmod"),
                (*pick(&mut rng, &dets), "DET", 6, "det"),
                (*pick(&mut rng, &nouns), "NOUN", 4, "adpobj"),
            ],
            4 => vec![
                (*pick(&mut rng, &nouns), "NOUN", 2, "nsubj"),
                (*pick(&mut rng, &verbs), "VERB", 0, "root"),
            ],
            _ => vec![
                (*pick(&mut rng, &nouns), "NOUN", 2, "nsubj"),
                (*pick(&mut rng, &verbs), "VERB", 0, "root"),
                (*pick(&mut rng, &advs), "ADV", 2, "advmod"),
            ],
        };
        let key = rows.iter().map(|r| r.0).collect::<Vec<_>>().join(" ");
        if seen.insert(key) {
            sentences.push(Sentence::from_rows("syn", &rows));
        }
    }
    Ok(Treebank { language: "syn".to_string(), sentences })
}

/// Word-for-word parallel pairs from a bijective dictionary, with the target
/// side shuffled within each sentence.
pub fn shuffled_dictionary_pairs(
    count: usize,
    seed: u64,
) -> (ParallelCorpus, BTreeMap<String, String>) {
    let mut dictionary = BTreeMap::new();
    let size = 40usize;
    for i in 0..size {
        dictionary.insert(format!("sw{:02}", i), format!("tw{:02}", i));
    }
    let keys: Vec<&String> = dictionary.keys().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::with_capacity(count);
    for _ in 0..count {
        let len = rng.random_range(3..=8usize);
        let src: Vec<String> =
            (0..len).map(|_| (*pick(&mut rng, &keys)).clone()).collect();
        let mut tgt: Vec<String> = src.iter().map(|w| dictionary[w].clone()).collect();
        // Fisher-Yates with the shared generator.
        for i in (1..tgt.len()).rev() {
            let j = rng.random_range(0..=i);
            tgt.swap(i, j);
        }
        pairs.push((src, tgt));
    }
    let corpus = ParallelCorpus {
        src_lang: "l1".to_string(),
        tgt_lang: "l2".to_string(),
        pairs,
    };
    (corpus, dictionary)
}

/// Two monolingual corpora over paired vocabularies plus lexicons in both
/// directions, for code-switch generation.
pub fn codeswitch_fixture(
    sentences_per_side: usize,
    seed: u64,
) -> (Vec<MonolingualCorpus>, LexiconSet) {
    let size = 20usize;
    let a_words: Vec<String> = (0..size).map(|i| format!("a{:02}", i)).collect();
    let b_words: Vec<String> = (0..size).map(|i| format!("b{:02}", i)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gen = |words: &[String], language: &str| {
        let sentences = (0..sentences_per_side)
            .map(|_| {
                let len = rng.random_range(6..=10usize);
                (0..len).map(|_| pick(&mut rng, words).clone()).collect()
            })
            .collect();
        MonolingualCorpus { language: language.to_string(), sentences }
    };
    let corpora = vec![gen(&a_words, "ca"), gen(&b_words, "cb")];
    let mut ab = BilingualLexicon::new("ca", "cb");
    let mut ba = BilingualLexicon::new("cb", "ca");
    for (a, b) in a_words.iter().zip(&b_words) {
        ab.insert(a, Some(b));
        ba.insert(b, Some(a));
    }
    let mut lexicons = LexiconSet::default();
    lexicons.insert(ab);
    lexicons.insert(ba);
    (corpora, lexicons)
}

/// Typological feature matrix for seven languages, small enough to verify
/// source selection by hand.
pub const FIXTURE_WALS_CSV: &str = "\
lang,82A,83A,85A,86A,87A,88A
de,SV,ND,Prepositions,GN,AN,DemN
en,SV,VO,Prepositions,NG,AN,DemN
es,SV,OV,Prepositions,ND,NA,DemN
fr,SV,ND,Prepositions,NG,NA,DemN
it,SV,OV,Prepositions,ND,NA,DemN
pt,SV,ND,Prepositions,NG,NA,DemN
sv,SV,VO,Prepositions,NG,ND,DemN
";

const G_NOUNS: [&str; 6] = ["gato", "perro", "toro", "pato", "lobo", "burro"];
const C_NOUNS: [&str; 6] = ["luna", "mesa", "vaca", "rosa", "seta", "pera"];
const VERBS: [&str; 4] = ["corre", "salta", "duerme", "mira"];
const ADPS: [&str; 2] = ["con", "sin"];
const PARTICLES: [&str; 2] = ["pu", "ki"];

fn source_form(target: &str) -> String {
    format!("{}k", target)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum NounClass {
    G,
    C,
}

/// Two synthetic languages with a shared tag grammar. Adposition attachment
/// is ambiguous at the tag level and resolved by the object noun's class:
/// class G nouns take the adposition phrase themselves, class C nouns leave
/// it on the verb. The determiner form agrees with the noun class, giving
/// distributional clusters the same split.
#[derive(Debug, Clone)]
pub struct TransferFixture {
    /// Gold source-language treebank.
    pub source_treebank: Treebank,
    /// Gold target-language evaluation treebank.
    pub target_eval: Treebank,
    /// Word-for-word bitext; the target side sometimes carries extra
    /// particles with no source counterpart.
    pub bitext: ParallelCorpus,
    /// Gold trees for the bitext's source sides, index-aligned with pairs.
    pub bitext_source_trees: Vec<Sentence>,
    /// Tagged but unparsed target sides of the bitext, index-aligned with
    /// pairs, particles included.
    pub bitext_target_sentences: Vec<Sentence>,
    /// The generating dictionary, source form to target form.
    pub dictionary: BTreeMap<String, String>,
}

struct Row {
    target_form: String,
    upos: &'static str,
    head: usize,
    deprel: &'static str,
}

fn noun_of(rng: &mut ChaCha8Rng, class: NounClass) -> &'static str {
    match class {
        NounClass::G => *pick(rng, &G_NOUNS),
        NounClass::C => *pick(rng, &C_NOUNS),
    }
}

fn det_of(class: NounClass) -> &'static str {
    match class {
        NounClass::G => "lo",
        NounClass::C => "la",
    }
}

fn draw_class(rng: &mut ChaCha8Rng, g_probability: f64) -> NounClass {
    if rng.random::<f64>() < g_probability {
        NounClass::G
    } else {
        NounClass::C
    }
}

/// Probability that a generated sentence uses the adposition pattern.
const PP_PATTERN_PROBABILITY: f64 = 0.62;
/// Probability that the adposition's candidate noun is class G (so the
/// noun-attachment reading is the minority).
const G_PROBABILITY: f64 = 0.45;

fn sample_rows(rng: &mut ChaCha8Rng) -> Vec<Row> {
    let subject = draw_class(rng, 0.5);
    if rng.random::<f64>() < PP_PATTERN_PROBABILITY {
        let object = draw_class(rng, G_PROBABILITY);
        let pp_object = draw_class(rng, 0.5);
        let (adp_head, adp_label) = match object {
            NounClass::G => (5, "nmod"),
            NounClass::C => (3, "adpmod"),
        };
        vec![
            Row { target_form: det_of(subject).into(), upos: "DET", head: 2, deprel: "det" },
            Row { target_form: noun_of(rng, subject).into(), upos: "NOUN", head: 3, deprel: "nsubj" },
            Row { target_form: pick(rng, &VERBS).to_string(), upos: "VERB", head: 0, deprel: "root" },
            Row { target_form: det_of(object).into(), upos: "DET", head: 5, deprel: "det" },
            Row { target_form: noun_of(rng, object).into(), upos: "NOUN", head: 3, deprel: "dobj" },
            Row { target_form: pick(rng, &ADPS).to_string(), upos: "ADP", head: adp_head, deprel: adp_label },
            Row { target_form: noun_of(rng, pp_object).into(), upos: "NOUN", head: 6, deprel: "adpobj" },
        ]
    } else {
        vec![
            Row { target_form: det_of(subject).into(), upos: "DET", head: 2, deprel: "det" },
            Row { target_form: noun_of(rng, subject).into(), upos: "NOUN", head: 3, deprel: "nsubj" },
            Row { target_form: pick(rng, &VERBS).to_string(), upos: "VERB", head: 0, deprel: "root" },
        ]
    }
}

fn rows_to_sentence(rows: &[Row], language: &str, as_source: bool) -> Sentence {
    let mut s = Sentence::new(language);
    for (i, row) in rows.iter().enumerate() {
        let form = if as_source {
            source_form(&row.target_form)
        } else {
            row.target_form.clone()
        };
        let mut token = Token::new(i + 1, &form, row.upos);
        token.head = Some(row.head);
        token.deprel = Some(row.deprel.to_string());
        s.tokens.push(token);
    }
    s
}

pub fn transfer_fixture(bitext_pairs: usize, seed: u64) -> TransferFixture {
    let mut dictionary = BTreeMap::new();
    for w in G_NOUNS
        .iter()
        .chain(&C_NOUNS)
        .chain(&VERBS)
        .chain(&ADPS)
        .chain(&["lo", "la"])
    {
        dictionary.insert(source_form(w), w.to_string());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let source_treebank = Treebank {
        language: "src".to_string(),
        sentences: (0..160)
            .map(|_| rows_to_sentence(&sample_rows(&mut rng), "src", true))
            .collect(),
    };
    let target_eval = Treebank {
        language: "tgt".to_string(),
        sentences: (0..120)
            .map(|_| rows_to_sentence(&sample_rows(&mut rng), "tgt", false))
            .collect(),
    };

    let mut pairs = Vec::with_capacity(bitext_pairs);
    let mut bitext_source_trees = Vec::with_capacity(bitext_pairs);
    let mut bitext_target_sentences = Vec::with_capacity(bitext_pairs);
    for _ in 0..bitext_pairs {
        let rows = sample_rows(&mut rng);
        let src_tokens: Vec<String> =
            rows.iter().map(|r| source_form(&r.target_form)).collect();
        let mut tgt_tagged: Vec<(String, &str)> = rows
            .iter()
            .map(|r| (r.target_form.clone(), r.upos))
            .collect();
        if rng.random::<f64>() < 0.35 {
            let extra = rng.random_range(1..=2usize);
            for _ in 0..extra {
                let at = rng.random_range(0..=tgt_tagged.len());
                tgt_tagged.insert(at, (pick(&mut rng, &PARTICLES).to_string(), "PART"));
            }
        }
        let tgt_tokens: Vec<String> = tgt_tagged.iter().map(|(w, _)| w.clone()).collect();
        let mut tagged = Sentence::new("tgt");
        for (i, (form, upos)) in tgt_tagged.iter().enumerate() {
            tagged.tokens.push(Token::new(i + 1, form, upos));
        }
        pairs.push((src_tokens, tgt_tokens));
        bitext_source_trees.push(rows_to_sentence(&rows, "src", true));
        bitext_target_sentences.push(tagged);
    }
    let bitext = ParallelCorpus {
        src_lang: "src".to_string(),
        tgt_lang: "tgt".to_string(),
        pairs,
    };
    TransferFixture {
        source_treebank,
        target_eval,
        bitext,
        bitext_source_trees,
        bitext_target_sentences,
        dictionary,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::treebank::{is_projective, validate_tree};

    #[test]
    fn random_trees_are_projective_and_deterministic() {
        let trees = random_projective_trees(50, 15, 7).unwrap();
        assert_eq!(trees.len(), 50);
        for t in &trees {
            assert!(t.len() >= 1 && t.len() <= 15);
            assert!(t.fully_annotated());
            validate_tree(t, false).unwrap();
            assert!(is_projective(t).unwrap());
        }
        let again = random_projective_trees(50, 15, 7).unwrap();
        for (a, b) in trees.iter().zip(&again) {
            let ha: Vec<_> = a.tokens.iter().map(|t| t.head).collect();
            let hb: Vec<_> = b.tokens.iter().map(|t| t.head).collect();
            assert_eq!(ha, hb);
        }
        let other = random_projective_trees(50, 15, 8).unwrap();
        let differs = trees.iter().zip(&other).any(|(a, b)| {
            a.len() != b.len()
                || a.tokens.iter().zip(&b.tokens).any(|(x, y)| x.head != y.head)
        });
        assert!(differs);
    }

    #[test]
    fn grammar_sentences_are_distinct_valid_trees() {
        let bank = grammar_treebank(100, 11).unwrap();
        assert_eq!(bank.sentences.len(), 100);
        let mut seen = std::collections::BTreeSet::new();
        for s in &bank.sentences {
            let key: Vec<&str> = s.tokens.iter().map(|t| t.form.as_str()).collect();
            assert!(seen.insert(key.join(" ")));
            validate_tree(s, true).unwrap();
            assert!(is_projective(s).unwrap());
        }
    }

    #[test]
    fn shuffled_pairs_translate_the_source_multiset() {
        let (corpus, dictionary) = shuffled_dictionary_pairs(200, 3);
        assert_eq!(corpus.pairs.len(), 200);
        let mut shuffled_somewhere = false;
        for (src, tgt) in &corpus.pairs {
            assert_eq!(src.len(), tgt.len());
            let mut expect: Vec<&String> = src.iter().map(|w| &dictionary[w]).collect();
            let mut got: Vec<&String> = tgt.iter().collect();
            if expect != got {
                shuffled_somewhere = true;
            }
            expect.sort();
            got.sort();
            assert_eq!(expect, got);
        }
        assert!(shuffled_somewhere);
    }

    #[test]
    fn codeswitch_fixture_covers_both_directions() {
        let (corpora, lexicons) = codeswitch_fixture(10, 5);
        assert_eq!(corpora.len(), 2);
        let ab = lexicons.get("ca", "cb").unwrap();
        let ba = lexicons.get("cb", "ca").unwrap();
        for s in &corpora[0].sentences {
            for w in s {
                assert!(ab.translate(w).is_some());
            }
        }
        for s in &corpora[1].sentences {
            for w in s {
                assert!(ba.translate(w).is_some());
            }
        }
    }

    #[test]
    fn transfer_fixture_attachment_follows_the_noun_class() {
        let fx = transfer_fixture(300, 42);
        assert_eq!(fx.bitext.pairs.len(), 300);
        assert_eq!(fx.bitext_source_trees.len(), 300);
        let mut saw_noun_attach = 0usize;
        let mut saw_verb_attach = 0usize;
        for bank in [&fx.source_treebank, &fx.target_eval] {
            for s in &bank.sentences {
                validate_tree(s, true).unwrap();
                assert!(is_projective(s).unwrap());
                if s.len() == 7 {
                    let object_form = s.tokens[4].form.trim_end_matches('k').to_string();
                    let is_g = G_NOUNS.contains(&object_form.as_str());
                    let adp = &s.tokens[5];
                    if is_g {
                        assert_eq!(adp.head, Some(5));
                        assert_eq!(adp.deprel.as_deref(), Some("nmod"));
                        saw_noun_attach += 1;
                    } else {
                        assert_eq!(adp.head, Some(3));
                        assert_eq!(adp.deprel.as_deref(), Some("adpmod"));
                        saw_verb_attach += 1;
                    }
                    // Determiners agree with their noun's class.
                    let det = &s.tokens[3].form;
                    let expect = if is_g { "lo" } else { "la" };
                    assert!(det.starts_with(expect));
                }
            }
        }
        assert!(saw_noun_attach > 20);
        assert!(saw_verb_attach > 20);
    }

    #[test]
    fn transfer_bitext_is_word_for_word_plus_particles() {
        let fx = transfer_fixture(300, 42);
        let mut with_particles = 0usize;
        for (pair, tagged) in fx.bitext.pairs.iter().zip(&fx.bitext_target_sentences) {
            assert_eq!(pair.1.len(), tagged.len());
            for (w, tok) in pair.1.iter().zip(&tagged.tokens) {
                assert_eq!(w, &tok.form);
                assert!(tok.head.is_none());
                if PARTICLES.contains(&w.as_str()) {
                    assert_eq!(tok.upos, "PART");
                }
            }
        }
        for ((src, tgt), tree) in fx.bitext.pairs.iter().zip(&fx.bitext_source_trees) {
            assert_eq!(src.len(), tree.len());
            for (w, tok) in src.iter().zip(&tree.tokens) {
                assert_eq!(w, &tok.form);
            }
            let real: Vec<&String> = tgt
                .iter()
                .filter(|w| !PARTICLES.contains(&w.as_str()))
                .collect();
            assert_eq!(real.len(), src.len());
            for (s, t) in src.iter().zip(real) {
                assert_eq!(&fx.dictionary[s], t);
            }
            if tgt.len() > src.len() {
                with_particles += 1;
            }
        }
        assert!(with_particles > 60 && with_particles < 150);
        // Dictionary is a bijection.
        let targets: BTreeSet<&String> = fx.dictionary.values().collect();
        assert_eq!(targets.len(), fx.dictionary.len());
        let fx2 = transfer_fixture(300, 42);
        assert_eq!(fx.bitext.pairs, fx2.bitext.pairs);
    }
}
