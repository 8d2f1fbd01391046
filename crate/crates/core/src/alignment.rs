//! Word alignment and translation lexicon extraction.
//!
//! A lexical translation table p(target | source) is trained with EM over
//! sentence pairs, including a reserved empty source position. Each side is
//! aligned greedily to its best translation, the two directions are
//! intersected, and per-word translation counts over the surviving links are
//! reduced to a one-best bilingual lexicon.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use crate::alphabet::Alphabet;
use crate::error::{Error, Result};
use crate::treebank::MonolingualCorpus;

/// Reserved token for the empty source position. Target words whose best
/// source is this position stay unaligned.
pub const NULL_TOKEN: &str = "<NULL>";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParallelCorpus {
    pub src_lang: String,
    pub tgt_lang: String,
    pub pairs: Vec<(Vec<String>, Vec<String>)>,
}

impl ParallelCorpus {
    /// Zips two sentence-aligned corpora into one parallel corpus.
    pub fn from_corpora(src: &MonolingualCorpus, tgt: &MonolingualCorpus) -> Result<Self> {
        if src.sentences.len() != tgt.sentences.len() {
            return Err(Error::data(format!(
                "parallel sides disagree: {} {} sentences vs {} {} sentences",
                src.sentences.len(),
                src.language,
                tgt.sentences.len(),
                tgt.language
            )));
        }
        Ok(ParallelCorpus {
            src_lang: src.language.clone(),
            tgt_lang: tgt.language.clone(),
            pairs: src
                .sentences
                .iter()
                .cloned()
                .zip(tgt.sentences.iter().cloned())
                .collect(),
        })
    }

    pub fn reversed(&self) -> ParallelCorpus {
        ParallelCorpus {
            src_lang: self.tgt_lang.clone(),
            tgt_lang: self.src_lang.clone(),
            pairs: self.pairs.iter().map(|(s, t)| (t.clone(), s.clone())).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Sparse p(target | source) over co-occurring word pairs, with source rows
/// stored contiguously and target entries sorted by id.
#[derive(Debug, Clone)]
pub struct TranslationTable {
    pub src_lang: String,
    pub tgt_lang: String,
    src: Alphabet,
    tgt: Alphabet,
    row_start: Vec<usize>,
    row_tgt: Vec<u32>,
    row_prob: Vec<f64>,
}

impl TranslationTable {
    /// Builds a table directly from `(source, target, probability)` triples.
    pub fn from_probs(src_lang: &str, tgt_lang: &str, entries: &[(&str, &str, f64)]) -> Self {
        let mut src = Alphabet::new();
        src.intern(NULL_TOKEN);
        let mut tgt = Alphabet::new();
        let mut cells: Vec<(u32, u32, f64)> = entries
            .iter()
            .map(|(s, t, p)| (src.intern(s), tgt.intern(t), *p))
            .collect();
        cells.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_start = vec![0usize; src.len() as usize + 1];
        let mut row_tgt = Vec::with_capacity(cells.len());
        let mut row_prob = Vec::with_capacity(cells.len());
        for &(s, t, p) in &cells {
            row_start[s as usize + 1] += 1;
            row_tgt.push(t);
            row_prob.push(p);
        }
        for i in 1..row_start.len() {
            row_start[i] += row_start[i - 1];
        }
        TranslationTable {
            src_lang: src_lang.to_string(),
            tgt_lang: tgt_lang.to_string(),
            src,
            tgt,
            row_start,
            row_tgt,
            row_prob,
        }
    }

    fn row(&self, s: u32) -> (&[u32], &[f64]) {
        let lo = self.row_start[s as usize];
        let hi = self.row_start[s as usize + 1];
        (&self.row_tgt[lo..hi], &self.row_prob[lo..hi])
    }

    fn prob_by_id(&self, s: u32, t: u32) -> f64 {
        let (tgts, probs) = self.row(s);
        match tgts.binary_search(&t) {
            Ok(i) => probs[i],
            Err(_) => 0.0,
        }
    }

    /// p(target | source); 0 for never co-occurring pairs.
    pub fn prob(&self, source: &str, target: &str) -> f64 {
        match (self.src.lookup(source), self.tgt.lookup(target)) {
            (Some(s), Some(t)) => self.prob_by_id(s, t),
            _ => 0.0,
        }
    }

    /// Sum of p(. | source), for checking normalization.
    pub fn row_sum(&self, source: &str) -> f64 {
        match self.src.lookup(source) {
            Some(s) => self.row(s).1.iter().sum(),
            None => 0.0,
        }
    }

    pub fn source_vocab(&self) -> impl Iterator<Item = &str> {
        self.src.iter()
    }
}

/// Trains p(target | source) with EM, initialized uniformly over co-occurring
/// pairs. Every target token also co-occurs with the empty source position.
pub fn train_ibm1(corpus: &ParallelCorpus, iterations: u32) -> Result<TranslationTable> {
    if iterations == 0 {
        return Err(Error::usage("translation model training needs at least one iteration"));
    }
    if corpus.is_empty() {
        return Err(Error::data("translation model training got an empty corpus"));
    }
    let mut src = Alphabet::new();
    src.intern(NULL_TOKEN);
    let mut tgt = Alphabet::new();
    let mut id_pairs: Vec<(Vec<u32>, Vec<u32>)> = Vec::with_capacity(corpus.pairs.len());
    let mut cells: Vec<(u32, u32)> = Vec::new();
    for (s_toks, t_toks) in &corpus.pairs {
        let s_ids: Vec<u32> = s_toks.iter().map(|w| src.intern(w)).collect();
        let t_ids: Vec<u32> = t_toks.iter().map(|w| tgt.intern(w)).collect();
        for &t in &t_ids {
            cells.push((0, t));
            for &s in &s_ids {
                cells.push((s, t));
            }
        }
        id_pairs.push((s_ids, t_ids));
    }
    cells.sort_unstable();
    cells.dedup();

    let nsrc = src.len() as usize;
    let mut row_start = vec![0usize; nsrc + 1];
    let mut row_tgt = Vec::with_capacity(cells.len());
    for &(s, t) in &cells {
        row_start[s as usize + 1] += 1;
        row_tgt.push(t);
    }
    for i in 1..row_start.len() {
        row_start[i] += row_start[i - 1];
    }
    let mut row_prob = vec![0.0f64; row_tgt.len()];
    for s in 0..nsrc {
        let (lo, hi) = (row_start[s], row_start[s + 1]);
        if hi > lo {
            let p = 1.0 / (hi - lo) as f64;
            row_prob[lo..hi].fill(p);
        }
    }

    let mut table = TranslationTable {
        src_lang: corpus.src_lang.clone(),
        tgt_lang: corpus.tgt_lang.clone(),
        src,
        tgt,
        row_start,
        row_tgt,
        row_prob,
    };

    let cell_index = |table: &TranslationTable, s: u32, t: u32| -> usize {
        let lo = table.row_start[s as usize];
        let hi = table.row_start[s as usize + 1];
        lo + table.row_tgt[lo..hi].binary_search(&t).expect("co-occurring pair")
    };

    for _ in 0..iterations {
        let mut counts = vec![0.0f64; table.row_tgt.len()];
        let mut totals = vec![0.0f64; nsrc];
        for (s_ids, t_ids) in &id_pairs {
            for &t in t_ids {
                let mut denom = table.prob_by_id(0, t);
                for &s in s_ids {
                    denom += table.prob_by_id(s, t);
                }
                if denom == 0.0 {
                    continue;
                }
                let share = table.prob_by_id(0, t) / denom;
                counts[cell_index(&table, 0, t)] += share;
                totals[0] += share;
                for &s in s_ids {
                    let share = table.prob_by_id(s, t) / denom;
                    counts[cell_index(&table, s, t)] += share;
                    totals[s as usize] += share;
                }
            }
        }
        for s in 0..nsrc {
            if totals[s] == 0.0 {
                continue;
            }
            for i in table.row_start[s]..table.row_start[s + 1] {
                table.row_prob[i] = counts[i] / totals[s];
            }
        }
    }
    Ok(table)
}

/// Links each target token to its most probable source token, position-wise.
/// The empty source position competes as well and wins ties, so a target word
/// is linked only when some real source word beats it strictly; among real
/// sources, the earliest best position wins. Links are `(source, target)`
/// 0-based pairs in sorted order.
pub fn viterbi_align(
    table: &TranslationTable,
    src: &[String],
    tgt: &[String],
) -> Vec<(usize, usize)> {
    let mut links = Vec::new();
    for (j, t) in tgt.iter().enumerate() {
        let mut best = table.prob(NULL_TOKEN, t);
        let mut best_i = None;
        for (i, s) in src.iter().enumerate() {
            let p = table.prob(s, t);
            if p > best {
                best = p;
                best_i = Some(i);
            }
        }
        if let Some(i) = best_i {
            links.push((i, j));
        }
    }
    links.sort_unstable();
    links
}

/// Aligns every pair of a corpus with [`viterbi_align`].
pub fn align_corpus(table: &TranslationTable, corpus: &ParallelCorpus) -> Vec<Vec<(usize, usize)>> {
    corpus
        .pairs
        .iter()
        .map(|(s, t)| viterbi_align(table, s, t))
        .collect()
}

/// Swaps link orientation, e.g. reverse-direction output back to
/// `(source, target)`.
pub fn flip_links(links: &[Vec<(usize, usize)>]) -> Vec<Vec<(usize, usize)>> {
    links
        .iter()
        .map(|ls| {
            let mut flipped: Vec<(usize, usize)> = ls.iter().map(|&(a, b)| (b, a)).collect();
            flipped.sort_unstable();
            flipped
        })
        .collect()
}

/// Per-sentence set intersection of two link lists over the same corpus.
pub fn intersect_links(
    a: &[Vec<(usize, usize)>],
    b: &[Vec<(usize, usize)>],
) -> Result<Vec<Vec<(usize, usize)>>> {
    if a.len() != b.len() {
        return Err(Error::data(format!(
            "link lists cover different numbers of sentences: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(a.iter()
        .zip(b.iter())
        .map(|(la, lb)| {
            let set: BTreeSet<(usize, usize)> = lb.iter().copied().collect();
            la.iter().copied().filter(|l| set.contains(l)).collect()
        })
        .collect())
}

/// Trains both directions, aligns, and intersects, yielding high-precision
/// `(source, target)` links per sentence.
pub fn bidirectional_align(
    corpus: &ParallelCorpus,
    iterations: u32,
) -> Result<Vec<Vec<(usize, usize)>>> {
    let forward = train_ibm1(corpus, iterations)?;
    let reverse = train_ibm1(&corpus.reversed(), iterations)?;
    let fwd_links = align_corpus(&forward, corpus);
    let rev_links = flip_links(&align_corpus(&reverse, &corpus.reversed()));
    intersect_links(&fwd_links, &rev_links)
}

/// One-best source-to-target lexicon. Sources without a surviving alignment
/// map to nothing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BilingualLexicon {
    pub src_lang: String,
    pub tgt_lang: String,
    entries: BTreeMap<String, Option<String>>,
}

impl BilingualLexicon {
    pub fn new(src_lang: &str, tgt_lang: &str) -> Self {
        BilingualLexicon {
            src_lang: src_lang.to_string(),
            tgt_lang: tgt_lang.to_string(),
            entries: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, source: &str, target: Option<&str>) {
        self.entries.insert(source.to_string(), target.map(str::to_string));
    }

    /// Best translation of `source`, if the word is known and translatable.
    pub fn translate(&self, source: &str) -> Option<&str> {
        self.entries.get(source).and_then(|t| t.as_deref())
    }

    pub fn contains(&self, source: &str) -> bool {
        self.entries.contains_key(source)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Option<&str>)> {
        self.entries.iter().map(|(s, t)| (s.as_str(), t.as_deref()))
    }
}

/// Lexicons keyed by ordered language pair.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LexiconSet {
    map: BTreeMap<(String, String), BilingualLexicon>,
}

impl LexiconSet {
    /// Registers a lexicon under its own language pair.
    pub fn insert(&mut self, lexicon: BilingualLexicon) {
        self.map
            .insert((lexicon.src_lang.clone(), lexicon.tgt_lang.clone()), lexicon);
    }

    pub fn get(&self, src_lang: &str, tgt_lang: &str) -> Option<&BilingualLexicon> {
        self.map.get(&(src_lang.to_string(), tgt_lang.to_string()))
    }

    pub fn take(&mut self, src_lang: &str, tgt_lang: &str) -> Option<BilingualLexicon> {
        self.map.remove(&(src_lang.to_string(), tgt_lang.to_string()))
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// Reduces alignment links to a one-best lexicon. Sentence pairs longer than
/// `max_len` on either side are skipped for counting; their vocabulary still
/// receives entries. Each source word maps to its most frequently linked
/// target, breaking count ties toward the lexicographically smallest target.
pub fn extract_lexicon(
    corpus: &ParallelCorpus,
    links: &[Vec<(usize, usize)>],
    max_len: usize,
) -> Result<BilingualLexicon> {
    if links.len() != corpus.pairs.len() {
        return Err(Error::data(format!(
            "{} link lists for {} sentence pairs",
            links.len(),
            corpus.pairs.len()
        )));
    }
    let mut counts: BTreeMap<(String, String), u64> = BTreeMap::new();
    let mut vocab: BTreeSet<String> = BTreeSet::new();
    let mut skipped = 0usize;
    for (k, (s_toks, t_toks)) in corpus.pairs.iter().enumerate() {
        vocab.extend(s_toks.iter().cloned());
        if s_toks.len() > max_len || t_toks.len() > max_len {
            skipped += 1;
            continue;
        }
        for &(i, j) in &links[k] {
            if i >= s_toks.len() || j >= t_toks.len() {
                return Err(Error::data(format!(
                    "sentence pair {}: link {}-{} is out of range for lengths {}/{}",
                    k + 1,
                    i,
                    j,
                    s_toks.len(),
                    t_toks.len()
                )));
            }
            *counts
                .entry((s_toks[i].clone(), t_toks[j].clone()))
                .or_insert(0) += 1;
        }
    }
    if skipped > 0 {
        log::info!(
            "lexicon extraction skipped {} sentence pairs longer than {} tokens",
            skipped,
            max_len
        );
    }
    let mut best: BTreeMap<&str, (u64, &str)> = BTreeMap::new();
    for ((s, t), &c) in &counts {
        // Ascending target order within a source, so ties keep the first.
        let entry = best.entry(s.as_str()).or_insert((c, t.as_str()));
        if c > entry.0 {
            *entry = (c, t.as_str());
        }
    }
    let mut lexicon = BilingualLexicon::new(&corpus.src_lang, &corpus.tgt_lang);
    for word in &vocab {
        lexicon.insert(word, best.get(word.as_str()).map(|&(_, t)| t));
    }
    Ok(lexicon)
}

/// Writes links as one `i-j` space-separated line per sentence.
pub fn write_pharaoh<W: Write>(writer: &mut W, links: &[Vec<(usize, usize)>]) -> Result<()> {
    for ls in links {
        let line: Vec<String> = ls.iter().map(|&(i, j)| format!("{}-{}", i, j)).collect();
        writeln!(writer, "{}", line.join(" "))?;
    }
    Ok(())
}

pub fn read_pharaoh<R: BufRead>(reader: R, source_name: &str) -> Result<Vec<Vec<(usize, usize)>>> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let mut links = Vec::new();
        for part in line.split_whitespace() {
            let (i, j) = part.split_once('-').ok_or_else(|| {
                Error::parse(source_name, idx + 1, format!("malformed link {:?}", part))
            })?;
            let parse = |v: &str| {
                v.parse::<usize>().map_err(|_| {
                    Error::parse(source_name, idx + 1, format!("malformed link {:?}", part))
                })
            };
            links.push((parse(i)?, parse(j)?));
        }
        links.sort_unstable();
        out.push(links);
    }
    Ok(out)
}

/// Checks link positions against sentence lengths.
pub fn validate_links(corpus: &ParallelCorpus, links: &[Vec<(usize, usize)>]) -> Result<()> {
    if links.len() != corpus.pairs.len() {
        return Err(Error::data(format!(
            "{} link lists for {} sentence pairs",
            links.len(),
            corpus.pairs.len()
        )));
    }
    for (k, ((s_toks, t_toks), ls)) in corpus.pairs.iter().zip(links.iter()).enumerate() {
        for &(i, j) in ls {
            if i >= s_toks.len() || j >= t_toks.len() {
                return Err(Error::data(format!(
                    "sentence pair {}: link {}-{} is out of range for lengths {}/{}",
                    k + 1,
                    i,
                    j,
                    s_toks.len(),
                    t_toks.len()
                )));
            }
        }
    }
    Ok(())
}

/// Writes a lexicon as a sorted two-column TSV with a language header.
/// Untranslatable sources carry the reserved empty marker.
pub fn write_lexicon<W: Write>(writer: &mut W, lexicon: &BilingualLexicon) -> Result<()> {
    writeln!(
        writer,
        "# lexicon src={} tgt={}",
        lexicon.src_lang, lexicon.tgt_lang
    )?;
    for (s, t) in lexicon.iter() {
        if s == NULL_TOKEN || t == Some(NULL_TOKEN) {
            return Err(Error::data(format!(
                "lexicon contains the reserved token {:?}",
                NULL_TOKEN
            )));
        }
        writeln!(writer, "{}\t{}", s, t.unwrap_or(NULL_TOKEN))?;
    }
    Ok(())
}

pub fn read_lexicon<R: BufRead>(reader: R, source_name: &str) -> Result<BilingualLexicon> {
    let mut lines = reader.lines();
    let header = lines
        .next()
        .transpose()?
        .ok_or_else(|| Error::parse(source_name, 1, "missing lexicon header"))?;
    let rest = header
        .strip_prefix("# lexicon src=")
        .ok_or_else(|| Error::parse(source_name, 1, "missing lexicon header"))?;
    let (src_lang, tgt_lang) = rest
        .split_once(" tgt=")
        .ok_or_else(|| Error::parse(source_name, 1, "missing tgt= in lexicon header"))?;
    let mut lexicon = BilingualLexicon::new(src_lang, tgt_lang);
    for (idx, line) in lines.enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let (s, t) = line.split_once('\t').ok_or_else(|| {
            Error::parse(source_name, idx + 2, "expected two tab-separated columns")
        })?;
        lexicon.insert(s, (t != NULL_TOKEN).then_some(t));
    }
    Ok(lexicon)
}
