//! Hierarchical word clustering and code-switched corpus generation.
//!
//! Words are clustered bottom-up by repeatedly merging the pair of clusters
//! whose merge costs the least average mutual information between adjacent
//! cluster bigrams. The merge tree yields one bitstring per word (left child
//! 0, right child 1); prefixes of those bitstrings act as coarser clusters.
//!
//! Code-switched text interleaves multiple monolingual corpora and replaces
//! a seeded random subset of tokens with their translation into another of
//! the participating languages.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::alignment::LexiconSet;
use crate::error::{Error, Result};
use crate::treebank::MonolingualCorpus;

/// Word-to-bitstring clustering with the underlying corpus counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Clustering {
    bits: BTreeMap<String, String>,
    counts: BTreeMap<String, u64>,
}

impl Clustering {
    pub fn from_entries(entries: &[(&str, &str, u64)]) -> Self {
        let mut bits = BTreeMap::new();
        let mut counts = BTreeMap::new();
        for (word, bitstring, count) in entries {
            bits.insert(word.to_string(), bitstring.to_string());
            counts.insert(word.to_string(), *count);
        }
        Clustering { bits, counts }
    }

    /// Full bitstring of a clustered word.
    pub fn bitstring(&self, word: &str) -> Option<&str> {
        self.bits.get(word).map(String::as_str)
    }

    /// Bitstring truncated to `level` bits; shorter bitstrings are returned
    /// whole.
    pub fn prefix(&self, word: &str, level: usize) -> Option<&str> {
        self.bits.get(word).map(|b| &b[..level.min(b.len())])
    }

    pub fn count(&self, word: &str) -> u64 {
        self.counts.get(word).copied().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    /// Entries sorted by bitstring, then word.
    pub fn sorted_entries(&self) -> Vec<(&str, &str, u64)> {
        let mut rows: Vec<(&str, &str, u64)> = self
            .bits
            .iter()
            .map(|(w, b)| (b.as_str(), w.as_str(), self.count(w)))
            .collect();
        rows.sort();
        rows.into_iter().map(|(b, w, c)| (w, b, c)).collect()
    }
}

/// Clustering scope: keep a bounded working set ordered by frequency, or
/// treat every eligible word as active from the start.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BrownMode {
    /// Start from the `k` most frequent words and fold the rest in one at a
    /// time, merging back down to `k` active clusters after each.
    Window,
    /// All eligible words start active. Exhaustive and slow; intended for
    /// small vocabularies.
    Exact,
}

#[derive(Debug)]
enum Node {
    Leaf(u32),
    Internal { left: usize, right: usize },
}

struct MergeState {
    /// Active cluster slots, ascending in node id.
    active: Vec<usize>,
    /// counts[i][j]: occurrences of slot i followed by slot j.
    counts: Vec<Vec<u64>>,
    row_sum: Vec<u64>,
    col_sum: Vec<u64>,
    total: f64,
}

impl MergeState {
    fn term(&self, count: u64, row: u64, col: u64) -> f64 {
        if count == 0 {
            return 0.0;
        }
        let p = count as f64 / self.total;
        let pl = row as f64 / self.total;
        let pr = col as f64 / self.total;
        p * (p / (pl * pr)).ln()
    }

    /// Information lost by merging slots `a` and `b`: only terms touching
    /// either slot change, so the difference is summed over those.
    fn merge_loss(&self, a: usize, b: usize) -> f64 {
        let k = self.active.len();
        let mut before = 0.0;
        for j in 0..k {
            before += self.term(self.counts[a][j], self.row_sum[a], self.col_sum[j]);
            before += self.term(self.counts[b][j], self.row_sum[b], self.col_sum[j]);
        }
        for i in 0..k {
            if i == a || i == b {
                continue;
            }
            before += self.term(self.counts[i][a], self.row_sum[i], self.col_sum[a]);
            before += self.term(self.counts[i][b], self.row_sum[i], self.col_sum[b]);
        }
        let merged_row = self.row_sum[a] + self.row_sum[b];
        let merged_col = self.col_sum[a] + self.col_sum[b];
        let mut after = 0.0;
        for j in 0..k {
            if j == a || j == b {
                continue;
            }
            after += self.term(self.counts[a][j] + self.counts[b][j], merged_row, self.col_sum[j]);
            after += self.term(self.counts[j][a] + self.counts[j][b], self.row_sum[j], merged_col);
        }
        let block =
            self.counts[a][a] + self.counts[a][b] + self.counts[b][a] + self.counts[b][b];
        after += self.term(block, merged_row, merged_col);
        before - after
    }

    /// The merge pair with minimal loss; near-ties keep the earliest pair,
    /// which is the lowest node-id pair since slots ascend in node id.
    fn best_pair(&self) -> (usize, usize, f64) {
        let k = self.active.len();
        let mut best = (0, 1, f64::INFINITY);
        for a in 0..k {
            for b in (a + 1)..k {
                let loss = self.merge_loss(a, b);
                if loss + 1e-12 < best.2 {
                    best = (a, b, loss);
                }
            }
        }
        best
    }

    /// Replaces slots `a` and `b` with their union, appended as `node`.
    fn merge(&mut self, a: usize, b: usize, node: usize) {
        let k = self.active.len();
        let keep: Vec<usize> = (0..k).filter(|&i| i != a && i != b).collect();
        let mut counts = Vec::with_capacity(keep.len() + 1);
        for &i in &keep {
            let mut row: Vec<u64> = keep.iter().map(|&j| self.counts[i][j]).collect();
            row.push(self.counts[i][a] + self.counts[i][b]);
            counts.push(row);
        }
        let mut merged_row: Vec<u64> = keep
            .iter()
            .map(|&j| self.counts[a][j] + self.counts[b][j])
            .collect();
        merged_row.push(
            self.counts[a][a] + self.counts[a][b] + self.counts[b][a] + self.counts[b][b],
        );
        counts.push(merged_row);

        let mut active: Vec<usize> = keep.iter().map(|&i| self.active[i]).collect();
        active.push(node);
        let row_sum = counts.iter().map(|r| r.iter().sum()).collect();
        let n = counts.len();
        let col_sum = (0..n).map(|j| counts.iter().map(|r| r[j]).sum()).collect();
        self.active = active;
        self.counts = counts;
        self.row_sum = row_sum;
        self.col_sum = col_sum;
    }
}

struct BrownRun {
    clustering: Clustering,
    merge_losses: Vec<f64>,
}

fn brown_cluster_run(
    corpus: &MonolingualCorpus,
    k: usize,
    min_count: u64,
    mode: BrownMode,
) -> Result<BrownRun> {
    if k == 0 {
        return Err(Error::usage("cluster count must be at least 1"));
    }
    let mut word_counts: BTreeMap<&str, u64> = BTreeMap::new();
    for sentence in &corpus.sentences {
        for w in sentence {
            *word_counts.entry(w.as_str()).or_insert(0) += 1;
        }
    }
    let mut eligible: Vec<(&str, u64)> = word_counts
        .iter()
        .filter(|&(_, &c)| c >= min_count)
        .map(|(&w, &c)| (w, c))
        .collect();
    eligible.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    if eligible.is_empty() {
        return Err(Error::data(format!(
            "no word occurs at least {} times; nothing to cluster",
            min_count
        )));
    }
    let window = match mode {
        BrownMode::Window => {
            if k > eligible.len() {
                log::warn!(
                    "requested {} clusters but only {} words are eligible",
                    k,
                    eligible.len()
                );
            }
            k.min(eligible.len())
        }
        BrownMode::Exact => eligible.len(),
    };

    let word_index: HashMap<&str, u32> = eligible
        .iter()
        .enumerate()
        .map(|(i, &(w, _))| (w, i as u32))
        .collect();
    let mut bigrams: BTreeMap<(u32, u32), u64> = BTreeMap::new();
    for sentence in &corpus.sentences {
        for pair in sentence.windows(2) {
            if let (Some(&a), Some(&b)) = (
                word_index.get(pair[0].as_str()),
                word_index.get(pair[1].as_str()),
            ) {
                *bigrams.entry((a, b)).or_insert(0) += 1;
            }
        }
    }
    let total: u64 = bigrams.values().sum();
    let mut right_adj: Vec<Vec<(u32, u64)>> = vec![Vec::new(); eligible.len()];
    let mut left_adj: Vec<Vec<(u32, u64)>> = vec![Vec::new(); eligible.len()];
    for (&(a, b), &c) in &bigrams {
        right_adj[a as usize].push((b, c));
        left_adj[b as usize].push((a, c));
    }

    // Node ids are assigned in creation order: window leaves first, then each
    // folded-in leaf and each merge as they happen.
    let mut nodes: Vec<Node> = (0..window).map(|w| Node::Leaf(w as u32)).collect();
    let mut word_slot: HashMap<u32, usize> = (0..window).map(|w| (w as u32, w)).collect();
    let mut state = MergeState {
        active: (0..window).collect(),
        counts: vec![vec![0; window]; window],
        row_sum: vec![0; window],
        col_sum: vec![0; window],
        total: if total == 0 { 1.0 } else { total as f64 },
    };
    for w in 0..window as u32 {
        for &(v, c) in &right_adj[w as usize] {
            if let Some(&j) = word_slot.get(&v) {
                let i = word_slot[&w];
                state.counts[i][j] += c;
                state.row_sum[i] += c;
                state.col_sum[j] += c;
            }
        }
    }

    let mut losses = Vec::new();
    let merge = |state: &mut MergeState,
                     nodes: &mut Vec<Node>,
                     word_slot: &mut HashMap<u32, usize>,
                     losses: &mut Vec<f64>| {
        let (a, b, loss) = state.best_pair();
        losses.push(loss);
        let node = nodes.len();
        nodes.push(Node::Internal {
            left: state.active[a],
            right: state.active[b],
        });
        state.merge(a, b, node);
        // Merged words move to the appended slot; the rest shift down past
        // the two removed slots.
        let merged_slot = state.active.len() - 1;
        for slot in word_slot.values_mut() {
            let old = *slot;
            *slot = if old == a || old == b {
                merged_slot
            } else {
                old - (old > a) as usize - (old > b) as usize
            };
        }
    };

    for w in window as u32..eligible.len() as u32 {
        // Fold the next word in as a fresh slot, then merge back down.
        let slot = state.active.len();
        nodes.push(Node::Leaf(w));
        state.active.push(nodes.len() - 1);
        for row in &mut state.counts {
            row.push(0);
        }
        state.counts.push(vec![0; slot + 1]);
        state.row_sum.push(0);
        state.col_sum.push(0);
        word_slot.insert(w, slot);
        for &(v, c) in &right_adj[w as usize] {
            if let Some(&j) = word_slot.get(&v) {
                state.counts[slot][j] += c;
                state.row_sum[slot] += c;
                state.col_sum[j] += c;
            }
        }
        for &(v, c) in &left_adj[w as usize] {
            if let Some(&i) = word_slot.get(&v) {
                if v != w {
                    state.counts[i][slot] += c;
                    state.row_sum[i] += c;
                    state.col_sum[slot] += c;
                }
            }
        }
        merge(&mut state, &mut nodes, &mut word_slot, &mut losses);
    }
    while state.active.len() > 1 {
        merge(&mut state, &mut nodes, &mut word_slot, &mut losses);
    }

    // Read bitstrings off the merge tree; a lone leaf still gets a bit.
    let root = state.active[0];
    let mut bits: BTreeMap<String, String> = BTreeMap::new();
    let mut stack = vec![(root, String::new())];
    while let Some((node, prefix)) = stack.pop() {
        match &nodes[node] {
            Node::Leaf(w) => {
                let word = eligible[*w as usize].0.to_string();
                let bitstring = if prefix.is_empty() { "0".to_string() } else { prefix };
                bits.insert(word, bitstring);
            }
            Node::Internal { left, right } => {
                stack.push((*left, format!("{}0", prefix)));
                stack.push((*right, format!("{}1", prefix)));
            }
        }
    }
    let counts = eligible
        .iter()
        .map(|&(w, c)| (w.to_string(), c))
        .collect();
    Ok(BrownRun {
        clustering: Clustering { bits, counts },
        merge_losses: losses,
    })
}

/// Clusters the words of `corpus` occurring at least `min_count` times into a
/// binary hierarchy. `k` bounds the active working set in window mode.
pub fn brown_cluster(
    corpus: &MonolingualCorpus,
    k: usize,
    min_count: u64,
    mode: BrownMode,
) -> Result<Clustering> {
    let run = brown_cluster_run(corpus, k, min_count, mode)?;
    log::debug!(
        "clustered {} words, total information lost in merges: {:.6}",
        run.clustering.len(),
        run.merge_losses.iter().sum::<f64>()
    );
    Ok(run.clustering)
}

/// Writes `bitstring<TAB>word<TAB>count` rows sorted by bitstring, then word.
pub fn write_clusters<W: Write>(writer: &mut W, clustering: &Clustering) -> Result<()> {
    for (word, bits, count) in clustering.sorted_entries() {
        writeln!(writer, "{}\t{}\t{}", bits, word, count)?;
    }
    Ok(())
}

pub fn read_clusters<R: BufRead>(reader: R, source_name: &str) -> Result<Clustering> {
    let mut bits = BTreeMap::new();
    let mut counts = BTreeMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 {
            return Err(Error::parse(
                source_name,
                idx + 1,
                format!("expected 3 tab-separated columns, found {}", cols.len()),
            ));
        }
        if cols[0].is_empty() || cols[0].chars().any(|c| c != '0' && c != '1') {
            return Err(Error::parse(
                source_name,
                idx + 1,
                format!("malformed bitstring {:?}", cols[0]),
            ));
        }
        let count: u64 = cols[2].parse().map_err(|_| {
            Error::parse(source_name, idx + 1, format!("malformed count {:?}", cols[2]))
        })?;
        if bits.insert(cols[1].to_string(), cols[0].to_string()).is_some() {
            return Err(Error::parse(
                source_name,
                idx + 1,
                format!("word {:?} appears twice", cols[1]),
            ));
        }
        counts.insert(cols[1].to_string(), count);
    }
    Ok(Clustering { bits, counts })
}

/// Mixes several monolingual corpora into one code-switched corpus. Each
/// token independently stays put with probability `1 - alpha`; otherwise a
/// replacement language is drawn uniformly among the others and the token is
/// replaced by its lexicon translation when one exists.
pub fn generate_codeswitch(
    corpora: &[MonolingualCorpus],
    lexicons: &LexiconSet,
    alpha: f64,
    seed: u64,
) -> Result<MonolingualCorpus> {
    if corpora.len() < 2 {
        return Err(Error::usage("code-switch generation needs at least two corpora"));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::usage(format!(
            "switch probability must be within [0, 1], got {}",
            alpha
        )));
    }
    for src in corpora {
        for tgt in corpora {
            if src.language != tgt.language
                && lexicons.get(&src.language, &tgt.language).is_none()
            {
                return Err(Error::data(format!(
                    "no lexicon for language pair {} -> {}",
                    src.language, tgt.language
                )));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sentences = Vec::new();
    for (i, corpus) in corpora.iter().enumerate() {
        for sentence in &corpus.sentences {
            let mut tokens = Vec::with_capacity(sentence.len());
            for w in sentence {
                let draw: f64 = rng.random();
                if draw < alpha {
                    let pick = rng.random_range(0..corpora.len() - 1);
                    let j = pick + (pick >= i) as usize;
                    let lexicon = lexicons
                        .get(&corpus.language, &corpora[j].language)
                        .expect("validated above");
                    tokens.push(lexicon.translate(w).unwrap_or(w).to_string());
                } else {
                    tokens.push(w.clone());
                }
            }
            sentences.push(tokens);
        }
    }
    Ok(MonolingualCorpus {
        language: "mixed".to_string(),
        sentences,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alignment::BilingualLexicon;
    use std::io::Cursor;

    fn corpus(lang: &str, lines: &[&str]) -> MonolingualCorpus {
        MonolingualCorpus {
            language: lang.to_string(),
            sentences: lines
                .iter()
                .map(|l| l.split_whitespace().map(str::to_string).collect())
                .collect(),
        }
    }

    /// Two word classes with identical within-class contexts: bigrams only
    /// ever cross classes, uniformly.
    fn two_class_corpus() -> MonolingualCorpus {
        corpus(
            "xx",
            &[
                "a1 b1", "a1 b2", "a2 b1", "a2 b2", "b1 a1", "b1 a2", "b2 a1", "b2 a2",
            ],
        )
    }

    #[test]
    fn two_classes_split_at_the_first_bit() {
        for mode in [BrownMode::Exact, BrownMode::Window] {
            let clustering = brown_cluster(&two_class_corpus(), 2, 1, mode).unwrap();
            let a1 = clustering.prefix("a1", 1).unwrap();
            assert_eq!(clustering.prefix("a2", 1).unwrap(), a1);
            let b1 = clustering.prefix("b1", 1).unwrap();
            assert_eq!(clustering.prefix("b2", 1).unwrap(), b1);
            assert_ne!(a1, b1, "{:?}", mode);
            assert_eq!(clustering.bitstring("a1").unwrap().len(), 2);
        }
    }

    #[test]
    fn merge_losses_never_increase_information() {
        let c = corpus(
            "xx",
            &["p q r p q r", "q p r q", "r r p q", "p p q r q p"],
        );
        let run = brown_cluster_run(&c, 2, 1, BrownMode::Window).unwrap();
        for (i, loss) in run.merge_losses.iter().enumerate() {
            assert!(*loss >= -1e-9, "merge {} gained information: {}", i, loss);
        }
    }

    #[test]
    fn single_eligible_word_gets_bit_zero() {
        let c = corpus("xx", &["hello hello hello"]);
        let clustering = brown_cluster(&c, 4, 2, BrownMode::Window).unwrap();
        assert_eq!(clustering.len(), 1);
        assert_eq!(clustering.bitstring("hello"), Some("0"));
    }

    #[test]
    fn rare_words_are_excluded() {
        let c = corpus("xx", &["a a a b b rare"]);
        let clustering = brown_cluster(&c, 2, 2, BrownMode::Window).unwrap();
        assert!(clustering.bitstring("a").is_some());
        assert!(clustering.bitstring("b").is_some());
        assert_eq!(clustering.bitstring("rare"), None);
        assert!(brown_cluster(&c, 2, 10, BrownMode::Window).is_err());
    }

    #[test]
    fn prefix_truncates_and_saturates() {
        let clustering = Clustering::from_entries(&[("w", "0101", 3)]);
        assert_eq!(clustering.prefix("w", 2), Some("01"));
        assert_eq!(clustering.prefix("w", 100), Some("0101"));
        assert_eq!(clustering.prefix("v", 2), None);
        assert_eq!(clustering.count("w"), 3);
    }

    #[test]
    fn cluster_tsv_round_trips_and_rejects_duplicates() {
        let clustering = brown_cluster(&two_class_corpus(), 2, 1, BrownMode::Exact).unwrap();
        let mut buf = Vec::new();
        write_clusters(&mut buf, &clustering).unwrap();
        let _text = String::from_utf8(buf.clone()).unwrap();
        let mut buf2 = Vec::new();
        write_clusters(&mut buf2, &clustering).unwrap();
        assert_eq!(buf, buf2);
        let back = read_clusters(Cursor::new(buf), "clusters").unwrap();
        assert_eq!(back, clustering);

        let dup = "0\tw\t1\n1\tw\t2\n";
        let err = read_clusters(Cursor::new(dup), "clusters").unwrap_err();
        assert!(err.to_string().contains("clusters:2"));
    }

    fn mixing_setup() -> (Vec<MonolingualCorpus>, LexiconSet) {
        let l1 = corpus("l1", &["aa bb cc", "bb aa", "cc cc aa bb"]);
        let l2 = corpus("l2", &["xx yy", "zz xx yy"]);
        let mut lexicons = LexiconSet::default();
        let mut fwd = BilingualLexicon::new("l1", "l2");
        fwd.insert("aa", Some("xx"));
        fwd.insert("bb", Some("yy"));
        fwd.insert("cc", None);
        lexicons.insert(fwd);
        let mut rev = BilingualLexicon::new("l2", "l1");
        rev.insert("xx", Some("aa"));
        rev.insert("yy", Some("bb"));
        rev.insert("zz", Some("cc"));
        lexicons.insert(rev);
        (vec![l1, l2], lexicons)
    }

    #[test]
    fn zero_alpha_keeps_every_token() {
        let (corpora, lexicons) = mixing_setup();
        let mixed = generate_codeswitch(&corpora, &lexicons, 0.0, 7).unwrap();
        assert_eq!(mixed.language, "mixed");
        let expected: Vec<Vec<String>> = corpora
            .iter()
            .flat_map(|c| c.sentences.iter().cloned())
            .collect();
        assert_eq!(mixed.sentences, expected);
    }

    #[test]
    fn full_alpha_replaces_translatable_tokens() {
        let (corpora, lexicons) = mixing_setup();
        let mixed = generate_codeswitch(&corpora, &lexicons, 1.0, 7).unwrap();
        // With two languages every switch goes to the other side; only the
        // untranslatable word survives.
        let l1_tokens: Vec<&String> = mixed.sentences[..3].iter().flatten().collect();
        for tok in l1_tokens {
            assert!(["xx", "yy", "cc"].contains(&tok.as_str()), "{}", tok);
        }
    }

    #[test]
    fn same_seed_same_output_different_seed_differs() {
        let (corpora, lexicons) = mixing_setup();
        let a = generate_codeswitch(&corpora, &lexicons, 0.5, 11).unwrap();
        let b = generate_codeswitch(&corpora, &lexicons, 0.5, 11).unwrap();
        assert_eq!(a, b);
        let c = generate_codeswitch(&corpora, &lexicons, 0.5, 12).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn missing_lexicon_pair_is_reported() {
        let (corpora, mut lexicons) = mixing_setup();
        lexicons = {
            let mut only_fwd = LexiconSet::default();
            only_fwd.insert(lexicons.take("l1", "l2").unwrap());
            only_fwd
        };
        let err = generate_codeswitch(&corpora, &lexicons, 0.5, 1).unwrap_err();
        assert!(err.to_string().contains("l2 -> l1"));
        let single = corpora[..1].to_vec();
        assert!(generate_codeswitch(&single, &lexicons, 0.5, 1).is_err());
    }
}
