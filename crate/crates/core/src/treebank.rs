//! Dependency treebank data model plus CoNLL and tokenized-text I/O.
//!
//! Heads use the convention that 0 denotes the artificial ROOT at position 0
//! and token indices are 1-based. Surface forms, POS tags, heads, and
//! dependency labels survive a write/read round trip byte-exactly; the
//! optional `lexform` annotation is carried in the MISC column.

use std::collections::HashSet;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};

/// Universal POS tags accepted by default (the 17-tag universal set).
pub const UNIVERSAL_TAGS: [&str; 17] = [
    "ADJ", "ADP", "ADV", "AUX", "CONJ", "DET", "INTJ", "NOUN", "NUM", "PART", "PRON", "PROPN",
    "PUNCT", "SCONJ", "SYM", "VERB", "X",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    /// 1-based position within the sentence.
    pub index: usize,
    pub form: String,
    pub upos: String,
    /// 0 denotes attachment to ROOT; `None` means unannotated.
    pub head: Option<usize>,
    pub deprel: Option<String>,
    /// Transfer-time lexical value: a target-language translation for source
    /// treebank tokens, or the form itself for target-language tokens.
    pub lexform: Option<String>,
}

impl Token {
    pub fn new(index: usize, form: &str, upos: &str) -> Self {
        Token {
            index,
            form: form.to_string(),
            upos: upos.to_string(),
            head: None,
            deprel: None,
            lexform: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    pub tokens: Vec<Token>,
    pub language: String,
}

impl Sentence {
    pub fn new(language: &str) -> Self {
        Sentence {
            tokens: Vec::new(),
            language: language.to_string(),
        }
    }

    /// Builds a sentence from `(form, upos, head, deprel)` rows.
    pub fn from_rows(language: &str, rows: &[(&str, &str, usize, &str)]) -> Self {
        let tokens = rows
            .iter()
            .enumerate()
            .map(|(i, (form, upos, head, deprel))| Token {
                index: i + 1,
                form: form.to_string(),
                upos: upos.to_string(),
                head: Some(*head),
                deprel: Some(deprel.to_string()),
                lexform: None,
            })
            .collect();
        Sentence {
            tokens,
            language: language.to_string(),
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Token at a 1-based position.
    pub fn token(&self, index: usize) -> &Token {
        &self.tokens[index - 1]
    }

    /// Head of the token at a 1-based position.
    pub fn head_of(&self, index: usize) -> Option<usize> {
        self.tokens[index - 1].head
    }

    /// True when every token carries a head annotation.
    pub fn fully_annotated(&self) -> bool {
        self.tokens.iter().all(|t| t.head.is_some())
    }

    /// Count of tokens with a head annotation.
    pub fn annotated_count(&self) -> usize {
        self.tokens.iter().filter(|t| t.head.is_some()).count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Treebank {
    pub language: String,
    pub sentences: Vec<Sentence>,
}

impl Treebank {
    pub fn new(language: &str) -> Self {
        Treebank {
            language: language.to_string(),
            sentences: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }
}

/// Sentence-per-line tokenized text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MonolingualCorpus {
    pub language: String,
    pub sentences: Vec<Vec<String>>,
}

impl MonolingualCorpus {
    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(|s| s.len()).sum()
    }
}

/// Options controlling CoNLL reading.
#[derive(Debug, Clone)]
pub struct ReadOptions {
    /// Reject unknown POS tags instead of warning.
    pub strict_upos: bool,
    /// The accepted tagset; defaults to [`UNIVERSAL_TAGS`].
    pub tagset: Vec<String>,
}

impl Default for ReadOptions {
    fn default() -> Self {
        ReadOptions {
            strict_upos: false,
            tagset: UNIVERSAL_TAGS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

fn parse_misc_lexform(misc: &str) -> Option<String> {
    if misc == "_" {
        return None;
    }
    misc.split('|')
        .find_map(|kv| kv.strip_prefix("Lexform=").map(str::to_string))
}

/// Reads a 10-column CoNLL file. Both CoNLL-U and CoNLL-X layouts are
/// accepted: the retained columns (ID, FORM, column 4 POS, HEAD, DEPREL)
/// coincide. Multiword-token ranges (`1-2`) and empty nodes (`1.1`) are
/// skipped; `_` in HEAD or DEPREL yields an absent value; a `Lexform=` entry
/// in the MISC column populates [`Token::lexform`].
pub fn read_conllu<R: BufRead>(
    reader: R,
    language: &str,
    source_name: &str,
    options: &ReadOptions,
) -> Result<Treebank> {
    let tagset: HashSet<&str> = options.tagset.iter().map(|s| s.as_str()).collect();
    let mut warned_tags: HashSet<String> = HashSet::new();
    let mut treebank = Treebank::new(language);
    let mut tokens: Vec<Token> = Vec::new();
    let mut token_lines: Vec<usize> = Vec::new();
    let mut block_has_rows = false;

    let finish = |tokens: &mut Vec<Token>,
                      token_lines: &mut Vec<usize>,
                      block_has_rows: &mut bool,
                      end_line: usize,
                      treebank: &mut Treebank|
     -> Result<()> {
        if *block_has_rows && tokens.is_empty() {
            return Err(Error::parse(
                source_name,
                end_line,
                "sentence block contains no token rows",
            ));
        }
        if tokens.is_empty() {
            return Ok(());
        }
        let n = tokens.len();
        for (tok, line) in tokens.iter().zip(token_lines.iter()) {
            if let Some(h) = tok.head {
                if h > n {
                    return Err(Error::parse(
                        source_name,
                        *line,
                        format!("HEAD {} out of range for a {}-token sentence", h, n),
                    ));
                }
                if h == tok.index {
                    return Err(Error::parse(
                        source_name,
                        *line,
                        format!("token {} has itself as head", tok.index),
                    ));
                }
            }
        }
        treebank.sentences.push(Sentence {
            tokens: std::mem::take(tokens),
            language: language.to_string(),
        });
        token_lines.clear();
        *block_has_rows = false;
        Ok(())
    };

    let mut line_no = 0usize;
    for line in reader.lines() {
        line_no += 1;
        let line = line?;
        let trimmed = line.trim_end_matches(['\r', '\n']);
        if trimmed.is_empty() {
            finish(
                &mut tokens,
                &mut token_lines,
                &mut block_has_rows,
                line_no,
                &mut treebank,
            )?;
            continue;
        }
        if trimmed.starts_with('#') {
            continue;
        }
        block_has_rows = true;
        let cols: Vec<&str> = trimmed.split('\t').collect();
        if cols.len() != 10 {
            return Err(Error::parse(
                source_name,
                line_no,
                format!("expected 10 tab-separated columns, found {}", cols.len()),
            ));
        }
        let id = cols[0];
        if id.contains('-') || id.contains('.') {
            continue;
        }
        let index: usize = id.parse().map_err(|_| {
            Error::parse(source_name, line_no, format!("non-integer token ID {:?}", id))
        })?;
        if index != tokens.len() + 1 {
            return Err(Error::parse(
                source_name,
                line_no,
                format!("expected token ID {}, found {}", tokens.len() + 1, index),
            ));
        }
        let upos = cols[3];
        if !tagset.contains(upos) {
            if options.strict_upos {
                return Err(Error::parse(
                    source_name,
                    line_no,
                    format!("POS tag {:?} is not in the accepted tagset", upos),
                ));
            } else if warned_tags.insert(upos.to_string()) {
                log::warn!(
                    "{}:{}: POS tag {:?} is not in the accepted tagset",
                    source_name,
                    line_no,
                    upos
                );
            }
        }
        let head = match cols[6] {
            "_" => None,
            h => Some(h.parse::<usize>().map_err(|_| {
                Error::parse(source_name, line_no, format!("non-integer HEAD {:?}", h))
            })?),
        };
        let deprel = match cols[7] {
            "_" => None,
            d => Some(d.to_string()),
        };
        tokens.push(Token {
            index,
            form: cols[1].to_string(),
            upos: upos.to_string(),
            head,
            deprel,
            lexform: parse_misc_lexform(cols[9]),
        });
        token_lines.push(line_no);
    }
    finish(
        &mut tokens,
        &mut token_lines,
        &mut block_has_rows,
        line_no + 1,
        &mut treebank,
    )?;
    Ok(treebank)
}

/// Writes one sentence as a CoNLL-U block, preceded by any comment lines.
/// Comments are passed without the leading `#`.
pub fn write_sentence<W: Write>(writer: &mut W, sentence: &Sentence, comments: &[String]) -> Result<()> {
    for c in comments {
        writeln!(writer, "# {}", c)?;
    }
    for tok in &sentence.tokens {
        let head = match tok.head {
            Some(h) => h.to_string(),
            None => "_".to_string(),
        };
        let deprel = tok.deprel.as_deref().unwrap_or("_");
        let misc = match &tok.lexform {
            Some(lf) => format!("Lexform={}", lf),
            None => "_".to_string(),
        };
        writeln!(
            writer,
            "{}\t{}\t_\t{}\t_\t_\t{}\t{}\t_\t{}",
            tok.index, tok.form, tok.upos, head, deprel, misc
        )?;
    }
    writeln!(writer)?;
    Ok(())
}

/// Writes a treebank in CoNLL-U format.
pub fn write_conllu<W: Write>(writer: &mut W, treebank: &Treebank) -> Result<()> {
    for sentence in &treebank.sentences {
        write_sentence(writer, sentence, &[])?;
    }
    Ok(())
}

/// True iff no two arcs cross when drawn above the sentence with ROOT at
/// position 0. Requires every token to carry a head.
pub fn is_projective(sentence: &Sentence) -> Result<bool> {
    let mut arcs: Vec<(usize, usize)> = Vec::with_capacity(sentence.len());
    for tok in &sentence.tokens {
        let head = tok.head.ok_or_else(|| {
            Error::data(format!(
                "projectivity is undefined: token {} has no head",
                tok.index
            ))
        })?;
        let (lo, hi) = if head < tok.index {
            (head, tok.index)
        } else {
            (tok.index, head)
        };
        arcs.push((lo, hi));
    }
    for (i, &(a1, b1)) in arcs.iter().enumerate() {
        for &(a2, b2) in &arcs[i + 1..] {
            if (a1 < a2 && a2 < b1 && b1 < b2) || (a2 < a1 && a1 < b2 && b2 < b1) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Checks that the head annotations form a tree: all heads present and in
/// range, no cycles, and (optionally) exactly one token attached to ROOT.
pub fn validate_tree(sentence: &Sentence, require_single_root: bool) -> Result<()> {
    let n = sentence.len();
    let mut heads = Vec::with_capacity(n);
    for tok in &sentence.tokens {
        let head = tok.head.ok_or_else(|| {
            Error::data(format!("token {} has no head annotation", tok.index))
        })?;
        if head > n {
            return Err(Error::data(format!(
                "token {} has out-of-range head {}",
                tok.index, head
            )));
        }
        if head == tok.index {
            return Err(Error::data(format!("token {} has itself as head", tok.index)));
        }
        heads.push(head);
    }
    // Follow head chains; every chain must reach ROOT without revisiting.
    // 0 = unvisited, 1 = on current chain, 2 = known good.
    let mut state = vec![0u8; n + 1];
    state[0] = 2;
    for start in 1..=n {
        let mut chain = Vec::new();
        let mut cur = start;
        while state[cur] == 0 {
            state[cur] = 1;
            chain.push(cur);
            cur = heads[cur - 1];
        }
        if state[cur] == 1 {
            return Err(Error::data(format!(
                "head annotations contain a cycle through token {}",
                cur
            )));
        }
        for c in chain {
            state[c] = 2;
        }
    }
    if require_single_root {
        let roots = heads.iter().filter(|&&h| h == 0).count();
        if roots != 1 {
            return Err(Error::data(format!(
                "expected exactly one root attachment, found {}",
                roots
            )));
        }
    }
    Ok(())
}

/// Reads whitespace-tokenized text, one sentence per line. Empty lines and
/// `#`-prefixed comment lines are skipped.
pub fn read_tokenized_corpus<R: BufRead>(reader: R, language: &str) -> Result<MonolingualCorpus> {
    let mut sentences = Vec::new();
    for line in reader.lines() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        sentences.push(trimmed.split_whitespace().map(str::to_string).collect());
    }
    Ok(MonolingualCorpus {
        language: language.to_string(),
        sentences,
    })
}

/// Writes a tokenized corpus, one space-joined sentence per line, after any
/// header comment lines (passed without the leading `#`).
pub fn write_tokenized_corpus<W: Write>(
    writer: &mut W,
    corpus: &MonolingualCorpus,
    header: Option<&str>,
) -> Result<()> {
    if let Some(h) = header {
        writeln!(writer, "# {}", h)?;
    }
    for sentence in &corpus.sentences {
        writeln!(writer, "{}", sentence.join(" "))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn opts() -> ReadOptions {
        ReadOptions::default()
    }

    const THREE_TOKENS: &str = "\
1\tthe\t_\tDET\t_\t_\t2\tdet\t_\t_
2\tcat\t_\tNOUN\t_\t_\t3\tnsubj\t_\t_
3\tsleeps\t_\tVERB\t_\t_\t0\troot\t_\t_

";

    #[test]
    fn reads_basic_sentence() {
        let tb = read_conllu(Cursor::new(THREE_TOKENS), "en", "test", &opts()).unwrap();
        assert_eq!(tb.len(), 1);
        let s = &tb.sentences[0];
        assert_eq!(s.len(), 3);
        assert_eq!(s.token(1).form, "the");
        assert_eq!(s.token(2).upos, "NOUN");
        assert_eq!(s.token(3).head, Some(0));
        assert_eq!(s.token(1).deprel.as_deref(), Some("det"));
    }

    #[test]
    fn skips_ranges_empty_nodes_and_comments() {
        let text = "\
# newdoc
1-2\tdoesn't\t_\t_\t_\t_\t_\t_\t_\t_
1\tdoes\t_\tVERB\t_\t_\t0\troot\t_\t_
2\tn't\t_\tPART\t_\t_\t1\tneg\t_\t_
2.1\tghost\t_\tX\t_\t_\t_\t_\t_\t_

";
        let tb = read_conllu(Cursor::new(text), "en", "test", &opts()).unwrap();
        assert_eq!(tb.sentences[0].len(), 2);
        assert_eq!(tb.sentences[0].token(2).form, "n't");
    }

    #[test]
    fn underscore_head_and_deprel_are_absent() {
        let text = "1\tfoo\t_\tNOUN\t_\t_\t_\t_\t_\t_\n\n";
        let tb = read_conllu(Cursor::new(text), "en", "test", &opts()).unwrap();
        let tok = tb.sentences[0].token(1);
        assert_eq!(tok.head, None);
        assert_eq!(tok.deprel, None);
    }

    #[test]
    fn lexform_round_trips_through_misc() {
        let mut s = Sentence::from_rows("sv", &[("hund", "NOUN", 0, "root")]);
        s.tokens[0].lexform = Some("dog".to_string());
        let tb = Treebank {
            language: "sv".to_string(),
            sentences: vec![s],
        };
        let mut buf = Vec::new();
        write_conllu(&mut buf, &tb).unwrap();
        let back = read_conllu(Cursor::new(buf), "sv", "test", &opts()).unwrap();
        assert_eq!(back.sentences[0].token(1).lexform.as_deref(), Some("dog"));
    }

    #[test]
    fn bad_column_count_names_line() {
        let text = "1\tfoo\tNOUN\t_\t_\t_\t0\troot\t_\n\n";
        let err = read_conllu(Cursor::new(text), "en", "bad.conllu", &opts()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("bad.conllu:1"), "{}", msg);
        assert!(msg.contains("10"), "{}", msg);
    }

    #[test]
    fn non_integer_head_names_line() {
        let text = "1\tfoo\t_\tNOUN\t_\t_\tx\troot\t_\t_\n\n";
        let err = read_conllu(Cursor::new(text), "en", "bad.conllu", &opts()).unwrap_err();
        assert!(err.to_string().contains("bad.conllu:1"));
        assert!(err.to_string().contains("HEAD"));
    }

    #[test]
    fn out_of_range_head_names_line() {
        let text = "1\tfoo\t_\tNOUN\t_\t_\t4\troot\t_\t_\n\n";
        let err = read_conllu(Cursor::new(text), "en", "bad.conllu", &opts()).unwrap_err();
        assert!(err.to_string().contains("out of range"));
    }

    #[test]
    fn self_head_rejected() {
        let text = "1\tfoo\t_\tNOUN\t_\t_\t1\tdep\t_\t_\n\n";
        let err = read_conllu(Cursor::new(text), "en", "bad.conllu", &opts()).unwrap_err();
        assert!(err.to_string().contains("itself"));
    }

    #[test]
    fn strict_upos_rejects_unknown_tag() {
        let text = "1\tfoo\t_\tNN\t_\t_\t0\troot\t_\t_\n\n";
        let mut o = opts();
        assert!(read_conllu(Cursor::new(text), "en", "t", &o).is_ok());
        o.strict_upos = true;
        assert!(read_conllu(Cursor::new(text), "en", "t", &o).is_err());
    }

    #[test]
    fn write_read_round_trip_preserves_annotations() {
        let tb = read_conllu(Cursor::new(THREE_TOKENS), "en", "test", &opts()).unwrap();
        let mut buf = Vec::new();
        write_conllu(&mut buf, &tb).unwrap();
        let back = read_conllu(Cursor::new(buf), "en", "test", &opts()).unwrap();
        assert_eq!(tb, back);
    }

    #[test]
    fn projectivity_examples() {
        // "the cat sleeps": nested arcs.
        let s = Sentence::from_rows(
            "en",
            &[("the", "DET", 2, "det"), ("cat", "NOUN", 3, "nsubj"), ("sleeps", "VERB", 0, "root")],
        );
        assert!(is_projective(&s).unwrap());
        // Crossing arcs (3,1) and (4,2).
        let s = Sentence::from_rows(
            "xx",
            &[("a", "X", 3, "dep"), ("b", "X", 4, "dep"), ("c", "X", 0, "root"), ("d", "X", 1, "dep")],
        );
        assert!(!is_projective(&s).unwrap());
    }

    #[test]
    fn projectivity_requires_all_heads() {
        let mut s = Sentence::from_rows("en", &[("a", "X", 0, "root"), ("b", "X", 1, "dep")]);
        s.tokens[1].head = None;
        assert!(is_projective(&s).is_err());
    }

    #[test]
    fn validate_rejects_cycles_and_multiroot() {
        let s = Sentence::from_rows("xx", &[("a", "X", 2, "dep"), ("b", "X", 1, "dep")]);
        assert!(validate_tree(&s, false).is_err());
        let s = Sentence::from_rows("xx", &[("a", "X", 0, "root"), ("b", "X", 0, "root")]);
        assert!(validate_tree(&s, false).is_ok());
        assert!(validate_tree(&s, true).is_err());
        let s = Sentence::from_rows("xx", &[("a", "X", 2, "dep"), ("b", "X", 0, "root")]);
        assert!(validate_tree(&s, true).is_ok());
    }

    #[test]
    fn tokenized_corpus_round_trip() {
        let text = "# generated\nthe cat sleeps\n\nthe dog barks\n";
        let corpus = read_tokenized_corpus(Cursor::new(text), "en").unwrap();
        assert_eq!(corpus.sentences.len(), 2);
        assert_eq!(corpus.sentences[0], vec!["the", "cat", "sleeps"]);
        let mut buf = Vec::new();
        write_tokenized_corpus(&mut buf, &corpus, None).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "the cat sleeps\nthe dog barks\n");
    }
}
