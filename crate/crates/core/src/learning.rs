//! Beam-search decoding and structured perceptron training.
//!
//! Decoding is step-synchronous: every beam item advances one action per
//! step, and finished items pass through unchanged until the whole beam is
//! finished. Training uses the max-violation update: the gold action
//! sequence is force-decoded alongside the beam, the step where the beam's
//! best prefix most outscores the gold prefix is located, and the two
//! prefixes up to that step are used for a standard +1/-1 perceptron update
//! on their feature counts. Weights are averaged over examples.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::alphabet::Alphabet;
use crate::error::{Error, Result};
use crate::scoring::{
    conjoin, extract, score_action, template_table, ClusterContext, FamilySet, FeatureId,
    WeightVector, TABLE_VERSION,
};
use crate::transition::{
    config_to_tree, oracle_sequence, Action, Configuration, Constraints,
};
use crate::treebank::{validate_tree, Sentence, Treebank};

pub const DEFAULT_BEAM_WIDTH: usize = 8;
pub const DEFAULT_FALLBACK_LABEL: &str = "dep";

const MODEL_MAGIC: &[u8; 4] = b"XLPM";
const MODEL_FORMAT_VERSION: u32 = 1;

/// Names of cluster files a model's features were built against, kept so a
/// run can verify it is parsing with the clusters it was trained with.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ClusterRefs {
    pub cross: Option<String>,
    pub mono: Option<String>,
}

/// A trained parsing model: weights plus everything needed to reproduce
/// feature extraction.
#[derive(Debug, Clone)]
pub struct Model {
    pub weights: WeightVector,
    pub families: FamilySet,
    pub labels: Alphabet,
    pub beam_width: usize,
    pub fallback_label: String,
    pub cluster_refs: ClusterRefs,
    pub metadata: BTreeMap<String, String>,
}

#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub epochs: u32,
    pub seed: u64,
    pub beam_width: usize,
    pub fallback_label: String,
    /// Reject training trees whose root has siblings.
    pub require_single_root: bool,
    /// Labels to intern beyond those in the training data, so ids cover
    /// labels that only appear in later stages or constraints.
    pub extra_labels: Vec<String>,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            epochs: 5,
            seed: 1,
            beam_width: DEFAULT_BEAM_WIDTH,
            fallback_label: DEFAULT_FALLBACK_LABEL.to_string(),
            require_single_root: true,
            extra_labels: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct TrainReport {
    pub examples: usize,
    pub skipped: usize,
    pub updates: u64,
    pub epochs: u32,
}

#[derive(Debug, Clone)]
pub struct ParseOutcome {
    pub tree: Sentence,
    pub score: f64,
    pub actions: Vec<Action>,
}

struct BeamItem<'a> {
    config: Configuration<'a>,
    actions: Vec<Action>,
    score: f64,
}

struct Candidate {
    parent: usize,
    action: Option<Action>,
    score: f64,
}

impl Candidate {
    fn ordinal(&self) -> i32 {
        self.action.map_or(-1, |a| a.kind.ordinal() as i32)
    }

    fn label_key(&self) -> u32 {
        self.action.and_then(|a| a.label).unwrap_or(0)
    }
}

struct StepSnapshot {
    actions: Vec<Action>,
    score: f64,
}

struct BeamRun {
    actions: Vec<Action>,
    score: f64,
    steps: Vec<StepSnapshot>,
}

/// Runs beam search over one sentence. `record_steps` keeps a per-step
/// snapshot of the best item for the training update.
fn beam_run<'a>(
    sentence: &'a Sentence,
    weights: &WeightVector,
    labels: &Alphabet,
    families: FamilySet,
    clusters: &ClusterContext,
    constraints: Option<&Constraints>,
    beam_width: usize,
    record_steps: bool,
) -> Result<(BeamRun, Configuration<'a>)> {
    if beam_width == 0 {
        return Err(Error::usage("beam width must be at least 1"));
    }
    let mut items = vec![BeamItem {
        config: Configuration::new(sentence),
        actions: Vec::new(),
        score: 0.0,
    }];
    let mut steps = Vec::new();
    let max_steps = 4 * sentence.len() + 8;
    for _ in 0..max_steps {
        if items.iter().all(|it| it.config.is_terminal()) {
            break;
        }
        let mut candidates: Vec<Candidate> = Vec::new();
        for (p, item) in items.iter().enumerate() {
            if item.config.is_terminal() {
                candidates.push(Candidate { parent: p, action: None, score: item.score });
                continue;
            }
            let features = extract(&item.config, labels, families, clusters);
            for (kind, forced) in item.config.legal_actions(constraints)? {
                if kind.is_arc() && forced.is_none() {
                    for l in 0..labels.len() as u32 {
                        let action = Action { kind, label: Some(l) };
                        let delta = score_action(weights, &features, labels, action);
                        candidates.push(Candidate {
                            parent: p,
                            action: Some(action),
                            score: item.score + delta,
                        });
                    }
                } else {
                    let action = Action { kind, label: forced };
                    let delta = score_action(weights, &features, labels, action);
                    candidates.push(Candidate {
                        parent: p,
                        action: Some(action),
                        score: item.score + delta,
                    });
                }
            }
        }
        if candidates.is_empty() {
            return Err(Error::internal("beam step produced no candidates"));
        }
        candidates.sort_by(|a, b| {
            b.score
                .total_cmp(&a.score)
                .then(a.ordinal().cmp(&b.ordinal()))
                .then(a.label_key().cmp(&b.label_key()))
                .then(a.parent.cmp(&b.parent))
        });
        candidates.truncate(beam_width);
        let mut next = Vec::with_capacity(candidates.len());
        for c in candidates {
            let parent = &items[c.parent];
            let item = match c.action {
                None => BeamItem {
                    config: parent.config.clone(),
                    actions: parent.actions.clone(),
                    score: c.score,
                },
                Some(a) => BeamItem {
                    config: parent.config.apply(a)?,
                    actions: {
                        let mut h = parent.actions.clone();
                        h.push(a);
                        h
                    },
                    score: c.score,
                },
            };
            next.push(item);
        }
        items = next;
        if record_steps {
            steps.push(StepSnapshot {
                actions: items[0].actions.clone(),
                score: items[0].score,
            });
        }
    }
    if !items.iter().all(|it| it.config.is_terminal()) {
        return Err(Error::internal("beam search exceeded its step bound"));
    }
    let best = items.swap_remove(0);
    Ok((
        BeamRun { actions: best.actions, score: best.score, steps },
        best.config,
    ))
}

/// Decodes one sentence, returning the tree plus the model score and the
/// action sequence behind it.
pub fn decode_sentence(
    model: &Model,
    sentence: &Sentence,
    clusters: &ClusterContext,
    constraints: Option<&Constraints>,
    beam_override: Option<usize>,
) -> Result<ParseOutcome> {
    let width = beam_override.unwrap_or(model.beam_width);
    let (run, config) = beam_run(
        sentence,
        &model.weights,
        &model.labels,
        model.families,
        clusters,
        constraints,
        width,
        false,
    )?;
    let tree = config_to_tree(&config, &model.labels, &model.fallback_label)?;
    Ok(ParseOutcome { tree, score: run.score, actions: run.actions })
}

/// Decodes one sentence and returns just the tree.
pub fn parse_sentence(
    model: &Model,
    sentence: &Sentence,
    clusters: &ClusterContext,
    constraints: Option<&Constraints>,
) -> Result<Sentence> {
    Ok(decode_sentence(model, sentence, clusters, constraints, None)?.tree)
}

/// Parses every sentence, preserving order. With `threads > 1` sentences are
/// parsed on a local thread pool.
pub fn parse_treebank(
    model: &Model,
    treebank: &Treebank,
    clusters: &ClusterContext,
    threads: usize,
) -> Result<Treebank> {
    let parse_one = |s: &Sentence| parse_sentence(model, s, clusters, None);
    let sentences: Result<Vec<Sentence>> = if threads > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::internal(format!("thread pool: {}", e)))?;
        pool.install(|| treebank.sentences.par_iter().map(parse_one).collect())
    } else {
        treebank.sentences.iter().map(parse_one).collect()
    };
    Ok(Treebank { language: treebank.language.clone(), sentences: sentences? })
}

/// Cumulative model score after each action of a forced sequence.
fn force_decode_scores(
    sentence: &Sentence,
    weights: &WeightVector,
    labels: &Alphabet,
    families: FamilySet,
    clusters: &ClusterContext,
    actions: &[Action],
) -> Result<Vec<f64>> {
    let mut config = Configuration::new(sentence);
    let mut scores = Vec::with_capacity(actions.len());
    let mut total = 0.0;
    for &action in actions {
        let features = extract(&config, labels, families, clusters);
        total += score_action(weights, &features, labels, action);
        scores.push(total);
        config = config.apply(action)?;
    }
    Ok(scores)
}

/// Replays both prefixes and applies +1 to gold features, -1 to predicted
/// features, skipping the shared prefix where the updates cancel.
fn perceptron_update(
    weights: &mut WeightVector,
    sentence: &Sentence,
    labels: &Alphabet,
    families: FamilySet,
    clusters: &ClusterContext,
    gold_prefix: &[Action],
    pred_prefix: &[Action],
) -> Result<()> {
    let common = gold_prefix
        .iter()
        .zip(pred_prefix.iter())
        .take_while(|(g, p)| g == p)
        .count();
    for (prefix, delta) in [(gold_prefix, 1.0), (pred_prefix, -1.0)] {
        let mut config = Configuration::new(sentence);
        for (i, &action) in prefix.iter().enumerate() {
            if i >= common {
                let label = action.label.map(|l| labels.resolve(l));
                for f in extract(&config, labels, families, clusters) {
                    weights.update(conjoin(f, action.kind, label), delta);
                }
            }
            config = config.apply(action)?;
        }
    }
    Ok(())
}

/// Trains a model on fully annotated projective trees. Unusable sentences
/// (unparseable trees, non-projective, empty) are skipped with a log line.
pub fn train(
    treebank: &Treebank,
    families: FamilySet,
    clusters: &ClusterContext,
    options: &TrainOptions,
) -> Result<(Model, TrainReport)> {
    let mut labels = Alphabet::new();
    labels.intern(&options.fallback_label);
    for sentence in &treebank.sentences {
        for token in &sentence.tokens {
            if let Some(d) = &token.deprel {
                labels.intern(d);
            }
        }
    }
    for extra in &options.extra_labels {
        labels.intern(extra);
    }

    let mut examples: Vec<(usize, Vec<Action>)> = Vec::new();
    let mut skipped = 0usize;
    for (i, sentence) in treebank.sentences.iter().enumerate() {
        if sentence.is_empty() || !sentence.fully_annotated() {
            skipped += 1;
            continue;
        }
        if let Err(e) = validate_tree(sentence, options.require_single_root) {
            log::debug!("skipping sentence {}: {}", i + 1, e);
            skipped += 1;
            continue;
        }
        match oracle_sequence(sentence, &mut labels, &options.fallback_label) {
            Ok(actions) => examples.push((i, actions)),
            Err(e) => {
                log::debug!("skipping sentence {}: {}", i + 1, e);
                skipped += 1;
            }
        }
    }
    if skipped > 0 {
        log::warn!("skipped {} of {} training sentences", skipped, treebank.sentences.len());
    }
    if examples.is_empty() {
        return Err(Error::data("no trainable sentences"));
    }

    let mut weights = WeightVector::new();
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut updates = 0u64;
    for epoch in 0..options.epochs {
        order.shuffle(&mut rng);
        let mut epoch_updates = 0u64;
        for &e in &order {
            let (idx, gold) = &examples[e];
            let sentence = &treebank.sentences[*idx];
            weights.tick();
            let (run, _) = beam_run(
                sentence,
                &weights,
                &labels,
                families,
                clusters,
                None,
                options.beam_width,
                true,
            )?;
            if run.actions == *gold {
                continue;
            }
            let gold_scores = force_decode_scores(
                sentence, &weights, &labels, families, clusters, gold,
            )?;
            // Earliest step maximizing best-prefix score minus gold-prefix
            // score, among steps where the prefixes actually differ.
            let mut best_t = None;
            let mut best_violation = f64::NEG_INFINITY;
            for (t, step) in run.steps.iter().enumerate() {
                let glen = (t + 1).min(gold.len());
                if step.actions[..] == gold[..glen] {
                    continue;
                }
                let violation = step.score - gold_scores[glen - 1];
                if violation > best_violation {
                    best_violation = violation;
                    best_t = Some(t);
                }
            }
            let Some(best_t) = best_t else { continue };
            let gold_len = (best_t + 1).min(gold.len());
            perceptron_update(
                &mut weights,
                sentence,
                &labels,
                families,
                clusters,
                &gold[..gold_len],
                &run.steps[best_t].actions,
            )?;
            epoch_updates += 1;
        }
        updates += epoch_updates;
        log::info!(
            "epoch {}: {} updates over {} examples",
            epoch + 1,
            epoch_updates,
            order.len()
        );
    }

    let mut finalized = WeightVector::new();
    for (id, w) in weights.averaged_entries() {
        finalized.set_raw(id, w);
    }
    let model = Model {
        weights: finalized,
        families,
        labels,
        beam_width: options.beam_width,
        fallback_label: options.fallback_label.clone(),
        cluster_refs: ClusterRefs::default(),
        metadata: BTreeMap::new(),
    };
    let report = TrainReport {
        examples: examples.len(),
        skipped,
        updates,
        epochs: options.epochs,
    };
    Ok((model, report))
}

fn write_string<W: Write>(w: &mut W, s: &str) -> Result<()> {
    w.write_u32::<LittleEndian>(s.len() as u32)?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn read_string<R: Read>(r: &mut R) -> Result<String> {
    let len = r.read_u32::<LittleEndian>()? as usize;
    if len > (1 << 24) {
        return Err(Error::data("model file: string length out of range"));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|_| Error::data("model file: string is not utf-8"))
}

fn write_opt_string<W: Write>(w: &mut W, s: &Option<String>) -> Result<()> {
    match s {
        Some(s) => {
            w.write_u8(1)?;
            write_string(w, s)
        }
        None => Ok(w.write_u8(0)?),
    }
}

fn read_opt_string<R: Read>(r: &mut R) -> Result<Option<String>> {
    match r.read_u8()? {
        0 => Ok(None),
        1 => Ok(Some(read_string(r)?)),
        f => Err(Error::data(format!("model file: bad optional flag {}", f))),
    }
}

impl Model {
    /// Writes the model in its little-endian binary format. Weights are the
    /// averaged values, sorted by feature id.
    pub fn save<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(MODEL_MAGIC)?;
        w.write_u32::<LittleEndian>(MODEL_FORMAT_VERSION)?;
        w.write_u32::<LittleEndian>(TABLE_VERSION)?;
        w.write_u16::<LittleEndian>(template_table().len() as u16)?;
        w.write_u8(self.families.bits())?;
        w.write_u32::<LittleEndian>(self.beam_width as u32)?;
        write_string(w, &self.fallback_label)?;
        w.write_u32::<LittleEndian>(self.labels.len() as u32)?;
        for label in self.labels.iter() {
            write_string(w, label)?;
        }
        write_opt_string(w, &self.cluster_refs.cross)?;
        write_opt_string(w, &self.cluster_refs.mono)?;
        w.write_u32::<LittleEndian>(self.metadata.len() as u32)?;
        for (k, v) in &self.metadata {
            write_string(w, k)?;
            write_string(w, v)?;
        }
        let entries = self.weights.averaged_entries();
        w.write_u64::<LittleEndian>(entries.len() as u64)?;
        for (id, weight) in entries {
            w.write_u16::<LittleEndian>(id.template)?;
            w.write_u64::<LittleEndian>(id.payload)?;
            w.write_f64::<LittleEndian>(weight)?;
        }
        Ok(())
    }

    pub fn load<R: Read>(r: &mut R) -> Result<Model> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MODEL_MAGIC {
            return Err(Error::data("model file: bad magic"));
        }
        let format = r.read_u32::<LittleEndian>()?;
        if format != MODEL_FORMAT_VERSION {
            return Err(Error::data(format!("model file: unsupported format {}", format)));
        }
        let table = r.read_u32::<LittleEndian>()?;
        if table != TABLE_VERSION {
            return Err(Error::data(format!(
                "model file: template table version {} does not match {}",
                table, TABLE_VERSION
            )));
        }
        let template_count = r.read_u16::<LittleEndian>()?;
        if template_count as usize != template_table().len() {
            return Err(Error::data("model file: template count mismatch"));
        }
        let families = FamilySet::from_bits(r.read_u8()?)?;
        let beam_width = r.read_u32::<LittleEndian>()? as usize;
        if beam_width == 0 {
            return Err(Error::data("model file: beam width is zero"));
        }
        let fallback_label = read_string(r)?;
        let label_count = r.read_u32::<LittleEndian>()?;
        let mut labels = Alphabet::new();
        for _ in 0..label_count {
            labels.intern(&read_string(r)?);
        }
        let cross = read_opt_string(r)?;
        let mono = read_opt_string(r)?;
        let meta_count = r.read_u32::<LittleEndian>()?;
        let mut metadata = BTreeMap::new();
        for _ in 0..meta_count {
            let k = read_string(r)?;
            let v = read_string(r)?;
            metadata.insert(k, v);
        }
        let weight_count = r.read_u64::<LittleEndian>()?;
        let mut weights = WeightVector::new();
        for _ in 0..weight_count {
            let template = r.read_u16::<LittleEndian>()?;
            let payload = r.read_u64::<LittleEndian>()?;
            let value = r.read_f64::<LittleEndian>()?;
            weights.set_raw(FeatureId { template, payload }, value);
        }
        Ok(Model {
            weights,
            families,
            labels,
            beam_width,
            fallback_label,
            cluster_refs: ClusterRefs { cross, mono },
            metadata,
        })
    }
}
