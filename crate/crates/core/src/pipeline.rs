//! Experiment configuration, run directories with manifests, and the staged
//! transfer recipes the command line drives.
//!
//! Configuration files are flat `key = value` text. Lines starting with `#`
//! are comments. An `include = path` line loads another file at that point,
//! so keys assigned later override included ones. Path-valued keys resolve
//! relative to the file that assigned them.
//!
//! Recognized keys for the full recipe:
//!
//! ```text
//! mode                     delex-baseline | delex-selftrain | clusters |
//!                          lexicalized | density
//! target                   target language code
//! sources                  comma-separated language codes, or `auto`
//! wals                     feature CSV, required when sources = auto
//! select-threshold         minimum shared features for auto selection
//! treebank.<lang>          gold treebank (CoNLL), sources train, target evaluates
//! mono.<lang>              tokenized text, one sentence per line
//! parallel.<a>.<b>.src     bitext side for language a (CoNLL, tagged)
//! parallel.<a>.<b>.tgt     bitext side for language b (CoNLL, tagged)
//! lexicon.<a>.<b>          translation lexicon file, overrides extraction
//! cluster.cross            cluster file, overrides clustering
//! alpha                    code-switch replacement probability
//! cluster-k                cluster count
//! min-count                cluster frequency floor
//! align-iterations         aligner EM iterations
//! lexicon-max-len          sentence length cap for lexicon counting
//! epochs, beam             trainer settings
//! tiers                    density tiers, e.g. 100,90,80,70
//! seed.train, seed.codeswitch
//! treebank-flavor          google | ud (punctuation scoring convention)
//! threads                  parse-stage worker threads
//! selftrain-treebank       target text for self-training, defaults to the
//!                          target treebank
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::alignment::{
    bidirectional_align, extract_lexicon, flip_links, read_lexicon, write_lexicon,
    write_pharaoh, BilingualLexicon, LexiconSet, ParallelCorpus,
};
use crate::clustering::{
    brown_cluster, generate_codeswitch, read_clusters, write_clusters, BrownMode, Clustering,
};
use crate::error::{Error, Result};
use crate::evaluation::{render_text, render_tsv, score, Evaluation, ScoreOptions};
use crate::learning::{
    parse_treebank, train, Model, TrainOptions, TrainReport, DEFAULT_BEAM_WIDTH,
};
use crate::scoring::{ClusterContext, Family, FamilySet, TABLE_VERSION};
use crate::transfer::{
    density_train, lexicalize, project, read_wals, self_train,
    write_partial_trees, DensityOptions, PartialTree, StageReport, DEFAULT_SELECT_THRESHOLD,
    DEFAULT_TIERS,
};
use crate::treebank::{
    read_conllu, read_tokenized_corpus, write_conllu, write_tokenized_corpus,
    MonolingualCorpus, ReadOptions, Treebank,
};

pub const RUN_DIR_ENV: &str = "XLPARSE_RUN_DIR";
const INCLUDE_DEPTH_LIMIT: usize = 16;

/// Flat key-value configuration with include support. Every value remembers
/// the directory of the file that assigned it, so relative paths stay
/// anchored to their config file.
#[derive(Debug, Clone, Default)]
pub struct Config {
    entries: BTreeMap<String, (String, PathBuf)>,
}

impl Config {
    pub fn from_file(path: &Path) -> Result<Config> {
        let mut config = Config::default();
        config.load(path, 0)?;
        Ok(config)
    }

    /// Parses config text as if it lived in `dir` (used by tests and for
    /// inline overrides).
    pub fn from_str_in(text: &str, dir: &Path) -> Result<Config> {
        let mut config = Config::default();
        config.absorb(text, dir, "<inline>", 0)?;
        Ok(config)
    }

    fn load(&mut self, path: &Path, depth: usize) -> Result<()> {
        if depth > INCLUDE_DEPTH_LIMIT {
            return Err(Error::usage(format!(
                "config include depth exceeds {} at {}",
                INCLUDE_DEPTH_LIMIT,
                path.display()
            )));
        }
        let text = fs::read_to_string(path)
            .map_err(|e| Error::data(format!("{}: {}", path.display(), e)))?;
        let dir = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        let name = path.display().to_string();
        self.absorb(&text, &dir, &name, depth)
    }

    fn absorb(&mut self, text: &str, dir: &Path, source_name: &str, depth: usize) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::parse(source_name, i + 1, "expected key = value"));
            };
            let key = key.trim();
            let value = value.trim();
            if key.is_empty() {
                return Err(Error::parse(source_name, i + 1, "empty key"));
            }
            if key == "include" {
                self.load(&dir.join(value), depth + 1)?;
            } else {
                self.entries
                    .insert(key.to_string(), (value.to_string(), dir.to_path_buf()));
            }
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str, dir: &Path) {
        self.entries
            .insert(key.to_string(), (value.to_string(), dir.to_path_buf()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(v, _)| v.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| Error::usage(format!("config key `{}` is required", key)))
    }

    /// A path value, resolved against the assigning file's directory.
    pub fn get_path(&self, key: &str) -> Option<PathBuf> {
        self.entries.get(key).map(|(v, dir)| dir.join(v))
    }

    pub fn require_path(&self, key: &str) -> Result<PathBuf> {
        self.get_path(key)
            .ok_or_else(|| Error::usage(format!("config key `{}` is required", key)))
    }

    pub fn get_parsed<T>(&self, key: &str, default: T) -> Result<T>
    where
        T: std::str::FromStr,
        T::Err: fmt::Display,
    {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|e| {
                Error::usage(format!("config key `{}`: bad value `{}`: {}", key, v, e))
            }),
        }
    }

    pub fn get_list(&self, key: &str) -> Option<Vec<String>> {
        self.get(key).map(|v| {
            v.split(',')
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .collect()
        })
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(|k| k.as_str())
    }
}

/// Table 3 column progression; each mode includes everything before it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Mode {
    DelexBaseline,
    DelexSelftrain,
    Clusters,
    Lexicalized,
    Density,
}

impl Mode {
    pub fn uses_selftrain(self) -> bool {
        self == Mode::DelexSelftrain
    }

    pub fn uses_clusters(self) -> bool {
        self >= Mode::Clusters
    }

    pub fn uses_lexical(self) -> bool {
        self >= Mode::Lexicalized
    }

    pub fn uses_density(self) -> bool {
        self >= Mode::Density
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::DelexBaseline => "delex-baseline",
            Mode::DelexSelftrain => "delex-selftrain",
            Mode::Clusters => "clusters",
            Mode::Lexicalized => "lexicalized",
            Mode::Density => "density",
        }
    }

    /// Feature families the final model trains with.
    pub fn families(self) -> FamilySet {
        match self {
            Mode::DelexBaseline => FamilySet::delexicalized(),
            // Identity-lexicalized retraining: tag and word features, no clusters.
            Mode::DelexSelftrain => FamilySet::pos_and_lexical(),
            Mode::Clusters => FamilySet::with_clusters(),
            Mode::Lexicalized | Mode::Density => FamilySet::full(),
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Mode> {
        match s {
            "delex-baseline" => Ok(Mode::DelexBaseline),
            "delex-selftrain" => Ok(Mode::DelexSelftrain),
            "clusters" => Ok(Mode::Clusters),
            "lexicalized" => Ok(Mode::Lexicalized),
            "density" => Ok(Mode::Density),
            other => Err(Error::usage(format!(
                "unknown mode `{}`; expected delex-baseline, delex-selftrain, clusters, lexicalized or density",
                other
            ))),
        }
    }
}

/// Treebank conventions that differ between the two common releases: the
/// Google universal treebanks exclude punctuation from scoring, UD keeps it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flavor {
    Google,
    Ud,
}

impl Flavor {
    pub fn exclude_punct(self) -> bool {
        self == Flavor::Google
    }

    pub fn name(self) -> &'static str {
        match self {
            Flavor::Google => "google",
            Flavor::Ud => "ud",
        }
    }
}

impl std::str::FromStr for Flavor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Flavor> {
        match s {
            "google" => Ok(Flavor::Google),
            "ud" => Ok(Flavor::Ud),
            other => Err(Error::usage(format!(
                "unknown treebank flavor `{}`; expected google or ud",
                other
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
struct InputRecord {
    path: String,
    sha256: String,
    bytes: u64,
}

/// Provenance record written next to every run's artifacts. Timings vary
/// between runs; everything else is stable for fixed inputs and seeds.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    tool: String,
    version: String,
    model_format: u32,
    feature_table: u32,
    subcommand: String,
    params: BTreeMap<String, String>,
    seeds: BTreeMap<String, u64>,
    inputs: BTreeMap<String, InputRecord>,
    outputs: BTreeMap<String, String>,
    timings_ms: BTreeMap<String, u64>,
}

/// A directory all artifacts of one invocation land in, plus the manifest
/// that describes them.
#[derive(Debug)]
pub struct RunContext {
    pub dir: PathBuf,
    manifest: Manifest,
}

fn sha256_file(path: &Path) -> Result<(String, u64)> {
    let mut file = File::open(path)
        .map_err(|e| Error::data(format!("{}: {}", path.display(), e)))?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 65536];
    let mut total = 0u64;
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        total += n as u64;
        hasher.update(&buf[..n]);
    }
    let digest = hasher.finalize();
    let mut hex = String::with_capacity(digest.len() * 2);
    for byte in digest {
        hex.push_str(&format!("{:02x}", byte));
    }
    Ok((hex, total))
}

impl RunContext {
    /// Chooses the run directory: explicit argument, then the environment
    /// variable, then the current directory. Creates it if needed.
    pub fn create(subcommand: &str, dir: Option<&Path>) -> Result<RunContext> {
        let dir = match dir {
            Some(d) => d.to_path_buf(),
            None => match std::env::var_os(RUN_DIR_ENV) {
                Some(v) => PathBuf::from(v),
                None => PathBuf::from("."),
            },
        };
        fs::create_dir_all(&dir)
            .map_err(|e| Error::data(format!("{}: {}", dir.display(), e)))?;
        Ok(RunContext {
            dir,
            manifest: Manifest {
                tool: "xlparse".to_string(),
                version: env!("CARGO_PKG_VERSION").to_string(),
                model_format: 1,
                feature_table: TABLE_VERSION,
                subcommand: subcommand.to_string(),
                params: BTreeMap::new(),
                seeds: BTreeMap::new(),
                inputs: BTreeMap::new(),
                outputs: BTreeMap::new(),
                timings_ms: BTreeMap::new(),
            },
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn record_input(&mut self, label: &str, path: &Path) -> Result<()> {
        let (sha256, bytes) = sha256_file(path)?;
        self.manifest.inputs.insert(
            label.to_string(),
            InputRecord { path: path.display().to_string(), sha256, bytes },
        );
        Ok(())
    }

    pub fn record_param(&mut self, key: &str, value: impl fmt::Display) {
        self.manifest.params.insert(key.to_string(), value.to_string());
    }

    pub fn record_seed(&mut self, name: &str, seed: u64) {
        self.manifest.seeds.insert(name.to_string(), seed);
    }

    /// Hashes a finished artifact in the run directory into the manifest.
    pub fn record_output(&mut self, name: &str) -> Result<()> {
        let (sha256, _) = sha256_file(&self.path(name))?;
        self.manifest.outputs.insert(name.to_string(), sha256);
        Ok(())
    }

    pub fn record_time(&mut self, stage: &str, since: Instant) {
        let ms = since.elapsed().as_millis() as u64;
        self.manifest.timings_ms.insert(stage.to_string(), ms);
    }

    pub fn write_manifest(&self) -> Result<PathBuf> {
        let path = self.path("manifest.json");
        let json = serde_json::to_string_pretty(&self.manifest)
            .map_err(|e| Error::internal(format!("manifest serialization: {}", e)))?;
        fs::write(&path, json + "\n")
            .map_err(|e| Error::data(format!("{}: {}", path.display(), e)))?;
        Ok(path)
    }
}

pub fn open_in(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::data(format!("{}: {}", path.display(), e)))
}

pub fn create_out(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::data(format!("{}: {}", path.display(), e)))
}

pub fn load_treebank(path: &Path, language: &str) -> Result<Treebank> {
    let name = path.display().to_string();
    read_conllu(open_in(path)?, language, &name, &ReadOptions::default())
}

pub fn save_treebank(path: &Path, treebank: &Treebank) -> Result<()> {
    let mut w = create_out(path)?;
    write_conllu(&mut w, treebank)?;
    w.flush()?;
    Ok(())
}

pub fn load_tokenized(path: &Path, language: &str) -> Result<MonolingualCorpus> {
    read_tokenized_corpus(open_in(path)?, language)
}

pub fn load_model(path: &Path) -> Result<Model> {
    Model::load(&mut open_in(path)?)
}

pub fn save_model(path: &Path, model: &Model) -> Result<()> {
    let mut w = create_out(path)?;
    model.save(&mut w)?;
    w.flush()?;
    Ok(())
}

/// Identity lexical forms for tokens that have none: parsing with word
/// features treats the surface form as its own translation.
pub fn ensure_lexforms(treebank: &mut Treebank) {
    for sentence in &mut treebank.sentences {
        for token in &mut sentence.tokens {
            if token.lexform.is_none() {
                token.lexform = Some(token.form.clone());
            }
        }
    }
}

/// One language pair's parallel data: the bitext read from its two CoNLL
/// sides, the intersected alignment links, and the trees of the `a` side.
pub struct PairData {
    pub corpus: ParallelCorpus,
    pub links: Vec<Vec<(usize, usize)>>,
    pub a_bank: Treebank,
    pub b_bank: Treebank,
}

/// Surface forms of every sentence, for feeding treebank text to the
/// aligner or clusterer.
pub fn treebank_forms(bank: &Treebank) -> Vec<Vec<String>> {
    bank.sentences
        .iter()
        .map(|s| s.tokens.iter().map(|t| t.form.clone()).collect())
        .collect()
}

/// Loads `parallel.<a>.<b>.*`, aligns it with IBM-style EM both ways, and
/// intersects the links.
pub fn load_pair(
    config: &Config,
    run: &mut RunContext,
    a: &str,
    b: &str,
) -> Result<Option<PairData>> {
    let src_key = format!("parallel.{}.{}.src", a, b);
    let tgt_key = format!("parallel.{}.{}.tgt", a, b);
    let (Some(src_path), Some(tgt_path)) = (config.get_path(&src_key), config.get_path(&tgt_key))
    else {
        return Ok(None);
    };
    run.record_input(&src_key, &src_path)?;
    run.record_input(&tgt_key, &tgt_path)?;
    let a_bank = load_treebank(&src_path, a)?;
    let b_bank = load_treebank(&tgt_path, b)?;
    if a_bank.len() != b_bank.len() {
        return Err(Error::data(format!(
            "bitext sides disagree: {} has {} sentences, {} has {}",
            src_path.display(),
            a_bank.len(),
            tgt_path.display(),
            b_bank.len()
        )));
    }
    let corpus = ParallelCorpus {
        src_lang: a.to_string(),
        tgt_lang: b.to_string(),
        pairs: treebank_forms(&a_bank).into_iter().zip(treebank_forms(&b_bank)).collect(),
    };
    let iterations = config.get_parsed("align-iterations", 5u32)?;
    let links = bidirectional_align(&corpus, iterations)?;
    let name = format!("align-{}-{}.txt", a, b);
    let mut w = create_out(&run.path(&name))?;
    write_pharaoh(&mut w, &links)?;
    w.flush()?;
    run.record_output(&name)?;
    Ok(Some(PairData { corpus, links, a_bank, b_bank }))
}

/// Finds or builds the `a -> b` lexicon: an explicit `lexicon.<a>.<b>` file
/// wins, then extraction from `parallel.<a>.<b>`, then the reverse pair's
/// bitext flipped.
pub fn obtain_lexicon(
    config: &Config,
    run: &mut RunContext,
    a: &str,
    b: &str,
    pair_cache: &mut BTreeMap<(String, String), PairData>,
) -> Result<BilingualLexicon> {
    let file_key = format!("lexicon.{}.{}", a, b);
    if let Some(path) = config.get_path(&file_key) {
        run.record_input(&file_key, &path)?;
        let lexicon = read_lexicon(open_in(&path)?, &path.display().to_string())?;
        if lexicon.src_lang != a || lexicon.tgt_lang != b {
            return Err(Error::data(format!(
                "{}: lexicon is {} -> {}, expected {} -> {}",
                path.display(),
                lexicon.src_lang,
                lexicon.tgt_lang,
                a,
                b
            )));
        }
        return Ok(lexicon);
    }
    let max_len = config.get_parsed("lexicon-max-len", 100usize)?;
    let forward = (a.to_string(), b.to_string());
    let reverse = (b.to_string(), a.to_string());
    if !pair_cache.contains_key(&forward) && !pair_cache.contains_key(&reverse) {
        if let Some(pair) = load_pair(config, run, a, b)? {
            pair_cache.insert(forward.clone(), pair);
        } else if let Some(pair) = load_pair(config, run, b, a)? {
            pair_cache.insert(reverse.clone(), pair);
        } else {
            return Err(Error::usage(format!(
                "no lexicon source for {} -> {}: set lexicon.{}.{} or parallel.{}.{}.src/.tgt (either direction)",
                a, b, a, b, a, b
            )));
        }
    }
    let lexicon = if let Some(pair) = pair_cache.get(&forward) {
        extract_lexicon(&pair.corpus, &pair.links, max_len)?
    } else {
        let pair = pair_cache.get(&reverse).expect("one direction was inserted");
        extract_lexicon(&pair.corpus.reversed(), &flip_links(&pair.links), max_len)?
    };
    let name = format!("lexicon-{}-{}.tsv", a, b);
    let mut w = create_out(&run.path(&name))?;
    write_lexicon(&mut w, &lexicon)?;
    w.flush()?;
    run.record_output(&name)?;
    Ok(lexicon)
}

/// Cross-lingual clusters: imported from `cluster.cross` when present, else
/// trained on code-switched text. Each source is code-switched with the
/// target pairwise and the mixed corpora are concatenated, so one clustering
/// covers all languages with the target side shared.
pub fn obtain_cross_clusters(
    config: &Config,
    run: &mut RunContext,
    target: &str,
    sources: &[String],
    pair_cache: &mut BTreeMap<(String, String), PairData>,
) -> Result<(Clustering, String)> {
    if let Some(path) = config.get_path("cluster.cross") {
        run.record_input("cluster.cross", &path)?;
        let clustering = read_clusters(open_in(&path)?, &path.display().to_string())?;
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        return Ok((clustering, name));
    }
    let alpha = config.get_parsed("alpha", 0.3f64)?;
    let seed = config.get_parsed("seed.codeswitch", 2u64)?;
    let k = config.get_parsed("cluster-k", 32usize)?;
    let min_count = config.get_parsed("min-count", 1u64)?;
    run.record_seed("codeswitch", seed);
    run.record_param("alpha", alpha);
    run.record_param("cluster-k", k);

    let mono_key = format!("mono.{}", target);
    let target_path = config.require_path(&mono_key)?;
    run.record_input(&mono_key, &target_path)?;
    let target_mono = load_tokenized(&target_path, target)?;

    let mut mixed = MonolingualCorpus {
        language: format!("{}+codeswitch", target),
        sentences: Vec::new(),
    };
    for (i, source) in sources.iter().enumerate() {
        let mono_key = format!("mono.{}", source);
        let source_path = config.require_path(&mono_key)?;
        run.record_input(&mono_key, &source_path)?;
        let source_mono = load_tokenized(&source_path, source)?;
        let mut lexicons = LexiconSet::default();
        lexicons.insert(obtain_lexicon(config, run, target, source, pair_cache)?);
        lexicons.insert(obtain_lexicon(config, run, source, target, pair_cache)?);
        let pair_seed = seed.wrapping_add(i as u64);
        let switched = generate_codeswitch(
            &[target_mono.clone(), source_mono],
            &lexicons,
            alpha,
            pair_seed,
        )?;
        mixed.sentences.extend(switched.sentences);
    }
    let name = "codeswitch.txt".to_string();
    let mut w = create_out(&run.path(&name))?;
    write_tokenized_corpus(&mut w, &mixed, Some(&format!("alpha={}", alpha)))?;
    w.flush()?;
    run.record_output(&name)?;

    let clustering = brown_cluster(&mixed, k, min_count, BrownMode::Window)?;
    let cluster_name = "clusters-cross.tsv".to_string();
    let mut w = create_out(&run.path(&cluster_name))?;
    write_clusters(&mut w, &clustering)?;
    w.flush()?;
    run.record_output(&cluster_name)?;
    Ok((clustering, cluster_name))
}

/// Projects one pair's source trees across its alignment links. Sentences on
/// the source side must be fully annotated.
pub fn project_pair(pair: &PairData) -> Result<Vec<PartialTree>> {
    let mut partials = Vec::with_capacity(pair.corpus.len());
    for ((src, tgt), links) in pair
        .a_bank
        .sentences
        .iter()
        .zip(&pair.b_bank.sentences)
        .zip(&pair.links)
    {
        if !src.fully_annotated() {
            return Err(Error::data(
                "projection needs parsed source sentences; bitext source side has unattached tokens",
            ));
        }
        partials.push(project(src, tgt, links)?);
    }
    Ok(partials)
}

/// Parses a comma-separated tier list like `100,90,80,70`.
pub fn parse_tier_list(text: &str) -> Result<Vec<u32>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<u32>()
                .map_err(|e| Error::usage(format!("bad tier `{}`: {}", s, e)))
        })
        .collect()
}

fn parse_tiers(config: &Config) -> Result<Vec<u32>> {
    match config.get("tiers") {
        None => Ok(DEFAULT_TIERS.to_vec()),
        Some(text) => parse_tier_list(text),
    }
}

#[derive(Debug)]
pub struct PipelineOutcome {
    pub evaluation: Evaluation,
    pub model_path: PathBuf,
    pub parsed_path: PathBuf,
    pub train_report: Option<TrainReport>,
    pub stage_reports: Vec<StageReport>,
}

fn render_stages(stages: &[StageReport]) -> String {
    let mut out = String::from("tier\tadded\tpool\tupdates\n");
    for s in stages {
        let updates = s
            .train
            .as_ref()
            .map(|t| t.updates.to_string())
            .unwrap_or_else(|| "-".to_string());
        out.push_str(&format!("{}\t{}\t{}\t{}\n", s.tier, s.added, s.pool, updates));
    }
    out
}

/// The full recipe: resolve sources, assemble the mode's inputs, train,
/// parse the target treebank, and score it. Artifacts land in the run
/// directory: `model.bin`, `parsed.conllu`, `eval.txt`, `eval.tsv`, stage
/// intermediates, and `manifest.json`.
pub fn run_pipeline(config: &Config, run: &mut RunContext) -> Result<PipelineOutcome> {
    let started = Instant::now();
    let mode: Mode = config.require("mode")?.parse()?;
    let target = config.require("target")?.to_string();
    let flavor: Flavor = config.get_parsed("treebank-flavor", Flavor::Google)?;
    let threads = config.get_parsed("threads", 1usize)?;
    run.record_param("mode", mode.name());
    run.record_param("target", &target);
    run.record_param("treebank-flavor", flavor.name());

    let sources: Vec<String> = match config.require("sources")? {
        "auto" => {
            let wals_path = config.require_path("wals")?;
            run.record_input("wals", &wals_path)?;
            let table = read_wals(open_in(&wals_path)?, &wals_path.display().to_string())?;
            let threshold =
                config.get_parsed("select-threshold", DEFAULT_SELECT_THRESHOLD)?;
            let picked = table.select_sources(&target, threshold)?;
            if picked.is_empty() {
                return Err(Error::data(format!(
                    "no source shares at least {} typological features with {}",
                    threshold, target
                )));
            }
            picked
        }
        list => list
            .split(',')
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .collect(),
    };
    if sources.is_empty() {
        return Err(Error::usage("sources resolved to an empty list"));
    }
    if sources.contains(&target) {
        return Err(Error::usage("target language cannot be one of its sources"));
    }
    run.record_param("sources", sources.join(","));

    let gold_key = format!("treebank.{}", target);
    let gold_path = config.require_path(&gold_key)?;
    run.record_input(&gold_key, &gold_path)?;
    let gold = load_treebank(&gold_path, &target)?;
    if gold.is_empty() {
        return Err(Error::data(format!("{}: empty treebank", gold_path.display())));
    }

    let mut source_banks: Vec<Treebank> = Vec::new();
    for source in &sources {
        let key = format!("treebank.{}", source);
        let path = config.require_path(&key)?;
        run.record_input(&key, &path)?;
        source_banks.push(load_treebank(&path, source)?);
    }

    let epochs = config.get_parsed("epochs", 5u32)?;
    let beam = config.get_parsed("beam", DEFAULT_BEAM_WIDTH)?;
    let seed_train = config.get_parsed("seed.train", 1u64)?;
    run.record_seed("train", seed_train);
    run.record_param("epochs", epochs);
    run.record_param("beam", beam);
    let train_options = TrainOptions {
        epochs,
        seed: seed_train,
        beam_width: beam,
        ..TrainOptions::default()
    };

    let mut pair_cache: BTreeMap<(String, String), PairData> = BTreeMap::new();

    let (cross_clustering, cross_name) = if mode.uses_clusters() {
        let t = Instant::now();
        let (clustering, name) =
            obtain_cross_clusters(config, run, &target, &sources, &mut pair_cache)?;
        run.record_time("clusters", t);
        (Some(clustering), Some(name))
    } else {
        (None, None)
    };
    let cluster_ctx = ClusterContext { cross: cross_clustering.as_ref(), mono: None };

    if mode.uses_lexical() {
        let t = Instant::now();
        for (source, bank) in sources.iter().zip(&mut source_banks) {
            let lexicon = obtain_lexicon(config, run, source, &target, &mut pair_cache)?;
            let stats = lexicalize(bank, &lexicon)?;
            log::info!(
                "lexicalized {}: {} tokens translated, {} untranslatable, {} unknown",
                source,
                stats.translated,
                stats.untranslatable,
                stats.missing
            );
        }
        run.record_time("lexicalize", t);
    }

    let mut train_bank = Treebank::new(&sources.join("+"));
    for bank in &source_banks {
        train_bank.sentences.extend(bank.sentences.iter().cloned());
    }

    let families = mode.families();
    run.record_param("families", families.describe());

    let t_train = Instant::now();
    let (mut model, train_report, stage_reports) = if mode.uses_density() {
        let mut partials: Vec<PartialTree> = Vec::new();
        for source in &sources {
            let forward = (source.clone(), target.clone());
            let reverse = (target.clone(), source.clone());
            if !pair_cache.contains_key(&forward) && !pair_cache.contains_key(&reverse) {
                return Err(Error::usage(format!(
                    "density mode needs parallel.{}.{} data for projection",
                    source, target
                )));
            }
            let mut projected = if let Some(pair) = pair_cache.get(&forward) {
                project_pair(pair)?
            } else {
                let pair = pair_cache.get(&reverse).expect("checked above");
                let flipped = PairData {
                    corpus: pair.corpus.reversed(),
                    links: flip_links(&pair.links),
                    a_bank: pair.b_bank.clone(),
                    b_bank: pair.a_bank.clone(),
                };
                project_pair(&flipped)?
            };
            for partial in &mut projected {
                for token in &mut partial.sentence.tokens {
                    if token.lexform.is_none() {
                        token.lexform = Some(token.form.clone());
                    }
                }
            }
            let name = format!("projected-{}-{}.conllu", source, target);
            let mut w = create_out(&run.path(&name))?;
            write_partial_trees(&mut w, &projected)?;
            w.flush()?;
            run.record_output(&name)?;
            partials.extend(projected);
        }
        let options = DensityOptions {
            tiers: parse_tiers(config)?,
            families,
            train: train_options.clone(),
        };
        let (model, stages) =
            density_train(&train_bank.sentences, &partials, &target, &cluster_ctx, &options)?;
        fs::write(run.path("stages.txt"), render_stages(&stages))?;
        run.record_output("stages.txt")?;
        (model, None, stages)
    } else {
        let (model, report) = train(&train_bank, families, &cluster_ctx, &train_options)?;
        (model, Some(report), Vec::new())
    };
    run.record_time("train", t_train);

    if mode.uses_selftrain() {
        let t = Instant::now();
        let text_bank = match config.get_path("selftrain-treebank") {
            Some(path) => {
                run.record_input("selftrain-treebank", &path)?;
                load_treebank(&path, &target)?
            }
            None => gold.clone(),
        };
        let (retrained, report) =
            self_train(&model, &text_bank, &cluster_ctx, families, &train_options)?;
        log::info!(
            "self-training retrained on {} parsed sentences",
            report.examples
        );
        model = retrained;
        run.record_time("selftrain", t);
    }

    model.metadata.insert("mode".to_string(), mode.name().to_string());
    model.metadata.insert("target".to_string(), target.clone());
    model.metadata.insert("sources".to_string(), sources.join(","));
    if let Some(name) = &cross_name {
        model.cluster_refs.cross = Some(name.clone());
    }

    let model_path = run.path("model.bin");
    save_model(&model_path, &model)?;
    run.record_output("model.bin")?;

    let t_parse = Instant::now();
    let mut parse_input = gold.clone();
    if model.families.contains(Family::Lexical) {
        ensure_lexforms(&mut parse_input);
    }
    let parsed = parse_treebank(&model, &parse_input, &cluster_ctx, threads)?;
    run.record_time("parse", t_parse);
    let parsed_path = run.path("parsed.conllu");
    save_treebank(&parsed_path, &parsed)?;
    run.record_output("parsed.conllu")?;

    let evaluation = score(&gold, &parsed, &ScoreOptions { exclude_punct: flavor.exclude_punct() })?;
    fs::write(run.path("eval.txt"), render_text(&evaluation))?;
    fs::write(run.path("eval.tsv"), render_tsv(&evaluation))?;
    run.record_output("eval.txt")?;
    run.record_output("eval.tsv")?;

    run.record_time("total", started);
    run.write_manifest()?;
    Ok(PipelineOutcome {
        evaluation,
        model_path,
        parsed_path,
        train_report,
        stage_reports,
    })
}
