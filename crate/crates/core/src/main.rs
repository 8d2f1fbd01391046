//! Command line front end: one subcommand per pipeline stage plus `pipeline`
//! for the full recipe and `fixtures` for regenerating the bundled test data.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use xlparse::alignment::{
    align_corpus, bidirectional_align, extract_lexicon, flip_links, read_lexicon, read_pharaoh,
    train_ibm1, write_lexicon, write_pharaoh, LexiconSet, ParallelCorpus,
};
use xlparse::clustering::{
    brown_cluster, generate_codeswitch, read_clusters, write_clusters, BrownMode, Clustering,
};
use xlparse::error::{Error, Result};
use xlparse::evaluation::{
    mcnemar_chi2, mcnemar_exact, paired_counts, render_text, render_tsv, score, ScoreOptions,
};
use xlparse::learning::{parse_treebank, train, Model, TrainOptions, DEFAULT_BEAM_WIDTH};
use xlparse::pipeline::{
    create_out, ensure_lexforms, load_model, load_tokenized, load_treebank, open_in,
    parse_tier_list, run_pipeline, save_model, save_treebank, treebank_forms, Config, Flavor,
    RunContext,
};
use xlparse::scoring::{ClusterContext, Family, FamilySet};
use xlparse::synth;
use xlparse::transfer::{
    self, assign_tier, lexicalize, project, read_wals, self_train, write_partial_trees,
    DEFAULT_SELECT_THRESHOLD, DEFAULT_TIERS,
};
use xlparse::treebank::{MonolingualCorpus, Treebank};

#[derive(Parser)]
#[command(
    name = "xlparse",
    version,
    about = "Cross-lingual transfer toolkit for transition-based dependency parsers"
)]
struct Cli {
    /// Directory artifacts are written to; falls back to $XLPARSE_RUN_DIR,
    /// then the current directory.
    #[arg(long, global = true)]
    run_dir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum InputFormat {
    /// One space-tokenized sentence per line.
    Text,
    /// CoNLL trees; only the forms are used.
    Conllu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Direction {
    /// Intersection of both alignment directions.
    Intersect,
    /// Source-to-target links only.
    Forward,
    /// Target-to-source links, flipped.
    Reverse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FamiliesArg {
    /// POS templates only.
    Delex,
    /// POS and cluster templates.
    Clusters,
    /// POS and word templates.
    Lexical,
    /// Everything.
    Full,
}

impl FamiliesArg {
    fn to_set(self) -> FamilySet {
        match self {
            FamiliesArg::Delex => FamilySet::delexicalized(),
            FamiliesArg::Clusters => FamilySet::with_clusters(),
            FamiliesArg::Lexical => FamilySet::pos_and_lexical(),
            FamiliesArg::Full => FamilySet::full(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FlavorArg {
    Google,
    Ud,
}

impl FlavorArg {
    fn to_flavor(self) -> Flavor {
        match self {
            FlavorArg::Google => Flavor::Google,
            FlavorArg::Ud => Flavor::Ud,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Align a parallel corpus with IBM-style EM and write Pharaoh links.
    Align {
        /// Source-side file.
        #[arg(long)]
        src: PathBuf,
        /// Target-side file, line-aligned with the source.
        #[arg(long)]
        tgt: PathBuf,
        #[arg(long, default_value = "src")]
        src_lang: String,
        #[arg(long, default_value = "tgt")]
        tgt_lang: String,
        #[arg(long, value_enum, default_value_t = InputFormat::Text)]
        format: InputFormat,
        #[arg(long, value_enum, default_value_t = Direction::Intersect)]
        direction: Direction,
        /// EM iterations.
        #[arg(long, default_value_t = 5)]
        iterations: u32,
        /// Output file name inside the run directory.
        #[arg(long, default_value = "alignments.txt")]
        out: String,
    },
    /// Extract a one-best translation lexicon from a parallel corpus.
    Lexicon {
        #[arg(long)]
        src: PathBuf,
        #[arg(long)]
        tgt: PathBuf,
        #[arg(long, default_value = "src")]
        src_lang: String,
        #[arg(long, default_value = "tgt")]
        tgt_lang: String,
        #[arg(long, value_enum, default_value_t = InputFormat::Text)]
        format: InputFormat,
        #[arg(long, default_value_t = 5)]
        iterations: u32,
        /// Skip sentence pairs longer than this when counting links.
        #[arg(long, default_value_t = 100)]
        max_len: usize,
        #[arg(long, default_value = "lexicon.tsv")]
        out: String,
    },
    /// Mix monolingual corpora into one code-switched corpus.
    Codeswitch {
        /// Corpus as lang=path; repeat for every language, first is the base.
        #[arg(long = "corpus", required = true)]
        corpora: Vec<String>,
        /// Translation lexicon file; repeat to cover every language pair in
        /// both directions.
        #[arg(long = "lexicon", required = true)]
        lexicons: Vec<PathBuf>,
        /// Replacement probability.
        #[arg(long, default_value_t = 0.3)]
        alpha: f64,
        #[arg(long, default_value_t = 2)]
        seed: u64,
        #[arg(long, default_value = "codeswitch.txt")]
        out: String,
    },
    /// Train hierarchical word clusters on a tokenized corpus.
    Cluster {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "xx")]
        lang: String,
        /// Cluster count.
        #[arg(long, default_value_t = 32)]
        k: usize,
        /// Minimum word frequency.
        #[arg(long, default_value_t = 1)]
        min_count: u64,
        /// Exhaustive merging instead of the frequency-windowed schedule.
        #[arg(long)]
        exact: bool,
        #[arg(long, default_value = "clusters.tsv")]
        out: String,
    },
    /// Replace treebank lexical values through a translation lexicon.
    Lexicalize {
        #[arg(long)]
        treebank: PathBuf,
        #[arg(long, default_value = "src")]
        lang: String,
        #[arg(long)]
        lexicon: PathBuf,
        #[arg(long, default_value = "lexicalized.conllu")]
        out: String,
    },
    /// Copy parsed source trees onto target sentences through alignments.
    Project {
        /// Parsed source side (CoNLL).
        #[arg(long)]
        src: PathBuf,
        /// Tagged target side (CoNLL).
        #[arg(long)]
        tgt: PathBuf,
        /// Pharaoh alignment file, intersected links.
        #[arg(long)]
        alignments: PathBuf,
        #[arg(long, default_value = "src")]
        src_lang: String,
        #[arg(long, default_value = "tgt")]
        tgt_lang: String,
        /// Density tiers, e.g. 100,90,80,70.
        #[arg(long)]
        tiers: Option<String>,
        #[arg(long, default_value = "projected.conllu")]
        out: String,
    },
    /// Rank transfer sources for a target by typological feature overlap.
    SelectSources {
        /// Feature CSV: header `lang` plus one column per feature.
        #[arg(long)]
        wals: PathBuf,
        #[arg(long)]
        target: String,
        /// Minimum shared feature count.
        #[arg(long, default_value_t = DEFAULT_SELECT_THRESHOLD)]
        threshold: usize,
    },
    /// Train a parsing model on an annotated treebank.
    Train {
        #[arg(long)]
        treebank: PathBuf,
        #[arg(long, default_value = "xx")]
        lang: String,
        #[arg(long, value_enum, default_value_t = FamiliesArg::Delex)]
        families: FamiliesArg,
        /// Cross-lingual cluster file, required with cluster families.
        #[arg(long)]
        cluster_cross: Option<PathBuf>,
        /// Monolingual cluster file.
        #[arg(long)]
        cluster_mono: Option<PathBuf>,
        #[arg(long, default_value_t = 5)]
        epochs: u32,
        #[arg(long, default_value_t = DEFAULT_BEAM_WIDTH)]
        beam: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Accept training trees whose root has siblings.
        #[arg(long)]
        multi_root: bool,
        #[arg(long, default_value = "model.bin")]
        out: String,
    },
    /// Parse a treebank with a trained model.
    Parse {
        #[arg(long)]
        model: PathBuf,
        /// Tagged input treebank (CoNLL); existing heads are ignored.
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "xx")]
        lang: String,
        #[arg(long)]
        cluster_cross: Option<PathBuf>,
        #[arg(long)]
        cluster_mono: Option<PathBuf>,
        /// Beam width override.
        #[arg(long)]
        beam: Option<usize>,
        #[arg(long, default_value_t = 1)]
        threads: usize,
        #[arg(long, default_value = "parsed.conllu")]
        out: String,
    },
    /// Score predictions against gold trees; optionally compare two systems.
    Eval {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        /// Second prediction; adds a McNemar test against `--pred`.
        #[arg(long)]
        compare: Option<PathBuf>,
        #[arg(long, default_value = "xx")]
        lang: String,
        #[arg(long, value_enum, default_value_t = FlavorArg::Google)]
        flavor: FlavorArg,
        /// Count label+head correctness in the McNemar test instead of head
        /// correctness.
        #[arg(long)]
        labeled: bool,
        /// Continuity-corrected chi-squared approximation instead of the
        /// exact binomial test.
        #[arg(long)]
        chi2: bool,
        /// Print the tab-separated report instead of the text tables.
        #[arg(long)]
        tsv: bool,
    },
    /// Parse raw target text with a model and retrain on the output.
    Selftrain {
        #[arg(long)]
        model: PathBuf,
        /// Target treebank whose text is self-trained on.
        #[arg(long)]
        treebank: PathBuf,
        #[arg(long, default_value = "xx")]
        lang: String,
        #[arg(long)]
        cluster_cross: Option<PathBuf>,
        #[arg(long, default_value_t = 5)]
        epochs: u32,
        #[arg(long)]
        beam: Option<usize>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value = "model.bin")]
        out: String,
    },
    /// Run a full experiment from a config file.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
        /// Override a config key, as key=value; repeatable.
        #[arg(long = "set")]
        sets: Vec<String>,
    },
    /// Regenerate the bundled synthetic fixtures.
    Fixtures {
        #[arg(long, default_value = "fixtures")]
        out: PathBuf,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
}

fn main() {
    env_logger::init();
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {}: {}", e.class(), e);
        std::process::exit(e.exit_code());
    }
}

fn load_side(path: &Path, lang: &str, format: InputFormat) -> Result<MonolingualCorpus> {
    match format {
        InputFormat::Text => load_tokenized(path, lang),
        InputFormat::Conllu => Ok(MonolingualCorpus {
            language: lang.to_string(),
            sentences: treebank_forms(&load_treebank(path, lang)?),
        }),
    }
}

fn load_parallel(
    src: &Path,
    tgt: &Path,
    src_lang: &str,
    tgt_lang: &str,
    format: InputFormat,
) -> Result<ParallelCorpus> {
    let src_corpus = load_side(src, src_lang, format)?;
    let tgt_corpus = load_side(tgt, tgt_lang, format)?;
    ParallelCorpus::from_corpora(&src_corpus, &tgt_corpus)
}

fn compute_links(
    corpus: &ParallelCorpus,
    direction: Direction,
    iterations: u32,
) -> Result<Vec<Vec<(usize, usize)>>> {
    match direction {
        Direction::Intersect => bidirectional_align(corpus, iterations),
        Direction::Forward => {
            let table = train_ibm1(corpus, iterations)?;
            Ok(align_corpus(&table, corpus))
        }
        Direction::Reverse => {
            let reversed = corpus.reversed();
            let table = train_ibm1(&reversed, iterations)?;
            Ok(flip_links(&align_corpus(&table, &reversed)))
        }
    }
}

fn load_cluster_context(
    model: &Model,
    cross: &Option<PathBuf>,
    mono: &Option<PathBuf>,
) -> Result<(Option<Clustering>, Option<Clustering>)> {
    let read = |path: &PathBuf| -> Result<Clustering> {
        read_clusters(open_in(path)?, &path.display().to_string())
    };
    let cross_clustering = cross.as_ref().map(&read).transpose()?;
    let mono_clustering = mono.as_ref().map(&read).transpose()?;
    if model.families.contains(Family::Cluster) {
        if let Some(trained) = &model.cluster_refs.cross {
            match (cross, &cross_clustering) {
                (Some(path), _) => {
                    let given = path.file_name().map(|n| n.to_string_lossy().into_owned());
                    if given.as_deref() != Some(trained.as_str()) {
                        log::warn!(
                            "model was trained with clusters `{}`, parsing with `{}`",
                            trained,
                            path.display()
                        );
                    }
                }
                (None, _) => {
                    return Err(Error::usage(format!(
                        "model was trained with cluster file `{}`; pass it via --cluster-cross",
                        trained
                    )));
                }
            }
        }
        if model.cluster_refs.mono.is_some() && mono_clustering.is_none() {
            return Err(Error::usage(
                "model was trained with monolingual clusters; pass --cluster-mono",
            ));
        }
    }
    Ok((cross_clustering, mono_clustering))
}

fn run(cli: Cli) -> Result<()> {
    let run_dir = cli.run_dir.as_deref();
    match cli.command {
        Command::Align {
            src,
            tgt,
            src_lang,
            tgt_lang,
            format,
            direction,
            iterations,
            out,
        } => {
            let mut run = RunContext::create("align", run_dir)?;
            run.record_input("src", &src)?;
            run.record_input("tgt", &tgt)?;
            run.record_param("iterations", iterations);
            let corpus = load_parallel(&src, &tgt, &src_lang, &tgt_lang, format)?;
            let links = compute_links(&corpus, direction, iterations)?;
            let mut w = create_out(&run.path(&out))?;
            write_pharaoh(&mut w, &links)?;
            w.flush()?;
            run.record_output(&out)?;
            run.write_manifest()?;
            let total: usize = links.iter().map(|l| l.len()).sum();
            println!("aligned {} sentence pairs, {} links", corpus.len(), total);
            Ok(())
        }
        Command::Lexicon {
            src,
            tgt,
            src_lang,
            tgt_lang,
            format,
            iterations,
            max_len,
            out,
        } => {
            let mut run = RunContext::create("lexicon", run_dir)?;
            run.record_input("src", &src)?;
            run.record_input("tgt", &tgt)?;
            run.record_param("iterations", iterations);
            run.record_param("max-len", max_len);
            let corpus = load_parallel(&src, &tgt, &src_lang, &tgt_lang, format)?;
            let links = bidirectional_align(&corpus, iterations)?;
            let lexicon = extract_lexicon(&corpus, &links, max_len)?;
            let mut w = create_out(&run.path(&out))?;
            write_lexicon(&mut w, &lexicon)?;
            w.flush()?;
            run.record_output(&out)?;
            run.write_manifest()?;
            println!(
                "extracted {} -> {} lexicon with {} entries",
                lexicon.src_lang,
                lexicon.tgt_lang,
                lexicon.len()
            );
            Ok(())
        }
        Command::Codeswitch { corpora, lexicons, alpha, seed, out } => {
            let mut run = RunContext::create("codeswitch", run_dir)?;
            run.record_seed("codeswitch", seed);
            run.record_param("alpha", alpha);
            let mut loaded = Vec::new();
            for (i, spec) in corpora.iter().enumerate() {
                let Some((lang, path)) = spec.split_once('=') else {
                    return Err(Error::usage(format!(
                        "corpus argument `{}` is not lang=path",
                        spec
                    )));
                };
                let path = PathBuf::from(path);
                run.record_input(&format!("corpus.{}", lang), &path)?;
                let _ = i;
                loaded.push(load_tokenized(&path, lang)?);
            }
            let mut set = LexiconSet::default();
            for path in &lexicons {
                run.record_input(&format!("lexicon:{}", path.display()), path)?;
                set.insert(read_lexicon(open_in(path)?, &path.display().to_string())?);
            }
            let mixed = generate_codeswitch(&loaded, &set, alpha, seed)?;
            let mut w = create_out(&run.path(&out))?;
            xlparse::treebank::write_tokenized_corpus(
                &mut w,
                &mixed,
                Some(&format!("alpha={} seed={}", alpha, seed)),
            )?;
            w.flush()?;
            run.record_output(&out)?;
            run.write_manifest()?;
            println!(
                "mixed {} sentences, {} tokens",
                mixed.sentences.len(),
                mixed.token_count()
            );
            Ok(())
        }
        Command::Cluster { input, lang, k, min_count, exact, out } => {
            let mut run = RunContext::create("cluster", run_dir)?;
            run.record_input("input", &input)?;
            run.record_param("k", k);
            run.record_param("min-count", min_count);
            let corpus = load_tokenized(&input, &lang)?;
            let mode = if exact { BrownMode::Exact } else { BrownMode::Window };
            let clustering = brown_cluster(&corpus, k, min_count, mode)?;
            let mut w = create_out(&run.path(&out))?;
            write_clusters(&mut w, &clustering)?;
            w.flush()?;
            run.record_output(&out)?;
            run.write_manifest()?;
            println!("clustered {} words", clustering.len());
            Ok(())
        }
        Command::Lexicalize { treebank, lang, lexicon, out } => {
            let mut run = RunContext::create("lexicalize", run_dir)?;
            run.record_input("treebank", &treebank)?;
            run.record_input("lexicon", &lexicon)?;
            let mut bank = load_treebank(&treebank, &lang)?;
            let lex = read_lexicon(open_in(&lexicon)?, &lexicon.display().to_string())?;
            let stats = lexicalize(&mut bank, &lex)?;
            save_treebank(&run.path(&out), &bank)?;
            run.record_output(&out)?;
            run.write_manifest()?;
            println!(
                "lexicalized: {} translated, {} untranslatable, {} unknown",
                stats.translated, stats.untranslatable, stats.missing
            );
            Ok(())
        }
        Command::Project { src, tgt, alignments, src_lang, tgt_lang, tiers, out } => {
            let mut run = RunContext::create("project", run_dir)?;
            run.record_input("src", &src)?;
            run.record_input("tgt", &tgt)?;
            run.record_input("alignments", &alignments)?;
            let src_bank = load_treebank(&src, &src_lang)?;
            let tgt_bank = load_treebank(&tgt, &tgt_lang)?;
            let links =
                read_pharaoh(open_in(&alignments)?, &alignments.display().to_string())?;
            if src_bank.len() != tgt_bank.len() || links.len() != src_bank.len() {
                return Err(Error::data(format!(
                    "side lengths disagree: {} source sentences, {} target, {} link lines",
                    src_bank.len(),
                    tgt_bank.len(),
                    links.len()
                )));
            }
            let tier_list = match &tiers {
                Some(text) => parse_tier_list(text)?,
                None => DEFAULT_TIERS.to_vec(),
            };
            transfer::check_tiers(&tier_list)?;
            let mut partials = Vec::with_capacity(src_bank.len());
            for ((s, t), l) in src_bank
                .sentences
                .iter()
                .zip(&tgt_bank.sentences)
                .zip(&links)
            {
                if !s.fully_annotated() {
                    return Err(Error::data(
                        "projection needs fully parsed source sentences",
                    ));
                }
                partials.push(project(s, t, l)?);
            }
            let mut counts: BTreeMap<String, usize> = BTreeMap::new();
            for p in &partials {
                let key = match assign_tier(p, &tier_list) {
                    Some(t) => format!("{}", t),
                    None => "none".to_string(),
                };
                *counts.entry(key).or_insert(0) += 1;
            }
            let mut w = create_out(&run.path(&out))?;
            write_partial_trees(&mut w, &partials)?;
            w.flush()?;
            run.record_output(&out)?;
            run.write_manifest()?;
            for (tier, count) in &counts {
                println!("tier {}: {} sentences", tier, count);
            }
            Ok(())
        }
        Command::SelectSources { wals, target, threshold } => {
            let mut run = RunContext::create("select-sources", run_dir)?;
            run.record_input("wals", &wals)?;
            run.record_param("target", &target);
            run.record_param("threshold", threshold);
            let table = read_wals(open_in(&wals)?, &wals.display().to_string())?;
            let picked = table.select_sources(&target, threshold)?;
            let mut text = String::new();
            for lang in &picked {
                text.push_str(lang);
                text.push('\n');
            }
            fs::write(run.path("sources.txt"), &text)?;
            run.record_output("sources.txt")?;
            run.write_manifest()?;
            print!("{}", text);
            Ok(())
        }
        Command::Train {
            treebank,
            lang,
            families,
            cluster_cross,
            cluster_mono,
            epochs,
            beam,
            seed,
            multi_root,
            out,
        } => {
            let mut run = RunContext::create("train", run_dir)?;
            run.record_input("treebank", &treebank)?;
            run.record_seed("train", seed);
            run.record_param("epochs", epochs);
            run.record_param("beam", beam);
            let family_set = families.to_set();
            run.record_param("families", family_set.describe());
            if family_set.contains(Family::Cluster)
                && cluster_cross.is_none()
                && cluster_mono.is_none()
            {
                return Err(Error::usage(
                    "cluster features need --cluster-cross or --cluster-mono",
                ));
            }
            let read = |path: &PathBuf| -> Result<Clustering> {
                read_clusters(open_in(path)?, &path.display().to_string())
            };
            let cross = cluster_cross.as_ref().map(&read).transpose()?;
            let mono = cluster_mono.as_ref().map(&read).transpose()?;
            if let Some(p) = &cluster_cross {
                run.record_input("cluster.cross", p)?;
            }
            if let Some(p) = &cluster_mono {
                run.record_input("cluster.mono", p)?;
            }
            let bank = load_treebank(&treebank, &lang)?;
            let clusters = ClusterContext { cross: cross.as_ref(), mono: mono.as_ref() };
            let options = TrainOptions {
                epochs,
                seed,
                beam_width: beam,
                require_single_root: !multi_root,
                ..TrainOptions::default()
            };
            let (mut model, report) = train(&bank, family_set, &clusters, &options)?;
            let file_name = |p: &PathBuf| {
                p.file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_else(|| p.display().to_string())
            };
            model.cluster_refs.cross = cluster_cross.as_ref().map(&file_name);
            model.cluster_refs.mono = cluster_mono.as_ref().map(&file_name);
            model
                .metadata
                .insert("treebank".to_string(), lang.clone());
            save_model(&run.path(&out), &model)?;
            run.record_output(&out)?;
            run.write_manifest()?;
            println!(
                "trained on {} sentences ({} skipped), {} updates over {} epochs",
                report.examples, report.skipped, report.updates, report.epochs
            );
            Ok(())
        }
        Command::Parse {
            model,
            input,
            lang,
            cluster_cross,
            cluster_mono,
            beam,
            threads,
            out,
        } => {
            let mut run = RunContext::create("parse", run_dir)?;
            run.record_input("model", &model)?;
            run.record_input("input", &input)?;
            let mut loaded = load_model(&model)?;
            if let Some(width) = beam {
                loaded.beam_width = width;
            }
            let (cross, mono) = load_cluster_context(&loaded, &cluster_cross, &cluster_mono)?;
            let clusters = ClusterContext { cross: cross.as_ref(), mono: mono.as_ref() };
            let mut bank = load_treebank(&input, &lang)?;
            if loaded.families.contains(Family::Lexical) {
                ensure_lexforms(&mut bank);
            }
            let parsed = parse_treebank(&loaded, &bank, &clusters, threads)?;
            save_treebank(&run.path(&out), &parsed)?;
            run.record_output(&out)?;
            run.write_manifest()?;
            println!("parsed {} sentences", parsed.len());
            Ok(())
        }
        Command::Eval { gold, pred, compare, lang, flavor, labeled, chi2, tsv } => {
            let mut run = RunContext::create("eval", run_dir)?;
            run.record_input("gold", &gold)?;
            run.record_input("pred", &pred)?;
            let gold_bank = load_treebank(&gold, &lang)?;
            let pred_bank = load_treebank(&pred, &lang)?;
            let options =
                ScoreOptions { exclude_punct: flavor.to_flavor().exclude_punct() };
            let evaluation = score(&gold_bank, &pred_bank, &options)?;
            let text = render_text(&evaluation);
            let table = render_tsv(&evaluation);
            fs::write(run.path("eval.txt"), &text)?;
            fs::write(run.path("eval.tsv"), &table)?;
            run.record_output("eval.txt")?;
            run.record_output("eval.tsv")?;
            print!("{}", if tsv { &table } else { &text });
            if let Some(compare) = compare {
                run.record_input("compare", &compare)?;
                let compare_bank = load_treebank(&compare, &lang)?;
                let counts =
                    paired_counts(&gold_bank, &pred_bank, &compare_bank, &options, labeled)?;
                let p = if chi2 {
                    mcnemar_chi2(counts.only_first, counts.only_second)
                } else {
                    mcnemar_exact(counts.only_first, counts.only_second)
                };
                println!(
                    "mcnemar: p={:.6} (pred-only-correct={}, compare-only-correct={}, unit={}, {})",
                    p,
                    counts.only_first,
                    counts.only_second,
                    if labeled { "las" } else { "uas" },
                    if chi2 { "chi2" } else { "exact" },
                );
            }
            run.write_manifest()?;
            Ok(())
        }
        Command::Selftrain {
            model,
            treebank,
            lang,
            cluster_cross,
            epochs,
            beam,
            seed,
            out,
        } => {
            let mut run = RunContext::create("selftrain", run_dir)?;
            run.record_input("model", &model)?;
            run.record_input("treebank", &treebank)?;
            run.record_seed("train", seed);
            let base = load_model(&model)?;
            let (cross, mono) = load_cluster_context(&base, &cluster_cross, &None)?;
            let clusters = ClusterContext { cross: cross.as_ref(), mono: mono.as_ref() };
            let bank = load_treebank(&treebank, &lang)?;
            let families = FamilySet::from_bits(
                base.families.bits() | FamilySet::pos_and_lexical().bits(),
            )?;
            let options = TrainOptions {
                epochs,
                seed,
                beam_width: beam.unwrap_or(base.beam_width),
                ..TrainOptions::default()
            };
            let (mut retrained, report) =
                self_train(&base, &bank, &clusters, families, &options)?;
            retrained.cluster_refs = base.cluster_refs.clone();
            retrained
                .metadata
                .insert("selftrained-on".to_string(), lang.clone());
            save_model(&run.path(&out), &retrained)?;
            run.record_output(&out)?;
            run.write_manifest()?;
            println!(
                "self-trained on {} parsed sentences, {} updates",
                report.examples, report.updates
            );
            Ok(())
        }
        Command::Pipeline { config, sets } => {
            let mut run = RunContext::create("pipeline", run_dir)?;
            run.record_input("config", &config)?;
            let mut loaded = Config::from_file(&config)?;
            let cwd = std::env::current_dir()?;
            for spec in &sets {
                let Some((key, value)) = spec.split_once('=') else {
                    return Err(Error::usage(format!(
                        "--set argument `{}` is not key=value",
                        spec
                    )));
                };
                loaded.set(key.trim(), value.trim(), &cwd);
            }
            let outcome = run_pipeline(&loaded, &mut run)?;
            println!("mode: {}", loaded.get("mode").unwrap_or("?"));
            println!("uas: {:.2}", outcome.evaluation.uas());
            println!("las: {:.2}", outcome.evaluation.las());
            println!("run dir: {}", run.dir.display());
            Ok(())
        }
        Command::Fixtures { out, seed } => {
            let mut run = RunContext::create("fixtures", run_dir)?;
            run.record_seed("fixtures", seed);
            write_fixtures(&out, seed)?;
            run.record_param("out", out.display().to_string());
            run.write_manifest()?;
            println!("fixtures written to {}", out.display());
            Ok(())
        }
    }
}

/// Writes the bundled synthetic data: the typology matrix, a supervised toy
/// grammar, and the two-language transfer fixture with its bitext, plus
/// ready-to-run pipeline configs.
fn write_fixtures(out: &Path, seed: u64) -> Result<()> {
    let transfer_dir = out.join("transfer");
    let config_dir = out.join("configs");
    fs::create_dir_all(&transfer_dir)?;
    fs::create_dir_all(&config_dir)?;

    fs::write(out.join("wals.csv"), synth::FIXTURE_WALS_CSV)?;

    let grammar = synth::grammar_treebank(100, 11)?;
    save_treebank(&out.join("grammar.conllu"), &grammar)?;

    let fx = synth::transfer_fixture(500, seed);
    save_treebank(&transfer_dir.join("src-treebank.conllu"), &fx.source_treebank)?;
    save_treebank(&transfer_dir.join("tgt-eval.conllu"), &fx.target_eval)?;
    let bitext_src = Treebank {
        language: "src".to_string(),
        sentences: fx.bitext_source_trees.clone(),
    };
    save_treebank(&transfer_dir.join("bitext-src.conllu"), &bitext_src)?;
    let bitext_tgt = Treebank {
        language: "tgt".to_string(),
        sentences: fx.bitext_target_sentences.clone(),
    };
    save_treebank(&transfer_dir.join("bitext-tgt.conllu"), &bitext_tgt)?;

    let mono_src = MonolingualCorpus {
        language: "src".to_string(),
        sentences: fx.bitext.pairs.iter().map(|(s, _)| s.clone()).collect(),
    };
    let mono_tgt = MonolingualCorpus {
        language: "tgt".to_string(),
        sentences: fx.bitext.pairs.iter().map(|(_, t)| t.clone()).collect(),
    };
    let mut w = create_out(&transfer_dir.join("mono-src.txt"))?;
    xlparse::treebank::write_tokenized_corpus(&mut w, &mono_src, None)?;
    w.flush()?;
    let mut w = create_out(&transfer_dir.join("mono-tgt.txt"))?;
    xlparse::treebank::write_tokenized_corpus(&mut w, &mono_tgt, None)?;
    w.flush()?;

    let mut truth = xlparse::alignment::BilingualLexicon::new("src", "tgt");
    for (s, t) in &fx.dictionary {
        truth.insert(s, Some(t));
    }
    let mut w = create_out(&transfer_dir.join("dictionary.tsv"))?;
    write_lexicon(&mut w, &truth)?;
    w.flush()?;

    fs::write(
        config_dir.join("base.cfg"),
        "target = tgt\n\
         sources = src\n\
         treebank.src = ../transfer/src-treebank.conllu\n\
         treebank.tgt = ../transfer/tgt-eval.conllu\n\
         mono.src = ../transfer/mono-src.txt\n\
         mono.tgt = ../transfer/mono-tgt.txt\n\
         parallel.src.tgt.src = ../transfer/bitext-src.conllu\n\
         parallel.src.tgt.tgt = ../transfer/bitext-tgt.conllu\n\
         epochs = 5\n\
         beam = 8\n\
         seed.train = 1\n\
         seed.codeswitch = 2\n\
         alpha = 0.5\n\
         cluster-k = 16\n\
         min-count = 1\n\
         align-iterations = 5\n\
         treebank-flavor = google\n",
    )?;
    for (file, mode) in [
        ("delex.cfg", "delex-baseline"),
        ("selftrain.cfg", "delex-selftrain"),
        ("clusters.cfg", "clusters"),
        ("lexicalized.cfg", "lexicalized"),
        ("density.cfg", "density"),
    ] {
        fs::write(
            config_dir.join(file),
            format!("include = base.cfg\nmode = {}\n", mode),
        )?;
    }
    Ok(())
}

