//! Stage commands and experiment ladders. Every stage reads its inputs from
//! and writes its outputs to the run directory, so any stage can be re-run on
//! its own.

mod config;
mod experiment;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use config::{
    apply_override, CorpusPaths, DistillConfig, ExperimentConfig, MetricsConfig, NoiseConfig, PipelineConfig,
    PriorChoice, PriorConfig, Strategy, TeacherConfig, TeacherKind,
};
pub use experiment::{cmd_experiment, Ladder};

use crate::aligner::{self, AlignmentLinks};
use crate::corpus::{
    self, bucketize, default_cutoffs, FrequencyBuckets, GroundTruthLexicon, Origin, ParallelCorpus, Vocab,
};
use crate::distill::{self, CurriculumPlan, DistillProvenance, OracleTeacher, TeacherParams, Translator};
use crate::error::{Error, Result};
use crate::fsio;
use crate::lexicon::{LexiconTable, Provenance};
use crate::metrics::{self, MetricsReport};
use crate::nat::{self, LexModelParams};
use crate::priors::{self, PriorTable};

/// File locations inside a run directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Layout { root: root.into() }
    }

    fn at(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn train(&self) -> (PathBuf, PathBuf) {
        (self.at("data/train.src"), self.at("data/train.tgt"))
    }
    pub fn test(&self) -> (PathBuf, PathBuf) {
        (self.at("data/test.src"), self.at("data/test.tgt"))
    }
    pub fn src_vocab(&self) -> PathBuf {
        self.at("data/src.vocab.tsv")
    }
    pub fn tgt_vocab(&self) -> PathBuf {
        self.at("data/tgt.vocab.tsv")
    }
    pub fn ground_truth(&self) -> PathBuf {
        self.at("data/ground_truth.tsv")
    }
    pub fn raw_lexicon(&self) -> PathBuf {
        self.at("align/raw.lex.tsv")
    }
    pub fn raw_links(&self) -> PathBuf {
        self.at("align/raw.align")
    }
    /// Lexicon over raw train plus test, used to pick AoLC gold words.
    pub fn eval_lexicon(&self) -> PathBuf {
        self.at("align/eval.lex.tsv")
    }
    pub fn teacher_checkpoint(&self) -> PathBuf {
        self.at("teacher/teacher.ckpt")
    }
    pub fn oracle_teacher(&self) -> PathBuf {
        self.at("teacher/oracle.tsv")
    }
    pub fn distilled(&self) -> (PathBuf, PathBuf) {
        (self.at("distill/kd.src"), self.at("distill/kd.tgt"))
    }
    pub fn distill_provenance(&self) -> PathBuf {
        self.at("distill/kd.provenance.json")
    }
    pub fn kd_lexicon(&self) -> PathBuf {
        self.at("distill/kd.lex.tsv")
    }
    pub fn kd_links(&self) -> PathBuf {
        self.at("distill/kd.align")
    }
    pub fn system_dir(&self, name: &str) -> PathBuf {
        self.at("systems").join(name)
    }
    pub fn checkpoint(&self, name: &str) -> PathBuf {
        self.system_dir(name).join("model.ckpt")
    }
    pub fn metrics(&self, name: &str) -> PathBuf {
        self.system_dir(name).join("metrics.json")
    }
    pub fn hypotheses(&self, name: &str) -> PathBuf {
        self.system_dir(name).join("hyp.txt")
    }
    pub fn comparison(&self, ladder: Ladder) -> (PathBuf, PathBuf) {
        let base = self.at("experiments").join(ladder.name());
        (base.with_extension("json"), base.with_extension("txt"))
    }
    pub fn manifest(&self) -> PathBuf {
        self.at("manifest.json")
    }
}

/// Name of the raw-data NAT whose lexical queries form the SDD prior.
pub const SDD_SOURCE_SYSTEM: &str = "nat-raw";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config: Option<PipelineConfig>,
    /// Path relative to the run directory → sha256.
    pub artifacts: BTreeMap<String, String>,
    /// Wall-clock seconds of the latest run of each stage.
    pub stages: BTreeMap<String, f64>,
}

impl RunManifest {
    pub fn load_or_default(path: &Path) -> Result<Self> {
        if path.exists() {
            Ok(serde_json::from_str(&fsio::read_to_string(path)?)?)
        } else {
            Ok(RunManifest::default())
        }
    }
}

/// Shared state of one command invocation: resolved config, layout and the
/// manifest entries it accumulates.
pub struct Run {
    pub config: PipelineConfig,
    pub layout: Layout,
    manifest: RunManifest,
}

impl Run {
    pub fn new(config: &PipelineConfig) -> Result<Self> {
        config.validate()?;
        let config = config.resolved();
        let layout = Layout::new(&config.out);
        let mut manifest = RunManifest::load_or_default(&layout.manifest())?;
        manifest.tool_version = env!("CARGO_PKG_VERSION").to_string();
        manifest.config = Some(config.clone());
        Ok(Run { config, layout, manifest })
    }

    fn record(&mut self, path: &Path) -> Result<()> {
        let rel = path.strip_prefix(&self.layout.root).unwrap_or(path).to_string_lossy().replace('\\', "/");
        self.manifest.artifacts.insert(rel, fsio::hash_file(path)?);
        Ok(())
    }

    fn write(&mut self, path: &Path, bytes: &[u8]) -> Result<()> {
        fsio::write_atomic(path, bytes)?;
        self.record(path)
    }

    fn stage<T>(&mut self, name: &str, body: impl FnOnce(&mut Self) -> Result<T>) -> Result<T> {
        let start = Instant::now();
        log::info!("stage {name}");
        let out = body(self).map_err(|e| e.in_stage(name))?;
        self.manifest.stages.insert(name.to_string(), start.elapsed().as_secs_f64());
        self.save_manifest()?;
        Ok(out)
    }

    fn save_manifest(&self) -> Result<()> {
        fsio::write_atomic(&self.layout.manifest(), serde_json::to_string_pretty(&self.manifest)?.as_bytes())
    }

    pub fn manifest(&self) -> &RunManifest {
        &self.manifest
    }

    fn vocabs(&self) -> Result<(Arc<Vocab>, Arc<Vocab>)> {
        let (s, t) = (self.layout.src_vocab(), self.layout.tgt_vocab());
        for p in [&s, &t] {
            if !p.exists() {
                return Err(Error::MissingArtifact("vocabulary", p.clone()));
            }
        }
        Ok((Arc::new(Vocab::read_tsv(&s)?), Arc::new(Vocab::read_tsv(&t)?)))
    }

    fn load(&self, (s, t): (PathBuf, PathBuf), origin: Origin) -> Result<ParallelCorpus> {
        let (sv, tv) = self.vocabs()?;
        corpus::load_corpus_with(&s, &t, sv, tv, origin)
    }

    pub fn train_corpus(&self) -> Result<ParallelCorpus> {
        self.load(self.layout.train(), Origin::Raw)
    }

    pub fn test_corpus(&self) -> Result<ParallelCorpus> {
        self.load(self.layout.test(), Origin::Raw)
    }

    pub fn distilled_corpus(&self) -> Result<ParallelCorpus> {
        self.load(self.layout.distilled(), Origin::Distilled)
    }

    fn lexicon(&self, path: &Path, provenance: Provenance) -> Result<LexiconTable> {
        let (sv, tv) = self.vocabs()?;
        LexiconTable::read_tsv(path, &sv, &tv, provenance)
    }

    fn links(&self, path: &Path) -> Result<AlignmentLinks> {
        if !path.exists() {
            return Err(Error::MissingArtifact("alignment", path.to_path_buf()));
        }
        aligner::read_pharaoh(path)
    }

    /// Source and target frequency buckets from the raw training counts.
    pub fn buckets(&self) -> Result<(FrequencyBuckets, FrequencyBuckets)> {
        let (sv, tv) = self.vocabs()?;
        let make = |v: &Vocab| {
            let (lo, hi) = match self.config.metrics.cutoffs {
                Some([lo, hi]) => (lo, hi),
                None => default_cutoffs(v),
            };
            bucketize(v, lo, hi)
        };
        Ok((make(&sv), make(&tv)))
    }

    fn write_corpus(&mut self, c: &ParallelCorpus, (s, t): (PathBuf, PathBuf)) -> Result<()> {
        c.write(&s, &t)?;
        self.record(&s)?;
        self.record(&t)
    }

    fn write_lexicon(&mut self, lex: &LexiconTable, path: &Path) -> Result<()> {
        let (sv, tv) = self.vocabs()?;
        let text = lex.to_tsv(&sv, &tv);
        self.write(path, text.as_bytes())
    }

    fn write_links(&mut self, links: &AlignmentLinks, path: &Path) -> Result<()> {
        self.write(path, aligner::links_to_pharaoh(links).as_bytes())
    }

    fn align_and_write(
        &mut self,
        c: &ParallelCorpus,
        lex_path: &Path,
        links_path: &Path,
    ) -> Result<(LexiconTable, AlignmentLinks)> {
        let lex = aligner::train_aligner(c, &self.config.aligner)?;
        let links = aligner::align_corpus(c, &lex);
        self.write_lexicon(&lex, lex_path)?;
        self.write_links(&links, links_path)?;
        Ok((lex, links))
    }
}

/// Synthesizes (or imports) the train/test corpora and the vocabularies.
pub fn cmd_gen(run: &mut Run) -> Result<()> {
    run.stage("gen", |run| {
        let (train, test, truth) = match &run.config.corpus {
            Some(paths) => {
                let train = corpus::load_corpus(&paths.train_src, &paths.train_tgt)?;
                let test = corpus::load_corpus_with(
                    &paths.test_src,
                    &paths.test_tgt,
                    train.src_vocab.clone(),
                    train.tgt_vocab.clone(),
                    Origin::Raw,
                )?;
                (train, test, None)
            }
            None => {
                let (train, test, truth) = corpus::gen_split(&run.config.synth)?;
                (train, test, Some(truth))
            }
        };
        let (sv, tv) = (run.layout.src_vocab(), run.layout.tgt_vocab());
        run.write(&sv, train.src_vocab.to_tsv().as_bytes())?;
        run.write(&tv, train.tgt_vocab.to_tsv().as_bytes())?;
        let (tr, te) = (run.layout.train(), run.layout.test());
        run.write_corpus(&train, tr)?;
        run.write_corpus(&test, te)?;
        if let Some(truth) = truth {
            let p = run.layout.ground_truth();
            run.write(&p, truth.to_tsv().as_bytes())?;
        }
        Ok(())
    })
}

/// Trains the raw-data lexicon (with training links) and the evaluation lexicon.
pub fn cmd_align(run: &mut Run) -> Result<()> {
    run.stage("align", |run| {
        let train = run.train_corpus()?;
        let test = run.test_corpus()?;
        let (lex, links) = (run.layout.raw_lexicon(), run.layout.raw_links());
        run.align_and_write(&train, &lex, &links)?;
        let mut both = train.clone();
        both.pairs.extend(test.pairs);
        let eval = aligner::train_aligner(&both, &run.config.aligner)?;
        let p = run.layout.eval_lexicon();
        run.write_lexicon(&eval, &p)
    })
}

fn ground_truth(run: &Run) -> Result<GroundTruthLexicon> {
    let p = run.layout.ground_truth();
    if !p.exists() {
        return Err(Error::MissingArtifact("ground-truth lexicon", p));
    }
    GroundTruthLexicon::from_tsv(&fsio::read_to_string(&p)?)
}

/// Trains the autoregressive teacher or materializes the oracle teacher.
pub fn cmd_teach(run: &mut Run) -> Result<()> {
    run.stage("teach", |run| match run.config.teacher.kind {
        TeacherKind::Trained => {
            let train = run.train_corpus()?;
            let teacher = distill::train_teacher(&train, &run.config.teacher.train)?;
            let p = run.layout.teacher_checkpoint();
            teacher.write(&p)?;
            run.record(&p)
        }
        TeacherKind::Oracle => {
            let truth = ground_truth(run)?;
            let (sv, tv) = run.vocabs()?;
            let (src_buckets, _) = run.buckets()?;
            let seed = run.config.stage_seed("oracle");
            let oracle =
                distill::oracle_teacher(&truth, &sv, &tv, run.config.teacher.low_freq_error_rate, &src_buckets, seed)?;
            let p = run.layout.oracle_teacher();
            run.write(&p, oracle.to_tsv(&sv, &tv).as_bytes())
        }
    })
}

fn load_teacher(run: &Run) -> Result<(Box<dyn Translator>, PathBuf)> {
    match run.config.teacher.kind {
        TeacherKind::Trained => {
            let p = run.layout.teacher_checkpoint();
            Ok((Box::new(TeacherParams::read(&p)?), p))
        }
        TeacherKind::Oracle => {
            let p = run.layout.oracle_teacher();
            if !p.exists() {
                return Err(Error::MissingArtifact("oracle teacher", p));
            }
            let (sv, tv) = run.vocabs()?;
            Ok((Box::new(OracleTeacher::from_tsv(&fsio::read_to_string(&p)?, &sv, &tv)?), p))
        }
    }
}

/// Decodes the training sources with the teacher and aligns the distilled corpus.
pub fn cmd_distill(run: &mut Run) -> Result<()> {
    run.stage("distill", |run| {
        let train = run.train_corpus()?;
        let (teacher, path) = load_teacher(run)?;
        let kd = distill::distill(&train, teacher.as_ref());
        let d = run.layout.distilled();
        run.write_corpus(&kd, d)?;
        let provenance = DistillProvenance {
            teacher: teacher.describe(),
            teacher_checkpoint: path.strip_prefix(&run.layout.root).ok().map(|p| p.to_string_lossy().into_owned()),
            decode_mode: "greedy".into(),
            seed: run.config.teacher.train.seed,
        };
        let p = run.layout.distill_provenance();
        run.write(&p, serde_json::to_string_pretty(&provenance)?.as_bytes())?;
        let (lex, links) = (run.layout.kd_lexicon(), run.layout.kd_links());
        run.align_and_write(&kd, &lex, &links)?;
        Ok(())
    })
}

/// Training data of the configured strategy, with links and lexicon for it.
struct TrainingData {
    corpus: ParallelCorpus,
    lexicon: LexiconTable,
    links: AlignmentLinks,
    /// Raw and distilled halves for the curriculum.
    curriculum: Option<(ParallelCorpus, ParallelCorpus)>,
}

fn training_data(run: &mut Run, name: &str) -> Result<TrainingData> {
    let strategy = run.config.distill.strategy;
    match strategy {
        Strategy::Raw => Ok(TrainingData {
            corpus: run.train_corpus()?,
            lexicon: run.lexicon(&run.layout.raw_lexicon(), Provenance::TrainedOnRaw)?,
            links: run.links(&run.layout.raw_links())?,
            curriculum: None,
        }),
        Strategy::Kd => Ok(TrainingData {
            corpus: run.distilled_corpus()?,
            lexicon: run.lexicon(&run.layout.kd_lexicon(), Provenance::TrainedOnDistilled)?,
            links: run.links(&run.layout.kd_links())?,
            curriculum: None,
        }),
        Strategy::Mix | Strategy::TaggedMix | Strategy::Curriculum => {
            let raw = run.train_corpus()?;
            let kd = run.distilled_corpus()?;
            let tag = (strategy == Strategy::TaggedMix).then_some(run.config.distill.tag);
            let mixed = distill::mix(&raw, &kd, tag, run.config.stage_seed("mix"))?;
            let dir = run.layout.system_dir(name);
            let (lexicon, links) = run.align_and_write(&mixed, &dir.join("train.lex.tsv"), &dir.join("train.align"))?;
            let curriculum = (strategy == Strategy::Curriculum).then_some((raw, kd));
            Ok(TrainingData { corpus: mixed, lexicon, links, curriculum })
        }
    }
}

fn build_prior(run: &mut Run, name: &str, src_vocab: &Vocab, tgt_vocab: &Vocab) -> Result<Option<PriorTable>> {
    let choice = run.config.prior.kind;
    let wad = if choice.uses_wad() {
        let mut lex = run.lexicon(&run.layout.raw_lexicon(), Provenance::TrainedOnRaw)?;
        if run.config.noise.ratio > 0.0 {
            let seed = run.config.stage_seed("noise");
            let out = aligner::inject_noise_with(&lex, run.config.noise.ratio, seed, run.config.noise.scope, Some(tgt_vocab))?;
            log::info!("noise: {} rows swapped, {} skipped", out.swapped, out.skipped);
            lex = out.table;
            let p = run.layout.system_dir(name).join("noised.lex.tsv");
            run.write_lexicon(&lex, &p)?;
        }
        Some(priors::build_wad(&lex, run.config.prior.tau, tgt_vocab)?)
    } else {
        None
    };
    let sdd = if choice.uses_sdd() {
        let teacher = LexModelParams::read(&run.layout.checkpoint(SDD_SOURCE_SYSTEM))?;
        Some(priors::build_sdd(&teacher, src_vocab))
    } else {
        None
    };
    let prior = match (wad, sdd) {
        (Some(w), Some(s)) => Some(priors::combine(&w, &s)?),
        (w, s) => w.or(s),
    };
    if let Some(table) = &prior {
        let p = run.layout.system_dir(name).join("prior.tsv");
        table.write(&p, src_vocab, tgt_vocab)?;
        run.record(&p)?;
        let mut meta = p.as_os_str().to_owned();
        meta.push(".meta.json");
        run.record(Path::new(&meta))?;
    }
    Ok(prior)
}

/// Trains the configured system's NAT model.
pub fn cmd_train(run: &mut Run) -> Result<()> {
    let name = run.config.system_name();
    run.stage(&format!("train/{name}"), |run| {
        let data = training_data(run, &name)?;
        let (sv, tv) = (data.corpus.src_vocab.clone(), data.corpus.tgt_vocab.clone());
        let prior = build_prior(run, &name, &sv, &tv)?;
        let cfg = run.config.nat.clone();
        let params = match &data.curriculum {
            Some((raw, kd)) => {
                let plan = CurriculumPlan::decay(cfg.steps.max(5));
                let batches =
                    distill::curriculum_batches(raw, kd, &plan, cfg.batch_size, run.config.stage_seed("curriculum"))?;
                nat::train_nat_on_batches(sv.len(), tv.len(), &cfg, batches)?
            }
            None => nat::train_nat(&data.corpus, &cfg, prior.as_ref(), prior.as_ref().map(|_| &data.links))?,
        };
        let p = run.layout.checkpoint(&name);
        params.write(&p)?;
        run.record(&p)?;
        // CoD of the lexicon the system was trained against
        let cod = metrics::cod(&data.lexicon);
        let p = run.layout.system_dir(&name).join("train.cod");
        run.write(&p, format!("{cod}\n").as_bytes())
    })
}

/// Decodes the test set with the configured system and writes its metrics report.
pub fn cmd_eval(run: &mut Run) -> Result<MetricsReport> {
    let name = run.config.system_name();
    run.stage(&format!("eval/{name}"), |run| {
        let params = LexModelParams::read(&run.layout.checkpoint(&name))?;
        let test = run.test_corpus()?;
        let eval_lex = run.lexicon(&run.layout.eval_lexicon(), Provenance::TrainedOnRaw)?;
        let (src_buckets, tgt_buckets) = run.buckets()?;
        let hyps: Vec<Vec<_>> = test.pairs.iter().map(|p| nat::decode(&params, &p.source).tokens).collect();
        let refs: Vec<Vec<_>> = test.pairs.iter().map(|p| p.target.clone()).collect();
        let aolc = metrics::aolc(&params, &test, &eval_lex, &src_buckets, run.config.metrics.occurrence_weighted)?;
        let bleu = metrics::bleu(&hyps, &refs)?;
        let lft = metrics::low_freq_ratio(&hyps, &tgt_buckets)?;
        let cod_path = run.layout.system_dir(&name).join("train.cod");
        if !cod_path.exists() {
            return Err(Error::MissingArtifact("training CoD", cod_path));
        }
        let cod: f64 = fsio::read_to_string(&cod_path)?
            .trim()
            .parse()
            .map_err(|_| Error::Parse { what: "training CoD", line: 1, msg: "not a number".into() })?;
        let report = MetricsReport::new(&aolc, cod, bleu, &lft, test.len());
        let tv = &test.tgt_vocab;
        let text: String = hyps.iter().map(|h| tv.decode(h).join(" ") + "\n").collect();
        let p = run.layout.hypotheses(&name);
        run.write(&p, text.as_bytes())?;
        let p = run.layout.metrics(&name);
        run.write(&p, serde_json::to_string_pretty(&report)?.as_bytes())?;
        Ok(report)
    })
}
