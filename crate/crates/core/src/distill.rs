//! Toy autoregressive teacher, sequence-level distillation and the
//! raw/distilled data-mixing strategies.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Dump;
use crate::corpus::{
    Bucket, FrequencyBuckets, GroundTruthLexicon, Origin, ParallelCorpus, SentencePair, TokenId, Vocab, BOS, EOS,
    KD_TAG, PAD, RAW_TAG, UNK,
};
use crate::error::{Error, Problems, Result};
use crate::math;
use crate::optim::{clip_factor, EpochBatcher, TrainConfig};
use crate::seed;

/// Something that maps a source sentence to a translation.
pub trait Translator {
    fn translate(&self, src: &[TokenId]) -> Vec<TokenId>;
    /// Short identifier recorded in distillation provenance.
    fn describe(&self) -> String;
}

/// Autoregressive teacher: `logits_t = W_out (E_src[x_t] + E_prev[y_{t-1}]) + b`,
/// with `x_t` = PAD once `t` runs past the source and `y_{-1}` = BOS.
#[derive(Debug, Clone, PartialEq)]
pub struct TeacherParams {
    pub dim: usize,
    pub src_size: usize,
    pub tgt_size: usize,
    pub max_offset: usize,
    pub seed: u64,
    pub src_emb: Vec<f64>,
    pub prev_emb: Vec<f64>,
    pub out_w: Vec<f64>,
    pub out_b: Vec<f64>,
}

impl TeacherParams {
    pub fn init(src_size: usize, tgt_size: usize, config: &TrainConfig) -> Self {
        let d = config.dim;
        let mut rng = seed::named_rng(config.seed, "teacher/init");
        let a = config.init_scale;
        let mut draw = |n: usize| -> Vec<f64> {
            (0..n).map(|_| if a > 0.0 { rng.gen_range(-a..a) } else { 0.0 }).collect()
        };
        TeacherParams {
            dim: d,
            src_size,
            tgt_size,
            max_offset: config.max_offset,
            seed: config.seed,
            src_emb: draw(src_size * d),
            prev_emb: draw(tgt_size * d),
            out_w: draw(tgt_size * d),
            out_b: vec![0.0; tgt_size],
        }
    }

    fn tensors(&self) -> [&Vec<f64>; 4] {
        [&self.src_emb, &self.prev_emb, &self.out_w, &self.out_b]
    }

    fn tensors_mut(&mut self) -> [&mut Vec<f64>; 4] {
        [&mut self.src_emb, &mut self.prev_emb, &mut self.out_w, &mut self.out_b]
    }

    fn src_row(&self, src: &[TokenId], t: usize) -> usize {
        (src.get(t).copied().unwrap_or(PAD) as usize).min(self.src_size - 1)
    }

    fn hidden(&self, src_row: usize, prev: TokenId) -> Vec<f64> {
        let d = self.dim;
        let prev = (prev as usize).min(self.tgt_size - 1);
        let mut h = self.src_emb[src_row * d..(src_row + 1) * d].to_vec();
        math::axpy(1.0, &self.prev_emb[prev * d..(prev + 1) * d], &mut h);
        h
    }

    fn logits(&self, h: &[f64]) -> Vec<f64> {
        let d = self.dim;
        (0..self.tgt_size).map(|e| self.out_b[e] + math::dot(&self.out_w[e * d..(e + 1) * d], h)).collect()
    }

    /// Mean per-sentence NLL of `batch` (targets followed by EOS) and its gradient.
    fn loss_and_grad(&self, batch: &[&SentencePair]) -> (f64, TeacherParams) {
        let mut grad = self.clone();
        grad.tensors_mut().into_iter().for_each(|t| t.iter_mut().for_each(|v| *v = 0.0));
        let scale = 1.0 / batch.len() as f64;
        let d = self.dim;
        let mut loss = 0.0;
        let mut logp = vec![0.0; self.tgt_size];
        for pair in batch {
            let mut prev = BOS;
            for t in 0..=pair.target.len() {
                let y = pair.target.get(t).copied().unwrap_or(EOS) as usize;
                let row = self.src_row(&pair.source, t);
                let h = self.hidden(row, prev);
                math::log_softmax_into(&self.logits(&h), &mut logp);
                loss -= scale * logp[y.min(self.tgt_size - 1)];
                let mut dh = vec![0.0; d];
                for e in 0..self.tgt_size {
                    let g = scale * (logp[e].exp() - f64::from(e == y));
                    grad.out_b[e] += g;
                    math::axpy(g, &h, &mut grad.out_w[e * d..(e + 1) * d]);
                    math::axpy(g, &self.out_w[e * d..(e + 1) * d], &mut dh);
                }
                math::axpy(1.0, &dh, &mut grad.src_emb[row * d..(row + 1) * d]);
                let p = (prev as usize).min(self.tgt_size - 1);
                math::axpy(1.0, &dh, &mut grad.prev_emb[p * d..(p + 1) * d]);
                prev = y as TokenId;
            }
        }
        (loss, grad)
    }

    /// Greedy decoding until EOS or `|src| + Δ` tokens; never returns an empty output.
    pub fn greedy(&self, src: &[TokenId]) -> Vec<TokenId> {
        let limit = src.len() + self.max_offset;
        let mut out = Vec::with_capacity(limit);
        let mut prev = BOS;
        for t in 0..limit.max(1) {
            let mut logits = self.logits(&self.hidden(self.src_row(src, t), prev));
            if t == 0 {
                logits[EOS as usize] = f64::NEG_INFINITY;
            }
            let next = math::argmax(&logits) as TokenId;
            if next == EOS {
                break;
            }
            out.push(next);
            prev = next;
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut dump = Dump::new("natlex-teacher");
        dump.set("dim", self.dim);
        dump.set("src_size", self.src_size);
        dump.set("tgt_size", self.tgt_size);
        dump.set("max_offset", self.max_offset);
        dump.set("seed", self.seed);
        dump.put("src_emb", self.src_size, self.dim, &self.src_emb);
        dump.put("prev_emb", self.tgt_size, self.dim, &self.prev_emb);
        dump.put("out_w", self.tgt_size, self.dim, &self.out_w);
        dump.put("out_b", 1, self.tgt_size, &self.out_b);
        dump.write(path)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut dump = Dump::read(path, "natlex-teacher")?;
        let (dim, src_size, tgt_size): (usize, usize, usize) =
            (dump.get("dim")?, dump.get("src_size")?, dump.get("tgt_size")?);
        Ok(TeacherParams {
            dim,
            src_size,
            tgt_size,
            max_offset: dump.get("max_offset")?,
            seed: dump.get("seed")?,
            src_emb: dump.take("src_emb", src_size, dim)?,
            prev_emb: dump.take("prev_emb", tgt_size, dim)?,
            out_w: dump.take("out_w", tgt_size, dim)?,
            out_b: dump.take("out_b", 1, tgt_size)?,
        })
    }
}

impl Translator for TeacherParams {
    fn translate(&self, src: &[TokenId]) -> Vec<TokenId> {
        self.greedy(src)
    }

    fn describe(&self) -> String {
        format!("trained-teacher(seed={},dim={})", self.seed, self.dim)
    }
}

/// NLL training of the autoregressive teacher with the shared SGD contract.
pub fn train_teacher(corpus: &ParallelCorpus, config: &TrainConfig) -> Result<TeacherParams> {
    config.validate()?;
    corpus.validate()?;
    let mut params = TeacherParams::init(corpus.src_vocab.len(), corpus.tgt_vocab.len(), config);
    let mut batcher = EpochBatcher::new(corpus.len(), seed::derive(config.seed, "teacher/batches"));
    for step in 0..config.steps {
        let batch: Vec<&SentencePair> =
            batcher.next_batch(config.batch_size).into_iter().map(|i| &corpus.pairs[i]).collect();
        let (_, grad) = params.loss_and_grad(&batch);
        let sq: f64 = grad.tensors().iter().flat_map(|t| t.iter()).map(|g| g * g).sum();
        let step_size = config.lr_at(step) * clip_factor(sq, config.clip);
        for (p, g) in params.tensors_mut().into_iter().zip(grad.tensors()) {
            math::axpy(-step_size, g, p);
        }
    }
    Ok(params)
}

/// Word-for-word teacher that always emits each source type's most likely
/// synonym, except for a seeded subset of Low-bucket types that are mapped to
/// a fixed wrong word.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleTeacher {
    map: HashMap<TokenId, TokenId>,
    pub corrupted: BTreeSet<TokenId>,
    pub error_rate: f64,
    pub seed: u64,
}

impl OracleTeacher {
    pub fn translation_of(&self, f: TokenId) -> TokenId {
        self.map.get(&f).copied().unwrap_or(UNK)
    }

    /// `source \t target \t corrupted` lines, sorted by source id, preceded by a
    /// `# rate seed` header.
    pub fn to_tsv(&self, src_vocab: &Vocab, tgt_vocab: &Vocab) -> String {
        let mut keys: Vec<&TokenId> = self.map.keys().collect();
        keys.sort();
        let mut out = format!("# {} {}\n", self.error_rate, self.seed);
        for f in keys {
            let bad = u8::from(self.corrupted.contains(f));
            out.push_str(&format!("{}\t{}\t{bad}\n", src_vocab.token(*f), tgt_vocab.token(self.map[f])));
        }
        out
    }

    pub fn from_tsv(text: &str, src_vocab: &Vocab, tgt_vocab: &Vocab) -> Result<Self> {
        let parse = |line: usize, msg: &str| Error::Parse { what: "oracle teacher", line, msg: msg.into() };
        let mut lines = text.lines().enumerate();
        let header = lines.next().map(|(_, l)| l).unwrap_or_default();
        let [rate, seed] = header.trim_start_matches('#').split_whitespace().collect::<Vec<_>>()[..] else {
            return Err(parse(1, "expected '# rate seed' header"));
        };
        let mut teacher = OracleTeacher {
            map: HashMap::new(),
            corrupted: BTreeSet::new(),
            error_rate: rate.parse().map_err(|_| parse(1, "bad rate"))?,
            seed: seed.parse().map_err(|_| parse(1, "bad seed"))?,
        };
        for (n, line) in lines {
            let [f, e, bad] = line.split('\t').collect::<Vec<_>>()[..] else {
                return Err(parse(n + 1, "expected 3 columns"));
            };
            let f = src_vocab.id(f);
            teacher.map.insert(f, tgt_vocab.id(e));
            if bad == "1" {
                teacher.corrupted.insert(f);
            }
        }
        Ok(teacher)
    }
}

impl Translator for OracleTeacher {
    fn translate(&self, src: &[TokenId]) -> Vec<TokenId> {
        src.iter().filter(|&&f| f != KD_TAG && f != RAW_TAG).map(|&f| self.translation_of(f)).collect()
    }

    fn describe(&self) -> String {
        format!("oracle-teacher(rate={},seed={})", self.error_rate, self.seed)
    }
}

pub fn oracle_teacher(
    lexicon: &GroundTruthLexicon,
    src_vocab: &Vocab,
    tgt_vocab: &Vocab,
    low_freq_error_rate: f64,
    buckets: &FrequencyBuckets,
    seed: u64,
) -> Result<OracleTeacher> {
    if !(0.0..=1.0).contains(&low_freq_error_rate) {
        return Err(Error::invalid(format!("low_freq_error_rate must lie in [0, 1], got {low_freq_error_rate}")));
    }
    let modes = lexicon.mode_ids(src_vocab, tgt_vocab);
    let targets: Vec<TokenId> = tgt_vocab.regular_ids().collect();
    let mut rng = seed::rng(seed);
    let mut map = HashMap::new();
    let mut corrupted = BTreeSet::new();
    for f in src_vocab.regular_ids() {
        let Some(&mode) = modes.get(&f) else { continue };
        map.insert(f, mode);
        if buckets.bucket(f) != Bucket::Low {
            continue;
        }
        // both draws happen for every Low type so the corrupted set only
        // grows with the rate
        let u: f64 = rng.gen();
        let pick = rng.gen::<u64>();
        if u >= low_freq_error_rate {
            continue;
        }
        let synonyms: BTreeSet<TokenId> = lexicon
            .distribution(src_vocab.token(f))
            .map(|d| d.iter().filter_map(|(e, _)| tgt_vocab.get(e)).collect())
            .unwrap_or_default();
        let wrong: Vec<TokenId> = targets.iter().copied().filter(|e| !synonyms.contains(e)).collect();
        if wrong.is_empty() {
            continue;
        }
        map.insert(f, wrong[(pick % wrong.len() as u64) as usize]);
        corrupted.insert(f);
    }
    Ok(OracleTeacher { map, corrupted, error_rate: low_freq_error_rate, seed })
}

/// Replaces every target with the teacher's translation of its source.
pub fn distill(corpus: &ParallelCorpus, teacher: &dyn Translator) -> ParallelCorpus {
    let pairs = corpus
        .pairs
        .iter()
        .map(|p| {
            let mut target = teacher.translate(&p.source);
            if target.is_empty() {
                target.push(UNK);
            }
            SentencePair { source: p.source.clone(), target, origin: Origin::Distilled }
        })
        .collect();
    corpus.with_pairs(pairs)
}

/// Sidecar written next to a distilled corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistillProvenance {
    pub teacher: String,
    pub teacher_checkpoint: Option<String>,
    pub decode_mode: String,
    pub seed: u64,
}

/// Which sentences of a tagged mix carry their origin tag (`<kd>` / `<raw>`).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TagMode {
    #[default]
    Distilled,
    Raw,
    Both,
}

impl TagMode {
    fn tags(self, origin: Origin) -> bool {
        matches!(
            (self, origin),
            (TagMode::Both, _) | (TagMode::Distilled, Origin::Distilled) | (TagMode::Raw, Origin::Raw)
        )
    }
}

fn tag_for(origin: Origin) -> TokenId {
    match origin {
        Origin::Distilled => KD_TAG,
        Origin::Raw => RAW_TAG,
    }
}

/// Concatenates raw and distilled data and shuffles with `seed`. With a tag
/// mode, the selected pairs get their origin's tag token prepended to the source.
pub fn mix(raw: &ParallelCorpus, kd: &ParallelCorpus, tag: Option<TagMode>, seed: u64) -> Result<ParallelCorpus> {
    if !raw.same_vocabs(kd) {
        return Err(Error::VocabMismatch("raw and distilled corpora use different vocabularies".into()));
    }
    let mut pairs: Vec<SentencePair> = raw.pairs.iter().chain(&kd.pairs).cloned().collect();
    if let Some(mode) = tag {
        for p in pairs.iter_mut().filter(|p| mode.tags(p.origin)) {
            p.source.insert(0, tag_for(p.origin));
        }
    }
    pairs.shuffle(&mut seed::rng(seed));
    Ok(raw.with_pairs(pairs))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub raw_fraction: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurriculumPlan {
    pub phases: Vec<Phase>,
}

impl CurriculumPlan {
    /// Five equal phases with raw fractions 1, 0.75, 0.5, 0.25, 0.
    pub fn decay(total_steps: usize) -> Self {
        let base = total_steps / 5;
        let phases = [1.0, 0.75, 0.5, 0.25, 0.0]
            .iter()
            .enumerate()
            .map(|(k, &raw_fraction)| Phase {
                raw_fraction,
                steps: if k == 4 { total_steps - 4 * base } else { base },
            })
            .collect();
        CurriculumPlan { phases }
    }

    pub fn total_steps(&self) -> usize {
        self.phases.iter().map(|p| p.steps).sum()
    }

    pub fn validate(&self) -> Result<()> {
        let mut p = Problems::new();
        p.check(!self.phases.is_empty(), || "curriculum needs at least one phase".into());
        for (k, ph) in self.phases.iter().enumerate() {
            p.check((0.0..=1.0).contains(&ph.raw_fraction), || format!("phase {k} raw_fraction outside [0, 1]"));
            p.check(ph.steps > 0, || format!("phase {k} has no steps"));
        }
        p.into_result()
    }
}

/// Batch stream for the decay curriculum. Each batch draws sentence indices
/// from a shared without-replacement cycle; the first `round(fraction·B)`
/// use the raw pair and the rest the distilled pair of the same source.
pub struct CurriculumBatches<'a> {
    raw: &'a ParallelCorpus,
    kd: &'a ParallelCorpus,
    plan: CurriculumPlan,
    batch_size: usize,
    cycler: EpochBatcher,
    phase: usize,
    step_in_phase: usize,
}

impl<'a> CurriculumBatches<'a> {
    /// Zero-based phase of the next batch, or `None` once the plan is exhausted.
    pub fn current_phase(&self) -> Option<usize> {
        (self.phase < self.plan.phases.len()).then_some(self.phase)
    }
}

impl<'a> Iterator for CurriculumBatches<'a> {
    type Item = Vec<&'a SentencePair>;

    fn next(&mut self) -> Option<Self::Item> {
        while self.phase < self.plan.phases.len() && self.step_in_phase == self.plan.phases[self.phase].steps {
            self.phase += 1;
            self.step_in_phase = 0;
        }
        let phase = *self.plan.phases.get(self.phase)?;
        self.step_in_phase += 1;
        let n_raw = (phase.raw_fraction * self.batch_size as f64).round() as usize;
        let idx = self.cycler.next_batch(self.batch_size);
        Some(
            idx.into_iter()
                .enumerate()
                .map(|(k, i)| if k < n_raw { &self.raw.pairs[i] } else { &self.kd.pairs[i] })
                .collect(),
        )
    }
}

pub fn curriculum_batches<'a>(
    raw: &'a ParallelCorpus,
    kd: &'a ParallelCorpus,
    plan: &CurriculumPlan,
    batch_size: usize,
    seed: u64,
) -> Result<CurriculumBatches<'a>> {
    let mut p = Problems::new();
    p.extend("curriculum", plan.validate());
    p.check(batch_size > 0, || "curriculum batch_size must be positive".into());
    p.check(raw.len() == kd.len(), || {
        format!("raw ({}) and distilled ({}) corpora must pair up sentence by sentence", raw.len(), kd.len())
    });
    p.into_result()?;
    Ok(CurriculumBatches {
        raw,
        kd,
        plan: plan.clone(),
        batch_size,
        cycler: EpochBatcher::new(raw.len(), seed),
        phase: 0,
        step_in_phase: 0,
    })
}
