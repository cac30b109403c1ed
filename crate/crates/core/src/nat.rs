//! Toy non-autoregressive translation model.
//!
//! Every target position `t` of a length-`T` output reads the source word at
//! the uniformly copied position `floor(t * |x| / T)`, plus a learned
//! position vector and the embeddings of any origin-tag tokens:
//!
//! ```text
//! h_t      = E_src[x_copy(t)] + sum(E_src[tag]) + E_pos[t]
//! logits_t = W_out h_t + b_out
//! ```
//!
//! Positions are predicted independently. The target length is `|x|` plus an
//! offset in `[-Δ, +Δ]` chosen by a classifier over the mean source embedding.
//! Training minimizes `(1 - λ) L_NAT + λ L_prior` with analytic gradients.

use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::aligner::AlignmentLinks;
use crate::checkpoint::Dump;
use crate::corpus::{Origin, ParallelCorpus, SentencePair, TokenId, KD_TAG, RAW_TAG};
use crate::error::{Error, Result};
use crate::math;
use crate::optim::{clip_factor, EpochBatcher, TrainConfig};
use crate::priors::{lambda_at, PriorTable, ScheduleConfig};
use crate::seed;

/// Anything that can answer a single-word lexical query.
pub trait LexicalModel {
    /// Output distribution over the target vocabulary for the one-word source `(f)`.
    fn lexical_query(&self, f: TokenId) -> Vec<f64>;
    fn target_size(&self) -> usize;
    fn raw_trained(&self) -> bool {
        true
    }
    fn seed(&self) -> Option<u64> {
        None
    }
}

fn is_control(id: TokenId) -> bool {
    id == KD_TAG || id == RAW_TAG
}

/// Splits a source sentence into copied words and origin-tag tokens.
fn split_source(source: &[TokenId]) -> (Vec<TokenId>, Vec<TokenId>) {
    let (control, content): (Vec<TokenId>, Vec<TokenId>) = source.iter().partition(|&&id| is_control(id));
    if content.is_empty() {
        (control, Vec::new())
    } else {
        (content, control)
    }
}

fn copy_position(t: usize, src_len: usize, tgt_len: usize) -> usize {
    (t * src_len / tgt_len).min(src_len - 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LexModelParams {
    pub dim: usize,
    pub src_size: usize,
    pub tgt_size: usize,
    pub max_positions: usize,
    pub max_offset: usize,
    pub seed: u64,
    pub floor: f64,
    /// True when every training pair was raw (not distilled) data.
    pub raw_only: bool,
    /// `src_size x dim`
    pub src_emb: Vec<f64>,
    /// `max_positions x dim`
    pub pos_emb: Vec<f64>,
    /// `tgt_size x dim`, one row per target word.
    pub out_w: Vec<f64>,
    pub out_b: Vec<f64>,
    /// `(2Δ + 1) x dim`
    pub len_w: Vec<f64>,
    pub len_b: Vec<f64>,
}

impl LexModelParams {
    pub fn zeros(src_size: usize, tgt_size: usize, config: &TrainConfig) -> Self {
        let (d, classes) = (config.dim, 2 * config.max_offset + 1);
        LexModelParams {
            dim: d,
            src_size,
            tgt_size,
            max_positions: config.max_positions,
            max_offset: config.max_offset,
            seed: config.seed,
            floor: config.floor,
            raw_only: false,
            src_emb: vec![0.0; src_size * d],
            pos_emb: vec![0.0; config.max_positions * d],
            out_w: vec![0.0; tgt_size * d],
            out_b: vec![0.0; tgt_size],
            len_w: vec![0.0; classes * d],
            len_b: vec![0.0; classes],
        }
    }

    /// Uniform(-init_scale, init_scale) weights, zero biases.
    pub fn init(src_size: usize, tgt_size: usize, config: &TrainConfig) -> Self {
        let mut p = Self::zeros(src_size, tgt_size, config);
        let mut rng = seed::named_rng(config.seed, "nat/init");
        let a = config.init_scale;
        if a > 0.0 {
            for v in p.src_emb.iter_mut().chain(&mut p.pos_emb).chain(&mut p.out_w).chain(&mut p.len_w) {
                *v = rng.gen_range(-a..a);
            }
        }
        p
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.tensors_mut().into_iter().for_each(|t| t.iter_mut().for_each(|v| *v = 0.0));
        z
    }

    pub fn tensors(&self) -> [&Vec<f64>; 6] {
        [&self.src_emb, &self.pos_emb, &self.out_w, &self.out_b, &self.len_w, &self.len_b]
    }

    pub fn tensors_mut(&mut self) -> [&mut Vec<f64>; 6] {
        [&mut self.src_emb, &mut self.pos_emb, &mut self.out_w, &mut self.out_b, &mut self.len_w, &mut self.len_b]
    }

    fn length_classes(&self) -> usize {
        2 * self.max_offset + 1
    }

    fn emb(&self, id: TokenId) -> &[f64] {
        let i = (id as usize).min(self.src_size - 1);
        &self.src_emb[i * self.dim..(i + 1) * self.dim]
    }

    fn hidden(&self, content: &[TokenId], control: &[TokenId], t: usize, tgt_len: usize) -> Vec<f64> {
        let d = self.dim;
        let pos = t.min(self.max_positions - 1);
        let mut h = self.pos_emb[pos * d..(pos + 1) * d].to_vec();
        if !content.is_empty() {
            math::axpy(1.0, self.emb(content[copy_position(t, content.len(), tgt_len)]), &mut h);
        }
        for &c in control {
            math::axpy(1.0, self.emb(c), &mut h);
        }
        h
    }

    fn logits(&self, h: &[f64]) -> Vec<f64> {
        let d = self.dim;
        (0..self.tgt_size).map(|e| self.out_b[e] + math::dot(&self.out_w[e * d..(e + 1) * d], h)).collect()
    }

    fn mean_source(&self, source: &[TokenId]) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for &id in source {
            math::axpy(1.0 / source.len() as f64, self.emb(id), &mut m);
        }
        m
    }

    fn length_logits(&self, m: &[f64]) -> Vec<f64> {
        let d = self.dim;
        (0..self.length_classes()).map(|k| self.len_b[k] + math::dot(&self.len_w[k * d..(k + 1) * d], m)).collect()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut dump = Dump::new("natlex-nat");
        dump.set("dim", self.dim);
        dump.set("src_size", self.src_size);
        dump.set("tgt_size", self.tgt_size);
        dump.set("max_positions", self.max_positions);
        dump.set("max_offset", self.max_offset);
        dump.set("seed", self.seed);
        dump.set("floor", self.floor);
        dump.set("raw_only", self.raw_only);
        let d = self.dim;
        dump.put("src_emb", self.src_size, d, &self.src_emb);
        dump.put("pos_emb", self.max_positions, d, &self.pos_emb);
        dump.put("out_w", self.tgt_size, d, &self.out_w);
        dump.put("out_b", 1, self.tgt_size, &self.out_b);
        dump.put("len_w", self.length_classes(), d, &self.len_w);
        dump.put("len_b", 1, self.length_classes(), &self.len_b);
        dump.write(path)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut dump = Dump::read(path, "natlex-nat")?;
        let (dim, src_size, tgt_size): (usize, usize, usize) =
            (dump.get("dim")?, dump.get("src_size")?, dump.get("tgt_size")?);
        let (max_positions, max_offset): (usize, usize) = (dump.get("max_positions")?, dump.get("max_offset")?);
        let classes = 2 * max_offset + 1;
        Ok(LexModelParams {
            dim,
            src_size,
            tgt_size,
            max_positions,
            max_offset,
            seed: dump.get("seed")?,
            floor: dump.get("floor")?,
            raw_only: dump.get("raw_only")?,
            src_emb: dump.take("src_emb", src_size, dim)?,
            pos_emb: dump.take("pos_emb", max_positions, dim)?,
            out_w: dump.take("out_w", tgt_size, dim)?,
            out_b: dump.take("out_b", 1, tgt_size)?,
            len_w: dump.take("len_w", classes, dim)?,
            len_b: dump.take("len_b", 1, classes)?,
        })
    }
}

impl LexicalModel for LexModelParams {
    fn lexical_query(&self, f: TokenId) -> Vec<f64> {
        lexical_query(self, f)
    }

    fn target_size(&self) -> usize {
        self.tgt_size
    }

    fn raw_trained(&self) -> bool {
        self.raw_only
    }

    fn seed(&self) -> Option<u64> {
        Some(self.seed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub length: usize,
    /// One floored distribution over the target vocabulary per output position.
    pub distributions: Vec<Vec<f64>>,
    pub tokens: Vec<TokenId>,
}

/// Parallel decoding: predicted length, then an independent argmax per position.
pub fn decode(params: &LexModelParams, src: &[TokenId]) -> Prediction {
    assert!(!src.is_empty(), "decode needs a non-empty source");
    let (content, control) = split_source(src);
    let m = params.mean_source(src);
    let offset = math::argmax(&params.length_logits(&m)) as isize - params.max_offset as isize;
    let length = (content.len() as isize + offset).max(1) as usize;
    let distributions: Vec<Vec<f64>> = (0..length)
        .map(|t| math::floored_softmax(&params.logits(&params.hidden(&content, &control, t, length)), params.floor))
        .collect();
    let tokens = distributions.iter().map(|p| math::argmax(p) as TokenId).collect();
    Prediction { length, distributions, tokens }
}

/// First-position output distribution for the one-word source `(f)`.
pub fn lexical_query(params: &LexModelParams, f: TokenId) -> Vec<f64> {
    let (content, control) = split_source(&[f]);
    math::floored_softmax(&params.logits(&params.hidden(&content, &control, 0, 1)), params.floor)
}

/// One training example: a pair and, when a prior is used, its alignment links.
#[derive(Debug, Clone, Copy)]
pub struct TrainItem<'a> {
    pub pair: &'a SentencePair,
    pub links: Option<&'a [(u32, u32)]>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BatchStats {
    pub loss: f64,
    pub nll: f64,
    pub prior: f64,
    pub prior_positions: usize,
    /// Target positions with no linked source word or no prior row for it.
    pub skipped_positions: usize,
}

/// Mean over the batch of `(1-λ)·NLL + λ·Σ_t KL(Q(·|f_t) || P(·|x, t))` and its
/// gradient. The prior at position `t` is the row of the source word linked
/// to `t` (first link wins when several exist).
pub fn loss_and_grad(
    params: &LexModelParams,
    batch: &[TrainItem<'_>],
    lambda: f64,
    prior: Option<&PriorTable>,
) -> (BatchStats, LexModelParams) {
    let mut grad = params.zeros_like();
    let mut stats = BatchStats::default();
    let scale = 1.0 / batch.len() as f64;
    let d = params.dim;
    let mut logp = vec![0.0; params.tgt_size];
    for item in batch {
        let pair = item.pair;
        let (content, control) = split_source(&pair.source);
        let tgt_len = pair.target.len();

        // length model
        let m = params.mean_source(&pair.source);
        let len_logits = params.length_logits(&m);
        let mut len_logp = vec![0.0; len_logits.len()];
        math::log_softmax_into(&len_logits, &mut len_logp);
        let offset = (tgt_len as isize - content.len() as isize)
            .clamp(-(params.max_offset as isize), params.max_offset as isize);
        let gold_class = (offset + params.max_offset as isize) as usize;
        stats.nll -= scale * len_logp[gold_class];
        let mut dm = vec![0.0; d];
        for k in 0..len_logits.len() {
            let g = (1.0 - lambda) * scale * (len_logp[k].exp() - f64::from(k == gold_class));
            grad.len_b[k] += g;
            math::axpy(g, &m, &mut grad.len_w[k * d..(k + 1) * d]);
            math::axpy(g, &params.len_w[k * d..(k + 1) * d], &mut dm);
        }
        for &id in &pair.source {
            let i = (id as usize).min(params.src_size - 1);
            math::axpy(1.0 / pair.source.len() as f64, &dm, &mut grad.src_emb[i * d..(i + 1) * d]);
        }

        // per-position classifiers
        let mut linked: Vec<Option<TokenId>> = vec![None; tgt_len];
        if let Some(links) = item.links {
            for &(i, j) in links {
                if let (Some(slot), Some(&f)) = (linked.get_mut(j as usize), pair.source.get(i as usize)) {
                    slot.get_or_insert(f);
                }
            }
        }
        for t in 0..tgt_len {
            let h = params.hidden(&content, &control, t, tgt_len);
            math::log_softmax_into(&params.logits(&h), &mut logp);
            let y = pair.target[t] as usize;
            stats.nll -= scale * logp[y.min(params.tgt_size - 1)];
            let q = match prior {
                Some(table) if lambda > 0.0 || item.links.is_some() => {
                    let row = linked[t].and_then(|f| table.row(f));
                    if row.is_none() {
                        stats.skipped_positions += 1;
                    }
                    row
                }
                _ => None,
            };
            if let Some(q) = q {
                stats.prior_positions += 1;
                let kl: f64 = q.iter().zip(&logp).filter(|(&qe, _)| qe > 0.0).map(|(&qe, &lp)| qe * (qe.ln() - lp)).sum();
                stats.prior += scale * kl;
            }
            let mut dh = vec![0.0; d];
            for e in 0..params.tgt_size {
                let p = logp[e].exp();
                let mut g = (1.0 - lambda) * (p - f64::from(e == y));
                if let Some(q) = q {
                    g += lambda * (p - q[e]);
                }
                g *= scale;
                if g == 0.0 {
                    continue;
                }
                grad.out_b[e] += g;
                math::axpy(g, &h, &mut grad.out_w[e * d..(e + 1) * d]);
                math::axpy(g, &params.out_w[e * d..(e + 1) * d], &mut dh);
            }
            let pos = t.min(params.max_positions - 1);
            math::axpy(1.0, &dh, &mut grad.pos_emb[pos * d..(pos + 1) * d]);
            if !content.is_empty() {
                let i = (content[copy_position(t, content.len(), tgt_len)] as usize).min(params.src_size - 1);
                math::axpy(1.0, &dh, &mut grad.src_emb[i * d..(i + 1) * d]);
            }
            for &c in &control {
                let i = (c as usize).min(params.src_size - 1);
                math::axpy(1.0, &dh, &mut grad.src_emb[i * d..(i + 1) * d]);
            }
        }
    }
    stats.loss = (1.0 - lambda) * stats.nll + lambda * stats.prior;
    (stats, grad)
}

/// Per-run bookkeeping returned by the traced trainers.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    pub step_losses: Vec<f64>,
    pub prior_positions: usize,
    pub skipped_positions: usize,
}

/// Stateful SGD loop over externally supplied batches.
pub struct NatTrainer<'p> {
    pub params: LexModelParams,
    config: TrainConfig,
    prior: Option<&'p PriorTable>,
    step: usize,
    pub report: TrainReport,
}

impl<'p> NatTrainer<'p> {
    pub fn new(params: LexModelParams, config: &TrainConfig, prior: Option<&'p PriorTable>) -> Self {
        NatTrainer { params, config: config.clone(), prior, step: 0, report: TrainReport::default() }
    }

    pub fn lambda(&self) -> f64 {
        match (self.prior, self.config.fixed_lambda) {
            (_, Some(l)) => l,
            (None, None) => 0.0,
            (Some(_), None) => lambda_at(
                self.step,
                &ScheduleConfig { total_steps: self.config.steps, clamp: self.config.schedule_clamp },
            ),
        }
    }

    pub fn step(&mut self, batch: &[TrainItem<'_>]) {
        let lambda = self.lambda();
        let (stats, grad) = loss_and_grad(&self.params, batch, lambda, self.prior);
        let sq: f64 = grad.tensors().iter().flat_map(|t| t.iter()).map(|g| g * g).sum();
        let step_size = self.config.lr_at(self.step) * clip_factor(sq, self.config.clip);
        for (p, g) in self.params.tensors_mut().into_iter().zip(grad.tensors()) {
            math::axpy(-step_size, g, p);
        }
        self.report.step_losses.push(stats.loss);
        self.report.prior_positions += stats.prior_positions;
        self.report.skipped_positions += stats.skipped_positions;
        self.step += 1;
    }
}

/// [`train_nat`] plus the per-step training report.
pub fn train_nat_traced(
    corpus: &ParallelCorpus,
    config: &TrainConfig,
    prior: Option<&PriorTable>,
    alignments: Option<&AlignmentLinks>,
) -> Result<(LexModelParams, TrainReport)> {
    config.validate()?;
    corpus.validate()?;
    if prior.is_some() && alignments.is_none() {
        return Err(Error::invalid("a prior was supplied without alignments for the training corpus"));
    }
    if let Some(links) = alignments {
        if links.len() != corpus.len() {
            return Err(Error::invalid(format!(
                "alignments cover {} pairs, corpus has {}",
                links.len(),
                corpus.len()
            )));
        }
    }
    if let Some(p) = prior {
        if p.target_size() != corpus.tgt_vocab.len() {
            return Err(Error::VocabMismatch(format!(
                "prior covers {} targets, corpus vocabulary has {}",
                p.target_size(),
                corpus.tgt_vocab.len()
            )));
        }
    }
    let mut params = LexModelParams::init(corpus.src_vocab.len(), corpus.tgt_vocab.len(), config);
    params.raw_only = corpus.pairs.iter().all(|p| p.origin == Origin::Raw);
    let mut trainer = NatTrainer::new(params, config, prior);
    let mut batcher = EpochBatcher::new(corpus.len(), seed::derive(config.seed, "nat/batches"));
    for _ in 0..config.steps {
        let batch: Vec<TrainItem<'_>> = batcher
            .next_batch(config.batch_size)
            .into_iter()
            .map(|i| TrainItem { pair: &corpus.pairs[i], links: alignments.map(|a| a[i].as_slice()) })
            .collect();
        trainer.step(&batch);
    }
    Ok((trainer.params, trainer.report))
}

/// Mini-batch SGD on the combined objective; plain NLL training when no prior is given.
pub fn train_nat(
    corpus: &ParallelCorpus,
    config: &TrainConfig,
    prior: Option<&PriorTable>,
    alignments: Option<&AlignmentLinks>,
) -> Result<LexModelParams> {
    Ok(train_nat_traced(corpus, config, prior, alignments)?.0)
}

/// Trains from an arbitrary batch stream (e.g. a curriculum) without a prior.
pub fn train_nat_on_batches<'a>(
    src_size: usize,
    tgt_size: usize,
    config: &TrainConfig,
    batches: impl Iterator<Item = Vec<&'a SentencePair>>,
) -> Result<LexModelParams> {
    config.validate()?;
    let mut params = LexModelParams::init(src_size, tgt_size, config);
    let mut raw_only = true;
    let mut trainer = NatTrainer::new(params.clone(), config, None);
    for batch in batches.take(config.steps) {
        raw_only &= batch.iter().all(|p| p.origin == Origin::Raw);
        let items: Vec<TrainItem<'_>> = batch.iter().map(|&pair| TrainItem { pair, links: None }).collect();
        trainer.step(&items);
    }
    params = trainer.params;
    params.raw_only = raw_only;
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::NUM_SPECIALS;
    use crate::priors::PriorMeta;

    fn tiny_config(dim: usize) -> TrainConfig {
        TrainConfig { dim, max_offset: 1, max_positions: 4, ..TrainConfig::default() }
    }

    fn pair(src: &[TokenId], tgt: &[TokenId]) -> SentencePair {
        SentencePair { source: src.to_vec(), target: tgt.to_vec(), origin: Origin::Raw }
    }

    #[test]
    fn zero_params_decode_uniform_and_smallest_id() {
        let cfg = tiny_config(3);
        let p = LexModelParams::zeros(10, 8, &cfg);
        let pred = decode(&p, &[6, 7]);
        assert_eq!(pred.length, 1);
        assert_eq!(pred.tokens, vec![0]);
        for &v in &pred.distributions[0] {
            assert!((v - 1.0 / 8.0).abs() < 1e-12);
        }
        assert_eq!(decode(&p, &[6, 7]), pred);
    }

    /// Oracle parameters: one-hot source embeddings routed to the true target
    /// word through W_out, with the length classifier biased to offset 0.
    #[test]
    fn oracle_params_translate_word_by_word() {
        let n = NUM_SPECIALS;
        let cfg = TrainConfig { dim: 3, max_offset: 2, max_positions: 8, ..TrainConfig::default() };
        let (src_size, tgt_size) = (n + 3, n + 3);
        let mut p = LexModelParams::zeros(src_size, tgt_size, &cfg);
        let truth = [(n, n + 2), (n + 1, n), (n + 2, n + 1)];
        for (k, &(f, e)) in truth.iter().enumerate() {
            p.src_emb[f * 3 + k] = 10.0;
            p.out_w[e * 3 + k] = 1.0;
        }
        p.len_b[2] = 5.0;
        let src: Vec<TokenId> = [n + 2, n, n + 1, n].iter().map(|&i| i as TokenId).collect();
        let pred = decode(&p, &src);
        let expected: Vec<TokenId> = [n + 1, n + 2, n, n + 2].iter().map(|&i| i as TokenId).collect();
        assert_eq!(pred.tokens, expected);
        for dist in &pred.distributions {
            assert!((dist.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        let q = lexical_query(&p, n as TokenId);
        assert_eq!(math::argmax(&q), n + 2);
    }

    #[test]
    fn tags_are_not_copied() {
        let cfg = tiny_config(2);
        let p = LexModelParams::init(12, 9, &cfg);
        let tagged = decode(&p, &[KD_TAG, 7, 8]);
        assert!(tagged.length >= 1);
        let (content, control) = split_source(&[KD_TAG, 7, 8]);
        assert_eq!((content, control), (vec![7, 8], vec![KD_TAG]));
    }

    fn fd_check(params: &LexModelParams, batch: &[TrainItem<'_>], lambda: f64, prior: Option<&PriorTable>) {
        let (_, grad) = loss_and_grad(params, batch, lambda, prior);
        let h = 1e-5;
        for (k, g) in grad.tensors().iter().enumerate() {
            for idx in 0..g.len() {
                let mut plus = params.clone();
                plus.tensors_mut()[k][idx] += h;
                let mut minus = params.clone();
                minus.tensors_mut()[k][idx] -= h;
                let fd = (loss_and_grad(&plus, batch, lambda, prior).0.loss
                    - loss_and_grad(&minus, batch, lambda, prior).0.loss)
                    / (2.0 * h);
                let err = (fd - g[idx]).abs() / fd.abs().max(g[idx].abs()).max(1e-4);
                assert!(err < 1e-4, "tensor {k} idx {idx}: analytic {} vs fd {fd}", g[idx]);
            }
        }
    }

    #[test]
    fn combined_gradient_matches_finite_differences() {
        let cfg = TrainConfig { dim: 4, max_offset: 1, max_positions: 3, init_scale: 0.5, ..TrainConfig::default() };
        let params = LexModelParams::init(9, 9, &cfg);
        let mut prior = PriorTable::new(PriorMeta {
            kind: crate::priors::PriorKind::Sdd,
            tau: None,
            lexicon_provenance: None,
            seed: None,
            target_size: 9,
        });
        prior.insert(6, math::softmax(&[0.3, -0.2, 0.1, 0.0, 0.5, -0.4, 1.2, 0.7, -1.0]));
        prior.insert(7, math::softmax(&[1.0, 0.2, -0.1, 0.0, 0.3, 0.2, -0.7, 0.1, 0.9]));
        let p = pair(&[6, 7], &[7, 8]);
        let links = [(0u32, 0u32), (1, 1)];
        let batch = [TrainItem { pair: &p, links: Some(&links) }];
        for lambda in [0.0, 0.3, 1.0] {
            fd_check(&params, &batch, lambda, Some(&prior));
        }
    }

    #[test]
    fn lambda_extremes_select_one_objective() {
        let cfg = TrainConfig { dim: 3, max_offset: 1, max_positions: 3, init_scale: 0.5, ..TrainConfig::default() };
        let params = LexModelParams::init(9, 9, &cfg);
        let mut prior = PriorTable::new(PriorMeta {
            kind: crate::priors::PriorKind::Wad,
            tau: Some(2.0),
            lexicon_provenance: None,
            seed: None,
            target_size: 9,
        });
        prior.insert(6, vec![1.0 / 9.0; 9]);
        let p = pair(&[6], &[7]);
        let other = pair(&[6], &[8]);
        let links = [(0u32, 0u32)];
        let a = [TrainItem { pair: &p, links: Some(&links) }];
        let b = [TrainItem { pair: &other, links: Some(&links) }];
        // λ = 1: the target word no longer matters
        assert_eq!(loss_and_grad(&params, &a, 1.0, Some(&prior)).1, loss_and_grad(&params, &b, 1.0, Some(&prior)).1);
        // λ = 0: the prior no longer matters
        assert_eq!(loss_and_grad(&params, &a, 0.0, Some(&prior)).1, loss_and_grad(&params, &a, 0.0, None).1);
    }

    #[test]
    fn forced_zero_lambda_equals_prior_free_training() {
        let src: Vec<Vec<String>> = vec![vec!["a".into(), "b".into()], vec!["b".into()]];
        let tgt: Vec<Vec<String>> = vec![vec!["x".into(), "y".into()], vec!["y".into()]];
        let corpus = ParallelCorpus::from_tokens(&src, &tgt, Origin::Raw).unwrap();
        let cfg = TrainConfig { dim: 4, steps: 20, batch_size: 2, ..TrainConfig::default() };
        let lex = crate::aligner::train_aligner(&corpus, &Default::default()).unwrap();
        let prior = crate::priors::build_wad(&lex, 2.0, &corpus.tgt_vocab).unwrap();
        let links = crate::aligner::align_corpus(&corpus, &lex);
        let forced = TrainConfig { fixed_lambda: Some(0.0), ..cfg.clone() };
        let with_prior = train_nat(&corpus, &forced, Some(&prior), Some(&links)).unwrap();
        let plain = train_nat(&corpus, &cfg, None, None).unwrap();
        assert_eq!(with_prior.tensors(), plain.tensors());
    }

    #[test]
    fn prior_without_alignments_is_a_config_error() {
        let src: Vec<Vec<String>> = vec![vec!["a".into()]];
        let corpus = ParallelCorpus::from_tokens(&src, &src, Origin::Raw).unwrap();
        let prior = PriorTable::new(PriorMeta {
            kind: crate::priors::PriorKind::Wad,
            tau: Some(2.0),
            lexicon_provenance: None,
            seed: None,
            target_size: corpus.tgt_vocab.len(),
        });
        let err = train_nat(&corpus, &TrainConfig::default(), Some(&prior), None).unwrap_err();
        assert!(err.is_validation());
    }

    #[test]
    fn repeated_pair_nll_decreases() {
        let src: Vec<Vec<String>> = vec![vec!["a".into(), "b".into(), "c".into()]];
        let tgt: Vec<Vec<String>> = vec![vec!["x".into(), "y".into(), "z".into()]];
        let corpus = ParallelCorpus::from_tokens(&src, &tgt, Origin::Raw).unwrap();
        let cfg = TrainConfig { dim: 8, steps: 100, batch_size: 1, lr: 0.2, ..TrainConfig::default() };
        let (_, report) = train_nat_traced(&corpus, &cfg, None, None).unwrap();
        let rises = report.step_losses.windows(2).filter(|w| w[1] > w[0]).count();
        assert!(rises <= 5, "{rises} non-monotone steps");
        assert!(report.step_losses[99] < report.step_losses[0] * 0.5);
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let cfg = tiny_config(3);
        let p = LexModelParams::init(11, 13, &cfg);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nat.ckpt");
        p.write(&path).unwrap();
        assert_eq!(LexModelParams::read(&path).unwrap(), p);
    }
}
