//! IBM Model 1 lexical translation model trained by EM, Viterbi links and
//! the alignment-noise ablation.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::corpus::{ParallelCorpus, SentencePair, TokenId, Vocab, PAD};
use crate::error::{Error, Problems, Result};
use crate::fsio;
use crate::lexicon::{LexiconTable, Provenance};
use crate::seed;

/// Source id standing in for the NULL word when `null_word` is enabled.
pub const NULL_SOURCE: TokenId = PAD;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmConfig {
    pub iterations: usize,
    /// Add-k smoothing applied to expected counts over each row's co-occurrence support.
    pub smoothing: f64,
    pub null_word: bool,
    /// Probability floor applied before the final row renormalization.
    pub floor: f64,
    /// Strength of the fast_align-style preference for diagonal links; 0 disables it.
    pub diagonal_bias: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig { iterations: 10, smoothing: 1e-4, null_word: false, floor: 1e-9, diagonal_bias: 0.0 }
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<()> {
        let mut p = Problems::new();
        p.check(self.iterations >= 1, || "iterations must be >= 1".into());
        p.check(self.smoothing >= 0.0, || "smoothing must be >= 0".into());
        p.check(self.floor >= 0.0, || "floor must be >= 0".into());
        p.check(self.diagonal_bias >= 0.0, || "diagonal_bias must be >= 0".into());
        p.into_result()
    }
}

/// Per-sentence `(source index, target index)` links, 0-indexed.
pub type AlignmentLinks = Vec<Vec<(u32, u32)>>;

fn diagonal_weight(bias: f64, i: usize, src_len: usize, j: usize, tgt_len: usize) -> f64 {
    if bias == 0.0 {
        1.0
    } else {
        (-bias * (i as f64 / src_len as f64 - j as f64 / tgt_len as f64).abs()).exp()
    }
}

fn sources_of(pair: &SentencePair, null_word: bool) -> Vec<TokenId> {
    let mut src = Vec::with_capacity(pair.source.len() + 1);
    if null_word {
        src.push(NULL_SOURCE);
    }
    src.extend_from_slice(&pair.source);
    src
}

/// Translation table restricted to co-occurring (source, target) pairs, stored row-compressed.
struct CoocTable {
    row_start: Vec<usize>,
    cols: Vec<TokenId>,
    probs: Vec<f64>,
}

impl CoocTable {
    fn build(corpus: &ParallelCorpus, null_word: bool) -> Self {
        let mut per_src: Vec<Vec<TokenId>> = vec![Vec::new(); corpus.src_vocab.len()];
        for pair in &corpus.pairs {
            for f in sources_of(pair, null_word) {
                per_src[f as usize].extend_from_slice(&pair.target);
            }
        }
        let mut row_start = Vec::with_capacity(per_src.len() + 1);
        let mut cols = Vec::new();
        row_start.push(0);
        for mut targets in per_src {
            targets.sort_unstable();
            targets.dedup();
            cols.extend(targets);
            row_start.push(cols.len());
        }
        let mut probs = vec![0.0; cols.len()];
        for f in 0..row_start.len() - 1 {
            let (a, b) = (row_start[f], row_start[f + 1]);
            for p in &mut probs[a..b] {
                *p = 1.0 / (b - a) as f64;
            }
        }
        CoocTable { row_start, cols, probs }
    }

    fn slot(&self, f: TokenId, e: TokenId) -> usize {
        let (a, b) = (self.row_start[f as usize], self.row_start[f as usize + 1]);
        a + self.cols[a..b].binary_search(&e).expect("co-occurring pair is indexed")
    }

    fn to_lexicon(&self, provenance: Provenance, floor: f64) -> LexiconTable {
        let mut table = LexiconTable::new(provenance);
        for f in 0..self.row_start.len() - 1 {
            let (a, b) = (self.row_start[f], self.row_start[f + 1]);
            if a == b {
                continue;
            }
            let mut row: Vec<(TokenId, f64)> =
                self.cols[a..b].iter().zip(&self.probs[a..b]).map(|(&e, &p)| (e, p.max(floor))).collect();
            let total: f64 = row.iter().map(|&(_, p)| p).sum();
            row.iter_mut().for_each(|(_, p)| *p /= total);
            row.retain(|&(_, p)| p > 0.0);
            table.insert_row(f as TokenId, row);
        }
        table
    }
}

/// Trains Model 1 and returns the per-iteration corpus log-likelihood alongside the table.
pub fn train_aligner_traced(
    corpus: &ParallelCorpus,
    config: &EmConfig,
    provenance: Provenance,
) -> Result<(LexiconTable, Vec<f64>)> {
    config.validate()?;
    if corpus.is_empty() {
        return Err(Error::invalid("aligner needs a non-empty corpus"));
    }
    let mut table = CoocTable::build(corpus, config.null_word);
    // slot index of every (source position, target position) cell, per pair
    let slots: Vec<Vec<u32>> = corpus
        .pairs
        .iter()
        .map(|pair| {
            let src = sources_of(pair, config.null_word);
            let mut idx = Vec::with_capacity(src.len() * pair.target.len());
            for &e in &pair.target {
                for &f in &src {
                    idx.push(table.slot(f, e) as u32);
                }
            }
            idx
        })
        .collect();

    let mut trace = Vec::with_capacity(config.iterations);
    let mut counts = vec![0.0; table.probs.len()];
    let mut weights = Vec::new();
    for _ in 0..config.iterations {
        counts.iter_mut().for_each(|c| *c = 0.0);
        let mut log_lik = 0.0;
        for (pair, idx) in corpus.pairs.iter().zip(&slots) {
            let n_src = pair.source.len() + usize::from(config.null_word);
            let tgt_len = pair.target.len();
            for j in 0..tgt_len {
                let cells = &idx[j * n_src..(j + 1) * n_src];
                weights.clear();
                for (i, &slot) in cells.iter().enumerate() {
                    let w = if config.null_word && i == 0 {
                        1.0
                    } else {
                        let pos = i - usize::from(config.null_word);
                        diagonal_weight(config.diagonal_bias, pos, pair.source.len(), j, tgt_len)
                    };
                    weights.push(table.probs[slot as usize] * w);
                }
                let denom: f64 = weights.iter().sum();
                if denom <= 0.0 {
                    continue;
                }
                log_lik += (denom / n_src as f64).ln();
                for (&slot, &w) in cells.iter().zip(&weights) {
                    counts[slot as usize] += w / denom;
                }
            }
        }
        trace.push(log_lik);
        for f in 0..table.row_start.len() - 1 {
            let (a, b) = (table.row_start[f], table.row_start[f + 1]);
            if a == b {
                continue;
            }
            let total: f64 = counts[a..b].iter().map(|c| c + config.smoothing).sum();
            if total <= 0.0 {
                continue;
            }
            for s in a..b {
                table.probs[s] = (counts[s] + config.smoothing) / total;
            }
        }
    }
    Ok((table.to_lexicon(provenance, config.floor), trace))
}

pub fn train_aligner(corpus: &ParallelCorpus, config: &EmConfig) -> Result<LexiconTable> {
    let provenance = match corpus.pairs.first().map(|p| p.origin) {
        Some(crate::corpus::Origin::Distilled) => Provenance::TrainedOnDistilled,
        _ => Provenance::TrainedOnRaw,
    };
    Ok(train_aligner_traced(corpus, config, provenance)?.0)
}

/// Model 1 corpus log-likelihood of `corpus` under `lexicon`.
pub fn log_likelihood(corpus: &ParallelCorpus, lexicon: &LexiconTable, null_word: bool) -> f64 {
    corpus
        .pairs
        .iter()
        .map(|pair| {
            let src = sources_of(pair, null_word);
            pair.target
                .iter()
                .map(|&e| (src.iter().map(|&f| lexicon.prob(f, e)).sum::<f64>() / src.len() as f64).ln())
                .sum::<f64>()
        })
        .sum()
}

/// Links every target position to its most probable source position
/// (smallest index on ties).
pub fn viterbi_align(pair: &SentencePair, lexicon: &LexiconTable) -> Vec<(u32, u32)> {
    viterbi_align_with(pair, lexicon, false, 0.0)
}

/// Viterbi links with optional NULL word (targets preferring NULL stay
/// unlinked) and diagonal bias.
pub fn viterbi_align_with(
    pair: &SentencePair,
    lexicon: &LexiconTable,
    null_word: bool,
    diagonal_bias: f64,
) -> Vec<(u32, u32)> {
    let tgt_len = pair.target.len();
    let mut links = Vec::with_capacity(tgt_len);
    for (j, &e) in pair.target.iter().enumerate() {
        let mut best = 0usize;
        let mut best_p = f64::NEG_INFINITY;
        for (i, &f) in pair.source.iter().enumerate() {
            let p = lexicon.prob(f, e) * diagonal_weight(diagonal_bias, i, pair.source.len(), j, tgt_len);
            if p > best_p {
                best = i;
                best_p = p;
            }
        }
        if null_word && lexicon.prob(NULL_SOURCE, e) > best_p {
            continue;
        }
        links.push((best as u32, j as u32));
    }
    links
}

pub fn align_corpus(corpus: &ParallelCorpus, lexicon: &LexiconTable) -> AlignmentLinks {
    corpus.pairs.iter().map(|p| viterbi_align(p, lexicon)).collect()
}

/// Pharaoh format: one line per pair of space-separated `i-j` links.
pub fn links_to_pharaoh(links: &AlignmentLinks) -> String {
    let mut out = String::new();
    for sent in links {
        let line: Vec<String> = sent.iter().map(|(i, j)| format!("{i}-{j}")).collect();
        let _ = writeln!(out, "{}", line.join(" "));
    }
    out
}

pub fn links_from_pharaoh(text: &str) -> Result<AlignmentLinks> {
    text.lines()
        .enumerate()
        .map(|(n, line)| {
            line.split_whitespace()
                .map(|link| {
                    let parsed = link.split_once('-').and_then(|(i, j)| Some((i.parse().ok()?, j.parse().ok()?)));
                    parsed.ok_or_else(|| Error::Parse { what: "alignment", line: n + 1, msg: format!("bad link {link:?}") })
                })
                .collect()
        })
        .collect()
}

pub fn write_pharaoh(path: &Path, links: &AlignmentLinks) -> Result<()> {
    fsio::write_atomic(path, links_to_pharaoh(links).as_bytes())
}

pub fn read_pharaoh(path: &Path) -> Result<AlignmentLinks> {
    if !path.exists() {
        return Err(Error::MissingArtifact("alignment file", path.to_path_buf()));
    }
    links_from_pharaoh(&fsio::read_to_string(path)?)
}

/// Where a noised row's replacement token comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseScope {
    /// Swap probabilities with another token already in the row.
    #[default]
    RowSupport,
    /// Move the maximum onto a random regular token of the whole target vocabulary.
    Vocabulary,
}

#[derive(Debug, Clone)]
pub struct NoiseOutcome {
    pub table: LexiconTable,
    pub swapped: usize,
    /// Selected rows left unchanged because there was nothing to swap with.
    pub skipped: usize,
}

/// Swaps the maximum-probability target of a `ratio` fraction of rows with
/// another random target of the same row.
pub fn inject_noise(lexicon: &LexiconTable, ratio: f64, seed: u64) -> Result<NoiseOutcome> {
    inject_noise_with(lexicon, ratio, seed, NoiseScope::RowSupport, None)
}

pub fn inject_noise_with(
    lexicon: &LexiconTable,
    ratio: f64,
    seed: u64,
    scope: NoiseScope,
    tgt_vocab: Option<&Vocab>,
) -> Result<NoiseOutcome> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::invalid(format!("noise ratio must lie in [0, 1], got {ratio}")));
    }
    let vocab_ids: Vec<TokenId> = match (scope, tgt_vocab) {
        (NoiseScope::Vocabulary, Some(v)) => v.regular_ids().collect(),
        (NoiseScope::Vocabulary, None) => {
            return Err(Error::invalid("vocabulary-scope noise needs the target vocabulary"))
        }
        _ => Vec::new(),
    };
    let mut rng = seed::rng(seed);
    let keys: Vec<TokenId> = lexicon.rows().map(|(f, _)| f).collect();
    let n_pick = (ratio * keys.len() as f64).round() as usize;
    let mut picked: Vec<TokenId> = keys.choose_multiple(&mut rng, n_pick).copied().collect();
    picked.sort_unstable();

    let mut table = lexicon.clone();
    table.provenance = Provenance::Noised;
    let (mut swapped, mut skipped) = (0, 0);
    for f in picked {
        let row = lexicon.row(f).expect("picked from existing rows").to_vec();
        let top = lexicon.argmax(f).expect("row is non-empty");
        let top_p = lexicon.prob(f, top);
        let new_row = match scope {
            NoiseScope::RowSupport => {
                let others: Vec<TokenId> = row.iter().map(|&(e, _)| e).filter(|&e| e != top).collect();
                let Some(&other) = others.choose(&mut rng) else {
                    skipped += 1;
                    continue;
                };
                let other_p = lexicon.prob(f, other);
                row.iter()
                    .map(|&(e, p)| match e {
                        e if e == top => (e, other_p),
                        e if e == other => (e, top_p),
                        _ => (e, p),
                    })
                    .collect::<Vec<_>>()
            }
            NoiseScope::Vocabulary => {
                let candidates: Vec<TokenId> = vocab_ids.iter().copied().filter(|&e| e != top).collect();
                if candidates.is_empty() {
                    skipped += 1;
                    continue;
                }
                let other = candidates[rng.gen_range(0..candidates.len())];
                let other_p = lexicon.prob(f, other);
                let mut r: Vec<(TokenId, f64)> = row
                    .iter()
                    .filter(|&&(e, _)| e != other)
                    .map(|&(e, p)| if e == top { (e, other_p) } else { (e, p) })
                    .collect();
                r.retain(|&(_, p)| p > 0.0);
                r.push((other, top_p));
                r
            }
        };
        table.insert_row(f, new_row);
        swapped += 1;
    }
    Ok(NoiseOutcome { table, swapped, skipped })
}
