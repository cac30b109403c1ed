//! Parallel corpora: vocabularies, sentence pairs, file IO, frequency buckets
//! and the synthetic generator.

mod buckets;
mod synth;
mod vocab;

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use buckets::{bucketize, default_cutoffs, Bucket, FrequencyBuckets};
pub use synth::{gen_corpus, gen_split, GroundTruthLexicon, SynthConfig};
pub use vocab::{TokenId, Vocab, BOS, EOS, KD_TAG, NUM_SPECIALS, PAD, RAW_TAG, SPECIALS, UNK};

use crate::error::{Error, Result};
use crate::fsio;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Raw,
    Distilled,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SentencePair {
    pub source: Vec<TokenId>,
    pub target: Vec<TokenId>,
    pub origin: Origin,
}

/// Sentence pairs sharing one source and one target vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct ParallelCorpus {
    pub pairs: Vec<SentencePair>,
    pub src_vocab: Arc<Vocab>,
    pub tgt_vocab: Arc<Vocab>,
}

impl ParallelCorpus {
    /// Builds vocabularies from the sentences themselves (training corpora).
    pub fn from_tokens(src: &[Vec<String>], tgt: &[Vec<String>], origin: Origin) -> Result<Self> {
        if src.len() != tgt.len() {
            return Err(Error::LineCountMismatch { src: src.len(), tgt: tgt.len() });
        }
        let src_vocab = Vocab::build(src.iter().map(|s| s.iter().map(String::as_str)));
        let tgt_vocab = Vocab::build(tgt.iter().map(|s| s.iter().map(String::as_str)));
        Self::encode_with(src, tgt, Arc::new(src_vocab), Arc::new(tgt_vocab), origin)
    }

    /// Encodes sentences against existing vocabularies; unseen tokens become UNK.
    pub fn encode_with(
        src: &[Vec<String>],
        tgt: &[Vec<String>],
        src_vocab: Arc<Vocab>,
        tgt_vocab: Arc<Vocab>,
        origin: Origin,
    ) -> Result<Self> {
        if src.len() != tgt.len() {
            return Err(Error::LineCountMismatch { src: src.len(), tgt: tgt.len() });
        }
        let enc = |v: &Vocab, s: &[String]| s.iter().map(|t| v.id(t)).collect::<Vec<_>>();
        let pairs = src
            .iter()
            .zip(tgt)
            .map(|(s, t)| SentencePair { source: enc(&src_vocab, s), target: enc(&tgt_vocab, t), origin })
            .collect();
        let corpus = ParallelCorpus { pairs, src_vocab, tgt_vocab };
        corpus.validate()?;
        Ok(corpus)
    }

    pub fn validate(&self) -> Result<()> {
        if self.pairs.is_empty() {
            return Err(Error::invalid("corpus has no sentence pairs"));
        }
        for (n, p) in self.pairs.iter().enumerate() {
            if p.source.is_empty() || p.target.is_empty() {
                return Err(Error::invalid(format!("pair {n} has an empty side")));
            }
            let bad_src = p.source.iter().any(|&i| !self.src_vocab.contains(i));
            let bad_tgt = p.target.iter().any(|&i| !self.tgt_vocab.contains(i));
            if bad_src || bad_tgt {
                return Err(Error::invalid(format!("pair {n} has ids outside its vocabulary")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn same_vocabs(&self, other: &ParallelCorpus) -> bool {
        (Arc::ptr_eq(&self.src_vocab, &other.src_vocab) || self.src_vocab == other.src_vocab)
            && (Arc::ptr_eq(&self.tgt_vocab, &other.tgt_vocab) || self.tgt_vocab == other.tgt_vocab)
    }

    /// Same vocabularies, different pairs.
    pub fn with_pairs(&self, pairs: Vec<SentencePair>) -> Self {
        ParallelCorpus { pairs, src_vocab: self.src_vocab.clone(), tgt_vocab: self.tgt_vocab.clone() }
    }

    pub fn source_lines(&self) -> Vec<String> {
        self.pairs.iter().map(|p| self.src_vocab.decode(&p.source).join(" ")).collect()
    }

    pub fn target_lines(&self) -> Vec<String> {
        self.pairs.iter().map(|p| self.tgt_vocab.decode(&p.target).join(" ")).collect()
    }

    /// Writes the two-file text format (one sentence per line, single spaces).
    pub fn write(&self, src_path: &Path, tgt_path: &Path) -> Result<()> {
        fsio::write_atomic(src_path, join_lines(&self.source_lines()).as_bytes())?;
        fsio::write_atomic(tgt_path, join_lines(&self.target_lines()).as_bytes())
    }
}

fn join_lines(lines: &[String]) -> String {
    let mut out = lines.join("\n");
    out.push('\n');
    out
}

/// Reads one whitespace-tokenized sentence per line; empty lines are an error.
pub fn read_sentences(path: &Path) -> Result<Vec<Vec<String>>> {
    let text = fsio::read_to_string(path)?;
    text.lines()
        .enumerate()
        .map(|(n, line)| {
            let toks: Vec<String> = line.split_whitespace().map(str::to_string).collect();
            if toks.is_empty() {
                Err(Error::EmptyLine { path: path.to_path_buf(), line: n + 1 })
            } else {
                Ok(toks)
            }
        })
        .collect()
}

type Sentences = Vec<Vec<String>>;

fn read_pair_files(src_path: &Path, tgt_path: &Path) -> Result<(Sentences, Sentences)> {
    for p in [src_path, tgt_path] {
        if !p.exists() {
            return Err(Error::MissingArtifact("corpus file", p.to_path_buf()));
        }
    }
    let src = read_sentences(src_path)?;
    let tgt = read_sentences(tgt_path)?;
    if src.len() != tgt.len() {
        return Err(Error::LineCountMismatch { src: src.len(), tgt: tgt.len() });
    }
    Ok((src, tgt))
}

/// Loads a training corpus, building both vocabularies from the files.
pub fn load_corpus(src_path: &Path, tgt_path: &Path) -> Result<ParallelCorpus> {
    let (src, tgt) = read_pair_files(src_path, tgt_path)?;
    ParallelCorpus::from_tokens(&src, &tgt, Origin::Raw)
}

/// Loads a corpus against fixed vocabularies (test sets, distilled data).
pub fn load_corpus_with(
    src_path: &Path,
    tgt_path: &Path,
    src_vocab: Arc<Vocab>,
    tgt_vocab: Arc<Vocab>,
    origin: Origin,
) -> Result<ParallelCorpus> {
    let (src, tgt) = read_pair_files(src_path, tgt_path)?;
    ParallelCorpus::encode_with(&src, &tgt, src_vocab, tgt_vocab, origin)
}
