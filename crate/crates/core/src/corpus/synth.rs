//! Synthetic parallel corpora with Zipfian source types and controlled
//! per-type synonym multimodality. Targets are emitted position-for-position.

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::index::sample;
use rand_distr::{Dirichlet, Poisson};
use serde::{Deserialize, Serialize};

use super::{Origin, ParallelCorpus, TokenId, Vocab, UNK};
use crate::error::{Error, Problems, Result};
use crate::lexicon::{LexiconTable, Provenance};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    /// Number of source word types.
    pub src_vocab_size: usize,
    /// Zipf exponent of the source type distribution.
    pub zipf_exponent: f64,
    /// Relative weight of a type having 1, 2, 3, ... synonyms.
    pub synonym_weights: Vec<f64>,
    /// Symmetric Dirichlet concentration of each type's synonym probabilities.
    pub synonym_concentration: f64,
    pub min_len: usize,
    pub max_len: usize,
    pub mean_len: f64,
    /// Training pairs.
    pub pairs: usize,
    /// Held-out pairs produced by [`gen_split`].
    pub test_pairs: usize,
    /// Size of the shared target-word pool; 0 gives every synonym its own word.
    pub target_pool: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            src_vocab_size: 2000,
            zipf_exponent: 1.1,
            synonym_weights: vec![1.0, 1.0, 1.0],
            synonym_concentration: 1.0,
            min_len: 3,
            max_len: 20,
            mean_len: 10.0,
            pairs: 50_000,
            test_pairs: 1000,
            target_pool: 0,
            seed: 1,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let mut p = Problems::new();
        p.check(self.src_vocab_size > 0, || "src_vocab_size must be positive".into());
        p.check(self.zipf_exponent.is_finite() && self.zipf_exponent >= 0.0, || {
            "zipf_exponent must be a finite non-negative number".into()
        });
        p.check(
            !self.synonym_weights.is_empty()
                && self.synonym_weights.iter().all(|w| w.is_finite() && *w >= 0.0)
                && self.synonym_weights.iter().sum::<f64>() > 0.0,
            || "synonym_weights must be non-negative with a positive sum".into(),
        );
        p.check(self.synonym_concentration > 0.0, || "synonym_concentration must be positive".into());
        p.check(self.min_len > 0, || "min_len must be positive".into());
        p.check(self.max_len >= self.min_len, || "max_len must be >= min_len".into());
        p.check(
            self.mean_len >= self.min_len as f64 && self.mean_len <= self.max_len as f64,
            || "mean_len must lie within [min_len, max_len]".into(),
        );
        p.check(self.pairs > 0, || "pairs must be positive".into());
        p.check(self.target_pool == 0 || self.target_pool >= self.synonym_weights.len(), || {
            "target_pool must be 0 or at least the maximum synonym count".into()
        });
        p.into_result()
    }

    /// Parses a flat `key = value` file.
    pub fn from_kv_str(text: &str) -> Result<Self> {
        let cfg: SynthConfig = toml::from_str(text).map_err(|e| Error::invalid(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_kv_string(&self) -> String {
        toml::to_string(self).expect("SynthConfig serializes to TOML")
    }
}

/// The generator's true source-type to target-synonym distributions.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthLexicon {
    types: Vec<(String, Vec<(String, f64)>)>,
    index: HashMap<String, usize>,
}

impl GroundTruthLexicon {
    pub fn new(types: Vec<(String, Vec<(String, f64)>)>) -> Self {
        let index = types.iter().enumerate().map(|(i, (s, _))| (s.clone(), i)).collect();
        GroundTruthLexicon { types, index }
    }

    pub fn distribution(&self, src: &str) -> Option<&[(String, f64)]> {
        self.index.get(src).map(|&i| self.types[i].1.as_slice())
    }

    /// Most probable synonym (first listed on ties).
    pub fn mode(&self, src: &str) -> Option<&str> {
        let dist = self.distribution(src)?;
        let mut best = &dist[0];
        for entry in &dist[1..] {
            if entry.1 > best.1 {
                best = entry;
            }
        }
        Some(&best.0)
    }

    pub fn types(&self) -> impl Iterator<Item = (&str, &[(String, f64)])> {
        self.types.iter().map(|(s, d)| (s.as_str(), d.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.types.is_empty()
    }

    /// Id-space view for source types present in `src_vocab`; synonyms absent
    /// from `tgt_vocab` collapse onto UNK.
    pub fn to_lexicon(&self, src_vocab: &Vocab, tgt_vocab: &Vocab) -> LexiconTable {
        let mut table = LexiconTable::new(Provenance::GroundTruth);
        for (src, dist) in &self.types {
            let Some(f) = src_vocab.get(src) else { continue };
            let row = dist.iter().map(|(e, p)| (tgt_vocab.get(e).unwrap_or(UNK), *p)).collect();
            table.insert_row(f, row);
        }
        table
    }

    /// Mode synonym id of every source type present in `src_vocab`.
    pub fn mode_ids(&self, src_vocab: &Vocab, tgt_vocab: &Vocab) -> HashMap<TokenId, TokenId> {
        self.types
            .iter()
            .filter_map(|(s, _)| {
                let f = src_vocab.get(s)?;
                Some((f, tgt_vocab.id(self.mode(s)?)))
            })
            .collect()
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (s, dist) in &self.types {
            for (e, p) in dist {
                let _ = writeln!(out, "{s}\t{e}\t{p:.11e}");
            }
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<Self> {
        let mut types: Vec<(String, Vec<(String, f64)>)> = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let parse = |msg: &str| Error::Parse { what: "ground-truth lexicon", line: n + 1, msg: msg.into() };
            let cols: Vec<&str> = line.split('\t').collect();
            let [s, e, p] = cols[..] else { return Err(parse("expected 3 columns")) };
            let p: f64 = p.parse().map_err(|_| parse("bad probability"))?;
            match types.last_mut() {
                Some((last, dist)) if last == s => dist.push((e.to_string(), p)),
                _ => types.push((s.to_string(), vec![(e.to_string(), p)])),
            }
        }
        Ok(GroundTruthLexicon::new(types))
    }
}

fn build_lexicon(cfg: &SynthConfig, rng: &mut seed::Rng) -> GroundTruthLexicon {
    let count_dist = WeightedIndex::new(&cfg.synonym_weights).expect("validated weights");
    let mut next_target = 0usize;
    let types = (0..cfg.src_vocab_size)
        .map(|rank| {
            let k = count_dist.sample(rng) + 1;
            let mut probs = if k == 1 {
                vec![1.0]
            } else {
                Dirichlet::new_with_size(cfg.synonym_concentration, k).expect("validated concentration").sample(rng)
            };
            probs.sort_by(|a, b| b.total_cmp(a));
            let names: Vec<String> = if cfg.target_pool == 0 {
                (0..k)
                    .map(|_| {
                        next_target += 1;
                        format!("e{}", next_target - 1)
                    })
                    .collect()
            } else {
                sample(rng, cfg.target_pool, k).into_iter().map(|j| format!("e{j}")).collect()
            };
            (format!("f{rank}"), names.into_iter().zip(probs).collect())
        })
        .collect();
    GroundTruthLexicon::new(types)
}

type Sentences = (Vec<Vec<String>>, Vec<Vec<String>>);

fn sample_sentences(cfg: &SynthConfig, lexicon: &GroundTruthLexicon, n: usize, rng: &mut seed::Rng) -> Sentences {
    let zipf: Vec<f64> = (1..=cfg.src_vocab_size).map(|r| (r as f64).powf(-cfg.zipf_exponent)).collect();
    let type_dist = WeightedIndex::new(&zipf).expect("positive Zipf weights");
    let synonym_dists: Vec<WeightedIndex<f64>> = lexicon
        .types
        .iter()
        .map(|(_, d)| WeightedIndex::new(d.iter().map(|(_, p)| *p)).expect("stochastic synonym row"))
        .collect();
    let extra = cfg.mean_len - cfg.min_len as f64;
    let length_dist = (extra > 0.0).then(|| Poisson::new(extra).expect("positive Poisson rate"));
    let mut src = Vec::with_capacity(n);
    let mut tgt = Vec::with_capacity(n);
    for _ in 0..n {
        let len = match &length_dist {
            Some(d) => {
                let draw: f64 = d.sample(rng);
                (cfg.min_len + draw as usize).min(cfg.max_len)
            }
            None => cfg.min_len,
        };
        let mut s = Vec::with_capacity(len);
        let mut t = Vec::with_capacity(len);
        for _ in 0..len {
            let ty = type_dist.sample(rng);
            let (name, dist) = &lexicon.types[ty];
            let syn = synonym_dists[ty].sample(rng);
            s.push(name.clone());
            t.push(dist[syn].0.clone());
        }
        src.push(s);
        tgt.push(t);
    }
    (src, tgt)
}

/// Generates `config.pairs` training pairs and the ground-truth lexicon.
pub fn gen_corpus(config: &SynthConfig) -> Result<(ParallelCorpus, GroundTruthLexicon)> {
    config.validate()?;
    let lexicon = build_lexicon(config, &mut seed::named_rng(config.seed, "synth/lexicon"));
    let (src, tgt) =
        sample_sentences(config, &lexicon, config.pairs, &mut seed::named_rng(config.seed, "synth/train"));
    Ok((ParallelCorpus::from_tokens(&src, &tgt, Origin::Raw)?, lexicon))
}

/// Training corpus, held-out test corpus (encoded with the training
/// vocabularies) and the shared ground-truth lexicon.
pub fn gen_split(config: &SynthConfig) -> Result<(ParallelCorpus, ParallelCorpus, GroundTruthLexicon)> {
    let mut problems = Problems::new();
    problems.extend("synth", config.validate());
    problems.check(config.test_pairs > 0, || "synth.test_pairs must be positive".into());
    problems.into_result()?;
    let (train, lexicon) = gen_corpus(config)?;
    let (src, tgt) =
        sample_sentences(config, &lexicon, config.test_pairs, &mut seed::named_rng(config.seed, "synth/test"));
    let test = ParallelCorpus::encode_with(&src, &tgt, train.src_vocab.clone(), train.tgt_vocab.clone(), Origin::Raw)?;
    Ok((train, test, lexicon))
}
