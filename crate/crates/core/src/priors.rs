//! Raw-data prior distributions Q(e|f) over the target vocabulary, the
//! imitation-rate schedule and the KL prior loss.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{TokenId, Vocab};
use crate::error::{Error, Result};
use crate::fsio;
use crate::lexicon::{LexiconTable, Provenance};
use crate::math;
use crate::nat::LexicalModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PriorKind {
    /// Temperature-softmaxed word alignment distribution.
    Wad,
    /// Self-distilled distribution from a model trained on raw data.
    Sdd,
    Combined,
}

/// Sidecar metadata written next to a dumped prior table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorMeta {
    pub kind: PriorKind,
    pub tau: Option<f64>,
    pub lexicon_provenance: Option<Provenance>,
    pub seed: Option<u64>,
    pub target_size: usize,
}

/// Dense Q(·|f) rows keyed by source id.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorTable {
    rows: BTreeMap<TokenId, Vec<f64>>,
    pub meta: PriorMeta,
}

impl PriorTable {
    pub fn new(meta: PriorMeta) -> Self {
        PriorTable { rows: BTreeMap::new(), meta }
    }

    pub fn insert(&mut self, src: TokenId, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.meta.target_size);
        self.rows.insert(src, row);
    }

    pub fn row(&self, src: TokenId) -> Option<&[f64]> {
        self.rows.get(&src).map(Vec::as_slice)
    }

    pub fn rows(&self) -> impl Iterator<Item = (TokenId, &[f64])> {
        self.rows.iter().map(|(&f, r)| (f, r.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn kind(&self) -> PriorKind {
        self.meta.kind
    }

    pub fn target_size(&self) -> usize {
        self.meta.target_size
    }

    /// Writes the lexicon-style TSV and a `<path>.meta.json` sidecar.
    pub fn write(&self, path: &Path, src_vocab: &Vocab, tgt_vocab: &Vocab) -> Result<()> {
        let mut out = String::new();
        for (&f, row) in &self.rows {
            for (e, p) in row.iter().enumerate() {
                let _ = writeln!(out, "{}\t{}\t{:.11e}", src_vocab.token(f), tgt_vocab.token(e as TokenId), p);
            }
        }
        fsio::write_atomic(path, out.as_bytes())?;
        fsio::write_atomic(&meta_path(path), serde_json::to_string_pretty(&self.meta)?.as_bytes())
    }

    pub fn read(path: &Path, src_vocab: &Vocab, tgt_vocab: &Vocab) -> Result<Self> {
        for p in [path.to_path_buf(), meta_path(path)] {
            if !p.exists() {
                return Err(Error::MissingArtifact("prior table", p));
            }
        }
        let meta: PriorMeta = serde_json::from_str(&fsio::read_to_string(&meta_path(path))?)?;
        if meta.target_size != tgt_vocab.len() {
            return Err(Error::VocabMismatch(format!(
                "prior covers {} targets, vocabulary has {}",
                meta.target_size,
                tgt_vocab.len()
            )));
        }
        let text = fsio::read_to_string(path)?;
        let mut table = PriorTable::new(meta);
        for (n, line) in text.lines().enumerate() {
            let parse = |msg: &str| Error::Parse { what: "prior table", line: n + 1, msg: msg.into() };
            let cols: Vec<&str> = line.split('\t').collect();
            let [f, e, p] = cols[..] else { return Err(parse("expected 3 columns")) };
            let p: f64 = p.parse().map_err(|_| parse("bad probability"))?;
            let size = table.meta.target_size;
            let row = table.rows.entry(src_vocab.id(f)).or_insert_with(|| vec![0.0; size]);
            row[tgt_vocab.id(e) as usize] = p;
        }
        Ok(table)
    }
}

fn meta_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    s.into()
}

/// Spreads each sparse lexicon row over the whole target vocabulary
/// (unaligned targets score 0) and applies `softmax(value / tau)`.
pub fn build_wad(lexicon: &LexiconTable, tau: f64, tgt_vocab: &Vocab) -> Result<PriorTable> {
    build_wad_sized(lexicon, tau, tgt_vocab.len())
}

/// [`build_wad`] over target ids `0..size`; lexicon entries outside that range are ignored.
pub fn build_wad_sized(lexicon: &LexiconTable, tau: f64, size: usize) -> Result<PriorTable> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::invalid(format!("temperature must be positive, got {tau}")));
    }
    let mut table = PriorTable::new(PriorMeta {
        kind: PriorKind::Wad,
        tau: Some(tau),
        lexicon_provenance: Some(lexicon.provenance),
        seed: None,
        target_size: size,
    });
    let mut scaled = vec![0.0; size];
    for (f, row) in lexicon.rows() {
        scaled.iter_mut().for_each(|v| *v = 0.0);
        for &(e, p) in row {
            if let Some(slot) = scaled.get_mut(e as usize) {
                *slot = p / tau;
            }
        }
        table.insert(f, math::softmax(&scaled));
    }
    Ok(table)
}

/// Queries `model` with every single-word source sentence and keeps the
/// first-position output distribution as Q(·|f).
pub fn build_sdd(model: &dyn LexicalModel, src_vocab: &Vocab) -> PriorTable {
    if !model.raw_trained() {
        log::warn!("self-distilled prior built from a model that was not trained on raw data");
    }
    let mut table = PriorTable::new(PriorMeta {
        kind: PriorKind::Sdd,
        tau: None,
        lexicon_provenance: None,
        seed: model.seed(),
        target_size: model.target_size(),
    });
    for f in std::iter::once(crate::corpus::UNK).chain(src_vocab.regular_ids()) {
        table.insert(f, model.lexical_query(f));
    }
    table
}

/// Row-wise arithmetic mean. Rows present in only one table are kept as they are.
pub fn combine(p1: &PriorTable, p2: &PriorTable) -> Result<PriorTable> {
    if p1.target_size() != p2.target_size() {
        return Err(Error::VocabMismatch(format!(
            "cannot combine priors over {} and {} targets",
            p1.target_size(),
            p2.target_size()
        )));
    }
    let mut out = PriorTable::new(PriorMeta {
        kind: PriorKind::Combined,
        tau: p1.meta.tau.or(p2.meta.tau),
        lexicon_provenance: p1.meta.lexicon_provenance.or(p2.meta.lexicon_provenance),
        seed: p1.meta.seed.or(p2.meta.seed),
        target_size: p1.target_size(),
    });
    let keys: std::collections::BTreeSet<TokenId> = p1.rows.keys().chain(p2.rows.keys()).copied().collect();
    for f in keys {
        let row = match (p1.row(f), p2.row(f)) {
            (Some(a), Some(b)) => a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect(),
            (Some(a), None) | (None, Some(a)) => a.to_vec(),
            (None, None) => unreachable!(),
        };
        out.insert(f, row);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    /// Total training steps on distilled data.
    pub total_steps: usize,
    pub clamp: bool,
}

impl ScheduleConfig {
    pub fn new(total_steps: usize) -> Self {
        ScheduleConfig { total_steps, clamp: true }
    }
}

/// Logarithmically decaying imitation rate: `log(I/(2(i+1))) / log(I/2)` for
/// `i <= I/2`, zero afterwards.
pub fn lambda_at(i: usize, config: &ScheduleConfig) -> f64 {
    let total = config.total_steps as f64;
    let half = total / 2.0;
    if i as f64 > half {
        return 0.0;
    }
    let denom = half.ln();
    let raw = if denom <= 0.0 {
        if i == 0 { 1.0 } else { 0.0 }
    } else {
        (total / (2.0 * (i as f64 + 1.0))).ln() / denom
    };
    if config.clamp {
        raw.clamp(0.0, 1.0)
    } else {
        raw
    }
}

/// `KL(q || p)` and its gradient with respect to the logits that produced `p`,
/// which is `p - q`.
pub fn kl_prior_loss(q: &[f64], p: &[f64]) -> Result<(f64, Vec<f64>)> {
    if q.len() != p.len() {
        return Err(Error::VocabMismatch(format!("prior has {} entries, model output {}", q.len(), p.len())));
    }
    if let Some(i) = p.iter().position(|&v| v <= 0.0) {
        return Err(Error::ZeroProbability(i));
    }
    let loss = q.iter().zip(p).filter(|(&qe, _)| qe > 0.0).map(|(&qe, &pe)| qe * (qe.ln() - pe.ln())).sum();
    let grad = p.iter().zip(q).map(|(pe, qe)| pe - qe).collect();
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wad_worked_example_over_three_targets() {
        let mut lex = LexiconTable::new(Provenance::TrainedOnRaw);
        lex.insert_row(0, vec![(0, 0.8), (1, 0.2)]);
        let wad = build_wad_sized(&lex, 2.0, 3).unwrap();
        let row = wad.row(0).unwrap();
        for (got, want) in row.iter().zip([0.4148, 0.3073, 0.2780]) {
            assert!((got - want).abs() < 1e-3, "{row:?}");
        }
    }

    #[test]
    fn wad_worked_example() {
        let v = Vocab::build([vec!["a", "b", "c"]]);
        let ids: Vec<TokenId> = v.regular_ids().collect();
        let mut lex = LexiconTable::new(Provenance::TrainedOnRaw);
        lex.insert_row(ids[0], vec![(ids[0], 0.8), (ids[1], 0.2)]);
        let wad = build_wad(&lex, 2.0, &v).unwrap();
        let row = wad.row(ids[0]).unwrap();
        // closed form over the three regular entries: softmax(0.4, 0.1, 0)
        let z = 0.4f64.exp() + 0.1f64.exp() + 1.0;
        assert!((0.4f64.exp() / z - 0.4148).abs() < 1e-3);
        assert!((0.1f64.exp() / z - 0.3073).abs() < 1e-3);
        assert!((1.0 / z - 0.2780).abs() < 1e-3);
        // with the special tokens present every unaligned entry gets exp(0)
        let z_full = 0.4f64.exp() + 0.1f64.exp() + (v.len() - 2) as f64;
        assert!((row[ids[0] as usize] - 0.4f64.exp() / z_full).abs() < 1e-12);
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn wad_rejects_nonpositive_temperature() {
        let v = Vocab::build([vec!["a"]]);
        let lex = LexiconTable::new(Provenance::TrainedOnRaw);
        assert!(build_wad(&lex, 0.0, &v).is_err());
        assert!(build_wad(&lex, -1.0, &v).is_err());
    }

    #[test]
    fn huge_temperature_is_uniform() {
        let v = Vocab::build([vec!["a", "b", "c"]]);
        let mut lex = LexiconTable::new(Provenance::TrainedOnRaw);
        lex.insert_row(7, vec![(6, 0.9), (7, 0.1)]);
        let wad = build_wad(&lex, 1e6, &v).unwrap();
        for &p in wad.row(7).unwrap() {
            assert!((p - 1.0 / v.len() as f64).abs() < 1e-6);
        }
    }

    #[test]
    fn lambda_examples() {
        let big = ScheduleConfig::new(100_000);
        assert_eq!(lambda_at(0, &big), 1.0);
        assert_eq!(lambda_at(49_999, &big), 0.0);
        assert_eq!(lambda_at(50_000, &big), 0.0);
        let raw = ScheduleConfig { clamp: false, ..big.clone() };
        let expected = (100_000f64 / 100_002.0).ln() / 50_000f64.ln();
        assert!(expected < 0.0);
        assert_eq!(lambda_at(50_000, &raw), expected);
        assert_eq!(lambda_at(75_000, &big), 0.0);
    }

    #[test]
    fn kl_one_hot_against_uniform() {
        let q = [1.0, 0.0, 0.0, 0.0];
        let p = [0.25; 4];
        let (loss, grad) = kl_prior_loss(&q, &p).unwrap();
        assert!((loss - 4f64.ln()).abs() < 1e-12);
        assert_eq!(grad, vec![-0.75, 0.25, 0.25, 0.25]);
    }

    #[test]
    fn kl_rejects_zero_model_probability() {
        assert!(matches!(kl_prior_loss(&[0.5, 0.5], &[1.0, 0.0]), Err(Error::ZeroProbability(1))));
    }

    #[test]
    fn combine_averages() {
        let meta = |kind| PriorMeta { kind, tau: None, lexicon_provenance: None, seed: None, target_size: 2 };
        let mut a = PriorTable::new(meta(PriorKind::Wad));
        a.insert(9, vec![1.0, 0.0]);
        let mut b = PriorTable::new(meta(PriorKind::Sdd));
        b.insert(9, vec![0.0, 1.0]);
        let c = combine(&a, &b).unwrap();
        assert_eq!(c.row(9).unwrap(), &[0.5, 0.5]);
        assert_eq!(c.kind(), PriorKind::Combined);
        assert_eq!(combine(&a, &a).unwrap().row(9), a.row(9));
        let mut wide = PriorTable::new(PriorMeta { target_size: 3, ..meta(PriorKind::Sdd) });
        wide.insert(9, vec![0.2, 0.3, 0.5]);
        assert!(matches!(combine(&a, &wide), Err(Error::VocabMismatch(_))));
    }
}
