//! Evaluation: AoLC with gold-word selection, CoD, corpus BLEU and the
//! low-frequency token ratio.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::corpus::{Bucket, FrequencyBuckets, ParallelCorpus, TokenId, UNK};
use crate::error::{Error, Result};
use crate::lexicon::LexiconTable;
use crate::math;
use crate::nat::LexicalModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GoldSource {
    FoundInBag,
    AlignmentFallback,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GoldChoice {
    pub source: TokenId,
    pub gold: TokenId,
    pub provenance: GoldSource,
}

/// Walks the lexicon row of `f` from most to least likely and returns the
/// first target present in `bag`, else the row's argmax.
pub fn gold_word(f: TokenId, bag: &BTreeSet<TokenId>, lexicon: &LexiconTable) -> Result<GoldChoice> {
    let row = lexicon.descending(f);
    let Some(&(top, _)) = row.first() else {
        return Err(Error::EmptyLexiconRow(format!("source id {f}")));
    };
    Ok(match row.iter().find(|(e, _)| bag.contains(e)) {
        Some(&(gold, _)) => GoldChoice { source: f, gold, provenance: GoldSource::FoundInBag },
        None => GoldChoice { source: f, gold: top, provenance: GoldSource::AlignmentFallback },
    })
}

/// Gold words for every source type of `test`, with the reference bags
/// collected in one pass.
pub fn gold_words(test: &ParallelCorpus, lexicon: &LexiconTable) -> Result<BTreeMap<TokenId, GoldChoice>> {
    let mut bags: BTreeMap<TokenId, BTreeSet<TokenId>> = BTreeMap::new();
    for pair in &test.pairs {
        let types: BTreeSet<TokenId> = pair.source.iter().copied().filter(|&f| is_content(f)).collect();
        for f in types {
            bags.entry(f).or_default().extend(pair.target.iter().copied());
        }
    }
    bags.into_iter().map(|(f, bag)| Ok((f, gold_word(f, &bag, lexicon)?))).collect()
}

fn is_content(f: TokenId) -> bool {
    f == UNK || !crate::corpus::Vocab::is_special(f)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Aolc {
    pub overall: f64,
    pub high: f64,
    pub medium: f64,
    pub low: f64,
    pub n: usize,
    pub n_high: usize,
    pub n_medium: usize,
    pub n_low: usize,
}

impl Aolc {
    pub fn bucket(&self, b: Bucket) -> f64 {
        match b {
            Bucket::High => self.high,
            Bucket::Medium => self.medium,
            Bucket::Low => self.low,
        }
    }
}

/// Mean gold-word probability over the test source types. With
/// `occurrence_weighted`, each type counts once per test occurrence instead.
pub fn aolc(
    model: &dyn LexicalModel,
    test: &ParallelCorpus,
    lexicon: &LexiconTable,
    buckets: &FrequencyBuckets,
    occurrence_weighted: bool,
) -> Result<Aolc> {
    let gold = gold_words(test, lexicon)?;
    let mut weight: HashMap<TokenId, usize> = HashMap::new();
    for f in test.pairs.iter().flat_map(|p| &p.source) {
        *weight.entry(*f).or_default() += 1;
    }
    let mut sums = [0.0; 3];
    let mut counts = [0usize; 3];
    for (f, choice) in gold {
        let w = if occurrence_weighted { weight[&f] } else { 1 };
        let p = model.lexical_query(f).get(choice.gold as usize).copied().unwrap_or(0.0);
        let k = Bucket::ALL.iter().position(|&b| b == buckets.bucket(f)).expect("bucket listed");
        sums[k] += w as f64 * p;
        counts[k] += w;
    }
    let mean = |s: f64, n: usize| if n == 0 { 0.0 } else { s / n as f64 };
    let n: usize = counts.iter().sum();
    Ok(Aolc {
        overall: mean(sums.iter().sum(), n),
        high: mean(sums[0], counts[0]),
        medium: mean(sums[1], counts[1]),
        low: mean(sums[2], counts[2]),
        n,
        n_high: counts[0],
        n_medium: counts[1],
        n_low: counts[2],
    })
}

/// Mean row entropy in nats over the source types of a lexicon.
pub fn cod(lexicon: &LexiconTable) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for (f, row) in lexicon.rows() {
        if is_content(f) {
            sum += math::entropy(row.iter().map(|&(_, p)| p));
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn ngram_counts<T: Eq + Hash>(sent: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut m = HashMap::new();
    for g in sent.windows(n) {
        *m.entry(g).or_default() += 1;
    }
    m
}

/// Corpus BLEU-4 on a 0..100 scale: clipped n-gram precisions pooled over the
/// corpus, no smoothing, brevity penalty `exp(1 - r/c)` when `c < r`.
pub fn bleu<T: Eq + Hash>(hypotheses: &[Vec<T>], references: &[Vec<T>]) -> Result<f64> {
    if hypotheses.len() != references.len() {
        return Err(Error::SentenceCountMismatch { hyps: hypotheses.len(), refs: references.len() });
    }
    let mut matched = [0usize; 4];
    let mut total = [0usize; 4];
    let (mut c, mut r) = (0usize, 0usize);
    for (h, rf) in hypotheses.iter().zip(references) {
        c += h.len();
        r += rf.len();
        for n in 1..=4 {
            let refs = ngram_counts(rf, n);
            for (g, k) in ngram_counts(h, n) {
                matched[n - 1] += k.min(refs.get(g).copied().unwrap_or(0));
                total[n - 1] += k;
            }
        }
    }
    if c == 0 || matched.contains(&0) {
        return Ok(0.0);
    }
    let log_p: f64 = (0..4).map(|n| (matched[n] as f64 / total[n] as f64).ln()).sum::<f64>() / 4.0;
    let bp = if c < r { 1.0 - r as f64 / c as f64 } else { 0.0 };
    Ok(100.0 * (log_p + bp).exp())
}

/// Fraction of generated tokens that fall in the Low bucket of the target vocabulary.
pub fn low_freq_ratio(translations: &[Vec<TokenId>], buckets: &FrequencyBuckets) -> Result<LowFreqRatio> {
    let total: usize = translations.iter().map(Vec::len).sum();
    if total == 0 {
        return Err(Error::invalid("low_freq_ratio needs at least one generated token"));
    }
    let low = translations.iter().flatten().filter(|&&e| buckets.bucket(e) == Bucket::Low).count();
    Ok(LowFreqRatio { ratio: low as f64 / total as f64, low, total })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LowFreqRatio {
    pub ratio: f64,
    pub low: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub aolc: f64,
    pub aolc_high: f64,
    pub aolc_medium: f64,
    pub aolc_low: f64,
    pub cod: f64,
    pub bleu: f64,
    pub lft_ratio: f64,
    pub n_types: usize,
    pub n_types_high: usize,
    pub n_types_medium: usize,
    pub n_types_low: usize,
    pub n_sentences: usize,
    pub lft_low_tokens: usize,
    pub lft_total_tokens: usize,
}

impl MetricsReport {
    pub fn new(aolc: &Aolc, cod: f64, bleu: f64, lft: &LowFreqRatio, n_sentences: usize) -> Self {
        MetricsReport {
            aolc: aolc.overall,
            aolc_high: aolc.high,
            aolc_medium: aolc.medium,
            aolc_low: aolc.low,
            cod,
            bleu,
            lft_ratio: lft.ratio,
            n_types: aolc.n,
            n_types_high: aolc.n_high,
            n_types_medium: aolc.n_medium,
            n_types_low: aolc.n_low,
            n_sentences,
            lft_low_tokens: lft.low,
            lft_total_tokens: lft.total,
        }
    }

    fn columns(&self) -> [(&'static str, f64); 7] {
        [
            ("aolc", self.aolc),
            ("aolc_high", self.aolc_high),
            ("aolc_medium", self.aolc_medium),
            ("aolc_low", self.aolc_low),
            ("cod", self.cod),
            ("bleu", self.bleu),
            ("lft_ratio", self.lft_ratio),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemRow {
    pub name: String,
    pub report: MetricsReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<BTreeMap<String, f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub baseline: String,
    pub systems: Vec<SystemRow>,
}

impl Comparison {
    pub fn system(&self, name: &str) -> Option<&MetricsReport> {
        self.systems.iter().find(|s| s.name == name).map(|s| &s.report)
    }

    /// Plain-text table; delta columns appear only with more than one system.
    pub fn render(&self) -> String {
        let with_delta = self.systems.len() > 1;
        let mut header = vec!["system".to_string()];
        let base_cols = self.systems.first().map(|s| s.report.columns()).unwrap_or_default();
        for (name, _) in &base_cols {
            header.push(name.to_string());
            if with_delta {
                header.push(format!("Δ{name}"));
            }
        }
        let mut rows = vec![header];
        for s in &self.systems {
            let mut row = vec![s.name.clone()];
            for (name, v) in s.report.columns() {
                row.push(format!("{v:.4}"));
                if with_delta {
                    let d = s.delta.as_ref().and_then(|d| d.get(name)).copied().unwrap_or(0.0);
                    row.push(format!("{d:+.4}"));
                }
            }
            rows.push(row);
        }
        let widths: Vec<usize> =
            (0..rows[0].len()).map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0)).collect();
        let mut out = String::new();
        for r in &rows {
            let cells: Vec<String> = r
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(c, (cell, &w))| if c == 0 { format!("{cell:<w$}") } else { format!("{cell:>w$}") })
                .collect();
            out.push_str(cells.join("  ").trim_end());
            out.push('\n');
        }
        out
    }
}

pub fn compare_report(reports: &[(String, MetricsReport)]) -> Result<Comparison> {
    let Some((base_name, base)) = reports.first() else {
        return Err(Error::invalid("compare_report needs at least one report"));
    };
    let with_delta = reports.len() > 1;
    let systems = reports
        .iter()
        .map(|(name, r)| SystemRow {
            name: name.clone(),
            report: r.clone(),
            delta: with_delta.then(|| {
                r.columns().iter().zip(base.columns()).map(|(&(k, v), (_, b))| (k.to_string(), v - b)).collect()
            }),
        })
        .collect();
    Ok(Comparison { baseline: base_name.clone(), systems })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{bucketize, Origin, Vocab, NUM_SPECIALS};
    use crate::lexicon::Provenance;
    use approx::assert_abs_diff_eq;

    fn words(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    #[test]
    fn gold_word_steps() {
        let mut lex = LexiconTable::new(Provenance::GroundTruth);
        lex.insert_row(10, vec![(20, 0.6), (21, 0.4)]);
        let g = gold_word(10, &BTreeSet::from([21]), &lex).unwrap();
        assert_eq!((g.gold, g.provenance), (21, GoldSource::FoundInBag));
        let g = gold_word(10, &BTreeSet::from([29]), &lex).unwrap();
        assert_eq!((g.gold, g.provenance), (20, GoldSource::AlignmentFallback));
        lex.insert_row(11, vec![(22, 0.5), (21, 0.5)]);
        assert_eq!(gold_word(11, &BTreeSet::from([21, 22]), &lex).unwrap().gold, 21);
        assert!(matches!(gold_word(12, &BTreeSet::new(), &lex), Err(Error::EmptyLexiconRow(_))));
    }

    struct Fixed(Vec<Vec<f64>>);

    impl LexicalModel for Fixed {
        fn lexical_query(&self, f: TokenId) -> Vec<f64> {
            self.0[f as usize].clone()
        }
        fn target_size(&self) -> usize {
            self.0[0].len()
        }
    }

    fn two_type_setup() -> (ParallelCorpus, LexiconTable) {
        let own = |s: &str| s.split_whitespace().map(String::from).collect::<Vec<_>>();
        let src = vec![own("a b"), own("a")];
        let tgt = vec![own("x y"), own("x")];
        let c = ParallelCorpus::from_tokens(&src, &tgt, Origin::Raw).unwrap();
        let (a, b) = (c.src_vocab.id("a"), c.src_vocab.id("b"));
        let (x, y) = (c.tgt_vocab.id("x"), c.tgt_vocab.id("y"));
        let mut lex = LexiconTable::new(Provenance::GroundTruth);
        lex.insert_row(a, vec![(x, 0.9), (y, 0.1)]);
        lex.insert_row(b, vec![(y, 1.0)]);
        (c, lex)
    }

    #[test]
    fn aolc_hand_values() {
        let (c, lex) = two_type_setup();
        let v = c.tgt_vocab.len();
        let (a, b) = (c.src_vocab.id("a") as usize, c.src_vocab.id("b") as usize);
        let (x, y) = (c.tgt_vocab.id("x") as usize, c.tgt_vocab.id("y") as usize);
        let mut rows = vec![vec![0.0; v]; c.src_vocab.len()];
        rows[a][x] = 0.6;
        rows[b][y] = 0.8;
        let buckets = bucketize(&c.src_vocab, 2, 2);
        let s = aolc(&Fixed(rows.clone()), &c, &lex, &buckets, false).unwrap();
        assert_abs_diff_eq!(s.overall, 0.7, epsilon = 1e-12);
        assert_eq!(s.n, 2);
        let w = aolc(&Fixed(rows), &c, &lex, &buckets, true).unwrap();
        assert_abs_diff_eq!(w.overall, (0.6 * 2.0 + 0.8) / 3.0, epsilon = 1e-12);

        let uniform = Fixed(vec![vec![1.0 / v as f64; v]; c.src_vocab.len()]);
        let u = aolc(&uniform, &c, &lex, &buckets, false).unwrap();
        assert_abs_diff_eq!(u.overall, 1.0 / v as f64, epsilon = 1e-12);

        let mut oracle = vec![vec![0.0; v]; c.src_vocab.len()];
        oracle[a][x] = 1.0;
        oracle[b][y] = 1.0;
        let o = aolc(&Fixed(oracle), &c, &lex, &buckets, false).unwrap();
        assert_eq!((o.overall, o.high, o.low), (1.0, 1.0, 1.0));
        let weighted = (o.high * o.n_high as f64 + o.medium * o.n_medium as f64 + o.low * o.n_low as f64) / o.n as f64;
        assert_abs_diff_eq!(weighted, o.overall, epsilon = 1e-12);
    }

    #[test]
    fn cod_cases() {
        let mut det = LexiconTable::new(Provenance::GroundTruth);
        det.insert_row(10, vec![(20, 1.0)]);
        det.insert_row(11, vec![(21, 1.0)]);
        assert_eq!(cod(&det), 0.0);
        let mut uni = LexiconTable::new(Provenance::GroundTruth);
        uni.insert_row(10, vec![(20, 0.5), (21, 0.5)]);
        uni.insert_row(11, vec![(20, 0.5), (22, 0.5)]);
        assert_abs_diff_eq!(cod(&uni), std::f64::consts::LN_2, epsilon = 1e-12);
        uni.insert_row(12, vec![(23, 1.0)]);
        assert!(cod(&uni) < std::f64::consts::LN_2);
    }

    #[test]
    fn bleu_cases() {
        let refs = vec![words("the cat sat on the mat"), words("a b c d e")];
        assert_abs_diff_eq!(bleu(&refs, &refs).unwrap(), 100.0, epsilon = 1e-9);
        let hyps = vec![words("the cat on sat the mat"), words("a c b e d")];
        assert_eq!(bleu(&hyps, &refs).unwrap(), 0.0);
        assert!(matches!(bleu(&hyps[..1], &refs), Err(Error::SentenceCountMismatch { hyps: 1, refs: 2 })));
    }

    // sacrebleu (smooth none, tokenize none) gives 46.69406112368305. nltk's
    // corpus_bleu reports 45.48 because it floors every n-gram denominator at 1,
    // which counts a phantom 4-gram for the three-token hypothesis.
    #[test]
    fn bleu_matches_reference_implementation() {
        let hyps = vec![
            words("the cat sat on the mat today"),
            words("a quick brown dog jumps over the fence"),
            words("it is raining"),
        ];
        let refs = vec![
            words("the cat sat on the mat"),
            words("the quick brown fox jumps over the lazy dog"),
            words("it is raining heavily outside now"),
        ];
        assert_abs_diff_eq!(bleu(&hyps, &refs).unwrap(), 46.69406112368305, epsilon = 0.01);
    }

    #[test]
    fn low_freq_ratio_counts() {
        let mut v = Vocab::new();
        for (w, n) in [("hi", 10), ("lo", 1)] {
            for _ in 0..n {
                v.observe(w);
            }
        }
        let b = bucketize(&v, 2, 5);
        let (hi, lo) = (v.id("hi"), v.id("lo"));
        let mut sents = vec![vec![lo, lo, lo, hi, hi], vec![hi; 5]];
        assert_abs_diff_eq!(low_freq_ratio(&sents, &b).unwrap().ratio, 0.3);
        sents.reverse();
        assert_abs_diff_eq!(low_freq_ratio(&sents, &b).unwrap().ratio, 0.3);
        assert_eq!(low_freq_ratio(&[vec![lo, UNK]], &b).unwrap().ratio, 1.0);
        assert_eq!(low_freq_ratio(&[vec![hi]], &b).unwrap().ratio, 0.0);
        assert!(low_freq_ratio(&[vec![]], &b).is_err());
        assert_eq!(NUM_SPECIALS as TokenId, hi);
    }

    fn report(aolc: f64) -> MetricsReport {
        let a = Aolc { overall: aolc, n: 1, ..Aolc::default() };
        MetricsReport::new(&a, 0.1, 20.0, &LowFreqRatio { ratio: 0.2, low: 1, total: 5 }, 3)
    }

    #[test]
    fn comparison_deltas() {
        let one = compare_report(&[("base".into(), report(0.7))]).unwrap();
        assert!(one.systems[0].delta.is_none());
        assert!(!one.render().contains('Δ'));
        let two = compare_report(&[("base".into(), report(0.70)), ("sys".into(), report(0.75))]).unwrap();
        assert_abs_diff_eq!(two.systems[1].delta.as_ref().unwrap()["aolc"], 0.05, epsilon = 1e-12);
        assert!(two.systems[0].delta.as_ref().unwrap().values().all(|&d| d == 0.0));
        let text = two.render();
        assert_eq!(text.lines().count(), 3);
        assert!(text.contains("+0.0500"));
        let json = serde_json::to_string(&two).unwrap();
        assert_eq!(serde_json::from_str::<Comparison>(&json).unwrap(), two);
        assert!(compare_report(&[]).is_err());
    }
}
