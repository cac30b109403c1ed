use std::collections::HashSet;

use proptest::prelude::*;

use natlex::aligner::{inject_noise, viterbi_align};
use natlex::corpus::{bucketize, default_cutoffs, Bucket, Origin, ParallelCorpus, SentencePair, TokenId, KD_TAG, NUM_SPECIALS, RAW_TAG};
use natlex::distill::{mix, TagMode};
use natlex::lexicon::{LexiconTable, Provenance};
use natlex::math;
use natlex::metrics::{aolc, bleu, cod, gold_word, low_freq_ratio};
use natlex::nat::{decode, LexModelParams, LexicalModel};
use natlex::optim::TrainConfig;
use natlex::priors::{build_wad_sized, combine, kl_prior_loss, lambda_at, PriorKind, PriorMeta, PriorTable, ScheduleConfig};

const N: TokenId = NUM_SPECIALS as TokenId;

fn normalized(weights: &[f64]) -> Vec<f64> {
    let s: f64 = weights.iter().sum();
    weights.iter().map(|w| w / s).collect()
}

prop_compose! {
    /// Sparse lexicon over regular ids with strictly positive rows.
    fn lexicon(max_rows: usize, tgt: u32)(
        rows in prop::collection::vec(
            prop::collection::btree_map(N..N + tgt, 0.01f64..1.0, 1..6), 1..max_rows)
    ) -> LexiconTable {
        let mut t = LexiconTable::new(Provenance::TrainedOnRaw);
        for (i, row) in rows.into_iter().enumerate() {
            let (ids, w): (Vec<TokenId>, Vec<f64>) = row.into_iter().unzip();
            t.insert_row(N + i as TokenId, ids.into_iter().zip(normalized(&w)).collect());
        }
        t
    }
}

fn sentences(vocab: u32, n: usize) -> impl Strategy<Value = Vec<Vec<String>>> {
    prop::collection::vec(prop::collection::vec((0..vocab).prop_map(|i| format!("w{i}")), 1..7), 1..n)
}

fn parallel(vocab: u32, n: usize) -> impl Strategy<Value = ParallelCorpus> {
    sentences(vocab, n).prop_flat_map(move |src| {
        let lens: Vec<usize> = src.iter().map(Vec::len).collect();
        let tgt = lens
            .into_iter()
            .map(|l| prop::collection::vec((0..vocab).prop_map(|i| format!("v{i}")), l..=l))
            .collect::<Vec<_>>();
        (Just(src), tgt)
    })
    .prop_map(|(s, t)| ParallelCorpus::from_tokens(&s, &t, Origin::Raw).unwrap())
}

fn prior_from(rows: &[Vec<f64>], kind: PriorKind) -> PriorTable {
    let mut t = PriorTable::new(PriorMeta { kind, tau: None, lexicon_provenance: None, seed: None, target_size: rows[0].len() });
    for (i, r) in rows.iter().enumerate() {
        t.insert(N + i as TokenId, r.clone());
    }
    t
}

struct TableModel {
    rows: Vec<Vec<f64>>,
}

impl LexicalModel for TableModel {
    fn lexical_query(&self, f: TokenId) -> Vec<f64> {
        self.rows[f as usize].clone()
    }
    fn target_size(&self) -> usize {
        self.rows[0].len()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn noise_keeps_support_and_probability_multiset(lex in lexicon(30, 12), ratio in 0.0f64..=1.0, seed: u64) {
        let noised = inject_noise(&lex, ratio, seed).unwrap().table;
        prop_assert_eq!(noised.len(), lex.len());
        for (f, row) in lex.rows() {
            let other = noised.row(f).unwrap();
            let ids = |r: &[(TokenId, f64)]| r.iter().map(|e| e.0).collect::<Vec<_>>();
            prop_assert_eq!(ids(row), ids(other));
            let mut a: Vec<u64> = row.iter().map(|e| e.1.to_bits()).collect();
            let mut b: Vec<u64> = other.iter().map(|e| e.1.to_bits()).collect();
            a.sort_unstable();
            b.sort_unstable();
            prop_assert_eq!(a, b);
        }
        prop_assert!(noised.max_row_error() < 1e-6);
    }

    #[test]
    fn lambda_is_monotone_and_bounded(total in 2usize..5000) {
        let cfg = ScheduleConfig::new(total);
        let mut prev = f64::INFINITY;
        for i in 0..=total {
            let l = lambda_at(i, &cfg);
            prop_assert!((0.0..=1.0).contains(&l));
            prop_assert!(l <= prev);
            prev = l;
        }
        prop_assert_eq!(lambda_at(0, &cfg), 1.0);
    }

    #[test]
    fn wad_keeps_unique_argmax(lex in lexicon(20, 10), tau in 0.05f64..20.0) {
        let wad = build_wad_sized(&lex, tau, (N + 10) as usize).unwrap();
        for (f, row) in lex.rows() {
            let best = row.iter().map(|e| e.1).fold(f64::MIN, f64::max);
            if row.iter().filter(|e| e.1 == best).count() > 1 {
                continue;
            }
            let q = wad.row(f).unwrap();
            prop_assert_eq!(math::argmax(q) as TokenId, lex.argmax(f).unwrap());
            prop_assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(q.iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn wad_ignores_entry_order(lex in lexicon(10, 10), tau in 0.1f64..5.0) {
        let mut reversed = LexiconTable::new(lex.provenance);
        for (f, row) in lex.rows() {
            reversed.insert_row(f, row.iter().rev().copied().collect());
        }
        let size = (N + 10) as usize;
        let (a, b) = (build_wad_sized(&lex, tau, size).unwrap(), build_wad_sized(&reversed, tau, size).unwrap());
        for (f, row) in a.rows() {
            prop_assert_eq!(row, b.row(f).unwrap());
        }
    }

    #[test]
    fn combine_is_commutative_and_stochastic(
        rows in prop::collection::vec(prop::collection::vec(0.01f64..1.0, 8), 2..8)
    ) {
        let half = rows.len() / 2;
        let a = prior_from(&rows[..half].iter().map(|r| normalized(r)).collect::<Vec<_>>(), PriorKind::Wad);
        let b = prior_from(&rows[half..].iter().map(|r| normalized(r)).collect::<Vec<_>>(), PriorKind::Sdd);
        let (ab, ba) = (combine(&a, &b).unwrap(), combine(&b, &a).unwrap());
        for (f, row) in ab.rows() {
            prop_assert_eq!(row, ba.row(f).unwrap());
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn kl_is_nonnegative_and_zero_on_equal_inputs(
        w in prop::collection::vec((0.001f64..1.0, 0.001f64..1.0), 2..20)
    ) {
        let (q, p): (Vec<f64>, Vec<f64>) = w.into_iter().unzip();
        let (q, p) = (normalized(&q), normalized(&p));
        prop_assert!(kl_prior_loss(&q, &p).unwrap().0 >= -1e-12);
        prop_assert!(kl_prior_loss(&q, &q).unwrap().0.abs() < 1e-9);
    }

    #[test]
    fn bleu_ignores_joint_sentence_order(
        pairs in prop::collection::vec(
            (prop::collection::vec(0u8..6, 1..10), prop::collection::vec(0u8..6, 1..10)), 1..12),
        rot in 0usize..12,
    ) {
        let (h, r): (Vec<Vec<u8>>, Vec<Vec<u8>>) = pairs.into_iter().unzip();
        let k = rot % h.len();
        let (mut h2, mut r2) = (h.clone(), r.clone());
        h2.rotate_left(k);
        r2.rotate_left(k);
        let (a, b) = (bleu(&h, &r).unwrap(), bleu(&h2, &r2).unwrap());
        prop_assert!((a - b).abs() < 1e-9);
        prop_assert!((0.0..=100.0 + 1e-9).contains(&a));
    }

    #[test]
    fn low_freq_ratio_ignores_sentence_order(corpus in parallel(20, 30)) {
        let (lo, hi) = default_cutoffs(&corpus.tgt_vocab);
        let buckets = bucketize(&corpus.tgt_vocab, lo, hi);
        let mut outs: Vec<Vec<TokenId>> = corpus.pairs.iter().map(|p| p.target.clone()).collect();
        let a = low_freq_ratio(&outs, &buckets).unwrap();
        outs.reverse();
        prop_assert_eq!(a, low_freq_ratio(&outs, &buckets).unwrap());
        prop_assert!((0.0..=1.0).contains(&a.ratio));
    }

    #[test]
    fn buckets_partition_the_vocabulary(corpus in parallel(40, 40), lo in 1u64..6, hi in 1u64..12) {
        let b = bucketize(&corpus.src_vocab, lo, hi);
        let pop = b.populations();
        prop_assert_eq!(pop.iter().sum::<usize>(), corpus.src_vocab.len() - NUM_SPECIALS);
        prop_assert!(b.cutoff_low <= b.cutoff_high);
    }

    #[test]
    fn aolc_overall_is_the_type_weighted_bucket_mean(corpus in parallel(15, 25), seed: u64) {
        let lex = natlex::aligner::train_aligner(&corpus, &Default::default()).unwrap();
        let (lo, hi) = default_cutoffs(&corpus.src_vocab);
        let buckets = bucketize(&corpus.src_vocab, lo, hi);
        let mut rng = natlex::seed::rng(seed);
        use rand::Rng;
        let t = corpus.tgt_vocab.len();
        let model = TableModel {
            rows: (0..corpus.src_vocab.len()).map(|_| normalized(&(0..t).map(|_| rng.gen_range(0.01..1.0)).collect::<Vec<_>>())).collect(),
        };
        let a = aolc(&model, &corpus, &lex, &buckets, false).unwrap();
        let weighted = (a.high * a.n_high as f64 + a.medium * a.n_medium as f64 + a.low * a.n_low as f64) / a.n as f64;
        prop_assert!((a.overall - weighted).abs() < 1e-12);
        prop_assert_eq!(a.n_high + a.n_medium + a.n_low, a.n);
        for v in [a.overall, a.high, a.medium, a.low] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        prop_assert!(cod(&lex) >= 0.0);
    }

    #[test]
    fn gold_word_is_deterministic_and_prefers_the_bag(lex in lexicon(10, 10), bag in prop::collection::btree_set(N..N + 10, 0..5)) {
        for (f, row) in lex.rows() {
            let a = gold_word(f, &bag, &lex).unwrap();
            prop_assert_eq!(a, gold_word(f, &bag, &lex).unwrap());
            let hit = row.iter().any(|e| bag.contains(&e.0));
            prop_assert_eq!(bag.contains(&a.gold), hit);
            prop_assert!(row.iter().any(|e| e.0 == a.gold));
        }
    }

    #[test]
    fn viterbi_links_every_target_once(corpus in parallel(12, 20)) {
        let lex = natlex::aligner::train_aligner(&corpus, &Default::default()).unwrap();
        prop_assert!(lex.max_row_error() < 1e-6);
        for pair in &corpus.pairs {
            let links = viterbi_align(pair, &lex);
            prop_assert_eq!(&links, &viterbi_align(pair, &lex));
            let targets: Vec<u32> = links.iter().map(|l| l.1).collect();
            prop_assert_eq!(targets, (0..pair.target.len() as u32).collect::<Vec<_>>());
            prop_assert!(links.iter().all(|l| (l.0 as usize) < pair.source.len()));
        }
    }

    #[test]
    fn corpus_round_trips_through_files(corpus in parallel(25, 20)) {
        let dir = tempfile::tempdir().unwrap();
        let (s, t) = (dir.path().join("s"), dir.path().join("t"));
        corpus.write(&s, &t).unwrap();
        let back = natlex::corpus::load_corpus(&s, &t).unwrap();
        prop_assert_eq!(back.pairs, corpus.pairs);
    }

    #[test]
    fn mix_never_fabricates_pairs(raw in parallel(10, 15), seed: u64, mode in prop::sample::select(vec![None, Some(TagMode::Distilled), Some(TagMode::Raw), Some(TagMode::Both)])) {
        let kd = raw.with_pairs(raw.pairs.iter().map(|p| SentencePair { target: p.target.iter().rev().copied().collect(), origin: Origin::Distilled, ..p.clone() }).collect());
        let mixed = mix(&raw, &kd, mode, seed).unwrap();
        prop_assert_eq!(mixed.len(), raw.len() + kd.len());
        let known: HashSet<&SentencePair> = raw.pairs.iter().chain(&kd.pairs).collect();
        for p in &mixed.pairs {
            let mut stripped = p.clone();
            if matches!(stripped.source.first(), Some(&KD_TAG) | Some(&RAW_TAG)) {
                stripped.source.remove(0);
            }
            prop_assert!(known.contains(&stripped));
        }
    }

    #[test]
    fn decoded_distributions_are_stochastic(seed: u64, src in prop::collection::vec(N..N + 6, 1..8)) {
        let cfg = TrainConfig { dim: 4, seed, max_positions: 16, init_scale: 1.0, ..TrainConfig::default() };
        let params = LexModelParams::init((N + 6) as usize, (N + 5) as usize, &cfg);
        let pred = decode(&params, &src);
        prop_assert_eq!(pred.distributions.len(), pred.length);
        for d in &pred.distributions {
            prop_assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            prop_assert!(d.iter().all(|&v| v > 0.0));
        }
        prop_assert_eq!(decode(&params, &src), pred);
    }
}

#[test]
fn bucket_enum_order_matches_populations() {
    assert_eq!(Bucket::ALL, [Bucket::High, Bucket::Medium, Bucket::Low]);
}
