//! Sparse per-source-word translation distributions.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{TokenId, Vocab};
use crate::error::{Error, Result};
use crate::fsio;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    TrainedOnRaw,
    TrainedOnDistilled,
    GroundTruth,
    Noised,
}

/// One sparse row: `(target id, probability)` sorted by target id.
pub type Row = Vec<(TokenId, f64)>;

#[derive(Debug, Clone, PartialEq)]
pub struct LexiconTable {
    rows: BTreeMap<TokenId, Row>,
    pub provenance: Provenance,
}

impl LexiconTable {
    pub fn new(provenance: Provenance) -> Self {
        LexiconTable { rows: BTreeMap::new(), provenance }
    }

    /// Inserts a row, sorting it by target id and merging duplicate targets.
    pub fn insert_row(&mut self, src: TokenId, mut row: Row) {
        row.sort_by_key(|&(e, _)| e);
        let mut merged: Row = Vec::with_capacity(row.len());
        for (e, p) in row {
            match merged.last_mut() {
                Some((last, q)) if *last == e => *q += p,
                _ => merged.push((e, p)),
            }
        }
        self.rows.insert(src, merged);
    }

    pub fn row(&self, src: TokenId) -> Option<&[(TokenId, f64)]> {
        self.rows.get(&src).map(Vec::as_slice)
    }

    pub fn rows(&self) -> impl Iterator<Item = (TokenId, &[(TokenId, f64)])> {
        self.rows.iter().map(|(&f, r)| (f, r.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn prob(&self, src: TokenId, tgt: TokenId) -> f64 {
        self.row(src)
            .and_then(|r| r.binary_search_by_key(&tgt, |&(e, _)| e).ok().map(|i| r[i].1))
            .unwrap_or(0.0)
    }

    /// Highest-probability target of `src`; ties go to the smaller id.
    pub fn argmax(&self, src: TokenId) -> Option<TokenId> {
        let row = self.row(src)?;
        let mut best: Option<(TokenId, f64)> = None;
        for &(e, p) in row {
            if best.is_none_or(|(_, bp)| p > bp) {
                best = Some((e, p));
            }
        }
        best.map(|(e, _)| e)
    }

    /// Row entries by descending probability, ties by ascending target id.
    pub fn descending(&self, src: TokenId) -> Vec<(TokenId, f64)> {
        let mut row = self.row(src).map(<[_]>::to_vec).unwrap_or_default();
        row.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        row
    }

    /// Largest deviation of any row sum from 1.
    pub fn max_row_error(&self) -> f64 {
        self.rows.values().map(|r| (r.iter().map(|&(_, p)| p).sum::<f64>() - 1.0).abs()).fold(0.0, f64::max)
    }

    /// `src_token \t tgt_token \t probability` with 12 significant digits.
    pub fn to_tsv(&self, src_vocab: &Vocab, tgt_vocab: &Vocab) -> String {
        let mut out = String::new();
        for (&f, row) in &self.rows {
            for &(e, p) in row {
                let _ = writeln!(out, "{}\t{}\t{:.11e}", src_vocab.token(f), tgt_vocab.token(e), p);
            }
        }
        out
    }

    pub fn from_tsv(text: &str, src_vocab: &Vocab, tgt_vocab: &Vocab, provenance: Provenance) -> Result<Self> {
        let mut rows: BTreeMap<TokenId, Row> = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let parse = |msg: &str| Error::Parse { what: "lexicon", line: n + 1, msg: msg.to_string() };
            let mut cols = line.split('\t');
            let (Some(f), Some(e), Some(p), None) = (cols.next(), cols.next(), cols.next(), cols.next()) else {
                return Err(parse("expected 3 tab-separated columns"));
            };
            let p: f64 = p.parse().map_err(|_| parse("bad probability"))?;
            rows.entry(src_vocab.id(f)).or_default().push((tgt_vocab.id(e), p));
        }
        let mut table = LexiconTable::new(provenance);
        for (f, row) in rows {
            table.insert_row(f, row);
        }
        Ok(table)
    }

    pub fn write_tsv(&self, path: &Path, src_vocab: &Vocab, tgt_vocab: &Vocab) -> Result<()> {
        fsio::write_atomic(path, self.to_tsv(src_vocab, tgt_vocab).as_bytes())
    }

    pub fn read_tsv(path: &Path, src_vocab: &Vocab, tgt_vocab: &Vocab, provenance: Provenance) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingArtifact("lexicon", path.to_path_buf()));
        }
        Self::from_tsv(&fsio::read_to_string(path)?, src_vocab, tgt_vocab, provenance)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_and_descending_break_ties_by_id() {
        let mut t = LexiconTable::new(Provenance::GroundTruth);
        t.insert_row(7, vec![(12, 0.25), (10, 0.25), (11, 0.5)]);
        assert_eq!(t.argmax(7), Some(11));
        assert_eq!(t.descending(7), vec![(11, 0.5), (10, 0.25), (12, 0.25)]);
        assert_eq!(t.prob(7, 12), 0.25);
        assert_eq!(t.prob(7, 99), 0.0);
    }

    #[test]
    fn tsv_keeps_twelve_significant_digits() {
        let v = Vocab::build([vec!["a", "b"]]);
        let mut t = LexiconTable::new(Provenance::TrainedOnRaw);
        t.insert_row(v.id("a"), vec![(v.id("b"), 1.0 / 3.0), (v.id("a"), 2.0 / 3.0)]);
        let text = t.to_tsv(&v, &v);
        assert!(text.contains("a\tb\t3.33333333333e-1"), "{text}");
        let back = LexiconTable::from_tsv(&text, &v, &v, Provenance::TrainedOnRaw).unwrap();
        assert!((back.prob(v.id("a"), v.id("b")) - 1.0 / 3.0).abs() < 1e-11);
    }
}
