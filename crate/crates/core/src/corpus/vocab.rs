use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::fsio;

pub type TokenId = u32;

pub const PAD: TokenId = 0;
pub const UNK: TokenId = 1;
/// Origin tag prepended to distilled source sentences (`<kd>`).
pub const KD_TAG: TokenId = 2;
/// Origin tag for raw sentences when tagging is inverted.
pub const RAW_TAG: TokenId = 3;
pub const BOS: TokenId = 4;
pub const EOS: TokenId = 5;

pub const SPECIALS: [&str; 6] = ["<pad>", "<unk>", "<kd>", "<raw>", "<s>", "</s>"];
pub const NUM_SPECIALS: usize = SPECIALS.len();

/// Token inventory with dense ids; the first [`NUM_SPECIALS`] ids are reserved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, TokenId>,
}

impl Default for Vocab {
    fn default() -> Self {
        Self::new()
    }
}

impl Vocab {
    /// Vocabulary holding only the special tokens.
    pub fn new() -> Self {
        let tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i as TokenId)).collect();
        Vocab { counts: vec![0; tokens.len()], tokens, index }
    }

    /// Builds a vocabulary in first-occurrence order, counting every occurrence.
    pub fn build<'a, I, S>(sentences: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: IntoIterator<Item = &'a str>,
    {
        let mut vocab = Vocab::new();
        for sentence in sentences {
            for tok in sentence {
                vocab.observe(tok);
            }
        }
        vocab
    }

    /// Adds one occurrence of `tok`, registering it if new. Specials are never counted.
    pub fn observe(&mut self, tok: &str) -> TokenId {
        if let Some(&id) = self.index.get(tok) {
            if !Self::is_special(id) {
                self.counts[id as usize] += 1;
            }
            return id;
        }
        let id = self.tokens.len() as TokenId;
        self.tokens.push(tok.to_string());
        self.counts.push(1);
        self.index.insert(tok.to_string(), id);
        id
    }

    pub fn is_special(id: TokenId) -> bool {
        (id as usize) < NUM_SPECIALS
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() == NUM_SPECIALS
    }

    pub fn get(&self, tok: &str) -> Option<TokenId> {
        self.index.get(tok).copied()
    }

    /// Id of `tok`, or [`UNK`] when unseen.
    pub fn id(&self, tok: &str) -> TokenId {
        self.get(tok).unwrap_or(UNK)
    }

    pub fn token(&self, id: TokenId) -> &str {
        self.tokens.get(id as usize).map(String::as_str).unwrap_or(SPECIALS[UNK as usize])
    }

    pub fn count(&self, id: TokenId) -> u64 {
        self.counts.get(id as usize).copied().unwrap_or(0)
    }

    pub fn contains(&self, id: TokenId) -> bool {
        (id as usize) < self.tokens.len()
    }

    /// Ids of all non-special entries.
    pub fn regular_ids(&self) -> impl Iterator<Item = TokenId> + '_ {
        (NUM_SPECIALS as TokenId)..(self.tokens.len() as TokenId)
    }

    pub fn encode(&self, tokens: &[&str]) -> Vec<TokenId> {
        tokens.iter().map(|t| self.id(t)).collect()
    }

    pub fn decode(&self, ids: &[TokenId]) -> Vec<&str> {
        ids.iter().map(|&i| self.token(i)).collect()
    }

    /// `token \t id \t count`, one entry per line.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (i, (tok, count)) in self.tokens.iter().zip(&self.counts).enumerate() {
            let _ = writeln!(out, "{tok}\t{i}\t{count}");
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<Self> {
        let mut vocab = Vocab { tokens: Vec::new(), counts: Vec::new(), index: HashMap::new() };
        for (n, line) in text.lines().enumerate() {
            let parse = |msg: &str| Error::Parse { what: "vocab", line: n + 1, msg: msg.to_string() };
            let mut cols = line.split('\t');
            let (Some(tok), Some(id), Some(count), None) = (cols.next(), cols.next(), cols.next(), cols.next()) else {
                return Err(parse("expected 3 tab-separated columns"));
            };
            let id: usize = id.parse().map_err(|_| parse("bad id"))?;
            let count: u64 = count.parse().map_err(|_| parse("bad count"))?;
            if id != vocab.tokens.len() {
                return Err(parse("ids must be dense and ascending"));
            }
            if id < NUM_SPECIALS && tok != SPECIALS[id] {
                return Err(parse("special token out of place"));
            }
            if vocab.index.insert(tok.to_string(), id as TokenId).is_some() {
                return Err(parse("duplicate token"));
            }
            vocab.tokens.push(tok.to_string());
            vocab.counts.push(count);
        }
        if vocab.tokens.len() < NUM_SPECIALS {
            return Err(Error::Parse { what: "vocab", line: 0, msg: "missing special tokens".into() });
        }
        Ok(vocab)
    }

    pub fn write_tsv(&self, path: &Path) -> Result<()> {
        fsio::write_atomic(path, self.to_tsv().as_bytes())
    }

    pub fn read_tsv(path: &Path) -> Result<Self> {
        Self::from_tsv(&fsio::read_to_string(path)?)
    }
}
