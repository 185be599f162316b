use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

pub const PAD: &str = "<pad>";
pub const BOS: &str = "<bos>";
pub const EOS: &str = "<eos>";
/// Out-of-vocabulary token; doubles as the mask token for augmentation.
pub const UNK: &str = "<unk>";
/// End-of-utterance separator, identical to the literal used in conversation files.
pub const EOU: &str = "<EOU>";

pub const RESERVED: [&str; 5] = [PAD, BOS, EOS, UNK, EOU];

/// Token/id bijection with training-data frequencies.
///
/// Reserved tokens occupy ids `0..5`; the remaining ids are assigned by
/// descending frequency with ties broken by first occurrence.
#[derive(Clone, Debug, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    freq: Vec<u64>,
}

impl Vocabulary {
    pub const PAD_ID: usize = 0;
    pub const BOS_ID: usize = 1;
    pub const EOS_ID: usize = 2;
    pub const UNK_ID: usize = 3;
    pub const MASK_ID: usize = Self::UNK_ID;
    pub const EOU_ID: usize = 4;

    /// Builds a vocabulary of at most `max_size` entries (reserved included).
    pub fn build<'a, I, S>(sentences: I, max_size: usize) -> Self
    where
        I: IntoIterator<Item = &'a [S]>,
        S: AsRef<str> + 'a,
    {
        let mut counts: HashMap<String, (u64, usize)> = HashMap::new();
        for sent in sentences {
            for tok in sent {
                let tok = tok.as_ref();
                if RESERVED.contains(&tok) {
                    continue;
                }
                let next = counts.len();
                counts.entry(tok.to_string()).or_insert((0, next)).0 += 1;
            }
        }
        let mut ranked: Vec<(String, u64, usize)> = counts.into_iter().map(|(t, (c, o))| (t, c, o)).collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)));
        ranked.truncate(max_size.saturating_sub(RESERVED.len()));

        let mut tokens: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        let mut freq = vec![0; RESERVED.len()];
        for (t, c, _) in ranked {
            tokens.push(t);
            freq.push(c);
        }
        Self::from_parts(tokens, freq)
    }

    fn from_parts(tokens: Vec<String>, freq: Vec<u64>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocabulary { tokens, index, freq }
    }

    /// Vocabulary from an ordered token list whose first entries are the
    /// reserved tokens. Frequencies are unknown and set to 1 until
    /// [`Vocabulary::recount`] is called.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < RESERVED.len() || tokens.iter().zip(RESERVED).any(|(t, r)| t != r) {
            return Err(Error::input(format!(
                "vocabulary must start with the reserved tokens {RESERVED:?}"
            )));
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = tokens.iter().find(|t| !seen.insert(t.as_str())) {
            return Err(Error::input(format!("duplicate vocabulary token {dup:?}")));
        }
        let mut freq = vec![1; tokens.len()];
        freq[..RESERVED.len()].fill(0);
        Ok(Self::from_parts(tokens, freq))
    }

    /// Recomputes frequencies from training data; in-vocabulary tokens never
    /// drop below 1.
    pub fn recount<'a, I, S>(&mut self, sentences: I)
    where
        I: IntoIterator<Item = &'a [S]>,
        S: AsRef<str> + 'a,
    {
        let mut freq = vec![0u64; self.tokens.len()];
        for sent in sentences {
            for tok in sent {
                if let Some(&id) = self.index.get(tok.as_ref()) {
                    freq[id] += 1;
                }
            }
        }
        for f in freq.iter_mut().skip(RESERVED.len()) {
            *f = (*f).max(1);
        }
        freq[..RESERVED.len()].fill(0);
        self.freq = freq;
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(Self::UNK_ID)
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> &str {
        self.tokens.get(id).map(String::as_str).unwrap_or(UNK)
    }

    /// Training-data count; 0 for reserved and unknown ids.
    pub fn freq(&self, id: usize) -> u64 {
        self.freq.get(id).copied().unwrap_or(0)
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    pub fn encode_text(&self, text: &str) -> Vec<usize> {
        text.split_whitespace().map(|t| self.id(t)).collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter().map(|&i| self.token(i).to_string()).collect()
    }

    pub fn decode_text(&self, ids: &[usize]) -> String {
        self.decode(ids).join(" ")
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(fs::File::create(path)?);
        for t in &self.tokens {
            writeln!(f, "{t}")?;
        }
        f.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_tokens(text.lines().map(str::to_string).collect())
    }
}
