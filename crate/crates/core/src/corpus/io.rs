use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{split_context, ConversationPair, RawPair, StyleSentence, Vocabulary, EOU};
use crate::error::{Error, Result};

/// Records read from a file plus the number rejected for violating the
/// record invariants.
#[derive(Clone, Debug, PartialEq)]
pub struct Loaded<T> {
    pub items: Vec<T>,
    pub rejected: usize,
}

/// Parses one conversation line.
///
/// `Err` means the line is malformed (not exactly one TAB); `Ok(None)` means
/// the line is well formed but has an empty context utterance or response.
pub fn parse_conversation_line(line: &str) -> std::result::Result<Option<RawPair>, String> {
    let mut fields = line.split('\t');
    let (Some(ctx), Some(resp), None) = (fields.next(), fields.next(), fields.next()) else {
        return Err(format!(
            "expected exactly one TAB between context and response, found {}",
            line.matches('\t').count()
        ));
    };
    let context = split_context(ctx);
    let response: Vec<String> = resp.split_whitespace().map(str::to_string).collect();
    if context.iter().any(Vec::is_empty) || response.is_empty() {
        return Ok(None);
    }
    Ok(Some(RawPair { context, response }))
}

pub fn format_conversation_line(pair: &RawPair) -> String {
    let ctx: Vec<String> = pair.context.iter().map(|u| u.join(" ")).collect();
    format!("{}\t{}", ctx.join(&format!(" {EOU} ")), pair.response.join(" "))
}

pub fn read_conversations(path: &Path) -> Result<Loaded<RawPair>> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut items = Vec::new();
    let mut rejected = 0;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_conversation_line(&line) {
            Ok(Some(p)) => items.push(p),
            Ok(None) => rejected += 1,
            Err(message) => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message,
                })
            }
        }
    }
    if rejected > 0 {
        log::warn!(
            "{}: rejected {rejected} record(s) with empty context or response",
            path.display()
        );
    }
    Ok(Loaded { items, rejected })
}

/// Reads conversation pairs and maps tokens through `vocab`; unknown tokens
/// become the out-of-vocabulary id.
pub fn load_conversations(path: &Path, vocab: &Vocabulary) -> Result<Loaded<ConversationPair>> {
    let raw = read_conversations(path)?;
    Ok(Loaded {
        items: raw.items.iter().map(|p| p.encode(vocab)).collect(),
        rejected: raw.rejected,
    })
}

pub fn write_conversations(path: &Path, pairs: &[RawPair]) -> Result<()> {
    let mut f = BufWriter::new(fs::File::create(path)?);
    for p in pairs {
        writeln!(f, "{}", format_conversation_line(p))?;
    }
    f.flush()?;
    Ok(())
}

pub fn read_style(path: &Path) -> Result<Loaded<Vec<String>>> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut items = Vec::new();
    let mut rejected = 0;
    for line in reader.lines() {
        let toks: Vec<String> = line?.split_whitespace().map(str::to_string).collect();
        if toks.is_empty() {
            rejected += 1;
        } else {
            items.push(toks);
        }
    }
    Ok(Loaded { items, rejected })
}

pub fn load_style(path: &Path, vocab: &Vocabulary) -> Result<Loaded<StyleSentence>> {
    let raw = read_style(path)?;
    let items = raw
        .items
        .iter()
        .enumerate()
        .map(|(i, t)| StyleSentence {
            tokens: vocab.encode(t),
            source: format!("{}#{}", path.display(), i),
        })
        .collect();
    Ok(Loaded {
        items,
        rejected: raw.rejected,
    })
}

pub fn write_style(path: &Path, sentences: &[Vec<String>]) -> Result<()> {
    let mut f = BufWriter::new(fs::File::create(path)?);
    for s in sentences {
        writeln!(f, "{}", s.join(" "))?;
    }
    f.flush()?;
    Ok(())
}
