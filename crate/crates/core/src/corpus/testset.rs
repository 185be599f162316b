use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{split_context, ConversationPair, Vocabulary, EOU};
use crate::error::{Error, Result};
use crate::style::StyleProbability;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub tokens: Vec<usize>,
    pub p_style: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestEntry {
    pub context: Vec<Vec<usize>>,
    pub references: Vec<Reference>,
}

/// Contexts paired with several references in the target style.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StylizedTestSet {
    pub entries: Vec<TestEntry>,
    pub threshold: f64,
    pub min_refs: usize,
}

/// Groups `pairs` by identical context and keeps contexts with at least
/// `min_refs` responses whose style probability exceeds `threshold`. Only
/// responses are filtered; the context's own style is not.
pub fn build_stylized_test_set(
    pairs: &[ConversationPair],
    scorer: &dyn StyleProbability,
    threshold: f64,
    min_refs: usize,
) -> StylizedTestSet {
    let mut order: Vec<&Vec<Vec<usize>>> = Vec::new();
    let mut groups: HashMap<&Vec<Vec<usize>>, Vec<&Vec<usize>>> = HashMap::new();
    for p in pairs {
        groups
            .entry(&p.context)
            .or_insert_with(|| {
                order.push(&p.context);
                Vec::new()
            })
            .push(&p.response);
    }
    let entries: Vec<TestEntry> = order
        .into_iter()
        .filter_map(|ctx| {
            let references: Vec<Reference> = groups[ctx]
                .iter()
                .map(|r| Reference {
                    tokens: (*r).clone(),
                    p_style: scorer.p_style(r),
                })
                .filter(|r| r.p_style > threshold)
                .collect();
            (references.len() >= min_refs.max(1)).then(|| TestEntry {
                context: ctx.clone(),
                references,
            })
        })
        .collect();
    if entries.is_empty() {
        log::warn!("no context has {min_refs} reference(s) above style probability {threshold}");
    }
    StylizedTestSet {
        entries,
        threshold,
        min_refs,
    }
}

#[derive(Serialize, Deserialize)]
struct EntryRecord {
    context: String,
    references: Vec<ReferenceRecord>,
}

#[derive(Serialize, Deserialize)]
struct ReferenceRecord {
    text: String,
    p_style: f64,
}

impl StylizedTestSet {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// JSONL, one object per context: `{"context": "...", "references":
    /// [{"text": "...", "p_style": 0.8}, ...]}`.
    pub fn save(&self, path: &Path, vocab: &Vocabulary) -> Result<()> {
        let mut f = BufWriter::new(fs::File::create(path)?);
        for e in &self.entries {
            let ctx: Vec<String> = e.context.iter().map(|u| vocab.decode_text(u)).collect();
            let rec = EntryRecord {
                context: ctx.join(&format!(" {EOU} ")),
                references: e
                    .references
                    .iter()
                    .map(|r| ReferenceRecord {
                        text: vocab.decode_text(&r.tokens),
                        p_style: r.p_style,
                    })
                    .collect(),
            };
            serde_json::to_writer(&mut f, &rec)?;
            writeln!(f)?;
        }
        f.flush()?;
        Ok(())
    }

    pub fn load(path: &Path, vocab: &Vocabulary, threshold: f64, min_refs: usize) -> Result<Self> {
        let reader = BufReader::new(fs::File::open(path)?);
        let mut entries = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: EntryRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })?;
            entries.push(TestEntry {
                context: split_context(&rec.context).iter().map(|u| vocab.encode(u)).collect(),
                references: rec
                    .references
                    .into_iter()
                    .map(|r| Reference {
                        tokens: vocab.encode_text(&r.text),
                        p_style: r.p_style,
                    })
                    .collect(),
            });
        }
        Ok(StylizedTestSet {
            entries,
            threshold,
            min_refs,
        })
    }
}
