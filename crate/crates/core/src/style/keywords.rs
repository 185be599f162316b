use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StyleKeywordList {
    /// `(word, intensity)`, descending by intensity, ties by word.
    pub entries: Vec<(String, f64)>,
    pub threshold: usize,
}

/// Words occurring in more than `threshold` sentences, ranked by the mean
/// label (1 for style, 0 for conversation) of the sentences containing them.
pub fn build_keyword_list<S: AsRef<str>>(
    positives: &[Vec<S>],
    negatives: &[Vec<S>],
    threshold: usize,
    k: usize,
) -> StyleKeywordList {
    // word -> (sentences containing it, positive sentences containing it)
    let mut stats: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for (sentences, label) in [(positives, 1), (negatives, 0)] {
        for s in sentences {
            let words: BTreeSet<&str> = s.iter().map(AsRef::as_ref).collect();
            for w in words {
                let e = stats.entry(w).or_default();
                e.0 += 1;
                e.1 += label;
            }
        }
    }
    let mut entries: Vec<(String, f64)> = stats
        .into_iter()
        .filter(|(_, (n, _))| *n > threshold)
        .map(|(w, (n, p))| (w.to_string(), p as f64 / n as f64))
        .collect();
    entries.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    if k > entries.len() {
        log::warn!("requested {k} keywords but only {} words qualify", entries.len());
    }
    entries.truncate(k);
    StyleKeywordList { entries, threshold }
}

impl StyleKeywordList {
    pub fn words(&self) -> HashSet<&str> {
        self.entries.iter().map(|(w, _)| w.as_str()).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = BufWriter::new(fs::File::create(path)?);
        for (w, v) in &self.entries {
            writeln!(f, "{w}\t{v}")?;
        }
        f.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message,
            };
            let (w, v) = line
                .split_once('\t')
                .ok_or_else(|| parse_err("expected word<TAB>intensity".into()))?;
            let v: f64 = v.trim().parse().map_err(|e| parse_err(format!("bad intensity: {e}")))?;
            entries.push((w.to_string(), v));
        }
        Ok(StyleKeywordList { entries, threshold: 0 })
    }
}

/// Mean over sentences of the fraction of tokens that are keywords. Empty
/// sentences are skipped; an empty corpus or keyword list gives 0.
pub fn count_metric<S: AsRef<str>>(corpus: &[Vec<S>], keywords: &StyleKeywordList) -> f64 {
    let words = keywords.words();
    if words.is_empty() {
        return 0.0;
    }
    let ratios: Vec<f64> = corpus
        .iter()
        .filter(|s| !s.is_empty())
        .map(|s| s.iter().filter(|w| words.contains(w.as_ref())).count() as f64 / s.len() as f64)
        .collect();
    if ratios.is_empty() {
        return 0.0;
    }
    ratios.iter().sum::<f64>() / ratios.len() as f64
}

/// [`count_metric`] divided by the value on the target style corpus.
pub fn count_metric_normalized<S: AsRef<str>, T: AsRef<str>>(
    corpus: &[Vec<S>],
    target: &[Vec<T>],
    keywords: &StyleKeywordList,
) -> Result<f64> {
    let reference = count_metric(target, keywords);
    if reference <= 0.0 {
        return Err(Error::input("target corpus contains no keywords; cannot normalize"));
    }
    Ok(count_metric(corpus, keywords) / reference)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(text: &str) -> Vec<String> {
        text.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn toy_corpus() {
        let pos = vec![s("whence the clue"), s("the clue whence")];
        let neg = vec![s("lol the meme"), s("meme lol the")];
        let list = build_keyword_list(&pos, &neg, 1, 2);
        assert_eq!(
            list.entries,
            vec![("clue".to_string(), 1.0), ("whence".to_string(), 1.0)]
        );
        let all = build_keyword_list(&pos, &neg, 1, 10);
        assert_eq!(all.len(), 5);
        assert_eq!(all.entries[2], ("the".to_string(), 0.5));
        assert!(all.entries.windows(2).all(|w| w[0].1 >= w[1].1));
    }

    #[test]
    fn intensities() {
        let pos = vec![s("a x"), s("a y")];
        let neg = vec![s("a z"), s("a w")];
        let list = build_keyword_list(&pos, &neg, 0, 10);
        let get = |w: &str| list.entries.iter().find(|e| e.0 == w).unwrap().1;
        assert_eq!(get("a"), 0.5);
        assert_eq!(get("x"), 1.0);
        assert_eq!(get("z"), 0.0);
        // threshold excludes words seen in too few sentences
        let strict = build_keyword_list(&pos, &neg, 1, 10);
        assert_eq!(strict.entries, vec![("a".to_string(), 0.5)]);
    }

    #[test]
    fn count_examples() {
        let kw = StyleKeywordList {
            entries: vec![("whence".into(), 1.0), ("clue".into(), 1.0)],
            threshold: 1,
        };
        assert_eq!(count_metric(&[s("whence is lol")], &kw), 1.0 / 3.0);
        assert_eq!(count_metric(&[s("clue whence clue")], &kw), 1.0);
        let empty = StyleKeywordList {
            entries: vec![],
            threshold: 1,
        };
        assert_eq!(count_metric(&[s("whence")], &empty), 0.0);
        let target = vec![s("whence is lol"), s("clue")];
        assert_eq!(count_metric_normalized(&target, &target, &kw).unwrap(), 1.0);
        assert!(count_metric_normalized(&target, &[s("lol")], &kw).is_err());
    }

    #[test]
    fn tsv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("kw.tsv");
        let kw = StyleKeywordList {
            entries: vec![("indeed".into(), 0.97), ("quite".into(), 0.8125)],
            threshold: 0,
        };
        kw.save(&path).unwrap();
        assert_eq!(StyleKeywordList::load(&path).unwrap(), kw);
        fs::write(&path, "oops\n").unwrap();
        assert!(matches!(
            StyleKeywordList::load(&path),
            Err(Error::Parse { line: 1, .. })
        ));
    }
}
