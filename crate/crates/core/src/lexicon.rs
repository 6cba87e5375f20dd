//! Frequency-weighted word list with a prefix trie.
//!
//! Source rows are `word<TAB>count`. Words are lowercased; anything outside
//! `a-z` after lowercasing is dropped. Language-model probabilities are plain
//! relative frequencies with no smoothing, so unknown words score zero.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::io::BufRead;
use std::path::Path;

use log::warn;
use serde::Serialize;
use thiserror::Error;

/// Number of best words cached on every trie node.
const CACHED_TOP: usize = 8;

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("lexicon source contains no usable entries")]
    Empty,
    #[error("cannot read lexicon: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WordEntry {
    pub word: String,
    pub frequency: u64,
    pub lm_prob: f64,
}

/// What happened while ingesting a source.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct LoadReport {
    pub entries: usize,
    /// 1-based line numbers of rows that were not `word<TAB>positive-count`.
    pub malformed_lines: Vec<usize>,
    /// Rows whose word contained characters outside `a-z`.
    pub dropped_non_letter: usize,
    /// Rows folded into an earlier row for the same lowercased word.
    pub merged_duplicates: usize,
    pub prob_sum: f64,
}

impl LoadReport {
    pub fn prob_sum_ok(&self) -> bool {
        (self.prob_sum - 1.0).abs() <= 1e-9
    }
}

/// Handle to a trie node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PrefixNode(u32);

#[derive(Debug, Default)]
struct Node {
    children: Vec<(u8, u32)>,
    word: Option<u32>,
    top: Vec<u32>,
}

#[derive(Debug)]
pub struct Lexicon {
    /// Sorted by word.
    entries: Vec<WordEntry>,
    nodes: Vec<Node>,
    total: u64,
}

impl Lexicon {
    /// Ingests `word<TAB>count` rows.
    pub fn from_reader<R: BufRead>(reader: R) -> Result<(Lexicon, LoadReport), LexiconError> {
        let mut report = LoadReport::default();
        let mut counts: BTreeMap<String, u64> = BTreeMap::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            let parsed = line
                .split_once('\t')
                .and_then(|(w, c)| c.trim().parse::<u64>().ok().map(|c| (w.trim(), c)))
                .filter(|(w, c)| !w.is_empty() && *c > 0);
            let Some((word, count)) = parsed else {
                report.malformed_lines.push(idx + 1);
                continue;
            };
            let word = word.to_lowercase();
            if !word.bytes().all(|b| b.is_ascii_lowercase()) {
                report.dropped_non_letter += 1;
                continue;
            }
            let slot = counts.entry(word).or_insert(0);
            if *slot > 0 {
                report.merged_duplicates += 1;
            }
            *slot = slot.saturating_add(count);
        }
        if !report.malformed_lines.is_empty() {
            warn!("lexicon: {} malformed rows skipped", report.malformed_lines.len());
        }
        if report.dropped_non_letter > 0 {
            warn!("lexicon: {} rows with non-letter words dropped", report.dropped_non_letter);
        }
        let lexicon = Lexicon::build(counts)?;
        report.entries = lexicon.len();
        report.prob_sum = lexicon.entries.iter().map(|e| e.lm_prob).sum();
        Ok((lexicon, report))
    }

    pub fn load(path: &Path) -> Result<(Lexicon, LoadReport), LexiconError> {
        let file = std::fs::File::open(path)?;
        Lexicon::from_reader(std::io::BufReader::new(file))
    }

    /// Builds a lexicon from in-memory `(word, count)` pairs, applying the
    /// same normalisation as file ingestion.
    pub fn from_counts<'a, I>(rows: I) -> Result<Lexicon, LexiconError>
    where
        I: IntoIterator<Item = (&'a str, u64)>,
    {
        let text: String = rows.into_iter().map(|(w, c)| format!("{w}\t{c}\n")).collect();
        Lexicon::from_reader(text.as_bytes()).map(|(lex, _)| lex)
    }

    fn build(counts: BTreeMap<String, u64>) -> Result<Lexicon, LexiconError> {
        if counts.is_empty() {
            return Err(LexiconError::Empty);
        }
        let total: u64 = counts.values().sum();
        let entries: Vec<WordEntry> = counts
            .into_iter()
            .map(|(word, frequency)| WordEntry {
                lm_prob: frequency as f64 / total as f64,
                word,
                frequency,
            })
            .collect();

        let mut nodes = vec![Node::default()];
        for (id, entry) in entries.iter().enumerate() {
            let mut at = 0usize;
            for b in entry.word.bytes() {
                let next = match nodes[at].children.binary_search_by_key(&b, |(c, _)| *c) {
                    Ok(pos) => nodes[at].children[pos].1 as usize,
                    Err(pos) => {
                        nodes.push(Node::default());
                        let new = (nodes.len() - 1) as u32;
                        nodes[at].children.insert(pos, (b, new));
                        new as usize
                    }
                };
                at = next;
            }
            nodes[at].word = Some(id as u32);
        }

        // Children always have larger ids than their parent.
        let rank = |a: &u32, b: &u32| compare_rank(&entries[*a as usize], &entries[*b as usize]);
        for idx in (0..nodes.len()).rev() {
            let mut top: Vec<u32> = nodes[idx].word.into_iter().collect();
            for &(_, child) in &nodes[idx].children {
                top.extend_from_slice(&nodes[child as usize].top);
            }
            top.sort_by(rank);
            top.truncate(CACHED_TOP);
            nodes[idx].top = top;
        }
        Ok(Lexicon { entries, nodes, total })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_frequency(&self) -> u64 {
        self.total
    }

    /// All entries in lexicographic order.
    pub fn entries(&self) -> &[WordEntry] {
        &self.entries
    }

    pub fn entry(&self, word: &str) -> Option<&WordEntry> {
        let word = word.to_lowercase();
        self.entries
            .binary_search_by(|e| e.word.as_str().cmp(&word))
            .ok()
            .map(|i| &self.entries[i])
    }

    pub fn contains_word(&self, word: &str) -> bool {
        self.entry(word).is_some()
    }

    /// Normalised frequency of `word`, zero when absent.
    pub fn lm_prob(&self, word: &str) -> f64 {
        self.entry(word).map_or(0.0, |e| e.lm_prob)
    }

    /// Up to `limit` words beginning with `prefix`, most probable first,
    /// ties in lexicographic order.
    pub fn words_with_prefix(&self, prefix: &str, limit: usize) -> Vec<&WordEntry> {
        let mut node = self.root();
        for c in prefix.chars() {
            let Some(next) = c.is_ascii_lowercase().then(|| self.child(node, c as u8)).flatten() else {
                return Vec::new();
            };
            node = next;
        }
        self.top_words(node, limit)
    }

    pub fn root(&self) -> PrefixNode {
        PrefixNode(0)
    }

    pub fn child(&self, node: PrefixNode, letter: u8) -> Option<PrefixNode> {
        let children = &self.nodes[node.0 as usize].children;
        children
            .binary_search_by_key(&letter, |(c, _)| *c)
            .ok()
            .map(|pos| PrefixNode(children[pos].1))
    }

    /// The entry whose word ends exactly at `node`.
    pub fn word_at(&self, node: PrefixNode) -> Option<&WordEntry> {
        self.nodes[node.0 as usize].word.map(|i| &self.entries[i as usize])
    }

    /// Best `limit` words in the subtree below `node`.
    pub fn top_words(&self, node: PrefixNode, limit: usize) -> Vec<&WordEntry> {
        let cached = &self.nodes[node.0 as usize].top;
        if limit <= cached.len() || cached.len() < CACHED_TOP {
            return cached.iter().take(limit).map(|&i| &self.entries[i as usize]).collect();
        }
        let mut all = Vec::new();
        let mut stack = vec![node.0];
        while let Some(n) = stack.pop() {
            let n = &self.nodes[n as usize];
            all.extend(n.word.map(|i| &self.entries[i as usize]));
            stack.extend(n.children.iter().map(|(_, c)| *c));
        }
        all.sort_by(|a, b| compare_rank(a, b));
        all.truncate(limit);
        all
    }
}

/// Higher frequency first, then lexicographic.
fn compare_rank(a: &WordEntry, b: &WordEntry) -> Ordering {
    b.frequency.cmp(&a.frequency).then_with(|| a.word.cmp(&b.word))
}
