use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Token;

use super::prompt::{PromptInstance, Variant};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Score {
    pub correct: bool,
    /// Set when the completion was empty.
    pub empty: bool,
}

impl Score {
    pub fn value(self) -> u32 {
        u32::from(self.correct)
    }
}

/// Exact match of the first `reference.len()` completion tokens.
pub fn score_completion(prompt: &PromptInstance, completion: &[Token]) -> Score {
    Score {
        correct: completion.len() >= prompt.reference.len()
            && completion[..prompt.reference.len()] == prompt.reference[..],
        empty: completion.is_empty(),
    }
}

/// Prompt exchange record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub task_id: usize,
    pub variant: Variant,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chain_len: Option<usize>,
    pub num_examples: usize,
    pub seed: u64,
    pub prompt: Vec<Token>,
    pub reference: Vec<Token>,
    pub separator: Token,
    pub bindings: Bindings,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bindings {
    pub functions: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<[Token; 2]>,
    pub recombined: bool,
}

impl From<&PromptInstance> for PromptRecord {
    fn from(p: &PromptInstance) -> Self {
        PromptRecord {
            task_id: p.task_id,
            variant: p.variant,
            chain_len: p.chain_len,
            num_examples: p.num_examples,
            seed: p.seed,
            prompt: p.tokens.clone(),
            reference: p.reference.clone(),
            separator: p.separator,
            bindings: Bindings {
                functions: p.functions.clone(),
                labels: p.labels,
                recombined: p.recombined,
            },
        }
    }
}

impl PromptRecord {
    pub fn score(&self, completion: &[Token]) -> Score {
        Score {
            correct: completion.len() >= self.reference.len()
                && completion[..self.reference.len()] == self.reference[..],
            empty: completion.is_empty(),
        }
    }

    pub fn cell(&self) -> CellKey {
        CellKey {
            task_id: self.task_id,
            variant: match (self.chain_len, self.bindings.recombined) {
                (Some(c), false) => format!("{}-{c}", self.variant.name()),
                (Some(c), true) => format!("{}-{c}-recombined", self.variant.name()),
                (None, false) => self.variant.name().to_string(),
                (None, true) => format!("{}-recombined", self.variant.name()),
            },
            num_examples: self.num_examples,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionRecord {
    pub prompt_index: usize,
    pub completion: Vec<Token>,
}

fn read_jsonl<T: for<'de> Deserialize<'de>, R: BufRead>(source: R) -> Result<Vec<T>> {
    let mut out = Vec::new();
    let mut offset = 0;
    for line in source.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
                offset: offset + e.column().saturating_sub(1),
                message: e.to_string(),
            })?);
        }
        offset += line.len() + 1;
    }
    Ok(out)
}

fn write_jsonl<T: Serialize, W: Write>(mut sink: W, items: &[T]) -> Result<()> {
    for item in items {
        serde_json::to_writer(&mut sink, item)?;
        sink.write_all(b"\n")?;
    }
    sink.flush()?;
    Ok(())
}

pub fn write_prompts<W: Write>(sink: W, prompts: &[PromptRecord]) -> Result<()> {
    write_jsonl(sink, prompts)
}

pub fn read_prompts<R: BufRead>(source: R) -> Result<Vec<PromptRecord>> {
    read_jsonl(source)
}

pub fn write_completions<W: Write>(sink: W, completions: &[CompletionRecord]) -> Result<()> {
    write_jsonl(sink, completions)
}

pub fn read_completions<R: BufRead>(source: R) -> Result<Vec<CompletionRecord>> {
    read_jsonl(source)
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CellKey {
    pub task_id: usize,
    pub variant: String,
    pub num_examples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub cell: CellKey,
    pub n: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Default)]
pub struct ScoreReport {
    pub rows: Vec<ScoreRow>,
    /// Prompt indices whose completion was empty.
    pub empty_completions: Vec<usize>,
    /// Prompts with no completion record (scored 0).
    pub missing: Vec<usize>,
}

/// Scores completions against prompts, aggregated per task cell.
pub fn score_batch(prompts: &[PromptRecord], completions: &[CompletionRecord]) -> Result<ScoreReport> {
    let mut by_index: BTreeMap<usize, &[Token]> = BTreeMap::new();
    for c in completions {
        if c.prompt_index >= prompts.len() {
            return Err(Error::Validation(format!(
                "completion for prompt {} but only {} prompts",
                c.prompt_index,
                prompts.len()
            )));
        }
        by_index.insert(c.prompt_index, &c.completion);
    }
    let mut cells: BTreeMap<CellKey, (usize, usize)> = BTreeMap::new();
    let mut report = ScoreReport::default();
    for (i, p) in prompts.iter().enumerate() {
        let s = match by_index.get(&i) {
            Some(c) => p.score(c),
            None => {
                report.missing.push(i);
                Score {
                    correct: false,
                    empty: true,
                }
            }
        };
        if s.empty && by_index.contains_key(&i) {
            report.empty_completions.push(i);
        }
        let e = cells.entry(p.cell()).or_default();
        e.0 += 1;
        e.1 += s.value() as usize;
    }
    report.rows = cells
        .into_iter()
        .map(|(cell, (n, k))| ScoreRow {
            cell,
            n,
            accuracy: k as f64 / n as f64,
        })
        .collect();
    Ok(report)
}

/// CSV with columns `task_id,variant,num_examples,n,accuracy`.
pub fn write_score_csv<W: Write>(mut sink: W, report: &ScoreReport) -> Result<()> {
    writeln!(sink, "task_id,variant,num_examples,n,accuracy")?;
    for r in &report.rows {
        writeln!(
            sink,
            "{},{},{},{},{}",
            r.cell.task_id, r.cell.variant, r.cell.num_examples, r.n, r.accuracy
        )?;
    }
    sink.flush()?;
    Ok(())
}
