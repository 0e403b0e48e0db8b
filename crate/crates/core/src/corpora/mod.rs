//! Pretraining corpora: the compositional script corpus, three baselines,
//! and packing into fixed-length training windows.
//!
//! Every generator produces document `i` from a seed derived from
//! `(master_seed, i)` alone, so corpora are identical for any number of
//! worker threads.

mod compositional;
mod fvprompt;
mod hmm;
mod pack;
mod text;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::grammar::ScriptAst;
use crate::Token;

pub use compositional::CompositionalGenerator;
pub use fvprompt::FvPromptGenerator;
pub use hmm::{
    build_hmm_spec, Hmm5Generator, HmmPerDocGenerator, HmmSpec, HmmState, PerDocDynamics,
    StochasticMatrix, HMM_LENGTH_MAX, HMM_LENGTH_MEAN, HMM_LENGTH_SD,
};
pub use pack::{pack_corpus, unpack_documents, PackManifest, PackedStream, StreamPacker, DEFAULT_WINDOW_LENGTH};
pub use text::{read_corpus_text, write_corpus_text};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeneratorKind {
    Compositional,
    FvPrompt,
    Hmm5,
    HmmPerDoc,
}

impl GeneratorKind {
    pub fn name(self) -> &'static str {
        match self {
            GeneratorKind::Compositional => "compositional",
            GeneratorKind::FvPrompt => "fvprompt",
            GeneratorKind::Hmm5 => "hmm5",
            GeneratorKind::HmmPerDoc => "hmmperdoc",
        }
    }
}

impl std::str::FromStr for GeneratorKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "compositional" => Ok(GeneratorKind::Compositional),
            "fvprompt" => Ok(GeneratorKind::FvPrompt),
            "hmm5" => Ok(GeneratorKind::Hmm5),
            "hmmperdoc" => Ok(GeneratorKind::HmmPerDoc),
            other => Err(crate::Error::Validation(format!("unknown generator `{other}`"))),
        }
    }
}

/// Where a document came from; enough to regenerate it in isolation.
#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub generator: GeneratorKind,
    pub doc_index: u64,
    pub seed: u64,
    /// Compositional documents only.
    pub script: Option<ScriptAst>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub tokens: Vec<Token>,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub documents: Vec<Document>,
}

impl Corpus {
    pub fn n_tokens(&self) -> usize {
        self.documents.iter().map(|d| d.tokens.len()).sum()
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }
}

/// A deterministic per-index document source.
pub trait DocumentGenerator: Sync {
    fn kind(&self) -> GeneratorKind;

    /// Document number `doc_index`, or `None` when that index is discarded
    /// (an empty compositional document).
    fn generate(&self, doc_index: u64) -> Result<Option<Document>>;
}

/// Documents generated per parallel batch. Fixed so that output does not
/// depend on the thread pool.
pub const GENERATION_CHUNK: u64 = 4096;

/// Streams documents in index order until at least `n_tokens_target`
/// tokens have been emitted. Batches are generated in parallel and folded
/// sequentially; returns `(documents, tokens)` emitted.
pub fn generate_until<G, F>(generator: &G, n_tokens_target: u64, mut sink: F) -> Result<(u64, u64)>
where
    G: DocumentGenerator + ?Sized,
    F: FnMut(Document) -> Result<()>,
{
    use rayon::prelude::*;

    let mut tokens = 0u64;
    let mut docs = 0u64;
    let mut next = 0u64;
    while tokens < n_tokens_target {
        let batch: Vec<Option<Document>> = (next..next + GENERATION_CHUNK)
            .into_par_iter()
            .map(|i| generator.generate(i))
            .collect::<Result<_>>()?;
        next += GENERATION_CHUNK;
        for doc in batch.into_iter().flatten() {
            if tokens >= n_tokens_target {
                break;
            }
            tokens += doc.tokens.len() as u64;
            docs += 1;
            sink(doc)?;
        }
    }
    Ok((docs, tokens))
}

/// Collects documents in memory until the token target is reached.
pub fn collect_corpus<G: DocumentGenerator + ?Sized>(generator: &G, n_tokens_target: u64) -> Result<Corpus> {
    let mut documents = Vec::new();
    generate_until(generator, n_tokens_target, |d| {
        documents.push(d);
        Ok(())
    })?;
    Ok(Corpus { documents })
}

/// Collects exactly `n_documents` documents (skipping discarded indices).
pub fn collect_documents<G: DocumentGenerator + ?Sized>(generator: &G, n_documents: usize) -> Result<Corpus> {
    use rayon::prelude::*;

    let mut documents = Vec::with_capacity(n_documents);
    let mut next = 0u64;
    while documents.len() < n_documents {
        let batch: Vec<Option<Document>> = (next..next + GENERATION_CHUNK)
            .into_par_iter()
            .map(|i| generator.generate(i))
            .collect::<Result<_>>()?;
        next += GENERATION_CHUNK;
        documents.extend(batch.into_iter().flatten().take(n_documents - documents.len()));
    }
    Ok(Corpus { documents })
}
