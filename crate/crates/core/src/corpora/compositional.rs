use std::sync::Arc;

use crate::error::Result;
use crate::grammar::{
    sample_document, sample_grammar_params, AblationFlags, SamplerConfig, ScriptConstraints,
};
use crate::rng;
use crate::world::WorldModel;

use super::{Document, DocumentGenerator, GeneratorKind, Provenance};

/// Documents generated by scripts, with one grammar parameter vector drawn
/// per document.
#[derive(Debug, Clone)]
pub struct CompositionalGenerator {
    world: Arc<WorldModel>,
    config: SamplerConfig,
    constraints: ScriptConstraints,
    master_seed: u64,
    keep_scripts: bool,
}

impl CompositionalGenerator {
    pub fn new(world: Arc<WorldModel>, config: SamplerConfig, ablation: AblationFlags, master_seed: u64) -> Self {
        let forbid = world.has_designated_pair().then(|| world.designated_pair());
        CompositionalGenerator {
            constraints: ScriptConstraints::for_documents(ablation, forbid),
            world,
            config,
            master_seed,
            keep_scripts: true,
        }
    }

    /// Drop scripts from provenance (they can be regenerated from the seed).
    pub fn without_scripts(mut self) -> Self {
        self.keep_scripts = false;
        self
    }

    pub fn constraints(&self) -> &ScriptConstraints {
        &self.constraints
    }

    pub fn config(&self) -> &SamplerConfig {
        &self.config
    }

    pub fn document_seed(&self, doc_index: u64) -> u64 {
        rng::derive_seed(self.master_seed, "compositional", doc_index)
    }

    /// Regenerates a document from its own seed, independent of any corpus.
    pub fn generate_from_seed(&self, seed: u64, doc_index: u64) -> Result<Option<Document>> {
        let params = sample_grammar_params(&self.world, seed, &self.config, &self.constraints)?;
        let doc = sample_document(
            &params,
            &self.world,
            rng::derive_seed(seed, "document", 0),
            &self.config,
            &self.constraints,
        )?;
        if doc.tokens.is_empty() {
            return Ok(None);
        }
        Ok(Some(Document {
            tokens: doc.tokens,
            provenance: Provenance {
                generator: GeneratorKind::Compositional,
                doc_index,
                seed,
                script: self.keep_scripts.then_some(doc.script),
            },
        }))
    }
}

impl DocumentGenerator for CompositionalGenerator {
    fn kind(&self) -> GeneratorKind {
        GeneratorKind::Compositional
    }

    fn generate(&self, doc_index: u64) -> Result<Option<Document>> {
        self.generate_from_seed(self.document_seed(doc_index), doc_index)
    }
}
