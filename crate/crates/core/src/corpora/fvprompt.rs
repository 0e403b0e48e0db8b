use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::Result;
use crate::rng;
use crate::world::WorldModel;
use crate::Token;

use super::{Document, DocumentGenerator, GeneratorKind, Provenance};

/// Function-value prompts: one function and one separator per document,
/// with a triple `x f(x) s` for every object in random order.
#[derive(Debug, Clone)]
pub struct FvPromptGenerator {
    world: Arc<WorldModel>,
    master_seed: u64,
}

impl FvPromptGenerator {
    pub fn new(world: Arc<WorldModel>, master_seed: u64) -> Self {
        FvPromptGenerator { world, master_seed }
    }

    /// The document together with its function index and separator.
    pub fn document_with_function(&self, doc_index: u64) -> (Document, usize, Token) {
        let seed = rng::derive_seed(self.master_seed, "fvprompt", doc_index);
        let mut r = rng::rng_from_seed(seed);
        let n = self.world.omega_size();
        let f = r.random_range(1..=self.world.num_functions());
        let sep = r.random_range(0..n as Token);
        let mut order: Vec<Token> = (0..n as Token).collect();
        order.shuffle(&mut r);
        let table = self.world.table(f);
        let mut tokens = Vec::with_capacity(3 * n);
        for x in order {
            tokens.extend([x, table[x as usize], sep]);
        }
        let doc = Document {
            tokens,
            provenance: Provenance {
                generator: GeneratorKind::FvPrompt,
                doc_index,
                seed,
                script: None,
            },
        };
        (doc, f, sep)
    }
}

impl DocumentGenerator for FvPromptGenerator {
    fn kind(&self) -> GeneratorKind {
        GeneratorKind::FvPrompt
    }

    fn generate(&self, doc_index: u64) -> Result<Option<Document>> {
        Ok(Some(self.document_with_function(doc_index).0))
    }
}
