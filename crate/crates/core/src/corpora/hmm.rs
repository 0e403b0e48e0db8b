use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::rng::{self, StreamRng};
use crate::world::WorldModel;
use crate::Token;

use super::{Document, DocumentGenerator, GeneratorKind, Provenance};

pub const HMM_LENGTH_MEAN: f64 = 50.0;
pub const HMM_LENGTH_SD: f64 = 10.0;
pub const HMM_LENGTH_MAX: f64 = 128.0;

/// Dense row-stochastic matrix with cached cumulative rows for sampling.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticMatrix {
    n: usize,
    data: Vec<f64>,
    cumulative: Vec<f64>,
}

impl StochasticMatrix {
    pub fn from_rows(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n || n == 0 {
            return Err(Error::Validation(format!("expected {n}x{n} entries, got {}", data.len())));
        }
        let mut cumulative = data.clone();
        for row in cumulative.chunks_mut(n) {
            let mut acc = 0.0;
            for v in row.iter_mut() {
                acc += *v;
                *v = acc;
            }
            if (acc - 1.0).abs() > 1e-9 {
                return Err(Error::Validation(format!("row sums to {acc}")));
            }
        }
        Ok(StochasticMatrix { n, data, cumulative })
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        StochasticMatrix::from_rows(n, data).expect("identity is stochastic")
    }

    pub fn permutation(perm: &[usize]) -> Self {
        let n = perm.len();
        let mut data = vec![0.0; n * n];
        for (i, &j) in perm.iter().enumerate() {
            data[i * n + j] = 1.0;
        }
        StochasticMatrix::from_rows(n, data).expect("permutation is stochastic")
    }

    /// Convex combination of `n_perm` uniform random permutation matrices
    /// with weights `softmax((u - 0.5) / 0.1)`, `u ~ U[0,1]^n_perm`.
    pub fn permutation_mixture(n: usize, n_perm: usize, rng: &mut StreamRng) -> Self {
        let logits: Vec<f64> = (0..n_perm).map(|_| (rng.random::<f64>() - 0.5) / 0.1).collect();
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exp: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let z: f64 = exp.iter().sum();
        let mut data = vec![0.0; n * n];
        let mut perm: Vec<usize> = (0..n).collect();
        for w in exp {
            perm.shuffle(rng);
            for (i, &j) in perm.iter().enumerate() {
                data[i * n + j] += w / z;
            }
        }
        StochasticMatrix::from_rows(n, data).expect("mixture of permutations is stochastic")
    }

    /// `a * self + (1 - a) * I`.
    pub fn lazy(&self, a: f64) -> Self {
        let n = self.n;
        let mut data: Vec<f64> = self.data.iter().map(|v| a * v).collect();
        for i in 0..n {
            data[i * n + i] += 1.0 - a;
        }
        StochasticMatrix::from_rows(n, data).expect("lazy chain is stochastic")
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn column_sums(&self) -> Vec<f64> {
        (0..self.n).map(|j| (0..self.n).map(|i| self.get(i, j)).sum()).collect()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).iter().sum()).collect()
    }

    pub fn is_permutation(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0 || v == 1.0)
            && self.row_sums().iter().all(|&s| s == 1.0)
            && self.column_sums().iter().all(|&s| s == 1.0)
    }

    pub fn step(&self, i: usize, rng: &mut StreamRng) -> usize {
        let row = &self.cumulative[i * self.n..(i + 1) * self.n];
        let u = rng.random::<f64>() * row[self.n - 1];
        row.partition_point(|&c| c <= u).min(self.n - 1)
    }
}

/// Five-component HMM mixture over (object, function) states.
#[derive(Debug, Clone)]
pub struct HmmSpec {
    pub entity: StochasticMatrix,
    /// Indexed by zero-based function index (`f1` is row 0).
    pub properties: Vec<StochasticMatrix>,
    pub n_perm: usize,
    pub seed: u64,
}

pub fn build_hmm_spec(world: &WorldModel, n_mixtures: usize, n_perm: usize, seed: u64) -> Result<HmmSpec> {
    if n_perm == 0 || n_mixtures == 0 {
        return Err(Error::Validation("n_perm and n_mixtures must be positive".into()));
    }
    let mut r = rng::stream(seed, "hmm-spec", 0);
    let entity = StochasticMatrix::permutation_mixture(world.omega_size(), n_perm, &mut r).lazy(0.1);
    let properties = (0..n_mixtures)
        .map(|_| StochasticMatrix::permutation_mixture(world.num_functions(), n_perm, &mut r))
        .collect();
    Ok(HmmSpec {
        entity,
        properties,
        n_perm,
        seed,
    })
}

/// A hidden state; `function` is one-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HmmState {
    pub object: Token,
    pub function: usize,
}

fn sample_length(r: &mut StreamRng) -> usize {
    let law = Normal::new(HMM_LENGTH_MEAN, HMM_LENGTH_SD).expect("valid normal");
    loop {
        let l = law.sample(r).clamp(0.0, HMM_LENGTH_MAX).round() as usize;
        if l > 0 {
            return l;
        }
    }
}

/// Runs the two independent chains. `functions` maps property-chain states
/// to one-based function indices.
fn run_chain(
    world: &WorldModel,
    entity: &StochasticMatrix,
    property: &StochasticMatrix,
    functions: &[usize],
    r: &mut StreamRng,
    trace: Option<&mut Vec<HmmState>>,
) -> Vec<Token> {
    let len = sample_length(r);
    let mut w = r.random_range(0..entity.size());
    let mut p = r.random_range(0..property.size());
    let mut tokens = Vec::with_capacity(len);
    let mut trace = trace;
    for t in 0..len {
        if t > 0 {
            w = entity.step(w, r);
            p = property.step(p, r);
        }
        let f = functions[p];
        if let Some(tr) = trace.as_deref_mut() {
            tr.push(HmmState {
                object: w as Token,
                function: f,
            });
        }
        tokens.push(world.eval(f, w as Token));
    }
    tokens
}

#[derive(Debug, Clone)]
pub struct Hmm5Generator {
    world: Arc<WorldModel>,
    spec: Arc<HmmSpec>,
    functions: Vec<usize>,
    master_seed: u64,
}

impl Hmm5Generator {
    pub fn new(world: Arc<WorldModel>, spec: Arc<HmmSpec>, master_seed: u64) -> Result<Self> {
        if spec.entity.size() != world.omega_size()
            || spec.properties.iter().any(|p| p.size() != world.num_functions())
        {
            return Err(Error::Validation("HMM spec does not match the world".into()));
        }
        Ok(Hmm5Generator {
            functions: (1..=world.num_functions()).collect(),
            world,
            spec,
            master_seed,
        })
    }

    /// The document, its mixture component and its hidden-state trace.
    pub fn document_with_trace(&self, doc_index: u64) -> (Document, usize, Vec<HmmState>) {
        let seed = rng::derive_seed(self.master_seed, "hmm5", doc_index);
        let mut r = rng::rng_from_seed(seed);
        let k = r.random_range(0..self.spec.properties.len());
        let mut trace = Vec::new();
        let tokens = run_chain(
            &self.world,
            &self.spec.entity,
            &self.spec.properties[k],
            &self.functions,
            &mut r,
            Some(&mut trace),
        );
        (document(GeneratorKind::Hmm5, tokens, doc_index, seed), k, trace)
    }
}

impl DocumentGenerator for Hmm5Generator {
    fn kind(&self) -> GeneratorKind {
        GeneratorKind::Hmm5
    }

    fn generate(&self, doc_index: u64) -> Result<Option<Document>> {
        let seed = rng::derive_seed(self.master_seed, "hmm5", doc_index);
        let mut r = rng::rng_from_seed(seed);
        let k = r.random_range(0..self.spec.properties.len());
        let tokens = run_chain(
            &self.world,
            &self.spec.entity,
            &self.spec.properties[k],
            &self.functions,
            &mut r,
            None,
        );
        Ok(Some(document(GeneratorKind::Hmm5, tokens, doc_index, seed)))
    }
}

fn document(generator: GeneratorKind, tokens: Vec<Token>, doc_index: u64, seed: u64) -> Document {
    Document {
        tokens,
        provenance: Provenance {
            generator,
            doc_index,
            seed,
            script: None,
        },
    }
}

/// Per-document transition structure of an HMMPerDoc document.
#[derive(Debug, Clone)]
pub struct PerDocDynamics {
    pub entity_perm: Vec<usize>,
    /// One-based functions on the property chain's support.
    pub support: Vec<usize>,
    /// Permutation over positions of `support`.
    pub property_perm: Vec<usize>,
    /// The designated function left out of the dynamics.
    pub excluded: usize,
}

impl PerDocDynamics {
    pub fn entity_matrix(&self) -> StochasticMatrix {
        StochasticMatrix::permutation(&self.entity_perm).lazy(0.1)
    }

    pub fn property_matrix(&self) -> StochasticMatrix {
        StochasticMatrix::permutation(&self.property_perm)
    }
}

/// Fresh single-permutation HMM for every document; the property chain
/// never contains one of the two designated functions.
#[derive(Debug, Clone)]
pub struct HmmPerDocGenerator {
    world: Arc<WorldModel>,
    master_seed: u64,
}

impl HmmPerDocGenerator {
    pub fn new(world: Arc<WorldModel>, master_seed: u64) -> Result<Self> {
        if world.num_functions() < 3 {
            return Err(Error::Validation("HMMPerDoc needs at least 3 functions".into()));
        }
        Ok(HmmPerDocGenerator { world, master_seed })
    }

    fn dynamics(&self, r: &mut StreamRng) -> PerDocDynamics {
        let (a, b) = self.world.designated_pair();
        let excluded = if r.random::<bool>() { a } else { b };
        let support: Vec<usize> = (1..=self.world.num_functions()).filter(|&f| f != excluded).collect();
        let mut entity_perm: Vec<usize> = (0..self.world.omega_size()).collect();
        entity_perm.shuffle(r);
        let mut property_perm: Vec<usize> = (0..support.len()).collect();
        property_perm.shuffle(r);
        PerDocDynamics {
            entity_perm,
            support,
            property_perm,
            excluded,
        }
    }

    pub fn document_with_trace(&self, doc_index: u64) -> (Document, PerDocDynamics, Vec<HmmState>) {
        let seed = rng::derive_seed(self.master_seed, "hmmperdoc", doc_index);
        let mut r = rng::rng_from_seed(seed);
        let dyn_ = self.dynamics(&mut r);
        let mut trace = Vec::new();
        let tokens = run_chain(
            &self.world,
            &dyn_.entity_matrix(),
            &dyn_.property_matrix(),
            &dyn_.support,
            &mut r,
            Some(&mut trace),
        );
        (document(GeneratorKind::HmmPerDoc, tokens, doc_index, seed), dyn_, trace)
    }
}

impl DocumentGenerator for HmmPerDocGenerator {
    fn kind(&self) -> GeneratorKind {
        GeneratorKind::HmmPerDoc
    }

    fn generate(&self, doc_index: u64) -> Result<Option<Document>> {
        Ok(Some(self.document_with_trace(doc_index).0))
    }
}
