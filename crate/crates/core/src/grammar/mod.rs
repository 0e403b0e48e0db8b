//! Document scripts: the minimal compositional grammar.

pub mod ast;
pub mod exec;
pub mod express;
pub mod sampler;
pub mod syntax;

pub use ast::{Block, Command, Condition, ScriptAst, Var, MAX_BLOCK_LEN};
pub use exec::{execute_script, execute_traced, Executor, RecordingTracer, TraceEvent, Tracer};
pub use sampler::{
    estimate_expected_length, expected_length_bound, sample_document, sample_grammar_params,
    sample_script, AblationFlags, GrammarParams, LengthEstimate, SampledDocument, SamplerConfig,
    ScriptConstraints,
};
pub use syntax::{
    normalize_whitespace, parse_script, parse_script_with, render_script, render_script_with,
    FunctionNaming, ParseOptions,
};
