//! The test tasks: formulas, bindings to concrete functions, prompt
//! construction and scoring.

mod bind;
mod formula;
mod prompt;
mod score;

pub use bind::{BindingPolicy, BoundTask, Candidate};
pub use formula::{builtin_task, builtin_tasks, literal_group, Literal, Slot, TaskGroup, TaskSpec, Var};
pub use prompt::{
    build_composition_prompt, build_prompt, chain_values, sample_prompt, ChainOptions, Example,
    PromptInstance, Variant, COMPOSITION_TASK_ID, MAX_BINDING_ATTEMPTS, MAX_CHAIN_LEN,
    MIN_CHAIN_LEN,
};
pub use score::{
    read_completions, read_prompts, score_batch, score_completion, write_completions,
    write_prompts, write_score_csv, Bindings, CellKey, CompletionRecord, PromptRecord, Score,
    ScoreReport, ScoreRow,
};
