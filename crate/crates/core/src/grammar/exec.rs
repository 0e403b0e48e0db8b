//! Stochastic execution of scripts (the yield of a derivation tree).

use rand::Rng;

use crate::rng::{self, StreamRng};
use crate::world::WorldModel;
use crate::Token;

use super::ast::{Block, Command, Condition, ScriptAst, Var};

/// Number of objects a loop iterates over, capped at |Ω|.
pub const DEFAULT_LOOP_ARITY: usize = 10;

/// Observer of execution events, in execution order.
pub trait Tracer {
    fn loop_values(&mut self, _values: &[Token]) {}
    /// `None` when the FOR SOME had no satisfying object and was skipped.
    fn bind(&mut self, _condition: &Condition, _value: Option<Token>) {}
    fn branch(&mut self, _condition: &Condition, _taken_then: bool) {}
    fn print(&mut self, _var: Var, _token: Token) {}
}

impl Tracer for () {}

/// One recorded execution event.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TraceEvent {
    LoopValues(Vec<Token>),
    Bind(Option<Token>),
    Branch(bool),
    Print(Token),
}

#[derive(Debug, Default, Clone)]
pub struct RecordingTracer {
    pub events: Vec<TraceEvent>,
}

impl Tracer for RecordingTracer {
    fn loop_values(&mut self, values: &[Token]) {
        self.events.push(TraceEvent::LoopValues(values.to_vec()));
    }
    fn bind(&mut self, _condition: &Condition, value: Option<Token>) {
        self.events.push(TraceEvent::Bind(value));
    }
    fn branch(&mut self, _condition: &Condition, taken_then: bool) {
        self.events.push(TraceEvent::Branch(taken_then));
    }
    fn print(&mut self, _var: Var, token: Token) {
        self.events.push(TraceEvent::Print(token));
    }
}

pub struct Executor<'w, T: Tracer> {
    world: &'w WorldModel,
    loop_arity: usize,
    rng: StreamRng,
    tracer: T,
}

impl<'w, T: Tracer> Executor<'w, T> {
    pub fn new(world: &'w WorldModel, seed: u64, tracer: T) -> Self {
        Executor {
            world,
            loop_arity: DEFAULT_LOOP_ARITY.min(world.omega_size()),
            rng: rng::rng_from_seed(seed),
            tracer,
        }
    }

    pub fn with_loop_arity(mut self, arity: usize) -> Self {
        self.loop_arity = arity.clamp(1, self.world.omega_size());
        self
    }

    pub fn into_tracer(self) -> T {
        self.tracer
    }

    /// Runs `ast` with its free variables bound to `bindings`, appending the
    /// emitted tokens to `out`.
    pub fn run(&mut self, ast: &ScriptAst, bindings: &[Token], out: &mut Vec<Token>) {
        assert_eq!(
            bindings.len(),
            ast.free_vars,
            "script expects {} bindings",
            ast.free_vars
        );
        let mut env = bindings.to_vec();
        self.command(&ast.root, &mut env, out);
    }

    fn block(&mut self, block: &Block, env: &mut Vec<Token>, out: &mut Vec<Token>) {
        for c in &block.0 {
            self.command(c, env, out);
        }
    }

    fn command(&mut self, cmd: &Command, env: &mut Vec<Token>, out: &mut Vec<Token>) {
        match cmd {
            Command::Print(v) => {
                let t = env[*v];
                self.tracer.print(*v, t);
                out.push(t);
            }
            Command::If {
                condition,
                then_block,
                else_block,
            } => {
                let holds =
                    self.world.eval(condition.function, env[condition.arg]) == env[condition.result];
                self.tracer.branch(condition, holds);
                self.block(if holds { then_block } else { else_block }, env, out);
            }
            Command::Loop { body } => {
                let n = self.world.omega_size();
                let mut perm: Vec<Token> = (0..n as Token).collect();
                for i in 0..self.loop_arity {
                    let j = self.rng.random_range(i..n);
                    perm.swap(i, j);
                }
                perm.truncate(self.loop_arity);
                self.tracer.loop_values(&perm);
                for &v in &perm {
                    env.push(v);
                    self.block(body, env, out);
                    env.pop();
                }
            }
            Command::ForSome { condition, body } => {
                let new = env.len();
                let value = if condition.result == new {
                    Some(self.world.eval(condition.function, env[condition.arg]))
                } else {
                    let pre = self.world.preimage_slice(condition.function, env[condition.result]);
                    match pre.len() {
                        0 => None,
                        1 => Some(pre[0]),
                        k => Some(pre[self.rng.random_range(0..k)]),
                    }
                };
                self.tracer.bind(condition, value);
                if let Some(v) = value {
                    env.push(v);
                    self.block(body, env, out);
                    env.pop();
                }
            }
        }
    }
}

/// Executes a script; deterministic in `(ast, world, bindings, seed)`.
pub fn execute_script(ast: &ScriptAst, world: &WorldModel, bindings: &[Token], seed: u64) -> Vec<Token> {
    let mut out = Vec::new();
    Executor::new(world, seed, ()).run(ast, bindings, &mut out);
    out
}

/// Executes a script and returns the emitted tokens with the event trace.
pub fn execute_traced(
    ast: &ScriptAst,
    world: &WorldModel,
    bindings: &[Token],
    seed: u64,
) -> (Vec<Token>, Vec<TraceEvent>) {
    let mut out = Vec::new();
    let mut exec = Executor::new(world, seed, RecordingTracer::default());
    exec.run(ast, bindings, &mut out);
    (out, exec.into_tracer().events)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::ast::Condition;

    fn world() -> WorldModel {
        WorldModel::sample(30, 10, 7).unwrap()
    }

    #[test]
    fn loop_prints_ten_distinct_objects() {
        let w = world();
        let ast = ScriptAst::document(Command::looped(vec![Command::print(0)]));
        for seed in 0..50 {
            let out = execute_script(&ast, &w, &[], seed);
            assert_eq!(out.len(), 10);
            let mut sorted = out.clone();
            sorted.sort();
            sorted.dedup();
            assert_eq!(sorted.len(), 10);
        }
    }

    #[test]
    fn loop_arity_capped_by_universe() {
        let w = WorldModel::sample(6, 2, 1).unwrap();
        let ast = ScriptAst::document(Command::looped(vec![Command::print(0)]));
        let mut out = execute_script(&ast, &w, &[], 3);
        out.sort();
        assert_eq!(out, vec![0, 1, 2, 3, 4, 5]);
    }

    #[test]
    fn for_some_with_empty_preimage_is_skipped() {
        let w = world();
        // Find a function and an object outside its image.
        let (f, c) = (2..=10)
            .flat_map(|f| (0..30).map(move |c| (f, c)))
            .find(|&(f, c)| w.preimage_slice(f, c).is_empty())
            .expect("a random map on 30 objects misses some value");
        let ast = ScriptAst::fragment(
            1,
            Command::for_some(Condition::new(f, 1, 0), vec![Command::print(1)]),
        );
        assert!(execute_script(&ast, &w, &[c], 11).is_empty());
    }

    #[test]
    fn execution_is_deterministic() {
        let w = world();
        let ast = ScriptAst::document(Command::looped(vec![Command::for_some(
            Condition::new(4, 1, 0),
            vec![Command::print(1), Command::print(0)],
        )]));
        assert_eq!(execute_script(&ast, &w, &[], 5), execute_script(&ast, &w, &[], 5));
    }
}
